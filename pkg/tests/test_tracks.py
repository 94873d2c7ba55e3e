import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monopose import (
    PixelPoint,
    SceneSpec,
    TrackSet,
    generate_scene,
    pair_correspondences,
    parse_tracks,
    serialize_tracks,
)
from monopose.errors import DuplicateObservation, FrameOutOfRange, ParseError
from monopose.tracks import FeatureCorrespondence, load_tracks, tracks_from_correspondences

FIXTURE = """track_id,frame,u,v
0,0,10.0,20.0
0,1,11.0,21.0
0,2,12.0,22.0
1,0,100.5,200.25
1,1,101.5,201.25
1,2,102.5,202.25
"""


def test_empty_input():
    assert len(parse_tracks("")) == 0
    assert parse_tracks("").frames == 0
    assert len(parse_tracks("track_id,frame,u,v\n")) == 0


def test_small_fixture():
    ts = parse_tracks(FIXTURE)
    assert len(ts) == 2 and ts.frames == 3
    assert ts.tracks[1][2] == (2, PixelPoint(102.5, 202.25))


def test_sources_and_extra_columns(tmp_path):
    text = "track_id,frame,u,v,score\n3,0,1,2,0.9\n3,4,5,6,0.8\n"
    path = tmp_path / "t.csv"
    path.write_text(text)
    expected = parse_tracks(text)
    assert parse_tracks(text.encode()) == expected
    assert parse_tracks(io.StringIO(text)) == expected
    assert load_tracks(path) == expected
    assert expected.frames == 5


def test_column_mapping():
    text = "x,y,frame_no,id\n1.5,2.5,0,7\n3.5,4.5,1,7\n"
    ts = parse_tracks(text, {"track_id": "id", "frame": "frame_no", "u": "x", "v": "y"})
    assert ts.tracks[7] == ((0, PixelPoint(1.5, 2.5)), (1, PixelPoint(3.5, 4.5)))
    with pytest.raises(ValueError):
        parse_tracks(text, {"bogus": "id"})


@pytest.mark.parametrize(
    "text, line, exc",
    [
        ("id,frame,u,v\n", 1, ParseError),
        ("track_id,frame,u,v\n0,0,1\n", 2, ParseError),
        ("track_id,frame,u,v\n0,0,1,2\n0,x,1,2\n", 3, ParseError),
        ("track_id,frame,u,v\n0,-1,1,2\n", 2, ParseError),
        ("track_id,frame,u,v\n0,0,nan,2\n", 2, ParseError),
        ("track_id,frame,u,v\n0,0,1,2\n\n0,0,3,4\n", 4, DuplicateObservation),
    ],
)
def test_errors_carry_line_numbers(text, line, exc):
    with pytest.raises(exc) as info:
        parse_tracks(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


observations = st.dictionaries(
    st.tuples(st.integers(0, 50), st.integers(0, 9)),
    st.tuples(
        st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False),
        st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False),
    ),
    max_size=60,
)


def build(obs):
    tracks = {}
    for (tid, frame), (u, v) in sorted(obs.items()):
        tracks.setdefault(tid, []).append((frame, PixelPoint(u, v)))
    frames = max((f for _, f in obs), default=-1) + 1
    return TrackSet(frames, {tid: tuple(items) for tid, items in tracks.items()})


@settings(max_examples=200, deadline=None)
@given(observations)
def test_round_trip(obs):
    ts = build(obs)
    text = serialize_tracks(ts)
    assert parse_tracks(text) == ts
    assert serialize_tracks(parse_tracks(text)) == text


@settings(max_examples=100, deadline=None)
@given(observations, st.integers(0, 9), st.integers(0, 9))
def test_pairing_properties(obs, i, j):
    ts = build(obs)
    if i == j or max(i, j) >= ts.frames:
        return
    pairs = pair_correspondences(ts, i, j)
    assert pairs == pair_correspondences(ts, i, j)
    ids = [p.id for p in pairs]
    assert ids == sorted(ids)
    expected = {tid for (tid, f) in obs if f == i} & {tid for (tid, f) in obs if f == j}
    assert set(ids) == expected


def test_pairing_examples():
    ts = parse_tracks(FIXTURE + "2,0,5,5\n")
    pairs = pair_correspondences(ts, 0, 2)
    assert [p.id for p in pairs] == [0, 1]
    assert pairs[0] == FeatureCorrespondence(0, PixelPoint(10.0, 20.0), PixelPoint(12.0, 22.0))
    assert len(pair_correspondences(parse_tracks(FIXTURE), 1, 0)) == 2


def test_pairing_errors():
    ts = parse_tracks("track_id,frame,u,v\n0,0,1,2\n")
    with pytest.raises(FrameOutOfRange, match="frame 1"):
        pair_correspondences(ts, 0, 1)
    with pytest.raises(FrameOutOfRange):
        pair_correspondences(ts, -1, 0)
    with pytest.raises(ValueError):
        pair_correspondences(parse_tracks(FIXTURE), 1, 1)


def test_simulated_scene_round_trip():
    matches, _ = generate_scene(SceneSpec.standard_protocol(seed=5))
    ts = parse_tracks(serialize_tracks(tracks_from_correspondences(matches)))
    assert pair_correspondences(ts, 0, 1) == matches


def test_correspondence_rejects_non_finite():
    with pytest.raises(ValueError):
        FeatureCorrespondence(0, PixelPoint(float("inf"), 0), PixelPoint(0, 0))
    with pytest.raises(ValueError):
        tracks_from_correspondences([FeatureCorrespondence(0, (0, 0), (1, 1))] * 2)
