"""Feature-track CSV files and per-frame-pair correspondences.

Track CSV layout (UTF-8, LF)::

    track_id,frame,u,v
    0,0,312.5,201.25
    0,1,313.0,200.75

Extra trailing columns are ignored. Other exports can be read by passing a
``columns`` mapping from the canonical names to the file's header names.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .camera import PixelPoint
from .errors import DuplicateObservation, FrameOutOfRange, ParseError

CANONICAL_COLUMNS = ("track_id", "frame", "u", "v")


@dataclass(frozen=True)
class FeatureCorrespondence:
    id: int
    a: PixelPoint
    b: PixelPoint

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (*self.a, *self.b)):
            raise ValueError(f"correspondence {self.id} has non-finite coordinates")


@dataclass(frozen=True)
class TrackSet:
    """Tracks keyed by id; each track is a tuple of ``(frame, PixelPoint)`` sorted by frame."""

    frames: int
    tracks: Mapping[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tracks", MappingProxyType(dict(self.tracks)))

    def __eq__(self, other):
        if not isinstance(other, TrackSet):
            return NotImplemented
        return self.frames == other.frames and dict(self.tracks) == dict(other.tracks)

    def __len__(self):
        return len(self.tracks)


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_tracks(source, columns: Mapping[str, str] | None = None) -> TrackSet:
    """Parse a track CSV from text, bytes or a file object.

    ``columns`` maps canonical names (track_id, frame, u, v) to header names
    in the file, e.g. ``{"track_id": "id", "u": "x", "v": "y"}``.
    """
    mapping = {name: name for name in CANONICAL_COLUMNS}
    if columns:
        unknown = set(columns) - set(CANONICAL_COLUMNS)
        if unknown:
            raise ValueError(f"unknown canonical column(s): {sorted(unknown)}")
        mapping.update(columns)

    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    header = None
    index = {}
    observations: dict[int, dict[int, PixelPoint]] = {}
    max_frame = -1
    for row in reader:
        lineno = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if header is None:
            header = [cell.strip() for cell in row]
            missing = [mapping[c] for c in CANONICAL_COLUMNS if mapping[c] not in header]
            if missing:
                raise ParseError(f"header lacks column(s): {', '.join(missing)}", lineno)
            index = {c: header.index(mapping[c]) for c in CANONICAL_COLUMNS}
            continue
        if len(row) <= max(index.values()):
            raise ParseError(f"expected at least {max(index.values()) + 1} fields, got {len(row)}", lineno)
        try:
            track_id = int(row[index["track_id"]])
            frame = int(row[index["frame"]])
            u = float(row[index["u"]])
            v = float(row[index["v"]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if frame < 0:
            raise ParseError(f"negative frame index {frame}", lineno)
        if not (math.isfinite(u) and math.isfinite(v)):
            raise ParseError("non-finite pixel coordinate", lineno)
        per_track = observations.setdefault(track_id, {})
        if frame in per_track:
            raise DuplicateObservation(f"track {track_id} observed twice in frame {frame}", lineno)
        per_track[frame] = PixelPoint(u, v)
        max_frame = max(max_frame, frame)

    tracks = {tid: tuple(sorted(obs.items())) for tid, obs in sorted(observations.items())}
    return TrackSet(frames=max_frame + 1, tracks=tracks)


def load_tracks(path, columns=None) -> TrackSet:
    with open(path, "rb") as fh:
        return parse_tracks(fh, columns)


def serialize_tracks(ts: TrackSet) -> str:
    """Inverse of :func:`parse_tracks`; floats use ``repr`` so the round trip is exact."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    for tid in sorted(ts.tracks):
        for frame, p in ts.tracks[tid]:
            writer.writerow([tid, frame, repr(float(p.u)), repr(float(p.v))])
    return out.getvalue()


def pair_correspondences(ts: TrackSet, i: int, j: int) -> list[FeatureCorrespondence]:
    """Correspondences for tracks seen in both frames ``i`` and ``j``, ordered by id."""
    for frame in (i, j):
        if not 0 <= frame < ts.frames:
            raise FrameOutOfRange(f"frame {frame} outside 0..{ts.frames - 1} ({ts.frames} frames)")
    if i == j:
        raise ValueError("frames i and j must differ")
    result = []
    for tid in sorted(ts.tracks):
        obs = dict(ts.tracks[tid])
        if i in obs and j in obs:
            result.append(FeatureCorrespondence(id=tid, a=obs[i], b=obs[j]))
    return result


def tracks_from_correspondences(matches) -> TrackSet:
    """Two-frame track set (frames 0 and 1) from a list of correspondences."""
    tracks = {}
    for m in matches:
        if m.id in tracks:
            raise ValueError(f"duplicate correspondence id {m.id}")
        tracks[m.id] = ((0, PixelPoint(*m.a)), (1, PixelPoint(*m.b)))
    return TrackSet(frames=2 if tracks else 0, tracks=dict(sorted(tracks.items())))
