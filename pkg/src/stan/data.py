"""Frame ingestion, window assembly and a seeded synthetic video corpus."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .rng import stream

IMAGE_SUFFIXES = (".png", ".pgm")
ANOMALY_TYPES = ("fast_mover", "reverse_direction", "shape_change")


@dataclass
class Clip:
    clip_id: str
    frames: np.ndarray  # (L, H, W) float32 in [-1, 1]
    labels: np.ndarray | None = None  # (L,) int
    source: str = "ingested"
    boxes: dict[int, tuple[int, int, int, int]] = field(default_factory=dict)  # frame -> (x0, y0, x1, y1)

    def __post_init__(self):
        if self.frames.ndim != 3 or len(self.frames) < 1:
            raise ValueError("a clip needs at least one (H, W) frame")
        if self.labels is not None and len(self.labels) != len(self.frames):
            raise ValueError("labels must align 1:1 with frames")

    def __len__(self):
        return len(self.frames)


def to_unit(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit intensities to [-1, 1]."""
    return (pixels.astype(np.float32) * (2.0 / 255.0) - 1.0).astype(np.float32)


def to_uint8(frames: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((frames + 1.0) * 127.5), 0, 255).astype(np.uint8)


def load_clip(directory: str | Path, size: int | None = None, clip_id: str | None = None) -> Clip:
    """Load a directory of grayscale frames, sorted by filename.

    Images are converted to luminance (ITU-R 601 weights), bilinearly resized to
    ``size x size`` when given, and mapped from [0, 255] to [-1, 1].
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no PNG/PGM frames in {directory}")
    frames = []
    for p in files:
        try:
            with Image.open(p) as im:
                im = im.convert("L")
                if size is not None and im.size != (size, size):
                    im = im.resize((size, size), Image.BILINEAR)
                frames.append(np.asarray(im))
        except OSError as exc:
            raise OSError(f"unreadable frame {p}: {exc}") from exc
    if size is None and len({f.shape for f in frames}) > 1:
        frames = [np.asarray(Image.fromarray(f).resize(frames[0].shape[::-1], Image.BILINEAR)) for f in frames]
    return Clip(clip_id or directory.name, to_unit(np.stack(frames)))


def save_clip(clip: Clip, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(len(clip))))
    for i, frame in enumerate(to_uint8(clip.frames)):
        Image.fromarray(frame, mode="L").save(directory / f"{i:0{width}d}.png")


def window_centers(length: int, k: int = 5) -> range:
    return range(k, length - k)


def make_windows(clip: Clip, k: int = 5) -> list[tuple[np.ndarray, int]]:
    """All ``(context, t)`` pairs; context is ``(2k, H, W)`` without frame ``t``."""
    out = []
    for t in window_centers(len(clip), k):
        ctx = np.concatenate([clip.frames[t - k:t], clip.frames[t + 1:t + k + 1]])
        out.append((ctx, t))
    return out


def sequence_at(frames: np.ndarray, t: int, k: int = 5) -> np.ndarray:
    """The ``2k+1`` real frames centred on ``t``."""
    return frames[t - k:t + k + 1]


# --- label / event CSVs ----------------------------------------------------

def write_labels_csv(path: str | Path, clips: list[Clip]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "frame_index", "label"])
        for clip in clips:
            labels = clip.labels if clip.labels is not None else np.zeros(len(clip), int)
            for i, lab in enumerate(labels):
                w.writerow([clip.clip_id, i, int(lab)])


def read_labels_csv(path: str | Path) -> dict[str, np.ndarray]:
    rows: dict[str, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["clip_id"], []).append((int(r["frame_index"]), int(r["label"])))
    out = {}
    for cid, pairs in rows.items():
        pairs.sort()
        labels = np.array([lab for _, lab in pairs], dtype=int)
        if not set(np.unique(labels)) <= {0, 1}:
            raise ValueError(f"labels for {cid} are not binary")
        out[cid] = labels
    return out


def labels_to_events(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of 1s as inclusive ``(start, end)`` pairs."""
    events, start = [], None
    for i, v in enumerate(labels):
        if v and start is None:
            start = i
        elif not v and start is not None:
            events.append((start, i - 1))
            start = None
    if start is not None:
        events.append((start, len(labels) - 1))
    return events


def write_events_csv(path: str | Path, clips: list[Clip]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "start", "end"])
        for clip in clips:
            if clip.labels is None:
                continue
            for s, e in labels_to_events(clip.labels):
                w.writerow([clip.clip_id, s, e])


def read_events_csv(path: str | Path) -> dict[str, list[tuple[int, int]]]:
    out: dict[str, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["clip_id"], []).append((int(r["start"]), int(r["end"])))
    return out


def write_boxes_csv(path: str | Path, clips: list[Clip]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "frame_index", "x0", "y0", "x1", "y1"])
        for clip in clips:
            for i in sorted(clip.boxes):
                w.writerow([clip.clip_id, i, *clip.boxes[i]])


def read_boxes_csv(path: str | Path) -> dict[str, dict[int, tuple[int, int, int, int]]]:
    out: dict[str, dict[int, tuple[int, int, int, int]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["clip_id"], {})[int(r["frame_index"])] = (
                int(r["x0"]), int(r["y0"]), int(r["x1"]), int(r["y1"]))
    return out


# --- synthetic corpus ------------------------------------------------------

@dataclass(frozen=True)
class Anomaly:
    clip: int  # index into the test clips
    kind: str
    start: int
    end: int  # inclusive


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 7
    size: int = 64
    n_train: int = 20
    n_test: int = 10
    frames: int = 200
    blob_count: tuple[int, int] = (2, 3)
    radius: float = 5.0
    speed_range: tuple[float, float] = (0.5, 1.5)
    anomaly_types: tuple[str, ...] = ANOMALY_TYPES
    anomaly_length: tuple[int, int] = (30, 60)
    anomalies: tuple[Anomaly, ...] | None = None  # None -> one random interval per test clip

    def __post_init__(self):
        if 2 * self.radius + 2 >= self.size:
            raise ValueError(f"blob radius {self.radius} too large for {self.size}x{self.size} frames")
        bad = set(self.anomaly_types) - set(ANOMALY_TYPES)
        if bad:
            raise ValueError(f"unknown anomaly types {sorted(bad)}")
        for a in self.anomalies or ():
            if a.kind not in ANOMALY_TYPES:
                raise ValueError(f"unknown anomaly type {a.kind!r}")
            if not (0 <= a.start <= a.end < self.frames) or not (0 <= a.clip < self.n_test):
                raise ValueError(f"anomaly {a} outside clip bounds")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for key in ("blob_count", "speed_range", "anomaly_types", "anomaly_length"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("anomalies") is not None:
            d["anomalies"] = tuple(Anomaly(**a) for a in d["anomalies"])
        return cls(**d)


BG_LEVEL = -0.8
BLOB_AMP = 1.4
FAST_SPEED = (4.0, 6.0)
JITTER_STEP = 3.0
STRIPE_HALF = 7
STRIPE_PERIOD = 3.0


class _Mover:
    def __init__(self, pos, vel, lo, hi):
        self.pos = np.asarray(pos, float)
        self.vel = np.asarray(vel, float)
        self.lo, self.hi = lo, hi

    def step(self):
        self.pos += self.vel
        for ax in range(2):
            if self.pos[ax] < self.lo:
                self.pos[ax] = 2 * self.lo - self.pos[ax]
                self.vel[ax] = -self.vel[ax]
            elif self.pos[ax] > self.hi:
                self.pos[ax] = 2 * self.hi - self.pos[ax]
                self.vel[ax] = -self.vel[ax]


def _random_velocity(rng, lo, hi):
    speed = rng.uniform(lo, hi)
    ang = rng.uniform(0, 2 * np.pi)
    return speed * np.array([np.cos(ang), np.sin(ang)])


def _disc(yy, xx, pos, r):
    d = np.hypot(xx - pos[0], yy - pos[1])
    return np.clip(r + 0.5 - d, 0.0, 1.0)


def _striped_box(yy, xx, pos, half):
    inside = np.clip(half + 0.5 - np.maximum(np.abs(xx - pos[0]), np.abs(yy - pos[1])), 0.0, 1.0)
    stripes = 0.5 + 0.5 * np.cos(2 * np.pi * (xx - pos[0]) / STRIPE_PERIOD)
    return inside * stripes


def _box(pos, half, size):
    x0, y0 = int(np.floor(pos[0] - half)), int(np.floor(pos[1] - half))
    x1, y1 = int(np.ceil(pos[0] + half)), int(np.ceil(pos[1] + half))
    return (max(x0, 0), max(y0, 0), min(x1, size - 1), min(y1, size - 1))


def _render_clip(spec: SynthSpec, rng: np.random.Generator, anomalies: list[Anomaly]) -> tuple[np.ndarray, np.ndarray, dict]:
    size, r, n = spec.size, spec.radius, spec.frames
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    background = BG_LEVEL + 0.2 * xx / (size - 1)
    lo, hi = r + 1, size - 2 - r
    count = int(rng.integers(spec.blob_count[0], spec.blob_count[1] + 1))
    blobs = [_Mover(rng.uniform(lo, hi, 2), _random_velocity(rng, *spec.speed_range), lo, hi) for _ in range(count)]

    # Anomalous actors, created up front so the draw order is fixed.
    actors = []
    for a in anomalies:
        if a.kind == "fast_mover":
            actors.append((a, _Mover(rng.uniform(lo, hi, 2), _random_velocity(rng, *FAST_SPEED), lo, hi)))
        elif a.kind == "shape_change":
            lo_s, hi_s = STRIPE_HALF + 1, size - 2 - STRIPE_HALF
            actors.append((a, _Mover(rng.uniform(lo_s, hi_s, 2), _random_velocity(rng, *spec.speed_range), lo_s, hi_s)))
        else:
            actors.append((a, None))

    frames = np.empty((n, size, size), np.float32)
    labels = np.zeros(n, int)
    boxes: dict[int, tuple[int, int, int, int]] = {}
    for t in range(n):
        img = background.copy()
        jitter = {}
        for a, mover in actors:
            if a.start <= t <= a.end:
                labels[t] = 1
                if a.kind == "reverse_direction":
                    # blob 0 steps back and forth along its heading every frame
                    b = blobs[0]
                    heading = b.vel / (np.linalg.norm(b.vel) + 1e-12)
                    sign = 1.0 if (t - a.start) % 2 == 0 else -1.0
                    jitter[0] = np.clip(b.pos + sign * JITTER_STEP * heading, lo, hi)
        for i, b in enumerate(blobs):
            img += BLOB_AMP * _disc(yy, xx, jitter.get(i, b.pos), r)
        for a, mover in actors:
            if not (a.start <= t <= a.end):
                continue
            if a.kind == "fast_mover":
                img += BLOB_AMP * _disc(yy, xx, mover.pos, r)
                boxes[t] = _box(mover.pos, r + 1, size)
            elif a.kind == "shape_change":
                img += BLOB_AMP * _striped_box(yy, xx, mover.pos, STRIPE_HALF)
                boxes[t] = _box(mover.pos, STRIPE_HALF + 1, size)
            else:
                boxes[t] = _box(jitter[0], r + 1, size)
        frames[t] = np.clip(img, -1.0, 1.0)
        for i, b in enumerate(blobs):
            if i not in jitter:
                b.step()
        for a, mover in actors:
            if mover is not None and a.start <= t <= a.end:
                mover.step()
    # store exactly what an 8-bit round trip would give back
    return to_unit(to_uint8(frames)), labels, boxes


def _default_anomalies(spec: SynthSpec, rng: np.random.Generator) -> list[Anomaly]:
    if not spec.anomaly_types:
        return []
    out = []
    for c in range(spec.n_test):
        kind = spec.anomaly_types[c % len(spec.anomaly_types)]
        length = int(rng.integers(spec.anomaly_length[0], spec.anomaly_length[1] + 1))
        length = min(length, spec.frames)
        margin = min(20, (spec.frames - length) // 2)
        start = int(rng.integers(margin, spec.frames - length - margin + 1))
        out.append(Anomaly(c, kind, start, start + length - 1))
    return out


def synth_generate(spec: SynthSpec) -> tuple[list[Clip], list[Clip]]:
    """Return ``(train, test)`` clips; training clips never contain anomalies."""
    plan_rng = np.random.Generator(stream(spec.seed, "synth/plan"))
    anomalies = list(spec.anomalies) if spec.anomalies is not None else _default_anomalies(spec, plan_rng)
    train = []
    for i in range(spec.n_train):
        rng = np.random.Generator(stream(spec.seed, f"synth/train/{i}"))
        frames, labels, _ = _render_clip(spec, rng, [])
        train.append(Clip(f"train_{i:03d}", frames, labels, "synthetic"))
    test = []
    for i in range(spec.n_test):
        rng = np.random.Generator(stream(spec.seed, f"synth/test/{i}"))
        frames, labels, boxes = _render_clip(spec, rng, [a for a in anomalies if a.clip == i])
        test.append(Clip(f"test_{i:03d}", frames, labels, "synthetic", boxes))
    return train, test


def write_corpus(root: str | Path, train: list[Clip], test: list[Clip], spec: SynthSpec | None = None) -> None:
    root = Path(root)
    for split, clips in (("train", train), ("test", test)):
        for clip in clips:
            save_clip(clip, root / split / clip.clip_id)
    write_labels_csv(root / "test_labels.csv", test)
    write_events_csv(root / "test_events.csv", test)
    write_boxes_csv(root / "test_boxes.csv", test)
    if spec is not None:
        (root / "synth.json").write_text(spec.to_json() + "\n")


def load_split(root: str | Path, split: str, size: int | None = None) -> list[Clip]:
    """Load every clip directory under ``root/split``, attaching labels and boxes if present."""
    root = Path(root)
    base = root / split
    if not base.is_dir():
        raise FileNotFoundError(f"missing split directory {base}")
    labels = read_labels_csv(root / f"{split}_labels.csv") if (root / f"{split}_labels.csv").exists() else {}
    boxes = read_boxes_csv(root / f"{split}_boxes.csv") if (root / f"{split}_boxes.csv").exists() else {}
    clips = []
    for d in sorted(p for p in base.iterdir() if p.is_dir()):
        clip = load_clip(d, size)
        if clip.clip_id in labels:
            clip.labels = labels[clip.clip_id]
            if len(clip.labels) != len(clip):
                raise ValueError(f"labels for {clip.clip_id} do not match its {len(clip)} frames")
        clip.boxes = boxes.get(clip.clip_id, {})
        clips.append(clip)
    if not clips:
        raise FileNotFoundError(f"no clips under {base}")
    return clips
