"""Signal data model: tool/force samples, sequences, normalization,
resampling, smoothing, and train/test splitting.

Conventions
-----------
* Tool and force signals are sampled at a fixed rate (50 Hz by default).
* Normalized tool positions live in [-1, 1], normalized forces in
  [-5, 5]; the parameters of both affine maps are kept so test data and
  reports can be converted back to physical units exactly.
* All functions are pure; nothing here holds hidden state.

On-disk layout of one sequence (written by the generator, read by the
preprocessor):

    <root>/<id>/signals.csv     t,x,y,z,u,v,w,theta,s,fx,fy,fz,tx,ty,tz
    <root>/<id>/meta.json       id, task, rate, width, height
    <root>/<id>/frame_%06d.png  8-bit RGB frames
    <root>/manifest.csv         id,task,seed,length
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: physical plausibility envelope: [min, max] for forces (N) and torques (Nm)
FORCE_RANGE = (-10.0, 2.5)
TORQUE_RANGE = (-5.0, 5.0)

SIGNAL_HEADER = ["t", "x", "y", "z", "u", "v", "w", "theta", "s",
                 "fx", "fy", "fz", "tx", "ty", "tz"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class ToolSample:
    """Tool state at one sample instant."""

    t: int
    position: np.ndarray            # (3,) meters
    orientation_axis: np.ndarray | None = None   # (3,) unit vector
    orientation_angle: float = 0.0  # radians
    grasper: int = 1                # 1 open, 0 closed

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,):
            raise DataError(f"position must have 3 components, got {self.position.shape}")
        if self.orientation_axis is not None:
            self.orientation_axis = np.asarray(self.orientation_axis, dtype=float)
            norm = np.linalg.norm(self.orientation_axis)
            if abs(norm - 1.0) > 1e-9:
                raise DataError(f"orientation axis norm {norm} is not unit")
        if self.grasper not in (0, 1):
            raise DataError(f"grasper must be 0 or 1, got {self.grasper}")


@dataclass
class ForceVector:
    """Six force/torque components: [fx, fy, fz, tx, ty, tz]."""

    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        if self.components.shape != (6,):
            raise DataError(f"force vector needs 6 components, got {self.components.shape}")

    def envelope_violations(self) -> list[str]:
        """Names of components outside the physical envelope (not clipped)."""
        bad = []
        for j, name in enumerate(("fx", "fy", "fz")):
            if not FORCE_RANGE[0] <= self.components[j] <= FORCE_RANGE[1]:
                bad.append(name)
        for j, name in enumerate(("tx", "ty", "tz")):
            if not TORQUE_RANGE[0] <= self.components[3 + j] <= TORQUE_RANGE[1]:
                bad.append(name)
        return bad


@dataclass
class Frame:
    """An image with an explicit processing-stage tag.

    Tags: raw_rgb (pixels in [0,1]), mean_removed ([-1,1]), grayscale,
    space_time (3 grayscale time slices).
    """

    pixels: np.ndarray
    tag: str = "raw_rgb"

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim == 2:
            self.pixels = self.pixels[:, :, None]
        if self.pixels.ndim != 3:
            raise DataError(f"frame must be HxWxC, got shape {self.pixels.shape}")
        if self.tag == "raw_rgb" and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise DataError("raw_rgb pixels must lie in [0, 1]")
        if self.tag == "mean_removed" and (self.pixels.min() < -1.0 or self.pixels.max() > 1.0):
            raise DataError("mean_removed pixels must lie in [-1, 1]")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]


@dataclass
class SequenceRecord:
    """One recorded episode: frames plus synchronized tool/force signals."""

    id: str
    task: str                        # "pushing" | "pulling"
    tool: list[ToolSample]
    force: list[ForceVector]
    rate: float = 50.0
    frames_dir: Path | None = None   # PNG frames live on disk, loaded lazily
    n_frames: int = 0

    def __post_init__(self):
        if self.task not in ("pushing", "pulling"):
            raise DataError(f"unknown task {self.task!r}")

    def __len__(self):
        return len(self.tool)

    def tool_matrix(self) -> np.ndarray:
        """(L, 4) array of [x, y, z, s] rows."""
        return np.array([[*s.position, s.grasper] for s in self.tool], dtype=float)

    def force_matrix(self) -> np.ndarray:
        """(L, 6) array of force rows."""
        return np.array([f.components for f in self.force], dtype=float)


@dataclass
class ToolNormalization:
    mean: np.ndarray                 # (3,)
    scale: np.ndarray                # (3,) strictly positive
    degenerate: np.ndarray           # (3,) bool, True where deviation was zero


@dataclass
class ForceNormalization:
    offset: np.ndarray               # (6,)
    scale: np.ndarray                # (6,) strictly positive
    degenerate: np.ndarray           # (6,) bool


@dataclass
class NormalizationParams:
    """Affine maps for tool positions (to [-1,1]) and forces (to [-5,5])."""

    tool_mean: np.ndarray
    tool_scale: np.ndarray
    force_offset: np.ndarray
    force_scale: np.ndarray
    tool_degenerate: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=bool))
    force_degenerate: np.ndarray = field(default_factory=lambda: np.zeros(6, dtype=bool))

    def __post_init__(self):
        if np.any(np.asarray(self.tool_scale) <= 0) or np.any(np.asarray(self.force_scale) <= 0):
            raise DataError("normalization scales must be strictly positive")

    def normalize_tool_matrix(self, tool: np.ndarray) -> np.ndarray:
        out = tool.astype(float).copy()
        out[:, :3] = (out[:, :3] - self.tool_mean) / self.tool_scale
        return out

    def normalize_force_matrix(self, force: np.ndarray) -> np.ndarray:
        return (np.asarray(force, dtype=float) - self.force_offset) / self.force_scale

    def denormalize_force_matrix(self, force: np.ndarray) -> np.ndarray:
        return np.asarray(force, dtype=float) * self.force_scale + self.force_offset


@dataclass
class Dataset:
    train: list[SequenceRecord]
    test: list[SequenceRecord]
    norm: NormalizationParams | None = None


# ---------------------------------------------------------------------------
# normalization

def normalize_tool(samples: list[ToolSample]) -> tuple[list[ToolSample], ToolNormalization]:
    """Center each position axis and scale by its max absolute deviation.

    Outputs lie in [-1, 1]; grasper status is passed through.  A zero
    deviation axis gets scale 1 and is flagged degenerate.
    """
    if not samples:
        raise DataError("normalize_tool: empty sample list")
    pos = np.array([s.position for s in samples], dtype=float)
    mean = pos.mean(axis=0)
    dev = np.abs(pos - mean).max(axis=0)
    degenerate = dev == 0.0
    scale = np.where(degenerate, 1.0, dev)
    normed_pos = (pos - mean) / scale
    out = [ToolSample(t=s.t, position=normed_pos[i],
                      orientation_axis=s.orientation_axis,
                      orientation_angle=s.orientation_angle,
                      grasper=s.grasper)
           for i, s in enumerate(samples)]
    return out, ToolNormalization(mean=mean, scale=scale, degenerate=degenerate)


def normalize_force(forces: list[ForceVector]) -> tuple[list[ForceVector], ForceNormalization]:
    """Map each component's observed range onto [-5, +5].

    Offset is the range midpoint, scale is (half range)/5 so that
    ``(f - offset) / scale`` fills [-5, 5].  Zero-range components get
    scale 1 and a degenerate flag.  Denormalization is exact.
    """
    if not forces:
        raise DataError("normalize_force: empty force list")
    mat = np.array([f.components for f in forces], dtype=float)
    lo, hi = mat.min(axis=0), mat.max(axis=0)
    offset = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    degenerate = half == 0.0
    scale = np.where(degenerate, 1.0, half / 5.0)
    normed = (mat - offset) / scale
    out = [ForceVector(normed[i]) for i in range(len(forces))]
    return out, ForceNormalization(offset=offset, scale=scale, degenerate=degenerate)


def denormalize_force(forces: list[ForceVector], norm: ForceNormalization) -> list[ForceVector]:
    return [ForceVector(f.components * norm.scale + norm.offset) for f in forces]


# ---------------------------------------------------------------------------
# resampling / smoothing

def synchronize(times: np.ndarray, values: np.ndarray, target_rate: float,
                shift: float = 0.0) -> tuple[np.ndarray, np.ndarray, int]:
    """Resample ``values`` sampled at ``times`` onto a uniform grid.

    The signal is first shifted by ``shift`` seconds, then linearly
    interpolated at ``k / target_rate`` for every k whose grid point falls
    inside the (shifted) support; grid points outside are dropped, and
    their count is returned so callers can warn.
    """
    times = np.asarray(times, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    if times.ndim != 1 or len(times) != len(values):
        raise DataError("synchronize: times/values length mismatch")
    if np.any(np.diff(times) <= 0):
        raise DataError("synchronize: timestamps must be strictly increasing")
    t = times + shift
    dt = 1.0 / target_rate
    # requested grid spans the original, unshifted support; points that the
    # shift pushes outside the signal are truncated, never extrapolated
    k0_req = int(np.ceil(times[0] / dt - 1e-12))
    k1_req = int(np.floor(times[-1] / dt + 1e-12))
    k0 = max(k0_req, int(np.ceil(t[0] / dt - 1e-12)))
    k1 = min(k1_req, int(np.floor(t[-1] / dt + 1e-12)))
    grid = np.arange(k0, k1 + 1) * dt
    dropped = (k1_req - k0_req + 1) - len(grid)
    out = np.empty((len(grid), values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.interp(grid, t, values[:, j])
    return grid, out, dropped


def smooth(signal: np.ndarray, window: int = 5) -> np.ndarray:
    """Centered moving average; the window shrinks at the edges.

    window=1 is the identity.  Even windows are rejected (no center).
    """
    if window < 1 or window % 2 == 0:
        raise DataError(f"smooth: window must be odd and >= 1, got {window}")
    x = np.asarray(signal, dtype=float)
    if window == 1:
        return x.copy()
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    half = window // 2
    csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    n = len(x)
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    out = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)[:, None]
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# splitting

def split_dataset(sequences: list[SequenceRecord], test_ids: set[str]) -> Dataset:
    """Split at sequence granularity; fit normalization on train only.

    Normalized copies are NOT produced here -- the stored records stay in
    physical units and ``Dataset.norm`` carries the affine maps.
    """
    ids = [s.id for s in sequences]
    if len(set(ids)) != len(ids):
        raise DataError("split_dataset: duplicate sequence ids")
    unknown = set(test_ids) - set(ids)
    if unknown:
        raise DataError(f"split_dataset: unknown test ids {sorted(unknown)}")
    train = [s for s in sequences if s.id not in test_ids]
    test = [s for s in sequences if s.id in test_ids]
    norm = None
    if train:
        all_tool = [t for s in train for t in s.tool]
        all_force = [f for s in train for f in s.force]
        _, tn = normalize_tool(all_tool)
        _, fn = normalize_force(all_force)
        norm = NormalizationParams(tool_mean=tn.mean, tool_scale=tn.scale,
                                   force_offset=fn.offset, force_scale=fn.scale,
                                   tool_degenerate=tn.degenerate,
                                   force_degenerate=fn.degenerate)
    return Dataset(train=train, test=test, norm=norm)


# ---------------------------------------------------------------------------
# sequence I/O

def write_sequence_signals(path: Path, seq: SequenceRecord) -> None:
    """Write signals.csv + meta.json for one sequence directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "signals.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(SIGNAL_HEADER)
        for tool, force in zip(seq.tool, seq.force):
            axis = tool.orientation_axis if tool.orientation_axis is not None else (0.0, 0.0, 1.0)
            wr.writerow([tool.t, *(repr(float(v)) for v in tool.position),
                         *(repr(float(a)) for a in axis),
                         repr(float(tool.orientation_angle)), tool.grasper,
                         *(repr(float(v)) for v in force.components)])
    meta = {"id": seq.id, "task": seq.task, "rate": seq.rate,
            "width": 0, "height": 0, "n_frames": seq.n_frames}
    if seq.frames_dir is not None and seq.n_frames:
        from PIL import Image
        with Image.open(Path(seq.frames_dir) / "frame_000000.png") as im:
            meta["width"], meta["height"] = im.size
    (path / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def read_sequence(path: Path) -> SequenceRecord:
    """Load one sequence directory (signals + metadata, frames stay on disk)."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    tool, force = [], []
    with open(path / "signals.csv", newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != SIGNAL_HEADER:
            raise DataError(f"{path}: unexpected signal header {header}")
        for row in rd:
            t = int(row[0])
            vals = [float(v) for v in row[1:]]
            tool.append(ToolSample(t=t, position=np.array(vals[0:3]),
                                   orientation_axis=np.array(vals[3:6]),
                                   orientation_angle=vals[6],
                                   grasper=int(vals[7])))
            force.append(ForceVector(np.array(vals[8:14])))
    n_frames = int(meta.get("n_frames", 0))
    return SequenceRecord(id=meta["id"], task=meta["task"], tool=tool, force=force,
                          rate=float(meta["rate"]), frames_dir=path, n_frames=n_frames)


def write_manifest(root: Path, rows: list[tuple[str, str, int, int]]) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["id", "task", "seed", "length"])
        for row in rows:
            wr.writerow(row)


def read_manifest(root: Path) -> list[dict]:
    root = Path(root)
    try:
        fh = open(root / "manifest.csv", newline="")
    except FileNotFoundError as exc:
        raise DataError(f"no manifest in {root}") from exc
    with fh:
        return [{"id": r["id"], "task": r["task"], "seed": int(r["seed"]),
                 "length": int(r["length"])} for r in csv.DictReader(fh)]


def load_dataset(root: Path, test_ids: set[str]) -> Dataset:
    """Read every sequence named in the manifest and split train/test."""
    entries = read_manifest(root)
    seqs = [read_sequence(Path(root) / e["id"]) for e in entries]
    return split_dataset(seqs, test_ids)
