"""Video preprocessing: mean-frame removal (offline and streaming),
interaction-region tracking, space-time transformation, and resizing.

The full per-sequence pipeline is ``preprocess_sequence``:

    raw frames -> mean removal -> region tracking -> per-sample
    space-time stack -> crop + square center-crop + bilinear resize

Space-time stacks are built on a stride-``delta`` grid (one stack per
``delta`` raw frames), so a sequence of ``L`` raw frames yields roughly
``L/delta`` preprocessed samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .data import DataError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

#: region-of-interest box at full acquisition scale (rows x cols)
DEFAULT_BOX_HW = (200, 300)


@dataclass
class MeanFrame:
    """Running or final per-sequence mean frame."""

    pixels: np.ndarray
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise DataError("mean frame count must be >= 1")


@dataclass
class RoiBox:
    """Fixed-size region of interest, clamped inside the source frame."""

    center: tuple[int, int]          # (row, col)
    height: int = DEFAULT_BOX_HW[0]
    width: int = DEFAULT_BOX_HW[1]

    def bounds(self, frame_h: int, frame_w: int) -> tuple[int, int, int, int]:
        """(top, left, bottom, right), clamped fully inside the frame."""
        if self.height > frame_h or self.width > frame_w:
            raise DataError(f"box {self.height}x{self.width} larger than frame "
                            f"{frame_h}x{frame_w}")
        top = int(round(self.center[0] - self.height / 2))
        left = int(round(self.center[1] - self.width / 2))
        top = min(max(top, 0), frame_h - self.height)
        left = min(max(left, 0), frame_w - self.width)
        return top, left, top + self.height, left + self.width


@dataclass
class SpaceTimeFrame:
    """Three grayscale time slices stacked as channels."""

    pixels: np.ndarray               # (H, W, 3)
    source_indices: tuple[int, int, int]
    delta: int


# ---------------------------------------------------------------------------
# mean frame

def mean_frame_offline(frames: np.ndarray) -> MeanFrame:
    """Equal-weight per-pixel mean over all frames of a sequence."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 4 or frames.shape[0] < 1:
        raise DataError("mean_frame_offline: need a (L,H,W,C) stack with L >= 1")
    return MeanFrame(pixels=frames.mean(axis=0), count=frames.shape[0])


def mean_frame_causal(state: MeanFrame | None, new_frame: np.ndarray) -> MeanFrame:
    """Incremental running mean; feed frames in order, oldest first."""
    new_frame = np.asarray(new_frame, dtype=float)
    if state is None:
        return MeanFrame(pixels=new_frame.copy(), count=1)
    if state.pixels.shape != new_frame.shape:
        raise DataError("mean_frame_causal: shape mismatch")
    count = state.count + 1
    return MeanFrame(pixels=state.pixels + (new_frame - state.pixels) / count, count=count)


def subtract_mean(frame: np.ndarray, mean: MeanFrame) -> np.ndarray:
    """Signed residual in [-1, 1]; zero means 'same as background'."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != mean.pixels.shape:
        raise DataError("subtract_mean: shape mismatch")
    return frame - mean.pixels


# ---------------------------------------------------------------------------
# grayscale / space-time

def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luma; accepts (H,W,3) and returns (H,W)."""
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DataError(f"to_grayscale: need (H,W,3), got {pixels.shape}")
    return pixels @ LUMA_WEIGHTS


def space_time(gray_frames: np.ndarray, t: int, delta: int,
               causal: bool = False) -> SpaceTimeFrame:
    """Stack three time slices of a grayscale sequence as channels.

    Non-causal slices are (t-delta, t, t+delta); the causal variant uses
    (t-2*delta, t-delta, t) so no future frame is touched.
    """
    gray_frames = np.asarray(gray_frames, dtype=float)
    n = gray_frames.shape[0]
    if causal:
        idx = (t - 2 * delta, t - delta, t)
    else:
        idx = (t - delta, t, t + delta)
    if idx[0] < 0 or idx[2] >= n:
        raise DataError(f"space_time: indices {idx} out of range [0, {n})")
    pixels = np.stack([gray_frames[i] for i in idx], axis=-1)
    return SpaceTimeFrame(pixels=pixels, source_indices=idx, delta=delta)


# ---------------------------------------------------------------------------
# region tracking

def _otsu_threshold(values: np.ndarray) -> float | None:
    """Otsu's threshold over a 256-bin histogram; None if degenerate."""
    vmax = values.max()
    if vmax <= 0:
        return None
    hist, edges = np.histogram(values, bins=256, range=(0.0, float(vmax)))
    total = hist.sum()
    w = np.cumsum(hist)
    centers = (edges[:-1] + edges[1:]) / 2
    m = np.cumsum(hist * centers)
    m_total = m[-1]
    w0 = w[:-1].astype(float)
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    mu0 = np.where(w0 > 0, m[:-1] / np.maximum(w0, 1), 0.0)
    mu1 = np.where(w1 > 0, (m_total - m[:-1]) / np.maximum(w1, 1), 0.0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    between[~valid] = -1.0
    k = int(np.argmax(between))
    return float(edges[k + 1])


def track_roi(mean_removed: np.ndarray, prev_box: RoiBox | None = None,
              box_hw: tuple[int, int] = DEFAULT_BOX_HW,
              smoothing: float = 0.8) -> tuple[list[RoiBox], list[bool]]:
    """Follow the region of tool/tissue motion through a sequence.

    Per step: 3x3 box blur, absolute difference against the previous
    frame, Otsu threshold, 3x3 morphological open then close, then the
    centroid over the surviving motion components.  Components smaller
    than half the largest one are treated as speckle and ignored; the
    remaining ones are merged for the centroid (a moving object shows up
    as separate leading/trailing edge strips).  The centroid is
    exponentially smoothed (weight ``smoothing`` on the new evidence)
    and a fixed-size box is clamped inside the frame.  Frames with no
    foreground reuse the previous box and are flagged.
    """
    frames = np.asarray(mean_removed, dtype=float)
    if frames.ndim == 4:
        gray = np.einsum("lhwc,c->lhw", frames, LUMA_WEIGHTS) \
            if frames.shape[3] == 3 else frames[..., 0]
    else:
        gray = frames
    n, h, w = gray.shape
    if n < 2 and prev_box is None:
        raise DataError("track_roi: need >= 2 frames for motion evidence")

    if prev_box is not None:
        center = (float(prev_box.center[0]), float(prev_box.center[1]))
    else:
        center = (h / 2.0, w / 2.0)

    blurred = ndimage.uniform_filter(gray, size=(1, 3, 3), mode="nearest")
    structure = np.ones((3, 3), dtype=bool)
    boxes: list[RoiBox] = []
    flags: list[bool] = []
    for t in range(n):
        no_motion = True
        if t > 0:
            diff = np.abs(blurred[t] - blurred[t - 1])
            thresh = _otsu_threshold(diff)
            if thresh is not None:
                mask = diff > thresh
                mask = ndimage.binary_opening(mask, structure=structure)
                mask = ndimage.binary_closing(mask, structure=structure)
                labels, n_labels = ndimage.label(mask)
                if n_labels > 0:
                    sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, n_labels + 1))
                    keep = np.flatnonzero(sizes >= sizes.max() / 2) + 1
                    sel = np.isin(labels, keep)
                    if sel.any():
                        rows, cols = np.nonzero(sel)
                        cr, cc = rows.mean(), cols.mean()
                        center = (smoothing * cr + (1 - smoothing) * center[0],
                                  smoothing * cc + (1 - smoothing) * center[1])
                        no_motion = False
        box = RoiBox(center=(int(round(center[0])), int(round(center[1]))),
                     height=box_hw[0], width=box_hw[1])
        box.bounds(h, w)  # validate fit
        boxes.append(box)
        flags.append(no_motion)
    return boxes, flags


# ---------------------------------------------------------------------------
# crop / resize

def resize_bilinear(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling with half-pixel-center alignment.

    With this convention an exact 2x downscale equals 2x2 block
    averaging and a same-size resize is the identity.
    """
    img = np.asarray(img, dtype=float)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    ih, iw, c = img.shape
    oh, ow = out_hw

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        i0 = np.minimum(src.astype(int), max(n_in - 2, 0))
        frac = src - i0
        return i0, frac

    r0, rf = axis_coords(ih, oh)
    c0, cf = axis_coords(iw, ow)
    r1 = np.minimum(r0 + 1, ih - 1)
    c1 = np.minimum(c0 + 1, iw - 1)
    rf = rf[:, None, None]
    cf = cf[None, :, None]
    top = img[r0][:, c0] * (1 - cf) + img[r0][:, c1] * cf
    bot = img[r1][:, c0] * (1 - cf) + img[r1][:, c1] * cf
    out = top * (1 - rf) + bot * rf
    return out[:, :, 0] if squeeze else out


def crop_resize(pixels: np.ndarray, box: RoiBox, out_size: int) -> np.ndarray:
    """Crop the box, center-crop to a square, and resample to out_size.

    Aspect ratio is preserved by the square center-crop before scaling.
    """
    pixels = np.asarray(pixels, dtype=float)
    h, w = pixels.shape[:2]
    top, left, bottom, right = box.bounds(h, w)
    crop = pixels[top:bottom, left:right]
    ch, cw = crop.shape[:2]
    side = min(ch, cw)
    r0 = (ch - side) // 2
    c0 = (cw - side) // 2
    square = crop[r0:r0 + side, c0:c0 + side]
    return resize_bilinear(square, (out_size, out_size))


# ---------------------------------------------------------------------------
# full pipeline

def load_frames(frames_dir: Path, n_frames: int) -> np.ndarray:
    """Read frame_%06d.png files into a (L,H,W,3) float array in [0,1]."""
    from PIL import Image

    frames = []
    for i in range(n_frames):
        path = Path(frames_dir) / f"frame_{i:06d}.png"
        with Image.open(path) as im:
            frames.append(np.asarray(im.convert("RGB"), dtype=float) / 255.0)
    if not frames:
        raise DataError(f"no frames found in {frames_dir}")
    return np.stack(frames)


def sample_grid(n_frames: int, delta: int) -> list[int]:
    """Sample instants shared by causal and non-causal stacks.

    Starts at 2*delta (causal needs two past slices) and stops delta
    short of the end (non-causal needs one future slice), striding by
    delta so one stack is produced per delta raw frames.
    """
    return list(range(2 * delta, n_frames - delta, delta))


def preprocess_sequence(frames: np.ndarray, delta: int = 15, out_size: int = 32,
                        box_hw: tuple[int, int] = DEFAULT_BOX_HW,
                        causal_mean: bool = False, causal_stf: bool = False,
                        roi_centers: list[tuple[float, float]] | None = None,
                        ) -> tuple[np.ndarray, list[int], list[RoiBox], list[bool]]:
    """Run the full frame pipeline for one sequence.

    ``roi_centers`` overrides the motion tracker with externally known
    interaction points (one (row, col) per frame), e.g. projected tool
    tips for synthetic scenes.

    Returns (stacks (n,S,S,3), sample instants, boxes, no-motion flags).
    """
    frames = np.asarray(frames, dtype=float)
    n = frames.shape[0]
    if causal_mean:
        state = None
        removed = np.empty_like(frames)
        for t in range(n):
            state = mean_frame_causal(state, frames[t])
            removed[t] = frames[t] - state.pixels
    else:
        mean = mean_frame_offline(frames)
        removed = frames - mean.pixels

    h, w = frames.shape[1:3]
    if roi_centers is not None:
        boxes = [RoiBox(center=(int(round(r)), int(round(c))),
                        height=box_hw[0], width=box_hw[1]) for r, c in roi_centers]
        for b in boxes:
            b.bounds(h, w)
        flags = [False] * n
    else:
        boxes, flags = track_roi(removed, box_hw=box_hw)

    gray = np.einsum("lhwc,c->lhw", removed, LUMA_WEIGHTS)
    grid = sample_grid(n, delta)
    stacks = np.empty((len(grid), out_size, out_size, 3))
    for k, t in enumerate(grid):
        stf = space_time(gray, t, delta, causal=causal_stf)
        stacks[k] = crop_resize(stf.pixels, boxes[t], out_size)
    return stacks, grid, boxes, flags
