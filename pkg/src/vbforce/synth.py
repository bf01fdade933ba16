"""Synthetic tool-membrane episodes with a known force oracle.

Scripted pushing/pulling episodes over a rendered deformable membrane
replace the private acquisition platform.  The analytic contact law is
the ground truth the models are scored against:

* pushing contact (tip below the rest surface): a stiffening spring
  ``fz = -(k1*d + k3*d^3) - c*d_dot`` on the penetration ``d``, with a
  small Coulomb-like tangential term opposing lateral sliding;
* grasping (grasper closed on the membrane): a shear spring pulling the
  tool back toward the grasp point in all three axes, plus damping;
* torques are ``r x f`` for a fixed lever arm ``r``.

Two per-episode latent draws -- a material stiffness multiplier and a
rest-surface height offset -- are visible in the rendered deformation
but absent from the tool kinematics, so force cannot be recovered from
tool data alone.  Pressure blanching (local whitening proportional to
contact force) and slope-modulated specular highlights give the video
channel direct force evidence, mimicking tissue behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DataError, ForceVector, SequenceRecord, ToolSample


@dataclass
class Material:
    k1: float = 200.0                # linear stiffness, N/m
    k3: float = 3.0e6                # cubic stiffness, N/m^3
    damping: float = 20.0            # N*s/m
    ks: float = 800.0                # grasp shear stiffness, N/m
    friction: float = 0.05           # tangential fraction of |fz|

    def __post_init__(self):
        if min(self.k1, self.k3, self.ks) < 0 or self.damping < 0:
            raise DataError("stiffnesses and damping must be >= 0")


@dataclass
class SceneConfig:
    frame_hw: tuple[int, int] = (64, 64)
    grid: int = 64                   # height-field resolution (== frame size)
    material: Material = field(default_factory=Material)
    lever_arm: tuple[float, float, float] = (0.004, -0.003, -0.03)  # m
    n_specular: int = 5
    specular_intensity: float = 0.45
    texture_seed: int = 0
    rate: float = 50.0
    extent: float = 0.1              # world width/height of the view, m
    rest_height: float = 0.0         # membrane rest plane z0, m
    stiffness_scale: float = 1.0     # per-episode material multiplier
    damp_ramp: float = 0.001         # penetration over which damping engages, m
    dimple_sigma: float = 0.009      # deformation footprint, m
    blanch_gain: float = 0.5
    blanch_ref: float = 3.0          # N scale of the blanching response
    grasp_reach: float = 0.001       # max height above surface that still grasps, m
    pixel_noise: float = 0.008

    def __post_init__(self):
        if self.rate <= 0:
            raise DataError("rate must be positive")

    def project(self, position) -> tuple[float, float]:
        """World (x, y) -> fractional pixel (row, col); y up is row down."""
        h, w = self.frame_hw
        col = (position[0] / self.extent + 0.5) * (w - 1)
        row = (0.5 - position[1] / self.extent) * (h - 1)
        return row, col


@dataclass
class ToolScript:
    """Waypoint trajectory; the grasper value of a waypoint holds until
    the next one."""

    task: str                        # "pushing" | "pulling"
    waypoints: list[tuple[float, np.ndarray, int]]  # (t sec, position, grasper)
    rest_height: float = 0.0

    def __post_init__(self):
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataError("waypoints must be strictly time-sorted")
        if self.task == "pulling":
            grasps = [w[2] for w in self.waypoints]
            if 0 not in grasps or grasps[0] == 0 or grasps[-1] == 0:
                raise DataError("pulling scripts need a grasp interval (1 -> 0 -> 1)")

    @property
    def duration(self) -> float:
        return self.waypoints[-1][0]


# ---------------------------------------------------------------------------
# force oracle

def force_oracle(position, velocity, grasper: int, scene: SceneConfig,
                 grasp_point=None) -> np.ndarray:
    """Analytic ground-truth wrench (6,) for one tool state.

    Continuous in the tool position everywhere except the instant the
    grasper toggles (damping ramps in with penetration, so crossing the
    contact boundary at nonzero speed stays continuous).
    """
    position = np.asarray(position, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    mat = scene.material
    m = scene.stiffness_scale
    f = np.zeros(3)

    d = scene.rest_height - position[2]
    if d > 0.0:
        ramp = min(d / scene.damp_ramp, 1.0)
        d_dot = -velocity[2]
        fz = -m * (mat.k1 * d + mat.k3 * d ** 3) - mat.damping * d_dot * ramp
        f[2] += fz
        v_t = velocity[:2]
        speed = math.hypot(v_t[0], v_t[1])
        if speed > 1e-12:
            f[:2] += -mat.friction * abs(fz) * ramp * v_t / speed

    if grasper == 0 and grasp_point is not None:
        disp = position - np.asarray(grasp_point, dtype=float)
        f += -m * mat.ks * disp - mat.damping * velocity

    torque = np.cross(np.asarray(scene.lever_arm), f)
    return np.concatenate([f, torque])


def grasp_engages(position, scene: SceneConfig) -> bool:
    """Closing the grasper only grabs tissue near or below the surface."""
    return position[2] <= scene.rest_height + scene.grasp_reach


# ---------------------------------------------------------------------------
# rendering

class _SceneArt:
    """Per-scene static art: texture, pixel grid, highlight positions."""

    def __init__(self, scene: SceneConfig):
        h, w = scene.frame_hw
        rng = np.random.default_rng(scene.texture_seed)
        ys = (0.5 - np.arange(h) / (h - 1)) * scene.extent
        xs = (np.arange(w) / (w - 1) - 0.5) * scene.extent
        self.px = np.tile(xs, (h, 1))
        self.py = np.tile(ys[:, None], (1, w))
        tex = np.zeros((h, w))
        for _ in range(8):
            freq = rng.uniform(20.0, 140.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            tex += amp * np.sin(freq[0] * self.px + freq[1] * self.py + phase)
        tex -= tex.min()
        self.texture = 0.8 + 0.4 * (tex / max(tex.max(), 1e-12))  # [0.8, 1.2]
        self.base_color = np.array([0.72, 0.43, 0.40])
        margin = 0.12 * scene.extent
        self.blobs = rng.uniform(-scene.extent / 2 + margin,
                                 scene.extent / 2 - margin,
                                 size=(scene.n_specular, 2))
        self.light = np.array([0.35, -0.35, 0.87])
        self.light /= np.linalg.norm(self.light)
        self.pixel_size = scene.extent / (w - 1)


_ART_CACHE: dict[tuple, _SceneArt] = {}


def _scene_art(scene: SceneConfig) -> _SceneArt:
    key = (scene.frame_hw, scene.texture_seed, scene.n_specular, scene.extent)
    if key not in _ART_CACHE:
        _ART_CACHE[key] = _SceneArt(scene)
    return _ART_CACHE[key]


def render_frame(position, grasper: int, scene: SceneConfig,
                 grasp_point=None, fz: float = 0.0) -> np.ndarray:
    """Deterministic top-down view, (H,W,3) floats in [0,1].

    The membrane deflects under the tool: a dimple of depth equal to the
    penetration when pushing, a bulge toward the tool when grasped above
    the surface.  Shading follows the height-field gradient, fixed
    specular blobs brighten with local slope, and contact force whitens
    the tissue around the tip (pressure blanching).  The tool is a dark
    capsule ending at the tip projection.
    """
    position = np.asarray(position, dtype=float)
    art = _scene_art(scene)
    h, w = scene.frame_hw

    # height field: Gaussian deflection at the tool's (x, y)
    deflection = position[2] - scene.rest_height
    if deflection > 0 and not (grasper == 0 and grasp_point is not None):
        deflection = 0.0             # hovering above without grasping
    deflection = float(np.clip(deflection, -0.02, 0.01))
    r2 = (art.px - position[0]) ** 2 + (art.py - position[1]) ** 2
    sigma2 = scene.dimple_sigma ** 2
    height = deflection * np.exp(-r2 / (2.0 * sigma2))

    gy, gx = np.gradient(height, art.pixel_size)
    gy = -gy                          # row index grows downward
    norm = np.sqrt(gx ** 2 + gy ** 2 + 1.0)
    lambert = (-gx * art.light[0] - gy * art.light[1] + art.light[2]) / norm
    shade = np.clip(0.25 + 0.75 * np.clip(lambert, 0.0, 1.0), 0.0, 1.2)

    img = art.base_color[None, None, :] * (art.texture * shade)[:, :, None]

    # pressure blanching: local whitening with the contact force
    blanch = scene.blanch_gain * math.tanh(abs(fz) / scene.blanch_ref)
    if blanch > 0:
        spot = np.exp(-r2 / (2.0 * (0.8 * scene.dimple_sigma) ** 2))
        img += blanch * spot[:, :, None] * (1.0 - img)

    # specular highlights, brighter where the surface tilts
    slope = np.sqrt(gx ** 2 + gy ** 2)
    for bx, by in art.blobs:
        br2 = (art.px - bx) ** 2 + (art.py - by) ** 2
        spot = np.exp(-br2 / (2.0 * 0.0045 ** 2))
        ir = int(np.clip((0.5 - by / scene.extent) * (h - 1), 0, h - 1))
        ic = int(np.clip((bx / scene.extent + 0.5) * (w - 1), 0, w - 1))
        gain = scene.specular_intensity * (0.5 + np.clip(8.0 * slope[ir, ic], 0.0, 1.5))
        img += gain * spot[:, :, None]

    # tool: dark capsule from the upper-right toward the tip projection
    tip_r, tip_c = scene.project(position)
    shaft = np.array([-0.45, 0.22])  # (d_row, d_col) per unit length, toward entry
    shaft = shaft / np.linalg.norm(shaft)
    length = 1.6 * max(h, w)
    prow = (0.5 - art.py / scene.extent) * (h - 1)
    pcol = (art.px / scene.extent + 0.5) * (w - 1)
    rel_r = prow - tip_r
    rel_c = pcol - tip_c
    t_par = np.clip(rel_r * shaft[0] + rel_c * shaft[1], 0.0, length)
    dist2 = (rel_r - t_par * shaft[0]) ** 2 + (rel_c - t_par * shaft[1]) ** 2
    radius = 1.6 if grasper == 0 else 2.2   # open jaws look wider
    tool_mask = dist2 <= radius ** 2
    tool_shade = np.clip(1.0 - dist2 / (radius ** 2 + 1e-9), 0.0, 1.0)
    tool_color = np.array([0.16, 0.17, 0.20])
    img = np.where(tool_mask[:, :, None],
                   tool_color[None, None, :] * (0.7 + 0.3 * tool_shade[:, :, None]),
                   img)
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# trajectory sampling / episode generation

def _sample_trajectory(script: ToolScript, rate: float):
    """Waypoints -> (positions (L,3), grasper (L,)) with smoothstep easing."""
    n = int(round(script.duration * rate)) + 1
    times = np.arange(n) / rate
    wp_t = np.array([w[0] for w in script.waypoints])
    wp_p = np.array([np.asarray(w[1], dtype=float) for w in script.waypoints])
    wp_s = np.array([w[2] for w in script.waypoints])
    pos = np.empty((n, 3))
    grasp = np.empty(n, dtype=int)
    seg = np.clip(np.searchsorted(wp_t, times, side="right") - 1, 0, len(wp_t) - 2)
    for i, t in enumerate(times):
        k = seg[i]
        span = wp_t[k + 1] - wp_t[k]
        u = np.clip((t - wp_t[k]) / span, 0.0, 1.0)
        e = u * u * (3.0 - 2.0 * u)
        pos[i] = wp_p[k] + e * (wp_p[k + 1] - wp_p[k])
        grasp[i] = wp_s[k] if t < wp_t[k + 1] else wp_s[k + 1]
    return pos, grasp


def _smooth_jitter(rng: np.random.Generator, n: int, rate: float,
                   sigma: float = 0.00020, corr_seconds: float = 0.3) -> np.ndarray:
    """Seeded low-frequency positional noise, std ~= sigma per axis."""
    raw = rng.normal(0.0, 1.0, size=(n, 3))
    half = max(int(corr_seconds * rate), 1)
    kern = np.exp(-0.5 * (np.arange(-3 * half, 3 * half + 1) / half) ** 2)
    kern /= np.sqrt((kern ** 2).sum())
    out = np.empty_like(raw)
    for j in range(3):
        out[:, j] = np.convolve(raw[:, j], kern, mode="same")
    return sigma * out


def generate(script: ToolScript, scene: SceneConfig, seed: int,
             render: bool = True):
    """Sample one episode; returns (record, frames uint8 (L,H,W,3)).

    Deterministic per (script, scene, seed).  Forces come from
    :func:`force_oracle`; frames from :func:`render_frame` plus seeded
    pixel noise and 8-bit quantization.
    """
    rng = np.random.default_rng(seed)
    pos, grasp = _sample_trajectory(script, scene.rate)
    pos = pos + _smooth_jitter(rng, len(pos), scene.rate)
    vel = np.gradient(pos, 1.0 / scene.rate, axis=0)

    tool: list[ToolSample] = []
    force: list[ForceVector] = []
    frames = np.empty((len(pos), *scene.frame_hw, 3), dtype=np.uint8) if render else None
    grasp_point = None
    axis = np.array([0.0, 0.0, 1.0])
    for t in range(len(pos)):
        if grasp[t] == 0 and (t == 0 or grasp[t - 1] == 1):
            grasp_point = pos[t].copy() if grasp_engages(pos[t], scene) else None
        elif grasp[t] == 1:
            grasp_point = None
        wrench = force_oracle(pos[t], vel[t], grasp[t], scene, grasp_point)
        tool.append(ToolSample(t=t, position=pos[t], orientation_axis=axis,
                               orientation_angle=0.0, grasper=int(grasp[t])))
        force.append(ForceVector(wrench))
        if render:
            img = render_frame(pos[t], int(grasp[t]), scene, grasp_point,
                               fz=wrench[2])
            if scene.pixel_noise > 0:
                img = img + rng.normal(0.0, scene.pixel_noise, size=img.shape)
            frames[t] = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)

    record = SequenceRecord(id="", task=script.task, tool=tool, force=force,
                            rate=scene.rate, n_frames=len(pos) if render else 0)
    return record, frames


# ---------------------------------------------------------------------------
# episode scripts

def pushing_script(rng: np.random.Generator, duration: float,
                   nominal_rest: float = 0.0) -> ToolScript:
    """Press cycles of randomized depth and location, grasper open."""
    hover = nominal_rest + 0.018
    span = 0.024                     # stay well inside the view
    x, y = rng.uniform(-span, span, size=2)
    wp = [(0.0, np.array([x, y, hover]), 1)]
    t = 0.0
    n_cycles = 0
    while True:
        cycle = rng.uniform(5.2, 6.8)
        if t + cycle + 1.0 > duration:
            if n_cycles > 0:
                break
            cycle = duration - t - 1.0   # squeeze in one press at least
            if cycle < 3.0:
                raise DataError(f"pushing script needs >= 4 s, got {duration}")
        n_cycles += 1
        x, y = np.clip([x + rng.uniform(-0.012, 0.012),
                        y + rng.uniform(-0.012, 0.012)], -span, span)
        depth = rng.uniform(0.0045, 0.0075)
        t1 = t + 0.18 * cycle
        wp.append((t1, np.array([x, y, hover]), 1))
        t2 = t1 + 0.22 * cycle
        wp.append((t2, np.array([x, y, nominal_rest - depth]), 1))
        t3 = t2 + 0.18 * cycle
        wp.append((t3, np.array([x, y, nominal_rest - 0.55 * depth]), 1))
        t4 = t3 + 0.20 * cycle
        wp.append((t4, np.array([x, y, nominal_rest - 0.9 * depth]), 1))
        t5 = t4 + 0.22 * cycle
        wp.append((t5, np.array([x, y, hover]), 1))
        t = t5
    wp.append((duration, np.array([x, y, hover]), 1))
    return ToolScript(task="pushing", waypoints=wp, rest_height=nominal_rest)


def pulling_script(rng: np.random.Generator, duration: float,
                   nominal_rest: float = 0.0) -> ToolScript:
    """Grasp-and-pull cycles: touch, close, pull up with lateral wiggle,
    return, release."""
    hover = nominal_rest + 0.018
    touch = nominal_rest - 0.002     # deep enough to engage for any offset
    span = 0.022
    x, y = rng.uniform(-span, span, size=2)
    wp = [(0.0, np.array([x, y, hover]), 1)]
    t = 0.0
    n_cycles = 0
    while True:
        cycle = rng.uniform(7.0, 8.6)
        if t + cycle + 1.0 > duration:
            if n_cycles > 0:
                break
            cycle = duration - t - 1.0   # squeeze in one grasp cycle at least
            if cycle < 4.0:
                raise DataError(f"pulling script needs >= 5 s, got {duration}")
        n_cycles += 1
        x, y = np.clip([x + rng.uniform(-0.012, 0.012),
                        y + rng.uniform(-0.012, 0.012)], -span, span)
        lift = rng.uniform(0.0022, 0.0034)
        wx, wy = rng.uniform(-0.0012, 0.0012, size=2)
        t1 = t + 0.14 * cycle
        wp.append((t1, np.array([x, y, hover]), 1))
        t2 = t1 + 0.14 * cycle
        wp.append((t2, np.array([x, y, touch]), 1))
        t3 = t2 + 0.06 * cycle       # close the grasper on the tissue
        wp.append((t3, np.array([x, y, touch]), 0))
        t4 = t3 + 0.16 * cycle
        wp.append((t4, np.array([x + wx, y + wy, touch + lift]), 0))
        t5 = t4 + 0.14 * cycle
        wp.append((t5, np.array([x - wx, y - wy, touch + 0.8 * lift]), 0))
        t6 = t5 + 0.12 * cycle
        wp.append((t6, np.array([x, y, touch + 0.2 * lift]), 0))
        t7 = t6 + 0.06 * cycle       # release
        wp.append((t7, np.array([x, y, touch + 0.2 * lift]), 1))
        t8 = t7 + 0.18 * cycle
        wp.append((t8, np.array([x, y, hover]), 1))
        t = t8
    wp.append((duration, np.array([x, y, hover]), 1))
    return ToolScript(task="pulling", waypoints=wp, rest_height=nominal_rest)


@dataclass
class EpisodePlan:
    id: str
    task: str
    seed: int
    duration: float


def default_plan(n_pushing: int = 28, n_pulling: int = 16,
                 n_test_pushing: int = 12, n_test_pulling: int = 4,
                 train_seconds: float = 24.0, test_seconds: float = 12.5,
                 master_seed: int = 0) -> tuple[list[EpisodePlan], list[str]]:
    """Episode roster mirroring the acquisition campaign's task mix and
    its roughly 77/23 train/test sample split (test episodes are
    shorter).  Returns (plans, test_ids)."""
    plans: list[EpisodePlan] = []
    test_ids: list[str] = []
    for task, total, n_test in (("pushing", n_pushing, n_test_pushing),
                                ("pulling", n_pulling, n_test_pulling)):
        for i in range(total):
            is_test = i >= total - n_test
            pid = f"{task[:4]}_{i:02d}"
            plans.append(EpisodePlan(
                id=pid, task=task,
                seed=master_seed * 100000 + (1000 if task == "pushing" else 2000) + i,
                duration=test_seconds if is_test else train_seconds))
            if is_test:
                test_ids.append(pid)
    return plans, test_ids


def episode_scene(base: SceneConfig, seed: int) -> SceneConfig:
    """Per-episode latents: material multiplier, rest-height offset,
    texture/highlight layout."""
    rng = np.random.default_rng(seed)
    scale = float(np.exp(rng.uniform(np.log(0.55), np.log(1.65))))
    z0 = base.rest_height + float(rng.uniform(-0.003, 0.003))
    return replace(base, stiffness_scale=scale, rest_height=z0,
                   texture_seed=seed)


def generate_episode(plan: EpisodePlan, base_scene: SceneConfig,
                     render: bool = True):
    """One manifest entry -> (record, frames); id filled in."""
    scene = episode_scene(base_scene, plan.seed)
    rng = np.random.default_rng(plan.seed + 1)
    if plan.task == "pushing":
        script = pushing_script(rng, plan.duration, base_scene.rest_height)
    else:
        script = pulling_script(rng, plan.duration, base_scene.rest_height)
    record, frames = generate(script, scene, plan.seed + 2, render=render)
    record.id = plan.id
    return record, frames
