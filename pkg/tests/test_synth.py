"""Synthetic scene generator: oracle law, rendering, episode statistics."""

import numpy as np
import pytest

from vbforce.data import DataError
from vbforce.synth import (EpisodePlan, Material, SceneConfig, ToolScript,
                           default_plan, episode_scene, force_oracle, generate,
                           generate_episode, pulling_script, pushing_script,
                           render_frame)


def scene(**kw):
    return SceneConfig(**kw)


# -- force oracle --------------------------------------------------------------

def test_oracle_free_space_zero():
    f = force_oracle([0.01, -0.02, 0.015], [0.01, 0.0, -0.02], 1, scene())
    assert np.allclose(f, 0.0)


def test_oracle_static_push_hand_case():
    sc = scene(material=Material(k1=500.0, k3=1e5))
    f = force_oracle([0.0, 0.0, -0.01], [0.0, 0.0, 0.0], 1, sc)
    assert f[2] == pytest.approx(-5.1)
    assert f[0] == 0.0 and f[1] == 0.0


def test_oracle_grasp_displacement_hand_case():
    sc = scene(material=Material(ks=800.0))
    f = force_oracle([0.002, 0.0, 0.0], [0.0, 0.0, 0.0], 0, sc,
                     grasp_point=[0.0, 0.0, 0.0])
    assert f[0] == pytest.approx(-1.6)
    r = np.array(sc.lever_arm)
    assert np.allclose(f[3:], np.cross(r, f[:3]))


def test_oracle_continuous_across_contact_with_velocity():
    sc = scene()
    v = [0.003, -0.002, -0.02]
    eps = 1e-7
    above = force_oracle([0, 0, +eps], v, 1, sc)
    below = force_oracle([0, 0, -eps], v, 1, sc)
    assert np.abs(above - below).max() < 1e-3   # damping ramps in smoothly


def test_oracle_conservative_push_release_cycle():
    # quasi-static loop down and back up with zero damping: trapezoid
    # work integral over the closed path must vanish (conservative law)
    sc = scene(material=Material(k1=500.0, k3=1e5, damping=0.0))
    depths = np.linspace(0, 0.012, 300)
    path = np.concatenate([depths, depths[::-1]])
    fz = np.array([force_oracle([0, 0, -d], [0, 0, 0], 1, sc)[2] for d in path])
    dz = np.diff(-path)
    work = float(((fz[:-1] + fz[1:]) / 2.0 * dz).sum())
    assert abs(work) < 1e-6


def test_oracle_continuity_in_position_random_probes():
    sc = scene()
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rng.uniform(-0.02, 0.02, 3)
        p[2] = rng.uniform(-0.012, 0.004)
        v = rng.uniform(-0.02, 0.02, 3)
        dp = rng.normal(0, 1e-7, 3)
        f1 = force_oracle(p, v, 1, sc)
        f2 = force_oracle(p + dp, v, 1, sc)
        assert np.abs(f1 - f2).max() < 1e-2


# -- rendering -----------------------------------------------------------------

def test_render_deterministic():
    sc = scene()
    a = render_frame([0.0, 0.0, -0.006], 1, sc, fz=-3.0)
    b = render_frame([0.0, 0.0, -0.006], 1, sc, fz=-3.0)
    assert np.array_equal(a, b)
    assert a.shape == (64, 64, 3) and a.min() >= 0.0 and a.max() <= 1.0


def test_render_penetration_changes_pixels_near_dimple():
    sc = scene()
    flat = render_frame([0.0, 0.0, 0.0], 1, sc, fz=0.0)
    pressed = render_frame([0.0, 0.0, -0.01], 1, sc, fz=-5.0)
    h, w = sc.frame_hw
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    tip = sc.project([0.0, 0.0, 0.0])
    radius_px = sc.dimple_sigma / sc.extent * w * 2
    inside = (rr - tip[0]) ** 2 + (cc - tip[1]) ** 2 <= radius_px ** 2
    changed = np.any(np.abs(flat - pressed) > 1e-3, axis=2)
    assert changed[inside].mean() >= 0.01


def test_render_background_static_outside_tool():
    sc = scene()
    far1 = render_frame([-0.03, -0.03, 0.015], 1, sc)
    far2 = render_frame([0.03, 0.03, 0.015], 1, sc)
    # both tools hover: background must agree away from both silhouettes
    diff = np.abs(far1 - far2).max(axis=2)
    changed = diff > 1e-9
    assert changed.mean() < 0.30   # only the tool capsule differs


# -- scripts / generation -------------------------------------------------------

def test_pushing_episode_fz_dominates():
    plan = EpisodePlan("p", "pushing", 101, 24.0)
    record, _ = generate_episode(plan, scene(), render=False)
    fm = record.force_matrix()
    mean_abs = np.abs(fm).mean(axis=0)
    assert mean_abs[2] > 3.0 * mean_abs[0]
    assert mean_abs[2] > 3.0 * mean_abs[1]


def test_pulling_episode_all_axes_active_during_grasp():
    plan = EpisodePlan("q", "pulling", 202, 24.0)
    record, _ = generate_episode(plan, scene(), render=False)
    tool = record.tool_matrix()
    fm = record.force_matrix()
    closed = tool[:, 3] == 0
    assert closed.any()
    grasp_forces = np.abs(fm[closed])
    assert (grasp_forces[:, :3].max(axis=0) > 1e-3).all()


def test_generate_deterministic_bytes():
    plan = EpisodePlan("r", "pushing", 303, 6.0)
    rec1, frames1 = generate_episode(plan, scene())
    rec2, frames2 = generate_episode(plan, scene())
    assert np.array_equal(frames1, frames2)
    assert np.array_equal(rec1.force_matrix(), rec2.force_matrix())


def test_generated_forces_within_physical_envelope():
    for plan in [EpisodePlan("a", "pushing", 11, 24.0),
                 EpisodePlan("b", "pushing", 12, 24.0),
                 EpisodePlan("c", "pulling", 13, 24.0),
                 EpisodePlan("d", "pulling", 14, 24.0)]:
        record, _ = generate_episode(plan, scene(), render=False)
        bad = [fv.envelope_violations() for fv in record.force]
        assert not any(bad), f"{plan.id}: {[b for b in bad if b][:3]}"


def test_episode_scene_latents_vary():
    scales = {round(episode_scene(scene(), s).stiffness_scale, 6) for s in range(8)}
    rests = {round(episode_scene(scene(), s).rest_height, 8) for s in range(8)}
    assert len(scales) == 8 and len(rests) == 8


def test_default_plan_counts_and_split():
    plans, test_ids = default_plan()
    assert len(plans) == 44
    tasks = [p.task for p in plans]
    assert tasks.count("pushing") == 28 and tasks.count("pulling") == 16
    assert len(test_ids) == 16
    test_tasks = [p.task for p in plans if p.id in set(test_ids)]
    assert test_tasks.count("pushing") == 12 and test_tasks.count("pulling") == 4
    # sample-count split close to 77/23 (test episodes are shorter)
    n_train = sum(p.duration * 50 for p in plans if p.id not in set(test_ids))
    n_test = sum(p.duration * 50 for p in plans if p.id in set(test_ids))
    frac = n_train / (n_train + n_test)
    assert abs(frac - 0.77) < 0.01


def test_script_validation():
    with pytest.raises(DataError):
        ToolScript(task="pulling",
                   waypoints=[(0.0, np.zeros(3), 1), (1.0, np.zeros(3), 1)])
    with pytest.raises(DataError):
        ToolScript(task="pushing",
                   waypoints=[(0.0, np.zeros(3), 1), (0.0, np.zeros(3), 1)])


def test_grasp_in_free_space_produces_no_force():
    rng = np.random.default_rng(9)
    script = ToolScript(task="pulling", waypoints=[
        (0.0, np.array([0.0, 0.0, 0.012]), 1),
        (1.0, np.array([0.0, 0.0, 0.012]), 0),   # close far above the surface
        (2.0, np.array([0.0, 0.0, 0.016]), 0),
        (3.0, np.array([0.0, 0.0, 0.012]), 1),
        (4.0, np.array([0.0, 0.0, 0.012]), 1),
    ])
    record, _ = generate(script, scene(), seed=4, render=False)
    assert np.abs(record.force_matrix()).max() == 0.0
