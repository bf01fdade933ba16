"""Command-line front end wiring the modules into the experiment
protocol.

Subcommands: synth | preprocess | train | extract | eval | robustness |
rt-compare | armax | report.  Global flags: --config PATH --seed N
--out DIR.  Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric failure.

Working-directory layout under --out:

    dataset/    manifest.csv, test_ids.txt, <id>/{signals.csv, meta.json,
                frame_%06d.png}
    prep/       <id>.stf.vbfs(+.idx.csv), norm.json, prep.json
    features/   <id>.feat.vbfs(+.idx.csv)
    models/     cnn.vbfp, lstm_<case>_<loss>.vbfp (+ .cfg sidecars)
    reports/    metrics_*.csv, training_log_*.csv, robustness_*.csv,
                rt_compare.csv, summary.csv, *.svg
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import armax as armax_mod
from . import data as data_mod
from . import formats, metrics, svg, synth, training, video
from .data import DataError
from .nnet import CnnConfig, FeatureCnn, LstmConfig, LstmStack, NumericError
from .training import (CASE_I, CASE_II, CASE_III, SequenceArrays, TrainConfig,
                       add_tool_noise, config_from_dict, parse_config)

SMOOTH_WINDOW = 5


# ---------------------------------------------------------------------------
# plumbing

class OutputLock:
    """One writer per output directory."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / ".lock"
        self.fd = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise DataError(f"output directory is locked by {self.path}; "
                            "remove the stale lock if no other run is active")
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)


def atomic_write_text(path: Path, content: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            wr.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "undefined" if not np.isfinite(x) else repr(x)


# ---------------------------------------------------------------------------
# dataset assembly shared by train / eval / robustness

def load_norm(out: Path) -> data_mod.NormalizationParams:
    try:
        blob = json.loads((out / "prep" / "norm.json").read_text())
    except FileNotFoundError as exc:
        raise DataError("no prep/norm.json; run `preprocess` first") from exc
    return data_mod.NormalizationParams(
        tool_mean=np.array(blob["tool_mean"]),
        tool_scale=np.array(blob["tool_scale"]),
        force_offset=np.array(blob["force_offset"]),
        force_scale=np.array(blob["force_scale"]))


def read_test_ids(out: Path) -> set[str]:
    path = out / "dataset" / "test_ids.txt"
    try:
        return {line.strip() for line in path.read_text().splitlines() if line.strip()}
    except FileNotFoundError as exc:
        raise DataError(f"missing {path}; run `synth` first") from exc


def smooth_signals(seq: data_mod.SequenceRecord) -> tuple[np.ndarray, np.ndarray]:
    """Moving-average filtered (tool (L,4), force (L,6)) in physical units."""
    tool = seq.tool_matrix()
    force = seq.force_matrix()
    tool[:, :3] = data_mod.smooth(tool[:, :3], SMOOTH_WINDOW)
    force = data_mod.smooth(force, SMOOTH_WINDOW)
    return tool, force


def assemble_sequences(out: Path, ids: list[str] | None = None,
                       with_stf: bool = False, with_features: bool = False,
                       ) -> dict[str, SequenceArrays]:
    """Build normalized per-sequence training arrays on the strided grid."""
    root = out / "dataset"
    norm = load_norm(out)
    entries = data_mod.read_manifest(root)
    if ids is not None:
        entries = [e for e in entries if e["id"] in set(ids)]
    result: dict[str, SequenceArrays] = {}
    for entry in entries:
        sid = entry["id"]
        seq = data_mod.read_sequence(root / sid)
        tool, force = smooth_signals(seq)
        tool = norm.normalize_tool_matrix(tool)
        force = norm.normalize_force_matrix(force)
        stf_path = out / "prep" / f"{sid}.stf.vbfs"
        try:
            stf, idx = formats.read_tensor_file(stf_path)
        except FileNotFoundError as exc:
            raise DataError(f"missing {stf_path}; run `preprocess`") from exc
        features = None
        if with_features:
            feat_path = out / "features" / f"{sid}.feat.vbfs"
            try:
                feats, fidx = formats.read_tensor_file(feat_path)
            except FileNotFoundError as exc:
                raise DataError(f"missing {feat_path}; run `extract`") from exc
            if not np.array_equal(fidx, idx):
                raise DataError(f"{sid}: feature/stf index mismatch")
            features = feats.reshape(len(feats), -1)
        result[sid] = SequenceArrays(id=sid, task=entry["task"],
                                     tool=tool[idx], force=force[idx],
                                     indices=idx,
                                     stf=stf if with_stf else None,
                                     features=features)
    return result


def split_arrays(out: Path, arrays: dict[str, SequenceArrays]):
    test_ids = read_test_ids(out)
    train = [a for a in arrays.values() if a.id not in test_ids]
    test = [a for a in arrays.values() if a.id in test_ids]
    return train, test


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    out = Path(args.out)
    scene = synth.SceneConfig()
    if "frame_size" in cfg:
        scene.frame_hw = (cfg["frame_size"], cfg["frame_size"])
        scene.grid = cfg["frame_size"]
    def test_count(total: int, frac: float) -> int:
        if total < 2:
            return 0
        return min(total - 1, max(1, round(total * frac)))

    plans, test_ids = synth.default_plan(
        n_pushing=cfg.get("episodes_pushing", 28),
        n_pulling=cfg.get("episodes_pulling", 16),
        n_test_pushing=test_count(cfg.get("episodes_pushing", 28), 12 / 28),
        n_test_pulling=test_count(cfg.get("episodes_pulling", 16), 4 / 16),
        train_seconds=cfg.get("train_seconds", 24.0),
        test_seconds=cfg.get("test_seconds", 12.5),
        master_seed=args.seed)
    root = out / "dataset"
    root.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    rows = []
    for plan in plans:
        record, frames = synth.generate_episode(plan, scene)
        seq_dir = root / plan.id
        seq_dir.mkdir(parents=True, exist_ok=True)
        for i in range(len(frames)):
            Image.fromarray(frames[i]).save(seq_dir / f"frame_{i:06d}.png")
        record.frames_dir = seq_dir
        data_mod.write_sequence_signals(seq_dir, record)
        meta = json.loads((seq_dir / "meta.json").read_text())
        meta["extent"] = scene.extent
        atomic_write_text(seq_dir / "meta.json", json.dumps(meta, indent=1, sort_keys=True))
        rows.append((plan.id, plan.task, plan.seed, len(record.tool)))
        print(f"synth: {plan.id} ({plan.task}, {len(record.tool)} samples)")
    data_mod.write_manifest(root, rows)
    atomic_write_text(root / "test_ids.txt", "".join(f"{tid}\n" for tid in test_ids))
    print(f"synth: wrote {len(plans)} episodes to {root}")
    return 0


# ---------------------------------------------------------------------------
# preprocess

def tool_roi_centers(seq: data_mod.SequenceRecord, extent: float,
                     frame_hw: tuple[int, int]) -> list[tuple[float, float]]:
    h, w = frame_hw
    centers = []
    for s in seq.tool:
        col = (s.position[0] / extent + 0.5) * (w - 1)
        row = (0.5 - s.position[1] / extent) * (h - 1)
        centers.append((float(np.clip(row, 0, h - 1)), float(np.clip(col, 0, w - 1))))
    return centers


def cmd_preprocess(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    out = Path(args.out)
    root = out / "dataset"
    entries = data_mod.read_manifest(root)
    test_ids = read_test_ids(out)
    delta = args.delta if args.delta is not None else cfg.get("delta", 15)
    out_size = cfg.get("input_size", 32)
    causal = bool(args.causal or cfg.get("causal", 0))
    roi_from_tool = bool(cfg.get("roi_from_tool", 0))
    prep_dir = out / "prep"
    prep_dir.mkdir(parents=True, exist_ok=True)

    train_tool: list[data_mod.ToolSample] = []
    train_force: list[data_mod.ForceVector] = []
    for entry in entries:
        sid = entry["id"]
        seq = data_mod.read_sequence(root / sid)
        meta = json.loads((root / sid / "meta.json").read_text())
        frames = video.load_frames(root / sid, seq.n_frames)
        h, w = frames.shape[1:3]
        box_hw = (max(2, int(round(h * 0.5))), max(2, int(round(w * 0.75))))
        centers = None
        if roi_from_tool:
            centers = tool_roi_centers(seq, float(meta.get("extent", 0.1)), (h, w))
        stacks, grid, _, flags = video.preprocess_sequence(
            frames, delta=delta, out_size=out_size, box_hw=box_hw,
            causal_mean=causal, causal_stf=causal, roi_centers=centers)
        formats.write_tensor_file(prep_dir / f"{sid}.stf.vbfs", stacks, grid)
        print(f"preprocess: {sid} -> {len(grid)} stacks "
              f"(no-motion {sum(flags)}/{len(flags)})")
        if sid not in test_ids:
            tool_m, force_m = smooth_signals(seq)
            train_tool.extend(data_mod.ToolSample(t=i, position=tool_m[i, :3],
                                                  grasper=int(tool_m[i, 3]))
                              for i in range(len(tool_m)))
            train_force.extend(data_mod.ForceVector(force_m[i])
                               for i in range(len(force_m)))

    if train_tool:
        _, tn = data_mod.normalize_tool(train_tool)
        _, fn = data_mod.normalize_force(train_force)
        norm_blob = {"tool_mean": tn.mean.tolist(), "tool_scale": tn.scale.tolist(),
                     "force_offset": fn.offset.tolist(),
                     "force_scale": fn.scale.tolist()}
        atomic_write_text(prep_dir / "norm.json", json.dumps(norm_blob, indent=1))
    atomic_write_text(prep_dir / "prep.json",
                      json.dumps({"delta": delta, "out_size": out_size,
                                  "causal": int(causal),
                                  "roi_from_tool": int(roi_from_tool)}, indent=1))
    print(f"preprocess: done ({len(entries)} sequences)")
    return 0


# ---------------------------------------------------------------------------
# train / extract

def build_train_config(args, cfg: dict, stage: str) -> TrainConfig:
    tc = config_from_dict(cfg, stage=stage)
    if args.case:
        tc = replace(tc, case=args.case)
    if args.loss:
        tc = replace(tc, loss=args.loss)
    if "seed" not in cfg:
        tc = replace(tc, seed=args.seed)
    if getattr(args, "iters", None) is not None:
        tc = replace(tc, iterations=args.iters)
    return tc


def save_model(path: Path, params, tc: TrainConfig) -> None:
    formats.write_checkpoint(path, params.values)
    lines = [f"stage={tc.stage}", f"case={tc.case}", f"loss={tc.loss}",
             f"lr={tc.learning_rate!r}", f"batch={tc.batch_size}",
             f"iters={tc.iterations}", f"T={tc.time_steps}", f"seed={tc.seed}",
             f"feature_dim={tc.feature_dim}", f"dropout1={tc.dropout[0]!r}",
             f"dropout2={tc.dropout[1]!r}", f"causal={int(tc.causal)}",
             f"delta={tc.delta}", f"input_size={tc.input_size}",
             f"cells1={tc.cells[0]}", f"cells2={tc.cells[1]}"]
    atomic_write_text(Path(str(path) + ".cfg"), "".join(f"{l}\n" for l in lines))


def load_lstm(path: Path) -> tuple[LstmStack, TrainConfig]:
    tc = config_from_dict(parse_config(Path(str(path) + ".cfg")), stage="lstm")
    model = LstmStack(LstmConfig(input_dim=tc.input_dim(), cell_sizes=tc.cells,
                                 dropout=tc.dropout), seed=tc.seed)
    model.params.load(formats.read_checkpoint(path))
    return model, tc


def load_cnn(path: Path) -> tuple[FeatureCnn, TrainConfig]:
    tc = config_from_dict(parse_config(Path(str(path) + ".cfg")), stage="cnn")
    model = FeatureCnn(CnnConfig(input_size=tc.input_size,
                                 fc_widths=(tc.feature_dim, tc.feature_dim)),
                       seed=tc.seed)
    model.params.load(formats.read_checkpoint(path))
    return model, tc


def cmd_train(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    out = Path(args.out)
    models_dir = out / "models"
    reports_dir = out / "reports"
    models_dir.mkdir(parents=True, exist_ok=True)
    reports_dir.mkdir(parents=True, exist_ok=True)

    if args.stage == "cnn":
        tc = build_train_config(args, cfg, "cnn")
        if "cnn_iters" in cfg and args.iters is None:
            tc = replace(tc, iterations=cfg["cnn_iters"])
        arrays = assemble_sequences(out, with_stf=True)
        train, test = split_arrays(out, arrays)
        model, log = training.train_cnn(train, test, tc)
        save_model(models_dir / "cnn.vbfp", model.params, tc)
        training.write_training_log(reports_dir / "training_log_cnn.csv", log)
        print(f"train: cnn done ({tc.iterations} iterations) -> models/cnn.vbfp")
        return 0

    tc = build_train_config(args, cfg, "lstm")
    needs_video = tc.case in (CASE_II, CASE_III)
    arrays = assemble_sequences(out, with_features=needs_video)
    train, test = split_arrays(out, arrays)
    model, log = training.train_lstm(train, test, tc)
    name = f"lstm_{tc.case}_{tc.loss}"
    save_model(models_dir / f"{name}.vbfp", model.params, tc)
    training.write_training_log(reports_dir / f"training_log_{name}.csv", log)
    print(f"train: {name} done ({tc.iterations} iterations)")
    return 0


def cmd_extract(args) -> int:
    out = Path(args.out)
    cnn, _ = load_cnn(Path(args.cnn) if args.cnn else out / "models" / "cnn.vbfp")
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    arrays = assemble_sequences(out, with_stf=True)
    for sid, seq in arrays.items():
        feats = np.concatenate([cnn.features(seq.stf[lo:lo + 256])
                                for lo in range(0, len(seq), 256)])
        formats.write_tensor_file(feat_dir / f"{sid}.feat.vbfs",
                                  feats.reshape(len(feats), 1, 1, -1), seq.indices)
        print(f"extract: {sid} -> {feats.shape}")
    return 0


# ---------------------------------------------------------------------------
# eval / robustness / rt-compare / armax

def _case_input_noisy(seq: SequenceArrays, case: str, sigma: float, seed: int):
    tool = add_tool_noise(seq.tool, sigma, seed)
    noisy = SequenceArrays(id=seq.id, task=seq.task, tool=tool, force=seq.force,
                           indices=seq.indices, stf=seq.stf, features=seq.features)
    return noisy.case_input(case)


def eval_lstm(model: LstmStack, tc: TrainConfig, seqs: list[SequenceArrays],
              sigma: float = 0.0, noise_seed: int = 0):
    """Pooled (truth, estimate) pairs per task over t >= T-1."""
    pooled: dict[str, list] = {}
    for seq in seqs:
        sid_hash = zlib.crc32(seq.id.encode())  # stable across processes
        phi = _case_input_noisy(seq, tc.case, sigma, noise_seed + sid_hash % 100003)
        est = training.predict_sequence(model, phi, tc.time_steps)
        truth = seq.force[tc.time_steps - 1:]
        pooled.setdefault(seq.task, []).append((truth, est))
        pooled.setdefault("all", []).append((truth, est))
    out = {}
    for task, pairs in pooled.items():
        y = np.concatenate([p[0] for p in pairs])
        y_hat = np.concatenate([p[1] for p in pairs])
        out[task] = (y, y_hat)
    return out


def cmd_eval(args) -> int:
    out = Path(args.out)
    model, tc = load_lstm(Path(args.model))
    norm = load_norm(out)
    needs_video = tc.case in (CASE_II, CASE_III)
    arrays = assemble_sequences(out, with_features=needs_video)
    _, test = split_arrays(out, arrays)
    if not test:
        raise DataError("no test sequences to evaluate")
    pooled = eval_lstm(model, tc, test)
    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    tasks = ["pushing", "pulling"] if args.per_task else ["all"]
    rows = []
    for task in tasks:
        if task not in pooled:
            continue
        y, y_hat = pooled[task]
        rep = metrics.evaluate(y, y_hat, task=task)
        for j, comp in enumerate(metrics.COMPONENT_NAMES):
            rows.append([comp, fmt(rep.rmse[j]),
                         fmt(rep.rmse[j] * norm.force_scale[j]),
                         fmt(rep.pcc[j]), task])
    path = reports_dir / f"metrics_{tc.case}_{tc.loss}.csv"
    atomic_write_rows(path, metrics.METRIC_HEADER, rows)
    print(f"eval: wrote {path}")
    return 0


def cmd_robustness(args) -> int:
    out = Path(args.out)
    model, tc = load_lstm(Path(args.model))
    sigmas = sorted(float(s) for s in args.sigmas.split(","))
    if any(s < 0 for s in sigmas):
        raise DataError("sigmas must be >= 0")
    needs_video = tc.case in (CASE_II, CASE_III)
    arrays = assemble_sequences(out, with_features=needs_video)
    _, test = split_arrays(out, arrays)
    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    pcc_series: dict[str, list] = {c: [] for c in metrics.COMPONENT_NAMES}
    for k, sigma in enumerate(sigmas):
        pooled = eval_lstm(model, tc, test, sigma=sigma, noise_seed=args.seed + k)
        y, y_hat = pooled["all"]
        rep = metrics.evaluate(y, y_hat)
        for j, comp in enumerate(metrics.COMPONENT_NAMES):
            rows.append([fmt(sigma), comp, fmt(rep.pcc[j]), fmt(rep.rmse[j])])
            if np.isfinite(rep.pcc[j]):
                pcc_series[comp].append((sigma, rep.pcc[j]))
    name = f"robustness_{tc.case}_{tc.loss}"
    atomic_write_rows(reports_dir / f"{name}.csv",
                      ["sigma", "component", "pcc", "rmse"], rows)
    svg.line_chart(reports_dir / f"{name}.svg",
                   {c: s for c, s in pcc_series.items() if s},
                   f"tool-noise sweep (case {tc.case}-{tc.loss})",
                   "noise sigma (normalized units)", "PCC")
    print(f"eval: wrote reports/{name}.csv and .svg")
    return 0


def _rt_sequence_metrics(out: Path, sid: str, cnn: FeatureCnn,
                         model: LstmStack, tc: TrainConfig, causal_stf: bool):
    root = out / "dataset"
    norm = load_norm(out)
    prep_cfg = json.loads((out / "prep" / "prep.json").read_text())
    seq = data_mod.read_sequence(root / sid)
    meta = json.loads((root / sid / "meta.json").read_text())
    frames = video.load_frames(root / sid, seq.n_frames)
    h, w = frames.shape[1:3]
    box_hw = (max(2, int(round(h * 0.5))), max(2, int(round(w * 0.75))))
    centers = None
    if prep_cfg.get("roi_from_tool"):
        centers = tool_roi_centers(seq, float(meta.get("extent", 0.1)), (h, w))
    tool_m, force_m = smooth_signals(seq)
    tool_m = norm.normalize_tool_matrix(tool_m)
    force_m = norm.normalize_force_matrix(force_m)
    results = {}
    for mode, causal_mean in (("O", False), ("RT", True)):
        stacks, grid, _, _ = video.preprocess_sequence(
            frames, delta=prep_cfg["delta"], out_size=prep_cfg["out_size"],
            box_hw=box_hw, causal_mean=causal_mean,
            causal_stf=causal_stf and causal_mean, roi_centers=centers)
        feats = np.concatenate([cnn.features(stacks[lo:lo + 256])
                                for lo in range(0, len(stacks), 256)])
        arr = SequenceArrays(id=sid, task=seq.task, tool=tool_m[grid],
                             force=force_m[grid], indices=np.asarray(grid),
                             features=feats)
        est = training.predict_sequence(model, arr.case_input(tc.case), tc.time_steps)
        truth = arr.force[tc.time_steps - 1:]
        rep = metrics.evaluate(truth, est, task=seq.task)
        results[mode] = rep
    return results


def cmd_rt_compare(args) -> int:
    out = Path(args.out)
    model, tc = load_lstm(Path(args.model))
    cnn, _ = load_cnn(Path(args.cnn) if args.cnn else out / "models" / "cnn.vbfp")
    test_ids = read_test_ids(out)
    entries = data_mod.read_manifest(out / "dataset")
    if args.ids:
        chosen = args.ids.split(",")
    else:
        chosen = []
        for task in ("pushing", "pulling"):
            cands = [e["id"] for e in entries if e["task"] == task and e["id"] in test_ids]
            if not cands:
                raise DataError(f"no held-out {task} sequence for rt-compare")
            chosen.append(cands[0])
    missing = [c for c in chosen if c not in {e["id"] for e in entries}]
    if missing:
        raise DataError(f"unknown sequence ids {missing}")

    rows = []
    for sid in chosen:
        res = _rt_sequence_metrics(out, sid, cnn, model, tc, args.causal_stf)
        for metric_name, attr in (("PCC", "pcc"), ("RMSE", "rmse")):
            o_vals = getattr(res["O"], attr)
            rt_vals = getattr(res["RT"], attr)
            for mode, vals in (("O", o_vals), ("RT", rt_vals)):
                rows.append([sid, res["O"].task, metric_name, mode,
                             *[fmt(v) for v in vals]])
            ratio = [fmt(rt / o * 100.0) if np.isfinite(rt) and np.isfinite(o) and o != 0
                     else "undefined" for o, rt in zip(o_vals, rt_vals)]
            rows.append([sid, res["O"].task, metric_name, "RelError(RT/O)x100", *ratio])
            diff = [fmt((rt - o) / o * 100.0) if np.isfinite(rt) and np.isfinite(o) and o != 0
                    else "undefined" for o, rt in zip(o_vals, rt_vals)]
            rows.append([sid, res["O"].task, metric_name, "RelDiff%", *diff])
    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    path = reports_dir / "rt_compare.csv"
    atomic_write_rows(path, ["sequence", "task", "metric", "mode",
                             *metrics.COMPONENT_NAMES], rows)
    print(f"rt-compare: wrote {path}")
    return 0


def load_fullrate(out: Path):
    """Smoothed, normalized full-rate signals per sequence (no prep files
    needed): id -> (task, tool (L,4), force (L,6))."""
    norm = load_norm(out)
    entries = data_mod.read_manifest(out / "dataset")
    result = {}
    for entry in entries:
        seq = data_mod.read_sequence(out / "dataset" / entry["id"])
        tool, force = smooth_signals(seq)
        result[entry["id"]] = (entry["task"],
                               norm.normalize_tool_matrix(tool),
                               norm.normalize_force_matrix(force))
    return result


def cmd_armax(args) -> int:
    out = Path(args.out)
    norm = load_norm(out)
    signals = load_fullrate(out)
    test_ids = read_test_ids(out)
    train = [v for k, v in signals.items() if k not in test_ids]
    test = [v for k, v in signals.items() if k in test_ids]
    if not train or not test:
        raise DataError("armax needs both train and test sequences")
    na, nb, nc, nk = (int(v) for v in args.orders.split(","))
    orders = armax_mod.ArmaxOrders(na=na, nb=nb, nc=nc, nk=nk)
    try:
        models = armax_mod.fit_armax([t[1] for t in train], [t[2] for t in train],
                                     orders)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    armax_mod.save_models(reports_dir / "armax_model.csv", models,
                          metrics.COMPONENT_NAMES)

    pooled: dict[str, list] = {}
    for task, tool, force in test:
        est = np.column_stack([armax_mod.simulate_armax(m, tool) for m in models])
        pooled.setdefault(task, []).append((force, est))
        pooled.setdefault("all", []).append((force, est))
    rows = []
    for task in ("pushing", "pulling", "all"):
        if task not in pooled:
            continue
        y = np.concatenate([p[0] for p in pooled[task]])
        y_hat = np.concatenate([p[1] for p in pooled[task]])
        rep = metrics.evaluate(y, y_hat, task=task)
        for j, comp in enumerate(metrics.COMPONENT_NAMES):
            rows.append([comp, fmt(rep.rmse[j]),
                         fmt(rep.rmse[j] * norm.force_scale[j]),
                         fmt(rep.pcc[j]), task])
    path = reports_dir / "metrics_armax.csv"
    atomic_write_rows(path, metrics.METRIC_HEADER, rows)
    print(f"armax: wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(args) -> int:
    out = Path(args.out)
    reports_dir = out / "reports"
    if not reports_dir.is_dir():
        raise DataError(f"no reports directory under {out}")
    summary_rows = []
    pcc_series: dict[str, list] = {}
    for path in sorted(reports_dir.glob("metrics_*.csv")):
        label = path.stem.replace("metrics_", "")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        by_task: dict[str, dict[str, list]] = {}
        for row in rows:
            task = row["task"]
            by_task.setdefault(task, {"pcc": [], "rmse": []})
            by_task[task]["pcc"].append(float("nan") if row["pcc"] == "undefined"
                                        else float(row["pcc"]))
            by_task[task]["rmse"].append(float(row["rmse_norm"]))
        for task, vals in by_task.items():
            for metric_name in ("pcc", "rmse"):
                arr = np.array(vals[metric_name])
                mx, mn, mean = metrics.summarize(arr)
                summary_rows.append({"case": label, "task": task,
                                     "metric": metric_name.upper(),
                                     "max": fmt(mx), "min": fmt(mn),
                                     "mean": fmt(mean),
                                     "n_undefined": int(np.sum(~np.isfinite(arr)))})
        if "all" in by_task:
            series = [(j, v) for j, v in enumerate(by_task["all"]["pcc"])
                      if np.isfinite(v)]
            if series:
                pcc_series[label] = series
    fd, tmp = tempfile.mkstemp(dir=reports_dir, prefix=".tmp_")
    with os.fdopen(fd, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=metrics.SUMMARY_HEADER)
        wr.writeheader()
        wr.writerows(summary_rows)
    os.replace(tmp, reports_dir / "summary.csv")
    if pcc_series:
        svg.line_chart(reports_dir / "pcc_by_component.svg", pcc_series,
                       "test PCC per force component", "component index", "PCC")
    print(f"report: wrote summary.csv ({len(summary_rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vbforce",
                                     description="video/tool force-estimation lab")
    parser.add_argument("--config", type=Path, default=None,
                        help="flat key=value experiment config")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("runs"))
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate the synthetic dataset")

    p = sub.add_parser("preprocess", help="frames -> space-time tensors")
    p.add_argument("--causal", action="store_true",
                   help="real-time variant: running mean + causal stacks")
    p.add_argument("--delta", type=int, default=None, help="slice spacing (frames)")

    p = sub.add_parser("train", help="optimize one stage")
    p.add_argument("--stage", choices=("cnn", "lstm"), required=True)
    p.add_argument("--case", choices=(CASE_I, CASE_II, CASE_III), default=None)
    p.add_argument("--loss", choices=("A", "B"), default=None)
    p.add_argument("--iters", type=int, default=None)

    p = sub.add_parser("extract", help="write per-sequence feature files")
    p.add_argument("--cnn", type=Path, default=None)

    p = sub.add_parser("eval", help="score a checkpoint on the test split")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--per-task", action="store_true")

    p = sub.add_parser("robustness", help="tool-noise sweep")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--sigmas", type=str, default="0,0.05,0.1,0.2")

    p = sub.add_parser("rt-compare", help="offline vs real-time preprocessing")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--cnn", type=Path, default=None)
    p.add_argument("--ids", type=str, default=None)
    p.add_argument("--causal-stf", action="store_true",
                   help="also shift the space-time slices to past-only")

    p = sub.add_parser("armax", help="fit and score the linear baseline")
    p.add_argument("--orders", type=str, default="2,2,2,1",
                   help="na,nb,nc,nk")

    sub.add_parser("report", help="summarize metric CSVs into tables/plots")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "extract": cmd_extract,
    "eval": cmd_eval,
    "robustness": cmd_robustness,
    "rt-compare": cmd_rt_compare,
    "armax": cmd_armax,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with OutputLock(args.out):
            return COMMANDS[args.command](args)
    except (DataError, FileNotFoundError, formats.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
