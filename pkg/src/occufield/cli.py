"""Command-line surface: scene validation, field rendering, synthesis,
dataset generation, training, and evaluation.

Every command is deterministic under a fixed --seed (env SOAF_SEED is the
fallback) and writes a run manifest next to its outputs recording the
command, config, seed, and content hashes of all inputs and outputs.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import load_dataset, make_dataset, save_dataset, split_indices
from .dsp import AudioClip, MaskSet, apply_masks, read_wav, stft, write_wav
from .errors import (
    ConfigurationError,
    InvalidMetricError,
    SceneParseError,
    SceneValidationError,
    WavDecodeError,
)
from .field import FieldParams, compute_normalization, export_heatmap, rasterize_field, save_grid
from .geometry import Pose, load_scene
from .learner import TrainConfig, forward, init_model, load_checkpoint, save_checkpoint, train
from .localfield import LocalFieldConfig
from .metrics import (
    MetricReport,
    c50_distance,
    edt_distance,
    env_distance,
    lre_error,
    mag_distance,
    t60_error,
    write_report_csv,
    write_report_json,
)
from .renderer import RenderConfig, analytic_masks, synth_binaural

VALIDATION_ERRORS = (
    SceneParseError,
    SceneValidationError,
    ConfigurationError,
    WavDecodeError,
    FileNotFoundError,
    ValueError,
)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(path, command, config, seed, inputs, outputs):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("SOAF_SEED")
    return int(env) if env else 0


def _load_pose(spec_str):
    """Pose from an inline JSON object or a path to a JSON file."""
    text = spec_str
    if not spec_str.lstrip().startswith("{"):
        text = Path(spec_str).read_text()
    return Pose.from_dict(json.loads(text))


def _positive_float(value):
    f = float(value)
    if f <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return f


def _tau_list(value):
    taus = [float(v) for v in value.split(",") if v != ""]
    if not taus or any(not 0.0 <= t <= 1.0 for t in taus):
        raise argparse.ArgumentTypeError("tau values must lie in [0, 1]")
    return taus


def cmd_scene_validate(args):
    scene = load_scene(args.scene)
    params = FieldParams(grid_resolution=args.res)
    norm = compute_normalization(scene, params)
    print(f"scene: {args.scene}")
    print(f"walls: {len(scene.walls)}")
    print(f"bounds: x {scene.bounds.min_xy[0]}..{scene.bounds.max_xy[0]}  "
          f"y {scene.bounds.min_xy[1]}..{scene.bounds.max_xy[1]}  "
          f"z {scene.bounds.z_range[0]}..{scene.bounds.z_range[1]}")
    print(f"tau: {scene.tau}")
    print(f"n_max (realized on {args.res}/m grid): {norm.n_max}")
    print(f"E_max: {norm.e_max:.8g}  E_min: {norm.e_min:.8g}")
    return 0


def cmd_field_render(args):
    scene = load_scene(args.scene)
    seed = _resolve_seed(args)
    out = Path(args.out)
    taus = args.tau if args.tau is not None else [None]
    outputs = []
    for tau in taus:
        params = FieldParams(tau=tau, grid_resolution=args.res)
        grid = rasterize_field(scene, params)
        suffix = "" if len(taus) == 1 else f"_tau{tau:g}"
        pgm_path = out.with_name(out.stem + suffix + ".pgm")
        export_heatmap(grid, pgm_path)
        blob, sidecar = save_grid(grid, pgm_path.with_suffix(""))
        outputs += [pgm_path, blob, sidecar]
        if not args.no_figure:
            from .figures import save_field_figure

            label = scene.tau if tau is None else tau
            fig_path = pgm_path.with_suffix(".png")
            save_field_figure(grid, scene, fig_path, title=f"tau = {label:g}")
            outputs.append(fig_path)
    _write_manifest(
        out.with_name(out.stem + ".manifest.json"),
        "field-render",
        {"tau": args.tau, "res": args.res},
        seed,
        [args.scene],
        outputs,
    )
    return 0


def cmd_synth(args):
    scene = load_scene(args.scene)
    pose = _load_pose(args.pose)
    seed = _resolve_seed(args)
    src = read_wav(args.src)
    if src.channels != 1:
        raise ValueError("synth expects a mono source WAV")
    lf_cfg = LocalFieldConfig(G=args.sphere_points, H=args.ray_samples)
    field_params = FieldParams()
    render_cfg = RenderConfig(pan_strength=args.pan_strength, seed=seed)

    if args.mode == "analytic":
        out_clip = synth_binaural(src, pose, scene, render_cfg, lf_cfg, field_params)
    else:
        if args.checkpoint is None:
            raise ValueError("model mode requires --checkpoint")
        model = load_checkpoint(Path(args.checkpoint).with_suffix(""))
        from .dataset import normalize_position
        from .localfield import ear_features, sample_local_field

        feature = sample_local_field(pose, scene, lf_cfg, field_params)
        att_l, att_r = ear_features(pose, feature)
        spec = stft(src.samples[0])
        from .dataset import Sample

        sample = Sample(
            pose=pose,
            pos_norm=normalize_position(pose.position, scene.bounds),
            feature=feature, att_left=att_l, att_right=att_r,
            target_mags=np.zeros((3,) + spec.values.shape),
            target_audio=np.zeros((2, src.n_samples)),
            rir=np.zeros((2, 1)),
        )
        if model.mode == "rir":
            from .dsp import convolve_rir

            rir_l, rir_r = forward(sample, model)
            left = convolve_rir(src.samples[0], rir_l)[: src.n_samples]
            right = convolve_rir(src.samples[0], rir_r)[: src.n_samples]
            out_clip = AudioClip(sample_rate=src.sample_rate,
                                 samples=np.stack([left, right]))
        else:
            mix, dl, dr = forward(sample, model, n_frames=spec.values.shape[1])
            masks = MaskSet(mixture=mix, diff_left=dl, diff_right=dr)
            left, right = apply_masks(spec.magnitude, spec.phase, masks,
                                      length=src.n_samples)
            out_clip = AudioClip(sample_rate=src.sample_rate,
                                 samples=np.stack([left, right]))

    write_wav(out_clip, args.out, encoding="float32")
    _write_manifest(
        Path(args.out).with_suffix(Path(args.out).suffix + ".manifest.json"),
        "synth",
        {"pose": json.loads(json.dumps(pose.to_dict())), "mode": args.mode,
         "checkpoint": args.checkpoint, "pan_strength": args.pan_strength,
         "sphere_points": args.sphere_points, "ray_samples": args.ray_samples},
        seed,
        [args.scene, args.src] + ([args.checkpoint] if args.checkpoint else []),
        [args.out],
    )
    return 0


def cmd_make_dataset(args):
    scene = load_scene(args.scene)
    poses = [Pose.from_dict(d) for d in json.loads(Path(args.poses).read_text())]
    if not poses:
        raise ValueError("empty pose list")
    src = read_wav(args.src)
    seed = _resolve_seed(args)
    lf_cfg = LocalFieldConfig(G=args.sphere_points, H=args.ray_samples)
    render_cfg = RenderConfig(rir_t60=args.rir_t60, rir_length=args.rir_length,
                              seed=seed)
    ds = make_dataset(scene, poses, src, lf_cfg=lf_cfg,
                      render_cfg=render_cfg, seed=seed)
    out_dir = save_dataset(ds, args.out)
    files = sorted(p for p in out_dir.iterdir() if p.name != "run_manifest.json")
    _write_manifest(out_dir / "run_manifest.json", "make-dataset",
                    {"rir_t60": args.rir_t60, "rir_length": args.rir_length,
                     "sphere_points": args.sphere_points,
                     "ray_samples": args.ray_samples},
                    seed, [args.scene, args.poses, args.src], files)
    return 0


def cmd_train(args):
    ds = load_dataset(args.dataset)
    seed = _resolve_seed(args)
    train_idx, _ = split_indices(len(ds), args.test_fraction, args.split_seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      lr_start=args.lr_start, lr_end=args.lr_end)
    n_bins = ds.src_mag.shape[0]
    model = init_model(
        feature_dim=ds.lf_cfg.G, n_bins=n_bins, enc_dim=args.enc_dim,
        hidden=tuple(args.hidden), mode=args.mode,
        rir_length=ds.render_cfg.rir_length if args.mode == "rir" else 0,
        seed=seed,
    )
    trace = train(ds, model, cfg, indices=train_idx,
                  zero_features=args.zero_features)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ck_blob, ck_meta = save_checkpoint(model, out_dir / "checkpoint")
    loss_csv = out_dir / "loss.csv"
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "mean_loss"])
        writer.writerows(trace)
    outputs = [ck_blob, ck_meta, loss_csv]
    if not args.no_figure:
        from .figures import save_loss_figure

        outputs.append(save_loss_figure(trace, out_dir / "loss.png"))
    _write_manifest(out_dir / "run_manifest.json", "train",
                    {"mode": args.mode, "epochs": args.epochs, "batch": args.batch,
                     "lr_start": args.lr_start, "lr_end": args.lr_end,
                     "split_seed": args.split_seed,
                     "test_fraction": args.test_fraction,
                     "zero_features": args.zero_features,
                     "enc_dim": args.enc_dim, "hidden": list(args.hidden)},
                    seed, [str(Path(args.dataset) / "manifest.json")], outputs)
    print(f"trained {args.epochs} epochs; final lr {trace[-1][1]:.3g}; "
          f"final mean loss {trace[-1][2]:.6g}")
    return 0


def cmd_eval(args):
    ds = load_dataset(args.dataset)
    model = load_checkpoint(Path(args.checkpoint).with_suffix(""))
    _, test_idx = split_indices(len(ds), args.test_fraction, args.split_seed)
    seed = _resolve_seed(args)
    reports = {}
    for i in test_idx:
        sample = ds.samples[i]
        clip_id = f"clip_{i:04d}"
        if args.zero_features:
            sample = replace_features_with_zeros(sample)
        if model.mode == "mask":
            mix, dl, dr = forward(sample, model)
            pred_m = ds.src_mag * mix
            pred_l = pred_m * (1.0 + dl)
            pred_r = pred_m * (1.0 + dr)
            masks = MaskSet(mixture=mix, diff_left=dl, diff_right=dr)
            left, right = apply_masks(ds.src_mag, ds.src_phase, masks,
                                      ds.stft_cfg, length=ds.source.size)
            pred_audio = np.stack([left, right])
            mag_mix = mag_distance(pred_m, sample.target_mags[0])
            mag_l = mag_distance(pred_l, sample.target_mags[1])
            mag_r = mag_distance(pred_r, sample.target_mags[2])
            rep = MetricReport(
                mag=mag_mix + mag_l + mag_r,
                mag_mixture=mag_mix, mag_left=mag_l, mag_right=mag_r,
                env=env_distance(pred_audio, sample.target_audio),
            )
            try:
                rep.lre_db = lre_error(pred_audio, sample.target_audio)
            except InvalidMetricError as exc:
                rep.invalid = str(exc)
        else:
            rir_l, rir_r = forward(sample, model)
            pred_mags = np.stack([np.abs(stft(ch, ds.stft_cfg).values)
                                  for ch in (rir_l, rir_r)])
            gt_mags = np.stack([np.abs(stft(ch, ds.stft_cfg).values)
                                for ch in sample.rir])
            rep = MetricReport(mag=mag_distance(pred_mags, gt_mags))
            try:
                rep.t60_pct = np.mean([t60_error(p, g, ds.sample_rate)
                                       for p, g in zip((rir_l, rir_r), sample.rir)])
                rep.c50_db = np.mean([c50_distance(p, g, ds.sample_rate)
                                      for p, g in zip((rir_l, rir_r), sample.rir)])
                rep.edt_sec = np.mean([edt_distance(p, g, ds.sample_rate)
                                       for p, g in zip((rir_l, rir_r), sample.rir)])
            except InvalidMetricError as exc:
                rep.invalid = str(exc)
        reports[clip_id] = rep

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "metrics.json"
    csv_path = out_dir / "metrics.csv"
    write_report_json(reports, json_path)
    write_report_csv(reports, csv_path)
    outputs = [json_path, csv_path]
    if not args.no_figure:
        from .figures import save_metrics_figure

        outputs.append(save_metrics_figure(reports, out_dir / "metrics.png"))
    _write_manifest(out_dir / "run_manifest.json", "eval",
                    {"checkpoint": args.checkpoint,
                     "split_seed": args.split_seed,
                     "test_fraction": args.test_fraction,
                     "zero_features": args.zero_features},
                    seed, [str(Path(args.dataset) / "manifest.json")], outputs)
    from .metrics import aggregate_reports

    agg = aggregate_reports(reports)
    for key in sorted(agg):
        print(f"{key}: {agg[key]}")
    return 0


def replace_features_with_zeros(sample):
    from dataclasses import replace as dc_replace

    return dc_replace(sample, feature=np.zeros_like(sample.feature),
                      att_left=np.zeros_like(sample.att_left),
                      att_right=np.zeros_like(sample.att_right))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="occufield",
        description="Occlusion-aware acoustic field toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene-validate", help="validate a scene file and report its field endpoints")
    p.add_argument("scene")
    p.add_argument("--res", type=_positive_float, default=4.0, help="grid cells per meter")
    p.set_defaults(func=cmd_scene_validate)

    p = sub.add_parser("field-render", help="rasterize the prior to PGM heatmaps and a grid dump")
    p.add_argument("scene")
    p.add_argument("out", help="output PGM path (stem is reused for sweep suffixes)")
    p.add_argument("--tau", type=_tau_list, default=None,
                   help="comma-separated tau sweep, e.g. 1,0.5,0.25,0")
    p.add_argument("--res", type=_positive_float, default=4.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_field_render)

    p = sub.add_parser("synth", help="synthesize binaural audio for a pose")
    p.add_argument("scene")
    p.add_argument("--pose", required=True, help="inline JSON or path to a pose file")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["analytic", "model"], default="analytic")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--pan-strength", type=float, default=0.6)
    p.add_argument("--sphere-points", type=int, default=1024)
    p.add_argument("--ray-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("make-dataset", help="render a pose list into a training dataset")
    p.add_argument("scene")
    p.add_argument("--poses", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rir-t60", type=_positive_float, default=0.3)
    p.add_argument("--rir-length", type=int, default=8192)
    p.add_argument("--sphere-points", type=int, default=1024)
    p.add_argument("--ray-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train the mask or RIR predictor on a dataset")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["mask", "rir"], default="mask")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr-start", type=float, default=5e-4)
    p.add_argument("--lr-end", type=float, default=5e-6)
    p.add_argument("--enc-dim", type=int, default=128)
    p.add_argument("--hidden", type=lambda s: [int(v) for v in s.split(",")],
                   default=[256, 256])
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--zero-features", action="store_true",
                   help="ablation: replace acoustic features with zeros")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out split")
    p.add_argument("dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--zero-features", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
