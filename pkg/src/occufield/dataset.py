"""Synthetic training data: poses rendered to binaural targets via toy RIRs.

Each sample pairs a receiver pose with its local acoustic features and
the STFT magnitudes of the toy-RIR-convolved binaural audio. The on-disk
format is a directory of float32 blobs plus a self-contained JSON
manifest (scene, poses, configs, seed); magnitudes are recomputed from
the stored audio at load time.
"""

from dataclasses import dataclass, replace
import json
from pathlib import Path

import numpy as np

from . import binio
from .dsp import StftConfig, convolve_rir, stft
from .field import FieldParams
from .geometry import Pose, scene_from_dict
from .localfield import LocalFieldConfig, ear_features, sample_local_field
from .renderer import RenderConfig, toy_rir

DATASET_MANIFEST = "manifest.json"


def normalize_position(position, bounds):
    """Map a position into [-1, 1]^3 relative to the scene bounds."""
    lo = np.array([bounds.min_xy[0], bounds.min_xy[1], bounds.z_range[0]])
    hi = np.array([bounds.max_xy[0], bounds.max_xy[1], bounds.z_range[1]])
    p = np.array([position.x, position.y, position.z])
    return 2.0 * (p - lo) / (hi - lo) - 1.0


@dataclass
class Sample:
    """One pose with its features and rendering targets."""

    pose: Pose
    pos_norm: np.ndarray          # (3,) position scaled to [-1, 1]^3
    feature: np.ndarray           # (G,) local acoustic feature
    att_left: np.ndarray          # (G,) attended left feature
    att_right: np.ndarray         # (G,) attended right feature
    target_mags: np.ndarray       # (3, F, W) mixture/left/right magnitudes
    target_audio: np.ndarray      # (2, N) convolved binaural audio
    rir: np.ndarray               # (2, R) toy impulse response


@dataclass
class Dataset:
    sample_rate: int
    source: np.ndarray            # (N,) mono source samples
    src_mag: np.ndarray           # (F, W)
    src_phase: np.ndarray         # (F, W)
    stft_cfg: StftConfig
    lf_cfg: LocalFieldConfig
    field_params: FieldParams
    render_cfg: RenderConfig
    scene: object
    samples: list
    seed: int

    def __len__(self):
        return len(self.samples)

    def stacked(self):
        """Training arrays: (pos, feature, att_left, att_right, target_mags)."""
        return (
            np.stack([s.pos_norm for s in self.samples]),
            np.stack([s.feature for s in self.samples]),
            np.stack([s.att_left for s in self.samples]),
            np.stack([s.att_right for s in self.samples]),
            np.stack([s.target_mags for s in self.samples]),
        )

    def rir_mags(self):
        """(n, 2, F, Wr) STFT magnitudes of the toy RIR targets."""
        return np.stack([
            np.stack([np.abs(stft(ch, self.stft_cfg).values) for ch in s.rir])
            for s in self.samples
        ])


def _target_mags(audio, stft_cfg):
    mag_l = np.abs(stft(audio[0], stft_cfg).values)
    mag_r = np.abs(stft(audio[1], stft_cfg).values)
    return np.stack([(mag_l + mag_r) / 2.0, mag_l, mag_r])


def make_dataset(scene, poses, source_clip, lf_cfg=LocalFieldConfig(),
                 field_params=FieldParams(), render_cfg=RenderConfig(),
                 stft_cfg=StftConfig(), seed=0):
    """Render every pose to a Sample; deterministic for a fixed seed.

    The toy-RIR tail of pose i uses seed + i so tails differ across
    poses while the whole dataset stays reproducible.
    """
    if not poses:
        raise ValueError("empty pose list")
    if source_clip.channels != 1:
        raise ValueError("dataset source must be mono")
    src = source_clip.samples[0]
    n = src.size
    spec = stft(src, stft_cfg)
    samples = []
    for i, pose in enumerate(poses):
        cfg_i = replace(render_cfg, seed=seed + i)
        rir_l, rir_r = toy_rir(pose, scene, cfg_i, field_params,
                               sample_rate=source_clip.sample_rate)
        audio = np.stack([
            convolve_rir(src, rir_l)[:n],
            convolve_rir(src, rir_r)[:n],
        ])
        feature = sample_local_field(pose, scene, lf_cfg, field_params)
        att_left, att_right = ear_features(pose, feature)
        samples.append(Sample(
            pose=pose,
            pos_norm=normalize_position(pose.position, scene.bounds),
            feature=feature,
            att_left=att_left,
            att_right=att_right,
            target_mags=_target_mags(audio, stft_cfg),
            target_audio=audio,
            rir=np.stack([rir_l, rir_r]),
        ))
    return Dataset(
        sample_rate=source_clip.sample_rate,
        source=src,
        src_mag=spec.magnitude,
        src_phase=spec.phase,
        stft_cfg=stft_cfg,
        lf_cfg=lf_cfg,
        field_params=field_params,
        render_cfg=render_cfg,
        scene=scene,
        samples=samples,
        seed=seed,
    )


def save_dataset(dataset, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "sample_rate": dataset.sample_rate,
        "seed": dataset.seed,
        "n_samples": len(dataset),
        "scene": dataset.scene.to_dict(),
        "poses": [s.pose.to_dict() for s in dataset.samples],
        "stft": {"n_fft": dataset.stft_cfg.n_fft, "hop": dataset.stft_cfg.hop,
                 "win_length": dataset.stft_cfg.win_length,
                 "window": dataset.stft_cfg.window},
        "local_field": {"G": dataset.lf_cfg.G, "H": dataset.lf_cfg.H,
                        "r_min": dataset.lf_cfg.r_min, "r_max": dataset.lf_cfg.r_max},
        "field": {"tau": dataset.field_params.tau,
                  "d_floor": dataset.field_params.d_floor,
                  "grid_resolution": dataset.field_params.grid_resolution},
        "render": {"base_gain": dataset.render_cfg.base_gain,
                   "pan_strength": dataset.render_cfg.pan_strength,
                   "rir_t60": dataset.render_cfg.rir_t60,
                   "rir_length": dataset.render_cfg.rir_length,
                   "speed_of_sound": dataset.render_cfg.speed_of_sound,
                   "tail_level": dataset.render_cfg.tail_level,
                   "seed": dataset.render_cfg.seed},
    }
    (out_dir / DATASET_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    binio.write_f32(out_dir / "source", dataset.source)
    binio.write_f32(out_dir / "pos", np.stack([s.pos_norm for s in dataset.samples]))
    binio.write_f32(out_dir / "features", np.stack([s.feature for s in dataset.samples]))
    binio.write_f32(out_dir / "att_left", np.stack([s.att_left for s in dataset.samples]))
    binio.write_f32(out_dir / "att_right", np.stack([s.att_right for s in dataset.samples]))
    binio.write_f32(out_dir / "target_audio", np.stack([s.target_audio for s in dataset.samples]))
    binio.write_f32(out_dir / "rirs", np.stack([s.rir for s in dataset.samples]))
    return out_dir


def load_dataset(in_dir):
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / DATASET_MANIFEST).read_text())
    scene = scene_from_dict(manifest["scene"])
    poses = [Pose.from_dict(p) for p in manifest["poses"]]
    stft_cfg = StftConfig(**manifest["stft"])
    lf_cfg = LocalFieldConfig(**manifest["local_field"])
    field_params = FieldParams(**manifest["field"])
    render_cfg = RenderConfig(**manifest["render"])

    source, _ = binio.read_f32(in_dir / "source")
    pos, _ = binio.read_f32(in_dir / "pos")
    features, _ = binio.read_f32(in_dir / "features")
    att_left, _ = binio.read_f32(in_dir / "att_left")
    att_right, _ = binio.read_f32(in_dir / "att_right")
    target_audio, _ = binio.read_f32(in_dir / "target_audio")
    rirs, _ = binio.read_f32(in_dir / "rirs")

    spec = stft(source, stft_cfg)
    samples = [
        Sample(
            pose=poses[i],
            pos_norm=pos[i],
            feature=features[i],
            att_left=att_left[i],
            att_right=att_right[i],
            target_mags=_target_mags(target_audio[i], stft_cfg),
            target_audio=target_audio[i],
            rir=rirs[i],
        )
        for i in range(manifest["n_samples"])
    ]
    return Dataset(
        sample_rate=manifest["sample_rate"],
        source=source,
        src_mag=spec.magnitude,
        src_phase=spec.phase,
        stft_cfg=stft_cfg,
        lf_cfg=lf_cfg,
        field_params=field_params,
        render_cfg=render_cfg,
        scene=scene,
        samples=samples,
        seed=manifest["seed"],
    )


def split_indices(n, test_fraction=0.1, split_seed=0):
    """Deterministic train/test split by shuffled index."""
    order = np.random.default_rng(split_seed).permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return sorted(order[n_test:].tolist()), sorted(order[:n_test].tolist())
