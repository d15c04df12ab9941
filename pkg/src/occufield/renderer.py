"""Deterministic analytic binaural synthesis and a toy RIR ground truth.

The analytic path collapses the direction-resolved priors to per-clip
scalars: one mixture gain from the receiver's normalized prior and one
left/right pan from the attended local features. The toy RIR generator
produces a delayed direct-path impulse plus a seeded exponential noise
tail and serves as desk-scale ground truth for training and metrics.
"""

from dataclasses import dataclass
import math

import numpy as np

from .dsp import AudioClip, MaskSet, StftConfig, apply_masks, stft
from .field import FieldParams, prior_normalized
from .localfield import LocalFieldConfig, ear_directions, ear_features, sample_local_field

PAN_EPS = 1e-12


@dataclass(frozen=True)
class RenderConfig:
    base_gain: float = 1.0
    pan_strength: float = 0.6
    rir_t60: float = 0.3
    rir_length: int = 8192
    speed_of_sound: float = 343.0
    tail_level: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if min(self.base_gain, self.rir_t60, self.rir_length, self.speed_of_sound) <= 0:
            raise ValueError("RenderConfig values must be positive")
        if not 0.0 <= self.pan_strength <= 1.0:
            raise ValueError("pan_strength must lie in [0, 1]")


def feature_pan(pose, scene, lf_cfg=LocalFieldConfig(), field_params=FieldParams()):
    """Left/right balance in [-1, 1] from the attended local features."""
    feature = sample_local_field(pose, scene, lf_cfg, field_params)
    att_left, att_right = ear_features(pose, feature)
    e_left = np.maximum(att_left, 0.0).sum()
    e_right = np.maximum(att_right, 0.0).sum()
    return (e_left - e_right) / (e_left + e_right + PAN_EPS)


def geometric_pan(pose, scene):
    """Cosine between the left-ear direction and the source bearing.

    Exactly zero for a source straight ahead; used by the toy RIR ground
    truth where exact left/right symmetry matters.
    """
    d_left, _ = ear_directions(pose)
    to_src = scene.source.as_array() - pose.position.as_array()
    dist = np.linalg.norm(to_src)
    if dist < 1e-9:
        return 0.0
    return float(np.clip(d_left @ (to_src / dist), -1.0, 1.0))


def analytic_masks(pose, scene, lf_cfg=LocalFieldConfig(), field_params=FieldParams(),
                   shape=(257, 1), render_cfg=RenderConfig()):
    """Frequency-flat mask set driven by the priors at the receiver.

    The mixture mask is base_gain times the normalized prior; the
    difference masks encode the attended-feature pan with opposite signs.
    """
    level = render_cfg.base_gain * prior_normalized(pose.position, scene, field_params)
    pan = feature_pan(pose, scene, lf_cfg, field_params)
    mixture = np.full(shape, level)
    diff = render_cfg.pan_strength * pan
    return MaskSet(
        mixture=mixture,
        diff_left=np.full(shape, diff),
        diff_right=np.full(shape, -diff),
    )


def synth_binaural(src, pose, scene, render_cfg=RenderConfig(),
                   lf_cfg=LocalFieldConfig(), field_params=FieldParams(),
                   stft_cfg=StftConfig()):
    """Analytic binaural synthesis: STFT, priors-driven masks, inverse STFT."""
    if src.channels != 1:
        raise ValueError("synth_binaural expects a mono source clip")
    spec = stft(src.samples[0], stft_cfg)
    masks = analytic_masks(pose, scene, lf_cfg, field_params,
                           shape=spec.values.shape, render_cfg=render_cfg)
    left, right = apply_masks(spec.magnitude, spec.phase, masks, stft_cfg,
                              length=src.n_samples)
    return AudioClip(sample_rate=src.sample_rate, samples=np.stack([left, right]))


def toy_rir(pose, scene, render_cfg=RenderConfig(), field_params=FieldParams(),
            sample_rate=22050):
    """Binaural toy impulse response: direct path plus exponential noise tail.

    Both channels share one seeded tail shape and differ only by the
    geometric pan amplitudes, so a symmetric pose yields identical
    channels. The tail decay rate is 3*ln(10)/t60, which makes the
    Schroeder T60 of the tail equal to the configured value.

    Returns (rir_left, rir_right) as float arrays of rir_length samples.
    """
    dist = math.dist(
        (pose.position.x, pose.position.y, pose.position.z),
        (scene.source.x, scene.source.y, scene.source.z),
    )
    delay = round(dist / render_cfg.speed_of_sound * sample_rate)
    if delay >= render_cfg.rir_length:
        raise ValueError(
            f"rir_length {render_cfg.rir_length} too short for direct-path delay {delay}"
        )
    shape = np.zeros(render_cfg.rir_length)
    shape[delay] = 1.0
    n_tail = render_cfg.rir_length - delay - 1
    if n_tail > 0:
        t = np.arange(1, n_tail + 1) / sample_rate
        rate = 3.0 * math.log(10.0) / render_cfg.rir_t60
        noise = np.random.default_rng(render_cfg.seed).standard_normal(n_tail)
        shape[delay + 1 :] = render_cfg.tail_level * noise * np.exp(-rate * t)

    level = prior_normalized(pose.position, scene, field_params)
    pan = geometric_pan(pose, scene)
    amp_left = level * (1.0 + render_cfg.pan_strength * pan) / 2.0
    amp_right = level * (1.0 - render_cfg.pan_strength * pan) / 2.0
    return amp_left * shape, amp_right * shape
