"""Mask-predicting network with hand-rolled backpropagation and Adam.

Architecture (mask mode):

    feature (G) --enc+relu--> h_ac (E) --+
    posenc(position) (P) ----------------+--> trunk MLP (two relu layers) --> f_agg
    f_agg --head, softplus--> mixture bins (F)
    [f_agg, relu(ch_enc(attended_left ))] --head, tanh--> left diff bins (F)
    [f_agg, relu(ch_enc(attended_right))] --same head --> right diff bins (F)

Per-bin outputs are broadcast across time frames, so the masks are
pose-conditioned and time-independent. In RIR mode the mask heads are
replaced by one linear head emitting time-domain impulse-response
samples per channel, supervised by the squared distance between STFT
magnitudes of predicted and target responses.

The fusion input optionally accepts an extra per-sample feature vector
(``extra``), reserved for a visual branch; it defaults to absent.
"""

from dataclasses import dataclass
import json
import math
from pathlib import Path

import numpy as np

from . import binio
from .dsp import StftConfig, frame_count, stft, stft_window


@dataclass(frozen=True)
class PosEncConfig:
    num_frequencies: int = 10
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 1:
            raise ValueError("num_frequencies must be >= 1")

    @property
    def out_dim(self):
        return 3 * (2 * self.num_frequencies + int(self.include_input))


@dataclass(frozen=True)
class TrainConfig:
    lr_start: float = 5e-4
    lr_end: float = 5e-6
    epochs: int = 200
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.lr_end > self.lr_start:
            raise ValueError("lr_end must not exceed lr_start")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def lr_at(self, epoch_index):
        """Exponential decay hitting lr_start at epoch 0 and lr_end at the last."""
        if self.epochs == 1:
            return self.lr_start
        frac = epoch_index / (self.epochs - 1)
        return self.lr_start * (self.lr_end / self.lr_start) ** frac


def positional_encoding(p, cfg=PosEncConfig()):
    """Standard sin/cos frequency ladder of a [-1, 1]-normalized position.

    Accepts (..., 3); returns (..., 3 * (2L + include_input)).
    """
    p = np.asarray(p, dtype=float)
    parts = [p] if cfg.include_input else []
    for k in range(cfg.num_frequencies):
        arg = (2.0**k) * np.pi * p
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    return np.concatenate(parts, axis=-1)


class MlpModel:
    """Parameter container; all computation lives in module functions."""

    PARAM_ORDER = ["enc_w", "enc_b", "ch_w", "ch_b", "w1", "b1", "w2", "b2",
                   "wm", "bm", "wd", "bd"]

    def __init__(self, params, feature_dim, enc_dim, hidden, n_bins, posenc,
                 mode="mask", rir_length=0, extra_dim=0, seed=0):
        self.params = params
        self.feature_dim = feature_dim
        self.enc_dim = enc_dim
        self.hidden = tuple(hidden)
        self.n_bins = n_bins
        self.posenc = posenc
        self.mode = mode
        self.rir_length = rir_length
        self.extra_dim = extra_dim
        self.seed = seed

    def head_names(self):
        if self.mode == "mask":
            return ["wm", "bm", "wd", "bd"]
        return ["wr", "br"]

    def param_names(self):
        return ["enc_w", "enc_b", "ch_w", "ch_b", "w1", "b1", "w2", "b2"] + self.head_names()


def init_model(feature_dim, n_bins, enc_dim=128, hidden=(256, 256),
               posenc=PosEncConfig(), mode="mask", rir_length=0,
               extra_dim=0, seed=0, zero=False):
    """He-initialized model; ``zero=True`` gives an all-zero parameter set."""
    if mode not in ("mask", "rir"):
        raise ValueError("mode must be 'mask' or 'rir'")
    if mode == "rir" and rir_length <= 0:
        raise ValueError("rir mode requires rir_length > 0")
    rng = np.random.default_rng(seed)
    h1, h2 = hidden
    trunk_in = enc_dim + posenc.out_dim + extra_dim

    def dense(n_in, n_out):
        if zero:
            return np.zeros((n_in, n_out)), np.zeros(n_out)
        w = rng.standard_normal((n_in, n_out)) * math.sqrt(2.0 / n_in)
        return w, np.zeros(n_out)

    params = {}
    params["enc_w"], params["enc_b"] = dense(feature_dim, enc_dim)
    params["ch_w"], params["ch_b"] = dense(feature_dim, enc_dim)
    params["w1"], params["b1"] = dense(trunk_in, h1)
    params["w2"], params["b2"] = dense(h1, h2)
    if mode == "mask":
        params["wm"], params["bm"] = dense(h2, n_bins)
        params["wd"], params["bd"] = dense(h2 + enc_dim, n_bins)
    else:
        params["wr"], params["br"] = dense(h2 + enc_dim, rir_length)
    return MlpModel(params, feature_dim, enc_dim, hidden, n_bins, posenc,
                    mode=mode, rir_length=rir_length, extra_dim=extra_dim, seed=seed)


def _relu(x):
    return np.maximum(x, 0.0)


def _softplus(x):
    return np.logaddexp(0.0, x)


def encode_acoustic(feature, model):
    """Acoustic encoder: one linear + ReLU layer reducing G to enc_dim."""
    feature = np.asarray(feature, dtype=float)
    if feature.shape[-1] != model.feature_dim:
        raise ValueError(f"feature length {feature.shape[-1]} != {model.feature_dim}")
    return _relu(feature @ model.params["enc_w"] + model.params["enc_b"])


def forward_batch(model, pos_norm, feature, att_left, att_right, extra=None):
    """Batched forward pass; returns outputs plus the cache for backward."""
    p = model.params
    pe = positional_encoding(pos_norm, model.posenc)
    ze = feature @ p["enc_w"] + p["enc_b"]
    h_ac = _relu(ze)
    pieces = [h_ac, pe]
    if model.extra_dim:
        if extra is None:
            raise ValueError("model expects an extra feature vector")
        pieces.append(extra)
    x_in = np.concatenate(pieces, axis=1)
    z1 = x_in @ p["w1"] + p["b1"]
    h1 = _relu(z1)
    z2 = h1 @ p["w2"] + p["b2"]
    f_agg = _relu(z2)

    zc_l = att_left @ p["ch_w"] + p["ch_b"]
    zc_r = att_right @ p["ch_w"] + p["ch_b"]
    h_l = _relu(zc_l)
    h_r = _relu(zc_r)
    in_l = np.concatenate([f_agg, h_l], axis=1)
    in_r = np.concatenate([f_agg, h_r], axis=1)

    cache = {
        "feature": feature, "att_left": att_left, "att_right": att_right,
        "ze": ze, "x_in": x_in, "z1": z1, "h1": h1, "z2": z2, "f_agg": f_agg,
        "zc_l": zc_l, "zc_r": zc_r, "in_l": in_l, "in_r": in_r,
    }
    if model.mode == "mask":
        zm = f_agg @ p["wm"] + p["bm"]
        zl = in_l @ p["wd"] + p["bd"]
        zr = in_r @ p["wd"] + p["bd"]
        out = {
            "mix_bins": _softplus(zm),
            "left_bins": np.tanh(zl),
            "right_bins": np.tanh(zr),
        }
        cache.update({"zm": zm, "left_bins": out["left_bins"],
                      "right_bins": out["right_bins"]})
    else:
        out = {
            "rir_left": in_l @ p["wr"] + p["br"],
            "rir_right": in_r @ p["wr"] + p["br"],
        }
    return out, cache


def forward(sample, model, n_frames=None, extra=None):
    """Single-sample forward pass.

    Mask mode returns (mix, diff_left, diff_right) arrays broadcast to
    (F, n_frames); RIR mode returns (rir_left, rir_right).
    """
    out, _ = forward_batch(
        model,
        sample.pos_norm[None, :],
        sample.feature[None, :],
        sample.att_left[None, :],
        sample.att_right[None, :],
        extra=None if extra is None else extra[None, :],
    )
    if model.mode == "rir":
        return out["rir_left"][0], out["rir_right"][0]
    if n_frames is None:
        n_frames = sample.target_mags.shape[-1]
    ones = np.ones((1, n_frames))
    return (
        out["mix_bins"][0][:, None] * ones,
        out["left_bins"][0][:, None] * ones,
        out["right_bins"][0][:, None] * ones,
    )


def magnitude_loss(pred_mags, target_mags):
    """Sum of squared differences over mixture, left, and right magnitudes."""
    total = 0.0
    if len(pred_mags) != len(target_mags):
        raise ValueError("prediction/target count mismatch")
    for prd, tgt in zip(pred_mags, target_mags):
        prd = np.asarray(prd, dtype=float)
        tgt = np.asarray(tgt, dtype=float)
        if prd.shape != tgt.shape:
            raise ValueError(f"shape mismatch: {prd.shape} vs {tgt.shape}")
        diff = prd - tgt
        total += float(np.sum(diff * diff))
    return total


def _mask_loss_and_output_grads(out, src_mag, target_mags):
    """Mean per-sample loss and gradients w.r.t. the per-bin mask outputs."""
    b = out["mix_bins"].shape[0]
    s = src_mag[None, :, :]
    mix = out["mix_bins"][:, :, None] * s
    left = mix * (1.0 + out["left_bins"][:, :, None])
    right = mix * (1.0 + out["right_bins"][:, :, None])
    res_m = mix - target_mags[:, 0]
    res_l = left - target_mags[:, 1]
    res_r = right - target_mags[:, 2]
    loss = (np.sum(res_m**2) + np.sum(res_l**2) + np.sum(res_r**2)) / b

    scale = 2.0 / b
    d_mix_from_lr = res_l * (1.0 + out["left_bins"][:, :, None]) \
        + res_r * (1.0 + out["right_bins"][:, :, None])
    d_mix_bins = (scale * (res_m + d_mix_from_lr) * s).sum(axis=2)
    d_left_bins = (scale * res_l * mix).sum(axis=2)
    d_right_bins = (scale * res_r * mix).sum(axis=2)
    return loss, {"mix_bins": d_mix_bins, "left_bins": d_left_bins,
                  "right_bins": d_right_bins}


def _stft_mag_forward(x, config):
    """Magnitude STFT with the intermediates needed for its adjoint."""
    pad = config.n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    win = stft_window(config)
    n_frames = frame_count(config, x.size)
    starts = np.arange(n_frames) * config.hop
    frames = np.stack([xp[s : s + config.n_fft] for s in starts])
    spec = np.fft.rfft(frames * win[None, :], axis=1)  # (frames, F)
    return np.abs(spec), spec, starts


def _reflect_indices(length, pad):
    idx = np.arange(-pad, length + pad)
    idx = np.abs(idx)
    over = idx > length - 1
    idx[over] = 2 * (length - 1) - idx[over]
    return idx


def _stft_mag_backward(d_mag, spec, starts, length, config):
    """Adjoint of the magnitude STFT: maps bin-magnitude grads to sample grads."""
    mag = np.abs(spec)
    phase_dir = np.where(mag > 0, spec / np.maximum(mag, 1e-300), 0.0)
    g = d_mag * phase_dir  # (frames, F) complex
    # adjoint of one-sided rfft: halve interior bins, scale by n_fft
    g_adj = g.copy()
    g_adj[:, 1:-1] *= 0.5
    frame_grads = np.fft.irfft(g_adj, n=config.n_fft, axis=1) * config.n_fft
    win = stft_window(config)
    frame_grads *= win[None, :]
    pad = config.n_fft // 2
    xp_grad = np.zeros(length + 2 * pad)
    for s, fg in zip(starts, frame_grads):
        xp_grad[s : s + config.n_fft] += fg
    x_grad = np.zeros(length)
    np.add.at(x_grad, _reflect_indices(length, pad), xp_grad)
    return x_grad


def _rir_loss_and_output_grads(out, rir_target_mags, config):
    """Mean loss over batch for RIR mode plus grads w.r.t. the head outputs."""
    b = out["rir_left"].shape[0]
    loss = 0.0
    grads = {k: np.zeros_like(out[k]) for k in ("rir_left", "rir_right")}
    for i in range(b):
        for ch, key in enumerate(("rir_left", "rir_right")):
            x = out[key][i]
            mag, spec, starts = _stft_mag_forward(x, config)
            res = mag - rir_target_mags[i, ch].T  # (frames, F)
            loss += np.sum(res * res)
            grads[key][i] = _stft_mag_backward(2.0 * res / b, spec, starts,
                                               x.size, config)
    return loss / b, grads


def backward(model, cache, out_grads):
    """Backpropagate output-space gradients to every parameter."""
    p = model.params
    grads = {}
    if model.mode == "mask":
        # softplus' = sigmoid; tanh' = 1 - tanh^2 on the cached activations
        d_zm = out_grads["mix_bins"] / (1.0 + np.exp(-cache["zm"]))
        d_zl = out_grads["left_bins"] * (1.0 - cache["left_bins"] ** 2)
        d_zr = out_grads["right_bins"] * (1.0 - cache["right_bins"] ** 2)
        grads["wm"] = cache["f_agg"].T @ d_zm
        grads["bm"] = d_zm.sum(axis=0)
        grads["wd"] = cache["in_l"].T @ d_zl + cache["in_r"].T @ d_zr
        grads["bd"] = (d_zl + d_zr).sum(axis=0)
        d_f_agg = d_zm @ p["wm"].T
        d_in_l = d_zl @ p["wd"].T
        d_in_r = d_zr @ p["wd"].T
    else:
        d_zl = out_grads["rir_left"]
        d_zr = out_grads["rir_right"]
        grads["wr"] = cache["in_l"].T @ d_zl + cache["in_r"].T @ d_zr
        grads["br"] = (d_zl + d_zr).sum(axis=0)
        d_f_agg = np.zeros_like(cache["f_agg"])
        d_in_l = d_zl @ p["wr"].T
        d_in_r = d_zr @ p["wr"].T

    h2 = cache["f_agg"].shape[1]
    d_f_agg = d_f_agg + d_in_l[:, :h2] + d_in_r[:, :h2]
    d_h_l = d_in_l[:, h2:]
    d_h_r = d_in_r[:, h2:]

    d_zc_l = d_h_l * (cache["zc_l"] > 0)
    d_zc_r = d_h_r * (cache["zc_r"] > 0)
    grads["ch_w"] = cache["att_left"].T @ d_zc_l + cache["att_right"].T @ d_zc_r
    grads["ch_b"] = (d_zc_l + d_zc_r).sum(axis=0)

    d_z2 = d_f_agg * (cache["z2"] > 0)
    grads["w2"] = cache["h1"].T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ p["w2"].T
    d_z1 = d_h1 * (cache["z1"] > 0)
    grads["w1"] = cache["x_in"].T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)
    d_x_in = d_z1 @ p["w1"].T
    d_h_ac = d_x_in[:, : model.enc_dim]
    d_ze = d_h_ac * (cache["ze"] > 0)
    grads["enc_w"] = cache["feature"].T @ d_ze
    grads["enc_b"] = d_ze.sum(axis=0)
    return grads


def batch_loss_and_grads(model, pos, feat, att_l, att_r, src_mag=None,
                         target_mags=None, rir_target_mags=None, stft_cfg=None):
    """Loss plus parameter gradients for one minibatch."""
    out, cache = forward_batch(model, pos, feat, att_l, att_r)
    if model.mode == "mask":
        loss, out_grads = _mask_loss_and_output_grads(out, src_mag, target_mags)
    else:
        loss, out_grads = _rir_loss_and_output_grads(out, rir_target_mags, stft_cfg)
    return loss, backward(model, cache, out_grads)


class AdamState:
    def __init__(self, params, beta1, beta2, eps=1e-8):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1**self.t)
            v_hat = self.v[k] / (1 - b2**self.t)
            params[k] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(dataset, model, cfg=TrainConfig(), indices=None, zero_features=False):
    """Minibatch Adam training; returns the loss trace [(epoch, lr, mean_loss)].

    ``indices`` restricts training to a subset (train split);
    ``zero_features`` replaces the acoustic and attended features with
    zeros (the feature-ablation arm).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    pos, feat, att_l, att_r, target_mags = dataset.stacked()
    if zero_features:
        feat = np.zeros_like(feat)
        att_l = np.zeros_like(att_l)
        att_r = np.zeros_like(att_r)
    if indices is not None:
        if len(indices) == 0:
            raise ValueError("empty training split")
        pos, feat, att_l, att_r = pos[indices], feat[indices], att_l[indices], att_r[indices]
        target_mags = target_mags[indices]
    rir_target_mags = dataset.rir_mags()[indices if indices is not None else slice(None)] \
        if model.mode == "rir" else None

    n = pos.shape[0]
    rng = np.random.default_rng(model.seed)
    adam = AdamState(model.params, cfg.beta1, cfg.beta2)
    trace = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        losses = []
        sizes = []
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            loss, grads = batch_loss_and_grads(
                model, pos[sel], feat[sel], att_l[sel], att_r[sel],
                src_mag=dataset.src_mag,
                target_mags=target_mags[sel] if model.mode == "mask" else None,
                rir_target_mags=rir_target_mags[sel] if model.mode == "rir" else None,
                stft_cfg=dataset.stft_cfg,
            )
            if not math.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch + 1} (loss={loss})")
            adam.step(model.params, grads, lr)
            losses.append(loss)
            sizes.append(len(sel))
        mean_loss = float(np.average(losses, weights=sizes))
        trace.append((epoch + 1, lr, mean_loss))
    return trace


def save_checkpoint(model, stem):
    """Parameter blob (float32) plus a JSON manifest of shapes and configs."""
    names = model.param_names()
    flat = np.concatenate([model.params[k].ravel() for k in names])
    meta = {
        "layers": [{"name": k, "shape": list(model.params[k].shape)} for k in names],
        "feature_dim": model.feature_dim,
        "enc_dim": model.enc_dim,
        "hidden": list(model.hidden),
        "n_bins": model.n_bins,
        "posenc": {"num_frequencies": model.posenc.num_frequencies,
                   "include_input": model.posenc.include_input},
        "mode": model.mode,
        "rir_length": model.rir_length,
        "extra_dim": model.extra_dim,
        "seed": model.seed,
    }
    return binio.write_f32(stem, flat, meta=meta)


def load_checkpoint(stem):
    flat, meta = binio.read_f32(stem)
    params = {}
    offset = 0
    for layer in meta["layers"]:
        size = int(np.prod(layer["shape"])) if layer["shape"] else 1
        params[layer["name"]] = flat[offset : offset + size].reshape(layer["shape"])
        offset += size
    if offset != flat.size:
        raise ValueError("corrupt checkpoint: parameter count mismatch")
    return MlpModel(
        params,
        feature_dim=meta["feature_dim"],
        enc_dim=meta["enc_dim"],
        hidden=tuple(meta["hidden"]),
        n_bins=meta["n_bins"],
        posenc=PosEncConfig(**meta["posenc"]),
        mode=meta["mode"],
        rir_length=meta["rir_length"],
        extra_dim=meta["extra_dim"],
        seed=meta["seed"],
    )
