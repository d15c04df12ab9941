"""Evaluation metrics: magnitude/envelope distances, T60, C50, EDT, LRE.

T60 and EDT are estimated from the Schroeder backward-integration curve:
T60 with a least-squares line over the [-5, -35] dB window extrapolated
to -60 dB (the T30 method), EDT over the [0, -10] dB window extrapolated
by a factor of six. Clips whose decay never reaches the fit window raise
InvalidMetricError and are excluded from aggregates.
"""

import csv
from dataclasses import dataclass, fields
import json
import math
from pathlib import Path

import numpy as np

from .dsp import hilbert_envelope
from .errors import InvalidMetricError

DB_FLOOR = -120.0
C50_CLAMP_DB = 80.0
SILENCE_ENERGY = 1e-20


def mag_distance(m_prd, m_gt):
    """Sum of squared magnitude differences over all bins (and channels)."""
    m_prd = np.asarray(m_prd, dtype=float)
    m_gt = np.asarray(m_gt, dtype=float)
    if m_prd.shape != m_gt.shape:
        raise ValueError(f"shape mismatch: {m_prd.shape} vs {m_gt.shape}")
    diff = m_prd - m_gt
    return float(np.sum(diff * diff))


def env_distance(a_prd, a_gt):
    """Squared distance between Hilbert envelopes, summed over channels."""
    a_prd = np.atleast_2d(np.asarray(a_prd, dtype=float))
    a_gt = np.atleast_2d(np.asarray(a_gt, dtype=float))
    if a_prd.shape != a_gt.shape:
        raise ValueError(f"length mismatch: {a_prd.shape} vs {a_gt.shape}")
    total = 0.0
    for prd_ch, gt_ch in zip(a_prd, a_gt):
        diff = hilbert_envelope(prd_ch) - hilbert_envelope(gt_ch)
        total += float(np.sum(diff * diff))
    return total


def schroeder_decay(rir):
    """Backward-integrated energy decay in dB, floored at -120 dB."""
    rir = np.asarray(rir, dtype=float)
    energy = rir * rir
    total = energy.sum()
    if total <= 0:
        raise InvalidMetricError("all-zero impulse response")
    tail = np.cumsum(energy[::-1])[::-1] / total
    with np.errstate(divide="ignore"):
        curve = 10.0 * np.log10(tail)
    return np.maximum(curve, DB_FLOOR)


def _fit_decay_window(curve, sample_rate, top_db, bottom_db):
    """Least-squares slope (dB/s) of the decay between two dB thresholds."""
    below_top = np.nonzero(curve <= top_db)[0]
    below_bottom = np.nonzero(curve <= bottom_db)[0]
    if below_bottom.size == 0:
        raise InvalidMetricError(f"decay never reaches {bottom_db} dB")
    i0 = below_top[0] if top_db < 0 else 0
    i1 = below_bottom[0]
    if i1 <= i0:
        raise InvalidMetricError("decay window is empty")
    t = np.arange(i0, i1 + 1) / sample_rate
    seg = curve[i0 : i1 + 1]
    slope, _ = np.polyfit(t, seg, 1)
    if slope >= 0:
        raise InvalidMetricError("non-decaying impulse response")
    return slope


def t60(rir, sample_rate):
    """Reverberation time in seconds via the T30 fit of the Schroeder curve."""
    curve = schroeder_decay(rir)
    slope = _fit_decay_window(curve, sample_rate, -5.0, -35.0)
    return -60.0 / slope


def t60_error(rir_prd, rir_gt, sample_rate):
    """Percentage error between predicted and ground-truth T60."""
    ref = t60(rir_gt, sample_rate)
    return abs(t60(rir_prd, sample_rate) - ref) / ref * 100.0


def c50(rir, sample_rate):
    """Clarity index: dB ratio of energy before vs after 50 ms."""
    rir = np.asarray(rir, dtype=float)
    n50 = int(round(0.05 * sample_rate))
    if rir.size <= n50:
        raise InvalidMetricError("impulse response shorter than 50 ms")
    energy = rir * rir
    early = energy[:n50].sum()
    late = energy[n50:].sum()
    if late <= 0:
        return C50_CLAMP_DB
    if early <= 0:
        return -C50_CLAMP_DB
    return float(np.clip(10.0 * math.log10(early / late), -C50_CLAMP_DB, C50_CLAMP_DB))


def c50_distance(rir_prd, rir_gt, sample_rate):
    return abs(c50(rir_prd, sample_rate) - c50(rir_gt, sample_rate))


def edt(rir, sample_rate):
    """Early decay time: [0, -10] dB fit extrapolated to 60 dB of decay."""
    curve = schroeder_decay(rir)
    slope = _fit_decay_window(curve, sample_rate, 0.0, -10.0)
    return -60.0 / slope


def edt_distance(rir_prd, rir_gt, sample_rate):
    return abs(edt(rir_prd, sample_rate) - edt(rir_gt, sample_rate))


def lre_error(prd, gt):
    """Absolute difference of left/right energy ratios in dB."""
    prd = np.asarray(prd, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if prd.shape != gt.shape or prd.ndim != 2 or prd.shape[0] != 2:
        raise ValueError("lre_error expects two stereo arrays of equal shape")
    energies = [float(np.sum(ch * ch)) for ch in (*prd, *gt)]
    if min(energies) < SILENCE_ENERGY:
        raise InvalidMetricError("silent channel")
    ratio_prd = 10.0 * math.log10(energies[0] / energies[1])
    ratio_gt = 10.0 * math.log10(energies[2] / energies[3])
    return abs(ratio_prd - ratio_gt)


@dataclass
class MetricReport:
    """Per-clip metric values; fields are None when not applicable."""

    mag: float | None = None
    mag_mixture: float | None = None
    mag_left: float | None = None
    mag_right: float | None = None
    env: float | None = None
    t60_pct: float | None = None
    c50_db: float | None = None
    edt_sec: float | None = None
    lre_db: float | None = None
    invalid: str | None = None

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}


METRIC_COLUMNS = ["mag", "mag_mixture", "mag_left", "mag_right",
                  "env", "t60_pct", "c50_db", "edt_sec", "lre_db"]


def aggregate_reports(reports):
    """Unweighted per-metric means over clips, skipping missing values."""
    means = {}
    for col in METRIC_COLUMNS:
        vals = [getattr(r, col) for r in reports.values() if getattr(r, col) is not None]
        if vals:
            means[col] = float(np.mean(vals))
    means["n_clips"] = len(reports)
    return means


def write_report_json(reports, path):
    payload = {cid: rep.to_dict() for cid, rep in sorted(reports.items())}
    payload["aggregate"] = aggregate_reports(reports)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_report_csv(reports, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id"] + METRIC_COLUMNS)
        for cid, rep in sorted(reports.items()):
            writer.writerow([cid] + [getattr(rep, col) for col in METRIC_COLUMNS])
        means = aggregate_reports(reports)
        writer.writerow(["mean"] + [means.get(col) for col in METRIC_COLUMNS])
    return path
