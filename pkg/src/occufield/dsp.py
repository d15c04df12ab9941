"""Time-frequency transforms, acoustic masks, convolution, and WAV I/O.

The STFT uses centered frames (reflection padding of n_fft/2), a periodic
Hamming window, and a one-sided spectrum. The inverse applies
least-squares overlap-add (division by the summed squared synthesis
window), which reconstructs the input exactly up to float rounding for
any hop at which the window sum stays positive.
"""

from dataclasses import dataclass
from functools import lru_cache
import struct

import numpy as np
from scipy import signal as sp_signal

from .errors import WavDecodeError


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 512
    hop: int = 128
    win_length: int = 512
    window: str = "hamming"

    def __post_init__(self):
        if not (0 < self.hop <= self.win_length <= self.n_fft):
            raise ValueError("require 0 < hop <= win_length <= n_fft")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1


@dataclass
class Spectrogram:
    """One-sided complex STFT, shape (F, W) with F = n_fft/2 + 1."""

    values: np.ndarray
    config: StftConfig

    def __post_init__(self):
        if self.values.shape[0] != self.config.n_bins:
            raise ValueError("spectrogram rows inconsistent with config")

    @property
    def magnitude(self):
        return np.abs(self.values)

    @property
    def phase(self):
        return np.angle(self.values)


@dataclass
class MaskSet:
    """Multiplicative time-frequency masks: mixture plus per-ear differences.

    The mixture mask is nonnegative; difference masks stay >= -1 so that
    (1 + diff) never flips the magnitude sign.
    """

    mixture: np.ndarray
    diff_left: np.ndarray
    diff_right: np.ndarray

    def __post_init__(self):
        if not (self.mixture.shape == self.diff_left.shape == self.diff_right.shape):
            raise ValueError("mask shapes disagree")
        if np.any(self.mixture < 0):
            raise ValueError("mixture mask must be nonnegative")
        if np.any(self.diff_left < -1) or np.any(self.diff_right < -1):
            raise ValueError("difference masks must be >= -1")


@lru_cache(maxsize=8)
def stft_window(config):
    """Synthesis/analysis window, zero-padded symmetrically to n_fft."""
    win = sp_signal.get_window(config.window, config.win_length, fftbins=True)
    if config.win_length < config.n_fft:
        pad = config.n_fft - config.win_length
        win = np.pad(win, (pad // 2, pad - pad // 2))
    return win


def frame_count(config, length):
    """Number of STFT frames produced for a signal of the given length."""
    return 1 + (length + 2 * (config.n_fft // 2) - config.n_fft) // config.hop


def stft(samples, config=StftConfig()):
    """Short-time Fourier transform of a mono signal.

    Parameters
    ----------
    samples : array of shape (n,), n >= win_length
    config : StftConfig

    Returns
    -------
    Spectrogram with values of shape (n_fft/2 + 1, frames).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError("stft expects a single channel")
    if x.size < config.win_length:
        raise ValueError(f"clip too short: {x.size} < win_length {config.win_length}")
    pad = config.n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    win = stft_window(config)
    n_frames = frame_count(config, x.size)
    starts = np.arange(n_frames) * config.hop
    frames = np.stack([xp[s : s + config.n_fft] for s in starts])
    spec = np.fft.rfft(frames * win[None, :], axis=1)
    return Spectrogram(values=spec.T.copy(), config=config)


def istft(spec, length=None):
    """Inverse STFT via least-squares overlap-add.

    ``length`` trims or zero-pads the output; the default is the maximal
    length guaranteed to be covered, (frames - 1) * hop.
    """
    config = spec.config
    values = np.asarray(spec.values)
    if values.shape[0] != config.n_bins:
        raise ValueError("spectrogram rows inconsistent with config")
    n_frames = values.shape[1]
    win = stft_window(config)
    frames = np.fft.irfft(values.T, n=config.n_fft, axis=1) * win[None, :]
    total = (n_frames - 1) * config.hop + config.n_fft
    out = np.zeros(total)
    den = np.zeros(total)
    win_sq = win * win
    for t in range(n_frames):
        s = t * config.hop
        out[s : s + config.n_fft] += frames[t]
        den[s : s + config.n_fft] += win_sq
    nz = den > 1e-11
    out[nz] /= den[nz]
    pad = config.n_fft // 2
    if length is None:
        length = (n_frames - 1) * config.hop
    result = out[pad : pad + length]
    if result.size < length:
        result = np.pad(result, (0, length - result.size))
    return result


def masked_magnitudes(src_mag, masks):
    """Mask application in the magnitude domain.

    Returns (mixture, left, right) magnitudes: mixture = src * m_mix,
    ears = mixture * (1 + diff).
    """
    src_mag = np.asarray(src_mag, dtype=float)
    if src_mag.shape != masks.mixture.shape:
        raise ValueError("magnitude/mask shapes disagree")
    mix = src_mag * masks.mixture
    return mix, mix * (1.0 + masks.diff_left), mix * (1.0 + masks.diff_right)


def apply_masks(src_mag, src_phase, masks, config=StftConfig(), length=None):
    """Synthesize binaural samples from a source spectrogram and masks.

    Masked magnitudes (see :func:`masked_magnitudes`) are recombined with
    the source phase and inverted per channel.

    Returns (left_samples, right_samples).
    """
    src_phase = np.asarray(src_phase, dtype=float)
    if np.asarray(src_mag).shape != src_phase.shape:
        raise ValueError("magnitude/phase shapes disagree")
    _, mag_left, mag_right = masked_magnitudes(src_mag, masks)
    rot = np.exp(1j * src_phase)
    left = istft(Spectrogram(values=mag_left * rot, config=config), length)
    right = istft(Spectrogram(values=mag_right * rot, config=config), length)
    return left, right


def convolve_rir(src, rir):
    """Full FFT-based linear convolution, length len(src) + len(rir) - 1."""
    src = np.asarray(src, dtype=float)
    rir = np.asarray(rir, dtype=float)
    if src.size == 0 or rir.size == 0:
        raise ValueError("convolution inputs must be nonempty")
    return sp_signal.fftconvolve(src, rir, mode="full")


def hilbert_envelope(samples):
    """Magnitude of the analytic signal (zeroed negative frequencies)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty input")
    return np.abs(sp_signal.hilbert(x))


@dataclass
class AudioClip:
    """Uniformly sampled audio, samples shaped (channels, n)."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] not in (1, 2):
            raise ValueError("only mono and stereo clips are supported")

    @property
    def channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    def rms(self):
        return np.sqrt(np.mean(self.samples**2, axis=1))


def read_wav(path):
    """Read a RIFF/WAVE file (PCM16 or IEEE float32, 1-2 channels)."""
    raw = open(path, "rb").read()
    if len(raw) < 12 or raw[0:4] != b"RIFF":
        raise WavDecodeError("missing 'RIFF' chunk")
    if raw[8:12] != b"WAVE":
        raise WavDecodeError("missing 'WAVE' form type")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        size = struct.unpack("<I", raw[pos + 4 : pos + 8])[0]
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavDecodeError(f"truncated '{cid.decode('ascii', 'replace')}' chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavDecodeError("missing 'fmt ' chunk")
    if data is None:
        raise WavDecodeError("missing 'data' chunk")
    if len(fmt) < 16:
        raise WavDecodeError("short 'fmt ' chunk")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if channels not in (1, 2):
        raise WavDecodeError(f"unsupported channel count {channels}")
    if audio_format == 1 and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(float) / 32768.0
    elif audio_format == 3 and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(float)
    else:
        raise WavDecodeError(f"unsupported encoding (format {audio_format}, {bits}-bit)")
    if x.size % channels:
        raise WavDecodeError("data chunk length not divisible by frame size")
    return AudioClip(sample_rate=sample_rate, samples=x.reshape(-1, channels).T)


def write_wav(clip, path, encoding="float32"):
    """Write an AudioClip as PCM16 or IEEE float32 WAV."""
    interleaved = clip.samples.T
    if encoding == "float32":
        payload = np.ascontiguousarray(interleaved, dtype="<f4").tobytes()
        audio_format, bits = 3, 32
    elif encoding == "pcm16":
        q = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = np.ascontiguousarray(q, dtype="<i2").tobytes()
        audio_format, bits = 1, 16
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = clip.channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", audio_format, clip.channels, clip.sample_rate,
        clip.sample_rate * block, block, bits,
    )
    chunks = [b"fmt ", struct.pack("<I", len(fmt)), fmt]
    if audio_format == 3:
        chunks += [b"fact", struct.pack("<I", 4), struct.pack("<I", clip.n_samples)]
    chunks += [b"data", struct.pack("<I", len(payload)), payload]
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body)
    return path
