"""Welch cross-spectral matrices, ANPSD and H1 frequency response estimates."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .errors import InvalidArgument
from .simulator import TimeHistory

MIN_SEGMENTS = 8


@dataclass(frozen=True)
class SpectralConfig:
    segment_length: int = 4096
    overlap_fraction: float = 0.5
    window: str = "hann"
    detrend: str = "mean"

    def __post_init__(self):
        n = self.segment_length
        if int(n) != n or n < 64 or (int(n) & (int(n) - 1)):
            raise InvalidArgument(f"segment_length must be a power of two >= 64, got {n!r}")
        object.__setattr__(self, "segment_length", int(n))
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise InvalidArgument("overlap_fraction must lie in [0, 1)")
        window = str(self.window).lower()
        if window not in ("hann", "rectangular"):
            raise InvalidArgument(f"window must be 'hann' or 'rectangular', got {self.window!r}")
        object.__setattr__(self, "window", window)
        detrend = str(self.detrend).lower()
        if detrend not in ("mean", "none"):
            raise InvalidArgument(f"detrend must be 'mean' or 'none', got {self.detrend!r}")
        object.__setattr__(self, "detrend", detrend)

    @property
    def step(self):
        return max(1, int(round(self.segment_length * (1.0 - self.overlap_fraction))))

    def n_segments(self, n_samples):
        if n_samples < self.segment_length:
            return 0
        return 1 + (n_samples - self.segment_length) // self.step

    def to_dict(self):
        return {
            "segment_length": self.segment_length,
            "overlap_fraction": self.overlap_fraction,
            "window": self.window,
            "detrend": self.detrend,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in ("segment_length", "overlap_fraction", "window", "detrend") if k in data})


@dataclass
class CrossSpectralMatrix:
    """One-sided output PSD matrix; ``matrices[k]`` is the m x m line at ``frequencies_hz[k]``."""

    frequencies_hz: np.ndarray
    matrices: np.ndarray
    channel_nodes: tuple
    n_segments: int = 0

    @property
    def n_channels(self):
        return self.matrices.shape[1]

    @property
    def df(self):
        return self.frequencies_hz[1] - self.frequencies_hz[0]

    def auto_spectra(self):
        """(n_lines, m) real diagonal."""
        return np.real(np.einsum("kii->ki", self.matrices))

    def to_csv(self):
        """Frequency column, then Re/Im of every (i, j) entry in row-major order."""
        m = self.n_channels
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        head = ["frequency_hz"]
        for i in range(m):
            for j in range(m):
                a, b = self.channel_nodes[i], self.channel_nodes[j]
                head += [f"re_{a}_{b}", f"im_{a}_{b}"]
        writer.writerow(head)
        flat = self.matrices.reshape(len(self.frequencies_hz), -1)
        for f, row in zip(self.frequencies_hz, flat):
            vals = np.empty(2 * row.size)
            vals[0::2] = row.real
            vals[1::2] = row.imag
            writer.writerow([repr(float(f))] + [repr(float(v)) for v in vals])
        return buf.getvalue()


@dataclass
class Anpsd:
    frequencies_hz: np.ndarray
    values: np.ndarray
    per_channel_npsd: np.ndarray
    channel_nodes: tuple = ()

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frequency_hz", "anpsd"] + [f"npsd_{n}" for n in self.channel_nodes])
        for k, f in enumerate(self.frequencies_hz):
            writer.writerow([repr(float(f)), repr(float(self.values[k]))]
                            + [repr(float(v)) for v in self.per_channel_npsd[k]])
        return buf.getvalue()


@dataclass
class FrfSet:
    frequencies_hz: np.ndarray
    frf: np.ndarray  # (n_lines, m) complex
    coherence: np.ndarray  # (n_lines, m)
    valid: np.ndarray  # (n_lines,) bool; False where the input auto-spectrum vanishes
    channel_nodes: tuple
    input_node: int | None = None

    def mean_magnitude(self):
        """Channel-averaged |H1|; NaN on invalid lines."""
        mag = np.abs(self.frf)
        out = np.full(mag.shape[0], np.nan)
        out[self.valid] = mag[self.valid].mean(axis=1)
        return out

    def to_csv(self):
        """Frequency, channel-averaged |H1|, then |H1| and coherence per channel."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frequency_hz", "mean_abs_h1"] + [f"abs_h1_{n}" for n in self.channel_nodes]
                        + [f"coherence_{n}" for n in self.channel_nodes])
        mean = self.mean_magnitude()
        mag = np.abs(self.frf)
        for k, f in enumerate(self.frequencies_hz):
            writer.writerow([repr(float(f)), repr(float(mean[k]))] + [repr(float(v)) for v in mag[k]]
                            + [repr(float(v)) for v in self.coherence[k]])
        return buf.getvalue()


def _segments(x, cfg: SpectralConfig):
    """(n_seg, segment_length, m) windowed, detrended segments and the window."""
    n_samples = x.shape[0]
    n_seg = cfg.n_segments(n_samples)
    if n_seg < MIN_SEGMENTS:
        need = cfg.segment_length + (MIN_SEGMENTS - 1) * cfg.step
        raise InvalidArgument(
            f"record of {n_samples} samples gives {n_seg} segments; at least {need} samples "
            f"({MIN_SEGMENTS} segments of {cfg.segment_length}) are required"
        )
    starts = np.arange(n_seg) * cfg.step
    idx = starts[:, None] + np.arange(cfg.segment_length)[None, :]
    seg = x[idx]  # (n_seg, L, m)
    if cfg.detrend == "mean":
        seg = seg - seg.mean(axis=1, keepdims=True)
    if cfg.window == "hann":
        win = get_window("hann", cfg.segment_length, fftbins=True)
    else:
        win = np.ones(cfg.segment_length)
    return seg * win[None, :, None], win


def _one_sided_scale(win, fs, n_lines, segment_length):
    """Density scaling with the one-sided doubling (DC and Nyquist not doubled)."""
    scale = np.full(n_lines, 2.0 / (fs * np.sum(win**2)))
    scale[0] /= 2.0
    if segment_length % 2 == 0:
        scale[-1] /= 2.0
    return scale


def _spectra(th: TimeHistory, cfg):
    seg, win = _segments(th.samples, cfg)
    X = np.fft.rfft(seg, axis=1)  # (n_seg, n_lines, m)
    freqs = np.fft.rfftfreq(cfg.segment_length, d=1.0 / th.sample_rate)
    scale = _one_sided_scale(win, th.sample_rate, freqs.size, cfg.segment_length)
    return freqs, X, scale


def welch_cross_psd(y: TimeHistory, cfg: SpectralConfig = SpectralConfig()) -> CrossSpectralMatrix:
    """Averaged segment cross-spectra, ``G[k, i, j] = mean(X_i X_j^*) * scale``.

    Scaled so that ``sum_k G[k, i, i] * df`` is the variance of channel i.
    """
    if y.n_samples < cfg.segment_length:
        raise InvalidArgument(
            f"signal has {y.n_samples} samples; at least segment_length = {cfg.segment_length} are required"
        )
    freqs, X, scale = _spectra(y, cfg)
    n_seg = X.shape[0]
    G = np.einsum("ski,skj->kij", X, X.conj()) * (scale / n_seg)[:, None, None]
    # average of x x^H forms: enforce exact Hermitian symmetry against roundoff
    G = 0.5 * (G + np.conj(np.swapaxes(G, 1, 2)))
    idx = np.arange(G.shape[1])
    G[:, idx, idx] = G[:, idx, idx].real
    return CrossSpectralMatrix(freqs, G, y.channel_nodes, n_seg)


def auto_psd(y: TimeHistory, cfg: SpectralConfig = SpectralConfig()):
    """(frequencies, (n_lines, m) auto-spectra) without forming cross terms."""
    freqs, X, scale = _spectra(y, cfg)
    P = np.mean(np.abs(X) ** 2, axis=0) * scale[:, None]
    return freqs, P


def anpsd(G: CrossSpectralMatrix) -> Anpsd:
    """Average over channels of the unit-sum normalized auto-spectra."""
    psd = G.auto_spectra()
    totals = psd.sum(axis=0)
    for node, total in zip(G.channel_nodes, totals):
        if not total > 0:
            raise InvalidArgument(f"channel at node {node} has zero total power")
    npsd = psd / totals[None, :]
    return Anpsd(G.frequencies_hz, npsd.mean(axis=1), npsd, tuple(G.channel_nodes))


def frf_h1(x: TimeHistory, y: TimeHistory, cfg: SpectralConfig = SpectralConfig()) -> FrfSet:
    """H1 = G_xy / G_xx of every output channel against a single input channel."""
    if x.n_channels != 1:
        raise InvalidArgument(f"H1 needs a single reference input channel, got {x.n_channels}")
    if x.sample_rate != y.sample_rate or x.n_samples != y.n_samples:
        raise InvalidArgument("input and output records must share sample rate and length")
    freqs, X, scale = _spectra(x, cfg)
    _, Y, _ = _spectra(y, cfg)
    n_seg = X.shape[0]
    gxx = np.mean(np.abs(X[:, :, 0]) ** 2, axis=0) * scale
    gxy = np.mean(np.conj(X[:, :, :1]) * Y, axis=0) * scale[:, None]
    gyy = np.mean(np.abs(Y) ** 2, axis=0) * scale[:, None]
    valid = gxx > np.finfo(float).tiny * n_seg
    H = np.full(gxy.shape, np.nan + 0j)
    coh = np.full(gxy.shape, np.nan)
    H[valid] = gxy[valid] / gxx[valid, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.abs(gxy[valid]) ** 2 / (gxx[valid, None] * gyy[valid])
    coh[valid] = np.where(gyy[valid] > 0, np.clip(c, 0.0, 1.0), 0.0)
    return FrfSet(freqs, H, coh, valid, y.channel_nodes, x.channel_nodes[0])
