"""Peak-picking, frequency domain decomposition and FRF-peak identification."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import peak_prominences

from .beam_model import unit_max_abs
from .errors import BandwidthUnresolved, InvalidArgument
from .simulator import TimeHistory
from .spectral import MIN_SEGMENTS, Anpsd, CrossSpectralMatrix, FrfSet, SpectralConfig, auto_psd

NOT_RANK_ONE_RATIO = 0.5
MIN_COHERENCE = 0.9
# reference auto-PSD below this fraction of the strongest channel counts as a node line
DEGENERATE_REFERENCE = 1e-2
# lines per half-power bandwidth when re-measuring damping
DAMPING_TARGET_BINS = 4.0


@dataclass(frozen=True)
class PeakConfig:
    band: tuple = (1.0, None)  # None upper edge -> 0.9 * Nyquist
    # the first cantilever mode sits at ~5% of the strongest peak; ripple on the
    # broad upper resonances reaches ~2% within 10 Hz of their maxima
    min_prominence_rel: float = 0.01
    min_separation_hz: float = 10.0
    # a resonance falls well below its own height on both sides; Welch ripple
    # dips only by about 1/sqrt(segments) of it
    min_depth_rel: float = 0.8
    n_modes: int | None = 5

    def resolved_band(self, freqs):
        lo, hi = self.band
        nyquist = freqs[-1]
        hi = 0.9 * nyquist if hi is None else hi
        return float(lo), float(hi)

    def to_dict(self):
        return {
            "band": list(self.band),
            "min_prominence_rel": self.min_prominence_rel,
            "min_separation_hz": self.min_separation_hz,
            "min_depth_rel": self.min_depth_rel,
            "n_modes": self.n_modes,
        }

    @classmethod
    def from_dict(cls, data):
        kw = {k: data[k] for k in ("min_prominence_rel", "min_separation_hz", "min_depth_rel", "n_modes")
              if k in data}
        if "band" in data:
            kw["band"] = tuple(data["band"])
        return cls(**kw)


@dataclass(frozen=True)
class Peak:
    index: int
    frequency_hz: float
    value: float
    prominence: float


@dataclass
class SvSpectrum:
    frequencies_hz: np.ndarray
    singular_values: np.ndarray  # (n_lines, m), rows descending
    first_vectors: np.ndarray  # (n_lines, m) complex, unit norm
    flagged: np.ndarray  # (n_lines,) True where the SVD failed

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        m = self.singular_values.shape[1]
        writer.writerow(["frequency_hz"] + [f"s{i + 1}" for i in range(m)])
        for f, row in zip(self.frequencies_hz, self.singular_values):
            writer.writerow([repr(float(f))] + [repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass
class IdentifiedMode:
    frequency_hz: float
    shape: np.ndarray
    damping_ratio: float | None = None
    flags: list = field(default_factory=list)
    index: int | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"frequency_hz": float(self.frequency_hz)}
        if self.damping_ratio is not None:
            out["damping_ratio"] = float(self.damping_ratio)
        out["shape"] = [float(v) for v in self.shape]
        out["flags"] = list(self.flags)
        if self.index is not None:
            out["bin"] = int(self.index)
        if self.info:
            out["info"] = {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in self.info.items()}
        return out


@dataclass
class IdentifiedModeSet:
    method: str
    modes: list
    channel_nodes: tuple
    diagnostics: object = None

    @property
    def nodes(self):
        return tuple(self.channel_nodes)

    @property
    def frequencies_hz(self):
        return np.array([m.frequency_hz for m in self.modes])

    @property
    def shapes(self):
        if not self.modes:
            return np.zeros((len(self.channel_nodes), 0))
        return np.column_stack([m.shape for m in self.modes])

    @property
    def n_modes(self):
        return len(self.modes)

    def expand(self, nodes):
        """Shapes over ``nodes``; nodes without a channel (supports) get 0."""
        nodes = tuple(nodes)
        missing = set(self.channel_nodes) - set(nodes)
        if missing:
            raise InvalidArgument(f"channel nodes {sorted(missing)} are not in the target node set")
        pos = [self.channel_nodes.index(n) if n in self.channel_nodes else None for n in nodes]
        modes = []
        for m in self.modes:
            shape = np.array([0.0 if p is None else m.shape[p] for p in pos])
            modes.append(IdentifiedMode(m.frequency_hz, shape, m.damping_ratio, list(m.flags), m.index, dict(m.info)))
        return IdentifiedModeSet(self.method, modes, nodes, self.diagnostics)

    def to_dict(self):
        return {
            "method": self.method,
            "nodes": list(self.channel_nodes),
            "modes": [m.to_dict() for m in self.modes],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        try:
            modes = [
                IdentifiedMode(
                    float(m["frequency_hz"]),
                    np.asarray(m["shape"], dtype=float),
                    None if m.get("damping_ratio") is None else float(m["damping_ratio"]),
                    list(m.get("flags", [])),
                    m.get("bin"),
                    dict(m.get("info", {})),
                )
                for m in data["modes"]
            ]
            return cls(str(data["method"]), modes, tuple(int(n) for n in data["nodes"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed identification result: {exc!r}") from None

    def to_csv(self):
        """Rows = modes, columns = nodes (the mode-shape table layout)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode", "frequency_hz", "damping_ratio"] + [str(n) for n in self.channel_nodes])
        for k, m in enumerate(self.modes, start=1):
            zeta = "" if m.damping_ratio is None else repr(float(m.damping_ratio))
            writer.writerow([k, repr(float(m.frequency_hz)), zeta] + [repr(float(v)) for v in m.shape])
        return buf.getvalue()


# -- spectra -----------------------------------------------------------------

def _phase_normalize(u):
    """Rotate each row so its largest-magnitude component is real positive."""
    idx = np.argmax(np.abs(u), axis=-1)
    pivot = np.take_along_axis(u, idx[..., None], axis=-1)
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    return u * np.conj(phase)


def sv_spectrum(G: CrossSpectralMatrix) -> SvSpectrum:
    """Singular values and first singular vectors of every PSD line."""
    mats = G.matrices
    n_lines, m, _ = mats.shape
    s = np.full((n_lines, m), np.nan)
    u1 = np.full((n_lines, m), np.nan + 0j)
    flagged = np.zeros(n_lines, dtype=bool)
    try:
        U, S, _ = np.linalg.svd(mats)
        s[:] = S
        u1[:] = U[:, :, 0]
    except np.linalg.LinAlgError:
        for k in range(n_lines):
            try:
                U, S, _ = np.linalg.svd(mats[k])
            except np.linalg.LinAlgError:
                flagged[k] = True
                continue
            s[k] = S
            u1[k] = U[:, 0]
    ok = ~flagged
    u1[ok] = _phase_normalize(u1[ok])
    return SvSpectrum(G.frequencies_hz, s, u1, flagged)


# -- peaks -------------------------------------------------------------------

def find_peaks(curve, frequencies_hz, min_prominence_rel=0.05, min_separation_hz=5.0, band=(1.0, None),
               n_peaks=None, min_depth_rel=0.0):
    """Local maxima of ``curve`` inside ``band``, sorted by frequency.

    A candidate must have prominence of at least ``min_prominence_rel`` times
    the curve maximum inside the band and at least ``min_depth_rel`` times its
    own height. Candidates closer than
    ``min_separation_hz`` are resolved in favour of the more prominent one. A
    plateau reports its leftmost bin. With ``n_peaks`` the lowest-frequency
    ``n_peaks`` survivors are returned.
    """
    curve = np.asarray(curve, dtype=float)
    freqs = np.asarray(frequencies_hz, dtype=float)
    lo, hi = band
    hi = 0.9 * freqs[-1] if hi is None else hi
    inside = np.flatnonzero((freqs >= lo) & (freqs <= hi) & np.isfinite(curve))
    if inside.size == 0:
        raise InvalidArgument(f"band [{lo}, {hi}] Hz contains no frequency lines")
    i0, i1 = inside[0], inside[-1]
    seg = curve[i0 : i1 + 1]

    candidates = []
    n = seg.size
    i = 1
    while i < n - 1:
        if seg[i] > seg[i - 1]:
            j = i
            while j + 1 < n and seg[j + 1] == seg[i]:
                j += 1
            if j + 1 < n and seg[j + 1] < seg[i]:
                candidates.append(i)
            i = j + 1
        else:
            i += 1
    if not candidates:
        return []
    cand = np.array(candidates)
    prom = peak_prominences(seg, cand)[0]
    threshold = min_prominence_rel * np.max(seg)
    keep = (prom >= threshold) & (prom >= min_depth_rel * seg[cand])
    cand, prom = cand[keep], prom[keep]

    accepted = []
    df = freqs[1] - freqs[0] if freqs.size > 1 else 1.0
    min_bins = min_separation_hz / df
    for k in np.argsort(-prom, kind="stable"):
        if all(abs(cand[k] - cand[a]) >= min_bins for a in accepted):
            accepted.append(k)
    accepted.sort(key=lambda k: cand[k])
    if n_peaks is not None:
        accepted = accepted[:n_peaks]
    return [Peak(int(cand[k] + i0), float(freqs[cand[k] + i0]), float(seg[cand[k]]), float(prom[k]))
            for k in accepted]


def refine_peak_frequency(curve, frequencies_hz, index):
    """Vertex of a Lorentzian fitted over the half-power region around ``index``.

    ``1 / curve`` is quadratic in frequency near an isolated resonance, so a
    weighted quadratic fit over every line above half the peak value locates
    the resonance to a fraction of a line. On broad peaks the raw maximum line
    is decided by estimation noise on the flat top. Falls back to the line
    frequency when fewer than three lines are available or the fit degenerates.
    """
    curve = np.asarray(curve, dtype=float)
    freqs = np.asarray(frequencies_hz, dtype=float)
    k = int(index)
    half = 0.5 * curve[k]
    lo = k
    while lo > 0 and curve[lo - 1] >= half:
        lo -= 1
    hi = k
    while hi < curve.size - 1 and curve[hi + 1] >= half:
        hi += 1
    if hi - lo < 2 or not half > 0:
        return float(freqs[k])
    x = freqs[lo : hi + 1] - freqs[k]
    inv = 1.0 / curve[lo : hi + 1]
    a, b, _ = np.polyfit(x, inv, 2, w=1.0 / inv)
    if not a > 0:
        return float(freqs[k])
    vertex = -b / (2.0 * a)
    if not x[0] <= vertex <= x[-1]:
        return float(freqs[k])
    return float(freqs[k] + vertex)


def half_power_damping(auto_spectrum, frequencies_hz, peak):
    """Damping ratio (f2 - f1) / (2 f_peak) from the half-power crossings of a power spectrum.

    Crossings of ``value = peak / 2`` are located by linear interpolation on
    both sides of bin ``peak``. Raises BandwidthUnresolved when a side reaches
    the end of the curve, or rises above the peak, before crossing.
    """
    p = np.asarray(auto_spectrum, dtype=float)
    f = np.asarray(frequencies_hz, dtype=float)
    top = p[peak]
    if not top > 0:
        raise InvalidArgument("peak value must be positive")
    half = top / 2.0

    def crossing(step):
        i = peak
        while True:
            j = i + step
            if j < 0 or j >= p.size:
                raise BandwidthUnresolved(f"half-power level not reached {'below' if step < 0 else 'above'} "
                                          f"{f[peak]:.3f} Hz")
            if p[j] > top:
                raise BandwidthUnresolved(f"curve rises above the peak at {f[peak]:.3f} Hz before half power")
            if p[j] <= half:
                t = (p[i] - half) / (p[i] - p[j])
                return f[i] + t * (f[j] - f[i])
            i = j

    f1 = crossing(-1)
    f2 = crossing(+1)
    return (f2 - f1) / (2.0 * f[peak])


def reduce_to_real(vec):
    """Rotate a complex shape by the phase maximizing its real-part norm; return (real, imag fraction).

    ``|Re(e^{i t} v)|^2 = (|v|^2 + Re(e^{2 i t} sum v_k^2)) / 2`` peaks at
    ``t = -arg(sum v_k^2) / 2``.
    """
    v = np.asarray(vec, dtype=complex)
    t = -0.5 * np.angle(np.sum(v * v))
    w = v * np.exp(1j * t)
    norm = np.linalg.norm(w)
    imag_frac = float(np.linalg.norm(w.imag) / norm) if norm > 0 else 0.0
    return w.real.copy(), imag_frac


def _real_shape(vec):
    real, imag_frac = reduce_to_real(vec)
    if not np.any(real):
        return real, imag_frac
    return unit_max_abs(real), imag_frac


def _peak_args(cfg: PeakConfig, freqs):
    return dict(
        min_prominence_rel=cfg.min_prominence_rel,
        min_separation_hz=cfg.min_separation_hz,
        band=cfg.resolved_band(freqs),
        n_peaks=cfg.n_modes,
        min_depth_rel=cfg.min_depth_rel,
    )


def _relocate_peak(freqs, curve, f0, halfwidth):
    """Index of the maximum of ``curve`` within ``f0 +- halfwidth``."""
    sel = np.flatnonzero(np.abs(freqs - f0) <= halfwidth)
    return int(sel[np.argmax(curve[sel])])


def adaptive_half_power_damping(signal, sample_rate, f_peak, zeta_start, search_hz,
                                target_bins=DAMPING_TARGET_BINS, max_iter=6):
    """Half-power damping on an auto-PSD whose resolution fits the peak width.

    A coarse grid widens narrow peaks (window leakage) while a fine grid with
    few averages lets noise dips end the half-power search early. The segment
    length is therefore chosen so the current bandwidth estimate spans at least
    ``target_bins`` lines, and the estimate is refined until the length stops
    changing. Returns ``(zeta, segment_length)``.
    """
    x = np.asarray(signal, dtype=float).reshape(-1, 1)
    n = x.shape[0]
    th = TimeHistory(sample_rate, (0,), x, "acceleration")

    def fits(length, overlap):
        return SpectralConfig(length, overlap).n_segments(n) >= MIN_SEGMENTS

    longest = 256
    while fits(2 * longest, 0.75):
        longest *= 2
    zeta, used, prev = zeta_start, None, None
    for _ in range(max_iter):
        bw = 2.0 * zeta * f_peak
        length = 2 ** int(np.ceil(np.log2(target_bins * sample_rate / bw)))
        length = int(min(max(length, 256), longest))
        if length == prev:
            break
        cfg = SpectralConfig(length, 0.5 if fits(length, 0.5) else 0.75)
        freqs, P = auto_psd(th, cfg)
        k = _relocate_peak(freqs, P[:, 0], f_peak, search_hz + freqs[1])
        try:
            zeta = half_power_damping(P[:, 0], freqs, k)
        except BandwidthUnresolved:
            if used is None:
                raise
            break
        used = prev = length
    return zeta, used


# -- methods -----------------------------------------------------------------

def pp_identify(G: CrossSpectralMatrix, a: Anpsd, reference_node=None, peaks: PeakConfig = PeakConfig(),
                record: TimeHistory | None = None) -> IdentifiedModeSet:
    """Peak-picking on the ANPSD.

    Shapes are the cross/auto spectral ratios ``G[i, ref] / G[ref, ref]`` at
    each peak line. ``reference_node=None`` uses, per peak, the channel with
    the largest auto-PSD. Damping comes from the half-power bandwidth of the
    reference auto-PSD; when the time ``record`` behind ``G`` is supplied the
    bandwidth is re-measured at a resolution matched to the peak (see
    :func:`adaptive_half_power_damping`).
    """
    freqs = G.frequencies_hz
    nodes = tuple(G.channel_nodes)
    auto = G.auto_spectra()
    if reference_node is not None and reference_node not in nodes:
        raise InvalidArgument(f"reference node {reference_node} is not among channels {list(nodes)}")
    found = find_peaks(a.values, freqs, **_peak_args(peaks, freqs))
    modes = []
    for pk in found:
        k = pk.index
        flags = []
        strongest = int(np.argmax(auto[k]))
        if reference_node is None:
            r = strongest
        else:
            r = nodes.index(reference_node)
            if not auto[k, r] > DEGENERATE_REFERENCE * auto[k, strongest]:
                flags.append("reference-degenerate")
                r = strongest
        ratio = G.matrices[k, :, r] / auto[k, r]
        shape, imag_frac = _real_shape(ratio)
        info = {"reference_node": nodes[r], "imag_fraction": imag_frac}

        f_hat = refine_peak_frequency(a.values, freqs, k)
        # the reference auto-PSD may peak a few lines away from the ANPSD on broad modes
        search = 0.5 * peaks.min_separation_hz
        zeta = None
        try:
            zeta = half_power_damping(auto[:, r], freqs, _relocate_peak(freqs, auto[:, r], f_hat, search))
        except BandwidthUnresolved:
            if record is None:
                flags.append("bandwidth-unresolved")
        if record is not None:
            channel = record.samples[:, record.channel_nodes.index(nodes[r])]
            start = zeta if zeta is not None else 2.0 * G.df / f_hat
            try:
                zeta, length = adaptive_half_power_damping(channel, record.sample_rate, f_hat, start, search)
                info["damping_segment_length"] = length
            except BandwidthUnresolved:
                zeta = None
                flags.append("bandwidth-unresolved")
        if zeta is not None and not 0.0 < zeta < 0.2:
            flags.append("damping-out-of-range")
            zeta = None
        info["peak_line_hz"] = pk.frequency_hz
        modes.append(IdentifiedMode(f_hat, shape, zeta, flags, k, info))
    return IdentifiedModeSet("PP", modes, nodes, a)


def fdd_identify(G: CrossSpectralMatrix, peaks: PeakConfig = PeakConfig()) -> IdentifiedModeSet:
    """Peaks of the first singular value; shapes from the first singular vectors."""
    sv = sv_spectrum(G)
    freqs = G.frequencies_hz
    s1 = np.where(sv.flagged, np.nan, sv.singular_values[:, 0])
    found = find_peaks(s1, freqs, **_peak_args(peaks, freqs))
    modes = []
    for pk in found:
        k = pk.index
        flags = []
        s = sv.singular_values[k]
        ratio = float(s[1] / s[0]) if s.size > 1 and s[0] > 0 else 0.0
        if ratio > NOT_RANK_ONE_RATIO:
            flags.append("not-rank-one")
        shape, imag_frac = _real_shape(sv.first_vectors[k])
        modes.append(IdentifiedMode(refine_peak_frequency(s1, freqs, k), shape, None, flags, k,
                                    {"s2_over_s1": ratio, "imag_fraction": imag_frac,
                                     "peak_line_hz": pk.frequency_hz}))
    return IdentifiedModeSet("FDD", modes, tuple(G.channel_nodes), sv)


def frf_identify(frf: FrfSet, peaks: PeakConfig = PeakConfig()) -> IdentifiedModeSet:
    """Peaks of the channel-averaged |H1|; shapes from H1 at the peak lines."""
    freqs = frf.frequencies_hz
    curve = frf.mean_magnitude()
    # the resonance is Lorentzian in power, which is what the refinement fits
    power = np.full(curve.shape, np.nan)
    power[frf.valid] = np.mean(np.abs(frf.frf[frf.valid]) ** 2, axis=1)
    if not np.any(np.nan_to_num(curve) > 0):
        raise InvalidArgument("FRF magnitude is zero everywhere; no peaks to identify")
    found = find_peaks(curve, freqs, **_peak_args(peaks, freqs))
    if not found:
        raise InvalidArgument("no FRF peaks found")
    modes = []
    for pk in found:
        k = pk.index
        flags = []
        coh = float(np.nanmin(frf.coherence[k]))
        if coh < MIN_COHERENCE:
            flags.append("low-coherence")
        shape, imag_frac = _real_shape(frf.frf[k])
        modes.append(IdentifiedMode(refine_peak_frequency(power, freqs, k), shape, None, flags, k,
                                    {"min_coherence": coh, "imag_fraction": imag_frac,
                                     "peak_line_hz": pk.frequency_hz}))
    return IdentifiedModeSet("FRF", modes, tuple(frf.channel_nodes), frf)
