"""Experiment stages with file-based handoff: simulate, identify, compare, pipeline.

Every stage reads and writes plain files inside one run directory::

    force.csv, acceleration.csv            broadband excitation run
    frf_force.csv, frf_acceleration.csv    single-input run for the FRF cross-check
    manifest.json                          config, seeds and ground truth
    pp.json, fdd.json, frf.json            identified modes (+ curve CSVs)
    report.json, summary.txt, *.csv        comparison against the truth
"""
from __future__ import annotations

import datetime as _dt
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .beam_model import (
    PRESET_BOUNDARIES,
    BeamSpec,
    ModalSet,
    analytical_frequencies,
    assemble,
    modal_damping,
    preset_beam,
    rayleigh_coefficients,
    rayleigh_damping,
    solve_modal,
)
from .compare import align, frequency_error_table, frequency_table_csv, mac, mac_matrix, pair_modes, shape_table_csv
from .errors import InvalidArgument, PairingConflict, ParseError
from .identify import IdentifiedModeSet, PeakConfig, fdd_identify, frf_identify, pp_identify
from .simulator import (
    DEFAULT_SUBSTEPS,
    RNG_ALGORITHM,
    ExcitationSpec,
    TimeHistory,
    add_noise,
    derive_seed,
    generate_excitation,
    newmark_integrate,
)
from .spectral import MIN_SEGMENTS, SpectralConfig, anpsd, frf_h1, welch_cross_psd

log = logging.getLogger("beamoma")

METHODS = ("pp", "fdd", "frf")
N_MODES = 5

# acceptance thresholds; frequency tolerances are in spectral lines
FREQ_LINES_MODE1 = 3
FREQ_LINES = 2
SHAPE_TOL = 0.05
MAC_DIAG_MIN = 0.95
MAC_OFF_MAX = 0.2
DAMPING_MODES = 3
DAMPING_REL_TOL = 0.5
FRF_FREQ_LINES = 1
FRF_MAC_MIN = 0.98

_CONFIG_KEYS = {
    "beam", "excitation", "sample_rate", "duration", "discard_s", "substeps", "spectral",
    "identify", "frf_input_node", "snr_db", "seed", "output_dir",
}


@dataclass(frozen=True)
class RunConfig:
    beam: BeamSpec = field(default_factory=lambda: preset_beam(1))
    excitation: ExcitationSpec = ExcitationSpec()
    sample_rate: float = 2048.0
    duration: float = 120.0
    discard_s: float = 2.0
    substeps: int = DEFAULT_SUBSTEPS
    spectral: SpectralConfig = SpectralConfig()
    peaks: PeakConfig = PeakConfig()
    reference_node: int | None = None
    frf_input_node: int | None = None
    snr_db: float | None = None
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidArgument(f"sample_rate must be positive, got {self.sample_rate!r}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise InvalidArgument(f"duration must be positive, got {self.duration!r}")
        if not 0 <= self.discard_s < self.duration:
            raise InvalidArgument(f"discard_s must lie in [0, duration), got {self.discard_s!r}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise InvalidArgument(f"substeps must be a positive integer, got {self.substeps!r}")
        if int(self.seed) != self.seed or not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        kept = int(round((self.duration - self.discard_s) * self.sample_rate))
        if self.spectral.n_segments(kept) < MIN_SEGMENTS:
            need = (self.spectral.segment_length + (MIN_SEGMENTS - 1) * self.spectral.step) / self.sample_rate
            raise InvalidArgument(
                f"duration {self.duration} s leaves {kept} samples after the {self.discard_s} s discard; "
                f"the spectral settings need at least {need + self.discard_s:.3f} s"
            )
        for name in ("reference_node", "frf_input_node"):
            node = getattr(self, name)
            if node is not None and not 1 <= int(node) <= self.beam.n_nodes:
                raise InvalidArgument(f"{name} must lie in 1..{self.beam.n_nodes}, got {node!r}")

    def to_dict(self):
        return {
            "beam": self.beam.to_dict(),
            "excitation": {"amplitude_rms": self.excitation.amplitude_rms, "target": self.excitation.target},
            "sample_rate": self.sample_rate,
            "duration": self.duration,
            "discard_s": self.discard_s,
            "substeps": int(self.substeps),
            "spectral": self.spectral.to_dict(),
            "identify": {**self.peaks.to_dict(), "reference_node": self.reference_node},
            "frf_input_node": self.frf_input_node,
            "snr_db": self.snr_db,
            "seed": int(self.seed),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidArgument("a run config must be a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        beam = data.get("beam")
        if isinstance(beam, int) and not isinstance(beam, bool):
            kw["beam"] = preset_beam(beam)
        elif isinstance(beam, dict):
            kw["beam"] = BeamSpec.from_dict(beam)
        elif beam is not None:
            raise InvalidArgument(f"beam must be a preset number or an object, got {beam!r}")
        if "excitation" in data:
            exc = dict(data["excitation"])
            target = exc.get("target", "all")
            kw["excitation"] = ExcitationSpec(float(exc.get("amplitude_rms", 1.0)), 0,
                                              target if target == "all" else int(target))
        for key, conv in (("sample_rate", float), ("duration", float), ("discard_s", float),
                          ("substeps", int), ("seed", int), ("output_dir", str)):
            if data.get(key) is not None:
                kw[key] = conv(data[key])
        if data.get("snr_db") is not None:
            kw["snr_db"] = float(data["snr_db"])
        if data.get("frf_input_node") is not None:
            kw["frf_input_node"] = int(data["frf_input_node"])
        if "spectral" in data:
            kw["spectral"] = SpectralConfig.from_dict(data["spectral"])
        if "identify" in data:
            ident = dict(data["identify"])
            if ident.get("reference_node") is not None:
                kw["reference_node"] = int(ident["reference_node"])
            kw["peaks"] = PeakConfig.from_dict(ident)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise InvalidArgument(f"malformed config: {exc}") from None

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def frf_input_node(truth: ModalSet, free_nodes):
    """Free node whose smallest |shape| over the truth modes is largest."""
    rows = [truth.nodes.index(n) for n in free_nodes]
    score = np.abs(truth.shapes[rows]).min(axis=1)
    return int(free_nodes[int(np.argmax(score))])


# -- simulate ----------------------------------------------------------------

def _run_record(cfg, sys, damping, target, tag):
    spec = ExcitationSpec(cfg.excitation.amplitude_rms, derive_seed(cfg.seed, tag), target)
    force = generate_excitation(spec, sys, cfg.sample_rate, cfg.duration)
    acc = newmark_integrate(sys, damping, force, substeps=cfg.substeps)
    acc = add_noise(acc, cfg.snr_db, derive_seed(cfg.seed, tag + "-noise"))
    return force, acc


def cmd_simulate(cfg: RunConfig, out_dir):
    """Write the force and acceleration records plus a manifest with the ground truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.beam
    sys = assemble(spec)
    n = min(N_MODES, sys.n_dof)
    fem = solve_modal(sys, n)
    exact = analytical_frequencies(spec, n) if n else np.array([])
    alpha, beta = rayleigh_coefficients(spec.damping_ratio, fem.frequencies_hz[0], fem.frequencies_hz[-1])
    damping = rayleigh_damping(sys, spec.damping_ratio, fem.frequencies_hz[0], fem.frequencies_hz[-1])
    zeta = modal_damping(alpha, beta, 2 * np.pi * fem.frequencies_hz)
    nodes = tuple(range(1, spec.n_nodes + 1))

    log.info("simulating %s beam, %.0f s at %g Hz (%s kernel)", spec.boundary.value, cfg.duration,
             cfg.sample_rate, kernels.BACKEND)
    force, acc = _run_record(cfg, sys, damping, cfg.excitation.target, "excitation")
    files = {"force": "force.csv", "acceleration": "acceleration.csv"}
    force.expand(nodes).to_csv(out / files["force"])
    acc.expand(nodes).to_csv(out / files["acceleration"])

    node = cfg.frf_input_node or frf_input_node(fem, sys.translation_nodes)
    log.info("single-input run with the force at node %d", node)
    force, acc = _run_record(cfg, sys, damping, node, "frf-excitation")
    files.update(frf_force="frf_force.csv", frf_acceleration="frf_acceleration.csv")
    force.to_csv(out / files["frf_force"])
    acc.expand(nodes).to_csv(out / files["frf_acceleration"])

    manifest = {
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "kernel": kernels.BACKEND,
        "rng": RNG_ALGORITHM,
        "seeds": {tag: derive_seed(cfg.seed, tag) for tag in
                  ("excitation", "excitation-noise", "frf-excitation", "frf-excitation-noise")},
        "frf_input_node": node,
        "files": files,
        "truth": {
            "fem": fem.to_dict(),
            "analytical_frequencies_hz": [float(f) for f in exact],
            "rayleigh": {"alpha": alpha, "beta": beta},
            "modal_damping": [float(z) for z in zeta],
        },
    }
    write_json(out / "manifest.json", manifest)
    return {k: out / v for k, v in files.items()} | {"manifest": out / "manifest.json"}


# -- identify ----------------------------------------------------------------

def _config_for(in_dir, cfg):
    if cfg is not None:
        return cfg
    manifest = Path(in_dir) / "manifest.json"
    return RunConfig.from_dict(read_json(manifest)["config"]) if manifest.exists() else RunConfig()


def cmd_identify(method, in_dir, cfg: RunConfig | None = None, out_dir=None):
    """Identify modes from the records in ``in_dir``; writes ``<method>.json`` and a curve CSV.

    Without ``cfg`` the config stored in the directory's manifest is used.
    """
    method = str(method).lower()
    if method not in METHODS:
        raise InvalidArgument(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    in_dir = Path(in_dir)
    out = Path(out_dir) if out_dir is not None else in_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg = _config_for(in_dir, cfg)

    if method == "frf":
        force_path = in_dir / "frf_force.csv"
        if not force_path.exists():
            raise InvalidArgument(f"frf identification needs a force record; {force_path} not found")
        source = in_dir / "frf_acceleration.csv"
    else:
        source = in_dir / "acceleration.csv"
    record = TimeHistory.from_csv(source)
    y, dropped = record.drop_silent()
    if dropped:
        log.info("dropping silent channels at nodes %s", list(dropped))
    y = y.discard(cfg.discard_s)

    if method == "frf":
        x = TimeHistory.from_csv(force_path).discard(cfg.discard_s)
        frf = frf_h1(x, y, cfg.spectral)
        result = frf_identify(frf, cfg.peaks)
        curve_name, curve = "frf_curve.csv", frf.to_csv()
    else:
        G = welch_cross_psd(y, cfg.spectral)
        if method == "pp":
            a = anpsd(G)
            result = pp_identify(G, a, cfg.reference_node, cfg.peaks, record=y)
            curve_name, curve = "pp_anpsd.csv", a.to_csv()
        else:
            result = fdd_identify(G, cfg.peaks)
            curve_name, curve = "fdd_sv.csv", result.diagnostics.to_csv()
    result = result.expand(record.channel_nodes)
    for k, m in enumerate(result.modes, start=1):
        if m.flags:
            log.warning("%s mode %d at %.2f Hz: %s", result.method, k, m.frequency_hz, ", ".join(m.flags))

    doc = result.to_dict()
    doc.update(source=source.name, dropped_nodes=list(dropped),
               spectral=cfg.spectral.to_dict(), peaks=cfg.peaks.to_dict())
    path = out / f"{method}.json"
    write_json(path, doc)
    (out / curve_name).write_text(curve, encoding="utf-8")
    (out / f"{method}_modes.csv").write_text(result.to_csv(), encoding="utf-8")
    return path


# -- compare -----------------------------------------------------------------

def _check(checks, name, passed, detail, gating=True):
    checks.append({"name": name, "passed": bool(passed), "detail": detail, "gating": gating})


def _ordered_by_truth(result, pairing, n):
    """Columns of ``result`` shapes placed at their paired truth mode; missing modes are NaN."""
    S = np.full((len(result.nodes), n), np.nan)
    for i, j in enumerate(pairing):
        if j < n:
            S[:, j] = result.shapes[:, i]
    return S


def _method_checks(name, result, truth, df, zeta_true, checks):
    """Checks of one identified set against the truth; FRF results are reported, not gated."""
    n = truth.n_modes
    gate = name != "FRF"

    def check(label, passed, detail):
        _check(checks, label, passed, detail, gate)

    out = {"frequencies_hz": result.frequencies_hz.tolist()}
    try:
        pairing = pair_modes(result.frequencies_hz, truth.frequencies_hz)
    except PairingConflict as exc:
        check(f"{name} pairing", False, str(exc))
        return out, None
    missing = sorted(set(range(n)) - set(pairing))
    check(f"{name} mode count", not missing,
          "all modes identified" if not missing else f"truth modes {[j + 1 for j in missing]} not identified")

    lines = []
    for i, j in enumerate(pairing):
        tol = FREQ_LINES_MODE1 if j == 0 else FREQ_LINES
        off = abs(result.frequencies_hz[i] - truth.frequencies_hz[j]) / df
        lines.append(off)
        check(f"{name} frequency mode {j + 1}", off <= tol,
              f"{result.frequencies_hz[i]:.2f} Hz vs {truth.frequencies_hz[j]:.2f} Hz ({off:.2f} lines, limit {tol})")

    aligned = align(result, truth)
    dev = []
    for i, j in enumerate(pairing):
        ref = truth.shapes[:, j] / np.abs(truth.shapes[:, j]).max()
        d = float(np.abs(aligned.shapes[:, i] - ref).max())
        dev.append(d)
        check(f"{name} shape mode {j + 1}", d <= SHAPE_TOL, f"max |deviation| {d:.4f} (limit {SHAPE_TOL})")

    M = mac_matrix(result, truth)
    diag = [float(M.values[i, j]) for i, j in enumerate(pairing)]
    off_vals = [M.values[i, k] for i in range(M.values.shape[0]) for k in range(n) if k != pairing[i]]
    off_max = float(max(off_vals)) if off_vals else 0.0
    check(f"{name} MAC diagonal", min(diag) >= MAC_DIAG_MIN, f"min {min(diag):.4f} (limit {MAC_DIAG_MIN})")
    check(f"{name} MAC off-diagonal", off_max <= MAC_OFF_MAX, f"max {off_max:.4f} (limit {MAC_OFF_MAX})")

    errors = [None] * len(pairing)
    if name == "PP":
        for i, j in enumerate(pairing):
            z = result.modes[i].damping_ratio
            errors[i] = None if z is None else (z - zeta_true[j]) / zeta_true[j]
            if j < DAMPING_MODES:
                ok = z is not None and abs(errors[i]) <= DAMPING_REL_TOL
                detail = ("no estimate" if z is None
                          else f"{z:.5f} vs {zeta_true[j]:.5f} ({100 * errors[i]:+.1f}%, limit ±{100 * DAMPING_REL_TOL:.0f}%)")
                check(f"PP damping mode {j + 1}", ok, detail)

    out.update(
        paired_truth_modes=[j + 1 for j in pairing],
        frequency_error_lines=lines,
        frequency_error_pct=[100.0 * (result.frequencies_hz[i] - truth.frequencies_hz[j]) / truth.frequencies_hz[j]
                             for i, j in enumerate(pairing)],
        shape_deviation=dev,
        mac_diagonal=diag,
        mac_max_off_diagonal=off_max,
        damping_ratio=[m.damping_ratio for m in result.modes],
        damping_relative_error=errors,
        flags=[m.flags for m in result.modes],
    )
    return out, pairing


def _cross_checks(frf, fdd, truth, df, checks):
    try:
        pairing = pair_modes(frf.frequencies_hz, fdd.frequencies_hz)
        fdd_truth = pair_modes(fdd.frequencies_hz, truth.frequencies_hz)
    except PairingConflict as exc:
        _check(checks, "FRF vs FDD pairing", False, str(exc))
        return {}
    rows = []
    for i, k in enumerate(pairing):
        j = fdd_truth[k]
        off = abs(frf.frequencies_hz[i] - fdd.frequencies_hz[k]) / df
        value = mac(frf.shapes[:, i], fdd.shapes[:, k])
        rows.append({"truth_mode": j + 1, "lines": off, "mac": value})
        if j >= 1:
            _check(checks, f"FRF vs FDD frequency mode {j + 1}", off <= FRF_FREQ_LINES,
                   f"{frf.frequencies_hz[i]:.2f} Hz vs {fdd.frequencies_hz[k]:.2f} Hz ({off:.2f} lines, "
                   f"limit {FRF_FREQ_LINES})")
        _check(checks, f"FRF vs FDD MAC mode {j + 1}", value >= FRF_MAC_MIN, f"{value:.4f} (limit {FRF_MAC_MIN})")
    return {"pairs": rows}


def cmd_compare(manifest_path, result_paths, out_dir):
    """Compare identified sets with the manifest truth; returns ``(report, passed)``.

    Writes report.json, summary.txt, the frequency and shape tables and one MAC
    CSV per method. Pairing conflicts are reported as failed checks.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = read_json(manifest_path)
    try:
        truth = ModalSet.from_dict(manifest["truth"]["fem"])
        exact = manifest["truth"]["analytical_frequencies_hz"]
        zeta_true = manifest["truth"]["modal_damping"]
        cfg = RunConfig.from_dict(manifest["config"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"manifest lacks {exc}", manifest_path) from None
    df = cfg.sample_rate / cfg.spectral.segment_length

    results = {}
    for p in result_paths:
        s = IdentifiedModeSet.from_dict(read_json(p))
        if tuple(s.nodes) != tuple(truth.nodes):
            only_a = sorted(set(s.nodes) - set(truth.nodes))
            only_b = sorted(set(truth.nodes) - set(s.nodes))
            raise InvalidArgument(f"{p}: node set differs from the truth (only in result {only_a}, "
                                  f"only in truth {only_b})")
        results[s.method.upper()] = s

    checks = []
    methods = {}
    pairings = {}
    for name, s in results.items():
        methods[name], pairings[name] = _method_checks(name, s, truth, df, zeta_true, checks)
    cross = {}
    if "FRF" in results and "FDD" in results:
        cross = _cross_checks(results["FRF"], results["FDD"], truth, df, checks)

    n = truth.n_modes
    rows = {"FEM": truth.frequencies_hz, "Analytical": exact}
    shapes = {"FEM": truth.shapes}
    for name, s in results.items():
        if pairings[name] is None:
            continue
        freqs = np.full(n, np.nan)
        for i, j in enumerate(pairings[name]):
            freqs[j] = s.frequencies_hz[i]
        rows[name] = freqs
        shapes[name] = _ordered_by_truth(align(s, truth), pairings[name], n)
        (out / f"mac_{name.lower()}.csv").write_text(mac_matrix(s, truth).to_csv(), encoding="utf-8")
    (out / "frequency_table.csv").write_text(frequency_table_csv(rows, n), encoding="utf-8")
    (out / "shape_table.csv").write_text(shape_table_csv(shapes, truth.nodes, n), encoding="utf-8")
    err_lines = ["method,mode,frequency_hz,fem_hz,error_pct"]
    for name, freqs in rows.items():
        if name == "FEM":
            continue
        for mode, fa, fb, pct in frequency_error_table(freqs, truth.frequencies_hz):
            if np.isfinite(fa):
                err_lines.append(f"{name},{mode},{fa:.4f},{fb:.4f},{pct:.4f}")
    (out / "frequency_errors.csv").write_text("\n".join(err_lines) + "\n", encoding="utf-8")

    passed = all(c["passed"] for c in checks if c["gating"]) and any(c["gating"] for c in checks)
    report = {
        "beam": cfg.beam.to_dict(),
        "line_spacing_hz": df,
        "truth": {"fem_frequencies_hz": truth.frequencies_hz.tolist(), "analytical_frequencies_hz": exact,
                  "modal_damping": zeta_true},
        "methods": methods,
        "frf_vs_fdd": cross,
        "checks": checks,
        "passed": passed,
    }
    write_json(out / "report.json", report)
    summary = [f"{('PASS' if c['passed'] else 'FAIL') if c['gating'] else 'info'}  {c['name']}: {c['detail']}"
               for c in checks]
    summary.append(f"overall: {'PASS' if passed else 'FAIL'}")
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    return report, passed


# -- pipeline ----------------------------------------------------------------

def _run_beam(number, cfg, out_root):
    out = Path(out_root) / f"beam{number}"
    bcfg = replace(cfg, beam=replace(cfg.beam, boundary=PRESET_BOUNDARIES[number]))
    stage = "simulate"
    try:
        paths = cmd_simulate(bcfg, out)
        results = []
        for method in METHODS:
            stage = f"identify {method}"
            results.append(cmd_identify(method, out, bcfg))
        stage = "compare"
        report, passed = cmd_compare(paths["manifest"], results, out)
    except Exception:
        log.error("beam %d: stage '%s' failed", number, stage)
        raise
    log.info("beam %d: %s", number, "pass" if passed else "FAIL")
    return number, passed


def cmd_pipeline(beams, cfg: RunConfig, out_root, jobs=1):
    """Run every stage for the preset beams; returns ``{beam: passed}``.

    ``beams`` is an iterable of preset numbers or ``"all"``. With ``jobs > 1``
    beams run in separate processes, each in its own ``beam<n>`` directory.
    """
    beams = sorted(PRESET_BOUNDARIES) if beams == "all" else [int(b) for b in beams]
    for b in beams:
        if b not in PRESET_BOUNDARIES:
            raise InvalidArgument(f"beam must be one of {sorted(PRESET_BOUNDARIES)} or 'all', got {b}")
    Path(out_root).mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(beams) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(beams))) as pool:
            done = list(pool.map(_run_beam, beams, [cfg] * len(beams), [out_root] * len(beams)))
    else:
        done = [_run_beam(b, cfg, out_root) for b in beams]
    return dict(done)
