"""Broadband random excitation and Newmark response of the damped beam model."""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as la

from . import kernels
from .beam_model import SystemMatrices, modal_decomposition
from .errors import InvalidArgument, NumericalFailure, ParseError

RNG_ALGORITHM = "numpy-PCG64"
MIN_SAMPLES = 2**12
DEFAULT_SUBSTEPS = 64


def derive_seed(seed, tag):
    """Sub-seed for one pipeline stage: (seed + first 8 bytes of sha256(tag)) mod 2**64."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return (int(seed) + int.from_bytes(digest[:8], "little")) % 2**64


@dataclass(frozen=True)
class TimeHistory:
    """Uniformly sampled multi-channel record; one column per node."""

    sample_rate: float
    channel_nodes: tuple
    samples: np.ndarray
    kind: str = "acceleration"
    seed: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_nodes", tuple(int(n) for n in self.channel_nodes))
        if self.kind not in ("force", "acceleration"):
            raise InvalidArgument(f"kind must be 'force' or 'acceleration', got {self.kind!r}")
        if not self.sample_rate > 0:
            raise InvalidArgument("sample_rate must be positive")
        if samples.shape[0] < 2:
            raise InvalidArgument("a time history needs at least 2 samples")
        if samples.shape[1] != len(self.channel_nodes):
            raise InvalidArgument("one column per channel node is required")
        if len(set(self.channel_nodes)) != len(self.channel_nodes):
            raise InvalidArgument("channel nodes must be distinct")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgument("time history contains non-finite values")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    def select(self, nodes):
        idx = [self.channel_nodes.index(n) for n in nodes]
        return replace(self, channel_nodes=tuple(nodes), samples=self.samples[:, idx])

    def discard(self, seconds):
        """Drop the first ``seconds`` of the record."""
        n = int(round(seconds * self.sample_rate))
        if n <= 0:
            return self
        if n >= self.n_samples - 1:
            raise InvalidArgument(f"cannot discard {seconds} s from a {self.duration:.3f} s record")
        return replace(self, samples=self.samples[n:])

    def expand(self, nodes):
        """Record over ``nodes``; nodes without a channel read identically zero."""
        out = np.zeros((self.n_samples, len(nodes)))
        for j, node in enumerate(nodes):
            if node in self.channel_nodes:
                out[:, j] = self.samples[:, self.channel_nodes.index(node)]
        return replace(self, channel_nodes=tuple(nodes), samples=out)

    def drop_silent(self):
        """(record without all-zero channels, tuple of dropped nodes)."""
        live = np.any(self.samples != 0.0, axis=0)
        dropped = tuple(n for n, keep in zip(self.channel_nodes, live) if not keep)
        if not live.any():
            raise InvalidArgument("every channel of the record is identically zero")
        kept = tuple(n for n, keep in zip(self.channel_nodes, live) if keep)
        return self.select(kept), dropped

    # -- CSV ---------------------------------------------------------------
    def header(self):
        nodes = ",".join(str(n) for n in self.channel_nodes)
        seed = "none" if self.seed is None else str(self.seed)
        return f"# fs={self.sample_rate!r} kind={self.kind} nodes={nodes} seed={seed} rng={RNG_ALGORITHM}"

    def to_csv(self, path):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(self.header() + "\n")
            np.savetxt(fh, self.samples, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path):
        with open(path, encoding="ascii") as fh:
            first = fh.readline()
            body = fh.read()
        meta = _parse_header(first, path)
        try:
            data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ParseError(str(exc), path, _first_bad_line(body, len(meta["nodes"]))) from None
        if data.shape[1] != len(meta["nodes"]):
            raise ParseError(f"expected {len(meta['nodes'])} columns, found {data.shape[1]}", path, 2)
        try:
            return cls(meta["fs"], meta["nodes"], data, meta["kind"], meta["seed"])
        except InvalidArgument as exc:
            raise ParseError(str(exc), path) from None


def _first_bad_line(body, n_columns):
    """1-based file line of the first data row that is not n_columns floats."""
    for i, text in enumerate(body.splitlines(), start=2):
        if not text.strip():
            continue
        fields = text.split(",")
        try:
            [float(x) for x in fields]
        except ValueError:
            return i
        if len(fields) != n_columns:
            return i
    return None


def _parse_header(line, path):
    if not line.startswith("#"):
        raise ParseError("missing '# fs=... kind=... nodes=... seed=...' header", path, 1)
    fields = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
    try:
        fs = float(fields["fs"])
        kind = fields["kind"]
        nodes = tuple(int(n) for n in fields["nodes"].split(",") if n)
        seed = fields.get("seed", "none")
        seed = None if seed == "none" else int(seed)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header field: {exc}", path, 1) from None
    return {"fs": fs, "kind": kind, "nodes": nodes, "seed": seed}


@dataclass(frozen=True)
class ExcitationSpec:
    amplitude_rms: float = 1.0
    seed: int = 0
    target: object = "all"  # "all" or a node number

    def __post_init__(self):
        if not self.amplitude_rms > 0:
            raise InvalidArgument("amplitude_rms must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")


def generate_excitation(spec: ExcitationSpec, sys: SystemMatrices, sample_rate, duration) -> TimeHistory:
    """Independent zero-mean Gaussian forces on the targeted translational DOFs."""
    n = int(round(duration * sample_rate))
    if n < MIN_SAMPLES:
        raise InvalidArgument(
            f"duration * sample_rate = {n} samples; at least {MIN_SAMPLES} are required "
            f"(duration >= {MIN_SAMPLES / sample_rate:.3f} s)"
        )
    if spec.target == "all":
        nodes = sys.translation_nodes
    else:
        node = int(spec.target)
        sys.dof_index(node, "translation")
        nodes = (node,)
    if not nodes:
        raise InvalidArgument("excitation targets no free translational DOF")
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    samples = rng.standard_normal((n, len(nodes))) * spec.amplitude_rms
    return TimeHistory(sample_rate, nodes, samples, "force", int(spec.seed))


def _force_matrix(sys, forces):
    F = np.zeros((forces.n_samples, sys.n_dof))
    for j, node in enumerate(forces.channel_nodes):
        F[:, sys.dof_index(node, "translation")] = forces.samples[:, j]
    return F


def newmark_direct(mass, damping, stiffness, forces, dt, substeps=1, u0=None, v0=None,
                   gamma=0.5, beta=0.25):
    """Newmark integration of the coupled system ``M a + C v + K u = f``.

    ``forces`` is (n_samples, n_dof), linear between samples; ``substeps``
    steps of ``dt / substeps`` are taken per sample interval. Returns
    displacement, velocity and acceleration at the sample instants.
    """
    M, C, K = (np.asarray(x, dtype=float) for x in (mass, damping, stiffness))
    forces = np.asarray(forces, dtype=float)
    n_samples, n_dof = forces.shape
    h = dt / substeps
    c0 = 1.0 / (beta * h * h)
    c1 = gamma / (beta * h)
    c2 = 1.0 / (beta * h)
    c3 = 1.0 / (2.0 * beta)
    c4 = gamma / beta
    c5 = h * (gamma / (2.0 * beta) - 1.0)
    try:
        lu = la.lu_factor(K + c0 * M + c1 * C, check_finite=True)
        if np.any(np.diag(lu[0]) == 0):
            raise la.LinAlgError("singular effective stiffness")
        m_lu = la.lu_factor(M)
    except (la.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"effective stiffness factorization failed: {exc}") from None

    u = np.zeros(n_dof) if u0 is None else np.asarray(u0, dtype=float).copy()
    v = np.zeros(n_dof) if v0 is None else np.asarray(v0, dtype=float).copy()
    a = la.lu_solve(m_lu, forces[0] - C @ v - K @ u)
    U = np.empty((n_samples, n_dof))
    V = np.empty_like(U)
    A = np.empty_like(U)
    U[0], V[0], A[0] = u, v, a
    # incremental form, as in the modal kernels
    for n in range(n_samples - 1):
        df = (forces[n + 1] - forces[n]) / substeps
        for _ in range(substeps):
            du = la.lu_solve(lu, df + M @ (c2 * v + c3 * a) + C @ (c4 * v + c5 * a))
            dv = c1 * du - c4 * v - c5 * a
            a = a + c0 * du - c2 * v - c3 * a
            u = u + du
            v = v + dv
        U[n + 1], V[n + 1], A[n + 1] = u, v, a
    return U, V, A


def _is_proportional(phi, damping, tol=1e-9):
    D = phi.T @ damping @ phi
    diag = np.abs(np.diag(D))
    off = D - np.diag(np.diag(D))
    scale = max(diag.max(initial=0.0), np.abs(damping).max(initial=0.0), 1e-300)
    return np.abs(off).max(initial=0.0) <= tol * scale, np.diag(D)


def newmark_response(sys: SystemMatrices, damping, forces: TimeHistory, initial=None,
                     substeps=DEFAULT_SUBSTEPS, method="auto"):
    """Displacement, velocity and acceleration over all free DOFs at the sample instants.

    ``method="modal"`` integrates the uncoupled modal equations with the
    selected kernel (requires damping diagonalized by the undamped modes);
    ``"direct"`` steps the coupled system; ``"auto"`` prefers modal.
    """
    if forces.kind != "force":
        raise InvalidArgument("newmark integration expects a force record")
    damping = np.asarray(damping, dtype=float)
    if damping.shape != sys.stiffness.shape:
        raise InvalidArgument("damping matrix shape does not match the system")
    if not np.allclose(damping, damping.T, rtol=1e-10, atol=1e-14 * max(1.0, np.abs(damping).max())):
        raise InvalidArgument("damping matrix must be symmetric")
    if int(substeps) < 1:
        raise InvalidArgument("substeps must be >= 1")
    dt = 1.0 / forces.sample_rate
    u0 = v0 = None
    if initial is not None:
        u0, v0 = (np.zeros(sys.n_dof) if x is None else np.asarray(x, dtype=float) for x in initial)

    F = _force_matrix(sys, forces)
    if method in ("auto", "modal"):
        omega2, phi = modal_decomposition(sys)
        proportional, modal_c = _is_proportional(phi, damping)
        if proportional:
            P = F @ phi
            # phi^T M phi = I, so q = phi^T M u
            q0 = np.zeros(sys.n_dof) if u0 is None else phi.T @ sys.mass @ u0
            qd0 = np.zeros(sys.n_dof) if v0 is None else phi.T @ sys.mass @ v0
            q, qd, qdd = kernels.newmark_modal(
                np.ascontiguousarray(omega2), np.ascontiguousarray(modal_c), np.ascontiguousarray(P),
                dt, int(substeps), np.ascontiguousarray(q0), np.ascontiguousarray(qd0))
            return np.asarray(q) @ phi.T, np.asarray(qd) @ phi.T, np.asarray(qdd) @ phi.T
        if method == "modal":
            raise InvalidArgument("damping is not diagonalized by the undamped modes")
    elif method != "direct":
        raise InvalidArgument(f"unknown method {method!r}")
    return newmark_direct(sys.mass, damping, sys.stiffness, F, dt, int(substeps), u0, v0)


def newmark_integrate(sys: SystemMatrices, damping, forces: TimeHistory, initial=None,
                      substeps=DEFAULT_SUBSTEPS, method="auto") -> TimeHistory:
    """Average-acceleration Newmark response; accelerations at the free translational nodes.

    Starts from rest unless ``initial = (u0, v0)`` over free DOFs is given.
    The force is linear between samples and ``substeps`` integration steps are
    taken per sample interval.
    """
    _, _, acc = newmark_response(sys, damping, forces, initial, substeps, method)
    trans = sys.translation_dofs
    return TimeHistory(forces.sample_rate, sys.translation_nodes, acc[:, trans], "acceleration", forces.seed)


def add_noise(signal: TimeHistory, snr_db, seed) -> TimeHistory:
    """Add white Gaussian noise at ``snr_db`` relative to each channel's RMS.

    ``snr_db`` of None or +inf returns the input unchanged.
    """
    if snr_db is None or (isinstance(snr_db, float) and math.isinf(snr_db) and snr_db > 0):
        return signal
    rms = np.sqrt(np.mean(signal.samples**2, axis=0))
    if not np.any(rms > 0):
        raise InvalidArgument("cannot set an SNR on an all-zero record")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    noise = rng.standard_normal(signal.samples.shape) * (rms * 10.0 ** (-snr_db / 20.0))
    return replace(signal, samples=signal.samples + noise)
