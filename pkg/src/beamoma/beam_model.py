"""Euler-Bernoulli beam finite elements, modal solution and closed-form frequencies.

Nodes are numbered 1..n_elements+1 from the left support. Each node carries a
transverse translation and a rotation; constrained DOFs are removed by deleting
their rows and columns.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq

from .errors import InvalidArgument, NumericalFailure, ParseError

# sqrt(EI / (m L^4)) that reproduces the cantilever f1 = 8.15 Hz with L = 1 m, m = 1 kg/m
CALIBRATED_C = 14.565
CALIBRATED_EI = CALIBRATED_C**2


class Boundary(str, enum.Enum):
    CANTILEVER = "cantilever"
    CLAMPED_CLAMPED = "clamped-clamped"
    PINNED_PINNED = "pinned-pinned"
    CLAMPED_PINNED = "clamped-pinned"
    FREE_FREE = "free-free"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "clampedclamped": "clamped-clamped",
            "pinnedpinned": "pinned-pinned",
            "clampedpinned": "clamped-pinned",
            "freefree": "free-free",
        }
        key = aliases.get(key.replace("-", ""), key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(b.value for b in cls)
            raise InvalidArgument(f"unknown boundary {value!r}; expected one of {names}") from None


# (node position, kind) of the fixed DOFs; "last" resolves to node n_elements+1
_CONSTRAINTS = {
    Boundary.CANTILEVER: [("first", "translation"), ("first", "rotation")],
    Boundary.CLAMPED_CLAMPED: [
        ("first", "translation"),
        ("first", "rotation"),
        ("last", "translation"),
        ("last", "rotation"),
    ],
    Boundary.PINNED_PINNED: [("first", "translation"), ("last", "translation")],
    Boundary.CLAMPED_PINNED: [("first", "translation"), ("first", "rotation"), ("last", "translation")],
    Boundary.FREE_FREE: [],
}


@dataclass(frozen=True)
class BeamSpec:
    """Geometry, material and support description of one beam experiment."""

    length: float = 1.0
    ei: float = CALIBRATED_EI
    mass_per_length: float = 1.0
    n_elements: int = 10
    boundary: Boundary = Boundary.CANTILEVER
    damping_ratio: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary.parse(self.boundary))
        for name in ("length", "ei", "mass_per_length"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidArgument(f"{name} must be positive, got {value!r}")
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise InvalidArgument(f"n_elements must be an integer >= 2, got {self.n_elements!r}")
        object.__setattr__(self, "n_elements", int(self.n_elements))
        if not 0.0 <= self.damping_ratio <= 0.2:
            raise InvalidArgument(f"damping_ratio must lie in [0, 0.2], got {self.damping_ratio!r}")

    @property
    def n_nodes(self):
        return self.n_elements + 1

    @property
    def c(self):
        """sqrt(EI / (m L^4)) in 1/s; all frequencies scale with it."""
        return math.sqrt(self.ei / (self.mass_per_length * self.length**4))

    def to_dict(self):
        return {
            "length_m": self.length,
            "ei": self.ei,
            "mass_per_length": self.mass_per_length,
            "n_elements": self.n_elements,
            "boundary": self.boundary.value,
            "damping_ratio": self.damping_ratio,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                length=float(data.get("length_m", 1.0)),
                ei=float(data.get("ei", CALIBRATED_EI)),
                mass_per_length=float(data.get("mass_per_length", 1.0)),
                n_elements=data.get("n_elements", 10),
                boundary=data.get("boundary", "cantilever"),
                damping_ratio=float(data.get("damping_ratio", 0.01)),
            )
        except (TypeError, AttributeError) as exc:
            raise InvalidArgument(f"malformed beam description: {exc}") from None


# The four beams of the experiment, in order.
PRESET_BOUNDARIES = {
    1: Boundary.CANTILEVER,
    2: Boundary.CLAMPED_CLAMPED,
    3: Boundary.PINNED_PINNED,
    4: Boundary.CLAMPED_PINNED,
}


def preset_beam(number):
    """BeamSpec of beam ``number`` (1-4) with the calibrated stiffness."""
    if number not in PRESET_BOUNDARIES:
        raise InvalidArgument(f"beam preset must be 1..4, got {number!r}")
    return BeamSpec(boundary=PRESET_BOUNDARIES[number])


@dataclass(frozen=True)
class SystemMatrices:
    stiffness: np.ndarray
    mass: np.ndarray
    dof_map: tuple  # free DOF index -> (node number, "translation" | "rotation")
    n_nodes: int

    @property
    def n_dof(self):
        return self.stiffness.shape[0]

    @property
    def translation_dofs(self):
        """Indices of free translational DOFs, ordered by node."""
        return np.array([i for i, (_, kind) in enumerate(self.dof_map) if kind == "translation"], dtype=int)

    @property
    def translation_nodes(self):
        return tuple(node for node, kind in self.dof_map if kind == "translation")

    def dof_index(self, node, kind="translation"):
        try:
            return self.dof_map.index((node, kind))
        except ValueError:
            raise InvalidArgument(f"node {node} has no free {kind} DOF") from None


@dataclass
class ModalSet:
    """Natural frequencies and translational mode shapes (rows = nodes, columns = modes)."""

    frequencies_hz: np.ndarray
    shapes: np.ndarray
    nodes: tuple
    normalization: str = "unit-max-abs"
    label: str = "FEM"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies_hz = np.asarray(self.frequencies_hz, dtype=float)
        self.shapes = np.asarray(self.shapes, dtype=float).reshape(len(self.nodes), -1)
        self.nodes = tuple(int(n) for n in self.nodes)
        if self.shapes.shape[1] != self.frequencies_hz.size:
            raise InvalidArgument("shape columns must match the number of frequencies")

    @property
    def n_modes(self):
        return self.frequencies_hz.size

    def to_dict(self):
        return {
            "label": self.label,
            "normalization": self.normalization,
            "nodes": list(self.nodes),
            "frequencies_hz": self.frequencies_hz.tolist(),
            "shapes": self.shapes.T.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        shapes = np.asarray(data["shapes"], dtype=float).T
        return cls(
            frequencies_hz=data["frequencies_hz"],
            shapes=shapes,
            nodes=data["nodes"],
            normalization=data.get("normalization", "unit-max-abs"),
            label=data.get("label", "FEM"),
        )

    def to_csv(self):
        """One row per node, one column per mode; the header carries the frequencies."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node"] + [repr(float(f)) for f in self.frequencies_hz])
        for node, row in zip(self.nodes, self.shapes):
            writer.writerow([node] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, label="FEM", path=None):
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows or rows[0][0] != "node":
            raise ParseError("expected a header row starting with 'node'", path, 1)
        try:
            freqs = [float(v) for v in rows[0][1:]]
            nodes, shapes = [], []
            for lineno, row in enumerate(rows[1:], start=2):
                nodes.append(int(row[0]))
                shapes.append([float(v) for v in row[1:]])
                if len(shapes[-1]) != len(freqs):
                    raise ParseError("row length does not match header", path, lineno)
        except ValueError as exc:
            raise ParseError(str(exc), path) from None
        return cls(freqs, np.array(shapes).reshape(len(nodes), len(freqs)), nodes, label=label)


def element_matrices(ei, mass_per_length, elem_length):
    """Hermite-cubic beam element stiffness and consistent mass (DOFs w1, theta1, w2, theta2)."""
    if not (ei > 0 and mass_per_length > 0 and elem_length > 0):
        raise InvalidArgument("element properties must be positive")
    h = elem_length
    k = (ei / h**3) * np.array(
        [
            [12.0, 6 * h, -12.0, 6 * h],
            [6 * h, 4 * h * h, -6 * h, 2 * h * h],
            [-12.0, -6 * h, 12.0, -6 * h],
            [6 * h, 2 * h * h, -6 * h, 4 * h * h],
        ]
    )
    m = (mass_per_length * h / 420.0) * np.array(
        [
            [156.0, 22 * h, 54.0, -13 * h],
            [22 * h, 4 * h * h, 13 * h, -3 * h * h],
            [54.0, 13 * h, 156.0, -22 * h],
            [-13 * h, -3 * h * h, -22 * h, 4 * h * h],
        ]
    )
    return k, m


def assemble(spec: BeamSpec) -> SystemMatrices:
    n_nodes = spec.n_nodes
    n_total = 2 * n_nodes
    k_el, m_el = element_matrices(spec.ei, spec.mass_per_length, spec.length / spec.n_elements)
    K = np.zeros((n_total, n_total))
    M = np.zeros((n_total, n_total))
    for e in range(spec.n_elements):
        s = slice(2 * e, 2 * e + 4)
        K[s, s] += k_el
        M[s, s] += m_el

    fixed = set()
    for where, kind in _CONSTRAINTS[spec.boundary]:
        node = 1 if where == "first" else n_nodes
        fixed.add(2 * (node - 1) + (0 if kind == "translation" else 1))
    free = [i for i in range(n_total) if i not in fixed]
    dof_map = tuple((i // 2 + 1, "translation" if i % 2 == 0 else "rotation") for i in free)
    K = K[np.ix_(free, free)]
    M = M[np.ix_(free, free)]
    # exact symmetry; assembly only adds symmetric blocks
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    return SystemMatrices(K, M, dof_map, n_nodes)


def modal_decomposition(sys: SystemMatrices):
    """All eigenpairs of K phi = w^2 M phi, mass normalized.

    The pencil is reduced through the Cholesky factor of M to a standard
    symmetric problem. Returns ``(omega2, phi)`` with ``phi`` over free DOFs.
    """
    try:
        L = la.cholesky(sys.mass, lower=True)
    except la.LinAlgError:
        raise NumericalFailure("mass matrix is not positive definite") from None
    # A = L^-1 K L^-T
    tmp = la.solve_triangular(L, sys.stiffness, lower=True)
    A = la.solve_triangular(L, tmp.T, lower=True).T
    A = 0.5 * (A + A.T)
    try:
        omega2, y = la.eigh(A)
    except la.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigen solver failed: {exc}") from None
    phi = la.solve_triangular(L.T, y, lower=False)
    scale = np.abs(np.diag(sys.stiffness)).max() / np.abs(np.diag(sys.mass)).max()
    # rigid-body modes come out as tiny negatives
    omega2 = np.where(np.abs(omega2) < 1e-10 * scale, 0.0, omega2)
    if np.any(omega2 < 0):
        raise NumericalFailure("negative eigenvalue; stiffness is not semi-definite",
                               index=int(np.argmin(omega2)))
    return omega2, phi


def unit_max_abs(shapes):
    """Scale every column so its largest-magnitude entry equals +1."""
    shapes = np.array(shapes, dtype=float, copy=True)
    single = shapes.ndim == 1
    if single:
        shapes = shapes[:, None]
    for j in range(shapes.shape[1]):
        col = shapes[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] != 0:
            shapes[:, j] = col / col[i]
    return shapes[:, 0] if single else shapes


def translational_shapes(sys: SystemMatrices, phi):
    """Expand free-DOF vectors to per-node translations; constrained nodes get 0."""
    out = np.zeros((sys.n_nodes, phi.shape[1]))
    for row, (node, kind) in enumerate(sys.dof_map):
        if kind == "translation":
            out[node - 1] = phi[row]
    return out


def solve_modal(sys: SystemMatrices, n_modes, normalization="unit-max-abs") -> ModalSet:
    """Lowest ``n_modes`` natural frequencies (Hz) and translational shapes."""
    if not 1 <= n_modes <= sys.n_dof:
        raise InvalidArgument(f"n_modes must lie in 1..{sys.n_dof}, got {n_modes}")
    omega2, phi = modal_decomposition(sys)
    omega2 = omega2[:n_modes]
    phi = phi[:, :n_modes]
    kphi = sys.stiffness @ phi
    mphi = sys.mass @ phi
    for j in range(n_modes):
        res = np.linalg.norm(kphi[:, j] - omega2[j] * mphi[:, j])
        ref = max(np.linalg.norm(kphi[:, j]), np.linalg.norm(sys.stiffness) * np.linalg.norm(phi[:, j]) * 1e-12)
        if res > 1e-8 * ref:
            raise NumericalFailure(f"eigen residual {res / ref:.2e} too large for mode {j + 1}", index=j + 1)
    shapes = translational_shapes(sys, phi)
    if normalization == "unit-max-abs":
        shapes = unit_max_abs(shapes)
    elif normalization != "mass":
        raise InvalidArgument(f"unknown normalization {normalization!r}")
    freqs = np.sqrt(omega2) / (2 * np.pi)
    return ModalSet(freqs, shapes, tuple(range(1, sys.n_nodes + 1)), normalization=normalization)


# Characteristic equations scaled by 1/cosh(x) so they stay O(1) for large x.
_CHARACTERISTIC = {
    Boundary.CANTILEVER: lambda x: np.cos(x) + 1.0 / np.cosh(x),
    Boundary.CLAMPED_CLAMPED: lambda x: np.cos(x) - 1.0 / np.cosh(x),
    Boundary.FREE_FREE: lambda x: np.cos(x) - 1.0 / np.cosh(x),
    Boundary.CLAMPED_PINNED: lambda x: np.sin(x) - np.cos(x) * np.tanh(x),
}


def characteristic_roots(boundary, n_modes):
    """First ``n_modes`` positive roots beta_n L of the boundary's frequency equation."""
    boundary = Boundary.parse(boundary)
    if boundary is Boundary.PINNED_PINNED:
        return np.pi * np.arange(1, n_modes + 1, dtype=float)
    g = _CHARACTERISTIC[boundary]
    roots = []
    # each interval [k pi, (k+1) pi] holds at most one root for these equations
    k = 0
    while len(roots) < n_modes:
        # x = 0 is a double root of the free-free equation; start past it
        lo, hi = max(k * np.pi, 0.5), (k + 1) * np.pi
        k += 1
        if g(lo) * g(hi) > 0:
            continue
        try:
            roots.append(brentq(g, lo, hi, xtol=1e-13, rtol=1e-15))
        except (RuntimeError, ValueError) as exc:
            raise NumericalFailure(f"root search failed near beta L = {lo:.3f}: {exc}",
                                   index=len(roots) + 1) from None
        if k > 4 * n_modes + 8:
            raise NumericalFailure("root search ran past the expected interval", index=len(roots) + 1)
    return np.array(roots)


def analytical_frequencies(spec: BeamSpec, n_modes):
    """Closed-form Euler-Bernoulli natural frequencies (Hz), f_n = (beta_n L)^2 c / 2 pi."""
    roots = characteristic_roots(spec.boundary, n_modes)
    return roots**2 * spec.c / (2 * np.pi)


def rayleigh_coefficients(zeta, f_low, f_high):
    """(alpha, beta) with modal damping exactly ``zeta`` at ``f_low`` and ``f_high``."""
    if not 0.0 <= zeta < 0.2:
        raise InvalidArgument(f"zeta must lie in [0, 0.2), got {zeta!r}")
    if not (f_low > 0 and f_high > 0) or math.isclose(f_low, f_high) or f_low > f_high:
        raise InvalidArgument(f"need 0 < f_low < f_high, got {f_low!r}, {f_high!r}")
    w1, w2 = 2 * np.pi * f_low, 2 * np.pi * f_high
    alpha = 2 * zeta * w1 * w2 / (w1 + w2)
    beta = 2 * zeta / (w1 + w2)
    return alpha, beta


def modal_damping(alpha, beta, omega):
    """Modal damping ratio alpha / (2 w) + beta w / 2 of a Rayleigh model."""
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(omega > 0, alpha / (2 * omega) + beta * omega / 2, np.inf if alpha else 0.0)


def rayleigh_damping(sys: SystemMatrices, zeta, f_low, f_high):
    alpha, beta = rayleigh_coefficients(zeta, f_low, f_high)
    C = alpha * sys.mass + beta * sys.stiffness
    return 0.5 * (C + C.T)
