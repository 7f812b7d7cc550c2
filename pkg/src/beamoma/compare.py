"""Agreement between modal sets: MAC, mode pairing, sign alignment, frequency errors."""
from __future__ import annotations

import copy
import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, PairingConflict


def mac(a, b):
    """Modal assurance criterion (a.b)^2 / ((a.a)(b.b)) of two real shapes."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size or a.size < 2:
        raise InvalidArgument(f"shapes must have equal length >= 2, got {a.size} and {b.size}")
    aa = a @ a
    bb = b @ b
    if aa == 0 or bb == 0:
        raise InvalidArgument("MAC of a zero vector is undefined")
    value = (a @ b) ** 2 / (aa * bb)
    # Cauchy-Schwarz; roundoff can push a collinear pair a few ulps past 1
    assert -1e-12 <= value <= 1 + 1e-12, value
    return float(min(max(value, 0.0), 1.0))


@dataclass
class MacMatrix:
    values: np.ndarray
    labels_a: list
    labels_b: list

    @property
    def diagonal(self):
        return np.diag(self.values)

    def max_off_diagonal(self):
        v = self.values.copy()
        n = min(v.shape)
        v[np.arange(n), np.arange(n)] = -np.inf
        return float(v.max()) if v.size > n else 0.0

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([""] + [f"{f:.2f}" for f in self.labels_b])
        for f, row in zip(self.labels_a, self.values):
            writer.writerow([f"{f:.2f}"] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def to_dict(self):
        return {
            "rows_hz": [float(f) for f in self.labels_a],
            "cols_hz": [float(f) for f in self.labels_b],
            "values": self.values.tolist(),
        }


def _check_nodes(A, B):
    na, nb = tuple(A.nodes), tuple(B.nodes)
    if na != nb:
        only_a = sorted(set(na) - set(nb))
        only_b = sorted(set(nb) - set(na))
        raise InvalidArgument(f"node sets differ: only in first {only_a}, only in second {only_b}"
                              + ("" if only_a or only_b else " (order differs)"))


def mac_matrix(A, B) -> MacMatrix:
    """Pairwise MAC between the modes of two sets defined over the same nodes."""
    _check_nodes(A, B)
    SA, SB = A.shapes, B.shapes
    values = np.empty((SA.shape[1], SB.shape[1]))
    for i in range(SA.shape[1]):
        for j in range(SB.shape[1]):
            values[i, j] = mac(SA[:, i], SB[:, j])
    return MacMatrix(values, list(A.frequencies_hz), list(B.frequencies_hz))


def pair_modes(frequencies, reference_frequencies):
    """Index of the nearest reference mode for every mode; conflicts raise PairingConflict."""
    f = np.asarray(frequencies, dtype=float)
    r = np.asarray(reference_frequencies, dtype=float)
    if r.size == 0:
        raise InvalidArgument("reference set is empty")
    pairing = [int(np.argmin(np.abs(r - fi))) for fi in f]
    seen = {}
    for i, j in enumerate(pairing):
        if j in seen:
            raise PairingConflict(
                f"modes at {f[seen[j]]:.2f} Hz and {f[i]:.2f} Hz both pair with reference mode "
                f"{j + 1} ({r[j]:.2f} Hz)"
            )
        seen[j] = i
    return pairing


def _with_shapes(obj, shapes):
    out = copy.deepcopy(obj)
    if hasattr(out, "modes"):
        for m, col in zip(out.modes, shapes.T):
            m.shape = col.copy()
    else:
        out.shapes = shapes.copy()
    return out


def align(shapes_set, reference):
    """Flip each shape to correlate positively with its frequency-paired reference shape.

    Each aligned shape is rescaled so its largest magnitude is 1; the sign set
    by the alignment is kept.
    """
    _check_nodes(shapes_set, reference)
    pairing = pair_modes(shapes_set.frequencies_hz, reference.frequencies_hz)
    S = np.array(shapes_set.shapes, dtype=float, copy=True)
    R = reference.shapes
    for i, j in enumerate(pairing):
        col = S[:, i]
        peak = np.abs(col).max()
        if peak == 0:
            continue
        sign = -1.0 if col @ R[:, j] < 0 else 1.0
        S[:, i] = sign * col / peak
    return _with_shapes(shapes_set, S)


def shape_deviation(shapes_set, reference):
    """Per mode: max |aligned shape - reference shape| (reference scaled to max |.| = 1)."""
    aligned = align(shapes_set, reference)
    pairing = pair_modes(shapes_set.frequencies_hz, reference.frequencies_hz)
    R = reference.shapes
    out = []
    for i, j in enumerate(pairing):
        ref = R[:, j] / np.abs(R[:, j]).max()
        out.append(float(np.abs(aligned.shapes[:, i] - ref).max()))
    return out


def frequency_error_table(freqs_a, freqs_b):
    """Rows (mode, f_a, f_b, 100 (f_a - f_b) / f_b) for equally long frequency lists."""
    fa = np.asarray(getattr(freqs_a, "frequencies_hz", freqs_a), dtype=float)
    fb = np.asarray(getattr(freqs_b, "frequencies_hz", freqs_b), dtype=float)
    if fa.size != fb.size:
        raise InvalidArgument(f"mode counts differ: {fa.size} vs {fb.size}")
    return [(k + 1, float(a), float(b), float(100.0 * (a - b) / b)) for k, (a, b) in enumerate(zip(fa, fb))]


def frequency_table_csv(rows_by_method, n_modes=5):
    """Methods as rows and modes as columns (the natural-frequency table layout)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method"] + [f"frequency_{k + 1}" for k in range(n_modes)])
    for method, freqs in rows_by_method.items():
        vals = [f"{f:.2f}" if f is not None and np.isfinite(f) else "" for f in list(freqs)[:n_modes]]
        writer.writerow([method] + vals + [""] * (n_modes - len(vals)))
    return buf.getvalue()


def shape_table_csv(sets_by_method, nodes, n_modes=5):
    """Per mode, one row per method with the node values (the mode-shape table layout)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["mode", "method"] + [str(n) for n in nodes])
    for k in range(n_modes):
        for method, S in sets_by_method.items():
            if S is None or k >= S.shape[1]:
                continue
            writer.writerow([k + 1, method] + [f"{v:.4f}" for v in S[:, k]])
    return buf.getvalue()
