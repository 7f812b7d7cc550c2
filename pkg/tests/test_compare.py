import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from beamoma.beam_model import ModalSet, assemble, preset_beam, solve_modal
from beamoma.compare import (
    align,
    frequency_error_table,
    frequency_table_csv,
    mac,
    mac_matrix,
    pair_modes,
    shape_deviation,
    shape_table_csv,
)
from beamoma.errors import InvalidArgument, PairingConflict
from reference_data import FREQUENCIES, SHAPES

NODES = tuple(range(1, 12))

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, 6, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)
scales = st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3)


def published(beam, method):
    shapes = np.array([SHAPES[beam][method][k] for k in range(1, 6)]).T
    return ModalSet(FREQUENCIES[beam][method], shapes, NODES, label=method)


def test_mac_basics():
    v = np.array([0.1, -0.4, 1.0, 0.3])
    assert mac(v, v) == pytest.approx(1.0, abs=1e-15)
    assert mac(v, -3.2 * v) == pytest.approx(1.0, abs=1e-15)
    assert mac([1.0, 0.0, 0.0], [0.0, 2.0, 0.0]) == 0.0
    with pytest.raises(InvalidArgument):
        mac([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidArgument):
        mac([0.0, 0.0], [1.0, 2.0])


def test_mac_of_published_cantilever_first_mode():
    # (a.b)^2 / (a.a b.b) evaluated by hand on the published FEM and FDD rows
    assert mac(SHAPES[1]["FEM"][1], SHAPES[1]["FDD"][1]) == pytest.approx(0.9999823922208587, abs=1e-12)


@given(vectors, vectors)
def test_mac_bounds_and_symmetry(a, b):
    value = mac(a, b)
    assert 0.0 <= value <= 1.0
    assert value == pytest.approx(mac(b, a), abs=1e-12)


@given(vectors, vectors, scales, scales)
@settings(max_examples=200)
def test_mac_scale_invariance(a, b, alpha, beta):
    assert mac(alpha * a, beta * b) == pytest.approx(mac(a, b), abs=1e-12)


def test_pinned_pinned_modes_are_mutually_orthogonal_on_the_grid():
    modes = solve_modal(assemble(preset_beam(3)), 5)
    m = mac_matrix(modes, modes)
    assert_allclose(m.values, np.eye(5), atol=1e-12)
    assert m.max_off_diagonal() < 1e-12


def test_published_identified_shapes_match_fem():
    for beam in (1, 2, 3, 4):
        fem = published(beam, "FEM")
        for method in ("PP", "FDD"):
            m = mac_matrix(published(beam, method), fem)
            assert np.all(m.diagonal >= 0.99)


def test_mac_matrix_requires_matching_nodes():
    modes = solve_modal(assemble(preset_beam(1)), 3)
    other = ModalSet(modes.frequencies_hz, modes.shapes[1:], NODES[1:])
    with pytest.raises(InvalidArgument, match="only in first \\[1\\]"):
        mac_matrix(modes, other)


def test_align_flips_to_the_reference_and_is_idempotent():
    ref = solve_modal(assemble(preset_beam(4)), 5)
    flipped = ModalSet(ref.frequencies_hz, ref.shapes * [-1, 1, -2, 1, 0.5], NODES)
    once = align(flipped, ref)
    assert_allclose(once.shapes, ref.shapes, atol=1e-12)
    assert_allclose(align(once, ref).shapes, once.shapes, atol=0)
    assert_allclose(flipped.shapes[:, 0], -ref.shapes[:, 0])  # input untouched
    assert shape_deviation(flipped, ref) == pytest.approx([0.0] * 5, abs=1e-12)


def test_pairing():
    assert pair_modes([8.4, 52.1, 146.0], [8.15, 51.1, 143.0, 280.3]) == [0, 1, 2]
    assert pair_modes([143.5, 8.0], [8.15, 51.1, 143.0]) == [2, 0]
    with pytest.raises(PairingConflict, match="reference mode 2"):
        pair_modes([49.0, 53.0], [8.15, 51.1, 143.0])
    with pytest.raises(InvalidArgument):
        pair_modes([1.0], [])


def test_frequency_error_examples():
    rows = frequency_error_table([612.95, 8.50], [572.20, 8.15])
    assert rows[0][0] == 1 and rows[1][0] == 2
    assert rows[0][3] == pytest.approx(7.12, abs=0.005)
    assert rows[1][3] == pytest.approx(4.3, abs=0.05)
    assert frequency_error_table([1.0], [1.0])[0][3] == 0.0
    with pytest.raises(InvalidArgument):
        frequency_error_table([1.0, 2.0], [1.0])


def test_table_layouts():
    text = frequency_table_csv({"FEM": [8.15, 51.1], "PP": [8.5]}, n_modes=2)
    assert text.splitlines() == ["method,frequency_1,frequency_2", "FEM,8.15,51.10", "PP,8.50,"]
    fem = published(1, "FEM")
    rows = shape_table_csv({"FEM": fem.shapes, "PP": None}, NODES, n_modes=2).splitlines()
    assert rows[0] == "mode,method," + ",".join(str(n) for n in NODES)
    assert rows[1].startswith("1,FEM,0.0000,0.0164,")
    assert len(rows) == 3


def test_mac_matrix_exports():
    modes = solve_modal(assemble(preset_beam(2)), 2)
    m = mac_matrix(modes, modes)
    assert m.to_csv().splitlines()[0] == "," + ",".join(f"{f:.2f}" for f in modes.frequencies_hz)
    d = m.to_dict()
    assert_allclose(d["values"], m.values)
    assert d["rows_hz"] == list(modes.frequencies_hz)
