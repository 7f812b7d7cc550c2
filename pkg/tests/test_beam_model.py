import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from beamoma.beam_model import (
    CALIBRATED_C,
    BeamSpec,
    Boundary,
    ModalSet,
    analytical_frequencies,
    assemble,
    characteristic_roots,
    element_matrices,
    modal_damping,
    modal_decomposition,
    preset_beam,
    rayleigh_coefficients,
    rayleigh_damping,
    solve_modal,
    unit_max_abs,
)
from beamoma.errors import InvalidArgument

# roots of cos x cosh x = -1, cos x cosh x = 1 and tan x = tanh x, found by a
# bracket scan plus plain bisection on the unscaled equations
ROOTS = {
    Boundary.CANTILEVER: [1.8751040687, 4.6940911330, 7.8547574382, 10.9955407349, 14.1371683910],
    Boundary.CLAMPED_CLAMPED: [4.7300407449, 7.8532046241, 10.9956078380, 14.1371654913, 17.2787596574],
    Boundary.CLAMPED_PINNED: [3.9266023120, 7.0685827456, 10.2101761228, 13.3517687778, 16.4933614313],
    Boundary.PINNED_PINNED: list(np.pi * np.arange(1, 6)),
}


def hermite_element_by_quadrature(ei, m, h):
    """Element matrices by Gauss-Legendre integration of the cubic Hermite functions."""
    xi, w = np.polynomial.legendre.leggauss(6)
    s = 0.5 * (xi + 1.0)  # [0, 1]
    N = np.array([1 - 3 * s**2 + 2 * s**3, h * (s - 2 * s**2 + s**3), 3 * s**2 - 2 * s**3, h * (-s**2 + s**3)])
    B = np.array([-6 + 12 * s, h * (-4 + 6 * s), 6 - 12 * s, h * (-2 + 6 * s)]) / h**2
    wq = 0.5 * w * h
    return ei * (B * wq) @ B.T, m * (N * wq) @ N.T


def test_element_matrices_match_quadrature():
    k, m = element_matrices(3.7, 1.9, 0.13)
    k_ref, m_ref = hermite_element_by_quadrature(3.7, 1.9, 0.13)
    assert_allclose(k, k_ref, rtol=1e-12, atol=1e-9)
    assert_allclose(m, m_ref, rtol=1e-12, atol=1e-14)


def test_element_rigid_motions_store_no_energy():
    k, _ = element_matrices(2.0, 1.0, 0.5)
    translation = np.array([1.0, 0.0, 1.0, 0.0])
    rotation = np.array([0.0, 1.0, 0.5, 1.0])  # w = x about node 1
    assert_allclose(k @ translation, 0.0, atol=1e-12)
    assert_allclose(k @ rotation, 0.0, atol=1e-12)


def test_element_mass_sums_to_total_mass():
    _, m = element_matrices(1.0, 2.5, 0.4)
    t = np.array([1.0, 0.0, 1.0, 0.0])
    assert t @ m @ t == pytest.approx(2.5 * 0.4)


@pytest.mark.parametrize("bad", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
def test_element_rejects_nonpositive_properties(bad):
    with pytest.raises(InvalidArgument):
        element_matrices(*bad)


@pytest.mark.parametrize("boundary,n_free", [
    (Boundary.CANTILEVER, 20),
    (Boundary.CLAMPED_CLAMPED, 18),
    (Boundary.PINNED_PINNED, 20),
    (Boundary.CLAMPED_PINNED, 19),
    (Boundary.FREE_FREE, 22),
])
def test_assemble_removes_constrained_dofs(boundary, n_free):
    sys = assemble(BeamSpec(boundary=boundary))
    assert sys.n_dof == n_free
    assert_allclose(sys.stiffness, sys.stiffness.T, atol=0)
    assert_allclose(sys.mass, sys.mass.T, atol=0)
    assert np.all(np.linalg.eigvalsh(sys.mass) > 0)


def test_free_free_has_two_rigid_body_modes():
    omega2, _ = modal_decomposition(assemble(BeamSpec(boundary="free-free")))
    assert np.count_nonzero(omega2 == 0.0) == 2
    assert omega2[2] > 0


def test_cantilever_translation_nodes_skip_the_clamp():
    sys = assemble(preset_beam(1))
    assert sys.translation_nodes == tuple(range(2, 12))
    with pytest.raises(InvalidArgument):
        sys.dof_index(1, "translation")


@pytest.mark.parametrize("beam", [1, 2, 3, 4])
def test_modes_are_mass_orthonormal(beam):
    sys = assemble(preset_beam(beam))
    omega2, phi = modal_decomposition(sys)
    assert_allclose(phi.T @ sys.mass @ phi, np.eye(sys.n_dof), atol=1e-8)
    assert_allclose(phi.T @ sys.stiffness @ phi, np.diag(omega2), atol=1e-8 * omega2.max())


def test_solve_modal_unit_max_abs_shapes():
    modes = solve_modal(assemble(preset_beam(4)), 5)
    assert_allclose(np.abs(modes.shapes).max(axis=0), 1.0)
    for col in modes.shapes.T:
        assert col[np.argmax(np.abs(col))] == 1.0
    assert modes.nodes == tuple(range(1, 12))
    assert_allclose(modes.shapes[[0, -1]], 0.0)


def test_solve_modal_mass_normalization_option():
    sys = assemble(preset_beam(2))
    a = solve_modal(sys, 3)
    b = solve_modal(sys, 3, normalization="mass")
    assert_allclose(a.frequencies_hz, b.frequencies_hz)
    assert_allclose(unit_max_abs(b.shapes), a.shapes, atol=1e-12)
    with pytest.raises(InvalidArgument):
        solve_modal(sys, 3, normalization="nope")


def test_solve_modal_rejects_bad_mode_count():
    sys = assemble(preset_beam(1))
    with pytest.raises(InvalidArgument):
        solve_modal(sys, 0)
    with pytest.raises(InvalidArgument):
        solve_modal(sys, sys.n_dof + 1)


def test_pinned_pinned_shapes_are_sampled_sines():
    modes = solve_modal(assemble(preset_beam(3)), 5)
    x = np.linspace(0.0, 1.0, 11)
    for k in range(5):
        ref = unit_max_abs(np.sin((k + 1) * np.pi * x))
        # even modes have two equal extremes, so the sign is a tie-break
        ref *= np.sign(ref @ modes.shapes[:, k])
        assert_allclose(modes.shapes[:, k], ref, atol=1e-9)


@pytest.mark.parametrize("boundary", list(ROOTS))
def test_characteristic_roots_match_bisection(boundary):
    assert_allclose(characteristic_roots(boundary, 5), ROOTS[boundary], rtol=1e-9)


def test_free_free_elastic_roots_equal_clamped_clamped():
    assert_allclose(characteristic_roots("free-free", 5), ROOTS[Boundary.CLAMPED_CLAMPED], rtol=1e-9)


def test_analytical_frequency_formula():
    spec = preset_beam(1)
    f = analytical_frequencies(spec, 5)
    assert_allclose(f, np.array(ROOTS[Boundary.CANTILEVER]) ** 2 * CALIBRATED_C / (2 * np.pi), rtol=1e-9)
    assert spec.c == pytest.approx(CALIBRATED_C)


@pytest.mark.parametrize("beam", [1, 2, 3, 4])
def test_fem_converges_to_analytical(beam):
    spec = preset_beam(beam)
    exact = analytical_frequencies(spec, 5)
    gap10 = solve_modal(assemble(spec), 5).frequencies_hz / exact - 1
    spec20 = BeamSpec(n_elements=20, boundary=spec.boundary)
    gap20 = solve_modal(assemble(spec20), 5).frequencies_hz / exact - 1
    # consistent mass: conforming elements approach from above
    assert np.all(gap10 >= -1e-12)
    assert np.all(gap10 <= 0.01)
    assert np.all(gap20 <= gap10 + 1e-12)


def test_rayleigh_damping_hits_both_anchor_frequencies():
    alpha, beta = rayleigh_coefficients(0.01, 8.0, 460.0)
    zeta = modal_damping(alpha, beta, 2 * np.pi * np.array([8.0, 460.0]))
    assert_allclose(zeta, 0.01, rtol=1e-12)


def test_rayleigh_between_anchors_is_lighter():
    sys = assemble(preset_beam(1))
    modes = solve_modal(sys, 5)
    f = modes.frequencies_hz
    alpha, beta = rayleigh_coefficients(0.01, f[0], f[4])
    w = 2 * np.pi * f
    zeta = modal_damping(alpha, beta, w)
    assert_allclose(zeta, alpha / (2 * w) + beta * w / 2)
    assert np.all(zeta[1:4] > 0) and np.all(zeta[1:4] <= 0.01 * (1 + 1e-12))
    C = rayleigh_damping(sys, 0.01, f[0], f[4])
    assert_allclose(C, C.T, atol=0)
    _, phi = modal_decomposition(sys)
    assert_allclose(np.diag(phi.T @ C @ phi)[:5], 2 * zeta * w, rtol=1e-8)


@pytest.mark.parametrize("args", [(0.3, 1.0, 2.0), (-0.1, 1.0, 2.0), (0.01, 2.0, 1.0), (0.01, 2.0, 2.0)])
def test_rayleigh_rejects_bad_arguments(args):
    with pytest.raises(InvalidArgument):
        rayleigh_coefficients(*args)


def test_beam_spec_json_round_trip():
    spec = BeamSpec(length=2.0, ei=10.0, mass_per_length=3.0, n_elements=8, boundary="ClampedPinned",
                    damping_ratio=0.02)
    data = json.loads(json.dumps(spec.to_dict()))
    assert set(data) == {"length_m", "ei", "mass_per_length", "n_elements", "boundary", "damping_ratio"}
    assert BeamSpec.from_dict(data) == spec


@pytest.mark.parametrize("kwargs", [
    {"length": 0.0}, {"ei": -1.0}, {"n_elements": 1}, {"n_elements": 2.5},
    {"damping_ratio": 0.3}, {"boundary": "hinged"},
])
def test_beam_spec_validation(kwargs):
    with pytest.raises(InvalidArgument):
        BeamSpec(**kwargs)


def test_boundary_aliases():
    assert Boundary.parse("PinnedPinned") is Boundary.PINNED_PINNED
    assert Boundary.parse("clamped_clamped") is Boundary.CLAMPED_CLAMPED
    assert preset_beam(4).boundary is Boundary.CLAMPED_PINNED
    with pytest.raises(InvalidArgument):
        preset_beam(5)


def test_modal_set_csv_round_trip():
    modes = solve_modal(assemble(preset_beam(2)), 5)
    text = modes.to_csv()
    assert text.splitlines()[0].startswith("node,")
    back = ModalSet.from_csv(text)
    assert_allclose(back.frequencies_hz, modes.frequencies_hz, rtol=0)
    assert_allclose(back.shapes, modes.shapes, rtol=0)
    assert back.nodes == modes.nodes
    again = ModalSet.from_dict(json.loads(json.dumps(modes.to_dict())))
    assert_allclose(again.shapes, modes.shapes, rtol=0)


def test_common_scaling_of_stiffness_and_mass_changes_nothing():
    base = preset_beam(4)
    scaled = BeamSpec(ei=base.ei * 37.5, mass_per_length=base.mass_per_length * 37.5, boundary=base.boundary)
    a = solve_modal(assemble(base), 5)
    b = solve_modal(assemble(scaled), 5)
    assert_allclose(b.frequencies_hz, a.frequencies_hz, rtol=1e-10)
    assert_allclose(b.shapes, a.shapes, rtol=0, atol=1e-10)
    assert_allclose(analytical_frequencies(scaled, 5), analytical_frequencies(base, 5), rtol=1e-10)
