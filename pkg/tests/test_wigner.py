"""Wigner machinery tests.

The primary oracle here is direct quadrature of the defining integral,
W(x, p) = (1/2pi) Int psi_m(x - y/2) psi_n(x + y/2) e^{ipy} dy,
with Hermite-function wavefunctions built by their own recurrence. It is
spectrally accurate on a wide trapezoid because the integrand is entire
with Gaussian decay. Everything the closed-form element code produces is
validated against it for m, n <= 8 before anything else trusts it.

Other independent references: the analytic negative volume of the first
excited Fock state, 2 e^{-1/2} - 1; thermal-state purity 1/(2 nbar + 1);
coherent-state moments; and the rotation generator applied to a Gaussian,
which has a closed form.
"""

import math

import numpy as np
import pytest

from qsl import core, dynamics, steadystate, wigner
from qsl.dynamics import SLParams
from qsl.exceptions import (
    GridMismatch, GridTooCoarse, GridTooSmall, InvalidSpec, NotNormalized,
)


def _hermite_psi(k, u):
    """Harmonic-oscillator wavefunction psi_k(u), stable recurrence."""
    h0 = np.pi ** -0.25 * np.exp(-0.5 * u * u)
    if k == 0:
        return h0
    h1 = math.sqrt(2.0) * u * h0
    for j in range(2, k + 1):
        h0, h1 = h1, u * math.sqrt(2.0 / j) * h1 - math.sqrt((j - 1.0) / j) * h0
    return h1


def _quad_element(m, n, x, p, half=18.0, points=1201):
    y = np.linspace(-half, half, points)
    integrand = (_hermite_psi(m, x - 0.5 * y) * _hermite_psi(n, x + 0.5 * y)
                 * np.exp(1j * p * y))
    return np.trapezoid(integrand, dx=y[1] - y[0]) / (2.0 * np.pi)


def _state(text, dim, **kw):
    return core.make_state(core.parse_state_spec(text), dim, **kw)


# ---------------------------------------------------------------------------
# closed form against the quadrature oracle

def test_elements_match_quadrature():
    xs = np.linspace(-3.0, 3.0, 7)
    ps = np.linspace(-2.8, 2.8, 5)
    grid = wigner.WignerGrid(x=xs, p=ps)
    for m in range(9):
        for n in range(m + 1):
            vals = wigner.fock_wigner_element(m, n, grid)
            for i, x in enumerate(xs):
                for j, p in enumerate(ps):
                    want = _quad_element(m, n, x, p)
                    assert abs(vals[i, j] - want) < 1e-9, (m, n, x, p)


def test_element_transpose_is_conjugate():
    grid = wigner.WignerGrid(x=np.linspace(-2, 2, 9), p=np.linspace(-2, 2, 9))
    a = wigner.fock_wigner_element(4, 1, grid)
    b = wigner.fock_wigner_element(1, 4, grid)
    np.testing.assert_allclose(b, np.conj(a), atol=1e-14)


def test_element_vacuum_closed_form():
    grid = wigner.phase_grid(3.0, 41)
    vals = wigner.fock_wigner_element(0, 0, grid)
    X, P = grid.meshes()
    np.testing.assert_allclose(vals, np.exp(-(X ** 2 + P ** 2)) / np.pi,
                               atol=1e-14)


def test_element_alternating_origin_values():
    grid = wigner.WignerGrid(x=np.linspace(-2, 2, 5), p=np.linspace(-2, 2, 5))
    for n in range(6):
        vals = wigner.fock_wigner_element(n, n, grid)
        want = (-1.0) ** n / np.pi
        assert vals[2, 2] == pytest.approx(want, abs=1e-12)
        assert _quad_element(n, n, 0.0, 0.0) == pytest.approx(want, abs=1e-9)


def test_element_orthonormality_under_overlap():
    grid = wigner.phase_grid(7.0, 141)
    elems = {(m, n): wigner.fock_wigner_element(m, n, grid)
             for m in range(4) for n in range(4)}
    area = grid.cell_area
    for (m, n), em in elems.items():
        for (mp, np_), ep in elems.items():
            got = 2.0 * np.pi * np.sum(em * ep) * area
            want = 1.0 if (n == mp and m == np_) else 0.0
            assert abs(got - want) < 1e-6, (m, n, mp, np_)


def test_element_rejects_bad_levels():
    grid = wigner.phase_grid(2.0, 11)
    with pytest.raises(InvalidSpec):
        wigner.fock_wigner_element(-1, 0, grid)
    with pytest.raises(InvalidSpec):
        wigner.fock_wigner_element(1.5, 0, grid)


# ---------------------------------------------------------------------------
# density-matrix synthesis

def test_coherent_state_gaussian():
    beta = 1.0 + 0.5j
    rho = _state("coherent:1+0.5j", 25)
    grid = wigner.phase_grid(7.0, 141)
    W = wigner.wigner_of_rho(rho, grid)
    assert W.integral() == pytest.approx(1.0, abs=1e-6)
    i, j = np.unravel_index(np.argmax(W.values), W.values.shape)
    x0, p0 = math.sqrt(2.0) * beta.real, math.sqrt(2.0) * beta.imag
    assert abs(W.x[i] - x0) <= W.dx
    assert abs(W.p[j] - p0) <= W.dp
    assert W.values[i, j] == pytest.approx(1.0 / np.pi, abs=2e-3)


def test_fock1_negative_at_origin():
    rho = _state("fock:1", 6)
    grid = wigner.phase_grid(5.0, 101)
    W = wigner.wigner_of_rho(rho, grid)
    assert W.values[50, 50] == pytest.approx(-1.0 / np.pi, abs=1e-10)


def test_steady_state_rotationally_invariant():
    ss = steadystate.steady_state_numeric(SLParams(1.0, 0.9, 0.2), 30)
    W = wigner.wigner_of_rho(ss.rho, wigner.phase_grid(7.0, 141))
    quarter_turn = W.values[::-1, :].T  # sends W(x, p) to W(-p, x)
    assert np.max(np.abs(W.values - quarter_turn)) <= 1e-6 * np.max(np.abs(W.values))
    assert W.integral() == pytest.approx(1.0, abs=1e-6)


def test_linearity_and_split():
    rho1 = _state("fock:1", 12)
    rho2 = _state("coherent:1", 12)
    grid = wigner.phase_grid(7.0, 101)
    mix = 0.3 * rho1 + 0.7 * rho2
    w_mix = wigner.wigner_of_rho(mix, grid)
    w1 = wigner.wigner_of_rho(rho1, grid)
    w2 = wigner.wigner_of_rho(rho2, grid)
    np.testing.assert_allclose(w_mix.values, 0.3 * w1.values + 0.7 * w2.values,
                               atol=1e-12)
    w_d = wigner.wigner_of_rho(mix, grid, part="diagonal")
    w_od = wigner.wigner_of_rho(mix, grid, part="offdiag")
    np.testing.assert_allclose(w_mix.values, w_d.values + w_od.values,
                               atol=1e-12)


def test_grid_too_small_for_displaced_state():
    rho = _state("coherent:2", 28)
    with pytest.raises(GridTooSmall):
        wigner.wigner_of_rho(rho, wigner.phase_grid(3.5, 71))


def test_marginals_reproduce_moments():
    rho = _state("coherent:1+1j", 30)
    grid = wigner.phase_grid(8.0, 161)
    W = wigner.wigner_of_rho(rho, grid)
    mx, mp = wigner.marginals(W)
    x_mean = float(np.sum(grid.x * mx) * grid.dx)
    x_sq = float(np.sum(grid.x ** 2 * mx) * grid.dx)
    p_mean = float(np.sum(grid.p * mp) * grid.dp)
    p_sq = float(np.sum(grid.p ** 2 * mp) * grid.dp)
    dim = rho.shape[0]
    xop = (core.annihilate(dim) + core.create(dim)) / math.sqrt(2.0)
    pop = (core.annihilate(dim) - core.create(dim)) / (1j * math.sqrt(2.0))
    assert x_mean == pytest.approx(float(np.trace(xop @ rho).real), abs=1e-4)
    assert x_sq == pytest.approx(float(np.trace(xop @ xop @ rho).real), abs=1e-4)
    assert p_mean == pytest.approx(float(np.trace(pop @ rho).real), abs=1e-4)
    assert p_sq == pytest.approx(float(np.trace(pop @ pop @ rho).real), abs=1e-4)


# ---------------------------------------------------------------------------
# negativity

def test_negative_volume_coherent_is_zero():
    W = wigner.wigner_of_rho(_state("coherent:1", 15), wigner.phase_grid(7.0, 141))
    report = wigner.negative_volume(W)
    assert report.volume <= 1e-6
    assert report.volume >= 0.0


def test_negative_volume_fock1_analytic():
    # integral of |W| for |1><1| works out to 4 e^{-1/2} - 1; the kink of
    # |W| along the node circle caps the trapezoid at second order, so the
    # grid has to be fine.
    W = wigner.wigner_of_rho(_state("fock:1", 6), wigner.phase_grid(6.0, 601))
    report = wigner.negative_volume(W)
    want = 2.0 * math.exp(-0.5) - 1.0
    assert report.volume == pytest.approx(want, abs=2e-5)
    assert report.error_estimate < 1e-3
    assert abs(report.volume - want) <= 4.0 * max(report.error_estimate, 1e-6)


def test_negative_volume_requires_normalization():
    W = wigner.wigner_of_rho(_state("fock:1", 6), wigner.phase_grid(6.0, 201))
    with pytest.raises(NotNormalized):
        wigner.negative_volume(W.with_values(2.0 * W.values))


# ---------------------------------------------------------------------------
# overlap formula

def test_overlap_energy_and_purity():
    nbar, dim = 1.0, 30
    rho = _state("thermal:1", dim, leak_tol=1e-6)
    grid = wigner.phase_grid(8.5, 171)
    W = wigner.wigner_of_rho(rho, grid)
    w_num = wigner.wigner_of_operator(np.diag(np.arange(dim, dtype=complex)),
                                      grid)
    energy = wigner.overlap_expectation(W, w_num)
    assert energy == pytest.approx(nbar, abs=1e-4)
    purity = wigner.overlap_expectation(W, W)
    assert purity == pytest.approx(1.0 / (2.0 * nbar + 1.0), abs=1e-4)


def test_overlap_diagonal_part_carries_the_energy():
    rho = _state("coherent:1", 20)
    grid = wigner.phase_grid(7.0, 161)
    w_num = wigner.wigner_of_operator(np.diag(np.arange(20, dtype=complex)),
                                      grid)
    full = wigner.overlap_expectation(wigner.wigner_of_rho(rho, grid), w_num)
    diag = wigner.overlap_expectation(
        wigner.wigner_of_rho(rho, grid, part="diagonal"), w_num)
    off = wigner.overlap_expectation(
        wigner.wigner_of_rho(rho, grid, part="offdiag"), w_num)
    assert full == pytest.approx(1.0, abs=1e-4)  # coherent(1) has <n> = 1
    assert diag == pytest.approx(full, abs=1e-6)
    assert abs(off) < 1e-6


def test_overlap_grid_mismatch():
    g1 = wigner.phase_grid(6.0, 101)
    g2 = wigner.phase_grid(6.5, 101)
    W1 = wigner.wigner_of_rho(_state("fock:0", 5), g1)
    W2 = wigner.wigner_of_rho(_state("fock:0", 5), g2)
    with pytest.raises(GridMismatch):
        wigner.overlap_expectation(W1, W2)


# ---------------------------------------------------------------------------
# evolution operator on the grid

def test_stencils_exact_on_polynomials():
    ax = np.linspace(-2.0, 2.0, 41)
    grid = wigner.WignerGrid(x=ax, p=ax.copy())
    X, P = grid.meshes()
    f = X ** 3 * P ** 2
    d = wigner._axis_derivative(f, 2, grid.dx, axis=0)
    d = wigner._axis_derivative(d, 1, grid.dp, axis=1)
    Xc, Pc = np.meshgrid(ax[3:-3], ax[3:-3], indexing="ij")
    np.testing.assert_allclose(d, 12.0 * Xc * Pc, atol=1e-9)


def test_rotation_generator_on_gaussian():
    beta = 1.2 + 0.4j
    rho = _state("coherent:1.2+0.4j", 25)
    grid = wigner.phase_grid(7.0, 281)
    W = wigner.wigner_of_rho(rho, grid)
    out = wigner.apply_eom_operator(W, SLParams(0.0, 0.0, 0.0))
    x0, p0 = math.sqrt(2.0) * beta.real, math.sqrt(2.0) * beta.imag
    Xc, Pc = out.meshes()
    Wc = W.values[3:-3, 3:-3]
    want = 2.0 * (Xc * p0 - Pc * x0) * Wc
    scale = np.max(np.abs(want))
    assert np.max(np.abs(out.values - want)) <= 1e-4 * scale


def test_two_quantum_row_vanishes_at_origin():
    rho = _state("fock:2", 10)
    grid = wigner.phase_grid(6.0, 121)  # odd point count keeps the origin
    W = wigner.wigner_of_rho(rho, grid)
    out = wigner.apply_eom_operator(W, SLParams(0.0, 0.0, 1.0))
    mid = out.x.size // 2
    assert out.x[mid] == 0.0 and out.p[mid] == 0.0
    assert abs(out.values[mid, mid]) <= 1e-12 * np.max(np.abs(out.values))


def test_eom_matches_hilbert_space_route():
    params = SLParams(0.5, 0.1, 0.1)
    rho = _state("coherent:1", 20)
    grid = wigner.phase_grid(6.5, 261)
    W = wigner.wigner_of_rho(rho, grid)
    fd = wigner.apply_eom_operator(W, params)
    rhs = dynamics.lindblad_rhs(params, rho)
    hilbert = wigner.wigner_of_operator(rhs, grid).values[3:-3, 3:-3]
    rel = (np.linalg.norm(fd.values - hilbert)
           / np.linalg.norm(hilbert))
    assert rel <= 1e-3


def test_eom_grid_too_coarse():
    grid = wigner.phase_grid(5.0, 9)
    W = grid.with_values(np.zeros((9, 9)))
    with pytest.raises(GridTooCoarse):
        wigner.apply_eom_operator(W, SLParams(0.1, 0.1, 0.1))


# ---------------------------------------------------------------------------
# grid plumbing

def test_phase_grid_defaults_and_validation():
    g = wigner.phase_grid(energy=10.5)
    assert g.x.size == 201 and g.p.size == 201
    assert g.x[-1] == pytest.approx(math.sqrt(21.0) + 3.0, rel=1e-12)
    assert wigner.phase_grid(energy=0.1).x[-1] == 5.0  # floor kicks in
    assert wigner.phase_grid().x[-1] == 5.0
    with pytest.raises(InvalidSpec):
        wigner.phase_grid(-1.0)
    with pytest.raises(InvalidSpec):
        wigner.WignerGrid(x=np.array([0.0, 1.0, 3.0]), p=np.array([0.0, 1.0]))
    with pytest.raises(InvalidSpec):
        wigner.WignerGrid(x=np.array([0.0, 1.0]), p=np.array([0.0, 1.0]),
                          values=np.zeros((3, 3)))
