"""Integrator and master-equation tests.

Oracles used here, all independent of the implementation under test:
  * action of each dissipator on small Fock projectors, worked by hand
    (e.g. two-quantum loss on |2><2| gives 2|0><0| - 2|2><2|);
  * coherent states stay coherent under pure one-quantum loss, with
    alpha(t) = alpha0 * exp(-i t - gamma1 t / 2);
  * thermal states stay thermal under pure one-quantum gain, with
    nbar(t) = exp(kappa1 t) - 1;
  * the amplitude and energy equations of motion, evaluated as traces
    against an embedded random density matrix (support far from the
    truncation edge, so the identities hold to machine precision);
  * the classical limit cycle radius sqrt((kappa1 - gamma1) / gamma2) in
    the r = sqrt(2) |alpha| coordinate, and unit angular velocity;
  * a closed-form settling time for pure loss from a coherent state,
    T = ln(|alpha0|^2 / -ln(1 - eps^2)) / gamma1, from the pure-state
    trace distance sqrt(1 - |<0|alpha>|^2).
"""

import math

import numpy as np
import pytest

from qsl import core, dynamics
from qsl.dynamics import SLParams
from qsl.exceptions import (
    DimMismatch, InvalidSpec, NotReached, StepFailure, TruncationLeak,
)

from helpers import random_density


def _state(kind_text, dim, **kw):
    return core.make_state(core.parse_state_spec(kind_text), dim, **kw)


# ---------------------------------------------------------------------------
# parameters

def test_params_reject_negative_and_nonfinite():
    with pytest.raises(InvalidSpec):
        SLParams(-0.1, 0.0, 0.0)
    with pytest.raises(InvalidSpec):
        SLParams(0.0, float("nan"), 0.0)
    with pytest.raises(InvalidSpec):
        SLParams(0.0, 0.0, float("inf"))


def test_params_zero_triple_allowed_and_scaling():
    SLParams(0.0, 0.0, 0.0)
    p = SLParams(1.0, 0.25, 0.05).scaled(3.0)
    assert p.astuple() == pytest.approx((3.0, 0.75, 0.15), rel=1e-15)


# ---------------------------------------------------------------------------
# right-hand side

def test_rhs_two_quantum_loss_on_fock2():
    rho = _state("fock:2", 6)
    out = dynamics.lindblad_rhs(SLParams(0.0, 0.0, 1.0), rho)
    want = np.zeros((6, 6), dtype=complex)
    want[0, 0] = 2.0
    want[2, 2] = -2.0
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_rhs_pump_on_vacuum():
    rho = _state("fock:0", 5)
    out = dynamics.lindblad_rhs(SLParams(0.7, 0.0, 0.0), rho)
    want = np.zeros((5, 5), dtype=complex)
    want[0, 0] = -0.7
    want[1, 1] = 0.7
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_rhs_single_loss_on_fock1():
    rho = _state("fock:1", 4)
    out = dynamics.lindblad_rhs(SLParams(0.0, 0.3, 0.0), rho)
    want = np.zeros((4, 4), dtype=complex)
    want[0, 0] = 0.3
    want[1, 1] = -0.3
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_rhs_rotation_phases_coherences():
    # with all rates off, element (m, n) picks up the factor -i (m - n)
    dim = 5
    rho = random_density(np.random.default_rng(7), dim)
    out = dynamics.lindblad_rhs(SLParams(0.0, 0.0, 0.0), rho)
    m = np.arange(dim)
    want = -1j * (m[:, None] - m[None, :]) * rho
    np.testing.assert_allclose(out, want, atol=1e-14)


def test_rhs_traceless_and_hermitian():
    rng = np.random.default_rng(3)
    rho = random_density(rng, 12)
    out = dynamics.lindblad_rhs(SLParams(0.8, 0.3, 0.1), rho)
    assert abs(np.trace(out)) < 1e-13
    assert np.max(np.abs(out - out.conj().T)) < 1e-13


def test_rhs_rejects_nonsquare():
    with pytest.raises(DimMismatch):
        dynamics.lindblad_rhs(SLParams(0.1, 0.1, 0.1), np.zeros((3, 4)))
    with pytest.raises(DimMismatch):
        dynamics.lindblad_rhs(SLParams(0.1, 0.1, 0.1), np.zeros(9))


def test_amplitude_and_energy_identities():
    # support on the lowest 10 of 30 levels keeps the truncation corner inert
    dim, block = 30, 10
    rng = np.random.default_rng(11)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[:block, :block] = random_density(rng, block)
    params = SLParams(0.7, 0.3, 0.2)
    a = np.diag(np.sqrt(np.arange(1.0, dim)), 1).astype(complex)
    ad = a.conj().T
    n = ad @ a
    out = dynamics.lindblad_rhs(params, rho)

    ex = lambda op: np.trace(op @ rho)
    da = np.trace(a @ out)
    da_want = (-1j * ex(a) + 0.5 * (params.kappa1 - params.gamma1) * ex(a)
               - params.gamma2 * ex(ad @ a @ a))
    assert abs(da - da_want) <= 1e-12 * max(1.0, abs(da_want))

    dn = np.trace(n @ out).real
    dn_want = (params.kappa1 + (params.kappa1 - params.gamma1) * ex(n).real
               - 2.0 * params.gamma2 * ex(ad @ ad @ a @ a).real)
    assert abs(dn - dn_want) <= 1e-12 * max(1.0, abs(dn_want))


# ---------------------------------------------------------------------------
# integrator core

def test_stepper_exponential_decay():
    f = lambda t, y: -y
    y = np.array([1.0 + 0j])
    for _, _, t, y in dynamics._dp45_steps(f, 0.0, y, 5.0, 1e-9, 1e-12):
        pass
    assert abs(t - 5.0) < 1e-12
    assert abs(y[0] - math.exp(-5.0)) < 1e-8


def test_stepper_nan_rhs_fails_instead_of_hanging():
    f = lambda t, y: np.array([float("nan")])
    with pytest.raises(StepFailure):
        for _ in dynamics._dp45_steps(f, 0.0, np.array([1.0]), 1.0, 1e-8, 1e-10):
            pass


# ---------------------------------------------------------------------------
# evolve

def test_pure_rotation_returns_after_full_period():
    rho0 = _state("coherent:1", 15)
    traj = dynamics.evolve(SLParams(0.0, 0.0, 0.0), rho0, 2 * math.pi, tol=1e-8)
    assert core.trace_distance(traj.final_state, rho0) <= 1e-7
    traj.validate()


def test_pure_rotation_amplitude_phase():
    rho0 = _state("coherent:1", 15)
    traj = dynamics.evolve(SLParams(0.0, 0.0, 0.0), rho0, 1.0, tol=1e-8,
                           sample_every=0.25)
    np.testing.assert_allclose(traj.times, [0.0, 0.25, 0.5, 0.75, 1.0],
                               atol=1e-12)
    a0 = traj.exp_a[0]
    for t, av in zip(traj.times, traj.exp_a):
        assert abs(av - a0 * np.exp(-1j * t)) < 1e-7


def test_coherent_state_under_pure_loss():
    gamma1, alpha0, dim = 0.4, 1.5, 20
    rho0 = _state(f"coherent:{alpha0}", dim)
    traj = dynamics.evolve(SLParams(0.0, gamma1, 0.0), rho0, 2.0, tol=1e-8,
                           sample_every=0.5, state_stride=1)
    for t, rho_t in zip(traj.state_times, traj.states):
        alpha_t = alpha0 * np.exp((-1j - gamma1 / 2) * t)
        ref = core.make_state(core.StateSpec.coherent(alpha_t), dim)
        assert core.trace_distance(rho_t, ref) < 1e-6
    np.testing.assert_allclose(
        traj.exp_a, [alpha0 * np.exp((-1j - gamma1 / 2) * t) for t in traj.times],
        atol=1e-7)


def test_thermal_state_under_pure_gain():
    kappa1, dim = 0.5, 40
    rho0 = _state("fock:0", dim)
    traj = dynamics.evolve(SLParams(kappa1, 0.0, 0.0), rho0, 2.0, tol=1e-8,
                           sample_every=1.0)
    nbar_end = math.exp(kappa1 * 2.0) - 1.0
    ref = core.make_state(core.StateSpec.thermal(nbar_end), dim, leak_tol=1e-6)
    assert core.trace_distance(traj.final_state, ref) < 1e-5
    np.testing.assert_allclose(
        traj.exp_n, [math.exp(kappa1 * t) - 1.0 for t in traj.times], atol=1e-6)


def test_evolve_records_reference_distance():
    rho0 = _state("coherent:1", 14)
    vac = _state("fock:0", 14)
    traj = dynamics.evolve(SLParams(0.0, 0.8, 0.0), rho0, 4.0, tol=1e-7,
                           sample_every=1.0, reference=vac)
    assert traj.dtr is not None and len(traj.dtr) == len(traj.times)
    assert traj.dtr[-1] < traj.dtr[0]
    with pytest.raises(DimMismatch):
        dynamics.evolve(SLParams(0.0, 0.8, 0.0), rho0, 1.0,
                        reference=np.eye(10) / 10)


def test_evolve_truncation_leak():
    rho0 = _state("fock:0", 10)
    with pytest.raises(TruncationLeak):
        dynamics.evolve(SLParams(0.5, 0.0, 0.0), rho0, 3.0, tol=1e-7,
                        sample_every=0.5)


def test_evolve_zero_time_and_bad_inputs():
    rho0 = _state("fock:1", 6)
    traj = dynamics.evolve(SLParams(0.1, 0.1, 0.1), rho0, 0.0)
    assert list(traj.times) == [0.0]
    assert traj.exp_n[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidSpec):
        dynamics.evolve(SLParams(0.1, 0.1, 0.1), rho0, -1.0)
    with pytest.raises(InvalidSpec):
        dynamics.evolve(SLParams(0.1, 0.1, 0.1), rho0, 1.0, tol=0.0)
    with pytest.raises(InvalidSpec):
        dynamics.evolve(SLParams(0.1, 0.1, 0.1), rho0, 1.0, sample_every=0.0)


def test_evolve_deterministic():
    rho0 = _state("coherent:1", 18)
    p = SLParams(0.3, 0.1, 0.05)
    t1 = dynamics.evolve(p, rho0, 1.5, tol=1e-7, sample_every=0.5)
    t2 = dynamics.evolve(p, rho0, 1.5, tol=1e-7, sample_every=0.5)
    assert np.array_equal(t1.exp_a, t2.exp_a)
    assert np.array_equal(t1.final_state, t2.final_state)


# ---------------------------------------------------------------------------
# settling time

def test_settling_time_pure_loss_closed_form():
    gamma1, eps = 0.5, 0.1
    dim = 12
    rho0 = _state("coherent:1", dim)
    vac = _state("fock:0", dim)
    t_exact = math.log(1.0 / -math.log(1.0 - eps ** 2)) / gamma1
    t_num = dynamics.steady_state_time(SLParams(0.0, gamma1, 0.0), rho0, eps, vac)
    assert abs(t_num - t_exact) <= 0.01 * t_exact


def test_settling_time_phase_invariant():
    dim, gamma1, eps = 12, 0.5, 0.1
    vac = _state("fock:0", dim)
    p = SLParams(0.0, gamma1, 0.0)
    t_a = dynamics.steady_state_time(p, _state("coherent:1", dim), eps, vac)
    rot = core.make_state(core.StateSpec.coherent(np.exp(2j * np.pi / 3)), dim)
    t_b = dynamics.steady_state_time(p, rot, eps, vac)
    assert abs(t_a - t_b) <= 3e-3 * t_a


def test_settling_time_already_converged():
    vac = _state("fock:0", 8)
    assert dynamics.steady_state_time(SLParams(0.1, 0.0, 0.1), vac, 0.5, vac) == 0.0


def test_settling_time_not_reached():
    # rotation alone leaves a Fock state fixed at unit distance from vacuum
    one = _state("fock:1", 8)
    vac = _state("fock:0", 8)
    with pytest.raises(NotReached):
        dynamics.steady_state_time(SLParams(0.0, 0.0, 0.0), one, 0.5, vac,
                                   t_cap=50.0)


# ---------------------------------------------------------------------------
# classical limit

def test_classical_limit_cycle_radius():
    params = SLParams(1.0, 0.1, 0.05)
    states = dynamics.classical_trajectory(params, 0.1 + 0j, 60.0, tol=1e-10)
    r_lc = math.sqrt((params.kappa1 - params.gamma1) / params.gamma2)
    assert abs(states[-1].r - r_lc) < 1e-6
    assert states[-1].t == pytest.approx(60.0, abs=1e-9)


def test_classical_on_cycle_rotates_uniformly():
    params = SLParams(1.0, 0.1, 0.05)
    alpha_lc = 3.0  # |alpha| = r_lc / sqrt(2) puts the start on the cycle
    states = dynamics.classical_trajectory(params, alpha_lc + 0j, math.pi / 2,
                                           tol=1e-11)
    final = states[-1]
    assert abs(final.alpha - alpha_lc * np.exp(-1j * math.pi / 2)) < 1e-8
    assert final.theta == pytest.approx(-math.pi / 2, abs=1e-8)
    assert final.r == pytest.approx(math.sqrt(18.0), abs=1e-8)


def test_classical_below_bifurcation_decays():
    params = SLParams(0.1, 0.5, 0.05)
    states = dynamics.classical_trajectory(params, 1.0 + 0j, 40.0)
    assert abs(states[-1].alpha) < 1e-2  # decay rate (gamma1 - kappa1)/2 = 0.2
    zero = dynamics.classical_trajectory(params, 0j, 5.0)
    assert zero[-1].alpha == 0j


# ---------------------------------------------------------------------------
# coherence deviation

def test_coherence_deviation_values_and_shape():
    rho = np.array([[0.6, 0.2j], [-0.2j, 0.4]], dtype=complex)
    ss = np.array([[0.5, 0.1], [0.1, 0.5]], dtype=complex)
    dev = dynamics.coherence_deviation(rho, ss)
    np.testing.assert_allclose(dev, [[0.1, 0.1], [0.1, 0.1]], atol=1e-14)
    assert dev.dtype.kind == "f"
    with pytest.raises(DimMismatch):
        dynamics.coherence_deviation(rho, np.eye(3))
