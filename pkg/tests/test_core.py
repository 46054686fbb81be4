"""Operator/state construction and the elementary functionals.

Oracles used here, written before the implementations they pin:
  * pure-state trace distance sqrt(1 - |<psi|phi>|^2)
  * diagonal-state trace distance (1/2) sum |p_k - q_k|
  * even/odd cat norm^2 = 2 (1 + cos(phase) e^(-2|beta|^2)) via direct
    inner products of coherent amplitude vectors
"""

import math

import numpy as np
import pytest

from helpers import random_density, random_ket
from qsl import core
from qsl.exceptions import InvalidSpec, TruncationLeak


def test_annihilate_entries():
    a = core.annihilate(5)
    expected = np.zeros((5, 5), dtype=complex)
    for n in range(1, 5):
        expected[n - 1, n] = math.sqrt(n)
    assert np.array_equal(a, expected)


def test_number_is_create_times_annihilate():
    n = 12
    a = core.annihilate(n)
    assert np.allclose(core.create(n) @ a, core.number(n), atol=1e-13)
    assert np.allclose(core.hamiltonian(n), core.number(n) + 0.5 * np.eye(n))


def test_commutator_truncation_artifact():
    # [a, a^dag] = 1 except the bottom-right corner, which is 1 - N exactly.
    # Bit-exactness is impossible for fl(sqrt(n))^2, so pin to 1e-13.
    for dim in (2, 5, 37):
        a = core.annihilate(dim)
        comm = a @ core.create(dim) - core.create(dim) @ a
        expected = np.eye(dim, dtype=complex)
        expected[-1, -1] = 1 - dim
        assert np.max(np.abs(comm - expected)) < 1e-13


def test_build_operator_dispatch():
    assert np.array_equal(core.build_operator("annihilate", 4), core.annihilate(4))
    assert np.array_equal(core.build_operator("hamiltonian", 4), core.hamiltonian(4))
    with pytest.raises(InvalidSpec):
        core.build_operator("displace", 4)
    with pytest.raises(InvalidSpec):
        core.build_operator("number", 1)


# ---------------------------------------------------------------------------
# states


STATE_SPECS = [
    core.StateSpec.fock(0),
    core.StateSpec.fock(3),
    core.StateSpec.thermal(0.5),
    core.StateSpec.coherent(1.2 + 0.3j),
    core.StateSpec.cat(2.0, 0.0),
    core.StateSpec.cat(2.0, math.pi),
    core.StateSpec.superposition([(2, 1.0), (5, 1.0)]),
]


@pytest.mark.parametrize("spec", STATE_SPECS, ids=lambda s: s.label())
def test_states_satisfy_density_invariants(spec):
    rho = core.make_state(spec, 40)
    core.validate_density(rho)
    # all of these are built on ample dimensions, trace is renormalized exactly
    assert abs(np.trace(rho) - 1) < 1e-14


def test_coherent_moments():
    beta = 0.7 - 1.1j
    dim = 40
    rho = core.make_state(core.StateSpec.coherent(beta), dim)
    a = core.annihilate(dim)
    assert abs(core.expectation(a, rho) - beta) < 1e-12
    assert abs(core.expectation(core.number(dim), rho) - abs(beta) ** 2) < 1e-11


def test_thermal_occupation():
    rho = core.make_state(core.StateSpec.thermal(0.8), 80)
    got = core.expectation(core.number(80), rho).real
    assert abs(got - 0.8) < 1e-10


def test_cat_norm_matches_overlap_oracle():
    # oracle: norm^2 of |b> + e^{i phi}|-b> from explicit amplitude vectors
    dim = 60
    for beta, phase in [(2.0, 0.0), (2.0, math.pi), (1.3, 0.7)]:
        u = core.coherent_ket(beta, dim) + np.exp(1j * phase) * core.coherent_ket(-beta, dim)
        numeric = float(np.vdot(u, u).real)
        analytic = 2.0 * (1.0 + math.cos(phase) * math.exp(-2 * abs(beta) ** 2))
        assert abs(numeric - analytic) < 1e-12
        # and the built state is a unit-trace projector onto that vector
        rho = core.make_state(core.StateSpec.cat(beta, phase), dim)
        assert abs(np.trace(rho @ rho) - 1) < 1e-12


def test_even_cat_has_no_odd_levels():
    rho = core.make_state(core.StateSpec.cat(2.0, 0.0), 40)
    pops = np.real(np.diag(rho))
    assert np.max(pops[1::2]) < 1e-15


def test_truncation_leak_raised():
    with pytest.raises(TruncationLeak):
        core.make_state(core.StateSpec.coherent(5.0), 10)
    with pytest.raises(TruncationLeak):
        core.make_state(core.StateSpec.thermal(3.0), 20)
    with pytest.raises(TruncationLeak):
        core.make_state(core.StateSpec.fock(7), 7)
    # generous dimension passes
    core.make_state(core.StateSpec.thermal(3.0), 80)


def test_invalid_specs_rejected():
    with pytest.raises(InvalidSpec):
        core.StateSpec.fock(-1)
    with pytest.raises(InvalidSpec):
        core.StateSpec.thermal(-0.2)
    with pytest.raises(InvalidSpec):
        core.StateSpec.superposition([])
    with pytest.raises(InvalidSpec):
        core.StateSpec.superposition([(0, 0.0)])
    with pytest.raises(InvalidSpec):
        core.check_dim(1)
    with pytest.raises(InvalidSpec):
        core.check_dim(2.0)


def test_parse_state_spec():
    assert core.parse_state_spec("fock:3") == core.StateSpec.fock(3)
    assert core.parse_state_spec("thermal:1.5") == core.StateSpec.thermal(1.5)
    assert core.parse_state_spec("coherent:1+2j") == core.StateSpec.coherent(1 + 2j)
    assert core.parse_state_spec("cat:2:3.14") == core.StateSpec.cat(2.0, 3.14)
    spec = core.parse_state_spec("superpos:2=1,5=1")
    assert spec.amplitudes == ((2, 1 + 0j), (5, 1 + 0j))
    for bad in ("foo:1", "fock:x", "fock", "cat:"):
        with pytest.raises(InvalidSpec):
            core.parse_state_spec(bad)


# ---------------------------------------------------------------------------
# functionals


def test_trace_distance_pure_state_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        psi, phi = random_ket(rng, 9), random_ket(rng, 9)
        d = core.trace_distance(np.outer(psi, psi.conj()), np.outer(phi, phi.conj()))
        oracle = math.sqrt(max(0.0, 1.0 - abs(np.vdot(psi, phi)) ** 2))
        assert abs(d - oracle) < 1e-12


def test_trace_distance_diagonal_oracle():
    rng = np.random.default_rng(8)
    for _ in range(25):
        p, q = rng.random(12), rng.random(12)
        p, q = p / p.sum(), q / q.sum()
        d = core.trace_distance(np.diag(p).astype(complex), np.diag(q).astype(complex))
        assert abs(d - 0.5 * np.sum(np.abs(p - q))) < 1e-12


def test_trace_distance_metric_properties():
    rng = np.random.default_rng(9)
    for _ in range(25):
        r1, r2, r3 = (random_density(rng, 8) for _ in range(3))
        d12 = core.trace_distance(r1, r2)
        d21 = core.trace_distance(r2, r1)
        assert abs(d12 - d21) < 1e-12
        assert 0.0 <= d12 <= 1.0 + 1e-12
        assert d12 <= core.trace_distance(r1, r3) + core.trace_distance(r3, r2) + 1e-9
    assert core.trace_distance(r1, r1) == 0.0


def test_hs_inner_conjugate_symmetry():
    rng = np.random.default_rng(10)
    for _ in range(25):
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        b = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        assert abs(core.hs_inner(a, b) - np.conj(core.hs_inner(b, a))) < 1e-12
        # matches the trace definition
        assert abs(core.hs_inner(a, b) - np.trace(a.conj().T @ b)) < 1e-12


def test_validate_density_rejects_bad_inputs():
    good = core.make_state(core.StateSpec.fock(1), 4)
    core.validate_density(good)
    with pytest.raises(InvalidSpec):
        core.validate_density(good * 1.5)
    skew = good.copy()
    skew[0, 1] = 0.3
    with pytest.raises(InvalidSpec):
        core.validate_density(skew)
    neg = np.diag([1.2, -0.2, 0.0, 0.0]).astype(complex)
    with pytest.raises(InvalidSpec):
        core.validate_density(neg)
