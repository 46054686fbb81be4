"""Steady state of the oscillator: analytic populations, the rate-matrix
null space, working-regime classification and the fitted ring ansatz.

The steady state is diagonal in the number basis, so everything here works
in the N-dimensional population sector rather than the N^2-dimensional
space of density matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core
from .dynamics import SLParams
from .exceptions import (
    BelowBifurcation, ConvergenceFailure, DimTooLarge, DimTooSmall, InvalidSpec,
)

POPULATION_FLOOR = 1e-6  # a level matters when its population exceeds this
_LOG_EPS = math.log(1e-16)
_MAX_TERMS = 10_000


def _log_1f1(b, c, z):
    """log of the confluent hypergeometric series 1F1(b; c; z), b, c, z >= 0.

    Every term is positive, so the sum is accumulated in the log domain.
    The series is cut when the newest term is negligible against the partial
    sum and already shrinking; arguments so large that this takes more than
    10^4 terms are reported instead of truncated.
    """
    if z == 0.0:
        return 0.0
    log_z = math.log(z)
    n_terms = 256
    while True:
        j = np.arange(n_terms, dtype=float)
        log_ratio = log_z + np.log(b + j) - np.log(c + j) - np.log1p(j)
        log_terms = np.concatenate(([0.0], np.cumsum(log_ratio)))
        peak = log_terms.max()
        log_sum = peak + math.log(float(np.sum(np.exp(log_terms - peak))))
        if log_ratio[-1] < 0 and log_terms[-1] - log_sum < _LOG_EPS:
            return log_sum
        if n_terms >= _MAX_TERMS:
            raise ConvergenceFailure(
                f"series for 1F1({b:g}; {c:g}; {z:g}) still significant "
                f"after {n_terms} terms")
        n_terms = min(2 * n_terms, _MAX_TERMS)


def pnss_analytic(kappa_tilde, gamma_tilde, N):
    """Steady-state populations from the closed form, levels 0..N-1.

    kappa_tilde = kappa1/gamma2 and gamma_tilde = gamma1/gamma2. The vector
    is renormalized over the retained levels only when the missing tail is
    below 1e-12, so a visibly deficient sum signals truncation.
    """
    core.check_dim(N)
    kt, gt = float(kappa_tilde), float(gamma_tilde)
    if not (math.isfinite(kt) and kt >= 0):
        raise InvalidSpec(f"kappa_tilde must be >= 0, got {kappa_tilde!r}")
    if not (math.isfinite(gt) and gt >= 0):
        raise InvalidSpec(f"gamma_tilde must be >= 0, got {gamma_tilde!r}")
    if kt == 0.0:
        out = np.zeros(N)
        out[0] = 1.0  # nothing pumps, so everything drains to vacuum
        return out
    s = kt + gt
    log_kt = math.log(kt)
    log_den = _log_1f1(1.0, s, 2.0 * kt)
    out = np.empty(N)
    log_poch = 0.0  # log of the rising factorial of s, updated per level
    for n in range(N):
        if n > 0:
            log_poch += math.log(s + n - 1.0)
        log_num = _log_1f1(1.0 + n, s + n, kt)
        out[n] = math.exp(n * log_kt - log_poch + log_num - log_den)
    tail = 1.0 - float(out.sum())
    if tail < 1e-12:
        out /= out.sum()
    return out


def population_rate_matrix(params, N):
    """N x N generator of the diagonal (population) sector, dP/dt = M P.

    The pump out of the top level is absent because raising from level N-1
    leaves the truncated space; this makes every column sum exactly zero, so
    the matrix is singular by construction.
    """
    core.check_dim(N)
    k1, g1, g2 = params.astuple()
    n = np.arange(N, dtype=float)
    M = np.zeros((N, N))
    pump_out = k1 * (n + 1.0)
    pump_out[N - 1] = 0.0
    M[np.arange(N), np.arange(N)] = -(pump_out + g1 * n + g2 * n * (n - 1.0))
    idx = np.arange(N - 1)
    M[idx + 1, idx] += k1 * (idx + 1.0)
    M[idx, idx + 1] += g1 * (idx + 1.0)
    idx = np.arange(N - 2)
    M[idx, idx + 2] += g2 * (idx + 2.0) * (idx + 1.0)
    return M


@dataclass(frozen=True)
class SteadyState:
    """Diagonal steady state with its derived scalars.

    r_classical and ratio are None at or below the bifurcation, where the
    classical limit cycle does not exist.
    """

    params: object
    populations: np.ndarray
    rho: np.ndarray
    n_hi: int
    energy: float
    r_classical: float | None
    ratio: float | None


def _finish_steady_state(params, populations):
    P = populations
    n = np.arange(P.size, dtype=float)
    energy = float(np.dot(n, P))
    occupied = np.nonzero(P > POPULATION_FLOOR)[0]
    n_hi = int(occupied.max()) if occupied.size else 0
    k1, g1, g2 = params.astuple()
    B = (k1 - g1) / g2
    if B > 0:
        r_classical = math.sqrt(B)
        ratio = energy / (B / 2.0)
    else:
        r_classical = None
        ratio = None
    return SteadyState(params=params, populations=P,
                       rho=np.diag(P.astype(complex)), n_hi=n_hi,
                       energy=energy, r_classical=r_classical, ratio=ratio)


def steady_state_numeric(params, N):
    """Null space of the population rate matrix, assembled into a SteadyState.

    Raises DimTooSmall when the top level still carries weight, since the
    truncated solution is then distorted by the missing levels.
    """
    params.require_two_photon()
    M = population_rate_matrix(params, N)
    _, _, vh = np.linalg.svd(M)
    v = vh[-1]
    v = v * np.sign(v[np.argmax(np.abs(v))])
    P = v / v.sum()
    if P[N - 1] > POPULATION_FLOOR:
        raise DimTooSmall(
            f"top-level population {P[N - 1]:.3e} exceeds {POPULATION_FLOOR:g} "
            f"at N = {N}; increase the dimension")
    return _finish_steady_state(params, P)


def steady_state_analytic(params, N):
    """SteadyState built from the closed-form populations."""
    params.require_two_photon()
    k1, g1, g2 = params.astuple()
    P = pnss_analytic(k1 / g2, g1 / g2, N)
    if P[N - 1] > POPULATION_FLOOR:
        raise DimTooSmall(
            f"top-level population {P[N - 1]:.3e} exceeds {POPULATION_FLOOR:g} "
            f"at N = {N}; increase the dimension")
    return _finish_steady_state(params, P)


def n_hi_analytic(params, start=32, cap=8192):
    """Highest level the steady state occupies above the 1e-6 floor.

    The dimension grows geometrically until the top level is safely empty;
    the answer depends only on the rate ratios, not their overall scale.
    """
    params.require_two_photon()
    k1, g1, g2 = params.astuple()
    kt, gt = k1 / g2, g1 / g2
    N = start
    while True:
        P = pnss_analytic(kt, gt, N)
        if P[N - 1] <= 0.1 * POPULATION_FLOOR:
            occupied = np.nonzero(P > POPULATION_FLOOR)[0]
            return int(occupied.max()) if occupied.size else 0
        if N >= cap:
            raise DimTooLarge(
                f"steady state still occupies level {N - 1}; refusing to "
                f"grow past {cap}")
        N = min(2 * N, cap)


@dataclass(frozen=True)
class WorkingRegime:
    """Dimensionless working-regime point and its classicality margins.

    A = kappa1/gamma2, B = (kappa1 - gamma1)/gamma2, C = A/B. Below the
    bifurcation C is not a number and every C-based margin is nan, which
    compares False against any threshold.
    """

    A: float
    B: float
    C: float
    basis: float
    below_bifurcation: bool

    def eligibility_margins(self, rho):
        """Margins (2<adag^2 a^2>/A, <adag a>/C); both must be large for the
        state to support a classical-regime reading."""
        dim = rho.shape[0]
        a = core.annihilate(dim)
        ad = core.create(dim)
        pair = float(np.trace(ad @ ad @ a @ a @ rho).real)
        energy = float(np.trace(ad @ a @ rho).real)
        return 2.0 * pair / self.A, energy / self.C

    def eligible(self, rho, factor=10.0):
        m1, m2 = self.eligibility_margins(rho)
        return bool(m1 >= factor and m2 >= factor)

    def cycle_margin(self):
        """B/(4C): how far the limit cycle itself sits into the classical
        regime."""
        return self.B / (4.0 * self.C)

    def cycle_classical(self, factor=10.0):
        m = self.cycle_margin()
        return bool(m >= factor)


def regime(params):
    """Classify params into the dimensionless working-regime plane."""
    params.require_two_photon()
    k1, g1, g2 = params.astuple()
    A = k1 / g2
    B = (k1 - g1) / g2
    below = k1 <= g1
    C = A / B if B > 0 else float("nan")
    return WorkingRegime(A=A, B=B, C=C, basis=k1, below_bifurcation=below)


def params_from_regime(a, b, basis_kappa1):
    """Rates realizing the working-regime point (A, B) at pump basis_kappa1.

    A fixes gamma2 = kappa1/A and B fixes gamma1 = gamma2*(A - B); points
    with B > A would need a negative loss rate and are rejected.
    """
    a, b, k1 = float(a), float(b), float(basis_kappa1)
    if not (a > 0 and math.isfinite(a)):
        raise InvalidSpec(f"A must be positive and finite, got {a!r}")
    if not (k1 > 0 and math.isfinite(k1)):
        raise InvalidSpec(f"basis kappa1 must be positive, got {k1!r}")
    if not math.isfinite(b) or b > a:
        raise InvalidSpec(f"B = {b!r} exceeds A = {a!r}: gamma1 < 0")
    g2 = k1 / a
    return SLParams(kappa1=k1, gamma1=g2 * (a - b), gamma2=g2)


def wigner_guess(params, grid):
    """Ring ansatz for the steady-state Wigner function.

    A radial Gaussian of variance C/sqrt(2) centered on the classical
    limit-cycle radius; normalization is exact only when the ring is far
    from the origin. Only defined above the bifurcation.
    """
    from .wigner import WignerGrid

    params.require_two_photon()
    k1, g1, g2 = params.astuple()
    if k1 <= g1:
        raise BelowBifurcation(
            f"kappa1 = {k1:g} <= gamma1 = {g1:g}: no limit cycle to fit")
    r_lc = math.sqrt((k1 - g1) / g2)
    C = k1 / (k1 - g1)
    sigma2 = C / math.sqrt(2.0)
    if not isinstance(grid, WignerGrid):
        x, p = grid
        grid = WignerGrid(x=np.asarray(x, dtype=float),
                          p=np.asarray(p, dtype=float))
    X, P = grid.meshes()
    r = np.hypot(X, P)
    W = (np.exp(-((r - r_lc) ** 2) / (2.0 * sigma2))
         / (2.0 * math.pi * r_lc * math.sqrt(2.0 * math.pi * sigma2)))
    return grid.with_values(W)
