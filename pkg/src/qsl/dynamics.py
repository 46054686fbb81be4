"""Lindblad time evolution, the classical amplitude ODE and settling times.

The integrator is an embedded Dormand-Prince 5(4) pair with PI step-size
control, generic over complex ndarray state. Density-matrix evolution
re-symmetrizes after every accepted step and renormalizes the trace when the
drift passes 1e-10; settling-time measurement checks the trace distance at
every accepted step and refines the first crossing by bisection inside the
bracketing step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import core
from .exceptions import DimMismatch, InvalidSpec, NotReached, StepFailure, TruncationLeak

DEFAULT_TOL = 1e-8
ATOL_FACTOR = 1e-2  # absolute tolerance = tol * this (1e-10 at default tol)
LEAK_CEILING = 1e-6  # top-level population allowed during evolution


@dataclass(frozen=True)
class SLParams:
    """One-quantum pump kappa1, one-quantum loss gamma1, two-quantum loss
    gamma2, all in units of the oscillator frequency."""

    kappa1: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        for name in ("kappa1", "gamma1", "gamma2"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise InvalidSpec(f"{name} must be a finite rate >= 0, got {v!r}")

    def scaled(self, s):
        """All three rates scaled together; tilde ratios are unchanged."""
        return SLParams(s * self.kappa1, s * self.gamma1, s * self.gamma2)

    def require_two_photon(self):
        if self.gamma2 <= 0:
            raise InvalidSpec("gamma2 > 0 required: the steady state divides by it")
        return self

    def astuple(self):
        return (self.kappa1, self.gamma1, self.gamma2)


@dataclass(frozen=True)
class ClassicalState:
    """Classical amplitude alpha with sqrt2 * alpha = r exp(i theta)."""

    t: float
    alpha: complex

    @property
    def r(self):
        return math.sqrt(2.0) * abs(self.alpha)

    @property
    def theta(self):
        return math.atan2(self.alpha.imag, self.alpha.real)


@dataclass
class Trajectory:
    params: SLParams
    times: np.ndarray
    exp_a: np.ndarray
    exp_n: np.ndarray
    exp_pair: np.ndarray  # <adag^2 a^2>
    dtr: np.ndarray | None
    state_times: list
    states: list
    final_state: np.ndarray

    def validate(self):
        if not np.all(np.diff(self.times) > 0):
            raise InvalidSpec("trajectory times must be strictly increasing")
        for arr in (self.exp_a, self.exp_n, self.exp_pair):
            if len(arr) != len(self.times):
                raise InvalidSpec("observable length mismatch")
        if self.dtr is not None and len(self.dtr) != len(self.times):
            raise InvalidSpec("observable length mismatch")
        for rho in self.states:
            core.validate_density(rho)
        return self


@lru_cache(maxsize=32)
def _ops(dim):
    a = core.annihilate(dim)
    ad = core.create(dim)
    nmat = ad @ a
    a2 = a @ a
    return {
        "a": a, "ad": ad, "n": nmat, "a2": a2,
        "aad": a @ ad,            # O^dag O for the pump jump a^dag
        "ad2a2": ad @ ad @ a2,    # O^dag O for the pair jump a^2, also <adag^2 a^2>
        "ada2": ad @ a2,          # for the amplitude equation of motion
    }


def lindblad_rhs(params, rho):
    """Right-hand side -i[H0, rho] + sum of the three dissipators."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimMismatch(f"density matrix must be square, got {rho.shape}")
    ops = _ops(rho.shape[0])
    n = ops["n"]
    out = -1j * (n @ rho - rho @ n)  # the +1/2 in H0 drops out of the commutator
    k1, g1, g2 = params.kappa1, params.gamma1, params.gamma2
    if k1:
        out += k1 * (ops["ad"] @ rho @ ops["a"]
                     - 0.5 * (ops["aad"] @ rho + rho @ ops["aad"]))
    if g1:
        out += g1 * (ops["a"] @ rho @ ops["ad"]
                     - 0.5 * (n @ rho + rho @ n))
    if g2:
        out += g2 * (ops["a2"] @ rho @ ops["a2"].conj().T
                     - 0.5 * (ops["ad2a2"] @ rho + rho @ ops["ad2a2"]))
    return out


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
# fifth-order weights are the last A row; error weights are b5 - b4
_DP_E = (35 / 384 - 5179 / 57600, 0.0, 500 / 1113 - 7571 / 16695,
         125 / 192 - 393 / 640, -2187 / 6784 + 92097 / 339200,
         11 / 84 - 187 / 2100, -1 / 40)


def _dp45_steps(f, t0, y0, t_end, rtol, atol, post_step=None, h0=1e-3):
    """Generator of accepted steps (t_prev, y_prev, t_new, y_new).

    post_step(y_new) -> (y_cleaned, recompute). The first-same-as-last
    derivative is reused across steps unless recompute is set; cleanups that
    perturb y at roundoff level only must not set it.
    """
    t, y = t0, y0
    k1 = f(t, y)
    h = min(h0, t_end - t0) if t_end > t0 else h0
    err_prev = 1.0
    rejected = False
    while t < t_end:
        h = min(h, t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepFailure(f"step size underflow at t = {t:.6g}")
        k = [k1]
        for i in range(1, 7):
            yi = y
            for aij, kj in zip(_DP_A[i], k):
                if aij:
                    yi = yi + (h * aij) * kj
            k.append(f(t + _DP_C[i] * h, yi))
        y_new = yi  # the i = 6 stage point IS the fifth-order solution
        err_vec = sum((h * e) * kj for e, kj in zip(_DP_E, k) if e)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean(np.abs(err_vec / scale) ** 2)))
        if err <= 1.0:
            err = max(err, 1e-10)
            fac = 0.9 * err ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            fac = min(1.0 if rejected else 5.0, max(0.2, fac))
            if post_step is not None:
                y_new, recompute = post_step(y_new)
                if recompute:
                    k[6] = f(t + h, y_new)
            t_new = t + h
            yield t, y, t_new, y_new
            t, y, k1 = t_new, y_new, k[6]
            err_prev = err
            rejected = False
            h = h * fac
        else:
            rejected = True
            h = h * max(0.2, 0.9 * err ** (-1 / 5))


def _density_cleanup(y):
    """Re-symmetrize every step; renormalize the trace only on real drift.

    Symmetrization moves entries by roundoff, so the cached derivative stays
    valid; a trace renormalization is a visible rescale and invalidates it.
    """
    y = 0.5 * (y + y.conj().T)
    tr = float(np.trace(y).real)
    if abs(tr - 1.0) > 1e-10:
        return y / tr, True
    return y, False


def evolve(params, rho0, t_end, tol=DEFAULT_TOL, sample_every=None,
           state_stride=0, reference=None, leak_check=True):
    """Integrate the master equation, recording observables.

    With sample_every set, steps are clipped so samples land exactly on the
    uniform grid and only those are recorded; otherwise every accepted step
    is recorded. state_stride > 0 stores every that-many-th sampled density
    matrix (the final state is always kept separately).

    reference: optional density matrix; records d_tr(rho(t), reference).
    """
    if tol <= 0:
        raise InvalidSpec("tol must be positive")
    if t_end < 0:
        raise InvalidSpec("t_end must be >= 0")
    rho0 = core.validate_density(np.asarray(rho0, dtype=complex))
    dim = rho0.shape[0]
    if reference is not None and reference.shape != rho0.shape:
        raise DimMismatch(f"reference dim {reference.shape} != state dim {rho0.shape}")
    rtol, atol = tol, tol * ATOL_FACTOR

    times, ea, en, epair, dtr = [], [], [], [], []
    state_times, states = [], []
    ops = _ops(dim)

    def record(t, rho):
        times.append(t)
        ea.append(np.trace(ops["a"] @ rho))
        en.append(float(np.trace(ops["n"] @ rho).real))
        epair.append(float(np.trace(ops["ad2a2"] @ rho).real))
        if reference is not None:
            dtr.append(core.trace_distance(rho, reference))
        if leak_check and rho[dim - 1, dim - 1].real > LEAK_CEILING:
            raise TruncationLeak(
                f"top-level population {rho[dim - 1, dim - 1].real:.3e} at t = {t:.6g}; "
                "increase the dimension")
        if state_stride and (len(times) - 1) % state_stride == 0:
            state_times.append(t)
            states.append(rho.copy())

    record(0.0, rho0)
    rho = rho0
    if t_end > 0:
        f = lambda t, y: lindblad_rhs(params, y)
        if sample_every is None:
            for _, _, t_new, y_new in _dp45_steps(f, 0.0, rho0, t_end, rtol, atol,
                                                  post_step=_density_cleanup):
                record(t_new, y_new)
                rho = y_new
        else:
            if sample_every <= 0:
                raise InvalidSpec("sample_every must be positive")
            t_next = 0.0
            n_sample = 0
            while t_next < t_end - 1e-12 * max(1.0, t_end):
                n_sample += 1
                t_start, t_next = t_next, min(n_sample * sample_every, t_end)
                for _, _, _, y_new in _dp45_steps(f, t_start, rho, t_next,
                                                  rtol, atol,
                                                  post_step=_density_cleanup):
                    rho = y_new
                record(t_next, rho)

    traj = Trajectory(params=params, times=np.asarray(times),
                      exp_a=np.asarray(ea), exp_n=np.asarray(en),
                      exp_pair=np.asarray(epair),
                      dtr=np.asarray(dtr) if reference is not None else None,
                      state_times=state_times, states=states, final_state=rho)
    return traj


def steady_state_time(params, rho0, eps, rho_ss, tol=DEFAULT_TOL,
                      t_cap=1e6):
    """First time the trace distance to rho_ss falls to eps.

    The distance is checked at every accepted step (monotonicity is not
    assumed); the bracketing step is bisected, re-integrating from its left
    endpoint, until the crossing is localized to a relative 1e-3.
    """
    if eps <= 0:
        raise InvalidSpec("eps must be positive")
    rho0 = core.validate_density(np.asarray(rho0, dtype=complex))
    if rho0.shape != rho_ss.shape:
        raise DimMismatch(f"state dim {rho0.shape} != steady state dim {rho_ss.shape}")
    if core.trace_distance(rho0, rho_ss) <= eps:
        return 0.0
    rtol, atol = tol, tol * ATOL_FACTOR
    f = lambda t, y: lindblad_rhs(params, y)

    for t_prev, y_prev, t_new, y_new in _dp45_steps(f, 0.0, rho0, t_cap, rtol, atol,
                                                    post_step=_density_cleanup):
        if core.trace_distance(y_new, rho_ss) <= eps:
            lo, hi = t_prev, t_new
            y_lo = y_prev
            while hi - lo > 1e-3 * hi:
                mid = 0.5 * (lo + hi)
                y_mid = y_lo
                for _, _, _, y_step in _dp45_steps(f, lo, y_lo, mid, rtol, atol,
                                                   post_step=_density_cleanup):
                    y_mid = y_step
                if core.trace_distance(y_mid, rho_ss) <= eps:
                    hi = mid
                else:
                    lo, y_lo = mid, y_mid
            return hi
    raise NotReached(f"trace distance stayed above {eps:g} up to t = {t_cap:g}")


def classical_trajectory(params, alpha0, t_end, tol=DEFAULT_TOL):
    """Adaptive solution of alpha' = -i alpha + ((k1 - g1)/2) alpha - g2 |alpha|^2 alpha."""
    if t_end < 0:
        raise InvalidSpec("t_end must be >= 0")
    k1, g1, g2 = params.astuple()

    def f(t, y):
        a = y[0]
        return np.array([-1j * a + 0.5 * (k1 - g1) * a - g2 * (a.real ** 2 + a.imag ** 2) * a])

    out = [ClassicalState(0.0, complex(alpha0))]
    y = np.array([complex(alpha0)])
    if t_end > 0 and alpha0 != 0:
        for _, _, t_new, y_new in _dp45_steps(f, 0.0, y, t_end, tol, tol * ATOL_FACTOR):
            out.append(ClassicalState(t_new, complex(y_new[0])))
    elif t_end > 0:
        out.append(ClassicalState(t_end, 0j))  # the origin is a fixed point
    return out


def coherence_deviation(rho, rho_ss):
    """Entrywise | |rho_mn| - |rho_ss,mn| |; real matrix."""
    if rho.shape != rho_ss.shape:
        raise DimMismatch(f"{rho.shape} vs {rho_ss.shape}")
    return np.abs(np.abs(rho) - np.abs(rho_ss))
