"""Liouvillian spectra in the vectorized superoperator representation.

Vectorization is row-major: vec(rho)[m*N + n] = rho[m, n], which turns
A rho B into (A kron B^T) vec(rho). The superoperator is assembled from
the Kronecker form of the generator, so the energy-basis matrix elements
come out right without any per-element bookkeeping.

The zero mode of the decomposition is rescaled to unit trace; it is the
steady state as the eigensolver sees it and is cross-checked against the
population-sector solver whenever the latter accepts the dimension.
"""

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import core
from .dynamics import SLParams
from .exceptions import (
    ConvergenceFailure, DegenerateClusterWarning, DimMismatch, DimTooLarge,
    DimTooSmall, InvalidSpec, MissingCoefficients, NotNormalized,
)
from .steadystate import n_hi_analytic, params_from_regime, steady_state_numeric

#: Dense eigendecomposition cap; N^2 x N^2 = 2500 x 2500 at the default.
DIM_CAP = 50

_ZERO_MODE_TOL = 1e-10
_CLUSTER_TOL = 1e-8
_CONDITION_CEILING = 1e8


def vec(rho):
    """Row-major flattening of a matrix."""
    return np.asarray(rho, dtype=complex).reshape(-1)


def unvec(v, dim):
    return np.asarray(v, dtype=complex).reshape(dim, dim)


@dataclass(frozen=True)
class VectorizedLindbladian:
    params: SLParams
    dim: int
    matrix: np.ndarray


def _dissipator_block(jump):
    keep = jump.conj().T @ jump
    eye = np.eye(jump.shape[0], dtype=complex)
    return (np.kron(jump, jump.conj())
            - 0.5 * np.kron(keep, eye)
            - 0.5 * np.kron(eye, keep.T))


def build_vectorized_lindbladian(params, dim):
    """Superoperator matrix whose action on vec(rho) is the master equation."""
    core.check_dim(dim)
    a = core.annihilate(dim)
    h = core.hamiltonian(dim)
    eye = np.eye(dim, dtype=complex)
    mat = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, jump in ((params.kappa1, a.conj().T),
                       (params.gamma1, a),
                       (params.gamma2, a @ a)):
        if rate:
            mat = mat + rate * _dissipator_block(jump)
    return VectorizedLindbladian(params=params, dim=dim, matrix=mat)


@dataclass(frozen=True)
class SpectrumResult:
    """Sorted eigendecomposition of the vectorized generator.

    eigenvalues are ordered by ascending |Re|, ties by ascending Im and
    then input index. right[j] and left[j] are the N x N eigenmatrices;
    left[j] is normalized so the Hilbert-Schmidt pairing with right[j] is
    1 (except for the rescaled zero mode). coefficients is None unless an
    initial state was supplied. n_hi is None when the two-quantum channel
    is off, since the occupation criterion needs a normalizable steady
    state; valid means n_hi <= dim.
    """

    params: SLParams
    dim: int
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    gap: float
    n_hi: Optional[int]
    valid: bool
    steady_state: np.ndarray
    steady_state_distance: Optional[float]
    scale: float
    coefficients: Optional[np.ndarray] = None


def _warn_on_ill_conditioned_clusters(lam, v_cols, v_inv, scale):
    """Flag eigenvalue clusters whose eigenvectors are nearly parallel.

    Clusters are chained in (Re, Im) order: ill conditioning only matters
    when distinct modes share an eigenvalue to within roundoff.
    """
    tol = _CLUSTER_TOL * max(scale, 1.0)
    order = np.lexsort((lam.imag, lam.real))
    with np.errstate(over="ignore"):  # inf is a fine answer here
        kappa = (np.linalg.norm(v_cols, axis=0)
                 * np.linalg.norm(v_inv, axis=1))
    start = 0
    for k in range(1, lam.size + 1):
        if k < lam.size and abs(lam[order[k]] - lam[order[k - 1]]) <= tol:
            continue
        members = order[start:k]
        start = k
        if members.size > 1 and float(np.max(kappa[members])) > _CONDITION_CEILING:
            warnings.warn(DegenerateClusterWarning(
                f"eigenvalue cluster of size {members.size} near "
                f"{lam[members[0]]:.6g} has condition number "
                f"{float(np.max(kappa[members])):.2e}; per-mode coefficients "
                "are unreliable there"))
            return


def spectrum(params, dim, rho0=None, *, allow_large=False):
    """Full eigendecomposition of the generator at truncation dim.

    LAPACK's QR iteration on the Hessenberg form does the work; left
    eigenmatrices come from the inverse eigenvector matrix, which makes
    the pairing with the right family biorthogonal by construction. With
    rho0 given, decomposition coefficients for that initial state are
    attached so trajectories can be synthesized from the modes.
    """
    if dim > DIM_CAP and not allow_large:
        raise DimTooLarge(
            f"dim {dim} exceeds the dense cap {DIM_CAP}; "
            "pass allow_large=True to force")
    built = build_vectorized_lindbladian(params, dim)
    scale = float(np.linalg.norm(built.matrix))
    lam, v_cols = np.linalg.eig(built.matrix)
    try:
        v_inv = np.linalg.inv(v_cols)
    except np.linalg.LinAlgError as err:
        raise ConvergenceFailure(
            "eigenvector matrix is singular; the generator is defective "
            f"at {params}") from err
    order = np.lexsort((np.arange(lam.size), lam.imag, np.abs(lam.real)))
    lam = lam[order]
    v_cols = v_cols[:, order]
    v_inv = v_inv[order, :]
    _warn_on_ill_conditioned_clusters(lam, v_cols, v_inv, scale)

    if abs(lam[0]) > _ZERO_MODE_TOL * scale:
        raise ConvergenceFailure(
            f"no stationary mode: smallest |eigenvalue| is {abs(lam[0]):.3e} "
            f"against scale {scale:.3e}")
    right = v_cols.T.reshape(lam.size, dim, dim).copy()
    left = v_inv.conj().reshape(lam.size, dim, dim)
    tr0 = complex(np.trace(right[0]))
    if abs(tr0) < 1e-12:
        raise ConvergenceFailure("stationary mode is traceless")
    right[0] = right[0] / tr0
    steady = right[0]
    gap = float(abs(lam[1].real))

    n_hi = None
    if params.gamma2 > 0:
        try:
            n_hi = n_hi_analytic(params)
        except DimTooLarge:
            n_hi = None
    valid = n_hi is not None and n_hi <= dim

    distance = None
    if params.gamma2 > 0:
        try:
            reference = steady_state_numeric(params, dim)
        except DimTooSmall:
            pass
        else:
            hermitized = 0.5 * (steady + steady.conj().T)
            distance = core.trace_distance(hermitized, reference.rho)

    coefficients = None
    if rho0 is not None:
        rho0 = core.validate_density(np.asarray(rho0, dtype=complex))
        if rho0.shape[0] != dim:
            raise DimMismatch(
                f"initial state dim {rho0.shape[0]} != spectrum dim {dim}")
        numerators = v_inv @ vec(rho0)
        denominators = np.einsum("jk,jk->j", v_inv, right.reshape(lam.size, -1))
        coefficients = numerators / denominators

    return SpectrumResult(
        params=params, dim=dim, eigenvalues=lam, right=right, left=left,
        gap=gap, n_hi=n_hi, valid=valid, steady_state=steady,
        steady_state_distance=distance, scale=scale,
        coefficients=coefficients)


def spectral_reconstruct(spec, t):
    """State at time t synthesized from the decomposition modes."""
    if spec.coefficients is None:
        raise MissingCoefficients(
            "spectrum was computed without an initial state; pass rho0")
    t = float(t)
    if not np.isfinite(t):
        raise InvalidSpec(f"time must be finite, got {t}")
    weights = spec.coefficients[1:] * np.exp(spec.eigenvalues[1:] * t)
    out = spec.steady_state + np.tensordot(weights, spec.right[1:], axes=(0, 0))
    out = 0.5 * (out + out.conj().T)
    trace = float(np.trace(out).real)
    if abs(trace - 1.0) > 1e-6:
        raise NotNormalized(f"reconstructed trace {trace!r} is off unity")
    return out


@dataclass(frozen=True)
class GapTile:
    a: float
    b: float
    c: float
    delta: float
    n_hi: Optional[int]
    valid: bool
    dim: int


def _gap_point(task):
    index, a, b, dim, basis = task
    c = a / b if b > 0 else float("nan")
    try:
        params = params_from_regime(a, b, basis)
    except InvalidSpec:
        return index, GapTile(a=a, b=b, c=c, delta=float("nan"),
                              n_hi=None, valid=False, dim=dim)
    result = spectrum(params, dim)
    return index, GapTile(a=a, b=b, c=c, delta=result.gap,
                          n_hi=result.n_hi, valid=result.valid, dim=dim)


def gap_sweep(points, dim, basis_kappa1, workers=1):
    """Liouvillian gap over working-regime points (A, B) at fixed basis pump.

    Infeasible points (negative loss rate) come back flagged with a nan
    gap instead of raising, so tile tables keep their shape. Results are
    merged by grid index, so the worker count never changes the output.
    """
    tasks = [(i, float(a), float(b), int(dim), float(basis_kappa1))
             for i, (a, b) in enumerate(points)]
    tiles = [None] * len(tasks)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, tile in pool.map(_gap_point, tasks):
                tiles[index] = tile
    else:
        for task in tasks:
            index, tile = _gap_point(task)
            tiles[index] = tile
    return tiles
