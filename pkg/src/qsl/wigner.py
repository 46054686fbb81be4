"""Phase-space grids and Wigner-function machinery.

Axis convention: values[i, j] = W(x[i], p[j]); both axes are uniform and
ascending. Functions that need margins or derivatives raise GridTooSmall or
GridTooCoarse instead of silently degrading.

Number-basis elements follow the convention fixed by direct quadrature of
the defining integral: the element for |m><n| with m >= n carries the phase
(x - ip)^(m-n), and the (0, 0) element is exp(-(x^2+p^2))/pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import core
from .exceptions import (
    GridMismatch, GridTooCoarse, GridTooSmall, InvalidSpec, NotNormalized,
)


@dataclass(frozen=True)
class WignerGrid:
    """Uniform rectangular phase-space grid, optionally carrying values."""

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray | None = None

    def __post_init__(self):
        for name, ax in (("x", self.x), ("p", self.p)):
            ax = np.asarray(ax, dtype=float)
            if ax.ndim != 1 or ax.size < 2:
                raise InvalidSpec(f"{name} axis must be 1D with at least 2 points")
            steps = np.diff(ax)
            if steps[0] <= 0 or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
                raise InvalidSpec(f"{name} axis must be uniformly ascending")
            object.__setattr__(self, name, ax)
        if self.values is not None:
            v = np.asarray(self.values)
            if v.shape != (self.x.size, self.p.size):
                raise InvalidSpec(
                    f"values shape {v.shape} != (x, p) sizes "
                    f"({self.x.size}, {self.p.size})")
            object.__setattr__(self, "values", v)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def dp(self):
        return float(self.p[1] - self.p[0])

    @property
    def cell_area(self):
        return self.dx * self.dp

    def meshes(self):
        return np.meshgrid(self.x, self.p, indexing="ij")

    def with_values(self, values):
        return replace(self, values=values)

    def integral(self):
        if self.values is None:
            raise InvalidSpec("grid carries no values")
        return float(np.real(np.sum(self.values)) * self.cell_area)


def phase_grid(half_width=None, points=201, energy=None):
    """Square grid centered on the origin.

    Without an explicit half_width the extent is sized from an energy scale:
    sqrt(2 * energy) is the classical radius at that energy, plus 3 units of
    breathing room, floored at 5.
    """
    if half_width is None:
        if energy is None:
            half_width = 5.0
        else:
            half_width = max(math.sqrt(2.0 * max(energy, 0.0)) + 3.0, 5.0)
    if half_width <= 0:
        raise InvalidSpec("half_width must be positive")
    if points < 2:
        raise InvalidSpec("points must be at least 2")
    ax = np.linspace(-half_width, half_width, points)
    return WignerGrid(x=ax, p=ax.copy())


# ---------------------------------------------------------------------------
# number-basis elements

def _band_accumulate(mat, alpha, z, base_envelope, upper):
    """Sum of band coefficients times scaled Laguerre functions.

    Returns sum_n c_n (-1)^n g_n(z) where g_n makes the |n+alpha><n| element
    equal to (x-ip)^alpha g_n / pi, and c_n is mat[n+alpha, n] for the upper
    band or conj(mat[n, n+alpha]) for the lower one. g absorbs z^(alpha/2)
    with the radial power divided out, so nothing is singular at the origin.
    The three-term recurrence on the orthonormal Laguerre functions is
    numerically tame because the functions themselves stay order one.
    """
    dim = mat.shape[0]
    count = dim - alpha
    if upper:
        band = np.array([mat[n + alpha, n] for n in range(count)])
    else:
        band = np.array([np.conj(mat[n, n + alpha]) for n in range(count)])
    if not np.any(band):
        return None
    acc = np.zeros(z.shape, dtype=complex)
    g_prev = None
    g = base_envelope * math.exp(0.5 * alpha * math.log(2.0)
                                 - 0.5 * math.lgamma(alpha + 1.0))
    for n in range(count):
        if n > 0:
            norm = math.sqrt(n * (n + alpha))
            g_new = (2.0 * n - 1.0 + alpha - z) * g / norm
            if n > 1:
                g_new -= math.sqrt((n - 1.0) * (n - 1.0 + alpha)) / norm * g_prev
            g_prev, g = g, g_new
        c = band[n]
        if c:
            acc += (c if n % 2 == 0 else -c) * g
    return acc


def _synthesize(mat, grid, hermitian):
    """Phase-space transform of a number-basis matrix on the grid."""
    dim = mat.shape[0]
    X, P = grid.meshes()
    z = 2.0 * (X * X + P * P)
    envelope = np.exp(-0.5 * z)
    base = X - 1j * P
    out = np.zeros(z.shape, dtype=complex)
    phase = None
    for alpha in range(dim):
        phase = np.ones_like(base) if alpha == 0 else phase * base
        upper = _band_accumulate(mat, alpha, z, envelope, upper=True)
        if upper is not None:
            term = phase * upper
            if alpha == 0:
                out += term
            elif hermitian:
                out += 2.0 * term.real  # lower band is the exact conjugate
            else:
                out += term
        if alpha > 0 and not hermitian:
            lower = _band_accumulate(mat, alpha, z, envelope, upper=False)
            if lower is not None:
                out += np.conj(phase * lower)
    out /= math.pi
    return out


def fock_wigner_element(m, n, grid):
    """Phase-space image of |m><n| on the grid; real when m = n."""
    for v in (m, n):
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
            raise InvalidSpec(f"levels must be integers >= 0, got {v!r}")
    dim = max(m, n) + 1
    mat = np.zeros((dim, dim), dtype=complex)
    mat[m, n] = 1.0
    vals = _synthesize(mat, grid, hermitian=False)
    return vals.real if m == n else vals


def _is_hermitian(mat):
    return bool(np.max(np.abs(mat - mat.conj().T)) <= 1e-12 * max(
        1.0, float(np.max(np.abs(mat)))))


def wigner_of_rho(rho, grid, part="full"):
    """Wigner function of a density matrix.

    part selects which number-basis entries contribute: "full", "diagonal"
    (the rotationally invariant piece) or "offdiag" (the rest). The result
    must be real to 1e-10 and negligible at the grid boundary, otherwise
    the grid is too small for the state.
    """
    rho = core.validate_density(np.asarray(rho, dtype=complex))
    if part == "diagonal":
        mat = np.diag(np.diag(rho))
    elif part == "offdiag":
        mat = rho - np.diag(np.diag(rho))
    elif part == "full":
        mat = rho
    else:
        raise InvalidSpec(f"unknown part {part!r}")
    vals = _synthesize(mat, grid, hermitian=True)
    resid = float(np.max(np.abs(vals.imag)))
    if resid > 1e-10:
        raise InvalidSpec(f"imaginary residue {resid:.3e} in Wigner values")
    vals = vals.real
    peak = float(np.max(np.abs(vals)))
    if peak > 0.0 and part == "full":
        edge = max(np.max(np.abs(vals[0, :])), np.max(np.abs(vals[-1, :])),
                   np.max(np.abs(vals[:, 0])), np.max(np.abs(vals[:, -1])))
        if edge > 1e-8 * peak:
            raise GridTooSmall(
                f"boundary weight {edge:.3e} vs peak {peak:.3e}; widen the grid")
    return grid.with_values(vals)


def wigner_of_operator(op, grid):
    """Phase-space image of an arbitrary operator matrix (no normalization
    or boundary checks; unbounded operators legitimately grow outward)."""
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise InvalidSpec(f"operator must be square, got {op.shape}")
    hermitian = _is_hermitian(op)
    vals = _synthesize(op, grid, hermitian=hermitian)
    return grid.with_values(vals.real if hermitian else vals)


# ---------------------------------------------------------------------------
# functionals of a Wigner function

def marginals(grid):
    """(position marginal over p, momentum marginal over x), plain sums."""
    if grid.values is None:
        raise InvalidSpec("grid carries no values")
    return (np.real(grid.values).sum(axis=1) * grid.dp,
            np.real(grid.values).sum(axis=0) * grid.dx)


@dataclass(frozen=True)
class NegativityReport:
    volume: float
    error_estimate: float
    grid: WignerGrid


def _trapz2d(values, dx, dp):
    return float(np.trapezoid(np.trapezoid(values, dx=dp, axis=1), dx=dx))


def negative_volume(grid, norm_tol=1e-3):
    """Volume of the negative part, (integral of |W| minus 1) / 2.

    The error estimate compares against the every-other-point subgrid; the
    volume itself is clamped at zero, where the exact value sits for any
    state whose W is nonnegative.
    """
    if grid.values is None:
        raise InvalidSpec("grid carries no values")
    W = np.real(grid.values)
    total = _trapz2d(W, grid.dx, grid.dp)
    if abs(total - 1.0) > norm_tol:
        raise NotNormalized(f"grid integral {total:.6f} is not 1 within {norm_tol:g}")
    v_fine = 0.5 * (_trapz2d(np.abs(W), grid.dx, grid.dp) - 1.0)
    v_coarse = 0.5 * (_trapz2d(np.abs(W[::2, ::2]), 2 * grid.dx, 2 * grid.dp) - 1.0)
    return NegativityReport(volume=max(v_fine, 0.0),
                            error_estimate=abs(v_fine - v_coarse),
                            grid=grid)


def overlap_expectation(w_state, w_op):
    """Overlap formula: tr(rho A) = 2 pi sum W_rho W_A cell_area."""
    if w_state.values is None or w_op.values is None:
        raise InvalidSpec("both grids must carry values")
    if (w_state.x.shape != w_op.x.shape or w_state.p.shape != w_op.p.shape
            or np.max(np.abs(w_state.x - w_op.x)) > 1e-12
            or np.max(np.abs(w_state.p - w_op.p)) > 1e-12):
        raise GridMismatch("grids do not share axes")
    s = 2.0 * math.pi * np.sum(w_state.values * w_op.values) * w_state.cell_area
    return float(np.real(s))


# ---------------------------------------------------------------------------
# the phase-space evolution operator

_STENCIL_MARGIN = 3
_STENCIL_HALF = {0: 0, 1: 2, 2: 2, 3: 3}


@lru_cache(maxsize=8)
def _stencil(order):
    """Centered weights, 4th-order accurate, on offsets -hw..hw (unit h)."""
    hw = _STENCIL_HALF[order]
    offs = np.arange(-hw, hw + 1, dtype=float)
    V = np.vander(offs, increasing=True).T  # V[m, j] = offs[j]**m
    rhs = np.zeros(offs.size)
    rhs[order] = math.factorial(order)
    return tuple(np.linalg.solve(V, rhs))


def _axis_derivative(arr, order, h, axis):
    """Stencil applied along one axis, trimmed to the common margin."""
    hw = _STENCIL_HALF[order]
    n = arr.shape[axis]
    if order == 0:
        out = arr
    else:
        w = _stencil(order)
        sl = [slice(None)] * arr.ndim
        out = np.zeros_like(arr[tuple(
            sl[:axis] + [slice(hw, n - hw)] + sl[axis + 1:])])
        for j, wj in enumerate(w):
            if wj == 0.0:
                continue
            sl_j = sl[:axis] + [slice(j, n - 2 * hw + j)] + sl[axis + 1:]
            out = out + wj * arr[tuple(sl_j)]
        out = out / h ** order
    trim = _STENCIL_MARGIN - hw
    if trim:
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(trim, -trim)
        out = out[tuple(sl)]
    return out


@lru_cache(maxsize=16)
def _eom_table(kappa1, gamma1, gamma2):
    from . import moyal

    return moyal.derive_qsl_operator().to_numeric(kappa1, gamma1, gamma2)


def apply_eom_operator(grid, params):
    """Time derivative of a Wigner function under the oscillator's generator.

    Derivatives are taken with 4th-order central stencils and the result is
    cropped 3 cells on every side, where the widest stencil runs out.
    """
    if grid.values is None:
        raise InvalidSpec("grid carries no values")
    if grid.x.size < 11 or grid.p.size < 11:
        raise GridTooCoarse(
            f"need at least 11 points per axis, got {grid.x.size} x {grid.p.size}")
    table = _eom_table(*params.astuple())
    W = np.asarray(grid.values, dtype=float)
    m = _STENCIL_MARGIN
    xc, pc = grid.x[m:-m], grid.p[m:-m]
    Xc, Pc = np.meshgrid(xc, pc, indexing="ij")
    out = np.zeros((xc.size, pc.size))
    for (dx_ord, dp_ord), poly in table.items():
        deriv = _axis_derivative(W, dx_ord, grid.dx, axis=0)
        deriv = _axis_derivative(deriv, dp_ord, grid.dp, axis=1)
        coeff = np.zeros_like(Xc)
        for (xe, pe), c in poly.items():
            if abs(c.imag) > 1e-12 * max(1.0, abs(c.real)):
                raise InvalidSpec(f"generator coefficient {c!r} is not real")
            coeff += c.real * (Xc ** xe if xe else 1.0) * (Pc ** pe if pe else 1.0)
        out += coeff * deriv
    return WignerGrid(x=xc, p=pc, values=out)
