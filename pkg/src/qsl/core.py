"""Operators and states of a single bosonic mode truncated to N Fock levels.

Conventions: hbar = m = omega_0 = 1, a = (x + i p)/sqrt(2) and
H_0 = a^dag a + 1/2, so one harmonic period is 2 pi. Operators are dense
complex128 matrices; states are density matrices on the same truncated space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidSpec, TruncationLeak

DEFAULT_LEAK_TOL = 1e-8

OPERATOR_KINDS = ("annihilate", "create", "number", "hamiltonian")


def check_dim(dim):
    if not isinstance(dim, (int, np.integer)) or isinstance(dim, bool):
        raise InvalidSpec(f"dimension must be an integer, got {dim!r}")
    if dim < 2:
        raise InvalidSpec(f"dimension must be >= 2, got {dim}")
    return int(dim)


def annihilate(dim):
    """Truncated lowering operator, entries a[n-1, n] = sqrt(n)."""
    dim = check_dim(dim)
    return np.diag(np.sqrt(np.arange(1.0, dim)), 1).astype(complex)


def create(dim):
    return annihilate(dim).conj().T


def number(dim):
    dim = check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def hamiltonian(dim):
    """Free Hamiltonian a^dag a + 1/2 on the truncated space."""
    dim = check_dim(dim)
    return np.diag(np.arange(dim, dtype=float) + 0.5).astype(complex)


def build_operator(kind, dim):
    """Build one of the named single-mode operators.

    Parameters
    ----------
    kind : str
        One of "annihilate", "create", "number", "hamiltonian".
    dim : int
        Fock-space truncation, dim >= 2.
    """
    if kind not in OPERATOR_KINDS:
        raise InvalidSpec(f"unknown operator kind {kind!r}, expected one of {OPERATOR_KINDS}")
    return {"annihilate": annihilate, "create": create,
            "number": number, "hamiltonian": hamiltonian}[kind](dim)


# ---------------------------------------------------------------------------
# state specifications


@dataclass(frozen=True)
class StateSpec:
    """Symbolic description of an initial state, independent of truncation.

    kind is one of "fock", "thermal", "coherent", "cat", "superposition".
    Use the classmethod constructors rather than filling fields by hand.
    """

    kind: str
    n: int = 0
    nbar: float = 0.0
    beta: complex = 0.0
    phase: float = 0.0
    amplitudes: tuple = field(default_factory=tuple)

    @classmethod
    def fock(cls, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise InvalidSpec(f"fock level must be a nonnegative integer, got {n!r}")
        return cls(kind="fock", n=int(n))

    @classmethod
    def thermal(cls, nbar):
        if not nbar >= 0:
            raise InvalidSpec(f"thermal occupation must be >= 0, got {nbar!r}")
        return cls(kind="thermal", nbar=float(nbar))

    @classmethod
    def coherent(cls, beta):
        return cls(kind="coherent", beta=complex(beta))

    @classmethod
    def cat(cls, beta, phase=0.0):
        return cls(kind="cat", beta=complex(beta), phase=float(phase))

    @classmethod
    def superposition(cls, amplitudes):
        """amplitudes: iterable of (level, amplitude) pairs, renormalized."""
        amps = tuple((int(n), complex(c)) for n, c in amplitudes)
        if not amps:
            raise InvalidSpec("superposition needs at least one (level, amplitude) pair")
        if any(n < 0 for n, _ in amps):
            raise InvalidSpec("superposition levels must be nonnegative")
        if all(abs(c) == 0 for _, c in amps):
            raise InvalidSpec("superposition amplitudes are all zero")
        return cls(kind="superposition", amplitudes=amps)

    def label(self):
        if self.kind == "fock":
            return f"fock{self.n}"
        if self.kind == "thermal":
            return f"thermal{self.nbar:g}"
        if self.kind == "coherent":
            b = self.beta
            return f"coherent{b.real:g}" if b.imag == 0 else f"coherent{b.real:g}{b.imag:+g}j"
        if self.kind == "cat":
            return f"cat{self.beta.real:g}_{self.phase:g}"
        levels = "+".join(str(n) for n, _ in self.amplitudes)
        return f"superpos{levels}"


def parse_state_spec(text):
    """Parse the CLI syntax for states.

    fock:N | thermal:NBAR | coherent:BETA | cat:BETA[:PHASE] |
    superpos:N=AMP,N=AMP,...   (amplitudes parsed as python complex)
    """
    parts = str(text).strip().split(":")
    kind = parts[0].lower()
    try:
        if kind == "fock" and len(parts) == 2:
            return StateSpec.fock(int(parts[1]))
        if kind == "thermal" and len(parts) == 2:
            return StateSpec.thermal(float(parts[1]))
        if kind == "coherent" and len(parts) == 2:
            return StateSpec.coherent(complex(parts[1]))
        if kind == "cat" and len(parts) in (2, 3):
            phase = float(parts[2]) if len(parts) == 3 else 0.0
            return StateSpec.cat(complex(parts[1]), phase)
        if kind == "superpos" and len(parts) == 2:
            pairs = []
            for item in parts[1].split(","):
                n, amp = item.split("=")
                pairs.append((int(n), complex(amp)))
            return StateSpec.superposition(pairs)
    except (ValueError, InvalidSpec) as exc:
        raise InvalidSpec(f"bad state spec {text!r}: {exc}") from exc
    raise InvalidSpec(f"bad state spec {text!r}")


def coherent_ket(beta, dim):
    """Unnormalized-by-truncation coherent amplitudes e^(-|b|^2/2) b^n / sqrt(n!)."""
    n = np.arange(dim)
    # log-domain magnitude so large |beta| does not overflow the factorial
    logmag = -abs(beta) ** 2 / 2 + n * np.log(abs(beta)) if beta != 0 else \
        np.concatenate(([0.0], np.full(dim - 1, -np.inf)))
    logfact = np.array([math.lgamma(k + 1) for k in range(dim)])
    mag = np.exp(logmag - logfact / 2)
    ph = np.ones(dim, dtype=complex) if beta == 0 else \
        np.exp(1j * np.angle(beta)) ** n
    return mag * ph


def make_state(spec, dim, leak_tol=DEFAULT_LEAK_TOL):
    """Build the density matrix for a state spec on the truncated space.

    Raises TruncationLeak when the probability weight the truncation discards
    exceeds leak_tol; the retained state is renormalized to unit trace.
    """
    dim = check_dim(dim)
    if not isinstance(spec, StateSpec):
        raise InvalidSpec(f"expected a StateSpec, got {type(spec).__name__}")

    if spec.kind == "fock":
        if spec.n >= dim:
            raise TruncationLeak(f"fock level {spec.n} needs dim > {spec.n}, got {dim}")
        ket = np.zeros(dim, dtype=complex)
        ket[spec.n] = 1.0
        return np.outer(ket, ket.conj())

    if spec.kind == "thermal":
        nbar = spec.nbar
        if nbar == 0:
            return make_state(StateSpec.fock(0), dim)
        ratio = nbar / (1.0 + nbar)
        probs = (1.0 - ratio) * ratio ** np.arange(dim)
        leak = ratio ** dim
        if leak > leak_tol:
            raise TruncationLeak(
                f"thermal(nbar={nbar}) leaks {leak:.3e} above level {dim - 1} (tol {leak_tol:.1e})")
        probs = probs / probs.sum()
        return np.diag(probs).astype(complex)

    if spec.kind == "coherent":
        ket = coherent_ket(spec.beta, dim)
        return _ket_to_rho(ket, 1.0, leak_tol, f"coherent(beta={spec.beta})")

    if spec.kind == "cat":
        ket = coherent_ket(spec.beta, dim) + np.exp(1j * spec.phase) * coherent_ket(-spec.beta, dim)
        # untruncated norm^2 of |b> + e^{i phi} |-b>
        full = 2.0 * (1.0 + math.cos(spec.phase) * math.exp(-2 * abs(spec.beta) ** 2))
        if full < 1e-14:
            raise InvalidSpec("cat amplitude and phase give a vanishing state")
        return _ket_to_rho(ket, full, leak_tol, f"cat(beta={spec.beta}, phase={spec.phase})")

    if spec.kind == "superposition":
        if any(n >= dim for n, _ in spec.amplitudes):
            top = max(n for n, _ in spec.amplitudes)
            raise TruncationLeak(f"superposition level {top} needs dim > {top}, got {dim}")
        ket = np.zeros(dim, dtype=complex)
        for n, c in spec.amplitudes:
            ket[n] += c
        return _ket_to_rho(ket, float(np.vdot(ket, ket).real), leak_tol, "superposition")

    raise InvalidSpec(f"unknown state kind {spec.kind!r}")


def _ket_to_rho(ket, full_norm_sq, leak_tol, what):
    kept = float(np.vdot(ket, ket).real)
    leak = 1.0 - kept / full_norm_sq
    if leak > leak_tol:
        raise TruncationLeak(f"{what} leaks {leak:.3e} past truncation (tol {leak_tol:.1e})")
    ket = ket / math.sqrt(kept)
    return np.outer(ket, ket.conj())


# ---------------------------------------------------------------------------
# elementary functionals


def validate_density(rho, herm_tol=1e-12, trace_tol=1e-10, eig_floor=-1e-8):
    """Assert the density-matrix invariants; returns rho unchanged.

    Hermitian within herm_tol, unit trace within trace_tol, smallest
    eigenvalue above eig_floor (small negative dips from roundoff allowed).
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidSpec(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise InvalidSpec(f"not Hermitian: max |rho - rho^dag| = {herm:.3e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise InvalidSpec(f"trace {tr} differs from 1 beyond {trace_tol:.1e}")
    lo = float(np.linalg.eigvalsh(rho)[0])
    if lo < eig_floor:
        raise InvalidSpec(f"negative eigenvalue {lo:.3e} below floor {eig_floor:.1e}")
    return rho


def expectation(op, rho):
    """tr(op rho) as a complex number."""
    if op.shape != rho.shape:
        raise InvalidSpec(f"shape mismatch: op {op.shape} vs rho {rho.shape}")
    return complex(np.trace(op @ rho))


def hs_inner(a, b):
    """Hilbert-Schmidt inner product tr(a^dag b)."""
    if a.shape != b.shape:
        raise InvalidSpec(f"shape mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def trace_distance(rho1, rho2):
    """(1/2) tr |rho1 - rho2| for Hermitian arguments."""
    if rho1.shape != rho2.shape:
        raise InvalidSpec(f"shape mismatch: {rho1.shape} vs {rho2.shape}")
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho1 - rho2))))
