"""Exact symbolic phase-space calculus for the oscillator mode.

Polynomials over the ring Q[i, sqrt2], with the three decay rates carried as
polynomial indeterminates, and normal-ordered differential operators whose
coefficients are such polynomials. Star products are evaluated by the shift
substitution f(x + (i/2) d_p, p - (i/2) d_x) applied to the right factor,
which lands directly in normal-ordered form: every identity here is exact,
equality is structural, and there are no floats until a caller asks for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction as F

from .exceptions import InvalidSpec

RATE_NAMES = ("kappa1", "gamma1", "gamma2")


@dataclass(frozen=True)
class Scalar:
    """(ra + i ia) + (rb + i ib) sqrt2, all four parts rational."""

    ra: F = F(0)
    ia: F = F(0)
    rb: F = F(0)
    ib: F = F(0)

    @classmethod
    def rational(cls, p, q=1):
        return cls(ra=F(p, q))

    @classmethod
    def imag(cls, p, q=1):
        return cls(ia=F(p, q))

    @classmethod
    def sqrt2(cls, p=1, q=1):
        return cls(rb=F(p, q))

    def __add__(self, other):
        return Scalar(self.ra + other.ra, self.ia + other.ia,
                      self.rb + other.rb, self.ib + other.ib)

    def __sub__(self, other):
        return Scalar(self.ra - other.ra, self.ia - other.ia,
                      self.rb - other.rb, self.ib - other.ib)

    def __neg__(self):
        return Scalar(-self.ra, -self.ia, -self.rb, -self.ib)

    def __mul__(self, other):
        # (A + B s)(C + D s) = (AC + 2BD) + (AD + BC) s with s^2 = 2,
        # A..D complex rationals
        a, b = (self.ra, self.ia), (self.rb, self.ib)
        c, d = (other.ra, other.ia), (other.rb, other.ib)
        ac, bd, ad, bc = _cmul(a, c), _cmul(b, d), _cmul(a, d), _cmul(b, c)
        return Scalar(ac[0] + 2 * bd[0], ac[1] + 2 * bd[1],
                      ad[0] + bc[0], ad[1] + bc[1])

    def conj(self):
        return Scalar(self.ra, -self.ia, self.rb, -self.ib)

    def is_zero(self):
        return not (self.ra or self.ia or self.rb or self.ib)

    def to_complex(self):
        s = math.sqrt(2.0)
        return complex(float(self.ra) + s * float(self.rb),
                       float(self.ia) + s * float(self.ib))

    def render(self):
        parts = []
        for val, tag in ((self.ra, ""), (self.ia, "i"), (self.rb, "sqrt2"), (self.ib, "i*sqrt2")):
            if val:
                head = _frac_str(val)
                parts.append(f"{head}*{tag}" if tag else head)
        if not parts:
            return "0"
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out


def _cmul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _frac_str(f):
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


ZERO = Scalar()
ONE = Scalar.rational(1)
I = Scalar.imag(1)
HALF = Scalar.rational(1, 2)
INV_SQRT2 = Scalar.sqrt2(1, 2)  # sqrt2 / 2


class PhasePoly:
    """Sparse exact polynomial in x, p and the three rates.

    Monomial keys are exponent tuples (x, p, kappa1, gamma1, gamma2); values
    are Scalars. Zero coefficients are never stored, so dict equality is
    canonical equality.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for key, val in terms.items():
                if not val.is_zero():
                    self.terms[key] = val

    @classmethod
    def monomial(cls, coeff, x=0, p=0, kappa1=0, gamma1=0, gamma2=0):
        if min(x, p, kappa1, gamma1, gamma2) < 0:
            raise InvalidSpec("monomial exponents must be nonnegative")
        return cls({(x, p, kappa1, gamma1, gamma2): coeff})

    @classmethod
    def constant(cls, coeff):
        return cls.monomial(coeff)

    @classmethod
    def variable(cls, name):
        if name == "x":
            return cls.monomial(ONE, x=1)
        if name == "p":
            return cls.monomial(ONE, p=1)
        if name in RATE_NAMES:
            return cls.monomial(ONE, **{name: 1})
        raise InvalidSpec(f"unknown variable {name!r}")

    def __eq__(self, other):
        return isinstance(other, PhasePoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        out = dict(self.terms)
        for key, val in other.terms.items():
            s = out.get(key, ZERO) + val
            if s.is_zero():
                out.pop(key, None)
            else:
                out[key] = s
        return PhasePoly(out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return PhasePoly({k: -v for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, Scalar):
            return PhasePoly({k: v * other for k, v in self.terms.items()})
        out = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                key = tuple(e1 + e2 for e1, e2 in zip(k1, k2))
                s = out.get(key, ZERO) + v1 * v2
                out[key] = s
        return PhasePoly(out)

    def conj(self):
        """Complex conjugation; x, p and the rates are real."""
        return PhasePoly({k: v.conj() for k, v in self.terms.items()})

    def diff(self, var, order=1):
        """Exact d^order / d var^order for var in {"x", "p"}."""
        axis = {"x": 0, "p": 1}[var]
        cur = self.terms
        for _ in range(order):
            nxt = {}
            for key, val in cur.items():
                e = key[axis]
                if e == 0:
                    continue
                dkey = key[:axis] + (e - 1,) + key[axis + 1:]
                nxt[dkey] = nxt.get(dkey, ZERO) + val * Scalar.rational(e)
            cur = nxt
        return PhasePoly(cur)

    def degree(self):
        return max((k[0] + k[1] for k in self.terms), default=0)

    def to_numeric(self, kappa1, gamma1, gamma2):
        """Collapse the rate indeterminates; returns {(xe, pe): complex}."""
        out = {}
        for (xe, pe, a, b, c), val in self.terms.items():
            z = val.to_complex() * (kappa1 ** a) * (gamma1 ** b) * (gamma2 ** c)
            out[(xe, pe)] = out.get((xe, pe), 0j) + z
        return {k: v for k, v in out.items() if v != 0}

    def render(self):
        if not self.terms:
            return "0"
        bits = []
        for key in sorted(self.terms, key=_mono_order):
            coeff = self.terms[key].render()
            if ("+" in coeff[1:]) or ("-" in coeff[1:]) or "*" in coeff:
                coeff = f"({coeff})"
            names = ("x", "p", "kappa1", "gamma1", "gamma2")
            factors = [f"{n}^{e}" if e > 1 else n for n, e in zip(names, key) if e]
            bits.append("*".join([coeff] + factors) if factors else coeff)
        return " + ".join(bits)

    def __repr__(self):
        return f"PhasePoly({self.render()})"


def _mono_order(key):
    return (sum(key), key)


X = PhasePoly.variable("x")
P = PhasePoly.variable("p")


class PhaseDiffOp:
    """Normal-ordered differential operator sum_{m,n} c_mn(x,p) d_x^m d_p^n.

    Coefficients sit to the left of the pure derivatives, so application and
    composition are unambiguous.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for key, poly in terms.items():
                if not poly.is_zero():
                    self.terms[key] = poly

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def identity(cls):
        return cls({(0, 0): PhasePoly.constant(ONE)})

    @classmethod
    def mul_by(cls, poly):
        """Multiplication operator W -> poly * W."""
        return cls({(0, 0): poly})

    @classmethod
    def derivative(cls, dx=0, dp=0):
        return cls({(dx, dp): PhasePoly.constant(ONE)})

    def __eq__(self, other):
        return isinstance(other, PhaseDiffOp) and self.terms == other.terms

    def __add__(self, other):
        out = dict(self.terms)
        for key, poly in other.terms.items():
            s = out.get(key, PhasePoly()) + poly
            if s.is_zero():
                out.pop(key, None)
            else:
                out[key] = s
        return PhaseDiffOp(out)

    def __sub__(self, other):
        return self + other.scale(PhasePoly.constant(-ONE))

    def scale(self, poly):
        """Left-multiply every coefficient by a polynomial (or Scalar)."""
        if isinstance(poly, Scalar):
            poly = PhasePoly.constant(poly)
        return PhaseDiffOp({k: poly * v for k, v in self.terms.items()})

    def compose(self, other):
        """Operator product self(other(W)), re-normal-ordered via Leibniz."""
        out = PhaseDiffOp()
        acc = {}
        for (m, n), c in self.terms.items():
            for (k, l), d in other.terms.items():
                # d_x^m d_p^n (d(x,p) ...) expands over derivatives hitting d
                for r in range(m + 1):
                    for s in range(n + 1):
                        dd = d.diff("x", r).diff("p", s)
                        if dd.is_zero():
                            continue
                        w = Scalar.rational(math.comb(m, r) * math.comb(n, s))
                        key = (m - r + k, n - s + l)
                        poly = c * dd * w
                        acc[key] = acc.get(key, PhasePoly()) + poly
        out.terms = {k: v for k, v in acc.items() if not v.is_zero()}
        return out

    def apply(self, poly):
        """Apply to an exact polynomial, returning a PhasePoly."""
        out = PhasePoly()
        for (m, n), c in self.terms.items():
            out = out + c * poly.diff("x", m).diff("p", n)
        return out

    def max_order(self):
        return max((m + n for m, n in self.terms), default=0)

    def to_numeric(self, kappa1, gamma1, gamma2):
        """{(dx, dp): {(xe, pe): complex}} with the rates substituted."""
        out = {}
        for key, poly in self.terms.items():
            num = poly.to_numeric(kappa1, gamma1, gamma2)
            if num:
                out[key] = num
        return out

    def render(self):
        if not self.terms:
            return "0"
        lines = []
        for (m, n) in sorted(self.terms):
            poly = self.terms[(m, n)].render()
            ds = "".join([f" Dx^{m}" if m > 1 else " Dx" if m else "",
                          f" Dp^{n}" if n > 1 else " Dp" if n else ""])
            lines.append(f"[{poly}]{ds}")
        return "\n+ ".join(lines)

    def __repr__(self):
        return f"PhaseDiffOp(\n{self.render()}\n)"


# ---------------------------------------------------------------------------
# star products


def star_with_symbol(f, side):
    """Star multiplication by the symbol f as a normal-ordered operator.

    side "left" gives W -> f * W, side "right" gives W -> W * f, both from
    the shift substitution: the (m, n) term carries (i/2)^m (-i/2)^n /(m! n!)
    times the (m, n)-th derivative of f.
    """
    if side not in ("left", "right"):
        raise InvalidSpec(f"side must be 'left' or 'right', got {side!r}")
    out = {}
    fx_max = max((k[0] for k in f.terms), default=0)
    fp_max = max((k[1] for k in f.terms), default=0)
    for m in range(fx_max + fp_max + 1):
        for n in range(fx_max + fp_max + 1):
            if side == "left":
                df = f.diff("x", m).diff("p", n)  # x-derivatives pair with d_p
                key = (n, m)
            else:
                df = f.diff("p", m).diff("x", n)  # p-derivatives pair with d_x
                key = (m, n)
            if df.is_zero():
                continue
            coeff = Scalar.rational(1, math.factorial(m) * math.factorial(n))
            imn = _i_half_power(m) * _i_half_power(n).conj()
            poly = df * (coeff * imn)
            out[key] = out.get(key, PhasePoly()) + poly
    return PhaseDiffOp(out)


def _i_half_power(m):
    """(i/2)^m as an exact Scalar."""
    out = ONE
    for _ in range(m):
        out = out * (I * HALF)
    return out


def star(f, g):
    """Star product of two exact polynomials."""
    return star_with_symbol(f, "left").apply(g)


def moyal_bracket(f, g):
    """-i (f*g - g*f), exact."""
    return (star(f, g) - star(g, f)) * (-I)


# ---------------------------------------------------------------------------
# mode symbols


def symbol_annihilate():
    """(x + i p)/sqrt2"""
    return X * INV_SQRT2 + P * (I * INV_SQRT2)


def symbol_create():
    return symbol_annihilate().conj()


def symbol_number():
    """a^dag a -> (x^2 + p^2 - 1)/2"""
    return star(symbol_create(), symbol_annihilate())


def symbol_hamiltonian():
    return symbol_number() + PhasePoly.constant(HALF)


def star_dissipator(symbol):
    """Phase-space image of D[O]: O*W*O^dag - (O^dag O * W + W * O^dag O)/2."""
    sandwich = star_with_symbol(symbol, "left").compose(
        star_with_symbol(symbol.conj(), "right"))
    odo = star(symbol.conj(), symbol)
    sym = (star_with_symbol(odo, "left") + star_with_symbol(odo, "right")).scale(-HALF)
    return sandwich + sym


def derive_qsl_operator():
    """Generator of the Wigner-function equation of motion, exact.

    Harmonic bracket plus the three star dissipators, with the rates kept
    as indeterminates; returns the normal-ordered PhaseDiffOp.
    """
    w_h = symbol_hamiltonian()
    bracket = (star_with_symbol(w_h, "left") - star_with_symbol(w_h, "right")).scale(-I)
    pieces = [bracket]
    for rate, symbol in (("kappa1", symbol_create()),
                         ("gamma1", symbol_annihilate()),
                         ("gamma2", star(symbol_annihilate(), symbol_annihilate()))):
        pieces.append(star_dissipator(symbol).scale(PhasePoly.variable(rate)))
    total = PhaseDiffOp.zero()
    for piece in pieces:
        total = total + piece
    return total


# ---------------------------------------------------------------------------
# renderings


def render_text(op):
    return op.render()


def render_json(op):
    """JSON-ready dict; coefficients as exact fraction strings."""
    terms = []
    for (m, n) in sorted(op.terms):
        poly = []
        for key in sorted(op.terms[(m, n)].terms, key=_mono_order):
            val = op.terms[(m, n)].terms[key]
            poly.append({
                "x": key[0], "p": key[1],
                "kappa1": key[2], "gamma1": key[3], "gamma2": key[4],
                "re": _frac_str(val.ra), "im": _frac_str(val.ia),
                "re_sqrt2": _frac_str(val.rb), "im_sqrt2": _frac_str(val.ib),
            })
        terms.append({"dx_order": m, "dp_order": n, "poly": poly})
    return {"generator": terms}


def render_latex(op):
    lines = []
    for (m, n) in sorted(op.terms):
        poly = _latex_poly(op.terms[(m, n)])
        ds = ""
        if m:
            ds += r"\partial_x" + (f"^{{{m}}}" if m > 1 else "")
        if n:
            ds += r"\partial_p" + (f"^{{{n}}}" if n > 1 else "")
        lines.append(rf"\left[{poly}\right]{ds}")
    return " + ".join(lines) if lines else "0"


def _latex_poly(poly):
    bits = []
    for key in sorted(poly.terms, key=_mono_order):
        val = poly.terms[key]
        names = ("x", "p", r"\kappa_1", r"\gamma_1", r"\gamma_2")
        mono = "".join(f"{n}^{{{e}}}" if e > 1 else n for n, e in zip(names, key) if e)
        bits.append(_latex_scalar(val) + (r"\," + mono if mono else ""))
    return " + ".join(bits) if bits else "0"


def _latex_scalar(val):
    parts = []
    for f, tag in ((val.ra, ""), (val.ia, "i"), (val.rb, r"\sqrt{2}"), (val.ib, r"i\sqrt{2}")):
        if f:
            sign = "-" if f < 0 else ""
            af = abs(f)
            body = str(af.numerator) if af.denominator == 1 else \
                rf"\tfrac{{{af.numerator}}}{{{af.denominator}}}"
            if tag and af == 1:
                body = ""
            parts.append(f"{sign}{body}{tag}")
    if not parts:
        return "0"
    out = parts[0]
    for piece in parts[1:]:
        out += piece if piece.startswith("-") else "+" + piece
    return f"({out})" if len(parts) > 1 else out
