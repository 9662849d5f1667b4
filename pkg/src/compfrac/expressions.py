"""Sparse multivariate polynomials with exact rational coefficients.

The moment hierarchy of the transport equation expresses every power
moment, and every y-derivative of the temperature function, as a
polynomial in a small set of indeterminates:

* ``("d", m)``, the m-th y-derivative of the temperature theta(y);
  ``("d", 0)`` is theta itself and is the only variable allowed a
  negative exponent (1/theta terms arise from the moment hierarchy),
* ``("I", n)``, the power moment I_n(y), keyed by its exact index n
  (a Fraction, since general transport parameters shift indices by
  non-integer amounts).

Coefficients are fractions.Fraction throughout.  Nothing in this module
touches floating point; float conversion happens at the table views.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Mapping

Var = tuple
Monomial = tuple


def deriv_var(m: int) -> Var:
    """Variable key for the m-th derivative of the temperature."""
    if m < 0:
        raise ValueError("derivative order must be >= 0")
    return ("d", m)


def moment_var(n) -> Var:
    """Variable key for the power moment of (exact) index n."""
    return ("I", Fraction(n))


THETA = deriv_var(0)


def _canonical(powers: Mapping[Var, int]) -> Monomial:
    items = tuple(sorted((v, e) for v, e in powers.items() if e != 0))
    for v, e in items:
        if e < 0 and v != THETA:
            raise ValueError(f"negative exponent only allowed for theta, got {v}^{e}")
    return items


def _var_str(v: Var, e: int) -> str:
    tag, idx = v
    if tag == "d":
        name = "t" if idx == 0 else f"t{idx}"
    else:
        name = f"I[{idx}]"
    return name if e == 1 else f"{name}^{e}"


class ThetaExpression:
    """Polynomial in the temperature, its derivatives, and power moments.

    Immutable by convention: all arithmetic returns new instances.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        clean: dict[Monomial, Fraction] = {}
        if terms:
            for mono, coeff in terms.items():
                c = Fraction(coeff)
                if c != 0:
                    clean[mono] = c
        self._terms = clean

    # -- construction helpers -------------------------------------------

    @classmethod
    def zero(cls) -> "ThetaExpression":
        return cls()

    @classmethod
    def constant(cls, c) -> "ThetaExpression":
        return cls({(): Fraction(c)})

    @classmethod
    def variable(cls, var: Var, exponent: int = 1) -> "ThetaExpression":
        return cls({_canonical({var: exponent}): Fraction(1)})

    @classmethod
    def theta_power(cls, exponent: int) -> "ThetaExpression":
        return cls.variable(THETA, exponent)

    # -- mapping access ---------------------------------------------------

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return dict(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def constant_value(self) -> Fraction:
        """The value of a constant expression; raises if variables remain."""
        if not self._terms:
            return Fraction(0)
        if set(self._terms) == {()}:
            return self._terms[()]
        raise ValueError(f"expression is not constant: {self!r}")

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other) -> "ThetaExpression":
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = dict(self._terms)
        for mono, coeff in other._terms.items():
            s = out.get(mono, Fraction(0)) + coeff
            if s == 0:
                out.pop(mono, None)
            else:
                out[mono] = s
        return _raw(out)

    __radd__ = __add__

    def __neg__(self) -> "ThetaExpression":
        return _raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "ThetaExpression":
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "ThetaExpression":
        return _coerce(other) + (-self)

    def __mul__(self, other) -> "ThetaExpression":
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            if c == 0:
                return ThetaExpression()
            return _raw({m: c * v for m, v in self._terms.items()})
        if not isinstance(other, ThetaExpression):
            return NotImplemented
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = _merge(m1, m2)
                s = out.get(mono, Fraction(0)) + c1 * c2
                if s == 0:
                    out.pop(mono, None)
                else:
                    out[mono] = s
        return _raw(out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self) -> str:
        if not self._terms:
            return "ThetaExpression(0)"
        parts = []
        for mono, coeff in sorted(self._terms.items()):
            factors = " ".join(_var_str(v, e) for v, e in mono)
            parts.append(f"{coeff}" if not factors else f"{coeff}*{factors}")
        return "ThetaExpression(" + " + ".join(parts) + ")"

    # -- calculus ---------------------------------------------------------

    def differentiate(
        self,
        moment_rule: Callable[[Fraction], "ThetaExpression"] | None = None,
    ) -> "ThetaExpression":
        """Formal d/dy under the derivation rules of the moment hierarchy.

        theta derivatives shift up one order, with the power chain rule
        d(theta^e) = e theta^(e-1) theta', valid for negative e as well.
        Moment variables I_n require ``moment_rule(n)``, the expression
        substituted for dI_n/dy (supplied by the caller, since it depends
        on the transport parameters).
        """
        acc: dict[Monomial, Fraction] = {}
        for mono, coeff in self._terms.items():
            for pos, (var, exp) in enumerate(mono):
                rest = _reduce_at(mono, pos)
                tag, idx = var
                if tag == "d":
                    dvar = _canonical({deriv_var(idx + 1): 1})
                    _accumulate(acc, _merge(rest, dvar), coeff * exp)
                else:
                    if moment_rule is None:
                        raise ValueError(
                            "expression contains moment variables; a moment "
                            "derivative rule is required"
                        )
                    dexpr = moment_rule(idx)
                    for m2, c2 in dexpr._terms.items():
                        _accumulate(acc, _merge(rest, m2), coeff * exp * c2)
        return _raw(acc)

    def evaluate(self, values: Mapping[Var, Fraction]) -> Fraction:
        """Exact value with every variable bound; raises KeyError if one is free."""
        total = Fraction(0)
        for mono, coeff in self._terms.items():
            prod = coeff
            for var, exp in mono:
                try:
                    base = values[var]
                except KeyError:
                    raise KeyError(f"no value bound for variable {_var_str(var, 1)}")
                prod *= Fraction(base) ** exp
            total += prod
        return total

    def linear_coefficients(
        self, unknown: Var, values: Mapping[Var, Fraction]
    ) -> tuple[Fraction, Fraction]:
        """Split the expression as a*unknown + b with all other variables bound.

        Raises ValueError if the unknown appears with exponent != 1.
        """
        a = Fraction(0)
        b = Fraction(0)
        for mono, coeff in self._terms.items():
            prod = coeff
            hit = False
            for var, exp in mono:
                if var == unknown:
                    if exp != 1:
                        raise ValueError(
                            f"{_var_str(unknown, 1)} enters with exponent {exp}, not linearly"
                        )
                    hit = True
                    continue
                prod *= Fraction(values[var]) ** exp
            if hit:
                a += prod
            else:
                b += prod
        return a, b

    # -- inspection -------------------------------------------------------

    def variables(self) -> set[Var]:
        out: set[Var] = set()
        for mono in self._terms:
            out.update(v for v, _ in mono)
        return out

    def max_derivative_order(self) -> int:
        orders = [v[1] for mono in self._terms for v, _ in mono if v[0] == "d"]
        return max(orders, default=-1)

    def moment_indices(self) -> set[Fraction]:
        return {v[1] for mono in self._terms for v, _ in mono if v[0] == "I"}


def _coerce(x) -> "ThetaExpression":
    if isinstance(x, ThetaExpression):
        return x
    if isinstance(x, (int, Fraction)):
        return ThetaExpression.constant(x)
    return NotImplemented


def _raw(terms: dict) -> ThetaExpression:
    out = ThetaExpression()
    out._terms = {m: c for m, c in terms.items() if c != 0}
    return out


def _merge(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    powers: dict[Var, int] = dict(m1)
    for var, exp in m2:
        e = powers.get(var, 0) + exp
        if e == 0:
            powers.pop(var, None)
        else:
            powers[var] = e
    return tuple(sorted(powers.items()))


def _reduce_at(mono: Monomial, pos: int) -> Monomial:
    """Monomial with the exponent at position pos lowered by one."""
    out = list(mono)
    var, exp = out[pos]
    if exp == 1:
        del out[pos]
    else:
        out[pos] = (var, exp - 1)
    return tuple(out)


def _accumulate(acc: dict, mono: Monomial, coeff: Fraction) -> None:
    if coeff == 0:
        return
    s = acc.get(mono, Fraction(0)) + coeff
    if s == 0:
        acc.pop(mono, None)
    else:
        acc[mono] = s
