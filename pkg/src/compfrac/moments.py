"""Exact initial derivatives of the temperature function.

The temperature theta(y) = I_alpha(y)/I_alpha(0) obeys a hierarchy in
which each power moment satisfies

    dI_n/dy = (n - i) [ (n + k - 1) I_{n+k-2} - I_{n+j-1} / theta ].

Two independent routes turn the initial moments of a spectrum into the
derivatives theta^(n)(0):

* the Comptonization route (i=j=k=2, alpha=4), where energy conservation
  closes the hierarchy and each moment is a polynomial in theta and its
  derivatives, built by iterating a first-order differential operator;
* the general route, which differentiates I_alpha(y)/I_alpha(0) directly,
  substituting the hierarchy for every moment derivative that appears.

Both produce exact rational tables for exact rational moments; they must
agree wherever both apply, which is one of the package's core checks.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping

from .expressions import THETA, ThetaExpression, deriv_var, moment_var
from .spectra import (
    COMPTONIZATION,
    DegenerateAlphaWarning,
    InitialSpectrum,
    TransportParams,
    check_temperature_normalization,
    initial_moment,
)


class DegenerateIndex(ValueError):
    """The moment-recurrence operator is undefined at index 2."""


class NonlinearSolveImpossible(ArithmeticError):
    """The leading coefficient of the highest derivative vanished."""


class NormalizationError(ValueError):
    """The spectrum violates the closure condition theta(0) = 1."""


# ---------------------------------------------------------------------------
# Comptonization route


def apply_D(expr: ThetaExpression, n: int) -> ThetaExpression:
    """One step of the moment recurrence: (2-n)^-1 (d/dy - (n+1)(n-2)).

    Applies only to expressions in theta and its derivatives (the
    Comptonization hierarchy); moment variables are not allowed here.
    """
    if n == 2:
        raise DegenerateIndex("the recurrence operator divides by 2 - n; n = 2 is excluded")
    if expr.moment_indices():
        raise ValueError("operator applies to pure temperature expressions only")
    lam = Fraction((n + 1) * (n - 2))
    return (expr.differentiate() - lam * expr) * Fraction(1, 2 - n)


@lru_cache(maxsize=None)
def moment_expression(n: int) -> ThetaExpression:
    """I_n(y)/I_3(0) as an exact polynomial in theta(y) and its derivatives.

    Starts from the conserved energy moment (I_3 constant) and climbs one
    index at a time via I_{m+1} = theta * D_m I_m.  The result involves
    derivatives up to order n - 4 only.
    """
    if n < 3:
        raise ValueError("moment expressions start at the conserved index n = 3")
    if n == 3:
        return ThetaExpression.constant(1)
    theta = ThetaExpression.theta_power(1)
    return theta * apply_D(moment_expression(n - 1), n - 1)


@dataclass(frozen=True)
class DerivativeTable:
    """Initial derivatives theta^(0)(0) ... theta^(M)(0), exact.

    ``exact`` is False when any input moment came from quadrature (the
    float was lifted to a rational, so downstream arithmetic is still
    exact but inherits the quadrature error).
    """

    values: tuple
    provenance: str
    params: TransportParams
    spectrum: str
    moment_indices: tuple
    exact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(Fraction(v) for v in self.values))
        if self.values[0] != 1 and self.exact:
            raise NormalizationError(
                f"temperature at y=0 must be exactly 1, got {self.values[0]}"
            )

    @property
    def order(self) -> int:
        return len(self.values) - 1

    @property
    def floats(self) -> tuple:
        return tuple(float(v) for v in self.values)

    def __getitem__(self, n: int) -> Fraction:
        return self.values[n]

    def truncated(self, order: int) -> "DerivativeTable":
        if order > self.order:
            raise ValueError(f"table holds orders 0..{self.order}, asked for {order}")
        return DerivativeTable(
            values=self.values[: order + 1],
            provenance=self.provenance,
            params=self.params,
            spectrum=self.spectrum,
            moment_indices=self.moment_indices,
            exact=self.exact,
        )

    def to_json_dict(self) -> dict:
        return {
            "schema": "compfrac.derivative-table/1",
            "provenance": self.provenance,
            "exact": self.exact,
            "spectrum": self.spectrum,
            "params": {
                "i": str(self.params.i),
                "j": str(self.params.j),
                "k": str(self.params.k),
                "alpha": str(self.params.alpha),
            },
            "moment_indices": [str(ix) for ix in self.moment_indices],
            "values": [
                {
                    "n": n,
                    "numerator": str(v.numerator),
                    "denominator": str(v.denominator),
                    "float": float(v),
                }
                for n, v in enumerate(self.values)
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DerivativeTable":
        if data.get("schema") != "compfrac.derivative-table/1":
            raise ValueError(f"unknown schema: {data.get('schema')!r}")
        p = data["params"]
        params = TransportParams(
            Fraction(p["i"]), Fraction(p["j"]), Fraction(p["k"]), Fraction(p["alpha"])
        )
        rows = sorted(data["values"], key=lambda r: r["n"])
        values = tuple(Fraction(int(r["numerator"]), int(r["denominator"])) for r in rows)
        return cls(
            values=values,
            provenance=data["provenance"],
            params=params,
            spectrum=data.get("spectrum", ""),
            moment_indices=tuple(Fraction(s) for s in data.get("moment_indices", [])),
            exact=bool(data.get("exact", True)),
        )

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "DerivativeTable":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def comptonization_table_from_moments(
    moments: Mapping, order: int, spectrum_label: str = "<moments>"
) -> DerivativeTable:
    """Solve the closed Comptonization hierarchy for the derivative table.

    ``moments`` maps integer indices 3 .. order+4 to I_n(0) values
    (Fractions, or floats that are lifted to exact rationals).  At each
    index n the single new unknown theta^(n-4)(0) enters linearly; its
    coefficient can only vanish for degenerate data (theta = 0).
    """
    lifted = {int(n): Fraction(v) for n, v in moments.items()}
    exact = all(isinstance(v, (int, Fraction)) for v in moments.values())
    needed = range(3, order + 5)
    missing = [n for n in needed if n not in lifted]
    if missing:
        raise ValueError(f"moments missing for indices {missing}")
    energy = lifted[3]
    if energy <= 0:
        raise NonlinearSolveImpossible("conserved energy moment I_3(0) must be positive")

    known: dict = {}
    for n in range(4, order + 5):
        target = lifted[n] / energy
        unknown = deriv_var(n - 4)
        a, b = moment_expression(n).linear_coefficients(unknown, known)
        if a == 0:
            raise NonlinearSolveImpossible(
                f"coefficient of the order-{n - 4} derivative vanished at index {n}; "
                "the spectrum is degenerate"
            )
        known[unknown] = (target - b) / a

    values = tuple(known[deriv_var(m)] for m in range(order + 1))
    if exact and values[0] != 1:
        raise NormalizationError(
            f"I_4(0)/(4 I_3(0)) = {values[0]}, so theta(0) != 1; "
            "the spectrum violates energy-conservation closure"
        )
    if not exact and abs(float(values[0]) - 1.0) > 1e-9:
        raise NormalizationError(
            f"quadrature moments give theta(0) = {float(values[0])!r}, too far from 1"
        )
    return DerivativeTable(
        values=values,
        provenance="comptonization-route",
        params=COMPTONIZATION,
        spectrum=spectrum_label,
        moment_indices=tuple(Fraction(n) for n in needed),
        exact=exact,
    )


def theta_derivatives_comptonization(spectrum: InitialSpectrum, order: int) -> DerivativeTable:
    """Derivative table for the standard Comptonization parameters."""
    report = check_temperature_normalization(spectrum, COMPTONIZATION)
    if not report.passed:
        raise NormalizationError(
            f"spectrum fails the closure check {report.detail}: ratio = {report.ratio}"
        )
    moments = {n: initial_moment(spectrum, n) for n in range(3, order + 5)}
    return comptonization_table_from_moments(moments, order, spectrum.describe())


# ---------------------------------------------------------------------------
# general route


def hierarchy_rule(params: TransportParams) -> Callable[[Fraction], ThetaExpression]:
    """The substitution dI_n/dy -> (n-i)[(n+k-1) I_{n+k-2} - I_{n+j-1}/theta]."""

    def rule(n: Fraction) -> ThetaExpression:
        pre = Fraction(n) - params.i
        grow = ThetaExpression.variable(moment_var(n + params.k - 2)) * (
            Fraction(n) + params.k - 1
        )
        cool = ThetaExpression.variable(moment_var(n + params.j - 1)) * ThetaExpression.theta_power(-1)
        return (grow - cool) * pre

    return rule


@lru_cache(maxsize=None)
def _general_template(params: TransportParams, n: int) -> ThetaExpression:
    """d^n/dy^n of I_alpha(y), before division by I_alpha(0)."""
    rule = hierarchy_rule(params)
    if n == 1:
        return rule(params.alpha)
    return _general_template(params, n - 1).differentiate(moment_rule=rule)


def theta_derivatives_general(
    params: TransportParams, spectrum: InitialSpectrum, order: int
) -> DerivativeTable:
    """Derivative table by direct differentiation of the moment ratio.

    Works for any transport parameters; converges provided every moment
    index reached by the recursion (alpha shifted by multiples of k-2 and
    j-1) has a convergent integral.
    """
    if params.alpha == params.i:
        warnings.warn(
            "alpha equals i, so theta(y) is identically 1 and every derivative vanishes",
            DegenerateAlphaWarning,
            stacklevel=2,
        )
        values = (Fraction(1),) + (Fraction(0),) * order
        return DerivativeTable(
            values=values,
            provenance="general-route",
            params=params,
            spectrum=spectrum.describe(),
            moment_indices=(params.alpha,),
            exact=True,
        )

    templates = [_general_template(params, n) for n in range(1, order + 1)]
    indices: set = {params.alpha}
    for t in templates:
        indices.update(t.moment_indices())
    indices = sorted(indices)

    moments = {ix: initial_moment(spectrum, ix) for ix in indices}
    exact = all(isinstance(v, (int, Fraction)) for v in moments.values())
    norm = Fraction(moments[params.alpha])

    bound: dict = {THETA: Fraction(1)}
    for ix, v in moments.items():
        bound[moment_var(ix)] = Fraction(v)

    values = [Fraction(1)]
    for n, tpl in enumerate(templates, start=1):
        val = tpl.evaluate(bound) / norm
        values.append(val)
        bound[deriv_var(n)] = val

    return DerivativeTable(
        values=tuple(values),
        provenance="general-route",
        params=params,
        spectrum=spectrum.describe(),
        moment_indices=tuple(indices),
        exact=exact,
    )
