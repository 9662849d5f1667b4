"""Continued-fraction resummation of the temperature derivative series.

The Taylor series built from the initial derivatives diverges beyond a
finite radius, so the working representation is the equivalent
continued fraction

    Psi_N(y) = c0 / (1 + c1 y / (1 + c2 y / ( ... / (1 + cN y)))),

whose coefficients come from the classical two-dimensional quotient-
difference style recursion on the series coefficients.  Everything up
to evaluation is exact rational arithmetic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .moments import DerivativeTable


class PoleHit(ArithmeticError):
    """Evaluation ran into a vanishing denominator."""

    def __init__(self, y, level, message=None):
        self.y = y
        self.level = level
        super().__init__(
            message or f"denominator vanished at y={y!r} (fraction level {level})"
        )


class PrecisionLossWarning(UserWarning):
    """Double-precision evaluation disagrees with the exact value."""


@dataclass(frozen=True)
class ContinuedFraction:
    """Exact coefficients c0..cN plus the zero-pivot diagnostic.

    ``pivot_break`` is the level at which the coefficient recursion hit a
    zero pivot; the stored coefficients end just below it and represent
    the function exactly (a terminating fraction), which is why this is
    a diagnostic rather than an error.
    """

    coefficients: tuple
    source: str = ""
    pivot_break: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", tuple(Fraction(c) for c in self.coefficients)
        )
        if not self.coefficients:
            raise ValueError("a continued fraction needs at least c0")

    @property
    def truncation(self) -> int:
        return len(self.coefficients) - 1

    @property
    def floats(self) -> tuple:
        return tuple(float(c) for c in self.coefficients)

    def __getitem__(self, n: int) -> Fraction:
        return self.coefficients[n]

    def to_json_dict(self) -> dict:
        return {
            "schema": "compfrac.continued-fraction/1",
            "source": self.source,
            "pivot_break": self.pivot_break,
            "coefficients": [
                {
                    "n": n,
                    "numerator": str(c.numerator),
                    "denominator": str(c.denominator),
                    "float": float(c),
                }
                for n, c in enumerate(self.coefficients)
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ContinuedFraction":
        if data.get("schema") != "compfrac.continued-fraction/1":
            raise ValueError(f"unknown schema: {data.get('schema')!r}")
        rows = sorted(data["coefficients"], key=lambda r: r["n"])
        return cls(
            coefficients=tuple(
                Fraction(int(r["numerator"]), int(r["denominator"])) for r in rows
            ),
            source=data.get("source", ""),
            pivot_break=data.get("pivot_break"),
        )


def taylor_eval(table: DerivativeTable, level: int, y) -> float:
    """Taylor partial sum of theta(y) through the given order.

    The sum runs in exact arithmetic (y lifted to an exact binary
    fraction) and is rounded exactly once at the end.
    """
    if level > table.order:
        raise ValueError(f"table holds orders 0..{table.order}, asked for {level}")
    yf = Fraction(y)
    total = Fraction(0)
    power = Fraction(1)
    for n in range(level + 1):
        if n:
            power *= yf
        total += table[n] * power / math.factorial(n)
    return float(total)


def cf_coefficients(table: DerivativeTable) -> ContinuedFraction:
    """Continued-fraction coefficients from the derivative table, exactly.

    Row zero of the working array holds the Taylor coefficients
    theta^(m)(0)/m!; each later row is built from the two above it and
    contributes its leading entry as the next coefficient.  A vanishing
    leading entry stops the recursion: the fraction terminates there.
    """
    series = [table[m] / math.factorial(m) for m in range(table.order + 1)]
    top = table.order
    coeffs = [series[0]]
    pivot_break = None

    if series[0] == 0:
        # degenerate table with theta(0) = 0; nothing below c0 is defined
        pivot_break = 0
    else:
        prev2: list | None = None
        prev = series
        for n in range(1, top + 1):
            width = top - n + 1
            if n == 1:
                row = [-prev[m + 1] / prev[0] for m in range(width)]
            else:
                row = [
                    prev2[m + 1] / prev2[0] - prev[m + 1] / prev[0]
                    for m in range(width)
                ]
            if row[0] == 0:
                # zero pivot: the fraction terminates at level n - 1 and
                # the coefficients so far represent the series exactly
                pivot_break = n
                break
            coeffs.append(row[0])
            prev2, prev = prev, row

    return ContinuedFraction(
        coefficients=tuple(coeffs), source=table.spectrum, pivot_break=pivot_break
    )


def cf_eval(
    cf: ContinuedFraction,
    level: int,
    y,
    pole_tol: float = 1e-12,
    cross_check: bool = False,
) -> float:
    """Evaluate Psi_level(y) by backward recurrence in double precision.

    Raises PoleHit when any denominator in the recurrence falls below
    pole_tol relative to its natural scale.  With cross_check=True the
    value is recomputed in exact rational arithmetic and a warning is
    issued if the two disagree beyond 1e-8 relative.
    """
    if level > cf.truncation:
        raise ValueError(f"fraction holds levels 0..{cf.truncation}, asked for {level}")
    c = cf.floats
    yv = float(y)
    t = 1.0
    for n in range(level, 0, -1):
        scale = max(1.0, abs(c[n] * yv))
        if abs(t) < pole_tol * scale:
            raise PoleHit(yv, n)
        t = 1.0 + c[n] * yv / t
    if abs(t) < pole_tol:
        raise PoleHit(yv, 0)
    value = c[0] / t

    if cross_check:
        exact = cf_eval_exact(cf, level, Fraction(y))
        ref = float(exact)
        if ref != 0 and abs(value - ref) > 1e-8 * abs(ref):
            warnings.warn(
                f"double-precision fraction evaluation at y={yv} differs from the "
                f"exact value by {abs(value - ref) / abs(ref):.2e} relative",
                PrecisionLossWarning,
                stacklevel=2,
            )
    return value


def cf_eval_exact(cf: ContinuedFraction, level: int, y: Fraction) -> Fraction:
    """Exact rational evaluation of Psi_level at rational y."""
    if level > cf.truncation:
        raise ValueError(f"fraction holds levels 0..{cf.truncation}, asked for {level}")
    y = Fraction(y)
    t = Fraction(1)
    for n in range(level, 0, -1):
        if t == 0:
            raise PoleHit(y, n)
        t = 1 + cf[n] * y / t
    if t == 0:
        raise PoleHit(y, 0)
    return cf[0] / t


@dataclass(frozen=True)
class RationalForm:
    """Psi_N written as P(y)/Q(y) with exact coefficients, Q(0) = 1."""

    numerator: tuple
    denominator: tuple

    def __post_init__(self):
        num = tuple(Fraction(v) for v in self.numerator)
        den = tuple(Fraction(v) for v in self.denominator)
        if not den or den[0] == 0:
            raise ValueError("denominator must have a nonzero constant term")
        if den[0] != 1:
            num = tuple(v / den[0] for v in num)
            den = tuple(v / den[0] for v in den)
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @property
    def degree_pair(self) -> tuple:
        return (len(self.numerator) - 1, len(self.denominator) - 1)

    def eval_exact(self, y) -> Fraction:
        y = Fraction(y)
        num = _horner_exact(self.numerator, y)
        den = _horner_exact(self.denominator, y)
        if den == 0:
            raise PoleHit(y, None, f"denominator root at y={y}")
        return num / den

    def eval_float(self, y):
        y = np.asarray(y, dtype=float)
        num = _horner_float(self.numerator, y)
        den = _horner_float(self.denominator, y)
        return num / den


def _horner_exact(coeffs: Sequence[Fraction], y: Fraction) -> Fraction:
    total = Fraction(0)
    for c in reversed(coeffs):
        total = total * y + c
    return total


def _horner_float(coeffs: Sequence[Fraction], y: np.ndarray) -> np.ndarray:
    total = np.zeros_like(y, dtype=float)
    for c in reversed(coeffs):
        total = total * y + float(c)
    return total


def to_rational(cf: ContinuedFraction, level: int) -> RationalForm:
    """Fold the fraction into a single ratio of polynomials.

    Uses the three-term recurrence over convergents; numerator degree is
    floor(level/2), denominator degree ceil(level/2), and Q(0) = 1 falls
    out of the construction.
    """
    if level > cf.truncation:
        raise ValueError(f"fraction holds levels 0..{cf.truncation}, asked for {level}")
    p_prev, q_prev = [Fraction(0)], [Fraction(1)]  # convergent before c0
    p_cur, q_cur = [cf[0]], [Fraction(1)]
    for n in range(1, level + 1):
        p_nxt = _poly_add(p_cur, _poly_shift_scale(p_prev, cf[n]))
        q_nxt = _poly_add(q_cur, _poly_shift_scale(q_prev, cf[n]))
        p_prev, q_prev = p_cur, q_cur
        p_cur, q_cur = p_nxt, q_nxt
    return RationalForm(numerator=tuple(p_cur), denominator=tuple(q_cur))


def _poly_add(a: list, b: list) -> list:
    out = [Fraction(0)] * max(len(a), len(b))
    for i, v in enumerate(a):
        out[i] += v
    for i, v in enumerate(b):
        out[i] += v
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def _poly_shift_scale(a: list, c: Fraction) -> list:
    """c * y * a(y)."""
    return [Fraction(0)] + [c * v for v in a]


def maclaurin_of_rational(rf: RationalForm, order: int) -> list:
    """Exact series coefficients of P/Q through the given order."""
    num = list(rf.numerator) + [Fraction(0)] * max(0, order + 1 - len(rf.numerator))
    den = list(rf.denominator) + [Fraction(0)] * max(0, order + 1 - len(rf.denominator))
    out: list = []
    for n in range(order + 1):
        acc = num[n]
        for l in range(1, n + 1):
            if l < len(den):
                acc -= den[l] * out[n - l]
        out.append(acc / den[0])
    return out


# ---------------------------------------------------------------------------
# defect detection and level selection


@dataclass(frozen=True)
class Pole:
    location: float
    multiplicity: int
    residual: float


@dataclass(frozen=True)
class DefectReport:
    """Positive-real denominator roots found by scan plus bisection."""

    poles: tuple
    y_max: float
    panels: int

    def is_empty(self) -> bool:
        return not self.poles

    def to_json_dict(self) -> dict:
        return {
            "schema": "compfrac.defect-report/1",
            "y_max": self.y_max,
            "panels": self.panels,
            "poles": [
                {
                    "location": p.location,
                    "multiplicity": p.multiplicity,
                    "residual": p.residual,
                }
                for p in self.poles
            ],
        }


def find_defects(
    rf: RationalForm,
    y_max: float,
    panels: int = 4096,
    root_tol: float = 1e-12,
    cancel_tol: float = 1e-8,
) -> DefectReport:
    """Scan (0, y_max] for real denominator roots.

    A dense sign scan (panels intervals) catches every odd-multiplicity
    root wider than the panel spacing; bisection then refines each
    bracket to root_tol.  A root where the numerator also vanishes
    (relative residual below cancel_tol) is a removable common factor,
    not a defect, and is dropped.
    """
    if y_max <= 0:
        raise ValueError("y_max must be positive")
    den = rf.denominator
    num = rf.numerator

    ys = np.linspace(0.0, y_max, panels + 1)
    vals = _horner_float(den, ys)

    poles: list = []
    for idx in range(panels):
        a, b = ys[idx], ys[idx + 1]
        fa, fb = vals[idx], vals[idx + 1]
        root = None
        if fb == 0.0:
            root = b
        elif fa == 0.0:
            # either y = 0 (where Q = 1, so only roundoff) or a root already
            # recorded when it closed the previous panel
            continue
        elif (fa < 0) != (fb < 0):
            lo, hi, flo = a, b, fa
            while hi - lo > root_tol:
                mid = 0.5 * (lo + hi)
                fm = float(_horner_float(den, np.asarray(mid)))
                if fm == 0.0:
                    lo = hi = mid
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            root = 0.5 * (lo + hi)
        if root is None or root <= 0:
            continue

        den_scale = _abs_poly_scale(den, root)
        residual = abs(float(_horner_float(den, np.asarray(root)))) / den_scale
        num_scale = _abs_poly_scale(num, root)
        num_res = abs(float(_horner_float(num, np.asarray(root)))) / num_scale
        if num_res < cancel_tol:
            continue  # common factor cancels; no actual pole
        dden = _poly_derivative(den)
        slope_scale = _abs_poly_scale(dden, root)
        slope = abs(float(_horner_float(dden, np.asarray(root)))) / slope_scale
        multiplicity = 1 if slope > 1e-6 else 2
        poles.append(Pole(location=float(root), multiplicity=multiplicity, residual=residual))

    return DefectReport(poles=tuple(poles), y_max=float(y_max), panels=panels)


def _abs_poly_scale(coeffs: Sequence[Fraction], y: float) -> float:
    total = 0.0
    power = 1.0
    for c in coeffs:
        total += abs(float(c)) * power
        power *= abs(y)
    return total if total > 0 else 1.0


def _poly_derivative(coeffs: Sequence[Fraction]) -> tuple:
    return tuple(l * c for l, c in enumerate(coeffs) if l > 0) or (Fraction(0),)


@dataclass(frozen=True)
class CandidateDiagnostics:
    level: int
    defect_count: int
    pole_locations: tuple
    tail_value: float | None
    score: float | None


@dataclass(frozen=True)
class SelectionResult:
    level: int
    fallback: bool
    note: str
    candidates: tuple

    def to_json_dict(self) -> dict:
        return {
            "schema": "compfrac.selection/1",
            "level": self.level,
            "fallback": self.fallback,
            "note": self.note,
            "candidates": [
                {
                    "level": c.level,
                    "defect_count": c.defect_count,
                    "pole_locations": list(c.pole_locations),
                    "tail_value": c.tail_value,
                    "score": c.score,
                }
                for c in self.candidates
            ],
        }


def select_approximant(
    cf: ContinuedFraction,
    y_max: float,
    theta_eq=None,
    panels: int = 4096,
) -> SelectionResult:
    """Pick the working truncation level.

    Levels with defects (positive-real poles) on (0, y_max] are excluded;
    the highest surviving level wins.  The even levels of a fraction
    built from sign-regular data converge while odd ones can stray, and
    the highest admissible order carries the most series information, so
    depth rather than tail scoring is the primary rule.  When a positive
    equilibrium temperature is supplied, every admissible level is also
    scored by |Psi_N(y_max) - theta_eq| (exact arithmetic; ties ranked
    even first, then deeper) and the scores go into the diagnostics; the
    note records when some shallower level lands closer than the chosen
    one.  The tail values oscillate around the asymptote, so an argmin
    over scores would pick whichever oscillation happens to land nearest
    and is not a stable selector.
    """
    diags: list = []
    admissible: list = []
    y_exact = Fraction(y_max)
    score_it = theta_eq is not None and Fraction(theta_eq) > 0
    theta_exact = Fraction(theta_eq) if score_it else None

    for level in range(cf.truncation + 1):
        rf = to_rational(cf, level)
        report = (
            DefectReport(poles=(), y_max=float(y_max), panels=panels)
            if level == 0
            else find_defects(rf, y_max, panels=panels)
        )
        tail = None
        score = None
        if report.is_empty():
            tail_exact = rf.eval_exact(y_exact)
            tail = float(tail_exact)
            if score_it:
                score = float(abs(tail_exact - theta_exact))
            admissible.append((level, tail_exact))
        diags.append(
            CandidateDiagnostics(
                level=level,
                defect_count=len(report.poles),
                pole_locations=tuple(p.location for p in report.poles),
                tail_value=tail,
                score=score,
            )
        )

    if not admissible:
        # cannot happen via cf_coefficients (level 0 is always pole-free),
        # but keep the contract explicit
        return SelectionResult(
            level=0, fallback=True, note="no admissible level; constant fallback",
            candidates=tuple(diags),
        )

    chosen = max(lv for lv, _ in admissible)
    note = "highest defect-free level"
    if score_it and len(admissible) > 1:
        best = min(
            admissible,
            key=lambda it: (abs(it[1] - theta_exact), it[0] % 2, -it[0]),
        )
        if best[0] != chosen:
            note += (
                f"; level {best[0]} lands nearer theta_eq="
                f"{float(theta_exact):.6g} at y={y_max} (see candidate scores)"
            )

    fallback = chosen == 0 and cf.truncation > 0
    if fallback:
        note = "every level >= 1 has defects; constant fallback"
    return SelectionResult(
        level=chosen, fallback=fallback, note=note, candidates=tuple(diags)
    )
