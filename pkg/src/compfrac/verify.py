"""Closing the loop: does the solved spectrum reproduce its own input?

The temperature driving the transport solve is an approximant built
from initial derivative data alone.  Integrating the solved spectrum
gives a second, independent temperature curve; agreement between the
two is the consistency check on the whole pipeline, and conservation
drifts measure the solver against the exact invariants of the scheme.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .transport import PdeSolution, TemperatureFn, grid_moment

__all__ = [
    "ConservationReport",
    "VerificationReport",
    "conservation_report",
    "output_temperature",
    "self_consistency",
]


def output_temperature(sol: PdeSolution) -> tuple:
    """Temperature curve recovered from the solution itself.

    theta_out(y) = I_alpha(y) / I_alpha(0), with the moment taken by the
    same cell rule that backs the solver's conservation traces.  Raises
    SnapshotMissing if a requested snapshot was not stored.
    """
    alpha = sol.params.alpha
    base = grid_moment(sol.grid, sol.snapshot(sol.grid.snapshot_times[0]), alpha, sol.params)
    curve = []
    for t in sol.grid.snapshot_times:
        val = grid_moment(sol.grid, sol.snapshot(t), alpha, sol.params)
        curve.append((float(t), val / base))
    return tuple(curve)


@dataclass(frozen=True)
class ConservationReport:
    """Worst relative drifts of the two conserved moments over all accepted steps."""

    number_drift: float
    energy_drift: float
    steps: int

    def to_json_dict(self) -> dict:
        return {
            "schema": "compfrac.conservation/1",
            "number_drift": self.number_drift,
            "energy_drift": self.energy_drift,
            "steps": self.steps,
        }


def conservation_report(sol: PdeSolution) -> ConservationReport:
    num = sol.trace_number
    en = sol.trace_energy
    return ConservationReport(
        number_drift=float(np.max(np.abs(num / num[0] - 1.0))),
        energy_drift=float(np.max(np.abs(en / en[0] - 1.0))),
        steps=len(num) - 1,
    )


@dataclass(frozen=True)
class VerificationReport:
    """Snapshot-by-snapshot comparison of input and recovered temperature.

    rows hold (y, theta_in, theta_out, rel_dev) with rel_dev normalized
    by the input value.  theta_out(0) = 1 by construction, up to
    quadrature error in the base moment.
    """

    rows: tuple
    max_rel_dev: float
    argmax_y: float
    tolerance: float
    passed: bool
    number_drift: float
    energy_drift: float

    def to_json_dict(self) -> dict:
        return {
            "schema": "compfrac.verification/1",
            "rows": [list(r) for r in self.rows],
            "max_rel_dev": self.max_rel_dev,
            "argmax_y": self.argmax_y,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "number_drift": self.number_drift,
            "energy_drift": self.energy_drift,
        }

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("y,theta_in,theta_out,rel_dev\n")
            for y, t_in, t_out, dev in self.rows:
                fh.write(f"{y:.6g},{t_in:.6g},{t_out:.6g},{dev:.6g}\n")


def self_consistency(
    sol: PdeSolution, theta_fn: TemperatureFn, tolerance: float = 0.02
) -> VerificationReport:
    """Compare the recovered temperature against the driving one.

    Passes iff max_y |theta_out - theta_in| / theta_in <= tolerance.
    theta_fn must be the same function the solver ran with; handing a
    different one turns the report into a negative control.
    """
    cons = conservation_report(sol)
    rows = []
    worst = -1.0
    worst_y = 0.0
    for y, t_out in output_temperature(sol):
        t_in = theta_fn(y)
        dev = abs(t_out - t_in) / t_in
        rows.append((y, t_in, t_out, dev))
        if dev > worst:
            worst, worst_y = dev, y
    return VerificationReport(
        rows=tuple(rows),
        max_rel_dev=worst,
        argmax_y=worst_y,
        tolerance=tolerance,
        passed=worst <= tolerance,
        number_drift=cons.number_drift,
        energy_drift=cons.energy_drift,
    )
