"""Pointwise evaluation of the Green's function and its parts at probe pairs."""

import logging

from runs.base import ScenarioRun
from slabguide.errors import DomainError
from slabguide.green import FieldPoint, eval_parts

logger = logging.getLogger("slabguide.runs.green_probe")

PARTS = ("guided", "radiation", "evanescent", "full")


class GreenProbeRun(ScenarioRun):
    """Evaluate G(x, z; xi, zeta) for every ``probe.pairs`` entry."""

    run_kind = "green-probe"

    def run(self) -> str:
        pairs = self.scenario["probe"]["pairs"]
        if not pairs:
            raise DomainError("probe.pairs is empty")
        columns = ["x", "z", "xi", "zeta"]
        for part in PARTS:
            columns += [f"{part}_re", f"{part}_im"]
        rows = []
        for x, z, xi, zeta in pairs:
            parts = eval_parts(self.evaluator, FieldPoint(x, z), FieldPoint(xi, zeta))
            row = [x, z, xi, zeta]
            for part in PARTS:
                value = complex(parts[part])
                row += [value.real, value.imag]
            rows.append(row)
            logger.debug(f"[{self.run_kind}] G({x:g}, {z:g}; {xi:g}, {zeta:g}) = {parts['full']}")
        self.write_table("green_probe.txt", columns, rows)
        return f"{len(rows)} probe pairs"
