"""Guided-mode table of a waveguide profile."""

import logging

from runs.base import ScenarioRun

logger = logging.getLogger("slabguide.runs.modes")

COLUMNS = ["parity", "order", "lambda", "beta", "n_eff", "r", "residual"]


class ModesRun(ScenarioRun):
    """Solve the dispersion relation and write one row per guided mode."""

    run_kind = "modes"

    def run(self) -> str:
        modes = self.modes
        rows = [(m.parity, m.order, m.lam, m.beta, m.n_eff, m.r, m.residual) for m in modes]
        self.write_table("modes.txt", COLUMNS, rows)
        for m in modes:
            logger.info(
                f"[{self.run_kind}] {m.parity}{m.order}: lambda={m.lam:.6g} beta={m.beta:.6g} "
                f"n_eff={m.n_eff:.6g} residual={m.residual:.1e}"
            )
        if not modes:
            return "no guided modes"
        return f"{len(modes)} guided modes, " + ", ".join(f"{m.parity}{m.order}={m.lam:.4g}" for m in modes)
