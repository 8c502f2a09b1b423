"""Picard iteration for the perturbed problem L_eps u = f."""

import logging

import numpy as np

from runs.base import ScenarioRun
from slabguide.errors import DivergenceError
from slabguide.field import PicardTrace, apply_green, helmholtz_residual, picard_solve
from slabguide.grid import ComplexField

logger = logging.getLogger("slabguide.runs.picard")

TRACE_COLUMNS = ["iteration", "difference", "ratio"]


class PicardRun(ScenarioRun):
    """Iterate to the fixed point and compare the L_eps and L_0 residuals.

    The trace file is written on divergence as well.
    """

    run_kind = "picard"

    def write_trace(self, trace: PicardTrace) -> None:
        self.write_table("picard_trace.txt", TRACE_COLUMNS, trace.rows())

    def on_failure(self, exc: Exception) -> None:
        if isinstance(exc, DivergenceError) and isinstance(exc.trace, PicardTrace):
            self.write_trace(exc.trace)

    def run(self) -> str:
        settings = self.scenario["picard"]
        pmap = self.perturbation_map()
        eps = self.resolve_eps(pmap)
        grid = self.grid
        f_cells = self.source_on(grid.staggered())
        f_nodes = self.source_on(grid)

        u0 = apply_green(self.evaluator, f_cells, grid, self.threads)
        u, trace = picard_solve(
            self.evaluator,
            pmap,
            None,
            eps,
            grid,
            self.weight,
            max_iter=int(settings["max_iter"]),
            tol=settings["tol"],
            base=u0,
            linearized=bool(settings["linearized"]),
            threads=self.threads,
        )
        self.write_trace(trace)
        self.write_field("u.txt", u)

        scale = f_nodes.max_abs()
        perturbed = helmholtz_residual(u, self.profile, f_nodes, pmap=pmap, eps=eps)
        unperturbed = helmholtz_residual(u0, self.profile, f_nodes)
        self.write_field("residual.txt", ComplexField(grid, np.where(perturbed.mask, 0.0, perturbed.values)))
        self.write_lines("residual_summary.txt", [
            f"eps = {eps:.12e}",
            f"iterations = {trace.iterations}",
            f"converged = {trace.converged}",
            f"relative_L_eps = {perturbed.masked_max / scale:.12e}",
            f"relative_L_0 = {unperturbed.masked_max / scale:.12e}",
        ])
        status = "converged" if trace.converged else "not converged"
        return f"{status} after {trace.iterations} iterations at eps={eps:.4g}"
