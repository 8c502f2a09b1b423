"""First-order field of a guided mode under a coordinate perturbation.

Writes w0, w1 and w0 + eps w1 on the observation grid, the image of the
grid lines under the map, the guided-mode content of w1 at both ends of
the window and the first-order defect of the composite field.
"""

import logging

from runs.base import ScenarioRun
from slabguide.errors import DomainError
from slabguide.perturb import (
    first_order_defect,
    first_order_field,
    first_order_rhs,
    map_image,
    mode_overlap,
    zeroth_order_field,
)

logger = logging.getLogger("slabguide.runs.perturb")


class PerturbRun(ScenarioRun):
    run_kind = "perturb-first-order"

    def run(self) -> str:
        pmap = self.perturbation_map()
        eps = self.resolve_eps(pmap)
        if eps > 0.0:
            pmap.check_invertible(eps)

        even = [m for m in self.modes if m.parity == "s"]
        if not even:
            raise DomainError("profile has no symmetric guided mode to perturb")
        mode = even[0]
        logger.info(f"[{self.run_kind}] Perturbing mode s{mode.order} (lambda={mode.lam:.6g}, beta={mode.beta:.6g}), eps={eps:.6g}")

        grid = self.grid
        w0 = zeroth_order_field(self.profile, mode, grid)
        rhs = first_order_rhs(pmap, w0)
        w1 = first_order_field(self.evaluator, rhs, grid, self.threads)
        composite = w0 if eps == 0.0 else w0 + w1.scaled(eps)

        self.write_field("w0.txt", w0)
        self.write_field("w1.txt", w1)
        self.write_field("composite.txt", composite)

        rows = []
        for index, line in enumerate(map_image(pmap, grid, eps)):
            rows.extend((index, x, z) for x, z in line)
        self.write_table("map_image.txt", ["line", "x", "z"], rows)

        rows = []
        for m in self.modes:
            for t in (grid.z_min, grid.z_max):
                c = mode_overlap(w1, self.profile, m, t)
                rows.append((m.parity, m.order, t, c.real, c.imag, abs(c)))
        self.write_table("overlaps.txt", ["parity", "order", "z", "re", "im", "abs"], rows)

        stencil = first_order_defect(pmap, w0, w1, eps)
        defect = first_order_defect(pmap, w0, w1, eps, rhs=rhs)
        self.write_lines(
            "defect.txt",
            [f"eps = {eps:.12e}", f"defect_stencil = {stencil:.12e}", f"defect = {defect:.12e}"],
        )
        return f"mode s{mode.order}, eps={eps:.4g}, max|w1|={w1.max_abs():.4g}, defect={defect:.3e}"
