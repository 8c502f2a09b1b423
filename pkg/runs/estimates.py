"""EstimateReport for a profile, weight and optional perturbation map."""

import logging

from runs.base import ScenarioRun
from slabguide.estimates import estimate_report

logger = logging.getLogger("slabguide.runs.estimates")


class EstimatesRun(ScenarioRun):
    run_kind = "estimates"

    def run(self) -> str:
        pmap = self.perturbation_map() if "map" in self.scenario else None
        report = estimate_report(self.profile, self.weight, pmap, self.modes)
        self.write_lines("estimates.txt", report.as_lines())
        return f"C={report.C:.4g}, K={report.K:.4g}, eps0={report.eps0:.4g}"
