"""Base class for slabguide scenario runs.

Every run kind inherits from ScenarioRun, which provides:
- Runtime configuration from the environment (.env supported)
- Lazily built library objects (profile, guided modes, Green evaluator)
- Writers for field files, tables and the run record
- The execution harness: timing, logging and failure records
"""

import logging
import os
import time
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from dotenv import load_dotenv

from scenarios.loader import (
    build_grid,
    build_map_spec,
    build_profile,
    build_source,
    build_weight,
    scenario_hash,
    tol_issue,
)
from slabguide.errors import ConfigError, DomainError
from slabguide.estimates import estimate_report
from slabguide.green import GreenEvaluator, build_evaluator
from slabguide.grid import ComplexField
from slabguide.modal import GuidedMode, WaveguideProfile, find_guided_modes
from slabguide.perturb import PerturbationMap, coefficients_first_order

logger = logging.getLogger("slabguide.runs")


class ScenarioRun:
    """Base class holding one scenario and the files written for it."""

    run_kind = ""

    def __init__(
        self,
        scenario: dict,
        out_dir: Optional[str] = None,
        tol: Optional[float] = None,
        threads: Optional[int] = None,
    ):
        self.scenario = scenario
        self.config = self._load_config()
        self.out_dir = Path(out_dir or self.config["out_dir"])
        if tol is None:
            tol = self.config["tol"] if self.config["tol"] is not None else scenario["quadrature"]["tol"]
        issue = tol_issue(tol)
        if issue:
            raise DomainError(f"quadrature tolerance {issue}")
        self.tol = tol
        self.threads = threads if threads is not None else self.config["threads"]
        if self.threads < 1:
            raise DomainError(f"threads must be >= 1, got {self.threads}")
        self.scenario_hash = scenario_hash(scenario)
        self.files: list[str] = []
        self._profile: Optional[WaveguideProfile] = None
        self._modes: Optional[list[GuidedMode]] = None
        self._evaluator: Optional[GreenEvaluator] = None

    # ------------------------------------------------------------------
    # Configuration
    # ------------------------------------------------------------------

    def _load_config(self) -> dict:
        """Load runtime settings from environment variables with sensible defaults."""
        load_dotenv()
        tol = os.getenv("SLABGUIDE_TOL", "")
        threads = os.getenv("SLABGUIDE_THREADS", "1")
        try:
            parsed_tol = float(tol) if tol else None
            parsed_threads = int(threads)
        except ValueError as exc:
            raise ConfigError([{"field": "environment", "issue": str(exc)}]) from exc
        issue = tol_issue(parsed_tol) if parsed_tol is not None else None
        if issue:
            raise ConfigError([{"field": "SLABGUIDE_TOL", "issue": issue}])
        return {
            "out_dir": os.getenv("SLABGUIDE_OUT_DIR", "out"),
            "threads": parsed_threads,
            "tol": parsed_tol,
            "log_level": os.getenv("SLABGUIDE_LOG_LEVEL", "INFO"),
        }

    # ------------------------------------------------------------------
    # Library objects
    # ------------------------------------------------------------------

    @property
    def profile(self) -> WaveguideProfile:
        if self._profile is None:
            self._profile = build_profile(self.scenario)
        return self._profile

    @property
    def modes(self) -> list[GuidedMode]:
        if self._modes is None:
            self._modes = find_guided_modes(self.profile)
        return self._modes

    @property
    def evaluator(self) -> GreenEvaluator:
        if self._evaluator is None:
            self._evaluator = build_evaluator(
                self.profile,
                tol=self.tol,
                min_separation=self.scenario["quadrature"].get("min_separation"),
            )
        return self._evaluator

    @property
    def grid(self):
        return build_grid(self.scenario)

    @property
    def weight(self):
        return build_weight(self.scenario)

    def source_on(self, grid) -> ComplexField:
        return build_source(self.scenario, grid)

    def perturbation_map(self) -> PerturbationMap:
        return coefficients_first_order(build_map_spec(self.scenario), self.profile)

    def resolve_eps(self, pmap: PerturbationMap) -> float:
        """map.eps, or auto_eps0_fraction times the certified threshold."""
        table = self.scenario["map"]
        if "eps" in table:
            return table["eps"]
        report = estimate_report(self.profile, self.weight, pmap, self.modes)
        self.write_lines("estimates.txt", report.as_lines())
        eps = table["auto_eps0_fraction"] * report.eps0
        logger.info(f"[{self.run_kind}] eps = {table['auto_eps0_fraction']:.4g} x eps0 = {eps:.6g}")
        return eps

    # ------------------------------------------------------------------
    # Writers
    # ------------------------------------------------------------------

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return self.out_dir / name

    def _header(self, columns: list[str]) -> str:
        return f"# columns: {' '.join(columns)}\n# scenario: {self.scenario_hash}\n"

    def write_field(self, name: str, field: ComplexField) -> None:
        """Columns x z re im abs, one row per grid node, x outermost."""
        xx, zz = field.grid.mesh()
        v = field.values
        data = np.column_stack([xx.ravel(), zz.ravel(), v.real.ravel(), v.imag.ravel(), np.abs(v).ravel()])
        with open(self._path(name), "w") as fh:
            fh.write(self._header(["x", "z", "re", "im", "abs"]))
            np.savetxt(fh, data, fmt="%.12e")

    def write_table(self, name: str, columns: list[str], rows: list) -> None:
        with open(self._path(name), "w") as fh:
            fh.write(self._header(columns))
            for row in rows:
                fh.write(" ".join(_format_cell(v) for v in row) + "\n")

    def write_lines(self, name: str, lines: list[str]) -> None:
        with open(self._path(name), "w") as fh:
            fh.write(f"# scenario: {self.scenario_hash}\n")
            fh.write("\n".join(lines) + "\n")

    def write_run_record(self, status: str, summary: str = "") -> None:
        record = {
            "run": self.run_kind,
            "status": status,
            "scenario": self.scenario_hash,
            "tol": float(self.tol),
            "files": list(self.files),
            "summary": summary,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / "run.yaml", "w") as fh:
            yaml.safe_dump(record, fh, sort_keys=True)

    # ------------------------------------------------------------------
    # Execution harness
    # ------------------------------------------------------------------

    def run(self) -> str:
        """Override in subclass. Returns a one-line summary."""
        raise NotImplementedError("Subclasses must implement run()")

    def on_failure(self, exc: Exception) -> None:
        """Hook for subclasses to write diagnostics before the failure is re-raised."""

    def execute(self) -> str:
        """Run with timing, logging and a run record written on success or failure."""
        logger.info(f"[{self.run_kind}] Starting run (scenario {self.scenario_hash}, tol={self.tol:.1e})")
        started = time.perf_counter()
        try:
            summary = self.run() or ""
            self.write_run_record("completed", summary)
            logger.info(f"[{self.run_kind}] Completed in {time.perf_counter() - started:.1f}s: {summary}")
            return summary
        except Exception as exc:
            logger.error(f"[{self.run_kind}] Failed: {exc}")
            try:
                self.on_failure(exc)
                self.write_run_record("failed", summary=str(exc))
            except OSError:
                pass
            raise


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return f"{value:.12e}"
    return str(value)
