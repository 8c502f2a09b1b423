"""Command-line runner for slabguide scenarios.

Usage:
    python -m runs.runner modes --config scenarios/slab_modes.yaml
    python -m runs.runner green --config scenarios/uniform_medium.yaml
    python -m runs.runner field --config scenarios/slab_field.yaml --threads 4
    python -m runs.runner perturb --config scenarios/slab_first_order.yaml --out out/first_order
    python -m runs.runner picard --config scenarios/slab_picard.yaml
    python -m runs.runner estimates --config scenarios/slab_estimates.yaml

Exit codes: 0 success, 2 invalid scenario or argument, 3 numerical failure,
4 Picard divergence.
"""

import argparse
import importlib
import logging
import os
import sys

from dotenv import load_dotenv

from scenarios.loader import load_scenario, tol_issue
from slabguide.errors import DomainError, SlabguideError, exit_code_for

logger = logging.getLogger("slabguide.runner")

# Subcommand name to run class.
RUN_REGISTRY = {
    "modes": "runs.modes.ModesRun",
    "green": "runs.green_probe.GreenProbeRun",
    "field": "runs.field.FieldRun",
    "perturb": "runs.perturb.PerturbRun",
    "picard": "runs.picard.PicardRun",
    "estimates": "runs.estimates.EstimatesRun",
}

# Subcommand name to the scenario's ``run`` value.
SCENARIO_KINDS = {
    "modes": "modes",
    "green": "green-probe",
    "field": "field",
    "perturb": "perturb-first-order",
    "picard": "picard",
    "estimates": "estimates",
}


def _import_class(dotted_path: str):
    """Dynamically import a class from a dotted module path."""
    module_path, class_name = dotted_path.rsplit(".", 1)
    module = importlib.import_module(module_path)
    return getattr(module, class_name)


def build_parser() -> argparse.ArgumentParser:
    load_dotenv()
    parser = argparse.ArgumentParser(
        description="Run a slabguide scenario.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Available runs: " + ", ".join(sorted(RUN_REGISTRY.keys())),
    )
    parser.add_argument("run", choices=sorted(RUN_REGISTRY.keys()), help="Kind of run.")
    parser.add_argument("--config", required=True, help="Scenario YAML file.")
    parser.add_argument("--out", default=None, help="Output directory (default: $SLABGUIDE_OUT_DIR or 'out').")
    parser.add_argument("--tol", type=float, default=None, help="Quadrature tolerance, overrides the scenario.")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for field synthesis.")
    parser.add_argument(
        "--log-level",
        default=os.getenv("SLABGUIDE_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: INFO).",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )

    try:
        issue = tol_issue(args.tol) if args.tol is not None else None
        if issue:
            raise DomainError(f"--tol {issue}")
        if args.threads is not None and args.threads < 1:
            raise DomainError(f"--threads must be >= 1, got {args.threads}")
        scenario = load_scenario(args.config)
        expected = SCENARIO_KINDS[args.run]
        if scenario["run"] != expected:
            logger.warning(f"Scenario declares run '{scenario['run']}' but '{expected}' was requested")
        run_class = _import_class(RUN_REGISTRY[args.run])
        run = run_class(scenario, out_dir=args.out, tol=args.tol, threads=args.threads)
        run.execute()
    except SlabguideError as exc:
        logger.error(f"{exc}")
        return exit_code_for(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
