"""Scenario loader for slabguide.

Loads a scenario YAML file, validates every numeric parameter against the
preconditions of the library, fills in defaults and builds the library
objects (profile, weight, map, grids, source) from it.

Usage:
    from scenarios.loader import load_scenario, build_profile

    scenario = load_scenario("scenarios/slab_first_order.yaml")
    slab = build_profile(scenario)

Run directly to see the status of every shipped scenario:
    python -m scenarios.loader
"""
import copy
import hashlib
import math
from numbers import Real
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from slabguide.errors import ConfigError
from slabguide.estimates import WeightSpec
from slabguide.grid import ComplexField, Grid2D
from slabguide.modal import WaveguideProfile, parabolic_core
from slabguide.perturb import MAP_KINDS, MapSpec, PerturbationMap

SCENARIO_DIR = Path(__file__).parent

RUN_KINDS = ("modes", "green-probe", "field", "perturb-first-order", "picard", "estimates")

DEFAULTS = {
    "weight": {"kind": "power", "a": 2.0, "scale": 1.0},
    "grid": {"x_min": -1.0, "x_max": 1.0, "nx": 201, "z_min": -1.0, "z_max": 1.0, "nz": 201},
    "source": {"kind": "gaussian", "x0": 0.0, "z0": 0.0, "width": 0.05, "amplitude": 1.0},
    "quadrature": {"tol": 1e-6},
    "picard": {"max_iter": 30, "tol": 1e-8, "linearized": False},
    "probe": {"pairs": []},
}

BUMP_DEFAULTS = {"plateau": 0.0}

# Open interval of accepted quadrature tolerances.
TOL_RANGE = (1e-12, 1e-2)


def _is_number(value) -> bool:
    return isinstance(value, Real) and not isinstance(value, bool) and math.isfinite(value)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def tol_issue(tol) -> Optional[str]:
    """Why ``tol`` is not an accepted quadrature tolerance, or None."""
    low, high = TOL_RANGE
    if not _is_number(tol) or not low < tol < high:
        return f"must lie in ({low:g}, {high:g}), got {tol!r}"
    return None


def read_scenario(config_path: str = None) -> dict:
    """Read the raw YAML mapping without validation.

    Args:
        config_path: Path to a scenario file. Defaults to the worked slab
                     example shipped next to this module.

    Returns:
        The parsed mapping.
    """
    if config_path is None:
        config_path = SCENARIO_DIR / "slab_first_order.yaml"

    with open(config_path) as f:
        raw = yaml.safe_load(f)

    if not isinstance(raw, dict):
        raise ConfigError([{"field": "<root>", "issue": "scenario must be a mapping"}])
    return raw


# ----------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------


def _check_positive(issues: list, table: dict, prefix: str, key: str, required: bool = True):
    if key not in table:
        if required:
            issues.append({"field": f"{prefix}.{key}", "issue": "missing"})
        return
    if not _is_number(table[key]) or table[key] <= 0:
        issues.append({"field": f"{prefix}.{key}", "issue": f"must be a number > 0, got {table[key]!r}"})


def _validate_profile(profile, issues: list):
    if not isinstance(profile, dict):
        issues.append({"field": "profile", "issue": "missing or not a table"})
        return
    for key in ("k", "h", "n_cl"):
        _check_positive(issues, profile, "profile", key)
    n_co = profile.get("n_co")
    n_cl = profile.get("n_cl")
    if n_co is None:
        issues.append({"field": "profile.n_co", "issue": "missing"})
    elif isinstance(n_co, dict):
        if n_co.get("kind") != "parabolic":
            issues.append({"field": "profile.n_co.kind", "issue": "only 'parabolic' graded cores are supported"})
        for key in ("n_max", "n_edge"):
            _check_positive(issues, n_co, "profile.n_co", key)
        n_max, n_edge = n_co.get("n_max"), n_co.get("n_edge")
        if _is_number(n_max) and _is_number(n_edge) and n_edge > n_max:
            issues.append({"field": "profile.n_co.n_edge", "issue": "must not exceed n_max"})
        if _is_number(n_max) and _is_number(n_cl) and n_max < n_cl:
            issues.append({"field": "profile.n_co.n_max", "issue": "must be >= n_cl"})
    elif not _is_number(n_co) or n_co <= 0:
        issues.append({"field": "profile.n_co", "issue": f"must be a number > 0 or a graded-core table, got {n_co!r}"})
    elif _is_number(n_cl) and n_co < n_cl:
        issues.append({"field": "profile.n_co", "issue": "must be >= n_cl"})


def _validate_weight(weight: dict, issues: list):
    kind = weight.get("kind", "power")
    if kind == "power":
        a = weight.get("a")
        if not _is_number(a) or a <= 1.0:
            issues.append({"field": "weight.a", "issue": f"must be a number > 1, got {a!r}"})
    elif kind == "separable":
        for key in ("b_x", "b_z"):
            value = weight.get(key)
            if not _is_number(value) or value <= 0.5:
                issues.append({"field": f"weight.{key}", "issue": f"must be a number > 1/2, got {value!r}"})
    else:
        issues.append({"field": "weight.kind", "issue": f"must be 'power' or 'separable', got {kind!r}"})
    _check_positive(issues, weight, "weight", "scale", required=False)


def _validate_bump(bump, prefix: str, issues: list):
    if not isinstance(bump, dict):
        issues.append({"field": prefix, "issue": "missing or not a table"})
        return
    for key in ("amplitude", "center"):
        if not _is_number(bump.get(key)):
            issues.append({"field": f"{prefix}.{key}", "issue": f"must be a number, got {bump.get(key)!r}"})
    _check_positive(issues, bump, prefix, "half_width")
    plateau = bump.get("plateau", 0.0)
    if not _is_number(plateau) or not 0.0 <= plateau < 1.0:
        issues.append({"field": f"{prefix}.plateau", "issue": f"must lie in [0, 1), got {plateau!r}"})


def _validate_map(pmap, issues: list):
    if not isinstance(pmap, dict):
        issues.append({"field": "map", "issue": "not a table"})
        return
    kind = pmap.get("kind", "product")
    if kind not in MAP_KINDS:
        issues.append({"field": "map.kind", "issue": f"must be one of {', '.join(MAP_KINDS)}, got {kind!r}"})
        return
    if kind in ("product", "lateral"):
        _validate_bump(pmap.get("S"), "map.S", issues)
        _validate_bump(pmap.get("T"), "map.T", issues)
    else:
        if "phi" not in pmap and "psi" not in pmap:
            issues.append({"field": "map", "issue": "general maps need phi and/or psi"})
        for comp in ("phi", "psi"):
            if comp in pmap:
                table = pmap[comp] if isinstance(pmap[comp], dict) else {}
                _validate_bump(table.get("S"), f"map.{comp}.S", issues)
                _validate_bump(table.get("T"), f"map.{comp}.T", issues)
        if pmap.get("printed_rhs"):
            issues.append({"field": "map.printed_rhs", "issue": "only defined for product and lateral maps"})
    has_eps = "eps" in pmap
    has_auto = "auto_eps0_fraction" in pmap
    if has_eps == has_auto:
        issues.append({"field": "map.eps", "issue": "give exactly one of eps and auto_eps0_fraction"})
    if has_eps and (not _is_number(pmap["eps"]) or pmap["eps"] < 0):
        issues.append({"field": "map.eps", "issue": f"must be a number >= 0, got {pmap['eps']!r}"})
    if has_auto:
        frac = pmap["auto_eps0_fraction"]
        if not _is_number(frac) or not 0.0 < frac <= 1.0:
            issues.append({"field": "map.auto_eps0_fraction", "issue": f"must lie in (0, 1], got {frac!r}"})


def _validate_grid(grid: dict, issues: list):
    for axis in ("x", "z"):
        lo, hi, n = grid.get(f"{axis}_min"), grid.get(f"{axis}_max"), grid.get(f"n{axis}")
        if not (_is_number(lo) and _is_number(hi)) or hi <= lo:
            issues.append({"field": f"grid.{axis}_max", "issue": f"must be a number > {axis}_min"})
        if not _is_int(n) or n < 4:
            issues.append({"field": f"grid.n{axis}", "issue": f"must be an integer >= 4, got {n!r}"})


def validate_scenario(raw: dict) -> list[dict]:
    """Check a raw scenario against every library precondition.

    Args:
        raw: Parsed scenario mapping (before defaults).

    Returns:
        List of issue dicts, each with 'field' and 'issue' keys. Empty
        list means the scenario is valid.
    """
    issues = []
    run = raw.get("run")
    if run not in RUN_KINDS:
        issues.append({"field": "run", "issue": f"must be one of {', '.join(RUN_KINDS)}, got {run!r}"})
    _validate_profile(raw.get("profile"), issues)

    merged = {}
    for key, value in DEFAULTS.items():
        table = raw.get(key) or {}
        if not isinstance(table, dict):
            issues.append({"field": key, "issue": "must be a table"})
            table = {}
        merged[key] = {**value, **table}
    _validate_weight(merged["weight"], issues)
    _validate_grid(merged["grid"], issues)

    source = merged["source"]
    if source.get("kind") != "gaussian":
        issues.append({"field": "source.kind", "issue": "only 'gaussian' sources are supported"})
    for key in ("x0", "z0", "amplitude"):
        if not _is_number(source.get(key)):
            issues.append({"field": f"source.{key}", "issue": "must be a number"})
    _check_positive(issues, source, "source", "width")

    quad = merged["quadrature"]
    issue = tol_issue(quad.get("tol"))
    if issue:
        issues.append({"field": "quadrature.tol", "issue": issue})
    _check_positive(issues, quad, "quadrature", "min_separation", required=False)

    picard = merged["picard"]
    if not _is_int(picard.get("max_iter")) or picard["max_iter"] < 1:
        issues.append({"field": "picard.max_iter", "issue": "must be an integer >= 1"})
    _check_positive(issues, picard, "picard", "tol")

    pairs = merged["probe"].get("pairs")
    if not isinstance(pairs, list):
        issues.append({"field": "probe.pairs", "issue": "must be a list of [x, z, xi, zeta]"})
    else:
        for i, pair in enumerate(pairs):
            if not (isinstance(pair, list) and len(pair) == 4 and all(_is_number(v) for v in pair)):
                issues.append({"field": f"probe.pairs[{i}]", "issue": "must be four numbers [x, z, xi, zeta]"})
            elif pair[:2] == pair[2:]:
                issues.append({"field": f"probe.pairs[{i}]", "issue": "points coincide; G is singular there"})
    if run == "green-probe" and isinstance(pairs, list) and not pairs:
        issues.append({"field": "probe.pairs", "issue": "green-probe runs need at least one pair"})

    if "map" in raw:
        _validate_map(raw["map"], issues)
    elif run in ("perturb-first-order", "picard"):
        issues.append({"field": "map", "issue": f"{run} runs need a map table"})

    if not issues and "map" in raw and "eps" in raw["map"]:
        scenario = canonical_scenario(raw)
        pmap = PerturbationMap(build_map_spec(scenario), build_profile(scenario))
        margin = pmap.invertibility_margin(scenario["map"]["eps"])
        if margin >= 1.0:
            issues.append({"field": "map.eps", "issue": f"map not invertible: eps * |d displacement| = {margin:.3f} >= 1"})

    return issues


# ----------------------------------------------------------------------
# Canonical form
# ----------------------------------------------------------------------


def _floats(table: dict, skip=()) -> dict:
    return {k: (float(v) if _is_number(v) and k not in skip else v) for k, v in table.items()}


def _canonical_bump(bump: dict) -> dict:
    return _floats({**BUMP_DEFAULTS, **bump})


def canonical_scenario(raw: dict) -> dict:
    """Scenario with defaults filled in and numbers normalised."""
    scenario = {"run": raw["run"]}
    profile = copy.deepcopy(raw["profile"])
    if isinstance(profile["n_co"], dict):
        profile["n_co"] = _floats(profile["n_co"])
    else:
        profile["n_co"] = float(profile["n_co"])
    scenario["profile"] = _floats(profile)
    for key, defaults in DEFAULTS.items():
        scenario[key] = {**defaults, **copy.deepcopy(raw.get(key) or {})}
    scenario["weight"] = _floats(scenario["weight"])
    scenario["grid"] = _floats(scenario["grid"], skip=("nx", "nz"))
    scenario["source"] = _floats(scenario["source"])
    scenario["quadrature"] = _floats(scenario["quadrature"])
    scenario["picard"] = _floats(scenario["picard"], skip=("max_iter",))
    scenario["probe"]["pairs"] = [[float(v) for v in pair] for pair in scenario["probe"]["pairs"]]
    if "map" in raw:
        pmap = {"kind": "product", "printed_rhs": False, **copy.deepcopy(raw["map"])}
        for comp in ("S", "T"):
            if comp in pmap:
                pmap[comp] = _canonical_bump(pmap[comp])
        for comp in ("phi", "psi"):
            if comp in pmap:
                pmap[comp] = {key: _canonical_bump(b) for key, b in pmap[comp].items()}
        scenario["map"] = _floats(pmap)
    return scenario


def load_scenario(config_path: str = None) -> dict:
    """Read, validate and canonicalise a scenario.

    Raises:
        ConfigError: with one 'field: issue' line per problem found.
    """
    raw = read_scenario(config_path)
    issues = validate_scenario(raw)
    if issues:
        raise ConfigError(issues)
    return canonical_scenario(raw)


def dump_scenario(scenario: dict) -> str:
    return yaml.safe_dump(scenario, sort_keys=True, default_flow_style=False)


def scenario_hash(scenario: dict) -> str:
    """First 16 hex digits of the SHA-256 of the canonical dump."""
    return hashlib.sha256(dump_scenario(scenario).encode()).hexdigest()[:16]


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------


def build_profile(scenario: dict) -> WaveguideProfile:
    p = scenario["profile"]
    n_co = p["n_co"]
    if isinstance(n_co, dict):
        n_co = parabolic_core(n_co["n_max"], n_co["n_edge"], p["h"])
    return WaveguideProfile(k=p["k"], h=p["h"], n_co=n_co, n_cl=p["n_cl"], label=str(p.get("label", "")))


def build_weight(scenario: dict) -> WeightSpec:
    w = scenario["weight"]
    if w["kind"] == "separable":
        return WeightSpec(kind="separable", b_x=w["b_x"], b_z=w["b_z"], scale=w["scale"])
    return WeightSpec(kind="power", a=w["a"], scale=w["scale"])


def build_map_spec(scenario: dict) -> MapSpec:
    return MapSpec.from_config(scenario["map"])


def build_grid(scenario: dict) -> Grid2D:
    g = scenario["grid"]
    return Grid2D(g["x_min"], g["x_max"], int(g["nx"]), g["z_min"], g["z_max"], int(g["nz"]))


def build_source(scenario: dict, grid: Grid2D) -> ComplexField:
    """Gaussian source sampled on ``grid``."""
    s = scenario["source"]

    def gaussian(x, z):
        r2 = (x - s["x0"]) ** 2 + (z - s["z0"]) ** 2
        return s["amplitude"] * np.exp(-r2 / s["width"] ** 2)

    return ComplexField.from_function(grid, gaussian)


def shipped_scenarios() -> list[Path]:
    return sorted(SCENARIO_DIR.glob("*.yaml"))


def print_scenario_summary(config_path: str = None):
    """Print a formatted status of one scenario, or of every shipped scenario."""
    paths = [Path(config_path)] if config_path else shipped_scenarios()

    print("\n  slabguide - Scenario Status\n")
    print(f"  {'Scenario':<24} {'Run':<22} {'Status':<10} {'Hash'}")
    print(f"  {'-'*24} {'-'*22} {'-'*10} {'-'*16}")

    problems = {}
    for path in paths:
        raw = read_scenario(path)
        issues = validate_scenario(raw)
        if issues:
            problems[path.name] = issues
            print(f"  {path.name:<24} {str(raw.get('run')):<22} {'INVALID':<10}")
        else:
            scenario = canonical_scenario(raw)
            print(f"  {path.name:<24} {scenario['run']:<22} {'OK':<10} {scenario_hash(scenario)}")

    if problems:
        print(f"\n  Issues:")
        for name, issues in problems.items():
            for issue in issues:
                print(f"    - {name}: {issue['field']}: {issue['issue']}")

    print()


if __name__ == "__main__":
    print_scenario_summary()
