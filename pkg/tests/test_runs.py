import math

import numpy as np
import pytest
import yaml

from runs.estimates import EstimatesRun
from runs.green_probe import GreenProbeRun
from runs.modes import ModesRun
from runs.perturb import PerturbRun
from runs.picard import PicardRun
from runs.runner import RUN_REGISTRY, SCENARIO_KINDS, main
from scenarios.loader import SCENARIO_DIR, canonical_scenario, load_scenario
from slabguide.errors import ConfigError, DivergenceError, DomainError, NumericalError
from slabguide.field import PicardTrace
from slabguide.green import free_space_kernel

SLAB = {"k": 5.0, "h": 0.2, "n_co": 2.0, "n_cl": 1.0}
COARSE = {"x_min": -0.6, "x_max": 0.6, "nx": 25, "z_min": -0.6, "z_max": 0.6, "nz": 25}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("SLABGUIDE_OUT_DIR", "SLABGUIDE_THREADS", "SLABGUIDE_TOL", "SLABGUIDE_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def _perturb_scenario(eps):
    return canonical_scenario({
        "run": "perturb-first-order",
        "profile": dict(SLAB),
        "map": {
            "kind": "product",
            "eps": eps,
            "S": {"amplitude": 0.1, "center": 0.0, "half_width": 0.4},
            "T": {"amplitude": 1.0, "center": 0.0, "half_width": 0.4},
        },
        "grid": dict(COARSE),
    })


def _record(out_dir):
    with open(out_dir / "run.yaml") as fh:
        return yaml.safe_load(fh)


def test_registry_and_scenario_kinds_agree():
    assert set(RUN_REGISTRY) == set(SCENARIO_KINDS)


def test_modes_run_writes_table_and_record(tmp_path):
    run = ModesRun(load_scenario(SCENARIO_DIR / "slab_modes.yaml"), out_dir=tmp_path)
    summary = run.execute()
    assert summary.startswith("2 guided modes")
    table = np.loadtxt(tmp_path / "modes.txt", dtype=str)
    assert table.shape == (2, 7)
    assert list(table[:, 0]) == ["s", "a"]
    assert float(table[0, 2]) == pytest.approx(23.7, abs=0.1)
    header = (tmp_path / "modes.txt").read_text().splitlines()[:2]
    assert header[0] == "# columns: parity order lambda beta n_eff r residual"
    assert header[1] == f"# scenario: {run.scenario_hash}"
    record = _record(tmp_path)
    assert record["status"] == "completed"
    assert record["files"] == ["modes.txt"]
    assert record["run"] == "modes"


def test_failed_run_leaves_a_record(tmp_path, monkeypatch):
    run = ModesRun(load_scenario(SCENARIO_DIR / "slab_modes.yaml"), out_dir=tmp_path)

    def fail():
        raise NumericalError("root bracket lost", estimate=1e-3)

    monkeypatch.setattr(run, "run", fail)
    with pytest.raises(NumericalError):
        run.execute()
    record = _record(tmp_path)
    assert record["status"] == "failed"
    assert "root bracket lost" in record["summary"]


def test_environment_sets_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("SLABGUIDE_OUT_DIR", str(tmp_path / "env_out"))
    monkeypatch.setenv("SLABGUIDE_TOL", "1e-5")
    run = ModesRun(load_scenario(SCENARIO_DIR / "slab_modes.yaml"))
    assert run.out_dir == tmp_path / "env_out"
    assert run.tol == 1e-5


def test_green_probe_in_uniform_medium_is_free_space(tmp_path):
    scenario = load_scenario(SCENARIO_DIR / "uniform_medium.yaml")
    GreenProbeRun(scenario, out_dir=tmp_path).execute()
    data = np.atleast_2d(np.loadtxt(tmp_path / "green_probe.txt"))
    assert data.shape == (len(scenario["probe"]["pairs"]), 12)
    K = scenario["profile"]["k"] * scenario["profile"]["n_co"]
    for row in data:
        r = math.hypot(row[0] - row[2], row[1] - row[3])
        want = complex(free_space_kernel(K, r))
        got = complex(row[10], row[11])
        assert abs(got - want) < 1e-3 * abs(want)
        assert row[4] == 0.0 and row[5] == 0.0


def test_perturb_run_is_reproducible(tmp_path):
    scenario = _perturb_scenario(0.5)
    first, second = tmp_path / "first", tmp_path / "second"
    PerturbRun(scenario, out_dir=first).execute()
    PerturbRun(scenario, out_dir=second).execute()
    for name in ("w0.txt", "w1.txt", "composite.txt", "map_image.txt", "overlaps.txt", "defect.txt", "run.yaml"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / "w0.txt").read_bytes() != (first / "composite.txt").read_bytes()


def test_perturb_run_at_zero_eps_keeps_w0(tmp_path):
    PerturbRun(_perturb_scenario(0.0), out_dir=tmp_path).execute()
    assert (tmp_path / "composite.txt").read_bytes() == (tmp_path / "w0.txt").read_bytes()
    lines = (tmp_path / "defect.txt").read_text().splitlines()
    assert lines[1:] == [f"defect_stencil = {0.0:.12e}", f"defect = {0.0:.12e}"]
    rows = np.loadtxt(tmp_path / "w1.txt")
    assert rows.shape == (COARSE["nx"] * COARSE["nz"], 5)


def test_picard_failure_writes_the_trace(tmp_path):
    scenario = load_scenario(SCENARIO_DIR / "slab_picard.yaml")
    run = PicardRun(scenario, out_dir=tmp_path)
    trace = PicardTrace(differences=[1.0, 2.0, 4.0, 8.0], ratios=[2.0, 2.0, 2.0])
    run.on_failure(DivergenceError("ratio >= 1", trace))
    rows = np.loadtxt(tmp_path / "picard_trace.txt")
    assert rows.shape == (4, 3)
    assert math.isnan(rows[0, 2])
    np.testing.assert_allclose(rows[1:, 2], 2.0)


def test_main_rejects_invalid_scenarios(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"run": "modes", "profile": {**SLAB, "h": -0.2}}))
    assert main(["modes", "--config", str(path), "--out", str(tmp_path / "out")]) == 2


def test_main_rejects_bad_arguments(tmp_path):
    config = str(SCENARIO_DIR / "slab_modes.yaml")
    assert main(["modes", "--config", config, "--out", str(tmp_path), "--tol", "-1"]) == 2
    assert main(["modes", "--config", config, "--out", str(tmp_path), "--threads", "0"]) == 2


@pytest.mark.parametrize("tol", ["-1", "0", "0.5", "1e-2", "1e-13"])
def test_main_rejects_out_of_range_tol(tmp_path, tol):
    config = str(SCENARIO_DIR / "slab_modes.yaml")
    assert main(["modes", "--config", config, "--out", str(tmp_path), "--tol", tol]) == 2
    assert not (tmp_path / "run.yaml").exists()


@pytest.mark.parametrize("value", ["0.5", "0", "1e-13", "nan", "tight"])
def test_invalid_tol_from_environment_is_rejected(tmp_path, monkeypatch, value):
    monkeypatch.setenv("SLABGUIDE_TOL", value)
    scenario = load_scenario(SCENARIO_DIR / "slab_modes.yaml")
    with pytest.raises(ConfigError):
        ModesRun(scenario, out_dir=tmp_path)
    config = str(SCENARIO_DIR / "slab_modes.yaml")
    assert main(["modes", "--config", config, "--out", str(tmp_path)]) == 2


def test_explicit_arguments_take_precedence_over_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SLABGUIDE_TOL", "1e-5")
    monkeypatch.setenv("SLABGUIDE_THREADS", "3")
    scenario = load_scenario(SCENARIO_DIR / "slab_modes.yaml")
    run = ModesRun(scenario, out_dir=tmp_path, tol=1e-7, threads=1)
    assert run.tol == 1e-7
    assert run.threads == 1
    assert ModesRun(scenario, out_dir=tmp_path).threads == 3


@pytest.mark.parametrize("kwargs", [{"tol": 0.0}, {"tol": 0.5}, {"threads": 0}])
def test_run_rejects_invalid_explicit_settings(tmp_path, kwargs):
    with pytest.raises(DomainError):
        ModesRun(load_scenario(SCENARIO_DIR / "slab_modes.yaml"), out_dir=tmp_path, **kwargs)


def test_main_runs_a_scenario(tmp_path):
    config = str(SCENARIO_DIR / "slab_modes.yaml")
    assert main(["modes", "--config", config, "--out", str(tmp_path)]) == 0
    assert _record(tmp_path)["status"] == "completed"


@pytest.mark.slow
def test_estimates_run(tmp_path):
    EstimatesRun(load_scenario(SCENARIO_DIR / "slab_estimates.yaml"), out_dir=tmp_path).execute()
    lines = [line for line in (tmp_path / "estimates.txt").read_text().splitlines() if not line.startswith("#")]
    assert len(lines) == 12
    values = dict(line.split("  #")[0].split(" = ") for line in lines)
    assert float(values["phi_star"]) == 1.0
    C, K = float(values["C"]), float(values["K"])
    assert K > 0.0
    assert float(values["eps0"]) == pytest.approx(1.0 / (C * K))


@pytest.mark.slow
def test_lateral_shift_excites_the_antisymmetric_mode_downstream(tmp_path):
    PerturbRun(load_scenario(SCENARIO_DIR / "slab_lateral.yaml"), out_dir=tmp_path).execute()
    rows = np.loadtxt(tmp_path / "overlaps.txt", dtype=str)
    odd = {float(row[2]): float(row[5]) for row in rows if row[0] == "a"}
    upstream, downstream = odd[-1.5], odd[1.5]
    assert downstream > 0.02
    assert upstream < 0.25 * downstream
    even = {float(row[2]): float(row[5]) for row in rows if row[0] == "s"}
    assert even[-1.5] < 1e-6 and even[1.5] < 1e-6
