import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from molelab import nsga2, workflow
from molelab.cli import main
from molelab.io import read_csv

SIMPOP_PARAMS = {
    "p_creation": {"lower": 1e-8, "upper": 1e-4, "scale": "logarithmic"},
    "p_diffusion": {"lower": 1e-8, "upper": 1e-4, "scale": "logarithmic"},
    "distance_decay": [0.0, 10.0],
    "innovation_impact": {"lower": 1e-3, "upper": 1e-1, "scale": "logarithmic"},
    "r_max": [5000.0, 50000.0],
}


def bi_config(out, **over):
    cfg = {"model": "analytic", "method": "calibrate", "seed": 3, "output_dir": str(out),
           "parameters": {"x": [0, 1], "a": [0, 1]}, "model_settings": {"problem": "biobjective"},
           "calibrate": {"population_size": 20, "budget": 200}}
    cfg.update(over)
    return cfg


def write_yaml(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return path


# -- parsing -----------------------------------------------------------------

def test_minimal_calibrate_defaults_filled(tmp_path):
    cfg = workflow.parse_config(bi_config(tmp_path))
    echo = cfg.echo()
    assert echo["calibrate"]["crossover_rate"] == 0.9
    assert echo["calibrate"]["eta_mutation"] == 20.0
    assert echo["replications"] == 1
    assert echo["parallelism"] == {"workers": None, "environment": "local"}
    assert workflow.parse_config(echo).echo() == echo


def test_simpoplocal_defaults():
    cfg = workflow.parse_config({"model": "simpoplocal", "method": "sample_lhs", "seed": 0,
                                 "parameters": SIMPOP_PARAMS, "sample_lhs": {"n": 3}})
    assert cfg.replications == 100
    assert cfg.model_settings["max_steps"] == 4000
    assert cfg.model_settings["n_places"] == 100


def test_unknown_method_lists_valid_values(tmp_path):
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(bi_config(tmp_path, method="calibrte"))
    assert err.value.key == "method"
    for m in workflow.METHODS:
        assert m in str(err.value)


def test_inverted_bounds_name_the_parameter(tmp_path):
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(bi_config(tmp_path, parameters={"x": [1, 0], "a": [0, 1]}))
    assert err.value.key == "parameters.x"


@pytest.mark.parametrize("change,key", [
    ({"replications": 0}, "replications"),
    ({"replications": -3}, "replications"),
    ({"seed": None}, "seed"),
    ({"calibrate": {"population_size": 7, "budget": 100}}, "calibrate.population_size"),
    ({"calibrate": {"population_size": 20}}, "calibrate.budget"),
    ({"calibrate": {"population_size": 20, "budget": 100, "bogus": 1}}, "calibrate.bogus"),
    ({"profile": {"parameter": "x", "budget": 10}}, "profile"),
    ({"model": "nope"}, "model"),
    ({"parameters": {"x": {"lower": 0}}}, "parameters.x.upper"),
    ({"extra_key": 1}, "extra_key"),
])
def test_structured_errors(tmp_path, change, key):
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(bi_config(tmp_path, **change))
    assert err.value.key == key


def test_seed_is_mandatory(tmp_path):
    raw = bi_config(tmp_path)
    del raw["seed"]
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(raw)
    assert err.value.key == "seed"


def test_required_method_setting(tmp_path):
    raw = bi_config(tmp_path, method="profile", calibrate=None)
    del raw["calibrate"]
    raw["profile"] = {"budget": 100}
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(raw)
    assert err.value.key == "profile.parameter"


def test_regimes_needs_enough_steps():
    raw = {"model": "city_interaction", "method": "regimes", "seed": 0, "parameters": {"r0": [0, 0.1]},
           "model_settings": {"steps": 12}, "regimes": {"budget": 10, "batch_size": 5}}
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(raw)
    assert err.value.key == "model_settings.steps"


def test_model_parameter_names_checked():
    raw = {"model": "simpoplocal", "method": "sample_lhs", "seed": 0,
           "parameters": {"p_creaton": [0, 1]}, "sample_lhs": {"n": 2}}
    with pytest.raises(workflow.WorkflowError) as err:
        workflow.parse_config(raw)
    assert err.value.key == "parameters.p_creaton"


def test_relative_output_dir_resolves_next_to_config(tmp_path):
    cfg = bi_config("results")
    path = write_yaml(tmp_path / "w.yaml", cfg)
    assert workflow.parse_workflow(path).output_dir == tmp_path / "results"
    with pytest.raises(workflow.WorkflowError):
        workflow.parse_workflow(tmp_path / "missing.yaml")


# -- execution ---------------------------------------------------------------

def manifest_ok(out: Path, manifest):
    listed = set(manifest["files"])
    on_disk = {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()}
    assert listed == on_disk
    assert json.loads((out / "manifest.json").read_text())["files"] == manifest["files"]


def test_sample_lhs_simpoplocal_shape(tmp_path):
    raw = {"model": "simpoplocal", "method": "sample_lhs", "seed": 7, "replications": 2,
           "output_dir": str(tmp_path), "parameters": SIMPOP_PARAMS,
           "model_settings": {"n_places": 20, "max_innovations": 1000}, "sample_lhs": {"n": 10}}
    manifest = workflow.execute(workflow.parse_config(raw))
    header, rows = read_csv(tmp_path / "samples.csv")
    assert header == [*SIMPOP_PARAMS, "ks_lognormal", "largest_city_error", "duration_error"]
    assert len(rows) == 10 and all(len(r) == 8 for r in rows)
    manifest_ok(tmp_path, manifest)
    assert manifest["seeds"]["base"] == 7
    assert set(manifest["versions"]) >= {"molelab", "numpy", "python"}
    assert manifest["run"]["wall_time_s"] >= 0
    assert manifest["config"]["model_settings"]["n_places"] == 20


def test_sample_grid(tmp_path):
    raw = bi_config(tmp_path, method="sample_grid", sample_grid={"levels": [3, 2]})
    del raw["calibrate"]
    workflow.execute(workflow.parse_config(raw))
    header, rows = read_csv(tmp_path / "samples.csv")
    assert header == ["x", "a", "f1", "f2"]
    assert [r[:2] for r in rows] == [["0", "0"], ["0", "1"], ["0.5", "0"], ["0.5", "1"], ["1", "0"], ["1", "1"]]


def test_calibrate_front_nondominated(tmp_path):
    manifest = workflow.execute(workflow.parse_config(bi_config(tmp_path)))
    header, rows = read_csv(tmp_path / "front.csv")
    assert header == ["x", "a", "f1", "f2", "replications"]
    objs = np.array([[float(r[2]), float(r[3])] for r in rows])
    assert not any(nsga2.dominates(a, b) for a in objs for b in objs)
    manifest_ok(tmp_path, manifest)


def test_island_calibrate_lists_checkpoints(tmp_path):
    raw = bi_config(tmp_path, calibrate={"population_size": 12, "budget": 240,
                                         "islands": {"n_islands": 2, "epochs": 3}})
    manifest = workflow.execute(workflow.parse_config(raw))
    assert sum(f.startswith("checkpoints/") for f in manifest["files"]) == 3
    manifest_ok(tmp_path, manifest)


def test_rerun_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        workflow.execute(workflow.parse_config(bi_config(out)))
        outs.append((out / "front.csv").read_bytes())
    assert outs[0] == outs[1]


def test_windowed_city_calibration(tmp_path):
    raw = {"model": "city_interaction", "method": "calibrate", "seed": 2, "output_dir": str(tmp_path),
           "parameters": {"r0": [-0.02, 0.05], "w_gravity": [0.0, 0.1]},
           "model_settings": {"n_cities": 8, "steps": 12},
           "calibrate": {"population_size": 8, "budget": 40, "windows": {"size": 4}}}
    workflow.execute(workflow.parse_config(raw))
    header, rows = read_csv(tmp_path / "front.csv")
    assert header[0] == "window_start"
    assert sorted({int(r[0]) for r in rows}) == [0, 4, 8]


def test_city_calibration_from_csv(tmp_path):
    (tmp_path / "c.csv").write_text("city_id,x,y,pop_t0,pop_t1,pop_t2\nA,0,0,100,101,102.01\n"
                                    "B,1,0,50,50.5,51.005\nC,1,1,20,20.2,20.402\n")
    (tmp_path / "n.csv").write_text("i,j,length,capacity\nA,B,1.0,1.0\nB,C,1.0,1.0\n")
    raw = {"model": "city_interaction", "method": "calibrate", "seed": 0, "output_dir": str(tmp_path / "o"),
           "parameters": {"r0": [0.0, 0.02]},
           "model_settings": {"cities_csv": str(tmp_path / "c.csv"), "network_csv": str(tmp_path / "n.csv")},
           "calibrate": {"population_size": 8, "budget": 160}}
    workflow.execute(workflow.parse_config(raw))
    _, rows = read_csv(tmp_path / "o" / "front.csv")
    # the observed series grows at exactly 1 % per step
    assert min(abs(float(r[0]) - 0.01) for r in rows) < 1e-3


def test_profile_and_pse_outputs(tmp_path):
    raw = {"model": "analytic", "method": "profile", "seed": 1, "output_dir": str(tmp_path / "p"),
           "parameters": {"x": [0, 1], "y": [0, 1]}, "model_settings": {"problem": "quadratic"},
           "profile": {"parameter": "x", "n_bins": 5, "budget": 200}}
    workflow.execute(workflow.parse_config(raw))
    header, rows = read_csv(tmp_path / "p" / "profile.csv")
    assert header == ["bin_lower", "bin_upper", "best_error", "x", "y"] and len(rows) == 5
    raw = {"model": "analytic", "method": "pse", "seed": 1, "output_dir": str(tmp_path / "s"),
           "parameters": {"x": [0, 1], "y": [0, 1]}, "model_settings": {"problem": "banana"},
           "pse": {"budget": 200, "grid": {"lower": [0, 0], "upper": [1, 1], "n_bins": [5, 5]}}}
    workflow.execute(workflow.parse_config(raw))
    header, _ = read_csv(tmp_path / "s" / "pse_grid.csv")
    assert header == ["cell_0", "cell_1", "hit_count", "overflow", "x", "y", "pattern_0", "pattern_1"]


def test_simpoplocal_pse_default_grid(tmp_path):
    raw = {"model": "simpoplocal", "method": "pse", "seed": 1, "replications": 1, "output_dir": str(tmp_path),
           "parameters": SIMPOP_PARAMS, "model_settings": {"n_places": 10, "max_steps": 300, "max_innovations": 300},
           "pse": {"budget": 20, "batch_size": 10}}
    cfg = workflow.parse_config(raw)
    assert cfg.settings["grid"]["upper"] == [0.0, 5.0, 300.0]
    workflow.execute(cfg)
    header, _ = read_csv(tmp_path / "pse_grid.csv")
    assert header[-3:] == ["rank_size_slope", "log10_largest", "n_innovations"]


def regimes_config(out, explorer, budget=150):
    return {"model": "city_interaction", "method": "regimes", "seed": 4, "output_dir": str(out),
            "parameters": {"r0": [-0.02, 0.05], "w_gravity": [-0.5, 0.5],
                           "d_gravity": {"lower": 0.05, "upper": 2.0, "scale": "logarithmic"},
                           "w_network": [-0.5, 0.5], "capacity_rate": [0.0, 2.0]},
            "model_settings": {"n_cities": 10, "steps": 20},
            "regimes": {"explorer": explorer, "budget": budget, "batch_size": 25, "tau_max": 3}}


def test_regimes_pse_finds_more_than_lhs(tmp_path):
    counts = {}
    for explorer in ("pse", "lhs"):
        out = tmp_path / explorer
        workflow.execute(workflow.parse_config(regimes_config(out, explorer, budget=500)))
        header, rows = read_csv(out / "regimes.csv")
        assert header == ["code", "count", "is_coevolution"]
        assert len(rows) <= 729
        counts[explorer] = len(rows)
    assert counts["pse"] >= counts["lhs"]


def test_failure_leaves_partial_manifest(tmp_path):
    raw = {"model": "city_interaction", "method": "calibrate", "seed": 0, "output_dir": str(tmp_path),
           "parameters": {"r0": [0.0, 0.02]},
           "model_settings": {"cities_csv": str(tmp_path / "nope.csv"), "network_csv": str(tmp_path / "n.csv")},
           "calibrate": {"population_size": 8, "budget": 16}}
    with pytest.raises(FileNotFoundError):
        workflow.execute(workflow.parse_config(raw))
    assert not (tmp_path / "manifest.json").exists()
    assert "FileNotFoundError" in json.loads((tmp_path / "manifest.json.partial").read_text())["error"]


# -- CLI -----------------------------------------------------------------------

def test_cli_run_validate_describe(tmp_path):
    path = write_yaml(tmp_path / "w.yaml", bi_config("out"))
    runner = CliRunner()
    res = runner.invoke(main, ["run", str(path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "out" / "front.csv").exists()
    assert str(tmp_path / "out" / "manifest.json") in res.output
    res = runner.invoke(main, ["validate", str(path)])
    assert res.exit_code == 0
    assert json.loads(res.output)["calibrate"]["crossover_rate"] == 0.9
    res = runner.invoke(main, ["describe-methods"])
    assert res.exit_code == 0
    for m in workflow.METHODS:
        assert m in res.output


def test_cli_errors(tmp_path):
    runner = CliRunner()
    bad = write_yaml(tmp_path / "bad.yaml", bi_config("out", method="calibrte"))
    res = runner.invoke(main, ["validate", str(bad)])
    assert res.exit_code == 2
    assert "method" in res.output
    raw = {"model": "city_interaction", "method": "calibrate", "seed": 0, "output_dir": "o",
           "parameters": {"r0": [0.0, 0.02]},
           "model_settings": {"cities_csv": "nope.csv", "network_csv": "n.csv"},
           "calibrate": {"population_size": 8, "budget": 16}}
    res = runner.invoke(main, ["run", str(write_yaml(tmp_path / "fail.yaml", raw))])
    assert res.exit_code == 1
    assert "workflow failed" in res.output


def test_shipped_configs_validate():
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.yaml")):
        workflow.parse_workflow(path)
