"""Declarative workflows: parse a YAML (or JSON) file, run one exploration method, write outputs.

A workflow names a model, a method, the parameter space and the method's
settings. Seeds are mandatory. Every file the run writes is listed in
``manifest.json`` together with the fully defaulted configuration, so a run
can be repeated exactly. Results do not depend on the worker count.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from . import interaction as ci
from . import nsga2, objectives, problems, profile, pse, regimes, sampling
from . import simpoplocal as sl
from .io import emit_csv, partial_path, write_json
from .nsga2 import evaluation_seed
from .parallel import Failure, WorkerPool, resolve_workers
from .params import ParameterSpace

log = logging.getLogger(__name__)

MODELS = ("simpoplocal", "city_interaction", "analytic")
METHODS = ("sample_lhs", "sample_grid", "calibrate", "profile", "pse", "regimes")
ENVIRONMENTS = ("local",)
REQUIRED = object()

METHOD_DEFAULTS: dict[str, dict[str, Any]] = {
    "sample_lhs": {"n": REQUIRED, "centered": False},
    "sample_grid": {"levels": REQUIRED},
    "calibrate": {"population_size": 200, "budget": None, "generations": None, "crossover_rate": 0.9,
                  "mutation_rate": None, "eta_crossover": 2.0, "eta_mutation": 20.0, "islands": None,
                  "windows": None},
    "profile": {"parameter": REQUIRED, "n_bins": profile.DEFAULT_BINS, "budget": REQUIRED,
                "flatness_tol": profile.DEFAULT_FLATNESS_TOL, "mode": profile.NICHING, "batch_size": None},
    "pse": {"budget": REQUIRED, "batch_size": 50, "fresh_fraction": 0.1, "sigma_min": pse.SIGMA_RANGE[0],
            "sigma_max": pse.SIGMA_RANGE[1], "grid": None},
    "regimes": {"explorer": "pse", "budget": REQUIRED, "tau_max": regimes.DEFAULT_TAU_MAX,
                "threshold": regimes.DEFAULT_THRESHOLD, "batch_size": 50, "fresh_fraction": 0.1,
                "sigma_min": pse.SIGMA_RANGE[0], "sigma_max": pse.SIGMA_RANGE[1]},
}
ISLAND_DEFAULTS = {"n_islands": 4, "epochs": 5, "island_generations": None, "fresh_fraction": 0.1,
                   "archive_size": None, "checkpoint": True}
CITY_PARAMS = ("r0", "w_gravity", "d_gravity", "w_network", "capacity_rate")
CITY_SETTINGS = {"cities_csv": None, "network_csv": None, "n_cities": 20, "system_seed": 0, "steps": 30,
                 "fixed": {}, "truth": {"r0": 0.01, "w_gravity": 0.02, "d_gravity": 0.3, "w_network": 0.01,
                                        "capacity_rate": 0.05}}
ANALYTIC_OUTPUTS = {"biobjective": ["f1", "f2"], "quadratic": ["f"], "banana": ["pattern_0", "pattern_1"],
                    "identity": None}
OUTPUT_FILES = {"sample_lhs": "samples.csv", "sample_grid": "samples.csv", "calibrate": "front.csv",
                "profile": "profile.csv", "pse": "pse_grid.csv", "regimes": "regimes.csv"}


class WorkflowError(ValueError):
    """Invalid workflow; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class WorkflowConfig:
    model: str
    method: str
    space: ParameterSpace
    seed: int
    replications: int
    workers: int | None
    environment: str
    output_dir: Path
    model_settings: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """The fully defaulted configuration, in the same layout as the input file."""
        return {
            "model": self.model, "method": self.method, "seed": self.seed, "replications": self.replications,
            "parallelism": {"workers": self.workers, "environment": self.environment},
            "output_dir": str(self.output_dir), "parameters": self.space.to_dict(),
            "model_settings": copy.deepcopy(self.model_settings), self.method: copy.deepcopy(self.settings),
        }


def _choice(value, key, valid):
    if value not in valid:
        raise WorkflowError(key, f"unknown value {value!r}; valid values: {', '.join(valid)}")
    return value


def _int(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise WorkflowError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise WorkflowError(key, f"must be >= {minimum}, got {value}")
    return int(value)


def _float(value, key):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise WorkflowError(key, f"expected a number, got {value!r}") from None


def _merge(defaults: dict, given: dict | None, key: str) -> dict:
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise WorkflowError(key, "expected a mapping")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise WorkflowError(f"{key}.{unknown[0]}", f"unknown setting; valid settings: {', '.join(defaults)}")
    out = {}
    for k, v in defaults.items():
        val = given.get(k, v)
        if val is REQUIRED:
            raise WorkflowError(f"{key}.{k}", "missing required setting")
        out[k] = copy.deepcopy(val)
    return out


def _parse_space(decl, model, model_settings) -> ParameterSpace:
    if not isinstance(decl, dict) or not decl:
        raise WorkflowError("parameters", "expected a non-empty mapping of parameter declarations")
    for name, d in decl.items():
        key = f"parameters.{name}"
        if isinstance(d, dict):
            missing = [k for k in ("lower", "upper") if k not in d]
            if missing:
                raise WorkflowError(f"{key}.{missing[0]}", "missing bound")
            extra = sorted(set(d) - {"lower", "upper", "scale"})
            if extra:
                raise WorkflowError(f"{key}.{extra[0]}", "unknown field; valid fields: lower, upper, scale")
            lo, hi, scale = _float(d["lower"], f"{key}.lower"), _float(d["upper"], f"{key}.upper"), d.get("scale", "linear")
        elif isinstance(d, (list, tuple)) and len(d) in (2, 3):
            lo, hi = _float(d[0], key), _float(d[1], key)
            scale = d[2] if len(d) == 3 else "linear"
        else:
            raise WorkflowError(key, "expected {lower, upper, scale} or [lower, upper(, scale)]")
        _choice(scale, f"{key}.scale", ("linear", "logarithmic"))
        if not lo < hi:
            raise WorkflowError(key, f"lower bound {lo} must be < upper bound {hi}")
        if scale == "logarithmic" and lo <= 0:
            raise WorkflowError(key, "logarithmic scale needs a positive lower bound")
    space = ParameterSpace.from_dict(decl)
    if model == "simpoplocal":
        valid = sl.GENOME_FIELDS
    elif model == "city_interaction":
        valid = CITY_PARAMS
    else:
        valid = None
    if valid is not None:
        for name in space.names:
            if name not in valid:
                raise WorkflowError(f"parameters.{name}", f"not a free parameter of {model}; valid: {', '.join(valid)}")
    return space


def _parse_model_settings(model, given) -> dict:
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise WorkflowError("model_settings", "expected a mapping")
    if model == "simpoplocal":
        # genome fields not declared free keep these values
        defaults = {f.name: f.default for f in dataclasses.fields(sl.SimpopLocalParams)}
        settings = _merge(defaults, given, "model_settings")
        try:
            sl.SimpopLocalParams(**settings)
        except (ValueError, TypeError) as exc:
            raise WorkflowError("model_settings", str(exc)) from None
        return settings
    if model == "city_interaction":
        settings = _merge(CITY_SETTINGS, given, "model_settings")
        if (settings["cities_csv"] is None) != (settings["network_csv"] is None):
            raise WorkflowError("model_settings.network_csv", "cities_csv and network_csv must be given together")
        for k in ("fixed", "truth"):
            bad = sorted(set(settings[k]) - set(CITY_PARAMS))
            if bad:
                raise WorkflowError(f"model_settings.{k}.{bad[0]}", f"unknown parameter; valid: {', '.join(CITY_PARAMS)}")
        _int(settings["steps"], "model_settings.steps", 1)
        return settings
    settings = _merge({"problem": REQUIRED}, given, "model_settings")
    _choice(settings["problem"], "model_settings.problem", tuple(problems.ANALYTIC))
    return settings


def _check_method_settings(cfg: WorkflowConfig):
    s, m, key = cfg.settings, cfg.method, cfg.method
    if m == "sample_lhs":
        _int(s["n"], f"{key}.n", 1)
    elif m == "sample_grid":
        levels = s["levels"]
        if isinstance(levels, int):
            levels = s["levels"] = [levels] * cfg.space.dim
        if not isinstance(levels, list) or len(levels) != cfg.space.dim:
            raise WorkflowError(f"{key}.levels", f"expected {cfg.space.dim} level counts")
        for k, v in enumerate(levels):
            _int(v, f"{key}.levels[{k}]", 1)
    elif m == "calibrate":
        pop = _int(s["population_size"], f"{key}.population_size", 4)
        if pop % 2:
            raise WorkflowError(f"{key}.population_size", "must be even")
        if s["budget"] is None and s["generations"] is None:
            raise WorkflowError(f"{key}.budget", "give a budget (evaluations) or a number of generations")
        if s["budget"] is not None and _int(s["budget"], f"{key}.budget", 1) < pop:
            raise WorkflowError(f"{key}.budget", f"must be >= population_size ({pop})")
        if s["islands"] is not None:
            s["islands"] = _merge(ISLAND_DEFAULTS, s["islands"], f"{key}.islands")
            _int(s["islands"]["n_islands"], f"{key}.islands.n_islands", 1)
            _int(s["islands"]["epochs"], f"{key}.islands.epochs", 1)
        if s["windows"] is not None:
            if cfg.model != "city_interaction":
                raise WorkflowError(f"{key}.windows", "windowed calibration applies to the city_interaction model")
            s["windows"] = _merge({"size": REQUIRED, "step": None}, s["windows"], f"{key}.windows")
            _int(s["windows"]["size"], f"{key}.windows.size", 1)
            if s["windows"]["step"] is None:
                s["windows"]["step"] = s["windows"]["size"]
            _int(s["windows"]["step"], f"{key}.windows.step", 1)
    elif m == "profile":
        if s["parameter"] not in cfg.space.names:
            raise WorkflowError(f"{key}.parameter", f"unknown parameter {s['parameter']!r}; valid: {', '.join(cfg.space.names)}")
        nb = _int(s["n_bins"], f"{key}.n_bins", 2)
        if _int(s["budget"], f"{key}.budget", 1) < nb:
            raise WorkflowError(f"{key}.budget", f"must be >= n_bins ({nb})")
        _choice(s["mode"], f"{key}.mode", (profile.NICHING, profile.PER_BIN))
    elif m in ("pse", "regimes"):
        b = _int(s["budget"], f"{key}.budget", 1)
        if b < _int(s["batch_size"], f"{key}.batch_size", 1):
            raise WorkflowError(f"{key}.budget", "must be >= batch_size")
        lo, hi = _float(s["sigma_min"], f"{key}.sigma_min"), _float(s["sigma_max"], f"{key}.sigma_max")
        if not 0 < lo <= hi:
            raise WorkflowError(f"{key}.sigma_min", "mutation scales need 0 < sigma_min <= sigma_max")
        if m == "regimes":
            if cfg.model != "city_interaction":
                raise WorkflowError("model", "the regimes method needs the city_interaction model")
            _choice(s["explorer"], f"{key}.explorer", ("pse", "lhs"))
            _int(s["tau_max"], f"{key}.tau_max", 1)
            steps = cfg.model_settings["steps"]
            if steps < regimes.min_length(s["tau_max"]):
                raise WorkflowError("model_settings.steps", f"too few steps ({steps}) for tau_max={s['tau_max']}; "
                                                            f"need {regimes.min_length(s['tau_max'])}")
        elif s["grid"] is None:
            if cfg.model != "simpoplocal":
                raise WorkflowError(f"{key}.grid", "missing pattern grid (lower, upper, n_bins)")
            s["grid"] = {"lower": [-3.0, 1.0, 0.0], "upper": [0.0, 5.0, float(cfg.model_settings["max_innovations"])],
                         "n_bins": [10, 10, 10]}
        if m == "pse":
            g = _merge({"lower": REQUIRED, "upper": REQUIRED, "n_bins": REQUIRED}, s["grid"], f"{key}.grid")
            try:
                pse.GridSpec(g["lower"], g["upper"], g["n_bins"])
            except (ValueError, TypeError) as exc:
                raise WorkflowError(f"{key}.grid", str(exc)) from None
            s["grid"] = g


def parse_config(raw: dict) -> WorkflowConfig:
    """Validate a configuration mapping and fill in defaults."""
    if not isinstance(raw, dict):
        raise WorkflowError("<root>", "workflow must be a mapping")
    top = {"model", "method", "seed", "replications", "parallelism", "output_dir", "parameters",
           "model_settings", *METHODS}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise WorkflowError(unknown[0], f"unknown key; valid keys: {', '.join(sorted(top))}")
    for k in ("model", "method", "seed", "parameters"):
        if k not in raw:
            raise WorkflowError(k, "missing required key")
    model = _choice(raw["model"], "model", MODELS)
    method = _choice(raw["method"], "method", METHODS)
    seed = _int(raw["seed"], "seed", 0)
    default_reps = objectives.DEFAULT_REPLICATIONS if model == "simpoplocal" else 1
    replications = _int(raw.get("replications", default_reps), "replications", 1)
    par = raw.get("parallelism", {})
    if isinstance(par, int) and not isinstance(par, bool):
        par = {"workers": par}
    par = _merge({"workers": None, "environment": "local"}, par, "parallelism")
    workers = None if par["workers"] is None else _int(par["workers"], "parallelism.workers", 1)
    environment = _choice(par["environment"], "parallelism.environment", ENVIRONMENTS)
    model_settings = _parse_model_settings(model, raw.get("model_settings"))
    space = _parse_space(raw["parameters"], model, model_settings)
    settings = _merge(METHOD_DEFAULTS[method], raw.get(method), method)
    others = sorted(set(raw) & set(METHODS) - {method})
    if others:
        raise WorkflowError(others[0], f"settings for method {others[0]!r} given but method is {method!r}")
    cfg = WorkflowConfig(model, method, space, seed, replications, workers, environment,
                         Path(raw.get("output_dir", "molelab_out")), model_settings, settings)
    _check_method_settings(cfg)
    return cfg


def parse_workflow(path) -> WorkflowConfig:
    path = Path(path)
    if not path.is_file():
        raise WorkflowError("<file>", f"workflow file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise WorkflowError("<file>", f"cannot parse {path}: {exc}") from None
    cfg = parse_config(raw)
    if not cfg.output_dir.is_absolute():
        cfg.output_dir = path.parent / cfg.output_dir
    return cfg


# problem construction


def _simpop_base(cfg) -> sl.SimpopLocalParams:
    return sl.SimpopLocalParams(**cfg.model_settings)


def _city_setup(cfg):
    ms = cfg.model_settings
    if ms["cities_csv"] is not None:
        system, observed = ci.load_system(ms["cities_csv"], ms["network_csv"])
        base = ci.InteractionParams(**{**ms["fixed"], "steps": max(1, observed.shape[0])})
    else:
        system = ci.random_system(ms["n_cities"], ms["system_seed"])
        truth = ci.InteractionParams(**{**ms["truth"], "steps": ms["steps"]})
        observed = ci.simulate(system, truth).population
        base = ci.InteractionParams(**{**ms["fixed"], "steps": ms["steps"]})
    return system, observed, base


def objective_names(cfg) -> list[str]:
    if cfg.model == "simpoplocal":
        return list(objectives.OBJECTIVE_NAMES)
    if cfg.model == "city_interaction":
        return ["mse_population", "mse_log_population"]
    names = ANALYTIC_OUTPUTS[cfg.model_settings["problem"]]
    return names if names is not None else [f"pattern_{k}" for k in range(cfg.space.dim)]


def build_problem(cfg):
    """The evaluator of the configured model, for objective-based methods."""
    names = tuple(cfg.space.names)
    if cfg.model == "simpoplocal":
        if cfg.method == "pse":
            return problems.SimpopLocalPattern(names, _simpop_base(cfg), cfg.replications)
        return problems.SimpopLocalCalibration(names, _simpop_base(cfg), cfg.replications)
    if cfg.model == "city_interaction":
        system, observed, base = _city_setup(cfg)
        if cfg.method == "regimes":
            return problems.CityRegime(system, base, names, cfg.settings["tau_max"], cfg.settings["threshold"])
        return problems.CityCalibration(system, observed, base, names)
    return problems.ANALYTIC[cfg.model_settings["problem"]]()


# method runners; each returns the list of files written


def _evaluate_design(cfg, design, pool) -> list[list]:
    problem = build_problem(cfg)
    n_out = len(objective_names(cfg))
    seeds = [evaluation_seed(cfg.seed, k) for k in range(len(design))]
    results = pool.starmap(nsga2._call, [(problem, x, s) for x, s in zip(design, seeds)])
    rows = []
    for x, r in zip(design, results):
        if isinstance(r, Failure):
            log.warning("evaluation failed at %s: %s", x, r.error)
            r = np.full(n_out, np.nan)
        rows.append([*x, *r])
    return rows


def _run_samples(cfg, pool) -> list[Path]:
    if cfg.method == "sample_lhs":
        design = sampling.lhs(cfg.space, cfg.settings["n"], cfg.seed, cfg.settings["centered"])
    else:
        design = sampling.grid(cfg.space, cfg.settings["levels"])
    rows = _evaluate_design(cfg, design, pool)
    return [emit_csv(rows, [*cfg.space.names, *objective_names(cfg)], cfg.output_dir / "samples.csv")]


def _evolution_config(cfg) -> nsga2.EvolutionConfig:
    s = cfg.settings
    return nsga2.EvolutionConfig(population_size=s["population_size"], generations=s["generations"],
                                 budget=s["budget"], crossover_rate=s["crossover_rate"],
                                 mutation_rate=s["mutation_rate"], eta_crossover=s["eta_crossover"],
                                 eta_mutation=s["eta_mutation"], replications=cfg.replications, seed=cfg.seed)


def _calibrate(cfg, problem, pool, tag=""):
    ecfg = _evolution_config(cfg)
    isl = cfg.settings["islands"]
    if isl is None:
        return nsga2.nsga2_run(problem, cfg.space, ecfg, pool)
    ckpt = str(cfg.output_dir / f"checkpoints{tag}") if isl["checkpoint"] else None
    icfg = nsga2.IslandConfig(isl["n_islands"], isl["epochs"], isl["island_generations"], isl["fresh_fraction"],
                              isl["archive_size"], ckpt)
    return nsga2.island_run(problem, cfg.space, ecfg, icfg, pool)


def _checkpoint_files(cfg) -> list[Path]:
    return sorted(cfg.output_dir.glob("checkpoints*/checkpoint_epoch_*.json"))


def _run_calibrate(cfg, pool) -> list[Path]:
    names = objective_names(cfg)
    windows = cfg.settings["windows"]
    if windows is None:
        archive = _calibrate(cfg, build_problem(cfg), pool)
        return [nsga2.write_front(archive, cfg.space, names, cfg.output_dir / "front.csv"), *_checkpoint_files(cfg)]
    system, observed, base = _city_setup(cfg)
    full = np.vstack([system.population[None, :], observed])
    size, step = windows["size"], windows["step"]
    rows = []
    for start in range(0, full.shape[0] - size, step):
        sys_w = system.with_state(population=full[start])
        problem = problems.CityCalibration(sys_w, full[start + 1: start + 1 + size],
                                           dataclasses.replace(base, steps=size), tuple(cfg.space.names))
        archive = _calibrate(cfg, problem, pool, tag=f"_window_{start:04d}")
        for ind in sorted(archive.individuals, key=lambda i: (tuple(i.objectives), tuple(i.genome))):
            rows.append([start, *ind.genome, *ind.objectives, ind.replications])
    path = emit_csv(rows, ["window_start", *nsga2.front_schema(cfg.space, names)], cfg.output_dir / "front.csv")
    return [path, *_checkpoint_files(cfg)]


def _run_profile(cfg, pool) -> list[Path]:
    s = cfg.settings
    curve = profile.profile_run(build_problem(cfg), cfg.space, cfg.space.index(s["parameter"]), s["n_bins"],
                                s["budget"], cfg.seed, s["batch_size"], mode=s["mode"], pool=pool)
    if curve.filled.all():
        log.info("profile of %s: %s", s["parameter"], profile.classify_profile(curve, s["flatness_tol"]))
    return [profile.write_profile(curve, cfg.space.names, cfg.output_dir / "profile.csv")]


def _pattern_names(cfg):
    if cfg.model == "simpoplocal":
        return ["rank_size_slope", "log10_largest", "n_innovations"]
    return objective_names(cfg)


def _pse_config(cfg) -> pse.PseConfig:
    s = cfg.settings
    return pse.PseConfig(s["budget"], s["batch_size"], s["fresh_fraction"], cfg.seed, s["sigma_min"], s["sigma_max"])


def _run_pse(cfg, pool) -> list[Path]:
    s = cfg.settings
    g = s["grid"]
    grid = pse.pse_run(build_problem(cfg), cfg.space, pse.GridSpec(g["lower"], g["upper"], g["n_bins"]),
                       _pse_config(cfg), pool)
    return [pse.write_grid(grid, cfg.space.names, cfg.output_dir / "pse_grid.csv", _pattern_names(cfg))]


REGIME_GRID = pse.GridSpec([-1.5] * 6, [1.5] * 6, [3] * 6)


def _run_regimes(cfg, pool) -> list[Path]:
    s = cfg.settings
    problem = build_problem(cfg)
    labels = [f"sign_{lab.replace('->', '_')}" for lab in regimes.pair_labels()]
    files = []
    if s["explorer"] == "pse":
        grid = pse.pse_run(problem, cfg.space, REGIME_GRID,
                           _pse_config(cfg), pool)
        codes = {}
        for cell, c in grid.cells.items():
            codes[regimes.vector_to_code(c.pattern)] = c.hits
        census = regimes.Census(dict(sorted(codes.items(), key=lambda kv: (-kv[1], kv[0]))),
                                grid.evaluations, grid.failures)
        files.append(pse.write_grid(grid, cfg.space.names, cfg.output_dir / "pse_grid.csv", labels))
    else:
        design = sampling.lhs(cfg.space, s["budget"], cfg.seed)
        seeds = [evaluation_seed(cfg.seed, k) for k in range(len(design))]
        results = pool.starmap(problem, list(zip(design, seeds)))
        ok = [regimes.vector_to_code(r) for r in results if not isinstance(r, Failure)]
        census = regimes.census_from_codes(ok, len(results) - len(ok))
        files.append(emit_csv([[*x, *r] for x, r in zip(design, results) if not isinstance(r, Failure)],
                              [*cfg.space.names, *labels], cfg.output_dir / "samples.csv"))
    log.info("regime census: %d distinct regimes, %d co-evolution", census.distinct, len(census.coevolution_codes))
    files.insert(0, regimes.write_census(census, cfg.output_dir / "regimes.csv"))
    return files


RUNNERS = {"sample_lhs": _run_samples, "sample_grid": _run_samples, "calibrate": _run_calibrate,
           "profile": _run_profile, "pse": _run_pse, "regimes": _run_regimes}


def versions() -> dict:
    import numba
    import scipy

    return {"molelab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pyyaml": yaml.__version__}


def execute(cfg: WorkflowConfig) -> dict:
    """Run the configured method and write ``manifest.json``; returns the manifest.

    On failure the manifest is written as ``manifest.json.partial`` with the
    error, incomplete files keep their ``.partial`` suffix, and the exception
    propagates.
    """
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    workers = resolve_workers(cfg.workers)
    t0 = time.perf_counter()
    manifest = {"config": cfg.echo(), "seeds": {"base": cfg.seed}, "versions": versions(), "files": []}
    try:
        with WorkerPool(workers) as pool:
            files = RUNNERS[cfg.method](cfg, pool)
    except Exception as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["run"] = {"wall_time_s": time.perf_counter() - t0, "workers": workers}
        write_json(manifest, partial_path(cfg.output_dir / "manifest.json"))
        raise
    manifest["files"] = sorted({str(Path(f).relative_to(cfg.output_dir)) for f in files} | {"manifest.json"})
    manifest["run"] = {"wall_time_s": round(time.perf_counter() - t0, 6), "workers": workers}
    write_json(manifest, cfg.output_dir / "manifest.json")
    return manifest


def describe_methods() -> str:
    lines = []
    for m in METHODS:
        opts = ", ".join(f"{k}={'<required>' if v is REQUIRED else v!r}" for k, v in METHOD_DEFAULTS[m].items())
        lines.append(f"{m} -> {OUTPUT_FILES[m]}\n    {opts}")
    lines.append(f"models: {', '.join(MODELS)}")
    return "\n".join(lines)
