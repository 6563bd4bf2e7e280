"""Experiment configurations and the gen-data / fit / simulate / evaluate stages.

A run lives in one output directory::

    config.json             effective configuration (hashed into every manifest)
    data/                   training/validation path CSVs, control tables, manifest
    models/                 density and FP model documents
    fit/                    score tables and the fit report
    sim/                    paired true/estimated ensembles (.csv.gz) with sidecars
    eval/                   moment, analytic and CVaR tables, summary.json
    timings.json            wall-clock timings (the only non-reproducible file)

Every random draw comes from a named stream derived from the config seed, so
all files except ``timings.json`` are bitwise reproducible from (config, seed).
"""

import copy
import csv
import logging
import time
from pathlib import Path

import numpy as np

from . import fp, io, processes
from .controlled import (ControlledDataset, GridSampler, PathSampler, PathStateSampler,
                         RegularGridSampler, build_controlled_fp_set, derive_seeds,
                         fit_controlled_density, generate_controlled_dataset)
from .controls import SINUSOIDAL_RANGES, TWO_STEP_RANGES, ControlSpec, sample_controls
from .data import PathDataset
from .kernels import GaussianKernelParams
from .metrics import cvar_gap, empirical_cvar, moment_gaps, moment_track
from .selection import GridSpec, select_density_hparams, select_fp_hparams
from .simulate import config_for, simulate, simulate_estimated

logger = logging.getLogger(__name__)

EXPERIMENTS = ("ou", "dubins", "fes", "controlled-ou", "controlled-dubins")

STREAMS = ("train", "val", "controls", "val_controls", "val_data", "heldout",
           "fp_train", "fp_val", "fp_select", "anchors", "sim_true", "sim_est")

FACTORIES = {"ou": processes.ou, "controlled_ou": processes.controlled_ou,
             "dubins": processes.dubins, "controlled_dubins": processes.controlled_dubins,
             "fes": processes.fes}

DENSITY_GRID = {"nu": [0.1, 0.3, 1.0, 3.0], "mu": [2.0, 3.0, 4.0, 6.0]}
FP_GRID = {"gammak": [0.1, 0.3, 1.0], "lambda": [1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]}


class ConfigError(ValueError):
    """Invalid experiment configuration (a usage error)."""


def _base(name, process, data, fp_cfg, sim, density=None, controls=None):
    return {"name": name, "seed": 0, "process": process, "data": data, "controls": controls,
            "density": density or {"grid": copy.deepcopy(DENSITY_GRID)}, "fp": fp_cfg,
            "simulate": sim, "evaluate": {"alphas": [0.1, 0.2]}}


def default_config(name):
    """The reproduction configuration for one of :data:`EXPERIMENTS`.

    Sampling boxes that the experiments leave open are pinned here.
    """
    grid = copy.deepcopy(FP_GRID)
    if name == "ou":
        return _base(
            name, {"factory": "ou", "args": {}},
            {"Q": 1000, "M": 100, "Q_val": 100, "M_val": 99, "substeps": 10},
            {"train": {"kind": "uniform", "n_times": 50, "n_positions": 50,
                       "t_range": [0.0, 10.0], "x_range": [[-0.5], [3.5]]},
             "val": {"kind": "uniform", "n_times": 50, "n_positions": 50,
                     "t_range": [0.0, 10.0], "x_range": [[-0.5], [3.5]]},
             "grid": grid, "constrained": True, "nystrom": None},
            {"Q": 10000, "substeps": 10})
    if name == "dubins":
        return _base(
            name, {"factory": "dubins", "args": {}},
            {"Q": 3000, "M": 100, "Q_val": 100, "M_val": 10, "substeps": 10},
            {"train": {"kind": "path_states", "n": 3000, "start": 0},
             "val": {"kind": "path_states", "n": 1000, "start": 3000},
             "grid": grid, "constrained": True, "nystrom": None},
            {"Q": 2000, "substeps": 10})
    if name == "fes":
        return _base(
            name, {"factory": "fes", "args": {}},
            {"Q": 3000, "M": 100, "Q_val": 100, "M_val": 99, "substeps": 10},
            {"train": {"kind": "uniform", "n_times": 30, "n_positions": 100,
                       "t_range": [0.0, 3.0], "x_range": [[-1.5, -1.5], [6.0, 8.0]]},
             "val": {"kind": "lattice", "n_times": 10, "n_positions": 100,
                     "t_range": [0.0, 3.0], "x_range": [[-1.5, -1.5], [6.0, 8.0]]},
             "grid": grid, "constrained": True, "nystrom": None},
            {"Q": 2000, "substeps": 10})
    if name == "controlled-ou":
        return _base(
            name, {"factory": "controlled_ou", "args": {}},
            {"Q": 1000, "M": 100, "Q_val": 100, "M_val": 99, "substeps": 10},
            {"train": {"kind": "uniform", "n_times": 20, "n_positions": 50},
             "select_train": {"kind": "uniform", "n_times": 10, "n_positions": 25},
             "val": {"kind": "uniform", "n_times": 10, "n_positions": 50},
             "grid": grid, "constrained": True, "nystrom": None},
            {"Q": 2000, "substeps": 10},
            density={"grid": copy.deepcopy(DENSITY_GRID), "select_on_control": 0},
            controls={"family": "two_step", "ranges": dict(TWO_STEP_RANGES), "K": 10,
                      "validation_K": 5, "heldout": {"K": 3}})
    if name == "controlled-dubins":
        # hyperparameters fixed to the uncontrolled Dubins selection
        return _base(
            name, {"factory": "controlled_dubins", "args": {}},
            {"Q": 3000, "M": 100, "substeps": 10},
            {"train": {"kind": "aux_paths", "n_pairs": 500, "n_paths": 5, "init_var": 6.25},
             "fixed": {"gammak": 1.0, "lambda": 1e-6}, "constrained": True, "nystrom": None},
            {"Q": 1000, "substeps": 10},
            density={"fixed": {"nu": 1.0, "mu": 4.0}},
            controls={"family": "sinusoidal", "ranges": dict(SINUSOIDAL_RANGES), "K": 20,
                      "validation_K": 0,
                      "heldout": {"explicit": [[-1.0], [-0.5], [0.0], [0.5], [1.0]]}})
    raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")


# --- configuration helpers -------------------------------------------------------

def validate_config(cfg):
    for key in ("name", "seed", "process", "data", "density", "fp", "simulate"):
        if key not in cfg:
            raise ConfigError(f"config is missing {key!r}")
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    if cfg["process"].get("factory") not in FACTORIES:
        raise ConfigError(f"unknown process factory {cfg['process'].get('factory')!r}")
    proc = build_process(cfg)
    if proc.controlled and not cfg.get("controls"):
        raise ConfigError(f"{proc.kind} needs a 'controls' section")
    if not proc.controlled and cfg.get("controls"):
        raise ConfigError(f"{proc.kind} takes no controls")
    dens = cfg["density"]
    if ("grid" in dens) == ("fixed" in dens):
        raise ConfigError("density needs exactly one of 'grid' or 'fixed'")
    fpc = cfg["fp"]
    if ("grid" in fpc) == ("fixed" in fpc):
        raise ConfigError("fp needs exactly one of 'grid' or 'fixed'")
    if "grid" in fpc and "val" not in fpc:
        raise ConfigError("fp grid search needs a 'val' sampler")
    if "grid" in fpc and proc.controlled and cfg["controls"].get("validation_K", 0) < 1:
        raise ConfigError("controlled fp grid search needs validation_K >= 1")
    m = fpc.get("nystrom")
    if m is not None and (not isinstance(m, int) or m < 1):
        raise ConfigError(f"nystrom must be a positive integer, got {m!r}")
    for k in ("Q", "M", "substeps"):
        if int(cfg["data"].get(k, 0)) < 1:
            raise ConfigError(f"data.{k} must be >= 1")
    return proc


def build_process(cfg):
    p = cfg["process"]
    try:
        return FACTORIES[p["factory"]](**p.get("args", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad process arguments: {exc}") from exc


def apply_overrides(cfg, seed=None, nystrom=None, no_constraints=False):
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = seed
    if nystrom is not None:
        cfg["fp"]["nystrom"] = nystrom
    if no_constraints:
        cfg["fp"]["constrained"] = False
    return cfg


def seeds_for(cfg):
    return dict(zip(STREAMS, derive_seeds(cfg["seed"], len(STREAMS))))


def make_sampler(rec, proc, seed):
    kind = rec["kind"]
    rng = lambda r: None if r is None else tuple(tuple(v) if isinstance(v, list) else v for v in r)
    if kind == "uniform":
        return GridSampler(rec["n_times"], rec["n_positions"], rng(rec.get("t_range")),
                           rng(rec.get("x_range")), seed=seed)
    if kind == "lattice":
        return RegularGridSampler(rec["n_times"], rec["n_positions"], rng(rec["t_range"]),
                                  rng(rec["x_range"]))
    if kind == "path_states":
        return PathStateSampler(rec["n"], seed=seed, start=rec.get("start", 0))
    if kind == "aux_paths":
        return PathSampler(proc, rec["n_pairs"], rec["n_paths"], rec["init_var"],
                           rec.get("substeps", 10), seed=seed)
    raise ConfigError(f"unknown sampler kind {kind!r}")


def validation_config(proc, Q_val, M_train, substeps, seed):
    """Simulation config whose odd-indexed saves are the midpoints of the
    training time grid, at the same Euler step size."""
    return config_for(proc, Q_val, 2 * M_train - 1, max(1, substeps // 2), seed)


def take_midpoints(data, M_val):
    """``M_val`` evenly spread odd-indexed (midpoint) saves of a validation run."""
    odd = np.arange(1, data.M, 2)
    if M_val > odd.size:
        raise ConfigError(f"at most {odd.size} midpoint validation times, asked for {M_val}")
    idx = odd[np.unique(np.round(np.linspace(0, odd.size - 1, M_val)).astype(int))]
    return PathDataset(data.times[idx], data.paths[:, idx], data.meta)


def _controls_from_records(recs):
    return [ControlSpec(r["family"], tuple(r["params"])) for r in recs]


def _run_dirs(out):
    out = io.ensure_writable_dir(out)
    for sub in ("data", "models", "fit", "sim", "eval"):
        (out / sub).mkdir(exist_ok=True)
    return out


class Timings:
    def __init__(self, out):
        self.path = Path(out) / "timings.json"
        self.data = io.read_json(self.path) if self.path.exists() else {}

    def record(self, key, seconds):
        self.data[key] = round(float(seconds), 3)
        io.write_json(self.path, self.data)


DATA_SECTIONS = ("seed", "process", "data", "controls", "density")


def data_hash(cfg):
    """Hash of the sections that determine the generated data."""
    return io.config_hash({k: cfg.get(k) for k in DATA_SECTIONS})


def _check_config(out, cfg, stage):
    """Record ``cfg`` as the run configuration and return its hash.

    Later stages may change the fitting, simulation and evaluation sections
    (e.g. ``--nystrom``) but not the ones that generated the data.
    """
    out = Path(out)
    if stage != "gen-data":
        manifest = _data_manifest(out)
        if manifest.get("data_hash") != data_hash(cfg):
            raise ConfigError(f"{out}/data was generated under a different seed, process, "
                              "data, controls or density configuration")
    io.write_json(out / "config.json", cfg)
    return io.config_hash(cfg)


def _fit_hash(cfg):
    return io.config_hash({k: cfg.get(k) for k in DATA_SECTIONS + ("fp",)})


def load_run_config(out):
    path = Path(out) / "config.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run gen-data first or pass --config")
    return io.read_json(path)


# --- stage 0: data ------------------------------------------------------------------

def gen_data(cfg, out):
    proc = validate_config(cfg)
    out = _run_dirs(out)
    chash = _check_config(out, cfg, "gen-data")
    seeds = seeds_for(cfg)
    dc = cfg["data"]
    t0 = time.perf_counter()
    train_cfg = config_for(proc, dc["Q"], dc["M"], dc["substeps"], seeds["train"])
    files = {}
    manifest = {"config_hash": chash, "data_hash": data_hash(cfg), "seed": cfg["seed"],
                "process": proc.to_record()}
    needs_val = "grid" in cfg["density"]
    if not proc.controlled:
        train = simulate(proc, train_cfg)
        io.write_paths_csv(out / "data/train.csv", train)
        files["train"] = "data/train.csv"
        if needs_val:
            val = take_midpoints(simulate(proc, validation_config(
                proc, dc["Q_val"], dc["M"], dc["substeps"], seeds["val"])), dc["M_val"])
            io.write_paths_csv(out / "data/val.csv", val)
            files["val"] = "data/val.csv"
    else:
        cc = cfg["controls"]
        controls = sample_controls(cc["family"], cc["ranges"], cc["K"], seeds["controls"])
        data = generate_controlled_dataset(proc, controls, train_cfg)
        io.write_controls_csv(out / "data/controls.csv", controls)
        io.write_paths_csv(out / "data/train.csv", list(data.per_control))
        files.update(controls="data/controls.csv", train="data/train.csv")
        if needs_val:
            k = cfg["density"].get("select_on_control", 0)
            val = take_midpoints(simulate(proc, validation_config(
                proc, dc["Q_val"], dc["M"], dc["substeps"], seeds["val"]), controls[k]), dc["M_val"])
            io.write_paths_csv(out / "data/val.csv", [val], [k])
            files["val"] = "data/val.csv"
        if "grid" in cfg["fp"]:
            vctrl = sample_controls(cc["family"], cc["ranges"], cc["validation_K"],
                                    seeds["val_controls"])
            vdata = generate_controlled_dataset(proc, vctrl, train_cfg, seed=seeds["val_data"])
            io.write_controls_csv(out / "data/val_controls.csv", vctrl)
            io.write_paths_csv(out / "data/val_controls_train.csv", list(vdata.per_control))
            files.update(val_controls="data/val_controls.csv",
                         val_controls_train="data/val_controls_train.csv")
        held = heldout_controls(cfg, seeds)
        io.write_controls_csv(out / "data/heldout_controls.csv", held)
        files["heldout_controls"] = "data/heldout_controls.csv"
        manifest["controls"] = [u.to_record() for u in controls]
        manifest["heldout_controls"] = [u.to_record() for u in held]
    manifest["files"] = {k: {"file": v, "sha256": io.file_sha256(out / v)} for k, v in files.items()}
    io.write_json(out / "data/manifest.json", manifest)
    Timings(out).record("gen_data", time.perf_counter() - t0)
    return manifest


def heldout_controls(cfg, seeds):
    h = cfg["controls"]["heldout"]
    if "explicit" in h:
        return [ControlSpec(cfg["controls"]["family"], tuple(p)) for p in h["explicit"]]
    cc = cfg["controls"]
    return sample_controls(cc["family"], cc["ranges"], h["K"], seeds["heldout"])


def _load_data(out, manifest, key):
    ref = manifest["files"].get(key)
    if ref is None:
        raise FileNotFoundError(f"data manifest lists no {key!r} file; rerun gen-data")
    path = Path(out) / ref["file"]
    if not path.exists():
        raise FileNotFoundError(f"{path} is missing; rerun gen-data")
    return path, ref


def _data_manifest(out):
    path = Path(out) / "data/manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run gen-data first")
    return io.read_json(path)


# --- stage 1: fit -------------------------------------------------------------------

def fit(cfg, out):
    proc = validate_config(cfg)
    out = _run_dirs(out)
    _check_config(out, cfg, "fit")
    manifest = _data_manifest(out)
    seeds = seeds_for(cfg)
    timings = Timings(out)
    report = {"fit_hash": _fit_hash(cfg)}
    t_start = time.perf_counter()

    train_path, train_ref = _load_data(out, manifest, "train")
    train = io.read_paths_csv(train_path)
    if proc.controlled:
        controls = list(io.read_controls_csv(out / manifest["files"]["controls"]["file"]).values())
        data = ControlledDataset(tuple(controls), tuple(train.values()))
    else:
        data = ControlledDataset((None,), (train,))

    # step 1: densities
    t0 = time.perf_counter()
    if "grid" in cfg["density"]:
        g = cfg["density"]["grid"]
        grid = GridSpec(nu_grid=g["nu"], mu_grid=g["mu"])
        val_path, _ = _load_data(out, manifest, "val")
        val = io.read_paths_csv(val_path)
        k = 0
        if proc.controlled:
            (k, val), = val.items()
        nu, mu, table = select_density_hparams(data.per_control[k], val, grid)
        _write_scores(out / "fit/scores_density.csv", table)
        report["density_failures"] = [f"{c}: {m}" for c, m in table.failures]
    else:
        nu, mu = cfg["density"]["fixed"]["nu"], cfg["density"]["fixed"]["mu"]
    dms = fit_controlled_density(data, nu, mu)
    cids = list(train.keys()) if proc.controlled else [None]
    docs = [io.density_model_doc(dm, {"file": train_ref["file"], "control_id": cid,
                                      "sha256": train_ref["sha256"]})
            for dm, cid in zip(dms, cids)]
    io.write_json(out / "models/density.json", {"models": docs})
    report["density"] = {"nu": nu, "mu": mu}
    timings.record("fit_density", time.perf_counter() - t0)

    # step 2: Fokker-Planck matching
    fpc = cfg["fp"]
    t0 = time.perf_counter()
    build = _fp_builder(proc, data, dms)
    fp_train = build(make_sampler(fpc["train"], proc, seeds["fp_train"]))
    constrained = fpc.get("constrained", True)
    if "grid" in fpc:
        g = fpc["grid"]
        grid = GridSpec(gammak_grid=g["gammak"], lambda_grid=g["lambda"])
        sel_train = (build(make_sampler(fpc["select_train"], proc, seeds["fp_select"]))
                     if fpc.get("select_train") else fp_train)
        fp_val = _fp_validation_set(cfg, out, manifest, proc, data, dms, nu, mu, seeds)
        gk, lam, table = select_fp_hparams(sel_train, fp_val, grid, constrained=constrained)
        _write_scores(out / "fit/scores_fp.csv", table)
        report["fp_failures"] = [f"{c}: {m}" for c, m in table.failures]
        report["fp_selected_score"] = table.best(maximize=False)[2]
    else:
        gk, lam = fpc["fixed"]["gammak"], fpc["fixed"]["lambda"]
        fp_val = None
    timings.record("select_fp", time.perf_counter() - t0)

    t0 = time.perf_counter()
    kp = GaussianKernelParams(gk)
    anchors = None
    if fpc.get("nystrom"):
        m = fpc["nystrom"]
        if m > fp_train.N:
            raise ConfigError(f"nystrom m={m} exceeds the {fp_train.N} training points")
        rng = np.random.default_rng(seeds["anchors"])
        anchors = np.sort(rng.choice(fp_train.N, size=m, replace=False))
        model = fp.fit_fp_nystrom(fp_train, lam, kp, anchors, constrained=constrained)
    elif constrained:
        model = fp.fit_fp_constrained(fp_train, lam, kp)
    else:
        model = fp.fit_fp(fp_train, lam, kp)
    timings.record("fit_fp", time.perf_counter() - t0)
    io.write_json(out / "models/fp_model.json", io.fp_model_doc(model))

    s2 = model.predict(fp_train.points[fp_train.constraint_idx])[1]
    report.update({
        "fp": {"gammak": gk, "lambda": lam, "constrained": constrained,
               "nystrom": None if anchors is None else int(anchors.size), "N": fp_train.N},
        "train_mse": fp.train_mse(model),
        "sigma2_min_constraint": float(s2.min()),
        "constraint_violations": int(np.sum(s2 < -1e-8)),
        "solver": {k: v for k, v in model.info.items()
                   if isinstance(v, (int, float)) and not k.endswith("_time")},
    })
    if fp_val is not None:
        report["val_mse"] = fp.fp_residual_mse(model, fp_val)
        report["val_zero_mse"] = fp.zero_model_mse(fp_val)
    io.write_json(out / "fit/report.json", report)
    timings.record("fit_total", time.perf_counter() - t_start)
    return report


def _fp_builder(proc, data, dms):
    if proc.controlled:
        return lambda sampler: build_controlled_fp_set(data, dms, sampler)

    def build(sampler):
        pts = sampler(0, None, data.per_control[0], dms[0])
        return fp.build_fp_set(dms[0], pts)
    return build


def _fp_validation_set(cfg, out, manifest, proc, data, dms, nu, mu, seeds):
    sampler = make_sampler(cfg["fp"]["val"], proc, seeds["fp_val"])
    if not proc.controlled:
        return _fp_builder(proc, data, dms)(sampler)
    # held-out validation controls, each with its own density model
    vctrl = list(io.read_controls_csv(out / manifest["files"]["val_controls"]["file"]).values())
    vtrain = io.read_paths_csv(out / manifest["files"]["val_controls_train"]["file"])
    vdata = ControlledDataset(tuple(vctrl), tuple(vtrain.values()))
    return build_controlled_fp_set(vdata, fit_controlled_density(vdata, nu, mu), sampler)


def _write_scores(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(table.names) + ["score"])
        for a, b, s in table.rows:
            w.writerow([io._fmt(a), io._fmt(b), "nan" if not np.isfinite(s) else io._fmt(s)])


def load_models(out):
    """Density models and the FP model of a fitted run directory."""
    out = Path(out)
    path = out / "models/fp_model.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run fit first")
    model = io.fp_model_from_doc(io.read_json(path))
    dpath = out / "models/density.json"
    if not dpath.exists():
        raise FileNotFoundError(f"{dpath} not found; run fit first")
    cache = {}
    dms = [io.density_model_from_doc(d, out, cache) for d in io.read_json(dpath)["models"]]
    return dms, model


# --- stage 2: simulate --------------------------------------------------------------

def simulate_run(cfg, out):
    proc = validate_config(cfg)
    out = Path(out)
    chash = _check_config(out, cfg, "simulate")
    manifest = _data_manifest(out)
    seeds = seeds_for(cfg)
    mpath = out / "models/fp_model.json"
    if not mpath.exists():
        raise FileNotFoundError(f"{mpath} not found; run fit first")
    fitted = io.read_json(out / "fit/report.json").get("fit_hash")
    if _fit_hash(cfg) != fitted:
        raise ConfigError("the models were fitted under a different configuration; rerun fit")
    model = io.fp_model_from_doc(io.read_json(mpath))
    sc = cfg["simulate"]
    t0 = time.perf_counter()
    if proc.controlled:
        held = io.read_controls_csv(out / manifest["files"]["heldout_controls"]["file"])
    else:
        held = {0: None}
    entries = []
    for cid, u in held.items():
        s_true = derive_seeds([seeds["sim_true"], cid], 1)[0]
        s_est = derive_seeds([seeds["sim_est"], cid], 1)[0]
        scfg = config_for(proc, sc["Q"], cfg["data"]["M"], sc["substeps"], s_true)
        true = simulate(proc, scfg, u)
        est = simulate_estimated(model.field, scfg.replace(seed=s_est), u)
        entry = {"control_id": cid, "control": None if u is None else u.to_record(),
                 "diverged_est": int(est.diverged.sum())}
        for kind, d, s in (("true", true, s_true), ("est", est, s_est)):
            rel = f"sim/{kind}_c{cid}.csv.gz"
            io.write_paths_csv(out / rel, d)
            side = {"config_hash": chash, "kind": kind, "control_id": cid, "seed": s,
                    "control": entry["control"]}
            io.write_json(out / (rel + ".json"), side)
            entry[kind] = rel
        entries.append(entry)
    io.write_json(out / "sim/manifest.json", {"config_hash": chash, "pairs": entries})
    Timings(out).record("simulate", time.perf_counter() - t0)
    return entries


# --- stage 3: evaluate --------------------------------------------------------------

MOMENT_COLUMNS = ("control_id", "time", "coord", "mean_true", "mean_est", "var_true", "var_est",
                  "mean_gap", "var_rel_gap")
ANALYTIC_COLUMNS = ("control_id", "time", "mean_analytic", "var_analytic", "mean_est", "var_est",
                    "mean_gap", "var_rel_gap")
CVAR_COLUMNS = ("control_id", "alpha", "functional", "cvar_true", "cvar_est", "gap")


class MixedRunError(ValueError):
    """Paired ensembles come from different configurations."""


def load_pair(true_file, est_file):
    sides = []
    for f in (true_file, est_file):
        side = Path(str(f) + ".json")
        if not side.exists():
            raise FileNotFoundError(f"{side} (provenance sidecar) not found")
        sides.append(io.read_json(side))
    if sides[0]["config_hash"] != sides[1]["config_hash"]:
        raise MixedRunError(f"{true_file} and {est_file} come from different configurations "
                            f"({sides[0]['config_hash'][:12]} vs {sides[1]['config_hash'][:12]})")
    return io.read_paths_csv(true_file), io.read_paths_csv(est_file), sides[0]


def evaluate_pairs(pairs, proc, alphas, out):
    """``pairs``: list of ``(control_id, control, true, est)``; writes ``eval/``."""
    out = Path(out)
    (out / "eval").mkdir(parents=True, exist_ok=True)
    alphas = sorted({float(a) for a in alphas})
    for a in alphas:
        if not 0 < a <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {a}")
    mrows, arows, crows = [], [], []
    summary = {"pairs": []}
    analytic = proc is not None and proc.kind in ("OU", "ControlledOU")
    for cid, u, true, est in pairs:
        tt, te = moment_track(true), moment_track(est)
        gap, rel = moment_gaps(tt, te)
        for m, t in enumerate(tt.times):
            for i in range(tt.mean.shape[1]):
                mrows.append((cid, t, i + 1, tt.mean[m, i], te.mean[m, i], tt.var[m, i],
                              te.var[m, i], abs(te.mean[m, i] - tt.mean[m, i]),
                              _rel(te.var[m, i], tt.var[m, i])))
        rec = {"control_id": cid, "max_mean_gap": float(gap.max()),
               "max_var_rel_gap": float(rel.max())}
        if analytic:
            am, av = _analytic_moments(proc, u, tt.times)
            ag = np.abs(te.mean[:, 0] - am)
            ar = np.abs(te.var[:, 0] - av) / av
            for m, t in enumerate(tt.times):
                arows.append((cid, t, am[m], av[m], te.mean[m, 0], te.var[m, 0], ag[m], ar[m]))
            rec["max_mean_gap_analytic"] = float(ag.max())
            rec["max_var_rel_gap_analytic"] = float(ar.max())
        rec["cvar"] = {}
        for a in alphas:
            g = cvar_gap(true, est, alpha=a)
            ct = empirical_cvar(true.paths[:, -1, 0], a)
            ce = empirical_cvar(est.paths[:, -1, 0], a)
            crows.append((cid, a, "x1(T)", ct, ce, g))
            rec["cvar"][str(a)] = g
        summary["pairs"].append(rec)
    _write_table(out / "eval/moments.csv", MOMENT_COLUMNS, mrows)
    if analytic:
        _write_table(out / "eval/analytic.csv", ANALYTIC_COLUMNS, arows)
    _write_table(out / "eval/cvar.csv", CVAR_COLUMNS, crows)
    recs = summary["pairs"]
    summary["max_mean_gap"] = max(r["max_mean_gap"] for r in recs)
    summary["max_var_rel_gap"] = max(r["max_var_rel_gap"] for r in recs)
    if analytic:
        summary["max_mean_gap_analytic"] = max(r["max_mean_gap_analytic"] for r in recs)
        summary["max_var_rel_gap_analytic"] = max(r["max_var_rel_gap_analytic"] for r in recs)
    io.write_json(out / "eval/summary.json", summary)
    return summary


def _rel(a, b):
    if b > 0:
        return abs(a - b) / b
    return 0.0 if a == b else float("inf")


def _analytic_moments(proc, u, times):
    if proc.kind == "OU":
        p = proc.params
        e = np.exp(-p["theta"] * times)
        mean = p["mu"] + (p["mu0"] - p["mu"]) * e
        var = p["sigma"] ** 2 / (2 * p["theta"]) * (1 - e**2) + p["sigma0_sq"] * e**2
        return mean, var
    return processes.analytic_controlled_ou_moments(proc, u, times)


def _write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([v if isinstance(v, (int, str, np.integer)) else io._fmt(v) for v in r])


def evaluate_run(cfg, out, alphas=None):
    proc = validate_config(cfg)
    out = Path(out)
    _check_config(out, cfg, "evaluate")
    mpath = out / "sim/manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"{mpath} not found; run simulate first")
    t0 = time.perf_counter()
    pairs = []
    for e in io.read_json(mpath)["pairs"]:
        true, est, side = load_pair(out / e["true"], out / e["est"])
        u = None if e["control"] is None else ControlSpec.from_record(e["control"])
        pairs.append((e["control_id"], u, true, est))
    alphas = cfg.get("evaluate", {}).get("alphas", [0.1]) if alphas is None else alphas
    summary = evaluate_pairs(pairs, proc, alphas, out)
    Timings(out).record("evaluate", time.perf_counter() - t0)
    return summary


# --- everything ---------------------------------------------------------------------

def reproduce(cfg, out):
    """Run gen-data, fit, simulate and evaluate; returns the evaluation summary."""
    t0 = time.perf_counter()
    gen_data(cfg, out)
    fit(cfg, out)
    simulate_run(cfg, out)
    summary = evaluate_run(cfg, out)
    Timings(out).record("reproduce", time.perf_counter() - t0)
    return summary
