import copy
import time
from types import SimpleNamespace

import pytest

from fpident import experiments as ex
from fpident import io

SUITE_BUDGET_S = 15 * 60

_TITLES = {
    1: "kernel-derivative correctness",
    2: "density-estimator correctness",
    3: "FP-residual plumbing",
    4: "constrained solver",
    5: "Nystrom exactness",
    6: "dynamics recovery (uncontrolled OU)",
    7: "controlled recovery (controlled OU)",
    8: "non-identifiability regression",
    9: "CVaR metric",
    10: "determinism",
}
_RESULTS = {}


def pytest_sessionstart(session):
    session.config._fp_t0 = time.perf_counter()


@pytest.fixture
def acceptance():
    """``acceptance(n, ok, detail)`` records one criterion line and asserts it."""

    def record(n, ok, detail):
        prev = _RESULTS.get(n)
        ok = bool(ok) and (prev is None or prev[0])
        detail = detail if prev is None else f"{prev[1]}; {detail}"
        _RESULTS[n] = (ok, detail)
        assert ok, f"criterion {n} ({_TITLES[n]}): {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    t0 = getattr(config, "_fp_t0", None)
    if not _RESULTS and t0 is None:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_TITLES):
        if n in _RESULTS:
            ok, detail = _RESULTS[n]
            tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {_TITLES[n]}: {detail}")
        else:
            tr.write_line(f"[----] {n:2d} {_TITLES[n]}: not run in this session")
    if t0 is not None:
        el = time.perf_counter() - t0
        tr.write_line(f"[{'PASS' if el < SUITE_BUDGET_S else 'FAIL'}] 10 suite runtime: "
                      f"{el:.0f} s (budget {SUITE_BUDGET_S} s)")


def _run(tmp_path_factory, name, cfg=None):
    out = tmp_path_factory.mktemp(name)
    cfg = ex.default_config(name) if cfg is None else cfg
    t = time.perf_counter()
    summary = ex.reproduce(cfg, out)
    return SimpleNamespace(out=out, cfg=cfg, summary=summary, wall=time.perf_counter() - t,
                           timings=io.read_json(out / "timings.json"),
                           report=io.read_json(out / "fit/report.json"))


@pytest.fixture(scope="session")
def ou_run(tmp_path_factory):
    """Full full-scale ``reproduce ou``."""
    return _run(tmp_path_factory, "ou")


@pytest.fixture(scope="session")
def cou_run(tmp_path_factory):
    """Full full-scale ``reproduce controlled-ou``."""
    return _run(tmp_path_factory, "controlled-ou")


def reduced_config(name, seed=0):
    """A few-second version of each reproduction config (same code paths)."""
    cfg = ex.default_config(name)
    cfg["seed"] = seed
    d = cfg["data"]
    d["Q"] = 60
    d["M"] = 21
    if "M_val" in d:
        d.update(Q_val=20, M_val=min(d["M_val"], 10))
    if "grid" in cfg["density"]:
        cfg["density"]["grid"] = {"nu": [0.3, 1.0], "mu": [3.0, 6.0]}
    fpc = cfg["fp"]
    if "grid" in fpc:
        fpc["grid"] = {"gammak": [0.3], "lambda": [1e-3, 1e-2]}
    for key in ("train", "val", "select_train"):
        s = fpc.get(key)
        if not s:
            continue
        if s["kind"] in ("uniform",):
            s["n_times"], s["n_positions"] = 5, 8
        elif s["kind"] == "lattice":
            s["n_times"], s["n_positions"] = 3, 16
        elif s["kind"] == "path_states":
            s["n"], s["start"] = (60, 0) if key == "train" else (30, 60)
        elif s["kind"] == "aux_paths":
            s["n_pairs"], s["n_paths"] = 20, 2
    if cfg.get("controls"):
        c = cfg["controls"]
        c["K"] = 3
        if c.get("validation_K"):
            c["validation_K"] = 2
        if "K" in c["heldout"]:
            c["heldout"]["K"] = 2
    cfg["simulate"] = {"Q": 40, "substeps": 4}
    return copy.deepcopy(cfg)
