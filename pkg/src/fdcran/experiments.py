"""Monte-Carlo sweeps over the benchmark implementations.

A scenario is a base configuration, one swept parameter (transmit power,
thermal noise or distortion level, all in dB units matching the usual plot
axes), a set of implementation modes and a seeded realization count.  Every
mode sees the identical channel draw at a given realization index, so the
comparisons are paired; rows are computed by a bounded worker pool and
gathered deterministically.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .algorithm import GiaOptions, gia_optimize, initialize_point
from .channels import draw_realization
from .config import NetworkConfig, db_to_linear, dbm_to_mw
from .rates import RateReport
from .scenes import (Scene, scene_fd_blockdiag, scene_fd_joint,
                     scene_fd_nonopt, scene_fd_zero_untrusted, scene_hd_dl,
                     scene_hd_ul, scene_report)

MODES = ("fd_joint", "fd_blockdiag_qdl", "fd_nonopt_qdl",
         "fd_zero_untrusted", "hd_tdd")
SWEEP_PARAMS = ("p_budget", "noise", "kappa", "none")

RESULT_COLUMNS = ["scenario_id", "mode", "sweep_param", "sweep_value",
                  "realization", "wssr", "sum_sec_ul", "sum_sec_dl",
                  "iterations", "status", "solve_time"]

RATE_REPORT_COLUMNS = ["wssr", "r_ul", "r_dl", "sec_ul", "sec_dl",
                       "leak_ul_worst", "leak_dl_worst", "f_dl", "f_ul"]


@dataclass
class Scenario:
    config: NetworkConfig = field(default_factory=NetworkConfig.defaults)
    sweep_param: str = "none"
    sweep_values: tuple = (0.0,)     # dBm for p_budget, dBm for noise, dB for kappa
    modes: tuple = ("fd_joint",)
    n_realizations: int = 50
    master_seed: int = 1
    scenario_id: str = "scenario"
    gia: GiaOptions = field(default_factory=GiaOptions)

    def __post_init__(self):
        if self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.sweep_param!r}")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ValueError(f"unknown modes: {sorted(unknown)}")
        if not self.sweep_values:
            raise ValueError("sweep grid must be non-empty")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        self.sweep_values = tuple(float(v) for v in self.sweep_values)
        self.modes = tuple(self.modes)

    @classmethod
    def from_file(cls, path) -> "Scenario":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        cfg_data = data.pop("config", {})
        if isinstance(cfg_data, str):
            config = NetworkConfig.from_file(cfg_data)
        else:
            config = NetworkConfig.from_mapping(cfg_data)
        sweep = data.pop("sweep", {})
        return cls(config=config,
                   sweep_param=sweep.get("param", "none"),
                   sweep_values=tuple(sweep.get("values", (0.0,))),
                   modes=tuple(data.pop("modes", ("fd_joint",))),
                   n_realizations=int(data.pop("n_realizations", 50)),
                   master_seed=int(data.pop("master_seed", 1)),
                   scenario_id=str(data.pop("id", "scenario")))


@dataclass
class ResultRow:
    scenario_id: str
    mode: str
    sweep_param: str
    sweep_value: float
    realization: int
    wssr: float
    sum_sec_ul: float
    sum_sec_dl: float
    iterations: int
    status: str
    solve_time: float

    def as_list(self):
        return [getattr(self, c) for c in RESULT_COLUMNS]


def apply_sweep(config: NetworkConfig, param: str, value: float) -> NetworkConfig:
    """Return the config with the swept parameter applied (value in dB units)."""
    if param == "none":
        return config
    if param == "p_budget":
        p = dbm_to_mw(value)
        return config.replace(p_dl_max=p, p_ul_max=p)
    if param == "noise":
        n = dbm_to_mw(value)
        return config.replace(noise_ul=n, noise_dl=n, noise_eve=n)
    if param == "kappa":
        k = db_to_linear(value)
        return config.replace(kappa=k, beta=k)
    raise ValueError(f"unknown sweep parameter {param!r}")


def apply_mode(config: NetworkConfig, mode: str, real) -> list:
    """Problem structure(s) for one benchmark implementation.

    Returns a list of scenes; the half-duplex baseline decouples into an
    UL-only and a DL-only phase, every other mode is a single scene.
    """
    if mode == "fd_joint":
        return [scene_fd_joint(config, real)]
    if mode == "fd_blockdiag_qdl":
        return [scene_fd_blockdiag(config, real)]
    if mode == "fd_nonopt_qdl":
        return [scene_fd_nonopt(config, real, frozen_qdl(config, real))]
    if mode == "fd_zero_untrusted":
        return [scene_fd_zero_untrusted(config, real)]
    if mode == "hd_tdd":
        return [scene_hd_ul(config, real), scene_hd_dl(config, real)]
    raise ValueError(f"unknown mode {mode!r}")


def frozen_qdl(config: NetworkConfig, real) -> np.ndarray:
    """Largest scaled identity that the DL fronthaul capacities accept at the
    initialization point, capped so the power budget keeps room for signals."""
    from . import rates
    scene = scene_fd_joint(config, real)
    v = initialize_point(config, real, scene=scene)
    n = config.total_tx_ru
    power_cap = min(0.5 * config.p_dl_max[r] / int(config.tx_antennas_ru[r])
                    for r in range(config.n_ru))
    best = None
    for cand in power_cap * np.logspace(0, -24, 49):
        v.q_dl = cand * np.eye(n, dtype=complex)
        loads = [rates.fronthaul_dl(r, v, config) for r in range(config.n_ru)]
        if all(ld <= c for ld, c in zip(loads, config.c_dl)):
            best = cand
            break
    if best is None:
        raise ValueError("no scaled-identity DL quantization fits the fronthaul")
    return best * np.eye(n, dtype=complex)


def _limit_worker_threads():
    try:
        import threadpoolctl
        global _tp_controller
        _tp_controller = threadpoolctl.threadpool_limits(limits=1)
    except Exception:
        pass


def run_one(task: dict) -> ResultRow:
    """One (mode, sweep value, realization) work item; never raises."""
    base = ResultRow(scenario_id=task["scenario_id"], mode=task["mode"],
                     sweep_param=task["sweep_param"],
                     sweep_value=task["sweep_value"],
                     realization=task["realization"],
                     wssr=float("nan"), sum_sec_ul=float("nan"),
                     sum_sec_dl=float("nan"), iterations=0,
                     status="error", solve_time=float("nan"))
    try:
        config = apply_sweep(task["config"], task["sweep_param"], task["sweep_value"])
        real = draw_realization(config, task["master_seed"], task["realization"])
        scenes = apply_mode(config, task["mode"], real)
        gia = task.get("gia") or GiaOptions()
        wssr = sec_ul = sec_dl = 0.0
        iters = 0
        solve_time = 0.0
        statuses = []
        traces = []
        for scene in scenes:
            v, trace = gia_optimize(config, real, gia, scene=scene)
            rep = scene_report(scene, v)
            share = scene.time_share
            wssr += share * rep.wssr
            sec_ul += share * sum(rep.sec_ul.values())
            sec_dl += share * sum(rep.sec_dl.values())
            iters += trace.outer_iterations
            solve_time += sum(r.solve_time for r in trace.records)
            statuses.append("converged" if trace.converged else "max_outer")
            traces.append(trace)
        base.wssr, base.sum_sec_ul, base.sum_sec_dl = wssr, sec_ul, sec_dl
        base.iterations = iters
        base.solve_time = solve_time
        base.status = "converged" if all(s == "converged" for s in statuses) \
            else "max_outer"
        if task.get("trace_dir"):
            os.makedirs(task["trace_dir"], exist_ok=True)
            for i, trace in enumerate(traces):
                name = (f'{task["mode"]}_{task["sweep_param"]}'
                        f'{task["sweep_value"]:g}_r{task["realization"]}_{i}.csv')
                trace.to_csv(os.path.join(task["trace_dir"], name))
    except Exception as exc:  # recorded, never aborts the sweep
        base.status = f"error:{type(exc).__name__}"
    return base


def run_scenario(scenario: Scenario, max_workers: int = None,
                 trace_dir: str = None) -> list:
    """All (mode, sweep value, realization) rows, deterministically ordered."""
    tasks = []
    for mode in scenario.modes:
        for value in scenario.sweep_values:
            for idx in range(scenario.n_realizations):
                tasks.append({
                    "scenario_id": scenario.scenario_id, "mode": mode,
                    "sweep_param": scenario.sweep_param, "sweep_value": value,
                    "realization": idx, "config": scenario.config,
                    "master_seed": scenario.master_seed, "gia": scenario.gia,
                    "trace_dir": trace_dir,
                })
    workers = max_workers or min(8, os.cpu_count() or 1)
    if workers <= 1 or len(tasks) == 1:
        rows = [run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_limit_worker_threads) as pool:
            rows = list(pool.map(run_one, tasks, chunksize=1))
    rows.sort(key=lambda r: (r.mode, r.sweep_value, r.realization))
    return rows


def summarize(rows: list) -> list:
    """Per-(mode, sweep value) sample means and 95% normal half-widths."""
    if not rows:
        raise ValueError("cannot summarize an empty table")
    groups = {}
    for row in rows:
        groups.setdefault((row.mode, row.sweep_value), []).append(row)
    out = []
    for (mode, value), members in sorted(groups.items()):
        wssr = np.array([m.wssr for m in members if np.isfinite(m.wssr)])
        entry = {"mode": mode, "sweep_value": value, "n": len(wssr)}
        for name, vals in [
                ("wssr", wssr),
                ("sum_sec_ul", np.array([m.sum_sec_ul for m in members
                                         if np.isfinite(m.sum_sec_ul)])),
                ("sum_sec_dl", np.array([m.sum_sec_dl for m in members
                                         if np.isfinite(m.sum_sec_dl)]))]:
            if vals.size == 0:
                entry[f"mean_{name}"], entry[f"hw95_{name}"] = float("nan"), float("nan")
            else:
                mean = float(np.mean(vals))
                hw = 0.0 if vals.size < 2 else \
                    1.96 * float(np.std(vals, ddof=1)) / math.sqrt(vals.size)
                entry[f"mean_{name}"], entry[f"hw95_{name}"] = mean, hw
        out.append(entry)
    return out


def emit(rows: list, path) -> None:
    """Write rows as CSV (full-precision, dot-decimal, stable column order)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row.as_list()])


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def parse_results(path) -> list:
    """Round-trip parse of an emitted CSV back into ResultRow objects."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ResultRow(
                scenario_id=rec["scenario_id"], mode=rec["mode"],
                sweep_param=rec["sweep_param"],
                sweep_value=float(rec["sweep_value"]),
                realization=int(rec["realization"]),
                wssr=float(rec["wssr"]), sum_sec_ul=float(rec["sum_sec_ul"]),
                sum_sec_dl=float(rec["sum_sec_dl"]),
                iterations=int(rec["iterations"]), status=rec["status"],
                solve_time=float(rec["solve_time"])))
    return rows


def rate_report_row(report: RateReport) -> list:
    """One flat CSV row for a rate report (vector fields joined with '/')."""
    def j(arr):
        return "/".join(repr(float(x)) for x in np.atleast_1d(arr).ravel())
    leak_ul = np.concatenate([report.leak_ul_ru.reshape(report.r_ul.size, -1),
                              report.leak_ul_eve.reshape(report.r_ul.size, -1)], axis=1)
    leak_dl = np.concatenate([report.leak_dl_ru.reshape(report.r_dl.size, -1),
                              report.leak_dl_eve.reshape(report.r_dl.size, -1)], axis=1)
    worst_ul = leak_ul.max(axis=1) if leak_ul.size else np.zeros(report.r_ul.size)
    worst_dl = leak_dl.max(axis=1) if leak_dl.size else np.zeros(report.r_dl.size)
    return [repr(report.wssr), j(report.r_ul), j(report.r_dl), j(report.sec_ul),
            j(report.sec_dl), j(worst_ul), j(worst_dl), j(report.f_dl),
            j(report.f_ul)]
