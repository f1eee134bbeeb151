"""Scenario documents and the tasks behind each CLI subcommand.

A scenario is one JSON document::

    {
      "name": "fig2b",
      "seed": 1,
      "system": {...}            # config.system_from_dict format
      "systems": {"low_q": {...}, ...}   # alternative: several named systems
      "predict":  {...},         # blocks read by the matching task
      "simulate": {...},
      "sweep":    {...},
      "fit":      {...},
      "expect":  [{"quantity": "t2_us", "value": 26, "rel_tol": 0.1}],
      "compare": [{"quantity": "t2_us", "reference": 7.7}]
    }

Each task writes CSV artifacts and returns a flat dict of named quantities.
``expect`` entries (``value``/``rel_tol``, ``min`` or ``max``) are asserted
and decide the exit status; ``compare`` entries are only reported.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import io
from .analysis import (
    FitResult,
    estimate_populations,
    fit_decaying_sine,
    fit_exponential,
    fit_ramsey_reequilibration,
    thermal_probs,
)
from .config import system_from_dict
from .errors import ConfigError, ShotNoiseError
from .model import TWO_PI, SystemModel, temperature_sweep
from .montecarlo import mc_sequence
from .quantum import FringeData, echo_sequence, ramsey_sequence, run_sequence

PRESETS = ("fig1d", "fig2a", "fig2b", "fig2c", "fig2d", "fig3", "fig4")
THREADS_ENV = "SHOTNOISE_THREADS"


@dataclass
class Scenario:
    doc: dict
    base_dir: Path = Path(".")
    seed: int | None = None

    @property
    def name(self) -> str:
        return str(self.doc.get("name", "scenario"))

    @property
    def hash(self) -> str:
        return io.scenario_hash({**self.doc, "seed": self.seed})

    def block(self, task: str) -> dict:
        if task not in self.doc:
            raise ConfigError(f"scenario '{self.name}' has no '{task}' block")
        blk = self.doc[task]
        if not isinstance(blk, dict):
            raise ConfigError(f"scenario '{self.name}': '{task}' must be an object")
        return blk

    def systems(self) -> dict[str, SystemModel]:
        if "systems" in self.doc:
            raw = self.doc["systems"]
            if not isinstance(raw, dict) or not raw:
                raise ConfigError("'systems' must be a non-empty object")
            return {k: self._system(v, f"systems.{k}") for k, v in raw.items()}
        if "system" in self.doc:
            return {"system": self._system(self.doc["system"], "system")}
        if "system_file" in self.doc:
            path = self.base_dir / self.doc["system_file"]
            if not path.exists():
                raise ConfigError(f"system_file {path} does not exist")
            return {"system": self._system(json.loads(path.read_text()), str(path))}
        raise ConfigError("scenario needs 'system', 'systems' or 'system_file'")

    def system(self) -> SystemModel:
        systems = self.systems()
        if len(systems) != 1:
            raise ConfigError("this task takes a single 'system'")
        return next(iter(systems.values()))

    def _system(self, doc, where) -> SystemModel:
        try:
            return system_from_dict(doc)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError(f"scenario '{self.name}' runs a stochastic task and needs a seed")
        return self.seed


def load_scenario(path: str | Path | None = None, preset: str | None = None, seed: int | None = None) -> Scenario:
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of --scenario or --preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        text = resources.files("shotnoise.presets").joinpath(f"{preset}.json").read_text()
        where, base = f"preset {preset}", Path(".")
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"scenario file {path} does not exist")
        text, where, base = path.read_text(), str(path), path.parent
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: top level must be an object")
    if seed is None and doc.get("seed") is not None:
        seed = int(doc["seed"])
    return Scenario(doc, base, seed)


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


# --- unit helpers ----------------------------------------------------------------------

_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
_FREQ = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


def _get(blk: dict, name: str, units: dict, default=None):
    hits = [(u, blk[f"{name}_{u}"]) for u in units if f"{name}_{u}" in blk]
    if len(hits) > 1:
        raise ConfigError(f"'{name}' given in more than one unit")
    if not hits:
        return default
    u, v = hits[0]
    try:
        return float(v) * units[u]
    except (TypeError, ValueError):
        raise ConfigError(f"{name}_{u}: expected a number, got {v!r}") from None


# --- simulation of one fringe ------------------------------------------------------------


@dataclass
class FringeRun:
    data: FringeData
    fit: FitResult | None
    predicted_rate: float
    detuning: float
    quantities: dict = field(default_factory=dict)


def predicted_rate(system: SystemModel, mode_index: int, select_n: int | None) -> float:
    """Coherence decay rate of sector ``select_n`` (mean occupancy for None)."""
    mode = system.mode(mode_index)
    nb = system.effective_n_bar(mode_index)
    N = nb if select_n is None else select_n
    q = system.qubit
    return 0.5 / q.t1 + q.gamma_res + mode.kappa * ((nb + 1) * N + nb * (N + 1))


def simulate_fringe(system: SystemModel, blk: dict, seed: int | None, threads: int = 1) -> FringeRun:
    mode_index = int(blk.get("mode_index", 1))
    kind = blk.get("sequence", "ramsey")
    select = blk.get("select_n", 0)
    envelope = blk.get("envelope", "instantaneous")
    sigma = _get(blk, "sigma", _TIME, 100e-9)
    engine = blk.get("engine", "density")
    fit_kind = blk.get("fit", "decaying_sine" if kind == "ramsey" else "exponential")
    background = blk.get("background", "none")
    if kind not in ("ramsey", "echo"):
        raise ConfigError(f"simulate.sequence must be ramsey or echo, got {kind!r}")
    if engine not in ("density", "montecarlo"):
        raise ConfigError(f"simulate.engine must be density or montecarlo, got {engine!r}")
    if background not in ("none", "phase_average"):
        raise ConfigError(f"simulate.background must be none or phase_average, got {background!r}")

    rate = predicted_rate(system, mode_index, select)
    dl = blk.get("delays", {})
    start = _get(dl, "start", _TIME, 0.0)
    stop = _get(dl, "stop", _TIME, None)
    if stop is None:
        stop = float(dl.get("window_rates", 4.0)) / rate if rate > 0 else 100e-6
    num = int(dl.get("num", 121))
    if num < 8 or stop <= start:
        raise ConfigError("delays: need num >= 8 and stop > start")
    delays = np.linspace(start, stop, num)
    detuning = _get(blk, "detuning", _FREQ, None)
    if detuning is None:
        cycles = float(blk.get("detuning_cycles", 8.0)) if kind == "ramsey" else 0.0
        detuning = cycles / (stop - start)
    detuning *= TWO_PI

    build = ramsey_sequence if kind == "ramsey" else echo_sequence
    kw = dict(selective_final=bool(blk.get("selective_final", True)), envelope=envelope, sigma=sigma, detuning=detuning)
    if kind == "echo":
        kw["selective_echo"] = bool(blk.get("selective_echo", False))
    seq = build(select, **kw)

    def run(s):
        if engine == "density":
            return run_sequence(system, s, delays, mode_index)
        n_traj = int(blk.get("n_traj", 20000))
        if seed is None:
            raise ConfigError("the montecarlo engine needs a seed")
        return mc_sequence(system, s, delays, n_traj, seed, mode_index, threads)

    if background == "phase_average":
        axis = seq.steps[-1].pulse.axis
        a, b = run(seq), run(seq.with_final_axis(axis + math.pi))
        err = None if a.stderr is None else 0.5 * np.hypot(a.stderr, b.stderr)
        data = FringeData(delays, 0.5 * (a.signal - b.signal), err, {**a.meta, "background": "phase_average"})
    else:
        data = run(seq)

    weights = None
    if data.stderr is not None and np.all(data.stderr > 0):
        weights = 1.0 / data.stderr
    fit = None
    if fit_kind == "decaying_sine":
        fit = fit_decaying_sine(delays, data.signal, weights)
    elif fit_kind == "exponential":
        fit = fit_exponential(delays, data.signal, weights)
    elif fit_kind == "reequilibration":
        fit = fit_ramsey_reequilibration(delays, data.signal, system, seq, mode_index, weights)
    elif fit_kind != "none":
        raise ConfigError(f"unknown fit {fit_kind!r}")

    mode = system.mode(mode_index)
    q = {
        "predicted_rate_per_s": rate,
        "predicted_t2_us": 1e6 / rate if rate > 0 else math.inf,
        "photon_rate_per_s": system.effective_n_bar(mode_index) * mode.kappa,
        "kappa_per_s": mode.kappa,
        "n_bar": system.effective_n_bar(mode_index),
        "contrast_min": float(np.min(data.signal)),
        "contrast_max": float(np.max(data.signal)),
    }
    if fit is not None:
        key = "t2" if "t2" in fit.params else "tau"
        t2 = fit.params[key]
        q["t2_us"] = t2 * 1e6
        q["rate_per_s"] = 1.0 / t2 if t2 > 0 else math.nan
        q["fit_converged"] = float(fit.converged)
        if "frequency" in fit.params:
            q["frequency_mhz"] = fit.params["frequency"] / 1e6
            q["amplitude"] = fit.params["amplitude"]
        for k in ("bump_rate", "bump_rate_fit"):
            if k in fit.diagnostics:
                q[f"{k}_per_s"] = float(fit.diagnostics[k])
    return FringeRun(data, fit, rate, detuning, q)


# --- tasks -------------------------------------------------------------------------------


@dataclass
class TaskResult:
    quantities: dict[str, float]
    files: list[Path]
    table: list[str]
    failures: list[str] = field(default_factory=list)  # make the command exit nonzero
    warnings: list[str] = field(default_factory=list)  # recorded only


def _write_summary(out: Path, scen: Scenario, quantities: dict) -> Path:
    rows = sorted(quantities.items())
    return io.write_csv(out / "summary.csv", "table", ("quantity", "value"), rows, scen.hash, scen.seed)


def cmd_predict(scen: Scenario, out: Path, threads: int = 1) -> TaskResult:
    blk = scen.block("predict")
    temps_mk = blk.get("temperatures_mk")
    if not isinstance(temps_mk, list) or not temps_mk:
        raise ConfigError("predict.temperatures_mk must be a non-empty list")
    temps = sorted(float(t) * 1e-3 for t in temps_mk)
    quantities: dict[str, float] = {}
    rows, table = [], []
    header = None
    for cname, system in scen.systems().items():
        idx = [m.index_n for m in system.modes]
        if header is None:
            header = (
                ["config", "temperature_mk"]
                + [f"n_bar_{n}" for n in idx]
                + [f"gamma_phi_{n}_per_s" for n in idx]
                + ["gamma_phi_per_s", "t_phi_us", "t2_us"]
            )
        low = math.inf
        for r in temperature_sweep(system, temps):
            tmk = round(r.temperature * 1e3, 9)
            rows.append(
                [cname, tmk]
                + [r.n_bar[n] for n in idx]
                + [r.gamma_phi_mode[n] for n in idx]
                + [r.gamma_phi, r.t_phi * 1e6, r.t2 * 1e6]
            )
            quantities[f"gamma_phi_per_s[{cname},{tmk:g}mK]"] = r.gamma_phi
            quantities[f"t_phi_us[{cname},{tmk:g}mK]"] = r.t_phi * 1e6
            if tmk <= 80 + 1e-9:
                low = min(low, r.t_phi * 1e6)
            table.append(f"{cname:>8} {tmk:8.1f} mK  gamma_phi={r.gamma_phi:12.6g} /s  T_phi={r.t_phi*1e6:12.6g} us")
        quantities[f"min_t_phi_us[{cname},T<=80mK]"] = low
    f = io.write_csv(out / "predict.csv", "table", header, rows, scen.hash, scen.seed)
    return TaskResult(quantities, [f, _write_summary(out, scen, quantities)], table)


def cmd_simulate(scen: Scenario, out: Path, threads: int = 1) -> TaskResult:
    blk = scen.block("simulate")
    system = scen.system()
    seed = scen.require_seed() if blk.get("engine") == "montecarlo" else scen.seed
    run = simulate_fringe(system, blk, seed, threads)
    files = [io.write_fringe(out / "fringe.csv", run.data, scen.hash, scen.seed, [f"detuning_rad_s={run.detuning!r}"])]
    table = [f"{k:>24} = {v:.6g}" for k, v in sorted(run.quantities.items())]
    if run.fit is not None:
        files.append(io.write_fits(out / "fit.csv", [run.fit], [scen.name], scen.hash, scen.seed))
        (out / "fit.json").write_text(run.fit.to_json() + "\n")
        files.append(out / "fit.json")
    files.append(_write_summary(out, scen, run.quantities))
    failures = []
    if run.fit is not None and not run.fit.converged:
        failures.append(f"fit did not converge ({', '.join(run.fit.flags) or 'no flags'})")
    return TaskResult(run.quantities, files, table, failures)


_SWEEP_VARS = ("n_bar", "tau_us", "q", "kappa_per_s")


def _sweep_system(system: SystemModel, mode_index: int, variable: str, value: float) -> SystemModel:
    mode = system.mode(mode_index)
    if variable == "n_bar":
        return system.replace_mode(mode_index, n_bar=value)
    if variable == "q":
        q_total = value
    elif variable == "tau_us":
        q_total = mode.omega_n * value * 1e-6
    else:
        q_total = mode.omega_n / value
    return system.replace_mode(mode_index, q_couplers=(q_total,), q_int=math.inf)


def cmd_sweep(scen: Scenario, out: Path, threads: int = 1) -> TaskResult:
    blk = scen.block("sweep")
    system = scen.system()
    variable = blk.get("variable")
    if variable not in _SWEEP_VARS:
        raise ConfigError(f"sweep.variable must be one of {_SWEEP_VARS}, got {variable!r}")
    values = blk.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values must be a non-empty list")
    values = [float(v) for v in values]
    runs = blk.get("runs", [{}])
    base = {k: v for k, v in blk.items() if k not in ("variable", "values", "runs")}
    mode_index = int(base.get("mode_index", 1))
    stochastic = base.get("engine") == "montecarlo" or any(r.get("engine") == "montecarlo" for r in runs)
    seed = scen.require_seed() if stochastic else (scen.seed or 0)

    jobs = []
    for r_idx, r in enumerate(runs):
        spec = {**base, **r}
        label = spec.pop("label", f"{spec.get('sequence', 'ramsey')}_N{spec.get('select_n', 0)}")
        for v_idx, v in enumerate(values):
            jobs.append((len(jobs), label, v, spec))

    def work(job):
        i, label, v, spec = job
        try:
            sys_v = _sweep_system(system, mode_index, variable, v)
            res = simulate_fringe(sys_v, spec, point_seed(seed, i), 1)
            return res, None
        except (ShotNoiseError, ValueError, np.linalg.LinAlgError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    rows, table, warnings = [], [], []
    quantities: dict[str, float] = {}
    per_label: dict[str, list[tuple[float, float, float]]] = {}
    for (i, label, v, spec), (res, err) in zip(jobs, results):
        if res is None:
            rows.append([label, v, math.nan, math.nan, math.nan, 0, err])
            warnings.append(f"{label} {variable}={v:g}: {err}")
            continue
        q = res.quantities
        ok = bool(q.get("fit_converged", 0.0))
        rows.append([label, v, q.get("rate_per_s", math.nan), q.get("t2_us", math.nan), res.predicted_rate, int(ok), ""])
        table.append(f"{label:>12} {variable}={v:<10g} rate={q.get('rate_per_s', math.nan):12.6g} /s  T2={q.get('t2_us', math.nan):10.5g} us")
        if ok:
            per_label.setdefault(label, []).append((v, q["rate_per_s"], q["kappa_per_s"]))
            quantities[f"t2_us[{label},{v:g}]"] = q["t2_us"]
        else:
            warnings.append(f"{label} {variable}={v:g}: fit did not converge")
    files = [
        io.write_csv(
            out / "sweep.csv",
            "table",
            ("run", variable, "rate_per_s", "t2_us", "predicted_rate_per_s", "converged", "error"),
            rows,
            scen.hash,
            scen.seed,
        )
    ]
    slope_rows = []
    for label, pts in per_label.items():
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        t2 = 1e6 / y
        order = np.argsort(x)
        quantities[f"t2_monotonic_increasing[{label}]"] = float(np.all(np.diff(t2[order]) > 0))
        if variable == "n_bar" and len(pts) >= 2:
            slope, intercept = np.polyfit(x, y, 1)
            kappa = pts[0][2]
            quantities[f"slope_per_s[{label}]"] = float(slope)
            quantities[f"slope_over_kappa[{label}]"] = float(slope / kappa)
            slope_rows.append([label, slope, intercept, kappa, slope / kappa])
            table.append(f"{label:>12} slope={slope:.6g} /s = {slope / kappa:.4f} kappa")
    if slope_rows:
        files.append(
            io.write_csv(
                out / "slopes.csv",
                "table",
                ("run", "slope_per_s", "intercept_per_s", "kappa_per_s", "slope_over_kappa"),
                slope_rows,
                scen.hash,
                scen.seed,
            )
        )
    files.append(_write_summary(out, scen, quantities))
    return TaskResult(quantities, files, table, [], warnings)


def synthetic_populations(blk: dict, seed: int):
    powers = np.asarray(blk["powers"], dtype=float)
    levels = int(blk.get("levels", 8))
    nb = float(blk.get("n_floor", 0.0)) + float(blk["scale_power"]) * powers
    rng = np.random.default_rng(seed)
    clean = float(blk["scale_voltage"]) * thermal_probs(nb, levels)
    noise = float(blk.get("noise", 0.05))
    return powers, clean * (1 + noise * rng.standard_normal(clean.shape))


def cmd_fit(scen: Scenario | None, out: Path, threads: int = 1, inputs=(), model: str | None = None) -> TaskResult:
    blk = scen.block("fit") if scen is not None else {}
    model = model or blk.get("model", "decaying_sine")
    sh = scen.hash if scen is not None else io.scenario_hash({"inputs": [str(p) for p in inputs], "model": model})
    seed = scen.seed if scen is not None else None
    if model == "populations":
        return _fit_populations(scen, blk, out)
    paths = [Path(p) for p in inputs]
    base = scen.base_dir if scen is not None else Path(".")
    paths += [base / p for p in blk.get("inputs", [])]
    if not paths:
        raise ConfigError("fit: no input files")
    fitter: Callable = {"decaying_sine": fit_decaying_sine, "exponential": fit_exponential}.get(model)
    if fitter is None:
        raise ConfigError(f"fit.model must be decaying_sine, exponential or populations, got {model!r}")

    def work(p):
        d = io.read_fringe(p)
        w = 1.0 / d.stderr if d.stderr is not None and np.all(d.stderr > 0) else None
        return fitter(d.delays, d.signal, w)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, paths))
    else:
        results = [work(p) for p in paths]
    labels = [p.name for p in paths]
    files = [io.write_fits(out / "fits.csv", results, labels, sh, seed)]
    table, failures, quantities = [], [], {}
    key = "t2" if model == "decaying_sine" else "tau"
    for lab, r in zip(labels, results):
        table.append(f"{lab:>32} converged={int(r.converged)} {key}={r.params[key]:.6g} s")
        quantities[f"{key}_us[{lab}]"] = r.params[key] * 1e6
        if not r.converged:
            failures.append(f"{lab}: fit did not converge")
    quantities["n_files"] = float(len(results))
    quantities["n_converged"] = float(sum(r.converged for r in results))
    table.append(f"{len(results)} file(s) fitted with {model}, {int(quantities['n_converged'])} converged")
    if scen is not None:
        files.append(_write_summary(out, scen, quantities))
    return TaskResult(quantities, files, table, failures)


def _fit_populations(scen: Scenario | None, blk: dict, out: Path) -> TaskResult:
    if scen is None or "synthetic" not in blk:
        raise ConfigError("populations fit needs a scenario with a fit.synthetic block")
    syn = blk["synthetic"]
    powers, amps = synthetic_populations(syn, scen.require_seed())
    est = estimate_populations(amps, powers, rel_noise=float(syn.get("noise", 0.05)))
    levels = amps.shape[1]
    rows = [[p, nb] + list(pr) for p, nb, pr in zip(powers, est.n_bar, est.probs)]
    header = ["power", "n_bar_fit"] + [f"P{n}" for n in range(levels)]
    files = [io.write_csv(out / "populations.csv", "table", header, rows, scen.hash, scen.seed)]
    true_nb = float(syn.get("n_floor", 0.0)) + float(syn["scale_power"]) * powers
    fitted, true = thermal_probs(est.n_bar, levels), thermal_probs(true_nb, levels)
    mask = true >= 0.05
    q = {
        "scale_voltage": est.scale_voltage,
        "scale_power": est.scale_power,
        "n_floor": est.n_floor,
        "scale_voltage_ratio": est.scale_voltage / float(syn["scale_voltage"]),
        "scale_power_ratio": est.scale_power / float(syn["scale_power"]),
        "chi2_red": est.chi2_red,
        "thermal_ok": float(est.thermal_ok),
        "max_rel_dev_thermal": float(np.max(np.abs(fitted / true - 1)[mask])),
    }
    files.append(_write_summary(out, scen, q))
    table = [f"{k:>22} = {v:.6g}" for k, v in sorted(q.items())]
    warnings = [] if est.thermal_ok else ["populations flagged non-thermal by chi-square"]
    return TaskResult(q, files, table, [], warnings)


# --- expectations ----------------------------------------------------------------------------


def check_expectations(scen: Scenario, quantities: dict) -> tuple[list[str], list[str]]:
    """Return (failure messages, report lines) for the scenario's expect/compare entries."""
    failures, report = [], []
    for e in scen.doc.get("expect", []):
        name = e.get("quantity")
        if name not in quantities:
            failures.append(f"expected quantity {name!r} was not produced")
            continue
        v = quantities[name]
        ok = math.isfinite(v)
        desc = []
        if "value" in e:
            tol = float(e.get("rel_tol", 0.0))
            ok &= abs(v - e["value"]) <= tol * abs(e["value"])
            desc.append(f"{e['value']:g} +- {tol:g} rel")
        if "min" in e:
            ok &= v >= e["min"]
            desc.append(f">= {e['min']:g}")
        if "max" in e:
            ok &= v <= e["max"]
            desc.append(f"<= {e['max']:g}")
        line = f"{'PASS' if ok else 'FAIL'} {name} = {v:.6g} (expected {' and '.join(desc)})"
        report.append(line)
        if not ok:
            failures.append(line)
    for c in scen.doc.get("compare", []):
        name = c.get("quantity")
        v = quantities.get(name, math.nan)
        ref = c.get("reference")
        report.append(f"REPORT {name} = {v:.6g} (reference {ref}; not asserted)")
    return failures, report


TASKS = {"predict": cmd_predict, "simulate": cmd_simulate, "sweep": cmd_sweep, "fit": cmd_fit}
