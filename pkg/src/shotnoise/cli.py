"""Command-line entry point: ``shotnoise {predict,simulate,sweep,fit,selftest}``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ShotNoiseError
from .scenario import PRESETS, THREADS_ENV, TASKS, check_expectations, cmd_fit, load_scenario, thread_count


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shotnoise", description="Photon shot-noise dephasing simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        g = sp.add_mutually_exclusive_group(required=scenario_required)
        g.add_argument("--scenario", type=Path, help="scenario JSON file")
        g.add_argument("--preset", choices=PRESETS, help="shipped scenario")
        sp.add_argument("--seed", type=int, help="overrides the scenario seed")
        sp.add_argument("--out", type=Path, help="output directory (default out/<scenario name>)")
        sp.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")

    for name, text in (
        ("predict", "per-temperature coherence budget"),
        ("simulate", "simulate and fit one fringe"),
        ("sweep", "fringe rate versus a swept parameter"),
    ):
        common(sub.add_parser(name, help=text))
    fp = sub.add_parser("fit", help="fit fringe CSV files")
    common(fp, scenario_required=False)
    fp.add_argument("inputs", nargs="*", type=Path, help="fringe CSV files")
    fp.add_argument("--model", choices=("decaying_sine", "exponential", "populations"))
    sub.add_parser("selftest", help="quick oracle checks")
    return p


def selftest() -> list[tuple[str, bool, str]]:
    from .analysis import fit_decaying_sine
    from .model import TWO_PI, multimode_dephasing, total_q
    from .photon import PhotonDistribution, evolve_master, steady_state, thermal_distribution

    out = []
    kappa = 1.0e4
    p = evolve_master(PhotonDistribution.fock(5, 30), 0.0, kappa, 50e-6).probs
    x = math.exp(-kappa * 50e-6)
    binom = np.array([math.comb(5, k) * x**k * (1 - x) ** (5 - k) if k <= 5 else 0.0 for k in range(31)])
    err = np.abs(p - binom).sum()
    out.append(("fock-5 decay vs binomial", err < 1e-8, f"L1={err:.2e}"))
    ss = steady_state(0.4, kappa, 60)
    err = np.abs(ss.probs - thermal_distribution(0.4, 60).probs).sum()
    out.append(("steady state vs geometric", err < 1e-10, f"L1={err:.2e}"))
    tau = total_q([1e6], omega=TWO_PI * 8.01e9).tau
    out.append(("Q=1e6 at 8.01 GHz -> tau", abs(tau - 19.87e-6) < 0.01e-6, f"tau={tau*1e6:.4f} us"))
    out.append(("zero occupancy -> no dephasing", multimode_dephasing([(0.0, 1e6)]) == 0.0, ""))
    t = np.linspace(0, 60e-6, 241)
    y = np.exp(-t / 26e-6) * np.sin(TWO_PI * 0.5e6 * t) + 0.5
    r = fit_decaying_sine(t, y)
    err = abs(r.params["t2"] / 26e-6 - 1)
    out.append(("decaying-sine round trip", r.converged and err < 1e-6, f"rel={err:.1e}"))
    return out


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "selftest":
        results = selftest()
        for name, ok, info in results:
            print(f"{'PASS' if ok else 'FAIL'} {name} {info}".rstrip())
        return 0 if all(ok for _, ok, _ in results) else 1
    try:
        threads = thread_count(args.threads)
        scen = None
        if args.scenario is not None or args.preset is not None:
            scen = load_scenario(args.scenario, args.preset, args.seed)
        out = args.out or Path("out") / (scen.name if scen is not None else "fit")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "fit":
            res = cmd_fit(scen, out, threads, args.inputs, args.model)
        else:
            res = TASKS[args.command](scen, out, threads)
        failures = list(res.failures)
        report = []
        if scen is not None:
            f, report = check_expectations(scen, res.quantities)
            failures += f
    except ShotNoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for line in res.table:
        print(line)
    for line in report:
        print(line)
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for f in failures:
        print(f"failure: {f}", file=sys.stderr)
    for path in res.files:
        print(f"wrote {path}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
