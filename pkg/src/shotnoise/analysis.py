"""Fits for fringe and decay curves, and population estimates from peak heights.

All fitters work on time normalised by the largest sample time, so they are
invariant under a rescaling t -> a*t. Failed fits come back with NaN
parameters and ``converged=False`` rather than with made-up numbers.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

SINE_PARAMS = ("amplitude", "t2", "frequency", "phase", "offset")
EXP_PARAMS = ("amplitude", "tau", "offset")


@dataclass
class FitResult:
    model: str
    params: dict[str, float]
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    flags: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.converged:
            for key in ("t2", "tau"):
                if key in self.params and not self.params[key] > 0:
                    raise ValueError(f"converged fit with non-positive {key}")
            if not math.isfinite(self.residual_norm):
                raise ValueError("converged fit with non-finite residual norm")

    @property
    def stderr(self) -> dict[str, float]:
        d = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return dict(zip(self.params, d))

    def __getitem__(self, key: str) -> float:
        return self.params[key]

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, np.generic):
                v = v.item()
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v

        doc = {
            "model": self.model,
            "converged": bool(self.converged),
            "params": {k: clean(float(v)) for k, v in self.params.items()},
            "stderr": {k: clean(float(v)) for k, v in self.stderr.items()},
            "covariance": [[clean(float(x)) for x in row] for row in self.covariance],
            "residual_norm": clean(float(self.residual_norm)),
            "flags": list(self.flags),
            "diagnostics": {k: clean(v) for k, v in self.diagnostics.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def csv_header(self) -> list[str]:
        cols = ["model", "converged", "residual_norm"]
        for k in self.params:
            cols += [k, f"{k}_err"]
        return cols + ["flags"]

    def csv_row(self) -> list[str]:
        err = self.stderr
        row = [self.model, str(int(self.converged)), repr(float(self.residual_norm))]
        for k, v in self.params.items():
            row += [repr(float(v)), repr(float(err[k]))]
        return row + [";".join(self.flags)]


def _failed(model, names, flags, **diag) -> FitResult:
    n = len(names)
    return FitResult(
        model,
        {k: math.nan for k in names},
        np.full((n, n), math.nan),
        math.nan,
        False,
        tuple(flags),
        diag,
    )


def _prepare(t, y, weights, min_points):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-D arrays of equal length")
    if t.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {t.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("t and y must be finite")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w < 0):
        raise ValueError("weights must be non-negative and match y")
    scale = float(np.max(np.abs(t)))
    if scale <= 0:
        raise ValueError("time axis spans zero")
    return t, y, w, scale


def _covariance(res, n, weighted_abs: bool):
    J = res.jac
    p = J.shape[1]
    dof = max(n - p, 1)
    s2 = 1.0 if weighted_abs else 2.0 * res.cost / dof
    try:
        return np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        return np.full((p, p), math.nan)


def _best(fun, starts, jac="2-point"):
    best = None
    for x0 in starts:
        try:
            r = optimize.least_squares(
                fun, x0, jac=jac, method="lm", x_scale="jac", ftol=1e-14, xtol=1e-14, gtol=1e-14
            )
        except (ValueError, np.linalg.LinAlgError, FloatingPointError):
            continue
        if not np.all(np.isfinite(r.x)):
            continue
        if best is None or r.cost < best.cost:
            best = r
    return best


# --- initial guesses -----------------------------------------------------------------


def dominant_frequency(t: np.ndarray, y: np.ndarray, oversample: int = 8) -> float:
    """Frequency of the largest nonzero peak of the detrended spectrum.

    Works for non-uniform sampling (direct sum over samples). Returns 0 when
    the data are flat.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    span = t.max() - t.min()
    if span <= 0:
        return 0.0
    z = y - np.polyval(np.polyfit(t, y, 1), t)
    if not np.any(np.abs(z) > 0):
        return 0.0
    dt = np.diff(t)
    if np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        n_fft = oversample * t.size
        power = np.abs(np.fft.rfft(z, n_fft)) ** 2
        freqs = np.fft.rfftfreq(n_fft, dt[0])
    else:
        f_nyq = 0.5 * (t.size - 1) / span
        m = oversample * t.size // 2
        freqs = np.arange(1, m + 1) * (f_nyq / m)
        power = np.abs(np.exp(-2j * np.pi * np.outer(freqs, t)) @ z) ** 2
    # skip the bins that a linear trend or slow envelope leak into
    keep = freqs >= 0.5 / span
    return float(freqs[keep][np.argmax(power[keep])])


def _envelope_rate(t, z, freq):
    """Decay rate from a log-linear fit to per-period peak magnitudes."""
    if freq <= 0:
        return 0.0
    period = 1.0 / freq
    edges = np.arange(t.min(), t.max() + period, period)
    tp, ap = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (t >= a) & (t < b)
        if m.sum() >= 2:
            k = np.argmax(np.abs(z[m]))
            tp.append(t[m][k])
            ap.append(abs(z[m][k]))
    tp, ap = np.array(tp), np.array(ap)
    ok = ap > 0
    if ok.sum() < 2:
        return 0.0
    slope = np.polyfit(tp[ok], np.log(ap[ok]), 1)[0]
    return max(-slope, 0.0)


# --- fitters -------------------------------------------------------------------------


def _sine(p, t):
    a, r, f, ph, c = p
    return a * np.exp(-r * t) * np.sin(2 * np.pi * f * t + ph) + c


def fit_decaying_sine(t, y, weights=None, background: np.ndarray | None = None) -> FitResult:
    """Fit ``A exp(-t/T2) sin(2 pi f t + phi) + C`` (+ ``b * background``).

    ``weights`` multiply the residuals (use 1/sigma). A supplied
    ``background`` curve, sampled at ``t``, adds one linear coefficient
    reported as ``background``.
    """
    t, y, w, scale = _prepare(t, y, weights, 8)
    x = t / scale
    names = SINE_PARAMS + (("background",) if background is not None else ())
    bg = None if background is None else np.asarray(background, dtype=float)
    if bg is not None and bg.shape != y.shape:
        raise ValueError("background must match y")

    def model(p):
        out = _sine(p[:5], x)
        return out + p[5] * bg if bg is not None else out

    def resid(p):
        return w * (model(p) - y)

    def jac(p):
        a, r, f, ph = p[:4]
        e = np.exp(-r * x)
        arg = 2 * np.pi * f * x + ph
        s_, c_ = np.sin(arg), np.cos(arg)
        cols = [e * s_, -a * x * e * s_, 2 * np.pi * a * x * e * c_, a * e * c_, np.ones_like(x)]
        if bg is not None:
            cols.append(bg)
        return w[:, None] * np.column_stack(cols)

    flags = []
    c0 = float(np.mean(y))
    f0 = dominant_frequency(x, y)
    z = y - c0
    r0 = _envelope_rate(x, z, f0)
    a0 = float(np.ptp(y)) / 2 or 1.0
    span = x.max() - x.min()
    starts = []
    for ph in (0.0, np.pi / 2, np.pi, 3 * np.pi / 2):
        for r in {r0, 1.0 / span}:
            p = [a0, r, f0, ph, c0]
            if bg is not None:
                p.append(0.0)
            starts.append(np.array(p))
    res = _best(resid, starts, jac)
    if res is None:
        return _failed("decaying_sine", names, flags + ["optimizer_failed"])
    p = res.x.copy()
    if p[0] < 0:
        p[0] = -p[0]
        p[3] += np.pi
    if p[2] < 0:  # sin(-x + ph) = sin(x + pi - ph)
        p[2] = -p[2]
        p[3] = np.pi - p[3]
    p[3] = (p[3] + np.pi) % (2 * np.pi) - np.pi
    if p[2] * span < 1.0:  # less than one full period on record
        flags.append("frequency_unidentifiable")
    cov_n = _covariance(res, t.size, weights is not None)
    rate = p[1] / scale
    converged = bool(res.success) and rate > 0
    if p[1] <= 0:
        flags.append("no_decay" if p[1] == 0 or abs(p[1]) < 1e-12 else "growing_envelope")
    t2 = 1.0 / rate if rate > 0 else math.inf
    # map normalised (A, r, f, phi, C[, b]) to (A, T2, f, phi, C[, b])
    D = np.eye(len(p))
    D[1, 1] = -scale / p[1] ** 2 if p[1] != 0 else math.nan
    D[2, 2] = 1.0 / scale
    cov = D @ cov_n @ D.T
    values = [p[0], t2, p[2] / scale, p[3], p[4]] + ([p[5]] if bg is not None else [])
    resid_final = resid(res.x)
    return FitResult(
        "decaying_sine",
        dict(zip(names, map(float, values))),
        cov,
        float(np.linalg.norm(resid_final)),
        converged,
        tuple(flags),
        {"nfev": int(res.nfev), "status": int(res.status), "rate": float(rate)},
    )


def fit_exponential(t, y, weights=None) -> FitResult:
    """Fit ``A exp(-t/tau) + C``."""
    t, y, w, scale = _prepare(t, y, weights, 4)
    x = t / scale
    flags = []
    if np.ptp(y) <= 1e-12 * max(np.abs(y).max(), 1e-300):
        flags.append("tau_unidentifiable")
        cov = np.full((3, 3), math.nan)
        return FitResult(
            "exponential",
            {"amplitude": 0.0, "tau": math.nan, "offset": float(np.mean(y))},
            cov,
            0.0,
            False,
            tuple(flags),
            {},
        )

    def resid(p):
        return w * (p[0] * np.exp(-p[1] * x) + p[2] - y)

    def jac(p):
        e = np.exp(-p[1] * x)
        return w[:, None] * np.column_stack([e, -p[0] * x * e, np.ones_like(x)])

    order = np.argsort(x)
    c0 = float(y[order][-1])
    a0 = float(y[order][0] - c0)
    starts = [np.array([a0, r, c0]) for r in (0.3, 1.0, 3.0, 10.0)]
    res = _best(resid, starts, jac)
    if res is None:
        return _failed("exponential", EXP_PARAMS, flags + ["optimizer_failed"])
    p = res.x
    rate = p[1] / scale
    if abs(p[1]) < 1e-6:
        flags.append("tau_unidentifiable")
    converged = bool(res.success) and rate > 0 and "tau_unidentifiable" not in flags
    cov_n = _covariance(res, t.size, weights is not None)
    D = np.diag([1.0, -scale / p[1] ** 2 if p[1] != 0 else math.nan, 1.0])
    tau = 1.0 / rate if rate > 0 else math.inf
    return FitResult(
        "exponential",
        {"amplitude": float(p[0]), "tau": float(tau), "offset": float(p[2])},
        D @ cov_n @ D.T,
        float(np.linalg.norm(resid(p))),
        converged,
        tuple(flags),
        {"nfev": int(res.nfev), "status": int(res.status), "rate": float(rate)},
    )


# --- composite fit with photon re-equilibration -------------------------------------------


def background_curve(simulate: Callable[[float], np.ndarray], axis: float) -> np.ndarray:
    """Non-oscillating part of a fringe: mean of final-pulse phases axis and axis+pi.

    ``simulate(axis)`` returns the fringe for a given final-pulse axis.
    """
    return 0.5 * (simulate(axis) + simulate(axis + math.pi))


def fringe_background(system, sequence, delays, mode_index: int = 1) -> np.ndarray:
    from .quantum import run_sequence

    axis = sequence.steps[-1].pulse.axis

    def sim(a):
        return run_sequence(system, sequence.with_final_axis(a), delays, mode_index).signal

    return background_curve(sim, axis)


def fit_ramsey_reequilibration(
    t,
    y,
    system,
    sequence,
    mode_index: int = 1,
    weights=None,
    fit_n_bar: bool = False,
    n_bar_bounds: tuple[float, float] | None = None,
) -> FitResult:
    """Decaying sine plus the re-equilibration signal predicted by the forward model.

    The forward model (``system`` with chi and kappa fixed) supplies the
    slow, non-oscillating component the conditioned photon distribution adds
    after a selective pulse. Its amplitude is fitted as a linear coefficient
    ``background``. With ``fit_n_bar`` the mode occupancy is optimised too,
    within ``n_bar_bounds`` (default: 0 to twice the model value plus one).

    ``diagnostics["bump_rate"]`` is kappa*(n_bar+1), the rate at which the
    addressed sector is refilled or emptied; ``bump_rate_fit`` is an
    exponential fit to the predicted component.
    """
    t = np.asarray(t, dtype=float)
    mode = system.mode(mode_index)

    def at(n_bar):
        sys_n = system.replace_mode(mode_index, n_bar=n_bar) if n_bar is not None else system
        return fringe_background(sys_n, sequence, t, mode_index)

    flags: list[str] = []
    if fit_n_bar:
        warnings.warn(
            "n_bar and fringe contrast are both free; they trade off against each other "
            "and the fit may be poorly identified",
            stacklevel=2,
        )
        flags.append("n_bar_contrast_correlated")

        def cost(nb):
            r = fit_decaying_sine(t, y, weights, background=_with(at(nb)))
            return r.residual_norm if r.converged else math.inf

        if n_bar_bounds is None:
            n_bar_bounds = (0.0, 2.0 * system.effective_n_bar(mode_index) + 1.0)
        opt = optimize.minimize_scalar(cost, bounds=n_bar_bounds, method="bounded", options={"xatol": 1e-4})
        n_bar = float(opt.x)
        bg = at(n_bar)
    else:
        n_bar = system.effective_n_bar(mode_index)
        bg = at(None)

    comp = _with(bg)
    if comp is None:
        res = fit_decaying_sine(t, y, weights)
        flags.append("no_reequilibration_component")
    else:
        res = fit_decaying_sine(t, y, weights, background=comp)
    diag = dict(res.diagnostics)
    diag["n_bar"] = n_bar
    diag["bump_rate"] = mode.kappa * (n_bar + 1)
    if comp is not None:
        bfit = fit_exponential(t, bg)
        diag["bump_rate_fit"] = 1.0 / bfit.params["tau"] if bfit.converged else math.nan
    return FitResult(
        "ramsey_reequilibration",
        res.params,
        res.covariance,
        res.residual_norm,
        res.converged,
        res.flags + tuple(flags),
        diag,
    )


def _with(bg):
    """Background shape, or None when it carries no time dependence."""
    bg = np.asarray(bg, dtype=float)
    if np.ptp(bg) <= 1e-9 * max(1.0, np.abs(bg).max()):
        return None
    return bg - bg[0]


# --- populations from number-split peaks -----------------------------------------------


@dataclass
class PopulationEstimate:
    probs: np.ndarray  # (points, levels)
    n_bar: np.ndarray  # per point
    scale_voltage: float
    scale_power: float
    n_floor: float
    chi2_red: float
    thermal_ok: bool


def thermal_probs(n_bar, levels: int) -> np.ndarray:
    n_bar = np.atleast_1d(np.asarray(n_bar, dtype=float))
    N = np.arange(levels)
    return (n_bar[:, None] ** N) / (n_bar[:, None] + 1.0) ** (N + 1)


def estimate_populations(
    peak_amplitudes,
    powers: Sequence[float] | None = None,
    scale_voltage: float | None = None,
    scale_power: float | None = None,
    n_floor: float | None = None,
    rel_noise: float = 0.05,
    chi2_threshold: float = 4.0,
) -> PopulationEstimate:
    """Turn per-sector peak heights into P(N) with a global thermal fit.

    ``peak_amplitudes`` has one row per noise setting (one column per photon
    number). Heights are probabilities times ``scale_voltage``; the mean
    occupancy of row k is ``n_floor + scale_power * powers[k]``. Parameters
    left as None are fitted. Without ``powers`` each row gets its own n_bar.
    Rows whose weighted reduced chi-square exceeds ``chi2_threshold``
    (``rel_noise`` relative errors) flag the data as non-thermal.
    """
    amps = np.atleast_2d(np.asarray(peak_amplitudes, dtype=float))
    if np.any(amps < 0) or not np.all(np.isfinite(amps)):
        raise ValueError("peak amplitudes must be finite and >= 0")
    rows, levels = amps.shape
    if powers is not None:
        powers = np.asarray(powers, dtype=float)
        if powers.shape != (rows,):
            raise ValueError("one power per amplitude row is required")

    # unknowns: [V], then either [S, floor] or per-row n_bar
    free_v = scale_voltage is None
    if powers is not None:
        free = [free_v, scale_power is None, n_floor is None]
    else:
        free = [free_v] + [True] * rows

    def unpack(x):
        it = iter(x)
        V = next(it) if free_v else scale_voltage
        if powers is not None:
            S = next(it) if free[1] else scale_power
            fl = next(it) if free[2] else n_floor
            nb = fl + S * powers
            return V, S, fl, nb
        return V, math.nan, math.nan, np.array([next(it) for _ in range(rows)])

    sigma_abs = 1e-3 * max(amps.max(), 1e-300)

    def resid(x):
        V, _, _, nb = unpack(x)
        model = V * thermal_probs(np.clip(nb, 0, None), levels)
        return ((model - amps) / (rel_noise * model + sigma_abs)).ravel()

    v0 = amps[:, 0].max() if amps[:, 0].max() > 0 else 1.0
    if powers is not None:
        nb_guess = amps[:, 1] / np.maximum(amps[:, 0], 1e-300) if levels > 1 else np.zeros(rows)
        A = np.vstack([powers, np.ones(rows)]).T
        s0, f0 = np.linalg.lstsq(A, nb_guess, rcond=None)[0]
        x0 = [v for v, f in zip([v0 * (1 + max(f0, 0)), max(s0, 1e-6), max(f0, 0.0)], free) if f]
        lb = [b for b, f in zip([0.0, 0.0, 0.0], free) if f]
    else:
        nb_guess = amps[:, 1] / np.maximum(amps[:, 0], 1e-300) if levels > 1 else np.zeros(rows)
        x0 = ([v0] if free_v else []) + list(np.clip(nb_guess, 0, 50))
        lb = [0.0] * len(x0)
    if x0:
        res = optimize.least_squares(resid, x0, bounds=(lb, np.inf), x_scale="jac")
        x = res.x
    else:
        x = np.array([])
    V, S, fl, nb = unpack(x)
    nb = np.clip(nb, 0, None)
    r = resid(x)
    dof = max(r.size - len(x), 1)
    chi2 = float(r @ r / dof)
    probs = amps / V if V > 0 else np.full_like(amps, math.nan)
    # measured heights can overshoot by the noise; keep each row a sub-distribution
    total = probs.sum(axis=1, keepdims=True)
    probs = np.where(total > 1.0, probs / np.where(total > 0, total, 1.0), probs)
    return PopulationEstimate(probs, nb, float(V), float(S), float(fl), chi2, chi2 <= chi2_threshold)
