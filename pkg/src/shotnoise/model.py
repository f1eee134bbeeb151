"""System description and closed-form dephasing predictors.

All frequencies and rates are angular (rad/s) internally. Conversion from
cyclic units happens at the configuration boundary (see ``config``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.constants import hbar, k as k_B

from .errors import CalibrationError, PoleError

TWO_PI = 2.0 * math.pi

CONVENTIONS = ("printed", "alternate")


@dataclass(frozen=True)
class QubitParams:
    omega_q: float
    alpha: float
    gamma_line: float = 0.0
    t1: float = math.inf
    gamma_res: float = 0.0

    def __post_init__(self):
        if not self.omega_q > 0:
            raise ValueError(f"omega_q must be > 0, got {self.omega_q}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.t1 > 0:
            raise ValueError(f"t1 must be > 0, got {self.t1}")
        if self.gamma_res < 0:
            raise ValueError(f"gamma_res must be >= 0, got {self.gamma_res}")
        if self.gamma_line < 0:
            raise ValueError(f"gamma_line must be >= 0, got {self.gamma_line}")


@dataclass(frozen=True)
class CavityMode:
    """One TE10n mode coupled to the qubit.

    ``q_int`` may be ``math.inf`` (no internal loss). ``chi_source`` records
    where ``chi_n`` came from: ``"measured"`` or one of ``CONVENTIONS``.
    """

    index_n: int
    omega_n: float
    g_n: float
    chi_n: float
    q_couplers: tuple[float, ...] = ()
    q_int: float = math.inf
    n_bar: float = 0.0
    chi_source: str = "measured"

    def __post_init__(self):
        object.__setattr__(self, "q_couplers", tuple(float(q) for q in self.q_couplers))
        if int(self.index_n) != self.index_n or self.index_n < 1:
            raise ValueError(f"index_n must be an integer >= 1, got {self.index_n}")
        if not self.omega_n > 0:
            raise ValueError(f"omega_n must be > 0, got {self.omega_n}")
        if any(not q > 0 for q in self.q_couplers) or not self.q_int > 0:
            raise ValueError("quality factors must be > 0")
        if self.n_bar < 0:
            raise ValueError(f"n_bar must be >= 0, got {self.n_bar}")
        if self.chi_source not in CONVENTIONS + ("measured",):
            raise ValueError(f"unknown chi_source {self.chi_source!r}")
        if not self.kappa > 0:
            raise ValueError("mode has no loss channel (kappa = 0)")

    @property
    def q_total(self) -> float:
        return total_q(self.q_couplers, self.q_int).q_total

    @property
    def kappa(self) -> float:
        return self.omega_n / self.q_total

    @property
    def tau(self) -> float:
        return 1.0 / self.kappa


@dataclass(frozen=True)
class NoiseDrive:
    """Broadband noise injected through coupler ``port`` of ``target_mode``."""

    attenuation_A: float
    source_temperature: float
    target_mode: int
    port: int = 0

    def __post_init__(self):
        if not 0.0 <= self.attenuation_A <= 1.0:
            raise ValueError(f"attenuation_A must be in [0, 1], got {self.attenuation_A}")
        if self.source_temperature < 0:
            raise ValueError("source_temperature must be >= 0")


@dataclass(frozen=True)
class SystemModel:
    qubit: QubitParams
    modes: tuple[CavityMode, ...]
    drives: tuple[NoiseDrive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "drives", tuple(self.drives))
        if not self.modes:
            raise ValueError("SystemModel needs at least one cavity mode")
        indices = [m.index_n for m in self.modes]
        if len(set(indices)) != len(indices):
            raise ValueError(f"duplicate mode indices: {indices}")
        for d in self.drives:
            mode = self.mode(d.target_mode)
            if not 0 <= d.port < len(mode.q_couplers):
                raise ValueError(
                    f"drive targets port {d.port} of mode {d.target_mode}, "
                    f"which has {len(mode.q_couplers)} coupler(s)"
                )
        for m in self.modes:
            if m.chi_source in CONVENTIONS:
                expected = dispersive_shift(
                    m.g_n, m.omega_n - self.qubit.omega_q, self.qubit.alpha, m.chi_source
                )
                if not math.isclose(expected, m.chi_n, rel_tol=1e-9, abs_tol=1e-12):
                    raise ValueError(
                        f"mode {m.index_n}: chi_n={m.chi_n} inconsistent with "
                        f"{m.chi_source} convention ({expected})"
                    )

    def mode(self, index_n: int) -> CavityMode:
        for m in self.modes:
            if m.index_n == index_n:
                return m
        raise KeyError(f"no mode with index {index_n}")

    def injected_n_bar(self, index_n: int) -> float:
        mode = self.mode(index_n)
        total = 0.0
        for d in self.drives:
            if d.target_mode == index_n:
                total += injected_photons(d, mode.q_total, mode.q_couplers[d.port], mode.omega_n)
        return total

    def effective_n_bar(self, index_n: int) -> float:
        """Residual occupancy of the mode plus everything injected by drives."""
        return self.mode(index_n).n_bar + self.injected_n_bar(index_n)

    def replace_mode(self, index_n: int, **changes) -> "SystemModel":
        from dataclasses import replace

        modes = tuple(replace(m, **changes) if m.index_n == index_n else m for m in self.modes)
        return replace(self, modes=modes)


# --- dispersive physics -----------------------------------------------------


def dispersive_shift(
    g: float, delta: float, alpha: float, convention: str = "printed", pole_tol: float = 1e-9
) -> float:
    """Per-photon ac-Stark shift (rad/s).

    ``printed``:   g^2 alpha / (delta (delta + alpha))
    ``alternate``: 2 g^2 alpha / (delta (delta - alpha))
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    scale = max(abs(delta), abs(alpha), 1.0)
    second = delta + alpha if convention == "printed" else delta - alpha
    if abs(delta) <= pole_tol * scale or abs(second) <= pole_tol * scale:
        raise PoleError(
            f"dispersive denominator vanishes (delta={delta:.6g}, alpha={alpha:.6g}, "
            f"convention={convention}); dispersive approximation invalid"
        )
    if convention == "printed":
        return g * g * alpha / (delta * second)
    return 2.0 * g * g * alpha / (delta * second)


def coupling_scaling(
    g_ref: float, omega_ref: float, omega_n: float, parity: str = "odd", even_factor: float = 0.0
) -> float:
    if not omega_ref > 0:
        raise ValueError("omega_ref must be > 0")
    if g_ref < 0:
        raise ValueError("g_ref must be >= 0")
    if not 0.0 <= even_factor <= 1.0:
        raise ValueError("even_factor must be in [0, 1]")
    if parity not in ("odd", "even"):
        raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
    g = g_ref * math.sqrt(omega_n / omega_ref)
    return g if parity == "odd" else even_factor * g


def mode_spectrum(f1: float, f3: float, n_max: int) -> np.ndarray:
    """TE10n frequencies from two calibration points, f_n^2 = X + n^2 Y.

    Units follow the inputs (Hz in, Hz out).
    """
    if not (f1 > 0 and f3 > f1):
        raise CalibrationError(f"need f3 > f1 > 0 for a waveguide fit, got f1={f1}, f3={f3}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    y = (f3 * f3 - f1 * f1) / 8.0
    x = f1 * f1 - y
    n = np.arange(1, n_max + 1, dtype=float)
    out = np.sqrt(x + n * n * y)
    out[0] = f1
    if n_max >= 3:
        out[2] = f3
    return out


def te10n_modes(
    qubit: QubitParams,
    f1: float,
    f3: float,
    g1: float,
    n_max: int,
    q_couplers: Sequence[Sequence[float]] | None = None,
    q_int: float = math.inf,
    convention: str = "printed",
    even_factor: float = 0.0,
    odd_only: bool = True,
) -> list[CavityMode]:
    """Build a ladder of TE10n modes with sqrt(omega) coupling scaling.

    ``f1``/``f3`` are cyclic (Hz); ``g1`` is angular. ``q_couplers[i]`` is
    the coupler list of the i-th returned mode (default one port at Q=1e6).
    """
    freqs = mode_spectrum(f1, f3, n_max)
    modes = []
    for n, f in enumerate(freqs, start=1):
        parity = "odd" if n % 2 else "even"
        if odd_only and parity == "even":
            continue
        omega = TWO_PI * f
        g = coupling_scaling(g1, TWO_PI * f1, omega, parity, even_factor)
        chi = dispersive_shift(g, omega - qubit.omega_q, qubit.alpha, convention)
        qc = (1e6,) if q_couplers is None else tuple(q_couplers[len(modes)])
        modes.append(CavityMode(n, omega, g, chi, qc, q_int, 0.0, convention))
    return modes


# --- occupancies and loss ------------------------------------------------------


def bose_einstein(omega, temperature):
    """Mean thermal occupancy 1/(exp(hbar omega / k T) - 1); exactly 0 at T = 0."""
    omega = np.asarray(omega, dtype=float)
    temperature = np.asarray(temperature, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega must be > 0")
    if np.any(temperature < 0):
        raise ValueError("temperature must be >= 0")
    with np.errstate(divide="ignore", over="ignore"):
        x = np.where(temperature > 0, hbar * omega / (k_B * np.where(temperature > 0, temperature, 1.0)), np.inf)
        out = np.where(np.isfinite(x), 1.0 / np.expm1(x), 0.0)
    return float(out) if out.ndim == 0 else out


def injected_photons(drive: NoiseDrive, q_total: float, q_c: float, omega: float) -> float:
    """Mean photon number created by a noise source: A * P_BE(T) * Q / Q_c."""
    if not (q_total > 0 and q_c > 0):
        raise ValueError("quality factors must be > 0")
    if drive.attenuation_A == 0.0:
        return 0.0
    return drive.attenuation_A * bose_einstein(omega, drive.source_temperature) * q_total / q_c


class QFactors(NamedTuple):
    q_total: float
    kappa: float | None
    tau: float | None


def total_q(q_couplers: Iterable[float], q_int: float = math.inf, omega: float | None = None) -> QFactors:
    inv = sum(1.0 / q for q in q_couplers) + 1.0 / q_int
    q = math.inf if inv == 0 else 1.0 / inv
    if omega is None:
        return QFactors(q, None, None)
    kappa = omega / q
    return QFactors(q, kappa, math.inf if kappa == 0 else 1.0 / kappa)


# --- dephasing ------------------------------------------------------------------


def dephasing_rate(N, n_bar, kappa):
    """Rate of leaving photon number N: kappa[(n+1) N + n (N+1)]."""
    return kappa * ((n_bar + 1.0) * N + n_bar * (N + 1.0))


def multimode_dephasing(modes: Iterable[tuple[float, float]]) -> float:
    return math.fsum(n_bar * kappa for n_bar, kappa in modes)


def predict_t2(t1: float, gamma_phi: float, gamma_res: float = 0.0) -> float:
    rate = 0.5 / t1 + gamma_phi + gamma_res
    return math.inf if rate == 0 else 1.0 / rate


@dataclass
class SweepRow:
    temperature: float
    n_bar: dict[int, float]
    gamma_phi_mode: dict[int, float]
    gamma_phi: float
    t2: float

    @property
    def t_phi(self) -> float:
        return math.inf if self.gamma_phi == 0 else 1.0 / self.gamma_phi


def temperature_sweep(system: SystemModel, temperatures: Sequence[float]) -> list[SweepRow]:
    temps = [float(t) for t in temperatures]
    if any(t < 0 for t in temps):
        raise ValueError("temperatures must be >= 0")
    if any(b < a for a, b in zip(temps, temps[1:])):
        raise ValueError("temperatures must be sorted")
    rows = []
    for T in temps:
        nbar = {m.index_n: bose_einstein(m.omega_n, T) for m in system.modes}
        per_mode = {m.index_n: nbar[m.index_n] * m.kappa for m in system.modes}
        gphi = multimode_dephasing((nbar[m.index_n], m.kappa) for m in system.modes)
        t2 = predict_t2(system.qubit.t1, gphi, system.qubit.gamma_res)
        rows.append(SweepRow(T, nbar, per_mode, gphi, t2))
    return rows
