"""JSON system descriptions.

Keys carry their unit as a suffix. Frequencies are cyclic and accepted as
``_ghz``/``_mhz``/``_khz``/``_hz``; temperatures as ``_mk``/``_k``; times as
``_us``/``_ns``/``_s``; rates as ``_per_s``. Example::

    {
      "qubit": {"omega_q_ghz": 6.65, "alpha_mhz": 340, "t1_us": 30,
                "gamma_res_per_s": 2.0e4},
      "modes": [
        {"index_n": 1, "omega_ghz": 8.01, "g_mhz": 127, "chi_mhz": 7.0,
         "q_couplers": [1.0e6], "n_bar": 0.02},
        {"index_n": 3, "omega_ghz": 12.8, "g_mhz": 160.6,
         "chi_convention": "printed", "tau_us": 4}
      ],
      "drives": [{"attenuation": 0.1, "source_temperature_mk": 300,
                  "target_mode": 1}]
    }

A mode gives either ``chi_*`` (measured override) or ``chi_convention``.
Loss is given by ``q_couplers`` (+ optional ``q_int``, null meaning
lossless) or by ``tau_us`` alone.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .model import (
    TWO_PI,
    CavityMode,
    NoiseDrive,
    QubitParams,
    SystemModel,
    dispersive_shift,
)

FREQ_UNITS = {"ghz": 1e9, "mhz": 1e6, "khz": 1e3, "hz": 1.0}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
TEMP_UNITS = {"k": 1.0, "mk": 1e-3}


def _lookup(block: Mapping[str, Any], name: str, units: Mapping[str, float], where: str, default=None):
    hits = [(u, block[f"{name}_{u}"]) for u in units if f"{name}_{u}" in block]
    if len(hits) > 1:
        raise ConfigError(f"{where}: '{name}' given in more than one unit")
    if not hits:
        if default is ConfigError:
            keys = ", ".join(f"{name}_{u}" for u in units)
            raise ConfigError(f"{where}: missing required field (one of {keys})")
        return default
    unit, value = hits[0]
    if value is None:
        return math.inf
    try:
        return float(value) * units[unit]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{name}_{unit}: expected a number, got {value!r}") from None


def _freq(block, name, where, default=ConfigError):
    v = _lookup(block, name, FREQ_UNITS, where, default)
    return v if v is None else TWO_PI * v


def _number(block, key, where, default=ConfigError):
    if key not in block:
        if default is ConfigError:
            raise ConfigError(f"{where}: missing required field '{key}'")
        return default
    value = block[key]
    if value is None:
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}") from None


def qubit_from_dict(block: Mapping[str, Any]) -> QubitParams:
    where = "qubit"
    try:
        return QubitParams(
            omega_q=_freq(block, "omega_q", where),
            alpha=_freq(block, "alpha", where),
            gamma_line=_freq(block, "gamma_line", where, 0.0),
            t1=_lookup(block, "t1", TIME_UNITS, where, math.inf),
            gamma_res=_number(block, "gamma_res_per_s", where, 0.0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def mode_from_dict(block: Mapping[str, Any], qubit: QubitParams, position: int) -> CavityMode:
    where = f"modes[{position}]"
    if "index_n" not in block:
        raise ConfigError(f"{where}: missing required field 'index_n'")
    omega = _freq(block, "omega", where)
    g = _freq(block, "g", where, 0.0)
    chi = _freq(block, "chi", where, None)
    convention = block.get("chi_convention")
    if chi is None:
        if convention is None:
            raise ConfigError(f"{where}: give a measured chi_* value or a chi_convention")
        try:
            chi = dispersive_shift(g, omega - qubit.omega_q, qubit.alpha, convention)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        source = convention
    else:
        if convention is not None:
            raise ConfigError(f"{where}: chi given both as value and as convention")
        source = "measured"
    tau = _lookup(block, "tau", TIME_UNITS, where, None)
    if tau is not None:
        if "q_couplers" in block:
            raise ConfigError(f"{where}: give either tau or q_couplers, not both")
        q_couplers = (omega * tau,)
        q_int = math.inf
    else:
        raw = block.get("q_couplers")
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{where}: q_couplers must be a non-empty list (or give tau_us)")
        try:
            q_couplers = tuple(math.inf if q is None else float(q) for q in raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.q_couplers: entries must be numbers") from None
        q_int = _number(block, "q_int", where, math.inf)
    try:
        return CavityMode(
            index_n=int(block["index_n"]),
            omega_n=omega,
            g_n=g,
            chi_n=chi,
            q_couplers=q_couplers,
            q_int=q_int,
            n_bar=_number(block, "n_bar", where, 0.0),
            chi_source=source,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def drive_from_dict(block: Mapping[str, Any], position: int) -> NoiseDrive:
    where = f"drives[{position}]"
    try:
        return NoiseDrive(
            attenuation_A=_number(block, "attenuation", where),
            source_temperature=_lookup(block, "source_temperature", TEMP_UNITS, where, ConfigError),
            target_mode=int(_number(block, "target_mode", where)),
            port=int(_number(block, "port", where, 0)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def system_from_dict(doc: Mapping[str, Any]) -> SystemModel:
    if "qubit" not in doc:
        raise ConfigError("system: missing 'qubit' block")
    if not isinstance(doc.get("modes"), list) or not doc["modes"]:
        raise ConfigError("system: 'modes' must be a non-empty list")
    qubit = qubit_from_dict(doc["qubit"])
    modes = [mode_from_dict(m, qubit, i) for i, m in enumerate(doc["modes"])]
    drives = [drive_from_dict(d, i) for i, d in enumerate(doc.get("drives", []))]
    try:
        return SystemModel(qubit, tuple(modes), tuple(drives))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"system: {exc}") from None


def load_system(path: str | Path) -> SystemModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return system_from_dict(doc)


def system_to_dict(system: SystemModel) -> dict:
    """Inverse of ``system_from_dict`` (chi always written as measured)."""
    q = system.qubit
    return {
        "qubit": {
            "omega_q_ghz": q.omega_q / TWO_PI / 1e9,
            "alpha_mhz": q.alpha / TWO_PI / 1e6,
            "gamma_line_khz": q.gamma_line / TWO_PI / 1e3,
            "t1_us": None if math.isinf(q.t1) else q.t1 / 1e-6,
            "gamma_res_per_s": q.gamma_res,
        },
        "modes": [
            {
                "index_n": m.index_n,
                "omega_ghz": m.omega_n / TWO_PI / 1e9,
                "g_mhz": m.g_n / TWO_PI / 1e6,
                "chi_mhz": m.chi_n / TWO_PI / 1e6,
                "q_couplers": list(m.q_couplers),
                "q_int": None if math.isinf(m.q_int) else m.q_int,
                "n_bar": m.n_bar,
            }
            for m in system.modes
        ],
        "drives": [
            {
                "attenuation": d.attenuation_A,
                "source_temperature_mk": d.source_temperature / 1e-3,
                "target_mode": d.target_mode,
                "port": d.port,
            }
            for d in system.drives
        ],
    }
