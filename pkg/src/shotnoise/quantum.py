"""Qubit x truncated-cavity open-system simulation.

Basis index ``q * (n_max + 1) + N`` with q = 0 (g), 1 (e). In the frame of
the drive, the qubit line in photon sector N sits at

    delta_N = detuning - (N - frame_n) * chi

so a Ramsey fringe in sector N oscillates at ``delta_N``. Collapse channels:
photon loss kappa(n+1), photon gain kappa*n, qubit relaxation 1/T1 and an
extra pure dephasing that damps coherences at ``gamma_res``.

Because the Hamiltonian is diagonal in N and every channel shifts both
photon indices of a matrix element together, the generator splits into
independent blocks labelled by the photon-index offset N - M. Propagation
exponentiates those blocks separately.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg, sparse

from .errors import PropagationError, TruncationError
from .model import SystemModel
from .photon import (
    TAIL_TOL,
    PhotonDistribution,
    default_n_max,
    thermal_distribution,
    thermal_tail,
)

GAUSS_HALF_WIDTH = 6.0  # envelope truncated at +-6 sigma
GAUSS_STEPS = 4000
GAUSS_CUTOFF = 12.0  # |delta*sigma| beyond which a gaussian pulse is the identity


# --- pulses and sequences -------------------------------------------------------


@dataclass(frozen=True)
class PulseSpec:
    """Rotation by ``angle`` about the equatorial axis at phase ``axis``.

    ``select`` is None for an unconditional pulse or the photon number whose
    sector the pulse addresses. ``envelope`` is ``"instantaneous"`` or
    ``"gaussian"`` (width ``sigma`` in s).
    """

    angle: float
    axis: float = 0.0
    select: int | None = None
    envelope: str = "instantaneous"
    sigma: float = 100e-9

    def __post_init__(self):
        if self.envelope not in ("instantaneous", "gaussian"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian envelope needs sigma > 0")
        if self.select is not None and self.select < 0:
            raise ValueError("select must be >= 0")

    @classmethod
    def of(cls, kind, **kw) -> "PulseSpec":
        angles = {"pi_half": math.pi / 2, "pi": math.pi}
        angle = angles[kind] if isinstance(kind, str) else float(kind)
        return cls(angle, **kw)


@dataclass(frozen=True)
class Step:
    """Wait ``fixed + frac * tau``, then apply ``pulse``."""

    pulse: PulseSpec
    fixed: float = 0.0
    frac: float = 0.0

    def wait(self, tau: float) -> float:
        return self.fixed + self.frac * tau


@dataclass(frozen=True)
class SequenceSpec:
    """Pulse sequence parametrized by a scanned delay ``tau``.

    ``prep`` is ``None`` (steady state of the bath), ``("thermal", n_bar)``
    or ``("fock", N)``. ``frame_n`` defaults to the first selective pulse's
    target, else 0.
    """

    steps: tuple[Step, ...]
    prep: tuple | None = None
    detuning: float = 0.0
    frame_n: int | None = None
    readout_at_end: bool = True
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for s in self.steps:
            if s.fixed < 0 or s.frac < 0:
                raise ValueError("sequence delays must be >= 0")
        if self.prep is not None and self.prep[0] not in ("thermal", "fock"):
            raise ValueError(f"unknown prep {self.prep!r}")
        for s in self.steps:
            p = s.pulse
            if p.envelope == "gaussian" and p.select != self.frame:
                raise ValueError(
                    f"gaussian pulse targets sector {p.select} but the drive frame is sector "
                    f"{self.frame}; set frame_n to the target"
                )

    @property
    def frame(self) -> int:
        if self.frame_n is not None:
            return self.frame_n
        for s in self.steps:
            if s.pulse.select is not None:
                return s.pulse.select
        return 0

    def duration(self, tau: float) -> float:
        return sum(s.wait(tau) for s in self.steps)

    def pulse_times(self, tau: float) -> np.ndarray:
        return np.cumsum([s.wait(tau) for s in self.steps])

    def with_final_axis(self, axis: float) -> "SequenceSpec":
        last = self.steps[-1]
        steps = self.steps[:-1] + (replace(last, pulse=replace(last.pulse, axis=axis)),)
        return replace(self, steps=steps)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "prep": list(self.prep) if self.prep else None,
            "detuning_rad_s": self.detuning,
            "frame_n": self.frame,
            "steps": [
                {
                    "angle": s.pulse.angle,
                    "axis": s.pulse.axis,
                    "select": s.pulse.select,
                    "envelope": s.pulse.envelope,
                    "sigma_s": s.pulse.sigma,
                    "wait_fixed_s": s.fixed,
                    "wait_frac": s.frac,
                }
                for s in self.steps
            ],
        }


def ramsey_sequence(
    select_n: int | None = 0,
    *,
    selective_final: bool = True,
    envelope: str = "instantaneous",
    sigma: float = 100e-9,
    detuning: float = 0.0,
    frame_n: int | None = None,
    final_axis: float = 0.0,
    prep=None,
) -> SequenceSpec:
    first = PulseSpec(math.pi / 2, 0.0, select_n, envelope, sigma)
    last = PulseSpec(math.pi / 2, final_axis, select_n if selective_final else None, envelope, sigma)
    return SequenceSpec(
        (Step(first), Step(last, frac=1.0)), prep, detuning, frame_n, name="ramsey"
    )


def echo_sequence(
    select_n: int | None = 0,
    *,
    selective_final: bool = True,
    selective_echo: bool = False,
    envelope: str = "instantaneous",
    sigma: float = 100e-9,
    detuning: float = 0.0,
    frame_n: int | None = None,
    final_axis: float = math.pi,
    prep=None,
) -> SequenceSpec:
    """pi/2 - tau/2 - pi - tau/2 - pi/2; the last pulse about -x returns |e> ideally."""
    first = PulseSpec(math.pi / 2, 0.0, select_n, envelope, sigma)
    mid = PulseSpec(math.pi, 0.0, select_n if selective_echo else None, envelope, sigma)
    last = PulseSpec(math.pi / 2, final_axis, select_n if selective_final else None, envelope, sigma)
    return SequenceSpec(
        (Step(first), Step(mid, frac=0.5), Step(last, frac=0.5)), prep, detuning, frame_n, name="echo"
    )


def rotation(angle: float, axis: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * axis)], [-1j * s * np.exp(1j * axis), c]], dtype=complex
    )


def gaussian_pulse_unitaries(angle: float, axis: float, sigma: float, detunings) -> np.ndarray:
    """Sector unitaries (K, 2, 2) of a gaussian pulse, referred to its center.

    Integrates H = delta_N |e><e| + Omega(t)/2 (cos(axis) sx + sin(axis) sy)
    over +-6 sigma with exact 2x2 exponentials per step, then removes the
    free precession accumulated over the pulse length so the result acts as
    an instantaneous pulse at the center time.
    """
    detunings = np.asarray(detunings, dtype=float)
    K = detunings.size
    out = np.tile(np.eye(2, dtype=complex), (K, 1, 1))
    active = np.abs(detunings * sigma) <= GAUSS_CUTOFF
    if not active.any():
        return out
    d = detunings[active]
    T = 2 * GAUSS_HALF_WIDTH * sigma
    dt = T / GAUSS_STEPS
    tm = -T / 2 + (np.arange(GAUSS_STEPS) + 0.5) * dt
    env = np.exp(-0.5 * (tm / sigma) ** 2)
    omega = env * angle / (env.sum() * dt)
    U = np.tile(np.eye(2, dtype=complex), (d.size, 1, 1))
    ex, ey = math.cos(axis), math.sin(axis)
    for om in omega:
        nx, ny, nz = om / 2 * ex, om / 2 * ey, -d / 2
        norm = np.sqrt(nx * nx + ny * ny + nz * nz)
        c = np.cos(norm * dt)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(norm > 0, np.sin(norm * dt) / norm, dt)
        ph = np.exp(-0.5j * d * dt)
        step = np.empty((d.size, 2, 2), dtype=complex)
        step[:, 0, 0] = ph * (c - 1j * s * nz)
        step[:, 1, 1] = ph * (c + 1j * s * nz)
        step[:, 0, 1] = ph * (-1j * s * (nx - 1j * ny))
        step[:, 1, 0] = ph * (-1j * s * (nx + 1j * ny))
        U = step @ U
    undo = np.zeros((d.size, 2, 2), dtype=complex)
    undo[:, 0, 0] = 1.0
    undo[:, 1, 1] = np.exp(0.5j * d * T)
    out[active] = undo @ U @ undo
    return out


def pulse_unitaries(pulse: PulseSpec, detunings) -> np.ndarray:
    """Per-sector 2x2 unitaries for sectors N = 0..len(detunings)-1."""
    detunings = np.asarray(detunings, dtype=float)
    K = detunings.size
    if pulse.envelope == "instantaneous":
        R = rotation(pulse.angle, pulse.axis)
        out = np.tile(R, (K, 1, 1))
        if pulse.select is not None:
            mask = np.arange(K) != pulse.select
            out[mask] = np.eye(2)
        return out
    if pulse.select is None:
        raise ValueError("gaussian pulses need a target sector (select)")
    # the carrier is the drive itself, so sector detunings apply as given
    if K > 1:
        chi_sigma = abs(detunings[1] - detunings[0]) * pulse.sigma
        if chi_sigma < 3.0:
            warnings.warn(
                f"sigma*chi = {chi_sigma:.2f} < 3: gaussian pulse is poorly number-selective",
                RuntimeWarning,
                stacklevel=3,
            )
    return gaussian_pulse_unitaries(pulse.angle, pulse.axis, pulse.sigma, detunings)


# --- density states ---------------------------------------------------------------


@dataclass
class DensityState:
    matrix: np.ndarray
    n_max: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = 2 * (self.n_max + 1)
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix must be {d}x{d} for n_max={self.n_max}")

    @classmethod
    def product(cls, qubit: np.ndarray, photons: PhotonDistribution) -> "DensityState":
        return cls(np.kron(np.asarray(qubit, dtype=complex), np.diag(photons.probs)), photons.n_max)

    @classmethod
    def ground(cls, photons: PhotonDistribution) -> "DensityState":
        return cls.product(np.array([[1, 0], [0, 0]]), photons)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def blocks(self) -> np.ndarray:
        """View indexed [a, N, b, M]."""
        n = self.n_max + 1
        return self.matrix.reshape(2, n, 2, n)

    def p_excited(self) -> float:
        n = self.n_max + 1
        return float(np.real(np.trace(self.matrix[n:, n:])))

    def photon_distribution(self) -> np.ndarray:
        d = np.real(np.diag(self.matrix))
        n = self.n_max + 1
        return d[:n] + d[n:]

    def sector_excited(self) -> np.ndarray:
        n = self.n_max + 1
        return np.real(np.diag(self.matrix))[n:]

    def violations(self, psd: bool = True) -> list[str]:
        out = []
        m = self.matrix
        tr = np.trace(m)
        if abs(tr - 1.0) > 1e-9:
            out.append(f"trace {tr.real:.12f}")
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > 1e-10:
            out.append(f"hermiticity error {herm:.2e}")
        if psd:
            w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
            if w.min() < -1e-8:
                out.append(f"negative eigenvalue {w.min():.2e}")
        return out

    def check(self, delay=None):
        bad = self.violations()
        if bad:
            raise PropagationError("state invariant violated: " + "; ".join(bad), delay=delay)


# --- generator ---------------------------------------------------------------------


def _lindblad(L: sparse.spmatrix, dim: int) -> sparse.spmatrix:
    eye = sparse.identity(dim, format="csr")
    LdL = (L.conj().T @ L).tocsr()
    return sparse.kron(L, L.conj()) - 0.5 * sparse.kron(LdL, eye) - 0.5 * sparse.kron(eye, LdL.T)


@dataclass
class Liouvillian:
    n_max: int
    chi: float
    kappa: float
    n_bar: float
    t1: float
    gamma_res: float
    detuning: float = 0.0
    frame_n: int = 0
    _blocks: dict = field(default_factory=dict, init=False, repr=False)
    _super: sparse.csr_matrix | None = field(default=None, init=False, repr=False)

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    @property
    def sector_detunings(self) -> np.ndarray:
        N = np.arange(self.n_max + 1)
        return self.detuning - (N - self.frame_n) * self.chi

    def hamiltonian(self) -> np.ndarray:
        return np.diag(np.concatenate([np.zeros(self.n_max + 1), self.sector_detunings])).astype(complex)

    def collapse_ops(self) -> list[sparse.csr_matrix]:
        n = self.n_max + 1
        a = sparse.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, shape=(n, n))
        iq = sparse.identity(2)
        sm = sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        pe = sparse.csr_matrix(np.array([[0.0, 0.0], [0.0, 1.0]]))
        ops = []
        if self.kappa * (self.n_bar + 1) > 0:
            ops.append(math.sqrt(self.kappa * (self.n_bar + 1)) * sparse.kron(iq, a))
        if self.kappa * self.n_bar > 0:
            ops.append(math.sqrt(self.kappa * self.n_bar) * sparse.kron(iq, a.T))
        if self.t1 < math.inf:
            ops.append(math.sqrt(1.0 / self.t1) * sparse.kron(sm, sparse.identity(n)))
        if self.gamma_res > 0:
            ops.append(math.sqrt(2.0 * self.gamma_res) * sparse.kron(pe, sparse.identity(n)))
        return [op.tocsr() for op in ops]

    def superoperator(self) -> sparse.csr_matrix:
        """Generator acting on row-major vec(rho)."""
        if self._super is None:
            d = self.dim
            H = sparse.csr_matrix(self.hamiltonian())
            eye = sparse.identity(d, format="csr")
            L = -1j * (sparse.kron(H, eye) - sparse.kron(eye, H.T))
            for c in self.collapse_ops():
                L = L + _lindblad(c, d)
            self._super = L.tocsr()
        return self._super

    def _offset_index(self, k: int) -> list[np.ndarray]:
        """vec(rho) indices at photon offset k, split into (gg+ee), (eg), (ge)."""
        cache = self.__dict__.setdefault("_index_cache", {})
        if k not in cache:
            n = self.n_max + 1
            N = np.arange(n)
            M = N - k
            ok = (M >= 0) & (M < n)
            N, M = N[ok], M[ok]

            def at(a, b):
                return (a * n + N) * self.dim + (b * n + M)

            cache[k] = [np.concatenate([at(0, 0), at(1, 1)]), at(1, 0), at(0, 1)]
        return cache[k]

    def _block(self, k: int, part: int):
        key = (k, part)
        if key not in self._blocks:
            idx = self._offset_index(k)[part]
            G = self.superoperator()[idx][:, idx].toarray()
            w, V = linalg.eig(G)
            ok = False
            Vinv = None
            try:
                Vinv = linalg.inv(V)
                err = np.abs((V * w) @ Vinv - G).max() / max(np.abs(G).max(), 1.0)
                ok = err <= 1e-12 and np.linalg.cond(V) < 1e6
            except linalg.LinAlgError:
                pass
            # birth-death population blocks have exponentially graded
            # eigenvectors; those go through expm instead
            self._blocks[key] = (G, w, V, Vinv, ok)
        return self._blocks[key]

    def propagate(self, state: DensityState, t: float) -> DensityState:
        if t < 0:
            raise ValueError("propagation time must be >= 0")
        if state.n_max != self.n_max:
            raise ValueError("state and generator truncations differ")
        if t == 0:
            return DensityState(state.matrix.copy(), self.n_max)
        v = state.matrix.reshape(-1).copy()
        for k in range(-self.n_max, self.n_max + 1):
            for part, idx in enumerate(self._offset_index(k)):
                x = v[idx]
                if not np.any(x):
                    continue
                G, w, V, Vinv, ok = self._block(k, part)
                if ok:
                    v[idx] = V @ (np.exp(w * t) * (Vinv @ x))
                else:
                    v[idx] = linalg.expm(G * t) @ x
        return DensityState(v.reshape(self.dim, self.dim), self.n_max)


def _mode_n_max(system: SystemModel, mode_index: int, extra_n_bar: float = 0.0) -> int:
    return default_n_max(max(system.effective_n_bar(mode_index), extra_n_bar))


def build_liouvillian(
    system: SystemModel,
    mode_index: int = 1,
    n_max: int | None = None,
    detuning: float = 0.0,
    frame_n: int = 0,
) -> Liouvillian:
    mode = system.mode(mode_index)
    n_bar = system.effective_n_bar(mode_index)
    if n_max is None:
        n_max = default_n_max(n_bar)
    tail = thermal_tail(n_bar, n_max)
    if tail > TAIL_TOL:
        raise TruncationError(
            f"n_max={n_max} leaves thermal tail {tail:.2e} > {TAIL_TOL:g} for n_bar={n_bar}; "
            f"use n_max >= {default_n_max(n_bar)}"
        )
    return Liouvillian(
        n_max=n_max,
        chi=mode.chi_n,
        kappa=mode.kappa,
        n_bar=n_bar,
        t1=system.qubit.t1,
        gamma_res=system.qubit.gamma_res,
        detuning=detuning,
        frame_n=frame_n,
    )


def selective_pulse(state: DensityState, pulse: PulseSpec, detunings=None) -> DensityState:
    """Apply a (possibly number-selective) pulse to every photon sector.

    ``detunings`` (sector qubit detunings from the drive, rad/s) is needed
    for gaussian envelopes; see ``Liouvillian.sector_detunings``.
    """
    n = state.n_max + 1
    if pulse.envelope == "gaussian" and detunings is None:
        raise ValueError("gaussian pulses need sector detunings")
    if pulse.select is not None and pulse.select > state.n_max:
        raise ValueError(f"target sector {pulse.select} beyond truncation {state.n_max}")
    U = pulse_unitaries(pulse, np.zeros(n) if detunings is None else detunings)
    B = state.blocks()
    # rho'[a,N,b,M] = U_N[a,c] rho[c,N,d,M] conj(U_M[b,d])
    out = np.einsum("Nac,cNdM,Mbd->aNbM", U, B, U.conj(), optimize=True)
    return DensityState(out.reshape(state.dim, state.dim), state.n_max)


# --- sequences ---------------------------------------------------------------------


@dataclass
class FringeData:
    delays: np.ndarray
    signal: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.signal.shape:
                raise ValueError("stderr and signal differ in length")
        if self.delays.shape != self.signal.shape:
            raise ValueError("delays and signal differ in length")
        if np.any(np.diff(self.delays) <= 0):
            raise ValueError("delays must be increasing")


def prep_distribution(system: SystemModel, mode_index: int, prep, n_max: int) -> PhotonDistribution:
    if prep is None:
        return thermal_distribution(system.effective_n_bar(mode_index), n_max)
    kind, value = prep
    if kind == "thermal":
        return thermal_distribution(float(value), n_max)
    return PhotonDistribution.fock(int(value), n_max)


def sequence_n_max(system: SystemModel, mode_index: int, sequence: SequenceSpec) -> int:
    n_max = _mode_n_max(system, mode_index)
    if sequence.prep is not None:
        kind, value = sequence.prep
        if kind == "thermal":
            n_max = max(n_max, default_n_max(float(value)))
        else:
            n_max = max(n_max, int(value) + 20)
    for s in sequence.steps:
        if s.pulse.select is not None:
            n_max = max(n_max, s.pulse.select + 1)
    return n_max


def run_sequence(
    system: SystemModel,
    sequence: SequenceSpec,
    delays: Sequence[float],
    mode_index: int = 1,
    n_max: int | None = None,
    check: bool = True,
) -> FringeData:
    """Deterministic density-matrix simulation of ``sequence`` at each delay."""
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0):
        raise ValueError("delays must be >= 0")
    if n_max is None:
        n_max = sequence_n_max(system, mode_index, sequence)
    L = build_liouvillian(system, mode_index, n_max, sequence.detuning, sequence.frame)
    det = L.sector_detunings
    rho0 = DensityState.ground(prep_distribution(system, mode_index, sequence.prep, n_max))
    unitaries = [pulse_unitaries(s.pulse, det) for s in sequence.steps]

    def apply(state, U):
        B = state.blocks()
        out = np.einsum("Nac,cNdM,Mbd->aNbM", U, B, U.conj(), optimize=True)
        return DensityState(out.reshape(state.dim, state.dim), state.n_max)

    # steps before the first tau-dependent wait are common to every delay
    prefix = rho0
    first_var = len(sequence.steps)
    for i, s in enumerate(sequence.steps):
        if s.frac != 0:
            first_var = i
            break
        prefix = apply(L.propagate(prefix, s.fixed), unitaries[i])
    signal = np.empty(delays.size)
    for j, tau in enumerate(delays):
        rho = prefix
        for i in range(first_var, len(sequence.steps)):
            s = sequence.steps[i]
            rho = apply(L.propagate(rho, s.wait(tau)), unitaries[i])
        if check:
            rho.check(delay=tau)
        signal[j] = rho.p_excited()
    meta = {"engine": "density_matrix", "sequence": sequence.describe(), "mode_index": mode_index, "n_max": n_max}
    return FringeData(delays, signal, None, meta)


def simulate_cavity_ringdown(
    system: SystemModel,
    mode_index: int,
    times: Sequence[float],
    init=("fock", 1),
    n_max: int | None = None,
) -> np.ndarray:
    """Zero-photon probability P(N=0, t) after preparing the cavity in ``init``.

    ``init`` is ``("fock", N)``, ``("thermal", n0)`` or a PhotonDistribution.
    This is the quantity read out by the amplitude of zero-photon Rabi
    oscillations.
    """
    times = np.asarray(times, dtype=float)
    n_bar = system.effective_n_bar(mode_index)
    if isinstance(init, PhotonDistribution):
        need = init.n_max
    elif init[0] == "thermal":
        need = default_n_max(float(init[1]))
    else:
        need = int(init[1]) + 20
    if n_max is None:
        n_max = max(default_n_max(n_bar), need)
    if isinstance(init, PhotonDistribution):
        p0 = init.padded(n_max)
    else:
        p0 = prep_distribution(system, mode_index, tuple(init), n_max)
    L = build_liouvillian(system, mode_index, n_max)
    rho0 = DensityState.ground(p0)
    out = np.empty(times.size)
    for i, t in enumerate(times):
        out[i] = L.propagate(rho0, float(t)).photon_distribution()[0]
    return out


def readout_signal(p_excited, gain: float = 1.0, offset: float = 0.0, noise_sigma: float = 0.0, rng=None, shots=None):
    """Linear readout: gain * P(e) + offset + gaussian noise.

    With ``shots`` set, returns that many noisy samples per input value.
    """
    p = np.asarray(p_excited, dtype=float)
    if np.any((p < -1e-12) | (p > 1 + 1e-12)):
        raise ValueError("excited-state probability must lie in [0, 1]")
    clean = gain * p + offset
    if noise_sigma == 0:
        if shots is None:
            return float(clean) if clean.ndim == 0 else clean
        return np.broadcast_to(clean[..., None], clean.shape + (shots,)).copy()
    if rng is None:
        raise ValueError("noisy readout needs an rng")
    rng = np.random.default_rng(rng)
    size = clean.shape if shots is None else clean.shape + (shots,)
    base = clean if shots is None else clean[..., None]
    noisy = base + rng.normal(0.0, noise_sigma, size=size)
    return float(noisy) if noisy.ndim == 0 else noisy
