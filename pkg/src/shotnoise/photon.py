"""Photon-number dynamics of a thermally driven, decaying cavity mode.

The birth-death chain has up-rate kappa*n_bar*(N+1) and down-rate
kappa*(n_bar+1)*N. Truncated chains reflect at ``n_max`` (no up-jump out of
the top level), so probability is conserved exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import linalg

from .errors import PropagationError, TruncationError

TAIL_TOL = 1e-8
NEG_TOL = 1e-12


def thermal_tail(n_bar: float, n_max: int) -> float:
    """Untruncated geometric mass above ``n_max``."""
    if n_bar == 0:
        return 0.0
    return (n_bar / (n_bar + 1.0)) ** (n_max + 1)


def default_n_max(n_bar: float, tol: float = TAIL_TOL) -> int:
    """max(20, ceil(n + 10 sqrt(n+1))), raised until the thermal tail is <= tol."""
    n = max(20, math.ceil(n_bar + 10.0 * math.sqrt(n_bar + 1.0)))
    if n_bar > 0:
        need = math.ceil(math.log(tol) / math.log(n_bar / (n_bar + 1.0))) - 1
        n = max(n, need)
    return n


@dataclass
class PhotonDistribution:
    probs: np.ndarray
    tail_mass: float = 0.0
    clamped: int = 0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 1 or self.probs.size < 2:
            raise ValueError("probs must be a 1-d vector with n_max >= 1")
        if np.any(self.probs < -NEG_TOL) or np.any(self.probs > 1 + 1e-9):
            raise ValueError("probabilities outside [0, 1]")
        if abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def truncation_ok(self) -> bool:
        return self.tail_mass <= TAIL_TOL

    @classmethod
    def fock(cls, n: int, n_max: int) -> "PhotonDistribution":
        if not 0 <= n <= n_max:
            raise ValueError(f"Fock state {n} outside 0..{n_max}")
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    def padded(self, n_max: int) -> "PhotonDistribution":
        if n_max < self.n_max:
            if self.probs[n_max + 1 :].sum() > 0:
                raise TruncationError("cannot shrink a distribution with mass above the new n_max")
            return PhotonDistribution(self.probs[: n_max + 1].copy(), self.tail_mass, self.clamped)
        p = np.zeros(n_max + 1)
        p[: self.probs.size] = self.probs
        return PhotonDistribution(p, self.tail_mass, self.clamped)


def thermal_distribution(n_bar: float, n_max: int | None = None, tol: float = TAIL_TOL) -> PhotonDistribution:
    """Geometric law n^N / (n+1)^(N+1), renormalized on 0..n_max.

    ``tail_mass`` on the result records the mass cut away; when it exceeds
    ``tol`` the distribution is flagged (``truncation_ok`` is False).
    """
    if n_bar < 0:
        raise ValueError("n_bar must be >= 0")
    if n_max is None:
        n_max = default_n_max(n_bar, tol)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    N = np.arange(n_max + 1)
    if n_bar == 0:
        p = (N == 0).astype(float)
    else:
        r = n_bar / (n_bar + 1.0)
        p = np.exp(N * math.log(r)) / (n_bar + 1.0)
    tail = thermal_tail(n_bar, n_max)
    return PhotonDistribution(p / p.sum(), tail)


def occupancy_mean(p: PhotonDistribution) -> float:
    return float(np.dot(np.arange(p.probs.size), p.probs))


def rate_matrix(n_bar: float, kappa: float, n_max: int) -> np.ndarray:
    """Generator G with dP/dt = G P on the truncated ladder (columns sum to 0)."""
    if n_bar < 0 or kappa < 0:
        raise ValueError("n_bar and kappa must be >= 0")
    N = np.arange(n_max + 1, dtype=float)
    up = kappa * n_bar * (N + 1.0)
    up[-1] = 0.0
    down = kappa * (n_bar + 1.0) * N
    G = np.diag(-(up + down))
    G += np.diag(up[:-1], -1)
    G += np.diag(down[1:], 1)
    return G


def _clamp(p: np.ndarray) -> tuple[np.ndarray, int]:
    neg = p < 0
    if np.any(p < -NEG_TOL):
        raise PropagationError(f"negative probability {p.min():.3e} beyond tolerance")
    count = int(neg.sum())
    if count:
        p = np.where(neg, 0.0, p)
    return p, count


def evolve_master(p0: PhotonDistribution, n_bar: float, kappa: float, t: float) -> PhotonDistribution:
    """Propagate P(N) to time ``t`` with the exact matrix exponential."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return PhotonDistribution(p0.probs.copy(), p0.tail_mass, p0.clamped)
    G = rate_matrix(n_bar, kappa, p0.n_max)
    p = linalg.expm(G * t) @ p0.probs
    if not np.all(np.isfinite(p)):
        raise PropagationError(f"non-finite probabilities at t={t}")
    p, count = _clamp(p)
    err = abs(p.sum() - 1.0)
    if err > 1e-9:
        raise PropagationError(f"probability not conserved at t={t} (|sum-1|={err:.2e})")
    return PhotonDistribution(p / p.sum(), p0.tail_mass, p0.clamped + count)


def steady_state(n_bar: float, kappa: float, n_max: int | None = None) -> PhotonDistribution:
    """Stationary distribution from the null space of the rate matrix."""
    if n_max is None:
        n_max = default_n_max(n_bar)
    if n_bar == 0:
        return PhotonDistribution.fock(0, n_max)
    G = rate_matrix(n_bar, kappa, n_max)
    ns = linalg.null_space(G, rcond=1e-13)
    if ns.shape[1] != 1:
        raise PropagationError(f"rate matrix null space has dimension {ns.shape[1]}")
    v = ns[:, 0]
    v = v / v.sum()
    v, count = _clamp(v)
    # one refinement step against the normalized system polishes the tail entries
    A = G.copy()
    A[-1, :] = 1.0
    b = np.zeros(n_max + 1)
    b[-1] = 1.0
    v = v + np.linalg.solve(A, b - A @ v)
    v, c2 = _clamp(v)
    return PhotonDistribution(v / v.sum(), thermal_tail(n_bar, n_max), count + c2)


# --- stochastic trajectories ---------------------------------------------------


@dataclass
class JumpTrajectory:
    initial_n: int
    times: np.ndarray
    deltas: np.ndarray
    horizon: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.deltas = np.asarray(self.deltas, dtype=int)
        if self.times.shape != self.deltas.shape:
            raise ValueError("times and deltas differ in length")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if self.times[0] < 0 or self.times[-1] > self.horizon:
                raise ValueError("event times outside [0, horizon]")
            if not np.all(np.abs(self.deltas) == 1):
                raise ValueError("deltas must be +1 or -1")
            if self.initial_n + np.cumsum(self.deltas).min() < 0:
                raise ValueError("photon number goes negative")

    @property
    def counts(self) -> np.ndarray:
        """Photon number after each event."""
        return self.initial_n + np.cumsum(self.deltas)

    def n_at(self, t):
        k = np.searchsorted(self.times, t, side="right")
        levels = np.concatenate([[self.initial_n], self.counts])
        return levels[k]

    def time_in_state(self) -> dict[int, float]:
        edges = np.concatenate([[0.0], self.times, [self.horizon]])
        levels = np.concatenate([[self.initial_n], self.counts])
        out: dict[int, float] = {}
        for n, dt in zip(levels, np.diff(edges)):
            out[int(n)] = out.get(int(n), 0.0) + dt
        return out


Init = Union[int, str]


def _initial_n(rng: np.random.Generator, n_bar: float, init: Init, size=None):
    if isinstance(init, str):
        if init != "thermal":
            raise ValueError(f"init must be an integer or 'thermal', got {init!r}")
        return rng.geometric(1.0 / (n_bar + 1.0), size=size) - 1
    if init < 0:
        raise ValueError("initial photon number must be >= 0")
    return init if size is None else np.full(size, init, dtype=np.int64)


def sample_trajectory(rng_seed, n_bar: float, kappa: float, horizon: float, init: Init = 0) -> JumpTrajectory:
    """Exact (Gillespie) sample of the birth-death chain on [0, horizon]."""
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    rng = np.random.default_rng(rng_seed)
    n = int(_initial_n(rng, n_bar, init))
    n0 = n
    if n_bar == 0 and n == 0:
        return JumpTrajectory(0, np.empty(0), np.empty(0, dtype=int), horizon)
    times, deltas = [], []
    t = 0.0
    while True:
        up = kappa * n_bar * (n + 1)
        down = kappa * (n_bar + 1) * n
        total = up + down
        if total == 0:
            break
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        step = 1 if rng.random() * total < up else -1
        n += step
        times.append(t)
        deltas.append(step)
    return JumpTrajectory(n0, np.array(times), np.array(deltas, dtype=int), horizon)


@dataclass
class JumpBatch:
    """Many trajectories in padded arrays.

    ``times[i, k]`` is the k-th jump time of trajectory i (``inf`` padding);
    ``levels[i, k]`` the photon number after that jump.
    """

    initial_n: np.ndarray
    times: np.ndarray
    levels: np.ndarray
    horizon: float
    area: np.ndarray = field(init=False)

    def __post_init__(self):
        # cumulative integral of N(t) up to each jump time
        prev_t = np.concatenate([np.zeros((self.times.shape[0], 1)), self.times[:, :-1]], axis=1)
        prev_n = np.concatenate([self.initial_n[:, None], self.levels[:, :-1]], axis=1)
        finite = np.isfinite(self.times)
        seg = np.zeros(self.times.shape)
        seg[finite] = (self.times[finite] - prev_t[finite]) * prev_n[finite]
        self.area = np.cumsum(seg, axis=1)

    def __len__(self):
        return self.initial_n.size

    def trajectory(self, i: int) -> JumpTrajectory:
        mask = np.isfinite(self.times[i])
        levels = np.concatenate([[self.initial_n[i]], self.levels[i][mask]])
        return JumpTrajectory(int(self.initial_n[i]), self.times[i][mask], np.diff(levels), self.horizon)

    def evaluate(self, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Photon number N(q) and integral of N over [0, q] at sorted times q.

        Returns two arrays of shape (n_traj, len(query)).
        """
        query = np.asarray(query, dtype=float)
        if np.any(np.diff(query) < 0):
            raise ValueError("query times must be sorted")
        n_traj, width = self.times.shape
        rows = np.arange(n_traj)
        idx = np.zeros(n_traj, dtype=np.int64)  # number of jumps at or before q
        times = np.concatenate([self.times, np.full((n_traj, 1), np.inf)], axis=1)
        level_tab = np.concatenate([self.initial_n[:, None], self.levels], axis=1)
        area_tab = np.concatenate([np.zeros((n_traj, 1)), self.area], axis=1)
        t_tab = np.concatenate([np.zeros((n_traj, 1)), self.times], axis=1)
        N_out = np.empty((n_traj, query.size), dtype=np.int64)
        I_out = np.empty((n_traj, query.size))
        for j, q in enumerate(query):
            while True:
                adv = times[rows, idx] <= q
                if not adv.any():
                    break
                idx += adv
            n_now = level_tab[rows, idx]
            N_out[:, j] = n_now
            I_out[:, j] = area_tab[rows, idx] + n_now * (q - t_tab[rows, idx])
        return N_out, I_out


def sample_batch(rng: np.random.Generator, initial_n, n_bar: float, kappa: float, horizon: float) -> JumpBatch:
    """Vectorized Gillespie sampling; one row per entry of ``initial_n``."""
    n = np.array(initial_n, dtype=np.int64)
    n0 = n.copy()
    size = n.size
    t = np.zeros(size)
    cols_t: list[np.ndarray] = []
    cols_n: list[np.ndarray] = []
    active = np.ones(size, dtype=bool)
    while active.any():
        up = kappa * n_bar * (n + 1)
        down = kappa * (n_bar + 1) * n
        total = up + down
        e = rng.exponential(size=size)
        u = rng.random(size=size)
        with np.errstate(divide="ignore"):
            wait = np.where(total > 0, e / np.where(total > 0, total, 1.0), np.inf)
        t_new = t + wait
        active &= t_new <= horizon
        step = np.where(u * total < up, 1, -1)
        n = np.where(active, n + step, n)
        t = np.where(active, t_new, t)
        cols_t.append(np.where(active, t, np.inf))
        cols_n.append(n.copy())
    if cols_t:
        cols_t.pop()
        cols_n.pop()
    if cols_t:
        times = np.stack(cols_t, axis=1)
        levels = np.stack(cols_n, axis=1)
    else:
        times = np.empty((size, 0))
        levels = np.empty((size, 0), dtype=np.int64)
    return JumpBatch(n0, times, levels, horizon)
