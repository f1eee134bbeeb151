"""Monte-Carlo fringe generator built on photon-number jump trajectories.

For a state diagonal in photon number the cavity acts on the qubit only
through which sector it currently occupies: the qubit picks up the phase
integral of delta_N(t) between pulses, and each pulse rotates it with the
unitary of the sector occupied at that instant. Averaging the conditional
qubit state over sampled jump paths therefore reproduces the density-matrix
result exactly in expectation.

When the first pulse is number-selective the initial photon number is
stratified into the addressed sector and its complement, each sampled with
``n_traj`` paths and recombined with its prior weight.

Seeding: chunk c of stratum s draws from ``SeedSequence(seed, spawn_key=(s, c))``,
so every trajectory is fixed by (seed, stratum, index) whatever the thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .model import SystemModel
from .photon import sample_batch
from .quantum import (
    FringeData,
    SequenceSpec,
    echo_sequence,
    prep_distribution,
    pulse_unitaries,
    ramsey_sequence,
    sequence_n_max,
)

CHUNK = 4096


def _chunk_sums(system, mode_index, sequence, delays, n0_sampler, stratum, chunk, count, seed):
    """Chunk mean of P(e) per delay, centred sum of squares, and shot count."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stratum, chunk)))
    mode = system.mode(mode_index)
    n_bar = system.effective_n_bar(mode_index)
    kappa, chi = mode.kappa, mode.chi_n
    t1, g_res = system.qubit.t1, system.qubit.gamma_res
    delta, frame = sequence.detuning, sequence.frame

    n_steps = len(sequence.steps)
    ptimes = np.array([sequence.pulse_times(tau) for tau in delays])  # (D, S)
    query, inv = np.unique(ptimes, return_inverse=True)
    inv = inv.reshape(ptimes.shape)
    horizon = float(query[-1]) if query.size else 0.0

    n0 = n0_sampler(rng, count)
    batch = sample_batch(rng, n0, n_bar, kappa, max(horizon, 1e-300))
    Nq, Iq = batch.evaluate(query)

    shape = (count, len(delays))
    gg = np.ones(shape)
    ee = np.zeros(shape)
    eg = np.zeros(shape, dtype=complex)
    prev_t = np.zeros(len(delays))
    prev_I = np.zeros(shape)
    relax = 0.5 / t1 + g_res
    for i in range(n_steps):
        t_i = ptimes[:, i]
        I_i = Iq[:, inv[:, i]]
        dt = t_i - prev_t
        if np.any(dt > 0):
            phase = delta * dt - chi * (I_i - prev_I - frame * dt)
            eg = eg * np.exp(-1j * phase) * np.exp(-relax * dt)
            if t1 < math.inf:
                ee = ee * np.exp(-dt / t1)
                gg = 1.0 - ee
        N_i = Nq[:, inv[:, i]]
        K = int(max(N_i.max(), sequence.steps[i].pulse.select or 0)) + 1
        det = delta - (np.arange(K) - frame) * chi
        table = pulse_unitaries(sequence.steps[i].pulse, det)
        U = table[N_i]  # (count, D, 2, 2)
        u00, u01, u10, u11 = U[..., 0, 0], U[..., 0, 1], U[..., 1, 0], U[..., 1, 1]
        ge = np.conj(eg)
        # rho' = U rho U^dagger, rho = [[gg, ge], [eg, ee]]
        new_gg = (
            np.abs(u00) ** 2 * gg + np.abs(u01) ** 2 * ee
            + 2 * np.real(u00 * ge * np.conj(u01))
        )
        new_ee = (
            np.abs(u10) ** 2 * gg + np.abs(u11) ** 2 * ee
            + 2 * np.real(u10 * ge * np.conj(u11))
        )
        new_eg = (
            u10 * gg * np.conj(u00) + u11 * ee * np.conj(u01)
            + u10 * ge * np.conj(u01) + u11 * eg * np.conj(u00)
        )
        gg, ee, eg = new_gg, new_ee, new_eg
        prev_t, prev_I = t_i, I_i
    m = ee.mean(axis=0)
    d = ee - m
    return m, (d * d).sum(axis=0), count


def mc_sequence(
    system: SystemModel,
    sequence: SequenceSpec,
    delays: Sequence[float],
    n_traj: int,
    seed: int,
    mode_index: int = 1,
    threads: int = 1,
    chunk: int = CHUNK,
) -> FringeData:
    """Monte-Carlo estimate of the excited-state probability for each delay."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0) or np.any(np.diff(delays) <= 0):
        raise ValueError("delays must be non-negative and increasing")
    n_max = sequence_n_max(system, mode_index, sequence)
    prior = prep_distribution(system, mode_index, sequence.prep, n_max).probs
    levels = np.arange(prior.size)

    first = sequence.steps[0].pulse.select if sequence.steps else None
    strata = []
    if first is not None and 0 < prior[first] < 1:
        p_in = float(prior[first])
        comp = np.where(levels == first, 0.0, prior)
        comp = comp / comp.sum()
        strata.append((p_in, lambda rng, n, s=first: np.full(n, s, dtype=np.int64)))
        strata.append((1.0 - p_in, lambda rng, n, c=comp: rng.choice(levels, size=n, p=c)))
    else:
        strata.append((1.0, lambda rng, n, c=prior: rng.choice(levels, size=n, p=c)))

    jobs = []
    for s_idx, (weight, sampler) in enumerate(strata):
        n_chunks = -(-n_traj // chunk)
        for c in range(n_chunks):
            count = min(chunk, n_traj - c * chunk)
            jobs.append((s_idx, c, count, sampler))

    def run(job):
        s_idx, c, count, sampler = job
        return _chunk_sums(system, mode_index, sequence, delays, sampler, s_idx, c, count, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    mean = np.zeros(delays.size)
    var = np.zeros(delays.size)
    for s_idx, (weight, _) in enumerate(strata):
        # pairwise (Chan) merge of chunk means and centred sums of squares
        m = np.zeros(delays.size)
        m2 = np.zeros(delays.size)
        n = 0
        for job, (cm, cm2, cnt) in zip(jobs, results):
            if job[0] != s_idx:
                continue
            tot = n + cnt
            d = cm - m
            m = m + d * (cnt / tot)
            m2 = m2 + cm2 + d * d * (n * cnt / tot)
            n = tot
        sample_var = m2 / max(n - 1, 1)
        mean += weight * m
        var += weight * weight * sample_var / n
    meta = {
        "engine": "monte_carlo",
        "sequence": sequence.describe(),
        "mode_index": mode_index,
        "n_traj": n_traj,
        "seed": seed,
        "strata_weights": [w for w, _ in strata],
    }
    return FringeData(delays, mean, np.sqrt(var), meta)


def mc_fringe(
    system: SystemModel,
    mode_index: int,
    sequence_kind: str,
    select_N: int | None,
    delays: Sequence[float],
    n_traj: int,
    seed: int,
    *,
    detuning: float = 0.0,
    selective_final: bool = True,
    selective_echo: bool = False,
    envelope: str = "instantaneous",
    sigma: float = 100e-9,
    final_axis: float | None = None,
    threads: int = 1,
) -> FringeData:
    """Ramsey or echo fringe from sampled photon trajectories.

    ``select_N`` addresses the photon sector of the selective pulses (None
    for unconditional pulses). The frame follows ``select_N``.
    """
    kw = dict(
        selective_final=selective_final,
        envelope=envelope,
        sigma=sigma,
        detuning=detuning,
    )
    if final_axis is not None:
        kw["final_axis"] = final_axis
    if sequence_kind == "ramsey":
        seq = ramsey_sequence(select_N, **kw)
    elif sequence_kind == "echo":
        seq = echo_sequence(select_N, selective_echo=selective_echo, **kw)
    else:
        raise ValueError(f"sequence_kind must be 'ramsey' or 'echo', got {sequence_kind!r}")
    return mc_sequence(system, seq, delays, n_traj, seed, mode_index, threads)
