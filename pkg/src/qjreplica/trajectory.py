"""Quantum-jump trajectories of the monitored chain.

Two samplers are provided. ``euler_poisson`` draws one uniform per step and
fires at most one jump with probability gamma <n_j> dt per channel; a step
that jumps applies only the projector. ``exact_waiting_time`` integrates
the survival probability S(t) = ||exp(-i H_nH t) psi||^2 on a grid of
spacing dt (exactly, through the log-norm) and places the jump where
ln S crosses ln u, interpolating ln S linearly inside the final grid cell.

Seeding: trajectory ``index`` of an ensemble with ``master_seed`` uses a
PCG64 stream seeded with splitmix64(splitmix64(master_seed) XOR index).
Mixing the master seed first keeps the seed sets of different master seeds
disjoint; with a bare master_seed XOR index, small master seeds would share
almost all of their streams. This mixing function is part of the
reproducibility contract.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from . import gaussian as gs
from .errors import StepSizeError
from .model import ModelParams

MASK64 = (1 << 64) - 1
EULER_LIMIT = 0.1
INF = math.inf


def splitmix64(x: int) -> int:
    """One round of the splitmix64 output function."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trajectory_seed(master_seed: int, index: int) -> int:
    return splitmix64(splitmix64(int(master_seed) & MASK64) ^ (int(index) & MASK64))


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trajectory_seed(master_seed, index)))


@dataclass(frozen=True)
class TrajectoryConfig:
    """Settings shared by all trajectories of an ensemble.

    Parameters
    ----------
    params : ModelParams
    dt : float
        Euler step, or survival grid spacing for the waiting-time scheme.
    t_final : float
    scheme : {"euler_poisson", "exact_waiting_time"}
    sample_times : tuple of float
        Strictly increasing observation times in [0, t_final].
    master_seed : int
    subsystem : tuple of int
        Half-open site range (start, stop) for the entanglement entropy;
        defaults to the left half of the chain.
    occupations : tuple of int, optional
        Initial product state; defaults to 1010...
    """

    params: ModelParams
    dt: float = 1e-3
    t_final: float = 1.0
    scheme: Literal["euler_poisson", "exact_waiting_time"] = "euler_poisson"
    sample_times: tuple = ()
    master_seed: int = 42
    subsystem: tuple | None = None
    occupations: tuple | None = None

    def __post_init__(self):
        p = self.params
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.scheme not in ("euler_poisson", "exact_waiting_time"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "euler_poisson" and p.gamma * self.dt * p.L >= EULER_LIMIT:
            raise ValueError(f"gamma*dt*L = {p.gamma * self.dt * p.L:.3g} violates the Euler bound {EULER_LIMIT}")
        times = tuple(float(t) for t in self.sample_times) or (float(self.t_final),)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample_times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.t_final * (1 + 1e-12):
            raise ValueError("sample_times must lie in [0, t_final]")
        if self.scheme == "euler_poisson":
            for t in times:
                if abs(round(t / self.dt) * self.dt - t) > 1e-9 * max(1.0, t):
                    raise ValueError(f"sample time {t} is not on the Euler grid of spacing {self.dt}")
        object.__setattr__(self, "sample_times", times)
        sub = self.subsystem if self.subsystem is not None else (0, max(1, p.L // 2))
        if not 0 <= sub[0] < sub[1] <= p.L:
            raise ValueError(f"invalid subsystem {sub}")
        object.__setattr__(self, "subsystem", tuple(int(s) for s in sub))
        if self.occupations is not None:
            object.__setattr__(self, "occupations", tuple(int(n) for n in self.occupations))

    def initial_state(self) -> gs.GaussianState:
        return gs.init_state(self.params, self.occupations)


@dataclass
class JumpRecord:
    """Jump sites (1-based) and times of one trajectory plus metadata."""

    events: list = field(default_factory=list)
    log_norm: float = 0.0
    seed: int = 0
    scheme: str = "euler_poisson"
    dt: float = 0.0
    t_final: float = 0.0
    index: int = 0

    def to_json(self) -> dict:
        return {"index": self.index, "seed": self.seed, "events": [[int(x), float(t)] for x, t in self.events]}


@dataclass
class TrajectoryResult:
    """Observables of one trajectory at the sample times."""

    times: np.ndarray
    density: np.ndarray
    number: np.ndarray
    entropy: np.ndarray


@dataclass
class EnsembleStats:
    """Ensemble means and standard errors per sample time."""

    times: np.ndarray
    density_mean: np.ndarray
    density_stderr: np.ndarray
    number_mean: np.ndarray
    number_stderr: np.ndarray
    entropy_mean: np.ndarray
    entropy_stderr: np.ndarray
    n_traj: int
    jump_counts: np.ndarray
    jump_rate_hist: tuple
    trajectories: list | None = None
    records: list | None = None


def step_euler(
    state: gs.GaussianState,
    dt: float,
    rng: np.random.Generator,
    params: ModelParams,
    P: np.ndarray | None = None,
) -> tuple[gs.GaussianState, int | None]:
    """One Euler-Poisson step; returns the new state and the jump site (0-based) or None."""
    probs = params.gamma * dt * gs.density(state)
    cum = np.cumsum(probs)
    p_tot = cum[-1]
    if p_tot >= 1.0:
        raise StepSizeError(f"total jump probability {p_tot:.3f} >= 1; reduce dt")
    u = rng.random()
    if u < p_tot:
        site = int(np.searchsorted(cum, u, side="right"))
        jumped = gs.apply_jump(state, site)
        return gs.GaussianState(jumped.W, jumped.log_norm, state.time + dt), site
    return gs.propagate_nonhermitian(state, dt, params, P), None


def sample_waiting_time(
    state: gs.GaussianState,
    rng: np.random.Generator,
    params: ModelParams,
    dt: float,
    horizon: float = INF,
    P: np.ndarray | None = None,
) -> tuple[float, gs.GaussianState]:
    """Draw the time to the next jump and the no-jump state at that time.

    Returns ``(inf, state at horizon)`` if no jump occurs within ``horizon``.
    """
    target = math.log(rng.random())
    acc = 0.0
    elapsed = 0.0
    s = state
    if P is None:
        P = gs.propagator(params, float(dt))
    while True:
        remaining = horizon - elapsed
        if math.isfinite(horizon) and remaining <= 1e-12 * max(1.0, horizon):
            return INF, s
        step = dt if remaining >= dt else remaining
        new = gs.propagate_nonhermitian(s, dt, params, P) if step == dt else gs.propagate_by(s, step, params)
        dln = 2.0 * (new.log_norm - s.log_norm)
        if dln == 0.0 and not math.isfinite(horizon) and gs.density(new).sum() <= 1e-14:
            # a dark state never decays; without a horizon the search would not end
            return INF, new
        if acc + dln > target:
            acc += dln
            elapsed += step
            s = new
            continue
        tau = step * (target - acc) / dln
        return elapsed + tau, gs.propagate_by(s, tau, params)


def _choose_site(state: gs.GaussianState, rng: np.random.Generator) -> int:
    n = gs.density(state)
    cum = np.cumsum(n)
    site = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(site, state.L - 1)


def _snapshot(state: gs.GaussianState, sub: tuple) -> tuple[np.ndarray, float, float]:
    n = gs.density(state)
    return n, float(n.sum()), gs.entanglement_entropy(state, range(*sub))


def run_trajectory(config: TrajectoryConfig, index: int, initial: gs.GaussianState | None = None) -> tuple[TrajectoryResult, JumpRecord]:
    """Run trajectory ``index`` and return its observables and jump record."""
    params = config.params
    seed = trajectory_seed(config.master_seed, index)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = initial if initial is not None else config.initial_state()
    record = JumpRecord(seed=seed, scheme=config.scheme, dt=config.dt, t_final=config.t_final, index=index)
    times = np.asarray(config.sample_times)
    dens = np.empty((len(times), params.L))
    num = np.empty(len(times))
    ent = np.empty(len(times))
    P = gs.propagator(params, float(config.dt))

    def observe(i, s):
        dens[i], num[i], ent[i] = _snapshot(s, config.subsystem)

    if config.scheme == "euler_poisson":
        dt = config.dt
        n_steps = int(round(config.t_final / dt))
        sample_steps = {int(round(t / dt)): i for i, t in enumerate(times)}
        if 0 in sample_steps:
            observe(sample_steps[0], state)
        for k in range(n_steps):
            state, site = step_euler(state, dt, rng, params, P)
            if site is not None:
                record.events.append((site + 1, k * dt))
            state = gs.GaussianState(state.W, state.log_norm, (k + 1) * dt)
            if k + 1 in sample_steps:
                observe(sample_steps[k + 1], state)
    else:
        targets = sorted(set(times.tolist()) | {float(config.t_final)})
        sample_index = {t: i for i, t in enumerate(times.tolist())}
        for target in targets:
            while target - state.time > 1e-12 * max(1.0, target):
                tau, state = sample_waiting_time(state, rng, params, config.dt, target - state.time, P)
                if tau == INF:
                    break
                site = _choose_site(state, rng)
                record.events.append((site + 1, state.time))
                state = gs.apply_jump(state, site)
            state = gs.GaussianState(state.W, state.log_norm, target)
            if target in sample_index:
                observe(sample_index[target], state)
    record.log_norm = state.log_norm
    return TrajectoryResult(times, dens, num, ent), record


def replay_gaussian(record: JumpRecord, params: ModelParams, initial: gs.GaussianState) -> gs.GaussianState:
    """Gaussian-engine replay of a jump record (same conventions as the dense replay)."""
    state = initial
    clock = initial.time
    for site, t in record.events:
        if t - clock > 0:
            state = gs.propagate_by(state, t - clock, params)
        state = gs.apply_jump(state, site - 1)
        clock = t + (record.dt if record.scheme == "euler_poisson" else 0.0)
        state = gs.GaussianState(state.W, state.log_norm, clock)
    if record.t_final - clock > 0:
        state = gs.propagate_by(state, record.t_final - clock, params)
    return state


def _run_chunk(config: TrajectoryConfig, start: int, stop: int):
    out = []
    for index in range(start, stop):
        result, record = run_trajectory(config, index)
        out.append((result, record))
    return out


def run_ensemble(config: TrajectoryConfig, n_traj: int, workers: int = 1, keep_trajectories: bool = False) -> EnsembleStats:
    """Run ``n_traj`` independent trajectories and reduce them in index order.

    The reduction is computed from the index-ordered stack of per-trajectory
    results, so the statistics do not depend on ``workers``.
    """
    if n_traj < 2:
        raise ValueError("n_traj must be >= 2")
    workers = max(1, int(workers))
    bounds = np.linspace(0, n_traj, workers + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers == 1:
        parts = [_run_chunk(config, a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, config, a, b) for a, b in chunks]
            parts = [f.result() for f in futures]
    pairs = [item for part in parts for item in part]
    results = [r for r, _ in pairs]
    records = [rec for _, rec in pairs]
    dens = np.stack([r.density for r in results])
    num = np.stack([r.number for r in results])
    ent = np.stack([r.entropy for r in results])
    root_n = math.sqrt(n_traj)
    counts = np.array([len(rec.events) for rec in records])
    rates = counts / config.t_final
    edges = np.arange(counts.max() + 2) / config.t_final - 0.5 / config.t_final
    hist = np.histogram(rates, bins=edges)
    return EnsembleStats(
        times=np.asarray(config.sample_times),
        density_mean=dens.mean(axis=0),
        density_stderr=dens.std(axis=0, ddof=1) / root_n,
        number_mean=num.mean(axis=0),
        number_stderr=num.std(axis=0, ddof=1) / root_n,
        entropy_mean=ent.mean(axis=0),
        entropy_stderr=ent.std(axis=0, ddof=1) / root_n,
        n_traj=n_traj,
        jump_counts=counts,
        jump_rate_hist=(hist[0], hist[1]),
        trajectories=results if keep_trajectories else None,
        records=records if keep_trajectories else None,
    )
