"""Dense Hilbert-space oracles for small chains.

Everything here works with explicit 2^L (or 2^{LR}) matrices built from
Jordan-Wigner fermion operators, independently of the Gaussian machinery.
Site 0 is the leftmost tensor factor, and the Fock index of an occupation
pattern (n_0, ..., n_{L-1}) is sum_j n_j 2^{L-1-j}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import DimensionGuardError, ImpossibleRecordError
from .model import ModelParams, hopping_matrix, pairing_matrix

MAX_DENSE_SITES = 12
MAX_REPLICATED_SITES = 5
MAX_MC_SITES = 4
IMPOSSIBLE_TOLERANCE = 1e-12


@lru_cache(maxsize=16)
def fermion_operators(L: int) -> tuple[np.ndarray, ...]:
    """Annihilation operators c_0..c_{L-1} as dense 2^L matrices."""
    if L > MAX_DENSE_SITES:
        raise DimensionGuardError(f"dense space 2^{L} exceeds guard 2^{MAX_DENSE_SITES}")
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    ops = []
    for j in range(L):
        factors = [z] * j + [a] + [eye] * (L - j - 1)
        op = np.array([[1.0]])
        for f in factors:
            op = np.kron(op, f)
        op = op.astype(complex)
        op.setflags(write=False)
        ops.append(op)
    return tuple(ops)


def number_operators(L: int) -> list[np.ndarray]:
    return [c.conj().T @ c for c in fermion_operators(L)]


def hamiltonian(params: ModelParams) -> np.ndarray:
    """Chain Hamiltonian sum h_ij c†_i c_j + (1/2) sum Delta_ij c†_i c†_j + h.c."""
    cs = fermion_operators(params.L)
    hm = hopping_matrix(params)
    delta = pairing_matrix(params)
    dim = 2**params.L
    H = np.zeros((dim, dim), dtype=complex)
    for i, ci in enumerate(cs):
        cdi = ci.conj().T
        for j, cj in enumerate(cs):
            if hm[i, j] != 0:
                H += hm[i, j] * (cdi @ cj)
            if delta[i, j] != 0:
                pair = 0.5 * delta[i, j] * (cdi @ cj.conj().T)
                H += pair + pair.conj().T
    return H


def nonhermitian_hamiltonian(params: ModelParams) -> np.ndarray:
    """H - i gamma/2 sum_j n_j."""
    return hamiltonian(params) - 0.5j * params.gamma * sum(number_operators(params.L))


@dataclass(frozen=True)
class DenseState:
    """Normalised state vector with the log-norm of its unnormalised parent."""

    psi: np.ndarray
    log_norm: float = 0.0
    time: float = 0.0


def occupation_state(occupations: Sequence[int]) -> DenseState:
    L = len(occupations)
    psi = np.zeros(2**L, dtype=complex)
    index = int("".join(str(int(n)) for n in occupations), 2)
    psi[index] = 1.0
    return DenseState(psi)


def gaussian_to_dense(W: np.ndarray) -> DenseState:
    """Dense vector of the common vacuum of the quasiparticle modes in W."""
    L = W.shape[1]
    cs = fermion_operators(L)
    alpha = list(cs) + [c.conj().T for c in cs]
    K = np.zeros((2**L, 2**L), dtype=complex)
    for m in range(L):
        d = sum(W[a, m].conj() * alpha[a] for a in range(2 * L))
        K += d.conj().T @ d
    vals, vecs = np.linalg.eigh(K)
    psi = vecs[:, 0]
    if vals[0] > 1e-8 or (L > 0 and vals[1] < 1e-6):
        raise ValueError("amplitudes do not define a unique quasiparticle vacuum")
    return DenseState(psi / np.linalg.norm(psi))


def correlations(state, L: int) -> tuple[np.ndarray, np.ndarray]:
    """(C, F) of a state vector or density matrix; C_ij=<c†_i c_j>, F_ij=<c_j c_i>."""
    rho = _as_density(state)
    cs = fermion_operators(L)
    C = np.empty((L, L), dtype=complex)
    F = np.empty((L, L), dtype=complex)
    for i in range(L):
        for j in range(L):
            C[i, j] = np.trace(rho @ cs[i].conj().T @ cs[j])
            F[i, j] = np.trace(rho @ cs[j] @ cs[i])
    return C, F


def densities(state, L: int) -> np.ndarray:
    rho = _as_density(state)
    return np.array([np.trace(rho @ n).real for n in number_operators(L)])


def _as_density(state) -> np.ndarray:
    if isinstance(state, DenseState):
        state = state.psi
    state = np.asarray(state)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def reduced_entropy(psi: np.ndarray, L: int, sites: Sequence[int]) -> float:
    """Von Neumann entropy (nats) of a contiguous block ``sites`` of a pure state."""
    sites = list(sites)
    rest = [j for j in range(L) if j not in sites]
    # fermionic and spin reduced states coincide for contiguous blocks
    tensor = np.asarray(psi).reshape([2] * L).transpose(sites + rest).reshape(2 ** len(sites), -1)
    s = np.linalg.svd(tensor, compute_uv=False) ** 2
    s = s[s > 1e-300]
    return float(-np.sum(s * np.log(s)))


@lru_cache(maxsize=16)
def _no_jump_propagator(params: ModelParams, dt: float) -> np.ndarray:
    return sla.expm(-1j * nonhermitian_hamiltonian(params) * dt)


def sse_step_dense(
    state: DenseState,
    dt: float,
    rng: np.random.Generator,
    params: ModelParams,
    first_order: bool = False,
) -> tuple[DenseState, int | None]:
    """One Euler-Poisson step of the jump unravelling.

    One uniform u is drawn. Channel j has probability gamma <n_j> dt; if
    u < p_tot the channel is chosen from the cumulative sum at u and the
    state is projected, otherwise the no-jump operator is applied. The
    no-jump operator is exp(-i H_nH dt), or its first-order truncation
    1 - (gamma N/2 + i H) dt when ``first_order`` is set.
    """
    L = params.L
    probs = params.gamma * dt * densities(state.psi, L)
    u = rng.random()
    cum = np.cumsum(probs)
    if cum[-1] >= 1.0:
        raise ValueError(f"total jump probability {cum[-1]:.3f} >= 1")
    if u < cum[-1]:
        site = int(np.searchsorted(cum, u, side="right"))
        jumped = _project(state, site, L)
        return DenseState(jumped.psi, jumped.log_norm, state.time + dt), site
    if first_order:
        K0 = np.eye(2**L) - 1j * nonhermitian_hamiltonian(params) * dt
    else:
        K0 = _no_jump_propagator(params, float(dt))
    phi = K0 @ state.psi
    norm = np.linalg.norm(phi)
    return DenseState(phi / norm, state.log_norm + np.log(norm), state.time + dt), None


def _project(state: DenseState, site: int, L: int) -> DenseState:
    phi = number_operators(L)[site] @ state.psi
    norm = np.linalg.norm(phi)
    if norm**2 < IMPOSSIBLE_TOLERANCE:
        raise ImpossibleRecordError(f"jump on site {site} with <n> = {norm**2:.3e}")
    return DenseState(phi / norm, state.log_norm + np.log(norm), state.time)


def propagate_dense(state: DenseState, t: float, params: ModelParams) -> DenseState:
    """Exact no-jump evolution exp(-i H_nH t) with renormalisation."""
    if t == 0:
        return state
    phi = sla.expm(-1j * nonhermitian_hamiltonian(params) * t) @ state.psi
    norm = np.linalg.norm(phi)
    return DenseState(phi / norm, state.log_norm + np.log(norm), state.time + t)


def replay_record(record, params: ModelParams, initial: DenseState) -> DenseState:
    """Rebuild the final state of a jump record by exact dense evolution.

    Jump sites in the record are 1-based. For records produced by the
    Euler-Poisson scheme a jump occupies its whole step of length
    ``record.dt`` without non-Hermitian evolution, mirroring the stepper.

    Raises
    ------
    ImpossibleRecordError
        If a recorded jump has probability below 1e-12.
    """
    L = params.L
    state = initial
    clock = initial.time
    for site, t in record.events:
        if not 1 <= site <= L:
            raise ImpossibleRecordError(f"site {site} outside 1..{L}")
        state = propagate_dense(state, t - clock, params)
        state = _project(state, site - 1, L)
        clock = t
        if record.scheme == "euler_poisson":
            clock = t + record.dt
            state = DenseState(state.psi, state.log_norm, clock)
    return propagate_dense(state, record.t_final - clock, params)


# ---------------------------------------------------------------- Lindblad


def lindblad_superoperator(params: ModelParams) -> np.ndarray:
    """Column-stacked Lindbladian for dephasing jumps n_j."""
    H = hamiltonian(params)
    dim = H.shape[0]
    eye = np.eye(dim)
    sup = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for n in number_operators(params.L):
        nn = n.conj().T @ n
        sup += params.gamma * (np.kron(n.conj(), n) - 0.5 * np.kron(eye, nn) - 0.5 * np.kron(nn.T, eye))
    return sup


def evolve_lindblad(rho: np.ndarray, t: float, params: ModelParams) -> np.ndarray:
    """Exact dense Lindblad evolution by exponentiating the superoperator."""
    dim = rho.shape[0]
    vec = sla.expm(lindblad_superoperator(params) * t) @ rho.reshape(-1, order="F")
    return vec.reshape(dim, dim, order="F")


# ---------------------------------------------------------- replicated rho


@dataclass(frozen=True)
class ReplicatedDensity:
    """Averaged R-fold product of unnormalised density matrices."""

    rho: np.ndarray
    R: int
    L: int
    time: float = 0.0


def _guard(L: int, R: int, limit: int = MAX_REPLICATED_SITES):
    if L * R > limit:
        raise DimensionGuardError(f"L*R = {L * R} exceeds the dense guard {limit}")


def _lift(op: np.ndarray, r: int, R: int) -> np.ndarray:
    dim = op.shape[0]
    out = np.array([[1.0 + 0j]])
    for s in range(R):
        out = np.kron(out, op if s == r else np.eye(dim))
    return out


@lru_cache(maxsize=16)
def replicated_operators(params: ModelParams, R: int) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Replicated non-Hermitian Hamiltonian and jump operators prod_r n_j^(r)."""
    _guard(params.L, R)
    Hnh = nonhermitian_hamiltonian(params)
    HR = sum(_lift(Hnh, r, R) for r in range(R))
    jumps = []
    for n in number_operators(params.L):
        op = np.array([[1.0 + 0j]])
        for _ in range(R):
            op = np.kron(op, n)
        jumps.append(op)
    return HR, tuple(jumps)


def replicated_initial(psi: np.ndarray, R: int) -> np.ndarray:
    rho = np.outer(psi, psi.conj())
    out = np.array([[1.0 + 0j]])
    for _ in range(R):
        out = np.kron(out, rho)
    return out


def replicated_step(state: ReplicatedDensity, dt: float, params: ModelParams) -> ReplicatedDensity:
    """One first-order step of the replicated master equation.

    rho <- (1 - i dt H^R) rho (1 - i dt H^R)† + gamma dt sum_j L_j^R rho L_j^R†
    """
    _guard(state.L, state.R)
    HR, jumps = replicated_operators(params, state.R)
    A = np.eye(HR.shape[0]) - 1j * dt * HR
    rho = A @ state.rho @ A.conj().T
    for Lj in jumps:
        rho += params.gamma * dt * (Lj @ state.rho @ Lj.conj().T)
    return ReplicatedDensity(rho, state.R, state.L, state.time + dt)


def evolve_replicated(state: ReplicatedDensity, t: float, dt: float, params: ModelParams, richardson: bool = False) -> ReplicatedDensity:
    """Repeated first-order steps up to time ``t``.

    With ``richardson`` the run is repeated at dt/2 and combined as
    2 rho(dt/2) - rho(dt), cancelling the leading O(dt) error.
    """
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must be a multiple of dt")

    def run(step, count):
        s = state
        for _ in range(count):
            s = replicated_step(s, step, params)
        return s

    coarse = run(dt, n)
    if not richardson:
        return coarse
    fine = run(dt / 2, 2 * n)
    return ReplicatedDensity(2 * fine.rho - coarse.rho, state.R, state.L, coarse.time)


# ----------------------------------------------------- reweighted sampling


@dataclass
class MCResult:
    """Monte Carlo estimate of the replicated density matrix."""

    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int
    R: int


class _DenseSampler:
    """Exact continuous-time sampler for small chains.

    The no-jump evolution uses the eigen-decomposition of H_nH, and waiting
    times solve ||exp(-i H_nH tau) psi||^2 = u by bracketing root search.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.Hnh = nonhermitian_hamiltonian(params)
        self.lam, self.S = np.linalg.eig(self.Hnh)
        self.Sinv = np.linalg.inv(self.S)
        self.numbers = number_operators(params.L)

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        return self.S @ (np.exp(-1j * self.lam * t) * (self.Sinv @ psi))

    def run(self, psi0: np.ndarray, t_final: float, rng: np.random.Generator) -> tuple[np.ndarray, float, int]:
        """Return (normalised final state, ln ||psi_tilde||^2, jump count)."""
        psi = psi0
        t = 0.0
        log_weight = 0.0
        jumps = 0
        gamma = self.params.gamma
        while True:
            remaining = t_final - t
            end = self.evolve(psi, remaining)
            s_end = float(np.vdot(end, end).real)
            u = rng.random()
            if gamma == 0 or u <= s_end:
                # a jump needs S(tau) = u; S is decreasing so u <= S(T) means none
                return end / np.sqrt(s_end), log_weight + np.log(s_end), jumps
            coeffs = self.Sinv @ psi

            def survival(tau):
                phi = self.S @ (np.exp(-1j * self.lam * tau) * coeffs)
                return float(np.vdot(phi, phi).real) - u

            tau = brentq(survival, 0.0, remaining, xtol=1e-14, rtol=1e-14)
            phi = self.S @ (np.exp(-1j * self.lam * tau) * coeffs)
            s_tau = float(np.vdot(phi, phi).real)
            phi = phi / np.sqrt(s_tau)
            occ = np.array([np.vdot(phi, n @ phi).real for n in self.numbers])
            cum = np.cumsum(occ)
            site = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            site = min(site, len(occ) - 1)
            projected = self.numbers[site] @ phi
            p = float(np.vdot(projected, projected).real)
            log_weight += np.log(s_tau) + np.log(p)
            psi = projected / np.sqrt(p)
            t += tau
            jumps += 1


def mc_replicated_average(
    params: ModelParams,
    R: int,
    n_traj: int,
    t_final: float,
    master_seed: int = 42,
    initial: DenseState | None = None,
) -> MCResult:
    """Born-reweighted estimate of the replicated density matrix.

    Trajectories are sampled with the physical (Born) law; each contributes
    rho^{(x)R} exp((R-1) ln ||psi_tilde||^2), where psi_tilde is the
    unnormalised state built from exp(-i H_nH t) and the bare projectors n_j.
    This weight makes the average unbiased for the replicated master
    equation, whose jump term carries a single factor gamma dt.
    """
    from .trajectory import trajectory_seed

    _guard(params.L, R, MAX_MC_SITES)
    if n_traj < 2:
        raise ValueError("n_traj must be >= 2")
    if initial is None:
        from .gaussian import neel_occupations

        initial = occupation_state(neel_occupations(params.L))
    sampler = _DenseSampler(params)
    dim = 2 ** (params.L * R)
    # Welford updates keep zero-variance components exactly zero
    mean = np.zeros((dim, dim), dtype=complex)
    m2_re = np.zeros((dim, dim))
    m2_im = np.zeros((dim, dim))
    for index in range(n_traj):
        rng = np.random.default_rng(trajectory_seed(master_seed, index))
        psi, log_s, _ = sampler.run(initial.psi, t_final, rng)
        sample = replicated_initial(psi, R) * np.exp((R - 1) * log_s)
        delta = sample - mean
        mean += delta / (index + 1)
        after = sample - mean
        m2_re += delta.real * after.real
        m2_im += delta.imag * after.imag
    var_re = m2_re / (n_traj - 1)
    var_im = m2_im / (n_traj - 1)
    stderr = np.sqrt(np.clip(var_re, 0, None) / n_traj) + 1j * np.sqrt(np.clip(var_im, 0, None) / n_traj)
    return MCResult(mean, stderr, n_traj, R)


def density_matrix_json(rho: np.ndarray, **meta) -> str:
    """Row-major JSON with interleaved real and imaginary parts."""
    flat = []
    for z in np.asarray(rho).reshape(-1):
        flat.extend([float(z.real), float(z.imag)])
    payload = dict(meta)
    payload.update({"shape": list(rho.shape), "data": flat})
    return json.dumps(payload)


ROUNDOFF_STDERR = 1e-12


def mc_deviation(mc: MCResult, reference: np.ndarray, atol: float = ROUNDOFF_STDERR) -> tuple[float, float]:
    """Compare a Monte Carlo estimate with a deterministic reference.

    Real and imaginary parts are treated as separate components. Components
    with standard error above ``atol`` are statistically resolved and give
    |mean - ref| / stderr; the rest have zero variance up to roundoff and
    give the absolute deviation.

    Returns
    -------
    max_z : float
        Largest deviation in standard errors over resolved components.
    max_abs : float
        Largest absolute deviation over unresolved components.
    """
    max_z, max_abs = 0.0, 0.0
    for part in ("real", "imag"):
        d = np.abs(getattr(mc.mean - reference, part))
        se = getattr(mc.stderr, part)
        resolved = se > atol
        if resolved.any():
            max_z = max(max_z, float(np.max(d[resolved] / se[resolved])))
        if (~resolved).any():
            max_abs = max(max_abs, float(np.max(d[~resolved])))
    return max_z, max_abs
