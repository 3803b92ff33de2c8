"""Pure fermionic Gaussian states in Bogoliubov amplitude form.

A state is stored as an orthonormal 2L x L matrix W = [U; V]. Column m
defines the quasiparticle annihilator

    d_m = sum_i (U*_{im} c_i + V*_{im} c†_i),

and the state is the common vacuum of all d_m. With the Nambu vector
alpha = (c, c†) the projector W W† equals <alpha alpha†>, so that

    C_ij = <c†_i c_j> = (V V†)_ij,    F_ij = <c_j c_i> = (V* U^T)_ij.

The unnormalised state evolves as exp(-i H_nH t)|psi>. Its norm obeys
d ln||psi||^2/dt = -gamma N, and with dW/dt = (-i M + gamma/2 Sigma_z) W one
finds d ln det(W†W)/dt = gamma (L - 2N). Hence after a step of length dt
followed by a thin QR, W = Q R, the log-norm changes by
sum_m ln|R_mm| / 2 - gamma L dt / 4.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DegeneracyError, PropagationOverflowError, StateCorruptionError, ZeroProbabilityJumpError
from .model import ModelParams, bdg_matrix, dispersion, hopping_matrix

JUMP_TOLERANCE = 1e-12
CLAMP_WINDOW = 1e-10
CORRUPTION_WINDOW = 1e-8
GAP_TOLERANCE = 1e-12
SPECTRAL_COND_LIMIT = 1e6


@dataclass(frozen=True)
class GaussianState:
    """Normalised Gaussian state with accumulated log-norm.

    Attributes
    ----------
    W : ndarray, shape (2L, L)
        Orthonormal Bogoliubov amplitudes.
    log_norm : float
        Natural log of the norm of the unnormalised state this one represents.
    time : float
        Simulation time.
    """

    W: np.ndarray
    log_norm: float = 0.0
    time: float = 0.0

    @property
    def L(self) -> int:
        return self.W.shape[1]


def neel_occupations(L: int) -> list[int]:
    """Default initial pattern 1010..."""
    return [1 - (j % 2) for j in range(L)]


def init_state(params: ModelParams, occupations: Sequence[int] | None = None, ground_state: bool = False) -> GaussianState:
    """Product state of site occupations, or the BdG ground state.

    Parameters
    ----------
    params : ModelParams
    occupations : sequence of {0, 1}, optional
        Site occupations. Defaults to the Neel pattern 1010...
    ground_state : bool
        If True, return the quasiparticle vacuum of the Hermitian BdG matrix.

    Raises
    ------
    DegeneracyError
        If the ground state is requested and a zero mode exists.
    """
    L = params.L
    if ground_state:
        return _ground_state(params)
    if occupations is None:
        occupations = neel_occupations(L)
    occ = np.asarray(occupations, dtype=int)
    if occ.shape != (L,) or not np.all((occ == 0) | (occ == 1)):
        raise ValueError(f"occupations must be a 0/1 vector of length {L}")
    W = np.zeros((2 * L, L), dtype=complex)
    for j, n in enumerate(occ):
        # empty site: annihilated by c_j; filled site: annihilated by c†_j
        W[j + n * L, j] = 1.0
    return GaussianState(W)


def _ground_state(params: ModelParams) -> GaussianState:
    M = bdg_matrix(params)
    if params.boundary == "periodic":
        gap = float(np.min(dispersion(params, params.momenta())))
    else:
        gap = float(np.min(np.abs(np.linalg.eigvalsh(M))))
    if gap <= GAP_TOLERANCE:
        raise DegeneracyError(f"BdG spectrum is gapless (min |E| = {gap:.3e}); ground state is degenerate")
    energies, vecs = np.linalg.eigh(M)
    W = vecs[:, energies > 0]
    if W.shape[1] != params.L:
        raise DegeneracyError("positive BdG eigenspace does not have dimension L")
    return GaussianState(np.ascontiguousarray(W))


def generator(params: ModelParams) -> np.ndarray:
    """Matrix X with dW/dt = X W for exp(-i H_nH t) acting on the state."""
    L = params.L
    sigma_z = np.concatenate([np.ones(L), -np.ones(L)])
    return -1j * bdg_matrix(params) + np.diag(0.5 * params.gamma * sigma_z)


@lru_cache(maxsize=32)
def propagator(params: ModelParams, dt: float) -> np.ndarray:
    """Cached amplitude propagator exp(X dt) for fixed-step evolution."""
    P = sla.expm(generator(params) * dt)
    P.setflags(write=False)
    return P


@lru_cache(maxsize=8)
def _spectral(params: ModelParams):
    # Eigen-decomposition of the generator for propagation by arbitrary
    # times; rejected when the eigenbasis is badly conditioned.
    lam, S = np.linalg.eig(generator(params))
    if np.linalg.cond(S) > SPECTRAL_COND_LIMIT:
        return None
    return lam, S, np.linalg.inv(S)


def _orthonormalize(W: np.ndarray) -> tuple[np.ndarray, float]:
    """Thin orthonormalisation W = Q R; returns Q and sum_m ln|R_mm|.

    Cholesky QR is used since the steps keep W close to orthonormal; plain
    Householder QR is the fallback.
    """
    gram = W.conj().T @ W
    try:
        R = sla.cholesky(gram, lower=False, check_finite=False)
        Q = sla.solve_triangular(R, W.T, trans="T", lower=False, check_finite=False).T
        diag = np.abs(np.diagonal(R))
    except np.linalg.LinAlgError:
        Q, R = np.linalg.qr(W)
        diag = np.abs(np.diagonal(R))
    if np.any(diag == 0) or not np.all(np.isfinite(diag)):
        raise PropagationOverflowError("rank loss during re-orthonormalisation")
    return Q, float(np.sum(np.log(diag)))


def _finish(state: GaussianState, W: np.ndarray, dt: float, params: ModelParams) -> GaussianState:
    if not np.all(np.isfinite(W)):
        raise PropagationOverflowError(f"non-finite amplitudes after propagation with dt={dt}")
    Q, logdiag = _orthonormalize(W)
    dlog = 0.5 * logdiag - 0.25 * params.gamma * params.L * dt
    return GaussianState(Q, state.log_norm + dlog, state.time + dt)


def propagate_nonhermitian(state: GaussianState, dt: float, params: ModelParams, P: np.ndarray | None = None) -> GaussianState:
    """Evolve with exp(-i H_nH dt), renormalise and accumulate the log-norm.

    Parameters
    ----------
    state : GaussianState
    dt : float
        Positive time step.
    params : ModelParams
    P : ndarray, optional
        Precomputed propagator exp(X dt); taken from the cache if omitted.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if P is None:
        P = propagator(params, float(dt))
    return _finish(state, P @ state.W, dt, params)


def propagate_by(state: GaussianState, tau: float, params: ModelParams) -> GaussianState:
    """Propagate by an arbitrary (uncached) time ``tau >= 0``."""
    if tau == 0:
        return state
    spec = _spectral(params)
    if spec is None:
        W = sla.expm(generator(params) * tau) @ state.W
    else:
        lam, S, Sinv = spec
        # overflow is reported by _finish as PropagationOverflowError
        with np.errstate(over="ignore", invalid="ignore"):
            W = S @ (np.exp(lam * tau)[:, None] * (Sinv @ state.W))
    return _finish(state, W, tau, params)


def _replace_mode(W: np.ndarray, z_index: int) -> tuple[np.ndarray, float]:
    """Apply the Nambu operator alpha_{z_index} to the vacuum of W.

    Returns the new orthonormal amplitudes and the squared norm of the result.
    """
    L = W.shape[1]
    partner = z_index + L if z_index < L else z_index - L
    b = W[partner, :].copy()
    weight = float(np.vdot(b, b).real)
    if weight <= 0.0:
        return W, 0.0
    u = b.conj() / np.sqrt(weight)
    # Householder reflector mapping u onto the first axis; its remaining
    # columns span the modes untouched by the operator.
    phase = u[0] / abs(u[0]) if abs(u[0]) > 0 else 1.0
    v = u.copy()
    v[0] += phase
    vnorm2 = float(np.vdot(v, v).real)
    Wv = W @ v
    kept = (W - np.outer(Wv, v.conj()) * (2.0 / vnorm2))[:, 1:]
    created = W.conj() @ b
    created = np.concatenate([created[L:], created[:L]]) / np.sqrt(weight)
    return np.column_stack([kept, created]), weight


def apply_jump(state: GaussianState, site: int) -> GaussianState:
    """Project onto an occupied site, |psi> -> n_site |psi> / ||n_site |psi>||.

    The projection is carried out as c_site followed by c†_site, each of which
    swaps a single quasiparticle mode for its conjugate.

    Raises
    ------
    ZeroProbabilityJumpError
        If <n_site> is below 1e-12.
    """
    L = state.L
    if not 0 <= site < L:
        raise IndexError(f"site {site} out of range for L={L}")
    n_before = float(np.vdot(state.W[L + site], state.W[L + site]).real)
    if n_before < JUMP_TOLERANCE:
        raise ZeroProbabilityJumpError(f"<n_{site}> = {n_before:.3e} below jump tolerance")
    W1, _ = _replace_mode(state.W, site)
    W2, _ = _replace_mode(W1, L + site)
    return GaussianState(W2, state.log_norm + 0.5 * np.log(n_before), state.time)


def density(state: GaussianState) -> np.ndarray:
    """Site occupations <n_j>."""
    V = state.W[state.L :]
    return np.einsum("im,im->i", V, V.conj()).real


def correlations(state: GaussianState) -> tuple[np.ndarray, np.ndarray]:
    """Return (C, F) with C_ij = <c†_i c_j> and F_ij = <c_j c_i>."""
    L = state.L
    U, V = state.W[:L], state.W[L:]
    return V @ V.conj().T, V.conj() @ U.T


def observables(state: GaussianState) -> dict:
    """Density, C and F of the state."""
    C, F = correlations(state)
    return {"density": np.real(np.diagonal(C)).copy(), "C": C, "F": F}


def generalized_density(state: GaussianState) -> np.ndarray:
    """Projector <alpha alpha†> = W W†."""
    return state.W @ state.W.conj().T


def energy(state: GaussianState, params: ModelParams) -> float:
    """Expectation of the Hermitian chain Hamiltonian."""
    M = bdg_matrix(params)
    W = state.W
    bdg = -0.5 * np.trace(W.conj().T @ M @ W).real
    return float(bdg + 0.5 * np.trace(hopping_matrix(params)))


def _spectrum_entropy(nu: np.ndarray) -> float:
    if np.any(nu < -CORRUPTION_WINDOW) or np.any(nu > 1 + CORRUPTION_WINDOW):
        raise StateCorruptionError(f"correlation eigenvalues outside [0,1]: min {nu.min():.3e}, max {nu.max():.3e}")
    nu = np.clip(nu, 0.0, 1.0)
    nz = nu[nu > 0]
    return float(-np.sum(nz * np.log(nz)))


def entanglement_entropy(state: GaussianState, subsystem) -> float:
    """Von Neumann entropy (nats) of a set of sites.

    Parameters
    ----------
    subsystem : range, slice or sequence of int
        Site indices of region A.
    """
    L = state.L
    sites = np.arange(L)[subsystem] if isinstance(subsystem, slice) else np.asarray(list(subsystem), dtype=int)
    if sites.size < 1 or sites.size > L:
        raise ValueError("subsystem must contain between 1 and L sites")
    idx = np.concatenate([sites, sites + L])
    Wa = state.W[idx]
    nu = np.linalg.eigvalsh(Wa @ Wa.conj().T)
    return _spectrum_entropy(nu)


def orthonormality_error(state: GaussianState) -> float:
    W = state.W
    return float(np.max(np.abs(W.conj().T @ W - np.eye(W.shape[1]))))


def random_state(L: int, rng: np.random.Generator) -> GaussianState:
    """Random pure Gaussian state from a random Hermitian BdG matrix."""
    A = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    hm = A + A.conj().T
    B = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    delta = B - B.T
    M = np.block([[hm, delta], [-delta.conj(), -hm.T]])
    energies, vecs = np.linalg.eigh(M)
    return GaussianState(np.ascontiguousarray(vecs[:, energies > 0]))
