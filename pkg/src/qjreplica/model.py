"""Monitored Ising chain in fermion language.

The chain Hamiltonian is

    H = sum_j [J c†_{j+1} c_j + eta c†_j c†_{j+1} + h.c.] - h sum_j n_j

and every site is monitored through the jump operator L_j = n_j at rate
``gamma``. The field enters with a minus sign so that the single-particle
energy is ``2 J cos k - h`` and the quasiparticle dispersion reads
``xi_k = sqrt(4 eta^2 sin^2 k + (h - 2 J cos k)^2)``.

BdG conventions: Nambu vector alpha = (c_1..c_L, c†_1..c†_L) and
H = 1/2 alpha† M alpha + tr(h_mat)/2 with M = [[h_mat, Delta], [-Delta*, -h_mat^T]].
Momentum blocks use c_j = L^{-1/2} sum_k e^{ikj} c_k, so that the 2x2 block
at k is [[2J cos k - h, 2i eta sin k], [-2i eta sin k, -(2J cos k - h)]].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

FD_STEP = 1e-6
DEGENERATE_XI = 1e-12
N_K_DEFAULT = 4096


@dataclass(frozen=True)
class ModelParams:
    """Couplings and geometry of the monitored chain.

    Parameters
    ----------
    J : float
        Hopping amplitude (energy unit).
    eta : float
        Pairing amplitude.
    h : float
        Transverse field.
    gamma : float
        Monitoring rate, must be non-negative.
    L : int
        Number of sites.
    boundary : {"periodic", "open"}
        Fermionic boundary condition.
    """

    J: float = 1.0
    eta: float = 0.5
    h: float = 0.0
    gamma: float = 0.5
    L: int = 32
    boundary: Literal["periodic", "open"] = "periodic"

    def __post_init__(self):
        for name in ("J", "eta", "h", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L}")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")

    def momenta(self) -> np.ndarray:
        """Momentum grid k_n = 2 pi n / L, n = 0..L-1."""
        return 2.0 * np.pi * np.arange(self.L) / self.L


def dispersion(params: ModelParams, k):
    """Quasiparticle energy xi_k >= 0 (scalar or array)."""
    k = np.asarray(k, dtype=float)
    xi = np.sqrt(4.0 * params.eta**2 * np.sin(k) ** 2 + (params.h - 2.0 * params.J * np.cos(k)) ** 2)
    return xi if xi.ndim else float(xi)


def group_velocity(params: ModelParams, k):
    """Group velocity d xi / dk.

    Returns
    -------
    v : float or ndarray
        Velocity. Where xi_k vanishes the analytic formula is 0/0 and the
        central finite difference with step 1e-6 is returned instead.
    degenerate : bool or ndarray
        True at points where the finite-difference fallback was used.
    """
    k = np.asarray(k, dtype=float)
    J, eta, h = params.J, params.eta, params.h
    xi = np.asarray(dispersion(params, k))
    degenerate = xi <= DEGENERATE_XI
    num = 8.0 * eta**2 * np.sin(k) * np.cos(k) + 4.0 * J * np.sin(k) * (h - 2.0 * J * np.cos(k))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(degenerate, 0.0, num / (2.0 * np.where(degenerate, 1.0, xi)))
    if np.any(degenerate):
        kd = k[degenerate] if k.ndim else k
        fd = (np.asarray(dispersion(params, kd + FD_STEP)) - np.asarray(dispersion(params, kd - FD_STEP))) / (
            2.0 * FD_STEP
        )
        if k.ndim:
            v[degenerate] = fd
        else:
            v = fd
    if k.ndim:
        return v, degenerate
    return float(v), bool(degenerate)


def _velocity_squared(params: ModelParams, k: np.ndarray) -> np.ndarray:
    # v^2 is continuous across gap closings even where v itself flips sign,
    # so the degenerate nodes take the squared one-sided difference quotient.
    v, degenerate = group_velocity(params, k)
    v2 = v**2
    if np.any(degenerate):
        kd = k[degenerate]
        one_sided = (np.asarray(dispersion(params, kd + FD_STEP)) - np.asarray(dispersion(params, kd))) / FD_STEP
        v2[degenerate] = one_sided**2
    return v2


def v0_squared(params: ModelParams, n_k: int = N_K_DEFAULT) -> float:
    """Mean squared group velocity over the Brillouin zone.

    Composite trapezoid on ``n_k`` uniform nodes of the periodic integrand,
    i.e. the plain grid average of v(k)^2.
    """
    k = -np.pi + 2.0 * np.pi * np.arange(n_k) / n_k
    return float(np.mean(_velocity_squared(params, k)))


def hopping_matrix(params: ModelParams) -> np.ndarray:
    """Number-conserving block h_mat (L x L, real symmetric)."""
    L = params.L
    hm = np.zeros((L, L))
    for i, j in _bonds(params):
        hm[i, j] += params.J
        hm[j, i] += params.J
    hm -= params.h * np.eye(L)
    return hm


def pairing_matrix(params: ModelParams) -> np.ndarray:
    """Antisymmetric pairing block with Delta_{j, j+1} = eta."""
    L = params.L
    delta = np.zeros((L, L))
    for i, j in _bonds(params):
        delta[i, j] += params.eta
        delta[j, i] -= params.eta
    return delta


def _bonds(params: ModelParams):
    L = params.L
    bonds = [(j, j + 1) for j in range(L - 1)]
    if params.boundary == "periodic" and L > 1:
        bonds.append((L - 1, 0))
    elif params.boundary == "periodic" and L == 1:
        bonds.append((0, 0))
    return bonds


def bdg_matrix(params: ModelParams, include_gamma: bool = False) -> np.ndarray:
    """Real-space 2L x 2L BdG generator in the (c, c†) basis.

    With ``include_gamma`` the monitoring term -i gamma/2 sum_j n_j is added,
    which puts -i gamma/2 on the particle diagonal and +i gamma/2 on the hole
    diagonal.
    """
    L = params.L
    hm = hopping_matrix(params)
    delta = pairing_matrix(params)
    M = np.zeros((2 * L, 2 * L), dtype=complex)
    M[:L, :L] = hm
    M[:L, L:] = delta
    M[L:, :L] = -delta.conj()
    M[L:, L:] = -hm.T
    if include_gamma:
        M += monitoring_term(params)
    return M


def monitoring_term(params: ModelParams) -> np.ndarray:
    """BdG image of -i gamma/2 sum_j n_j (without its scalar part)."""
    L = params.L
    return -0.5j * params.gamma * np.diag(np.concatenate([np.ones(L), -np.ones(L)]))


def momentum_block(matrix: np.ndarray, k: float) -> np.ndarray:
    """2x2 momentum block of a translation-invariant 2L x 2L matrix.

    Uses the first row of each L x L block: block_ab(k) = sum_n e^{ikn} M_ab[0, n],
    with n the minimal-image offset in (-L/2, L/2] so that momenta off the
    lattice grid are also handled for short-ranged matrices.
    """
    L = matrix.shape[0] // 2
    n = np.arange(L)
    offsets = np.where(n > L // 2, n - L, n)
    phase = np.exp(1j * k * offsets)
    out = np.empty((2, 2), dtype=complex)
    for a in range(2):
        for b in range(2):
            out[a, b] = np.dot(matrix[a * L, b * L : (b + 1) * L], phase)
    return out
