"""Unconditional dynamics: one-body moments and the retarded Green's function.

The averaged state obeys the Lindblad equation with jump operators n_j.
Writing the moments as the 2L x 2L matrix G = <alpha alpha†>, with
alpha = (c, c†),

    G = [[1 - C^T, -F], [F*, C]],

the adjoint Lindbladian closes on G:

    dG/dt = -i [M, G] - gamma (G - diag G),

since [n_k, [n_k, c_i c†_j]] summed over k gives 2 (1 - delta_ij) c_i c†_j
and the same sum for c_i c_j gives 2 c_i c_j (i != j). Dephasing therefore
damps every site-off-diagonal element of C and F at rate gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, IntegrationError
from .model import ModelParams, bdg_matrix

SPECTRUM_WINDOW = 1e-8
STEADY_RESIDUAL = 1e-10


@dataclass(frozen=True)
class MomentState:
    """Two-point functions C_ij = <c†_i c_j>, F_ij = <c_j c_i> at a time."""

    C: np.ndarray
    F: np.ndarray
    time: float = 0.0

    @classmethod
    def from_occupations(cls, occupations: Sequence[int]) -> "MomentState":
        occ = np.asarray(occupations, dtype=float)
        L = occ.size
        return cls(np.diag(occ).astype(complex), np.zeros((L, L), dtype=complex))

    @classmethod
    def from_nambu(cls, G: np.ndarray, time: float = 0.0) -> "MomentState":
        L = G.shape[0] // 2
        return cls(G[L:, L:].copy(), G[L:, :L].conj().copy(), time)

    def nambu(self) -> np.ndarray:
        L = self.C.shape[0]
        G = np.empty((2 * L, 2 * L), dtype=complex)
        G[:L, :L] = np.eye(L) - self.C.T
        G[:L, L:] = -self.F
        G[L:, :L] = self.F.conj()
        G[L:, L:] = self.C
        return G


@dataclass(frozen=True)
class SaddleGreen:
    """Retarded Green's function at (q, omega) of the replica-symmetric saddle.

    ``lambda_R`` and ``lambda_A`` are the retarded and advanced signs of the
    saddle matrix.
    """

    q: float
    omega: complex
    G_R: np.ndarray
    lambda_R: int = 1
    lambda_A: int = -1


def moment_rhs(G: np.ndarray, M: np.ndarray, gamma: float) -> np.ndarray:
    """Time derivative of the Nambu moment matrix."""
    comm = M @ G - G @ M
    return -1j * comm - gamma * (G - np.diag(np.diagonal(G)))


def default_inner_step(params: ModelParams) -> float:
    scale = max(abs(params.J), params.gamma, abs(params.h), abs(params.eta))
    return 1e-3 / scale if scale > 0 else 1e-3


def _rk4(G: np.ndarray, M: np.ndarray, gamma: float, h: float, n: int) -> np.ndarray:
    for _ in range(n):
        k1 = moment_rhs(G, M, gamma)
        k2 = moment_rhs(G + 0.5 * h * k1, M, gamma)
        k3 = moment_rhs(G + 0.5 * h * k2, M, gamma)
        k4 = moment_rhs(G + h * k3, M, gamma)
        G = G + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return G


def evolve_moments(state: MomentState, dt: float, params: ModelParams, dt_inner: float | None = None) -> MomentState:
    """Advance the moments by ``dt`` with fixed-step RK4.

    Raises
    ------
    IntegrationError
        If the spectrum of C leaves [-1e-8, 1 + 1e-8].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    h_max = dt_inner if dt_inner is not None else default_inner_step(params)
    if h_max <= 0:
        raise ValueError("dt_inner must be positive")
    n = max(1, math.ceil(dt / h_max - 1e-9))
    G = _rk4(state.nambu(), bdg_matrix(params), params.gamma, dt / n, n)
    out = MomentState.from_nambu(G, state.time + dt)
    _check_spectrum(out.C)
    return out


def moment_trajectory(
    state: MomentState, times: Sequence[float], params: ModelParams, dt_inner: float | None = None
) -> list[MomentState]:
    """Moments at each of the increasing ``times`` (measured from state.time)."""
    out = []
    current = state
    for t in times:
        step = t - (current.time - state.time)
        if step > 0:
            current = evolve_moments(current, step, params, dt_inner)
        out.append(current)
    return out


def _check_spectrum(C: np.ndarray):
    herm = 0.5 * (C + C.conj().T)
    ev = np.linalg.eigvalsh(herm)
    if ev[0] < -SPECTRUM_WINDOW or ev[-1] > 1 + SPECTRUM_WINDOW:
        raise IntegrationError(f"spectrum of C left [0,1]: [{ev[0]:.3e}, {ev[-1]:.3e}]")


def steady_state(params: ModelParams, initial: MomentState | None = None, check_every: float = 1.0) -> MomentState:
    """Integrate the moments until max |dG/dt| < 1e-10.

    Starts from ``initial`` (default: the 1010... product state) and gives up
    at t = 1000/gamma.

    Raises
    ------
    ConvergenceError
        For gamma = 0, or when the residual is still above threshold at the
        time limit.
    """
    if params.gamma <= 0:
        raise ConvergenceError("no relaxation without monitoring (gamma = 0)", residual=float("inf"))
    if initial is None:
        initial = MomentState.from_occupations([1 - (j % 2) for j in range(params.L)])
    M = bdg_matrix(params)
    h_max = default_inner_step(params)
    n = max(1, math.ceil(check_every / h_max))
    h = check_every / n
    G = initial.nambu()
    t = initial.time
    t_max = 1e3 / params.gamma
    while True:
        residual = float(np.max(np.abs(moment_rhs(G, M, params.gamma))))
        if residual < STEADY_RESIDUAL:
            return MomentState.from_nambu(G, t)
        if t - initial.time >= t_max:
            raise ConvergenceError(f"residual {residual:.3e} after t = {t_max:.3g}", residual=residual)
        G = _rk4(G, M, params.gamma, h, n)
        t += check_every


def green_inverse(params: ModelParams, q: float, omega: complex) -> np.ndarray:
    J, eta, h, gamma = params.J, params.eta, params.h, params.gamma
    eps = 2.0 * J * math.cos(q) - h
    pair = 2j * eta * math.sin(q)
    return np.array(
        [[omega - eps + 0.5j * gamma, -pair], [pair, omega + eps + 0.5j * gamma]],
        dtype=complex,
    )


def green_retarded(params: ModelParams, q: float, omega: complex) -> SaddleGreen:
    """Closed-form retarded Green's function (omega - H_eff(q))^{-1}.

    H_eff(q) is the 2x2 BdG block at momentum q shifted by -i gamma/2; its
    inverse has determinant (omega + i gamma/2)^2 - xi_q^2.
    """
    Ginv = green_inverse(params, q, omega)
    a, b, c, d = Ginv[0, 0], Ginv[0, 1], Ginv[1, 0], Ginv[1, 1]
    det = a * d - b * c
    if det == 0:
        raise ZeroDivisionError(f"pole of the retarded function at omega={omega}")
    G = np.array([[d, -b], [-c, a]]) / det
    return SaddleGreen(q, omega, G)


def upper_half_plane_winding(params: ModelParams, q: float, omega_max: float = 50.0, height: float = 50.0, n: int = 4000) -> int:
    """Number of poles of G^R(q, .) inside [-omega_max, omega_max] x [0, height].

    Counts zeros of det G^R^{-1} with the argument principle along the
    rectangle boundary.
    """
    corners = [complex(-omega_max, 0), complex(omega_max, 0), complex(omega_max, height), complex(-omega_max, height)]
    pts = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        s = np.linspace(0.0, 1.0, n, endpoint=False)
        pts.append(a + (b - a) * s)
    z = np.concatenate(pts + [np.array([corners[0]])])
    dets = np.array([np.linalg.det(green_inverse(params, q, w)) for w in z])
    phase = np.unwrap(np.angle(dets))
    return int(round((phase[-1] - phase[0]) / (2 * np.pi)))
