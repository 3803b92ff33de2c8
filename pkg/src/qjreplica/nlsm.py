"""Sigma-model coefficients and the one-loop flow of the coupling.

The stiffness of the long-wavelength action is 2 rho (1 - rho) v0 / gamma,
with v0^2 the Brillouin-zone mean of the squared group velocity and rho the
density parameter of the saddle. The bare coupling g_B is reported as the
inverse stiffness; no other normalization is applied.

The coupling flows as dg/dl = (R - 2) g^2 / (8 pi), l = ln L, whose
solution g(l) = g0 / (1 - (R - 2) g0 l / (8 pi)) grows to a pole at
l* = 8 pi / ((R - 2) g0) when R > 2 and decays when R < 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InfiniteCoefficientError
from .model import ModelParams, v0_squared

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.diag([1.0, -1.0])
T_ZZ = np.kron(SIGMA_Z, SIGMA_Z)
POLE_FRACTION = 0.9
G_B_CONVENTION = "g_B = 1 / (2 rho (1 - rho) v0 / gamma)"


@dataclass(frozen=True)
class NlsmCoefficients:
    """Coefficients of the sigma-model action for one parameter set."""

    v0_squared: float
    gamma: float
    D: float
    rho: float
    nu: float
    stiffness: float
    g_B: float

    def to_json(self) -> str:
        body = {k: _fmt(v) for k, v in asdict(self).items()}
        body["g_B_convention"] = G_B_CONVENTION
        return json.dumps(body, indent=2)


def _fmt(x: float):
    return float(format(x, ".17g")) if math.isfinite(x) else str(x)


def coefficients(params: ModelParams, rho: float = 0.5, n_k: int = 4096) -> NlsmCoefficients:
    """Diffusion constant, stiffness and bare coupling.

    Raises
    ------
    InfiniteCoefficientError
        If gamma = 0, where D = v0^2 / gamma diverges.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if params.gamma == 0:
        raise InfiniteCoefficientError("diffusion constant diverges at gamma = 0")
    v2 = v0_squared(params, n_k)
    stiffness = 2.0 * rho * (1.0 - rho) * math.sqrt(v2) / params.gamma
    return NlsmCoefficients(
        v0_squared=v2,
        gamma=params.gamma,
        D=v2 / params.gamma,
        rho=rho,
        nu=4.0 * rho * (1.0 - rho),
        stiffness=stiffness,
        g_B=1.0 / stiffness if stiffness > 0 else math.inf,
    )


def saddle_matrix(rho: float) -> np.ndarray:
    """Single-replica saddle (1 - 2 rho) sigma_z tau_z + sqrt(nu) sigma_x tau_0.

    It squares to one for every rho in [0, 1].
    """
    nu = 4.0 * rho * (1.0 - rho)
    return (1.0 - 2.0 * rho) * T_ZZ + math.sqrt(nu) * np.kron(SIGMA_X, np.eye(2))


def density_from_saddle(Q: np.ndarray) -> float:
    """rho = 1/2 - Tr[Q sigma_z tau_z] / 8."""
    return float(0.5 - np.trace(Q @ T_ZZ).real / 8.0)


def trace_identity_residual(rho: float) -> float:
    """|2 (1 - nu) - (Tr[Q T_zz])^2 / 8| for the saddle at density rho."""
    nu = 4.0 * rho * (1.0 - rho)
    tr = np.trace(saddle_matrix(rho) @ T_ZZ).real
    return abs(2.0 * (1.0 - nu) - tr * tr / 8.0)


@dataclass(frozen=True)
class FlowState:
    g: float
    lnL: float
    R: float


@dataclass
class FlowResult:
    """RK4 flow on a uniform ln L grid.

    ``pole`` is the finite-scale divergence l*, or inf. When l* lies inside
    the requested range the grid stops at 0.9 l* and ``truncated`` is set.
    """

    lnL: np.ndarray
    g: np.ndarray
    R: float
    direction: str
    pole: float
    truncated: bool

    def states(self) -> list[FlowState]:
        return [FlowState(float(g), float(l), self.R) for l, g in zip(self.lnL, self.g)]

    def to_csv(self) -> str:
        rows = ["lnL,g"] + [f"{l:.17g},{g:.17g}" for l, g in zip(self.lnL, self.g)]
        return "\n".join(rows) + "\n"


def beta(g: float, R: float) -> float:
    return (R - 2.0) * g * g / (8.0 * math.pi)


def closed_form(g0: float, R: float, lnL):
    return g0 / (1.0 - (R - 2.0) * g0 * np.asarray(lnL) / (8.0 * math.pi))


def pole_location(g0: float, R: float) -> float:
    if R > 2 and g0 > 0:
        return 8.0 * math.pi / ((R - 2.0) * g0)
    return math.inf


def flow_direction(g0: float, R: float) -> str:
    if g0 == 0 or R == 2:
        return "marginal"
    return "weak" if R < 2 else "strong"


def beta_flow(g0: float, R: float, lnL_max: float, steps: int = 1000) -> FlowResult:
    """Integrate dg/dl = (R - 2) g^2 / (8 pi) with fixed-step RK4."""
    if g0 < 0:
        raise ValueError("g0 must be non-negative")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if lnL_max <= 0:
        raise ValueError("lnL_max must be positive")
    pole = pole_location(g0, R)
    end, truncated = lnL_max, False
    if pole <= lnL_max:
        end, truncated = POLE_FRACTION * pole, True
    grid = np.linspace(0.0, end, steps + 1)
    h = end / steps
    g = np.empty(steps + 1)
    g[0] = g0
    for n in range(steps):
        y = g[n]
        k1 = beta(y, R)
        k2 = beta(y + 0.5 * h * k1, R)
        k3 = beta(y + 0.5 * h * k2, R)
        k4 = beta(y + h * k3, R)
        g[n + 1] = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return FlowResult(grid, g, R, flow_direction(g0, R), pole, truncated)
