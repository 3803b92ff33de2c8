"""Symmetry-generator sectors of the replicated Keldysh-Nambu action.

Generators of the rotations acting on the 4R-dimensional Keldysh (sigma)
x Nambu (tau) x replica space are expanded as X = sum_ij (sigma_i x tau_j) x W_ij.
The structural constraints (unitarity and C X* C = X with
C = sigma_x x tau_x) and the commutation constraints [X, M] = 0 fix each
sector W_ij to be zero, real antisymmetric ("A,R") or imaginary symmetric
("S,I"). Counting free parameters identifies the symmetry groups G and H
and hence the sigma-model manifold and its symmetry class.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import ConstraintViolation, PrecisionWarning

PAULI_LABELS = ("0", "x", "y", "z")
PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

# (sigma, tau) index pairs
CONJUGATION = (1, 1)
INTERACTION = (1, 3)
TIGHT_BINDING = (0, 3)
PAIRING = (0, 2)
SADDLE = (3, 0)

ZERO, ANTISYM_REAL, SYM_IMAG = "zero", "A,R", "S,I"

NULLSPACE_THRESHOLD = 1e-9
GAP_RATIO = 10.0


def pauli_anticommute(a: int, b: int) -> bool:
    return a != 0 and b != 0 and a != b


def products_anticommute(p: tuple, q: tuple) -> bool:
    """Whether sigma_p0 tau_p1 and sigma_q0 tau_q1 anticommute."""
    return pauli_anticommute(p[0], q[0]) != pauli_anticommute(p[1], q[1])


def conjugation_sign(b: tuple, c: tuple = CONJUGATION) -> int:
    """Sign s in C B* C = s B for Pauli products B and C (C real, C^2 = 1)."""
    s = 1
    for pb, pc in zip(b, c):
        if pb == 2:  # sigma_y is the only imaginary Pauli matrix
            s = -s
        if pauli_anticommute(pb, pc):
            s = -s
    return s


@dataclass(frozen=True)
class ConstraintScenario:
    """Which couplings are present, and whether the saddle must be invariant."""

    J_nonzero: bool = True
    eta_nonzero: bool = True
    gamma_nonzero: bool = True
    saddle_invariance: bool = False

    def commutants(self) -> list[tuple]:
        out = []
        if self.gamma_nonzero:
            out.append(INTERACTION)
        if self.J_nonzero:
            out.append(TIGHT_BINDING)
        if self.eta_nonzero:
            out.append(PAIRING)
        if self.saddle_invariance:
            out.append(SADDLE)
        return out

    def with_saddle(self, flag: bool = True) -> "ConstraintScenario":
        return ConstraintScenario(self.J_nonzero, self.eta_nonzero, self.gamma_nonzero, flag)

    @property
    def name(self) -> str:
        if not (self.J_nonzero or self.eta_nonzero or self.gamma_nonzero):
            return "structural"
        if self.gamma_nonzero and self.J_nonzero and not self.eta_nonzero:
            return "u1"
        if self.gamma_nonzero and self.J_nonzero and self.eta_nonzero:
            return "general"
        if self.gamma_nonzero and self.eta_nonzero and not self.J_nonzero:
            return "pairing"
        return "custom"


STRUCTURAL = ConstraintScenario(False, False, False)
U1 = ConstraintScenario(J_nonzero=True, eta_nonzero=False)
GENERAL = ConstraintScenario(J_nonzero=True, eta_nonzero=True)
PAIRING_ONLY = ConstraintScenario(J_nonzero=False, eta_nonzero=True)


@dataclass(frozen=True)
class SectorTable:
    """Cell type for every (sigma_i, tau_j); ``cells[j][i]`` is row tau_j, column sigma_i."""

    cells: tuple

    def cell(self, sigma: int, tau: int) -> str:
        return self.cells[tau][sigma]

    def counts(self) -> tuple[int, int]:
        flat = [c for row in self.cells for c in row]
        return flat.count(ANTISYM_REAL), flat.count(SYM_IMAG)

    def serialize(self) -> list[list[str]]:
        """Rows tau_0..tau_z, columns sigma_0..sigma_z; blank for zero cells."""
        return [["" if c == ZERO else c for c in row] for row in self.cells]


def sector_table(scenario: ConstraintScenario) -> SectorTable:
    """Sector structure from the Pauli sign algebra."""
    commutants = scenario.commutants()
    rows = []
    for tau in range(4):
        row = []
        for sigma in range(4):
            b = (sigma, tau)
            if any(products_anticommute(b, m) for m in commutants):
                row.append(ZERO)
            elif conjugation_sign(b) == 1:
                row.append(ANTISYM_REAL)
            else:
                row.append(SYM_IMAG)
        rows.append(tuple(row))
    return SectorTable(tuple(rows))


@dataclass(frozen=True)
class Polynomial:
    """N_f(R) = a R^2 + b R with rational coefficients."""

    a: Fraction
    b: Fraction

    def __call__(self, R) -> Fraction:
        return self.a * R * R + self.b * R

    def __str__(self) -> str:
        terms = []
        for coeff, power in ((self.a, "R^2"), (self.b, "R")):
            if coeff == 0:
                continue
            mag = abs(coeff)
            text = power if mag == 1 else f"{mag}{power}" if mag.denominator == 1 else f"({mag}){power}"
            sign = "-" if coeff < 0 else "+"
            terms.append((sign, text))
        if not terms:
            return "0"
        out = ("-" if terms[0][0] == "-" else "") + terms[0][1]
        for sign, text in terms[1:]:
            out += f" {sign} {text}"
        return out


def parameter_polynomial(table: SectorTable) -> Polynomial:
    n_a, n_s = table.counts()
    return Polynomial(Fraction(n_a + n_s, 2), Fraction(n_s - n_a, 2))


def free_parameter_count(table: SectorTable, R: int) -> int:
    """Antisymmetric cells carry (R^2 - R)/2 parameters, symmetric ones (R^2 + R)/2."""
    if R < 1:
        raise ValueError("R must be >= 1")
    n_a, n_s = table.counts()
    return n_a * (R * R - R) // 2 + n_s * (R * R + R) // 2


GROUP_DIMENSIONS = {
    "U(R)xU(R)": lambda R: 2 * R * R,
    "U(R)": lambda R: R * R,
    "O(R)xO(R)": lambda R: R * (R - 1),
    "O(R)": lambda R: R * (R - 1) // 2,
    "O(2R)": lambda R: R * (2 * R - 1),
}

# (G, H) -> (manifold, class, manifold dimension, parameters removed by det = 1)
COSET_LOOKUP = {
    ("U(R)xU(R)", "U(R)"): ("SU(R)", "AIII", lambda R: R * R - 1, 1),
    ("O(R)xO(R)", "O(R)"): ("SO(R)", "DIII", lambda R: R * (R - 1) // 2, 0),
    ("O(2R)", "U(R)"): ("SO(2R)/U(R)", "D", lambda R: R * (R - 1), 0),
}

MATCH_RANGE = range(1, 7)


def match_group(poly: Polynomial) -> str | None:
    for name, dim in GROUP_DIMENSIONS.items():
        if all(poly(R) == dim(R) for R in MATCH_RANGE):
            return name
    return None


@dataclass
class ClassResult:
    """Group identification for one physical regime."""

    scenario: ConstraintScenario
    g_table: SectorTable
    h_table: SectorTable
    nf_g: Polynomial
    nf_h: Polynomial
    G: str | None
    H: str | None
    manifold: str | None
    az_class: str | None

    @property
    def classified(self) -> bool:
        return self.az_class is not None

    def report(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "table": self.g_table.serialize(),
            "table_saddle": self.h_table.serialize(),
            "N_f": str(self.nf_g),
            "N_f_saddle": str(self.nf_h),
            "G": self.G,
            "H": self.H,
            "manifold": self.manifold,
            "class": self.az_class if self.classified else "unclassified",
        }


def classify_scenario(scenario: ConstraintScenario) -> ClassResult:
    """Identify G, H, G/H and the symmetry class by dimension matching.

    If either count matches no candidate group, or the pair is not in the
    coset lookup, the result is returned unclassified with both polynomials.
    """
    g_table = sector_table(scenario.with_saddle(False))
    h_table = sector_table(scenario.with_saddle(True))
    nf_g, nf_h = parameter_polynomial(g_table), parameter_polynomial(h_table)
    G, H = match_group(nf_g), match_group(nf_h)
    entry = COSET_LOOKUP.get((G, H))
    if entry is None:
        return ClassResult(scenario, g_table, h_table, nf_g, nf_h, G, H, None, None)
    manifold, az, _, _ = entry
    return ClassResult(scenario, g_table, h_table, nf_g, nf_h, G, H, manifold, az)


def coset_dimension_consistent(G: str, H: str) -> bool:
    """N_f(G) - N_f(H) equals dim(G/H) plus the det=1 bookkeeping for R = 1..6."""
    _, _, dim, correction = COSET_LOOKUP[(G, H)]
    return all(GROUP_DIMENSIONS[G](R) - GROUP_DIMENSIONS[H](R) == dim(R) + correction for R in MATCH_RANGE)


def pauli_product(p: tuple, R: int = 1) -> np.ndarray:
    """(sigma_p0 x tau_p1) x 1_R."""
    return np.kron(np.kron(PAULI[p[0]], PAULI[p[1]]), np.eye(R))


def _antihermitian_basis(n: int) -> list[np.ndarray]:
    basis = []
    for p in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[p, p] = 1j
        basis.append(E)
        for q in range(p + 1, n):
            A = np.zeros((n, n), dtype=complex)
            A[p, q], A[q, p] = 1, -1
            S = np.zeros((n, n), dtype=complex)
            S[p, q] = S[q, p] = 1j
            basis.extend([A, S])
    return basis


def nullspace_oracle(scenario: ConstraintScenario, R: int) -> int:
    """Numerical count of generators obeying all active constraints.

    The constraints C X* C = X and [X, M] = 0 are real-linear in the
    anti-Hermitian 4R x 4R generator X; the nullspace dimension of the
    stacked real constraint matrix is returned.
    """
    if not 1 <= R <= 3:
        raise ValueError("nullspace oracle supports R in 1..3")
    n = 4 * R
    C = pauli_product(CONJUGATION, R)
    Ms = [pauli_product(m, R) for m in scenario.commutants()]
    columns = []
    for X in _antihermitian_basis(n):
        parts = [C @ X.conj() @ C - X] + [X @ M - M @ X for M in Ms]
        flat = np.concatenate([p.reshape(-1) for p in parts])
        columns.append(np.concatenate([flat.real, flat.imag]))
    A = np.array(columns).T
    sv = np.linalg.svd(A, compute_uv=False)
    cutoff = NULLSPACE_THRESHOLD * sv[0]
    rank = int(np.sum(sv > cutoff))
    if 0 < rank < len(sv):
        above, below = sv[rank - 1], sv[rank]
        if below > 0 and above / below < GAP_RATIO:
            warnings.warn(f"singular-value gap ratio {above / below:.3g} below {GAP_RATIO}", PrecisionWarning)
    return A.shape[1] - rank


def random_special_orthogonal(R: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random SO(R) matrix from the QR of a Gaussian matrix."""
    Q, Rm = np.linalg.qr(rng.normal(size=(R, R)))
    Q = Q * np.sign(np.diagonal(Rm))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def rotation_from_blocks(v_plus: np.ndarray, v_minus: np.ndarray) -> np.ndarray:
    """Rotation [[A, B], [B, A]] (Keldysh blocks) with A = a x tau_0, B = b x tau_0.

    a = (V+ + V-)/2 and b = (V+ - V-)/2, so that a + b and a - b are the two
    orthogonal blocks.
    """
    a = 0.5 * (v_plus + v_minus)
    b = 0.5 * (v_plus - v_minus)
    return np.kron(np.kron(PAULI[0], PAULI[0]), a) + np.kron(np.kron(PAULI[1], PAULI[0]), b)


@dataclass
class RotationReport:
    residuals: dict = field(default_factory=dict)
    saddle_commutes: bool = False
    blocks_equal: bool = False


def verify_rotation_construction(
    R: int,
    rng: np.random.Generator | None = None,
    v_plus: np.ndarray | None = None,
    v_minus: np.ndarray | None = None,
    tol: float = 1e-10,
) -> RotationReport:
    """Build the block rotation from (V+, V-) in SO(R) and check every constraint.

    Raises
    ------
    ConstraintViolation
        If unitarity (C0), the conjugation constraint (C1) or any of the
        commutation constraints (C2-C4) fails beyond ``tol``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if v_plus is None or v_minus is None:
        rng = rng if rng is not None else np.random.default_rng()
        v_plus = random_special_orthogonal(R, rng) if v_plus is None else v_plus
        v_minus = random_special_orthogonal(R, rng) if v_minus is None else v_minus
    rot = rotation_from_blocks(v_plus, v_minus)
    n = rot.shape[0]
    C = pauli_product(CONJUGATION, R)
    res = {
        "C0": float(np.max(np.abs(rot.conj().T @ rot - np.eye(n)))),
        "C1": float(np.max(np.abs(C @ rot.conj() @ C - rot))),
    }
    for label, m in (("C2", INTERACTION), ("C3", TIGHT_BINDING), ("C4", PAIRING)):
        M = pauli_product(m, R)
        res[label] = float(np.max(np.abs(rot @ M - M @ rot)))
    Q = pauli_product(SADDLE, R)
    res["saddle"] = float(np.max(np.abs(rot @ Q - Q @ rot)))
    # Keldysh Hadamard brings the rotation to diag(V+, V-) x tau_0
    had = np.kron(np.kron((PAULI[1] + PAULI[3]) / np.sqrt(2), PAULI[0]), np.eye(R))
    target = np.kron(np.diag([1.0, 0.0]), np.kron(PAULI[0], v_plus)) + np.kron(np.diag([0.0, 1.0]), np.kron(PAULI[0], v_minus))
    res["block_form"] = float(np.max(np.abs(had @ rot @ had - target)))
    for label in ("C0", "C1", "C2", "C3", "C4", "block_form"):
        if res[label] > tol:
            raise ConstraintViolation(label, res[label])
    return RotationReport(
        residuals=res,
        saddle_commutes=res["saddle"] <= tol,
        blocks_equal=bool(np.max(np.abs(v_plus - v_minus)) <= tol),
    )


def all_scenarios() -> Iterable[ConstraintScenario]:
    return (U1, GENERAL, PAIRING_ONLY)
