import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_lindblad_moments, dense_retarded, retarded_time_domain
from qjreplica import exactsmall as ex
from qjreplica import gaussian as gs
from qjreplica.errors import ConvergenceError, IntegrationError
from qjreplica.lindblad import (
    MomentState,
    evolve_moments,
    green_inverse,
    green_retarded,
    moment_trajectory,
    steady_state,
    upper_half_plane_winding,
)
from qjreplica.model import ModelParams, dispersion


def random_moments(L: int, seed: int) -> tuple[MomentState, np.ndarray]:
    s = gs.random_state(L, np.random.default_rng(seed))
    C, F = gs.correlations(s)
    psi = ex.gaussian_to_dense(s.W).psi
    return MomentState(C, F), np.outer(psi, psi.conj())


class TestMoments:
    def test_nambu_round_trip(self):
        m, _ = random_moments(4, 0)
        back = MomentState.from_nambu(m.nambu())
        assert np.allclose(back.C, m.C) and np.allclose(back.F, m.F)

    def test_diagonal_fixed_point(self):
        p = ModelParams(L=4, J=0, eta=0, h=0, gamma=1.0)
        m = MomentState.from_occupations([1, 0, 0, 1])
        out = evolve_moments(m, 2.0, p)
        assert np.array_equal(out.C, m.C) and np.array_equal(out.F, m.F)

    def test_matches_dense_lindblad(self):
        p = ModelParams(L=3, J=1.0, eta=0.5, h=0.3, gamma=0.7)
        m, rho = random_moments(3, 4)
        out = evolve_moments(m, 2.0, p, dt_inner=1e-4)
        C, F = dense_lindblad_moments(p, rho, 2.0)
        assert np.max(np.abs(out.C - C)) <= 1e-8
        assert np.max(np.abs(out.F - F)) <= 1e-8

    def test_unitary_limit_preserves_purity(self):
        p = ModelParams(L=5, gamma=0.0, h=0.4)
        m, _ = random_moments(5, 8)
        out = evolve_moments(m, 3.0, p)
        G = out.nambu()
        assert np.max(np.abs(G @ G - G)) <= 1e-8
        assert np.linalg.norm(G) == pytest.approx(np.linalg.norm(m.nambu()), abs=1e-8)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_structure_preserved(self, seed):
        p = ModelParams(L=4, J=1.0, eta=0.7, h=0.1, gamma=0.9)
        m, _ = random_moments(4, seed)
        out = evolve_moments(m, 0.5, p)
        assert np.max(np.abs(out.C - out.C.conj().T)) <= 1e-12
        assert np.max(np.abs(out.F + out.F.T)) <= 1e-12

    def test_number_conserved_without_pairing(self):
        p = ModelParams(L=6, eta=0.0, gamma=0.8, h=0.2)
        m = MomentState.from_occupations([1, 1, 0, 1, 0, 0])
        out = evolve_moments(m, 4.0, p)
        assert np.trace(out.C).real == pytest.approx(3.0, abs=1e-12)

    def test_unphysical_spectrum_rejected(self):
        p = ModelParams(L=2, J=0, eta=0, h=0)
        bad = MomentState(np.diag([1.5, 0.0]).astype(complex), np.zeros((2, 2), dtype=complex))
        with pytest.raises(IntegrationError):
            evolve_moments(bad, 0.1, p)

    def test_trajectory_sampling(self):
        p = ModelParams(L=4, gamma=0.5)
        m = MomentState.from_occupations([1, 0, 1, 0])
        series = moment_trajectory(m, [0.5, 1.0], p)
        direct = evolve_moments(m, 1.0, p)
        assert np.allclose(series[-1].C, direct.C, atol=1e-12)


class TestSteadyState:
    def test_infinite_temperature(self):
        p = ModelParams(L=6, J=1.0, eta=0.5, h=0.3, gamma=0.5)
        ss = steady_state(p)
        assert np.max(np.abs(ss.C - 0.5 * np.eye(6))) <= 1e-8
        assert np.max(np.abs(ss.F)) <= 1e-8

    def test_no_monitoring(self):
        with pytest.raises(ConvergenceError):
            steady_state(ModelParams(L=4, gamma=0.0))

    def test_commuting_dissipator(self):
        p = ModelParams(L=4, J=0, eta=0, h=1.0, gamma=1.0)
        init = MomentState.from_occupations([1, 1, 0, 1])
        ss = steady_state(p, init)
        assert np.allclose(ss.C, init.C) and np.allclose(ss.F, 0)


class TestGreen:
    def test_diagonal_example(self):
        G = green_retarded(ModelParams(J=1, h=0, eta=0, gamma=1), 0.0, 0.0).G_R
        assert np.allclose(G, np.diag([1 / (-2 + 0.5j), 1 / (2 + 0.5j)]))

    @given(st.floats(-math.pi, math.pi), st.floats(-5, 5))
    def test_u1_off_diagonal_zero(self, q, omega):
        G = green_retarded(ModelParams(J=1, eta=0, h=0.3, gamma=0.4), q, omega).G_R
        assert G[0, 1] == 0 and G[1, 0] == 0

    @given(st.floats(-math.pi, math.pi), st.floats(-5, 5), st.floats(0.05, 2.0))
    def test_determinant(self, q, omega, gamma):
        p = ModelParams(J=1, eta=0.6, h=0.2, gamma=gamma)
        det = np.linalg.det(green_inverse(p, q, omega))
        assert det == pytest.approx((omega + 0.5j * gamma) ** 2 - dispersion(p, q) ** 2, abs=1e-10)

    @pytest.mark.parametrize("gamma", [0.3, 1.0])
    @pytest.mark.parametrize("q,omega", [(0.0, 0.4), (0.9, -1.3), (2.2, 2.0)])
    def test_time_domain_oracle(self, gamma, q, omega):
        p = ModelParams(J=1, eta=0.5, h=0.3, gamma=gamma)
        assert np.max(np.abs(retarded_time_domain(p, q, omega) - green_retarded(p, q, omega).G_R)) <= 1e-6

    def test_many_body_dense_oracle(self):
        p = ModelParams(J=1, eta=0.5, h=0.3, gamma=0.6, L=3)
        for q in p.momenta():
            for omega in (-1.1, 0.0, 0.8):
                G = dense_retarded(p, q, omega)
                assert np.max(np.abs(G - green_retarded(p, q, omega).G_R)) <= 1e-6

    @pytest.mark.parametrize("q", [0.0, 0.7, math.pi / 2, 2.9])
    def test_no_upper_half_plane_poles(self, q):
        assert upper_half_plane_winding(ModelParams(J=1, eta=0.5, h=0.3, gamma=0.4), q) == 0

    @pytest.mark.parametrize("sign", [1, -1])
    def test_poles_in_lower_half_plane(self, sign):
        p = ModelParams(J=1, eta=0.5, h=0.3, gamma=0.4)
        pole = sign * dispersion(p, 0.3) - 0.2j
        assert abs(np.linalg.det(green_inverse(p, 0.3, pole))) < 1e-12

    @given(st.floats(-math.pi, math.pi), st.floats(-10, 10), st.floats(0, 10))
    def test_finite_above_axis(self, q, omega, delta):
        G = green_retarded(ModelParams(J=1, eta=0.5, h=0.2, gamma=0.3), q, omega + 1j * delta).G_R
        assert np.all(np.isfinite(G))
