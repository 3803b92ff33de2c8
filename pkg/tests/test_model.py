import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import v0_squared_mp
from qjreplica.model import (
    ModelParams,
    bdg_matrix,
    dispersion,
    group_velocity,
    hopping_matrix,
    momentum_block,
    monitoring_term,
    pairing_matrix,
    v0_squared,
)

couplings = st.floats(-2.0, 2.0, allow_nan=False)
momenta = st.floats(-math.pi, math.pi, allow_nan=False)


class TestParams:
    def test_defaults(self):
        p = ModelParams()
        assert (p.J, p.eta, p.h, p.gamma, p.L, p.boundary) == (1.0, 0.5, 0.0, 0.5, 32, "periodic")

    @pytest.mark.parametrize(
        "kwargs",
        [{"gamma": -0.1}, {"L": 0}, {"J": math.inf}, {"eta": math.nan}, {"boundary": "twisted"}, {"L": 2.5}],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelParams(**kwargs)

    def test_momentum_grid(self):
        assert np.allclose(ModelParams(L=4).momenta(), [0, math.pi / 2, math.pi, 3 * math.pi / 2])


class TestDispersion:
    def test_gap_closes_at_half_pi(self):
        assert dispersion(ModelParams(J=1, eta=0, h=0), math.pi / 2) == pytest.approx(0, abs=1e-15)

    @pytest.mark.parametrize("eta", [0.0, 0.3, 1.7])
    def test_zone_centre(self, eta):
        assert dispersion(ModelParams(J=1, eta=eta, h=0), 0.0) == pytest.approx(2.0)

    def test_matches_block_eigenvalues(self):
        p = ModelParams(J=0.7, eta=0.3, h=0.5, L=8)
        block = momentum_block(bdg_matrix(p), 1.1)
        ev = np.linalg.eigvalsh(block)
        assert ev[1] == pytest.approx(dispersion(p, 1.1), abs=1e-12)
        assert ev[0] == pytest.approx(-dispersion(p, 1.1), abs=1e-12)

    @given(couplings, couplings, couplings, momenta)
    def test_even_in_k(self, J, eta, h, k):
        p = ModelParams(J=J, eta=eta, h=h)
        assert dispersion(p, -k) == pytest.approx(dispersion(p, k), abs=1e-12)

    @given(couplings, couplings, momenta)
    def test_u1_reduction(self, J, h, k):
        p = ModelParams(J=J, eta=0.0, h=h)
        assert dispersion(p, k) == pytest.approx(abs(h - 2 * J * math.cos(k)), abs=1e-12)


class TestGroupVelocity:
    def test_zero_at_origin(self):
        v, degenerate = group_velocity(ModelParams(J=1.3, eta=0.4, h=0.2), 0.0)
        assert v == 0.0 and not degenerate

    def test_matches_central_difference(self):
        p = ModelParams(J=1, eta=1, h=0)
        k, d = math.pi / 4, 1e-6
        fd = (dispersion(p, k + d) - dispersion(p, k - d)) / (2 * d)
        assert group_velocity(p, k)[0] == pytest.approx(fd, abs=1e-8)

    def test_generic_point_against_difference(self):
        p = ModelParams(J=0.8, eta=0.6, h=0.3)
        k, d = 0.9, 1e-6
        fd = (dispersion(p, k + d) - dispersion(p, k - d)) / (2 * d)
        assert group_velocity(p, k)[0] == pytest.approx(fd, abs=1e-8)

    def test_degenerate_point_flagged(self):
        v, degenerate = group_velocity(ModelParams(J=1, eta=0, h=0), math.pi / 2)
        assert degenerate
        assert math.isfinite(v)

    def test_array_input(self):
        k = np.linspace(-3, 3, 7)
        v, degenerate = group_velocity(ModelParams(J=1, eta=0.5, h=0.1), k)
        assert v.shape == k.shape and degenerate.shape == k.shape

    @given(couplings, couplings, couplings, momenta)
    def test_odd_in_k(self, J, eta, h, k):
        p = ModelParams(J=J, eta=eta, h=h)
        v_plus, deg_plus = group_velocity(p, k)
        v_minus, deg_minus = group_velocity(p, -k)
        if not (deg_plus or deg_minus):
            assert v_minus == pytest.approx(-v_plus, abs=1e-9)


class TestBdg:
    def test_two_site_hopping_spectrum(self):
        p = ModelParams(J=1, eta=0, h=0, L=2)
        ev = np.sort(np.linalg.eigvalsh(bdg_matrix(p)))
        xi = np.sort(np.concatenate([dispersion(p, p.momenta()), -dispersion(p, p.momenta())]))
        assert np.allclose(ev, xi, atol=1e-12)
        assert np.allclose(np.sort(np.abs(ev)), [2, 2, 2, 2])

    def test_monitoring_difference(self):
        p = ModelParams(L=5, gamma=0.8)
        diff = bdg_matrix(p, include_gamma=True) - bdg_matrix(p)
        expected = -0.4j * np.diag(np.r_[np.ones(5), -np.ones(5)])
        assert np.allclose(diff, expected)
        assert np.allclose(monitoring_term(p), expected)

    def test_pairing_antisymmetric(self):
        D = pairing_matrix(ModelParams(L=4, eta=0.5))
        assert np.max(np.abs(D + D.T)) < 1e-15

    def test_block_structure(self):
        p = ModelParams(L=6, J=0.7, eta=0.4, h=0.3)
        M = bdg_matrix(p)
        hm, D = hopping_matrix(p), pairing_matrix(p)
        assert np.allclose(M, M.conj().T)
        assert np.allclose(M[:6, :6], hm) and np.allclose(M[:6, 6:], D)
        assert np.allclose(M[6:, :6], -D.conj()) and np.allclose(M[6:, 6:], -hm.T)

    def test_open_single_site(self):
        M = bdg_matrix(ModelParams(L=1, boundary="open", h=0.4))
        assert M.shape == (2, 2)
        assert np.allclose(M, np.diag([-0.4, 0.4]))

    def test_momentum_block_closed_form(self):
        p = ModelParams(J=0.9, eta=0.35, h=0.2, L=10)
        for k in p.momenta():
            eps = 2 * p.J * math.cos(k) - p.h
            pair = 2j * p.eta * math.sin(k)
            assert np.allclose(momentum_block(bdg_matrix(p), k), [[eps, pair], [-pair, -eps]], atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(couplings, couplings, couplings, st.integers(3, 12))
    def test_fourier_consistency(self, J, eta, h, L):
        p = ModelParams(J=J, eta=eta, h=h, L=L)
        ev = np.sort(np.linalg.eigvalsh(bdg_matrix(p)))
        xi = dispersion(p, p.momenta())
        assert np.allclose(ev, np.sort(np.r_[xi, -xi]), atol=1e-10)


class TestV0Squared:
    def test_hopping_only_analytic(self):
        assert v0_squared(ModelParams(J=1, eta=0, h=0)) == pytest.approx(2.0, abs=1e-6)

    def test_flat_band(self):
        assert v0_squared(ModelParams(J=0, eta=0, h=1)) == pytest.approx(0.0, abs=1e-15)

    def test_grid_refinement(self):
        p = ModelParams(J=1, eta=1, h=0)
        assert abs(v0_squared(p, 4096) - v0_squared(p, 8192)) <= 1e-8

    def test_grid_refinement_generic(self):
        p = ModelParams(J=1, eta=0.6, h=0.7)
        assert abs(v0_squared(p, 4096) - v0_squared(p, 8192)) <= 1e-8

    @pytest.mark.parametrize("J,eta,h", [(1, 0, 0), (1, 0.5, 0.3), (1, 1, 0.2), (0.7, 0.2, 1.1)])
    def test_against_adaptive_quadrature(self, J, eta, h):
        assert v0_squared(ModelParams(J=J, eta=eta, h=h)) == pytest.approx(v0_squared_mp(J, eta, h), abs=1e-6)
