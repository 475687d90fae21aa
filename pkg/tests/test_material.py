import numpy as np
import pytest

from app.errors import InvalidInput
from app.models import tensor as T
from app.models.material import (
    InternalState,
    MaterialParams,
    SpringParams,
    SpringState,
    dissipation_increment,
    elastic_moduli,
    elastic_stress,
    return_map,
    spring_return_map,
    yield_function,
)


def deviatoric(rng, scale=1.0):
    return T.deviator(rng.normal(size=6)) * scale


def explicit_integration(eps_end, p, n_sub):
    """Forward-Euler integration of the rate equations along a straight strain path from virgin."""
    eps_p = np.zeros(6)
    eps_r = np.zeros(6)
    kappa = 0.0
    two_mu = 2.0 * p.mu
    d_eps = np.asarray(eps_end) / n_sub
    for k in range(n_sub):
        eps = d_eps * k
        sigma = elastic_stress(eps - eps_p - eps_r, p)
        s = T.deviator(sigma)
        xi = s - p.H_kin * eps_p
        radius = T.SQRT23 * (p.sigma_p + p.H_iso * kappa)
        nxi = float(T.frobenius_norm(xi))
        if nxi >= radius:
            n = xi / nxi
            r = s / float(T.frobenius_norm(s))
            loading = two_mu * float(T.contract(n, T.deviator(d_eps)))
            if loading > 0.0:
                denom = two_mu * (1.0 + p.beta * float(T.contract(n, r))) + p.H_kin + 2.0 / 3.0 * p.H_iso
                dlam = loading / denom
                eps_p = eps_p + dlam * n
                eps_r = eps_r + p.beta * dlam * r
                kappa += T.SQRT23 * dlam
    return elastic_stress(eps_end - eps_p - eps_r, p)


def combined_hardening_return_map(eps, eps_p, kappa, p):
    """Classical radial return for linear isotropic plus kinematic hardening."""
    sigma = elastic_stress(eps - eps_p, p)
    xi = T.deviator(sigma) - p.H_kin * eps_p
    nxi = T.frobenius_norm(xi)
    f = nxi - T.SQRT23 * (p.sigma_p + p.H_iso * kappa)
    dlam = np.where(f > 0.0, f / (2.0 * p.mu + p.H_kin + 2.0 / 3.0 * p.H_iso), 0.0)
    n = xi / nxi[..., None]
    return sigma - 2.0 * p.mu * dlam[..., None] * n, eps_p + dlam[..., None] * n, kappa + T.SQRT23 * dlam


class TestParameters:
    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidInput):
            MaterialParams(E=-1.0, nu=0.3, sigma_p=1.0)
        with pytest.raises(InvalidInput):
            MaterialParams(E=1.0, nu=0.5, sigma_p=1.0)
        with pytest.raises(InvalidInput):
            MaterialParams(E=1.0, nu=0.3, sigma_p=1.0, beta=1.5)
        with pytest.raises(InvalidInput):
            MaterialParams(E=1.0, nu=0.3, sigma_p=1.0, ratchet_direction="sideways")

    def test_rejects_nan_strain(self, plate_material):
        eps = np.full(6, np.nan)
        with pytest.raises(InvalidInput):
            return_map(eps, InternalState.virgin(), plate_material)


class TestReturnMap:
    def test_elastic_below_yield(self, plate_material):
        eps = np.array([0.1, 0.0, 0.0, 0.0, 0.0, 0.0])
        result = return_map(eps, InternalState.virgin(), plate_material)
        assert not result.plastic_active
        assert np.allclose(result.sigma, elastic_stress(eps, plate_material))
        assert np.allclose(result.d_tan, elastic_moduli(plate_material))
        assert np.allclose(result.new_state.eps_p, 0.0)

    @pytest.mark.parametrize("beta", [0.0, 0.4])
    @pytest.mark.parametrize("direction", ["implicit", "trial"])
    def test_yield_consistency(self, plate_material, rng, beta, direction):
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, beta, direction)
        eps = np.stack([deviatoric(rng, 3.0) + 0.1 * rng.normal() * T.IDENTITY for _ in range(20)])
        result = return_map(eps, InternalState.virgin((20,)), p)
        assert result.plastic_active.all()
        f = yield_function(result.sigma, result.new_state, p)
        assert np.abs(f).max() <= 1e-8 * p.sigma_p

    def test_flow_is_deviatoric(self, plate_material, rng):
        eps = np.stack([deviatoric(rng, 3.0) + 0.2 * T.IDENTITY for _ in range(10)])
        new = return_map(eps, InternalState.virgin((10,)), plate_material).new_state
        assert np.abs(T.trace(new.eps_p)).max() < 1e-12
        assert np.abs(T.trace(new.eps_r)).max() < 1e-12

    def test_isotropic_variable_tracks_multiplier(self, plate_material, rng):
        eps = np.stack([deviatoric(rng, 3.0) for _ in range(10)])
        result = return_map(eps, InternalState.virgin((10,)), plate_material)
        assert np.allclose(result.new_state.kappa, T.SQRT23 * result.delta_lambda)
        assert np.allclose(T.frobenius_norm(result.new_state.eps_p), result.delta_lambda)

    def test_closed_form_without_ratcheting(self, rng):
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, 0.0)
        eps = deviatoric(rng, 3.0)
        result = return_map(eps, InternalState.virgin(), p)
        s_trial = T.deviator(elastic_stress(eps, p))
        expected = (T.frobenius_norm(s_trial) - T.SQRT23 * p.sigma_p) / p.a_modulus
        assert result.delta_lambda == pytest.approx(float(expected), rel=1e-12)

    def test_ratcheting_strain_follows_stress_deviator(self, plate_material, rng):
        eps = deviatoric(rng, 3.0)
        result = return_map(eps, InternalState.virgin(), plate_material)
        d_r = result.new_state.eps_r
        s = T.deviator(result.sigma)
        cosine = T.contract(d_r, s) / (T.frobenius_norm(d_r) * T.frobenius_norm(s))
        assert float(cosine) == pytest.approx(1.0, abs=1e-10)
        assert T.frobenius_norm(d_r) == pytest.approx(plate_material.beta * result.delta_lambda, rel=1e-10)

    def test_dissipation_nonnegative_on_random_paths(self, plate_material, rng):
        state = InternalState.virgin((8,))
        eps = np.zeros((8, 6))
        for _ in range(40):
            eps = eps + rng.normal(scale=0.3, size=(8, 6))
            result = return_map(eps, state, plate_material, compute_tangent=False)
            assert np.all(result.new_state.dissipation_cum - state.dissipation_cum >= -1e-10)
            state = result.new_state

    @pytest.mark.parametrize("beta", [0.0, 0.4])
    def test_tangent_matches_finite_differences(self, rng, beta):
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, beta)
        h = 1e-6
        checked = 0
        while checked < 10:
            eps = deviatoric(rng, 2.0) + 0.1 * rng.normal(size=6)
            base = return_map(eps, InternalState.virgin(), p)
            if not base.plastic_active:
                continue
            voigt = T.strain_to_voigt(eps)
            fd = np.zeros((6, 6))
            for k in range(6):
                dv = np.zeros(6)
                dv[k] = h
                plus = return_map(T.strain_from_voigt(voigt + dv), InternalState.virgin(), p, compute_tangent=False)
                minus = return_map(T.strain_from_voigt(voigt - dv), InternalState.virgin(), p, compute_tangent=False)
                fd[:, k] = (plus.sigma - minus.sigma) / (2.0 * h)
            scale = np.abs(base.d_tan).max()
            assert np.allclose(base.d_tan, fd, rtol=1e-4, atol=1e-4 * scale)
            checked += 1

    @pytest.mark.parametrize("beta", [0.0, 0.4])
    def test_tangent_matches_finite_differences_from_hardened_states(self, rng, beta):
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, beta)
        h = 1e-6
        checked = 0
        while checked < 50:
            eps0 = deviatoric(rng, 3.0)
            state = return_map(eps0, InternalState.virgin(), p, compute_tangent=False).new_state
            eps = eps0 + deviatoric(rng, 1.5) + 0.05 * rng.normal(size=6)
            base = return_map(eps, state, p)
            if not base.plastic_active or base.delta_lambda < 1e-4:
                continue
            assert state.kappa > 0.0
            assert T.frobenius_norm(p.H_kin * state.eps_p) > 0.0
            voigt = T.strain_to_voigt(eps)
            fd = np.zeros((6, 6))
            for k in range(6):
                dv = np.zeros(6)
                dv[k] = h
                plus = return_map(T.strain_from_voigt(voigt + dv), state, p, compute_tangent=False)
                minus = return_map(T.strain_from_voigt(voigt - dv), state, p, compute_tangent=False)
                fd[:, k] = (plus.sigma - minus.sigma) / (2.0 * h)
            scale = np.abs(base.d_tan).max()
            assert np.allclose(base.d_tan, fd, rtol=1e-4, atol=1e-4 * scale)
            checked += 1

    def test_perfect_plasticity_tangent_is_radial_return(self, rng):
        p = MaterialParams(205.0, 0.3, 100.0)
        for _ in range(10):
            eps = deviatoric(rng, 3.0) + 0.1 * rng.normal() * T.IDENTITY
            result = return_map(eps, InternalState.virgin(), p)
            assert result.plastic_active
            xi = T.to_mandel(T.deviator(elastic_stress(eps, p)))
            n = xi / np.linalg.norm(xi)
            theta = T.SQRT23 * p.sigma_p / np.linalg.norm(xi)
            ones = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
            p_dev = np.eye(6) - np.outer(ones, ones) / 3.0
            expected = p.bulk * np.outer(ones, ones) + 2.0 * p.mu * theta * (p_dev - np.outer(n, n))
            c = T.voigt_to_mandel_moduli(result.d_tan)
            assert np.allclose(c, expected, rtol=1e-8, atol=1e-8 * p.bulk)
            assert np.allclose(c @ n, 0.0, atol=1e-8 * p.bulk)
            assert np.linalg.matrix_rank(c, tol=1e-8 * p.bulk) == 5

    @pytest.mark.parametrize("beta", [0.0, 0.4])
    @pytest.mark.parametrize("H_iso", [0.0, 1140.0])
    def test_dissipation_of_a_single_step(self, rng, beta, H_iso):
        p = MaterialParams(205.0, 0.3, 100.0, H_iso, 0.0, beta)
        elastic = return_map(np.array([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]), InternalState.virgin(), p)
        assert dissipation_increment(InternalState.virgin(), elastic.new_state, elastic.sigma, p) == 0.0
        for _ in range(5):
            eps = deviatoric(rng, 3.0)
            result = return_map(eps, InternalState.virgin(), p)
            dlam = float(result.delta_lambda)
            expected = (1.0 + beta) * T.SQRT23 * p.sigma_p * dlam + ((1.0 + beta) * 2.0 / 3.0 - 1.0 / 3.0) * H_iso * dlam ** 2
            dd = dissipation_increment(InternalState.virgin(), result.new_state, result.sigma, p)
            assert float(dd) == pytest.approx(expected, rel=1e-8)
            assert float(result.new_state.dissipation_cum) == pytest.approx(expected, rel=1e-8)

    def test_without_ratcheting_matches_combined_hardening_j2(self, rng):
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, 0.0)
        state = InternalState.virgin((100,))
        eps = np.zeros((100, 6))
        eps_p = np.zeros((100, 6))
        kappa = np.zeros(100)
        for _ in range(10):
            eps = eps + rng.normal(scale=0.3, size=(100, 6))
            sigma_ref, eps_p, kappa = combined_hardening_return_map(eps, eps_p, kappa, p)
            result = return_map(eps, state, p, compute_tangent=False)
            state = result.new_state
            err = np.linalg.norm(result.sigma - sigma_ref, axis=-1)
            assert np.all(err <= 1e-10 * np.maximum(np.linalg.norm(sigma_ref, axis=-1), p.sigma_p))
            assert np.allclose(state.eps_r, 0.0)

    @pytest.mark.parametrize("beta", [0.0, 0.4])
    def test_proportional_path_matches_explicit_integration(self, rng, beta):
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, beta)
        for _ in range(3):
            direction = deviatoric(rng)
            direction /= T.frobenius_norm(direction)
            yield_strain = T.SQRT23 * p.sigma_p / (2.0 * p.mu)
            eps = direction * yield_strain * rng.uniform(1.5, 3.0)
            one_step = return_map(eps, InternalState.virgin(), p).sigma
            reference = explicit_integration(eps, p, 10_000)
            err = T.frobenius_norm(one_step - reference) / T.frobenius_norm(reference)
            assert err < 1e-3

    def test_one_step_error_is_first_order_in_increment(self, rng):
        """Relative error of a single non-proportional increment halves with the increment."""
        p = MaterialParams(205.0, 0.3, 100.0, 1140.0, 21640.0, 0.4)
        d1 = T.deviator(np.array([1.0, -0.5, -0.5, 0.0, 0.0, 0.0]))
        d1 /= T.frobenius_norm(d1)
        d2 = T.deviator(np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]))
        d2 /= T.frobenius_norm(d2)
        eps0 = 2.0 * d1
        pre = return_map(eps0, InternalState.virgin(), p)
        direction = d1 + d2

        errors = []
        sizes = [0.05, 0.025, 0.0125]
        for size in sizes:
            eps1 = eps0 + size * direction
            one = return_map(eps1, pre.new_state, p, compute_tangent=False)
            state = pre.new_state
            n_sub = 2000
            for k in range(1, n_sub + 1):
                fine = return_map(eps0 + size * direction * k / n_sub, state, p, compute_tangent=False)
                state = fine.new_state
            change = T.frobenius_norm(fine.sigma - pre.sigma)
            errors.append(float(T.frobenius_norm(one.sigma - fine.sigma) / change))
        slopes = np.diff(np.log(errors)) / np.diff(np.log(sizes))
        assert np.all(slopes >= 0.9)


class TestSprings:
    @staticmethod
    def params(beta=0.0, H_iso=0.0, H_kin=0.0):
        return SpringParams.from_materials([MaterialParams(E=100.0, nu=0.3, sigma_p=2.0, H_iso=H_iso, H_kin=H_kin, beta=beta)])

    def test_elastic_below_yield(self):
        result = spring_return_map(np.array([0.01]), SpringState.virgin(1), self.params())
        assert result.sigma[0] == pytest.approx(1.0)
        assert result.tangent[0] == pytest.approx(100.0)
        assert not result.plastic_active[0]

    def test_perfect_plasticity_caps_stress(self):
        result = spring_return_map(np.array([0.05]), SpringState.virgin(1), self.params())
        assert result.sigma[0] == pytest.approx(2.0)
        assert result.new_state.eps_p[0] == pytest.approx(0.03)
        assert result.tangent[0] == pytest.approx(0.0, abs=1e-12)

    def test_kinematic_hardening_slope(self):
        p = self.params(H_kin=100.0)
        result = spring_return_map(np.array([0.05]), SpringState.virgin(1), p)
        # elastoplastic modulus E H / (E + H)
        assert result.sigma[0] == pytest.approx(2.0 + 50.0 * 0.03)
        assert result.tangent[0] == pytest.approx(50.0)

    @pytest.mark.parametrize("eps", [0.05, -0.05])
    def test_ratcheting_drift_follows_stress_sign(self, eps):
        p = self.params(beta=0.1, H_kin=100.0)
        result = spring_return_map(np.array([eps]), SpringState.virgin(1), p)
        assert np.sign(result.new_state.eps_r[0]) == np.sign(result.sigma[0]) == np.sign(eps)
        assert abs(result.new_state.eps_r[0]) == pytest.approx(0.1 * result.delta_lambda[0])
        xi = result.sigma[0] - 100.0 * result.new_state.eps_p[0]
        assert abs(xi) == pytest.approx(2.0, rel=1e-10)

    def test_tangent_matches_finite_differences(self):
        p = self.params(beta=0.1, H_iso=20.0, H_kin=100.0)
        state = spring_return_map(np.array([0.05]), SpringState.virgin(1), p).new_state
        eps = np.array([0.08])
        h = 1e-7
        plus = spring_return_map(eps + h, state, p).sigma
        minus = spring_return_map(eps - h, state, p).sigma
        tangent = spring_return_map(eps, state, p).tangent
        assert tangent[0] == pytest.approx(((plus - minus) / (2 * h))[0], rel=1e-6)

    def test_dissipation_nonnegative_over_cycles(self):
        p = self.params(beta=0.1, H_iso=20.0, H_kin=100.0)
        state = SpringState.virgin(1)
        for eps in 0.06 * np.sin(np.linspace(0.0, 6.0 * np.pi, 200)):
            result = spring_return_map(np.array([eps]), state, p)
            assert result.new_state.dissipation_cum[0] >= state.dissipation_cum[0] - 1e-12
            state = result.new_state
        assert state.dissipation_cum[0] > 0.0
