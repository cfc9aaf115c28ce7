import numpy as np
import pytest

from mlsvgd import targets
from mlsvgd.errors import NumericalFailureError
from mlsvgd.kernels import diagonal_kernel, isotropic_kernel, kernel_eval, kernel_grad1
from mlsvgd.seeding import rng_for
from mlsvgd.svgd import (
    Ensemble,
    Functional,
    RunConfig,
    estimate,
    phi_l2_field,
    register_functional,
    svgd_run,
    svgd_step,
)


def standard_normal_grad(positions):
    return -np.atleast_2d(positions)


def brute_force_step(positions, grads, spec, gamma):
    """Double-loop transcription of the update rule, for oracle comparison."""
    n = positions.shape[0]
    out = np.empty_like(positions)
    for i in range(n):
        acc = np.zeros(positions.shape[1])
        for j in range(n):
            acc += kernel_eval(spec, positions[j], positions[i]) * grads[j]
            acc += kernel_grad1(spec, positions[j], positions[i])
        out[i] = positions[i] + gamma * acc / n
    return out


class TestStep:
    def test_single_particle_contraction(self):
        cfg = RunConfig(gamma=0.1, n_steps=1, kernel=isotropic_kernel(1))
        e = Ensemble(np.array([[1.0]]))
        stepped = svgd_step(e, standard_normal_grad, cfg)
        assert stepped.positions[0, 0] == pytest.approx(0.9, rel=1e-15)
        assert stepped.step_count == 1

    def test_fixed_point_at_posterior_mode(self):
        rng = np.random.default_rng(2)
        prior = targets.PriorSpec(2)
        noise = targets.NoiseSpec(3, 0.5)
        a = rng.standard_normal((3, 2))
        y = rng.standard_normal(3)
        spec = targets.analytic_target(a, y, noise, prior)
        mean, _ = targets.analytic_posterior_moments(a, y, noise, prior)
        e = Ensemble(np.tile(mean, (5, 1)))
        cfg = RunConfig(gamma=0.1, n_steps=1, kernel=diagonal_kernel(1.0 / prior.variances))
        stepped = svgd_step(e, targets.gradient_evaluator(spec, 0), cfg)
        np.testing.assert_allclose(stepped.positions, e.positions, atol=1e-12)

    def test_two_particles_match_brute_force(self):
        spec = isotropic_kernel(1)
        cfg = RunConfig(gamma=0.1, n_steps=1, kernel=spec)
        positions = np.array([[0.0], [1.0]])
        stepped = svgd_step(Ensemble(positions), standard_normal_grad, cfg)
        expected = brute_force_step(positions, -positions, spec, 0.1)
        np.testing.assert_allclose(stepped.positions, expected, atol=1e-14)

    def test_synchronous_update_matches_snapshot_oracle(self):
        rng = np.random.default_rng(8)
        spec = diagonal_kernel([1.0, 2.0, 0.5])
        cfg = RunConfig(gamma=0.05, n_steps=1, kernel=spec)
        positions = rng.standard_normal((7, 3))
        stepped = svgd_step(Ensemble(positions.copy()), standard_normal_grad, cfg)
        expected = brute_force_step(positions, -positions, spec, 0.05)
        np.testing.assert_allclose(stepped.positions, expected, atol=1e-13)

    def test_permutation_equivariance(self):
        # float sums reorder under permutation, so equality holds to rounding
        rng = np.random.default_rng(12)
        spec = diagonal_kernel([1.0, 4.0])
        cfg = RunConfig(gamma=0.1, n_steps=1, kernel=spec)
        positions = rng.standard_normal((9, 2))
        perm = rng.permutation(9)
        direct = svgd_step(Ensemble(positions[perm]), standard_normal_grad, cfg).positions
        swapped = svgd_step(Ensemble(positions), standard_normal_grad, cfg).positions[perm]
        np.testing.assert_allclose(direct, swapped, rtol=1e-12, atol=1e-15)

    def test_nonfinite_gradient_carries_particle_index(self):
        def broken(positions):
            g = -np.atleast_2d(positions).astype(float)
            g[2, 0] = np.inf
            return g

        cfg = RunConfig(gamma=0.1, n_steps=1, kernel=isotropic_kernel(1))
        with pytest.raises(NumericalFailureError) as info:
            svgd_step(Ensemble(np.zeros((4, 1))), broken, cfg)
        assert info.value.particle_index == 2

    @pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
    def test_unstable_dynamics_abort(self):
        cfg = RunConfig(gamma=1e5, n_steps=2000, kernel=isotropic_kernel(1))
        e = Ensemble(np.array([[1.0], [2.0]]))
        with pytest.raises(NumericalFailureError):
            svgd_run(e, lambda p: 1e160 * np.atleast_2d(p), cfg)


class TestRun:
    def test_zero_steps_identity(self):
        cfg = RunConfig(gamma=0.1, n_steps=0, kernel=isotropic_kernel(1))
        e = Ensemble(np.array([[1.0], [2.0]]))
        out = svgd_run(e, standard_normal_grad, cfg)
        assert out is e

    def test_closed_form_contraction(self):
        cfg = RunConfig(gamma=0.1, n_steps=10, kernel=isotropic_kernel(1))
        out = svgd_run(Ensemble(np.array([[1.0]])), standard_normal_grad, cfg)
        assert out.positions[0, 0] == pytest.approx(0.9**10, rel=1e-13)
        assert out.step_count == 10

    def test_determinism_bitwise(self):
        rng = np.random.default_rng(31)
        spec = diagonal_kernel([1.0, 0.5])
        cfg = RunConfig(gamma=0.1, n_steps=25, kernel=spec)
        positions = rng.standard_normal((20, 2))
        a = svgd_run(Ensemble(positions.copy()), standard_normal_grad, cfg)
        b = svgd_run(Ensemble(positions.copy()), standard_normal_grad, cfg)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_recovers_analytic_posterior_mean(self):
        rng = np.random.default_rng(6)
        prior = targets.PriorSpec(2)
        noise = targets.NoiseSpec(3, 0.5)
        a = rng.standard_normal((3, 2))
        y = rng.standard_normal(3)
        spec = targets.analytic_target(a, y, noise, prior)
        mean, _ = targets.analytic_posterior_moments(a, y, noise, prior)
        e0 = Ensemble(prior.sample(rng_for(0, 0), 50))
        cfg = RunConfig(gamma=0.1, n_steps=200, kernel=diagonal_kernel(1.0 / prior.variances))
        final = svgd_run(e0, targets.gradient_evaluator(spec, 0), cfg)
        assert np.linalg.norm(final.positions.mean(axis=0) - mean) <= 0.1


class TestEstimate:
    def test_mean_of_first_coordinate(self):
        e = Ensemble(np.array([[0.0], [2.0]]))
        assert estimate(e, Functional("coordinate", index=0)) == 1.0

    def test_constant_functional(self):
        register_functional("always_three", lambda pts: np.full(pts.shape[0], 3.0))
        e = Ensemble(np.random.default_rng(0).standard_normal((11, 2)))
        assert estimate(e, Functional("always_three")) == 3.0

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError, match="unknown functional"):
            Functional("no_such_phi").apply(np.zeros((1, 1)))

    def test_field_norm_matches_analytic_identity(self):
        # sine orthonormality gives ||f(x,.)||_L2 = ||x|| / pi
        rng = np.random.default_rng(44)
        pts = rng.standard_normal((8, 5))
        e = Ensemble(pts)
        phi = Functional("l2_norm_of_field", quad_level=13)
        expected = float(np.mean(np.linalg.norm(pts, axis=1) / np.pi))
        assert estimate(e, phi) == pytest.approx(expected, abs=1e-5)


class TestPhiL2Field:
    def test_zero(self):
        assert phi_l2_field(np.zeros(3), 10) == 0.0

    def test_first_mode(self):
        assert phi_l2_field([1.0], 13) == pytest.approx(1.0 / np.pi, abs=1e-5)

    def test_random_vector_norm_identity(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            x = rng.standard_normal(6)
            assert phi_l2_field(x, 13) == pytest.approx(np.linalg.norm(x) / np.pi, abs=1e-5)

    def test_invalid_quad_level(self):
        with pytest.raises(ValueError):
            phi_l2_field([1.0], 0)
