import math

import numpy as np
import pytest

from mfgspectral.kernel import GaussianKernelSpec, gaussian_spectral_1d
from mfgspectral.problem import (
    DiscreteMeasure,
    MFGProblem,
    discrete_G,
    discrete_value_at,
    discretize_measure,
    moment_vector,
    saddle_value,
    trajectory_action,
)

SQRT2 = math.sqrt(2.0)


def flat_kernel(mu=0.5):
    return gaussian_spectral_1d(GaussianKernelSpec(sigma=0.2, mu=mu), 1)


def zero_fn(p):
    return np.zeros(p.shape[0])


def zero_grad(p):
    return np.zeros_like(p)


def make_problem(kernel, U=None, gradU=None, N=4):
    return MFGProblem(
        kernel=kernel,
        initial_density=lambda p: np.ones(p.shape[0]),
        terminal_cost=U or zero_fn,
        terminal_grad=gradU or zero_grad,
        num_steps=N,
    )


def stationary_trajectories(measure, N):
    return np.repeat(measure.points[:, None, :], N + 1, axis=1)


class TestDiscretizeMeasure:
    def test_uniform_density(self):
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 4, 1)
        np.testing.assert_allclose(m.points[:, 0], [0.2, 0.4, 0.6, 0.8])
        np.testing.assert_allclose(m.weights, 0.25)

    def test_sin_squared_weights(self):
        m = discretize_measure(lambda p: np.sin(np.pi * p[:, 0]) ** 2, 3, 1)
        np.testing.assert_allclose(m.weights, [0.25, 0.5, 0.25], atol=1e-15)

    def test_reference_1d_density(self):
        m = discretize_measure(
            lambda p: 1.0 / 6.0 + 5.0 / 3.0 * np.sin(np.pi * p[:, 0]) ** 2, 50, 1
        )
        assert m.count == 50
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(m.weights > 0)

    def test_2d_grid_order(self):
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 3, 2)
        assert m.count == 9
        np.testing.assert_allclose(m.points[0], [0.25, 0.25])
        np.testing.assert_allclose(m.points[1], [0.25, 0.5])
        np.testing.assert_allclose(m.points[3], [0.5, 0.25])
        np.testing.assert_allclose(m.weights, 1.0 / 9.0)

    def test_degenerate_density_rejected(self):
        with pytest.raises(ValueError):
            discretize_measure(lambda p: np.zeros(p.shape[0]), 5, 1)

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            discretize_measure(lambda p: -np.ones(p.shape[0]), 5, 1)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            discretize_measure(lambda p: np.ones(p.shape[0]), 0, 1)
        with pytest.raises(ValueError):
            discretize_measure(lambda p: np.ones(p.shape[0]), 3, 3)


class TestMeasureInvariants:
    def test_weight_validation(self):
        with pytest.raises(ValueError):
            DiscreteMeasure(points=np.array([[0.5]]), weights=np.array([0.8]))
        with pytest.raises(ValueError):
            DiscreteMeasure(
                points=np.array([[0.2], [0.8]]), weights=np.array([1.5, -0.5])
            )

    def test_weights_not_mutated(self):
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 4, 1)
        w = m.weights.copy()
        prob = make_problem(flat_kernel(), N=3)
        x = stationary_trajectories(m, 3)
        a = np.zeros((1, 3))
        saddle_value(a, x, prob, m)
        moment_vector(x, m, prob.basis)
        np.testing.assert_array_equal(m.weights, w)
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-14)


class TestSaddleValue:
    def test_stationary_zero_coefficients(self):
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 5, 1)
        U = lambda p: 1.0 + np.cos(2 * np.pi * p[:, 0])
        prob = make_problem(flat_kernel(), U=U, N=4)
        x = stationary_trajectories(m, 4)
        a = np.zeros((1, 4))
        expect = -float(np.dot(m.weights, U(m.points)))
        assert saddle_value(a, x, prob, m) == pytest.approx(expect, abs=1e-14)

    def test_constant_basis_formula(self):
        # r=1, a == c everywhere, stationary particles
        mu = 0.5
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 4, 1)
        U = lambda p: 0.3 + 0.0 * p[:, 0]
        prob = make_problem(flat_kernel(mu), U=U, N=5)
        c = 0.7
        a = np.full((1, 5), c)
        x = stationary_trajectories(m, 5)
        j11 = 1.0 / mu
        expect = j11 * c**2 / 2.0 - c - 0.3
        assert saddle_value(a, x, prob, m) == pytest.approx(expect, abs=1e-13)

    def test_single_particle_linear_trajectory(self):
        U = lambda p: np.sin(2 * np.pi * p[:, 0])
        m = DiscreteMeasure(points=np.array([[0.2]]), weights=np.array([1.0]))
        prob = make_problem(flat_kernel(), U=U, N=10)
        v = 0.35
        times = np.linspace(0.0, 1.0, 11)
        x = (0.2 + v * times)[None, :, None]
        a = np.zeros((1, 10))
        # telescoping kinetic sum gives v^2/2 exactly on the uniform grid
        expect = -(v**2) / 2.0 - float(U(np.array([[0.2 + v]]))[0])
        assert saddle_value(a, x, prob, m) == pytest.approx(expect, abs=1e-12)

    def test_quadratic_term_identity(self):
        # substituting a = K p turns the quadratic term into <p, K p>/2 * dt
        rng = np.random.default_rng(12)
        ker = gaussian_spectral_1d(GaussianKernelSpec(0.2, 0.5), 6)
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 7, 1)
        prob = make_problem(ker, N=5)
        x = stationary_trajectories(m, 5) + 0.0
        x[:, 1:, :] += rng.normal(scale=0.1, size=(7, 5, 1))
        p = moment_vector(x, m, ker.basis)
        a = ker.apply_k(p)
        quad_direct = 0.5 * prob.dt * float(np.sum(a * ker.apply_j(a)))
        quad_identity = 0.5 * prob.dt * float(np.sum(p * ker.apply_k(p)))
        assert quad_direct == pytest.approx(quad_identity, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 4, 1)
        prob = make_problem(flat_kernel(), N=4)
        with pytest.raises(ValueError):
            saddle_value(np.zeros((1, 3)), stationary_trajectories(m, 4), prob, m)
        with pytest.raises(ValueError):
            saddle_value(np.zeros((1, 4)), stationary_trajectories(m, 3), prob, m)


class TestMomentVector:
    def test_constant_row_is_one(self):
        rng = np.random.default_rng(13)
        ker = gaussian_spectral_1d(GaussianKernelSpec(0.2, 0.5), 4)
        m = discretize_measure(
            lambda p: 0.5 + np.sin(np.pi * p[:, 0]) ** 2, 6, 1
        )
        x = stationary_trajectories(m, 5)
        x[:, 1:, :] += rng.normal(scale=0.2, size=(6, 5, 1))
        p = moment_vector(x, m, ker.basis)
        np.testing.assert_allclose(p[0], 1.0, atol=1e-14)

    def test_stationary_constant_in_time(self):
        from mfgspectral.basis import eval_all

        ker = gaussian_spectral_1d(GaussianKernelSpec(0.2, 0.5), 5)
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 6, 1)
        x = stationary_trajectories(m, 4)
        p = moment_vector(x, m, ker.basis)
        expect = m.weights @ eval_all(ker.basis, m.points)
        for i in range(4):
            np.testing.assert_allclose(p[:, i], expect, atol=1e-14)

    def test_two_particle_value(self):
        ker = gaussian_spectral_1d(GaussianKernelSpec(0.2, 0.5), 2)
        m = DiscreteMeasure(
            points=np.array([[0.1], [0.9]]), weights=np.array([0.5, 0.5])
        )
        x = stationary_trajectories(m, 1)
        x[0, 1, 0] = 0.0
        x[1, 1, 0] = 0.25
        p = moment_vector(x, m, ker.basis)
        # 0.5 * phi_2(0) + 0.5 * phi_2(0.25) = 0.5 * sqrt(2)
        assert p[1, 0] == pytest.approx(0.7071067811865476, abs=1e-14)

    def test_bounded_by_sqrt2(self):
        rng = np.random.default_rng(14)
        ker = gaussian_spectral_1d(GaussianKernelSpec(0.2, 0.5), 8)
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 9, 1)
        x = stationary_trajectories(m, 6)
        x[:, 1:, :] += rng.normal(scale=3.0, size=(9, 6, 1))
        p = moment_vector(x, m, ker.basis)
        assert np.max(np.abs(p)) <= SQRT2 + 1e-12


class TestDiscreteValue:
    def test_constant_terminal_cost(self):
        prob = make_problem(
            flat_kernel(), U=lambda p: 2.5 + 0.0 * p[:, 0], N=5
        )
        a = np.zeros((1, 5))
        assert discrete_value_at(0.3, a, prob) == pytest.approx(2.5, abs=1e-12)

    def test_start_at_terminal_minimum(self):
        U = lambda p: 1.0 + np.cos(4 * np.pi * p[:, 0])
        gradU = lambda p: (-4 * np.pi * np.sin(4 * np.pi * p[:, 0]))[:, None]
        prob = make_problem(flat_kernel(), U=U, gradU=gradU, N=5)
        a = np.zeros((1, 5))
        # x0 = 0.25 is a critical minimum of U; no motion is optimal
        assert discrete_value_at(0.25, a, prob) == pytest.approx(0.0, abs=1e-10)

    def test_constant_running_cost(self):
        mu = 0.8
        prob = make_problem(flat_kernel(mu), N=6)
        a = np.full((1, 6), mu)
        assert discrete_value_at(0.4, a, prob) == pytest.approx(mu, abs=1e-12)

    def test_translation_consistency(self):
        prob = make_problem(flat_kernel(), N=4)
        a = np.zeros((1, 4))
        for x0 in (0.0, 0.31, 0.77):
            assert discrete_value_at(x0, a, prob) == pytest.approx(0.0, abs=1e-12)

    def test_descent_actually_improves(self):
        U = lambda p: 1.0 + np.sin(4 * np.pi * p[:, 0] + np.pi / 2)
        gradU = lambda p: (4 * np.pi * np.cos(4 * np.pi * p[:, 0] + np.pi / 2))[
            :, None
        ]
        prob = make_problem(flat_kernel(), U=U, gradU=gradU, N=8)
        a = np.zeros((1, 8))
        x0 = 0.2
        value = discrete_value_at(x0, a, prob)
        stationary = float(U(np.array([[x0]]))[0])
        assert value < stationary


class TestDiscreteG:
    def test_constant_terminal(self):
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 5, 1)
        prob = make_problem(flat_kernel(), U=lambda p: 1.7 + 0.0 * p[:, 0], N=4)
        assert discrete_G(np.zeros((1, 4)), prob, m) == pytest.approx(1.7, abs=1e-12)

    def test_constant_running(self):
        mu = 0.5
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 5, 1)
        prob = make_problem(flat_kernel(mu), N=4)
        assert discrete_G(np.full((1, 4), mu), prob, m) == pytest.approx(
            mu, abs=1e-12
        )

    def test_concavity_spot_check(self):
        rng = np.random.default_rng(15)
        ker = gaussian_spectral_1d(GaussianKernelSpec(0.3, 0.5), 4)
        U = lambda p: 0.5 + 0.3 * np.sin(2 * np.pi * p[:, 0])
        gradU = lambda p: (0.6 * np.pi * np.cos(2 * np.pi * p[:, 0]))[:, None]
        prob = MFGProblem(
            kernel=ker,
            initial_density=lambda p: np.ones(p.shape[0]),
            terminal_cost=U,
            terminal_grad=gradU,
            num_steps=5,
        )
        m = discretize_measure(lambda p: np.ones(p.shape[0]), 4, 1)
        for _ in range(3):
            a = rng.normal(scale=0.3, size=(4, 5))
            b = rng.normal(scale=0.3, size=(4, 5))
            g_mid = discrete_G(0.5 * (a + b), prob, m)
            g_avg = 0.5 * discrete_G(a, prob, m) + 0.5 * discrete_G(b, prob, m)
            assert g_mid >= g_avg - 1e-5


def test_trajectory_action_manual():
    prob = make_problem(flat_kernel(), U=lambda p: 0.1 + 0.0 * p[:, 0], N=2)
    path = np.array([[0.0], [0.1], [0.3]])
    a = np.zeros((1, 2))
    # dt = 1/2: kinetic = (0.01 + 0.04) / (2 * 0.5) = 0.05
    assert trajectory_action(path, a, prob) == pytest.approx(0.05 + 0.1, abs=1e-14)
