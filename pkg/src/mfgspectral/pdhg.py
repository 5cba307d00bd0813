"""Primal-dual hybrid gradient iteration on the discrete saddle problem.

One iteration performs three steps: an exact proximal solve for the
coefficient paths (independent across time slices, so the shifted-inverse
operator is factored once and reused), one explicit gradient step for the
particle trajectories (independent across particles, all right-hand sides
evaluated at the previous iterate), and linear extrapolation of the
trajectories. Stopping is on step-norm stagnation; the fixed-point
residual is tracked as a diagnostic because the coupling is not bilinear
and carries no convergence guarantee.

All reductions use a fixed summation order, so repeated runs are
bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSet, grad_all, lipschitz_bounds
from .kernel import SpectralKernel
from .problem import (
    DiscreteMeasure,
    DivergenceError,
    MFGProblem,
    moment_vector,
    saddle_value,
)

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes and stopping policy for the saddle-point iteration."""

    lam: float  # proximal step for the coefficient paths
    omega: float  # gradient step for the trajectories
    theta: float = 1.0  # extrapolation weight in [0, 1]
    max_iter: int = 20000
    tol: float = 1e-8
    record_every: int = 50

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be nonnegative, got {self.max_iter}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be positive, got {self.record_every}")


@dataclass
class SolverState:
    """Loop-carried iterates: coefficients, trajectories, extrapolation."""

    a: np.ndarray  # (size, N)
    x: np.ndarray  # (Q, N+1, d), slice 0 pinned to the particle grid
    z: np.ndarray  # (Q, N+1, d)
    iteration: int = 0


@dataclass
class Diagnostics:
    """Per-recorded-iteration solver history."""

    iterations: list = field(default_factory=list)
    saddle_values: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    a_steps: list = field(default_factory=list)
    x_steps: list = field(default_factory=list)

    def record(self, iteration, saddle, residual, a_step, x_step):
        self.iterations.append(int(iteration))
        self.saddle_values.append(float(saddle))
        self.residuals.append(float(residual))
        self.a_steps.append(float(a_step))
        self.x_steps.append(float(x_step))

    def last_record(self) -> dict:
        return {
            "iteration": self.iterations[-1],
            "saddle_value": self.saddle_values[-1],
            "residual": self.residuals[-1],
            "a_step": self.a_steps[-1],
            "x_step": self.x_steps[-1],
        }


@dataclass
class SolverResult:
    a: np.ndarray
    x: np.ndarray
    z: np.ndarray
    iterations: int
    converged: bool
    diagnostics: Diagnostics


def step_size_bound(
    measure: DiscreteMeasure, basis: BasisSet, dt: float
) -> float:
    """Squared operator bound of the coupling map, dt^2 * sum Lip^2 * sum c^2."""
    lips = lipschitz_bounds(basis)
    return float(dt**2 * np.sum(lips**2) * np.sum(measure.weights**2))


def check_steps(config: SolverConfig, a_squared: float) -> bool:
    """True when omega * lam < 1 / A^2 (vacuously true for A^2 = 0).

    The product bound is a heuristic here (the coupling is not bilinear),
    so a violation is reported, never fatal.
    """
    if a_squared <= 0.0:
        return True
    return config.omega * config.lam < 1.0 / a_squared


def prox_a_operator(kernel: SpectralKernel, lam_dt: float):
    """Factor (lam_dt * J + Id)^{-1} once; returns a columnwise applier."""
    if lam_dt < 0:
        raise ValueError(f"lam_dt must be nonnegative, got {lam_dt}")
    if kernel.form == "diagonal":
        denom = 1.0 + lam_dt * kernel.j_diag

        def apply_diag(rhs: np.ndarray) -> np.ndarray:
            return rhs / denom[:, None]

        return apply_diag
    if kernel.form == "block2x2":
        inverses = []
        for blk in kernel.j_blocks:
            shifted = lam_dt * blk + np.eye(blk.shape[0])
            inverses.append(np.linalg.inv(shifted))

        def apply_blocks(rhs: np.ndarray) -> np.ndarray:
            out = np.empty_like(rhs)
            pos = 0
            for inv in inverses:
                m = inv.shape[0]
                out[pos : pos + m] = inv @ rhs[pos : pos + m]
                pos += m
            return out

        return apply_blocks
    shifted = lam_dt * kernel.j_mat + np.eye(kernel.size)
    inverse = np.linalg.inv(shifted)

    def apply_dense(rhs: np.ndarray) -> np.ndarray:
        return inverse @ rhs

    return apply_dense


def step_a(
    a: np.ndarray,
    z: np.ndarray,
    kernel: SpectralKernel,
    measure: DiscreteMeasure,
    dt: float,
    lam: float,
    prox=None,
) -> np.ndarray:
    """Exact proximal update of the coefficient paths, per time slice.

    Solves (lam*dt*J + Id) a_new = a + lam*dt*q columnwise, with q the
    basis moments of the extrapolated trajectories.
    """
    if prox is None:
        prox = prox_a_operator(kernel, lam * dt)
    q = moment_vector(z, measure, kernel.basis)
    return prox(a + lam * dt * q)


def step_x(
    x: np.ndarray,
    a_new: np.ndarray,
    problem: MFGProblem,
    measure: DiscreteMeasure,
    omega: float,
) -> np.ndarray:
    """One weighted gradient-descent step on the trajectory objective.

    Every right-hand-side trajectory term is evaluated at the incoming
    iterate; particle rows are mutually independent. Slice 0 stays pinned.
    """
    dt = problem.dt
    c = measure.weights[:, None, None]
    inner = x[:, 1:, :]  # slices 1..N

    neighbor = x[:, 1:, :] - x[:, :-1, :]
    neighbor[:, :-1, :] += x[:, 1:-1, :] - x[:, 2:, :]

    q, n = inner.shape[0], inner.shape[1]
    grads = grad_all(problem.basis, inner.reshape(q * n, -1)).reshape(
        q, n, problem.basis.size, problem.dimension
    )
    coupling = np.einsum("qikd,ki->qid", grads, a_new)

    update = (omega / dt) * c * neighbor + omega * dt * c * coupling
    update[:, -1, :] += omega * measure.weights[:, None] * problem.terminal_grad(
        x[:, -1, :]
    )

    x_new = x.copy()
    x_new[:, 1:, :] = inner - update
    return x_new


def step_z(x_new: np.ndarray, x_old: np.ndarray, theta: float) -> np.ndarray:
    """Extrapolate trajectories: z = x_new + theta * (x_new - x_old)."""
    if x_new.shape != x_old.shape:
        raise ValueError("trajectory arrays must have matching shapes")
    return x_new + theta * (x_new - x_old)


def fixed_point_residual(
    a: np.ndarray,
    x: np.ndarray,
    kernel: SpectralKernel,
    measure: DiscreteMeasure,
) -> float:
    """Sup-norm of a - K p(x); vanishes at an equilibrium."""
    p = moment_vector(x, measure, kernel.basis)
    return float(np.max(np.abs(a - kernel.apply_k(p))))


def solve(
    problem: MFGProblem,
    measure: DiscreteMeasure,
    config: SolverConfig,
    diagnostics_path=None,
) -> SolverResult:
    """Run the three-step iteration from the stationary initialization.

    Starts with zero coefficients, stationary trajectories and z = x;
    stops when both step norms fall to the tolerance or at max_iter.
    When ``diagnostics_path`` is set, each recorded iteration is appended
    to that file as one JSON line. Divergence raises
    :class:`~mfgspectral.problem.DivergenceError` carrying the partial
    diagnostics.
    """
    if measure.dimension != problem.dimension:
        raise ValueError("measure dimension does not match the problem")
    n = problem.num_steps
    size = problem.basis.size

    state = SolverState(
        a=np.zeros((size, n)),
        x=np.repeat(measure.points[:, None, :], n + 1, axis=1),
        z=np.repeat(measure.points[:, None, :], n + 1, axis=1),
    )
    diag = Diagnostics()
    prox = prox_a_operator(problem.kernel, config.lam * problem.dt)
    sink = open(diagnostics_path, "w") if diagnostics_path is not None else None

    def emit(a_step, x_step):
        diag.record(
            state.iteration,
            saddle_value(state.a, state.x, problem, measure),
            fixed_point_residual(state.a, state.x, problem.kernel, measure),
            a_step,
            x_step,
        )
        if sink is not None:
            sink.write(json.dumps(diag.last_record(), sort_keys=True) + "\n")

    last_step = math.inf
    try:
        while state.iteration < config.max_iter and last_step > config.tol:
            a_new = step_a(
                state.a,
                state.z,
                problem.kernel,
                measure,
                problem.dt,
                config.lam,
                prox=prox,
            )
            x_new = step_x(state.x, a_new, problem, measure, config.omega)
            z_new = step_z(x_new, state.x, config.theta)

            a_step = float(np.max(np.abs(a_new - state.a)))
            moved = x_new - state.x
            x_step = float(
                np.sqrt(np.max(np.sum(moved**2, axis=2)))
            )  # max particle displacement
            state.a, state.x, state.z = a_new, x_new, z_new
            state.iteration += 1
            last_step = max(a_step, x_step)

            bad = not (
                np.all(np.isfinite(a_new)) and np.all(np.isfinite(x_new))
            ) or np.max(np.abs(x_new)) > DIVERGENCE_LIMIT
            if bad:
                raise DivergenceError(
                    f"solver diverged at iteration {state.iteration}; "
                    "check the step-size bound",
                    diagnostics=diag,
                    iteration=state.iteration,
                )
            if (
                state.iteration % config.record_every == 0
                or last_step <= config.tol
                or state.iteration == config.max_iter
            ):
                emit(a_step, x_step)
    finally:
        if sink is not None:
            sink.close()

    return SolverResult(
        a=state.a,
        x=state.x,
        z=state.z,
        iterations=state.iteration,
        converged=last_step <= config.tol,
        diagnostics=diag,
    )
