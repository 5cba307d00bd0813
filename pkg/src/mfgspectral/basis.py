"""Trigonometric bases on the unit torus, in one and two dimensions.

One-dimensional functions are indexed from k = 1: the constant function,
then sine/cosine pairs of increasing integer frequency,

    k = 1: 1,   k even: sqrt(2) sin(pi k x),   k odd > 1: sqrt(2) cos(pi (k-1) x),

so the frequency of function k is ``k // 2`` full periods on [0, 1) and the
family is orthonormal in L2 of the periodic unit interval. Two-dimensional
functions are products of two one-dimensional ones, indexed by pairs
(k, k') with k + k' <= r, listed in lexicographic order. Indices are
1-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi


def tensor_indices(r: int) -> list[tuple[int, int]]:
    """All pairs (k, k') with k, k' >= 1 and k + k' <= r, lexicographic."""
    if r < 2:
        raise ValueError(f"2d truncation must be at least 2, got {r}")
    return [(k, kp) for k in range(1, r) for kp in range(1, r - k + 1)]


@dataclass(frozen=True)
class BasisSet:
    """An ordered family of torus basis functions.

    ``indices`` holds integers k for dimension 1 and pairs (k, k') for
    dimension 2. The standard constructors :func:`basis_1d` and
    :func:`basis_2d` build the full families; a subset of indices is legal
    (used when degenerate kernel frequencies are dropped).
    """

    dimension: int
    truncation: int
    indices: tuple

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if not self.indices:
            raise ValueError("basis must contain at least one function")
        for idx in self.indices:
            ks = (idx,) if self.dimension == 1 else tuple(idx)
            if len(ks) != self.dimension or any(
                not isinstance(k, (int, np.integer)) or k < 1 for k in ks
            ):
                raise ValueError(f"invalid basis index {idx!r}")

    @property
    def size(self) -> int:
        return len(self.indices)

    @cached_property
    def _position(self) -> dict:
        return {idx: j for j, idx in enumerate(self.indices)}

    def position(self, index) -> int:
        """0-based position of a basis index; raises IndexError if absent."""
        try:
            return self._position[index]
        except (KeyError, TypeError):
            raise IndexError(f"index {index!r} not in basis") from None

    @cached_property
    def _axis_indices(self) -> np.ndarray:
        # (size, dimension) integer table of per-axis 1d sub-indices
        if self.dimension == 1:
            return np.asarray(self.indices, dtype=int).reshape(-1, 1)
        return np.asarray(self.indices, dtype=int)


def basis_1d(r: int) -> BasisSet:
    """The first r one-dimensional basis functions."""
    if r < 1:
        raise ValueError(f"1d basis size must be positive, got {r}")
    return BasisSet(dimension=1, truncation=r, indices=tuple(range(1, r + 1)))


def basis_2d(r: int) -> BasisSet:
    """All tensor-product functions with index sum at most r."""
    return BasisSet(dimension=2, truncation=r, indices=tuple(tensor_indices(r)))


def _eval_axis(k: int, t: np.ndarray) -> np.ndarray:
    n = k // 2
    if k == 1:
        return np.ones_like(t)
    if k % 2 == 0:
        return SQRT2 * np.sin(TWO_PI * n * t)
    return SQRT2 * np.cos(TWO_PI * n * t)


def _grad_axis(k: int, t: np.ndarray) -> np.ndarray:
    n = k // 2
    if k == 1:
        return np.zeros_like(t)
    w = TWO_PI * n
    if k % 2 == 0:
        return SQRT2 * w * np.cos(w * t)
    return -SQRT2 * w * np.sin(w * t)


def _as_point(basis: BasisSet, x) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (basis.dimension,):
        raise ValueError(
            f"point must have {basis.dimension} coordinate(s), got shape {pt.shape}"
        )
    return pt


def eval_basis(basis: BasisSet, index, x) -> float:
    """Value of one basis function at a single point (periodic in x)."""
    basis.position(index)
    pt = _as_point(basis, x)
    if basis.dimension == 1:
        return float(_eval_axis(index, pt[:1])[0])
    k, kp = index
    return float(_eval_axis(k, pt[:1])[0] * _eval_axis(kp, pt[1:])[0])


def grad_basis(basis: BasisSet, index, x) -> np.ndarray:
    """Analytic gradient of one basis function at a single point."""
    basis.position(index)
    pt = _as_point(basis, x)
    if basis.dimension == 1:
        return np.array([float(_grad_axis(index, pt[:1])[0])])
    k, kp = index
    v0, v1 = _eval_axis(k, pt[:1])[0], _eval_axis(kp, pt[1:])[0]
    g0, g1 = _grad_axis(k, pt[:1])[0], _grad_axis(kp, pt[1:])[0]
    return np.array([float(g0 * v1), float(v0 * g1)])


def _axis_lipschitz(k: int) -> float:
    return SQRT2 * TWO_PI * (k // 2)


def _axis_sup(k: int) -> float:
    return 1.0 if k == 1 else SQRT2


def lipschitz_bound(basis: BasisSet, index) -> float:
    """Lipschitz constant of one basis function (Euclidean, on the torus lift).

    One-dimensional functions get the exact constant 2*sqrt(2)*pi*(k//2).
    Products combine factor constants L_i and sup-norms S_i through the
    bound sqrt(L1^2 S2^2 + S1^2 L2^2), which dominates |grad| everywhere.
    """
    basis.position(index)
    if basis.dimension == 1:
        return _axis_lipschitz(index)
    k, kp = index
    return math.hypot(
        _axis_lipschitz(k) * _axis_sup(kp), _axis_sup(k) * _axis_lipschitz(kp)
    )


def lipschitz_bounds(basis: BasisSet) -> np.ndarray:
    """Vector of Lipschitz constants in basis order."""
    return np.array([lipschitz_bound(basis, idx) for idx in basis.indices])


def _as_points(basis: BasisSet, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if basis.dimension == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != basis.dimension:
        raise ValueError(
            f"points must have shape (n, {basis.dimension}), got {pts.shape}"
        )
    return pts


def eval_all(basis: BasisSet, points) -> np.ndarray:
    """Values of every basis function at many points: shape (n, size)."""
    pts = _as_points(basis, points)
    if basis.dimension == 1:
        cols = [_eval_axis(k, pts[:, 0]) for k in basis.indices]
        return np.column_stack(cols)
    ax = basis._axis_indices
    vals0 = {k: _eval_axis(k, pts[:, 0]) for k in np.unique(ax[:, 0])}
    vals1 = {k: _eval_axis(k, pts[:, 1]) for k in np.unique(ax[:, 1])}
    cols = [vals0[k] * vals1[kp] for k, kp in basis.indices]
    return np.column_stack(cols)


def grad_all(basis: BasisSet, points) -> np.ndarray:
    """Gradients of every basis function at many points: shape (n, size, d)."""
    pts = _as_points(basis, points)
    out = np.empty((pts.shape[0], basis.size, basis.dimension))
    if basis.dimension == 1:
        for j, k in enumerate(basis.indices):
            out[:, j, 0] = _grad_axis(k, pts[:, 0])
        return out
    ax = basis._axis_indices
    vals0 = {k: _eval_axis(k, pts[:, 0]) for k in np.unique(ax[:, 0])}
    vals1 = {k: _eval_axis(k, pts[:, 1]) for k in np.unique(ax[:, 1])}
    grads0 = {k: _grad_axis(k, pts[:, 0]) for k in np.unique(ax[:, 0])}
    grads1 = {k: _grad_axis(k, pts[:, 1]) for k in np.unique(ax[:, 1])}
    for j, (k, kp) in enumerate(basis.indices):
        out[:, j, 0] = grads0[k] * vals1[kp]
        out[:, j, 1] = vals0[k] * grads1[kp]
    return out
