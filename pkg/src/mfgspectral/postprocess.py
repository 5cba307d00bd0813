"""Turn converged particle trajectories into reportable artifacts.

Density snapshots are mass-preserving histograms on the wrapped torus;
trajectory metrics (straightness, mirror-symmetry defect) work on the
unwrapped coordinates. CSV/JSON writers use fixed column order and
17-significant-digit floats so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .problem import DiscreteMeasure

GRID_MATCH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DensitySnapshot:
    """One time slice of the particle density on a uniform bin grid."""

    time_index: int
    bins: int
    values: np.ndarray  # (B,) for d=1, (B, B) for d=2

    @property
    def dimension(self) -> int:
        return self.values.ndim

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) / self.bins

    def mass(self) -> float:
        return float(self.values.sum() / self.bins**self.dimension)


def density_histogram(
    x: np.ndarray, measure: DiscreteMeasure, time_index: int, bins: int
) -> DensitySnapshot:
    """Weighted histogram of the wrapped particle positions at one slice."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    pos = np.mod(x[:, time_index, :], 1.0)
    idx = np.minimum((pos * bins).astype(np.int64), bins - 1)
    d = pos.shape[1]
    if d == 1:
        values = np.zeros(bins)
        np.add.at(values, idx[:, 0], measure.weights)
    else:
        values = np.zeros((bins, bins))
        np.add.at(values, (idx[:, 0], idx[:, 1]), measure.weights)
    values *= float(bins) ** d  # divide by bin volume
    return DensitySnapshot(time_index=time_index, bins=bins, values=values)


def straightness_metric(x: np.ndarray):
    """Chord deviation per particle and its maximum.

    For each particle the chord runs from its first to its last position;
    the metric is the largest Euclidean gap to that chord over time.
    """
    n = x.shape[1] - 1
    if n < 2:
        raise ValueError("straightness needs at least 2 time steps")
    s = np.arange(n + 1) / n
    chord = (1.0 - s)[None, :, None] * x[:, :1, :] + s[None, :, None] * x[:, -1:, :]
    gaps = np.sqrt(np.sum((x - chord) ** 2, axis=2))
    per_particle = gaps.max(axis=1)
    return per_particle, float(per_particle.max())


def _wrapped_distances(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # pairwise torus distance, (len(p), len(q))
    delta = np.abs(p[:, None, :] - q[None, :, :]) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    return np.sqrt(np.sum(delta**2, axis=2))


def _matching_distance(points: np.ndarray, weights: np.ndarray) -> float:
    """Greedy weight-aware matching of a particle set to its reflection."""
    reflected = np.mod(1.0 - points, 1.0)
    dist = _wrapped_distances(points, reflected)
    w_tol = GRID_MATCH_TOL * max(float(weights.max()), 1.0)
    admissible = np.abs(weights[:, None] - weights[None, :]) <= w_tol

    order = np.argsort(dist, axis=None, kind="stable")
    n = points.shape[0]
    used_left = np.zeros(n, dtype=bool)
    used_right = np.zeros(n, dtype=bool)
    matched = 0
    worst = 0.0
    for flat in order:
        i, j = divmod(int(flat), n)
        if used_left[i] or used_right[j] or not admissible[i, j]:
            continue
        used_left[i] = used_right[j] = True
        worst = max(worst, float(dist[i, j]))
        matched += 1
        if matched == n:
            return worst
    raise ValueError("weights admit no full matching with the reflected set")


def symmetry_defect(x: np.ndarray, measure: DiscreteMeasure) -> float:
    """Worst-slice matching distance to the mirror image under x -> 1 - x.

    Requires the particle grid itself to be mirror-symmetric (true for the
    interior grids produced by discretize_measure).
    """
    grid_dist = _wrapped_distances(
        measure.points, np.mod(1.0 - measure.points, 1.0)
    )
    if np.any(grid_dist.min(axis=1) > GRID_MATCH_TOL):
        raise ValueError("particle grid is not symmetric under x -> 1 - x")
    worst = 0.0
    for i in range(x.shape[1]):
        worst = max(
            worst, _matching_distance(np.mod(x[:, i, :], 1.0), measure.weights)
        )
    return worst


def format_float(v: float) -> str:
    return f"{v:.17g}"


def write_trajectories_csv(path, x: np.ndarray) -> None:
    """Time-major rows of unwrapped coordinates; particle ids are 1-based."""
    q, n_plus_1, d = x.shape
    n = n_plus_1 - 1
    header = "t,particle," + ",".join(f"x{j + 1}" for j in range(d))
    lines = [header]
    for i in range(n_plus_1):
        t = format_float(i / n)
        for alpha in range(q):
            coords = ",".join(format_float(v) for v in x[alpha, i])
            lines.append(f"{t},{alpha + 1},{coords}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_density_csv(path, snapshot: DensitySnapshot) -> None:
    centers = snapshot.bin_centers()
    lines = []
    if snapshot.dimension == 1:
        lines.append("bin_center,density")
        for c, v in zip(centers, snapshot.values):
            lines.append(f"{format_float(c)},{format_float(v)}")
    else:
        lines.append("x1_center,x2_center,density")
        for i, ci in enumerate(centers):
            for j, cj in enumerate(centers):
                lines.append(
                    f"{format_float(ci)},{format_float(cj)},"
                    f"{format_float(snapshot.values[i, j])}"
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_metrics_json(path, metrics: dict) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
