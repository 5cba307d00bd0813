"""Spectral coefficient matrices of interaction kernels on the torus.

A kernel K(x, y) expanded over the trigonometric basis is represented by
its coefficient matrix together with the inverse used by the solver. Three
storage forms are supported: ``diagonal`` (translation-invariant symmetric
kernels, e.g. periodic Gaussians), ``block2x2`` (translation-invariant
kernels with odd part, one scaled-rotation block per frequency), and
``dense`` (general kernels obtained by quadrature, with optional eps*I
regularization).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, basis_1d, basis_2d, eval_all

DEGENERATE_DET = 1e-14
AUTO_EPS = 1e-6
AUTO_EPS_TRIGGER = 1e-10


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Periodic Gaussian interaction kernel parameters.

    sigma controls the spread, mu the total interaction weight; the
    d-dimensional kernel is the product of identical 1d factors.
    """

    sigma: float
    mu: float
    dimension: int = 1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")


@dataclass(frozen=True, eq=False)
class SpectralKernel:
    """Coefficient matrix and inverse of a kernel in a trigonometric basis.

    Exactly one storage form is populated:
      * diagonal: ``k_diag``/``j_diag`` of shape (size,)
      * block2x2: ``k_blocks``/``j_blocks``, tuples of (1,1) or (2,2) arrays
        covering consecutive basis positions
      * dense: ``k_mat``/``j_mat`` of shape (size, size)
    ``eps`` records the total identity shift actually applied.
    """

    basis: BasisSet
    form: str
    k_diag: np.ndarray | None = None
    j_diag: np.ndarray | None = None
    k_blocks: tuple | None = None
    j_blocks: tuple | None = None
    k_mat: np.ndarray | None = None
    j_mat: np.ndarray | None = None
    eps: float = 0.0

    def __post_init__(self):
        if self.form == "diagonal":
            if self.k_diag is None or self.j_diag is None:
                raise ValueError("diagonal form requires k_diag and j_diag")
            if self.k_diag.shape != (self.size,):
                raise ValueError("diagonal data does not match basis size")
        elif self.form == "block2x2":
            if self.k_blocks is None or self.j_blocks is None:
                raise ValueError("block form requires k_blocks and j_blocks")
            if sum(b.shape[0] for b in self.k_blocks) != self.size:
                raise ValueError("block sizes do not cover the basis")
        elif self.form == "dense":
            if self.k_mat is None or self.j_mat is None:
                raise ValueError("dense form requires k_mat and j_mat")
            if self.k_mat.shape != (self.size, self.size):
                raise ValueError("dense data does not match basis size")
        else:
            raise ValueError(f"unknown form {self.form!r}")

    @property
    def size(self) -> int:
        return self.basis.size

    def k_matrix(self) -> np.ndarray:
        """Coefficient matrix as a dense (size, size) array."""
        if self.form == "diagonal":
            return np.diag(self.k_diag)
        if self.form == "block2x2":
            return _block_diag(self.k_blocks)
        return self.k_mat.copy()

    def j_matrix(self) -> np.ndarray:
        """Inverse coefficient matrix as a dense (size, size) array."""
        if self.form == "diagonal":
            return np.diag(self.j_diag)
        if self.form == "block2x2":
            return _block_diag(self.j_blocks)
        return self.j_mat.copy()

    def apply_k(self, v: np.ndarray) -> np.ndarray:
        """Matrix-vector product K @ v; v may carry trailing axes."""
        if self.form == "diagonal":
            return self.k_diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        if self.form == "block2x2":
            return _apply_blocks(self.k_blocks, v)
        return np.tensordot(self.k_mat, v, axes=(1, 0))

    def apply_j(self, v: np.ndarray) -> np.ndarray:
        """Matrix-vector product J @ v; v may carry trailing axes."""
        if self.form == "diagonal":
            return self.j_diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        if self.form == "block2x2":
            return _apply_blocks(self.j_blocks, v)
        return np.tensordot(self.j_mat, v, axes=(1, 0))

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of the symmetric part of K."""
        if self.form == "diagonal":
            return float(np.min(self.k_diag))
        if self.form == "block2x2":
            return min(
                float(np.min(np.linalg.eigvalsh(0.5 * (b + b.T))))
                for b in self.k_blocks
            )
        sym = 0.5 * (self.k_mat + self.k_mat.T)
        return float(np.min(np.linalg.eigvalsh(sym)))

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of the symmetric part; basis order for diagonal form."""
        if self.form == "diagonal":
            return self.k_diag.copy()
        if self.form == "block2x2":
            out = []
            for b in self.k_blocks:
                out.extend(np.linalg.eigvalsh(0.5 * (b + b.T)))
            return np.asarray(out)
        return np.linalg.eigvalsh(0.5 * (self.k_mat + self.k_mat.T))


def _block_diag(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    pos = 0
    for b in blocks:
        m = b.shape[0]
        out[pos : pos + m, pos : pos + m] = b
        pos += m
    return out


def _apply_blocks(blocks, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(np.asarray(v, dtype=float))
    pos = 0
    for b in blocks:
        m = b.shape[0]
        out[pos : pos + m] = np.tensordot(b, v[pos : pos + m], axes=(1, 0))
        pos += m
    return out


def _diagonal_kernel(basis: BasisSet, k_diag: np.ndarray) -> SpectralKernel:
    # subnormal eigenvalues lose significand bits and their reciprocals
    # overflow; drop those frequencies like any degenerate term
    keep = k_diag >= np.finfo(float).tiny
    if not np.any(keep):
        raise ValueError("every eigenvalue underflowed; truncation too large")
    if not np.all(keep):
        basis = BasisSet(
            dimension=basis.dimension,
            truncation=basis.truncation,
            indices=tuple(
                idx for idx, kept in zip(basis.indices, keep) if kept
            ),
        )
        k_diag = k_diag[keep]
    return SpectralKernel(
        basis=basis, form="diagonal", k_diag=k_diag, j_diag=1.0 / k_diag
    )


def gaussian_spectral_1d(spec: GaussianKernelSpec, r: int) -> SpectralKernel:
    """Diagonal coefficient matrix of the 1d periodic Gaussian.

    Entry k equals mu * exp(-((pi * sigma * (k//2))**2) / 2); the sine and
    cosine functions of one frequency share an eigenvalue.
    """
    if spec.dimension != 1:
        raise ValueError("1d constructor requires a 1d kernel spec")
    if r < 1:
        raise ValueError(f"basis size must be positive, got {r}")
    b = basis_1d(r)
    n = np.array([k // 2 for k in b.indices], dtype=float)
    k_diag = spec.mu * np.exp(-0.5 * (math.pi * spec.sigma * n) ** 2)
    return _diagonal_kernel(b, k_diag)


def gaussian_spectral_2d(spec: GaussianKernelSpec, r: int) -> SpectralKernel:
    """Diagonal coefficient matrix of the 2d periodic Gaussian.

    Entries follow mu^2 * exp(-pi^2 sigma^2 ((k//2)^2 + (k'//2)^2) / 2) over
    the lexicographic tensor index list.
    """
    if spec.dimension != 2:
        raise ValueError("2d constructor requires a 2d kernel spec")
    b = basis_2d(r)
    n2 = np.array([(k // 2) ** 2 + (kp // 2) ** 2 for k, kp in b.indices], dtype=float)
    k_diag = spec.mu**2 * np.exp(-0.5 * math.pi**2 * spec.sigma**2 * n2)
    return _diagonal_kernel(b, k_diag)


def _image_count(sigma: float) -> int:
    # guarantees a relative periodization tail below double precision
    return max(3, int(math.ceil(1.0 + 4.3 * sigma)))


def kernel_eval_direct(spec: GaussianKernelSpec, x, y):
    """Pointwise periodic Gaussian value; x, y broadcastable arrays.

    For dimension 2 the inputs carry coordinates in the last axis and the
    value is the product of per-axis factors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.dimension == 1:
        return _gauss_axis(spec, x - y)
    diff = x - y
    if diff.shape[-1] != 2:
        raise ValueError("2d kernel requires coordinate pairs in the last axis")
    return _gauss_axis(spec, diff[..., 0]) * _gauss_axis(spec, diff[..., 1])


def _gauss_axis(spec: GaussianKernelSpec, t: np.ndarray) -> np.ndarray:
    s = spec.sigma / 2.0
    frac = t - np.floor(t)
    total = np.zeros_like(frac)
    m = _image_count(spec.sigma)
    for k in range(-m, m + 1):
        total += np.exp(-((frac - k) ** 2) / (2.0 * s * s))
    return spec.mu / math.sqrt(2.0 * math.pi * s * s) * total


def fourier_coefficients(kernel, basis: BasisSet, num_points: int) -> np.ndarray:
    """Coefficient matrix of a continuous periodic kernel by quadrature.

    Uses the tensor trapezoid rule on a uniform periodic grid (a plain grid
    average), which is spectrally accurate for smooth periodic kernels.
    ``kernel`` must accept broadcast numpy arrays: scalars for dimension 1,
    coordinate pairs in the last axis for dimension 2.
    """
    if num_points < 4 * basis.truncation:
        raise ValueError(
            f"grid too coarse: need at least {4 * basis.truncation} points per "
            f"axis, got {num_points}"
        )
    g = num_points
    if basis.dimension == 1:
        pts = np.arange(g) / g
        phi = eval_all(basis, pts)  # (g, m)
        kg = np.asarray(kernel(pts[:, None], pts[None, :]), dtype=float)
        return phi.T @ kg @ phi / g**2
    axis = np.arange(g) / g
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])  # (g*g, 2)
    phi = eval_all(basis, pts)  # (g*g, m)
    m = basis.size
    out = np.zeros((m, m))
    chunk = max(1, int(2**22 // (pts.shape[0] + 1)))
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk]
        kvals = np.asarray(
            kernel(block[:, None, :], pts[None, :, :]), dtype=float
        )
        out += phi[start : start + chunk].T @ (kvals @ phi)
    return out / g**4


def _fejer_weights(basis: BasisSet, r: int) -> np.ndarray:
    freqs = basis._axis_indices // 2  # (size, dimension)
    if np.any(freqs > r):
        raise ValueError(f"basis contains frequencies above {r}")
    return np.prod(1.0 - freqs / (r + 1.0), axis=1)


def fejer_average(
    coefficients: np.ndarray, r: int, basis: BasisSet | None = None
) -> np.ndarray:
    """Cesaro-averaged coefficient matrix with per-frequency weights.

    Each entry is damped by w_i * w_j where w = prod_axis(1 - n/(r+1)) and n
    is the per-axis frequency of the basis function. Without an explicit
    basis the rows are assumed to follow the standard 1d ordering.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got {c.shape}")
    if basis is None:
        basis = basis_1d(c.shape[0])
    if basis.size != c.shape[0]:
        raise ValueError("coefficient matrix does not match basis size")
    w = _fejer_weights(basis, r)
    return w[:, None] * c * w[None, :]


def psd_check(coefficients: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric coefficient matrix."""
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"matrix must be square, got {c.shape}")
    asym = float(np.max(np.abs(c - c.T))) if c.size else 0.0
    if asym > 1e-12:
        raise ValueError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    return float(np.min(np.linalg.eigvalsh(0.5 * (c + c.T))))


def translation_invariant_blocks(eta_cos, eta_sin) -> SpectralKernel:
    """Kernel built from per-frequency moments of a displacement profile.

    ``eta_cos[n]`` and ``eta_sin[n]`` are the cosine/sine moments of the
    profile at integer frequency n (n = 0 is the mean; its sine moment must
    vanish). Frequencies whose 2x2 block determinant falls below 1e-14 are
    dropped from the basis. An even profile (all sine moments zero) yields
    the diagonal form.
    """
    c = np.asarray(eta_cos, dtype=float)
    s = np.asarray(eta_sin, dtype=float)
    if c.shape != s.shape or c.ndim != 1 or c.size < 1:
        raise ValueError("moment arrays must be equal-length 1d vectors")
    if s[0] != 0.0:
        raise ValueError("sine moment at frequency 0 must be zero")

    kept: list[int] = []  # kept frequencies, ascending
    for n in range(c.size):
        if c[n] ** 2 + s[n] ** 2 >= DEGENERATE_DET:
            kept.append(n)
    if not kept:
        raise ValueError("all frequencies are degenerate; basis would be empty")

    indices: list[int] = []
    for n in kept:
        if n == 0:
            indices.append(1)
        else:
            indices.extend((2 * n, 2 * n + 1))
    max_k = max(indices)
    b = BasisSet(dimension=1, truncation=max_k, indices=tuple(indices))

    if np.all(s == 0.0):
        diag = []
        for n in kept:
            diag.extend([c[n]] if n == 0 else [c[n], c[n]])
        k_diag = np.asarray(diag)
        return SpectralKernel(
            basis=b, form="diagonal", k_diag=k_diag, j_diag=1.0 / k_diag
        )

    k_blocks, j_blocks = [], []
    for n in kept:
        if n == 0:
            k_blocks.append(np.array([[c[0]]]))
            j_blocks.append(np.array([[1.0 / c[0]]]))
            continue
        det = c[n] ** 2 + s[n] ** 2
        k_blocks.append(np.array([[c[n], s[n]], [-s[n], c[n]]]))
        j_blocks.append(np.array([[c[n], -s[n]], [s[n], c[n]]]) / det)
    return SpectralKernel(
        basis=b,
        form="block2x2",
        k_blocks=tuple(k_blocks),
        j_blocks=tuple(j_blocks),
    )


def _dense_inverse(k_mat: np.ndarray) -> np.ndarray:
    j = np.linalg.inv(k_mat)
    # one Newton refinement step tightens K @ J toward the identity
    return j + j @ (np.eye(k_mat.shape[0]) - k_mat @ j)


def spectral_from_dense(
    coefficients: np.ndarray, basis: BasisSet, eps: float | None = None
) -> SpectralKernel:
    """Dense-form kernel from a symmetric coefficient matrix.

    With eps=None a shift of 1e-6 is applied automatically when the
    smallest eigenvalue drops below 1e-10; an explicit eps (including 0) is
    honored, with a warning when it leaves the matrix near-singular.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (basis.size, basis.size):
        raise ValueError(
            f"coefficient matrix shape {c.shape} does not match basis size "
            f"{basis.size}"
        )
    asym = float(np.max(np.abs(c - c.T)))
    if asym > 1e-10:
        raise ValueError(f"dense kernels must be symmetric (asymmetry {asym:.3e})")
    c = 0.5 * (c + c.T)
    min_eig = float(np.min(np.linalg.eigvalsh(c)))
    if eps is None:
        eps = AUTO_EPS if min_eig < AUTO_EPS_TRIGGER else 0.0
    elif min_eig + eps < AUTO_EPS_TRIGGER:
        warnings.warn(
            f"coefficient matrix is near-singular (min eigenvalue {min_eig:.3e}) "
            f"and eps={eps} leaves it so",
            RuntimeWarning,
            stacklevel=2,
        )
    k_mat = c + eps * np.eye(basis.size)
    try:
        j_mat = _dense_inverse(k_mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"coefficient matrix is singular: {exc}") from exc
    return SpectralKernel(
        basis=basis, form="dense", k_mat=k_mat, j_mat=j_mat, eps=float(eps)
    )


def regularize(kernel: SpectralKernel, eps: float) -> SpectralKernel:
    """Shift the coefficient matrix by eps * Id and rebuild the inverse."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if eps == 0.0:
        return kernel
    total = kernel.eps + eps
    if kernel.form == "diagonal":
        k_diag = kernel.k_diag + eps
        return SpectralKernel(
            basis=kernel.basis,
            form="diagonal",
            k_diag=k_diag,
            j_diag=1.0 / k_diag,
            eps=total,
        )
    if kernel.form == "block2x2":
        k_blocks, j_blocks = [], []
        for blk in kernel.k_blocks:
            shifted = blk + eps * np.eye(blk.shape[0])
            k_blocks.append(shifted)
            if shifted.shape[0] == 1:
                j_blocks.append(np.array([[1.0 / shifted[0, 0]]]))
            else:
                cc, ss = shifted[0, 0], shifted[0, 1]
                det = cc * cc + ss * ss
                j_blocks.append(np.array([[cc, -ss], [ss, cc]]) / det)
        return SpectralKernel(
            basis=kernel.basis,
            form="block2x2",
            k_blocks=tuple(k_blocks),
            j_blocks=tuple(j_blocks),
            eps=total,
        )
    k_mat = kernel.k_mat + eps * np.eye(kernel.size)
    return SpectralKernel(
        basis=kernel.basis,
        form="dense",
        k_mat=k_mat,
        j_mat=_dense_inverse(k_mat),
        eps=total,
    )
