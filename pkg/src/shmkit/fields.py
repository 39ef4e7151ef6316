"""Strain-field grids, min-max normalization and the truncated PCA basis.

A monitored surface is discretized on an ``rows x cols`` grid; a stack of
frames flattened row-major forms an ``(n_samples, p)`` data matrix.  The
matrix is min-max normalized per cell, decomposed with an SVD, and the
leading ``k`` right singular vectors become the reconstruction basis that
maps between ``k`` modal coefficients and ``p`` grid cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class StrainField:
    """One full-field strain frame on a rows x cols grid (row-major)."""

    rows: int
    cols: int
    values: np.ndarray

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.rows}x{self.cols}")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.rows, self.cols):
            values = values.reshape(self.rows, self.cols)
        if not np.all(np.isfinite(values)):
            raise ValueError("strain field contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_vector(cls, vec, rows, cols):
        vec = np.asarray(vec, dtype=float)
        if vec.size != rows * cols:
            raise ValueError(f"expected {rows * cols} values, got {vec.size}")
        return cls(rows, cols, vec.reshape(rows, cols))

    def to_vector(self):
        return self.values.reshape(-1).copy()


def minmax_normalize(raw):
    """Map every column of an (n, p) matrix into [0, 1].

    Constant columns map to 0 and their range is recorded as 1 so that
    denormalization stays a bijection.  Returns ``(normalized, norm_min,
    norm_max)``.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={x.ndim}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples to normalize")
    bad = ~np.isfinite(x)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"non-finite entry at sample {i}, column {j}")
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = hi - lo
    constant = span == 0.0
    span = np.where(constant, 1.0, span)
    hi = np.where(constant, lo + 1.0, hi)
    xn = (x - lo) / span
    return xn, lo, hi


def denormalize(xn, norm_min, norm_max):
    """Invert :func:`minmax_normalize` using the recorded bounds."""
    xn = np.asarray(xn, dtype=float)
    return xn * (np.asarray(norm_max) - np.asarray(norm_min)) + np.asarray(norm_min)


@dataclass(frozen=True)
class PcaBasis:
    """Truncated right singular vectors plus the data needed to invert them.

    ``v_r`` is p x k with orthonormal columns, ``singular_values`` is the
    full nonincreasing spectrum, and ``norm_min``/``norm_max`` are the
    per-cell normalization bounds of the matrix the basis was fit on.
    """

    k: int
    p: int
    rows: int
    cols: int
    v_r: np.ndarray
    singular_values: np.ndarray
    norm_min: np.ndarray
    norm_max: np.ndarray

    def __post_init__(self):
        if not 1 <= self.k <= self.p:
            raise ValueError(f"k={self.k} out of range for p={self.p}")
        if self.rows * self.cols != self.p:
            raise ValueError("grid shape does not match p")
        v = np.asarray(self.v_r, dtype=float)
        if v.shape != (self.p, self.k):
            raise ValueError(f"v_r must be {self.p}x{self.k}, got {v.shape}")
        gram = v.T @ v
        if np.abs(gram - np.eye(self.k)).max() > ORTHO_TOL:
            raise ValueError("basis columns are not orthonormal")
        s = np.asarray(self.singular_values, dtype=float)
        if np.any(s < 0) or np.any(np.diff(s) > 1e-12 * max(s[0], 1.0)):
            raise ValueError("singular values must be nonnegative and nonincreasing")
        object.__setattr__(self, "v_r", v)
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "norm_min", np.asarray(self.norm_min, dtype=float))
        object.__setattr__(self, "norm_max", np.asarray(self.norm_max, dtype=float))

    @property
    def eigenvalues(self):
        """Explained-variance weights: squared singular values."""
        return self.singular_values**2


def _fix_signs(v):
    # Largest-magnitude entry of each column made positive so bases are
    # reproducible across runs.
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def fit_pca(xn, k, *, rows, cols, norm_min, norm_max):
    """Fit a rank-k basis to a normalized (n, p) matrix.

    The decomposition goes through the eigen-decomposition of the smaller
    Gram matrix (p x p when n >= p, n x n otherwise); eigenvalues of
    ``X^T X`` are the squared singular values.
    """
    x = np.asarray(xn, dtype=float)
    n, p = x.shape
    if not 1 <= k <= min(n, p):
        raise ValueError(f"k={k} out of range for a {n}x{p} matrix")
    if not np.all(np.isfinite(x)):
        raise NumericError("data matrix contains non-finite values")
    m = min(n, p)
    if n >= p:
        lam, vecs = np.linalg.eigh(x.T @ x)
        lam = lam[::-1]
        v = vecs[:, ::-1]
    else:
        lam, u = np.linalg.eigh(x @ x.T)
        lam = lam[::-1]
        u = u[:, ::-1]
        sv = np.sqrt(np.clip(lam, 0.0, None))
        safe = np.where(sv > 0, sv, 1.0)
        v = (x.T @ u) / safe
        # zero singular values leave v columns undefined; they are never
        # retained because k <= rank in practice, but keep them unit-norm
        norms = np.linalg.norm(v, axis=0)
        v = v / np.where(norms > 0, norms, 1.0)
    lam = np.clip(lam[:m], 0.0, None)
    singular_values = np.sqrt(lam)
    # re-orthonormalize to push rounding below the contract tolerance
    q, r = np.linalg.qr(v[:, :k])
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    v_r = _fix_signs(q * d)
    return PcaBasis(
        k=k,
        p=p,
        rows=rows,
        cols=cols,
        v_r=v_r,
        singular_values=singular_values,
        norm_min=np.asarray(norm_min, dtype=float),
        norm_max=np.asarray(norm_max, dtype=float),
    )


def cev(basis, k):
    """Cumulative explained variance of the leading k modes."""
    s = basis.singular_values if isinstance(basis, PcaBasis) else np.asarray(basis, dtype=float)
    if s.size == 0:
        raise RuntimeError("empty singular spectrum")
    if not 1 <= k <= s.size:
        raise ValueError(f"k={k} out of range for spectrum of length {s.size}")
    energy = s**2
    total = energy.sum()
    if total == 0:
        raise RuntimeError("spectrum has zero total energy")
    return float(energy[:k].sum() / total)


def smallest_k_for_cev(singular_values, threshold):
    """Smallest k whose cumulative explained variance reaches threshold."""
    s = np.asarray(singular_values, dtype=float)
    energy = s**2
    ratios = np.cumsum(energy) / energy.sum()
    hits = np.nonzero(ratios >= threshold - 1e-15)[0]
    return int(hits[0]) + 1 if hits.size else s.size


def project(row, basis):
    """Modal coefficients ``z = row @ v_r`` of a normalized field row.

    Accepts a single length-p vector or an (n, p) matrix.
    """
    row = np.asarray(row, dtype=float)
    if row.shape[-1] != basis.p:
        raise ValueError(f"expected length-{basis.p} rows, got {row.shape[-1]}")
    return row @ basis.v_r


def reconstruct(z, basis, denorm=False):
    """Field row ``z @ v_r^T``, optionally mapped back to physical units."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != basis.k:
        raise ValueError(f"expected length-{basis.k} coefficients, got {z.shape[-1]}")
    row = z @ basis.v_r.T
    if denorm:
        row = denormalize(row, basis.norm_min, basis.norm_max)
    return row
