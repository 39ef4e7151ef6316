"""Posterior-ensemble prediction and full-field uncertainty maps.

Two complementary fields are emitted on the measurement grid:

* aleatoric: the per-mode noise scales learned during pre-training pushed
  through the reconstruction basis; fixed for a trained model, and
* epistemic: the spread of predicted coefficients across posterior samples
  pushed through the same basis; input-dependent.

Both use the same reconstruction rule.  ``linear-abs`` takes the absolute
value of the plain linear combination ``|V_r @ u|`` (signed basis entries
can cancel); ``variance`` propagates variances, ``sqrt(V_r^2 @ u^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import PcaBasis

FIELD_MODES = ("linear-abs", "variance")


class EnsemblePredictor:
    """Vectorized forward passes of every posterior sample.

    Parameters are unpacked once into per-layer stacked arrays; predictions
    then run one frame at a time so streaming and batch evaluation share an
    identical arithmetic path.
    """

    def __init__(self, arch, samples):
        samples = np.asarray(samples)
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise RuntimeError("ensemble must contain at least one sample")
        if samples.shape[1] != arch.n_params:
            raise ValueError(
                f"ensemble dimension {samples.shape[1]} does not match "
                f"architecture ({arch.n_params} parameters)")
        self.arch = arch
        self.m = samples.shape[0]
        self.weights = []
        # convert layer by layer so a float32 ensemble is never duplicated whole
        for w, b, nin, nout in arch.slices():
            self.weights.append((samples[:, w].astype(float).reshape(self.m, nin, nout),
                                 samples[:, b].astype(float)[:, None, :]))

    def forward_all(self, x):
        """(M, output_dim) predictions of all samples for one input frame."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.arch.input_dim,):
            raise ValueError(f"expected a length-{self.arch.input_dim} frame")
        h = np.broadcast_to(x, (self.m, 1, x.size))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(self.weights):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
        return h[:, 0, :]

    def predict(self, x):
        """(z_mean, z_std) for one frame or a sequence of frames.

        The standard deviation is the population spread across the M
        posterior samples.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            out = self.forward_all(x)
            return out.mean(axis=0), out.std(axis=0)
        means = np.empty((x.shape[0], self.arch.output_dim))
        stds = np.empty_like(means)
        for i, frame in enumerate(x):
            out = self.forward_all(frame)
            means[i] = out.mean(axis=0)
            stds[i] = out.std(axis=0)
        return means, stds


def predict_ensemble(gauges, samples, arch):
    """Functional wrapper over :class:`EnsemblePredictor`."""
    return EnsemblePredictor(arch, samples).predict(gauges)


@dataclass(frozen=True)
class UncertaintyField:
    """A nonnegative uncertainty map on the measurement grid."""

    kind: str  # "aleatoric" | "epistemic"
    grid: np.ndarray
    space: str = "normalized"  # or "physical"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if not np.all(np.isfinite(grid)) or (grid < 0).any():
            raise ValueError("uncertainty values must be finite and >= 0")
        object.__setattr__(self, "grid", grid)


def _mode_scales_to_field(scales, basis, mode):
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (basis.k,):
        raise ValueError(f"expected {basis.k} mode scales, got {scales.shape}")
    if (scales < 0).any():
        raise ValueError("mode scales must be nonnegative")
    if mode == "linear-abs":
        cells = np.abs(basis.v_r @ scales)
    elif mode == "variance":
        cells = np.sqrt((basis.v_r**2) @ scales**2)
    else:
        raise ValueError(f"unknown field mode {mode!r}; use one of {FIELD_MODES}")
    return cells.reshape(basis.rows, basis.cols)


def aleatoric_field(sigma_hat, basis, mode="linear-abs"):
    """Fixed noise-scale field from the pre-trained per-mode sigmas."""
    return UncertaintyField("aleatoric", _mode_scales_to_field(sigma_hat, basis, mode))


def epistemic_field(z_std, basis, mode="linear-abs"):
    """Input-dependent field from the posterior coefficient spread."""
    return UncertaintyField("epistemic", _mode_scales_to_field(z_std, basis, mode))


def to_physical(field, basis):
    """Scale a normalized uncertainty field by the per-cell data range."""
    span = (basis.norm_max - basis.norm_min).reshape(basis.rows, basis.cols)
    return UncertaintyField(field.kind, field.grid * span, space="physical")


def _keys_weights(frac, a=-0.5):
    """Cubic-convolution weights for neighbor offsets (-1, 0, 1, 2)."""
    s1 = 1.0 + frac  # distance to the left-left node
    s2 = frac
    s3 = 1.0 - frac
    s4 = 2.0 - frac
    near = lambda s: (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0
    far = lambda s: a * (s**3 - 5.0 * s**2 + 8.0 * s - 4.0)
    return np.stack([far(s1), near(s2), near(s3), far(s4)], axis=-1)


def _pad_quadratic(grid):
    # quadratic extrapolation keeps low-degree polynomials exact at edges:
    # f[-1] = 3 f[0] - 3 f[1] + f[2]; 2-node axes fall back to linear
    g = grid
    if len(g) >= 3:
        top = 3 * g[0] - 3 * g[1] + g[2]
        top2 = 3 * top - 3 * g[0] + g[1]
        bot = 3 * g[-1] - 3 * g[-2] + g[-3]
        bot2 = 3 * bot - 3 * g[-1] + g[-2]
    else:
        top = 2 * g[0] - g[1]
        top2 = 2 * top - g[0]
        bot = 2 * g[-1] - g[-2]
        bot2 = 2 * bot - g[-1]
    return np.vstack([top2, top, g, bot, bot2])


def _upsample_axis(grid, factor):
    n = grid.shape[0]
    padded = _pad_quadratic(grid)
    u = np.arange(n * factor) / factor
    base = np.floor(u).astype(int)
    frac = u - base
    w = _keys_weights(frac)  # (n*factor, 4)
    idx = base[:, None] + np.arange(-1, 3)[None, :] + 2  # +2 for the padding
    return np.einsum("uk,ukc->uc", w, padded[idx])


def bicubic_upsample(grid, factor):
    """Keys cubic-convolution upsampling by an integer factor.

    Output cell (i*factor, j*factor) reproduces input cell (i, j) exactly;
    constants and low-degree polynomial ramps pass through unchanged,
    including at the edges.
    """
    values = grid.values if hasattr(grid, "values") else np.asarray(grid, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 2:
        raise ValueError("need a 2-D grid of at least 2x2 cells")
    if int(factor) != factor or factor < 1:
        raise ValueError("factor must be an integer >= 1")
    factor = int(factor)
    if factor == 1:
        return values.copy()
    out = _upsample_axis(values, factor)
    out = _upsample_axis(out.T, factor).T
    return out


@dataclass
class FieldMetrics:
    """Per-mode test metrics plus an optional per-cell error grid."""

    mae: np.ndarray
    rmse: np.ndarray
    r2: list  # float per mode, or None where the truth is constant
    coverage95: np.ndarray
    error_grid: np.ndarray | None = None


def evaluate(z_true, z_mean, z_std, fields_true=None, fields_pred=None, grid_shape=None):
    """Per-mode MAE / RMSE / R^2 over a test sequence.

    R^2 = 1 - SS_res / SS_tot per mode; a constant true sequence has no
    variance to explain and reports None for that mode.  ``coverage95`` is
    the fraction of samples inside the mean +- 1.96 std band.  When paired
    full-field sequences are given, the mean absolute error per grid cell is
    attached as ``error_grid``.
    """
    zt = np.atleast_2d(np.asarray(z_true, dtype=float))
    zm = np.atleast_2d(np.asarray(z_mean, dtype=float))
    zs = np.atleast_2d(np.asarray(z_std, dtype=float))
    if zt.shape != zm.shape or zt.shape != zs.shape:
        raise ValueError("truth, mean and std sequences must share a shape")
    if zt.shape[0] == 0:
        raise ValueError("empty test sequence")
    err = zm - zt
    mae = np.abs(err).mean(axis=0)
    rmse = np.sqrt((err**2).mean(axis=0))
    ss_res = (err**2).sum(axis=0)
    ss_tot = ((zt - zt.mean(axis=0)) ** 2).sum(axis=0)
    r2 = [None if t == 0 else float(1.0 - r / t) for r, t in zip(ss_res, ss_tot)]
    coverage = (np.abs(err) <= 1.96 * zs).mean(axis=0)
    error_grid = None
    if fields_true is not None and fields_pred is not None:
        ft = np.atleast_2d(np.asarray(fields_true, dtype=float))
        fp = np.atleast_2d(np.asarray(fields_pred, dtype=float))
        if ft.shape != fp.shape:
            raise ValueError("field sequences must share a shape")
        grid = np.abs(fp - ft).mean(axis=0)
        if grid_shape is not None:
            grid = grid.reshape(grid_shape)
        error_grid = grid
    return FieldMetrics(mae=mae, rmse=rmse, r2=r2, coverage95=coverage, error_grid=error_grid)
