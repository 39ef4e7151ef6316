"""Fixed-architecture MLP with hand-written gradients and its training losses.

The model maps 12 gauge readings to the leading modal coefficients through
three tanh hidden layers.  All weights and biases live in one flat vector so
the posterior sampler can treat the network as a plain function of a single
parameter vector.  Two objectives are implemented:

* a mode-weighted heteroscedastic Gaussian loss for pre-training, where a
  trainable log-variance per output mode learns the irreducible noise, and
* the posterior potential energy used by the sampler: a Gaussian likelihood
  with fixed per-mode scales plus an isotropic Gaussian prior centered at
  the pre-trained parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

LOG_VAR_MIN = -10.0  # clamp bounds keep exp(log_var) away from under/overflow
LOG_VAR_MAX = 4.0


@dataclass(frozen=True)
class NetArchitecture:
    """Layer sizes of the gauge-to-coefficients MLP."""

    input_dim: int = 12
    hidden: tuple = (100, 100, 100)
    output_dim: int = 8

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("all layer dimensions must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def dims(self):
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_params(self):
        dims = self.dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))

    def slices(self):
        """(weight_slice, bias_slice, in_dim, out_dim) per layer over the flat vector."""
        dims = self.dims
        out = []
        o = 0
        for i in range(len(dims) - 1):
            nin, nout = dims[i], dims[i + 1]
            w = slice(o, o + nin * nout)
            o += nin * nout
            b = slice(o, o + nout)
            o += nout
            out.append((w, b, nin, nout))
        return out


@dataclass
class BnnParams:
    """Flat network parameters plus the per-mode log-variances."""

    theta: np.ndarray
    log_var: np.ndarray

    def copy(self):
        return BnnParams(self.theta.copy(), self.log_var.copy())


def init_params(arch, seed=0):
    """Scaled uniform fan-in init; log-variances start at 0 (unit sigma)."""
    rng = np.random.default_rng(seed)
    theta = np.empty(arch.n_params)
    for w, b, nin, nout in arch.slices():
        bound = 1.0 / np.sqrt(nin)
        theta[w] = rng.uniform(-bound, bound, nin * nout)
        theta[b] = 0.0
    return BnnParams(theta=theta, log_var=np.zeros(arch.output_dim))


def _layer_views(arch, theta):
    views = []
    for w, b, nin, nout in arch.slices():
        views.append((theta[w].reshape(nin, nout), theta[b]))
    return views


def forward(arch, theta, x):
    """Network output for a single input or a batch.

    Raises :class:`NumericError` naming the first layer whose output is
    non-finite.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} inputs, got {h.shape[1]}")
    layers = _layer_views(arch, theta)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if not np.all(np.isfinite(h)):
            raise NumericError(f"non-finite activation at layer {i}")
        if i < last:
            h = np.tanh(h)
    return h[0] if single else h


def _forward_cached(arch, theta, x):
    """Forward pass keeping the post-activation of every layer for backprop."""
    layers = _layer_views(arch, theta)
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def _backward(arch, theta, acts, gout):
    """Flat gradient of a scalar loss given d(loss)/d(output)."""
    layers = _layer_views(arch, theta)
    grad = np.empty_like(theta)
    slices = arch.slices()
    delta = gout
    for l in range(len(layers) - 1, -1, -1):
        w, _ = layers[l]
        wsl, bsl, nin, nout = slices[l]
        grad[wsl] = (acts[l].T @ delta).reshape(-1)
        grad[bsl] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ w.T) * (1.0 - acts[l] ** 2)
    return grad


def pretrain_loss(arch, params, inputs, targets, eigenvalues):
    """Mode-weighted heteroscedastic Gaussian loss and its exact gradients.

    loss = (1/N)(1/K) sum_i sum_j w_j [ r_ij^2 / (2 sigma_j^2)
                                        + log(sigma_j^2) / 2 ]
    with w_j the j-th explained-variance weight normalized over the full
    spectrum.  Returns ``(loss, grad_theta, grad_log_var)``.
    """
    x = np.asarray(inputs, dtype=float)
    z = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-D array")
    lam = np.asarray(eigenvalues, dtype=float)
    k = arch.output_dim
    if lam.size < k:
        raise ValueError(f"need at least {k} eigenvalues, got {lam.size}")
    w = lam[:k] / lam.sum()
    n = x.shape[0]
    inv_var = np.exp(-params.log_var)
    out, acts = _forward_cached(arch, params.theta, x)
    resid = out - z
    per_mode = 0.5 * inv_var * (resid**2).sum(axis=0) + 0.5 * n * params.log_var
    loss = float((w * per_mode).sum() / (n * k))
    if not np.isfinite(loss):
        raise NumericError("non-finite pre-training loss")
    gout = (w * inv_var) * resid / (n * k)
    grad_theta = _backward(arch, params.theta, acts, gout)
    grad_log_var = w * 0.5 * (n - inv_var * (resid**2).sum(axis=0)) / (n * k)
    return loss, grad_theta, grad_log_var


@dataclass
class AdamState:
    """First/second-moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim):
        return cls(m=np.zeros(dim), v=np.zeros(dim), t=0)


def adam_step(state, params, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; mutates and returns (params, state)."""
    if state.m.shape != grad.shape:
        raise ValueError("state and gradient dimensions differ")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    mhat = state.m / (1.0 - beta1**state.t)
    vhat = state.v / (1.0 - beta2**state.t)
    params = params - lr * mhat / (np.sqrt(vhat) + eps)
    return params, state


@dataclass
class PretrainResult:
    params: BnnParams  # theta is the pre-trained point estimate
    sigma_hat: np.ndarray  # exp(log_var / 2), one per output mode
    train_loss: list
    val_loss: list
    clamp_events: int


def pretrain(arch, inputs, targets, eigenvalues, *, lr=0.001, epochs=300,
             batch_size=64, val_fraction=0.2, seed=0):
    """Adam pre-training of the network and its mode-wise variances.

    Inputs are shuffled into train/validation subsets once, then trained
    with seeded mini-batches.  Deterministic for a fixed seed.  Returns a
    :class:`PretrainResult`; per-epoch losses are evaluated full-batch.
    """
    x = np.asarray(inputs, dtype=float)
    z = np.asarray(targets, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    split_rng = np.random.default_rng([seed, 1])
    perm = split_rng.permutation(n)
    n_val = int(round(val_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    xt, zt = x[train_idx], z[train_idx]
    xv, zv = x[val_idx], z[val_idx]

    params = init_params(arch, seed=[seed, 0])
    dim = params.theta.size + params.log_var.size
    state = AdamState.zeros(dim)
    batch_rng = np.random.default_rng([seed, 2])
    train_hist, val_hist = [], []
    clamps = 0
    bs = len(xt) if batch_size is None else min(batch_size, len(xt))
    for epoch in range(epochs):
        order = batch_rng.permutation(len(xt))
        try:
            for lo in range(0, len(xt), bs):
                idx = order[lo:lo + bs]
                loss, gt, gv = pretrain_loss(arch, params, xt[idx], zt[idx], eigenvalues)
                flat = np.concatenate([params.theta, params.log_var])
                flat, state = adam_step(state, flat, np.concatenate([gt, gv]), lr)
                params.theta = flat[:params.theta.size]
                log_var = flat[params.theta.size:]
                clipped = np.clip(log_var, LOG_VAR_MIN, LOG_VAR_MAX)
                clamps += int((clipped != log_var).sum())
                params.log_var = clipped
            tl, _, _ = pretrain_loss(arch, params, xt, zt, eigenvalues)
            train_hist.append(tl)
            if len(xv):
                vl, _, _ = pretrain_loss(arch, params, xv, zv, eigenvalues)
                val_hist.append(vl)
        except NumericError as e:
            raise NumericError(f"pre-training diverged at epoch {epoch}") from e
    return PretrainResult(
        params=params,
        sigma_hat=np.exp(0.5 * params.log_var),
        train_loss=train_hist,
        val_loss=val_hist,
        clamp_events=clamps,
    )


@dataclass(frozen=True)
class LikelihoodScales:
    """Per-mode Gaussian likelihood scales beta_i = sigma_hat_i / d."""

    beta: np.ndarray
    d: float = 20.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if np.any(beta <= 0):
            raise ValueError("all likelihood scales must be positive")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_sigma_hat(cls, sigma_hat, d=20.0):
        if d <= 0:
            raise ValueError("calibration constant d must be positive")
        return cls(beta=np.asarray(sigma_hat, dtype=float) / d, d=d)


@dataclass(frozen=True)
class PriorSpec:
    """Isotropic Gaussian prior centered at the pre-trained parameters."""

    mean: np.ndarray
    std: float = 0.5

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("prior std must be positive")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))


def potential_energy(arch, theta, inputs, targets, scales, prior):
    """Negative log posterior (up to a constant) and its gradient in theta.

    U = sum_i [ N log beta_i + sum_j r_ij^2 / (2 beta_i^2) ]
        + ||theta - prior.mean||^2 / (2 prior.std^2)

    The per-mode scales stay fixed; only theta is differentiated.  An empty
    dataset reduces U to the prior term.
    """
    x = np.asarray(inputs, dtype=float)
    z = np.asarray(targets, dtype=float)
    beta = scales.beta
    diff = theta - prior.mean
    u_prior = float(diff @ diff) / (2.0 * prior.std**2)
    g_prior = diff / prior.std**2
    if x.size == 0:
        return u_prior, g_prior
    n = x.shape[0]
    out, acts = _forward_cached(arch, theta, x)
    resid = out - z
    inv_b2 = 1.0 / beta**2
    u_data = float(n * np.log(beta).sum() + 0.5 * (inv_b2 * (resid**2).sum(axis=0)).sum())
    u = u_data + u_prior
    if not np.isfinite(u):
        raise NumericError("non-finite potential energy")
    grad = _backward(arch, theta, acts, resid * inv_b2) + g_prior
    return u, grad


def make_potential(arch, inputs, targets, scales, prior):
    """Bind a dataset into a ``theta -> (U, grad)`` callable for the sampler."""
    x = np.asarray(inputs, dtype=float)
    z = np.asarray(targets, dtype=float)

    def potential(theta):
        return potential_energy(arch, theta, x, z, scales, prior)

    return potential
