import numpy as np
import pytest

from shmkit.errors import NumericError
from shmkit.network import (AdamState, BnnParams, LikelihoodScales,
                            NetArchitecture, PriorSpec, adam_step, forward,
                            init_params, make_potential, potential_energy,
                            pretrain, pretrain_loss)

SMALL = NetArchitecture(input_dim=5, hidden=(7, 6), output_dim=3)


def loop_forward(arch, theta, x):
    """Straight-line reimplementation with explicit loops, no shared code."""
    dims = list(arch.dims)
    weights = []
    o = 0
    for i in range(len(dims) - 1):
        nin, nout = dims[i], dims[i + 1]
        w = [[theta[o + r * nout + c] for c in range(nout)] for r in range(nin)]
        o += nin * nout
        b = [theta[o + c] for c in range(nout)]
        o += nout
        weights.append((w, b))
    h = list(x)
    for layer, (w, b) in enumerate(weights):
        nxt = []
        for c in range(len(b)):
            acc = b[c]
            for r in range(len(h)):
                acc += h[r] * w[r][c]
            nxt.append(acc)
        if layer < len(weights) - 1:
            nxt = [np.tanh(v) for v in nxt]
        h = nxt
    return np.array(h)


def fd_gradient(f, x, idx, h=1e-5):
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        out[j] = (f(xp) - f(xm)) / (2 * h)
    return out


def rel_err(a, b):
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-10)
    return np.abs(a - b) / denom


class TestArchitecture:
    def test_parameter_count(self):
        arch = NetArchitecture(12, (100, 100, 100), 8)
        assert arch.n_params == 22308

    def test_slices_cover_vector(self):
        covered = np.zeros(SMALL.n_params, dtype=bool)
        for w, b, nin, nout in SMALL.slices():
            assert not covered[w].any() and not covered[b].any()
            covered[w] = True
            covered[b] = True
            assert w.stop - w.start == nin * nout
            assert b.stop - b.start == nout
        assert covered.all()

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            NetArchitecture(0, (5,), 2)


class TestForward:
    def test_zero_params(self):
        theta = np.zeros(SMALL.n_params)
        assert np.all(forward(SMALL, theta, np.ones(5)) == 0.0)

    def test_output_bias_only(self):
        params = BnnParams(np.zeros(SMALL.n_params), np.zeros(3))
        wsl, bsl, _, _ = SMALL.slices()[-1]
        params.theta[bsl] = [1.0, -2.0, 3.0]
        rng = np.random.default_rng(0)
        for _ in range(3):
            out = forward(SMALL, params.theta, rng.normal(size=5))
            assert np.allclose(out, [1.0, -2.0, 3.0])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(5)
        theta = rng.normal(size=SMALL.n_params) * 0.5
        x = rng.normal(size=5)
        assert np.abs(forward(SMALL, theta, x) - loop_forward(SMALL, theta, x)).max() < 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(6)
        theta = rng.normal(size=SMALL.n_params) * 0.5
        xs = rng.normal(size=(4, 5))
        batch = forward(SMALL, theta, xs)
        for i in range(4):
            assert np.allclose(batch[i], forward(SMALL, theta, xs[i]), atol=1e-12)

    def test_repeated_call_bit_identical(self):
        rng = np.random.default_rng(7)
        theta = rng.normal(size=SMALL.n_params) * 0.5
        x = rng.normal(size=5)
        assert np.array_equal(forward(SMALL, theta, x), forward(SMALL, theta, x))

    def test_non_finite_reports_layer(self):
        theta = np.zeros(SMALL.n_params)
        theta[0] = np.inf
        with pytest.raises(NumericError, match="layer 0"):
            forward(SMALL, theta, np.ones(5))

    def test_input_dim_check(self):
        with pytest.raises(ValueError):
            forward(SMALL, np.zeros(SMALL.n_params), np.ones(4))


class TestPretrainLoss:
    def test_perfect_prediction_unit_sigma(self):
        arch = NetArchitecture(2, (3,), 2)
        params = init_params(arch, seed=0)
        x = np.array([[0.1, 0.2], [0.3, -0.1]])
        z = forward(arch, params.theta, x)
        loss, gt, gv = pretrain_loss(arch, params, x, z, np.array([1.0, 1.0]))
        assert loss == 0.0
        assert np.abs(gt).max() == 0.0

    def test_hand_computed_value(self):
        # one sample, only mode 1 weighted, residual 2, sigma^2 = 4:
        # loss = (1/8) * (0.5 * 0.25 * 4 + 0.5 * ln 4)
        arch = NetArchitecture(12, (4,), 8)
        params = BnnParams(np.zeros(arch.n_params), np.zeros(8))
        params.log_var[0] = np.log(4.0)
        lam = np.zeros(16)
        lam[0] = 1.0
        x = np.zeros((1, 12))
        z = np.zeros((1, 8))
        z[0, 0] = -2.0  # output is 0, so residual is +2
        loss, _, _ = pretrain_loss(arch, params, x, z, lam)
        expected = (0.5 * 0.25 * 4.0 + 0.5 * np.log(4.0)) / 8.0
        assert loss == pytest.approx(expected, rel=1e-12)
        assert loss == pytest.approx(0.1491, abs=1e-4)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        params = BnnParams(rng.normal(size=SMALL.n_params) * 0.4,
                           rng.normal(size=3) * 0.3)
        x = rng.normal(size=(9, 5))
        z = rng.normal(size=(9, 3))
        lam = np.array([5.0, 2.0, 1.0, 0.5])
        _, gt, gv = pretrain_loss(SMALL, params, x, z, lam)
        idx = rng.choice(SMALL.n_params, size=40, replace=False)
        fd = fd_gradient(
            lambda th: pretrain_loss(SMALL, BnnParams(th, params.log_var), x, z, lam)[0],
            params.theta, idx)
        assert rel_err(gt[idx], fd).max() < 1e-5
        fdv = fd_gradient(
            lambda lv: pretrain_loss(SMALL, BnnParams(params.theta, lv), x, z, lam)[0],
            params.log_var, [0, 1, 2])
        assert rel_err(gv, fdv).max() < 1e-5

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(3)
        params = BnnParams(rng.normal(size=SMALL.n_params) * 0.3, np.zeros(3))
        x = rng.normal(size=(5, 5))
        z = rng.normal(size=(5, 3))
        lam = np.array([4.0, 2.0, 1.0])
        l1, g1, v1 = pretrain_loss(SMALL, params, x, z, lam)
        l2, g2, v2 = pretrain_loss(SMALL, params, x, z, 7.5 * lam)
        assert l1 == pytest.approx(l2, rel=1e-12)
        assert np.allclose(g1, g2, rtol=1e-12)

    def test_mode_residual_monotonicity(self):
        # bumping the residual of mode j raises the loss with slope w_j / sigma_j^2
        arch = NetArchitecture(2, (3,), 2)
        params = BnnParams(np.zeros(arch.n_params), np.log(np.array([1.0, 4.0])))
        x = np.zeros((1, 2))
        lam = np.array([3.0, 1.0])
        w = lam / lam.sum()
        sig2 = np.array([1.0, 4.0])
        for j in range(2):
            z = np.zeros((1, 2))
            z[0, j] = -1.0
            z2 = np.zeros((1, 2))
            z2[0, j] = -1.1
            l1, _, _ = pretrain_loss(arch, params, x, z, lam)
            l2, _, _ = pretrain_loss(arch, params, x, z2, lam)
            assert l2 > l1
            slope = (l2 - l1) / (0.5 * (1.1**2 - 1.0**2))
            assert slope == pytest.approx(w[j] / sig2[j] / 2.0, rel=1e-9)

    def test_empty_batch_rejected(self):
        params = init_params(SMALL, seed=0)
        with pytest.raises(ValueError):
            pretrain_loss(SMALL, params, np.zeros((0, 5)), np.zeros((0, 3)), np.ones(3))


class TestAdam:
    def test_zero_gradient_no_move(self):
        state = AdamState.zeros(4)
        p = np.array([1.0, -2.0, 3.0, 0.5])
        p2, _ = adam_step(state, p, np.zeros(4), lr=0.01)
        assert np.array_equal(p2, p)

    def test_first_step_unit_gradient(self):
        state = AdamState.zeros(1)
        p, _ = adam_step(state, np.zeros(1), np.ones(1), lr=0.001)
        assert p[0] == pytest.approx(-0.001, rel=1e-6)

    def test_constant_gradient_step_magnitude(self):
        state = AdamState.zeros(1)
        p = np.zeros(1)
        g = np.array([3.7])
        prev = p.copy()
        for _ in range(400):
            prev = p.copy()
            p, state = adam_step(state, p, g, lr=0.01)
        assert abs(p[0] - prev[0]) == pytest.approx(0.01, rel=1e-3)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState.zeros(3), np.zeros(4), np.zeros(4), lr=0.1)


class TestPotential:
    def setup_method(self):
        rng = np.random.default_rng(21)
        self.theta_star = rng.normal(size=SMALL.n_params) * 0.3
        self.x = rng.normal(size=(11, 5))
        self.mu = forward(SMALL, self.theta_star, self.x)
        self.scales = LikelihoodScales(beta=np.array([0.01, 0.02, 0.05]))
        self.prior = PriorSpec(mean=self.theta_star, std=0.5)

    def test_minimum_value(self):
        u, g = potential_energy(SMALL, self.theta_star, self.x, self.mu,
                                self.scales, self.prior)
        expected = self.x.shape[0] * np.log(self.scales.beta).sum()
        assert u == pytest.approx(expected, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        theta = self.theta_star + rng.normal(size=SMALL.n_params) * 0.05
        _, grad = potential_energy(SMALL, theta, self.x, self.mu,
                                   self.scales, self.prior)
        idx = rng.choice(SMALL.n_params, size=40, replace=False)
        fd = fd_gradient(
            lambda th: potential_energy(SMALL, th, self.x, self.mu,
                                        self.scales, self.prior)[0],
            theta, idx)
        assert rel_err(grad[idx], fd).max() < 1e-5

    def test_doubling_d_quadruples_data_term(self):
        rng = np.random.default_rng(23)
        theta = self.theta_star + rng.normal(size=SMALL.n_params) * 0.1
        sigma_hat = np.array([0.2, 0.4, 1.0])
        prior = PriorSpec(mean=theta, std=0.5)  # kill the prior term
        n = self.x.shape[0]
        parts = {}
        for d in (20.0, 40.0):
            sc = LikelihoodScales.from_sigma_hat(sigma_hat, d=d)
            u, _ = potential_energy(SMALL, theta, self.x, self.mu, sc, prior)
            parts[d] = u - n * np.log(sc.beta).sum()
        assert parts[40.0] == pytest.approx(4.0 * parts[20.0], rel=1e-12)

    def test_prior_locality(self):
        u0, g0 = potential_energy(SMALL, self.theta_star, np.zeros((0, 5)),
                                  np.zeros((0, 3)), self.scales, self.prior)
        assert u0 == 0.0
        assert np.all(g0 == 0.0)
        u1, _ = potential_energy(SMALL, self.theta_star + 1e-3, np.zeros((0, 5)),
                                 np.zeros((0, 3)), self.scales, self.prior)
        assert u1 > 0.0

    def test_make_potential_closure(self):
        pot = make_potential(SMALL, self.x, self.mu, self.scales, self.prior)
        u, g = pot(self.theta_star)
        assert np.isfinite(u) and g.shape == (SMALL.n_params,)

    def test_scales_validation(self):
        with pytest.raises(ValueError):
            LikelihoodScales(beta=np.array([0.1, 0.0]))
        with pytest.raises(ValueError):
            LikelihoodScales.from_sigma_hat(np.ones(3), d=0.0)
        with pytest.raises(ValueError):
            PriorSpec(mean=np.zeros(3), std=0.0)


class TestPretrain:
    def make_data(self, n=120, seed=0, noise=0.0):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, size=(n, 5))
        a = rng.normal(size=(5, 3)) * 0.8
        z = np.tanh(x @ a) + rng.normal(size=(n, 3)) * noise
        return x, z

    def test_zero_epochs_returns_init(self):
        x, z = self.make_data()
        res = pretrain(SMALL, x, z, np.ones(3), epochs=0, seed=7)
        ref = init_params(SMALL, seed=[7, 0])
        assert np.array_equal(res.params.theta, ref.theta)
        assert np.array_equal(res.params.log_var, ref.log_var)
        assert res.train_loss == [] and res.val_loss == []

    def test_determinism(self):
        x, z = self.make_data(noise=0.02)
        a = pretrain(SMALL, x, z, np.ones(3), epochs=5, seed=3)
        b = pretrain(SMALL, x, z, np.ones(3), epochs=5, seed=3)
        assert np.array_equal(a.params.theta, b.params.theta)
        assert a.train_loss == b.train_loss

    def test_noise_free_overparameterized_fit(self):
        x, z = self.make_data(n=200, noise=0.0)
        arch = NetArchitecture(5, (32, 32), 3)
        res = pretrain(arch, x, z, np.array([3.0, 2.0, 1.0]), lr=0.003,
                       epochs=400, batch_size=16, seed=5)
        assert np.all(res.sigma_hat < 0.05)
        assert abs(res.val_loss[-1] - res.train_loss[-1]) <= 0.1 * abs(res.train_loss[-1])

    def test_loss_decreases(self):
        x, z = self.make_data(noise=0.05)
        res = pretrain(SMALL, x, z, np.ones(3), epochs=30, seed=1)
        assert res.train_loss[-1] < res.train_loss[0]

    def test_sigma_hat_definition(self):
        x, z = self.make_data(noise=0.1)
        res = pretrain(SMALL, x, z, np.ones(3), epochs=3, seed=2)
        assert np.allclose(res.sigma_hat, np.exp(0.5 * res.params.log_var))
