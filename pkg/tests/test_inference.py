import math

import numpy as np
import pytest
from scipy import integrate, stats

from bae_ood import inference as inf
from bae_ood import nn
from bae_ood.errors import ConfigError, FinderError, TrainingError


def _cfg(**kw):
    base = dict(likelihood="gaussian", reg_scale=0.001, epochs=5, batch_size=4, hidden=[16], latent_dim=4,
                lr_min=1e-3, lr_max=1e-2, seed=3)
    base.update(kw)
    return inf.TrainConfig(**base)


@pytest.fixture
def tiny():
    return np.random.default_rng(0).uniform(size=(4, 16))


@pytest.fixture
def replicated():
    # four distinct images, replicated so every epoch averages several minibatches
    return np.repeat(np.random.default_rng(0).uniform(size=(4, 16)), 50, axis=0)


def _flat_norm(params):
    return math.sqrt(sum(float(np.sum(p * p)) for p in params))


class TestTrainConfig:
    def test_defaults(self):
        cfg = inf.TrainConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.cycle_epochs) == (20, 100, 10)

    @pytest.mark.parametrize("kw", [dict(epochs=0), dict(batch_size=0), dict(reg_scale=-1.0), dict(likelihood="poisson")])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            inf.TrainConfig(**kw)

    def test_sweep_values(self):
        assert inf.REG_SWEEP == (10.0, 2.0, 1.0, 0.1, 0.01, 0.001)


class TestDeterministic:
    def test_huge_regularizer_shrinks_weights(self, tiny):
        cfg = _cfg(reg_scale=1e6, epochs=1000, lr_min=1e-2, lr_max=1e-2)
        sampler, _ = inf.train_deterministic(cfg, tiny)
        assert _flat_norm(sampler.model.parameters()) < 1e-2

    def test_memorizes_four_points(self, tiny):
        cfg = _cfg(reg_scale=1e-6, epochs=300, hidden=[256], latent_dim=8, lr_min=1e-3, lr_max=1e-3)
        sampler, history = inf.train_deterministic(cfg, tiny)
        out = nn.forward(sampler.model, tiny)
        assert 0.5 * np.mean((out - tiny) ** 2) < 1e-3
        assert history[-1] < 1e-3

    def test_bit_identical_checkpoints(self, tiny, tmp_path):
        for name in ("a", "b"):
            sampler, _ = inf.train_deterministic(_cfg(), tiny)
            nn.save_checkpoint(sampler.model, tmp_path / f"{name}.bae")
        assert (tmp_path / "a.bae").read_bytes() == (tmp_path / "b.bae").read_bytes()

    def test_divergence_reports_step(self, tiny):
        cfg = _cfg(likelihood="gaussian", reg_scale=0.0, lr_min=1e300, lr_max=1e300)
        with pytest.raises(TrainingError) as info:
            inf.train_deterministic(cfg, tiny)
        assert info.value.step >= 0
        assert "step" in str(info.value)

    def test_rejects_out_of_range_pixels(self):
        with pytest.raises(ConfigError):
            inf.train_deterministic(_cfg(), np.full((2, 4), 1.5))


class TestAnchoredEnsemble:
    def test_penalty_zero_at_anchor(self):
        enc, dec = nn.mlp_specs(6, [4], 2)
        model = nn.init_params(enc, dec, 0)
        anchors = inf.draw_anchors(model, 0)
        value, grads = inf.weight_penalty([a.copy() for a in anchors], 0.7, 10, anchors)
        assert value == 0.0
        assert all(np.all(g == 0) for g in grads)
        value, _ = inf.weight_penalty(model.parameters(), 0.7, 10, anchors)
        assert value > 0.0

    def test_anchors_frozen(self):
        enc, dec = nn.mlp_specs(6, [4], 2)
        anchors = inf.draw_anchors(nn.init_params(enc, dec, 0), 0)
        with pytest.raises(ValueError):
            anchors[0][0, 0] = 1.0

    def test_members_differ(self, tiny):
        sampler, _ = inf.train_anchored_ensemble(_cfg(), tiny, M=5, workers=1)
        assert len(sampler.models) == 5
        params = [np.concatenate([p.ravel() for p in m.parameters()]) for m in sampler.models]
        for i in range(5):
            for j in range(i + 1, 5):
                assert not np.array_equal(params[i], params[j])

    def test_zero_regularizer_matches_deterministic(self, tiny):
        cfg = _cfg(reg_scale=0.0, epochs=8)
        ens, ens_hist = inf.train_anchored_ensemble(cfg, tiny, M=2, workers=1, lr_range=(1e-3, 1e-2))
        det, det_hist = inf.train_deterministic(cfg, tiny, lr_range=(1e-3, 1e-2))
        assert ens_hist[0] == det_hist
        for a, b in zip(ens.models[0].parameters(), det.model.parameters()):
            assert a.tobytes() == b.tobytes()

    def test_threaded_equals_sequential(self, tiny):
        a, _ = inf.train_anchored_ensemble(_cfg(), tiny, M=3, workers=1)
        b, _ = inf.train_anchored_ensemble(_cfg(), tiny, M=3, workers=3)
        for ma, mb in zip(a.models, b.models):
            for pa, pb in zip(ma.parameters(), mb.parameters()):
                assert pa.tobytes() == pb.tobytes()

    def test_needs_two_members(self, tiny):
        with pytest.raises(ConfigError):
            inf.train_anchored_ensemble(_cfg(), tiny, M=1)


class TestMcDropout:
    def test_vanishing_rate_gives_identical_samples(self, tiny):
        sampler, _ = inf.train_mc_dropout(_cfg(), tiny, p_drop=1e-12)
        a, b = inf.sample_predictions(sampler, tiny, T=2)
        np.testing.assert_array_equal(a, b)

    def test_masks_reproducible(self):
        enc, dec = nn.mlp_specs(6, [4], 2)
        model = nn.init_params(enc, dec, 0)
        m1 = inf.dropout_masks(model, 3, 0.2, np.random.default_rng(5))
        m2 = inf.dropout_masks(model, 3, 0.2, np.random.default_rng(5))
        assert m1.keys() == m2.keys() and len(m1) == len(model.layers) - 1
        for k in m1:
            np.testing.assert_array_equal(m1[k], m2[k])

    def test_mask_rate(self):
        model = nn.init_params([nn.LayerSpec(2, 100_000)], [nn.LayerSpec(100_000, 2, nn.Activation.SIGMOID)], 0)
        mask = inf.dropout_masks(model, 1, 0.2, np.random.default_rng(0))[0]
        rate = float(np.mean(mask == 0))
        assert abs(rate - 0.2) < 0.01
        np.testing.assert_allclose(np.unique(mask), [0.0, 1.25])

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
    def test_rejects_bad_rate(self, tiny, p):
        with pytest.raises(ConfigError):
            inf.train_mc_dropout(_cfg(), tiny, p_drop=p)

    def test_sampler_reproducible(self, tiny):
        sampler, _ = inf.train_mc_dropout(_cfg(), tiny)
        a = inf.sample_predictions(sampler, tiny, T=4)
        b = inf.sample_predictions(sampler, tiny, T=4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
        assert not np.array_equal(a[0], a[1])


class TestBayesByBackprop:
    def test_kl_zero_for_identical(self):
        assert inf.gaussian_kl(np.zeros(5), np.full(5, 0.3), 0.3) == 0.0

    def test_kl_closed_form(self):
        assert inf.gaussian_kl([1.0], [1.0], 1.0) == pytest.approx(0.5, abs=1e-15)
        assert inf.gaussian_kl(np.ones(3), np.ones(3), 1.0) == pytest.approx(1.5, abs=1e-15)

    @pytest.mark.parametrize("mu,sigma,prior", [(0.3, 0.5, 1.0), (-1.2, 0.2, 0.7), (0.0, 2.0, 0.5)])
    def test_kl_matches_quadrature(self, mu, sigma, prior):
        q, p = stats.norm(mu, sigma), stats.norm(0.0, prior)
        oracle, _ = integrate.quad(lambda w: q.pdf(w) * (q.logpdf(w) - p.logpdf(w)),
                                   mu - 20 * sigma, mu + 20 * sigma, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert inf.gaussian_kl([mu], [sigma], prior) == pytest.approx(oracle, abs=1e-8)

    def test_zero_noise_gives_means(self, tiny):
        sampler, _ = inf.train_bayes_by_backprop(_cfg(), tiny)
        weights = sampler.weights([np.zeros_like(m) for m in sampler.mu])
        for w, m in zip(weights, sampler.mu):
            np.testing.assert_array_equal(w, m)
        assert all(np.all(s > 0) for s in sampler.sigma)

    def test_gradients_match_differences(self, rng):
        from conftest import finite_difference, max_relative_error

        enc, dec = nn.mlp_specs(5, [], 2)
        model = nn.init_params(enc, dec, 1)
        mu = model.parameters()
        rho = [rng.normal(-1.0, 0.3, m.shape) for m in mu]
        eps = [rng.standard_normal(m.shape) for m in mu]
        x = rng.uniform(size=(3, 5))
        priors = inf.prior_sigmas(model)
        f = lambda: inf.bbb_loss(model, mu, rho, x, "bernoulli", eps, 0.5, 7, priors)[0]
        _, g_mu, g_rho = inf.bbb_loss(model, mu, rho, x, "bernoulli", eps, 0.5, 7, priors)
        numeric = finite_difference(f, mu + rho)
        assert max_relative_error(g_mu + g_rho, numeric) < 1e-5


class TestVae:
    def test_latent_kl_zero_at_standard_normal(self):
        np.testing.assert_array_equal(nn.latent_kl(np.zeros((2, 3)), np.zeros((2, 3))), 0.0)

    def test_latent_kl_nonnegative(self, rng):
        kl = nn.latent_kl(rng.normal(size=(50, 4)), rng.normal(size=(50, 4)))
        assert np.all(kl >= 0)

    def test_decode_of_mean_reproducible(self, tiny):
        sampler, _ = inf.train_vae(_cfg(), tiny)
        z = nn.encode(sampler.model, tiny)
        assert z.shape == (4, 4)
        np.testing.assert_array_equal(nn.decode(sampler.model, z), nn.decode(sampler.model, z))

    def test_vae_gradients(self, rng):
        from conftest import finite_difference, max_relative_error

        enc, dec = nn.mlp_specs(6, [5], 2, variational=True)
        model = nn.init_params(enc, dec, 2, variational=True)
        x = rng.uniform(size=(3, 6))
        eps = rng.standard_normal((3, 2))
        f = lambda: inf.vae_loss(model, model.parameters(), x, "cb", eps, 0.3)[0]
        _, grads = inf.vae_loss(model, model.parameters(), x, "cb", eps, 0.3)
        assert max_relative_error(grads, finite_difference(f, model.parameters())) < 1e-5


class TestSamplePredictions:
    def test_deterministic_identical(self, tiny):
        sampler, _ = inf.train_deterministic(_cfg(), tiny)
        out = inf.sample_predictions(sampler, tiny, T=10)
        assert len(out) == 10
        assert all(np.array_equal(o, out[0]) for o in out)

    def test_ensemble_forced_to_members(self, tiny):
        sampler, _ = inf.train_anchored_ensemble(_cfg(), tiny, M=5, workers=1)
        assert len(inf.sample_predictions(sampler, tiny, T=100)) == 5

    def test_vae_count_and_range(self, tiny):
        sampler, _ = inf.train_vae(_cfg(), tiny)
        out = inf.sample_predictions(sampler, tiny, T=100)
        assert len(out) == 100
        assert all(np.all((o > 0) & (o < 1)) for o in out)

    def test_bbb_fresh_draws(self, tiny):
        sampler, _ = inf.train_bayes_by_backprop(_cfg(), tiny)
        out = inf.sample_predictions(sampler, tiny, T=3)
        assert not np.array_equal(out[0], out[1])

    def test_rejects_zero_samples(self, tiny):
        sampler, _ = inf.train_deterministic(_cfg(), tiny)
        with pytest.raises(ConfigError):
            inf.sample_predictions(sampler, tiny, T=0)


class TestCyclicLr:
    def test_cases(self):
        assert inf.cyclic_lr(0, 10, 1e-4, 1e-3) == 1e-4
        assert inf.cyclic_lr(10, 10, 1e-4, 1e-3) == 1e-4
        assert inf.cyclic_lr(5, 10, 1e-4, 1e-3) == pytest.approx(5.5e-4, rel=1e-15)

    def test_rises_then_resets(self):
        lrs = [inf.cyclic_lr(s, 4, 0.0, 1.0) for s in range(9)]
        assert lrs == [0.0, 0.25, 0.5, 0.75, 0.0, 0.25, 0.5, 0.75, 0.0]

    def test_rejects(self):
        with pytest.raises(ValueError):
            inf.cyclic_lr(0, 0, 0.1, 0.2)
        with pytest.raises(ValueError):
            inf.cyclic_lr(0, 5, 0.3, 0.2)


class TestLrFinder:
    CURVATURE = 4.0

    def _quadratic(self):
        def loss_grad(p, _xb, _rng):
            return 0.5 * self.CURVATURE * float(np.sum(p[0] ** 2)), [self.CURVATURE * p[0]]

        return loss_grad, [np.array([1.0, -2.0, 0.5])]

    def test_quadratic_stable_range(self):
        loss_grad, params = self._quadratic()
        lr_min, lr_max, lrs, _ = inf.find_lr(loss_grad, params, [None], optimizer="sgd")
        assert 0.0 < lr_max < 2.0 / self.CURVATURE
        assert lr_min == pytest.approx(lr_max / 10)
        np.testing.assert_array_equal(params[0], [1.0, -2.0, 0.5])

    def test_candidates_strictly_increasing(self):
        loss_grad, params = self._quadratic()
        _, _, lrs, _ = inf.find_lr(loss_grad, params, [None], optimizer="sgd")
        assert np.all(np.diff(lrs) > 0)
        assert lrs[0] == pytest.approx(1e-6)

    def test_no_descent_raises(self):
        with pytest.raises(FinderError):
            inf.find_lr(lambda p, xb, r: (1.0, [np.zeros(1)]), [np.zeros(1)], [None])

    def test_deterministic_on_data(self, tiny):
        cfg = _cfg(lr_min=None, lr_max=None)
        assert inf.lr_finder(cfg, tiny) == inf.lr_finder(cfg, tiny)


class TestTrainingCurves:
    @pytest.mark.parametrize("family", inf.FAMILIES)
    def test_moving_average_non_increasing(self, family, replicated):
        cfg = _cfg(epochs=30, batch_size=50, hidden=[64], latent_dim=8, lr_min=2e-3, lr_max=2e-3, seed=1)
        _, histories = inf.train_family(family, cfg, replicated, M=2, workers=1)
        for history in histories.values():
            smoothed = np.convolve(history, np.ones(5) / 5, mode="valid")
            assert np.all(np.diff(smoothed) <= 0)


class TestPersistence:
    @pytest.mark.parametrize("family", inf.FAMILIES)
    def test_roundtrip(self, family, tiny, tmp_path):
        cfg = _cfg()
        sampler, _ = inf.train_family(family, cfg, tiny, M=2, workers=1)
        inf.save_sampler(sampler, tmp_path, cfg)
        back, manifest = inf.load_sampler(tmp_path)
        assert manifest["family"] == family
        assert back.likelihood is sampler.likelihood
        a = inf.sample_predictions(sampler, tiny, T=3)
        b = inf.sample_predictions(back, tiny, T=3)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
