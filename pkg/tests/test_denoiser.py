import numpy as np
import pytest

from latentedit.denoiser import (
    TrainConfig,
    batch_loss_and_grads,
    init_denoiser,
    mlp_eps,
    time_embedding,
    train_denoiser,
)
from latentedit.mixture import analytic_eps
from latentedit.rng import NoiseStream, gaussian_draw
from latentedit.schedule import make_linear_schedule


class TestTimeEmbedding:
    def test_t_zero(self):
        e = time_embedding(0, 8, 100)
        assert np.allclose(e[:4], 0.0)
        assert np.allclose(e[4:], 1.0)

    def test_pure_function(self):
        a = time_embedding(17, 16, 1000)
        b = time_embedding(17, 16, 1000)
        assert np.array_equal(a, b)

    def test_adjacent_timesteps_distinguishable(self):
        for dim in (2, 4, 16, 64):
            for t in (0, 1, 50, 998):
                d = time_embedding(t, dim, 1000) - time_embedding(t + 1, dim, 1000)
                assert np.linalg.norm(d) > 0

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            time_embedding(0, 7, 100)

    def test_vectorized_matches_scalar(self):
        ts = np.array([0.0, 3.0, 99.0])
        batch = time_embedding(ts, 8, 100)
        for i, t in enumerate(ts):
            assert np.allclose(batch[i], time_embedding(t, 8, 100))


def small_model(seed=0):
    return init_denoiser(
        input_dim=3,
        n_conditions=2,
        T=50,
        hidden_dims=(5, 4),
        time_embed_dim=4,
        cond_embed_dim=2,
        seed=seed,
    )


class TestMlpEps:
    def test_zero_output_layer_gives_zero(self):
        m = small_model()
        m.weights["W2"][:] = 0.0
        m.weights["b2"][:] = 0.0
        out = mlp_eps(m, np.array([0.4, -1.0, 2.0]), 10, 1)
        assert np.array_equal(out, np.zeros(3))

    def test_purity(self):
        m = small_model()
        z = np.array([0.1, 0.2, 0.3])
        assert np.array_equal(mlp_eps(m, z, 5, 1), mlp_eps(m, z, 5, 1))

    def test_unknown_condition(self):
        m = small_model()
        with pytest.raises(ValueError):
            mlp_eps(m, np.zeros(3), 5, 7)

    def test_shape_mismatch(self):
        m = small_model()
        with pytest.raises(ValueError):
            mlp_eps(m, np.zeros(4), 5, 1)

    def test_batch_matches_rowwise(self):
        m = small_model()
        z = gaussian_draw(NoiseStream(1), (6, 3))
        batch = mlp_eps(m, z, 7, 2)
        rows = np.stack([mlp_eps(m, zi, 7, 2) for zi in z])
        assert np.allclose(batch, rows, atol=1e-12)

    def test_grid_shapes_roundtrip(self):
        m = init_denoiser(
            input_dim=8, n_conditions=1, T=10, hidden_dims=(6,),
            time_embed_dim=4, cond_embed_dim=2, seed=3,
        )
        grid = gaussian_draw(NoiseStream(2), (2, 2, 2))
        out = mlp_eps(m, grid, 4, 1)
        assert out.shape == grid.shape
        assert np.allclose(out.reshape(-1), mlp_eps(m, grid.reshape(-1), 4, 1))


class TestGradients:
    def test_analytic_gradients_match_central_differences(self):
        m = small_model(seed=4)
        rng = NoiseStream(10)
        B = 6
        zt = gaussian_draw(rng, (B, 3))
        eps = gaussian_draw(rng, (B, 3))
        t = np.array([1.0, 5.0, 10.0, 20.0, 35.0, 50.0])
        conds = np.array([0, 1, 2, 1, 2, 0])

        _, grads = batch_loss_and_grads(m, zt, t, eps, conds)

        h = 1e-5
        for key in sorted(m.weights):
            w = m.weights[key]
            flat = w.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp, _ = batch_loss_and_grads(m, zt, t, eps, conds)
                flat[i] = orig - h
                lm, _ = batch_loss_and_grads(m, zt, t, eps, conds)
                flat[i] = orig
                numeric = (lp - lm) / (2 * h)
                analytic = grads[key].reshape(-1)[i]
                denom = max(abs(numeric), abs(analytic), 1e-6)
                assert abs(numeric - analytic) / denom < 1e-4, (
                    f"{key}[{i}]: analytic {analytic}, numeric {numeric}"
                )


class TestTraining:
    def make_data(self, n=512, seed=0):
        z0 = gaussian_draw(NoiseStream(seed), (n, 1))
        conds = np.ones(n, dtype=np.int64)
        return z0, conds

    def test_zero_learning_rate_keeps_parameters(self):
        s = make_linear_schedule(100)
        data = self.make_data()
        cfg = TrainConfig(epochs=1, batch_size=64, learning_rate=0.0, seed=5)
        m0 = init_denoiser(1, 1, s.T, hidden_dims=(8,), time_embed_dim=4,
                           cond_embed_dim=2, seed=5)
        m1, _ = train_denoiser(data, s, cfg, model=m0)
        for k in m0.weights:
            assert np.array_equal(m0.weights[k], m1.weights[k])

    def test_loss_decreases(self):
        s = make_linear_schedule(100)
        data = self.make_data(1024)
        cfg = TrainConfig(epochs=8, batch_size=128, learning_rate=1e-3, seed=6)
        m = init_denoiser(1, 1, s.T, hidden_dims=(32, 32), time_embed_dim=8,
                          cond_embed_dim=2, seed=6)
        _, losses = train_denoiser(data, s, cfg, model=m)
        assert losses[-1] < losses[0]

    def test_fixed_seed_reproducible(self):
        s = make_linear_schedule(100)
        data = self.make_data()
        cfg = TrainConfig(epochs=2, batch_size=128, learning_rate=1e-3, seed=7)
        m1, l1 = train_denoiser(data, s, cfg)
        m2, l2 = train_denoiser(data, s, cfg)
        assert l1 == l2
        for k in m1.weights:
            assert np.array_equal(m1.weights[k], m2.weights[k])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_diagnostic(self):
        s = make_linear_schedule(100)
        data = self.make_data()
        # step size large enough that the second forward pass overflows
        cfg = TrainConfig(epochs=1, batch_size=128, learning_rate=1e160, seed=8)
        with pytest.raises(RuntimeError, match="non-finite"):
            train_denoiser(data, s, cfg)

    def test_empty_dataset_rejected(self):
        s = make_linear_schedule(100)
        cfg = TrainConfig(epochs=1, batch_size=1)
        with pytest.raises(ValueError):
            train_denoiser((np.zeros((0, 2)), np.zeros(0, dtype=int)), s, cfg)

    def test_batch_larger_than_dataset_rejected(self):
        s = make_linear_schedule(100)
        cfg = TrainConfig(epochs=1, batch_size=64)
        with pytest.raises(ValueError):
            train_denoiser((np.zeros((10, 2)), np.zeros(10, dtype=int)), s, cfg)


class TestOracleAgreement:
    @pytest.fixture(scope="class")
    def trained_1d(self, default_schedule):
        z0 = gaussian_draw(NoiseStream(100), (4096, 1))
        conds = np.ones(4096, dtype=np.int64)
        m = init_denoiser(1, 1, default_schedule.T, hidden_dims=(64, 64),
                          time_embed_dim=16, cond_embed_dim=4, seed=9)
        stages = []
        for epochs, lr in ((10, 3e-3), (30, 1e-3), (30, 3e-4)):
            cfg = TrainConfig(epochs=epochs, batch_size=128, learning_rate=lr, seed=9)
            m, _ = train_denoiser((z0, conds), default_schedule, cfg, model=m)
            stages.append(m)
        return stages[0], stages[-1]

    def _probe_mae(self, model, s, fam):
        zs = np.linspace(-2.0, 2.0, 41)
        ts = np.arange(100, 901, 100)
        errs = []
        for t in ts:
            a = s.alpha_bars[t]
            truth = analytic_eps(fam, 1, zs[:, None], a)
            pred = mlp_eps(model, zs[:, None], t, 1)
            errs.append(np.abs(pred - truth).mean())
        return float(np.mean(errs))

    def test_bulk_agreement_and_improvement(self, default_schedule, trained_1d):
        from latentedit.mixture import ConditionedMixtureFamily, GaussianMixture

        fam = ConditionedMixtureFamily(
            base=GaussianMixture(
                weights=np.array([1.0]), means=np.zeros((1, 1)), variances=np.ones((1, 1))
            ),
            weights_by_condition={1: np.array([1.0])},
        )
        early, late = trained_1d
        mae_early = self._probe_mae(early, default_schedule, fam)
        mae_late = self._probe_mae(late, default_schedule, fam)
        assert mae_late < mae_early
        assert mae_late < 0.05
