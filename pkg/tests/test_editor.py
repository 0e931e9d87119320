import numpy as np
import pytest

from latentedit.corpus import generate_shapes
from latentedit.editor import (
    EditError,
    EditRequest,
    SamplerConfig,
    batch_edit,
    ldedit,
    ldedit_masked,
    with_config,
)
from latentedit.latent import (
    LatentSpace,
    channel_scales,
    fit_autoencoder,
    make_mask_spec,
)
from latentedit.mixture import (
    AnalyticMixtureDenoiser,
    family_from_labeled_latents,
    nearest_component,
    sample_mixture,
)
from latentedit.rng import NoiseStream


@pytest.fixture(scope="module")
def mixture_setup(default_schedule, two_component_family):
    den = AnalyticMixtureDenoiser(two_component_family, default_schedule)
    src = sample_mixture(two_component_family, 1, 200, NoiseStream(50))
    return den, src


@pytest.fixture(scope="module")
def image_setup(default_schedule):
    corpus = generate_shapes(500, seed=7)
    imgs = [li.image for li in corpus]
    ae = fit_autoencoder(imgs, 4, 8)
    space = LatentSpace(ae=ae, scales=channel_scales(ae, imgs))
    latents = np.stack([space.encode(im).ravel() for im in imgs])
    cids = np.array([li.cond.id for li in corpus])
    fam = family_from_labeled_latents(latents, cids)
    den = AnalyticMixtureDenoiser(fam, default_schedule)
    return space, den, corpus


class TestLdedit:
    def test_single_step_identity_at_component_mean(self, default_schedule, two_component_family):
        den = AnalyticMixtureDenoiser(two_component_family, default_schedule)
        src = two_component_family.base.means[0].copy()
        cfg = SamplerConfig(eta=0.0, t_stop=1, n_for=1, n_rev=1, seed=0)
        req = EditRequest(source=src, cond_src=1, cond_tar=1, config=cfg)
        res = ldedit(req, None, den, default_schedule)
        assert np.max(np.abs(res.output - src)) < 1e-6

    def test_cycle_consistency_at_100_steps(self, default_schedule, mixture_setup):
        den, src = mixture_setup
        cfg = SamplerConfig(eta=0.0, t_stop=600, n_for=100, n_rev=100, seed=0)
        req = EditRequest(source=src, cond_src=1, cond_tar=1, config=cfg)
        res = ldedit(req, None, den, default_schedule)
        rel = np.linalg.norm(res.output - src) / np.linalg.norm(src)
        assert rel < 1e-2

    def test_condition_flip_rate(self, default_schedule, two_component_family, mixture_setup):
        den, src = mixture_setup
        cfg = SamplerConfig(eta=0.0, t_stop=600, n_for=50, n_rev=50, seed=0)
        req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg)
        res = ldedit(req, None, den, default_schedule)
        flips = np.mean(nearest_component(two_component_family, res.output) == 1)
        assert flips >= 0.95

    def test_displacement_monotone_in_t_stop(self, default_schedule, two_component_family, mixture_setup):
        den, src = mixture_setup
        disps = []
        for t_stop in (300, 450, 600):
            cfg = SamplerConfig(eta=0.0, t_stop=t_stop, n_for=50, n_rev=50, seed=0)
            req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg)
            res = ldedit(req, None, den, default_schedule)
            disps.append(res.metrics["displacement"])
        assert disps[0] <= disps[1] <= disps[2]

    def test_eta_zero_is_deterministic_and_drawless(self, default_schedule, mixture_setup):
        den, src = mixture_setup
        cfg = SamplerConfig(eta=0.0, t_stop=400, n_for=25, n_rev=25, seed=3)
        req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg)
        a = ldedit(req, None, den, default_schedule)
        b = ldedit(req, None, den, default_schedule)
        assert np.array_equal(a.output, b.output)
        assert a.metrics["draws"] == 0.0

    def test_eta_positive_seeded_repeatable(self, default_schedule, mixture_setup):
        den, src = mixture_setup
        cfg = SamplerConfig(eta=0.6, t_stop=400, n_for=25, n_rev=25, seed=3)
        req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg)
        a = ldedit(req, None, den, default_schedule)
        b = ldedit(req, None, den, default_schedule)
        assert np.array_equal(a.output, b.output)
        assert a.metrics["draws"] > 0

    def test_masked_request_rejected(self, default_schedule, mixture_setup, image_setup):
        den, src = mixture_setup
        cfg = SamplerConfig(eta=0.0, t_stop=400, n_for=25, n_rev=25)
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[:, 16:] = 1
        spec = make_mask_spec([mask], [2], [0.0], 4)
        req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg, mask=spec)
        with pytest.raises(ValueError):
            ldedit(req, None, den, default_schedule)


class TestLdeditMasked:
    def _image_request(self, image_setup, **cfg_kwargs):
        space, den, corpus = image_setup
        li = next(x for x in corpus if x.spec.shape == "square" and x.spec.intensity == 0.9)
        cfg = SamplerConfig(**{"eta": 0.0, "t_stop": 600, "n_for": 25, "n_rev": 25, "seed": 0, **cfg_kwargs})
        return space, den, li, cfg

    def test_unmasked_cells_follow_source_trajectory_exactly(self, default_schedule, image_setup):
        space, den, li, cfg = self._image_request(image_setup)
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[:, 16:] = 1
        spec = make_mask_spec([mask], [2], [0.0], 4)
        req = EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=2, config=cfg, mask=spec)
        res = ldedit_masked(req, space, den, default_schedule)
        unmasked = ~spec.regions[0].latent_mask.astype(bool)
        for (tb, zb), (tr, zr) in zip(res.reverse_traj.entries, res.recon_traj.entries):
            assert tb == tr
            assert np.max(np.abs(zb[unmasked] - zr[unmasked])) < 1e-6

    def test_unmasked_pixels_match_reconstruction(self, default_schedule, image_setup):
        space, den, li, cfg = self._image_request(image_setup, n_for=50, n_rev=50)
        mask = np.zeros((32, 32), dtype=np.uint8)
        mask[:, 16:] = 1
        spec = make_mask_spec([mask], [2], [0.0], 4)
        req = EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=2, config=cfg, mask=spec)
        res = ldedit_masked(req, space, den, default_schedule)
        recon = space.decode(space.encode(li.image))
        pixel_unmasked = np.repeat(
            np.repeat(~spec.regions[0].latent_mask.astype(bool), 4, 0), 4, 1
        )
        mse = np.mean((res.output[pixel_unmasked] - recon[pixel_unmasked]) ** 2)
        assert mse <= 1e-3

    def test_no_masked_cells_equals_identity_edit(self, default_schedule, image_setup):
        space, den, li, cfg = self._image_request(image_setup)
        empty = np.zeros((32, 32), dtype=np.uint8)
        empty[0, 0] = 1  # single pixel: below majority everywhere
        spec = make_mask_spec([empty], [2], [0.0], 4)
        assert spec.regions[0].latent_mask.sum() == 0
        req = EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=2, config=cfg, mask=spec)
        res = ldedit_masked(req, space, den, default_schedule)
        plain = ldedit(
            EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=li.cond.id, config=cfg),
            space, den, default_schedule,
        )
        assert np.max(np.abs(res.output - plain.output)) < 1e-12

    def test_full_mask_equals_unmasked_edit(self, default_schedule, image_setup):
        space, den, li, cfg = self._image_request(image_setup)
        full = np.ones((32, 32), dtype=np.uint8)
        spec = make_mask_spec([full], [2], [0.0], 4)
        req = EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=2, config=cfg, mask=spec)
        res = ldedit_masked(req, space, den, default_schedule)
        plain = ldedit(
            EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=2, config=cfg),
            space, den, default_schedule,
        )
        assert np.max(np.abs(res.output - plain.output)) < 1e-12

    def test_mask_required(self, default_schedule, image_setup):
        space, den, li, cfg = self._image_request(image_setup)
        req = EditRequest(source=li.image, cond_src=li.cond.id, cond_tar=2, config=cfg)
        with pytest.raises(ValueError):
            ldedit_masked(req, space, den, default_schedule)


class TestBatchEdit:
    def test_worker_count_invariance(self, default_schedule, two_component_family):
        den = AnalyticMixtureDenoiser(two_component_family, default_schedule)
        src = sample_mixture(two_component_family, 1, 8, NoiseStream(60))
        cfg = SamplerConfig(eta=0.6, t_stop=400, n_for=25, n_rev=25, seed=4)
        reqs = [
            EditRequest(source=src[i], cond_src=1, cond_tar=2, config=cfg)
            for i in range(8)
        ]
        seq = batch_edit(reqs, None, den, default_schedule, workers=1)
        par = batch_edit(reqs, None, den, default_schedule, workers=8)
        for a, b in zip(seq, par):
            assert np.array_equal(a.output, b.output)

    def test_distinct_stream_per_job(self, default_schedule, two_component_family):
        den = AnalyticMixtureDenoiser(two_component_family, default_schedule)
        src = two_component_family.base.means[0]
        cfg = SamplerConfig(eta=0.8, t_stop=400, n_for=25, n_rev=25, seed=4)
        req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg)
        results = batch_edit([req] * 3, None, den, default_schedule)
        assert not np.array_equal(results[0].output, results[1].output)
        assert not np.array_equal(results[1].output, results[2].output)

    def test_errors_reported_per_index(self, default_schedule, two_component_family):
        den = AnalyticMixtureDenoiser(two_component_family, default_schedule)
        good = EditRequest(
            source=two_component_family.base.means[0],
            cond_src=1,
            cond_tar=2,
            config=SamplerConfig(eta=0.0, t_stop=400, n_for=25, n_rev=25),
        )
        bad = EditRequest(
            source=np.zeros(5),  # wrong dimension for the family
            cond_src=1,
            cond_tar=2,
            config=SamplerConfig(eta=0.0, t_stop=400, n_for=25, n_rev=25),
        )
        results = batch_edit([good, bad, good], None, den, default_schedule)
        assert not isinstance(results[0], EditError)
        assert isinstance(results[1], EditError)
        assert results[1].index == 1
        assert not isinstance(results[2], EditError)

    def test_empty_list_rejected(self, default_schedule, two_component_family):
        den = AnalyticMixtureDenoiser(two_component_family, default_schedule)
        with pytest.raises(ValueError):
            batch_edit([], None, den, default_schedule)


class TestEtaEffects:
    def test_diversity_zero_at_eta_zero_and_growing(self, default_schedule):
        from latentedit.evaluation import diversity
        from latentedit.mixture import ConditionedMixtureFamily, GaussianMixture

        # unit-variance components: diversity has headroom up to eta=1
        # (tight components saturate it early and the top of the curve
        # turns into estimation noise with 16 seeds)
        base = GaussianMixture(
            weights=np.array([0.5, 0.5]),
            means=np.array([[-3.0, 0.0], [3.0, 0.5]]),
            variances=np.ones((2, 2)),
        )
        fam = ConditionedMixtureFamily(
            base=base,
            weights_by_condition={1: np.array([1.0, 0.0]), 2: np.array([0.0, 1.0])},
        )
        den = AnalyticMixtureDenoiser(fam, default_schedule)
        src = fam.base.means[0] + 0.3
        divs = []
        disps = []
        for eta in (0.0, 0.3, 0.6, 1.0):
            cfg = SamplerConfig(eta=eta, t_stop=450, n_for=50, n_rev=50, seed=9)
            req = EditRequest(source=src, cond_src=1, cond_tar=2, config=cfg)
            results = batch_edit([req] * 16, None, den, default_schedule)
            outs = [r.output for r in results]
            divs.append(diversity(outs))
            disps.append(np.mean([r.metrics["displacement"] for r in results]))
        assert divs[0] == 0.0
        assert all(a <= b + 1e-12 for a, b in zip(divs, divs[1:]))
        assert all(a <= b + 1e-9 for a, b in zip(disps, disps[1:]))

    def test_with_config_helper(self, two_component_family):
        cfg = SamplerConfig(eta=0.0, t_stop=600, n_for=50, n_rev=50)
        req = EditRequest(
            source=two_component_family.base.means[0], cond_src=1, cond_tar=2, config=cfg
        )
        req2 = with_config(req, eta=0.5)
        assert req2.config.eta == 0.5
        assert req2.config.t_stop == 600
        assert req.config.eta == 0.0
