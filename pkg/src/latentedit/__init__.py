"""Latent-space diffusion editing engine.

Deterministic inversion of a source sample to an intermediate noise level,
then condition-switched reverse diffusion from the shared latent code, in
the latent grid of a patch-linear autoencoder.  Includes an exact
Gaussian-mixture denoiser for verification, a small trainable conditional
denoiser, masked multi-region editing, and quantitative sweep metrics.
"""

from .schedule import (
    NoiseSchedule,
    StepSequence,
    alpha_bar,
    make_linear_schedule,
    make_subsequence,
    sigma_from_eta,
)
from .rng import NoiseStream, gaussian_draw
from .sampler import (
    Trajectory,
    ddim_forward_step,
    ddim_reverse_step,
    ddpm_reverse_step,
    ddpm_sigma,
    diffuse_marginal,
    generalized_step,
    run_generation,
    run_inversion,
)
from .conditions import (
    UNCONDITIONAL,
    ConditionId,
    condition_by_id,
    condition_by_label,
    condition_vocabulary,
    shape_condition,
)
from .mixture import (
    AnalyticMixtureDenoiser,
    ConditionedMixtureFamily,
    GaussianMixture,
    analytic_eps,
    family_from_labeled_latents,
    family_from_text,
    family_to_text,
    nearest_component,
    sample_mixture,
)
from .denoiser import (
    MlpDenoiser,
    TrainConfig,
    init_denoiser,
    mlp_eps,
    time_embedding,
    train_denoiser,
)
from .latent import (
    LatentSpace,
    MaskRegion,
    MaskSpec,
    PatchAutoencoder,
    channel_scales,
    decode,
    downsample_mask,
    encode,
    fit_autoencoder,
    make_mask_spec,
    reconstruction_error,
)
from .corpus import (
    LabeledImage,
    ShapeSpec,
    generate_shapes,
    montage,
    read_pgm,
    write_pgm,
)
from .editor import (
    EditError,
    EditRequest,
    EditResult,
    SamplerConfig,
    batch_edit,
    ldedit,
    ldedit_masked,
)
from .evaluation import (
    SweepReport,
    cycle_consistency,
    diversity,
    edit_success_rate,
    run_sweep,
    template_classify,
)
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
