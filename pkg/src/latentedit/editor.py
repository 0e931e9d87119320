"""The editing pipeline: encode, invert deterministically to an intermediate
noise level, regenerate under the target condition, decode.

The forward and reverse passes share the latent code at t_stop, which is
what keeps edits consistent with the source content.  A masked variant runs
one reverse trajectory per region (own condition, own noise level, own
stream) plus a source-conditioned trajectory for unowned cells, and blends
cell-wise after every step.  Batch execution assigns one derived noise
stream per job index, so results never depend on worker count.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .conditions import UNCONDITIONAL
from .latent import decode, encode  # noqa: F401 (dispatch helpers use both)
from .rng import NoiseStream
from .sampler import Trajectory, run_generation, run_inversion
from .schedule import make_subsequence


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs of one edit: stochasticity, stop timestep, step counts, seed."""

    eta: float = 0.0
    t_stop: int = 600
    n_for: int = 50
    n_rev: int = 50
    seed: int = 0
    forward_eta: float = 0.0
    unconditional_inversion: bool = False

    def __post_init__(self):
        if self.eta < 0 or self.forward_eta < 0:
            raise ValueError("eta values must be >= 0")
        if not (1 <= self.n_for <= self.t_stop and 1 <= self.n_rev <= self.t_stop):
            raise ValueError(
                f"need 1 <= n_for, n_rev <= t_stop, got "
                f"({self.n_for}, {self.n_rev}, {self.t_stop})"
            )


@dataclass(frozen=True)
class EditRequest:
    source: np.ndarray
    cond_src: object
    cond_tar: object
    config: SamplerConfig
    mask: object = None  # MaskSpec


@dataclass
class EditResult:
    output: np.ndarray
    forward_traj: Trajectory
    reverse_traj: Trajectory
    z_tstop: np.ndarray
    metrics: dict
    request: EditRequest
    # populated by masked edits only
    recon_traj: Trajectory = None
    region_trajs: tuple = ()


@dataclass(frozen=True)
class EditError:
    """Per-index failure record from batch execution."""

    index: int
    message: str


def _subsequences(s, cfg):
    tau_f = make_subsequence(s, cfg.n_for, cfg.t_stop)
    tau_r = tau_f if cfg.n_rev == cfg.n_for else make_subsequence(s, cfg.n_rev, cfg.t_stop)
    return tau_f, tau_r


def _encode(space, x):
    return space.encode(x) if hasattr(space, "encode") else encode(space, x)


def _decode(space, z):
    return space.decode(z) if hasattr(space, "decode") else decode(space, z)


def _metrics(source, output, started, draws):
    diff = np.asarray(output, dtype=np.float64) - np.asarray(source, dtype=np.float64)
    return {
        "displacement": float(np.sqrt(np.mean(diff * diff))),
        "wall_time_s": time.perf_counter() - started,
        "draws": float(draws),
    }


def ldedit(req, ae, denoiser, s, stream_id=0):
    """One unmasked edit.  ae=None runs directly on vector states (mixture
    experiments); otherwise the source is encoded and the output decoded.
    At eta=0 (and forward_eta=0) the pipeline is fully deterministic."""
    if req.mask is not None:
        raise ValueError("request has a mask; use ldedit_masked")
    cfg = req.config
    started = time.perf_counter()
    tau_f, tau_r = _subsequences(s, cfg)
    z0 = _encode(ae, req.source) if ae is not None else np.asarray(req.source, dtype=np.float64)
    base = NoiseStream(cfg.seed, stream_id)
    fwd_rng = base.child(0)
    rev_rng = base.child(1)
    cond_inv = UNCONDITIONAL if cfg.unconditional_inversion else req.cond_src
    z_stop, ftraj = run_inversion(
        z0, tau_f, s, denoiser, cond_inv, forward_eta=cfg.forward_eta, rng=fwd_rng
    )
    z_hat, rtraj = run_generation(
        z_stop, tau_r, s, denoiser, req.cond_tar, eta=cfg.eta, rng=rev_rng
    )
    output = _decode(ae, z_hat) if ae is not None else z_hat
    metrics = _metrics(req.source, output, started, fwd_rng.draws + rev_rng.draws)
    recon = _decode(ae, z0) if ae is not None else np.asarray(req.source, dtype=np.float64)
    metrics["cycle_error"] = float(np.mean((output - recon) ** 2))
    return EditResult(
        output=output,
        forward_traj=ftraj,
        reverse_traj=rtraj,
        z_tstop=z_stop,
        metrics=metrics,
        request=req,
    )


def _blend(recon_state, region_states, regions):
    out = recon_state.copy()
    for state, region in zip(region_states, regions):
        m = region.latent_mask.astype(bool)
        out[m] = state[m]
    return out


def ldedit_masked(req, ae, denoiser, s, stream_id=0):
    """Masked multi-region edit sharing a single inverted latent code.

    Every region follows its own reverse trajectory from z_tstop (its own
    condition, eta, and derived noise stream); unowned cells follow a
    source-conditioned reconstruction trajectory.  The blended latent is
    recorded after every step and the final blend is decoded.
    """
    if req.mask is None:
        raise ValueError("masked edit requires a MaskSpec")
    if ae is None:
        raise ValueError("masked editing operates on images")
    cfg = req.config
    started = time.perf_counter()
    tau_f, tau_r = _subsequences(s, cfg)
    z0 = _encode(ae, req.source)
    for region in req.mask.regions:
        if region.latent_mask.shape != z0.shape[:2]:
            raise ValueError(
                f"region mask {region.latent_mask.shape} does not match "
                f"latent grid {z0.shape[:2]}"
            )
    base = NoiseStream(cfg.seed, stream_id)
    fwd_rng = base.child(0)
    cond_inv = UNCONDITIONAL if cfg.unconditional_inversion else req.cond_src
    z_stop, ftraj = run_inversion(
        z0, tau_f, s, denoiser, cond_inv, forward_eta=cfg.forward_eta, rng=fwd_rng
    )
    recon_rng = base.child(1)
    _, recon_traj = run_generation(
        z_stop, tau_r, s, denoiser, req.cond_src, eta=cfg.eta, rng=recon_rng
    )
    region_trajs = []
    region_rngs = []
    for r, region in enumerate(req.mask.regions):
        rng = base.child(2 + r)
        region_rngs.append(rng)
        _, traj = run_generation(
            z_stop, tau_r, s, denoiser, region.cond, eta=region.eta, rng=rng
        )
        region_trajs.append(traj)
    blended = []
    for i, (t, recon_state) in enumerate(recon_traj.entries):
        states = [traj.entries[i][1] for traj in region_trajs]
        blended.append((t, _blend(recon_state, states, req.mask.regions)))
    z_hat = blended[-1][1]
    output = _decode(ae, z_hat)
    draws = fwd_rng.draws + recon_rng.draws + sum(r.draws for r in region_rngs)
    metrics = _metrics(req.source, output, started, draws)
    recon_img = _decode(ae, z0)
    metrics["cycle_error"] = float(np.mean((output - recon_img) ** 2))
    return EditResult(
        output=output,
        forward_traj=ftraj,
        reverse_traj=Trajectory(entries=tuple(blended), direction="reverse"),
        z_tstop=z_stop,
        metrics=metrics,
        request=req,
        recon_traj=recon_traj,
        region_trajs=tuple(region_trajs),
    )


def _run_one(i, req, ae, denoiser, s):
    try:
        if req.mask is not None:
            return ldedit_masked(req, ae, denoiser, s, stream_id=i)
        return ldedit(req, ae, denoiser, s, stream_id=i)
    except Exception as exc:  # reported per-index, other jobs continue
        return EditError(index=i, message=f"{type(exc).__name__}: {exc}")


def batch_edit(reqs, ae, denoiser, s, workers=1):
    """Run independent edit jobs; job i always uses noise stream id i, so
    outputs are identical for any worker count and match sequential order."""
    if len(reqs) == 0:
        raise ValueError("empty request list")
    if workers <= 1:
        return [_run_one(i, r, ae, denoiser, s) for i, r in enumerate(reqs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, i, r, ae, denoiser, s) for i, r in enumerate(reqs)]
        return [f.result() for f in futures]


def repeat_request(req, n):
    """n copies of a request for multi-seed sampling via batch_edit (job
    index, hence noise stream, is what distinguishes the repeats)."""
    return [req] * n


def with_config(req, **changes):
    """Request with selected SamplerConfig fields replaced."""
    return replace(req, config=replace(req.config, **changes))
