"""Forward/reverse diffusion step rules and multi-step trajectory runners.

All step rules are pure functions of arrays and schedule coefficients and
broadcast over any leading batch axes.  The ancestral (ddpm) step, the
generalized eta-step, and the two deterministic steps are written out
independently so their algebraic identities can be checked against each
other in tests rather than holding by construction.
"""

from dataclasses import dataclass

import numpy as np

from .rng import gaussian_draw
from .schedule import sigma_from_eta


@dataclass(frozen=True)
class Trajectory:
    """Ordered (timestep, state) snapshots of one diffusion run."""

    entries: tuple
    direction: str  # "forward" | "reverse"

    def timesteps(self):
        return [t for t, _ in self.entries]

    def states(self):
        return [z for _, z in self.entries]


def _check_shapes(z, *others):
    for o in others:
        if o is not None and np.shape(o) != np.shape(z):
            raise ValueError(f"shape mismatch: {np.shape(o)} vs {np.shape(z)}")


def diffuse_marginal(z0, t, s, noise):
    """Closed-form noising: sqrt(abar_t) z0 + sqrt(1 - abar_t) noise."""
    _check_shapes(z0, noise)
    if not 0 <= t <= s.T:
        raise ValueError(f"timestep {t} outside [0, {s.T}]")
    a = s.alpha_bars[t]
    return np.sqrt(a) * z0 + np.sqrt(1.0 - a) * noise


def ddpm_reverse_step(z_t, t, s, eps_hat, sigma_t, xi=None):
    """One ancestral reverse step t -> t-1 with explicit noise scale sigma_t."""
    _check_shapes(z_t, eps_hat, xi)
    if t < 1:
        raise ValueError("ddpm reverse step needs t >= 1")
    beta = s.betas[t - 1]
    a = s.alpha_bars[t]
    mean = (z_t - (beta / np.sqrt(1.0 - a)) * eps_hat) / np.sqrt(1.0 - beta)
    if sigma_t == 0.0:
        return mean
    if xi is None:
        raise ValueError("sigma_t > 0 requires a noise tensor xi")
    return mean + sigma_t * xi


def ddpm_sigma(s, t, variant="posterior"):
    """Noise scale for the ancestral step: posterior variance or plain beta_t."""
    beta = s.betas[t - 1]
    if variant == "posterior":
        return float(np.sqrt(beta * (1.0 - s.alpha_bars[t - 1]) / (1.0 - s.alpha_bars[t])))
    if variant == "beta":
        return float(np.sqrt(beta))
    raise ValueError(f"unknown variant {variant!r}")


def generalized_step(z_from, t_from, t_to, s, eps_hat, sigma, xi=None):
    """Non-Markovian reverse step t_from -> t_to with free noise scale sigma.

    sigma = 0 is the deterministic sampler; the eta=1 scale reproduces the
    ancestral process step-for-step.
    """
    _check_shapes(z_from, eps_hat, xi)
    if not 0 <= t_to < t_from <= s.T:
        raise ValueError(f"need 0 <= t_to < t_from <= T, got {t_to}, {t_from}")
    a_from = s.alpha_bars[t_from]
    a_to = s.alpha_bars[t_to]
    resid = 1.0 - a_to - sigma * sigma
    if resid < -1e-12:
        raise ValueError(f"sigma={sigma} violates variance decomposition at t_to={t_to}")
    x0 = (z_from - np.sqrt(1.0 - a_from) * eps_hat) / np.sqrt(a_from)
    out = np.sqrt(a_to) * x0 + np.sqrt(max(resid, 0.0)) * eps_hat
    if sigma == 0.0:
        return out
    if xi is None:
        raise ValueError("sigma > 0 requires a noise tensor xi")
    return out + sigma * xi


def ddim_forward_step(z_t, t, t_next, s, eps_hat):
    """Deterministic noising step t -> t_next (t_next > t)."""
    _check_shapes(z_t, eps_hat)
    if not 0 <= t < t_next <= s.T:
        raise ValueError(f"need 0 <= t < t_next <= T, got {t}, {t_next}")
    a_t = s.alpha_bars[t]
    a_next = s.alpha_bars[t_next]
    x0 = (z_t - np.sqrt(1.0 - a_t) * eps_hat) / np.sqrt(a_t)
    return np.sqrt(a_next) * x0 + np.sqrt(1.0 - a_next) * eps_hat


def ddim_reverse_step(z_t, t, t_prev, s, eps_hat):
    """Deterministic denoising step t -> t_prev (t_prev < t)."""
    _check_shapes(z_t, eps_hat)
    if not 0 <= t_prev < t <= s.T:
        raise ValueError(f"need 0 <= t_prev < t <= T, got {t_prev}, {t}")
    a_t = s.alpha_bars[t]
    a_prev = s.alpha_bars[t_prev]
    x0 = (z_t - np.sqrt(1.0 - a_t) * eps_hat) / np.sqrt(a_t)
    return np.sqrt(a_prev) * x0 + np.sqrt(1.0 - a_prev) * eps_hat


def run_inversion(z0, tau, s, denoiser, cond, forward_eta=0.0, rng=None, record=True):
    """Deterministic inversion 0 -> tau_1 -> ... -> t_stop under one condition.

    The noise prediction for each step is evaluated at the step's source
    timestep.  forward_eta > 0 optionally injects eta-scaled noise into each
    forward step (off by default; useful when the input lacks detail).
    Returns (z_tstop, Trajectory).
    """
    if len(tau) == 0:
        raise ValueError("empty step sequence")
    if forward_eta < 0:
        raise ValueError(f"forward_eta must be >= 0, got {forward_eta}")
    z = np.asarray(z0, dtype=np.float64)
    ts = [0] + [int(t) for t in tau.taus]
    entries = [(0, z)]
    for t_cur, t_next in zip(ts[:-1], ts[1:]):
        eps_hat = denoiser.eps(z, t_cur, cond)
        z = ddim_forward_step(z, t_cur, t_next, s, eps_hat)
        if forward_eta > 0.0:
            a_cur = s.alpha_bars[t_cur]
            a_next = s.alpha_bars[t_next]
            sig = forward_eta * np.sqrt(
                max(0.0, (1.0 - a_cur) / (1.0 - a_next))
            ) * np.sqrt(max(0.0, 1.0 - a_next / a_cur))
            if sig > 0.0:
                if rng is None:
                    raise ValueError("forward_eta > 0 requires a noise stream")
                z = z + sig * gaussian_draw(rng, z.shape)
        if record:
            entries.append((t_next, z))
    if not record:
        entries.append((ts[-1], z))
    return z, Trajectory(entries=tuple(entries), direction="forward")


def run_generation(z_start, tau, s, denoiser, cond, eta=0.0, rng=None, record=True):
    """Reverse generation t_stop -> ... -> tau_1 -> 0 under one condition.

    Interior steps use the eta-mapped sigma; the final step to t=0 is always
    noise-free so the output is a clean prediction.  With eta=0 the run is
    fully deterministic and the stream is never consulted.
    Returns (z_hat_0, Trajectory).
    """
    if len(tau) == 0:
        raise ValueError("empty step sequence")
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    z = np.asarray(z_start, dtype=np.float64)
    n = len(tau)
    entries = [(int(tau.taus[-1]), z)]
    for i in range(n - 1, -1, -1):
        t_cur = int(tau.taus[i])
        t_prev = int(tau.taus[i - 1]) if i > 0 else 0
        eps_hat = denoiser.eps(z, t_cur, cond)
        sigma = sigma_from_eta(s, tau, i, eta) if (i > 0 and eta > 0.0) else 0.0
        xi = None
        if sigma > 0.0:
            if rng is None:
                raise ValueError("eta > 0 requires a noise stream")
            xi = gaussian_draw(rng, z.shape)
        z = generalized_step(z, t_cur, t_prev, s, eps_hat, sigma, xi)
        if record:
            entries.append((t_prev, z))
    if not record:
        entries.append((0, z))
    return z, Trajectory(entries=tuple(entries), direction="reverse")
