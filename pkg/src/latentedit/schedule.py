"""Noise-variance schedules, timestep subsequences, and the eta -> sigma map."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Discrete variance schedule beta_1..beta_T with cumulative products.

    ``alpha_bars`` has length T+1 and ``alpha_bars[t]`` is the running
    product of (1 - beta_s) for s <= t, with ``alpha_bars[0] == 1.0`` by
    definition.  Instances are immutable and safe to share across workers.
    """

    T: int
    betas: np.ndarray
    alpha_bars: np.ndarray


def make_linear_schedule(T, beta_start=1e-4, beta_end=0.02):
    """Linearly interpolated beta schedule from beta_start to beta_end inclusive."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if T == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bars = np.empty(T + 1, dtype=np.float64)
    alpha_bars[0] = 1.0
    np.cumprod(1.0 - betas, out=alpha_bars[1:])
    betas.setflags(write=False)
    alpha_bars.setflags(write=False)
    return NoiseSchedule(T=T, betas=betas, alpha_bars=alpha_bars)


def alpha_bar(s, t):
    """Cumulative signal coefficient at timestep t; alpha_bar(s, 0) == 1."""
    if not 0 <= t <= s.T:
        raise ValueError(f"timestep {t} outside [0, {s.T}]")
    return float(s.alpha_bars[t])


@dataclass(frozen=True)
class StepSequence:
    """Strictly increasing timestep subsequence ending at t_stop."""

    taus: np.ndarray

    @property
    def t_stop(self):
        return int(self.taus[-1])

    def __len__(self):
        return len(self.taus)


def make_subsequence(s, n, t_stop, spacing="uniform"):
    """n timesteps uniformly spaced over (0, t_stop], last exactly t_stop.

    Rounding collisions are repaired by shifting earlier duplicates down,
    so the result is always strictly increasing and reproducible.
    """
    if spacing != "uniform":
        raise ValueError(f"unknown spacing {spacing!r}")
    if t_stop > s.T:
        raise ValueError(f"t_stop {t_stop} exceeds schedule length {s.T}")
    if not 1 <= n <= t_stop:
        raise ValueError(f"need 1 <= n <= t_stop, got n={n}, t_stop={t_stop}")
    raw = t_stop * (np.arange(1, n + 1, dtype=np.float64) / n)
    taus = np.floor(raw + 0.5).astype(np.int64)
    taus[-1] = t_stop
    # n <= t_stop guarantees the repair never pushes taus[0] below 1
    for i in range(n - 2, -1, -1):
        if taus[i] >= taus[i + 1]:
            taus[i] = taus[i + 1] - 1
    taus.setflags(write=False)
    return StepSequence(taus=taus)


def sigma_from_eta(s, tau, i, eta):
    """Per-step noise scale sigma_{tau_i}(eta) for the generalized reverse step.

    Linear in eta; eta=0 gives the deterministic sampler and eta=1 matches
    the ancestral (DDPM posterior) noise level.
    """
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    if not 1 <= i < len(tau):
        raise ValueError(f"index {i} has no predecessor in a {len(tau)}-step sequence")
    a_prev = s.alpha_bars[tau.taus[i - 1]]
    a_cur = s.alpha_bars[tau.taus[i]]
    return float(
        eta * np.sqrt((1.0 - a_prev) / (1.0 - a_cur)) * np.sqrt(1.0 - a_cur / a_prev)
    )
