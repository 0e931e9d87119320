"""Gaussian-mixture data model with an exact closed-form noise predictor.

Conditioning reweights the mixture components, so the same base mixture
yields a family of conditional distributions with known Bayes-optimal
epsilon predictions -- the verification oracle for the learned denoiser
and the sampler round trips.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .conditions import cond_id
from .rng import gaussian_draw


@dataclass(frozen=True)
class GaussianMixture:
    """Diagonal-covariance mixture: weights (K,), means (K, d), variances (K, d)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        if np.any(v <= 0):
            raise ValueError("all variances must be > 0")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("means and variances must be finite")
        if not (w.shape[0] == m.shape[0] == v.shape[0]) or m.shape != v.shape:
            raise ValueError("inconsistent component shapes")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass(frozen=True)
class ConditionedMixtureFamily:
    """Base mixture plus per-condition component weights."""

    base: GaussianMixture
    weights_by_condition: dict

    def __post_init__(self):
        checked = {}
        for cond, w in self.weights_by_condition.items():
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (len(self.base.weights),):
                raise ValueError(f"condition {cond}: weight vector has wrong length")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"condition {cond}: not a distribution")
            checked[cond_id(cond)] = w
        object.__setattr__(self, "weights_by_condition", checked)

    def weights_for(self, cond):
        cid = cond_id(cond)
        if cid not in self.weights_by_condition:
            raise KeyError(f"condition id {cid} not in family")
        return self.weights_by_condition[cid]


def mixture_responsibilities(fam, cond, z_t, alpha_bar_t):
    """Posterior component responsibilities of z_t at signal level alpha_bar_t."""
    _check_level(alpha_bar_t)
    z = np.atleast_2d(np.asarray(z_t, dtype=np.float64))
    w = fam.weights_for(cond)
    sa = np.sqrt(alpha_bar_t)
    v = alpha_bar_t * fam.base.variances + (1.0 - alpha_bar_t)
    diff = z[:, None, :] - sa * fam.base.means[None, :, :]
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    logp = logw[None, :] - 0.5 * np.sum(
        np.log(2.0 * np.pi * v)[None, :, :] + diff * diff / v[None, :, :], axis=2
    )
    logp -= logp.max(axis=1, keepdims=True)
    r = np.exp(logp)
    r /= r.sum(axis=1, keepdims=True)
    return r if np.asarray(z_t).ndim > 1 else r[0]


def _check_level(alpha_bar_t):
    if not 0.0 < alpha_bar_t < 1.0:
        raise ValueError(f"alpha_bar_t must be in (0, 1), got {alpha_bar_t}")


def analytic_eps(fam, cond, z_t, alpha_bar_t):
    """Bayes-optimal noise prediction for the conditioned mixture.

    Accepts a single (d,) state or a batch (..., d); responsibilities are
    computed in the log domain. Zero-weight components are dropped before
    the kernel so log(0) never enters it.
    """
    _check_level(alpha_bar_t)
    z = np.asarray(z_t, dtype=np.float64)
    if z.shape[-1] != fam.base.dim:
        raise ValueError(f"dimension mismatch: {z.shape[-1]} vs {fam.base.dim}")
    w = fam.weights_for(cond)
    live = w > 0.0
    flat = np.ascontiguousarray(z.reshape(-1, fam.base.dim))
    out = kernels.mixture_eps(
        flat,
        float(alpha_bar_t),
        np.ascontiguousarray(fam.base.means[live]),
        np.ascontiguousarray(fam.base.variances[live]),
        np.log(w[live]),
    )
    return out.reshape(z.shape)


def flatten_states(z):
    """Flatten a state to (batch, dim) rows.

    Rank convention shared by all denoisers: 1-D and 3-D are single states
    (flat vector, latent grid); 2-D and 4-D are batches of those.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim in (1, 3):
        return z.reshape(1, -1)
    if z.ndim in (2, 4):
        return z.reshape(z.shape[0], -1)
    raise ValueError(f"unsupported state rank {z.ndim}")


class AnalyticMixtureDenoiser:
    """Exact epsilon predictor over a conditioned mixture, usable as a denoiser.

    Operates on flat states or latent grids (flattened row-major).  At t=0
    the state carries no noise and the optimal prediction is zero (the
    injected noise is independent of a noise-free observation), which also
    keeps the first inversion step well defined.
    """

    def __init__(self, family, s):
        self.family = family
        self.schedule = s

    def eps(self, z, t, cond):
        z = np.asarray(z, dtype=np.float64)
        if t == 0:
            return np.zeros_like(z)
        flat = flatten_states(z)
        out = analytic_eps(self.family, cond, flat, self.schedule.alpha_bars[t])
        return out.reshape(z.shape)


def sample_mixture(fam, cond, n, rng):
    """Ancestral samples from the conditioned mixture: (n, d) array."""
    w = fam.weights_for(cond)
    u = rng._gen.random(n)
    idx = np.searchsorted(np.cumsum(w), u, side="right")
    idx = np.minimum(idx, len(w) - 1)
    noise = gaussian_draw(rng, (n, fam.base.dim))
    return fam.base.means[idx] + np.sqrt(fam.base.variances[idx]) * noise


def nearest_component(fam, z):
    """Index of the Euclidean-nearest component mean for each row of z."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    d2 = np.sum((z[:, None, :] - fam.base.means[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1)


def family_to_text(fam):
    """Line-oriented key=value serialization of a conditioned family."""
    base = fam.base
    lines = [
        f"components = {len(base.weights)}",
        f"dim = {base.dim}",
        "weights = " + ",".join(repr(float(w)) for w in base.weights),
    ]
    for k in range(len(base.weights)):
        lines.append(f"mean_{k} = " + ",".join(repr(float(v)) for v in base.means[k]))
        lines.append(f"var_{k} = " + ",".join(repr(float(v)) for v in base.variances[k]))
    for cid in sorted(fam.weights_by_condition):
        w = fam.weights_by_condition[cid]
        lines.append(f"cond_{cid} = " + ",".join(repr(float(v)) for v in w))
    return "\n".join(lines) + "\n"


def family_from_text(text):
    """Inverse of family_to_text; '#' comments allowed, later keys override."""
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value, got {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        kv[key] = val
    K = int(kv["components"])
    vec = lambda s: np.array([float(v) for v in s.split(",")])
    base = GaussianMixture(
        weights=vec(kv["weights"]),
        means=np.stack([vec(kv[f"mean_{k}"]) for k in range(K)]),
        variances=np.stack([vec(kv[f"var_{k}"]) for k in range(K)]),
    )
    table = {
        int(key.split("_", 1)[1]): vec(val)
        for key, val in kv.items()
        if key.startswith("cond_")
    }
    return ConditionedMixtureFamily(base=base, weights_by_condition=table)


def family_from_labeled_latents(latents, cond_ids, var_floor=1e-3):
    """One Gaussian component per condition, fit from labeled flat latents.

    Condition c selects its own component; condition 0 mixes all of them by
    empirical frequency.  A cheap closed-form stand-in denoiser for grid
    experiments where training a network would be overkill.
    """
    z = np.asarray(latents, dtype=np.float64)
    z = z.reshape(z.shape[0], -1)
    cond_ids = np.asarray(cond_ids)
    uniq = np.unique(cond_ids)
    means, variances, counts = [], [], []
    for c in uniq:
        rows = z[cond_ids == c]
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), var_floor))
        counts.append(len(rows))
    counts = np.asarray(counts, dtype=np.float64)
    base = GaussianMixture(
        weights=counts / counts.sum(),
        means=np.array(means),
        variances=np.array(variances),
    )
    table = {0: counts / counts.sum()}
    for k, c in enumerate(uniq):
        onehot = np.zeros(len(uniq))
        onehot[k] = 1.0
        table[int(c)] = onehot
    return ConditionedMixtureFamily(base=base, weights_by_condition=table)
