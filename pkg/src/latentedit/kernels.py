"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

Every kernel is exported twice (``<name>_numpy`` and ``<name>_numba``, the
latter ``None`` when numba is unavailable) plus once under its bare name,
bound to whichever path :mod:`latentedit._backend` selected.  The two paths
compute the same quantities; they may differ by float-accumulation order,
so cross-path comparisons belong at ~1e-9 relative, not bitwise.
"""

import numpy as np

from ._backend import HAS_NUMBA, NUMBA_ENABLED, njit

_LOG_2PI = float(np.log(2.0 * np.pi))


def mixture_eps_numpy(z, a, means, variances, logw):
    """Bayes-optimal noise prediction for a diagonal Gaussian mixture.

    z: (n, d) noised samples at signal level a = alpha_bar_t in (0, 1);
    means, variances: (K, d); logw: (K,) log component weights.
    Returns the (n, d) epsilon estimate.
    """
    sa = np.sqrt(a)
    v = a * variances + (1.0 - a)  # (K, d) marginal variances of z_t
    diff = z[:, None, :] - sa * means[None, :, :]  # (n, K, d)
    logp = logw[None, :] - 0.5 * np.sum(
        _LOG_2PI + np.log(v)[None, :, :] + diff * diff / v[None, :, :], axis=2
    )
    logp -= logp.max(axis=1, keepdims=True)
    r = np.exp(logp)
    r /= r.sum(axis=1, keepdims=True)  # (n, K) responsibilities
    gain = sa * variances / v  # (K, d)
    mhat = means[None, :, :] + gain[None, :, :] * diff  # per-component posterior mean
    x0 = np.sum(r[:, :, None] * mhat, axis=1)
    return (z - sa * x0) / np.sqrt(1.0 - a)


def _mixture_eps_loops(z, a, means, variances, logw):
    n, d = z.shape
    K = means.shape[0]
    sa = np.sqrt(a)
    sq1ma = np.sqrt(1.0 - a)
    out = np.empty((n, d))
    v = a * variances + (1.0 - a)
    logdet = np.empty(K)
    for k in range(K):
        s = 0.0
        for j in range(d):
            s += _LOG_2PI + np.log(v[k, j])
        logdet[k] = s
    logp = np.empty(K)
    for i in range(n):
        for k in range(K):
            q = 0.0
            for j in range(d):
                dd = z[i, j] - sa * means[k, j]
                q += dd * dd / v[k, j]
            logp[k] = logw[k] - 0.5 * (logdet[k] + q)
        mx = logp[0]
        for k in range(1, K):
            if logp[k] > mx:
                mx = logp[k]
        tot = 0.0
        for k in range(K):
            logp[k] = np.exp(logp[k] - mx)
            tot += logp[k]
        for j in range(d):
            x0 = 0.0
            for k in range(K):
                dd = z[i, j] - sa * means[k, j]
                mhat = means[k, j] + sa * variances[k, j] / v[k, j] * dd
                x0 += (logp[k] / tot) * mhat
            out[i, j] = (z[i, j] - sa * x0) / sq1ma
    return out


def template_scores_numpy(bank, xhat):
    """Correlation of a unit-norm image vector against a template bank.

    bank: (m, p) rows already zero-mean unit-norm; xhat: (p,) likewise.
    """
    return bank @ xhat


def _template_scores_loops(bank, xhat):
    m, p = bank.shape
    out = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(p):
            s += bank[i, j] * xhat[j]
        out[i] = s
    return out


def adam_update_numpy(p, g, m, v, lr, beta1, beta2, eps, t):
    """One fused Adam step, in place on (p, m, v). t is the 1-based step count."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def _adam_update_loops(p, g, m, v, lr, beta1, beta2, eps, t):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


if HAS_NUMBA:
    mixture_eps_numba = njit(_mixture_eps_loops)
    template_scores_numba = njit(_template_scores_loops)
    adam_update_numba = njit(_adam_update_loops)
else:  # pragma: no cover
    mixture_eps_numba = None
    template_scores_numba = None
    adam_update_numba = None

if NUMBA_ENABLED:
    mixture_eps = mixture_eps_numba
    adam_update = adam_update_numba
else:
    mixture_eps = mixture_eps_numpy
    adam_update = adam_update_numpy

# the template scan is a single dense matvec where threaded BLAS beats the
# compiled loop ~5x (see benchmarks/bench_kernels.py), so numpy is the
# default on both backends; the numba variant stays for the benchmark
template_scores = template_scores_numpy
