"""Trainable conditional noise predictor: a small MLP with manual backprop.

The network maps concat(flatten(z_t), time_embedding(t), cond_embedding)
through silu hidden layers to an epsilon prediction of z's shape.  Training
minimizes the plain epsilon-MSE with Adam; gradients come from reverse-mode
differentiation of the forward pass written out by hand, which keeps the
whole loop in numpy and lets tests check it against finite differences.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .conditions import cond_id
from .rng import NoiseStream, gaussian_draw


def time_embedding(t, dim, T):
    """Sinusoidal timestep features: (sin(t*w_j), cos(t*w_j)) pairs.

    Frequencies fall geometrically from 1 to 1/10000; works on scalar t or
    a vector of timesteps.
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ValueError(f"timestep outside [0, {T}]")
    half = dim // 2
    if half == 1:
        omegas = np.array([1.0])
    else:
        omegas = 10000.0 ** (-np.arange(half) / (half - 1))
    phase = t_arr[..., None] * omegas
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


@dataclass
class MlpDenoiser:
    """Conditional epsilon predictor with learned condition embeddings.

    weights maps parameter names (W0, b0, ..., cond_embed) to arrays; the
    silu nonlinearity x*sigmoid(x) follows every hidden layer.
    """

    input_dim: int
    hidden_dims: tuple
    time_embed_dim: int
    cond_embed_dim: int
    n_conditions: int
    T: int
    weights: dict = field(default_factory=dict)

    def eps(self, z, t, cond):
        return mlp_eps(self, z, t, cond)

    def copy(self):
        return MlpDenoiser(
            input_dim=self.input_dim,
            hidden_dims=tuple(self.hidden_dims),
            time_embed_dim=self.time_embed_dim,
            cond_embed_dim=self.cond_embed_dim,
            n_conditions=self.n_conditions,
            T=self.T,
            weights={k: v.copy() for k, v in self.weights.items()},
        )


def init_denoiser(
    input_dim,
    n_conditions,
    T,
    hidden_dims=(512, 512),
    time_embed_dim=64,
    cond_embed_dim=32,
    seed=0,
    dtype=np.float64,
):
    """He-initialized model; the condition table has n_conditions + 1 rows
    (row 0 is the reserved unconditional embedding).

    The (time, condition) embedding block is re-concatenated to every layer
    input, not just the first; with input-only injection the conditioning
    signal trains far too slowly to be usable.
    """
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    model = MlpDenoiser(
        input_dim=input_dim,
        hidden_dims=tuple(hidden_dims),
        time_embed_dim=time_embed_dim,
        cond_embed_dim=cond_embed_dim,
        n_conditions=n_conditions,
        T=T,
    )
    emb = time_embed_dim + cond_embed_dim
    sizes = [input_dim, *hidden_dims, input_dim]
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        model.weights[f"W{i}"] = gen.normal(
            0.0, np.sqrt(2.0 / (fan_in + emb)), (fan_in + emb, fan_out)
        )
        model.weights[f"b{i}"] = np.zeros(fan_out)
    # shared nonlinear features of (time, condition) feed every gate; a
    # linear gate cannot express "pull toward the class only at mid noise
    # levels", which is exactly the behavior edits need
    model.weights["P"] = gen.normal(0.0, np.sqrt(2.0 / emb), (emb, GATE_FEATURES))
    model.weights["p"] = np.zeros(GATE_FEATURES)
    for i, width in enumerate(hidden_dims):
        # zero-init gates: the gated path switches on only as training needs it
        model.weights[f"G{i}"] = np.zeros((GATE_FEATURES, width))
        model.weights[f"g{i}"] = np.zeros(width)
    # zero-init linear skip from input to output: the near-linear part of
    # the prediction takes the short path, hidden layers model the rest.
    # The skip is gated so the condition can modulate the observation-
    # faithful pathway, and the gate features add an output bias.
    model.weights["S"] = np.zeros((input_dim, input_dim))
    model.weights["Gs"] = np.zeros((GATE_FEATURES, input_dim))
    model.weights["gs"] = np.zeros(input_dim)
    model.weights["B"] = np.zeros((GATE_FEATURES, input_dim))
    model.weights["cond_embed"] = gen.normal(0.0, 1.0, (n_conditions + 1, cond_embed_dim))
    if dtype is not np.float64:
        model.weights = {k: v.astype(dtype) for k, v in model.weights.items()}
    return model


GATE_FEATURES = 64


def _silu(x):
    # tanh form of sigmoid avoids exp overflow for large negative inputs
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return x * sig, sig


def _forward(model, z_flat, t, cond_ids):
    """Batched forward pass; returns (eps, cache) with cache for backprop.

    Every layer input is concat(previous activation, temb, cemb), and each
    hidden activation is additionally gated by 1 + linear(temb, cemb): the
    multiplicative path is what lets the condition steer the prediction at
    this model scale.
    """
    dtype = model.weights["W0"].dtype
    temb = time_embedding(t, model.time_embed_dim, model.T).astype(dtype, copy=False)
    z_flat = z_flat.astype(dtype, copy=False)
    cemb = model.weights["cond_embed"][cond_ids]
    emb = np.concatenate([temb, cemb], axis=1)
    phi_pre = emb @ model.weights["P"] + model.weights["p"]
    phi, phi_sig = _silu(phi_pre)
    cache = {"cond_ids": cond_ids, "emb": emb, "z": z_flat, "pre": [], "sig": [],
             "act": [], "gate": [], "ins": [],
             "phi": phi, "phi_pre": phi_pre, "phi_sig": phi_sig}
    n_layers = len(model.hidden_dims) + 1
    h = z_flat
    for i in range(n_layers):
        x = np.concatenate([h, emb], axis=1)
        cache["ins"].append(x)
        pre = x @ model.weights[f"W{i}"] + model.weights[f"b{i}"]
        if i < n_layers - 1:
            a, sig = _silu(pre)
            gate = phi @ model.weights[f"G{i}"] + model.weights[f"g{i}"]
            h = a * (1.0 + gate)
            cache["pre"].append(pre)
            cache["sig"].append(sig)
            cache["act"].append(a)
            cache["gate"].append(gate)
        else:
            skip = z_flat @ model.weights["S"]
            skip_gate = phi @ model.weights["Gs"] + model.weights["gs"]
            cache["skip"] = skip
            cache["skip_gate"] = skip_gate
            h = pre + skip * (1.0 + skip_gate) + phi @ model.weights["B"]
    return h, cache


def _backward(model, cache, d_out):
    """Gradients of a scalar loss wrt all weights, given dL/d(output)."""
    grads = {}
    n_layers = len(model.hidden_dims) + 1
    emb = cache["emb"]
    phi = cache["phi"]
    d = d_out
    d_skip = d_out * (1.0 + cache["skip_gate"])
    d_skip_gate = d_out * cache["skip"]
    grads["S"] = cache["z"].T @ d_skip
    grads["Gs"] = phi.T @ d_skip_gate
    grads["gs"] = d_skip_gate.sum(axis=0)
    grads["B"] = phi.T @ d_out
    d_phi = d_skip_gate @ model.weights["Gs"].T + d_out @ model.weights["B"].T
    d_emb_total = np.zeros_like(emb)
    for i in range(n_layers - 1, -1, -1):
        x_in = cache["ins"][i]
        grads[f"W{i}"] = x_in.T @ d
        grads[f"b{i}"] = d.sum(axis=0)
        d_x = d @ model.weights[f"W{i}"].T
        # the embedding block occupies the trailing columns of each input
        split = x_in.shape[1] - emb.shape[1]
        d_emb_total = d_emb_total + d_x[:, split:]
        d = d_x[:, :split]
        if i > 0:
            j = i - 1
            a = cache["act"][j]
            gate = cache["gate"][j]
            d_a = d * (1.0 + gate)
            d_gate = d * a
            grads[f"G{j}"] = phi.T @ d_gate
            grads[f"g{j}"] = d_gate.sum(axis=0)
            d_phi = d_phi + d_gate @ model.weights[f"G{j}"].T
            pre = cache["pre"][j]
            sig = cache["sig"][j]
            # d silu / d pre = sig * (1 + pre * (1 - sig))
            d = d_a * (sig * (1.0 + pre * (1.0 - sig)))
    # through the shared gate features phi = silu(emb @ P + p)
    phi_sig = cache["phi_sig"]
    phi_pre = cache["phi_pre"]
    d_phi_pre = d_phi * (phi_sig * (1.0 + phi_pre * (1.0 - phi_sig)))
    grads["P"] = emb.T @ d_phi_pre
    grads["p"] = d_phi_pre.sum(axis=0)
    d_emb_total = d_emb_total + d_phi_pre @ model.weights["P"].T
    d_cemb = d_emb_total[:, model.time_embed_dim :]
    g_table = np.zeros_like(model.weights["cond_embed"])
    np.add.at(g_table, cache["cond_ids"], d_cemb)
    grads["cond_embed"] = g_table
    return grads


def mlp_eps(model, z, t, cond):
    """Noise prediction for one state or a batch.

    Accepted shapes: (d,) flat state, (n, d) flat batch, (h, w, c) latent
    grid, (n, h, w, c) grid batch; grids flatten row-major to input_dim.
    """
    from .mixture import flatten_states

    cid = cond_id(cond)
    if not 0 <= cid <= model.n_conditions:
        raise ValueError(f"unknown condition id {cid}")
    z = np.asarray(z, dtype=np.float64)
    flat = flatten_states(z)
    if flat.shape[1] != model.input_dim:
        raise ValueError(f"flattened size {flat.shape[1]} != input_dim {model.input_dim}")
    B = flat.shape[0]
    out, _ = _forward(
        model,
        flat,
        np.full(B, float(t)),
        np.full(B, cid, dtype=np.int64),
    )
    return out.reshape(z.shape)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs, batch_size, learning_rate must be non-negative/positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("bad Adam constants")


def batch_loss_and_grads(model, z0_flat, t, eps_true, cond_ids):
    """Epsilon-MSE (mean over batch of the squared L2 residual) and gradients.

    The noised input is formed by the caller; here z0_flat is already the
    noised state z_t.
    """
    pred, cache = _forward(model, z0_flat, t, cond_ids)
    resid = pred - eps_true.astype(pred.dtype, copy=False)
    B = z0_flat.shape[0]
    loss = float(np.sum(resid * resid) / B)
    grads = _backward(model, cache, (2.0 / B) * resid)
    return loss, grads


def train_denoiser(data, s, cfg, model=None, dtype=np.float64):
    """Train (or continue training) on (latents, cond_ids) pairs.

    data: tuple of (z0 array (N, ...) flattened internally, integer condition
    ids (N,)).  dtype applies when a fresh model is initialized; float32
    roughly halves the wall time per epoch.  Returns (model, per-epoch mean
    losses).
    """
    z0, cond_ids = data
    z0 = np.asarray(z0, dtype=np.float64)
    z0 = z0.reshape(z0.shape[0], -1)
    cond_ids = np.asarray(cond_ids, dtype=np.int64)
    N, D = z0.shape
    if N == 0:
        raise ValueError("empty dataset")
    if cfg.batch_size > N:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {N}")
    if model is None:
        model = init_denoiser(D, int(cond_ids.max()), s.T, seed=cfg.seed, dtype=dtype)
    else:
        model = model.copy()
    wdtype = model.weights["W0"].dtype
    z0 = z0.astype(wdtype, copy=False)

    order_gen = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    )
    noise = NoiseStream(cfg.seed, stream_id=(2,))
    adam_m = {k: np.zeros_like(v) for k, v in model.weights.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.weights.items()}
    step = 0
    losses = []
    n_batches = N // cfg.batch_size
    for epoch in range(cfg.epochs):
        perm = order_gen.permutation(N)
        epoch_loss = 0.0
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            zb = z0[idx]
            cb = cond_ids[idx]
            t = order_gen.integers(1, s.T + 1, size=len(idx))
            a = s.alpha_bars[t][:, None].astype(wdtype)
            eps = gaussian_draw(noise, zb.shape).astype(wdtype, copy=False)
            zt = np.sqrt(a) * zb + np.sqrt(1.0 - a) * eps
            loss, grads = batch_loss_and_grads(model, zt, t.astype(np.float64), eps, cb)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {b}; "
                    "lower the learning rate"
                )
            step += 1
            for k in model.weights:
                kernels.adam_update(
                    model.weights[k].reshape(-1),
                    grads[k].reshape(-1),
                    adam_m[k].reshape(-1),
                    adam_v[k].reshape(-1),
                    cfg.learning_rate,
                    cfg.adam_beta1,
                    cfg.adam_beta2,
                    cfg.adam_eps,
                    step,
                )
            epoch_loss += loss
        if not np.all([np.all(np.isfinite(w)) for w in model.weights.values()]):
            raise RuntimeError(f"non-finite parameters after epoch {epoch}")
        losses.append(epoch_loss / max(n_batches, 1))
    return model, losses
