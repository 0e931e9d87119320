"""Bit-exact checkpoint container for named float tensors.

Layout (all integers little-endian):
  magic "LDE1" | uint32 record count | records...
  record: uint32 name length | name bytes (utf-8) | uint32 rank |
          uint32 dims... | float32 payload, row-major.

Loads validate magic, declared sizes against the file, name uniqueness, and
payload finiteness; nothing is returned on failure.
"""

import os
import struct

import numpy as np

MAGIC = b"LDE1"


def save_checkpoint(records, path):
    """Write an ordered mapping of name -> array. Payloads are stored as
    float32; writes are atomic (temp file + rename)."""
    names = list(records)
    if len(set(names)) != len(names):
        raise ValueError("duplicate record names")
    chunks = [MAGIC, struct.pack("<I", len(names))]
    for name in names:
        arr = np.asarray(records[name], dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"record {name!r} has non-finite values")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(np.ascontiguousarray(arr).tobytes())
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise ValueError("truncated checkpoint")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Read back a dict of name -> float32 array, validating the container."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise ValueError("bad checkpoint magic")
    count = r.u32()
    records = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        if name in records:
            raise ValueError(f"duplicate record name {name!r}")
        rank = r.u32()
        dims = tuple(r.u32() for _ in range(rank))
        n = 1
        for d in dims:
            n *= d
        arr = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"record {name!r} has non-finite values")
        records[name] = arr.astype(np.float32)
    if r.pos != len(blob):
        raise ValueError(f"{len(blob) - r.pos} trailing bytes after records")
    return records


def autoencoder_records(ae, scales=None):
    """Serializable view of a PatchAutoencoder (+ optional channel scales)."""
    rec = {
        "ae/meta": np.array([ae.f, ae.c, ae.channels], dtype=np.float32),
        "ae/basis": ae.basis,
        "ae/mean": ae.mean,
        "ae/fingerprint": np.frombuffer(ae.trained_on.encode(), dtype=np.uint8).astype(
            np.float32
        ),
    }
    if scales is not None:
        rec["ae/channel_scales"] = scales
    return rec


def autoencoder_from_records(rec):
    from .latent import PatchAutoencoder

    f, c, channels = (int(v) for v in rec["ae/meta"])
    basis = rec["ae/basis"].astype(np.float64)
    mean = rec["ae/mean"].astype(np.float64)
    fingerprint = bytes(rec["ae/fingerprint"].astype(np.uint8)).decode()
    ae = PatchAutoencoder(
        f=f, c=c, channels=channels, basis=basis, mean=mean, trained_on=fingerprint
    )
    scales = rec.get("ae/channel_scales")
    return ae, (None if scales is None else scales.astype(np.float64))


def trajectory_records(traj, prefix):
    """Per-step tensor records of a trajectory, e.g. 'fwd/state_0600'."""
    return {
        f"{prefix}/state_{t:04d}": np.asarray(z, dtype=np.float32)
        for t, z in traj.entries
    }


def denoiser_records(model):
    rec = {
        "mlp/meta": np.array(
            [
                model.input_dim,
                model.time_embed_dim,
                model.cond_embed_dim,
                model.n_conditions,
                model.T,
                len(model.hidden_dims),
            ],
            dtype=np.float32,
        ),
        "mlp/hidden_dims": np.array(model.hidden_dims, dtype=np.float32),
    }
    for k, v in model.weights.items():
        rec[f"mlp/{k}"] = v
    return rec


def denoiser_from_records(rec):
    from .denoiser import MlpDenoiser

    meta = rec["mlp/meta"]
    input_dim, temb, cemb, n_cond, T, n_hidden = (int(v) for v in meta)
    hidden = tuple(int(v) for v in rec["mlp/hidden_dims"])
    if len(hidden) != n_hidden:
        raise ValueError("inconsistent hidden layer metadata")
    weights = {}
    for key, val in rec.items():
        name = key.split("/", 1)[1]
        if name in ("meta", "hidden_dims"):
            continue
        weights[name] = val.astype(np.float64)
    return MlpDenoiser(
        input_dim=input_dim,
        hidden_dims=hidden,
        time_embed_dim=temb,
        cond_embed_dim=cemb,
        n_conditions=n_cond,
        T=T,
        weights=weights,
    )
