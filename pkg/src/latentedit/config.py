"""Flat key=value configuration files with strict key checking.

Later assignments override earlier ones; '#' starts a comment; CLI flags
override file values.  Unknown keys fail fast, and every command writes its
fully resolved configuration next to its outputs for provenance.
"""

import os

KNOWN_KEYS = {
    "t": int,
    "beta_start": float,
    "beta_end": float,
    "eta": float,
    "t_stop": int,
    "n_for": int,
    "n_rev": int,
    "seed": int,
    "forward_eta": float,
    "unconditional_inversion": int,
    "f": int,
    "c": int,
    "n": int,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "samples": int,
    "workers": int,
    # edit-job fields, so a whole edit serializes to one config file
    "input": str,
    "cond_src": str,
    "cond_tar": str,
}

DEFAULTS = {
    "t": 1000,
    "beta_start": 1e-4,
    "beta_end": 0.02,
    "eta": 0.0,
    "t_stop": 600,
    "n_for": 50,
    "n_rev": 50,
    "seed": 0,
    "forward_eta": 0.0,
    "unconditional_inversion": 0,
    "f": 4,
    "c": 8,
    "n": 6000,
    "epochs": 300,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "samples": 1,
    "workers": 1,
    "input": "",
    "cond_src": "",
    "cond_tar": "",
}


class ConfigError(ValueError):
    pass


def parse_config(text):
    """key=value lines to a typed dict; unknown keys are an error."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = KNOWN_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def resolve(file_values=None, overrides=None):
    """DEFAULTS <- config file <- CLI overrides (None values skipped)."""
    cfg = dict(DEFAULTS)
    for layer in (file_values, overrides):
        if not layer:
            continue
        for key, value in layer.items():
            if value is None:
                continue
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            cfg[key] = KNOWN_KEYS[key](value)
    return cfg


def write_resolved(cfg, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("# resolved configuration\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")
    os.replace(tmp, path)
