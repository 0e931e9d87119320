"""Command-line surface: corpus generation, model fitting, editing, sweeps.

Single binary with subcommands; every command writes its resolved
configuration into its output directory.  Exit codes: 0 success, 1 usage or
configuration error, 2 runtime error.
"""

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from .checkpoint import (
    trajectory_records,
    autoencoder_from_records,
    autoencoder_records,
    denoiser_from_records,
    denoiser_records,
    load_checkpoint,
    save_checkpoint,
)
from .conditions import condition_by_id, condition_by_label
from .corpus import (
    generate_shapes,
    montage,
    read_manifest,
    read_pgm,
    write_manifest,
    write_pgm,
)
from .denoiser import TrainConfig, init_denoiser, train_denoiser
from .editor import (
    EditError,
    EditRequest,
    SamplerConfig,
    batch_edit,
    ldedit_masked,
)
from .evaluation import (
    edit_success_rate,
    format_report,
    run_sweep,
    template_classify,
    write_report_csv,
)
from .latent import LatentSpace, channel_scales, fit_autoencoder, make_mask_spec
from .schedule import make_linear_schedule


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_cond(text):
    if not text:
        raise UsageError("a condition is required (--cond-src/--cond-tar or config keys)")
    try:
        return condition_by_id(int(text))
    except ValueError:
        return condition_by_label(text)


def _resolved(args, keys):
    file_values = cfgmod.load_config(args.config) if args.config else None
    overrides = {k: getattr(args, k, None) for k in keys}
    return cfgmod.resolve(file_values, overrides)


def _schedule(cfg):
    return make_linear_schedule(cfg["t"], cfg["beta_start"], cfg["beta_end"])


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _load_space(path):
    ae, scales = autoencoder_from_records(load_checkpoint(path))
    if scales is None:
        scales = np.ones(ae.c)
    return LatentSpace(ae=ae, scales=scales)


def cmd_gen_data(args):
    cfg = _resolved(args, ["n", "seed"])
    out = _outdir(args.out)
    items = generate_shapes(cfg["n"], cfg["seed"])
    named = []
    for i, li in enumerate(items):
        fname = f"img_{i:05d}.pgm"
        write_pgm(li.image, os.path.join(out, fname))
        named.append((fname, li))
    write_manifest(named, os.path.join(out, "manifest.txt"))
    cfgmod.write_resolved(cfg, os.path.join(out, "resolved_config.txt"))
    print(f"wrote {len(items)} images + manifest to {out}")
    return 0


def _load_corpus(corpus_dir):
    rows = read_manifest(os.path.join(corpus_dir, "manifest.txt"))
    images = [read_pgm(os.path.join(corpus_dir, fname)) for fname, *_ in rows]
    cond_ids = np.array([cid for _, cid, *_ in rows], dtype=np.int64)
    return images, cond_ids, rows


def cmd_fit_ae(args):
    cfg = _resolved(args, ["f", "c"])
    images, _, _ = _load_corpus(args.corpus)
    ae = fit_autoencoder(images, cfg["f"], cfg["c"])
    scales = channel_scales(ae, images)
    save_checkpoint(autoencoder_records(ae, scales), args.out)
    cfgmod.write_resolved(cfg, args.out + ".config.txt")
    print(f"fit autoencoder f={cfg['f']} c={cfg['c']} on {len(images)} images -> {args.out}")
    return 0


def cmd_train(args):
    cfg = _resolved(
        args,
        ["epochs", "batch_size", "learning_rate", "seed", "t", "beta_start", "beta_end"],
    )
    s = _schedule(cfg)
    space = _load_space(args.ae)
    images, cond_ids, _ = _load_corpus(args.corpus)
    latents = np.stack([space.encode(im).ravel() for im in images])
    model = init_denoiser(
        input_dim=latents.shape[1],
        n_conditions=int(cond_ids.max()),
        T=s.T,
        seed=cfg["seed"],
    )
    tcfg = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        adam_beta1=cfg["adam_beta1"],
        adam_beta2=cfg["adam_beta2"],
        adam_eps=cfg["adam_eps"],
        seed=cfg["seed"],
    )
    model, losses = train_denoiser((latents, cond_ids), s, tcfg, model=model)
    save_checkpoint(denoiser_records(model), args.out)
    cfgmod.write_resolved(cfg, args.out + ".config.txt")
    first = losses[0] if losses else float("nan")
    last = losses[-1] if losses else float("nan")
    print(f"trained {cfg['epochs']} epochs (loss {first:.4g} -> {last:.4g}) -> {args.out}")
    return 0


def _edit_common(args, cfg):
    if not cfg["input"]:
        raise UsageError("an input image is required (--input or config key)")
    s = _schedule(cfg)
    space = _load_space(args.ae)
    model = denoiser_from_records(load_checkpoint(args.model))
    source = read_pgm(cfg["input"])
    sc = SamplerConfig(
        eta=cfg["eta"],
        t_stop=cfg["t_stop"],
        n_for=cfg["n_for"],
        n_rev=cfg["n_rev"],
        seed=cfg["seed"],
        forward_eta=cfg["forward_eta"],
        unconditional_inversion=bool(cfg["unconditional_inversion"]),
    )
    return s, space, model, source, sc


def _write_metrics(results, path):
    with open(path, "w") as fh:
        for i, res in enumerate(results):
            if isinstance(res, EditError):
                fh.write(f"edit={i} error={res.message!r}\n")
                continue
            parts = " ".join(f"{k}={v:.8g}" for k, v in sorted(res.metrics.items()))
            fh.write(f"edit={i} {parts}\n")


def _trajectory_strip(space, traj, frames=8):
    states = traj.states()
    idx = np.linspace(0, len(states) - 1, min(frames, len(states))).astype(int)
    return montage([space.decode(states[i]) for i in idx], cols=len(idx))


def cmd_edit(args):
    cfg = _resolved(
        args,
        ["eta", "t_stop", "n_for", "n_rev", "seed", "samples", "workers",
         "forward_eta", "unconditional_inversion", "t", "beta_start", "beta_end",
         "input", "cond_src", "cond_tar"],
    )
    s, space, model, source, sc = _edit_common(args, cfg)
    cond_src = _parse_cond(cfg["cond_src"])
    cond_tar = _parse_cond(cfg["cond_tar"])
    out = _outdir(args.out_dir)
    req = EditRequest(source=source, cond_src=cond_src.id, cond_tar=cond_tar.id, config=sc)
    results = batch_edit([req] * cfg["samples"], space, model, s, workers=cfg["workers"])
    outputs = []
    for i, res in enumerate(results):
        if isinstance(res, EditError):
            raise RuntimeError(f"edit {i} failed: {res.message}")
        write_pgm(res.output, os.path.join(out, f"out_{i:03d}.pgm"))
        outputs.append(res.output)
    write_pgm(montage(outputs, cols=min(4, len(outputs))), os.path.join(out, "montage.pgm"))
    write_pgm(
        _trajectory_strip(space, results[0].forward_traj),
        os.path.join(out, "trajectory_forward.pgm"),
    )
    write_pgm(
        _trajectory_strip(space, results[0].reverse_traj),
        os.path.join(out, "trajectory_reverse.pgm"),
    )
    save_checkpoint(
        {
            **trajectory_records(results[0].forward_traj, "fwd"),
            **trajectory_records(results[0].reverse_traj, "rev"),
        },
        os.path.join(out, "trajectories.lde"),
    )
    _write_metrics(results, os.path.join(out, "metrics.txt"))
    cfgmod.write_resolved(cfg, os.path.join(out, "resolved_config.txt"))
    print(f"wrote {len(outputs)} edits to {out}")
    return 0


def _parse_regions(text, f):
    masks, conds, etas = [], [], []
    for part in text.split(","):
        fields = part.split(":")
        if len(fields) != 3:
            raise UsageError(f"region {part!r}: expected maskfile:cond:eta")
        mask = (read_pgm(fields[0]) > 0).astype(np.uint8)
        masks.append(mask)
        conds.append(_parse_cond(fields[1]).id)
        etas.append(float(fields[2]))
    return make_mask_spec(masks, conds, etas, f)


def cmd_edit_masked(args):
    cfg = _resolved(
        args,
        ["eta", "t_stop", "n_for", "n_rev", "seed", "forward_eta",
         "unconditional_inversion", "t", "beta_start", "beta_end",
         "input", "cond_src", "cond_tar"],
    )
    s, space, model, source, sc = _edit_common(args, cfg)
    cond_src = _parse_cond(cfg["cond_src"])
    out = _outdir(args.out_dir)
    if args.regions:
        mask_spec = _parse_regions(args.regions, space.ae.f)
    elif args.mask and cfg["cond_tar"]:
        mask = (read_pgm(args.mask) > 0).astype(np.uint8)
        mask_spec = make_mask_spec([mask], [_parse_cond(cfg["cond_tar"]).id], [cfg["eta"]], space.ae.f)
    else:
        raise UsageError("edit-masked needs --regions or (--mask and --cond-tar)")
    req = EditRequest(
        source=source,
        cond_src=cond_src.id,
        cond_tar=mask_spec.regions[0].cond,
        config=sc,
        mask=mask_spec,
    )
    res = ldedit_masked(req, space, model, s)
    write_pgm(res.output, os.path.join(out, "out_masked.pgm"))
    write_pgm(
        _trajectory_strip(space, res.reverse_traj), os.path.join(out, "trajectory_blended.pgm")
    )
    _write_metrics([res], os.path.join(out, "metrics.txt"))
    cfgmod.write_resolved(cfg, os.path.join(out, "resolved_config.txt"))
    print(f"wrote masked edit to {out}")
    return 0


def cmd_sweep(args):
    cfg = _resolved(
        args,
        ["eta", "t_stop", "n_for", "n_rev", "seed", "samples", "t",
         "beta_start", "beta_end", "input", "cond_src", "cond_tar"],
    )
    s, space, model, source, sc = _edit_common(args, cfg)
    cond_src = _parse_cond(cfg["cond_src"])
    cond_tar = _parse_cond(cfg["cond_tar"])
    out = _outdir(args.out_dir)
    grid = [float(v) for v in args.grid.split(",")]
    reps = max(2, cfg["samples"])
    req = EditRequest(source=source, cond_src=cond_src.id, cond_tar=cond_tar.id, config=sc)

    target_shape = cond_tar.label.split("_")[0]

    def success(res):
        shape, _, score = template_classify(res.output)
        return shape == target_shape and score >= 0.5

    report = run_sweep(args.axis, grid, req, reps, space, model, s, success_fn=success)
    table = format_report(report)
    print(table)
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(table + "\n")
    write_report_csv(report, os.path.join(out, "report.csv"))
    cfgmod.write_resolved(cfg, os.path.join(out, "resolved_config.txt"))
    return 0


def cmd_eval(args):
    import re

    rows = []
    for root, _, files in os.walk(args.results_dir):
        for fname in files:
            if fname != "metrics.txt":
                continue
            with open(os.path.join(root, fname)) as fh:
                for line in fh:
                    kv = dict(
                        part.split("=", 1) for part in line.split() if "=" in part
                    )
                    if "error" in kv:
                        continue
                    rows.append({k: float(v) for k, v in kv.items() if re.match(r"^[\d.eE+-]+$", v)})
    if not rows:
        print(f"no metrics found under {args.results_dir}")
        return 2
    keys = sorted({k for row in rows for k in row} - {"edit"})
    print(f"{'metric':>14} {'mean':>12} {'min':>12} {'max':>12}   ({len(rows)} edits)")
    for k in keys:
        vals = np.array([row[k] for row in rows if k in row])
        print(f"{k:>14} {vals.mean():>12.6g} {vals.min():>12.6g} {vals.max():>12.6g}")
    return 0


def build_parser():
    p = _Parser(prog="latentedit", description=__doc__)
    p.add_argument("--config", help="key=value config file (CLI flags override)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the labeled shapes corpus")
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    f = sub.add_parser("fit-ae", help="fit the patch autoencoder on a corpus")
    f.add_argument("--corpus", required=True)
    f.add_argument("--f", type=int)
    f.add_argument("--c", type=int)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit_ae)

    t = sub.add_parser("train", help="train the conditional denoiser")
    t.add_argument("--corpus", required=True)
    t.add_argument("--ae", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    def add_edit_flags(sp, with_target=True):
        sp.add_argument("--input")
        sp.add_argument("--ae", required=True)
        sp.add_argument("--model", required=True)
        sp.add_argument("--cond-src", dest="cond_src")
        if with_target:
            sp.add_argument("--cond-tar", dest="cond_tar")
        sp.add_argument("--eta", type=float)
        sp.add_argument("--t-stop", dest="t_stop", type=int)
        sp.add_argument("--n-for", dest="n_for", type=int)
        sp.add_argument("--n-rev", dest="n_rev", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--forward-eta", dest="forward_eta", type=float)
        sp.add_argument("--out-dir", dest="out_dir", required=True)

    e = sub.add_parser("edit", help="run one edit (k samples)")
    add_edit_flags(e)
    e.add_argument("--samples", type=int)
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_edit)

    m = sub.add_parser("edit-masked", help="masked multi-region edit")
    add_edit_flags(m, with_target=False)
    m.add_argument("--cond-tar", dest="cond_tar")
    m.add_argument("--mask", help="PGM mask, nonzero = masked")
    m.add_argument("--regions", help="maskfile:cond:eta[,maskfile:cond:eta...]")
    m.set_defaults(func=cmd_edit_masked)

    w = sub.add_parser("sweep", help="sweep eta / t_stop / steps")
    add_edit_flags(w)
    w.add_argument("--axis", required=True, choices=["eta", "t_stop", "steps"])
    w.add_argument("--grid", required=True)
    w.add_argument("--samples", type=int, help="repetitions per grid point")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("eval", help="aggregate metrics files under a directory")
    v.add_argument("--results-dir", dest="results_dir", required=True)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
