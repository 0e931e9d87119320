"""Quantitative edit metrics: cycle consistency, template classification,
edit success, output diversity, and the sweep harness that turns the
qualitative t_stop / eta behavior into ordered numbers."""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .conditions import SHAPES
from .corpus import CANVAS, CENTER_RANGE, RADIUS_RANGE, shape_mask
from .editor import EditError, _decode, _encode, batch_edit, ldedit, with_config


_BANK_CACHE = {}


def _template_bank():
    """Zero-mean unit-norm templates over all (shape, radius, center) combos."""
    if "bank" in _BANK_CACHE:
        return _BANK_CACHE["bank"]
    rows = []
    meta = []
    centers = range(CENTER_RANGE[0], CENTER_RANGE[1] + 1)
    radii = range(RADIUS_RANGE[0], RADIUS_RANGE[1] + 1)
    for si, shape in enumerate(SHAPES):
        for r in radii:
            for cx in centers:
                for cy in centers:
                    t = shape_mask(shape, (cx, cy), r).astype(np.float64).ravel()
                    t -= t.mean()
                    norm = np.linalg.norm(t)
                    rows.append(t / norm)
                    meta.append((si, cx, cy, r))
    bank = np.ascontiguousarray(np.array(rows))
    meta = np.array(meta, dtype=np.int64)
    _BANK_CACHE["bank"] = (bank, meta)
    return bank, meta


def template_classify(image):
    """Best (shape, center, score) by normalized cross-correlation.

    Score is the peak correlation in [-1, 1]; a flat image scores 0.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[:, :, 0]
    if img.shape != (CANVAS, CANVAS):
        raise ValueError(f"classifier expects {CANVAS}x{CANVAS} images, got {img.shape}")
    x = img.ravel() - img.mean()
    norm = np.linalg.norm(x)
    bank, meta = _template_bank()
    if norm < 1e-12:
        return SHAPES[0], (CANVAS // 2, CANVAS // 2), 0.0
    scores = kernels.template_scores(bank, np.ascontiguousarray(x / norm))
    k = int(np.argmax(scores))
    si, cx, cy, _ = meta[k]
    return SHAPES[si], (int(cx), int(cy)), float(scores[k])


def cycle_consistency(source, cond, config, ae, denoiser, s):
    """MSE between an identity edit (target = source condition) and the
    plain reconstruction, isolating sampler error from autoencoder loss."""
    from .editor import EditRequest

    req = EditRequest(source=source, cond_src=cond, cond_tar=cond, config=config)
    res = ldedit(req, ae, denoiser, s)
    if ae is not None:
        recon = _decode(ae, _encode(ae, source))
        return float(np.mean((res.output - recon) ** 2))
    return float(np.mean((res.output - np.asarray(source, dtype=np.float64)) ** 2))


def edit_success_rate(results, target_shape, source_centers=None, score_threshold=0.5):
    """Fraction of edits classified as the target shape with center drift
    <= 2 px from the source center (classified from the source image when
    explicit centers are not given)."""
    if len(results) == 0:
        raise ValueError("no results")
    ok = 0
    for i, res in enumerate(results):
        if isinstance(res, EditError):
            continue
        shape, center, score = template_classify(res.output)
        if source_centers is not None:
            src_center = source_centers[i]
        else:
            _, src_center, _ = template_classify(res.request.source)
        drift = float(np.hypot(center[0] - src_center[0], center[1] - src_center[1]))
        if shape == target_shape and score >= score_threshold and drift <= 2.0:
            ok += 1
    return ok / len(results)


def diversity(outputs):
    """Mean per-dimension variance across a set of same-shape outputs."""
    if len(outputs) < 2:
        raise ValueError("diversity needs at least 2 outputs")
    stack = np.stack([np.asarray(o, dtype=np.float64) for o in outputs])
    # shift by the first sample: variance-invariant, and keeps identical
    # outputs at exactly zero (np.mean alone can be off by an ulp)
    stack = stack - stack[0]
    return float(np.var(stack, axis=0).mean())


def displacement(source, output):
    """Root-mean-square pixel/coordinate displacement of an edit."""
    diff = np.asarray(output, dtype=np.float64) - np.asarray(source, dtype=np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass(frozen=True)
class SweepPoint:
    value: float
    displacement: float
    diversity: float
    cycle_error: float
    success_rate: float


@dataclass(frozen=True)
class SweepReport:
    axis: str  # eta | t_stop | steps
    seeds: int
    points: tuple


def _apply_axis(req, axis, value):
    if axis == "eta":
        return with_config(req, eta=float(value))
    if axis == "t_stop":
        v = int(value)
        n_for = min(req.config.n_for, v)
        n_rev = min(req.config.n_rev, v)
        return with_config(req, t_stop=v, n_for=n_for, n_rev=n_rev)
    if axis == "steps":
        v = int(value)
        return with_config(req, n_for=v, n_rev=v)
    raise ValueError(f"unknown sweep axis {axis!r}")


def run_sweep(axis, grid, base_request, repetitions, ae, denoiser, s, success_fn=None):
    """Edits over grid x repetitions, aggregated per grid point.

    Repetition j of any point runs with noise stream id j, so reports are a
    pure function of (request, grid, repetitions).
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if list(grid) != sorted(grid):
        raise ValueError("grid must be sorted ascending")
    points = []
    for value in grid:
        req = _apply_axis(base_request, axis, value)
        results = batch_edit([req] * repetitions, ae, denoiser, s)
        errors = [r for r in results if isinstance(r, EditError)]
        if errors:
            raise RuntimeError(f"sweep point {value}: {errors[0].message}")
        outs = [r.output for r in results]
        disp = float(np.mean([displacement(req.source, o) for o in outs]))
        div = diversity(outs) if repetitions >= 2 else 0.0
        cyc = cycle_consistency(req.source, req.cond_src, req.config, ae, denoiser, s)
        if success_fn is not None:
            succ = float(np.mean([success_fn(r) for r in results]))
        else:
            succ = float("nan")
        points.append(
            SweepPoint(
                value=float(value),
                displacement=disp,
                diversity=div,
                cycle_error=cyc,
                success_rate=succ,
            )
        )
    return SweepReport(axis=axis, seeds=repetitions, points=tuple(points))


def format_report(report):
    """Aligned plain-text table."""
    header = f"{report.axis:>10} {'displacement':>14} {'diversity':>12} {'cycle_err':>12} {'success':>9}"
    lines = [header, "-" * len(header)]
    for p in report.points:
        lines.append(
            f"{p.value:>10.4g} {p.displacement:>14.6g} {p.diversity:>12.6g} "
            f"{p.cycle_error:>12.6g} {p.success_rate:>9.4g}"
        )
    return "\n".join(lines)


def write_report_csv(report, path):
    import os

    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(f"{report.axis},displacement,diversity,cycle_error,success_rate\n")
        for p in report.points:
            fh.write(
                f"{p.value!r},{p.displacement!r},{p.diversity!r},"
                f"{p.cycle_error!r},{p.success_rate!r}\n"
            )
    os.replace(tmp, path)
