"""Discrete condition vocabulary standing in for free-text prompts."""

from dataclasses import dataclass


@dataclass(frozen=True)
class ConditionId:
    """Small integer condition key; id 0 is reserved for 'unconditional'."""

    id: int
    label: str


UNCONDITIONAL = ConditionId(0, "unconditional")

SHAPES = ("disc", "square", "cross")
INTENSITY_LEVELS = {"low": 0.4, "high": 0.9}

_VOCAB = (UNCONDITIONAL,) + tuple(
    ConditionId(1 + i * 2 + j, f"{shape}_{level}")
    for i, shape in enumerate(SHAPES)
    for j, level in enumerate(("low", "high"))
)


def condition_vocabulary():
    """All conditions: unconditional plus the 6 shape x intensity classes."""
    return _VOCAB


def shape_condition(shape, level):
    """Condition for one (shape, intensity-level) pair, e.g. ('disc', 'high')."""
    return condition_by_label(f"{shape}_{level}")


def condition_by_label(label):
    for c in _VOCAB:
        if c.label == label:
            return c
    raise KeyError(f"unknown condition label {label!r}")


def condition_by_id(cid):
    for c in _VOCAB:
        if c.id == cid:
            return c
    raise KeyError(f"unknown condition id {cid}")


def cond_id(cond):
    """Integer id from a ConditionId or a bare int."""
    return cond.id if isinstance(cond, ConditionId) else int(cond)
