"""Attack-success-rate evaluation and loss-landscape grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EvaluationError
from .models import LOSS_CROSS_ENTROPY, FeedForwardModel


def evaluate_atr(
    model: FeedForwardModel,
    clean: np.ndarray,
    adversarial: np.ndarray,
    labels: np.ndarray,
    targeted: bool = False,
    target_labels: np.ndarray | None = None,
) -> float:
    """Success rate over the examples the model classifies correctly clean.

    Untargeted success flips the prediction away from the true label;
    targeted success lands it on the per-sample target.
    """
    clean = np.asarray(clean, dtype=np.float64)
    adversarial = np.asarray(adversarial, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if clean.shape != adversarial.shape or clean.shape[0] != labels.shape[0]:
        raise DimensionError("clean, adversarial, and labels must be aligned")
    if targeted:
        if target_labels is None:
            raise EvaluationError("targeted evaluation needs target labels")
        target_labels = np.asarray(target_labels, dtype=np.int64)
    qualify = model.predict_batch(clean) == labels
    total = int(qualify.sum())
    if total == 0:
        raise EvaluationError(
            f"model {model.model_id or '<unnamed>'} classifies no clean example correctly; "
            "the success-rate denominator is empty"
        )
    adv_pred = model.predict_batch(adversarial[qualify])
    if targeted:
        hits = adv_pred == target_labels[qualify]
    else:
        hits = adv_pred != labels[qualify]
    return float(hits.sum()) / total


def evaluate_atr_many(
    models: dict[str, FeedForwardModel],
    clean: np.ndarray,
    adversarial: np.ndarray,
    labels: np.ndarray,
    targeted: bool = False,
    target_labels: np.ndarray | None = None,
) -> dict[str, float]:
    return {
        name: evaluate_atr(model, clean, adversarial, labels, targeted, target_labels)
        for name, model in models.items()
    }


def rademacher_direction(
    shape, rng: np.random.Generator, magnitude: float = 0.5
) -> np.ndarray:
    """Entries +-magnitude with equal probability."""
    return (2.0 * rng.integers(0, 2, size=shape) - 1.0) * magnitude


@dataclass
class LandscapeGrid:
    """Loss values over base + x*dir_x + y*dir_y on a square grid."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (len(ys), len(xs))
    max_point: tuple[float, float, float]  # (x, y, value)
    min_point: tuple[float, float, float]


def landscape_grid(
    model: FeedForwardModel,
    base: np.ndarray,
    label: int,
    dir_x: np.ndarray,
    dir_y: np.ndarray,
    grid_range: tuple[float, float] = (-0.5, 0.5),
    resolution: int = 21,
    loss_kind: str = LOSS_CROSS_ENTROPY,
) -> LandscapeGrid:
    """Evaluate the model loss over a 2-d slice through the input space."""
    base = np.asarray(base, dtype=np.float64)
    dir_x = np.asarray(dir_x, dtype=np.float64)
    dir_y = np.asarray(dir_y, dtype=np.float64)
    if dir_x.shape != base.shape or dir_y.shape != base.shape:
        raise DimensionError("direction shapes must match the base input")
    lo, hi = grid_range
    if resolution == 1:
        coords = np.array([0.5 * (lo + hi)])
    else:
        coords = np.linspace(lo, hi, resolution)
    values = np.empty((len(coords), len(coords)))
    for iy, y in enumerate(coords):
        for ix, x in enumerate(coords):
            values[iy, ix] = model.loss(base + x * dir_x + y * dir_y, label, loss_kind)
    flat_max = int(np.argmax(values))
    flat_min = int(np.argmin(values))
    my, mx = np.unravel_index(flat_max, values.shape)
    ny, nx = np.unravel_index(flat_min, values.shape)
    return LandscapeGrid(
        xs=coords,
        ys=coords.copy(),
        values=values,
        max_point=(float(coords[mx]), float(coords[my]), float(values[my, mx])),
        min_point=(float(coords[nx]), float(coords[ny]), float(values[ny, nx])),
    )


def landscape_to_text(grid: LandscapeGrid, model_id: str = "") -> str:
    lines = [
        "# landscape 1",
        f"# model {model_id}",
        "# max {:.17g} {:.17g} {:.17g}".format(*grid.max_point),
        "# min {:.17g} {:.17g} {:.17g}".format(*grid.min_point),
        "x,y,value",
    ]
    for iy, y in enumerate(grid.ys):
        for ix, x in enumerate(grid.xs):
            lines.append(
                f"{format(x, '.17g')},{format(y, '.17g')},{format(grid.values[iy, ix], '.17g')}"
            )
    return "\n".join(lines) + "\n"


def save_landscape(grid: LandscapeGrid, path, model_id: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(landscape_to_text(grid, model_id))
