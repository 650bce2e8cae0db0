"""Synthetic classification data and its on-disk text format.

Classes are Gaussian clusters in the unit cube. The ``margin`` parameter is
the minimum pairwise distance between class centers, independent of the
noise scale, so separability and adversarial reachability can be tuned
against each other. Files round-trip bit-exactly (%.17g float text).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError

_FORMAT_LINE = "dataset 1"
DEFAULT_NOISE = 0.04


@dataclass
class LabeledSample:
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """Train/eval split of features in [0,1]^dim with integer labels."""

    num_classes: int
    dim: int
    train_features: np.ndarray
    train_labels: np.ndarray
    eval_features: np.ndarray
    eval_labels: np.ndarray

    def validate(self) -> None:
        for feats, labels in (
            (self.train_features, self.train_labels),
            (self.eval_features, self.eval_labels),
        ):
            if feats.ndim != 2 or feats.shape[1] != self.dim:
                raise DimensionError("feature matrix shape does not match dim")
            if feats.shape[0] != labels.shape[0]:
                raise DimensionError("features and labels are misaligned")
            if feats.size and (feats.min() < 0.0 or feats.max() > 1.0):
                raise DataError("features outside [0, 1]")
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise DataError("labels outside [0, num_classes)")

    def eval_samples(self) -> list[LabeledSample]:
        return [
            LabeledSample(self.eval_features[i].copy(), int(self.eval_labels[i]))
            for i in range(self.eval_features.shape[0])
        ]


def _spread_centers(
    classes: int, dim: int, margin: float, rng: np.random.Generator
) -> np.ndarray:
    """Random directions around the cube center, rescaled so the closest
    pair of centers sits exactly ``margin`` apart."""
    raw = rng.normal(size=(classes, dim))
    raw -= raw.mean(axis=0)
    dists = np.linalg.norm(raw[:, None, :] - raw[None, :, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    closest = dists.min()
    if closest <= 0:
        raise DataError("degenerate center placement; change the seed")
    return 0.5 + raw * (margin / closest)


def generate_dataset(
    classes: int,
    dim: int,
    per_class: int,
    margin: float,
    seed: int,
    noise: float = DEFAULT_NOISE,
    eval_fraction: float = 0.25,
) -> Dataset:
    """Gaussian class clusters with a controlled inter-center margin."""
    if classes < 2 or dim < 2:
        raise ConfigurationError("need at least 2 classes and 2 dimensions")
    if per_class < 2:
        raise ConfigurationError("need at least 2 samples per class")
    if margin <= 0 or noise <= 0:
        raise ConfigurationError("margin and noise must be positive")
    if not 0.0 < eval_fraction < 1.0:
        raise ConfigurationError("eval_fraction must be in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = _spread_centers(classes, dim, margin, rng)
    n_eval = max(1, int(round(per_class * eval_fraction)))
    n_train = per_class - n_eval
    if n_train < 1:
        raise ConfigurationError("eval_fraction leaves no training samples")
    train_f, train_y, eval_f, eval_y = [], [], [], []
    for c in range(classes):
        pts = np.clip(centers[c] + rng.normal(0.0, noise, size=(per_class, dim)), 0.0, 1.0)
        train_f.append(pts[:n_train])
        eval_f.append(pts[n_train:])
        train_y.append(np.full(n_train, c, dtype=np.int64))
        eval_y.append(np.full(n_eval, c, dtype=np.int64))
    ds = Dataset(
        num_classes=classes,
        dim=dim,
        train_features=np.concatenate(train_f),
        train_labels=np.concatenate(train_y),
        eval_features=np.concatenate(eval_f),
        eval_labels=np.concatenate(eval_y),
    )
    ds.validate()
    return ds


def dataset_to_text(ds: Dataset) -> str:
    ds.validate()
    lines = [
        _FORMAT_LINE,
        f"classes {ds.num_classes}",
        f"dim {ds.dim}",
        f"train {ds.train_features.shape[0]}",
        f"eval {ds.eval_features.shape[0]}",
    ]
    for split, feats, labels in (
        ("train", ds.train_features, ds.train_labels),
        ("eval", ds.eval_features, ds.eval_labels),
    ):
        for row, label in zip(feats, labels):
            values = " ".join(format(v, ".17g") for v in row)
            lines.append(f"{split} {int(label)} {values}")
    return "\n".join(lines) + "\n"


def dataset_from_text(text: str) -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _FORMAT_LINE:
        raise DataError("unrecognized dataset header")
    header = {}
    for ln in lines[1:5]:
        key, _, value = ln.partition(" ")
        header[key] = int(value)
    expected = {"classes", "dim", "train", "eval"}
    if set(header) != expected:
        raise DataError(f"dataset header must declare {sorted(expected)}")
    rows = {"train": ([], []), "eval": ([], [])}
    for ln in lines[5:]:
        parts = ln.split()
        split, label, values = parts[0], int(parts[1]), parts[2:]
        if split not in rows:
            raise DataError(f"unknown split {split!r}")
        if len(values) != header["dim"]:
            raise DataError("feature row length does not match dim header")
        rows[split][0].append([float(v) for v in values])
        rows[split][1].append(label)
    for split in ("train", "eval"):
        if len(rows[split][0]) != header[split]:
            raise DataError(f"{split} row count does not match header")
    ds = Dataset(
        num_classes=header["classes"],
        dim=header["dim"],
        train_features=np.asarray(rows["train"][0], dtype=np.float64).reshape(
            header["train"], header["dim"]
        ),
        train_labels=np.asarray(rows["train"][1], dtype=np.int64),
        eval_features=np.asarray(rows["eval"][0], dtype=np.float64).reshape(
            header["eval"], header["dim"]
        ),
        eval_labels=np.asarray(rows["eval"][1], dtype=np.int64),
    )
    ds.validate()
    return ds


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_to_text(ds))


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_text(fh.read())


def nearest_center_accuracy(ds: Dataset) -> float:
    """Accuracy of classifying eval points by the nearest train-class mean."""
    centers = np.stack(
        [ds.train_features[ds.train_labels == c].mean(axis=0) for c in range(ds.num_classes)]
    )
    dists = np.linalg.norm(ds.eval_features[:, None, :] - centers[None, :, :], axis=-1)
    return float(np.mean(np.argmin(dists, axis=1) == ds.eval_labels))
