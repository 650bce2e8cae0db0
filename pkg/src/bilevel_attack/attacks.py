"""Constraint projection and the iterative attackers built on it.

All attackers maximize a scalar objective of the perturbation. For an
untargeted attack that objective is the cross-entropy against the true
label; for a targeted attack it is the target logit itself (the model's
neg-target-logit loss enters with its sign flipped so that ascent drives
the prediction toward the target).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericalError
from .models import LOSS_CROSS_ENTROPY, LOSS_NEG_TARGET_LOGIT, FeedForwardModel

ATTACKER_KINDS = ("pgd", "mi-fgsm", "vmi-fgsm", "smooth-ga")


@dataclass(frozen=True)
class PerturbationConstraint:
    """L-infinity ball of radius epsilon, intersected with the valid input box."""

    epsilon: float
    clean: np.ndarray
    box_low: float = 0.0
    box_high: float = 1.0

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.box_low >= self.box_high:
            raise ConfigurationError("box_low must be below box_high")
        clean = np.asarray(self.clean, dtype=np.float64)
        object.__setattr__(self, "clean", clean)
        # Per-coordinate feasible interval in perturbation space: the
        # epsilon-clip followed by the box-clip collapses to one interval
        # because the clean point sits inside the box.
        object.__setattr__(self, "low", np.maximum(-self.epsilon, self.box_low - clean))
        object.__setattr__(self, "high", np.minimum(self.epsilon, self.box_high - clean))

    def contains(self, delta: np.ndarray) -> bool:
        return bool(np.all(delta >= self.low) and np.all(delta <= self.high))


def project(
    constraint: PerturbationConstraint, delta: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Clip to the epsilon-ball composed with the input box; returns (delta, mask).

    The mask is 1.0 where no clamp moved the coordinate and 0.0 where one
    did; it is the diagonal subgradient of the projection used in the
    reverse pass through unrolled dynamics.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != constraint.clean.shape:
        raise DimensionError(
            f"perturbation shape {delta.shape} does not match clean {constraint.clean.shape}"
        )
    projected = np.clip(delta, constraint.low, constraint.high)
    mask = ((delta >= constraint.low) & (delta <= constraint.high)).astype(np.float64)
    return projected, mask


@dataclass(frozen=True)
class AttackerSpec:
    """Choice and hyperparameters of an iterative attacker."""

    kind: str
    steps: int
    step_size: float
    momentum_decay: float = 1.0
    variance_samples: int = 20
    variance_bound: float = 1.5
    use_sign: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ATTACKER_KINDS:
            raise ConfigurationError(f"unknown attacker kind {self.kind!r}")
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.step_size <= 0:
            raise ConfigurationError("step_size must be positive")
        if self.momentum_decay < 0:
            raise ConfigurationError("momentum_decay must be >= 0")
        if self.variance_samples < 0:
            raise ConfigurationError("variance_samples must be >= 0")


class ModelAttackObjective:
    """Scalar objective of the perturbation, maximized by attacks.

    value(phi) = sign * loss(model, clean + phi, label), where sign is +1
    for cross-entropy and -1 for neg-target-logit (so the targeted
    objective is the target logit).
    """

    def __init__(
        self,
        model: FeedForwardModel,
        clean: np.ndarray,
        label: int,
        loss_kind: str = LOSS_CROSS_ENTROPY,
    ) -> None:
        self.model = model
        self.clean = np.asarray(clean, dtype=np.float64)
        self.label = int(label)
        self.loss_kind = loss_kind
        self.sign = 1.0 if loss_kind == LOSS_CROSS_ENTROPY else -1.0

    def value(self, phi: np.ndarray) -> float:
        return self.sign * self.model.loss(self.clean + phi, self.label, self.loss_kind)

    def grad(self, phi: np.ndarray) -> np.ndarray:
        return self.sign * self.model.grad_input(self.clean + phi, self.label, self.loss_kind)

    def hvp(self, phi: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.sign * self.model.hvp_input(self.clean + phi, self.label, self.loss_kind, v)


def objective_for_sample(
    model: FeedForwardModel,
    features: np.ndarray,
    label: int,
    targeted: bool,
    target_label: int | None = None,
) -> ModelAttackObjective:
    """Build the maximized objective for one sample in either attack mode."""
    if targeted:
        if target_label is None:
            target_label = (int(label) + 1) % model.num_classes
        return ModelAttackObjective(model, features, target_label, LOSS_NEG_TARGET_LOGIT)
    return ModelAttackObjective(model, features, label, LOSS_CROSS_ENTROPY)


def attack_step_pgd(
    objective,
    constraint: PerturbationConstraint,
    phi: np.ndarray,
    step_size: float,
    use_sign: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """One ascent step on the objective followed by projection."""
    g = objective.grad(phi)
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite attack gradient")
    direction = np.sign(g) if use_sign else g
    return project(constraint, phi + step_size * direction)


def attack_step_mifgsm(
    objective,
    constraint: PerturbationConstraint,
    phi: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    decay: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Momentum step: m <- decay*m + g/||g||_1, move along sign(m)."""
    g = objective.grad(phi)
    norm = np.sum(np.abs(g))
    momentum = decay * momentum + (g / norm if norm > 0 else 0.0)
    phi_new, _ = project(constraint, phi + step_size * np.sign(momentum))
    return phi_new, momentum


def attack_step_vmifgsm(
    objective,
    constraint: PerturbationConstraint,
    phi: np.ndarray,
    momentum: np.ndarray,
    variance: np.ndarray,
    step_size: float,
    decay: float,
    variance_samples: int,
    variance_bound: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Variance-tuned momentum step.

    The raw gradient is corrected by the running variance estimate before
    entering the momentum recursion; the new variance is the mean gradient
    over ``variance_samples`` uniform draws within ``variance_bound * eps``
    of the current point, minus the current gradient.
    """
    g = objective.grad(phi)
    g_hat = g + variance
    norm = np.sum(np.abs(g_hat))
    momentum = decay * momentum + (g_hat / norm if norm > 0 else 0.0)
    phi_new, _ = project(constraint, phi + step_size * np.sign(momentum))
    if variance_samples > 0:
        radius = variance_bound * constraint.epsilon
        total = np.zeros_like(g)
        for _ in range(variance_samples):
            offset = rng.uniform(-radius, radius, size=phi.shape)
            total += objective.grad(phi + offset)
        variance = total / variance_samples - g
    else:
        variance = np.zeros_like(g)
    return phi_new, momentum, variance


def run_attacker(
    spec: AttackerSpec,
    objective,
    constraint: PerturbationConstraint,
    delta_init: np.ndarray,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Apply ``spec.steps`` iterations of the chosen step from ``delta_init``."""
    phi = np.asarray(delta_init, dtype=np.float64).copy()
    if spec.kind == "vmi-fgsm" and rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    momentum = np.zeros_like(phi)
    variance = np.zeros_like(phi)
    for _ in range(spec.steps):
        if spec.kind == "pgd":
            phi, _ = attack_step_pgd(objective, constraint, phi, spec.step_size, spec.use_sign)
        elif spec.kind == "smooth-ga":
            phi, _ = attack_step_pgd(objective, constraint, phi, spec.step_size, use_sign=False)
        elif spec.kind == "mi-fgsm":
            phi, momentum = attack_step_mifgsm(
                objective, constraint, phi, momentum, spec.step_size, spec.momentum_decay
            )
        else:  # vmi-fgsm
            phi, momentum, variance = attack_step_vmifgsm(
                objective,
                constraint,
                phi,
                momentum,
                variance,
                spec.step_size,
                spec.momentum_decay,
                spec.variance_samples,
                spec.variance_bound,
                rng,
            )
    return phi
