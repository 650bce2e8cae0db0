"""Initialization optimization through unrolled attack dynamics.

The lower level runs sign-free projected gradient ascent on the surrogate
objective; the whole iterate sequence is recorded together with the
projection clip masks. The gradient of the upper objective with respect to
the initialization is then recovered by an explicit reverse recursion whose
only second-order ingredient is the surrogate's input Hessian-vector
product. Truncation picks the iterate with the largest upper value and
backpropagates only through the steps before it, which caps the number of
Hessian-vector products per outer step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import (
    AttackerSpec,
    ModelAttackObjective,
    PerturbationConstraint,
    objective_for_sample,
    project,
    run_attacker,
)
from .config import AttackConfig
from .errors import DataError, NumericalError
from .models import FeedForwardModel


class EnsembleTransferObjective:
    """Upper objective F(phi) = -(1/N) * sum_n objective_n(phi).

    Minimizing F maximizes the mean attack objective across the known
    stand-in victims; held-out victims never appear here.
    """

    def __init__(self, objectives: list[ModelAttackObjective]) -> None:
        if not objectives:
            raise DataError("at least one pseudo-victim objective is required")
        self.objectives = objectives

    @classmethod
    def for_sample(
        cls,
        models: list[FeedForwardModel],
        features: np.ndarray,
        label: int,
        targeted: bool = False,
        target_label: int | None = None,
    ) -> "EnsembleTransferObjective":
        return cls(
            [objective_for_sample(m, features, label, targeted, target_label) for m in models]
        )

    def value(self, phi: np.ndarray) -> float:
        return -float(np.mean([obj.value(phi) for obj in self.objectives]))

    def grad(self, phi: np.ndarray) -> np.ndarray:
        total = self.objectives[0].grad(phi).copy()
        for obj in self.objectives[1:]:
            total += obj.grad(phi)
        return -total / len(self.objectives)


@dataclass
class Trajectory:
    """Recorded unrolled sequence phi_0..phi_K with per-step clip masks.

    ``masks[k]`` belongs to the projection that produced ``phi[k+1]``;
    ``ul_values[k]`` is the upper objective at ``phi[k+1]``.
    """

    phi: list[np.ndarray]
    masks: list[np.ndarray]
    ul_values: list[float]
    ll_step_size: float

    @property
    def steps(self) -> int:
        return len(self.masks)


def unroll(
    lower,
    upper,
    constraint: PerturbationConstraint,
    delta: np.ndarray,
    steps: int,
    step_size: float,
) -> Trajectory:
    """Run ``steps`` smooth ascent steps on the lower objective from delta.

    Each step is phi + step_size * grad followed by projection; the upper
    objective is evaluated at every new iterate.
    """
    phi = np.asarray(delta, dtype=np.float64).copy()
    phis = [phi]
    masks: list[np.ndarray] = []
    ul_values: list[float] = []
    for k in range(steps):
        g = lower.grad(phi)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite lower-level gradient at unroll step {k}")
        phi, mask = project(constraint, phi + step_size * g)
        phis.append(phi)
        masks.append(mask)
        ul_values.append(upper.value(phi))
    return Trajectory(phi=phis, masks=masks, ul_values=ul_values, ll_step_size=step_size)


def select_truncation(traj: Trajectory) -> int:
    """Index in [1, K] of the first iterate attaining the max upper value."""
    if not traj.ul_values:
        raise DataError("trajectory has no recorded upper-objective values")
    return int(np.argmax(traj.ul_values)) + 1


def hypergradient(traj: Trajectory, lower, upper, k_sel: int) -> np.ndarray:
    """Gradient of F(phi_{k_sel}(delta)) with respect to delta.

    Reverse recursion: starting from the upper gradient at phi_{k_sel},
    each step applies the clip mask and the transposed step Jacobian
    (I + alpha * H) using the lower objective's Hessian-vector product.
    """
    if not 1 <= k_sel <= traj.steps:
        raise DataError(f"truncation index {k_sel} outside [1, {traj.steps}]")
    alpha = traj.ll_step_size
    g = upper.grad(traj.phi[k_sel])
    for k in range(k_sel - 1, -1, -1):
        g = traj.masks[k] * g
        g = g + alpha * lower.hvp(traj.phi[k], g)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite hypergradient at reverse step {k}")
    return g


@dataclass
class InitOptimization:
    """Outcome of the outer loop over the initialization variable."""

    delta: np.ndarray
    ul_trace: list[float] = field(default_factory=list)
    ktilde_trace: list[int] = field(default_factory=list)
    ul_values_per_step: list[list[float]] = field(default_factory=list)
    hvp_count: int = 0
    wallclock_bp: float = 0.0


def optimize_initialization(
    lower,
    upper,
    constraint: PerturbationConstraint,
    delta0: np.ndarray,
    lower_steps: int,
    upper_steps: int,
    alpha: float,
    beta: float,
    dynamic_truncation: bool = True,
    ul_use_sign: bool = True,
) -> InitOptimization:
    """Signed descent on the upper objective through the unrolled dynamics."""
    delta, _ = project(constraint, np.asarray(delta0, dtype=np.float64))
    result = InitOptimization(delta=delta)
    for _ in range(upper_steps):
        traj = unroll(lower, upper, constraint, result.delta, lower_steps, alpha)
        k_sel = select_truncation(traj) if dynamic_truncation else traj.steps
        start = time.monotonic()
        g = hypergradient(traj, lower, upper, k_sel)
        result.wallclock_bp += time.monotonic() - start
        result.hvp_count += k_sel
        result.ktilde_trace.append(k_sel)
        result.ul_values_per_step.append(list(traj.ul_values))
        result.ul_trace.append(traj.ul_values[k_sel - 1])
        step = np.sign(g) if ul_use_sign else g
        result.delta, _ = project(constraint, result.delta - beta * step)
    return result


@dataclass
class AttackResult:
    """Final perturbations plus everything needed to audit one run."""

    delta_final: np.ndarray
    phi_final: np.ndarray
    per_model_success: dict[str, bool] = field(default_factory=dict)
    ul_trace: list[float] = field(default_factory=list)
    ktilde_trace: list[int] = field(default_factory=list)
    ul_values_per_step: list[list[float]] = field(default_factory=list)
    hvp_count: int = 0
    wallclock_bp: float = 0.0


def _success(model: FeedForwardModel, x: np.ndarray, label: int, targeted: bool, target: int | None) -> bool:
    pred = int(np.argmax(model.logits(x)))
    if targeted:
        return pred == target
    return pred != int(label)


def run_bilevel_attack(
    cfg: AttackConfig,
    surrogate: FeedForwardModel,
    pseudo_victims: list[FeedForwardModel],
    features: np.ndarray,
    label: int,
    final_rng: np.random.Generator | None = None,
) -> AttackResult:
    """Full per-sample pipeline: optimize the initialization, then attack.

    The optimized initialization seeds the configured final attacker; the
    final perturbation is what gets evaluated against victims. With
    ``upper_steps = 0`` this reduces exactly to the final attacker run from
    the zero initialization.
    """
    features = np.asarray(features, dtype=np.float64)
    target = cfg.target_label
    if cfg.targeted and target is None:
        target = (int(label) + 1) % surrogate.num_classes
    constraint = PerturbationConstraint(cfg.epsilon, features)
    lower = objective_for_sample(surrogate, features, label, cfg.targeted, target)
    upper = EnsembleTransferObjective.for_sample(
        pseudo_victims, features, label, cfg.targeted, target
    )
    opt = optimize_initialization(
        lower,
        upper,
        constraint,
        np.zeros_like(features),
        cfg.lower_steps,
        cfg.upper_steps,
        cfg.alpha,
        cfg.beta,
        dynamic_truncation=cfg.dynamic_truncation,
    )
    phi_final = run_attacker(cfg.final_attacker, lower, constraint, opt.delta, rng=final_rng)
    result = AttackResult(
        delta_final=opt.delta,
        phi_final=phi_final,
        ul_trace=opt.ul_trace,
        ktilde_trace=opt.ktilde_trace,
        ul_values_per_step=opt.ul_values_per_step,
        hvp_count=opt.hvp_count,
        wallclock_bp=opt.wallclock_bp,
    )
    adv = features + phi_final
    models = [surrogate] + list(pseudo_victims)
    for i, model in enumerate(models):
        name = model.model_id or f"model{i}"
        result.per_model_success[name] = _success(model, adv, label, cfg.targeted, target)
    return result
