"""Experiment orchestration: model roster, audited runs, result files.

A run attacks every eval sample twice — once with the configured attacker
from the zero initialization (baseline) and once from the optimized
initialization — then scores both against every model. Held-out victims are
wrapped in query counters so the output can prove they were never asked for
gradients or Hessian-vector products during optimization.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import PerturbationConstraint, objective_for_sample, run_attacker
from .bilevel import AttackResult, run_bilevel_attack
from .config import AttackConfig, config_fingerprint, config_to_text
from .data import Dataset, load_dataset
from .evaluate import evaluate_atr
from .models import FeedForwardModel, TrainResult, train

METHOD_BASELINE = "baseline"
METHOD_OPTIMIZED = "optimized_init"


class CountingModel:
    """Transparent wrapper recording how often each query type was made."""

    def __init__(self, model: FeedForwardModel) -> None:
        self._model = model
        self.forward_queries = 0
        self.grad_queries = 0
        self.hvp_queries = 0

    # structure passthrough
    @property
    def model_id(self) -> str:
        return self._model.model_id

    @property
    def kind(self) -> str:
        return self._model.kind

    @property
    def input_dim(self) -> int:
        return self._model.input_dim

    @property
    def num_classes(self) -> int:
        return self._model.num_classes

    def logits(self, x):
        self.forward_queries += 1
        return self._model.logits(x)

    def logits_batch(self, xs):
        self.forward_queries += len(xs)
        return self._model.logits_batch(xs)

    def predict_batch(self, xs):
        self.forward_queries += len(xs)
        return self._model.predict_batch(xs)

    def loss(self, x, y, loss_kind="cross-entropy"):
        self.forward_queries += 1
        return self._model.loss(x, y, loss_kind)

    def grad_input(self, x, y, loss_kind="cross-entropy"):
        self.grad_queries += 1
        return self._model.grad_input(x, y, loss_kind)

    def hvp_input(self, x, y, loss_kind, v):
        self.hvp_queries += 1
        return self._model.hvp_input(x, y, loss_kind, v)


@dataclass(frozen=True)
class RosterEntry:
    model_id: str
    hidden: tuple[int, ...]
    activation: str
    role: str  # surrogate | pseudo-victim | victim
    subsample: float = 0.75
    epochs: int = 200


# The surrogate is deliberately the odd one out: a wide tanh net memorizing
# a small train subset, so its attack directions are idiosyncratic and
# transfer poorly on their own. Pseudo-victims come from the same family as
# the held-out victims, which is what makes their feedback informative.
REFERENCE_ROSTER: tuple[RosterEntry, ...] = (
    RosterEntry("surrogate", (64,), "tanh", "surrogate", subsample=0.10, epochs=600),
    RosterEntry("pseudo0", (32,), "softplus", "pseudo-victim"),
    RosterEntry("pseudo1", (48,), "softplus", "pseudo-victim"),
    RosterEntry("victim0", (24,), "softplus", "victim"),
    RosterEntry("victim1", (40,), "softplus", "victim"),
    RosterEntry("victim2", (), "tanh", "victim"),  # linear-softmax
    RosterEntry("victim3", (28,), "softplus", "victim"),
)


def train_roster(
    ds: Dataset,
    seed: int,
    roster: tuple[RosterEntry, ...] = REFERENCE_ROSTER,
    learning_rate: float = 1.0,
) -> dict[str, TrainResult]:
    """Train every roster model on its own train subset; deterministic per seed.

    Each model sees a different random ``subsample`` fraction of the train
    split so the roster disagrees about boundary placement the way
    independently trained models do; without this, every desk-scale model
    learns nearly the same boundary and transfer is trivially easy.
    """
    results: dict[str, TrainResult] = {}
    n_train = ds.train_features.shape[0]
    for i, entry in enumerate(roster):
        dims = [ds.dim, *entry.hidden, ds.num_classes]
        model = FeedForwardModel.random_init(
            dims,
            activation=entry.activation,
            seed=seed * 1000 + i,
            model_id=entry.model_id,
            input_shift=0.5,
        )
        picker = np.random.Generator(np.random.PCG64(seed * 1000 + 250 + i))
        n_keep = max(ds.num_classes, int(round(entry.subsample * n_train)))
        keep = picker.choice(n_train, size=n_keep, replace=False)
        results[entry.model_id] = train(
            model,
            ds.train_features[keep],
            ds.train_labels[keep],
            epochs=entry.epochs,
            learning_rate=learning_rate,
            seed=seed * 1000 + 500 + i,
        )
    return results


def save_models(models: dict[str, FeedForwardModel], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for model_id, model in models.items():
        model.save(out / f"{model_id}.npz")


def load_models(models_dir, model_ids: list[str]) -> dict[str, FeedForwardModel]:
    out: dict[str, FeedForwardModel] = {}
    for model_id in model_ids:
        path = Path(models_dir) / f"{model_id}.npz"
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint for model {model_id!r}: {path}")
        out[model_id] = FeedForwardModel.load(path)
        out[model_id].model_id = model_id
    return out


@dataclass
class ExperimentResult:
    config: AttackConfig
    atr: dict[str, dict[str, float]]  # method -> model_id -> rate
    mean_victim_atr: dict[str, float]
    sample_results: list[AttackResult]
    baseline_phis: np.ndarray
    optimized_phis: np.ndarray
    audit: dict[str, dict[str, int]]
    average_truncation: float
    hvp_total: int
    timing: dict[str, float] = field(default_factory=dict)
    output_files: list[str] = field(default_factory=list)


def _target_labels(cfg: AttackConfig, labels: np.ndarray, num_classes: int) -> np.ndarray | None:
    if not cfg.targeted:
        return None
    if cfg.target_label is not None:
        return np.full_like(labels, cfg.target_label)
    return (labels + 1) % num_classes


def _phi_table_text(phis: np.ndarray) -> str:
    dim = phis.shape[1]
    header = "sample_index," + ",".join(f"v{i}" for i in range(dim))
    lines = [header]
    for i, row in enumerate(phis):
        lines.append(str(i) + "," + ",".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def read_phi_table(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        rows.append([float(v) for v in parts[1:]])
    return np.asarray(rows, dtype=np.float64)


def run_experiment(cfg: AttackConfig, write_files: bool = True) -> ExperimentResult:
    cfg.validate()
    ds = load_dataset(cfg.dataset)
    all_ids = [cfg.surrogate_id, *cfg.pseudo_victim_ids, *cfg.victim_ids]
    raw_models = load_models(cfg.models_dir, all_ids)
    models = {mid: CountingModel(m) for mid, m in raw_models.items()}
    surrogate = models[cfg.surrogate_id]
    pseudo_victims = [models[mid] for mid in cfg.pseudo_victim_ids]

    start_total = time.monotonic()
    n_eval = ds.eval_features.shape[0]
    targets = _target_labels(cfg, ds.eval_labels, ds.num_classes)
    baseline_phis = np.zeros_like(ds.eval_features)
    optimized_phis = np.zeros_like(ds.eval_features)
    sample_results: list[AttackResult] = []
    for i in range(n_eval):
        features = ds.eval_features[i]
        label = int(ds.eval_labels[i])
        target = int(targets[i]) if targets is not None else None

        constraint = PerturbationConstraint(cfg.epsilon, features)
        objective = objective_for_sample(surrogate, features, label, cfg.targeted, target)
        rng_baseline = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((cfg.seed, i, 0)))
        )
        baseline_phis[i] = run_attacker(
            cfg.final_attacker,
            objective,
            constraint,
            np.zeros_like(features),
            rng=rng_baseline,
        )

        rng_final = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((cfg.seed, i, 0)))
        )
        result = run_bilevel_attack(
            cfg, surrogate, pseudo_victims, features, label, final_rng=rng_final
        )
        optimized_phis[i] = result.phi_final
        sample_results.append(result)
    attack_seconds = time.monotonic() - start_total

    # Black-box audit: victims must never see gradient or curvature queries.
    audit = {
        mid: {
            "forward": models[mid].forward_queries,
            "grad": models[mid].grad_queries,
            "hvp": models[mid].hvp_queries,
        }
        for mid in all_ids
    }
    for mid in cfg.victim_ids:
        if audit[mid]["grad"] or audit[mid]["hvp"] or audit[mid]["forward"]:
            raise RuntimeError(
                f"black-box violation: victim {mid} was queried during optimization"
            )

    atr: dict[str, dict[str, float]] = {METHOD_BASELINE: {}, METHOD_OPTIMIZED: {}}
    for mid in all_ids:
        model = models[mid]
        atr[METHOD_BASELINE][mid] = evaluate_atr(
            model, ds.eval_features, ds.eval_features + baseline_phis,
            ds.eval_labels, cfg.targeted, targets,
        )
        atr[METHOD_OPTIMIZED][mid] = evaluate_atr(
            model, ds.eval_features, ds.eval_features + optimized_phis,
            ds.eval_labels, cfg.targeted, targets,
        )
    mean_victim_atr = {
        method: float(np.mean([atr[method][mid] for mid in cfg.victim_ids]))
        for method in (METHOD_BASELINE, METHOD_OPTIMIZED)
    }

    ktilde_all = [k for r in sample_results for k in r.ktilde_trace]
    result = ExperimentResult(
        config=cfg,
        atr=atr,
        mean_victim_atr=mean_victim_atr,
        sample_results=sample_results,
        baseline_phis=baseline_phis,
        optimized_phis=optimized_phis,
        audit=audit,
        average_truncation=float(np.mean(ktilde_all)) if ktilde_all else 0.0,
        hvp_total=sum(r.hvp_count for r in sample_results),
        timing={
            "attack_seconds": attack_seconds,
            "reverse_pass_seconds": sum(r.wallclock_bp for r in sample_results),
        },
    )
    if write_files:
        _write_outputs(result, ds)
    return result


def _roles(cfg: AttackConfig) -> dict[str, str]:
    roles = {cfg.surrogate_id: "surrogate"}
    roles.update({mid: "pseudo-victim" for mid in cfg.pseudo_victim_ids})
    roles.update({mid: "victim" for mid in cfg.victim_ids})
    return roles


def results_table_text(result: ExperimentResult) -> str:
    cfg = result.config
    roles = _roles(cfg)
    ordered = [cfg.surrogate_id, *cfg.pseudo_victim_ids, *cfg.victim_ids]
    lines = ["method,model_id,role,atr"]
    for method in (METHOD_BASELINE, METHOD_OPTIMIZED):
        for mid in ordered:
            lines.append(f"{method},{mid},{roles[mid]},{format(result.atr[method][mid], '.17g')}")
    return "\n".join(lines) + "\n"


def run_metadata(result: ExperimentResult) -> dict:
    cfg = result.config
    return {
        "format": 1,
        "fingerprint": config_fingerprint(cfg),
        "config": config_to_text(cfg),
        "attack_success": result.atr,
        "mean_victim_atr": result.mean_victim_atr,
        "truncation": {
            "per_sample": [r.ktilde_trace for r in result.sample_results],
            "average": result.average_truncation,
            "max_steps": cfg.lower_steps,
        },
        "upper_trace": {"per_sample": [r.ul_trace for r in result.sample_results]},
        "hvp": {
            "total": result.hvp_total,
            "per_sample": [r.hvp_count for r in result.sample_results],
        },
        "audit": result.audit,
        "timing": result.timing,
    }


def _write_outputs(result: ExperimentResult, ds: Dataset) -> None:
    out = Path(result.config.output)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": results_table_text(result),
        "run_meta.json": json.dumps(run_metadata(result), sort_keys=True, indent=2) + "\n",
        "phi_baseline.csv": _phi_table_text(result.baseline_phis),
        "phi_optimized_init.csv": _phi_table_text(result.optimized_phis),
        "delta_optimized_init.csv": _phi_table_text(
            np.stack([r.delta_final for r in result.sample_results])
        ),
    }
    for name, text in files.items():
        path = out / name
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        result.output_files.append(str(path))
