"""Run configuration: dataclass, flat key-value file format, fingerprinting.

The config file is strict: one ``key = value`` pair per line, ``#`` comments,
unknown keys rejected. Every field of :class:`AttackConfig` has a key; the
nested attacker spec is flattened with a ``final_attacker_`` prefix.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

from .attacks import AttackerSpec
from .errors import ConfigurationError

EPS_UNTARGETED = 8.0 / 255.0
EPS_TARGETED = 16.0 / 255.0
BETA_UNTARGETED = 1.6 / 255.0
BETA_TARGETED = 16.0 / 255.0
ALPHA_DEFAULT = 2.0
LOWER_STEPS_DEFAULT = 10
UPPER_STEPS_UNTARGETED = 10
UPPER_STEPS_TARGETED = 300


def default_attacker(epsilon: float = EPS_UNTARGETED, steps: int = LOWER_STEPS_DEFAULT) -> AttackerSpec:
    """Baseline sign-step attacker with step size eps/steps * 2.5."""
    return AttackerSpec(kind="pgd", steps=steps, step_size=epsilon / steps * 2.5)


@dataclass
class AttackConfig:
    """Everything a full experiment run needs, all randomness via ``seed``."""

    dataset: str = ""
    models_dir: str = ""
    output: str = ""
    epsilon: float = EPS_UNTARGETED
    alpha: float = ALPHA_DEFAULT
    beta: float = BETA_UNTARGETED
    lower_steps: int = LOWER_STEPS_DEFAULT
    upper_steps: int = UPPER_STEPS_UNTARGETED
    dynamic_truncation: bool = True
    targeted: bool = False
    target_label: int | None = None
    final_attacker: AttackerSpec = field(default_factory=default_attacker)
    surrogate_id: str = "surrogate"
    pseudo_victim_ids: list[str] = field(default_factory=lambda: ["pseudo0", "pseudo1"])
    victim_ids: list[str] = field(
        default_factory=lambda: ["victim0", "victim1", "victim2", "victim3"]
    )
    seed: int = 0

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigurationError("alpha and beta must be positive")
        if self.lower_steps < 1:
            raise ConfigurationError("lower_steps must be >= 1")
        if self.upper_steps < 0:
            raise ConfigurationError("upper_steps must be >= 0")
        if self.targeted and self.target_label is not None and self.target_label < 0:
            raise ConfigurationError("target_label must be a class index")
        overlap = set(self.victim_ids) & (set(self.pseudo_victim_ids) | {self.surrogate_id})
        if overlap:
            raise ConfigurationError(
                f"victim models must stay black-box; {sorted(overlap)} also appear "
                "as surrogate or pseudo-victims"
            )
        # AttackerSpec validates itself on construction.


def targeted_defaults(**overrides) -> AttackConfig:
    cfg = AttackConfig(
        epsilon=EPS_TARGETED,
        beta=BETA_TARGETED,
        upper_steps=UPPER_STEPS_TARGETED,
        targeted=True,
        final_attacker=default_attacker(EPS_TARGETED),
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


# -- flat key-value serialization --------------------------------------------

_ATTACKER_PREFIX = "final_attacker_"
_LIST_KEYS = {"pseudo_victim_ids", "victim_ids"}
_BOOL_KEYS = {"dynamic_truncation", "targeted", _ATTACKER_PREFIX + "use_sign"}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, list):
        return ",".join(value)
    if value is None:
        return ""
    return str(value)


def config_to_text(cfg: AttackConfig) -> str:
    pairs: list[tuple[str, str]] = []
    for f in fields(AttackConfig):
        value = getattr(cfg, f.name)
        if f.name == "final_attacker":
            spec = value
            pairs.append((_ATTACKER_PREFIX + "kind", spec.kind))
            pairs.append((_ATTACKER_PREFIX + "steps", str(spec.steps)))
            pairs.append((_ATTACKER_PREFIX + "step_size", _format_value(spec.step_size)))
            pairs.append((_ATTACKER_PREFIX + "momentum_decay", _format_value(spec.momentum_decay)))
            pairs.append((_ATTACKER_PREFIX + "variance_samples", str(spec.variance_samples)))
            pairs.append((_ATTACKER_PREFIX + "variance_bound", _format_value(spec.variance_bound)))
            pairs.append((_ATTACKER_PREFIX + "use_sign", _format_value(spec.use_sign)))
        else:
            pairs.append((f.name, _format_value(value)))
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def _parse_bool(key: str, raw: str) -> bool:
    if raw in ("true", "1", "yes"):
        return True
    if raw in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")


def config_from_text(text: str) -> AttackConfig:
    scalar = {
        "dataset": str,
        "models_dir": str,
        "output": str,
        "epsilon": float,
        "alpha": float,
        "beta": float,
        "lower_steps": int,
        "upper_steps": int,
        "surrogate_id": str,
        "seed": int,
    }
    attacker_scalar = {
        "kind": str,
        "steps": int,
        "step_size": float,
        "momentum_decay": float,
        "variance_samples": int,
        "variance_bound": float,
    }
    values: dict[str, object] = {}
    attacker: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in values or (
            key.startswith(_ATTACKER_PREFIX) and key[len(_ATTACKER_PREFIX):] in attacker
        ):
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        if key in scalar:
            values[key] = scalar[key](raw)
        elif key in _LIST_KEYS:
            values[key] = [item for item in (s.strip() for s in raw.split(",")) if item]
        elif key == "target_label":
            values[key] = int(raw) if raw else None
        elif key in _BOOL_KEYS and not key.startswith(_ATTACKER_PREFIX):
            values[key] = _parse_bool(key, raw)
        elif key.startswith(_ATTACKER_PREFIX):
            sub = key[len(_ATTACKER_PREFIX):]
            if sub == "use_sign":
                attacker[sub] = _parse_bool(key, raw)
            elif sub in attacker_scalar:
                attacker[sub] = attacker_scalar[sub](raw)
            else:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        else:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
    cfg = AttackConfig()
    for key, value in values.items():
        setattr(cfg, key, value)
    if attacker:
        base = {
            "kind": cfg.final_attacker.kind,
            "steps": cfg.final_attacker.steps,
            "step_size": cfg.final_attacker.step_size,
            "momentum_decay": cfg.final_attacker.momentum_decay,
            "variance_samples": cfg.final_attacker.variance_samples,
            "variance_bound": cfg.final_attacker.variance_bound,
            "use_sign": cfg.final_attacker.use_sign,
        }
        base.update(attacker)
        cfg.final_attacker = AttackerSpec(**base)
    return cfg


def load_config(path) -> AttackConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def save_config(cfg: AttackConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))


def config_fingerprint(cfg: AttackConfig) -> str:
    """Stable digest of the canonical serialization, for provenance."""
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()
