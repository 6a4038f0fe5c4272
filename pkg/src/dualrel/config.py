"""Flat key=value config files for the generate and train commands.

Blank lines and lines starting with '#' are ignored; every other line must
be key=value with a key belonging to the target config; unknown keys are
rejected.
"""

from .datagen import GeneratorConfig
from .schedules import SCHEDULE_KINDS, ScheduleConfig
from .training import TrainConfig, default_schedule

_GENERATOR_FIELDS = {
    "num_object_classes": int,
    "num_head_predicates": int,
    "tails_per_head": int,
    "feature_dim": int,
    "zipf_exponent": float,
    "tail_offset_scale": float,
    "noise_scale": float,
    "label_noise": float,
    "pair_concentration": float,
    "num_train": int,
    "num_test": int,
    "relations_per_image": int,
    "seed": int,
}

_SCHEDULE_FIELDS = {
    "k1": int,
    "k2": int,
    "total_iterations": int,
    "beta1": float,
    "beta2": float,
    "head_threshold": int,
    "kind": str,
    "nu": float,
}

_TRAIN_FIELDS = {
    "tau": float,
    "mu": float,
    "beta_en": float,
    "learning_rate": float,
    "batch_size": int,
    "hidden_dim": int,
    "context_dim": int,
    "seed": int,
    "disable_curriculum": bool,
    "disable_context": bool,
    "disable_distillation": bool,
    "coarse_only": bool,
    "distill_after_k1": bool,
    "log_every": int,
    "eval_every": int,
}


def parse_kv_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {body!r}")
            key, _, value = body.partition("=")
            key, value = key.strip(), value.strip()
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return values


def _coerce(key, value, kind):
    if kind is bool:
        lowered = value.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"key {key!r}: expected a boolean, got {value!r}")
    if kind is str:
        if key == "kind" and value not in SCHEDULE_KINDS:
            raise ValueError(f"key {key!r}: unknown schedule kind {value!r}")
        return value
    try:
        return kind(value)
    except ValueError as exc:
        raise ValueError(f"key {key!r}: {exc}") from None


def generator_config_from(values):
    kwargs = {}
    for key, value in values.items():
        if key not in _GENERATOR_FIELDS:
            raise ValueError(f"unknown generator config key {key!r}")
        kwargs[key] = _coerce(key, value, _GENERATOR_FIELDS[key])
    return GeneratorConfig(**kwargs)


def train_config_from(values):
    schedule_kwargs, train_kwargs = {}, {}
    for key, value in values.items():
        if key in _SCHEDULE_FIELDS:
            schedule_kwargs[key] = _coerce(key, value, _SCHEDULE_FIELDS[key])
        elif key in _TRAIN_FIELDS:
            train_kwargs[key] = _coerce(key, value, _TRAIN_FIELDS[key])
        else:
            raise ValueError(f"unknown training config key {key!r}")
    if schedule_kwargs:
        defaults = default_schedule()
        merged = {
            name: schedule_kwargs.get(name, getattr(defaults, name))
            for name in _SCHEDULE_FIELDS
        }
        train_kwargs["schedule"] = ScheduleConfig(**merged)
    return TrainConfig(**train_kwargs)
