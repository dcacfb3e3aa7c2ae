"""Run configuration files.

A run is described by an INI-style text file with four sections whose keys
mirror the config dataclasses::

    [data]      # DataConfig fields (p, d, n_samples, latent, ...)
    [model]     # ModelConfig fields (m, activation, batch_norm, ...)
    [train]     # TrainConfig fields except `loss` (epochs, learning_rate, ...)
    [loss]      # LossSpec fields (kind, tau, weight_decay, ...)

Only [loss] kind is mandatory; everything else falls back to the dataclass
defaults. Values use `true`/`false` for flags and `none` for explicit
absence; `#` starts a comment. Parsing is strict: unknown sections or keys
raise, so typos fail loudly instead of silently running the default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .errors import ParameterError
from .losses import LossSpec
from .trainer import DataConfig, ModelConfig, TrainConfig

_OPT = "none"

# field -> coercion, per section. "opt_*" admits the `none` sentinel.
_DATA_FIELDS = {
    "p": "int", "d": "int", "n_samples": "int", "latent": "str",
    "sparsity": "float", "alpha": "float", "mask_scheme": "str",
    "noise_variance": "opt_float", "dictionary": "str",
    "reject_all_zero": "bool",
}
_MODEL_FIELDS = {
    "m": "int", "activation": "str", "srelu_bias": "float",
    "batch_norm": "bool", "predictor": "bool", "hidden": "opt_int",
    "bias_trainable": "bool",
}
_TRAIN_FIELDS = {
    "epochs": "int", "batch_size": "int", "learning_rate": "float",
    "weight_decay": "opt_float", "normalization_hook": "str",
    "output_normalize": "bool", "alternate_every": "int",
    "gradient_mode": "str", "init": "str", "warm_c": "float", "seed": "int",
}
_LOSS_FIELDS = {
    "kind": "str", "tau": "opt_float", "weight_decay": "opt_float",
    "neg_batch": "opt_int", "stop_gradient": "opt_bool", "similarity": "str",
}
_SECTIONS = {"data": _DATA_FIELDS, "model": _MODEL_FIELDS,
             "train": _TRAIN_FIELDS, "loss": _LOSS_FIELDS}

_TRUE = frozenset(("true", "yes", "on", "1"))
_FALSE = frozenset(("false", "no", "off", "0"))


@dataclass(frozen=True)
class RunSetup:
    """Everything one training run needs: dataset, architecture, schedule."""

    data: DataConfig
    model: ModelConfig
    train: TrainConfig


def _coerce(section: str, key: str, raw: str, kind: str):
    text = raw.strip()
    if kind.startswith("opt_"):
        if text.lower() == _OPT or text == "":
            return None
        kind = kind[4:]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ParameterError(
            f"[{section}] {key} = {raw!r} is not a valid {kind}") from None


def _section_kwargs(cp: configparser.ConfigParser, section: str) -> dict:
    fields = _SECTIONS[section]
    out = {}
    if not cp.has_section(section):
        return out
    for key, raw in cp.items(section):
        if key not in fields:
            raise ParameterError(f"unknown key {key!r} in [{section}] "
                                 f"(known: {', '.join(sorted(fields))})")
        out[key] = _coerce(section, key, raw, fields[key])
    return out


def parse_config_text(text: str) -> RunSetup:
    """Parse INI config text into a validated RunSetup."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                   interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParameterError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ParameterError(f"unknown config section [{section}] "
                                 f"(known: {', '.join(sorted(_SECTIONS))})")
    loss_kwargs = _section_kwargs(cp, "loss")
    if "kind" not in loss_kwargs:
        raise ParameterError("config needs a [loss] section with a `kind` key")
    loss = LossSpec(**loss_kwargs)
    data = DataConfig(**_section_kwargs(cp, "data"))
    model = ModelConfig(**_section_kwargs(cp, "model"))
    train = TrainConfig(loss=loss, **_section_kwargs(cp, "train"))
    return RunSetup(data=data, model=model, train=train)


def parse_config(path) -> RunSetup:
    """Read and parse a config file (see module docstring for the format)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _fmt(value) -> str:
    if value is None:
        return _OPT
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(setup: RunSetup) -> str:
    """Serialize a RunSetup to config text (round-trips through parse)."""
    lines = []
    loss = setup.train.loss
    blocks = (
        ("data", _DATA_FIELDS, setup.data),
        ("model", _MODEL_FIELDS, setup.model),
        ("train", _TRAIN_FIELDS, setup.train),
        ("loss", _LOSS_FIELDS, loss),
    )
    for section, fields, obj in blocks:
        lines.append(f"[{section}]")
        for key in fields:
            lines.append(f"{key} = {_fmt(getattr(obj, key))}")
        lines.append("")
    return "\n".join(lines)


def write_config(path, setup: RunSetup) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(setup))
