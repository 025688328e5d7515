"""Flat ``key = value`` problem configuration.

One assignment per line, ``#`` starts a comment, keys are fixed.  Example::

    model = brownian
    mu = 0.5
    sigma = 0.75
    delta = 0.05
    q = 0.05
    r = 3
    beta = 0.05

Parse errors carry the offending line number; unknown keys and keys foreign to
the chosen model are rejected outright.  Command-line overrides replace file
values.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .models import BrownianMotion, CramerLundberg, ProblemSpec

_COMMON_KEYS = ("model", "delta", "q", "r", "beta")
_BROWNIAN_KEYS = ("mu", "sigma")
_CL_KEYS = ("p", "lambda", "mu_claim")
CONFIG_KEYS = _COMMON_KEYS + _BROWNIAN_KEYS + _CL_KEYS
MODEL_NAMES = ("brownian", "cramer_lundberg")


@dataclass(frozen=True)
class ConfigValue:
    """A raw value plus where it came from, for error messages."""

    text: str
    where: str


def parse_config_text(text: str, source: str = "config") -> dict[str, ConfigValue]:
    out: dict[str, ConfigValue] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"{source} line {lineno}"
        if not sep:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if key not in CONFIG_KEYS:
            raise ConfigError(
                f"{where}: unknown key {key!r}; known keys: {', '.join(CONFIG_KEYS)}"
            )
        if not value:
            raise ConfigError(f"{where}: empty value for {key!r}")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r} (first set at {out[key].where})")
        out[key] = ConfigValue(value, where)
    return out


def load_config_file(path: str) -> dict[str, ConfigValue]:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=path)


def apply_overrides(cfg: dict[str, ConfigValue], pairs: list[str]) -> dict[str, ConfigValue]:
    """Merge ``key=value`` strings (from --set) over the file values."""
    merged = dict(cfg)
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"override {pair!r} must look like key=value")
        if key not in CONFIG_KEYS:
            raise ConfigError(
                f"override {pair!r}: unknown key {key!r}; known keys: {', '.join(CONFIG_KEYS)}"
            )
        merged[key] = ConfigValue(value, f"override {pair!r}")
    return merged


def _number(cfg: dict[str, ConfigValue], key: str) -> float:
    entry = cfg[key]
    try:
        return float(entry.text)
    except ValueError:
        raise ConfigError(f"{entry.where}: {key} must be a number, got {entry.text!r}") from None


def _require(cfg: dict[str, ConfigValue], keys: tuple[str, ...], model_name: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"model {model_name!r} needs keys: {', '.join(missing)}")


def _forbid(cfg: dict[str, ConfigValue], keys: tuple[str, ...], model_name: str) -> None:
    for key in keys:
        if key in cfg:
            raise ConfigError(
                f"{cfg[key].where}: {key!r} is not a parameter of the {model_name} model"
            )


def build_problem_spec(cfg: dict[str, ConfigValue]) -> ProblemSpec:
    """Model dispatch plus numeric conversion; all errors are ConfigError."""
    if "model" not in cfg:
        raise ConfigError("config must set 'model' (brownian or cramer_lundberg)")
    name = cfg["model"].text.lower()
    if name not in MODEL_NAMES:
        raise ConfigError(
            f"{cfg['model'].where}: unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}"
        )
    _require(cfg, ("delta", "q", "r", "beta"), name)
    if name == "brownian":
        _require(cfg, _BROWNIAN_KEYS, name)
        _forbid(cfg, _CL_KEYS, name)
        model = BrownianMotion(mu=_number(cfg, "mu"), sigma=_number(cfg, "sigma"))
    else:
        _require(cfg, _CL_KEYS, name)
        _forbid(cfg, _BROWNIAN_KEYS, name)
        model = CramerLundberg(
            p=_number(cfg, "p"), lam=_number(cfg, "lambda"), mu_claim=_number(cfg, "mu_claim")
        )
    return ProblemSpec(
        model=model,
        delta=_number(cfg, "delta"),
        q=_number(cfg, "q"),
        r=_number(cfg, "r"),
        beta=_number(cfg, "beta"),
    )
