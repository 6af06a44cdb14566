"""Run configuration: a flat key/value text format with dotted sections.

Grammar, line by line:

    # comment                (also blank lines)
    key = value              (whitespace around both is ignored)
    section.key = value      (dots namespace keys; only "llm." exists)

Values are typed by the target key; booleans are the words true/false.
Unknown keys are rejected.  Defaults: s_steps 10, t_steps 50, eta 0.95,
kappa 5, canvas 32, shared noise on, toy model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import TypeMismatch, UnknownKey
from .pipeline import StitchConfig
from .providers import DEFAULT_API_KEY_ENV


@dataclass(frozen=True)
class LLMSettings:
    base_url: str = ""
    model: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV


@dataclass(frozen=True)
class AppConfig:
    stitch: StitchConfig = field(default_factory=StitchConfig)
    model: str = "toy"
    llm: LLMSettings = field(default_factory=LLMSettings)


_INT_KEYS = {"s_steps", "t_steps", "kappa", "canvas", "cutout_block", "cutout_head", "seed"}
_FLOAT_KEYS = {"eta"}
_BOOL_KEYS = {"shared_noise", "restrict_to_box"}
_STR_KEYS = {"model", "llm.base_url", "llm.model", "llm.api_key_env"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if not raw:
        raise TypeMismatch(f"{key}: empty value")
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise TypeMismatch(f"{key}: expected a boolean, got {raw!r}")
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise TypeMismatch(f"{key}: expected {kind}, got {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise TypeMismatch(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise UnknownKey(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, value)
    return values


def config_from_values(values: dict) -> AppConfig:
    stitch_kwargs = {
        k: v for k, v in values.items() if k not in _STR_KEYS
    }
    try:
        stitch = StitchConfig(**stitch_kwargs)
    except ValueError as exc:
        raise TypeMismatch(str(exc)) from None
    llm = LLMSettings(
        base_url=values.get("llm.base_url", ""),
        model=values.get("llm.model", ""),
        api_key_env=values.get("llm.api_key_env", DEFAULT_API_KEY_ENV) or DEFAULT_API_KEY_ENV,
    )
    return AppConfig(stitch=stitch, model=values.get("model", "toy"), llm=llm)


def load_config(path=None) -> AppConfig:
    """Parse a config file; None or an empty file yields all defaults."""
    if path is None:
        return AppConfig()
    text = Path(path).read_text(encoding="utf-8")
    return config_from_values(parse_config_text(text))
