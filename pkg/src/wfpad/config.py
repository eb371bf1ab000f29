"""Line-oriented ``key = value`` configuration and the defense registry."""
from __future__ import annotations

import base64
import hashlib
import secrets as _secrets
from dataclasses import dataclass, field
from typing import Optional

from .front import FrontConfig, FrontMachine
from .kernel import DefenseMachine, KernelConfig, NoDefense, Side
from .randomwt import RandomWtConfig, RandomWtMachine
from .tamaraw import TamarawConfig, TamarawMachine


class ConfigError(ValueError):
    pass


#: Wire id of each defense, as sent in the handshake.
DEFENSE_IDS = {"none": 0, "tamaraw": 1, "front": 2, "randomwt": 3}

_CONFIG_TYPES = {"tamaraw": TamarawConfig, "front": FrontConfig, "randomwt": RandomWtConfig}
_MACHINES = {"none": NoDefense, "tamaraw": TamarawMachine, "front": FrontMachine,
             "randomwt": RandomWtMachine}

_KERNEL_KEYS = {
    "kernel.window_s": ("window", float),
    "kernel.start_threshold": ("start_threshold", int),
    "kernel.stop_threshold": ("stop_threshold", int),
    "kernel.tick_ms": ("tick_interval", float),
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def kernel_params(kernel: KernelConfig) -> dict:
    return {
        "kernel.window_s": kernel.window,
        "kernel.start_threshold": kernel.start_threshold,
        "kernel.stop_threshold": kernel.stop_threshold,
        "kernel.tick_ms": kernel.tick_interval * 1000,
    }


def kernel_from_params(params: dict) -> KernelConfig:
    kwargs = {}
    for key, (name, cast) in _KERNEL_KEYS.items():
        if key in params:
            value = cast(params[key])
            kwargs[name] = value / 1000 if key == "kernel.tick_ms" else value
    return KernelConfig(**kwargs)


@dataclass(frozen=True)
class DefenseSpec:
    """A defense id plus its parameters and the shared kernel settings."""
    name: str = "none"
    config: object = None
    kernel: KernelConfig = field(default_factory=KernelConfig)

    def __post_init__(self):
        if self.name not in DEFENSE_IDS:
            raise ConfigError(f"unknown defense {self.name!r}")
        if self.config is None and self.name in _CONFIG_TYPES:
            object.__setattr__(self, "config", _CONFIG_TYPES[self.name]())

    @property
    def defense_id(self) -> int:
        return DEFENSE_IDS[self.name]

    def params(self) -> dict:
        params = kernel_params(self.kernel)
        if self.config is not None:
            params.update(self.config.to_params())
        return params

    def param_block(self) -> bytes:
        lines = [f"defense = {self.name}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in sorted(self.params().items())]
        return ("\n".join(lines) + "\n").encode()

    def param_hash(self) -> bytes:
        return hashlib.sha256(self.param_block()).digest()

    def make_machine(self, side: Side, rng=None) -> DefenseMachine:
        cls = _MACHINES[self.name]
        if self.name == "none":
            return cls(side, self.kernel, rng)
        return cls(side, self.config, kernel=self.kernel, rng=rng)

    @classmethod
    def from_params(cls, name: str, params: dict) -> "DefenseSpec":
        if name not in DEFENSE_IDS:
            raise ConfigError(f"unknown defense {name!r}")
        try:
            kernel = kernel_from_params(params)
            config = _CONFIG_TYPES[name].from_params(params) if name in _CONFIG_TYPES else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(name, config, kernel)


@dataclass(frozen=True)
class BridgeConfig:
    defense: DefenseSpec
    secret: bytes
    listen: Optional[str] = None
    multiplex: bool = False

    def __post_init__(self):
        if len(self.secret) != 32:
            raise ConfigError("secret must be 32 bytes")


def parse_kv(text: str) -> dict:
    params = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        params[key.strip()] = value.strip()
    return params


def parse_config(text: str) -> BridgeConfig:
    params = parse_kv(text)
    name = params.pop("defense", "none")
    secret_text = params.pop("secret", None)
    if secret_text is None:
        raise ConfigError("missing 'secret'")
    try:
        secret = base64.b64decode(secret_text, validate=True)
    except ValueError:
        raise ConfigError("secret is not valid base64") from None
    listen = params.pop("listen", None)
    multiplex = params.pop("multiplex", "false").lower() in ("1", "true", "yes")
    return BridgeConfig(DefenseSpec.from_params(name, params), secret, listen, multiplex)


def load_config(path) -> BridgeConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def format_config(config: BridgeConfig) -> str:
    lines = [
        f"defense = {config.defense.name}",
        f"secret = {base64.b64encode(config.secret).decode()}",
    ]
    if config.listen:
        lines.append(f"listen = {config.listen}")
    if config.multiplex:
        lines.append("multiplex = true")
    lines += [f"{k} = {_fmt(v)}" for k, v in sorted(config.defense.params().items())]
    return "\n".join(lines) + "\n"


def generate_config(defense: str, secret: Optional[bytes] = None,
                    listen: Optional[str] = None) -> BridgeConfig:
    """Default config for ``defense`` with a fresh random secret."""
    if secret is None:
        secret = _secrets.token_bytes(32)
    return BridgeConfig(DefenseSpec(defense), secret, listen)
