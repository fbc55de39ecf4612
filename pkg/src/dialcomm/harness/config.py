"""Run configuration: flat ``key = value`` files with dotted section keys.

Example::

    trainer = dial
    env.kind = matrix
    env.n_agents = 3
    discretizer.kind = ST-DRU
    seeds = 1, 2, 3, 4, 5
    train_iterations = 10000

Any key can be overridden from the environment: ``DIALCOMM_ENV__N_AGENTS=5``
sets ``env.n_agents`` (the prefix is stripped, ``__`` becomes ``.``, and the
name is lower-cased). Overrides apply on top of the file, before validation.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from ..agents import Ablations
from ..coma import ComaConfig, LrGate
from ..dial import DialConfig
from ..discretizers import DiscretizerSpec
from ..envs import MatrixEnvConfig, ParticleEnvConfig
from ..envs.particle import Physics

ENV_PREFIX = "DIALCOMM_"
TRAINERS = ("dial", "coma_dial")


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    trainer: str = "dial"
    env: object = MatrixEnvConfig()
    discretizer: DiscretizerSpec = DiscretizerSpec()
    seeds: tuple = (1,)
    train_iterations: int = 1000
    eval_every: int = 100
    eval_episodes: int = 100
    param_sharing: bool = True
    ablations: Ablations = field(default_factory=Ablations)
    dial: DialConfig = DialConfig()
    coma: ComaConfig = ComaConfig()
    name: str = "run"
    out_dir: str = "reports"
    protocol_episodes: int = 1000
    checkpoint: bool = True

    def __post_init__(self):
        if self.trainer not in TRAINERS:
            raise ConfigError(f"trainer must be one of {TRAINERS}, got {self.trainer!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {list(self.seeds)}")
        if self.train_iterations < 1 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("train_iterations, eval_every and eval_episodes must be positive")
        if self.train_iterations % self.eval_every:
            raise ConfigError(
                f"eval_every ({self.eval_every}) must divide train_iterations ({self.train_iterations})"
            )

    @property
    def n_eval_rows(self) -> int:
        return self.train_iterations // self.eval_every

    @property
    def is_matrix(self) -> bool:
        return isinstance(self.env, MatrixEnvConfig)


def parse_text(text: str) -> dict:
    """``key = value`` lines to an ordered dict; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        key = key.lower()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX) and len(name) > len(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            if key in _IGNORED_ENV_KEYS:
                continue
            out[key] = value
    return out


# process-level switches that share the prefix but are not config keys
_IGNORED_ENV_KEYS = {"kernels", "no_ext"}


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _ints(value: str) -> tuple:
    v = value.strip()
    if ".." in v:
        lo, hi = v.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(p) for p in v.replace(",", " ").split())


def _coerce(value: str, like):
    if isinstance(like, bool):
        return _bool(value)
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        return _ints(value)
    return value


def _build(cls, values: dict, section: str, nested: dict | None = None):
    """Instantiate dataclass ``cls`` from string ``values``, typed after its defaults."""
    nested = nested or {}
    defaults = cls()
    kwargs = {}
    names = {f.name for f in dataclasses.fields(cls)}
    for key, raw in values.items():
        if key not in names or key in nested:
            raise ConfigError(f"unknown key {section}.{key}")
        kwargs[key] = _coerce(raw, getattr(defaults, key))
    kwargs.update(nested)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _split(flat: dict) -> tuple:
    top, sections = {}, {}
    for key, value in flat.items():
        if "." in key:
            head, rest = key.split(".", 1)
            sections.setdefault(head, {})[rest] = value
        else:
            top[key] = value
    return top, sections


def _env_config(values: dict):
    values = dict(values)
    kind = values.pop("kind", "matrix").lower()
    physics_keys = {k: values.pop(k) for k in list(values) if k.startswith("physics.")}
    if kind == "matrix":
        if physics_keys:
            raise ConfigError("physics keys only apply to particle environments")
        return _build(MatrixEnvConfig, values, "env")
    if kind == "particle":
        physics = _build(Physics, {k.split(".", 1)[1]: v for k, v in physics_keys.items()}, "env.physics")
        if "scenario" not in values:
            raise ConfigError("particle environments need env.scenario")
        scenario = values.pop("scenario")
        try:
            return ParticleEnvConfig(scenario=scenario, physics=physics,
                                     **{k: int(v) for k, v in values.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[env] {exc}") from exc
    raise ConfigError(f"env.kind must be 'matrix' or 'particle', got {kind!r}")


def build(flat: dict) -> RunConfig:
    top, sections = _split(flat)
    unknown = set(sections) - {"env", "discretizer", "ablations", "dial", "coma"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    env = _env_config(sections.get("env", {}))
    disc = _build(DiscretizerSpec, sections.get("discretizer", {}), "discretizer")
    abl = _build(Ablations, sections.get("ablations", {}), "ablations")
    dial = _build(DialConfig, sections.get("dial", {}), "dial")
    coma_vals = dict(sections.get("coma", {}))
    gate_vals = {k.split(".", 1)[1]: coma_vals.pop(k) for k in list(coma_vals) if k.startswith("gate.")}
    gate = _build(LrGate, gate_vals, "coma.gate")
    coma = _build(ComaConfig, coma_vals, "coma", nested={"gate": gate})

    defaults = RunConfig()
    kwargs = {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for key, raw in top.items():
        if key not in names or key in ("env", "discretizer", "ablations", "dial", "coma"):
            raise ConfigError(f"unknown key {key}")
        kwargs[key] = _coerce(raw, getattr(defaults, key))
    if "trainer" in kwargs:
        kwargs["trainer"] = kwargs["trainer"].lower().replace("-", "_")
    param_sharing = kwargs.get("param_sharing", defaults.param_sharing)
    dial = dataclasses.replace(dial, param_sharing=param_sharing)
    coma = dataclasses.replace(coma, param_sharing=param_sharing)
    return RunConfig(env=env, discretizer=disc, ablations=abl, dial=dial, coma=coma, **kwargs)


def load(path, environ=None) -> tuple:
    """Read ``path``, apply environment overrides, and return ``(RunConfig, raw_text)``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    flat = parse_text(text)
    flat.update(env_overrides(environ))
    return build(flat), text


def loads(text: str, environ: dict | None = None) -> RunConfig:
    flat = parse_text(text)
    flat.update(env_overrides(environ if environ is not None else {}))
    return build(flat)
