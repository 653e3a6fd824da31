"""Flat dotted-key experiment configuration.

A config file holds one ``key=value`` per line (``#`` starts a comment).
Values are layered: built-in defaults, then the file, then environment
variables ``AVCC_<KEY>`` (dots become double underscores, e.g.
``AVCC_SCHEME__N=12``), then command-line ``--key=value`` overrides.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

from .coding import CodingScheme, check_feasible
from .errors import ConfigError
from .field import PrimeField, QuantParams

ENV_PREFIX = "AVCC_"

MODES = ("avcc", "static_vcc", "uncoded")
TRANSPORTS = ("inproc", "socket")
ATTACKS = ("none", "constant", "reverse")
ADAPT_MODES = ("auto", "mds", "lagrange")

# key -> (type, default); "ints" is a comma-separated id list, "optint" may be empty
SCHEMA = {
    "scheme.N": ("int", 12),
    "scheme.K": ("int", 9),
    "scheme.S": ("int", 1),
    "scheme.M": ("int", 1),
    "scheme.T": ("int", 0),
    "scheme.deg_f": ("int", 1),
    "field.q": ("int", 33554393),
    "quant.l": ("int", 5),
    "quant.lx": ("int", 5),
    "mode": ("str", "avcc"),
    "transport": ("str", "inproc"),
    "transport.op_cost": ("float", 1e-9),
    "transport.realtime": ("bool", True),
    "transport.timeout": ("float", 60.0),
    "attack.kind": ("str", "none"),
    "attack.workers": ("ints", ()),
    "attack.value": ("int", 1),
    "attack.c": ("int", 1),
    "attack.start": ("int", 1),
    "attack.end": ("optint", None),
    "straggler.workers": ("ints", ()),
    "straggler.delay": ("float", 0.0),
    "straggler.multiplier": ("float", 0.0),
    "straggler.stochastic": ("bool", False),
    "straggler.start": ("int", 1),
    "straggler.end": ("optint", None),
    "straggler.timeout_multiplier": ("float", 5.0),
    "straggler.floor": ("float", 0.05),
    "adapt.mode": ("str", "auto"),
    "adapt.precompute": ("bool", False),
    "train.iterations": ("int", 50),
    "train.eta": ("float", 0.1),
    "verify.repeats": ("int", 1),
    "seed": ("int", 0),
    "data.path": ("str", ""),
    "data.header": ("bool", False),
    "data.test_fraction": ("float", 0.25),
    "data.m": ("int", 1200),
    "data.d": ("int", 50),
    "data.test_m": ("int", 400),
    "data.separation": ("float", 2.5),
    "output": ("str", "metrics.csv"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def env_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "__")


def parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(key, "unknown key")
    kind, _ = SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "optint":
            return int(raw) if raw and raw.lower() != "none" else None
        return raw
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def read_file(path) -> dict:
    """Parse a config file into ``{key: raw string}``."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}", f"expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        out[key.strip()] = raw
    return out


class ExperimentConfig:
    """Resolved configuration; index it by dotted key, e.g. ``cfg["scheme.N"]``."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise ConfigError(key, "unknown key")
            self.values[key] = parse_value(key, value) if isinstance(value, str) else value

    @classmethod
    def load(cls, path=None, env=None, overrides: dict | None = None) -> ExperimentConfig:
        env = os.environ if env is None else env
        raw = read_file(path) if path else {}
        for key in SCHEMA:
            if env_name(key) in env:
                raw[key] = env[env_name(key)]
        raw.update(overrides or {})
        cfg = cls({k: parse_value(k, str(v)) for k, v in raw.items()})
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def replace(self, **changes) -> ExperimentConfig:
        """Copy with keys changed; use double underscores for dots (``scheme__N=11``)."""
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in changes.items()})
        return ExperimentConfig(vals)

    def dumps(self) -> str:
        return "".join(f"{k}={format_value(v)}\n" for k, v in sorted(self.values.items()))

    def save(self, path):
        Path(path).write_text(self.dumps())

    @property
    def hash(self) -> str:
        """Digest of every setting except where the metrics are written."""
        text = "".join(line for line in self.dumps().splitlines(True) if not line.startswith("output="))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def scheme(self) -> CodingScheme:
        v = self.values
        return CodingScheme(v["scheme.N"], v["scheme.K"], v["scheme.S"], v["scheme.M"],
                            v["scheme.T"], v["scheme.deg_f"])

    def validate(self) -> ExperimentConfig:
        v = self.values
        for key, allowed in (("mode", MODES), ("transport", TRANSPORTS),
                             ("attack.kind", ATTACKS), ("adapt.mode", ADAPT_MODES)):
            if v[key] not in allowed:
                raise ConfigError(key, f"{v[key]!r} not one of {', '.join(allowed)}")
        try:
            scheme = self.scheme
        except ValueError as exc:
            raise ConfigError("scheme", str(exc)) from None
        if scheme.deg_f != 1:
            raise ConfigError("scheme.deg_f", "logistic regression rounds are linear; must be 1")
        report = check_feasible(scheme)
        if not report.feasible:
            raise ConfigError(
                "scheme", f"infeasible: N={scheme.N} < (K+T-1)*deg_f+S+M+1 = {report.bound}")
        q = v["field.q"]
        try:
            field = PrimeField(q)
        except ValueError as exc:
            raise ConfigError("field.q", str(exc)) from None
        for key in ("quant.l", "quant.lx"):
            try:
                QuantParams(v[key]).check(field)
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
        positive = ("train.iterations", "verify.repeats", "data.m", "data.d",
                    "train.eta", "transport.timeout", "straggler.timeout_multiplier")
        for key in positive:
            if v[key] <= 0:
                raise ConfigError(key, "must be positive")
        for key in ("transport.op_cost", "straggler.delay", "straggler.multiplier",
                    "straggler.floor", "data.test_m"):
            if v[key] < 0:
                raise ConfigError(key, "must be non-negative")
        if not 0 < v["data.test_fraction"] < 1:
            raise ConfigError("data.test_fraction", "must lie strictly between 0 and 1")
        if v["data.path"] and not Path(v["data.path"]).is_file():
            raise ConfigError("data.path", f"no such file: {v['data.path']}")
        n_workers = scheme.K if v["mode"] == "uncoded" else scheme.N
        for group in ("attack", "straggler"):
            ids = v[f"{group}.workers"]
            bad = [w for w in ids if not 0 <= w < n_workers]
            if bad:
                raise ConfigError(f"{group}.workers", f"ids {bad} outside 0..{n_workers - 1}")
            if len(set(ids)) != len(ids):
                raise ConfigError(f"{group}.workers", "duplicate worker id")
            end = v[f"{group}.end"]
            if end is not None and end < v[f"{group}.start"]:
                raise ConfigError(f"{group}.end", "ends before it starts")
        overlap = set(v["attack.workers"]) & set(v["straggler.workers"])
        if overlap:
            raise ConfigError("attack.workers", f"ids {sorted(overlap)} are also stragglers")
        if v["attack.workers"] and v["attack.kind"] == "none":
            raise ConfigError("attack.kind", "attack.workers set but attack.kind is none")
        return self
