"""Flat ``section.key=value`` configuration files.

Lines starting with ``#`` are comments. Lists are comma separated. Any key
can be overridden from the environment as ``CBOOT_<SECTION>__<KEY>``, e.g.
``CBOOT_CI__TRIALS=200`` overrides ``ci.trials``.
"""
from __future__ import annotations

import os

ENV_PREFIX = "CBOOT_"


class ConfigError(ValueError):
    pass


def _floats(s):
    return [float(v) for v in _strs(s)]


def _ints(s):
    return [int(v) for v in _strs(s)]


def _strs(s):
    return [v.strip() for v in str(s).split(",") if v.strip()]


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "auto", "none") else float(s)


def _opt_int(s):
    return None if str(s).strip().lower() in ("", "full", "none") else int(s)


_ENGINE = {
    "engine.steps": (int, 2000),
    "engine.M": (int, 1),
    "engine.gamma": (float, 0.0),
    "engine.lr": (_opt_float, None),
    "engine.refresh_freq": (int, 1),
    "engine.batch": (_opt_int, None),
    "engine.m_eval": (int, 1000),
    "engine.zero_win_policy": (str, "hold"),
}

SCHEMAS = {
    "ci": {
        "seed": (int, 0),
        "ci.alpha": (_floats, [0.9]),
        "ci.m": (_ints, [20, 50, 100, 200]),
        "ci.methods": (_strs, ["bootstrap", "bayesian", "residual", "centroid"]),
        "ci.kinds": (_strs, ["normal", "percentile", "pivotal"]),
        "ci.trials": (int, 1000),
        "ci.n": (int, 50),
        "ci.theta_true": (_floats, [1.0, -1.0, 1.0, -1.0]),
        "ci.coordinate": (int, 0),
        **_ENGINE,
    },
    "wasserstein": {
        "seed": (int, 0),
        "wass.m": (_ints, [20, 50, 100, 200]),
        "wass.ref_size": (int, 10_000),
        "wass.trials": (int, 50),
        "wass.n": (int, 50),
        "wass.theta_true": (_floats, [1.0, -1.0, 1.0, -1.0]),
        "wass.iid_source": (str, "fresh"),
        **_ENGINE,
    },
    "bandit": {
        "seed": (int, 0),
        "bandit.env": (str, "synthetic"),
        "bandit.m": (_ints, [3]),
        "bandit.gamma": (_strs, ["0.5/m"]),
        "bandit.strategies": (_strs, ["naive", "centroid"]),
        "bandit.seeds": (int, 20),
        "bandit.horizon": (int, 2000),
        "bandit.freq": (int, 50),
        "bandit.M": (int, 100),
        "bandit.train_iters": (int, 100),
        "bandit.batch": (int, 512),
        "bandit.lr": (float, 0.1),
        "bandit.context_dim": (int, 5),
        "bandit.num_actions": (int, 4),
        "bandit.noise": (float, 1.0),
        "bandit.env_seed": (int, 0),
    },
    "validate": {
        "seed": (int, 0),
        "validate.corrupt_h": (_bool, False),
    },
}

_CHOICES = {
    "ci.methods": {"bootstrap", "bayesian", "residual", "centroid"},
    "ci.kinds": {"normal", "percentile", "pivotal"},
    "bandit.strategies": {"naive", "centroid"},
    "wass.iid_source": {"fresh", "reference"},
    "engine.zero_win_policy": {"hold", "guard"},
}


def parse_text(text: str, source: str = "<config>") -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def env_overrides(schema: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in schema:
        name = ENV_PREFIX + key.replace(".", "__").upper()
        if name in environ:
            out[key] = environ[name]
    return out


def resolve(command: str, raw: dict | None = None, environ=None, **overrides) -> dict:
    """Typed config for ``command``; precedence: overrides > env > file > defaults."""
    schema = SCHEMAS[command]
    merged = dict(raw or {})
    for key in merged:
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for '{command}'")
    merged.update(env_overrides(schema, environ))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    cfg = {}
    for key, (conv, default) in schema.items():
        if key in merged:
            value = merged[key]
            try:
                value = conv(value) if isinstance(value, str) else value
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        else:
            value = list(default) if isinstance(default, list) else default
        allowed = _CHOICES.get(key)
        if allowed:
            bad = [v for v in (value if isinstance(value, list) else [value]) if v not in allowed]
            if bad:
                raise ConfigError(f"{key!r}: invalid choice(s) {bad}; allowed {sorted(allowed)}")
        cfg[key] = value
    return cfg


def load(command: str, path=None, environ=None, **overrides) -> dict:
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = parse_text(fh.read(), str(path))
    return resolve(command, raw, environ, **overrides)
