"""Flat key=value configuration files for systems and experiments.

One pair per line, '#' starts a comment, unknown and duplicate keys are
rejected with line numbers.  A file with a `kind` key describes an
experiment sweep; otherwise it describes a single system.
"""

import math
from dataclasses import dataclass, field

from .model import DEFAULT_SAMPLE_COUNT, SystemConfig, noise_variance_from_smnr

EXPERIMENT_KINDS = ("dcs-vs-rho", "d-vs-rho", "d-vs-rate")

_BASE_KEYS = {
    "n", "k", "m", "rho", "seed",
    "r1", "r2", "r_y", "n_train", "n_eval",
    "smnr_db", "sigma_w1_sq", "sigma_w2_sq",
}
_EXPERIMENT_KEYS = {"kind", "rho_grid", "m_list", "r_grid", "rho_list", "out"}


class ConfigError(ValueError):
    """Malformed configuration text; message carries the offending line."""


@dataclass
class ExperimentSpec:
    """A sweep description: base config, family/sweep value lists, output."""

    kind: str
    base: SystemConfig
    sweep: list            # ordered (variable, values) pairs; last is primary
    smnr_db: float | None  # kept so noise can be recomputed when M sweeps
    out: str = ""

    @property
    def family(self):
        return self.sweep[0] if len(self.sweep) > 1 else (None, [None])

    @property
    def primary(self):
        return self.sweep[-1]


def _read_pairs(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        if key in pairs:
            raise ConfigError(
                f"duplicate key {key!r} on line {lineno} (first on line {pairs[key][1]})"
            )
        pairs[key] = (value, lineno)
    return pairs


def _take(pairs, key, conv, default=None, required=False):
    if key not in pairs:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value, lineno = pairs.pop(key)
    try:
        return conv(value)
    except (ValueError, OverflowError) as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc


def _int(value):
    return int(value, 0)


def _float(value):
    v = float(value)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _float_list(value):
    items = [s for s in (p.strip() for p in value.split(",")) if s]
    if not items:
        raise ValueError("empty list")
    return [_float(s) for s in items]


def _int_list(value):
    items = [s for s in (p.strip() for p in value.split(",")) if s]
    if not items:
        raise ValueError("empty list")
    return [int(s, 0) for s in items]


def _build_base(pairs):
    n = _take(pairs, "n", _int, required=True)
    k = _take(pairs, "k", _int, required=True)
    m = _take(pairs, "m", _int, required=True)
    rho = _take(pairs, "rho", _float, required=True)
    seed = _take(pairs, "seed", _int, required=True)
    r1 = _take(pairs, "r1", _int, default=0)
    r2 = _take(pairs, "r2", _int, default=0)
    r_y = _take(pairs, "r_y", _int, default=3)
    n_train = _take(pairs, "n_train", _int, default=DEFAULT_SAMPLE_COUNT)
    n_eval = _take(pairs, "n_eval", _int, default=DEFAULT_SAMPLE_COUNT)

    smnr_db = _take(pairs, "smnr_db", _float)
    s1 = _take(pairs, "sigma_w1_sq", _float)
    s2 = _take(pairs, "sigma_w2_sq", _float)
    if smnr_db is not None and (s1 is not None or s2 is not None):
        raise ConfigError("give either smnr_db or sigma_w*_sq, not both")
    if (s1 is None) != (s2 is None):
        raise ConfigError("sigma_w1_sq and sigma_w2_sq must be given together")
    if s1 is not None:
        sigma = (s1, s2)
    elif smnr_db is not None:
        sw = noise_variance_from_smnr(k, m, smnr_db)
        sigma = (sw, sw)
    else:
        smnr_db = math.inf  # default: noiseless
        sigma = (0.0, 0.0)

    try:
        cfg = SystemConfig(
            n=n, k=k, m=m, rho=rho, sigma_w_sq=sigma, r1=r1, r2=r2, r_y=r_y,
            seed=seed, n_train=n_train, n_eval=n_eval,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, smnr_db


def parse_config(text):
    """Parse config text into a SystemConfig, or an ExperimentSpec when a
    `kind` key is present."""
    pairs = _read_pairs(text)
    if "kind" not in pairs:
        return _parse_system(pairs)
    return _parse_experiment(pairs)


def _reject_unknown(pairs, allowed):
    for key, (_, lineno) in pairs.items():
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")


def _parse_system(pairs):
    _reject_unknown(pairs, _BASE_KEYS)
    cfg, _ = _build_base(pairs)
    if pairs:
        key, (_, lineno) = next(iter(pairs.items()))
        raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return cfg


def _parse_experiment(pairs):
    _reject_unknown(pairs, _BASE_KEYS | _EXPERIMENT_KEYS)
    kind = _take(pairs, "kind", str, required=True)
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    out = _take(pairs, "out", str, default="")
    rho_grid = _take(pairs, "rho_grid", _float_list)
    m_list = _take(pairs, "m_list", _int_list)
    r_grid = _take(pairs, "r_grid", _int_list)
    rho_list = _take(pairs, "rho_list", _float_list)
    cfg, smnr_db = _build_base(pairs)
    if pairs:
        key, (_, lineno) = next(iter(pairs.items()))
        raise ConfigError(f"line {lineno}: unknown key {key!r}")

    if kind in ("dcs-vs-rho", "d-vs-rho"):
        if rho_grid is None:
            raise ConfigError(f"kind {kind} requires rho_grid")
        if r_grid is not None or rho_list is not None:
            raise ConfigError(f"kind {kind} takes rho_grid (and optional m_list) only")
        if any(v <= 0 for v in rho_grid):
            raise ConfigError("rho_grid values must be positive")
        family = m_list if m_list is not None else [cfg.m]
        for m in family:
            if not (cfg.k < m < cfg.n):
                raise ConfigError(f"m_list entry {m} violates K < M < N")
        sweep = [("m", family), ("rho", rho_grid)]
    else:  # d-vs-rate
        if r_grid is None:
            raise ConfigError("kind d-vs-rate requires r_grid")
        if rho_grid is not None or m_list is not None:
            raise ConfigError("kind d-vs-rate takes r_grid (and optional rho_list) only")
        if any(r < 0 for r in r_grid):
            raise ConfigError("r_grid values must be non-negative")
        family = rho_list if rho_list is not None else [cfg.rho]
        if any(v <= 0 for v in family):
            raise ConfigError("rho_list values must be positive")
        sweep = [("rho", family), ("r", r_grid)]

    return ExperimentSpec(kind=kind, base=cfg, sweep=sweep, smnr_db=smnr_db, out=out)


def load_config(path):
    # OSError propagates: unreadable files are I/O errors, not config errors
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text)
