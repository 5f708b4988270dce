"""Experiment configuration: schema validation, built-in fixtures and object assembly."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources

import jsonschema
import numpy as np

from .base import BaseSystem
from .errors import ConfigError, UnknownFixture
from .matrix import MatrixCocycle
from .potential import (
    Potential,
    bernoulli_potential,
    geometric_potential,
    matrix_log_potential,
    table_potential,
    variation,
    zero_potential,
)
from .shift import BipCertificate, RandomShift, band_shift, full_shift, golden_mean, renewal_shift, search_bip

RUN_DEFAULTS = {
    "a": 0,
    "N": 1,
    "n_max": 40,
    "q": 5,
    "levels": 30,
    "depth": 2,
    "gibbs_n": 10,
    "exact_n": 60,
    "rank_one_n": 100,
    "backward_n": 200,
    "residual_tol": 1e-6,
    "agreement_tol": 1e-6,
    "pf_tol": 1e-12,
}

GM_MATRIX = [[1, 1], [1, 0]]
P2_MATRICES = [[[1, 1], [1, 0]], [[1, 1], [0, 1]]]
DS3_MATRICES = [
    [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]],
    [[0.1, 0.6, 0.3], [0.6, 0.3, 0.1], [0.3, 0.1, 0.6]],
]

_FIXTURES = {
    "FS2": {
        "base": {"mode": "cyclic", "period": 1},
        "shift": {"generator": "full", "k": 2},
        "potential": {"generator": "zero"},
        "certificate": {"I_bi": [0], "I_bp": [0]},
    },
    "GM": {
        "base": {"mode": "cyclic", "period": 1},
        "shift": {"generator": "golden"},
        "potential": {"generator": "zero"},
        "certificate": {"I_bi": [0], "I_bp": [0]},
    },
    "GEO": {
        "base": {"mode": "cyclic", "period": 1},
        "shift": {"generator": "full", "truncation": 20, "countable": True},
        "potential": {"generator": "geometric"},
        "certificate": {"I_bi": [0], "I_bp": [0]},
    },
    "P2": {
        "base": {"mode": "cyclic", "period": 2},
        "shift": {"generator": "matrices", "matrices": P2_MATRICES},
        "potential": {"generator": "zero"},
        "certificate": {"I_bi": [0, 1], "I_bp": [0]},
    },
    "DS3": {
        "base": {"mode": "cyclic", "period": 2},
        "shift": {"generator": "matrices", "matrices": [[[1] * 3] * 3] * 2},
        "potential": {"generator": "matrix-log", "matrices": DS3_MATRICES},
        "certificate": {"I_bi": [0], "I_bp": [0]},
        "matrix": {"matrices": DS3_MATRICES},
    },
    "NOBIP": {
        "base": {"mode": "cyclic", "period": 1},
        "shift": {"generator": "band", "k": 1, "truncation": 16},
        "potential": {"generator": "zero"},
        "certificate": {"I_bi": [0], "I_bp": [0]},
    },
}

FIXTURE_NAMES = tuple(_FIXTURES)


def load_schema() -> dict:
    text = resources.files("randtmc").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def validate(config: dict) -> dict:
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    return config


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def fixture(name: str, **overrides) -> dict:
    """Config of a built-in fixture, with top-level sections optionally merged in.

    ``fixture("FS2", potential={"generator": "bernoulli", "probs": [0.3, 0.7]})``
    gives the Bernoulli variant of the two-symbol full shift.
    """
    if name not in _FIXTURES:
        raise UnknownFixture(f"unknown fixture {name!r}; choose from {', '.join(FIXTURE_NAMES)}")
    cfg = deep_merge({"name": name, "seed": 0}, _FIXTURES[name])
    return validate(deep_merge(cfg, overrides))


def digest(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class Experiment:
    config: dict
    base: BaseSystem
    shift: RandomShift
    potential: Potential
    cert: BipCertificate | None
    cocycle: MatrixCocycle | None
    run: dict
    seed: int

    @property
    def name(self) -> str:
        return self.config.get("name", "custom")


def _build_base(spec: dict, seed: int) -> BaseSystem:
    if spec["mode"] == "cyclic":
        if "period" not in spec:
            raise ConfigError("cyclic base needs a period")
        return BaseSystem.cyclic(spec["period"])
    if "labels" in spec:
        return BaseSystem.sampled_path(spec["labels"])
    if "markov" in spec:
        m = spec["markov"]
        return BaseSystem.sample_markov_path(m["transition"], m["length"], seed, m.get("start", 0))
    raise ConfigError("sampled-path base needs labels or a markov block")


def _build_shift(spec: dict, base: BaseSystem) -> RandomShift:
    g = spec["generator"]
    L = spec.get("truncation")
    if g == "full":
        k = spec.get("k", L)
        if k is None:
            raise ConfigError("full shift needs k or a truncation level")
        return full_shift(base, k, countable=spec.get("countable", L is not None))
    if g == "golden":
        return golden_mean(base)
    if g in ("band", "renewal") and L is None:
        raise ConfigError(f"{g} generator needs a truncation level")
    if g == "band":
        return band_shift(base, spec.get("k", 1), L)
    if g == "renewal":
        return renewal_shift(base, L)
    mats = spec.get("matrices")
    if not mats:
        raise ConfigError("matrices generator needs matrices")
    labels = {base.label(w) for w in base.states}
    if max(labels) >= len(mats):
        raise ConfigError(f"environment label {max(labels)} has no adjacency matrix")
    return RandomShift.from_environments(base, [np.asarray(m) > 0 for m in mats])


def _per_state(base: BaseSystem, env_items: list, what: str) -> list:
    labels = [base.label(w) for w in base.states]
    if max(labels) >= len(env_items):
        raise ConfigError(f"environment label {max(labels)} has no {what}")
    return [env_items[l] for l in labels]


def _minimal_kappa(pot: Potential, shift: RandomShift) -> Potential:
    """Smallest per-state ``kappa >= 1`` with ``V_1 <= kappa r`` (all higher variations vanish)."""
    kappa = tuple(max(1.0, variation(pot, shift, w, 1) / pot.r) for w in shift.base.states)
    return replace(pot, kappa=kappa)


def _build_potential(spec: dict, shift: RandomShift) -> Potential:
    pot = _potential_from_spec(spec, shift)
    return pot if "kappa" in spec else _minimal_kappa(pot, shift)


def _potential_from_spec(spec: dict, shift: RandomShift) -> Potential:
    g = spec["generator"]
    kw = {"r": spec.get("r", 0.5)}
    kappa = spec.get("kappa", 1.0)
    if isinstance(kappa, list):
        kappa = tuple(_per_state(shift.base, kappa, "kappa"))
    kw["kappa"] = kappa
    if g == "zero":
        return zero_potential(shift, **kw)
    if g == "bernoulli":
        if "probs" not in spec:
            raise ConfigError("bernoulli potential needs probs")
        return bernoulli_potential(shift, spec["probs"], **kw)
    if g == "geometric":
        return geometric_potential(shift, **kw)
    if g == "matrix-log":
        if "matrices" not in spec:
            raise ConfigError("matrix-log potential needs matrices")
        return matrix_log_potential(shift, _per_state(shift.base, spec["matrices"], "matrix"), **kw)
    if "tables" not in spec or "depth" not in spec:
        raise ConfigError("tables potential needs tables and depth")
    tabs = [np.asarray(t, dtype=float) for t in _per_state(shift.base, spec["tables"], "table")]
    return table_potential(shift, tabs, spec["depth"], **kw)


def _build_cert(spec: dict | None, shift: RandomShift) -> BipCertificate | None:
    base = shift.base
    if spec is None:
        return search_bip(shift)
    for key in ("omega_bi", "omega_bp"):
        bad = [w for w in spec.get(key, []) if w >= base.n_states]
        if bad:
            raise ConfigError(f"{key} lists state {bad[0]} outside the base")
    width = max(shift.alphabet_size(w) for w in base.states)
    for key in ("I_bi", "I_bp"):
        bad = [a for a in spec[key] if a >= width]
        if bad:
            raise ConfigError(f"{key} lists symbol {bad[0]} outside every alphabet")
    return BipCertificate.uniform(base, spec["I_bi"], spec["I_bp"], spec.get("omega_bi"), spec.get("omega_bp"))


def build(config: dict) -> Experiment:
    validate(config)
    seed = config["seed"]
    base = _build_base(config["base"], seed)
    shift = _build_shift(config["shift"], base)
    pot = _build_potential(config["potential"], shift)
    cert = _build_cert(config.get("certificate"), shift)
    run = {**RUN_DEFAULTS, **config.get("run", {})}
    if not any(run["a"] < shift.alphabet_size(w) for w in base.states):
        raise ConfigError(f"symbol a={run['a']} is not in any alphabet")
    cocycle = None
    if "matrix" in config:
        cocycle = MatrixCocycle(base, tuple(_per_state(base, config["matrix"]["matrices"], "matrix")))
    return Experiment(config, base, shift, pot, cert, cocycle, run, seed)
