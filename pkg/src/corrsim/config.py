"""Scenario configuration and its JSON file format.

Unknown keys are errors, and every error message names the offending key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .attackers import ATTACKER_KINDS, AttackerSpec
from .core import SeedSpec
from .defenders import BASE_KINDS, WRAPPER_KINDS, DefenderSpec, WrapperSpec
from .world import StochasticProfiles, Stratum, WorldModel, build_world

__all__ = ["ConfigError", "WorldSpec", "ScenarioConfig", "load_scenario", "parse_scenario"]


class ConfigError(ValueError):
    """Invalid scenario; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class WorldSpec:
    k: int = 10
    n: int = 10000
    r: float = 0.02
    profile: Union[str, StochasticProfiles] = "deterministic"
    duplicate_rate: float = 0.0
    fresh_per_episode: bool = False

    def build(self, seed: SeedSpec, episode: Optional[int] = None) -> WorldModel:
        rng = seed.stream("world", episode if self.fresh_per_episode else None)
        return build_world(self.k, self.n, self.r, self.profile, self.duplicate_rate, rng)

    def to_dict(self) -> dict:
        if isinstance(self.profile, StochasticProfiles):
            profile = {
                "strata": [
                    {
                        "fraction": s.fraction,
                        "true_prob": s.true_prob,
                        "wrong_probs": list(s.wrong_probs),
                        "abstain_prob": s.abstain_prob,
                    }
                    for s in self.profile.strata
                ]
            }
        else:
            profile = self.profile
        return {
            "k": self.k,
            "n": self.n,
            "r": self.r,
            "profile": profile,
            "duplicate_rate": self.duplicate_rate,
            "fresh_per_episode": self.fresh_per_episode,
        }


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldSpec = field(default_factory=WorldSpec)
    defender: DefenderSpec = field(default_factory=DefenderSpec)
    attacker: AttackerSpec = field(default_factory=AttackerSpec)
    m_test: int = 10000
    episodes: int = 1
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0))
    tail_window: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        w = self.world
        if w.k < 2:
            raise ConfigError("world.k", "must be at least 2")
        if w.n < 1:
            raise ConfigError("world.n", "must be at least 1")
        if not 0.0 <= w.r <= 1.0:
            raise ConfigError("world.r", "must be in [0, 1]")
        if not 0.0 <= w.duplicate_rate < 1.0:
            raise ConfigError("world.duplicate_rate", "must be in [0, 1)")
        if self.m_test < 1:
            raise ConfigError("m_test", "must be at least 1")
        if self.episodes < 1:
            raise ConfigError("episodes", "must be at least 1")
        if self.tail_window is not None and not 1 <= self.tail_window <= self.m_test:
            raise ConfigError("tail_window", "must be in [1, m_test]")
        if self.defender.base not in BASE_KINDS:
            raise ConfigError("defender.base", f"unknown defender kind {self.defender.base!r}")
        for i, wr in enumerate(self.defender.wrappers):
            if wr.kind not in WRAPPER_KINDS:
                raise ConfigError(f"defender.wrappers[{i}].kind", f"unknown wrapper kind {wr.kind!r}")
        a = self.attacker
        if a.kind not in ATTACKER_KINDS:
            raise ConfigError("attacker.kind", f"unknown attacker kind {a.kind!r}")
        if a.target is not None and not 0 <= a.target < w.k:
            raise ConfigError("attacker.target", f"must be in [0, {w.k})")
        if a.screen_budget < 0:
            raise ConfigError("attacker.screen_budget", "must be non-negative")
        if a.exploration < 0:
            raise ConfigError("attacker.exploration", "must be non-negative")

    def with_overrides(self, seed: Optional[int] = None, episodes: Optional[int] = None) -> "ScenarioConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=SeedSpec(seed))
        if episodes is not None:
            cfg = replace(cfg, episodes=episodes)
        return cfg

    def to_dict(self) -> dict:
        d = {
            "world": self.world.to_dict(),
            "defender": self.defender.to_dict(),
            "attacker": self.attacker.to_dict(),
            "m_test": self.m_test,
            "episodes": self.episodes,
            "seed": self.seed.master_seed,
        }
        if self.tail_window is not None:
            d["tail_window"] = self.tail_window
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_keys(obj: Any, allowed: set, where: str) -> Mapping:
    if not isinstance(obj, Mapping):
        raise ConfigError(where or "<root>", "expected an object")
    for key in obj:
        if key not in allowed:
            path = f"{where}.{key}" if where else key
            raise ConfigError(path, "unknown key")
    return obj


def _get(obj: Mapping, key: str, where: str, kind, default=None, required=False):
    path = f"{where}.{key}" if where else key
    if key not in obj:
        if required:
            raise ConfigError(path, "missing required key")
        return default
    value = obj[key]
    if value is None and not required:
        return default
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        value = float(value)
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
    return value


def _parse_profile(raw, where: str):
    if isinstance(raw, str):
        if raw != "deterministic":
            raise ConfigError(where, f"unknown profile kind {raw!r}")
        return raw
    _check_keys(raw, {"strata"}, where)
    strata_raw = _get(raw, "strata", where, list, required=True)
    if not isinstance(strata_raw, list) or not strata_raw:
        raise ConfigError(f"{where}.strata", "expected a non-empty list")
    strata = []
    for i, s in enumerate(strata_raw):
        sw = f"{where}.strata[{i}]"
        _check_keys(s, {"fraction", "true_prob", "wrong_probs", "abstain_prob"}, sw)
        wrong = s.get("wrong_probs", [])
        if not isinstance(wrong, list):
            raise ConfigError(f"{sw}.wrong_probs", "expected a list of numbers")
        try:
            strata.append(
                Stratum(
                    fraction=_get(s, "fraction", sw, float, required=True),
                    true_prob=_get(s, "true_prob", sw, float, required=True),
                    wrong_probs=tuple(wrong),
                    abstain_prob=_get(s, "abstain_prob", sw, float, 0.0),
                )
            )
        except ValueError as exc:
            raise ConfigError(sw, str(exc)) from None
    try:
        return StochasticProfiles(tuple(strata))
    except ValueError as exc:
        raise ConfigError(f"{where}.strata", str(exc)) from None


def parse_scenario(raw: Mapping) -> ScenarioConfig:
    _check_keys(raw, {"world", "defender", "attacker", "m_test", "episodes", "seed", "tail_window"}, "")

    w = _check_keys(raw.get("world", {}), {"k", "n", "r", "profile", "duplicate_rate", "fresh_per_episode"}, "world")
    world = WorldSpec(
        k=_get(w, "k", "world", int, 10),
        n=_get(w, "n", "world", int, 10000),
        r=_get(w, "r", "world", float, 0.0),
        profile=_parse_profile(w.get("profile", "deterministic"), "world.profile"),
        duplicate_rate=_get(w, "duplicate_rate", "world", float, 0.0),
        fresh_per_episode=_get(w, "fresh_per_episode", "world", bool, False),
    )

    d = _check_keys(raw.get("defender", {}), {"base", "wrappers"}, "defender")
    base = _get(d, "base", "defender", str, "fixed_deterministic")
    if base not in BASE_KINDS:
        raise ConfigError("defender.base", f"unknown defender kind {base!r}")
    wrappers = []
    wl = d.get("wrappers", [])
    if not isinstance(wl, list):
        raise ConfigError("defender.wrappers", "expected a list")
    for i, wr in enumerate(wl):
        ww = f"defender.wrappers[{i}]"
        if not isinstance(wr, Mapping):
            raise ConfigError(ww, "expected an object")
        kind = _get(wr, "kind", ww, str, required=True)
        if kind not in WRAPPER_KINDS:
            raise ConfigError(f"{ww}.kind", f"unknown wrapper kind {kind!r}")
        cls, params = WRAPPER_KINDS[kind]
        _check_keys(wr, {"kind", *params}, ww)
        values = {}
        for name, (ptype, required) in params.items():
            if name in wr or required:
                values[name] = _get(wr, name, ww, ptype, required=required)
        try:
            cls(BASE_KINDS[base](), **values)
        except ValueError as exc:
            raise ConfigError(ww, str(exc)) from None
        wrappers.append(WrapperSpec(kind, values))

    a = _check_keys(raw.get("attacker", {}), {"kind", "target", "exploration", "screen_budget"}, "attacker")
    kind = _get(a, "kind", "attacker", str, "test_set")
    if kind not in ATTACKER_KINDS:
        raise ConfigError("attacker.kind", f"unknown attacker kind {kind!r}")
    attacker = AttackerSpec(
        kind=kind,
        target=_get(a, "target", "attacker", int, None),
        exploration=_get(a, "exploration", "attacker", float, 1.0),
        screen_budget=_get(a, "screen_budget", "attacker", int, 0),
    )

    seed = _get(raw, "seed", "", int, 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    return ScenarioConfig(
        world=world,
        defender=DefenderSpec(base, tuple(wrappers)),
        attacker=attacker,
        m_test=_get(raw, "m_test", "", int, 10000),
        episodes=_get(raw, "episodes", "", int, 1),
        seed=SeedSpec(seed),
        tail_window=_get(raw, "tail_window", "", int, None),
    )


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read scenario file {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc}") from None
    return parse_scenario(raw)
