"""Defenders: fixed models and the stateful wrappers that sit in front of them.

Every defender answers ``respond(query, world, rng)``. Randomness always comes
from the ``rng`` argument, so a defender object holds only its own memory and
counters; the engine hands each role its own stream.
"""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass, field
from functools import lru_cache

from .core import ABSTAIN, REJECTED, Query, Response, ResponseKind
from .world import WorldModel

__all__ = [
    "UnknownPointError",
    "Defender",
    "FixedDeterministic",
    "FixedStochastic",
    "ConfidenceAbstain",
    "Memorization",
    "RateLimit",
    "DefenderSpec",
    "WrapperSpec",
    "BASE_KINDS",
    "WRAPPER_KINDS",
    "build_defender",
]


class UnknownPointError(LookupError):
    """Query names a point that does not exist in the world."""


@lru_cache(maxsize=None)
def _class_response(label: int) -> Response:
    return Response(ResponseKind.CLASS, label)


def _check_point(query: Query, world: WorldModel) -> int:
    pid = query.point_id
    if not 0 <= pid < len(world.points):
        raise UnknownPointError(f"point {pid} not in world of size {len(world.points)}")
    return pid


class Defender:
    kind = "defender"

    def respond(self, query: Query, world: WorldModel, rng: random.Random) -> Response:
        raise NotImplementedError

    def reset(self) -> "Defender":
        return self

    def clone_for_screening(self) -> "Defender":
        """Independent copy with the same parameters; state is never shared afterwards.

        The copy has no stream of its own: whoever drives it supplies a
        separate ``rng``.
        """
        return copy.deepcopy(self)

    def describe(self) -> str:
        return self.kind


class FixedDeterministic(Defender):
    """Argmax of the underlying profile. Uses no randomness."""

    kind = "fixed_deterministic"

    def respond(self, query, world, rng):
        return _class_response(world.argmax_labels[_check_point(query, world)])


class FixedStochastic(Defender):
    """Samples a class, or abstain, from the point's fixed profile."""

    kind = "fixed_stochastic"

    def respond(self, query, world, rng):
        label = world.points[_check_point(query, world)].profile.sample(rng.random())
        return ABSTAIN if label is None else _class_response(label)


class Wrapper(Defender):
    def __init__(self, inner: Defender):
        self.inner = inner

    def reset(self):
        self.inner.reset()
        return self

    def describe(self) -> str:
        return f"{self.kind}({self.inner.describe()})"


class ConfidenceAbstain(Wrapper):
    """Abstain whenever the model's top class probability is below ``threshold``."""

    kind = "confidence_abstain"

    def __init__(self, inner: Defender, threshold: float):
        super().__init__(inner)
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        self.threshold = threshold

    def respond(self, query, world, rng):
        pid = _check_point(query, world)
        if world.points[pid].profile.max_prob < self.threshold:
            return ABSTAIN
        return self.inner.respond(query, world, rng)


class Memorization(Wrapper):
    """Remember every point seen this episode and refuse to repeat an answer.

    ``mode="abstain"`` abstains on repeats; ``mode="uniform_random"`` answers a
    class drawn uniformly from all k. Matching is on exact point id.
    """

    kind = "memorization"
    MODES = ("abstain", "uniform_random")

    def __init__(self, inner: Defender, mode: str = "abstain"):
        super().__init__(inner)
        if mode not in self.MODES:
            raise ValueError(f"memorization mode must be one of {self.MODES}, got {mode!r}")
        self.mode = mode
        self.memory = set()

    def respond(self, query, world, rng):
        pid = _check_point(query, world)
        if pid in self.memory:
            if self.mode == "abstain":
                return ABSTAIN
            return _class_response(int(rng.random() * world.k))
        self.memory.add(pid)
        return self.inner.respond(query, world, rng)

    def reset(self):
        self.memory = set()
        return super().reset()


class RateLimit(Wrapper):
    """Serve at most ``budget`` queries per episode, reject the rest."""

    kind = "rate_limit"

    def __init__(self, inner: Defender, budget: int):
        super().__init__(inner)
        if budget < 0:
            raise ValueError("rate-limit budget must be non-negative")
        self.budget = budget
        self.queries_served = 0

    def respond(self, query, world, rng):
        _check_point(query, world)
        if self.queries_served >= self.budget:
            return REJECTED
        self.queries_served += 1
        return self.inner.respond(query, world, rng)

    def reset(self):
        self.queries_served = 0
        return super().reset()


BASE_KINDS = {
    "fixed_deterministic": FixedDeterministic,
    "fixed_stochastic": FixedStochastic,
}

# kind -> (class, {param: (type, required)})
WRAPPER_KINDS = {
    "confidence_abstain": (ConfidenceAbstain, {"threshold": (float, True)}),
    "memorization": (Memorization, {"mode": (str, False)}),
    "rate_limit": (RateLimit, {"budget": (int, True)}),
}


@dataclass(frozen=True)
class WrapperSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class DefenderSpec:
    """Base model plus wrappers, listed outermost first."""

    base: str = "fixed_deterministic"
    wrappers: tuple = ()

    def to_dict(self) -> dict:
        return {"base": self.base, "wrappers": [w.to_dict() for w in self.wrappers]}

    def build(self) -> Defender:
        return build_defender(self)


def build_defender(spec: DefenderSpec) -> Defender:
    try:
        defender = BASE_KINDS[spec.base]()
    except KeyError:
        raise ValueError(f"unknown defender base kind {spec.base!r}") from None
    for w in reversed(spec.wrappers):
        try:
            cls, _ = WRAPPER_KINDS[w.kind]
        except KeyError:
            raise ValueError(f"unknown defender wrapper kind {w.kind!r}") from None
        defender = cls(defender, **w.params)
    return defender
