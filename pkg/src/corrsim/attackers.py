"""Query policies: natural users and the test-set attack family."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import Origin, Query, Response, ResponseKind
from .defenders import Defender
from .world import WorldModel, natural_draw

__all__ = [
    "Feedback",
    "FeedbackOrderError",
    "Attacker",
    "NaturalUser",
    "TestSetAttacker",
    "RateTrackingAttacker",
    "WhiteBoxScreening",
    "AttackerSpec",
    "ATTACKER_KINDS",
]


class Feedback(NamedTuple):
    query: Query
    response: Response
    true_label: int
    was_error: bool
    was_targeted_hit: bool


class FeedbackOrderError(RuntimeError):
    """Feedback does not answer the attacker's outstanding query."""


def is_target_hit(response: Response, target: Optional[int], true_label: int) -> bool:
    """True when the response misclassifies the input as ``target``."""
    return (
        target is not None
        and response.kind is ResponseKind.CLASS
        and response.label == target
        and target != true_label
    )


class Attacker:
    kind = "attacker"

    def __init__(self, target: Optional[int] = None):
        self.target = target
        self._pending: Optional[Query] = None

    def next_query(self, world: WorldModel, rng: random.Random) -> Query:
        q = self._choose(world, rng)
        self._pending = q
        return q

    def observe(self, feedback: Feedback) -> "Attacker":
        if self._pending is None or feedback.query != self._pending:
            raise FeedbackOrderError(
                f"feedback for {feedback.query} does not match outstanding query {self._pending}"
            )
        self._pending = None
        self._update(feedback)
        return self

    def reset(self) -> "Attacker":
        self._pending = None
        return self

    def _choose(self, world, rng) -> Query:
        raise NotImplementedError

    def _update(self, feedback: Feedback) -> None:
        pass

    def _succeeded(self, feedback: Feedback) -> bool:
        if self.target is None:
            return feedback.was_error
        return feedback.was_targeted_hit


class NaturalUser(Attacker):
    """Benign traffic: natural draws, including natural duplicates."""

    kind = "natural_user"

    def __init__(self, target=None):
        super().__init__(target)
        self._previous = None

    def _choose(self, world, rng):
        self._previous = natural_draw(world, rng, self._previous)
        return Query(self._previous, Origin.FRESH_PROBE)

    def reset(self):
        self._previous = None
        return super().reset()


class TestSetAttacker(Attacker):
    """Probe i.i.d. until the first (target-class) mistake, then replay it forever."""

    kind = "test_set"
    __test__ = False  # not a pytest class

    def __init__(self, target: Optional[int] = None):
        super().__init__(target)
        self.found_mistake: Optional[int] = None

    def _choose(self, world, rng):
        if self.found_mistake is not None:
            return Query(self.found_mistake, Origin.REPLAY)
        return Query(natural_draw(world, rng), Origin.FRESH_PROBE)

    def _update(self, feedback):
        if self.found_mistake is None and self._succeeded(feedback):
            self.found_mistake = feedback.query.point_id

    def reset(self):
        self.found_mistake = None
        return super().reset()


class RateTrackingAttacker(Attacker):
    """UCB1 over every point tried so far plus a "fresh probe" pseudo-arm.

    The reward is the error indicator (target-class hit when targeted), so
    abstentions and rejections pay nothing. Ties between a known point and the
    fresh arm go to the known point.
    """

    kind = "rate_tracking"

    def __init__(self, target: Optional[int] = None, exploration: float = 1.0):
        super().__init__(target)
        if exploration < 0:
            raise ValueError("exploration constant must be non-negative")
        self.exploration = exploration
        self.reset()

    def reset(self):
        self._slot = {}
        self._ids = []
        self._trials = np.zeros(16)
        self._rewards = np.zeros(16)
        self.fresh_trials = 0
        self.fresh_rewards = 0
        self.total_trials = 0
        self._fresh_pull = False
        return super().reset()

    @property
    def tried_points(self) -> list:
        return list(self._ids)

    def trials(self, point_id: int) -> int:
        s = self._slot.get(point_id)
        return 0 if s is None else int(self._trials[s])

    def estimate(self, point_id: int) -> float:
        """Empirical error rate of ``point_id``; NaN when untried."""
        s = self._slot.get(point_id)
        if s is None or self._trials[s] == 0:
            return math.nan
        return float(self._rewards[s] / self._trials[s])

    def _choose(self, world, rng):
        if self.fresh_trials == 0 or not self._ids:
            return self._fresh(world, rng)
        k = len(self._ids)
        n = self._trials[:k]
        bonus = self.exploration * math.sqrt(2.0 * math.log(self.total_trials + 1))
        index = self._rewards[:k] / n + bonus / np.sqrt(n)
        best = int(np.argmax(index))
        fresh_index = self.fresh_rewards / self.fresh_trials + bonus / math.sqrt(self.fresh_trials)
        if fresh_index > index[best]:
            return self._fresh(world, rng)
        self._fresh_pull = False
        return Query(self._ids[best], Origin.REPLAY)

    def _fresh(self, world, rng):
        self._fresh_pull = True
        pid = natural_draw(world, rng)
        origin = Origin.REPLAY if pid in self._slot else Origin.FRESH_PROBE
        return Query(pid, origin)

    def _update(self, feedback):
        reward = 1 if self._succeeded(feedback) else 0
        pid = feedback.query.point_id
        s = self._slot.get(pid)
        if s is None:
            s = len(self._ids)
            if s == len(self._trials):
                self._trials = np.concatenate([self._trials, np.zeros(s)])
                self._rewards = np.concatenate([self._rewards, np.zeros(s)])
            self._slot[pid] = s
            self._ids.append(pid)
        self._trials[s] += 1
        self._rewards[s] += reward
        if self._fresh_pull:
            self.fresh_trials += 1
            self.fresh_rewards += reward
        self.total_trials += 1


class WhiteBoxScreening(TestSetAttacker):
    """Collect unique mistakes on an offline copy, then present each once live.

    Once the screened list runs out the attacker falls back to the plain
    test-set attack.
    """

    kind = "white_box_screening"

    def __init__(self, target: Optional[int] = None, screen_budget: int = 0):
        if screen_budget < 0:
            raise ValueError("screen_budget must be non-negative")
        self.screen_budget = screen_budget
        super().__init__(target)
        self.reset()

    def reset(self):
        self.screened_mistakes = []
        self.replay_cursor = 0
        self.screening_probes = 0
        self._screened = False
        return super().reset()

    def screen_offline(
        self,
        defender_copy: Defender,
        world: WorldModel,
        rng: random.Random,
        defender_rng: Optional[random.Random] = None,
        budget: Optional[int] = None,
        needed: Optional[int] = None,
    ) -> "WhiteBoxScreening":
        """Spend up to ``budget`` natural draws probing ``defender_copy``.

        Each distinct point is presented to the copy once; draws landing on an
        already-probed point still use up budget. Stops early after ``needed``
        mistakes are collected.
        """
        budget = self.screen_budget if budget is None else budget
        if defender_rng is None:
            defender_rng = random.Random(rng.getrandbits(128))
        probed = set()
        found = []
        labels = world.labels
        probes = 0
        while probes < budget and (needed is None or len(found) < needed):
            probes += 1
            pid = natural_draw(world, rng)
            if pid in probed:
                continue
            probed.add(pid)
            q = Query(pid, Origin.FRESH_PROBE)
            resp = defender_copy.respond(q, world, defender_rng)
            y = labels[pid]
            err = resp.kind is ResponseKind.CLASS and resp.label != y
            if self._succeeded(Feedback(q, resp, y, err, is_target_hit(resp, self.target, y))):
                found.append(pid)
        self.screened_mistakes = found
        self.replay_cursor = 0
        self.screening_probes = probes
        self._screened = True
        return self

    def _choose(self, world, rng):
        if not self._screened:
            raise RuntimeError("white-box attacker must run screen_offline before the live phase")
        if self.replay_cursor < len(self.screened_mistakes):
            pid = self.screened_mistakes[self.replay_cursor]
            self.replay_cursor += 1
            return Query(pid, Origin.FRESH_PROBE)
        return super()._choose(world, rng)


ATTACKER_KINDS = {
    "natural_user": NaturalUser,
    "test_set": TestSetAttacker,
    "rate_tracking": RateTrackingAttacker,
    "white_box_screening": WhiteBoxScreening,
}


@dataclass(frozen=True)
class AttackerSpec:
    kind: str = "test_set"
    target: Optional[int] = None
    exploration: float = 1.0
    screen_budget: int = 0

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "target": self.target}
        if self.kind == "rate_tracking":
            d["exploration"] = self.exploration
        if self.kind == "white_box_screening":
            d["screen_budget"] = self.screen_budget
        return d

    def build(self) -> Attacker:
        try:
            cls = ATTACKER_KINDS[self.kind]
        except KeyError:
            raise ValueError(f"unknown attacker kind {self.kind!r}") from None
        if cls is RateTrackingAttacker:
            return cls(self.target, exploration=self.exploration)
        if cls is WhiteBoxScreening:
            return cls(self.target, screen_budget=self.screen_budget)
        return cls(self.target)
