"""Synthetic input population: true labels, per-point model behaviour, natural traffic."""

from __future__ import annotations

import math
import random
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Optional, Sequence, Union

from .core import SeedSpec, validate_label

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ResponseProfile:
    """Fixed response distribution of the underlying model on one input.

    ``mistake_mass`` is the probability of emitting a wrong class (r_x).
    """

    class_probs: tuple
    abstain_prob: float
    mistake_mass: float
    cdf: tuple = field(repr=False, compare=False)

    @classmethod
    def build(cls, class_probs: Sequence[float], abstain_prob: float, true_label: int) -> "ResponseProfile":
        probs = tuple(float(p) for p in class_probs)
        abstain_prob = float(abstain_prob)
        if any(p < 0 or not math.isfinite(p) for p in probs) or abstain_prob < 0:
            raise ValueError(f"probabilities must be finite and non-negative: {probs}, {abstain_prob}")
        total = math.fsum(probs) + abstain_prob
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"class_probs + abstain_prob must sum to 1, got {total!r}")
        validate_label(true_label, len(probs))
        mistake = math.fsum(p for c, p in enumerate(probs) if c != true_label)
        cdf = tuple(accumulate(probs + (abstain_prob,)))
        return cls(probs, abstain_prob, mistake, cdf)

    @classmethod
    def one_hot(cls, label: int, k: int, true_label: int) -> "ResponseProfile":
        probs = [0.0] * k
        probs[label] = 1.0
        return cls.build(probs, 0.0, true_label)

    @property
    def k(self) -> int:
        return len(self.class_probs)

    @property
    def argmax(self) -> int:
        # max() returns the first maximal element, i.e. the lowest class index
        return max(range(self.k), key=self.class_probs.__getitem__)

    @property
    def max_prob(self) -> float:
        return max(self.class_probs)

    @property
    def is_deterministic(self) -> bool:
        return self.abstain_prob == 0.0 and self.class_probs[self.argmax] == 1.0

    def mistake_rate(self, true_label: int) -> float:
        """Recompute r_x from the class probabilities."""
        return math.fsum(p for c, p in enumerate(self.class_probs) if c != true_label)

    def sample(self, u: float) -> Optional[int]:
        """Map a uniform draw to a class index, or ``None`` for abstain."""
        i = bisect_right(self.cdf, u)
        if i >= self.k:
            # u landed in the abstain slot, or past the last bin through rounding
            if self.abstain_prob > 0.0:
                return None
            i = max(c for c in range(self.k) if self.class_probs[c] > 0.0)
        return i


@dataclass(frozen=True)
class WorldPoint:
    point_id: int
    true_label: int
    profile: ResponseProfile


@dataclass(frozen=True)
class Stratum:
    """A share of the population with a common profile template.

    ``wrong_probs`` go to distinct wrong classes drawn uniformly per point.
    """

    fraction: float
    true_prob: float
    wrong_probs: tuple = ()
    abstain_prob: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "wrong_probs", tuple(float(p) for p in self.wrong_probs))
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"stratum fraction must be in [0, 1], got {self.fraction}")
        total = math.fsum((self.true_prob, self.abstain_prob) + self.wrong_probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"stratum probabilities must sum to 1, got {total!r}")
        if min((self.true_prob, self.abstain_prob) + self.wrong_probs) < 0:
            raise ValueError("stratum probabilities must be non-negative")


@dataclass(frozen=True)
class StochasticProfiles:
    strata: tuple

    def __post_init__(self):
        object.__setattr__(self, "strata", tuple(self.strata))
        if not self.strata:
            raise ValueError("stochastic profile spec needs at least one stratum")
        total = math.fsum(s.fraction for s in self.strata)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"stratum fractions must sum to 1, got {total!r}")


ProfileKind = Union[str, StochasticProfiles]


@dataclass(frozen=True, eq=False)
class WorldModel:
    k: int
    points: tuple
    duplicate_rate: float = 0.0
    labels: tuple = field(init=False, repr=False)
    argmax_labels: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not self.points:
            raise ValueError("world must contain at least one point")
        if not 0.0 <= self.duplicate_rate < 1.0:
            raise ValueError("duplicate_rate must be in [0, 1)")
        object.__setattr__(self, "labels", tuple(p.true_label for p in self.points))
        object.__setattr__(self, "argmax_labels", tuple(p.profile.argmax for p in self.points))

    @property
    def n(self) -> int:
        return len(self.points)

    def mistake_points(self) -> list:
        """Ids whose argmax decision differs from the true label."""
        return [i for i, (y, a) in enumerate(zip(self.labels, self.argmax_labels)) if y != a]

    @property
    def natural_error_rate(self) -> float:
        return len(self.mistake_points()) / self.n

    @property
    def is_deterministic(self) -> bool:
        return all(p.profile.is_deterministic for p in self.points)

    def __contains__(self, point_id) -> bool:
        return isinstance(point_id, int) and 0 <= point_id < len(self.points)


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _stratum_counts(fractions: Sequence[float], n: int) -> list:
    """Largest-remainder apportionment of ``n`` points; ties go to the earlier stratum."""
    raw = [f * n for f in fractions]
    counts = [int(math.floor(x + 1e-9)) for x in raw]
    short = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def _wrong_classes(rng: random.Random, k: int, true_label: int, count: int) -> list:
    others = [c for c in range(k) if c != true_label]
    return rng.sample(others, count)


def build_world(
    k: int,
    n: int,
    r: float = 0.0,
    profile_kind: ProfileKind = "deterministic",
    duplicate_rate: float = 0.0,
    seed: Union[int, SeedSpec, random.Random] = 0,
) -> WorldModel:
    """Build a population of ``n`` points over ``k`` classes.

    Deterministic worlds get exactly ``round(r*n)`` mistake points, each with
    all mass on one wrong class drawn uniformly. Stochastic worlds assign
    strata templates; ``r`` is ignored there and the natural error rate is
    whatever the strata imply.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < 1:
        raise ValueError("N must be at least 1")
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must be in [0, 1]")
    if not 0.0 <= duplicate_rate < 1.0:
        raise ValueError("duplicate_rate must be in [0, 1)")
    if isinstance(seed, random.Random):
        rng = seed
    elif isinstance(seed, SeedSpec):
        rng = seed.stream("world")
    else:
        rng = SeedSpec(int(seed)).stream("world")

    labels = [rng.randrange(k) for _ in range(n)]
    points = []
    if profile_kind == "deterministic":
        n_mistakes = _half_up(r * n)
        if n_mistakes == 0 and r > 0:
            warnings.warn(f"round(r*N) = 0 for r={r}, N={n}; world has no mistake points", stacklevel=2)
        mistakes = set(rng.sample(range(n), n_mistakes))
        for i, y in enumerate(labels):
            shown = _wrong_classes(rng, k, y, 1)[0] if i in mistakes else y
            points.append(WorldPoint(i, y, ResponseProfile.one_hot(shown, k, y)))
    elif isinstance(profile_kind, StochasticProfiles):
        counts = _stratum_counts([s.fraction for s in profile_kind.strata], n)
        assignment = [j for j, c in enumerate(counts) for _ in range(c)]
        rng.shuffle(assignment)
        for i, (y, j) in enumerate(zip(labels, assignment)):
            s = profile_kind.strata[j]
            if len(s.wrong_probs) > k - 1:
                raise ValueError(f"stratum has {len(s.wrong_probs)} wrong classes but k-1 = {k - 1}")
            probs = [0.0] * k
            probs[y] = s.true_prob
            for c, p in zip(_wrong_classes(rng, k, y, len(s.wrong_probs)), s.wrong_probs):
                probs[c] = p
            points.append(WorldPoint(i, y, ResponseProfile.build(probs, s.abstain_prob, y)))
    else:
        raise ValueError(f"unknown profile kind {profile_kind!r}")
    return WorldModel(k=k, points=tuple(points), duplicate_rate=duplicate_rate)


def natural_draw(world: WorldModel, rng: random.Random, previous: Optional[int] = None) -> int:
    """One draw of natural traffic, with replacement.

    With probability ``duplicate_rate`` the previous draw is repeated.
    """
    if previous is not None and world.duplicate_rate > 0.0 and rng.random() < world.duplicate_rate:
        return previous
    # floor of a 53-bit uniform; bias is at most N / 2**53
    return int(rng.random() * len(world.points))
