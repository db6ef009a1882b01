"""Domain types shared by the simulator: queries, responses, transcripts, metrics, seeding."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "Origin",
    "ResponseKind",
    "Query",
    "Response",
    "ABSTAIN",
    "REJECTED",
    "TranscriptRecord",
    "Transcript",
    "Metrics",
    "SeedSpec",
    "ROLES",
    "compute_metrics",
    "validate_label",
]


class Origin(enum.Enum):
    FRESH_PROBE = "fresh_probe"
    REPLAY = "replay"


class ResponseKind(enum.Enum):
    CLASS = "class"
    ABSTAIN = "abstain"
    REJECTED = "rejected"


def validate_label(value: int, k: int) -> int:
    """Return ``value`` if it is a valid class index for a ``k``-class world."""
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"label must be an integer, got {value!r}")
    if not 0 <= value < k:
        raise ValueError(f"label {value} outside [0, {k})")
    return int(value)


class Query(NamedTuple):
    point_id: int
    origin: Origin = Origin.FRESH_PROBE


class Response(NamedTuple):
    kind: ResponseKind
    label: Optional[int] = None

    @classmethod
    def of_class(cls, label: int) -> "Response":
        return cls(ResponseKind.CLASS, int(label))

    @property
    def is_class(self) -> bool:
        return self.kind is ResponseKind.CLASS

    def to_json(self):
        if self.kind is ResponseKind.CLASS:
            return self.label
        return self.kind.value


ABSTAIN = Response(ResponseKind.ABSTAIN)
REJECTED = Response(ResponseKind.REJECTED)


class TranscriptRecord(NamedTuple):
    index: int
    query: Query
    response: Response
    is_error: bool
    is_targeted_hit: bool
    is_repeat: bool


Transcript = Sequence[TranscriptRecord]


@dataclass(frozen=True)
class Metrics:
    m_test: int
    errors: int
    abstentions: int
    rejections: int
    targeted_hits: int
    first_mistake_index: Optional[int]
    unique_points_queried: int

    @property
    def correct(self) -> int:
        return self.m_test - self.errors - self.abstentions - self.rejections

    @property
    def error_rate(self) -> float:
        return self.errors / self.m_test

    @property
    def abstention_rate(self) -> float:
        return self.abstentions / self.m_test

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.m_test

    @property
    def targeted_rate(self) -> float:
        return self.targeted_hits / self.m_test

    def as_dict(self) -> dict:
        return {
            "m_test": self.m_test,
            "errors": self.errors,
            "abstentions": self.abstentions,
            "rejections": self.rejections,
            "targeted_hits": self.targeted_hits,
            "error_rate": self.error_rate,
            "abstention_rate": self.abstention_rate,
            "rejection_rate": self.rejection_rate,
            "targeted_rate": self.targeted_rate,
            "first_mistake_index": self.first_mistake_index,
            "unique_points_queried": self.unique_points_queried,
        }


def compute_metrics(transcript: Transcript) -> Metrics:
    """Aggregate counts and rates over a transcript.

    Abstentions and rejections are part of the denominator but are never
    errors. Raises ``ValueError`` on an empty transcript.
    """
    if len(transcript) == 0:
        raise ValueError("cannot compute metrics of an empty transcript")
    errors = abstentions = rejections = hits = 0
    first = None
    points = set()
    for rec in transcript:
        kind = rec.response.kind
        if kind is ResponseKind.ABSTAIN:
            abstentions += 1
        elif kind is ResponseKind.REJECTED:
            rejections += 1
        if rec.is_error:
            errors += 1
            if first is None:
                first = rec.index
        if rec.is_targeted_hit:
            hits += 1
        points.add(rec.query.point_id)
    return Metrics(
        m_test=len(transcript),
        errors=errors,
        abstentions=abstentions,
        rejections=rejections,
        targeted_hits=hits,
        first_mistake_index=first,
        unique_points_queried=len(points),
    )


ROLES = ("world", "defender", "attacker", "engine")


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus the substream derivation rule.

    Each (episode, role) pair gets ``SeedSequence(master_seed,
    spawn_key=(episode, role_index))``; the shared world uses
    ``spawn_key=(role_index,)`` so it does not depend on the episode.
    """

    master_seed: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def sequence(self, role: str, episode: Optional[int] = None) -> np.random.SeedSequence:
        try:
            idx = ROLES.index(role)
        except ValueError:
            raise ValueError(f"unknown seed role {role!r}") from None
        key = (idx,) if episode is None else (int(episode), idx)
        return np.random.SeedSequence(self.master_seed, spawn_key=key)

    def stream(self, role: str, episode: Optional[int] = None) -> random.Random:
        """Scalar stream for per-query draws (Mersenne Twister)."""
        words = self.sequence(role, episode).generate_state(4, dtype=np.uint32)
        return random.Random(int.from_bytes(words.tobytes(), "little"))

    def generator(self, role: str, episode: Optional[int] = None) -> np.random.Generator:
        """Vectorised stream for batch work."""
        return np.random.Generator(np.random.PCG64(self.sequence(role, episode)))
