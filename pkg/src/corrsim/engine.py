"""Seeded attacker-vs-defender episodes and Monte Carlo aggregation."""

from __future__ import annotations

import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attackers import Feedback, WhiteBoxScreening
from .config import ScenarioConfig
from .core import ResponseKind, TranscriptRecord, compute_metrics
from .world import WorldModel

__all__ = [
    "Stat",
    "MonteCarloSummary",
    "build_scenario_world",
    "run_episode",
    "monte_carlo",
    "batch_test_set_attack",
]

Z95 = 1.959963984540054

_world_cache: dict = {}


def build_scenario_world(config: ScenarioConfig, episode: Optional[int] = None) -> WorldModel:
    """World for ``episode``; shared across episodes unless ``fresh_per_episode``."""
    if config.world.fresh_per_episode:
        return config.world.build(config.seed, episode)
    key = (config.seed.master_seed, repr(config.world))
    world = _world_cache.get(key)
    if world is None:
        if len(_world_cache) > 8:
            _world_cache.clear()
        world = _world_cache[key] = config.world.build(config.seed)
    return world


def run_episode(config: ScenarioConfig, episode_index: int, world: Optional[WorldModel] = None) -> list:
    """Play one episode of ``config.m_test`` live queries and return its transcript.

    A white-box attacker first screens a clone of the defender using the
    engine stream; those probes are not part of the transcript.
    """
    if world is None:
        world = build_scenario_world(config, episode_index)
    seed = config.seed
    d_rng = seed.stream("defender", episode_index)
    a_rng = seed.stream("attacker", episode_index)
    defender = config.defender.build().reset()
    attacker = config.attacker.build().reset()

    if isinstance(attacker, WhiteBoxScreening):
        e_rng = seed.stream("engine", episode_index)
        copy_rng = random.Random(e_rng.getrandbits(128))
        attacker.screen_offline(
            defender.clone_for_screening(), world, e_rng, defender_rng=copy_rng, needed=config.m_test
        )

    target = attacker.target
    labels = world.labels
    class_kind = ResponseKind.CLASS
    next_query = attacker.next_query
    respond = defender.respond
    observe = attacker.observe
    seen = set()
    records = []
    append = records.append
    for i in range(config.m_test):
        q = next_query(world, a_rng)
        resp = respond(q, world, d_rng)
        pid = q.point_id
        y = labels[pid]
        if resp.kind is class_kind:
            err = resp.label != y
            hit = target is not None and resp.label == target and target != y
        else:
            err = hit = False
        rep = pid in seen
        if not rep:
            seen.add(pid)
        append(TranscriptRecord(i, q, resp, err, hit, rep))
        observe(Feedback(q, resp, y, err, hit))
    return records


@dataclass(frozen=True)
class Stat:
    n: int
    mean: float
    std: float
    half_width: float
    min: float
    max: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Stat":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            return cls(0, math.nan, math.nan, math.nan, math.nan, math.nan)
        # math.fsum keeps the mean order-independent and inside [min, max]
        mean = math.fsum(x.tolist()) / x.size
        mean = min(max(mean, float(x.min())), float(x.max()))
        std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        return cls(int(x.size), mean, std, Z95 * std / math.sqrt(x.size), float(x.min()), float(x.max()))

    @property
    def lower(self) -> float:
        return self.mean - self.half_width

    @property
    def upper(self) -> float:
        return self.mean + self.half_width

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


SUMMARY_FIELDS = ("error_rate", "abstention_rate", "rejection_rate", "targeted_rate", "first_mistake_index")


@dataclass(frozen=True)
class MonteCarloSummary:
    config: ScenarioConfig
    episodes: tuple
    tail: Optional[tuple] = None

    def stat(self, name: str, tail: bool = False) -> Stat:
        metrics = self.tail if tail else self.episodes
        if metrics is None:
            raise ValueError("summary has no trailing-window metrics")
        values = [getattr(m, name) for m in metrics]
        return Stat.of([v for v in values if v is not None])

    @property
    def error_rate(self) -> Stat:
        return self.stat("error_rate")

    @property
    def abstention_rate(self) -> Stat:
        return self.stat("abstention_rate")

    @property
    def targeted_rate(self) -> Stat:
        return self.stat("targeted_rate")

    @property
    def first_mistake_index(self) -> Stat:
        return self.stat("first_mistake_index")

    def table(self) -> list:
        rows = []
        for scope, present in (("episode", True), ("tail", self.tail is not None)):
            if not present:
                continue
            for name in SUMMARY_FIELDS:
                s = self.stat(name, tail=scope == "tail")
                rows.append({"scope": scope, "quantity": name, **s.__dict__})
        return rows


def _run_chunk(config: ScenarioConfig, indices: Sequence[int], tail: Optional[int]):
    out = []
    for e in indices:
        transcript = run_episode(config, e)
        out.append((compute_metrics(transcript), compute_metrics(transcript[-tail:]) if tail else None))
    return out


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def monte_carlo(config: ScenarioConfig, workers: int = 1, tail: Optional[int] = None) -> MonteCarloSummary:
    """Run every episode of ``config`` and aggregate per-episode metrics.

    Results depend only on the seed, never on ``workers``. ``tail`` (default
    ``config.tail_window``) adds metrics over each episode's last ``tail``
    queries.
    """
    tail = config.tail_window if tail is None else tail
    indices = list(range(config.episodes))
    if workers <= 1 or config.episodes == 1:
        results = _run_chunk(config, indices, tail)
    else:
        n_chunks = min(config.episodes, workers * 4)
        chunks = [indices[i::n_chunks] for i in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [config] * n_chunks, chunks, [tail] * n_chunks))
        slot = {}
        for chunk, part in zip(chunks, parts):
            for e, res in zip(chunk, part):
                slot[e] = res
        results = [slot[e] for e in indices]
    return MonteCarloSummary(
        config=config,
        episodes=tuple(r[0] for r in results),
        tail=tuple(r[1] for r in results) if tail else None,
    )


def batch_test_set_attack(
    world: WorldModel,
    m_test: int,
    episodes: int,
    rng: np.random.Generator,
    target: Optional[int] = None,
    memorize: bool = False,
    block: int = 4096,
) -> tuple:
    """Vectorised test-set attack against a fixed deterministic model.

    Probes are uniform draws over the world, exactly as in the step-by-step
    engine, but whole blocks of episodes are advanced with numpy and no
    transcript is kept. Returns ``(errors, first_trial)`` where ``first_trial``
    is the 1-based index of the first mistake, 0 when none was found.
    ``memorize`` models the abstaining memorization wrapper: one error at most.
    """
    if not world.is_deterministic:
        raise ValueError("batch kernel needs a deterministic world")
    labels = np.asarray(world.labels)
    shown = np.asarray(world.argmax_labels)
    bad = shown != labels if target is None else (shown == target) & (labels != target)
    p = bad.mean()
    first = np.zeros(episodes, dtype=np.int64)
    if p > 0:
        chunk = int(min(m_test, max(64, 4.0 / p)))
        for start in range(0, episodes, block):
            stop = min(episodes, start + block)
            active = np.arange(start, stop)
            pos = 0
            while active.size and pos < m_test:
                c = min(chunk, m_test - pos)
                hit = bad[rng.integers(0, world.n, size=(active.size, c))]
                found = hit.any(axis=1)
                first[active[found]] = pos + hit[found].argmax(axis=1) + 1
                active = active[~found]
                pos += c
    found = first > 0
    errors = np.where(found, 1 if memorize else m_test - first + 1, 0)
    return errors, first
