"""Closed-form results for the test-set attack, brute-force oracles, and MC comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .config import ScenarioConfig
from .engine import MonteCarloSummary, Stat, batch_test_set_attack, build_scenario_world, monte_carlo
from .world import WorldModel

__all__ = [
    "expected_trials",
    "naive_attack_error_rate",
    "exact_expected_error_rate",
    "closed_form_expected_error_rate",
    "required_r",
    "targeted_rate_approx",
    "per_class_mistake_rates",
    "stochastic_asymptote",
    "expected_screened_mistakes",
    "ReportRow",
    "AnalyticReport",
    "analyze",
    "compare",
]


def expected_trials(r: float) -> float:
    """Mean number of i.i.d. probes until the first mistake."""
    if not 0.0 < r <= 1.0:
        raise ValueError("expected_trials needs 0 < r <= 1; with r = 0 no mistake exists")
    return 1.0 / r


def naive_attack_error_rate(r: float, m_test: int, count_discovery: bool = False) -> float:
    """(m - 1/r) / m, clamped at 0.

    With ``count_discovery`` the probe that finds the mistake is counted as
    an error too, giving (m - 1/r + 1) / m.
    """
    if not 0.0 < r <= 1.0:
        raise ValueError("r must be in (0, 1]")
    if m_test < 1:
        raise ValueError("m_test must be at least 1")
    errors = m_test - 1.0 / r + (1.0 if count_discovery else 0.0)
    return max(0.0, errors / m_test)


def exact_expected_error_rate(r: float, m_test: int, reverse: bool = False) -> float:
    """E[errors] / m by explicit summation over the first-mistake trial t.

    Errors are m - t + 1 when t <= m (the discovering probe counts) and 0 when
    no mistake turns up within the episode.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must be in [0, 1]")
    if m_test < 1:
        raise ValueError("m_test must be at least 1")
    if r == 0.0:
        return 0.0
    q = 1.0 - r
    ts = range(m_test, 0, -1) if reverse else range(1, m_test + 1)
    total = 0.0
    for t in ts:
        total += q ** (t - 1) * r * (m_test - t + 1)
    return total / m_test


def closed_form_expected_error_rate(r: float, m_test: int) -> float:
    """Same expectation as :func:`exact_expected_error_rate`, summed in closed form.

    sum_t q^(t-1) r (m-t+1) = m - q (1 - q^m) / r  with q = 1 - r.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must be in [0, 1]")
    if r == 0.0:
        return 0.0
    if r == 1.0:
        return 1.0
    miss_all = math.expm1(m_test * math.log1p(-r))  # q^m - 1
    return 1.0 + (1.0 - r) * miss_all / (r * m_test)


def required_r(target_rate: float, m_test: int) -> float:
    """Natural error rate at which the naive attacked rate equals ``target_rate``."""
    if not 0.0 <= target_rate < 1.0:
        raise ValueError("target attacked error rate must be in [0, 1)")
    if m_test < 1:
        raise ValueError("m_test must be at least 1")
    return 1.0 / (m_test * (1.0 - target_rate))


def targeted_rate_approx(r: float, k: int) -> float:
    """Rough targeted mistake rate: r spread over all k classes."""
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must be in [0, 1]")
    if k < 2:
        raise ValueError("k must be at least 2")
    return r / k


def per_class_mistake_rates(world: WorldModel) -> list:
    """Fraction of the population argmax-misclassified as each class."""
    counts = [0] * world.k
    for y, a in zip(world.labels, world.argmax_labels):
        if a != y:
            counts[a] += 1
    return [c / world.n for c in counts]


def stochastic_asymptote(world: WorldModel, target: Optional[int] = None) -> float:
    """Best single-point exploitation rate: max over points of r_x.

    For a target class this is the largest probability of the target among
    points whose true label differs from it.
    """
    if target is None:
        return max(p.profile.mistake_mass for p in world.points)
    return max(
        (p.profile.class_probs[target] for p in world.points if p.true_label != target),
        default=0.0,
    )


def expected_screened_mistakes(n_mistakes: int, n: int, budget: int) -> float:
    """Expected distinct mistake points hit by ``budget`` uniform draws over ``n`` points."""
    if n == 1:
        return float(n_mistakes if budget > 0 else 0)
    return -n_mistakes * math.expm1(budget * math.log1p(-1.0 / n))


@dataclass
class ReportRow:
    quantity: str
    closed_form: Optional[float] = None
    oracle: Optional[float] = None
    estimate: Optional[Stat] = None
    tolerance: str = ""
    agrees: Optional[bool] = None
    note: str = ""


@dataclass
class AnalyticReport:
    scenario: str
    rows: list = field(default_factory=list)
    simulation_only: bool = False
    summary: Optional[MonteCarloSummary] = field(default=None, repr=False)

    @property
    def all_agree(self) -> bool:
        return all(r.agrees is not False for r in self.rows)

    def add(self, *args, **kwargs) -> ReportRow:
        row = ReportRow(*args, **kwargs)
        self.rows.append(row)
        return row

    def render(self) -> str:
        head = f"scenario: {self.scenario}" + ("  [simulation-only]" if self.simulation_only else "")
        lines = [head, ""]
        fmt = "{:<34} {:>14} {:>14} {:>26} {:>7}  {}"
        lines.append(fmt.format("quantity", "closed_form", "oracle", "monte_carlo (95% CI)", "agrees", "tolerance / note"))
        for r in self.rows:
            est = "" if r.estimate is None else f"{r.estimate.mean:.6g} ± {r.estimate.half_width:.2g}"
            lines.append(
                fmt.format(
                    r.quantity,
                    "" if r.closed_form is None else f"{r.closed_form:.8g}",
                    "" if r.oracle is None else f"{r.oracle:.8g}",
                    est,
                    "" if r.agrees is None else ("yes" if r.agrees else "NO"),
                    "; ".join(x for x in (r.tolerance, r.note) if x),
                )
            )
        lines.append("")
        lines.append("all agreement flags true" if self.all_agree else "AGREEMENT FAILURE")
        return "\n".join(lines) + "\n"

    def to_csv_rows(self) -> list:
        out = []
        for r in self.rows:
            out.append(
                {
                    "quantity": r.quantity,
                    "closed_form": r.closed_form,
                    "oracle": r.oracle,
                    "mc_mean": None if r.estimate is None else r.estimate.mean,
                    "mc_half_width": None if r.estimate is None else r.estimate.half_width,
                    "agrees": r.agrees,
                    "tolerance": r.tolerance,
                    "note": r.note,
                }
            )
        return out


ORACLE_TOL = 1e-9


def _scenario_kind(config: ScenarioConfig) -> str:
    wrappers = tuple(w.kind for w in config.defender.wrappers)
    a = config.attacker.kind
    base = config.defender.base
    deterministic = config.world.profile == "deterministic"
    if a == "natural_user" and not wrappers:
        return "natural"
    if a == "test_set" and not wrappers and deterministic and base == "fixed_deterministic":
        return "test_set_targeted" if config.attacker.target is not None else "test_set"
    if a == "test_set" and wrappers == ("memorization",) and config.defender.wrappers[0].params.get("mode", "abstain") == "abstain":
        return "memorization"
    if a == "white_box_screening" and wrappers == ("memorization",):
        return "white_box_memorization"
    if a == "rate_tracking" and not wrappers:
        return "rate_tracking"
    if any(w == "rate_limit" for w in wrappers):
        return "rate_limit"
    return "other"


def analyze(config: ScenarioConfig) -> AnalyticReport:
    """Closed-form quantities only; no simulation."""
    world = build_scenario_world(config)
    r = world.natural_error_rate
    m = config.m_test
    rep = AnalyticReport(_scenario_kind(config))
    rep.add("natural_error_rate", r, note="argmax mistakes / N")
    if r > 0:
        rep.add("expected_trials", expected_trials(r))
        rep.add("naive_error_rate", naive_attack_error_rate(r, m), note="(m - 1/r)/m")
        rep.add("naive_error_rate_counting_discovery", naive_attack_error_rate(r, m, count_discovery=True), note="(m - 1/r + 1)/m")
    exact = exact_expected_error_rate(r, m)
    cf = closed_form_expected_error_rate(r, m)
    rep.add("exact_expected_error_rate", cf, oracle=exact, agrees=abs(cf - exact) <= ORACLE_TOL, tolerance=f"|cf - sum| <= {ORACLE_TOL:g}")
    rep.add("required_r_for_0.05", required_r(0.05, m))
    rep.add("targeted_rate_approx", targeted_rate_approx(r, world.k), note="r/k rough model")
    if config.attacker.target is not None:
        rep.add("targeted_rate_measured", per_class_mistake_rates(world)[config.attacker.target], note="argmax mistakes into target / N")
    rep.add("stochastic_asymptote", stochastic_asymptote(world, config.attacker.target), note="max r_x")
    return rep


def compare(config: ScenarioConfig, workers: int = 1, batch_episodes: Optional[int] = None) -> AnalyticReport:
    """Closed forms, oracles and Monte Carlo side by side with agreement flags.

    Scenarios without a closed form are flagged ``simulation_only`` and carry
    whatever inequality checks apply. ``batch_episodes`` additionally runs the
    vectorised kernel for the plain test-set scenario.
    """
    kind = _scenario_kind(config)
    world = build_scenario_world(config)
    r = world.natural_error_rate
    m = config.m_test
    tail = config.tail_window
    if kind == "rate_tracking" and tail is None:
        tail = max(1, m // 10)
    mc = monte_carlo(config, workers=workers, tail=tail)
    rep = AnalyticReport(kind, summary=mc)
    err = mc.error_rate

    if kind == "test_set" and r > 0:
        exact = exact_expected_error_rate(r, m)
        cf = closed_form_expected_error_rate(r, m)
        rep.add("expected_trials", expected_trials(r), estimate=Stat.of([x.first_mistake_index + 1 for x in mc.episodes if x.first_mistake_index is not None]),
                agrees=None, note="sample mean of first_mistake_index + 1")
        row = rep.rows[-1]
        row.agrees = abs(row.estimate.mean - row.closed_form) <= 3 * row.estimate.std / math.sqrt(row.estimate.n) if row.estimate.n > 1 else None
        row.tolerance = "3 standard errors"
        rep.add("naive_error_rate", naive_attack_error_rate(r, m), estimate=err,
                agrees=abs(naive_attack_error_rate(r, m) - exact) <= 2.0 / (r * m) * exact,
                tolerance="vs exact within 2/(r m) relative")
        rep.add("naive_error_rate_counting_discovery", naive_attack_error_rate(r, m, True), note="text convention")
        rep.add("exact_expected_error_rate", cf, oracle=exact, estimate=err,
                agrees=abs(cf - exact) <= ORACLE_TOL and err.covers(exact), tolerance="oracle 1e-9; MC 95% CI")
        if batch_episodes:
            errors, _ = batch_test_set_attack(world, m, batch_episodes, config.seed.generator("engine"))
            est = Stat.of(errors / m)
            rep.add("exact_vs_batch_kernel", exact, estimate=est, agrees=est.covers(exact), tolerance="MC 95% CI")
    elif kind == "test_set_targeted":
        t = config.attacker.target
        measured = per_class_mistake_rates(world)[t]
        exact = exact_expected_error_rate(measured, m)
        rep.add("targeted_rate_approx", targeted_rate_approx(r, world.k), oracle=measured,
                note="r/k rough model vs measured per-class rate; approximate")
        rep.add("targeted_expected_rate", exact, estimate=mc.targeted_rate, agrees=mc.targeted_rate.covers(exact), tolerance="MC 95% CI")
    elif kind == "natural":
        expected = math.fsum(p.profile.mistake_mass for p in world.points) / world.n
        rep.add("natural_error_rate", expected, estimate=err, agrees=err.covers(expected), tolerance="MC 95% CI",
                note="mean r_x over the population")
    elif kind == "memorization":
        rep.simulation_only = True
        worst = max(x.error_rate for x in mc.episodes)
        rep.add("error_rate <= r (every episode)", r, oracle=worst, estimate=err, agrees=worst <= r, tolerance="inequality")
        rep.add("abstention_rate", None, estimate=mc.abstention_rate, note="rises toward 1 with m_test")
    elif kind == "white_box_memorization":
        rep.simulation_only = True
        n_mist = len(world.mistake_points())
        expected = 1.0 if n_mist >= m else None
        rep.add("error_rate", expected, estimate=err,
                agrees=None if expected is None else all(x.error_rate == 1.0 for x in mc.episodes),
                tolerance="exact", note=f"{n_mist} mistake points for m_test={m}")
    elif kind == "rate_tracking":
        best = stochastic_asymptote(world, config.attacker.target)
        est = mc.stat("targeted_rate" if config.attacker.target is not None else "error_rate", tail=True)
        rep.add(f"trailing_{tail}_error_rate", best, estimate=est, agrees=abs(est.mean - best) <= 0.05, tolerance="|mc - max r_x| <= 0.05")
        if world.mistake_points() and config.attacker.target is None:
            rep.add("floor_0.5", 0.5, estimate=est, agrees=est.mean >= 0.5 - 0.02, tolerance="mc >= 0.48")
    elif kind == "rate_limit":
        rep.simulation_only = True
        budget = min(w.params["budget"] for w in config.defender.wrappers if w.kind == "rate_limit")
        served = max(x.m_test - x.rejections for x in mc.episodes)
        worst = max(x.errors for x in mc.episodes)
        rep.add("served_queries", float(min(budget, m)), oracle=float(served), agrees=served <= min(budget, m), tolerance="<= min(B, m)")
        rep.add("errors", float(min(budget, m)), oracle=float(worst), agrees=worst <= budget, tolerance="<= B")
    else:
        rep.simulation_only = True
    rep.add("mc_error_rate", None, estimate=err)
    if config.attacker.target is not None:
        rep.add("mc_targeted_rate", None, estimate=mc.targeted_rate)
    rep.add("mc_abstention_rate", None, estimate=mc.abstention_rate)
    return rep
