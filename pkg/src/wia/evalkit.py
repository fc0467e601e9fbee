"""Benchmark statistics, evaluation reports, and the downstream action selector.

The per-sample score is the rule-based reward in [0, 1]; reports aggregate it
overall, per difficulty level, and into a 10-bin accuracy histogram, with a
strict exact-match rate carried as a secondary column. Report metadata names
the metric so downstream consumers know exactly what "accuracy" means here.

The action selector turns a forecaster into a decision rule: forecast the
state change of each candidate action, classify every change record as
favorable or unfavorable under user-editable outcome rules, and pick the
action with the best polarity score (registry order breaks ties, and a tie is
flagged rather than hidden).
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

from .actions import REGISTRY, ActionLabel, registry_index
from .diff import (ABSENT, COMPONENT_KEYS, ChangeRecord, StateDelta,
                   canonicalize, difficulty)
from .errors import AllCandidatesFailed, IoFailure
from .pipeline import DatasetManifest, WiaTriplet, build_manifest
from .state import GameState

log = logging.getLogger(__name__)

N_HISTOGRAM_BINS = 10


# --- reports ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScoredSample:
    provenance: str
    score: float
    difficulty: int
    change_types: tuple[str, ...] = ()


def scored_samples(dataset: list[WiaTriplet],
                   rewards: list[float]) -> list[ScoredSample]:
    """Pair dataset triplets with their per-sample rewards."""
    if len(dataset) != len(rewards):
        raise ValueError("dataset and rewards must align")
    return [
        ScoredSample(
            provenance=f"{tr.provenance[0]}:{tr.provenance[1]}",
            score=r,
            difficulty=difficulty(tr.delta),
            change_types=tuple(k for k in COMPONENT_KEYS if tr.delta.component(k)),
        )
        for tr, r in zip(dataset, rewards)
    ]


@dataclass
class EvalReport:
    overall_score: float
    exact_match_rate: float
    per_difficulty: dict  # d -> (count, mean score)
    change_type_counts: dict  # component key -> sample count
    histogram: list  # 10 counts over [0,0.1) .. [0.9,1.0]
    sample_count: int
    metadata: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {
            "overall_score": self.overall_score,
            "exact_match_rate": self.exact_match_rate,
            "per_difficulty": {
                str(d): {"count": c, "mean_score": m}
                for d, (c, m) in sorted(self.per_difficulty.items())},
            "change_type_counts": dict(sorted(self.change_type_counts.items())),
            "histogram": list(self.histogram),
            "sample_count": self.sample_count,
            "metadata": dict(sorted(self.metadata.items())),
        }


def dataset_stats(dataset: list[WiaTriplet]) -> DatasetManifest:
    """Counts per difficulty and change type (percentages derived on demand)."""
    return build_manifest(dataset)


def evaluate(samples: list[ScoredSample]) -> EvalReport:
    """Aggregate per-sample scores into the standard report."""
    for s in samples:
        if not 0.0 <= s.score <= 1.0:
            raise ValueError(f"score out of range: {s.score}")
    n = len(samples)
    histogram = [0] * N_HISTOGRAM_BINS
    per_d_scores: dict[int, list[float]] = {}
    change_counts: dict[str, int] = {}
    for s in samples:
        histogram[min(N_HISTOGRAM_BINS - 1, int(s.score * N_HISTOGRAM_BINS))] += 1
        per_d_scores.setdefault(s.difficulty, []).append(s.score)
        for key in s.change_types:
            change_counts[key] = change_counts.get(key, 0) + 1
    per_difficulty = {d: (len(v), math.fsum(v) / len(v))
                      for d, v in per_d_scores.items()}
    overall = math.fsum(s.score for s in samples) / n if n else 0.0
    exact = sum(1 for s in samples if s.score == 1.0) / n if n else 0.0
    return EvalReport(
        overall_score=overall,
        exact_match_rate=exact,
        per_difficulty=per_difficulty,
        change_type_counts=change_counts,
        histogram=histogram,
        sample_count=n,
        metadata={
            "accuracy_metric": "mean per-sample rule-based reward in [0,1]",
            "secondary_metric": "exact_match_rate (score == 1.0)",
        },
    )


# --- outcome classification ----------------------------------------------------------

@dataclass(frozen=True)
class RulePattern:
    """Predicate over one change record. "any" wildcards every dimension.

    ``team`` is read from the record's self-describing entity key (dragons
    carry no team; only team="any" patterns can match them). ``direction``
    is one of increase/decrease (ints), to_true/to_false (bools),
    appeared/disappeared (absent transitions), or any.
    """

    component: str = "any"
    team: str = "any"
    field: str = "any"
    direction: str = "any"

    def matches(self, component: str, record: ChangeRecord) -> bool:
        if self.component not in ("any", component):
            return False
        if self.field not in ("any", record.field):
            return False
        if self.team != "any":
            team = record.entity.split(":", 1)[0]
            if team != self.team:
                return False
        d = self.direction
        if d == "any":
            return True
        old, new = record.old, record.new
        if d == "appeared":
            return old is ABSENT
        if d == "disappeared":
            return new is ABSENT
        if d == "increase":
            return isinstance(old, int) and isinstance(new, int) and new > old
        if d == "decrease":
            return isinstance(old, int) and isinstance(new, int) and new < old
        if d == "to_true":
            return new is True
        if d == "to_false":
            return new is False
        raise ValueError(f"unknown direction {d!r}")


@dataclass(frozen=True)
class OutcomeRule:
    pattern: RulePattern
    polarity: str  # "favorable" | "unfavorable"
    weight: float = 1.0


@dataclass(frozen=True)
class OutcomeRules:
    """Ordered rule list; the first matching rule classifies a record.

    Records no rule matches are neutral. Rules are written from one team's
    perspective (default ally).
    """

    rules: tuple[OutcomeRule, ...]
    perspective: str = "ally"


def default_outcome_rules() -> OutcomeRules:
    r = RulePattern
    return OutcomeRules(rules=(
        OutcomeRule(r("turret_changes", "enemy", "hp", "decrease"), "favorable"),
        OutcomeRule(r("turret_changes", "ally", "hp", "decrease"), "unfavorable"),
        OutcomeRule(r("hero_changes", "enemy", "alive", "to_false"), "favorable"),
        OutcomeRule(r("hero_changes", "ally", "alive", "to_false"), "unfavorable"),
        OutcomeRule(r("minion_wave_changes", "ally", "in_enemy_turret_range",
                      "to_true"), "favorable", 0.5),
        OutcomeRule(r("minion_wave_changes", "enemy", "in_enemy_turret_range",
                      "to_true"), "unfavorable", 0.5),
        OutcomeRule(r("dragon_status_changes", "any", "under_attack", "to_true"),
                    "favorable"),
    ))


def flip_perspective(rules: OutcomeRules) -> OutcomeRules:
    """The same rules viewed from the other team.

    Team-anchored patterns swap teams; team-agnostic patterns keep matching
    the same records, so their polarity flips instead. For mirrored rule
    sets this makes the polarity score exactly antisymmetric.
    """
    swap = {"ally": "enemy", "enemy": "ally"}
    flipped = []
    for rule in rules.rules:
        if rule.pattern.team == "any":
            polarity = ("unfavorable" if rule.polarity == "favorable"
                        else "favorable")
            flipped.append(replace(rule, polarity=polarity))
        else:
            flipped.append(replace(
                rule, pattern=replace(rule.pattern,
                                      team=swap[rule.pattern.team])))
    return OutcomeRules(rules=tuple(flipped),
                        perspective=swap.get(rules.perspective, "ally"))


def classify_outcome(delta: StateDelta, rules: OutcomeRules | None = None
                     ) -> tuple[float, str]:
    """Polarity score and label of a state change under the rules."""
    rules = rules or default_outcome_rules()
    delta = canonicalize(delta)
    score = 0.0
    for key in COMPONENT_KEYS:
        for record in delta.component(key):
            for rule in rules.rules:
                if rule.pattern.matches(key, record):
                    score += rule.weight if rule.polarity == "favorable" \
                        else -rule.weight
                    break
    label = "positive" if score > 0 else "negative" if score < 0 else "neutral"
    return score, label


# --- downstream action selection --------------------------------------------------------

@dataclass(frozen=True)
class CandidateOutcome:
    action: ActionLabel
    delta: StateDelta | None
    score: float
    label: str
    failed: bool = False


@dataclass(frozen=True)
class SelectionResult:
    chosen: ActionLabel
    outcomes: tuple[CandidateOutcome, ...]
    tie: bool


def select_action(state: GameState, forecaster, k: int = 4,
                  rules: OutcomeRules | None = None,
                  candidates: list[ActionLabel] | None = None
                  ) -> SelectionResult:
    """Pick the candidate whose forecast outcome classifies best.

    ``forecaster`` maps (state, action) -> StateDelta. With no external
    ranking head, the full registry is evaluated exhaustively and the top-k
    by polarity form the considered set; ties resolve to the earliest action
    in registry order and are flagged in the result.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rules = rules or default_outcome_rules()
    pool = candidates if candidates is not None else list(REGISTRY)
    outcomes = []
    for a in pool:
        try:
            delta = forecaster(state, a)
        except Exception as e:  # per-candidate failure: skip and log
            log.warning("forecast failed for %s: %s", a.name, e)
            outcomes.append(CandidateOutcome(a, None, 0.0, "neutral", failed=True))
            continue
        score, label = classify_outcome(delta, rules)
        outcomes.append(CandidateOutcome(a, delta, score, label))
    usable = [o for o in outcomes if not o.failed]
    if not usable:
        raise AllCandidatesFailed("every candidate forecast failed")
    ranked = sorted(usable, key=lambda o: (-o.score, registry_index(o.action)))
    considered = ranked[:k]
    best = considered[0]
    tie = sum(1 for o in considered if o.score == best.score) > 1
    return SelectionResult(chosen=best.action, outcomes=tuple(outcomes), tie=tie)


# --- rendering ----------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.4f}"


def render_table(report: EvalReport) -> str:
    lines = []
    ds = sorted(report.per_difficulty)
    header = "difficulty      " + "".join(f"d={d}      " for d in ds)
    lines.append(header.rstrip())
    lines.append("count           " + "".join(
        f"{report.per_difficulty[d][0]:<9}" for d in ds).rstrip())
    lines.append("mean_score      " + "".join(
        f"{_fmt(report.per_difficulty[d][1]):<9}" for d in ds).rstrip())
    lines.append("")
    lines.append(f"overall_score     {_fmt(report.overall_score)}")
    lines.append(f"exact_match_rate  {_fmt(report.exact_match_rate)}")
    lines.append(f"sample_count      {report.sample_count}")
    return "\n".join(lines) + "\n"


def report_render(report: EvalReport, telemetry=None, out_dir: str = ".") -> dict:
    """Write the report bundle; returns {artifact name: path}.

    Bundle: structured report, human-readable difficulty table, histogram
    bins, and (when telemetry is given) plot-ready reward/length series.
    Rendering is deterministic: re-rendering the same inputs is
    byte-identical.
    """
    paths = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
        report_path = os.path.join(out_dir, "report.json")
        with open(report_path, "w", encoding="utf-8") as f:
            json.dump(report.to_obj(), f, indent=2, sort_keys=True)
            f.write("\n")
        paths["report"] = report_path
        table_path = os.path.join(out_dir, "table.txt")
        with open(table_path, "w", encoding="utf-8") as f:
            f.write(render_table(report))
        paths["table"] = table_path
        hist_path = os.path.join(out_dir, "histogram.csv")
        with open(hist_path, "w", encoding="utf-8") as f:
            f.write("bin_lo,bin_hi,count\n")
            for i, count in enumerate(report.histogram):
                f.write(f"{i / 10:.1f},{(i + 1) / 10:.1f},{count}\n")
        paths["histogram"] = hist_path
        if telemetry is not None:
            for name, attr in (("reward", "mean_reward"), ("length", "mean_len")):
                series_path = os.path.join(out_dir, f"{name}_vs_step.csv")
                with open(series_path, "w", encoding="utf-8") as f:
                    f.write("step,value\n")
                    for rec in telemetry:
                        f.write(f"{rec.step},{getattr(rec, attr)!r}\n")
                paths[name] = series_path
    except OSError as e:
        raise IoFailure(f"cannot write report bundle in {out_dir}: {e}") from e
    return paths
