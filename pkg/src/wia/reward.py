"""Rule-based outcome reward for predicted state changes.

A completion is scored against the ground-truth delta one component key at a
time: 1 for an exact match of the canonical record set, 0.5 for a partial
match, 0 otherwise. The final reward is the weight-normalized mean over the
four canonical keys, so it always lands in [0, 1]. There is no format reward
and no learned model anywhere in the loop; extraction failures score 0 so a
bad sample can never interrupt a training run.

"Partially matches" is not a universal notion; the default rule counts a key
as partial when the prediction shares at least one (entity, field, new) triple
with the truth, or when it names exactly the right entities but gets their
fields wrong. Alternative rules can be registered under a name and selected
via ``RewardSpec.partial_rule``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diff import COMPONENT_KEYS, ChangeRecord, StateDelta, canonicalize, parse_delta
from .errors import MalformedAnswer, MalformedDocument, NoAnswerTag, SchemaViolation

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)


@dataclass(frozen=True)
class KeyScore:
    key: str
    score: float  # 1, 0.5, or 0
    rationale: str  # "exact", "partial", or "miss"


@dataclass(frozen=True)
class RewardSpec:
    """Weights and matching policy for the outcome reward.

    ``empty_key_policy`` controls Eq.-style normalization: "count" (default)
    always averages over all four canonical keys; "skip" averages only over
    keys the truth marks as changed (falling back to all four when the truth
    is entirely empty, to keep the reward total).
    """

    weights: dict = field(default_factory=lambda: {k: 1.0 for k in COMPONENT_KEYS})
    partial_rule: str = "default"
    empty_key_policy: str = "count"

    def __post_init__(self):
        if set(self.weights) != set(COMPONENT_KEYS):
            raise ValueError(f"weights must cover exactly {list(COMPONENT_KEYS)}")
        if any(w <= 0 for w in self.weights.values()):
            raise ValueError("all weights must be positive")
        if self.partial_rule not in _PARTIAL_RULES:
            raise ValueError(f"unknown partial_rule {self.partial_rule!r}")
        if self.empty_key_policy not in ("count", "skip"):
            raise ValueError(f"unknown empty_key_policy {self.empty_key_policy!r}")


def _triples(records: tuple[ChangeRecord, ...]) -> set:
    return {(r.entity, r.field, r.new) for r in records}


def _default_partial(predicted, truth) -> bool:
    if _triples(predicted) & _triples(truth):
        return True
    pred_entities = {r.entity for r in predicted}
    true_entities = {r.entity for r in truth}
    return bool(pred_entities) and pred_entities == true_entities


def _entity_overlap_partial(predicted, truth) -> bool:
    # Looser rule: naming any truly-changed entity counts as partial.
    return bool({r.entity for r in predicted} & {r.entity for r in truth})


_PARTIAL_RULES = {
    "default": _default_partial,
    "entity_overlap": _entity_overlap_partial,
}


def score_key(predicted: tuple[ChangeRecord, ...],
              truth: tuple[ChangeRecord, ...],
              key: str = "",
              partial_rule: str = "default") -> KeyScore:
    """Score one component key: exact (1), partial (0.5), or miss (0).

    Two empty record sets are an exact match: correctly predicting "no
    change" is as right as predicting a change.
    """
    if set(predicted) == set(truth):
        return KeyScore(key, 1.0, "exact")
    if _PARTIAL_RULES[partial_rule](predicted, truth):
        return KeyScore(key, 0.5, "partial")
    return KeyScore(key, 0.0, "miss")


def reward(predicted: StateDelta, truth: StateDelta,
           spec: RewardSpec | None = None) -> tuple[float, list[KeyScore]]:
    """Weighted mean of per-key scores over the four canonical keys."""
    spec = spec or RewardSpec()
    predicted = canonicalize(predicted)
    truth = canonicalize(truth)
    keys = list(COMPONENT_KEYS)
    if spec.empty_key_policy == "skip":
        nonempty = [k for k in keys if truth.component(k)]
        keys = nonempty or keys
    scores = [score_key(predicted.component(k), truth.component(k),
                        key=k, partial_rule=spec.partial_rule)
              for k in keys]
    total_w = sum(spec.weights[k] for k in keys)
    value = sum(spec.weights[s.key] * s.score for s in scores) / total_w
    return value, scores


def extract_answer(completion: str) -> StateDelta:
    """Pull the predicted delta out of a model completion.

    The last ``<answer>...</answer>`` span wins (models often retry); any
    ``<think>`` content is ignored entirely.
    """
    spans = _ANSWER_RE.findall(completion)
    if not spans:
        raise NoAnswerTag("completion has no <answer>...</answer> span")
    try:
        return parse_delta(spans[-1].strip())
    except (MalformedDocument, SchemaViolation, ValueError) as e:
        raise MalformedAnswer(str(e)) from e


@dataclass(frozen=True)
class CompletionScore:
    """Reward for one completion; ``failure`` tags extraction problems."""

    reward: float
    key_scores: tuple[KeyScore, ...] = ()
    failure: str | None = None  # None | "no_answer_tag" | "malformed_answer"


def batch_reward(completions: list[str], truth: StateDelta,
                 spec: RewardSpec | None = None) -> list[CompletionScore]:
    """Score a group of completions against one ground truth.

    Extraction failures become zero-reward entries with a diagnostic tag;
    order is preserved, and nothing here ever raises on model output.
    """
    spec = spec or RewardSpec()
    truth = canonicalize(truth)
    out = []
    for text in completions:
        try:
            predicted = extract_answer(text)
        except NoAnswerTag:
            out.append(CompletionScore(0.0, failure="no_answer_tag"))
            continue
        except MalformedAnswer:
            out.append(CompletionScore(0.0, failure="malformed_answer"))
            continue
        value, scores = reward(predicted, truth, spec)
        out.append(CompletionScore(value, tuple(scores)))
    return out
