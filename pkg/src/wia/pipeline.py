"""Replay pipeline: raw trajectories in, balanced triplet datasets out.

The pipeline annotates each state of a time-ordered trajectory with a
strategic action, filters out dead-hero states and stretches of inactivity,
then pairs adjacent states into (state, action, state-change) triplets:
adjacent pairs more than 60 s apart are skipped, pairs with an unchanged
action are skipped, and pairs whose diff is empty carry no signal and are
dropped. Matches are balanced to an equal win/loss count per hero with a
per-hero cap before training.

Datasets are line-delimited JSON, one triplet per line, with a manifest of
counts written alongside.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .actions import NONE_ACTION, ActionLabel, parse_action
from .diff import (COMPONENT_KEYS, StateDelta, delta_from_obj, delta_to_obj,
                   difficulty, state_diff)
from .errors import (InvariantViolation, IoFailure, MalformedDocument,
                     SchemaViolation, UnorderedTrajectory)
from .state import GameState, redact_match_id, state_from_obj, state_to_obj

MAX_HORIZON_S = 60
DEFAULT_INACTIVITY_RUN = 3
DEFAULT_MAX_PER_HERO = 200


@dataclass(frozen=True)
class WiaTriplet:
    """One training/eval sample: state, action taken, resulting change."""

    state: GameState
    action: ActionLabel
    delta: StateDelta
    horizon_s: int
    provenance: tuple[str, int]  # (match hash, source pair index)

    def __post_init__(self):
        if not 1 <= self.horizon_s <= MAX_HORIZON_S:
            raise InvariantViolation(
                f"horizon_s {self.horizon_s} outside 1..{MAX_HORIZON_S}",
                path="horizon_s")
        if difficulty(self.delta) < 1:
            raise InvariantViolation("triplet with empty delta", path="delta")


@dataclass(frozen=True)
class MatchRecord:
    """A match's triplets plus the tags balancing needs."""

    match_hash: str
    hero: str
    win: bool
    triplets: tuple[WiaTriplet, ...]


@dataclass
class DatasetManifest:
    sample_count: int = 0
    per_difficulty: dict = field(default_factory=dict)      # d -> count
    per_change_type: dict = field(default_factory=dict)     # component key -> count
    win_count: int = 0
    loss_count: int = 0
    per_hero_matches: dict = field(default_factory=dict)    # hero -> match count

    @staticmethod
    def percentage(count: int, total: int) -> float:
        """Share of total as a percentage rounded to 2 decimals; 0.00 when empty."""
        if total == 0:
            return 0.0
        return round(100.0 * count / total, 2)

    def to_obj(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "per_difficulty": {str(d): n for d, n in sorted(self.per_difficulty.items())},
            "per_difficulty_pct": {
                str(d): self.percentage(n, self.sample_count)
                for d, n in sorted(self.per_difficulty.items())},
            "per_change_type": dict(sorted(self.per_change_type.items())),
            "per_change_type_pct": {
                k: self.percentage(n, self.sample_count)
                for k, n in sorted(self.per_change_type.items())},
            "win_count": self.win_count,
            "loss_count": self.loss_count,
            "per_hero_matches": dict(sorted(self.per_hero_matches.items())),
        }


def build_manifest(triplets: list[WiaTriplet],
                   matches: list[MatchRecord] | None = None) -> DatasetManifest:
    m = DatasetManifest(sample_count=len(triplets))
    for tr in triplets:
        d = difficulty(tr.delta)
        m.per_difficulty[d] = m.per_difficulty.get(d, 0) + 1
        for key in COMPONENT_KEYS:
            if tr.delta.component(key):
                m.per_change_type[key] = m.per_change_type.get(key, 0) + 1
    for key in COMPONENT_KEYS:
        m.per_change_type.setdefault(key, 0)
    if matches:
        for match in matches:
            if match.win:
                m.win_count += 1
            else:
                m.loss_count += 1
            m.per_hero_matches[match.hero] = m.per_hero_matches.get(match.hero, 0) + 1
    return m


# --- annotation & filtering -----------------------------------------------------

def annotate(states: list[GameState], annotator) -> list[tuple[GameState, ActionLabel]]:
    """Pair each state with the annotator's action label, order preserved.

    ``annotator`` maps (states, index) -> ActionLabel and must be total; use
    ``logged_annotator`` for simulator output that already carries actions.
    """
    for prev, cur in zip(states, states[1:]):
        if cur.t <= prev.t:
            raise UnorderedTrajectory(
                f"timestamps not strictly increasing: {prev.t} -> {cur.t}")
    return [(s, annotator(states, i)) for i, s in enumerate(states)]


def constant_annotator(label: ActionLabel):
    return lambda states, i: label


def logged_annotator(actions: list[ActionLabel]):
    """Annotator for trajectories whose true actions were logged alongside."""
    return lambda states, i: actions[i]


def filter_inactive(pairs: list[tuple[GameState, ActionLabel]],
                    inactivity_run: int = DEFAULT_INACTIVITY_RUN
                    ) -> list[tuple[GameState, ActionLabel]]:
    """Drop dead-primary states and runs of >= ``inactivity_run`` None actions.

    Both criteria are marked against the original sequence and removed in a
    single sweep, so a death inside a None run cannot split the run.
    """
    drop = [not s.primary_hero.alive for s, _ in pairs]
    run_start = 0
    for i in range(len(pairs) + 1):
        at_end = i == len(pairs)
        is_none = (not at_end) and pairs[i][1] == NONE_ACTION
        if not is_none:
            if i - run_start >= inactivity_run:
                for j in range(run_start, i):
                    drop[j] = True
            run_start = i + 1
    return [p for p, d in zip(pairs, drop) if not d]


# --- triplet extraction ------------------------------------------------------------

def extract_triplets(pairs: list[tuple[GameState, ActionLabel]]
                     ) -> list[WiaTriplet]:
    """Adjacent-pair extraction with the 60 s skip and changed-action guard.

    A pair is emitted only if the gap is at most 60 s, the action changes
    between the two states, and the resulting diff is non-empty.
    """
    out = []
    for i in range(len(pairs) - 1):
        (s_cur, a_cur), (s_next, a_next) = pairs[i], pairs[i + 1]
        gap = s_next.t - s_cur.t
        if gap > MAX_HORIZON_S:
            continue
        if a_cur == a_next:
            continue
        delta = state_diff(s_cur, s_next)
        if delta.is_empty():
            continue
        out.append(WiaTriplet(
            state=s_cur, action=a_cur, delta=delta, horizon_s=gap,
            provenance=(redact_match_id(s_cur.match_id), i)))
    return out


# --- balancing ------------------------------------------------------------------------

@dataclass(frozen=True)
class BalancePolicy:
    max_per_hero: int = DEFAULT_MAX_PER_HERO
    seed: int = 0


@dataclass
class BalanceReport:
    """Warn-level record of heroes that came in under the balancing target."""

    under_target: dict = field(default_factory=dict)  # hero -> matches kept

    def __bool__(self):
        return bool(self.under_target)


def balance(matches: list[MatchRecord], policy: BalancePolicy | None = None
            ) -> tuple[list[MatchRecord], BalanceReport]:
    """Equalize win/loss counts per hero and cap matches per hero.

    Keeps min(wins, losses, cap/2) of each outcome per hero, sampled
    deterministically from the seed. Heroes landing below the cap are listed
    in the report; that is a warning, never a failure.
    """
    policy = policy or BalancePolicy()
    rng = random.Random(policy.seed)
    report = BalanceReport()
    kept: list[MatchRecord] = []
    heroes = sorted({m.hero for m in matches})
    for hero in heroes:
        wins = sorted((m for m in matches if m.hero == hero and m.win),
                      key=lambda m: m.match_hash)
        losses = sorted((m for m in matches if m.hero == hero and not m.win),
                        key=lambda m: m.match_hash)
        k = min(len(wins), len(losses), policy.max_per_hero // 2)
        kept.extend(rng.sample(wins, k))
        kept.extend(rng.sample(losses, k))
        if 2 * k < policy.max_per_hero:
            report.under_target[hero] = 2 * k
    kept.sort(key=lambda m: m.match_hash)
    return kept, report


# --- dataset io ---------------------------------------------------------------------

def triplet_to_obj(tr: WiaTriplet) -> dict:
    return {
        "state": state_to_obj(tr.state),
        "action": tr.action.to_obj(),
        "delta": delta_to_obj(tr.delta),
        "horizon_s": tr.horizon_s,
        "provenance": {"match": tr.provenance[0], "index": tr.provenance[1]},
    }


def triplet_from_obj(obj, line: int | None = None) -> WiaTriplet:
    try:
        if not isinstance(obj, dict) or set(obj) != {
                "state", "action", "delta", "horizon_s", "provenance"}:
            raise SchemaViolation("triplet needs exactly state/action/delta/"
                                  "horizon_s/provenance", path="$")
        prov = obj["provenance"]
        if not isinstance(prov, dict) or set(prov) != {"match", "index"}:
            raise SchemaViolation("provenance needs match and index",
                                  path="provenance")
        horizon = obj["horizon_s"]
        if not isinstance(horizon, int) or isinstance(horizon, bool):
            raise SchemaViolation("horizon_s must be an integer", path="horizon_s")
        return WiaTriplet(
            state=state_from_obj(obj["state"]),
            action=parse_action(obj["action"]),
            delta=delta_from_obj(obj["delta"]),
            horizon_s=horizon,
            provenance=(prov["match"], prov["index"]),
        )
    except (SchemaViolation, InvariantViolation) as e:
        if line is not None and isinstance(e, SchemaViolation) and e.line is None:
            raise SchemaViolation(str(e), line=line) from e
        raise


def write_dataset(triplets: list[WiaTriplet], path,
                  matches: list[MatchRecord] | None = None) -> DatasetManifest:
    """Write one triplet per line plus a ``<path>.manifest.json`` sidecar."""
    manifest = build_manifest(triplets, matches)
    try:
        with open(path, "w", encoding="utf-8") as f:
            for tr in triplets:
                f.write(json.dumps(triplet_to_obj(tr), sort_keys=True,
                                   separators=(",", ":")) + "\n")
        with open(f"{path}.manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest.to_obj(), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write dataset {path}: {e}") from e
    return manifest


def read_dataset(path) -> list[WiaTriplet]:
    out = []
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise IoFailure(f"cannot read dataset {path}: {e}") from e
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"bad JSON: {e.msg}", line=lineno) from e
        out.append(triplet_from_obj(obj, line=lineno))
    return out


# --- whole-trajectory convenience ----------------------------------------------------

def process_trajectory(states: list[GameState], annotator, *,
                       inactivity_run: int = DEFAULT_INACTIVITY_RUN
                       ) -> list[WiaTriplet]:
    """annotate -> filter_inactive -> extract_triplets in one call."""
    return extract_triplets(
        filter_inactive(annotate(states, annotator), inactivity_run))
