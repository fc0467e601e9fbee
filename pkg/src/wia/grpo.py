"""Desk-scale group-relative policy optimization with exact gradients.

The trainer optimizes a linear-softmax ``ToyPolicy`` that emits short token
sequences in a fixed micro-grammar: for each of the four state-change
components it picks a change class (``none`` or one of three qualitative
change shapes), and for every non-``none`` class one magnitude token. A
shipped decoding table expands a token sequence plus the prompt context
(state, action, horizon) into a concrete ``StateDelta``, so the real
rule-based verifier scores every rollout and the full loop —
sample a group, score, normalize advantages, clipped surrogate with a KL
anchor, gradient step — runs without any neural network.

Everything is exact: log-probabilities come from a masked log-softmax and the
loss gradient is assembled analytically, which is what makes the
finite-difference acceptance check meaningful.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionLabel
from .diff import ChangeRecord, StateDelta, canonicalize, difficulty
from .errors import DivergedLoss, GroupTooSmall, MissingTrack
from .reward import RewardSpec, reward as verify_reward
from .sim import (DRAGON_PIT, LANE_REGION, _hero_action_region, _mix,
                  _stage_fields, _wave_stage, load_rule_table)
from .state import GameState

log = logging.getLogger(__name__)


# --- group-relative advantages (per-sequence, broadcast to tokens) ----------------

def compute_advantages(rewards: list[float], std_eps: float = 1e-8) -> list[float]:
    """Normalize group rewards to advantages: (r - mean) / (pop std + eps).

    A zero-variance group yields exactly zero advantages (the update is a
    no-op) instead of dividing by the epsilon alone.
    """
    if len(rewards) < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {len(rewards)}")
    r = np.asarray(rewards, dtype=float)
    mean = r.mean()
    std = math.sqrt(float(((r - mean) ** 2).mean()))
    if std == 0.0:
        return [0.0] * len(rewards)
    return list((r - mean) / (std + std_eps))


def kl_term(logp_ref_t: float, logp_theta_t: float) -> float:
    """Token-level KL estimate: rho - log(rho) - 1 with rho = p_ref / p_theta.

    Non-negative everywhere, zero only at equality. The exponent is clamped
    at +-50 to keep a pathological log-prob gap finite.
    """
    diff = logp_ref_t - logp_theta_t
    if abs(diff) > 50.0:
        log.warning("kl_term clamping log-prob gap %.3g", diff)
        diff = max(-50.0, min(50.0, diff))
    return math.exp(diff) - diff - 1.0


def _dkl_dlogp_theta(logp_ref_t: float, logp_theta_t: float) -> float:
    diff = max(-50.0, min(50.0, logp_ref_t - logp_theta_t))
    return 1.0 - math.exp(diff)


# --- completions -------------------------------------------------------------------

@dataclass(eq=False)
class Completion:
    """One sampled token sequence with its three log-prob tracks.

    ``contexts`` holds the per-token (features, valid token ids) the policy
    saw, so the current-policy track and its gradient can be recomputed
    exactly under any parameter value.
    """

    tokens: tuple[int, ...]
    contexts: tuple[tuple[np.ndarray, tuple[int, ...]], ...]
    logp_theta: tuple[float, ...]
    logp_old: tuple[float, ...]
    logp_ref: tuple[float, ...]
    reward: float = 0.0
    advantage: float = 0.0

    def __post_init__(self):
        n = len(self.tokens)
        for track in (self.logp_theta, self.logp_old, self.logp_ref):
            if track is None or len(track) != n:
                raise MissingTrack(
                    "completion needs theta/old/ref log-probs per token")
        if len(self.contexts) != n:
            raise MissingTrack("completion needs one context per token")


@dataclass(eq=False)
class CompletionGroup:
    prompt_id: str
    completions: list[Completion]

    def __post_init__(self):
        if len(self.completions) < 2:
            raise GroupTooSmall("a group needs at least 2 completions")


@dataclass(frozen=True)
class TrainerConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    kl_coef: float = 0.01
    learning_rate: float = 0.05
    max_steps: int = 400
    std_eps: float = 1e-8
    seed: int = 0
    max_grad_norm: float = 0.5  # plain GD needs this for very large kl_coef

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.kl_coef < 0:
            raise ValueError("kl_coef must be non-negative")
        if self.group_size < 2:
            raise GroupTooSmall("group_size must be at least 2")


# --- the toy policy -----------------------------------------------------------------

class ToyPolicy:
    """Linear-softmax categorical sequence policy with exact gradients.

    Logits for every token are rows of a single (vocab, features) matrix
    applied to hand-crafted per-slot features; invalid tokens are masked out
    of the softmax, so probabilities over the valid set sum to one at every
    position.
    """

    def __init__(self, vocab_size: int, n_features: int,
                 init_scale: float = 0.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.W = init_scale * rng.standard_normal((vocab_size, n_features))

    @property
    def vocab_size(self) -> int:
        return self.W.shape[0]

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "ToyPolicy":
        p = ToyPolicy(*self.W.shape)
        p.W = self.W.copy()
        return p

    def log_probs(self, phi: np.ndarray, valid: tuple[int, ...]) -> np.ndarray:
        """Masked log-softmax over the valid token ids."""
        logits = self.W[list(valid)] @ phi
        m = logits.max()
        z = m + math.log(np.exp(logits - m).sum())
        return logits - z

    def logp(self, phi: np.ndarray, valid: tuple[int, ...], token: int) -> float:
        return float(self.log_probs(phi, valid)[valid.index(token)])

    def sample(self, phi: np.ndarray, valid: tuple[int, ...],
               rng: np.random.Generator) -> tuple[int, float]:
        lp = self.log_probs(phi, valid)
        p = np.exp(lp)
        idx = int(rng.choice(len(valid), p=p / p.sum()))
        return valid[idx], float(lp[idx])

    def grad_logp_rows(self, phi: np.ndarray, valid: tuple[int, ...],
                       token: int) -> np.ndarray:
        """d log p(token) / d logits over the valid rows: e_token - softmax."""
        p = np.exp(self.log_probs(phi, valid))
        g = -p
        g[valid.index(token)] += 1.0
        return g


# --- GRPO loss and gradient -----------------------------------------------------------

def grpo_loss(group: CompletionGroup, policy: ToyPolicy,
              cfg: TrainerConfig) -> tuple[float, np.ndarray]:
    """Clipped surrogate loss with a KL anchor, and its exact gradient.

    The current-policy log-probs are recomputed from the stored contexts
    under ``policy``; the old and reference tracks are constants. The
    gradient flows only through the current-policy terms, picking the active
    branch of the min/clip exactly as the forward value does.
    """
    total_tokens = sum(len(c.tokens) for c in group.completions)
    if total_tokens == 0:
        return 0.0, np.zeros_like(policy.W)
    eps, beta = cfg.clip_eps, cfg.kl_coef
    loss_sum = 0.0
    grad = np.zeros_like(policy.W)
    for c in group.completions:
        adv = c.advantage
        for t, token in enumerate(c.tokens):
            phi, valid = c.contexts[t]
            lp_theta = policy.logp(phi, valid, token)
            lp_old = c.logp_old[t]
            lp_ref = c.logp_ref[t]
            rho = math.exp(lp_theta - lp_old)
            clipped = min(max(rho, 1.0 - eps), 1.0 + eps)
            unclipped_term = rho * adv
            clipped_term = clipped * adv
            surrogate = min(unclipped_term, clipped_term)
            k = kl_term(lp_ref, lp_theta)
            loss_sum += surrogate - beta * k
            # d surrogate / d lp_theta
            if unclipped_term <= clipped_term:
                dsur = rho * adv
            else:
                dsur = rho * adv if (1.0 - eps) < rho < (1.0 + eps) else 0.0
            dterm = dsur - beta * _dkl_dlogp_theta(lp_ref, lp_theta)
            # dL/d lp_theta = -(1/T) * dterm; chain through the softmax rows.
            coeff = -dterm / total_tokens
            rows = policy.grad_logp_rows(phi, valid, token)
            grad[list(valid)] += coeff * np.outer(rows, phi)
    return -loss_sum / total_tokens, grad


# --- micro-grammar: tokens, features, decoding table -----------------------------------

N_CLASSES = 4  # per component, class 0 is always "none"
MAG_SCALES = (0.5, 1.0, 1.5, 2.0)
_COMPONENTS = ("minion", "turret", "hero", "dragon")
CLASS_NAMES = {
    "minion": ("none", "advance", "enter_range", "cleared"),
    "turret": ("none", "siege_chip", "assault", "flag_flip"),
    "hero": ("none", "deaths", "move", "economy"),
    "dragon": ("none", "assault", "disengage", "respawn"),
}
VOCAB_SIZE = 8 * N_CLASSES  # 16 class tokens + 16 per-component magnitude tokens


def class_token(comp: int, cls: int) -> int:
    return comp * N_CLASSES + cls


def mag_token(comp: int, mag: int) -> int:
    return 16 + comp * N_CLASSES + mag


def token_name(token: int) -> str:
    if token < 16:
        comp, cls = divmod(token, N_CLASSES)
        return f"{_COMPONENTS[comp]}:{CLASS_NAMES[_COMPONENTS[comp]][cls]}"
    comp, mag = divmod(token - 16, N_CLASSES)
    return f"{_COMPONENTS[comp]}:mag:x{MAG_SCALES[mag]}"


def _boundaries_crossed(t: int, dt: int, phase: int, period: int) -> int:
    """How many u in (t, t+dt] satisfy (u + phase) % period == 0."""
    return (t + dt + phase) // period - (t + phase) // period


class PromptFeaturizer:
    """Hand-crafted features of (state, action, horizon) for the toy policy."""

    N_PROMPT = 32

    def __init__(self, rules: dict | None = None):
        self.rules = rules or load_rule_table()

    def _wave_phase(self, team: str, lane: str) -> int:
        phase = self.rules["wave_lane_phase"][lane]
        return phase + (self.rules["wave_enemy_phase_offset_s"]
                        if team == "enemy" else 0)

    def prompt_features(self, s: GameState, a: ActionLabel, dt: int) -> np.ndarray:
        r = self.rules
        x = np.zeros(self.N_PROMPT)
        x[0] = 1.0
        cats = ("None", "Dragon", "Tower", "Defense", "Hero", "Line", "Buff",
                "Jungle", "Grouping", "Recall")
        x[1 + cats.index(a.category)] = 1.0
        buckets = (10, 25, 45, 10**9)
        x[11 + next(i for i, b in enumerate(buckets) if dt <= b)] = 1.0
        towers = {(tw.team, tw.site): tw for tw in s.towers}
        i = 15
        any_boundary = any_siege = stage1_boundary = False
        for w in s.minion_waves:
            stage = _wave_stage(w.team, w.lane, w.zone, w.in_enemy_turret_range)
            crossed = _boundaries_crossed(
                s.t, dt, self._wave_phase(w.team, w.lane),
                r["wave_advance_period_s"]) > 0
            any_boundary |= crossed
            other = "enemy" if w.team == "ally" else "ally"
            if stage == 2 and towers[(other, w.lane)].hp > 0:
                any_siege = True
            if stage == 1 and crossed:
                stage1_boundary = True
        x[i] = any_boundary; x[i + 1] = any_siege; x[i + 2] = stage1_boundary
        x[i + 3] = _boundaries_crossed(s.t, dt, 0, r["script_window_s"]) > 0
        x[i + 4] = _boundaries_crossed(s.t, dt, 0, r["farm_period_s"]) > 0
        x[i + 5] = any(d.under_attack for d in s.dragons)
        x[i + 6] = any(not d.alive for d in s.dragons)
        x[i + 7] = _boundaries_crossed(s.t, dt, 0, r["dragon_respawn_sweep_s"]) > 0
        x[i + 8] = _boundaries_crossed(s.t, dt, 0, r["respawn_sweep_s"]) > 0
        x[i + 9] = any(not h.alive for h in s.heroes)
        primary = s.primary_hero
        x[i + 10] = primary.hp < primary.max_hp
        x[i + 11] = primary.region == "fountain"
        x[i + 12] = any(tw.hp == 0 for tw in s.towers)
        x[i + 13] = any(tw.attacking for tw in s.towers)
        if a.category == "Hero":
            region = _hero_action_region(a.name)
            x[i + 14] = any(h.team == "enemy" and h.alive and h.region == region
                            for h in s.heroes)
        if a.category == "Dragon":
            kind = {"Lord": "lord", "Tyrant": "tyrant",
                    "Dragon King": "dragon_king"}[a.name]
            x[i + 15] = any(d.kind == kind and d.alive for d in s.dragons)
        if a.category == "Tower":
            site = {"Crystal": "crystal", "Top Tower": "top",
                    "Mid Tower": "mid", "Bot Tower": "bot"}[a.name]
            x[i + 16] = towers[("enemy", site)].hp > 0
        return x

    # slot layout: prompt features + component one-hot + slot-kind one-hot
    # + chosen-class one-hot (magnitude slots) + first-slot bit
    N_FEATURES = N_PROMPT + 4 + 2 + 4 + 1

    def slot_features(self, x: np.ndarray, comp: int, kind: int,
                      prev_class: int | None, first: bool) -> np.ndarray:
        phi = np.zeros(self.N_FEATURES)
        phi[:self.N_PROMPT] = x
        phi[self.N_PROMPT + comp] = 1.0
        phi[self.N_PROMPT + 4 + kind] = 1.0
        if prev_class is not None:
            phi[self.N_PROMPT + 6 + prev_class] = 1.0
        phi[self.N_PROMPT + 10] = 1.0 if first else 0.0
        return phi


def make_policy(seed: int = 0, init_scale: float = 0.0) -> ToyPolicy:
    return ToyPolicy(VOCAB_SIZE, PromptFeaturizer.N_FEATURES,
                     init_scale=init_scale, seed=seed)


# --- decoding table: token classes -> concrete state-change records ---------------------

class _DecodeContext:
    def __init__(self, s: GameState, a: ActionLabel, dt: int, rules: dict):
        self.s = s
        self.a = a
        self.dt = dt
        self.rules = rules
        self.towers = {(tw.team, tw.site): tw for tw in s.towers}
        self.dragons = {d.kind: d for d in s.dragons}

    def wave_phase(self, team, lane):
        return self.rules["wave_lane_phase"][lane] + (
            self.rules["wave_enemy_phase_offset_s"] if team == "enemy" else 0)

    def ticks(self, scale: float) -> int:
        return max(1, min(2 * self.dt, int(round(self.dt * scale))))


def _rec(entity, field_name, old, new):
    return ChangeRecord(entity, field_name, old, new)


def _decode_minion(ctx: _DecodeContext, cls: str, scale: float):
    records = []
    for w in ctx.s.minion_waves:
        key = f"{w.team}:{w.lane}:{w.wave_id}"
        stage = _wave_stage(w.team, w.lane, w.zone, w.in_enemy_turret_range)
        other = "enemy" if w.team == "ally" else "ally"
        if cls == "advance":
            k = _boundaries_crossed(ctx.s.t, ctx.dt,
                                    ctx.wave_phase(w.team, w.lane),
                                    ctx.rules["wave_advance_period_s"])
            if k == 0 or w.clearing_heroes:
                continue
            new_stage = stage
            for _ in range(k):
                if new_stage in (0, 1):
                    new_stage += 1
                elif new_stage == 2:
                    new_stage = 3 if ctx.towers[(other, w.lane)].hp == 0 else 0
                else:
                    new_stage = 0
            zone, in_range = _stage_fields(w.team, w.lane, new_stage)
        elif cls == "enter_range":
            if stage != 1:
                continue
            zone, in_range = _stage_fields(w.team, w.lane, 2)
        else:  # cleared
            if not w.clearing_heroes:
                continue
            zone, in_range = _stage_fields(w.team, w.lane, max(0, stage - 1))
            records.append(_rec(key, "clearing_heroes",
                                tuple(sorted(w.clearing_heroes)), ()))
        if zone != w.zone:
            records.append(_rec(key, "zone", w.zone, zone))
        if in_range != w.in_enemy_turret_range:
            records.append(_rec(key, "in_enemy_turret_range",
                                w.in_enemy_turret_range, in_range))
    return records


def _tower_records(tw, new_hp, sieged):
    records = []
    if new_hp != tw.hp:
        records.append(_rec(f"{tw.team}:{tw.site}", "hp", tw.hp, new_hp))
    new_attacking = sieged and new_hp > 0
    if new_attacking != tw.attacking:
        records.append(_rec(f"{tw.team}:{tw.site}", "attacking",
                            tw.attacking, new_attacking))
    return records


def _decode_turret(ctx: _DecodeContext, cls: str, scale: float):
    records = []
    r = ctx.rules
    if cls == "siege_chip":
        for w in ctx.s.minion_waves:
            stage = _wave_stage(w.team, w.lane, w.zone, w.in_enemy_turret_range)
            other = "enemy" if w.team == "ally" else "ally"
            if stage == 2:
                tw = ctx.towers[(other, w.lane)]
                if tw.hp > 0:
                    new_hp = max(0, tw.hp - r["wave_tower_dps"] * ctx.ticks(scale))
                    records.extend(_tower_records(tw, new_hp, True))
    elif cls == "assault":
        if ctx.a.category == "Tower":
            site = {"Crystal": "crystal", "Top Tower": "top", "Mid Tower": "mid",
                    "Bot Tower": "bot"}[ctx.a.name]
            tw = ctx.towers[("enemy", site)]
            if tw.hp > 0:
                new_hp = max(0, tw.hp - r["hero_tower_dps"] * ctx.ticks(scale))
                records.extend(_tower_records(tw, new_hp, True))
    else:  # flag_flip
        for w in ctx.s.minion_waves:
            stage = _wave_stage(w.team, w.lane, w.zone, w.in_enemy_turret_range)
            other = "enemy" if w.team == "ally" else "ally"
            tw = ctx.towers[(other, w.lane)]
            crossed = _boundaries_crossed(ctx.s.t, ctx.dt,
                                          ctx.wave_phase(w.team, w.lane),
                                          r["wave_advance_period_s"]) > 0
            if tw.hp == 0 or not crossed:
                continue
            if stage == 1 and not tw.attacking:
                records.append(_rec(f"{tw.team}:{tw.site}", "attacking",
                                    False, True))
            elif stage == 2 and tw.attacking:
                records.append(_rec(f"{tw.team}:{tw.site}", "attacking",
                                    True, False))
    # one record per (entity, field)
    seen = set()
    unique = []
    for rec in records:
        if (rec.entity, rec.field) not in seen:
            seen.add((rec.entity, rec.field))
            unique.append(rec)
    return unique


def _decode_hero(ctx: _DecodeContext, cls: str, scale: float):
    records = []
    s, r = ctx.s, ctx.rules
    primary = s.primary_hero
    if cls == "deaths":
        if ctx.a.category == "Hero":
            region = _hero_action_region(ctx.a.name)
            victims = [h for h in s.heroes
                       if h.team == "enemy" and h.alive and h.region == region]
        else:
            living = [h for h in s.heroes if h.team == "enemy" and h.alive]
            victims = sorted(living, key=lambda h: (h.hp, h.hero_id))[:1]
        for v in victims:
            key = f"{v.team}:{v.hero_id}"
            records.append(_rec(key, "alive", True, False))
            if v.hp > 0:
                records.append(_rec(key, "hp", v.hp, 0))
    elif cls == "move":
        dest = _action_destination(ctx.a, primary.region)
        if dest is not None and dest != primary.region:
            records.append(_rec(f"ally:{primary.hero_id}", "region",
                                primary.region, dest))
    else:  # economy
        if ctx.a.category in ("Buff", "Jungle"):
            lumps = _boundaries_crossed(s.t, ctx.dt, 0, r["farm_period_s"])
            if lumps > 0:
                key = f"ally:{primary.hero_id}"
                new_gold = primary.gold + r["farm_gold"] * lumps
                records.append(_rec(key, "gold", primary.gold, new_gold))
                new_level = min(15, 1 + new_gold // r["level_gold_step"])
                if new_level != primary.level:
                    records.append(_rec(key, "level", primary.level, new_level))
    return records


def _action_destination(a: ActionLabel, current: str) -> str | None:
    if a.category == "None":
        return None
    if a.category == "Recall":
        return "fountain"
    if a.category == "Dragon":
        return DRAGON_PIT[{"Lord": "lord", "Tyrant": "tyrant",
                           "Dragon King": "dragon_king"}[a.name]]
    if a.category == "Tower":
        site = {"Crystal": "crystal", "Top Tower": "top", "Mid Tower": "mid",
                "Bot Tower": "bot"}[a.name]
        return "enemy_highground" if site == "crystal" else LANE_REGION[site]
    if a.category == "Defense":
        site = {"Defend Crystal": "crystal", "Defend Top Tower": "top",
                "Defend Mid Tower": "mid", "Defend Bot Tower": "bot"}[a.name]
        return "ally_highground" if site == "crystal" else LANE_REGION[site]
    if a.category in ("Hero", "Grouping"):
        return _hero_action_region(a.name)
    if a.category == "Line":
        if a.name == "Ally High-ground Minions":
            return "ally_highground"
        if a.name == "Enemy High-ground Minions":
            return "enemy_highground"
        return LANE_REGION[a.name.split()[0].lower()]
    # Buff / Jungle
    from .sim import _JUNGLE_REGION
    return _JUNGLE_REGION[a.name]


def _decode_dragon(ctx: _DecodeContext, cls: str, scale: float):
    records = []
    r = ctx.rules
    if cls == "assault":
        if ctx.a.category == "Dragon":
            kind = {"Lord": "lord", "Tyrant": "tyrant",
                    "Dragon King": "dragon_king"}[ctx.a.name]
        else:
            attacked = [d.kind for d in ctx.s.dragons if d.under_attack]
            kind = attacked[0] if attacked else "tyrant"
        d = ctx.dragons.get(kind)
        if d is None or not d.alive:
            return records
        new_hp = max(0, d.hp - r["dragon_dps"] * ctx.ticks(scale))
        if new_hp != d.hp:
            records.append(_rec(kind, "hp", d.hp, new_hp))
        if new_hp == 0:
            records.append(_rec(kind, "alive", True, False))
            if d.under_attack:
                records.append(_rec(kind, "under_attack", True, False))
        elif not d.under_attack:
            records.append(_rec(kind, "under_attack", False, True))
    elif cls == "disengage":
        for d in ctx.s.dragons:
            if d.under_attack:
                records.append(_rec(d.kind, "under_attack", True, False))
    else:  # respawn
        if _boundaries_crossed(ctx.s.t, ctx.dt, 0,
                               r["dragon_respawn_sweep_s"]) > 0:
            for d in ctx.s.dragons:
                if not d.alive:
                    records.append(_rec(d.kind, "alive", False, True))
                    if d.hp != d.max_hp:
                        records.append(_rec(d.kind, "hp", d.hp, d.max_hp))
    return records


DECODING_TABLE = {
    "minion": _decode_minion,
    "turret": _decode_turret,
    "hero": _decode_hero,
    "dragon": _decode_dragon,
}

_COMPONENT_TO_KEY = {
    "minion": "minion_wave_changes",
    "turret": "turret_changes",
    "hero": "hero_changes",
    "dragon": "dragon_status_changes",
}


def decode_tokens(tokens: tuple[int, ...], s: GameState, a: ActionLabel,
                  dt: int, rules: dict | None = None) -> StateDelta:
    """Expand a grammar token sequence into a concrete StateDelta."""
    ctx = _DecodeContext(s, a, dt, rules or load_rule_table())
    parts = {key: () for key in _COMPONENT_TO_KEY.values()}
    i = 0
    while i < len(tokens):
        comp_idx, cls_idx = divmod(tokens[i], N_CLASSES)
        comp = _COMPONENTS[comp_idx]
        i += 1
        scale = 1.0
        if cls_idx != 0:
            mag_idx = (tokens[i] - 16) % N_CLASSES
            scale = MAG_SCALES[mag_idx]
            i += 1
            cls = CLASS_NAMES[comp][cls_idx]
            records = DECODING_TABLE[comp](ctx, cls, scale)
            parts[_COMPONENT_TO_KEY[comp]] = tuple(records)
    return canonicalize(StateDelta(**parts))


# --- rollout sampling ---------------------------------------------------------------

def sample_completion(policy: ToyPolicy, featurizer: PromptFeaturizer,
                      x: np.ndarray, rng: np.random.Generator,
                      ref_policy: ToyPolicy | None = None,
                      old_policy: ToyPolicy | None = None) -> Completion:
    """Sample one grammar-shaped sequence from ``policy`` and fill all tracks."""
    old_policy = old_policy or policy
    ref_policy = ref_policy or policy
    tokens, contexts, lp_theta, lp_old, lp_ref = [], [], [], [], []

    def emit(phi, valid):
        token, _ = old_policy.sample(phi, valid, rng)
        tokens.append(token)
        contexts.append((phi, valid))
        lp_theta.append(policy.logp(phi, valid, token))
        lp_old.append(old_policy.logp(phi, valid, token))
        lp_ref.append(ref_policy.logp(phi, valid, token))
        return token

    for comp in range(4):
        valid = tuple(class_token(comp, c) for c in range(N_CLASSES))
        phi = featurizer.slot_features(x, comp, 0, None, comp == 0)
        token = emit(phi, valid)
        cls_idx = token % N_CLASSES
        if cls_idx != 0:
            valid_m = tuple(mag_token(comp, m) for m in range(N_CLASSES))
            phi_m = featurizer.slot_features(x, comp, 1, cls_idx, False)
            emit(phi_m, valid_m)
    return Completion(tokens=tuple(tokens), contexts=tuple(contexts),
                      logp_theta=tuple(lp_theta), logp_old=tuple(lp_old),
                      logp_ref=tuple(lp_ref))


# --- training loop ---------------------------------------------------------------------

@dataclass
class TelemetryRecord:
    step: int
    mean_reward: float
    mean_len: float
    loss: float
    kl_mean: float

    def to_obj(self) -> dict:
        return {"step": self.step, "mean_reward": self.mean_reward,
                "mean_len": self.mean_len, "loss": self.loss,
                "kl_mean": self.kl_mean}


def train(dataset, policy: ToyPolicy, spec: RewardSpec | None = None,
          cfg: TrainerConfig | None = None
          ) -> tuple[ToyPolicy, list[TelemetryRecord]]:
    """Run the GRPO loop over a triplet dataset with the rule-based verifier.

    Per step: pick a prompt, sample a group of completions from the
    frozen-for-this-step old policy, decode each to a StateDelta, score it
    against the triplet's ground-truth delta, normalize advantages, take one
    clipped-surrogate gradient step. The reference policy is frozen at the
    start for the KL anchor.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    spec = spec or RewardSpec()
    cfg = cfg or TrainerConfig()
    rules = load_rule_table()
    featurizer = PromptFeaturizer(rules)
    ref_policy = policy.copy()
    telemetry: list[TelemetryRecord] = []
    for step_idx in range(cfg.max_steps):
        triplet = dataset[_mix(cfg.seed, 7, step_idx) % len(dataset)]
        x = featurizer.prompt_features(triplet.state, triplet.action,
                                       triplet.horizon_s)
        old_policy = policy.copy()
        completions = []
        for i in range(cfg.group_size):
            rng = np.random.default_rng(_mix(cfg.seed, 13, step_idx, i))
            c = sample_completion(policy, featurizer, x, rng,
                                  ref_policy=ref_policy, old_policy=old_policy)
            delta = decode_tokens(c.tokens, triplet.state, triplet.action,
                                  triplet.horizon_s, rules)
            c.reward, _ = verify_reward(delta, triplet.delta, spec)
            completions.append(c)
        advantages = compute_advantages([c.reward for c in completions],
                                        cfg.std_eps)
        for c, adv in zip(completions, advantages):
            c.advantage = adv
        group = CompletionGroup(prompt_id=f"{triplet.provenance[0]}:"
                                          f"{triplet.provenance[1]}",
                                completions=completions)
        loss, grad = grpo_loss(group, policy, cfg)
        if not math.isfinite(loss):
            raise DivergedLoss(
                f"non-finite loss at step {step_idx} on prompt {group.prompt_id}")
        norm = float(np.linalg.norm(grad))
        if cfg.max_grad_norm > 0 and norm > cfg.max_grad_norm:
            grad = grad * (cfg.max_grad_norm / norm)
        policy.W = policy.W - cfg.learning_rate * grad
        n_tokens = sum(len(c.tokens) for c in completions)
        kl_mean = sum(kl_term(c.logp_ref[t], c.logp_theta[t])
                      for c in completions
                      for t in range(len(c.tokens))) / n_tokens
        telemetry.append(TelemetryRecord(
            step=step_idx,
            mean_reward=sum(c.reward for c in completions) / len(completions),
            mean_len=n_tokens / len(completions),
            loss=loss,
            kl_mean=kl_mean,
        ))
    return policy, telemetry


def policy_forecaster(policy: ToyPolicy, rules: dict | None = None):
    """Greedy decode adapter: (state, action, dt) -> StateDelta."""
    rules = rules or load_rule_table()
    featurizer = PromptFeaturizer(rules)

    def forecast(s: GameState, a: ActionLabel, dt: int) -> StateDelta:
        x = featurizer.prompt_features(s, a, dt)
        tokens = []
        for comp in range(4):
            valid = tuple(class_token(comp, c) for c in range(N_CLASSES))
            phi = featurizer.slot_features(x, comp, 0, None, comp == 0)
            lp = policy.log_probs(phi, valid)
            token = valid[int(np.argmax(lp))]
            tokens.append(token)
            cls_idx = token % N_CLASSES
            if cls_idx != 0:
                valid_m = tuple(mag_token(comp, m) for m in range(N_CLASSES))
                phi_m = featurizer.slot_features(x, comp, 1, cls_idx, False)
                tokens.append(valid_m[int(np.argmax(policy.log_probs(phi_m,
                                                                     valid_m)))])
        return decode_tokens(tuple(tokens), s, a, dt, rules)

    return forecast
