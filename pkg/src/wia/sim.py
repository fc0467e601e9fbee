"""Deterministic miniature MOBA environment.

The simulator is the ground-truth transition function for training and
benchmarking: given a state, a strategic action, and a duration, it returns
the state the world reaches. All dynamics are integer arithmetic driven by a
versioned rule table plus a counter-based hash of (seed, time), so a
``Simulator`` never carries hidden mutable state: identical
(seed, scenario, action sequence) always reproduces identical trajectories,
tick by tick, regardless of how the calls are batched.

World model in brief: minion waves cycle through four push stages per lane
(own high ground, lane, sieging the enemy lane turret, enemy high ground once
that turret has fallen), chipping structures while sieging. Non-primary
heroes follow scripted per-window behavior modes (farm, jungle, siege, hunt,
take a dragon, group, hold) derived from the seed. The primary hero executes
the given registry action every tick. Towers fight back, never heal, and are
never invincible; dragons flag under_attack while targeted and respawn on a
periodic sweep, as do dead heroes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

from .actions import NONE_ACTION, REGISTRY, ActionLabel
from .diff import StateDelta, difficulty, state_diff
from .errors import InvalidAction, SearchBudgetExceeded
from .pipeline import WiaTriplet
from .state import (DRAGON_KINDS, LANES, GameState, DragonState, HeroState,
                    MinionWaveState, TowerState, redact, redact_match_id,
                    validate_state)

# Pinned digest of the shipped rule table; selftest verifies the file.
RULE_TABLE_SHA256 = {
    "v1": "1e43d29d0e4055d1a0e4428c058c6f8e49c9612fceec1cb7fefe6dd9fe13fa66",
}


def rule_table_bytes(version: str = "v1") -> bytes:
    return resources.files("wia").joinpath(f"rules_{version}.json").read_bytes()


def load_rule_table(version: str = "v1", verify: bool = True) -> dict:
    raw = rule_table_bytes(version)
    if verify:
        digest = hashlib.sha256(raw).hexdigest()
        expected = RULE_TABLE_SHA256.get(version)
        if digest != expected:
            raise InvalidAction(
                f"rule table rules_{version}.json checksum mismatch: "
                f"{digest} != {expected}")
    return json.loads(raw)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    team_size: int = 3
    tick_s: int = 1
    rule_table: str = "v1"

    def __post_init__(self):
        if not 1 <= self.team_size <= 5:
            raise ValueError("team_size must be in 1..5")
        if self.tick_s != 1:
            raise ValueError("only 1-second ticks are supported")


@dataclass(frozen=True)
class Scenario:
    name: str = "standard"
    template: GameState | None = None
    difficulty_mix: tuple[int, ...] = (1, 2, 3, 4)


# --- deterministic counter-based randomness -----------------------------------

_M64 = (1 << 64) - 1


def _mix(*parts: int) -> int:
    """SplitMix64-style mixer over integer parts; pure and platform-stable."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _M64)) * 0xBF58476D1CE4E5B9 & _M64
        h = (h ^ (h >> 27)) * 0x94D049BB133111EB & _M64
        h ^= h >> 31
    return h


# --- region semantics ----------------------------------------------------------

LANE_REGION = {"top": "top_lane", "mid": "mid_lane", "bot": "bot_lane"}
DRAGON_PIT = {"lord": "river_top", "tyrant": "river_bot", "dragon_king": "river_top"}
_HOME_HG = {"ally": "ally_highground", "enemy": "enemy_highground"}

_REGION_SUFFIXES = (
    ("Top", "top_lane"), ("Mid", "mid_lane"), ("Bot", "bot_lane"),
    ("River Top", "river_top"), ("River Bot", "river_bot"),
    ("Allied Jungle", "ally_jungle"), ("Enemy Jungle", "enemy_jungle"),
    ("Ally High-ground", "ally_highground"),
    ("Enemy High-ground", "enemy_highground"),
)


def _hero_action_region(name: str) -> str:
    for prefix, region in sorted(_REGION_SUFFIXES, key=lambda x: -len(x[0])):
        if name.startswith(prefix):
            return region
    raise InvalidAction(f"no region mapping for {name!r}")


_DRAGON_BY_ACTION = {"Lord": "lord", "Tyrant": "tyrant", "Dragon King": "dragon_king"}
_SITE_BY_ACTION = {"Crystal": "crystal", "Top Tower": "top", "Mid Tower": "mid",
                   "Bot Tower": "bot", "Defend Crystal": "crystal",
                   "Defend Top Tower": "top", "Defend Mid Tower": "mid",
                   "Defend Bot Tower": "bot"}
_JUNGLE_REGION = {"Allied Red": "ally_jungle", "Allied Blue": "ally_jungle",
                  "Enemy Red": "enemy_jungle", "Enemy Blue": "enemy_jungle",
                  "Allied Camps": "ally_jungle", "Enemy Camps": "enemy_jungle",
                  "Void Spirit (Top Crab)": "river_top",
                  "Crimson Raptor (Bot Crab)": "river_bot"}


# Wave push stages, encoded in (zone, in_enemy_turret_range):
#   0 own high ground -> 1 lane -> 2 sieging lane turret -> 3 enemy high ground
def _wave_stage(team: str, lane: str, zone: str, in_range: bool) -> int:
    if zone == _HOME_HG[team]:
        return 0
    if zone == LANE_REGION[lane]:
        return 2 if in_range else 1
    return 3


def _stage_fields(team: str, lane: str, stage: int) -> tuple[str, bool]:
    other = "enemy" if team == "ally" else "ally"
    if stage == 0:
        return _HOME_HG[team], False
    if stage == 1:
        return LANE_REGION[lane], False
    if stage == 2:
        return LANE_REGION[lane], True
    return _HOME_HG[other], True


class Simulator:
    """One deterministic environment instance.

    Instances are cheap and single-threaded; run independent seeds in
    parallel instead of sharing one instance.
    """

    def __init__(self, cfg: SimConfig, scenario: Scenario | None = None):
        self.cfg = cfg
        self.scenario = scenario or Scenario()
        self.rules = load_rule_table(cfg.rule_table)

    # -- construction ------------------------------------------------------

    def init_state(self) -> GameState:
        if self.scenario.template is not None:
            return self.scenario.template
        r = self.rules
        start_regions = ("mid_lane", "top_lane", "bot_lane", "ally_jungle",
                         "river_top")
        heroes = []
        for team in ("ally", "enemy"):
            for i in range(self.cfg.team_size):
                region = start_regions[i % len(start_regions)]
                if team == "enemy":
                    region = _mirror_region(region)
                heroes.append(HeroState(
                    hero_id=f"{'a' if team == 'ally' else 'e'}{i + 1}",
                    team=team, region=region, hp=r["hero_max_hp"],
                    max_hp=r["hero_max_hp"], alive=True, level=1, gold=0))
        towers = []
        for team in ("ally", "enemy"):
            for site in ("top", "mid", "bot", "crystal"):
                cap = r["crystal_max_hp"] if site == "crystal" else r["lane_tower_max_hp"]
                towers.append(TowerState(
                    tower_id=f"t_{team}_{site}", team=team, site=site,
                    hp=cap, max_hp=cap, attacking=False))
        waves = [
            MinionWaveState(
                wave_id=f"w_{team}_{lane}", lane=lane, team=team,
                zone=_HOME_HG[team], in_enemy_turret_range=False,
                clearing_heroes=frozenset())
            for team in ("ally", "enemy") for lane in LANES
        ]
        dragons = [
            DragonState(kind=kind, hp=r["dragon_max_hp"][kind],
                        max_hp=r["dragon_max_hp"][kind], alive=True,
                        under_attack=False)
            for kind in DRAGON_KINDS
        ]
        return validate_state(GameState(
            match_id=f"sim-{self.scenario.name}-{self.cfg.seed}",
            t=0,
            primary_hero_id="a1",
            heroes=tuple(heroes),
            towers=tuple(towers),
            minion_waves=tuple(waves),
            dragons=tuple(dragons),
        ))

    # -- transition --------------------------------------------------------

    def step(self, s: GameState, a: ActionLabel, dt: int) -> GameState:
        """Advance the world ``dt`` seconds with the primary hero doing ``a``."""
        if not isinstance(a, ActionLabel) or a not in set(REGISTRY):
            raise InvalidAction(f"action not in registry: {a!r}")
        if dt < 0:
            raise ValueError("dt must be non-negative")
        if dt == 0:
            return s
        w = _World(s, self.rules, self.cfg.seed)
        for _ in range(dt):
            w.tick(a)
        return w.freeze()

    # -- rollout helpers -----------------------------------------------------

    def generate_trajectory(self, policy, n_ticks: int
                            ) -> list[tuple[GameState, ActionLabel]]:
        """Roll ``n_ticks`` 1-second steps, logging the action at each state.

        ``policy`` is an action script: a callable ``(state, k) -> ActionLabel``
        or an indexable sequence of labels. The final state's action is logged
        but not executed.
        """
        if callable(policy):
            pick = policy
        else:
            pick = lambda s, k: policy[k % len(policy)]
        out = []
        s = self.init_state()
        for k in range(n_ticks):
            a = pick(s, k)
            out.append((s, a))
            s = self.step(s, a, self.cfg.tick_s)
        out.append((s, pick(s, n_ticks)))
        return out


def _mirror_region(region: str) -> str:
    flip = {"ally_jungle": "enemy_jungle", "enemy_jungle": "ally_jungle",
            "ally_highground": "enemy_highground",
            "enemy_highground": "ally_highground"}
    return flip.get(region, region)


# --- mutable tick state ----------------------------------------------------------

class _World:
    def __init__(self, s: GameState, rules: dict, seed: int):
        self.rules = rules
        self.seed = seed
        self.match_id = s.match_id
        self.primary_id = s.primary_hero_id
        self.t = s.t
        self.heroes = {h.hero_id: {
            "hero_id": h.hero_id, "team": h.team, "region": h.region,
            "hp": h.hp, "max_hp": h.max_hp, "alive": h.alive,
            "level": h.level, "gold": h.gold} for h in s.heroes}
        self.hero_ids = sorted(self.heroes)
        self.towers = {(tw.team, tw.site): {
            "tower_id": tw.tower_id, "team": tw.team, "site": tw.site,
            "hp": tw.hp, "max_hp": tw.max_hp, "attacking": tw.attacking}
            for tw in s.towers}
        self.waves = {(w.team, w.lane): {
            "wave_id": w.wave_id, "lane": w.lane, "team": w.team,
            "zone": w.zone, "in_enemy_turret_range": w.in_enemy_turret_range,
            "clearing": set(w.clearing_heroes)} for w in s.minion_waves}
        self.dragons = {d.kind: {
            "kind": d.kind, "hp": d.hp, "max_hp": d.max_hp,
            "alive": d.alive, "under_attack": d.under_attack}
            for d in s.dragons}

    # one simulated second
    def tick(self, action: ActionLabel):
        self.t += 1
        t, r = self.t, self.rules
        self._sweeps(t, r)
        attacked_towers: set[tuple[str, str]] = set()
        attacked_dragons: set[str] = set()
        clearing: dict[tuple[str, str], set[str]] = {k: set() for k in self.waves}

        intents = []
        for hid in self.hero_ids:
            h = self.heroes[hid]
            if not h["alive"]:
                continue
            if hid == self.primary_id:
                intents.append((hid, self._primary_intent(h, action)))
            else:
                intents.append((hid, self._script_intent(h, t)))

        # Moves resolve before effects so duels use this tick's positions;
        # hunt destinations were computed from start-of-tick positions.
        for hid, intent in intents:
            if intent.get("region"):
                self.heroes[hid]["region"] = intent["region"]
        for hid, intent in intents:
            self._apply_effect(hid, intent, t, attacked_towers,
                               attacked_dragons, clearing)

        self._update_waves(t, clearing, attacked_towers)
        self._update_flags(attacked_towers, attacked_dragons)
        for h in self.heroes.values():
            h["level"] = min(15, 1 + h["gold"] // r["level_gold_step"])

    def _sweeps(self, t: int, r: dict):
        if t % r["respawn_sweep_s"] == 0:
            for h in self.heroes.values():
                if not h["alive"]:
                    h["alive"] = True
                    h["hp"] = h["max_hp"]
                    h["region"] = "fountain"
        if t % r["dragon_respawn_sweep_s"] == 0:
            for d in self.dragons.values():
                if not d["alive"]:
                    d["alive"] = True
                    d["hp"] = d["max_hp"]

    # -- intents -------------------------------------------------------------

    def _primary_intent(self, h: dict, a: ActionLabel) -> dict:
        name, cat = a.name, a.category
        if cat == "None":
            return {}
        if cat == "Recall":
            if h["region"] == "fountain":
                return {"heal": True}
            step_to = "fountain" if h["region"] == "ally_highground" \
                else "ally_highground"
            return {"region": step_to, "heal": step_to == "fountain"}
        if cat == "Dragon":
            kind = _DRAGON_BY_ACTION[name]
            return {"region": DRAGON_PIT[kind], "attack_dragon": kind,
                    "dps": self.rules["dragon_dps"]}
        if cat == "Tower":
            site = _SITE_BY_ACTION[name]
            region = "enemy_highground" if site == "crystal" else LANE_REGION[site]
            return {"region": region, "attack_tower": ("enemy", site),
                    "dps": self.rules["hero_tower_dps"]}
        if cat == "Defense":
            site = _SITE_BY_ACTION[name]
            region = "ally_highground" if site == "crystal" else LANE_REGION[site]
            return {"region": region, "defend_site": site}
        if cat == "Hero":
            region = _hero_action_region(name)
            return {"region": region, "duel": True}
        if cat == "Line":
            if name == "Ally High-ground Minions":
                return {"region": "ally_highground",
                        "clear_zone": ("enemy", "ally_highground")}
            if name == "Enemy High-ground Minions":
                return {"region": "enemy_highground",
                        "clear_zone": ("enemy", "enemy_highground")}
            lane = name.split()[0].lower()
            return {"region": LANE_REGION[lane], "clear_lane": ("enemy", lane)}
        if cat in ("Buff", "Jungle"):
            return {"region": _JUNGLE_REGION[name], "farm": True}
        if cat == "Grouping":
            return {"region": _hero_action_region(name)}
        raise InvalidAction(f"unhandled action {name!r}")

    def _script_intent(self, h: dict, t: int) -> dict:
        r = self.rules
        window = t // r["script_window_s"]
        idx = self.hero_ids.index(h["hero_id"])
        roll = _mix(self.seed, 11, idx, window)
        mode = roll % 20
        own_hg = _HOME_HG[h["team"]]
        own_jungle = "ally_jungle" if h["team"] == "ally" else "enemy_jungle"
        other = "enemy" if h["team"] == "ally" else "ally"
        lane = LANES[(roll >> 8) % 3]
        if mode < 6:  # lane farm: clear the opposing wave in a lane
            return {"region": LANE_REGION[lane], "clear_lane": (other, lane),
                    "farm": True}
        if mode < 9:  # jungle farm
            return {"region": own_jungle, "farm": True}
        if mode < 11:  # siege the opposing lane turret
            return {"region": LANE_REGION[lane], "attack_tower": (other, lane),
                    "dps": r["script_tower_dps"]}
        if mode == 11:  # take a dragon
            kind = DRAGON_KINDS[(roll >> 16) % 3]
            return {"region": DRAGON_PIT[kind], "attack_dragon": kind,
                    "dps": r["script_dragon_dps"]}
        if mode < 14:  # hunt an opposing hero (chases last known position)
            targets = [hid for hid in self.hero_ids
                       if self.heroes[hid]["team"] == other
                       and self.heroes[hid]["alive"]
                       and self.heroes[hid]["region"] != "fountain"]
            if not targets:
                return {"region": own_hg}
            target = targets[(roll >> 16) % len(targets)]
            return {"region": self.heroes[target]["region"], "duel": True}
        if mode < 17:  # group
            spots = (LANE_REGION[lane], "river_top", "river_bot", own_hg)
            return {"region": spots[(roll >> 24) % len(spots)]}
        return {"region": own_hg}  # hold

    # -- effects ---------------------------------------------------------------

    def _apply_effect(self, hid: str, intent: dict, t: int,
                      attacked_towers, attacked_dragons, clearing):
        r = self.rules
        h = self.heroes[hid]
        if intent.get("heal") and h["region"] == "fountain":
            h["hp"] = h["max_hp"]
        if intent.get("farm") and t % r["farm_period_s"] == 0:
            h["gold"] += r["farm_gold"]
        if "attack_tower" in intent:
            team, site = intent["attack_tower"]
            tw = self.towers[(team, site)]
            if tw["hp"] > 0:
                destroyed = self._damage_tower(tw, intent["dps"])
                attacked_towers.add((team, site))
                if destroyed:
                    h["gold"] += r["tower_gold"]
                self._damage_hero(h, r["tower_return_dps"], killer=None)
        if "attack_dragon" in intent:
            d = self.dragons[intent["attack_dragon"]]
            if d["alive"]:
                attacked_dragons.add(d["kind"])
                d["hp"] = max(0, d["hp"] - intent["dps"])
                if d["hp"] == 0:
                    d["alive"] = False
                    h["gold"] += r["dragon_gold"]
        if intent.get("duel"):
            target = self._duel_target(h)
            if target is not None:
                killed = self._damage_hero(target, r["hero_duel_dps"], killer=h)
                if not killed:
                    self._damage_hero(h, r["duel_return_dps"], killer=target)
        if "clear_lane" in intent:
            team, lane = intent["clear_lane"]
            wave = self.waves[(team, lane)]
            if _wave_stage(team, lane, wave["zone"],
                           wave["in_enemy_turret_range"]) in (1, 2) \
                    and h["region"] == LANE_REGION[lane]:
                clearing[(team, lane)].add(hid)
        if "clear_zone" in intent:
            team, zone = intent["clear_zone"]
            for (wteam, wlane), wave in self.waves.items():
                if wteam == team and wave["zone"] == zone:
                    clearing[(wteam, wlane)].add(hid)
        if "defend_site" in intent:
            site = intent["defend_site"]
            for (wteam, wlane), wave in self.waves.items():
                if wteam != "enemy":
                    continue
                stage = _wave_stage(wteam, wlane, wave["zone"],
                                    wave["in_enemy_turret_range"])
                if site == "crystal" and stage == 3:
                    clearing[(wteam, wlane)].add(hid)
                elif site == wlane and stage == 2:
                    clearing[(wteam, wlane)].add(hid)

    def _duel_target(self, h: dict):
        enemies = [self.heroes[hid] for hid in self.hero_ids
                   if self.heroes[hid]["team"] != h["team"]
                   and self.heroes[hid]["alive"]
                   and self.heroes[hid]["region"] == h["region"]
                   and h["region"] != "fountain"]
        return enemies[0] if enemies else None

    def _damage_hero(self, h: dict, dps: int, killer: dict | None) -> bool:
        if not h["alive"]:
            return False
        h["hp"] = max(0, h["hp"] - dps)
        if h["hp"] == 0:
            h["alive"] = False
            if killer is not None:
                killer["gold"] += self.rules["kill_gold"]
            return True
        return False

    def _damage_tower(self, tw: dict, dps: int) -> bool:
        before = tw["hp"]
        tw["hp"] = max(0, tw["hp"] - dps)
        return before > 0 and tw["hp"] == 0

    # -- world dynamics ----------------------------------------------------------

    def _wave_phase(self, team: str, lane: str) -> int:
        phase = self.rules["wave_lane_phase"][lane]
        if team == "enemy":
            phase += self.rules["wave_enemy_phase_offset_s"]
        return phase

    def _update_waves(self, t: int, clearing, attacked_towers):
        r = self.rules
        for (team, lane), wave in self.waves.items():
            wave["clearing"] = clearing[(team, lane)]
            stage = _wave_stage(team, lane, wave["zone"],
                                wave["in_enemy_turret_range"])
            other = "enemy" if team == "ally" else "ally"
            if wave["clearing"]:
                if t % r["clear_push_period_s"] == 0 and stage > 0:
                    stage -= 1
            elif (t + self._wave_phase(team, lane)) % r["wave_advance_period_s"] == 0:
                if stage == 0 or stage == 1:
                    stage += 1
                elif stage == 2:
                    # waves break onto the high ground only once the lane
                    # turret has fallen; otherwise the siege wave dies there
                    stage = 3 if self.towers[(other, lane)]["hp"] == 0 else 0
                else:
                    stage = 0
            wave["zone"], wave["in_enemy_turret_range"] = \
                _stage_fields(team, lane, stage)
            # siege damage
            if stage == 2 and self.towers[(other, lane)]["hp"] > 0:
                self._damage_tower(self.towers[(other, lane)], r["wave_tower_dps"])
                attacked_towers.add((other, lane))
            elif stage == 3 and self.towers[(other, "crystal")]["hp"] > 0:
                self._damage_tower(self.towers[(other, "crystal")],
                                   r["wave_crystal_dps"])
                attacked_towers.add((other, "crystal"))

    def _update_flags(self, attacked_towers, attacked_dragons):
        for key, tw in self.towers.items():
            tw["attacking"] = tw["hp"] > 0 and key in attacked_towers
        for kind, d in self.dragons.items():
            d["under_attack"] = d["alive"] and kind in attacked_dragons

    def freeze(self) -> GameState:
        return GameState(
            match_id=self.match_id,
            t=self.t,
            primary_hero_id=self.primary_id,
            heroes=tuple(HeroState(**h) for h in self.heroes.values()),
            towers=tuple(TowerState(**tw) for tw in self.towers.values()),
            minion_waves=tuple(MinionWaveState(
                wave_id=w["wave_id"], lane=w["lane"], team=w["team"],
                zone=w["zone"], in_enemy_turret_range=w["in_enemy_turret_range"],
                clearing_heroes=frozenset(w["clearing"]))
                for w in self.waves.values()),
            dragons=tuple(DragonState(**d) for d in self.dragons.values()),
        )


# --- module-level operation wrappers ------------------------------------------------

def init_state(cfg: SimConfig, scenario: Scenario | None = None) -> GameState:
    return Simulator(cfg, scenario).init_state()


def step(cfg: SimConfig, s: GameState, a: ActionLabel, dt: int,
         scenario: Scenario | None = None) -> GameState:
    return Simulator(cfg, scenario).step(s, a, dt)


def generate_trajectory(cfg: SimConfig, scenario: Scenario | None, policy,
                        n_ticks: int) -> list[tuple[GameState, ActionLabel]]:
    return Simulator(cfg, scenario).generate_trajectory(policy, n_ticks)


def scripted_policy(seed: int, none_weight: int = 4):
    """Seeded action script for rollouts: holds an action for a few ticks,
    mixing in None periods so inactivity filtering has something to remove."""
    n = len(REGISTRY)

    def pick(state: GameState, k: int) -> ActionLabel:
        segment = k // 5
        roll = _mix(seed, 23, segment)
        if roll % (none_weight + 10) < none_weight:
            return NONE_ACTION
        return REGISTRY[(roll >> 8) % n]

    return pick


def make_benchmark(cfg: SimConfig, counts: dict[int, int], *,
                   scenario: Scenario | None = None,
                   dt_range: tuple[int, int] = (5, 60),
                   max_iters: int = 60_000) -> list[WiaTriplet]:
    """Search simulator rollouts for triplets hitting exact difficulty quotas.

    Walks one long scripted rollout; at each sample point it forks a what-if
    transition (random registry action, random horizon in ``dt_range``) and
    keeps the triplet when its difficulty quota is still open. Deterministic
    given the seed; raises SearchBudgetExceeded with the unfilled quotas if
    the walk ends before every quota is met.
    """
    bad = set(counts) - {1, 2, 3, 4}
    if bad:
        raise ValueError(f"difficulty keys must be within 1..4, got {sorted(bad)}")
    todo = {d: n for d, n in counts.items() if n > 0}
    simulator = Simulator(cfg, scenario)
    walk = scripted_policy(cfg.seed)
    lo, hi = dt_range
    s = simulator.init_state()
    match_hash = redact_match_id(s.match_id)
    out: list[WiaTriplet] = []
    stride = 7
    for j in range(max_iters):
        if not todo:
            break
        roll = _mix(cfg.seed, 31, j)
        a = REGISTRY[roll % len(REGISTRY)]
        dt = lo + (roll >> 16) % (hi - lo + 1)
        forked = simulator.step(s, a, dt)
        delta = state_diff(s, forked)
        d = difficulty(delta)
        if d in todo:
            out.append(WiaTriplet(
                state=redact(s), action=a, delta=delta, horizon_s=dt,
                provenance=(match_hash, j)))
            todo[d] -= 1
            if todo[d] == 0:
                del todo[d]
        s = simulator.step(s, walk(s, j), stride)
    if todo:
        raise SearchBudgetExceeded(
            f"difficulty quotas unfilled after {max_iters} samples: {todo}",
            missing=todo)
    return out
