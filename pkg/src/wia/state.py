"""Game-state data model, validation, and bit-stable serialization.

A ``GameState`` is one timestamped snapshot of everything the primary player
can see: heroes, towers, minion waves, and dragons. All values are immutable
after construction and all numeric gameplay fields are integers, so equality
is exact and serialization round-trips byte-for-byte.

Documents use a fixed JSON schema (top-level keys exactly ``match_id``, ``t``,
``primary_hero_id``, ``heroes``, ``towers``, ``minion_waves``, ``dragons``;
enums as lowercase snake_case strings). Unknown fields are hard errors:
silently dropping them would corrupt diff ground truth downstream.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace

from .errors import InvariantViolation, MalformedDocument, SchemaViolation

TEAMS = ("ally", "enemy")

REGIONS = (
    "top_lane", "mid_lane", "bot_lane",
    "river_top", "river_bot",
    "ally_jungle", "enemy_jungle",
    "ally_highground", "enemy_highground",
    "fountain",
)

TOWER_SITES = ("top", "mid", "bot", "crystal")

LANES = ("top", "mid", "bot")

# Canonical dragon kinds, in canonical (sort) order. Prompt-style names map
# onto the canonical enum so a dragon is never represented twice.
DRAGON_KINDS = ("lord", "tyrant", "dragon_king")
DRAGON_KIND_ALIASES = {
    "turtle": "tyrant",
    "dark_turtle": "tyrant",
    "storm_dragon": "dragon_king",
}

_HASH_RE = re.compile(r"^[0-9a-f]{16}$")
DEFAULT_REDACTION_SALT = "wia-match-salt-v1"


@dataclass(frozen=True)
class HeroState:
    hero_id: str
    team: str
    region: str
    hp: int
    max_hp: int
    alive: bool
    level: int
    gold: int


@dataclass(frozen=True)
class TowerState:
    tower_id: str
    team: str
    site: str
    hp: int
    max_hp: int
    attacking: bool


@dataclass(frozen=True)
class MinionWaveState:
    wave_id: str
    lane: str
    team: str
    zone: str
    in_enemy_turret_range: bool
    clearing_heroes: frozenset[str]


@dataclass(frozen=True)
class DragonState:
    kind: str
    hp: int
    max_hp: int
    alive: bool
    under_attack: bool


@dataclass(frozen=True)
class GameState:
    match_id: str
    t: int
    primary_hero_id: str
    heroes: tuple[HeroState, ...]
    towers: tuple[TowerState, ...]
    minion_waves: tuple[MinionWaveState, ...]
    dragons: tuple[DragonState, ...]

    def __post_init__(self):
        # Canonical internal order: states equal up to list order compare equal.
        object.__setattr__(self, "heroes",
                           tuple(sorted(self.heroes, key=lambda h: h.hero_id)))
        object.__setattr__(self, "towers",
                           tuple(sorted(self.towers, key=lambda tw: tw.tower_id)))
        object.__setattr__(self, "minion_waves",
                           tuple(sorted(self.minion_waves, key=lambda w: w.wave_id)))
        object.__setattr__(self, "dragons",
                           tuple(sorted(self.dragons,
                                        key=lambda d: DRAGON_KINDS.index(d.kind))))

    def hero(self, hero_id: str) -> HeroState | None:
        for h in self.heroes:
            if h.hero_id == hero_id:
                return h
        return None

    @property
    def primary_hero(self) -> HeroState:
        h = self.hero(self.primary_hero_id)
        assert h is not None  # guaranteed by validation
        return h


# --- validation helpers -----------------------------------------------------

def _need_obj(obj, path):
    if not isinstance(obj, dict):
        raise SchemaViolation("expected an object", path=path)


def _fields(obj, path, required: tuple[str, ...]):
    _need_obj(obj, path)
    extra = set(obj) - set(required)
    if extra:
        raise SchemaViolation(f"unknown field {sorted(extra)[0]!r}",
                              path=f"{path}.{sorted(extra)[0]}")
    for name in required:
        if name not in obj:
            raise SchemaViolation(f"missing field {name!r}", path=f"{path}.{name}")


def _str(obj, key, path):
    v = obj[key]
    if not isinstance(v, str):
        raise SchemaViolation("expected a string", path=f"{path}.{key}")
    return v


def _int(obj, key, path):
    v = obj[key]
    # bool is an int subclass; reject it explicitly.
    if not isinstance(v, int) or isinstance(v, bool):
        raise SchemaViolation("expected an integer", path=f"{path}.{key}")
    return v


def _bool(obj, key, path):
    v = obj[key]
    if not isinstance(v, bool):
        raise SchemaViolation("expected a boolean", path=f"{path}.{key}")
    return v


def _enum(obj, key, path, allowed, aliases=None):
    v = _str(obj, key, path)
    if aliases:
        v = aliases.get(v, v)
    if v not in allowed:
        raise SchemaViolation(f"{v!r} not one of {list(allowed)}",
                              path=f"{path}.{key}")
    return v


def _check(cond: bool, message: str, path: str):
    if not cond:
        raise InvariantViolation(message, path=path)


# --- component parsers -------------------------------------------------------

_HERO_FIELDS = ("hero_id", "team", "region", "hp", "max_hp", "alive", "level", "gold")
_TOWER_FIELDS = ("tower_id", "team", "site", "hp", "max_hp", "attacking")
_WAVE_FIELDS = ("wave_id", "lane", "team", "zone", "in_enemy_turret_range",
                "clearing_heroes")
_DRAGON_FIELDS = ("kind", "hp", "max_hp", "alive", "under_attack")


def _parse_hero(obj, path) -> HeroState:
    _fields(obj, path, _HERO_FIELDS)
    h = HeroState(
        hero_id=_str(obj, "hero_id", path),
        team=_enum(obj, "team", path, TEAMS),
        region=_enum(obj, "region", path, REGIONS),
        hp=_int(obj, "hp", path),
        max_hp=_int(obj, "max_hp", path),
        alive=_bool(obj, "alive", path),
        level=_int(obj, "level", path),
        gold=_int(obj, "gold", path),
    )
    _check(h.max_hp > 0, "max_hp must be positive", f"{path}.max_hp")
    _check(h.hp >= 0, "hp must be non-negative", f"{path}.hp")
    _check(h.hp <= h.max_hp, "hp exceeds max_hp", f"{path}.hp")
    _check(1 <= h.level <= 15, "level out of range 1..15", f"{path}.level")
    _check(h.gold >= 0, "gold must be non-negative", f"{path}.gold")
    _check(h.alive or h.hp == 0, "dead hero must have hp = 0", f"{path}.hp")
    return h


def _parse_tower(obj, path) -> TowerState:
    _fields(obj, path, _TOWER_FIELDS)
    tw = TowerState(
        tower_id=_str(obj, "tower_id", path),
        team=_enum(obj, "team", path, TEAMS),
        site=_enum(obj, "site", path, TOWER_SITES),
        hp=_int(obj, "hp", path),
        max_hp=_int(obj, "max_hp", path),
        attacking=_bool(obj, "attacking", path),
    )
    _check(tw.max_hp > 0, "max_hp must be positive", f"{path}.max_hp")
    _check(0 <= tw.hp <= tw.max_hp, "hp out of range", f"{path}.hp")
    return tw


def _parse_wave(obj, path) -> MinionWaveState:
    _fields(obj, path, _WAVE_FIELDS)
    raw = obj["clearing_heroes"]
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise SchemaViolation("expected a list of hero ids",
                              path=f"{path}.clearing_heroes")
    if len(set(raw)) != len(raw):
        raise InvariantViolation("duplicate clearing hero",
                                 path=f"{path}.clearing_heroes")
    return MinionWaveState(
        wave_id=_str(obj, "wave_id", path),
        lane=_enum(obj, "lane", path, LANES),
        team=_enum(obj, "team", path, TEAMS),
        zone=_enum(obj, "zone", path, REGIONS),
        in_enemy_turret_range=_bool(obj, "in_enemy_turret_range", path),
        clearing_heroes=frozenset(raw),
    )


def _parse_dragon(obj, path) -> DragonState:
    _fields(obj, path, _DRAGON_FIELDS)
    d = DragonState(
        kind=_enum(obj, "kind", path, DRAGON_KINDS, aliases=DRAGON_KIND_ALIASES),
        hp=_int(obj, "hp", path),
        max_hp=_int(obj, "max_hp", path),
        alive=_bool(obj, "alive", path),
        under_attack=_bool(obj, "under_attack", path),
    )
    _check(d.max_hp > 0, "max_hp must be positive", f"{path}.max_hp")
    _check(0 <= d.hp <= d.max_hp, "hp out of range", f"{path}.hp")
    _check(d.alive or not d.under_attack, "dead dragon cannot be under attack",
           f"{path}.under_attack")
    return d


_STATE_FIELDS = ("match_id", "t", "primary_hero_id", "heroes", "towers",
                 "minion_waves", "dragons")


def validate_state(s: GameState) -> GameState:
    """Check cross-entity invariants on an already-typed state."""
    _check(s.t >= 0, "t must be non-negative", "t")
    for list_name, items, key in (
        ("heroes", s.heroes, lambda h: h.hero_id),
        ("towers", s.towers, lambda tw: tw.tower_id),
        ("minion_waves", s.minion_waves, lambda w: w.wave_id),
    ):
        ids = [key(x) for x in items]
        _check(len(set(ids)) == len(ids), "duplicate entity id", list_name)
    site_keys = [(tw.team, tw.site) for tw in s.towers]
    _check(len(set(site_keys)) == len(site_keys),
           "more than one tower per (team, site)", "towers")
    kinds = [d.kind for d in s.dragons]
    _check(len(set(kinds)) == len(kinds), "more than one dragon per kind", "dragons")
    hero_ids = {h.hero_id for h in s.heroes}
    for i, w in enumerate(s.minion_waves):
        _check(w.clearing_heroes <= hero_ids, "clearing hero not in state",
               f"minion_waves[{i}].clearing_heroes")
    primary = s.hero(s.primary_hero_id)
    _check(primary is not None, "primary_hero_id not found", "primary_hero_id")
    _check(primary.team == "ally", "primary hero must be on team ally",
           "primary_hero_id")
    return s


def state_from_obj(obj) -> GameState:
    """Build and validate a GameState from decoded JSON."""
    _fields(obj, "$", _STATE_FIELDS)
    for key in ("heroes", "towers", "minion_waves", "dragons"):
        if not isinstance(obj[key], list):
            raise SchemaViolation("expected a list", path=f"$.{key}")
    s = GameState(
        match_id=_str(obj, "match_id", "$"),
        t=_int(obj, "t", "$"),
        primary_hero_id=_str(obj, "primary_hero_id", "$"),
        heroes=tuple(_parse_hero(h, f"heroes[{i}]")
                     for i, h in enumerate(obj["heroes"])),
        towers=tuple(_parse_tower(tw, f"towers[{i}]")
                     for i, tw in enumerate(obj["towers"])),
        minion_waves=tuple(_parse_wave(w, f"minion_waves[{i}]")
                           for i, w in enumerate(obj["minion_waves"])),
        dragons=tuple(_parse_dragon(d, f"dragons[{i}]")
                      for i, d in enumerate(obj["dragons"])),
    )
    return validate_state(s)


def parse_state(text: str) -> GameState:
    """Parse a game-state document. Unknown fields are rejected, not dropped."""
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise MalformedDocument(f"not valid JSON: {e}") from e
    return state_from_obj(obj)


# --- canonical serialization --------------------------------------------------

def state_to_obj(s: GameState) -> dict:
    """Plain-JSON form of a state in canonical order (lists sorted by id,
    dragons by kind order, clearing sets sorted)."""
    return {
        "match_id": s.match_id,
        "t": s.t,
        "primary_hero_id": s.primary_hero_id,
        "heroes": [
            {"hero_id": h.hero_id, "team": h.team, "region": h.region,
             "hp": h.hp, "max_hp": h.max_hp, "alive": h.alive,
             "level": h.level, "gold": h.gold}
            for h in sorted(s.heroes, key=lambda h: h.hero_id)
        ],
        "towers": [
            {"tower_id": tw.tower_id, "team": tw.team, "site": tw.site,
             "hp": tw.hp, "max_hp": tw.max_hp, "attacking": tw.attacking}
            for tw in sorted(s.towers, key=lambda tw: tw.tower_id)
        ],
        "minion_waves": [
            {"wave_id": w.wave_id, "lane": w.lane, "team": w.team,
             "zone": w.zone, "in_enemy_turret_range": w.in_enemy_turret_range,
             "clearing_heroes": sorted(w.clearing_heroes)}
            for w in sorted(s.minion_waves, key=lambda w: w.wave_id)
        ],
        "dragons": [
            {"kind": d.kind, "hp": d.hp, "max_hp": d.max_hp,
             "alive": d.alive, "under_attack": d.under_attack}
            for d in sorted(s.dragons, key=lambda d: DRAGON_KINDS.index(d.kind))
        ],
    }


def serialize_state(s: GameState) -> str:
    """Canonical text form: sorted keys, sorted lists, no insignificant
    whitespace. Equal states serialize to identical bytes."""
    return json.dumps(state_to_obj(s), sort_keys=True, separators=(",", ":"))


# --- redaction -----------------------------------------------------------------

def redact_match_id(match_id: str, salt: str = DEFAULT_REDACTION_SALT) -> str:
    """Salted 16-hex-char hash of a match id; already-hashed ids pass through
    unchanged so redaction is idempotent."""
    if _HASH_RE.match(match_id):
        return match_id
    digest = hashlib.sha256((salt + "\x00" + match_id).encode("utf-8")).hexdigest()
    return digest[:16]


def redact(s: GameState, salt: str = DEFAULT_REDACTION_SALT) -> GameState:
    """Strip free-text identifiers; gameplay fields are untouched."""
    return replace(s, match_id=redact_match_id(s.match_id, salt))
