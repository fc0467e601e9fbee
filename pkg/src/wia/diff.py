"""State-change computation: diff, patch, difficulty, and delta documents.

A ``StateDelta`` is the per-component change between two snapshots of the
same match, keyed by the four game-critical components (minion waves, turrets,
heroes, dragons). Each component carries field-level ``ChangeRecord`` entries;
an entity that appears or disappears between the two states is encoded with an
explicit absent sentinel (``null`` in documents) so every delta can be applied
back onto its source state.

Entity keys are self-describing strings:

    hero    "ally:h1"           (team:hero_id)
    turret  "enemy:mid"         (team:site)
    wave    "ally:top:w3"       (team:lane:wave_id)
    dragon  "tyrant"            (kind)

Difficulty of a delta is the number of non-empty component lists (0..4).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .errors import (InvariantViolation, MalformedDocument, MatchMismatch,
                     SchemaViolation, StaleDelta, UnknownEntity)
from .state import (DRAGON_KINDS, GameState, DragonState, HeroState,
                    MinionWaveState, TowerState, redact_match_id, validate_state)


class _Absent:
    """Sentinel for a field of an entity absent from one side of a diff."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ABSENT"


ABSENT = _Absent()

# The four canonical component keys, in canonical order. These are the answer
# keys the reward verifier consumes.
COMPONENT_KEYS = ("minion_wave_changes", "turret_changes", "hero_changes",
                  "dragon_status_changes")

_COMPONENT_FIELDS = {
    "minion_wave_changes": ("wave_id", "lane", "team", "zone",
                            "in_enemy_turret_range", "clearing_heroes"),
    "turret_changes": ("tower_id", "team", "site", "hp", "max_hp", "attacking"),
    "hero_changes": ("hero_id", "team", "region", "hp", "max_hp", "alive",
                     "level", "gold"),
    "dragon_status_changes": ("kind", "hp", "max_hp", "alive", "under_attack"),
}


@dataclass(frozen=True)
class ChangeRecord:
    entity: str
    field: str
    old: object
    new: object


@dataclass(frozen=True)
class StateDelta:
    minion_wave_changes: tuple[ChangeRecord, ...] = ()
    turret_changes: tuple[ChangeRecord, ...] = ()
    hero_changes: tuple[ChangeRecord, ...] = ()
    dragon_status_changes: tuple[ChangeRecord, ...] = ()

    def component(self, key: str) -> tuple[ChangeRecord, ...]:
        return getattr(self, key)

    def is_empty(self) -> bool:
        return all(not self.component(k) for k in COMPONENT_KEYS)


EMPTY_DELTA = StateDelta()


def _sort_key(r: ChangeRecord):
    return (r.entity, r.field)


def canonicalize(delta: StateDelta) -> StateDelta:
    """Sort each component by (entity, field) and reject duplicates."""
    out = {}
    for key in COMPONENT_KEYS:
        records = sorted(delta.component(key), key=_sort_key)
        seen = set()
        for r in records:
            if (r.entity, r.field) in seen:
                raise InvariantViolation(
                    f"duplicate record for ({r.entity}, {r.field})", path=key)
            if r.old == r.new:
                raise InvariantViolation(
                    f"record with old = new for ({r.entity}, {r.field})", path=key)
            if r.field not in _COMPONENT_FIELDS[key]:
                raise InvariantViolation(
                    f"{r.field!r} is not a field of this component",
                    path=f"{key}.{r.entity}")
            seen.add((r.entity, r.field))
        out[key] = tuple(records)
    return StateDelta(**out)


# --- component extraction -----------------------------------------------------

def _hero_key(h: HeroState) -> str:
    return f"{h.team}:{h.hero_id}"


def _tower_key(tw: TowerState) -> str:
    return f"{tw.team}:{tw.site}"


def _wave_key(w: MinionWaveState) -> str:
    return f"{w.team}:{w.lane}:{w.wave_id}"


def _hero_fields(h: HeroState) -> dict:
    return {"hero_id": h.hero_id, "team": h.team, "region": h.region,
            "hp": h.hp, "max_hp": h.max_hp, "alive": h.alive,
            "level": h.level, "gold": h.gold}


def _tower_fields(tw: TowerState) -> dict:
    return {"tower_id": tw.tower_id, "team": tw.team, "site": tw.site,
            "hp": tw.hp, "max_hp": tw.max_hp, "attacking": tw.attacking}


def _wave_fields(w: MinionWaveState) -> dict:
    return {"wave_id": w.wave_id, "lane": w.lane, "team": w.team,
            "zone": w.zone, "in_enemy_turret_range": w.in_enemy_turret_range,
            "clearing_heroes": tuple(sorted(w.clearing_heroes))}


def _dragon_fields(d: DragonState) -> dict:
    return {"kind": d.kind, "hp": d.hp, "max_hp": d.max_hp,
            "alive": d.alive, "under_attack": d.under_attack}


def _component_maps(s: GameState) -> dict[str, dict[str, dict]]:
    return {
        "minion_wave_changes": {_wave_key(w): _wave_fields(w)
                                for w in s.minion_waves},
        "turret_changes": {_tower_key(tw): _tower_fields(tw)
                           for tw in s.towers},
        "hero_changes": {_hero_key(h): _hero_fields(h) for h in s.heroes},
        "dragon_status_changes": {d.kind: _dragon_fields(d) for d in s.dragons},
    }


def _diff_maps(old_map: dict, new_map: dict) -> list[ChangeRecord]:
    records = []
    for entity in sorted(set(old_map) | set(new_map)):
        old_fields = old_map.get(entity)
        new_fields = new_map.get(entity)
        if old_fields is None:
            records.extend(ChangeRecord(entity, f, ABSENT, v)
                           for f, v in new_fields.items())
        elif new_fields is None:
            records.extend(ChangeRecord(entity, f, v, ABSENT)
                           for f, v in old_fields.items())
        else:
            records.extend(ChangeRecord(entity, f, old_fields[f], new_fields[f])
                           for f in old_fields
                           if old_fields[f] != new_fields[f])
    return records


def state_diff(old: GameState, new: GameState, *,
               hero_mode: str = "full") -> StateDelta:
    """Field-level diff of two states of the same match.

    ``hero_mode="deaths"`` keeps only death transitions (alive flipping to
    false and the hp drop to zero) in the hero component, for consumers that
    only care about eliminations; ``"full"`` diffs every hero field.
    """
    if redact_match_id(old.match_id) != redact_match_id(new.match_id):
        raise MatchMismatch(
            f"states from different matches: {old.match_id!r} vs {new.match_id!r}")
    old_maps = _component_maps(old)
    new_maps = _component_maps(new)
    parts = {key: _diff_maps(old_maps[key], new_maps[key])
             for key in COMPONENT_KEYS}
    if hero_mode == "deaths":
        deaths = {r.entity for r in parts["hero_changes"]
                  if r.field == "alive" and r.old is True and r.new is False}
        parts["hero_changes"] = [
            r for r in parts["hero_changes"]
            if r.entity in deaths and r.field in ("alive", "hp")]
    elif hero_mode != "full":
        raise ValueError(f"unknown hero_mode {hero_mode!r}")
    return canonicalize(StateDelta(**{k: tuple(v) for k, v in parts.items()}))


def difficulty(delta: StateDelta) -> int:
    """Number of changed components, 0..4."""
    return sum(1 for key in COMPONENT_KEYS if delta.component(key))


def delta_equal(a: StateDelta, b: StateDelta) -> bool:
    """Structural equality after canonicalization (list order insensitive)."""
    return canonicalize(a) == canonicalize(b)


# --- applying a delta ----------------------------------------------------------

def _split_key(key: str, component: str, n_parts: int) -> list[str]:
    parts = key.split(":", n_parts - 1)
    if len(parts) != n_parts:
        raise UnknownEntity(f"malformed {component} entity key {key!r}")
    return parts


_BUILDERS = {
    "minion_wave_changes": lambda f: MinionWaveState(
        wave_id=f["wave_id"], lane=f["lane"], team=f["team"], zone=f["zone"],
        in_enemy_turret_range=f["in_enemy_turret_range"],
        clearing_heroes=frozenset(f["clearing_heroes"])),
    "turret_changes": lambda f: TowerState(
        tower_id=f["tower_id"], team=f["team"], site=f["site"],
        hp=f["hp"], max_hp=f["max_hp"], attacking=f["attacking"]),
    "hero_changes": lambda f: HeroState(
        hero_id=f["hero_id"], team=f["team"], region=f["region"], hp=f["hp"],
        max_hp=f["max_hp"], alive=f["alive"], level=f["level"], gold=f["gold"]),
    "dragon_status_changes": lambda f: DragonState(
        kind=f["kind"], hp=f["hp"], max_hp=f["max_hp"], alive=f["alive"],
        under_attack=f["under_attack"]),
}

_KEY_OF_FIELDS = {
    "minion_wave_changes": lambda f: f"{f['team']}:{f['lane']}:{f['wave_id']}",
    "turret_changes": lambda f: f"{f['team']}:{f['site']}",
    "hero_changes": lambda f: f"{f['team']}:{f['hero_id']}",
    "dragon_status_changes": lambda f: f["kind"],
}


def apply_delta(old: GameState, delta: StateDelta, *,
                t_new: int | None = None) -> GameState:
    """Patch ``old`` with a delta, replacing exactly the recorded fields.

    The delta document does not carry a timestamp (it has exactly the four
    component keys), so the result keeps ``old.t`` unless the caller supplies
    ``t_new``. For a diff of a time-advanced pair, passing the target
    timestamp makes the round trip exact:
    ``apply_delta(s1, state_diff(s1, s2), t_new=s2.t) == s2``.
    """
    delta = canonicalize(delta)
    maps = _component_maps(old)
    for key in COMPONENT_KEYS:
        current = maps[key]
        by_entity: dict[str, list[ChangeRecord]] = {}
        for r in delta.component(key):
            by_entity.setdefault(r.entity, []).append(r)
        for entity, records in by_entity.items():
            olds_absent = all(r.old is ABSENT for r in records)
            news_absent = all(r.new is ABSENT for r in records)
            if any(r.old is ABSENT for r in records) and not olds_absent:
                raise StaleDelta(f"{key}:{entity} mixes appearance with updates")
            if any(r.new is ABSENT for r in records) and not news_absent:
                raise StaleDelta(f"{key}:{entity} mixes disappearance with updates")
            if olds_absent:
                if entity in current:
                    raise StaleDelta(f"{key}:{entity} already present")
                fields = {r.field: r.new for r in records}
                missing = set(_COMPONENT_FIELDS[key]) - set(fields)
                if missing:
                    raise StaleDelta(
                        f"{key}:{entity} appearance missing fields {sorted(missing)}")
                if _KEY_OF_FIELDS[key](fields) != entity:
                    raise StaleDelta(f"{key}:{entity} key does not match fields")
                current[entity] = fields
            elif news_absent:
                if entity not in current:
                    raise UnknownEntity(f"{key}:{entity} not in state")
                for r in records:
                    if current[entity][r.field] != r.old:
                        raise StaleDelta(
                            f"{key}:{entity}.{r.field} is "
                            f"{current[entity][r.field]!r}, delta says {r.old!r}")
                del current[entity]
            else:
                if entity not in current:
                    raise UnknownEntity(f"{key}:{entity} not in state")
                for r in records:
                    if current[entity][r.field] != r.old:
                        raise StaleDelta(
                            f"{key}:{entity}.{r.field} is "
                            f"{current[entity][r.field]!r}, delta says {r.old!r}")
                    current[entity][r.field] = r.new
    result = replace(
        old,
        t=old.t if t_new is None else t_new,
        minion_waves=tuple(_BUILDERS["minion_wave_changes"](f)
                           for f in maps["minion_wave_changes"].values()),
        towers=tuple(_BUILDERS["turret_changes"](f)
                     for f in maps["turret_changes"].values()),
        heroes=tuple(_BUILDERS["hero_changes"](f)
                     for f in maps["hero_changes"].values()),
        dragons=tuple(_BUILDERS["dragon_status_changes"](f)
                      for f in maps["dragon_status_changes"].values()),
    )
    return validate_state(result)


# --- delta documents -------------------------------------------------------------

def _value_to_obj(v):
    if v is ABSENT:
        return None
    if isinstance(v, tuple):
        return list(v)
    return v


def _value_from_obj(v, path):
    if v is None:
        return ABSENT
    if isinstance(v, list):
        if not all(isinstance(x, str) for x in v):
            raise SchemaViolation("set values must be lists of strings", path=path)
        return tuple(sorted(v))
    if isinstance(v, (str, bool, int)):
        return v
    raise SchemaViolation(f"unsupported value type {type(v).__name__}", path=path)


def delta_to_obj(delta: StateDelta) -> dict:
    delta = canonicalize(delta)
    return {
        key: [{"entity": r.entity, "field": r.field,
               "old": _value_to_obj(r.old), "new": _value_to_obj(r.new)}
              for r in delta.component(key)]
        for key in COMPONENT_KEYS
    }


def serialize_delta(delta: StateDelta) -> str:
    return json.dumps(delta_to_obj(delta), sort_keys=True, separators=(",", ":"))


def delta_from_obj(obj) -> StateDelta:
    if not isinstance(obj, dict):
        raise SchemaViolation("delta must be an object", path="$")
    if set(obj) != set(COMPONENT_KEYS):
        raise SchemaViolation(
            f"delta must have exactly the keys {list(COMPONENT_KEYS)}", path="$")
    parts = {}
    for key in COMPONENT_KEYS:
        records = []
        if not isinstance(obj[key], list):
            raise SchemaViolation("expected a list of records", path=key)
        for i, rec in enumerate(obj[key]):
            path = f"{key}[{i}]"
            if not isinstance(rec, dict) or set(rec) != {"entity", "field",
                                                         "old", "new"}:
                raise SchemaViolation(
                    "record must have exactly entity/field/old/new", path=path)
            if not isinstance(rec["entity"], str) or not isinstance(rec["field"], str):
                raise SchemaViolation("entity and field must be strings", path=path)
            records.append(ChangeRecord(
                entity=rec["entity"], field=rec["field"],
                old=_value_from_obj(rec["old"], f"{path}.old"),
                new=_value_from_obj(rec["new"], f"{path}.new")))
        parts[key] = tuple(records)
    return canonicalize(StateDelta(**parts))


def parse_delta(text: str) -> StateDelta:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise MalformedDocument(f"not valid JSON: {e}") from e
    return delta_from_obj(obj)
