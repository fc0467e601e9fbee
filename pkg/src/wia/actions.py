"""Strategic action registry.

The registry is the closed set of (category, name) pairs a player action may
take. Categories group actions by intent (objective damage, defense, wave
clearing, ...); names identify the concrete target. ``ActionLabel`` values
are validated against this table at construction, so anything downstream can
trust that an action exists.

Registry order is significant: it is the documented tie-break order for the
downstream action selector and the iteration order wherever "the full
registry" is enumerated.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SchemaViolation

# (category, (names...)) in registry order.
_REGISTRY_TABLE: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("None", ("None",)),
    ("Dragon", ("Lord", "Tyrant", "Dragon King")),
    ("Tower", ("Crystal", "Top Tower", "Mid Tower", "Bot Tower")),
    ("Defense", ("Defend Crystal", "Defend Top Tower", "Defend Mid Tower",
                 "Defend Bot Tower")),
    ("Hero", ("Top Hero", "Mid Hero", "Bot Hero", "River Top Hero",
              "River Bot Hero", "Allied Jungle Hero", "Enemy Jungle Hero",
              "Ally High-ground Hero", "Enemy High-ground Hero")),
    ("Line", ("Top Minions", "Mid Minions", "Bot Minions",
              "Ally High-ground Minions", "Enemy High-ground Minions")),
    ("Buff", ("Allied Red", "Enemy Red", "Allied Blue", "Enemy Blue")),
    ("Jungle", ("Allied Camps", "Enemy Camps", "Void Spirit (Top Crab)",
                "Crimson Raptor (Bot Crab)")),
    ("Grouping", ("Top Grouping", "Mid Grouping", "Bot Grouping",
                  "River Top Grouping", "River Bot Grouping",
                  "Allied Jungle Group", "Enemy Jungle Group",
                  "Ally High-ground Group", "Enemy High-ground Group")),
    ("Recall", ("Recall",)),
)

CATEGORIES: tuple[str, ...] = tuple(cat for cat, _ in _REGISTRY_TABLE)

# name -> category; names are unique across categories.
_NAME_TO_CATEGORY: dict[str, str] = {
    name: cat for cat, names in _REGISTRY_TABLE for name in names
}


@dataclass(frozen=True)
class ActionLabel:
    """One strategic action: a (category, name) pair from the registry."""

    category: str
    name: str

    def __post_init__(self):
        expected = _NAME_TO_CATEGORY.get(self.name)
        if expected is None:
            raise SchemaViolation(f"unknown action name {self.name!r}",
                                  path="action.name")
        if expected != self.category:
            raise SchemaViolation(
                f"action {self.name!r} belongs to category {expected!r}, "
                f"not {self.category!r}", path="action.category")

    def to_obj(self) -> dict:
        return {"category": self.category, "name": self.name}


def action(name: str) -> ActionLabel:
    """Look an action up by name alone."""
    cat = _NAME_TO_CATEGORY.get(name)
    if cat is None:
        raise SchemaViolation(f"unknown action name {name!r}", path="action.name")
    return ActionLabel(cat, name)


def parse_action(obj) -> ActionLabel:
    if not isinstance(obj, dict):
        raise SchemaViolation("action must be an object", path="action")
    extra = set(obj) - {"category", "name"}
    if extra:
        raise SchemaViolation(f"unknown action fields {sorted(extra)}", path="action")
    if "category" not in obj or "name" not in obj:
        raise SchemaViolation("action needs category and name", path="action")
    return ActionLabel(obj["category"], obj["name"])


# Full registry in documented order.
REGISTRY: tuple[ActionLabel, ...] = tuple(
    ActionLabel(cat, name) for cat, names in _REGISTRY_TABLE for name in names
)

NONE_ACTION = REGISTRY[0]

_REGISTRY_INDEX: dict[ActionLabel, int] = {a: i for i, a in enumerate(REGISTRY)}


def registry_index(a: ActionLabel) -> int:
    """Position of an action in registry order (tie-break key)."""
    return _REGISTRY_INDEX[a]
