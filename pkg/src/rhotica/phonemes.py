"""Phonemes as articulatory feature bundles, per-accent inventories, the
cross-accent token map, and a graded phoneme distance.

Symbols are opaque X-SAMPA-style strings; every feature comes from the
inventory file, never from parsing the symbol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateSymbolError, ParseError, RhoticaError

VOWEL = "vowel"
CONSONANT = "consonant"

PLACES = ("bilabial", "labiodental", "dental", "alveolar", "postalveolar",
          "retroflex", "palatal", "velar", "glottal")
MANNERS = ("stop", "affricate", "fricative", "nasal", "lateral", "approximant", "tap")
HEIGHTS = ("close", "close-mid", "open-mid", "open")
BACKNESS = ("front", "central", "back")

# ordinal feature -> number of steps between extremes
_RANGES = {
    "place": len(PLACES) - 1,
    "manner": len(MANNERS) - 1,
    "height": len(HEIGHTS) - 1,
    "backness": len(BACKNESS) - 1,
}
_CONSONANT_ONLY = ("place", "manner")
_VOWEL_ONLY = ("height", "backness")
_FIELDS = ("symbol", "kind", "voiced", "place", "manner", "height", "backness",
           "rounded", "long", "rhotic")

# Syllable/word boundary marks some frontends emit between phonemes.
BOUNDARY_SYMBOLS = frozenset({".", "#", "|", "||", "-", "%", '"'})

DEFAULT_ACCENTS = ("en-GB", "en-US", "en-IE")


@dataclass(frozen=True)
class Phoneme:
    symbol: str
    kind: str
    voiced: bool = True
    place: int | None = None
    manner: int | None = None
    height: int | None = None
    backness: int | None = None
    rounded: bool = False
    long: bool = False
    rhotic: bool = False

    def __post_init__(self):
        if self.kind not in (VOWEL, CONSONANT):
            raise RhoticaError(f"{self.symbol!r}: kind must be 'vowel' or 'consonant', got {self.kind!r}")
        own, other = (_VOWEL_ONLY, _CONSONANT_ONLY) if self.is_vowel else (_CONSONANT_ONLY, _VOWEL_ONLY)
        for name in own:
            value = getattr(self, name)
            if value is None:
                raise RhoticaError(f"{self.symbol!r}: {self.kind} requires {name}")
            if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= _RANGES[name]:
                raise RhoticaError(f"{self.symbol!r}: {name}={value!r} outside 0..{_RANGES[name]}")
        for name in other:
            if getattr(self, name) is not None:
                raise RhoticaError(f"{self.symbol!r}: {name} is not a {self.kind} feature")

    @property
    def is_vowel(self) -> bool:
        return self.kind == VOWEL

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in _FIELDS
                if getattr(self, name) is not None}


@dataclass(frozen=True)
class PhonemeInventory:
    accent: str
    phonemes: tuple[Phoneme, ...]

    def __post_init__(self):
        if not self.phonemes:
            raise RhoticaError(f"inventory {self.accent!r} is empty")
        seen = set()
        for ph in self.phonemes:
            if ph.symbol in seen:
                raise DuplicateSymbolError(f"duplicate symbol {ph.symbol!r}", locus=self.accent)
            seen.add(ph.symbol)
        object.__setattr__(self, "_by_symbol", {ph.symbol: ph for ph in self.phonemes})

    def __len__(self):
        return len(self.phonemes)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._by_symbol

    def __getitem__(self, symbol: str) -> Phoneme:
        try:
            return self._by_symbol[symbol]
        except KeyError:
            raise RhoticaError(f"symbol {symbol!r} not in {self.accent} inventory") from None

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(ph.symbol for ph in self.phonemes)

    def sequence(self, symbols: str | Iterable[str]) -> list[Phoneme]:
        """Look up a phoneme sequence, dropping boundary marks.

        A string is split on whitespace.
        """
        if isinstance(symbols, str):
            symbols = symbols.split()
        return [self[s] for s in symbols if s not in BOUNDARY_SYMBOLS]

    def to_json(self) -> str:
        return json.dumps({"accent": self.accent,
                           "phonemes": [ph.to_dict() for ph in self.phonemes]}, indent=1)


@dataclass(frozen=True)
class UnifiedTokenMap:
    """(accent, symbol) -> token id; equal symbols share an id across accents."""

    entries: Mapping[tuple[str, str], int]
    symbols: tuple[str, ...]  # indexed by token id

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, key: tuple[str, str]) -> int:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    @property
    def vocab_size(self) -> int:
        return len(self.symbols)

    def encode(self, accent: str, symbols: Iterable[str]) -> list[int]:
        return [self.entries[(accent, s)] for s in symbols]

    def to_dict(self) -> dict:
        by_accent: dict[str, dict[str, int]] = {}
        for (accent, symbol), token in self.entries.items():
            by_accent.setdefault(accent, {})[symbol] = token
        return {"tokens": list(self.symbols), "accents": by_accent}


def _default_weights(**w):
    return field(default_factory=lambda: dict(w))


@dataclass(frozen=True)
class CostConfig:
    consonant_weights: dict = _default_weights(place=0.35, manner=0.35, voiced=0.30)
    vowel_weights: dict = _default_weights(height=0.30, backness=0.30, rounded=0.10,
                                           long=0.10, rhotic=0.20)
    cross_kind_cost: float = 1.0
    indel_cost: float = 0.7

    def __post_init__(self):
        for name, weights, keys in (
                ("consonant_weights", self.consonant_weights, {"place", "manner", "voiced"}),
                ("vowel_weights", self.vowel_weights,
                 {"height", "backness", "rounded", "long", "rhotic"})):
            if set(weights) != keys:
                raise RhoticaError(f"{name} must have exactly the keys {sorted(keys)}")
            if any(w < 0 for w in weights.values()):
                raise RhoticaError(f"{name} must be non-negative")
            if abs(sum(weights.values()) - 1.0) > 1e-9:
                raise RhoticaError(f"{name} must sum to 1, got {sum(weights.values())!r}")
        if not 0.0 < self.cross_kind_cost <= 1.0:
            raise RhoticaError("cross_kind_cost must lie in (0, 1]")
        if not self.indel_cost > 0:
            raise RhoticaError("indel_cost must be positive")

    @classmethod
    def from_dict(cls, data: Mapping) -> "CostConfig":
        defaults = cls()
        return cls(
            consonant_weights=dict(data.get("consonant_weights", defaults.consonant_weights)),
            vowel_weights=dict(data.get("vowel_weights", defaults.vowel_weights)),
            cross_kind_cost=float(data.get("cross_kind_cost", defaults.cross_kind_cost)),
            indel_cost=float(data.get("indel_cost", defaults.indel_cost)),
        )

    def to_dict(self) -> dict:
        return {"consonant_weights": dict(self.consonant_weights),
                "vowel_weights": dict(self.vowel_weights),
                "cross_kind_cost": self.cross_kind_cost,
                "indel_cost": self.indel_cost}


def phoneme_distance(a: Phoneme, b: Phoneme, cfg: CostConfig | None = None) -> float:
    """Weighted, normalised feature mismatch in [0, 1].

    Ordinal features contribute ``|difference| / range``; booleans 0 or 1.
    Pairs of different kinds cost ``cfg.cross_kind_cost``.
    """
    cfg = cfg or CostConfig()
    if a.kind != b.kind:
        return cfg.cross_kind_cost
    weights = cfg.vowel_weights if a.is_vowel else cfg.consonant_weights
    total = 0.0
    for name, w in weights.items():
        x, y = getattr(a, name), getattr(b, name)
        if name in _RANGES:
            total += w * abs(x - y) / _RANGES[name]
        else:
            total += w * (x != y)
    return min(total, 1.0)


def _parse_phoneme(entry, locus: str) -> Phoneme:
    if not isinstance(entry, dict):
        raise ParseError("phoneme entry must be an object", locus)
    unknown = set(entry) - set(_FIELDS)
    if unknown:
        raise ParseError(f"unknown feature(s) {sorted(unknown)}", locus)
    symbol = entry.get("symbol")
    if not isinstance(symbol, str) or not symbol.strip() or symbol != symbol.strip():
        raise ParseError("symbol must be a non-empty string without surrounding spaces", f"{locus}.symbol")
    if symbol in BOUNDARY_SYMBOLS:
        raise ParseError(f"{symbol!r} is reserved as a boundary mark", f"{locus}.symbol")
    kind = entry.get("kind")
    if kind not in (VOWEL, CONSONANT):
        raise ParseError(f"unknown kind {kind!r}", f"{locus}.kind")
    required = ("height", "backness", "rounded", "long") if kind == VOWEL else ("voiced", "place", "manner")
    values = {}
    for name in _FIELDS[2:]:
        value = entry.get(name)
        if value is None:
            if name in required:
                raise ParseError(f"missing feature for {kind}", f"{locus}.{name}")
            continue
        if name in _RANGES:
            if (name in _CONSONANT_ONLY) != (kind == CONSONANT):
                raise ParseError(f"feature not applicable to a {kind}", f"{locus}.{name}")
            if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= _RANGES[name]:
                raise ParseError(f"unknown feature value {value!r} (expected 0..{_RANGES[name]})",
                                 f"{locus}.{name}")
        elif not isinstance(value, bool):
            raise ParseError(f"unknown feature value {value!r} (expected true/false)", f"{locus}.{name}")
        values[name] = value
    return Phoneme(symbol=symbol, kind=kind, **values)


def load_inventory(spec_text: str) -> PhonemeInventory:
    """Parse an inventory JSON document."""
    try:
        doc = json.loads(spec_text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("inventory must be a JSON object")
    extra = set(doc) - {"accent", "phonemes"}
    if extra:
        raise ParseError(f"unknown key(s) {sorted(extra)}")
    accent = doc.get("accent")
    if not isinstance(accent, str) or not accent:
        raise ParseError("accent must be a non-empty string", "accent")
    entries = doc.get("phonemes")
    if not isinstance(entries, list) or not entries:
        raise ParseError("phonemes must be a non-empty list", "phonemes")
    phonemes = []
    seen: dict[str, int] = {}
    for i, entry in enumerate(entries):
        ph = _parse_phoneme(entry, f"phonemes[{i}]")
        if ph.symbol in seen:
            raise DuplicateSymbolError(f"duplicate symbol {ph.symbol!r} (first at phonemes[{seen[ph.symbol]}])",
                                       f"phonemes[{i}].symbol")
        seen[ph.symbol] = i
        phonemes.append(ph)
    return PhonemeInventory(accent=accent, phonemes=tuple(phonemes))


def load_inventory_file(path: str | Path) -> PhonemeInventory:
    return load_inventory(Path(path).read_text(encoding="utf-8"))


def default_inventory(accent: str) -> PhonemeInventory:
    """One of the shipped inventories (en-GB, en-US, en-IE)."""
    if accent not in DEFAULT_ACCENTS:
        raise RhoticaError(f"no default inventory for {accent!r}; have {', '.join(DEFAULT_ACCENTS)}")
    text = resources.files("rhotica").joinpath("data", "inventories", f"{accent}.json").read_text("utf-8")
    return load_inventory(text)


def unify_tokens(inventories: Sequence[PhonemeInventory]) -> UnifiedTokenMap:
    """Map identical symbols in every accent onto one shared token id.

    Ids are dense and assigned in lexicographic symbol order, so the result does
    not depend on the order of ``inventories``.
    """
    if not inventories:
        raise RhoticaError("unify_tokens needs at least one inventory")
    accents = [inv.accent for inv in inventories]
    if len(set(accents)) != len(accents):
        raise RhoticaError(f"accent tags must be unique, got {accents}")
    symbols = tuple(sorted({ph.symbol for inv in inventories for ph in inv.phonemes}))
    ids = {s: i for i, s in enumerate(symbols)}
    entries = {(inv.accent, s): ids[s]
               for inv in sorted(inventories, key=lambda inv: inv.accent)
               for s in sorted(inv.symbols)}
    return UnifiedTokenMap(entries=entries, symbols=symbols)
