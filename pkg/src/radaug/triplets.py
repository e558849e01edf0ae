"""Rule-based {entity, position, exist} triplets from findings text.

Extraction is lexicon driven: surface forms are matched longest-first on word
boundaries, each entity is paired with the nearest position in its sentence,
and a negation cue anywhere before the entity marks it absent.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

_WS = re.compile(r"\s+")
_SENTENCE = re.compile(r"[^.;\n]*(?:[.;]|\n|$)")


class InvalidTriplet(ValueError):
    pass


class LexiconError(ValueError):
    pass


class CanonicalMapError(ValueError):
    pass


def normalize_phrase(text: str) -> str:
    return _WS.sub(" ", text).strip().lower()


@dataclass(frozen=True, order=True)
class Triplet:
    entity: str
    position: str
    exist: bool = True

    def __post_init__(self):
        object.__setattr__(self, "entity", normalize_phrase(self.entity))
        object.__setattr__(self, "position", normalize_phrase(self.position))
        object.__setattr__(self, "exist", bool(self.exist))
        if not self.entity and not self.position:
            raise InvalidTriplet("entity and position are both empty")

    @property
    def key(self) -> tuple[str, str]:
        return (self.entity, self.position)

    def to_dict(self) -> dict:
        return {"entity": self.entity, "position": self.position, "exist": self.exist}


def split_sentences(findings: str) -> list[str]:
    """Split on '.', ';' and newlines, keeping terminal punctuation.

    >>> split_sentences("A. B.")
    ['A.', 'B.']
    """
    out = []
    for match in _SENTENCE.finditer(findings):
        sentence = match.group(0).strip()
        if sentence.strip(".;"):
            out.append(sentence)
    return out


def _surface_pattern(surfaces: Iterable[str]) -> re.Pattern | None:
    # longest first so the alternation prefers the longest surface at each offset
    ordered = sorted(set(surfaces), key=lambda s: (-len(s), s))
    if not ordered:
        return None
    alts = "|".join(r"\s+".join(re.escape(w) for w in s.split(" ")) for s in ordered)
    return re.compile(rf"(?<![^\W_])(?:{alts})(?![^\W_])", re.IGNORECASE)


@dataclass(frozen=True)
class Lexicon:
    entities: tuple[tuple[str, str], ...]
    positions: tuple[tuple[str, str], ...]
    negation_cues: tuple[str, ...] = ("no", "without", "not seen")

    def __post_init__(self):
        ents = tuple((normalize_phrase(s), normalize_phrase(c)) for s, c in self.entities)
        poss = tuple((normalize_phrase(s), normalize_phrase(c)) for s, c in self.positions)
        cues = tuple(normalize_phrase(c) for c in self.negation_cues)
        for name, pairs in (("entities", ents), ("positions", poss)):
            surfaces = [s for s, _ in pairs]
            if any(not s or not c for s, c in pairs):
                raise LexiconError(f"empty surface form or canonical value in {name}")
            if len(surfaces) != len(set(surfaces)):
                raise LexiconError(f"duplicate surface forms in {name}")
        if any(not c for c in cues) or len(cues) != len(set(cues)):
            raise LexiconError("negation cues must be non-empty and unique")
        object.__setattr__(self, "entities", ents)
        object.__setattr__(self, "positions", poss)
        object.__setattr__(self, "negation_cues", cues)

    @cached_property
    def _entity_re(self):
        return _surface_pattern(s for s, _ in self.entities)

    @cached_property
    def _position_re(self):
        return _surface_pattern(s for s, _ in self.positions)

    @cached_property
    def _cue_re(self):
        return _surface_pattern(self.negation_cues)

    @cached_property
    def _entity_canon(self) -> dict[str, str]:
        return dict(self.entities)

    @cached_property
    def _position_canon(self) -> dict[str, str]:
        return dict(self.positions)

    @classmethod
    def from_dict(cls, data: dict) -> "Lexicon":
        try:
            return cls(
                entities=tuple(tuple(p) for p in data.get("entities", [])),
                positions=tuple(tuple(p) for p in data.get("positions", [])),
                negation_cues=tuple(data.get("negation_cues", [])),
            )
        except (TypeError, ValueError) as exc:
            raise LexiconError(f"bad lexicon: {exc}") from None

    def to_dict(self) -> dict:
        return {"entities": [list(p) for p in self.entities],
                "positions": [list(p) for p in self.positions],
                "negation_cues": list(self.negation_cues)}


def load_lexicon(path) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        return Lexicon.from_dict(json.load(fh))


@dataclass(frozen=True)
class MapRule:
    source: tuple[str, str]
    target: tuple[str, str]


class CanonicalMap:
    """Ordered rewrite rules from triplet variations to one common triplet.

    Rules match on exact (entity, position) after normalization; the first
    match wins. Construction rejects rule sets whose outputs are not fixed
    points, so :meth:`apply` is idempotent.
    """

    def __init__(self, rules: Sequence[MapRule] = ()):
        self.rules = tuple(rules)
        self._table: dict[tuple[str, str], tuple[str, str]] = {}
        for rule in self.rules:
            self._table.setdefault(rule.source, rule.target)
        for rule in self.rules:
            src, dst = rule.source, rule.target
            if not any(dst) or not any(src):
                raise CanonicalMapError(f"rule {src} -> {dst} has an empty triplet")
            if self._table.get(dst, dst) != dst:
                raise CanonicalMapError(
                    f"rule output {dst} is rewritten again to {self._table[dst]}; "
                    "outputs must be fixed points")

    def __len__(self) -> int:
        return len(self.rules)

    def apply(self, t: Triplet) -> Triplet:
        target = self._table.get(t.key)
        if target is None:
            return t
        return Triplet(target[0], target[1], t.exist)

    @classmethod
    def from_dict(cls, data: dict) -> "CanonicalMap":
        rules = []
        try:
            for item in data.get("rules", []):
                src, dst = item["from"], item["to"]
                rules.append(MapRule(
                    (normalize_phrase(src.get("entity", "")), normalize_phrase(src.get("position", ""))),
                    (normalize_phrase(dst.get("entity", "")), normalize_phrase(dst.get("position", ""))),
                ))
        except (KeyError, TypeError, AttributeError) as exc:
            raise CanonicalMapError(f"bad canonical map: {exc}") from None
        return cls(rules)

    def to_dict(self) -> dict:
        return {"rules": [
            {"from": {"entity": r.source[0], "position": r.source[1]},
             "to": {"entity": r.target[0], "position": r.target[1]}}
            for r in self.rules]}


def load_canonical_map(path) -> CanonicalMap:
    with open(path, encoding="utf-8") as fh:
        return CanonicalMap.from_dict(json.load(fh))


def canonicalize(t: Triplet, cmap: CanonicalMap) -> Triplet:
    return cmap.apply(t)


def _gap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(b[0] - a[1], a[0] - b[1], 0)


def extract_triplets(sentence: str, lexicon: Lexicon) -> list[Triplet]:
    """Extract triplets from one sentence.

    Every entity hit yields a triplet paired with the closest position hit
    (ties go to the leftmost). A sentence with positions but no entities
    yields one position-only triplet per position.
    """
    ent_hits = []
    if lexicon._entity_re is not None:
        ent_hits = [(m.span(), lexicon._entity_canon[normalize_phrase(m.group(0))])
                    for m in lexicon._entity_re.finditer(sentence)]
    pos_hits = []
    if lexicon._position_re is not None:
        for m in lexicon._position_re.finditer(sentence):
            span = m.span()
            # an entity surface owns its characters
            if any(span[0] < e[1] and e[0] < span[1] for e, _ in ent_hits):
                continue
            pos_hits.append((span, lexicon._position_canon[normalize_phrase(m.group(0))]))
    cue_ends = []
    if lexicon._cue_re is not None:
        cue_ends = [m.end() for m in lexicon._cue_re.finditer(sentence)]

    def negated(start: int) -> bool:
        return any(end <= start for end in cue_ends)

    out = []
    if ent_hits:
        for span, entity in ent_hits:
            position = ""
            if pos_hits:
                position = min(pos_hits, key=lambda p: (_gap(span, p[0]), p[0][0]))[1]
            out.append(Triplet(entity, position, not negated(span[0])))
    else:
        for span, position in pos_hits:
            out.append(Triplet("", position, not negated(span[0])))
    return out


def report_to_triplets(report_text: str, lexicon: Lexicon, cmap: CanonicalMap | None = None) -> list[Triplet]:
    """Canonical triplets of a whole report, first occurrence wins."""
    cmap = cmap if cmap is not None else CanonicalMap()
    seen: dict[tuple[str, str], Triplet] = {}
    for sentence in split_sentences(report_text):
        for raw in extract_triplets(sentence, lexicon):
            t = cmap.apply(raw)
            first = seen.get(t.key)
            if first is None:
                seen[t.key] = t
            elif first.exist != t.exist:
                logger.warning("conflicting exist flags for %s; keeping %s", t.key, first.exist)
    return list(seen.values())


@dataclass(frozen=True)
class Question:
    text: str
    source: Triplet


def render_question(t: Triplet) -> Question:
    if t.entity and t.position:
        text = f"Is there {t.entity} in the {t.position}?"
    elif t.position:
        text = f"Is the {t.position} normal?"
    elif t.entity:
        text = f"Can you observe {t.entity} in this CT scan?"
    else:
        raise InvalidTriplet("entity and position are both empty")
    return Question(text, t)


_DATA = Path(__file__).parent / "data"


def default_lexicon() -> Lexicon:
    return load_lexicon(_DATA / "lexicon.json")


def default_canonical_map() -> CanonicalMap:
    return load_canonical_map(_DATA / "canonical_map.json")
