"""Knowledge-based report augmentation.

Binary questioning (BQ) asks an answer source about each common triplet of a
region that the report does not already mention and appends the matching
positive or negative finding. Naive normality (NN) then appends a normal
finding for every listed organ or condition still not mentioned.
Both steps only ever append; the generated text is kept verbatim as a prefix.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from .corpus import Region, Report, parse_region
from .oracle import AnswerSource
from .triplets import Triplet, normalize_phrase, split_sentences


class EmptyKeywordList(ValueError):
    pass


class MissingGenerated(LookupError):
    def __init__(self, report_id: str, region: Region):
        self.report_id = report_id
        self.region = region
        super().__init__(f"report {report_id!r} has no generated text for {region.value}")


class KnowledgeBaseError(ValueError):
    pass


@lru_cache(maxsize=1024)
def _keyword_re(keyword: str) -> re.Pattern:
    body = r"\s+".join(re.escape(w) for w in keyword.split(" "))
    return re.compile(rf"(?<![^\W_]){body}(?![^\W_])", re.IGNORECASE)


def keyword_present(report_text: str, keywords: Sequence[str]) -> bool:
    """Whether the keywords are mentioned.

    One keyword may appear anywhere. Several keywords must co-occur in a
    single sentence.
    """
    if not keywords:
        raise EmptyKeywordList("keyword list is empty")
    patterns = [_keyword_re(normalize_phrase(k)) for k in keywords]
    if len(patterns) == 1:
        return patterns[0].search(report_text) is not None
    return any(all(p.search(s) for p in patterns) for s in split_sentences(report_text))


def append_sentences(text: str, sentences: Sequence[str]) -> str:
    parts = [text] if text else []
    parts.extend(sentences)
    return " ".join(parts)


def _finding(value, what: str) -> str:
    if not isinstance(value, str) or not value.strip().endswith("."):
        raise KnowledgeBaseError(f"{what} must be a sentence ending with '.': {value!r}")
    return value.strip()


def _keywords(values, what: str) -> tuple[str, ...]:
    if not isinstance(values, (list, tuple)) or not values:
        raise KnowledgeBaseError(f"{what} must be a non-empty list")
    out = tuple(normalize_phrase(v) for v in values)
    if any(not k for k in out):
        raise KnowledgeBaseError(f"{what} contains an empty keyword")
    return out


@dataclass(frozen=True)
class CommonTripletEntry:
    triplet: Triplet
    guard_keywords: tuple[str, ...]
    positive_finding: str
    negative_finding: str
    region: Region

    def __post_init__(self):
        object.__setattr__(self, "guard_keywords", _keywords(self.guard_keywords, "guard_keywords"))
        object.__setattr__(self, "positive_finding", _finding(self.positive_finding, "positive_finding"))
        object.__setattr__(self, "negative_finding", _finding(self.negative_finding, "negative_finding"))

    def finding(self, exist: bool) -> str:
        return self.positive_finding if exist else self.negative_finding


@dataclass(frozen=True)
class KnowledgeBase:
    entries: tuple[CommonTripletEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            key = (e.region, e.triplet.key)
            if key in seen:
                raise KnowledgeBaseError(f"duplicate entry for {e.region.value} {e.triplet.key}")
            seen.add(key)

    def for_region(self, region: Region) -> list[CommonTripletEntry]:
        return [e for e in self.entries if e.region == region]

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeBase":
        entries = []
        for i, item in enumerate(data.get("entries", [])):
            try:
                entries.append(CommonTripletEntry(
                    triplet=Triplet(item.get("entity", ""), item.get("position", "")),
                    guard_keywords=item["guard_keywords"],
                    positive_finding=item["positive_finding"],
                    negative_finding=item["negative_finding"],
                    region=parse_region(item["region"]),
                ))
            except (KeyError, TypeError, AttributeError, ValueError) as exc:
                raise KnowledgeBaseError(f"knowledge base entry {i}: {exc}") from None
        return cls(tuple(entries))


@dataclass(frozen=True)
class NormalityRule:
    region: Region
    required_keywords: tuple[str, ...]
    normal_finding: str

    def __post_init__(self):
        kws = _keywords(self.required_keywords, "required_keywords")
        if len(kws) > 2:
            raise KnowledgeBaseError("a normality rule takes one or two keywords")
        finding = _finding(self.normal_finding, "normal_finding")
        # coverage and idempotence both rest on this
        if not keyword_present(finding, kws):
            raise KnowledgeBaseError(f"normal finding {finding!r} does not mention {list(kws)}")
        object.__setattr__(self, "required_keywords", kws)
        object.__setattr__(self, "normal_finding", finding)


def rules_from_dict(data: dict) -> list[NormalityRule]:
    rules = []
    for i, item in enumerate(data.get("rules", [])):
        try:
            rules.append(NormalityRule(parse_region(item["region"]),
                                       item["required_keywords"], item["normal_finding"]))
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise KnowledgeBaseError(f"normality rule {i}: {exc}") from None
    return rules


def load_knowledge_base(path) -> KnowledgeBase:
    with open(path, encoding="utf-8") as fh:
        return KnowledgeBase.from_dict(json.load(fh))


def load_normality_rules(path) -> list[NormalityRule]:
    with open(path, encoding="utf-8") as fh:
        return rules_from_dict(json.load(fh))


_DATA = Path(__file__).parent / "data"


def default_knowledge_base() -> KnowledgeBase:
    return load_knowledge_base(_DATA / "knowledge_base.json")


def default_normality_rules() -> list[NormalityRule]:
    return load_normality_rules(_DATA / "normality.json")


@dataclass
class AugmentedReport:
    id: str
    region: Region
    original_generated: str
    appended_bq: list[str] = field(default_factory=list)
    appended_nn: list[str] = field(default_factory=list)
    # (queried triplet, answer) per BQ append, parallel to appended_bq
    bq_answers: list[tuple[Triplet, bool]] = field(default_factory=list)
    nn_keywords: list[tuple[str, ...]] = field(default_factory=list)

    @property
    def final_text(self) -> str:
        return append_sentences(self.original_generated, self.appended_bq + self.appended_nn)

    def provenance(self) -> dict:
        appended = [
            {"source": "bq", "sentence": s, "triplet": {"entity": t.entity, "position": t.position},
             "answer": a}
            for s, (t, a) in zip(self.appended_bq, self.bq_answers)
        ]
        appended += [
            {"source": "nn", "sentence": s, "keywords": list(k)}
            for s, k in zip(self.appended_nn, self.nn_keywords)
        ]
        return {"id": self.id, "region": self.region.value, "appended": appended}


def bq_augment(report: Report, region: Region, kb: KnowledgeBase, source: AnswerSource) -> AugmentedReport:
    if region not in report.region_generated:
        raise MissingGenerated(report.id, region)
    out = AugmentedReport(report.id, region, report.region_generated[region])
    text = out.original_generated
    for entry in kb.for_region(region):
        if keyword_present(text, entry.guard_keywords):
            continue
        exist = source.answer(report.id, entry.triplet)
        sentence = entry.finding(exist)
        out.appended_bq.append(sentence)
        out.bq_answers.append((entry.triplet, exist))
        text = append_sentences(text, [sentence])
    return out


def nn_augment(report_text: str, region: Region, rules: Sequence[NormalityRule]) -> tuple[str, list[str]]:
    text, appended, _ = nn_pass(report_text, region, rules)
    return text, appended


def nn_pass(report_text: str, region: Region, rules: Sequence[NormalityRule]):
    """Like :func:`nn_augment` but also returns the keywords behind each append."""
    text = report_text
    appended, used = [], []
    for rule in rules:
        if rule.region != region or keyword_present(text, rule.required_keywords):
            continue
        appended.append(rule.normal_finding)
        used.append(rule.required_keywords)
        text = append_sentences(text, [rule.normal_finding])
    return text, appended, used


def augment_pipeline(report: Report, region: Region, kb: KnowledgeBase,
                     rules: Sequence[NormalityRule], source: AnswerSource) -> AugmentedReport:
    out = bq_augment(report, region, kb, source)
    _, appended, used = nn_pass(out.final_text, region, rules)
    out.appended_nn = appended
    out.nn_keywords = used
    return out
