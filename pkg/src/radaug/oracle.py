"""Binary answer sources standing in for a trained triplet model."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Corpus, MalformedLine, REGION_ORDER
from .triplets import CanonicalMap, Lexicon, Triplet, report_to_triplets


class MissingAnswer(LookupError):
    def __init__(self, report_id: str, triplet: Triplet):
        self.report_id = report_id
        self.triplet = triplet
        super().__init__(f"no answer for report {report_id!r}, triplet {triplet.key}")


class DuplicateKey(ValueError):
    def __init__(self, key: "AnswerKey", line_no: int):
        self.key = key
        super().__init__(f"line {line_no}: duplicate answer key {key}")


@dataclass(frozen=True)
class AnswerKey:
    report_id: str
    entity: str
    position: str

    @classmethod
    def of(cls, report_id: str, query: Triplet) -> "AnswerKey":
        return cls(report_id, query.entity, query.position)


def reference_answer(query: Triplet, reference_triplets: Sequence[Triplet]) -> bool:
    """Exist flag of the first reference with the same entity and position.

    Unmatched queries are answered ``False``.
    """
    for ref in reference_triplets:
        if ref.key == query.key:
            return ref.exist
    return False


class AnswerSource:
    def answer(self, report_id: str, query: Triplet) -> bool:
        raise NotImplementedError


class ConstantSource(AnswerSource):
    def __init__(self, value: bool):
        self.value = bool(value)

    def answer(self, report_id, query):
        return self.value


class ReferenceSource(AnswerSource):
    """Answers from each report's own reference findings.

    This reproduces the label construction used for training the triplet
    model, so it behaves as a perfect model.
    """

    def __init__(self, references: Mapping[str, Sequence[Triplet]]):
        self.references = {rid: tuple(ts) for rid, ts in references.items()}

    @classmethod
    def from_corpus(cls, corpus: Corpus, lexicon: Lexicon, cmap: CanonicalMap | None = None):
        refs = {}
        for report in corpus:
            text = "\n".join(report.region_findings[r] for r in REGION_ORDER if r in report.region_findings)
            refs[report.id] = report_to_triplets(text, lexicon, cmap)
        return cls(refs)

    def answer(self, report_id, query):
        return reference_answer(query, self.references.get(report_id, ()))


class FileSource(AnswerSource):
    def __init__(self, table: Mapping[AnswerKey, bool]):
        self.table = dict(table)

    def answer(self, report_id, query):
        try:
            return self.table[AnswerKey.of(report_id, query)]
        except KeyError:
            raise MissingAnswer(report_id, query) from None


def load_answers(path) -> FileSource:
    table: dict[AnswerKey, bool] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = Triplet(rec.get("entity", ""), rec.get("position", ""))
                rid, ans = rec["id"], rec["answer"]
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError, ValueError) as exc:
                raise MalformedLine(line_no, str(exc)) from None
            if not isinstance(rid, str) or not rid or not isinstance(ans, bool):
                raise MalformedLine(line_no, "'id' must be a non-empty string and 'answer' a boolean")
            key = AnswerKey.of(rid, t)
            if key in table:
                raise DuplicateKey(key, line_no)
            table[key] = ans
    return FileSource(table)


def answer(source: AnswerSource, report_id: str, query: Triplet) -> bool:
    return source.answer(report_id, query)


def parse_oracle(selector: str, corpus: Corpus | None = None,
                 lexicon: Lexicon | None = None, cmap: CanonicalMap | None = None) -> AnswerSource:
    """Build a source from ``reference``, ``file:<path>`` or ``const:true|false``."""
    if selector == "reference":
        if corpus is None or lexicon is None:
            raise ValueError("reference oracle needs a corpus and a lexicon")
        return ReferenceSource.from_corpus(corpus, lexicon, cmap)
    if selector.startswith("file:"):
        return load_answers(selector[len("file:"):])
    if selector in ("const:true", "const:false"):
        return ConstantSource(selector == "const:true")
    raise ValueError(f"bad oracle selector {selector!r}; expected reference, file:<path>, const:true or const:false")
