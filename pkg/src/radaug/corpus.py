"""Report corpora on disk.

A corpus file is JSON-Lines with one record per (report, region) pair::

    {"id": "c1", "region": "abdomen", "findings": "...", "generated": "..."}

Lines sharing an ``id`` are merged into one :class:`Report`. Text is kept
verbatim; nothing is normalized at I/O time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator


class Region(str, Enum):
    CHEST = "chest"
    ABDOMEN = "abdomen"
    PELVIS = "pelvis"

    def __str__(self) -> str:
        return self.value


REGION_ORDER: tuple[Region, ...] = (Region.CHEST, Region.ABDOMEN, Region.PELVIS)


class CorpusError(ValueError):
    pass


class MalformedLine(CorpusError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        msg = f"malformed line {line_no}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class DuplicateRegion(CorpusError):
    def __init__(self, report_id: str, region: Region):
        self.report_id = report_id
        self.region = region
        super().__init__(f"report {report_id!r} repeats region {region.value!r}")


class EmptyCorpus(CorpusError):
    def __init__(self):
        super().__init__("corpus is empty")


def parse_region(value) -> Region:
    try:
        return Region(value)
    except ValueError:
        raise ValueError(f"unknown region {value!r}") from None


@dataclass(frozen=True)
class Report:
    id: str
    region_findings: dict[Region, str]
    region_generated: dict[Region, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise CorpusError("report id must be non-empty")
        if not self.region_findings:
            raise CorpusError(f"report {self.id!r} has no regions")
        for region, text in self.region_findings.items():
            if not isinstance(region, Region):
                raise CorpusError(f"report {self.id!r}: bad region key {region!r}")
            if not text.strip():
                raise CorpusError(f"report {self.id!r}: empty findings for {region.value}")
        extra = set(self.region_generated) - set(self.region_findings)
        if extra:
            names = ", ".join(sorted(r.value for r in extra))
            raise CorpusError(f"report {self.id!r}: generated text without findings for {names}")

    @property
    def regions(self) -> list[Region]:
        return [r for r in REGION_ORDER if r in self.region_findings]

    def with_generated(self, region: Region, text: str) -> "Report":
        generated = dict(self.region_generated)
        generated[region] = text
        return Report(self.id, dict(self.region_findings), generated)


@dataclass(frozen=True)
class Corpus:
    reports: tuple[Report, ...]

    def __post_init__(self):
        object.__setattr__(self, "reports", tuple(self.reports))
        seen = set()
        for report in self.reports:
            if report.id in seen:
                raise CorpusError(f"duplicate report id {report.id!r}")
            seen.add(report.id)

    def __iter__(self) -> Iterator[Report]:
        return iter(self.reports)

    def __len__(self) -> int:
        return len(self.reports)

    def by_id(self) -> dict[str, Report]:
        return {r.id: r for r in self.reports}

    def n_pairs(self) -> int:
        return sum(len(r.region_findings) for r in self.reports)


def _iter_records(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, str(exc)) from None
            if not isinstance(record, dict):
                raise MalformedLine(line_no, "expected a JSON object")
            yield line_no, record


def load_corpus(path) -> Corpus:
    """Load a JSONL corpus, merging per-region lines by report id.

    Unknown fields are ignored. Report order follows first appearance of each
    id in the file.
    """
    findings: dict[str, dict[Region, str]] = {}
    generated: dict[str, dict[Region, str]] = {}
    for line_no, record in _iter_records(Path(path)):
        rid = record.get("id")
        text = record.get("findings")
        gen = record.get("generated")
        if not isinstance(rid, str) or not rid:
            raise MalformedLine(line_no, "missing or empty 'id'")
        try:
            region = parse_region(record.get("region"))
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from None
        if not isinstance(text, str) or not text.strip():
            raise MalformedLine(line_no, "missing or empty 'findings'")
        if gen is not None and not isinstance(gen, str):
            raise MalformedLine(line_no, "'generated' must be a string")

        regions = findings.setdefault(rid, {})
        if region in regions:
            raise DuplicateRegion(rid, region)
        regions[region] = text
        if gen is not None:
            generated.setdefault(rid, {})[region] = gen

    if not findings:
        raise EmptyCorpus()
    return Corpus(tuple(Report(rid, regs, generated.get(rid, {})) for rid, regs in findings.items()))


def corpus_lines(corpus: Corpus) -> list[str]:
    lines = []
    for report in corpus:
        for region in report.regions:
            record = {"id": report.id, "region": region.value,
                      "findings": report.region_findings[region]}
            if region in report.region_generated:
                record["generated"] = report.region_generated[region]
            lines.append(json.dumps(record, ensure_ascii=False))
    return lines


def write_corpus(corpus: Corpus, path) -> None:
    if len(corpus) == 0:
        raise EmptyCorpus()
    lines = corpus_lines(corpus)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
