"""Report similarity metrics.

BLEU, ROUGE-1/L and an exact-match METEOR are computed here, together with a
negation-aware triplet F1 used as a clinical proxy. Model-judged scores such
as GREEN or RaTEScore are not computed; they can be merged in from a scores
file produced elsewhere.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import lil_matrix

from . import _kernels
from .corpus import Corpus, MalformedLine, REGION_ORDER, Region, parse_region
from .triplets import CanonicalMap, Lexicon, report_to_triplets

ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

_NON_ALNUM = re.compile(r"[\W_]+")


class EmptyPrediction(ValueError):
    pass


class EmptyReference(ValueError):
    pass


class IdMismatch(ValueError):
    pass


class ScoreConflict(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return [t for t in _NON_ALNUM.split(text.lower()) if t]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(pred: Sequence[str], refs: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Sentence BLEU with uniform weights and brevity penalty.

    When any order has zero matches, orders 2..max_n are smoothed by adding
    one to both the match count and the total.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if not pred:
        raise EmptyPrediction("prediction has no tokens")
    if not refs or any(len(r) == 0 for r in refs):
        raise EmptyReference("reference has no tokens")

    matches, totals = [], []
    for n in range(1, max_n + 1):
        cand = _ngrams(pred, n)
        clip: Counter = Counter()
        for ref in refs:
            clip |= _ngrams(ref, n)
        matches.append(sum(min(c, clip[g]) for g, c in cand.items()))
        totals.append(max(len(pred) - n + 1, 0))

    if matches[0] == 0:
        return 0.0
    smooth = any(m == 0 for m in matches)
    log_p = 0.0
    for n, (m, t) in enumerate(zip(matches, totals), 1):
        if smooth and n >= 2:
            m, t = m + 1, t + 1
        log_p += math.log(m / t)

    c = len(pred)
    r = min((len(ref) for ref in refs), key=lambda L: (abs(L - c), L))
    bp = math.exp(1.0 - r / c) if c < r else 1.0
    return bp * math.exp(log_p / max_n)


def f_beta(p: float, r: float, beta: float = ROUGE_BETA) -> float:
    if p == 0.0 and r == 0.0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (r + b2 * p)


def _encode(*seqs: Sequence[str]) -> list[np.ndarray]:
    vocab: dict[str, int] = {}
    return [np.array([vocab.setdefault(t, len(vocab)) for t in s], dtype=np.int64) for s in seqs]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    ea, eb = _encode(a, b)
    return int(_kernels.lcs_length(ea, eb))


def rouge(pred: Sequence[str], ref: Sequence[str]) -> dict[str, float]:
    if not pred or not ref:
        return {"rouge1_f": 0.0, "rougeL_f": 0.0}
    overlap = sum((Counter(pred) & Counter(ref)).values())
    lcs = lcs_length(pred, ref)
    return {
        "rouge1_f": f_beta(overlap / len(pred), overlap / len(ref)),
        "rougeL_f": f_beta(lcs / len(pred), lcs / len(ref)),
    }


def _min_chunk_alignment(pred: Sequence[str], ref: Sequence[str], n_matches: int) -> int:
    """Fewest chunks over all maximum one-to-one exact alignments.

    Solved as a small integer program: pick ``n_matches`` pairs, each token
    used once, maximizing the number of pairs whose successor pair is also
    picked.
    """
    pairs = [(i, j) for i, p in enumerate(pred) for j, r in enumerate(ref) if p == r]
    index = {pair: k for k, pair in enumerate(pairs)}
    links = [(index[(i, j)], index[(i + 1, j + 1)]) for i, j in pairs if (i + 1, j + 1) in index]
    if not links:
        return n_matches
    n_x, n_y = len(pairs), len(links)
    n_var = n_x + n_y

    rows = len(pred) + len(ref) + 1 + 2 * n_y
    a = lil_matrix((rows, n_var))
    lo = np.full(rows, -np.inf)
    hi = np.zeros(rows)
    for k, (i, j) in enumerate(pairs):
        a[i, k] = 1
        a[len(pred) + j, k] = 1
    hi[: len(pred) + len(ref)] = 1
    total = len(pred) + len(ref)
    a[total, :n_x] = 1
    lo[total] = hi[total] = n_matches
    for y, (k1, k2) in enumerate(links):
        for r, k in ((total + 1 + 2 * y, k1), (total + 2 + 2 * y, k2)):
            a[r, n_x + y] = 1
            a[r, k] = -1

    cost = np.concatenate([np.zeros(n_x), -np.ones(n_y)])
    integrality = np.concatenate([np.ones(n_x), np.zeros(n_y)])
    res = milp(cost, constraints=LinearConstraint(a.tocsr(), lo, hi),
               integrality=integrality, bounds=Bounds(0, 1))
    if not res.success:  # pragma: no cover
        raise RuntimeError(f"alignment solver failed: {res.message}")
    return n_matches - int(round(-res.fun))


def _forced_chunks(pred, ref) -> int | None:
    # every matched type unique on both sides: the alignment is forced
    cp, cr = Counter(pred), Counter(ref)
    pos = {}
    for j, t in enumerate(ref):
        if cp[t] == 1 and cr[t] == 1:
            pos[t] = j
        elif t in cp:
            return None
    chunks, last = 0, None
    for t in pred:
        j = pos.get(t)
        if j is None:
            last = None
            continue
        if last is None or j != last + 1:
            chunks += 1
        last = j
    return chunks


def meteor(pred: Sequence[str], ref: Sequence[str]) -> float:
    """Exact-match METEOR (no stemming or synonyms)."""
    if not pred or not ref:
        return 0.0
    m = sum((Counter(pred) & Counter(ref)).values())
    if m == 0:
        return 0.0
    chunks = _forced_chunks(pred, ref)
    if chunks is None:
        chunks = _min_chunk_alignment(pred, ref, m)
    p, r = m / len(pred), m / len(ref)
    fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    return fmean * (1 - penalty)


def prf(n_correct: int, n_pred: int, n_ref: int) -> dict[str, float]:
    if n_pred == 0 and n_ref == 0:
        return {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    p = n_correct / n_pred if n_pred else 1.0
    r = n_correct / n_ref if n_ref else 1.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    if n_pred == 0 or n_ref == 0:
        f1 = 0.0
    return {"precision": p, "recall": r, "f1": f1}


def triplet_f1(pred_text: str, ref_text: str, lexicon: Lexicon, cmap: CanonicalMap | None = None) -> dict[str, float]:
    pred = set(report_to_triplets(pred_text, lexicon, cmap))
    ref = set(report_to_triplets(ref_text, lexicon, cmap))
    return prf(len(pred & ref), len(pred), len(ref))


ALL_METRICS = ("bleu", "rouge1", "rougeL", "meteor", "triplet_f1", "triplet_precision", "triplet_recall")


@dataclass
class EvalConfig:
    lexicon: Lexicon | None = None
    cmap: CanonicalMap | None = None
    metrics: tuple[str, ...] = ALL_METRICS
    max_n: int = 4
    external_scores: str | None = None


@dataclass
class MetricReport:
    per_region: dict[str, dict[str, float]] = field(default_factory=dict)
    averages: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"per_region": self.per_region, "averages": self.averages, "counts": self.counts}


def score_pair(pred_text: str | None, ref_text: str, config: EvalConfig) -> dict[str, float]:
    wanted = set(config.metrics)
    if pred_text is None:
        return {k: 0.0 for k in config.metrics}
    p, r = tokenize(pred_text), tokenize(ref_text)
    out: dict[str, float] = {}
    if "bleu" in wanted:
        try:
            out["bleu"] = bleu(p, [r], config.max_n)
        except (EmptyPrediction, EmptyReference):
            out["bleu"] = 0.0
    if wanted & {"rouge1", "rougeL"}:
        rg = rouge(p, r)
        if "rouge1" in wanted:
            out["rouge1"] = rg["rouge1_f"]
        if "rougeL" in wanted:
            out["rougeL"] = rg["rougeL_f"]
    if "meteor" in wanted:
        out["meteor"] = meteor(p, r)
    if wanted & {"triplet_f1", "triplet_precision", "triplet_recall"}:
        if config.lexicon is None:
            raise ValueError("triplet metrics need a lexicon")
        tf = triplet_f1(pred_text, ref_text, config.lexicon, config.cmap)
        for name in ("f1", "precision", "recall"):
            if f"triplet_{name}" in wanted:
                out[f"triplet_{name}"] = tf[name]
    return {k: out[k] for k in config.metrics}


def load_external_scores(path) -> dict[tuple[str, Region], dict[str, float]]:
    table: dict[tuple[str, Region], dict[str, float]] = defaultdict(dict)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = (rec["id"], parse_region(rec["region"]))
                metric, score = rec["metric"], float(rec["score"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedLine(line_no, str(exc)) from None
            if metric in table[key]:
                raise MalformedLine(line_no, f"duplicate score {metric!r} for {key[0]}/{key[1].value}")
            table[key][metric] = score
    return dict(table)


def _region_means(rows: dict[Region, list[dict[str, float]]]) -> dict[str, dict[str, float]]:
    out = {}
    for region in REGION_ORDER:
        if region not in rows:
            continue
        names = sorted({k for row in rows[region] for k in row})
        out[region.value] = {k: float(np.mean([row[k] for row in rows[region] if k in row])) for k in names}
    return out


def evaluate_corpus(pred: Corpus, ref: Corpus, config: EvalConfig | None = None, jobs: int = 1) -> MetricReport:
    """Score generated text in ``pred`` against findings in ``ref``.

    Scores are averaged per region, then the unweighted mean over the
    regions present gives the averages.
    """
    config = config or EvalConfig()
    pred_by_id = pred.by_id()
    ref_ids = [r.id for r in ref]
    if set(pred_by_id) != set(ref_ids):
        missing = sorted(set(ref_ids) - set(pred_by_id))
        extra = sorted(set(pred_by_id) - set(ref_ids))
        raise IdMismatch(f"id sets differ (missing from prediction: {missing}, unexpected: {extra})")

    tasks = []
    for report in ref:
        other = pred_by_id[report.id]
        if set(other.region_findings) != set(report.region_findings):
            raise IdMismatch(f"report {report.id!r}: regions differ between prediction and reference")
        for region in report.regions:
            tasks.append((report.id, region, other.region_generated.get(region), report.region_findings[region]))

    def run(task):
        return score_pair(task[2], task[3], config)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as pool:
            scores = list(pool.map(run, tasks))
    else:
        scores = [run(t) for t in tasks]

    external = load_external_scores(config.external_scores) if config.external_scores else {}
    rows: dict[Region, list[dict[str, float]]] = defaultdict(list)
    for (rid, region, _, _), row in zip(tasks, scores):
        extra = external.get((rid, region), {})
        clash = set(extra) & set(row)
        if clash:
            raise ScoreConflict(f"external scores redefine computed metrics: {sorted(clash)}")
        rows[region].append({**row, **extra})

    per_region = _region_means(rows)
    names = sorted({k for scores_ in per_region.values() for k in scores_})
    averages = {k: float(np.mean([s[k] for s in per_region.values() if k in s])) for k in names}
    counts = {region.value: len(rows[region]) for region in REGION_ORDER if region in rows}
    return MetricReport(per_region, averages, counts)
