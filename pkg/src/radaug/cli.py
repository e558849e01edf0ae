"""Command-line front end.

Exit codes: 0 success, 1 configuration or validation error, 2 data error.
Payloads go to ``--out`` or stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import augment as aug
from . import metrics, triplets, vol3d
from .corpus import Corpus, CorpusError, MalformedLine, corpus_lines, load_corpus
from .oracle import DuplicateKey, MissingAnswer, parse_oracle

log = logging.getLogger("radaug")


class ConfigError(Exception):
    pass


CONFIG_ERRORS = (ConfigError, triplets.LexiconError, triplets.CanonicalMapError,
                 aug.KnowledgeBaseError, vol3d.NonDivisible, vol3d.DimMismatch)
DATA_ERRORS = (CorpusError, MissingAnswer, DuplicateKey, metrics.IdMismatch, metrics.ScoreConflict,
               aug.MissingGenerated,
               triplets.InvalidTriplet)


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return p


def _lexicon(args):
    if args.lexicon:
        return triplets.load_lexicon(_existing(args.lexicon, "lexicon"))
    return triplets.default_lexicon()


def _cmap(args):
    if args.map:
        return triplets.load_canonical_map(_existing(args.map, "canonical map"))
    return triplets.default_canonical_map()


def _corpus(path, what="corpus") -> Corpus:
    if not path:
        raise ConfigError(f"--{what} is required")
    return load_corpus(_existing(path, what))


def _emit(args, lines: list[str]):
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _map_jobs(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


# --- subcommands -----------------------------------------------------------

def cmd_extract(args) -> int:
    lexicon, cmap = _lexicon(args), _cmap(args)
    corpus = _corpus(args.corpus)
    field = "region_generated" if args.source == "generated" else "region_findings"

    def run(report):
        rows = []
        texts = getattr(report, field)
        for region in report.regions:
            if region not in texts:
                continue
            for t in triplets.report_to_triplets(texts[region], lexicon, cmap):
                rows.append(_dump({"id": report.id, "region": region.value, **t.to_dict()}))
        return rows

    _emit(args, [line for rows in _map_jobs(run, list(corpus), args.jobs) for line in rows])
    return 0


def _read_triplet_rows(path):
    rows = []
    with open(_existing(path, "triplets file"), encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = triplets.Triplet(rec.get("entity", ""), rec.get("position", ""), rec.get("exist", True))
            except (json.JSONDecodeError, AttributeError, TypeError, triplets.InvalidTriplet) as exc:
                raise MalformedLine(line_no, str(exc)) from None
            rows.append((rec, t))
    return rows


def cmd_canonicalize(args) -> int:
    cmap = _cmap(args)
    if not args.triplets:
        raise ConfigError("--triplets is required")
    out = []
    for rec, t in _read_triplet_rows(args.triplets):
        c = triplets.canonicalize(t, cmap)
        out.append(_dump({**rec, **c.to_dict()}))
    _emit(args, out)
    return 0


def cmd_questions(args) -> int:
    if not args.triplets:
        raise ConfigError("--triplets is required")
    out = []
    for rec, t in _read_triplet_rows(args.triplets):
        q = triplets.render_question(t)
        out.append(_dump({**{k: rec[k] for k in ("id", "region") if k in rec},
                          "question": q.text, "entity": t.entity, "position": t.position,
                          "answer": t.exist}))
    _emit(args, out)
    return 0


def cmd_augment(args) -> int:
    if args.bq_only and args.nn_only:
        raise ConfigError("--bq-only and --nn-only are mutually exclusive")
    corpus = _corpus(args.corpus)
    do_bq, do_nn = not args.nn_only, not args.bq_only
    kb = (aug.load_knowledge_base(_existing(args.kb, "knowledge base")) if args.kb
          else aug.default_knowledge_base()) if do_bq else aug.KnowledgeBase()
    rules = (aug.load_normality_rules(_existing(args.rules, "normality rules")) if args.rules
             else aug.default_normality_rules()) if do_nn else []
    source = None
    if do_bq:
        selector = args.oracle or "reference"
        if selector.startswith("file:"):
            _existing(selector[5:], "answers file")
        try:
            source = parse_oracle(selector, corpus, _lexicon(args), _cmap(args))
        except ValueError as exc:
            if isinstance(exc, (CorpusError, DuplicateKey)):
                raise
            raise ConfigError(str(exc)) from None

    def run(report):
        prov = []
        for region in report.regions:
            if region not in report.region_generated:
                log.warning("report %s has no generated %s text; left unchanged", report.id, region.value)
                continue
            if do_bq:
                result = aug.augment_pipeline(report, region, kb, rules, source)
            else:
                result = aug.AugmentedReport(report.id, region, report.region_generated[region])
                _, result.appended_nn, result.nn_keywords = aug.nn_pass(result.original_generated, region, rules)
            report = report.with_generated(region, result.final_text)
            prov.append(_dump(result.provenance()))
        return report, prov

    results = _map_jobs(run, list(corpus), args.jobs)
    out_corpus = Corpus(tuple(r for r, _ in results))
    _emit(args, corpus_lines(out_corpus))
    prov_path = args.provenance or (f"{args.out}.provenance.jsonl" if args.out else None)
    if prov_path:
        Path(prov_path).write_text("".join(p + "\n" for _, ps in results for p in ps), encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    pred = _corpus(args.pred, "pred")
    ref = _corpus(args.ref, "ref") if args.ref else pred
    names = tuple(args.metrics.split(",")) if args.metrics else metrics.ALL_METRICS
    unknown = [m for m in names if m not in metrics.ALL_METRICS]
    if unknown:
        raise ConfigError(f"unknown metrics: {unknown}")
    ext = str(_existing(args.external_scores, "external scores file")) if args.external_scores else None
    config = metrics.EvalConfig(lexicon=_lexicon(args), cmap=_cmap(args), metrics=names,
                                max_n=args.max_n or 4, external_scores=ext)
    report = metrics.evaluate_corpus(pred, ref, config, jobs=args.jobs or 1)
    _emit(args, [json.dumps(report.to_dict(), indent=2, sort_keys=True)])
    return 0


def _dims(text, flag):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    try:
        dims = vol3d.Dims3.of(int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"{flag} expects three positive integers D,H,W, got {text!r}") from None
    return dims


def cmd_vol3d(args) -> int:
    if args.vol3d_cmd != "info":
        raise ConfigError("expected 'vol3d info'")
    vol = _dims(args.vol, "--vol")
    patch = _dims(args.patch, "--patch") or vol3d.Dims3(4, 16, 16)
    if vol is None:
        raise ConfigError("--vol is required")
    report = vol3d.geometry_report(
        vol, patch, projector=args.projector or "mlp",
        crop=_dims(args.crop, "--crop"), global_view=_dims(args.global_view, "--global"),
        pool=_dims(args.pool, "--pool") or (2, 2, 2), down=_dims(args.down, "--down") or (2, 2, 2),
        with_mask=bool(args.with_mask))
    _emit(args, [json.dumps(report, indent=2, sort_keys=True)])
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radaug", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of option values; command-line flags win")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, lex=True):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--jobs", type=int, help="per-report worker threads")
        if lex:
            sp.add_argument("--lexicon", help="lexicon JSON (default: bundled)")
            sp.add_argument("--map", help="canonical map JSON (default: bundled)")

    sp = sub.add_parser("extract", help="extract canonical triplets from a corpus")
    common(sp)
    sp.add_argument("--corpus")
    sp.add_argument("--source", choices=("findings", "generated"))
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("canonicalize", help="map triplet variations to their common form")
    common(sp)
    sp.add_argument("--triplets")
    sp.set_defaults(func=cmd_canonicalize)

    sp = sub.add_parser("questions", help="render binary questions from triplets")
    common(sp, lex=False)
    sp.add_argument("--triplets")
    sp.set_defaults(func=cmd_questions)

    sp = sub.add_parser("augment", help="binary questioning then naive normality")
    common(sp)
    sp.add_argument("--corpus")
    sp.add_argument("--kb", help="knowledge base JSON (default: bundled)")
    sp.add_argument("--rules", help="normality rules JSON (default: bundled)")
    sp.add_argument("--oracle", help="reference | file:<path> | const:true | const:false")
    sp.add_argument("--provenance", help="provenance sidecar JSONL (default: <out>.provenance.jsonl)")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--bq-only", action="store_true", default=None)
    g.add_argument("--nn-only", action="store_true", default=None)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("evaluate", help="score generated text against reference findings")
    common(sp)
    sp.add_argument("--pred", help="corpus whose generated text is scored")
    sp.add_argument("--ref", help="reference corpus (default: findings of --pred)")
    sp.add_argument("--metrics", help="comma-separated subset of " + ",".join(metrics.ALL_METRICS))
    sp.add_argument("--max-n", type=int)
    sp.add_argument("--external-scores", help="JSONL of {id, region, metric, score}")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("vol3d", help="3D input geometry")
    vsub = sp.add_subparsers(dest="vol3d_cmd", required=True)
    info = vsub.add_parser("info", help="token counts per stage as JSON")
    info.add_argument("--out")
    info.add_argument("--vol", help="D,H,W")
    info.add_argument("--patch", help="d,h,w (default 4,16,16)")
    info.add_argument("--crop", help="AnyRes crop size")
    info.add_argument("--global", dest="global_view", help="AnyRes global view size (default: crop)")
    info.add_argument("--projector", choices=vol3d.PROJECTORS)
    info.add_argument("--pool", help="SPP pooling kernel (default 2,2,2)")
    info.add_argument("--down", help="TokenPacker downsampling (default 2,2,2)")
    info.add_argument("--with-mask", action="store_true", default=None,
                      help="add a segmentation-mask stream of equal length")
    info.set_defaults(func=cmd_vol3d)
    return p


def _apply_config(args, parser):
    if not args.config:
        return
    try:
        with open(_existing(args.config, "config file"), encoding="utf-8") as fh:
            values = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(values, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest == "global":
            dest = "global_view"
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        if getattr(args, dest) is None:
            setattr(args, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        _apply_config(args, parser)
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
