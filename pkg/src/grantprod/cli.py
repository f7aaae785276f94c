"""Command-line pipeline: ingest, stats, evaluate, relevance.

Exit codes: 0 success, 2 validation failure (bad input or configuration),
3 runtime failure.  All randomness flows from --seed; outputs carry a config
echo so a run can be reproduced from any of its files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .complexity import extract_complexity_vector, write_feature_csv
from .corpus import (
    Area,
    CorpusError,
    EmptyClassError,
    GrantRecord,
    Label,
    label_records,
    load_corpus,
    productivity_histogram,
    scan_corpus_file,
    write_canonical,
)
from .ml import (
    ComplexityFeatures,
    EvalReport,
    ForestHyper,
    TfidfFeatures,
    cross_validate,
    document_text,
    relevance_over_resamples,
)
from .relevance import write_rank_diagram, write_ranking_csv
from .textproc import SUPPORTED_LANGUAGES, builtin_lexicons, load_lexicons
from .topical import (
    FieldSelector,
    IdfVariant,
    VectorMode,
    field_tokens,
    fit_vocabulary,
    save_vocabulary,
    vectorize,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

TOP_X_PRESETS = (1100, 7196)

FIELD_CHOICES = {
    "title": FieldSelector.TITLE,
    "subject": FieldSelector.SUBJECT,
    "title+subject": FieldSelector.TITLE_PLUS_SUBJECT,
    "abstract": FieldSelector.ABSTRACT,
}

# Reported method groups: 'dtrees' covers both tree-based learners.
ALGO_CHOICES = {
    "dtrees": ("dtree", "random_forest"),
    "svm": ("linear_svm",),
    "knn": ("knn",),
    "bayes": ("naive_bayes",),
    "mlp": ("mlp",),
}


class CliValidationError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    input: str
    format: str
    lang: str
    fields: str
    features: str
    top_x: int
    algos: tuple[str, ...]
    folds: int
    resamples: int
    seed: int
    jobs: int
    out: str
    include_title: bool
    global_vocab: bool
    raw_frequency: bool
    conventional_idf: bool
    lexicon_dir: str | None

    def echo(self) -> dict:
        return {
            "tool": f"grantprod {__version__}",
            "input": self.input,
            "format": self.format,
            "lang": self.lang,
            "fields": self.fields,
            "features": self.features,
            "top_x": self.top_x,
            "algos": list(self.algos),
            "folds": self.folds,
            "resamples": self.resamples,
            "seed": self.seed,
            "include_title": self.include_title,
            "global_vocab": self.global_vocab,
            "raw_frequency": self.raw_frequency,
            "conventional_idf": self.conventional_idf,
        }


# ---------------------------------------------------------------------------
# Config file (key = value lines mirroring the long flags; flags win)
# ---------------------------------------------------------------------------

_CONFIG_CONVERTERS = {
    "top_x": int,
    "folds": int,
    "resamples": int,
    "seed": int,
    "jobs": int,
    "include_title": lambda v: v.lower() in ("1", "true", "yes"),
    "global_vocab": lambda v: v.lower() in ("1", "true", "yes"),
    "raw_frequency": lambda v: v.lower() in ("1", "true", "yes"),
    "conventional_idf": lambda v: v.lower() in ("1", "true", "yes"),
}


def read_config_file(path: str | Path) -> dict:
    values: dict = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliValidationError(f"config line without '=': {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip().strip("\"'")
        converter = _CONFIG_CONVERTERS.get(key, str)
        try:
            values[key] = converter(value)
        except ValueError:
            raise CliValidationError(f"config value for '{key}' is invalid: {value!r}") from None
    return values


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common_io(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="corpus file")
    parser.add_argument("--format", choices=("csv", "jsonl"), default="jsonl")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--config", help="key = value file mirroring the flags; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grantprod", description=__doc__)
    parser.add_argument("--version", action="version", version=f"grantprod {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="validate a corpus file and write canonical JSONL")
    _add_common_io(p_ingest)

    p_stats = sub.add_parser("stats", help="per-area productivity statistics")
    _add_common_io(p_stats)

    p_eval = sub.add_parser("evaluate", help="run the resample x k-fold evaluation grid")
    _add_common_io(p_eval)
    p_eval.add_argument("--lang", choices=SUPPORTED_LANGUAGES, default="pt")
    p_eval.add_argument("--fields", choices=sorted(FIELD_CHOICES), default="abstract")
    p_eval.add_argument("--features", choices=("complexity", "tfidf"), default="complexity")
    p_eval.add_argument("--top-x", dest="top_x", type=int, default=1100,
                        help=f"vocabulary truncation; presets {TOP_X_PRESETS} or any positive N")
    p_eval.add_argument("--algo", default="dtrees",
                        help="comma-separated subset of dtrees,svm,knn,bayes,mlp or 'all'")
    p_eval.add_argument("--folds", type=int, default=10)
    p_eval.add_argument("--resamples", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=None, help="base seed (required; no clock default)")
    p_eval.add_argument("--jobs", type=int, default=1, help="concurrent evaluation cells")
    p_eval.add_argument("--include-title", action="store_true",
                        help="concatenate title with abstract for complexity features")
    p_eval.add_argument("--global-vocab", action="store_true",
                        help="fit the tf-idf vocabulary once on the whole corpus instead of per fold")
    p_eval.add_argument("--raw-frequency", action="store_true",
                        help="raw word counts instead of tf-idf weights")
    p_eval.add_argument("--conventional-idf", action="store_true",
                        help="log(N/N_w) inverse document frequency instead of the ratio form")
    p_eval.add_argument("--lexicon-dir", help="directory with custom lexicon files")

    p_rel = sub.add_parser("relevance", help="Gini feature relevance over balanced resamples")
    _add_common_io(p_rel)
    p_rel.add_argument("--lang", choices=SUPPORTED_LANGUAGES, default="pt")
    p_rel.add_argument("--resamples", type=int, default=10)
    p_rel.add_argument("--trees", type=int, default=100)
    p_rel.add_argument("--seed", type=int, default=None)
    p_rel.add_argument("--include-title", action="store_true")
    p_rel.add_argument("--weighting", choices=("node_mean", "instance_weighted"),
                       default="node_mean")
    p_rel.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp header from the SVG diagram")
    p_rel.add_argument("--lexicon-dir", help="directory with custom lexicon files")

    return parser


def _apply_config_file(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    values = read_config_file(args.config)
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in values.items():
        if key in explicit:
            continue  # flags win
        if hasattr(args, key):
            setattr(args, key, value)
    return args


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    if not args.input:
        print("error: --input is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        report = scan_corpus_file(args.input, args.format)
    except (OSError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    # records with an empty Portuguese abstract never reach feature extraction
    empty_abstract = sum(1 for _, field, _ in report.rejected if field == "abstract_pt")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    canonical = out_dir / "canonical.jsonl"
    write_canonical(report.records, canonical)

    print(f"accepted: {len(report.records)}")
    print(f"rejected: {len(report.rejected)}")
    if empty_abstract:
        print(f"warning: {empty_abstract} record(s) rejected for empty abstract_pt")
    for row_number, field, reason in report.rejected:
        print(f"  row {row_number}: {field}: {reason}")
    print(f"canonical corpus: {canonical}")
    if not report.records:
        print("error: zero accepted rows", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_stats(args) -> int:
    if not args.input:
        print("error: --input is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        records = load_corpus(args.input, args.format)
    except (OSError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not records:
        print("error: empty corpus", file=sys.stderr)
        return EXIT_VALIDATION

    areas = [area for area in Area if any(r.area is area for r in records)]
    print("positive-class percentage (at least one publication):")
    for area in areas:
        area_records = [r for r in records if r.area is area]
        positive = sum(1 for r in area_records if r.publication_count >= 1)
        print(f"  {area.value:5s} {100.0 * positive / len(area_records):5.1f}%  (n={len(area_records)})")

    print()
    print("fraction of grants with at least n papers:")
    header = "  #P   " + "  ".join(f"{area.value:>6s}" for area in areas)
    print(header)
    tables = {area: productivity_histogram([r for r in records if r.area is area]) for area in areas}
    for i, n in enumerate(range(2, 9)):
        row = f"  {n}+   " + "  ".join(f"{100.0 * tables[area][i][1]:5.1f}%" for area in areas)
        print(row)
    return EXIT_OK


def _parse_algos(value: str) -> tuple[str, ...]:
    names = [s.strip() for s in value.split(",") if s.strip()]
    if "all" in names:
        names = list(ALGO_CHOICES)
    algorithms: list[str] = []
    for name in names:
        if name not in ALGO_CHOICES:
            raise CliValidationError(
                f"unknown algorithm '{name}' (expected {', '.join(ALGO_CHOICES)} or all)"
            )
        algorithms.extend(ALGO_CHOICES[name])
    return tuple(dict.fromkeys(algorithms))


def _build_run_config(args) -> RunConfig:
    if not args.input:
        raise CliValidationError("--input is required")
    if args.seed is None:
        raise CliValidationError("--seed is required (runs never default to the clock)")
    if args.top_x < 1:
        raise CliValidationError("--top-x must be >= 1")
    if args.folds < 2:
        raise CliValidationError("--folds must be >= 2")
    if args.resamples < 1:
        raise CliValidationError("--resamples must be >= 1")
    if args.jobs < 1:
        raise CliValidationError("--jobs must be >= 1")
    return RunConfig(
        input=args.input,
        format=args.format,
        lang=args.lang,
        fields=args.fields,
        features=args.features,
        top_x=args.top_x,
        algos=_parse_algos(args.algo),
        folds=args.folds,
        resamples=args.resamples,
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
        include_title=args.include_title,
        global_vocab=args.global_vocab,
        raw_frequency=args.raw_frequency,
        conventional_idf=args.conventional_idf,
        lexicon_dir=args.lexicon_dir,
    )


def _language_subset(records: list[GrantRecord], config: RunConfig) -> tuple[list[GrantRecord], int]:
    """English runs exclude records without the needed English field."""
    if config.lang == "pt":
        return records, 0
    selector = FIELD_CHOICES[config.fields]
    def usable(record: GrantRecord) -> bool:
        if config.features == "complexity" or selector is FieldSelector.ABSTRACT:
            return record.abstract_en is not None
        if selector is FieldSelector.SUBJECT:
            return True
        return record.title_en is not None
    kept = [r for r in records if usable(r)]
    return kept, len(records) - len(kept)


def _feature_config(config: RunConfig):
    if config.features == "complexity":
        return ComplexityFeatures(language=config.lang, include_title=config.include_title)
    return TfidfFeatures(
        language=config.lang,
        selector=FIELD_CHOICES[config.fields],
        top_x=config.top_x,
        mode=VectorMode.RAW_FREQUENCY if config.raw_frequency else VectorMode.TFIDF,
        idf_variant=IdfVariant.LOG_QUOTIENT if config.conventional_idf else IdfVariant.LOG_RATIO,
        per_fold_vocabulary=not config.global_vocab,
    )


def _write_summary_csv(path: Path, rows: list[dict], echo: dict) -> None:
    columns = ("dataset", "method", "mean_f1", "sd_f1", "macro_f1", "pooled_f1",
               "p_value", "significant_best")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# {json.dumps(echo, sort_keys=True)}\n")
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([
                row["dataset"],
                row["method"],
                f"{row['mean_f1']:.4f}",
                f"{row['sd_f1']:.4f}",
                f"{row['macro_f1']:.4f}",
                f"{row['pooled_f1']:.4f}",
                f"{row['p_value']:.4f}",
                "yes" if row["significant_best"] else "",
            ])


def _export_feature_matrix(records, config: RunConfig, lexicons, out_dir: Path, echo: dict) -> None:
    comment = json.dumps(echo, sort_keys=True)
    if config.features == "complexity":
        vectors = [
            extract_complexity_vector(
                document_text(record, config.lang, config.include_title),
                language=config.lang,
                lexicons=lexicons,
                doc_id=record.grant_id,
            )
            for record in records
        ]
        write_feature_csv(
            out_dir / "features_complexity.csv",
            [r.grant_id for r in records],
            vectors,
            header_comment=comment,
        )
    else:
        # the exported matrix uses a whole-corpus vocabulary fit; per-fold
        # vocabularies exist only inside cross-validation
        selector = FIELD_CHOICES[config.fields]
        vocabulary = fit_vocabulary(records, selector, config.top_x, config.lang)
        save_vocabulary(vocabulary, out_dir / "vocabulary.tsv")
        mode = VectorMode.RAW_FREQUENCY if config.raw_frequency else VectorMode.TFIDF
        variant = IdfVariant.LOG_QUOTIENT if config.conventional_idf else IdfVariant.LOG_RATIO
        words = sorted(vocabulary.entries, key=vocabulary.entries.get)
        with open(out_dir / "features_tfidf.csv", "w", newline="", encoding="utf-8") as handle:
            handle.write(f"# {comment}\n")
            writer = csv.writer(handle)
            writer.writerow(["grant_id"] + words)
            for record in records:
                tokens = field_tokens(record, selector, config.lang)
                dense = vectorize(tokens, vocabulary, mode, variant).to_dense(len(vocabulary))
                writer.writerow([record.grant_id] + [repr(v) if v else "0" for v in dense])


def cmd_evaluate(args) -> int:
    try:
        config = _build_run_config(args)
        records = load_corpus(config.input, config.format)
        if not records:
            raise CliValidationError("empty corpus")
        lexicons = (
            load_lexicons(config.lexicon_dir, config.lang)
            if config.lexicon_dir
            else builtin_lexicons(config.lang)
        )
    except (OSError, CorpusError, CliValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    records, excluded = _language_subset(records, config)
    if excluded:
        print(f"excluded {excluded} record(s) lacking {config.lang} text fields")
    if not records:
        print("error: no records usable for the configured language", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = config.echo()

    areas = [area for area in Area if any(r.area is area for r in records)]
    feature_config = _feature_config(config)
    cells = [(area, algorithm) for area in areas for algorithm in config.algos]

    def run_cell(cell):
        area, algorithm = cell
        labeled = label_records([r for r in records if r.area is area])
        report = cross_validate(
            labeled,
            feature_config,
            algorithm,
            k=config.folds,
            n_resamples=config.resamples,
            base_seed=config.seed,
            lexicons=lexicons,
        )
        return cell, report

    results: dict[tuple, EvalReport] = {}
    failures: list[dict] = []
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futures = {pool.submit(run_cell, cell): cell for cell in cells}
            for future, cell in futures.items():
                try:
                    _, report = future.result()
                    results[cell] = report
                except Exception as exc:  # cell failure; flush the rest
                    failures.append({"dataset": cell[0].value, "method": cell[1], "error": str(exc)})
    else:
        for cell in cells:
            try:
                _, report = run_cell(cell)
                results[cell] = report
            except Exception as exc:
                failures.append({"dataset": cell[0].value, "method": cell[1], "error": str(exc)})

    # best cell per dataset is flagged when significant at alpha = 0.05
    best: dict[str, tuple] = {}
    for (area, algorithm), report in results.items():
        key = area.value
        if key not in best or report.mean_f1 > results[best[key]].mean_f1:
            best[key] = (area, algorithm)

    rows = []
    for area, algorithm in cells:
        report = results.get((area, algorithm))
        if report is None:
            continue
        rows.append({
            "dataset": area.value,
            "method": algorithm,
            "mean_f1": report.mean_f1,
            "sd_f1": report.sd_f1,
            "macro_f1": report.mean_macro_f1,
            "pooled_f1": report.pooled_f1,
            "p_value": report.p_value,
            "significant_best": best.get(area.value) == (area, algorithm)
            and report.p_value < 0.05,
        })

    _write_summary_csv(out_dir / "eval_summary.csv", rows, echo)
    full = {
        "config": echo,
        "reports": [
            {"dataset": area.value, "method": algorithm, **report.to_dict()}
            for (area, algorithm), report in sorted(
                results.items(), key=lambda item: (item[0][0].value, item[0][1])
            )
        ],
    }
    (out_dir / "eval_report.json").write_text(
        json.dumps(full, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    try:
        _export_feature_matrix(records, config, lexicons, out_dir, echo)
    except Exception as exc:
        failures.append({"dataset": "*", "method": "feature_export", "error": str(exc)})

    for row in rows:
        flag = "  *significant best*" if row["significant_best"] else ""
        print(f"{row['dataset']:5s} {row['method']:14s} F1 {row['mean_f1']:.4f} "
              f"± {row['sd_f1']:.4f}  p={row['p_value']:.4f}{flag}")

    if failures:
        (out_dir / "failure_manifest.json").write_text(
            json.dumps({"config": echo, "failures": failures}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"error: {len(failures)} cell(s) failed; see failure_manifest.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_relevance(args) -> int:
    try:
        if not args.input:
            raise CliValidationError("--input is required")
        if args.seed is None:
            raise CliValidationError("--seed is required (runs never default to the clock)")
        if args.resamples < 2:
            raise CliValidationError("--resamples must be >= 2 for rank aggregation")
        records = load_corpus(args.input, args.format)
        if not records:
            raise CliValidationError("empty corpus")
        lexicons = (
            load_lexicons(args.lexicon_dir, args.lang)
            if args.lexicon_dir
            else builtin_lexicons(args.lang)
        )
    except (OSError, CorpusError, CliValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {
        "tool": f"grantprod {__version__}",
        "input": args.input,
        "lang": args.lang,
        "resamples": args.resamples,
        "trees": args.trees,
        "seed": args.seed,
        "include_title": args.include_title,
        "weighting": args.weighting,
    }
    try:
        labeled = label_records(records)
        ranking, aggregated, _ = relevance_over_resamples(
            labeled,
            language=args.lang,
            lexicons=lexicons,
            include_title=args.include_title,
            n_resamples=args.resamples,
            base_seed=args.seed,
            forest_hyper=ForestHyper(n_trees=args.trees),
            weighting=args.weighting,
        )
    except EmptyClassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    cd = aggregated.critical_difference
    write_ranking_csv(out_dir / "relevance.csv", ranking, cd,
                      header_comment=json.dumps(echo, sort_keys=True))
    timestamp = None if args.no_timestamp else datetime.now(timezone.utc).isoformat()
    write_rank_diagram(out_dir / "rank_diagram.svg", ranking, cd, timestamp=timestamp)

    print(f"critical difference (alpha=0.05, n={args.resamples}): {cd:.4f}")
    for row in ranking[:5]:
        print(f"  {row.average_rank:6.2f}  {row.feature}")
    print(f"wrote {out_dir / 'relevance.csv'} and {out_dir / 'rank_diagram.svg'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, argv)
    except (OSError, CliValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    handlers = {
        "ingest": cmd_ingest,
        "stats": cmd_stats,
        "evaluate": cmd_evaluate,
        "relevance": cmd_relevance,
    }
    try:
        return handlers[args.command](args)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
