"""Operator commands: serve, annotate, index, eval, bench.

JSON results go to stdout; logs and errors go to stderr.  Exit codes:
0 success, 1 per-document failures, 2 configuration or usage errors.
"""

from __future__ import annotations

import json
import statistics
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import click

from bioann.errors import BioAnnError, ConfigError
from bioann.evalkit import nen_accuracy, ner_f1
from bioann.model import Document, EntityType
from bioann.normalizer import HashingEncoder, Lexicon, build_index
from bioann.pipeline import Pipeline, PipelineConfig
from bioann.store import AnnotationStore
from bioann.textproc import GoldDocument, GoldMention, parse_pubtator, serialize_pubtator
from bioann.wire import canonical_json, result_to_response


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_file(path)


def _fail(message: str, code: int = 2) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="bioann")
def main():
    """Biomedical entity annotation toolkit."""


@main.command()
@click.option("--addr", envvar="BIOANN_ADDR", default="127.0.0.1:8000", show_default=True)
@click.option("--config", "config_path", envvar="BIOANN_CONFIG", type=str, default=None)
def serve(addr: str, config_path: str | None):
    """Start the annotation REST service."""
    import uvicorn

    from bioann.service import ServiceRuntime, create_app

    host, sep, port_s = addr.rpartition(":")
    if not sep or not host or not port_s.isdigit() or not (0 < int(port_s) < 65536):
        _fail(f"invalid --addr {addr!r}, expected host:port")
    try:
        cfg = _load_config(config_path)
        runtime = ServiceRuntime.from_config(cfg)
    except (ConfigError, BioAnnError, OSError) as exc:
        _fail(str(exc))
    app = create_app(runtime)
    uvicorn.run(app, host=host, port=int(port_s), log_level="info")


def _read_documents(path: str) -> list[GoldDocument]:
    """PubTator corpus when it looks like one, else the whole input is a
    single plain-text document (title only, empty abstract)."""
    if path == "-":
        content = sys.stdin.read()
    else:
        with open(path, encoding="utf-8") as fh:
            content = fh.read()
    stripped = content.lstrip("\n")
    if "|t|" in stripped.split("\n", 1)[0]:
        return parse_pubtator(content.splitlines())
    if not content.strip():
        return []
    return [GoldDocument("0", content.rstrip("\n"), "", ())]


def _result_to_gold(doc: GoldDocument, result) -> GoldDocument:
    gold = tuple(
        GoldMention(
            a.mention.begin,
            a.mention.end,
            a.mention.surface,
            a.mention.etype.value,
            a.norm.ids,
        )
        for a in result.annotations
    )
    return GoldDocument(doc.doc_id, doc.title, doc.abstract_text, gold)


@main.command()
@click.argument("input_path", default="-")
@click.option("--format", "out_format", type=click.Choice(["pubtator", "json"]), default="json", show_default=True)
@click.option("--config", "config_path", envvar="BIOANN_CONFIG", default=None)
@click.option("--jobs", default=1, show_default=True, help="Worker threads; output order is preserved.")
def annotate(input_path: str, out_format: str, config_path: str | None, jobs: int):
    """Annotate documents from a file or stdin."""
    try:
        cfg = _load_config(config_path)
        pipeline = Pipeline(cfg)
        docs = _read_documents(input_path)
    except (BioAnnError, OSError) as exc:
        _fail(str(exc))

    def work(doc: GoldDocument):
        return pipeline.annotate_text(Document(text=doc.text, doc_id=doc.doc_id or None))

    failures = 0
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda d: _try(work, d), docs))
    else:
        outcomes = [_try(work, d) for d in docs]

    for doc, outcome in zip(docs, outcomes):
        if isinstance(outcome, Exception):
            click.echo(f"error: doc {doc.doc_id}: {outcome}", err=True)
            failures += 1
            continue
        if out_format == "json":
            click.echo(canonical_json(result_to_response(outcome)))
        else:
            click.echo(serialize_pubtator([_result_to_gold(doc, outcome)]), nl=False)
    sys.exit(1 if failures else 0)


def _try(fn, arg):
    try:
        return fn(arg)
    except Exception as exc:
        return exc


def _parse_or_fail(path: str) -> list[GoldDocument]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_pubtator(fh)
    except (BioAnnError, OSError) as exc:
        _fail(f"{path}: {exc}")


@main.command("eval")
@click.option("--gold", "gold_path", required=True)
@click.option("--pred", "pred_path", required=True)
@click.option("--task", type=click.Choice(["ner", "nen"]), default="ner", show_default=True)
def eval_cmd(gold_path: str, pred_path: str, task: str):
    """Score predictions against a gold PubTator corpus."""
    gold_docs = _parse_or_fail(gold_path)
    pred_docs = _parse_or_fail(pred_path)

    if task == "ner":
        gold_items = [
            (d.doc_id, g.begin, g.end, g.etype) for d in gold_docs for g in d.gold
        ]
        pred_items = [
            (d.doc_id, g.begin, g.end, g.etype) for d in pred_docs for g in d.gold
        ]
        score = ner_f1(gold_items, pred_items)
        click.echo(f"{'type':<12} {'P':>7} {'R':>7} {'F1':>7} {'tp':>5} {'fp':>5} {'fn':>5}")
        for etype, s in sorted(score.per_type.items()):
            click.echo(
                f"{etype:<12} {s.precision:7.3f} {s.recall:7.3f} {s.f1:7.3f} "
                f"{s.tp:5d} {s.fp:5d} {s.fn:5d}"
            )
        o = score.overall
        click.echo(
            f"{'overall':<12} {o.precision:7.3f} {o.recall:7.3f} {o.f1:7.3f} "
            f"{o.tp:5d} {o.fp:5d} {o.fn:5d}"
        )
    else:
        pred_by_key = {
            (d.doc_id, g.begin, g.end, g.etype): g.cuis for d in pred_docs for g in d.gold
        }
        items = []
        for d in gold_docs:
            for g in d.gold:
                if not g.cuis:
                    continue
                items.append((g.cuis, pred_by_key.get((d.doc_id, g.begin, g.end, g.etype), ())))
        if not items:
            _fail("gold corpus has no normalized mentions to score")
        acc = nen_accuracy(items)
        click.echo(f"{'items':<12} {len(items)}")
        click.echo(f"{'accuracy':<12} {acc:.3f}")


@dataclass(frozen=True)
class BenchReport:
    n_docs: int
    mean_s: float
    std_s: float
    p50_s: float
    p95_s: float

    @classmethod
    def from_times(cls, times: list[float]) -> "BenchReport":
        times_sorted = sorted(times)
        n = len(times)
        mean = statistics.fmean(times)
        std = statistics.pstdev(times) if n > 1 else 0.0

        def pct(q: float) -> float:
            idx = min(int(q * (n - 1) + 0.5), n - 1)
            return times_sorted[idx]

        return cls(n, mean, std, pct(0.50), pct(0.95))

    def to_dict(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "mean_s": self.mean_s,
            "std_s": self.std_s,
            "p50_s": self.p50_s,
            "p95_s": self.p95_s,
        }


@main.command()
@click.option("--docs", "docs_path", required=True, help="PubTator corpus to annotate.")
@click.option("-n", "n_docs", default=10, show_default=True)
@click.option("--mode", type=click.Choice(["plain", "pmid"]), default="plain", show_default=True)
@click.option("--config", "config_path", envvar="BIOANN_CONFIG", default=None)
def bench(docs_path: str, n_docs: int, mode: str, config_path: str | None):
    """Measure seconds per document; pmid mode reports cold and warm paths."""
    if n_docs < 1:
        _fail("-n must be >= 1")
    try:
        cfg = _load_config(config_path)
        pipeline = Pipeline(cfg)
        corpus = _parse_or_fail(docs_path)
    except BioAnnError as exc:
        _fail(str(exc))
    if not corpus:
        _fail(f"{docs_path}: corpus is empty")
    docs = [corpus[i % len(corpus)] for i in range(n_docs)]

    if mode == "plain":
        times = []
        for doc in docs:
            t0 = time.perf_counter()
            pipeline.annotate_text(Document(text=doc.text, doc_id=doc.doc_id))
            times.append(time.perf_counter() - t0)
        click.echo(json.dumps(BenchReport.from_times(times).to_dict(), indent=2))
        return

    from bioann.ingest import StaticFetcher

    fetcher = StaticFetcher({d.doc_id: d.text for d in corpus})
    with tempfile.TemporaryDirectory() as tmp:
        with AnnotationStore(f"{tmp}/bench_store.log") as store:
            cold, warm = [], []
            for doc in docs:
                t0 = time.perf_counter()
                pipeline.annotate_pmid(doc.doc_id, store, fetcher)
                cold.append(time.perf_counter() - t0)
            for doc in docs:
                t0 = time.perf_counter()
                pipeline.annotate_pmid(doc.doc_id, store, fetcher)
                warm.append(time.perf_counter() - t0)
    cold_report = BenchReport.from_times(cold)
    warm_report = BenchReport.from_times(warm)
    speedup = cold_report.mean_s / warm_report.mean_s if warm_report.mean_s else float("inf")
    click.echo(
        json.dumps(
            {
                "cold": cold_report.to_dict(),
                "warm": warm_report.to_dict(),
                "speedup": speedup,
            },
            indent=2,
        )
    )


@main.command()
@click.option("--lexicon", "lexicon_paths", multiple=True, required=True)
@click.option("--out", "out_path", required=True)
@click.option("--dim", default=256, show_default=True)
def index(lexicon_paths: tuple[str, ...], out_path: str, dim: int):
    """Build and persist a dictionary embedding index (deterministic file)."""
    rows: list[tuple[str, str, bool]] = []
    for path in lexicon_paths:
        try:
            lex = Lexicon.from_file(EntityType.DRUG, path)
        except (BioAnnError, OSError) as exc:
            _fail(f"{path}: {exc}")
        rows.extend((cui, name, False) for name, cui in lex.name_cui_pairs())
    merged = Lexicon.from_rows(EntityType.DRUG, rows)
    try:
        idx = build_index(merged, HashingEncoder(dim))
    except BioAnnError as exc:
        _fail(str(exc))
    idx.save(out_path)
    click.echo(json.dumps({"rows": len(idx), "dim": idx.dim, "out": out_path}))


if __name__ == "__main__":
    main()
