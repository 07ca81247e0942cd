"""Staged pipeline: ingest, fit-topics, classify, score, graph, export.

Every stage writes its outputs into one run directory and records them,
with content hashes, in ``manifest.json``. A stage whose input hash matches
the manifest and whose outputs are intact is skipped unless forced.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from .bisociation import (
    RankedTopicList,
    rank_bisociative_topics,
    select_baseline_topic,
    topic_usage_rank,
)
from .classify import LOW_ACCURACY_THRESHOLD, CvReport, OutlierSet, find_outliers, train_ensemble
from .config import PipelineConfig, sub_seed
from .corpus import Corpus, TokenizerOptions, load_corpus, load_stopwords
from .graph import export as export_graph
from .graph import generate_bisonet, largest_connected_component, read_json, to_json
from .topics import DocumentCooccurrence, fit_lda, load_model, npmi_coherence, save_model, top_words

__all__ = [
    "STAGES",
    "OUTPUT_ROOT_ENV",
    "PipelineError",
    "StageError",
    "Pipeline",
    "stage_outputs",
    "cmd_report",
    "cmd_inspect_topic",
    "top_documents",
]

log = logging.getLogger(__name__)

STAGES = ("ingest", "fit-topics", "classify", "score", "graph", "export")
OUTPUT_ROOT_ENV = "BISONET_OUTPUT_ROOT"
MANIFEST = "manifest.json"
FAILURE_MARKER = "FAILED"
N_LABEL_WORDS = 10

_PRODUCER = {
    "corpus.json": "ingest",
    "model.json": "fit-topics",
    "cv_report.json": "classify",
    "outliers.csv": "classify",
    "scores.csv": "score",
    "ranked.json": "score",
    "topics.csv": "score",
    "btopics.csv": "score",
    "graph.json": "graph",
}


class PipelineError(RuntimeError):
    pass


class StageError(PipelineError):
    def __init__(self, stage: str, cause: str):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def stage_outputs(config: PipelineConfig) -> dict:
    outputs = {s: [f for f, p in _PRODUCER.items() if p == s] for s in STAGES[:-1]}
    outputs["export"] = [f"bisonet.{fmt}" for fmt in sorted(set(config.export.formats))]
    return outputs


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _require(run_dir: Path, name: str) -> Path:
    path = run_dir / name
    if not path.is_file():
        stage = _PRODUCER.get(name, "export")
        raise PipelineError(f"missing {name}: stage '{stage}' has not completed in {run_dir}")
    return path


def resolve_run_dir(config: PipelineConfig, override=None) -> Path:
    if override:
        return Path(override)
    out = Path(config.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        return Path(root) / out
    return out


class Pipeline:
    """Run some or all stages of a configured pipeline in one run directory."""

    def __init__(self, config: PipelineConfig, run_dir=None, force: bool = False):
        config.validate()
        self.config = config
        self.run_dir = resolve_run_dir(config, run_dir)
        self.force = force
        self._outputs = stage_outputs(config)

    # -- manifest -------------------------------------------------------
    def _manifest_path(self) -> Path:
        return self.run_dir / MANIFEST

    def load_manifest(self) -> dict:
        path = self._manifest_path()
        if path.is_file():
            return json.loads(path.read_text(encoding="utf-8"))
        return {"version": 1, "stages": {}, "created": _now()}

    def _save_manifest(self, manifest: dict) -> None:
        manifest["updated"] = _now()
        tmp = self._manifest_path().with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self._manifest_path())

    # -- input hashes -----------------------------------------------------
    def _file_hash(self, name: str) -> str:
        return _sha256_file(_require(self.run_dir, name))

    def _input_hash(self, stage: str) -> str:
        cfg = self.config.to_dict()
        seed = self.config.seed
        if stage == "ingest":
            corpus_cfg = dict(cfg["corpus"])
            src = Path(corpus_cfg.pop("path") or "")
            if not src.is_file():
                raise PipelineError(f"corpus file not found: {src}")
            stop = corpus_cfg.pop("stopwords_file")
            parts = {
                "corpus_cfg": corpus_cfg,
                "source": _sha256_file(src),
                "stopwords": _sha256_file(Path(stop)) if stop else None,
            }
        elif stage == "fit-topics":
            parts = {"corpus": self._file_hash("corpus.json"), "topics": cfg["topics"], "seed": seed}
        elif stage == "classify":
            parts = {
                "corpus": self._file_hash("corpus.json"),
                "model": self._file_hash("model.json"),
                "classify": cfg["classify"],
                "seed": seed,
            }
        elif stage == "score":
            parts = {
                "corpus": self._file_hash("corpus.json"),
                "model": self._file_hash("model.json"),
                "outliers": self._file_hash("outliers.csv"),
                "score": cfg["score"],
                "seed": seed,
            }
        elif stage == "graph":
            parts = {
                "corpus": self._file_hash("corpus.json"),
                "model": self._file_hash("model.json"),
                "ranked": self._file_hash("ranked.json"),
                "topics": self._file_hash("topics.csv"),
                "graph": cfg["graph"],
            }
        else:
            parts = {"graph": self._file_hash("graph.json"), "export": cfg["export"]}
        return _sha256_json(parts)

    # -- running --------------------------------------------------------
    def run(self, stages=STAGES) -> dict:
        """Run ``stages`` in pipeline order; returns the manifest."""
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise PipelineError(f"unknown stages: {unknown}")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(self.run_dir / ".lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout:
            raise PipelineError(f"run directory {self.run_dir} is locked by another run") from None
        try:
            manifest = self.load_manifest()
            manifest["config_hash"] = self.config.hash
            self.config.dump(self.run_dir / "config.json")
            marker = self.run_dir / FAILURE_MARKER
            if marker.exists():
                marker.unlink()
            for stage in STAGES:
                if stage in stages:
                    self._run_stage(stage, manifest)
            self._save_manifest(manifest)
            return manifest
        finally:
            lock.release()

    def _outputs_intact(self, entry: dict) -> bool:
        for name, digest in entry.get("outputs", {}).items():
            path = self.run_dir / name
            if not path.is_file() or _sha256_file(path) != digest:
                return False
        return bool(entry.get("outputs"))

    def _run_stage(self, stage: str, manifest: dict) -> None:
        entries = manifest.setdefault("stages", {})
        try:
            input_hash = self._input_hash(stage)
        except PipelineError as exc:
            self._fail(stage, str(exc), manifest)
        entry = entries.get(stage, {})
        if (
            not self.force
            and entry.get("status") == "completed"
            and entry.get("input_hash") == input_hash
            and self._outputs_intact(entry)
        ):
            entry["checked"] = _now()
            log.info("%s: up to date, skipped", stage)
            return
        started = _now()
        log.info("%s: running", stage)
        try:
            getattr(self, "_stage_" + stage.replace("-", "_"))()
        except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
            self._fail(stage, f"{type(exc).__name__}: {exc}", manifest)
        outputs = {name: _sha256_file(self.run_dir / name) for name in self._outputs[stage]}
        now = _now()
        entries[stage] = {
            "status": "completed",
            "input_hash": input_hash,
            "outputs": outputs,
            "started": started,
            "finished": now,
            "checked": now,
        }
        if stage == "ingest":
            manifest["corpus_hash"] = outputs["corpus.json"]
        if stage == "fit-topics":
            manifest["model_hash"] = outputs["model.json"]
        self._save_manifest(manifest)

    def _fail(self, stage: str, cause: str, manifest: dict):
        manifest.setdefault("stages", {})[stage] = {
            "status": "failed",
            "error": cause,
            "finished": _now(),
        }
        self._save_manifest(manifest)
        (self.run_dir / FAILURE_MARKER).write_text(f"{stage}\n{cause}\n", encoding="utf-8")
        raise StageError(stage, cause)

    # -- stage bodies ---------------------------------------------------
    def _corpus(self) -> Corpus:
        data = json.loads(_require(self.run_dir, "corpus.json").read_text(encoding="utf-8"))
        return Corpus.from_dict(data)

    def _model(self, corpus: Corpus):
        return load_model(_require(self.run_dir, "model.json"), vocabulary_hash=corpus.vocabulary.hash)

    def _stage_ingest(self):
        c = self.config.corpus
        stop = load_stopwords(c.stopwords_file) if c.stopwords_file else None
        opts = TokenizerOptions(min_length=c.min_token_length, stem=c.stem)
        if stop is not None:
            opts = TokenizerOptions(min_length=c.min_token_length, stem=c.stem, stopwords=stop)
        corpus = load_corpus(c.path, c.format, tokenizer=opts, min_df=c.min_df, max_df_frac=c.max_df_frac)
        rep = corpus.load_report
        if rep.n_dropped:
            log.info("ingest: dropped %d empty documents", rep.n_dropped)
        payload = json.dumps(corpus.to_dict(), sort_keys=True, separators=(",", ":"))
        (self.run_dir / "corpus.json").write_text(payload, encoding="utf-8")

    def _stage_fit_topics(self):
        t = self.config.topics
        corpus = self._corpus()
        model = fit_lda(
            corpus,
            T=t.n_topics,
            alpha=t.alpha,
            beta=t.beta,
            iterations=t.iterations,
            burn_in=t.burn_in,
            thinning=t.thinning,
            seed=sub_seed(self.config.seed, "lda"),
        )
        save_model(model, self.run_dir / "model.json", corpus.vocabulary.hash)

    def _stage_classify(self):
        k = self.config.classify
        corpus = self._corpus()
        model = self._model(corpus)
        X = model.doc_topic_
        ensemble, report = train_ensemble(
            X,
            corpus.labels,
            k_folds=k.k_folds,
            candidates=list(k.candidates),
            seed=sub_seed(self.config.seed, "classify"),
            n_members=k.n_members,
        )
        if report.low_accuracy:
            log.warning(
                "classify: ensemble in-sample accuracy %.3f is below %.2f; outlier sets may be inflated",
                report.ensemble_accuracy,
                LOW_ACCURACY_THRESHOLD,
            )
        outliers = find_outliers(ensemble, X, corpus.labels, corpus.doc_ids, corpus.n_domains)
        (self.run_dir / "cv_report.json").write_text(report.to_json(), encoding="utf-8")
        outliers.write_csv(self.run_dir / "outliers.csv", corpus.domains)

    def _stage_score(self):
        s = self.config.score
        corpus = self._corpus()
        model = self._model(corpus)
        X = model.doc_topic_
        outliers = OutlierSet.read_csv(
            self.run_dir / "outliers.csv", corpus.doc_ids, corpus.labels, corpus.domains
        )
        T = X.shape[1]
        vocab = corpus.vocabulary
        words = [" ".join(top_words(model, t, N_LABEL_WORDS, vocab).words) for t in range(T)]
        usage = X.sum(axis=0)
        usage_rank = topic_usage_rank(X)
        cooc = DocumentCooccurrence.from_corpus(corpus)
        coherence = np.array(
            [npmi_coherence(model, t, s.npmi_top_m, cooc, s.npmi_epsilon) for t in range(T)]
        )
        ranked = [rank_bisociative_topics(corpus, model, outliers, d) for d in range(corpus.n_domains)]

        rows = []
        for r in ranked:
            for rank, e in enumerate(r.entries(), start=1):
                rows.append(
                    [corpus.domains[r.domain], rank, e.topic, _fmt(e.score), words[e.topic],
                     int(usage_rank[e.topic]), int(e.zero_denominator)]
                )
        _write_csv(
            self.run_dir / "scores.csv",
            ["domain", "rank", "topic_id", "score", "top_10_words", "usage_rank", "zero_denominator"],
            rows,
        )
        _write_csv(
            self.run_dir / "topics.csv",
            ["topic_id", "usage", "usage_rank", "npmi", "top_10_words"],
            [[t, _fmt(usage[t]), int(usage_rank[t]), _fmt(coherence[t]), words[t]] for t in range(T)],
        )
        brows = []
        for r in ranked:
            top = r.top(s.top_k)
            scores = r.score_array()
            for rank, b in enumerate(top, start=1):
                base = select_baseline_topic(
                    b,
                    scores,
                    coherence,
                    n_candidates=s.n_candidates,
                    npmi_tolerance=s.npmi_tolerance,
                    seed=sub_seed(self.config.seed, "baseline", r.domain, b),
                    exclude=top if T > len(top) else (),
                )
                brows.append(
                    [corpus.domains[r.domain], rank, b, _fmt(scores[b]), _fmt(coherence[b]),
                     int(usage_rank[b]), words[b], base, _fmt(scores[base]), _fmt(coherence[base]),
                     words[base]]
                )
        _write_csv(
            self.run_dir / "btopics.csv",
            ["domain", "rank", "topic_id", "score", "npmi", "usage_rank", "top_10_words",
             "baseline_topic", "baseline_score", "baseline_npmi", "baseline_words"],
            brows,
        )
        payload = {
            "version": 1,
            "domains": list(corpus.domains),
            "ranked": [
                {
                    "domain": r.domain,
                    "domain_name": corpus.domains[r.domain],
                    "topics": list(r.topics),
                    "scores": list(r.scores),
                    "zero_denominator": list(r.zero_denominator),
                }
                for r in ranked
            ],
        }
        (self.run_dir / "ranked.json").write_text(
            json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _stage_graph(self):
        g = self.config.graph
        corpus = self._corpus()
        model = self._model(corpus)
        ranked = read_ranked(self.run_dir / "ranked.json")
        words = [r["top_10_words"].split() for r in _read_csv(self.run_dir / "topics.csv")]
        domains = None
        if g.domains is not None:
            domains = []
            for d in g.domains:
                try:
                    domains.append(corpus.domain_id(d))
                except KeyError:
                    if isinstance(d, str) and d.isdigit():
                        domains.append(corpus.domain_id(int(d)))
                    else:
                        raise
        graph = generate_bisonet(
            ranked,
            model.doc_topic_,
            corpus.labels,
            domains=domains,
            top_k=g.top_k,
            tau=g.tau,
            epsilon=g.epsilon,
            edge_fraction=g.edge_fraction,
            k=g.k,
            cross_domain_only=g.cross_domain_only,
            literal_root=g.literal_root,
            topic_words=words,
            domain_names=corpus.domains,
            provenance={
                "corpus_hash": self._file_hash("corpus.json"),
                "model_hash": self._file_hash("model.json"),
            },
        )
        if g.largest_component:
            graph = largest_connected_component(graph)
        (self.run_dir / "graph.json").write_text(to_json(graph), encoding="utf-8")

    def _stage_export(self):
        graph = read_json(_require(self.run_dir, "graph.json"))
        for fmt in sorted(set(self.config.export.formats)):
            export_graph(graph, self.run_dir / f"bisonet.{fmt}", fmt)


def read_ranked(path) -> list[RankedTopicList]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        RankedTopicList(
            domain=r["domain"],
            topics=tuple(r["topics"]),
            scores=tuple(r["scores"]),
            zero_denominator=tuple(r["zero_denominator"]),
        )
        for r in data["ranked"]
    ]


def top_documents(X, topic: int, doc_indices=None, n: int = 5) -> list[tuple[int, float]]:
    """The ``n`` documents with the highest proportion of ``topic``; ties by index."""
    X = np.asarray(X)
    idx = np.arange(X.shape[0]) if doc_indices is None else np.asarray(doc_indices, dtype=np.int64)
    col = X[idx, topic]
    order = np.lexsort((idx, -col))[:n]
    return [(int(idx[i]), float(col[i])) for i in order]


def _load_run(run_dir: Path):
    run_dir = Path(run_dir)
    corpus = Corpus.from_dict(json.loads(_require(run_dir, "corpus.json").read_text(encoding="utf-8")))
    return run_dir, corpus


def cmd_report(run_dir) -> dict:
    """Write Markdown and CSV reports for a completed run; returns their paths."""
    run_dir, corpus = _load_run(run_dir)
    cv = CvReport.from_dict(json.loads(_require(run_dir, "cv_report.json").read_text(encoding="utf-8")))
    outliers = OutlierSet.read_csv(
        _require(run_dir, "outliers.csv"), corpus.doc_ids, corpus.labels, corpus.domains
    )
    btopics = _read_csv(_require(run_dir, "btopics.csv"))
    topics = _read_csv(_require(run_dir, "topics.csv"))
    out_dir = run_dir / "report"
    out_dir.mkdir(exist_ok=True)

    counts = outliers.counts
    n_ideas = np.bincount(corpus.labels, minlength=corpus.n_domains)
    domain_rows = [
        [i + 1, name, int(n_ideas[i]), counts[i]] for i, name in enumerate(corpus.domains)
    ]
    _write_csv(out_dir / "domains.csv", ["index", "domain", "ideas", "outliers"], domain_rows)
    _write_csv(
        out_dir / "classifier.csv",
        ["model", "cv_accuracy", "ensemble_member"],
        [[n, _fmt(a), int(n in cv.members)] for n, a in cv.cv_accuracy.items()],
    )
    _write_csv(out_dir / "btopics.csv", list(btopics[0].keys()) if btopics else [], [list(r.values()) for r in btopics])

    zero_topics = [r["topic_id"] for r in topics if float(r["usage"]) < 1e-12]
    md = ["# BisoNet run report", "", "## Domains", ""]
    md += ["| # | domain | ideas | outliers |", "|---|---|---|---|"]
    md += [f"| {i} | {d} | {n} | {o} |" for i, d, n, o in domain_rows]
    md += [f"| | total | {int(n_ideas.sum())} | {sum(counts.values())} |", ""]
    md += ["## Classifier", ""]
    md += ["| model | CV accuracy | member |", "|---|---|---|"]
    md += [f"| {n} | {a:.4f} | {'yes' if n in cv.members else ''} |" for n, a in cv.cv_accuracy.items()]
    md += ["", f"Ensemble in-sample accuracy: {cv.ensemble_accuracy:.4f}", "",
           f"Macro-averaged F1: {cv.macro_f1:.4f}", ""]
    if cv.low_accuracy:
        md += [f"**Warning:** ensemble accuracy below {LOW_ACCURACY_THRESHOLD}; "
               "false negatives may inflate bisociation scores.", ""]
    if zero_topics:
        md += [f"Unused topics scored 0: {', '.join(zero_topics)}", ""]
    md += ["## Bridging topics", ""]
    for name in corpus.domains:
        rows = [r for r in btopics if r["domain"] == name]
        md += [f"### {name}", "", "| rank | topic | score | NPMI | usage rank | words | baseline | baseline words |",
               "|---|---|---|---|---|---|---|---|"]
        md += [
            f"| {r['rank']} | {r['topic_id']} | {float(r['score']):.4f} | {float(r['npmi']):.4f} | "
            f"{r['usage_rank']} | {r['top_10_words']} | {r['baseline_topic']} | {r['baseline_words']} |"
            for r in rows
        ]
        md.append("")
    (out_dir / "report.md").write_text("\n".join(md), encoding="utf-8")
    return {
        "markdown": out_dir / "report.md",
        "domains": out_dir / "domains.csv",
        "classifier": out_dir / "classifier.csv",
        "btopics": out_dir / "btopics.csv",
    }


def cmd_inspect_topic(run_dir, domain, topic: int, top_n: int = 5) -> str:
    """Describe ``topic`` for ``domain``: words, score, rank and top documents."""
    run_dir, corpus = _load_run(run_dir)
    model = load_model(_require(run_dir, "model.json"), vocabulary_hash=corpus.vocabulary.hash)
    X = model.doc_topic_
    if isinstance(domain, str) and domain.isdigit() and domain not in corpus.domains:
        domain = int(domain)
    d = corpus.domain_id(domain)
    if not 0 <= topic < X.shape[1]:
        raise KeyError(f"unknown topic {topic}")
    ranked = {r.domain: r for r in read_ranked(_require(run_dir, "ranked.json"))}[d]
    topics = _read_csv(_require(run_dir, "topics.csv"))[topic]
    lines = [
        f"topic {topic} in domain {corpus.domains[d]!r}",
        f"  words:      {topics['top_10_words']}",
        f"  score:      {ranked.score_array()[topic]:.6f} (rank {ranked.rank_of(topic)} of {len(ranked)})",
        f"  usage rank: {topics['usage_rank']} (1 = least used)",
        f"  NPMI:       {float(topics['npmi']):.4f}",
        f"  top documents in {corpus.domains[d]!r}:",
    ]
    for i, p in top_documents(X, topic, corpus.domain_documents(d), top_n):
        lines.append(f"    {p:.4f}  {corpus.doc_ids[i]}  {corpus.titles[i]}")
    lines.append("  top documents across all domains:")
    for i, p in top_documents(X, topic, None, top_n):
        lines.append(f"    {p:.4f}  {corpus.doc_ids[i]}  [{corpus.domains[corpus.labels[i]]}]  {corpus.titles[i]}")
    return "\n".join(lines) + "\n"
