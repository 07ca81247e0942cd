"""Pipeline configuration: loading, validation, overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ._seeding import sub_seed

__all__ = ["ConfigError", "PipelineConfig", "load_config", "sub_seed"]


class ConfigError(ValueError):
    pass


@dataclass
class CorpusConfig:
    path: str = ""
    format: str | None = None
    min_token_length: int = 3
    stopwords_file: str | None = None
    stem: bool = False
    min_df: int = 5
    max_df_frac: float = 0.5


@dataclass
class TopicsConfig:
    n_topics: int = 100
    alpha: float | None = None
    beta: float = 0.1
    iterations: int = 1000
    burn_in: int = 500
    thinning: int = 50


@dataclass
class ClassifyConfig:
    candidates: list = field(
        default_factory=lambda: [
            "linear_discriminant",
            "bagged_trees",
            "subspace_discriminant",
            "logistic_regression",
            "naive_bayes",
        ]
    )
    n_members: int = 3
    k_folds: int = 5


@dataclass
class ScoreConfig:
    top_k: int = 10
    npmi_top_m: int = 10
    npmi_tolerance: float = 0.05
    n_candidates: int = 3
    npmi_epsilon: float = 1e-12


@dataclass
class GraphConfig:
    domains: list | None = None
    top_k: int | None = 10
    tau: float | None = None
    epsilon: float | None = None
    edge_fraction: float | None = None
    k: float = 0.5
    cross_domain_only: bool = False
    literal_root: bool = False
    largest_component: bool = False


@dataclass
class ExportConfig:
    formats: list = field(default_factory=lambda: ["dot", "graphml", "json"])


_SECTIONS = {
    "corpus": CorpusConfig,
    "topics": TopicsConfig,
    "classify": ClassifyConfig,
    "score": ScoreConfig,
    "graph": GraphConfig,
    "export": ExportConfig,
}


@dataclass
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    topics: TopicsConfig = field(default_factory=TopicsConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    export: ExportConfig = field(default_factory=ExportConfig)
    seed: int = 0
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data or {})
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            raw = data.pop(name, None) or {}
            if not isinstance(raw, dict):
                raise ConfigError(f"{name}: expected a mapping")
            known = {f.name for f in dataclasses.fields(section_cls)}
            unknown = sorted(set(raw) - known)
            if unknown:
                raise ConfigError(f"{name}.{unknown[0]}: unknown field")
            kwargs[name] = section_cls(**raw)
        for name in ("seed", "output_dir"):
            if name in data:
                kwargs[name] = data.pop(name)
        if data:
            raise ConfigError(f"{sorted(data)[0]}: unknown field")
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def override(self, dotted: str, value) -> "PipelineConfig":
        """Return a copy with ``section.field`` (or a top-level field) set."""
        data = self.to_dict()
        parts = dotted.split(".")
        target = data
        for p in parts[:-1]:
            if p not in target or not isinstance(target[p], dict):
                raise ConfigError(f"{dotted}: unknown field")
            target = target[p]
        if parts[-1] not in target:
            raise ConfigError(f"{dotted}: unknown field")
        target[parts[-1]] = value
        return PipelineConfig.from_dict(data)

    def validate(self) -> None:
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(f"{name}: {msg}")

        def is_int(v):
            return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

        def is_num(v):
            return isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)

        c, t, k, s, g = self.corpus, self.topics, self.classify, self.score, self.graph
        need(c.format in (None, "jsonl", "csv"), "corpus.format", "must be jsonl or csv")
        need(is_int(c.min_token_length) and c.min_token_length >= 1, "corpus.min_token_length", "must be an integer >= 1")
        need(is_int(c.min_df) and c.min_df >= 1, "corpus.min_df", "must be an integer >= 1")
        need(is_num(c.max_df_frac) and 0 < c.max_df_frac <= 1, "corpus.max_df_frac", "must be in (0, 1]")
        need(isinstance(c.stem, bool), "corpus.stem", "must be a boolean")

        need(is_int(t.n_topics) and t.n_topics >= 2, "topics.n_topics", "must be an integer >= 2")
        need(t.alpha is None or (is_num(t.alpha) and t.alpha > 0), "topics.alpha", "must be > 0 or null")
        need(is_num(t.beta) and t.beta > 0, "topics.beta", "must be > 0")
        need(is_int(t.burn_in) and t.burn_in >= 0, "topics.burn_in", "must be an integer >= 0")
        need(is_int(t.iterations) and t.iterations > t.burn_in, "topics.iterations", "must be an integer > burn_in")
        need(is_int(t.thinning) and t.thinning >= 1, "topics.thinning", "must be an integer >= 1")

        need(isinstance(k.candidates, list) and len(k.candidates) >= 3, "classify.candidates", "needs at least 3 classifier families")
        need(is_int(k.n_members) and 1 <= k.n_members <= len(k.candidates), "classify.n_members", "must be in [1, len(candidates)]")
        need(is_int(k.k_folds) and k.k_folds >= 2, "classify.k_folds", "must be an integer >= 2")

        need(is_int(s.top_k) and s.top_k >= 1, "score.top_k", "must be an integer >= 1")
        need(is_int(s.npmi_top_m) and s.npmi_top_m >= 2, "score.npmi_top_m", "must be an integer >= 2")
        need(is_num(s.npmi_tolerance) and s.npmi_tolerance >= 0, "score.npmi_tolerance", "must be >= 0")
        need(is_int(s.n_candidates) and s.n_candidates >= 1, "score.n_candidates", "must be an integer >= 1")
        need(is_num(s.npmi_epsilon) and 0 < s.npmi_epsilon < 1, "score.npmi_epsilon", "must be in (0, 1)")

        need(g.domains is None or (isinstance(g.domains, list) and len(g.domains) >= 1), "graph.domains", "must be null or a non-empty list")
        need(g.top_k is None or (is_int(g.top_k) and g.top_k >= 1), "graph.top_k", "must be null or an integer >= 1")
        need(g.tau is None or (is_num(g.tau) and 0 <= g.tau <= 1), "graph.tau", "must be null or in [0, 1]")
        need(g.epsilon is None or (is_num(g.epsilon) and g.epsilon >= 0), "graph.epsilon", "must be null or >= 0")
        need(g.edge_fraction is None or (is_num(g.edge_fraction) and 0 < g.edge_fraction <= 1), "graph.edge_fraction", "must be null or in (0, 1]")
        need(is_num(g.k) and g.k > 0, "graph.k", "must be > 0")
        for name in ("cross_domain_only", "literal_root", "largest_component"):
            need(isinstance(getattr(g, name), bool), f"graph.{name}", "must be a boolean")

        fmts = self.export.formats
        need(isinstance(fmts, list) and fmts and set(fmts) <= {"dot", "graphml", "json"}, "export.formats", "must be a non-empty subset of dot, graphml, json")
        need(is_int(self.seed) and self.seed >= 0, "seed", "must be an integer >= 0")
        need(isinstance(self.output_dir, str) and self.output_dir, "output_dir", "must be a non-empty path")

    def section_hash(self, *names) -> str:
        data = self.to_dict()
        payload = {n: data[n] for n in names}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    @property
    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def load_config(path) -> PipelineConfig:
    """Read a YAML or JSON config file; relative corpus paths resolve against it."""
    path = Path(path)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = PipelineConfig.from_dict(data)
    base = path.parent
    if cfg.corpus.path and not Path(cfg.corpus.path).is_absolute():
        cfg.corpus.path = str((base / cfg.corpus.path).resolve())
    if cfg.corpus.stopwords_file and not Path(cfg.corpus.stopwords_file).is_absolute():
        cfg.corpus.stopwords_file = str((base / cfg.corpus.stopwords_file).resolve())
    return cfg
