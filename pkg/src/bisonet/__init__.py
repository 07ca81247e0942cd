"""Bridging-topic discovery across text domains and BisoNet construction."""

from .bisociation import (
    BridgingTopicRanker,
    RankedTopicList,
    bisociation_score,
    bisociation_scores,
    rank_bisociative_topics,
    select_baseline_topic,
)
from .classify import CvReport, DomainEnsemble, OutlierSet, find_outliers, train_ensemble
from .corpus import Corpus, TokenizerOptions, Vocabulary, build_vocabulary, load_corpus, tokenize
from .graph import (
    BisoNet,
    export,
    generate_bisonet,
    largest_connected_component,
    prune_top_fraction,
    topic_bison_measure,
)
from .topics import DocumentCooccurrence, GibbsLDA, fit_lda, npmi_coherence, top_words

__version__ = "0.1.0"

__all__ = [
    "BisoNet",
    "BridgingTopicRanker",
    "Corpus",
    "CvReport",
    "DocumentCooccurrence",
    "DomainEnsemble",
    "GibbsLDA",
    "OutlierSet",
    "RankedTopicList",
    "TokenizerOptions",
    "Vocabulary",
    "bisociation_score",
    "bisociation_scores",
    "build_vocabulary",
    "export",
    "find_outliers",
    "fit_lda",
    "generate_bisonet",
    "largest_connected_component",
    "load_corpus",
    "npmi_coherence",
    "prune_top_fraction",
    "rank_bisociative_topics",
    "select_baseline_topic",
    "tokenize",
    "top_words",
    "topic_bison_measure",
    "train_ensemble",
]
