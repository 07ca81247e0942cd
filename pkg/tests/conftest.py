import json

import numpy as np
import pytest

from bisonet.config import PipelineConfig
from bisonet.datasets import make_planted_bridge_corpus, write_jsonl


def planted_config(corpus_path, output_dir, seed=0, **sections) -> PipelineConfig:
    """Pipeline config used for the planted-bridge corpus."""
    data = {
        "corpus": {"path": str(corpus_path), "min_df": 2, "max_df_frac": 0.9},
        "topics": {"n_topics": 8, "alpha": 0.5},
        "graph": {"top_k": 3},
        "seed": seed,
        "output_dir": str(output_dir),
    }
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return PipelineConfig.from_dict(data)


@pytest.fixture(scope="session")
def planted():
    return make_planted_bridge_corpus(seed=0)


@pytest.fixture(scope="session")
def planted_jsonl(planted, tmp_path_factory):
    return write_jsonl(planted.documents, tmp_path_factory.mktemp("planted") / "planted.jsonl")


@pytest.fixture
def toy_jsonl(tmp_path):
    rows = [
        {"doc_id": "a1", "domain": "food", "title": "Food", "body": "cook meal recipe kitchen"},
        {"doc_id": "a2", "domain": "food", "title": "", "body": "meal recipe restaurant"},
        {"doc_id": "b1", "domain": "health", "body": "doctor patient hospital"},
    ]
    path = tmp_path / "toy.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance line: ``criterion(n, ok, detail)``."""
    log = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, ok, detail="", skipped=False):
        status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
        line = f"criterion {number}: {status}  {detail}".rstrip()
        log.append((number, line))
        with capsys.disabled():
            print(f"\n[acceptance] {line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(log, key=lambda x: x[0]):
        terminalreporter.write_line(line)
