import os
from pathlib import Path

import numpy as np
import pytest

from maskenc.synth import CorpusSpec, synth_corpus

FIXTURES = Path(__file__).parent / "fixtures"
COCO_ENV = "MASKENC_COCO_ANNOTATIONS"

# lines recorded by test_acceptance, printed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def coco_path():
    """Path to COCO train2017 instances JSON, or None when not provided."""
    p = os.environ.get(COCO_ENV)
    return Path(p) if p and Path(p).is_file() else None


@pytest.fixture(scope="session")
def mixed_corpus():
    """Seeded synthetic corpus, 150 grids per family, with categories."""
    pairs = list(synth_corpus(CorpusSpec(count=150, seed=11)))
    grids = np.stack([g for g, _ in pairs])
    cats = np.array([c for _, c in pairs])
    return grids, cats


def disk(m, radius, center=None):
    """Disk of cell centers; ``center`` is a scalar or a ``(row, col)`` pair."""
    c = (m - 1) / 2 if center is None else center
    cy, cx = (c, c) if np.isscalar(c) else c
    yy, xx = np.mgrid[:m, :m]
    return (((yy - cy) ** 2 + (xx - cx) ** 2) <= radius * radius).astype(np.uint8)


def random_masks(rng, n, h, w, p=0.5):
    return (rng.random((n, h, w)) < p).astype(np.uint8)
