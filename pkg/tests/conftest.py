import numpy as np
import pytest

from qtrack.evaluation import GroundTruthTrack
from qtrack.geometry import BBox
from qtrack.tracker import Detection


def det(box=(0, 0, 10, 10), cls=0, score=0.9, emb=(1.0, 0.0), mask=None):
    return Detection(BBox(*box), cls, score, np.asarray(emb, dtype=float), mask)


def track(identity, cls, boxes, score=1.0, start=0, video_id="v"):
    """Eval-side track with consecutive frames starting at ``start``."""
    return GroundTruthTrack(identity, cls, [(start + k, BBox(*b), None) for k, b in enumerate(boxes)],
                            score, video_id)


@pytest.fixture
def make_det():
    return det


@pytest.fixture
def make_track():
    return track


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
