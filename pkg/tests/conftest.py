import time

import pytest

from dimscope.scoremodel import DsmConfig, train_dsm_score_net
from dimscope.synth import ManifoldSpec, sample_manifold

SWISS_SPEC = ManifoldSpec("swiss_roll", 3, 2, 5000, seed=0)


@pytest.fixture(scope="session")
def swiss_roll():
    return sample_manifold(SWISS_SPEC)


TRAINING_SECONDS = {}


@pytest.fixture(scope="session")
def swiss_roll_net(swiss_roll):
    start = time.perf_counter()
    net = train_dsm_score_net(swiss_roll.points, DsmConfig())
    TRAINING_SECONDS["swiss_roll"] = time.perf_counter() - start
    return net


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail=""):
        _CRITERIA[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def swiss_roll_alignment(net, points, params):
    """|cos| between each point's leading score direction and the roll's true normal."""
    import numpy as np

    from dimscope.core import SeedPolicy
    from dimscope.diffusion_id import build_score_matrix

    out = []
    for i, x in enumerate(points.data):
        t = np.hypot(x[0], x[2])  # radius equals the roll parameter
        normal = np.zeros(points.d)
        normal[0], normal[2] = np.sin(t) + t * np.cos(t), -(np.cos(t) - t * np.sin(t))
        S = build_score_matrix(net, x, params, SeedPolicy(params.seed).rng(i))
        u = np.linalg.svd(S)[0][:, 0]
        out.append(abs(u @ normal) / np.linalg.norm(normal))
    return np.array(out)
