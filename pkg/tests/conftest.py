import numpy as np
import pytest

from risirm.dataset import ChannelSample, Dataset, default_environments

ACCEPTANCE: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


def fake_sample(env: str, index: int, label: int, K: int = 4) -> ChannelSample:
    """Cheap sample with valid shapes, for tests that only need labels and keys."""
    rng = np.random.default_rng([index, label, len(env)])
    h = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    g = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    phases = np.zeros(K) if label == 1 else np.tile([0.0, np.pi], K)[:K]
    return ChannelSample(env, index, h, g, rng.standard_normal(10), label, phases, 1.0)


def fake_env(env: str, per_class: int, K: int = 4) -> Dataset:
    return Dataset([fake_sample(env, i, 1 + (i % 2), K) for i in range(2 * per_class)])


@pytest.fixture(scope="session")
def envs():
    return default_environments()
