import numpy as np
import pytest

from pobandit.model import Arm


def make_random_arm(rng: np.random.Generator, k: int, max_reward: float = 3.0) -> Arm:
    """Dense random regular arm with ascending rewards, first reward 0."""
    while True:
        p = rng.dirichlet(np.full(k, rng.uniform(0.3, 3.0)), size=k)
        p = np.maximum(p, 1e-6)
        p /= p.sum(axis=1, keepdims=True)
        rewards = np.sort(rng.uniform(0.0, max_reward, size=k))
        rewards[0] = 0.0
        try:
            return Arm(p, rewards, rng.dirichlet(np.ones(k)), label="rand")
        except Exception:
            continue


def make_defective_arm(rng: np.random.Generator, max_tries: int = 20000) -> Arm | None:
    """Arm whose transition matrix has a repeated eigenvalue with a 2x2 Jordan block."""
    for _ in range(max_tries):
        lam = rng.uniform(-0.6, 0.8)
        q = np.column_stack([np.ones(3), rng.normal(size=(3, 2))])
        try:
            qinv = np.linalg.inv(q)
        except np.linalg.LinAlgError:
            continue
        jordan = np.array([[1.0, 0.0, 0.0], [0.0, lam, 1.0], [0.0, 0.0, lam]])
        p = q @ jordan @ qinv
        if np.all(p >= 1e-6) and np.all(p <= 1.0):
            p = p / p.sum(axis=1, keepdims=True)
            b = np.sort(rng.uniform(0.0, 3.0, 3))
            b[0] = 0.0
            try:
                return Arm(p, b, rng.dirichlet(np.ones(3)), label="defective")
            except Exception:
                continue
    return None


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20250809)
