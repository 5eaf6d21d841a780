"""Shared fixtures: random instance generators used by unit and acceptance tests."""

import math

import numpy as np
import pytest


def make_triangular_instance(rng: np.random.Generator, l: int, n: int, nu: float):
    """Random vector tuple satisfying the chained-projection hypothesis.

    Builds an orthonormal frame q_1..q_l and tilts each v_{j+1} into the
    span of the previous ones by an exact ratio t <= nu/sqrt(l), so the
    hypothesis holds by construction with arbitrary positive norms.
    """
    q, _ = np.linalg.qr(rng.normal(size=(n, l)))
    q = q.T
    scales = rng.uniform(0.5, 3.0, size=l)
    vecs = [scales[0] * q[0]]
    for j in range(1, l):
        t = rng.uniform(0.0, 1.0) * nu / math.sqrt(l)
        w = rng.normal(size=j)
        w /= np.linalg.norm(w)
        inside = w @ q[:j]
        vecs.append(scales[j] * (math.sqrt(1.0 - t * t) * q[j] + t * inside))
    return vecs


def make_candidate_instance(rng: np.random.Generator, n: int, k: int, m: int, spread: str):
    """Candidate set inside a random k-dim subspace of R^n.

    spread "wide" scatters directions (branch 1 likely); "beam" packs them
    into a narrow cone with aligned norms (branch 2 likely). Returns
    (candidates, basis) with basis rows orthonormal.
    """
    basis, _ = np.linalg.qr(rng.normal(size=(n, k)))
    basis = basis.T
    if spread == "wide":
        coords = rng.normal(size=(m, k))
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        coords *= rng.uniform(1.0, 1.5, size=(m, 1))
    else:
        center = rng.normal(size=k)
        center /= np.linalg.norm(center)
        coords = center[None, :] + 0.01 * rng.normal(size=(m, k))
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        coords *= rng.uniform(1.0, 1.02, size=(m, 1))
    return [c @ basis for c in coords], basis


@pytest.fixture
def triangular_instance_gen():
    return make_triangular_instance


@pytest.fixture
def candidate_instance_gen():
    return make_candidate_instance
