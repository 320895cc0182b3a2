import numpy as np

from pdmlsvd import PrimalProblem


def random_problem(rng, order, max_n=6, max_m=5):
    """Random primal problem with mode sizes up to ``max_n`` and feature widths up to ``max_m``."""
    ns = rng.integers(2, max_n + 1, size=order)
    ms = rng.integers(1, max_m + 1, size=order)
    features = [rng.standard_normal((n, m)) for n, m in zip(ns, ms)]
    return PrimalProblem(features, rng.standard_normal(tuple(ms)))


def random_orthonormal(rng, n, r):
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return q
