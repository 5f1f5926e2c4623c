"""Shared random-model factories for the test suite.

All tests draw from explicitly seeded generators so the suite is
deterministic run to run.
"""

import numpy as np

from privperturb.system import LinearSystem


def random_system(rng, n=None, p=None, q=None, n_max=8, scale=1.0):
    """Random dense system with q < p (generic full-row-rank pencil family).

    Keeping the released-output count strictly below the input count makes
    the pencil generically full row rank at every frequency, which is the
    regime the design routines require.
    """
    if n is None:
        n = int(rng.integers(1, n_max + 1))
    if p is None:
        p = int(rng.integers(2, n_max + 1))
    if q is None:
        q = int(rng.integers(1, p))
    A = rng.uniform(-1.0, 1.0, (n, n)) * scale
    B = rng.uniform(-1.0, 1.0, (n, p)) * scale
    G = rng.uniform(-1.0, 1.0, (q, n)) * scale
    H = rng.uniform(-1.0, 1.0, (q, p)) * scale
    return LinearSystem(A, B, G, H)


def system_with_kernel(rng, z, n=None, p=None, q=None, n_max=6):
    """System whose pencil at ``z`` annihilates a known vector (v1, v2).

    Construction: draw everything at random, then correct one rank-1 slice
    of A so (z I - A) v1 = B v2 and one rank-1 slice of H so
    G v1 + H v2 = 0.  Returns (sys, v1, v2).
    """
    if n is None:
        n = int(rng.integers(2, n_max + 1))
    if p is None:
        p = int(rng.integers(2, n_max + 1))
    if q is None:
        q = int(rng.integers(1, n_max + 1))
    v1 = rng.uniform(0.3, 1.0, n) * rng.choice([-1.0, 1.0], n)
    v2 = rng.uniform(0.3, 1.0, p) * rng.choice([-1.0, 1.0], p)
    A0 = rng.uniform(-1.0, 1.0, (n, n))
    B = rng.uniform(-1.0, 1.0, (n, p))
    G = rng.uniform(-1.0, 1.0, (q, n))
    H0 = rng.uniform(-1.0, 1.0, (q, p))
    A = A0 + np.outer(z * v1 - B @ v2 - A0 @ v1, v1) / (v1 @ v1)
    H = H0 - np.outer(G @ v1 + H0 @ v2, v2) / (v2 @ v2)
    return LinearSystem(A, B, G, H), v1, v2
