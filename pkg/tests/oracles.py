"""Brute-force reference implementations used by the tests.

Everything here is written for clarity rather than speed and shares no code
with the package beyond the design validation.
"""

import itertools
import math

import numpy as np


def det(m):
    return float(np.linalg.det(np.asarray(m, dtype=float)))


def phi(x, idx, r, w):
    """Determinant with rows ``(1, x_i, ..., x_i^{r-1}, w_i)``, 1-based ``idx``."""
    rows = [[x[i - 1] ** p for p in range(r)] + [w[i - 1]] for i in idx]
    return det(rows)


def monotone_distance(f):
    best = 0.0
    for i in range(len(f)):
        for j in range(i, len(f)):
            best = max(best, f[i] - f[j])
    return best / 2


def convex_violation(f, x):
    """``max over i < j < k`` of ``(f_j - lam f_i - (1 - lam) f_k)_+``."""
    best = 0.0
    for i, j, k in itertools.combinations(range(len(f)), 3):
        lam = (x[k] - x[j]) / (x[k] - x[i])
        best = max(best, f[j] - lam * f[i] - (1 - lam) * f[k])
    return best


def convex_minorant(f, x):
    """Lower hull value at each design point: minimum over chords through it."""
    n = len(f)
    g = np.array(f, dtype=float)
    for i in range(n):
        for a in range(i):
            for b in range(i + 1, n):
                lam = (x[b] - x[i]) / (x[b] - x[a])
                g[i] = min(g[i], lam * f[a] + (1 - lam) * f[b])
    return g


def increasing_tuples(n, size, within=None):
    pool = range(1, n + 1) if within is None else within
    return itertools.combinations(pool, size)


def all_tuple_margin(x, r, w):
    """Smallest form value over every increasing ``(r + 1)``-tuple."""
    return min(phi(x, idx, r, w) for idx in increasing_tuples(len(x), r + 1))


def consecutive_margin(x, r, w):
    return min(phi(x, range(i, i + r + 1), r, w) for i in range(1, len(x) - r + 1))


def cone_member_sample(rng, x, r, kind="random"):
    """Vectors ``v`` with all consecutive order-``r`` forms of ``v`` nonnegative.

    ``v`` is a polynomial of degree ``r - 1`` plus a nonnegative combination of
    truncated powers ``(x - x_k)_+^{r-1}`` (or steps for ``r = 1``), some of
    whose coefficients are zero so that many forms sit exactly on the boundary.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    v = np.polyval(rng.normal(size=r), x) if r > 1 else np.full(n, rng.normal())
    knots = rng.choice(n, size=min(n, 3), replace=False)
    for k in knots:
        c = 0.0 if (kind == "boundary" and rng.random() < 0.5) else rng.exponential()
        v = v + c * (np.where(x >= x[k], 1.0, 0.0) if r == 1
                     else np.maximum(x - x[k], 0.0) ** (r - 1))
    return v


def gram_det(vectors):
    w = np.asarray(vectors, dtype=float)
    return det(w @ w.T)


def cauchy_binet_rhs(ws, u, v):
    """Right side of the double-determinant expansion for basis ``ws``."""
    k = len(u)
    q = len(ws)
    total = 0.0
    for idx in itertools.combinations(range(k), q + 1):
        bu = [[w[i] for w in ws] + [u[i]] for i in idx]
        bv = [[w[i] for w in ws] + [v[i]] for i in idx]
        total += det(bu) * det(bv)
    return total


def residual_inner(ws, u, v):
    """``<u, (I - P_W) v>`` with ``P_W`` from a least-squares solve."""
    W = np.column_stack(ws)
    coef, *_ = np.linalg.lstsq(W, v, rcond=None)
    return float(u @ (v - W @ coef))


def student_upper(df, p):
    from scipy.stats import t

    return float(t.ppf(1 - p, df))


def binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n)


def cone_samples(variant, x, count, rng, r=1, weight=None):
    """``count`` random members of the cone a test variant protects.

    Half are random positive combinations of extreme rays (steps, hinges,
    truncated powers), the rest single rays, so boundary cases are covered.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.empty((count, n))
    for s in range(count):
        knots = rng.choice(n, size=1 if s % 2 else min(n, 5), replace=False)
        c = rng.exponential(size=knots.size)
        if variant == "positivity":
            v = np.zeros(n)
            for k, ck in zip(knots, c):
                v[k:k + 1 + rng.integers(n - k)] += ck
        elif variant in ("mono-lm", "mono-lg"):
            v = np.full(n, rng.normal())
            for k, ck in zip(knots, c):
                v = v + ck * (x >= x[k])
        elif variant == "convexity":
            v = rng.normal() + rng.normal() * x
            for k, ck in zip(knots, c):
                v = v + ck * np.maximum(x - x[k], 0.0)
        else:
            v = np.polyval(rng.normal(size=r), x) if r > 1 else np.full(n, rng.normal())
            for k, ck in zip(knots, c):
                v = v + ck * (np.where(x >= x[k], 1.0, 0.0) if r == 1
                              else np.maximum(x - x[k], 0.0) ** (r - 1))
            if weight is not None:
                v = v / weight(x)
        out[s] = v
    return out
