"""Shape cones over a design grid and sup-norm distances to them.

The cones are described by finitely many linear forms that must be
nonnegative.  For convexity and the differential inequality cone the forms
are determinants of a Vandermonde-like matrix whose last column holds the
vector being tested (see :func:`phi_form`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ShapeTestError

NONNEGATIVE = "nonnegative"
NONDECREASING = "nondecreasing"
NONCONCAVE = "nonconcave"
DIFF_INEQ = "diffineq"
CONE_KINDS = (NONNEGATIVE, NONDECREASING, NONCONCAVE, DIFF_INEQ)

MEMBERSHIP_TOL = 1e-10


@dataclass(frozen=True)
class DesignGrid:
    """Strictly increasing design points in ``[0, 1]``."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ShapeTestError("design must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(x)):
            raise ShapeTestError("design contains NaN or infinite values")
        if np.any(np.diff(x) <= 0):
            raise ShapeTestError("design points must be strictly increasing")
        if x[0] < 0 or x[-1] > 1:
            raise ShapeTestError("design points must lie in [0, 1]")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @classmethod
    def regular(cls, n: int) -> "DesignGrid":
        """The grid ``x_i = i / (n + 1)``."""
        return cls(np.arange(1, n + 1) / (n + 1))

    def __len__(self) -> int:
        return self.x.size


def as_design(x) -> DesignGrid:
    return x if isinstance(x, DesignGrid) else DesignGrid(x)


@dataclass(frozen=True)
class ConeSpec:
    kind: str
    r: int = 1
    R: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ShapeTestError(f"unknown cone kind {self.kind!r}")
        if self.kind == DIFF_INEQ and self.r < 1:
            raise ShapeTestError("derivative order r must be >= 1")

    def weights(self, x: DesignGrid) -> np.ndarray:
        """Values ``R(x_i)``; constant 1 when no weight function is set."""
        if self.R is None:
            return np.ones(len(x))
        w = np.broadcast_to(np.asarray(self.R(x.x), dtype=float), (len(x),)).copy()
        if np.any(np.abs(w) == 0) or not np.all(np.isfinite(w)):
            raise ShapeTestError("weight function R must not vanish on the design")
        return w


def fraction_free_det(m) -> float:
    """Determinant by fraction-free (Bareiss) elimination with row pivoting."""
    a = np.array(m, dtype=float)
    k = a.shape[0]
    if a.shape != (k, k):
        raise ShapeTestError("determinant needs a square matrix")
    if k == 0:
        return 1.0
    sign = 1.0
    prev = 1.0
    for p in range(k - 1):
        pivot = p + int(np.argmax(np.abs(a[p:, p])))
        if a[pivot, p] == 0:
            return 0.0
        if pivot != p:
            a[[p, pivot]] = a[[pivot, p]]
            sign = -sign
        for i in range(p + 1, k):
            a[i, p + 1:] = (a[i, p + 1:] * a[p, p] - a[i, p] * a[p, p + 1:]) / prev
            a[i, p] = 0.0
        prev = a[p, p]
    return sign * a[k - 1, k - 1]


def phi_form(x, idx: Sequence[int], r: int, w) -> float:
    """Determinant form on the rows ``(1, x_i, ..., x_i^{r-1}, w_i)``.

    ``idx`` is a strictly increasing tuple of ``r + 1`` 1-based indices.
    For ``r = 1`` this is ``w[i2] - w[i1]``.
    """
    xs = as_design(x).x
    w = np.asarray(w, dtype=float)
    idx = tuple(int(i) for i in idx)
    if r < 1 or len(idx) != r + 1:
        raise ShapeTestError(f"need r + 1 = {r + 1} indices, got {len(idx)}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ShapeTestError(f"indices must be strictly increasing: {idx}")
    if idx[0] < 1 or idx[-1] > xs.size or w.shape != xs.shape:
        raise ShapeTestError("index or vector length does not match the design")
    rows = np.array(idx) - 1
    m = np.empty((r + 1, r + 1))
    m[:, :r] = xs[rows, None] ** np.arange(r)
    m[:, r] = w[rows]
    return fraction_free_det(m)


def membership_forms(spec: ConeSpec, f, x) -> np.ndarray:
    """All defining linear forms of the cone evaluated at ``f``."""
    x = as_design(x)
    f = np.asarray(f, dtype=float)
    if f.shape != (len(x),):
        raise ShapeTestError(f"vector length {f.shape} does not match design size {len(x)}")
    if spec.kind == NONNEGATIVE:
        return f.copy()
    if spec.kind == NONDECREASING:
        return np.diff(f)
    if spec.kind == NONCONCAVE:
        r, w = 2, f
    else:
        r, w = spec.r, spec.weights(x) * f
    n = len(x)
    if n < r + 1:
        raise ShapeTestError(f"need at least {r + 1} points for order {r}")
    return np.array([phi_form(x, range(i, i + r + 1), r, w) for i in range(1, n - r + 1)])


def cone_membership(spec: ConeSpec, f, x, tol: float = MEMBERSHIP_TOL) -> tuple[bool, float]:
    """Return ``(member, margin)`` where margin is the smallest raw form value."""
    forms = membership_forms(spec, f, x)
    if forms.size == 0:
        return True, float("inf")
    margin = float(forms.min())
    return bool(margin >= -tol), margin


def dist_sup_to_monotone(f) -> float:
    """Sup-norm distance from ``f`` to nondecreasing sequences.

    Equals ``max_{i <= j} (f_i - f_j) / 2``.
    """
    f = np.asarray(f, dtype=float)
    if f.size == 0:
        raise ShapeTestError("empty input")
    drop = np.maximum.accumulate(f) - f
    return 0.5 * float(drop.max())


def dist_sup_to_monotone_continuous(F: Callable, num: int = 200_001) -> float:
    """Same distance for a function on ``[0, 1]``, evaluated on a fine grid."""
    return dist_sup_to_monotone(F(np.linspace(0.0, 1.0, num)))


def greatest_convex_minorant(f, x) -> np.ndarray:
    """Largest convex sequence lying below ``f`` on the design.

    Values of the lower convex hull of the points ``(x_i, f_i)``, read back at
    the design points.
    """
    xs = as_design(x).x
    f = np.asarray(f, dtype=float)
    if f.shape != xs.shape:
        raise ShapeTestError("vector length does not match the design")
    hull: list[int] = []
    for i in range(xs.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or above the chord from a to i
            if (f[b] - f[a]) * (xs[i] - xs[a]) >= (f[i] - f[a]) * (xs[b] - xs[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(xs, xs[hull], f[hull])


def dist_sup_to_convex(f, x) -> float:
    """Upper bound on the sup-norm distance to nonconcave sequences.

    Computed as ``max_i (f_i - g_i)`` with ``g`` the greatest convex minorant,
    which equals the largest positive three-point convexity violation
    ``f_j - lam f_i - (1 - lam) f_k``.
    """
    f = np.asarray(f, dtype=float)
    if f.size < 3:
        raise ShapeTestError("need at least 3 points")
    g = greatest_convex_minorant(f, x)
    return max(0.0, float(np.max(f - g)))
