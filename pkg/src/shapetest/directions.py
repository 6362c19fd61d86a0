"""Test directions, nuisance spaces and studentized scores.

Every test in this package has the same shape: a finite set of unit vectors
``t`` (the directions), each with nonpositive inner product against every
mean vector in the null cone, and a linear space ``V`` containing all of
them.  The score of a direction is

    sqrt(n - d) * <y, t> / ||y - proj_V y||

which is Student distributed with ``n - d`` degrees of freedom under pure
Gaussian noise.  Directions are grouped by scale; the scale ``ell`` ones are
built on the ``ell``-block partition.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cones import DesignGrid, as_design
from .exceptions import DegenerateResidualError, DirectionError, ShapeTestError
from .partitions import Partition, PartitionFamily, partition_family

POSITIVITY = "positivity"
MONO_LM = "mono-lm"
MONO_LG = "mono-lg"
CONVEXITY = "convexity"
DIFF_INEQ = "diffineq"
VARIANTS = (POSITIVITY, MONO_LM, MONO_LG, CONVEXITY, DIFF_INEQ)

# smallest scale at which a variant has at least one direction
MIN_SCALE = {POSITIVITY: 1, MONO_LM: 2, MONO_LG: 1, CONVEXITY: 3, DIFF_INEQ: 1}

RANK_TOL = 1e-10
SPAN_TOL = 1e-9


def weight_function(spec: str) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """Resolve a weight-function name from the built-in registry.

    ``const1`` (no weighting), ``exp[:a]`` for ``exp(a x)`` and
    ``neg-exp[:a]`` for ``-exp(a x)``; ``a`` defaults to 1.
    """
    name, _, arg = spec.partition(":")
    if name == "const1" and not arg:
        return None
    if name in ("exp", "neg-exp"):
        try:
            a = float(arg) if arg else 1.0
        except ValueError:
            raise ShapeTestError(f"bad rate in weight function {spec!r}") from None
        sign = 1.0 if name == "exp" else -1.0
        return lambda x: sign * np.exp(a * np.asarray(x, dtype=float))
    raise ShapeTestError(f"unknown weight function {spec!r} (known: const1, exp[:a], neg-exp[:a])")


def default_ell_n(n: int, r: int) -> int:
    """Largest base scale for the unweighted derivative test: ``n // (2 (r + 1))``."""
    return n // (2 * (r + 1))


@dataclass(frozen=True)
class TestConfig:
    """Which test to run on which design.

    ``mono-lg`` is the first-order derivative test with no weight function;
    ``r`` and ``rfun`` only matter for ``diffineq``.
    """

    __test__ = False  # not a pytest class

    variant: str
    n: int
    ell_n: int
    x: DesignGrid
    r: int = 1
    rfun: str = "const1"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ShapeTestError(f"unknown test variant {self.variant!r}")
        object.__setattr__(self, "x", as_design(self.x))
        if len(self.x) != self.n:
            raise ShapeTestError(f"design has {len(self.x)} points, expected n={self.n}")
        if self.variant == MONO_LG:
            object.__setattr__(self, "r", 1)
            object.__setattr__(self, "rfun", "const1")
        elif self.variant != DIFF_INEQ:
            object.__setattr__(self, "r", 0)
            object.__setattr__(self, "rfun", "const1")
        elif self.r < 1:
            raise ShapeTestError("derivative order r must be >= 1")
        if self.ell_n < MIN_SCALE[self.variant]:
            raise ShapeTestError(
                f"{self.variant} needs ell_n >= {MIN_SCALE[self.variant]}, got {self.ell_n}"
            )
        weight_function(self.rfun)

    @property
    def weighted(self) -> bool:
        return self.rfun != "const1"

    @property
    def order(self) -> int:
        """Polynomial degree of the block fits (0 for block means)."""
        return self.r

    @property
    def scales(self) -> tuple[int, ...]:
        return tuple(range(MIN_SCALE[self.variant], self.ell_n + 1))

    @property
    def design_dependent(self) -> bool:
        return self.variant in (MONO_LG, CONVEXITY, DIFF_INEQ)

    def design_fingerprint(self) -> Optional[str]:
        """Hash of the design features the null law depends on.

        The unweighted tests are invariant under increasing affine maps of
        the design, so the design is normalized to ``[0, 1]`` first.
        """
        if not self.design_dependent:
            return None
        x = self.x.x
        if not self.weighted and x.size > 1:
            # rounding absorbs the last-digit noise of the affine map
            x = (x - x[0]) / (x[-1] - x[0])
            text = ",".join(format(v, ".12f") for v in x)
        else:
            text = ",".join(format(v, ".17g") for v in x)
        return hashlib.sha256(text.encode()).hexdigest()

    def weights(self) -> np.ndarray:
        R = weight_function(self.rfun)
        if R is None:
            return np.ones(self.n)
        w = np.broadcast_to(np.asarray(R(self.x.x), dtype=float), (self.n,)).copy()
        if np.any(w == 0) or not np.all(np.isfinite(w)):
            raise ShapeTestError(f"weight function {self.rfun} vanishes on the design")
        return w


@dataclass(frozen=True)
class NuisanceSpace:
    """Orthonormal basis (columns) of the space the directions live in."""

    basis: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    def project(self, y):
        return (np.asarray(y) @ self.basis) @ self.basis.T


@dataclass(frozen=True)
class Direction:
    coeffs: np.ndarray = field(repr=False)
    scale: int
    tag: tuple[int, ...]
    support: tuple[int, int]  # 1-based inclusive index range


@dataclass(frozen=True)
class DirectionSet:
    """Directions stacked as rows, sorted by ``(scale, tag)``."""

    matrix: np.ndarray = field(repr=False)
    scale_of: np.ndarray = field(repr=False)
    tags: tuple[tuple[int, ...], ...] = field(repr=False)
    supports: tuple[tuple[int, int], ...] = field(repr=False)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, k: int) -> Direction:
        return Direction(self.matrix[k], int(self.scale_of[k]), self.tags[k], self.supports[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def scales(self) -> tuple[int, ...]:
        return tuple(int(s) for s in np.unique(self.scale_of))

    @property
    def offsets(self) -> np.ndarray:
        """Index of the first direction of each scale."""
        return np.searchsorted(self.scale_of, np.array(self.scales))

    def at_scale(self, ell: int) -> list[Direction]:
        return [self[k] for k in np.flatnonzero(self.scale_of == ell)]

    def find(self, scale: int, tag: tuple[int, ...]) -> Direction:
        for k in np.flatnonzero(self.scale_of == scale):
            if self.tags[k] == tuple(tag):
                return self[k]
        raise KeyError((scale, tag))


def _orthonormalize(columns: list[np.ndarray], strict: bool) -> list[np.ndarray]:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Columns whose residual falls below ``RANK_TOL`` times their norm are
    dependent: dropped, or reported when ``strict``.
    """
    out: list[np.ndarray] = []
    for col in columns:
        v = np.array(col, dtype=float)
        scale = np.linalg.norm(v)
        if scale == 0:
            if strict:
                raise ShapeTestError("zero generator in nuisance space")
            continue
        for _ in range(2):
            for q in out:
                v -= (q @ v) * q
        norm = np.linalg.norm(v)
        if norm <= RANK_TOL * scale:
            if strict:
                raise ShapeTestError("rank deficient block basis (block too small)")
            continue
        out.append(v / norm)
    return out


def _local_coords(x: np.ndarray) -> np.ndarray:
    """Centre and scale block coordinates to ``[-1/2, 1/2]``-ish."""
    h = x[-1] - x[0]
    return (x - x.mean()) / (h if h > 0 else 1.0)


def build_nuisance_space(config: TestConfig, family: Optional[PartitionFamily] = None) -> NuisanceSpace:
    """Blockwise span on the base partition.

    Block indicators for positivity, local means and convexity; blockwise
    polynomials of degree ``r`` for the derivative tests, extended by their
    ``R``-weighted versions when a weight function is set.
    """
    family = family or partition_family(config.n, config.ell_n)
    x = config.x.x
    weights = config.weights()
    degree = config.order
    n_gen = (degree + 1) * (2 if config.weighted else 1)
    base = family.base
    if min(base.sizes) <= n_gen:
        raise ShapeTestError(
            f"base blocks of size {min(base.sizes)} are too small for {n_gen} "
            f"generators per block; decrease ell_n"
        )
    columns = []
    for sl in base.slices():
        u = _local_coords(x[sl])
        gens = [u**k for k in range(degree + 1)]
        if config.weighted:
            gens += [weights[sl] * g for g in gens]
        local = _orthonormalize(gens, strict=not config.weighted)
        for q in local:
            col = np.zeros(config.n)
            col[sl] = q
            columns.append(col)
    basis = np.column_stack(columns)
    d = basis.shape[1]
    if d >= config.n:
        raise ShapeTestError(f"nuisance dimension {d} is not below n={config.n}")
    if config.weighted and d > config.n / 2:
        raise ShapeTestError(f"nuisance dimension {d} exceeds n/2; decrease ell_n")
    basis.setflags(write=False)
    return NuisanceSpace(basis)


def _block_means(part: Partition, n: int) -> list[np.ndarray]:
    vecs = []
    for sl, size in zip(part.slices(), part.sizes):
        v = np.zeros(n)
        v[sl] = 1.0 / size
        vecs.append(v)
    return vecs


def polynomial_residual(x_block: np.ndarray, weights_block: np.ndarray, r: int) -> tuple[np.ndarray, float]:
    """Weighted residual of ``x^r`` against lower-degree polynomials on a block.

    Returns ``(v, gamma)`` where ``v`` is ``R * (x^r - proj x^r)`` computed in
    local coordinates and normalized to unit length, and ``gamma`` is its
    norm in the original coordinates.
    """
    h = x_block[-1] - x_block[0]
    u = _local_coords(x_block)
    if x_block.size <= r:
        return np.zeros_like(u), 0.0
    lower = _orthonormalize([u**k for k in range(r)], strict=True)
    res = u**r
    for _ in range(2):
        for q in lower:
            res = res - (q @ res) * q
    v = weights_block * res
    norm = np.linalg.norm(v)
    if norm <= RANK_TOL * np.linalg.norm(weights_block * u**r):
        return np.zeros_like(u), 0.0
    return v / norm, float(norm * (h if h > 0 else 1.0) ** r)


def build_directions(config: TestConfig, family: Optional[PartitionFamily] = None) -> DirectionSet:
    family = family or partition_family(config.n, config.ell_n)
    n = config.n
    x = config.x.x
    rows: list[np.ndarray] = []
    scale_of: list[int] = []
    tags: list[tuple[int, ...]] = []
    supports: list[tuple[int, int]] = []

    def emit(vec, ell, tag, support):
        rows.append(vec)
        scale_of.append(ell)
        tags.append(tag)
        supports.append(support)

    weights = config.weights()
    for ell in config.scales:
        part = family[ell]
        blocks = part.blocks
        if config.variant == POSITIVITY:
            for j, (sl, size) in enumerate(zip(part.slices(), part.sizes), start=1):
                v = np.zeros(n)
                v[sl] = -1.0 / math.sqrt(size)
                emit(v, ell, (j,), blocks[j - 1])
        elif config.variant == MONO_LM:
            means = _block_means(part, n)
            sizes = part.sizes
            for i, j in itertools.combinations(range(ell), 2):
                norm = (1.0 / sizes[i] + 1.0 / sizes[j]) ** -0.5
                emit(norm * (means[i] - means[j]), ell, (i + 1, j + 1),
                     (blocks[i][0], blocks[j][1]))
        elif config.variant == CONVEXITY:
            means = _block_means(part, n)
            sizes = part.sizes
            xbar = [x[sl].mean() for sl in part.slices()]
            for i, j, k in itertools.combinations(range(ell), 3):
                lam = (xbar[k] - xbar[j]) / (xbar[k] - xbar[i])
                norm = (1.0 / sizes[j] + lam**2 / sizes[i] + (1 - lam) ** 2 / sizes[k]) ** -0.5
                vec = norm * (means[j] - lam * means[i] - (1 - lam) * means[k])
                emit(vec, ell, (i + 1, j + 1, k + 1), (blocks[i][0], blocks[k][1]))
        else:
            for j, sl in enumerate(part.slices(), start=1):
                v_local, gamma = polynomial_residual(x[sl], weights[sl], config.r)
                if gamma == 0.0:
                    raise DirectionError(
                        f"degenerate block polynomial at scale {ell}, block {blocks[j - 1]}"
                    )
                v = np.zeros(n)
                v[sl] = -v_local
                emit(v, ell, (j,), blocks[j - 1])

    matrix = np.vstack(rows)
    # rows are generated in (scale, tag) order already
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    matrix.setflags(write=False)
    return DirectionSet(matrix, np.array(scale_of), tuple(tags), tuple(supports))


def gamma_of(config: TestConfig, support: tuple[int, int]) -> float:
    """Normalizer ``||R * (x^r - proj x^r)||`` of a derivative-test block."""
    sl = slice(support[0] - 1, support[1])
    return polynomial_residual(config.x.x[sl], config.weights()[sl], config.r)[1]


def gram(vectors) -> float:
    """Gram determinant ``det(<w_i, w_j>)`` of the given vectors."""
    w = np.atleast_2d(np.asarray(vectors, dtype=float))
    return float(np.linalg.det(w @ w.T))


def project_residual(y, space: NuisanceSpace) -> tuple[float, float]:
    """Return ``(||y - proj_V y||, sigma_hat)`` with ``sigma_hat = norm / sqrt(n - d)``."""
    y = np.asarray(y, dtype=float)
    resid = y - space.project(y)
    norm = float(np.linalg.norm(resid))
    return norm, norm / math.sqrt(space.n - space.dim)


def studentized_scores(y, dirs: DirectionSet, space: NuisanceSpace) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    norm, _ = project_residual(y, space)
    if norm <= 1e-12 * max(np.linalg.norm(y), np.finfo(float).tiny):
        raise DegenerateResidualError(
            "residual outside the nuisance space is zero; data are constant or degenerate"
        )
    return math.sqrt(space.n - space.dim) * (dirs.matrix @ y) / norm


class ShapeModel:
    """A configured test: partitions, nuisance space and directions.

    Scoring works on batches (rows of ``Y``) and goes through the basis
    coordinates of ``V``, which is exact because every direction lies in
    ``V``.
    """

    def __init__(self, config: TestConfig):
        self.config = config
        self.family = partition_family(config.n, config.ell_n)
        self.space = build_nuisance_space(config, self.family)
        self.dirs = build_directions(config, self.family)
        basis = self.space.basis
        self._coef = self.dirs.matrix @ basis
        leak = np.linalg.norm(self.dirs.matrix - self._coef @ basis.T, axis=1).max()
        if leak > SPAN_TOL:
            raise ShapeTestError(f"directions leave the nuisance space (defect {leak:.2e})")
        self._offsets = self.dirs.offsets
        self._df = config.n - self.space.dim

    @classmethod
    def build(cls, variant: str, n: int, ell_n: int, x=None, r: int = 1, rfun: str = "const1"):
        x = DesignGrid.regular(n) if x is None else x
        return cls(TestConfig(variant, n, ell_n, x, r, rfun))

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def df(self) -> int:
        """Residual degrees of freedom ``n - d``."""
        return self._df

    @property
    def scales(self) -> tuple[int, ...]:
        return self.config.scales

    def scores(self, Y) -> np.ndarray:
        """Studentized scores, shape ``(rows, directions)``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] != self.n:
            raise ShapeTestError(f"data length {Y.shape[1]} does not match n={self.n}")
        basis = self.space.basis
        P = Y @ basis
        resid = np.linalg.norm(Y - P @ basis.T, axis=1)
        floor = 1e-12 * np.maximum(np.linalg.norm(Y, axis=1), np.finfo(float).tiny)
        if np.any(resid <= floor):
            bad = int(np.flatnonzero(resid <= floor)[0])
            raise DegenerateResidualError(f"zero residual in row {bad}")
        return math.sqrt(self._df) * (P @ self._coef.T) / resid[:, None]

    def scale_maxima(self, Y) -> np.ndarray:
        """Per-scale maxima ``T^ell``, shape ``(rows, scales)``."""
        return np.maximum.reduceat(self.scores(Y), self._offsets, axis=1)
