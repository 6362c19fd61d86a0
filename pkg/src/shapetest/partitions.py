"""Nested block partitions of the design indices.

All indices in this module are 1-based: a block ``(start, end)`` covers the
indices ``start, start + 1, ..., end`` of ``{1, ..., n}``.  Use
:meth:`Partition.slices` to get 0-based Python slices for array work.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exceptions import ShapeTestError


@dataclass(frozen=True)
class Partition:
    """Ordered partition of ``{1, ..., n}`` into consecutive blocks."""

    n: int
    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        expected = 1
        for start, end in self.blocks:
            if start != expected or end < start:
                raise ShapeTestError(f"blocks are not a consecutive cover: {self.blocks}")
            expected = end + 1
        if expected != self.n + 1:
            raise ShapeTestError(f"blocks do not cover 1..{self.n}")

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(end - start + 1 for start, end in self.blocks)

    def slices(self) -> list[slice]:
        """0-based slices, one per block."""
        return [slice(start - 1, end) for start, end in self.blocks]

    def index_sets(self) -> list[range]:
        return [range(start, end + 1) for start, end in self.blocks]


@dataclass(frozen=True)
class PartitionFamily:
    n: int
    ell_n: int
    levels: dict[int, Partition] = field(repr=False)

    @property
    def base(self) -> Partition:
        return self.levels[self.ell_n]

    def __getitem__(self, ell: int) -> Partition:
        try:
            return self.levels[ell]
        except KeyError:
            raise ShapeTestError(f"scale {ell} outside 1..{self.ell_n}") from None


def build_base_partition(n: int, ell_n: int) -> Partition:
    """Split ``{1, ..., n}`` into ``ell_n`` almost equal consecutive blocks.

    Block ``k`` is ``{i : (k-1)/ell_n < i/n <= k/ell_n}``.  The bounds are
    evaluated in integer arithmetic, so the result is exact.

    >>> build_base_partition(10, 3).blocks
    ((1, 3), (4, 6), (7, 10))
    """
    if n < 1:
        raise ShapeTestError(f"n must be positive, got {n}")
    if not 1 <= ell_n <= n:
        raise ShapeTestError(f"ell_n must lie in 1..n={n}, got {ell_n}")
    # (k-1) n < i ell_n <= k n
    blocks = tuple(
        ((k - 1) * n // ell_n + 1, k * n // ell_n) for k in range(1, ell_n + 1)
    )
    return Partition(n, blocks)


def coarsen_partition(base: Partition, ell: int) -> Partition:
    """Gather consecutive base blocks into ``ell`` blocks.

    Coarse block ``j`` is the union of the base blocks ``k`` with
    ``(j-1)/ell < k/ell_n <= j/ell``.
    """
    ell_n = len(base)
    if not 1 <= ell <= ell_n:
        raise ShapeTestError(f"scale must lie in 1..{ell_n}, got {ell}")
    blocks = []
    for j in range(1, ell + 1):
        first = (j - 1) * ell_n // ell + 1
        last = j * ell_n // ell
        blocks.append((base.blocks[first - 1][0], base.blocks[last - 1][1]))
    return Partition(base.n, tuple(blocks))


def partition_family(n: int, ell_n: int) -> PartitionFamily:
    base = build_base_partition(n, ell_n)
    levels = {ell: coarsen_partition(base, ell) for ell in range(1, ell_n + 1)}
    return PartitionFamily(n, ell_n, levels)
