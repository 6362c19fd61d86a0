"""Monte Carlo calibration of the per-scale critical values.

For a tail probability ``u`` the critical value at scale ``ell`` is the
``1 - u`` quantile of the null maximum ``T^ell(eps)``.  One ``u`` is shared by
all scales; it is chosen as the largest grid value for which the chance that
some scale exceeds its critical value stays below ``alpha``.  Quantiles and
the exceedance rate are estimated on two independent batches of null draws.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import jsonio
from .cones import DesignGrid
from .directions import ShapeModel, TestConfig
from .exceptions import CalibrationError, ShapeTestError
from .rng import map_chunks, standard_normal_rows

FORMAT_VERSION = 1
GRID_SIZE = 40
MIN_PERSISTED_SIMS = 1000


@dataclass(frozen=True)
class NullScoreMatrix:
    """Per-scale null maxima: one row per standard Gaussian draw."""

    scores: np.ndarray = field(repr=False)
    scales: tuple[int, ...]
    seed: int
    stream: str

    @property
    def n_sim(self) -> int:
        return self.scores.shape[0]


def simulate_null_scores(model: ShapeModel, n_sim: int, seed: int, stream: str = "table",
                         threads: Optional[int] = None) -> NullScoreMatrix:
    """Draw ``n_sim`` null maxima; row ``s`` depends only on ``(seed, stream, s)``."""
    if n_sim < 1:
        raise ShapeTestError("n_sim must be >= 1")
    n = model.n

    def chunk(rows: range) -> np.ndarray:
        return model.scale_maxima(standard_normal_rows(seed, rows, n, "null", stream))

    scores = map_chunks(chunk, n_sim, threads)
    if not np.all(np.isfinite(scores)):
        raise CalibrationError("non-finite null score")
    scores.setflags(write=False)
    return NullScoreMatrix(scores, model.scales, int(seed), stream)


def empirical_quantile(sample, p: float) -> float:
    """The ``ceil(p N)``-th smallest value of the sample."""
    s = np.sort(np.asarray(sample, dtype=float).ravel())
    if s.size == 0:
        raise ShapeTestError("empty sample")
    if not 0 < p < 1:
        raise ShapeTestError(f"p must lie in ]0, 1[, got {p}")
    k = max(1, math.ceil(p * s.size - 1e-9 * s.size * p))
    return float(s[k - 1])


def _order_indices(n_sim: int, u_grid: np.ndarray) -> np.ndarray:
    p = 1.0 - u_grid
    k = np.ceil(p * n_sim - 1e-9 * n_sim * p).astype(int)
    return np.clip(k, 1, n_sim) - 1


def default_u_grid(alpha: float, ell_n: int, size: int = GRID_SIZE) -> np.ndarray:
    """Geometric grid from ``alpha`` down to ``alpha / ell_n`` (decreasing)."""
    if ell_n == 1:
        return np.array([alpha])
    return np.geomspace(alpha, alpha / ell_n, size)


def estimate_quantile_table(scores: NullScoreMatrix, u_grid) -> np.ndarray:
    """Critical values ``q[scale, u]``, shape ``(scales, len(u_grid))``."""
    u_grid = np.asarray(u_grid, dtype=float)
    if scores.n_sim < 1.0 / u_grid.min():
        warnings.warn(
            f"{scores.n_sim} draws are too few to resolve tail probability {u_grid.min():.3g}",
            stacklevel=2,
        )
    ordered = np.sort(scores.scores, axis=0)
    return ordered[_order_indices(scores.n_sim, u_grid)].T.copy()


def exceedance_rates(q_table: np.ndarray, scores: NullScoreMatrix) -> np.ndarray:
    """Fraction of rows where some scale exceeds its critical value, per grid ``u``."""
    s = scores.scores
    return np.array([np.mean(np.any(s > q_table[:, j], axis=1)) for j in range(q_table.shape[1])])


def calibrate_u_alpha(q_table: np.ndarray, u_grid, alpha: float,
                      search_scores: NullScoreMatrix) -> tuple[float, np.ndarray]:
    """Largest grid ``u`` whose estimated family-wise exceedance is at most ``alpha``.

    With a single scale the exceedance probability is ``u`` itself, so the
    largest grid value not above ``alpha`` is taken without consulting the
    Monte Carlo estimate.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    p_hat = exceedance_rates(q_table, search_scores)
    ok = np.flatnonzero((u_grid <= alpha) if q_table.shape[0] == 1 else (p_hat <= alpha))
    if ok.size == 0:
        raise CalibrationError(
            f"no grid value reaches level {alpha}: smallest estimated rate {p_hat.min():.4f} "
            f"at u={u_grid[np.argmin(p_hat)]:.4g}; increase the number of simulations"
        )
    best = ok[np.argmax(u_grid[ok])]
    return float(u_grid[best]), p_hat


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 0.5:
        raise ShapeTestError(f"alpha must lie in ]0, 1/2[, got {alpha}")


@dataclass(frozen=True)
class NullCalibration:
    variant: str
    n: int
    ell_n: int
    alpha: float
    r: int
    rfun: str
    design: Optional[tuple[float, ...]]
    design_fingerprint: Optional[str]
    scales: tuple[int, ...]
    u_grid: np.ndarray = field(repr=False)
    q_table: np.ndarray = field(repr=False)
    p_hat: np.ndarray = field(repr=False)
    u_alpha: float
    seed: int
    streams: tuple[str, str]
    n_sim: tuple[int, int]

    @property
    def design_dependent(self) -> bool:
        return self.design_fingerprint is not None

    @property
    def u_index(self) -> int:
        return int(np.flatnonzero(self.u_grid == self.u_alpha)[0])

    @property
    def critical_values(self) -> dict[int, float]:
        """``q(ell, u_alpha)`` for every scale."""
        j = self.u_index
        return {ell: float(self.q_table[i, j]) for i, ell in enumerate(self.scales)}

    def content_hash(self) -> str:
        ident = {
            "variant": self.variant, "n": self.n, "ell_n": self.ell_n,
            "r": self.r, "rfun": self.rfun,
            "design_dependent": self.design_dependent,
            "design_fingerprint": self.design_fingerprint,
            "seed": self.seed, "streams": list(self.streams), "n_sim": list(self.n_sim),
        }
        return hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()

    def config(self, x=None) -> TestConfig:
        """Test configuration this calibration applies to.

        ``x`` defaults to the stored design (or the regular grid when the
        null law does not depend on it).
        """
        if x is None:
            x = np.array(self.design) if self.design is not None else DesignGrid.regular(self.n)
        return TestConfig(self.variant, self.n, self.ell_n, x, max(self.r, 1), self.rfun)

    def check_compatible(self, config: TestConfig) -> None:
        problems = []
        if config.variant != self.variant:
            problems.append(f"variant {config.variant} != {self.variant}")
        if config.n != self.n:
            problems.append(f"n={config.n} but calibration has n={self.n}")
        if config.ell_n != self.ell_n:
            problems.append(f"ell_n={config.ell_n} but calibration has {self.ell_n}")
        if config.r != self.r or config.rfun != self.rfun:
            problems.append(f"order/weight ({config.r}, {config.rfun}) != ({self.r}, {self.rfun})")
        if not problems and config.design_fingerprint() != self.design_fingerprint:
            problems.append("design differs from the calibration design")
        if problems:
            raise CalibrationError("calibration mismatch: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "header": {
                "format_version": FORMAT_VERSION,
                "variant": self.variant,
                "n": self.n,
                "ell_n": self.ell_n,
                "alpha": self.alpha,
                "r": self.r,
                "rfun": self.rfun,
                "design_dependent": self.design_dependent,
                "design_fingerprint": self.design_fingerprint,
                "seed": self.seed,
                "streams": {"table": self.streams[0], "search": self.streams[1]},
                "n_sim": {"table": self.n_sim[0], "search": self.n_sim[1]},
                "content_hash": self.content_hash(),
            },
            "design": list(self.design) if self.design is not None else None,
            "scales": list(self.scales),
            "u_grid": self.u_grid.tolist(),
            "q_table": self.q_table.ravel().tolist(),
            "p_hat": self.p_hat.tolist(),
            "u_alpha": self.u_alpha,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NullCalibration":
        try:
            h = doc["header"]
            if h["format_version"] != FORMAT_VERSION:
                raise CalibrationError(f"unsupported calibration format {h['format_version']}")
            scales = tuple(int(s) for s in doc["scales"])
            u_grid = np.array(doc["u_grid"], dtype=float)
            q = np.array(doc["q_table"], dtype=float).reshape(len(scales), u_grid.size)
            cal = cls(
                variant=h["variant"], n=int(h["n"]), ell_n=int(h["ell_n"]), alpha=float(h["alpha"]),
                r=int(h["r"]), rfun=h["rfun"],
                design=tuple(doc["design"]) if doc.get("design") is not None else None,
                design_fingerprint=h["design_fingerprint"],
                scales=scales, u_grid=u_grid, q_table=q,
                p_hat=np.array(doc["p_hat"], dtype=float), u_alpha=float(doc["u_alpha"]),
                seed=int(h["seed"]),
                streams=(h["streams"]["table"], h["streams"]["search"]),
                n_sim=(int(h["n_sim"]["table"]), int(h["n_sim"]["search"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"malformed calibration document: {exc}") from exc
        if cal.content_hash() != h["content_hash"]:
            raise CalibrationError("calibration content hash does not match its header")
        if cal.u_alpha not in set(cal.u_grid.tolist()):
            raise CalibrationError("u_alpha is not a grid value")
        cal._check_persistable()
        return cal

    def _check_persistable(self) -> None:
        if min(self.n_sim) < MIN_PERSISTED_SIMS:
            raise CalibrationError(
                f"calibrations stored on disk need at least {MIN_PERSISTED_SIMS} draws "
                f"per batch, got {self.n_sim}"
            )

    def save(self, path) -> None:
        self._check_persistable()
        Path(path).write_text(jsonio.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "NullCalibration":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(doc)


def calibrate(model: ShapeModel, alpha: float = 0.05, n_sim: int = 10_000,
              n_sim_search: Optional[int] = None, seed: int = 0,
              u_grid=None, threads: Optional[int] = None) -> NullCalibration:
    """Full two-batch calibration for ``model`` at level ``alpha``."""
    _check_alpha(alpha)
    n_sim_search = n_sim if n_sim_search is None else n_sim_search
    cfg = model.config
    u_grid = default_u_grid(alpha, cfg.ell_n) if u_grid is None else np.asarray(u_grid, float)
    table = simulate_null_scores(model, n_sim, seed, "table", threads)
    search = simulate_null_scores(model, n_sim_search, seed, "search", threads)
    q_table = estimate_quantile_table(table, u_grid)
    u_alpha, p_hat = calibrate_u_alpha(q_table, u_grid, alpha, search)
    return NullCalibration(
        variant=cfg.variant, n=cfg.n, ell_n=cfg.ell_n, alpha=float(alpha),
        r=cfg.r, rfun=cfg.rfun,
        design=tuple(cfg.x.x.tolist()) if cfg.design_dependent else None,
        design_fingerprint=cfg.design_fingerprint(),
        scales=model.scales, u_grid=u_grid, q_table=q_table, p_hat=p_hat,
        u_alpha=u_alpha, seed=int(seed), streams=(table.stream, search.stream),
        n_sim=(table.n_sim, search.n_sim),
    )
