"""Test statistics, decisions and the power diagnostic.

The calibrated statistic is

    T = max over scales ell of (T^ell(y) - q(ell, u_alpha))

and the null hypothesis is rejected when ``T > 0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .calibration import NullCalibration, _check_alpha, empirical_quantile
from .directions import DIFF_INEQ, Direction, DirectionSet, ShapeModel
from .exceptions import ShapeTestError
from .rng import row_generator


@dataclass(frozen=True)
class ScaleRow:
    scale: int
    statistic: float
    critical_value: float
    exceedance: float


@dataclass(frozen=True)
class Witness:
    """Direction achieving the calibrated maximum."""

    scale: int
    tag: tuple[int, ...]
    support: tuple[int, int]
    x_range: tuple[float, float]
    blocks: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    variant: str
    n: int
    alpha: float
    u_alpha: Optional[float]
    statistic: float
    per_scale: tuple[ScaleRow, ...]
    decision: bool
    witness: Witness
    sigma_hat: Optional[float]
    components: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "REJECT" if self.decision else "ACCEPT"

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant,
            "n": self.n,
            "alpha": self.alpha,
            "u_alpha": self.u_alpha,
            "statistic": self.statistic,
            "decision": self.verdict,
            "reject": self.decision,
            "per_scale": [asdict(row) for row in self.per_scale],
            "witness": {
                "scale": self.witness.scale,
                "tag": list(self.witness.tag),
                "support": list(self.witness.support),
                "x_range": list(self.witness.x_range),
                "blocks": [list(b) for b in self.witness.blocks],
            },
            "sigma_hat": self.sigma_hat,
        }
        if self.components:
            out["components"] = {k: v.to_dict() for k, v in self.components.items()}
        return out


def statistic_per_scale(scores, dirs: DirectionSet) -> dict[int, float]:
    """Maximum score over the directions of each scale."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(dirs),):
        raise ShapeTestError("one score per direction expected")
    out = {}
    for ell in dirs.scales:
        mask = dirs.scale_of == ell
        if not mask.any():
            raise ShapeTestError(f"no directions at scale {ell}")
        out[ell] = float(scores[mask].max())
    return out


def _witness(model: ShapeModel, k: int) -> Witness:
    d = model.dirs[k]
    x = model.config.x.x
    part = model.family[d.scale]
    blocks = tuple(part.blocks[t - 1] for t in d.tag)
    return Witness(d.scale, d.tag, d.support,
                   (float(x[d.support[0] - 1]), float(x[d.support[1] - 1])), blocks)


def evaluate_test(y, model: ShapeModel, cal: NullCalibration) -> TestReport:
    """Run a calibrated test on one data vector.

    Ties for the witness go to the smaller scale, then the smaller tag,
    which is the storage order of the directions.
    """
    _check_alpha(cal.alpha)
    cal.check_compatible(model.config)
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n,):
        raise ShapeTestError(f"data length {y.shape} does not match n={model.n}")
    if not np.all(np.isfinite(y)):
        raise ShapeTestError("data contain NaN or infinite values")
    scores = model.scores(y)[0]
    crit = cal.critical_values
    q_per_dir = np.array([crit[int(s)] for s in model.dirs.scale_of])
    excess = scores - q_per_dir
    k = int(np.argmax(excess))
    rows = []
    for ell, t in statistic_per_scale(scores, model.dirs).items():
        rows.append(ScaleRow(ell, t, crit[ell], t - crit[ell]))
    statistic = max(row.exceedance for row in rows)
    resid = np.linalg.norm(y - model.space.project(y))
    return TestReport(
        variant=model.config.variant, n=model.n, alpha=cal.alpha, u_alpha=cal.u_alpha,
        statistic=statistic, per_scale=tuple(rows), decision=statistic > 0,
        witness=_witness(model, k), sigma_hat=float(resid / math.sqrt(model.df)),
    )


def rejection_indicators(Y, model: ShapeModel, cal: NullCalibration) -> np.ndarray:
    """Decisions for a batch of data vectors (rows of ``Y``)."""
    cal.check_compatible(model.config)
    q = np.array([cal.critical_values[ell] for ell in model.scales])
    return np.any(model.scale_maxima(Y) > q, axis=1)


def _join(kind: str, reports: dict[str, TestReport], alpha: float) -> TestReport:
    first = next(iter(reports.values()))
    best = max(reports.values(), key=lambda rep: rep.statistic)
    statistic = best.statistic
    return TestReport(
        variant=kind, n=first.n, alpha=alpha, u_alpha=None, statistic=statistic,
        per_scale=(), decision=statistic > 0, witness=best.witness, sigma_hat=None,
        components=reports,
    )


def combined_monotonicity_test(y, model_lm: ShapeModel, cal_lm: NullCalibration,
                               model_lg: ShapeModel, cal_lg: NullCalibration) -> TestReport:
    """Reject monotonicity when the local-mean or the local-gradient test rejects.

    Both calibrations must share ``alpha``; the joint test has level ``2 alpha``.
    """
    if cal_lm.alpha != cal_lg.alpha:
        raise ShapeTestError("both tests must be calibrated at the same level")
    if model_lm.n != model_lg.n:
        raise ShapeTestError("both tests must use the same n")
    reports = {
        "mono-lm": evaluate_test(y, model_lm, cal_lm),
        "mono-lg": evaluate_test(y, model_lg, cal_lg),
    }
    return _join("combined-mono", reports, 2 * cal_lm.alpha)


def smoothness_transform(y, x, r: int, L: float, sign: int) -> np.ndarray:
    """``sign * y + L x^r / r!``."""
    x = np.asarray(getattr(x, "x", x), dtype=float)
    return sign * np.asarray(y, dtype=float) + L * x**r / math.factorial(r)


def smoothness_test(y, model: ShapeModel, cal: NullCalibration, L: float) -> TestReport:
    """Test ``sup |F^(r)| <= L`` with two one-sided derivative tests.

    The unweighted order-``r`` derivative test runs on ``-y + L x^r / r!`` and
    on ``y + L x^r / r!``; the joint test has level ``2 alpha``.
    """
    cfg = model.config
    if cfg.variant != DIFF_INEQ or cfg.weighted:
        raise ShapeTestError("smoothness test needs an unweighted diffineq model")
    if not L > 0:
        raise ShapeTestError("L must be positive")
    reports = {
        "upper": evaluate_test(smoothness_transform(y, cfg.x, cfg.r, L, -1), model, cal),
        "lower": evaluate_test(smoothness_transform(y, cfg.x, cfg.r, L, +1), model, cal),
    }
    return _join("smoothness", reports, 2 * cal.alpha)


def gaussian_upper_quantile(u: float) -> float:
    """``1 - u`` quantile of the standard normal."""
    return float(-ndtri(u))


def noncentral_chi2_upper_quantile(df: int, noncentrality: float, u: float,
                                   mc_reps: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo ``1 - u`` quantile of ``||z + mu||^2`` with ``||mu||^2 = noncentrality``."""
    g = row_generator(seed, 0, "ncx2", df)
    z = g.standard_normal((mc_reps, df))
    z[:, 0] += math.sqrt(noncentrality)
    return empirical_quantile(np.einsum("ij,ij->i", z, z), 1.0 - u)


def power_witness_bound(f, sigma: float, beta: float, direction: Direction, model: ShapeModel,
                        cal: NullCalibration, mc_reps: int = 100_000, seed: int = 0) -> float:
    """Signal size along ``direction`` that guarantees power ``1 - beta``.

    If ``<f, t>`` is at least the returned value, the test rejects with
    probability at least ``1 - beta`` under ``N(f, sigma^2 I)``.
    """
    if not 0 < beta < 1:
        raise ShapeTestError(f"beta must lie in ]0, 1[, got {beta}")
    if not sigma > 0:
        raise ShapeTestError("sigma must be positive")
    f = np.asarray(f, dtype=float)
    df = model.df
    off = np.linalg.norm(f - model.space.project(f)) ** 2 / sigma**2
    chi = noncentral_chi2_upper_quantile(df, off, beta / 2, mc_reps, seed)
    q = cal.critical_values[direction.scale]
    return (q * math.sqrt(chi / df) + gaussian_upper_quantile(beta / 2)) * sigma
