"""Level and power study for the monotonicity tests.

Scenarios simulate ``Y_i = F(x_i) + sigma * eps_i`` on the grid
``x_i = i / (n + 1)`` and record how often the calibrated test rejects.
Noise for replicate ``k`` depends only on ``(seed, law, n, k)``, so two
scenarios that differ only in the test or the regression function see the
same noise and can be compared pairwise.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .calibration import NullCalibration, calibrate
from .cones import DesignGrid, dist_sup_to_monotone, dist_sup_to_monotone_continuous
from .directions import MONO_LG, MONO_LM, VARIANTS, ShapeModel
from .exceptions import ShapeTestError
from .rng import map_chunks, row_generator
from .testkit import rejection_indicators

GAUSSIAN = "gaussian"
TYPE_I = "type1"
MIXTURE = "mixture"
LAWS = (GAUSSIAN, TYPE_I, MIXTURE)

EULER_GAMMA = 0.57721566490153286
GUMBEL_SD = math.pi / math.sqrt(6.0)
MIX_WEIGHT = 0.9
MIX_SCALE = 1.0 / (MIX_WEIGHT * 2.43 + (1 - MIX_WEIGHT) * 25.0)

LOW_PRECISION_REPS = 100

TEST_ALIASES = {"LM": MONO_LM, "LG": MONO_LG}

# noise variance used for each function in the study
SIGMA2 = {"F0": 0.01, "F1": 0.01, "F2": 0.01, "F3": 0.01, "F4": 0.01, "F5": 0.004, "F6": 0.006}


def _f3(x):
    return -0.2 * np.exp(-50.0 * (x - 0.5) ** 2)


def _f4(x):
    return 0.1 * np.cos(6.0 * np.pi * x)


def test_function(name: str, a: Optional[float] = None) -> Callable[[np.ndarray], np.ndarray]:
    """Regression function ``name`` of the study, vectorized over ``x``.

    ``F2(x) = -a x`` and ``F7(x) = 1 + x - a exp(-50 (x - 1/2)^2)`` need the
    amplitude ``a``.
    """
    if name in ("F2", "F7") and a is None:
        raise ShapeTestError(f"{name} needs an amplitude a")
    table = {
        "F0": lambda x: np.zeros_like(x),
        "F1": lambda x: 15.0 * (x <= 0.5) * (x - 0.5) ** 3 + 0.3 * (x - 0.5)
        - np.exp(-250.0 * (x - 0.25) ** 2),
        "F2": lambda x: -a * x,
        "F3": _f3,
        "F4": _f4,
        "F5": lambda x: 0.2 * x + _f3(x),
        "F6": lambda x: 0.2 * x + _f4(x),
        "F7": lambda x: 1.0 + x - a * np.exp(-50.0 * (x - 0.5) ** 2),
        "linear": lambda x: x,
        "square": lambda x: x**2,
    }
    try:
        F = table[name]
    except KeyError:
        raise ShapeTestError(f"unknown function {name!r}") from None
    return lambda x: F(np.asarray(x, dtype=float))


test_function.__test__ = False  # not a pytest function


def _draw(g: np.random.Generator, law: str, n: int) -> np.ndarray:
    if law == GAUSSIAN:
        return g.standard_normal(n)
    if law == TYPE_I:
        return (g.gumbel(size=n) - EULER_GAMMA) / GUMBEL_SD
    if law == MIXTURE:
        pick = g.random(n) < MIX_WEIGHT
        x1 = g.standard_normal(n) * math.sqrt(2.43 * MIX_SCALE)
        x2 = g.standard_normal(n) * math.sqrt(25.0 * MIX_SCALE)
        return np.where(pick, x1, x2)
    raise ShapeTestError(f"unknown error law {law!r} (known: {', '.join(LAWS)})")


def sample_errors(law: str, n: int, seed: int, replicate: int = 0) -> np.ndarray:
    """Standardized errors (mean 0, variance 1) for one replicate."""
    return _draw(row_generator(seed, replicate, "noise", law, n), law, n)


def error_rows(law: str, n: int, seed: int, rows: range) -> np.ndarray:
    return np.vstack([sample_errors(law, n, seed, k) for k in rows])


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    function: str
    sigma2: float
    law: str = GAUSSIAN
    n: int = 100
    ell_n: int = 25
    test: str = "LM"
    alpha: float = 0.05
    n_rep: int = 1000
    seed: int = 0
    a: Optional[float] = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ShapeTestError("sigma2 must be positive")
        if self.n_rep < 1:
            raise ShapeTestError("n_rep must be >= 1")
        if self.law not in LAWS:
            raise ShapeTestError(f"unknown error law {self.law!r}")
        if self.variant not in VARIANTS:
            raise ShapeTestError(f"unknown test {self.test!r}")
        self.regression_function()

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def variant(self) -> str:
        return TEST_ALIASES.get(self.test, self.test)

    @property
    def amplitude(self) -> Optional[float]:
        if self.a is None and self.function == "F2":
            return 1.5 * self.sigma
        return self.a

    def regression_function(self):
        return test_function(self.function, self.amplitude)

    def design(self) -> DesignGrid:
        return DesignGrid.regular(self.n)


@dataclass(frozen=True)
class SimulationResult:
    config: ScenarioConfig
    rejections: np.ndarray = field(repr=False)
    runtime: float = 0.0

    @property
    def n_rep(self) -> int:
        return int(self.rejections.size)

    @property
    def rate(self) -> float:
        return float(self.rejections.mean())

    @property
    def stderr(self) -> float:
        p = self.rate
        return math.sqrt(p * (1 - p) / self.n_rep)

    @property
    def low_precision(self) -> bool:
        return self.n_rep < LOW_PRECISION_REPS


def paired_difference(a: SimulationResult, b: SimulationResult) -> tuple[float, float]:
    """``rate(b) - rate(a)`` and its standard error over shared replicates."""
    if a.n_rep != b.n_rep:
        raise ShapeTestError("paired comparison needs equal replicate counts")
    d = b.rejections.astype(float) - a.rejections.astype(float)
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0


class CalibrationCache:
    """Calibrations keyed by ``(variant, n, ell_n, alpha)`` on the regular grid."""

    def __init__(self, n_sim: int = 10_000, seed: int = 20_050_101, threads: Optional[int] = None):
        self.n_sim = n_sim
        self.seed = seed
        self.threads = threads
        self._store: dict[tuple, tuple[ShapeModel, NullCalibration]] = {}

    def get(self, variant: str, n: int, ell_n: int, alpha: float) -> tuple[ShapeModel, NullCalibration]:
        key = (variant, n, ell_n, alpha)
        if key not in self._store:
            model = ShapeModel.build(variant, n, ell_n)
            cal = calibrate(model, alpha, self.n_sim, seed=self.seed, threads=self.threads)
            self._store[key] = (model, cal)
        return self._store[key]


def estimate_rejection_rate(cfg: ScenarioConfig, cal: NullCalibration, model: Optional[ShapeModel] = None,
                            threads: Optional[int] = None) -> SimulationResult:
    start = time.perf_counter()
    model = model or ShapeModel.build(cfg.variant, cfg.n, cfg.ell_n, cfg.design())
    cal.check_compatible(model.config)
    if cal.alpha != cfg.alpha:
        raise ShapeTestError(f"calibration level {cal.alpha} != scenario level {cfg.alpha}")
    mean = cfg.regression_function()(cfg.design().x)
    sigma = cfg.sigma

    def chunk(rows: range) -> np.ndarray:
        Y = mean + sigma * error_rows(cfg.law, cfg.n, cfg.seed, rows)
        return rejection_indicators(Y, model, cal)

    rejections = map_chunks(chunk, cfg.n_rep, threads)
    return SimulationResult(cfg, rejections, time.perf_counter() - start)


def run_study(scenarios: Iterable[ScenarioConfig], cache: Optional[CalibrationCache] = None,
              threads: Optional[int] = None) -> list[SimulationResult]:
    cache = cache or CalibrationCache(threads=threads)
    results = []
    for cfg in scenarios:
        model, cal = cache.get(cfg.variant, cfg.n, cfg.ell_n, cfg.alpha)
        results.append(estimate_rejection_rate(cfg, cal, model, threads))
    return results


# -- study documents -------------------------------------------------------

_SCENARIO_FIELDS = {f for f in ScenarioConfig.__dataclass_fields__}


def parse_scenarios(records: list, reps: Optional[int] = None, seed: Optional[int] = None) -> list[ScenarioConfig]:
    """Validate scenario records; every problem is reported with its row number."""
    errors = []
    out = []
    for i, rec in enumerate(records, start=1):
        if not isinstance(rec, dict):
            errors.append(f"row {i}: expected an object")
            continue
        unknown = set(rec) - _SCENARIO_FIELDS
        if unknown:
            errors.append(f"row {i}: unknown fields {sorted(unknown)}")
            continue
        rec = dict(rec)
        rec.setdefault("name", f"scenario{i}")
        if "sigma2" not in rec and rec.get("function") in SIGMA2:
            rec["sigma2"] = SIGMA2[rec["function"]]
        if reps is not None:
            rec["n_rep"] = reps
        if seed is not None:
            rec["seed"] = seed
        try:
            out.append(ScenarioConfig(**rec))
        except (TypeError, ShapeTestError) as exc:
            errors.append(f"row {i}: {exc}")
    if errors:
        raise ShapeTestError("invalid study:\n  " + "\n  ".join(errors))
    return out


def load_study(path) -> dict:
    """Read a study document.

    Either a list of scenarios or an object with ``scenarios`` (and optional
    ``cal_sims``, ``cal_seed``).  An object with ``"kind": "distance"`` lists
    ``functions`` whose distance to monotonicity is tabulated instead.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ShapeTestError(f"cannot read study {path}: {exc}") from exc
    if isinstance(doc, list):
        doc = {"scenarios": doc}
    if not isinstance(doc, dict):
        raise ShapeTestError("study must be a list or an object")
    doc.setdefault("kind", "rejection")
    if doc["kind"] not in ("rejection", "distance"):
        raise ShapeTestError(f"unknown study kind {doc['kind']!r}")
    return doc


def distance_rows(functions: Iterable[str] = ("F0", "F1", "F2", "F3", "F4", "F5", "F6"),
                  n: int = 100) -> list[dict]:
    """Noise variance and sup-norm distance to monotonicity for each function.

    ``d_design`` uses the design points ``i / (n + 1)``; ``d_continuous``
    uses a fine grid of ``[0, 1]``.  The two readings differ slightly
    (for ``F2``: 0.0735 against 0.075).
    """
    x = DesignGrid.regular(n).x
    rows = []
    for name in functions:
        sigma2 = SIGMA2.get(name, 0.01)
        a = 1.5 * math.sqrt(sigma2) if name == "F2" else None
        F = test_function(name, a)
        rows.append({
            "function": name,
            "sigma2": sigma2,
            "d_design": dist_sup_to_monotone(F(x)),
            "d_continuous": dist_sup_to_monotone_continuous(F),
        })
    return rows


CSV_FIELDS = ("scenario", "function", "law", "test", "n", "ell_n", "alpha", "sigma2",
              "n_rep", "rejections", "rate", "stderr", "low_precision")


def results_csv(results: Iterable[SimulationResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for res in results:
        c = res.config
        w.writerow([c.name, c.function, c.law, c.test, c.n, c.ell_n, repr(c.alpha), repr(c.sigma2),
                    res.n_rep, int(res.rejections.sum()), format(res.rate, ".6f"),
                    format(res.stderr, ".6f"), int(res.low_precision)])
    return buf.getvalue()


def distance_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("function", "sigma2", "d_design", "d_continuous"))
    for row in rows:
        w.writerow([row["function"], repr(row["sigma2"]), format(row["d_design"], ".6f"),
                    format(row["d_continuous"], ".6f")])
    return buf.getvalue()


# -- tables ----------------------------------------------------------------

def _grid_table(title: str, results: list[SimulationResult], row_key: str, digits: int) -> str:
    cols = sorted({(r.config.ell_n, r.config.test) for r in results},
                  key=lambda c: (c[0], c[1]))
    row_names = list(dict.fromkeys(getattr(r.config, row_key) for r in results))
    cell = {(getattr(r.config, row_key), r.config.ell_n, r.config.test): r for r in results}
    header = [row_key] + [f"{test} (ell_n={ell})" for ell, test in cols]
    lines = [title, " | ".join(header), " | ".join("---" for _ in header)]
    for name in row_names:
        parts = [name]
        for ell, test in cols:
            res = cell.get((name, ell, test))
            if res is None:
                parts.append("")
            else:
                flag = "*" if res.low_precision else ""
                parts.append(f"{res.rate:.{digits}f} ({res.stderr:.{digits}f}){flag}")
        lines.append(" | ".join(parts))
    return "\n".join(lines) + "\n"


def emit_table(kind: str, results: Optional[list[SimulationResult]] = None, n: int = 100) -> str:
    """Render ``levels``, ``powers`` or ``distances`` as a plain-text table.

    Levels carry 3 decimals and powers 2, each followed by its Monte Carlo
    standard error; ``*`` marks low-precision cells.
    """
    if kind == "distances":
        lines = ["Distance to monotonicity", "function | sigma2 | d_inf (design) | d_inf (continuous)",
                 "--- | --- | --- | ---"]
        for row in distance_rows(n=n) if results is None else results:
            lines.append(f"{row['function']} | {row['sigma2']:g} | {row['d_design']:.3f} | "
                         f"{row['d_continuous']:.3f}")
        return "\n".join(lines) + "\n"
    results = results or []
    if kind == "levels":
        return _grid_table("Estimated levels", results, "law", 3)
    if kind == "powers":
        return _grid_table("Estimated powers (gaussian errors)", results, "function", 2)
    raise ShapeTestError(f"unknown table {kind!r}")


def level_scenarios(n_rep: int = 1000, seed: int = 0) -> list[ScenarioConfig]:
    return [
        ScenarioConfig(f"level-{law}-{test}-{ell}", "F0", SIGMA2["F0"], law, 100, ell, test,
                       n_rep=n_rep, seed=seed)
        for law in LAWS for ell in (15, 25) for test in ("LM", "LG")
    ]


def power_scenarios(n_rep: int = 1000, seed: int = 0) -> list[ScenarioConfig]:
    return [
        ScenarioConfig(f"power-{fn}-{test}-{ell}", fn, SIGMA2[fn], GAUSSIAN, 100, ell, test,
                       n_rep=n_rep, seed=seed)
        for fn in ("F1", "F2", "F3", "F4", "F5", "F6") for ell in (15, 25) for test in ("LM", "LG")
    ]

