"""Command line interface: ``shapetest calibrate|test|simulate|tables``.

Exit codes: 0 accept (or success), 1 reject, 2 usage or data error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import jsonio
from .calibration import NullCalibration, calibrate
from .cones import DesignGrid
from .directions import DIFF_INEQ, MONO_LG, MONO_LM, VARIANTS, ShapeModel, TestConfig, default_ell_n
from .exceptions import ShapeTestError
from .simlab import (CalibrationCache, distance_csv, distance_rows, emit_table, level_scenarios,
                     load_study, parse_scenarios, power_scenarios, results_csv, run_study)
from .testkit import combined_monotonicity_test, evaluate_test, smoothness_test

EXIT_ACCEPT, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


class UsageError(ShapeTestError):
    pass


def read_data(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse an ``x,y`` CSV file; returns ``(x, y, order)`` sorted by ``x``.

    ``order[k]`` is the 0-based input row of the ``k``-th sorted point.  A
    header line and ``#`` comment lines are allowed.
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ShapeTestError(f"cannot read {path}: {exc}") from exc
    xs, ys = [], []
    first = True
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 2:
            raise ShapeTestError(f"{path}:{lineno}: expected two columns x,y")
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            if first:
                first = False
                continue  # header
            raise ShapeTestError(f"{path}:{lineno}: not a number") from None
        first = False
        xs.append(x)
        ys.append(y)
    x, y = np.array(xs), np.array(ys)
    if x.size == 0:
        raise ShapeTestError(f"{path}: no data rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ShapeTestError(f"{path}: NaN or infinite values")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if np.any(np.diff(x) <= 0):
        raise ShapeTestError(f"{path}: repeated x values")
    DesignGrid(x)
    return x, y, order


def _config_from_args(args) -> TestConfig:
    if args.test == DIFF_INEQ and args.order is None:
        raise UsageError("--test diffineq requires --order")
    if args.test != DIFF_INEQ and (args.order is not None or args.rfun is not None):
        raise UsageError("--order/--rfun only apply to --test diffineq")
    r = args.order or 1
    rfun = args.rfun or "const1"
    if args.design:
        x = read_data(args.design)[0]
        if args.n is not None and args.n != x.size:
            raise UsageError(f"--n {args.n} but design file has {x.size} points")
        n = x.size
    else:
        if args.n is None:
            raise UsageError("--n is required without --design")
        n = args.n
        x = DesignGrid.regular(n).x
    ell_n = args.ln
    if ell_n is None:
        if args.test != DIFF_INEQ:
            raise UsageError("--ln is required")
        ell_n = default_ell_n(n, r)
    return TestConfig(args.test, n, ell_n, x, r, rfun)


def cmd_calibrate(args) -> int:
    cfg = _config_from_args(args)
    model = ShapeModel(cfg)
    cal = calibrate(model, args.alpha, args.sims, args.search_sims, args.seed, threads=args.threads)
    cal.save(args.out)
    print(f"variant={cal.variant} n={cal.n} ell_n={cal.ell_n} alpha={cal.alpha}")
    print(f"u_alpha={cal.u_alpha:.6g}")
    for ell, q in cal.critical_values.items():
        print(f"  q({ell}, u_alpha) = {q:.6f}")
    print(f"wrote {args.out}")
    return EXIT_ACCEPT


def _print_report(rep, x: np.ndarray) -> None:
    print(f"{rep.verdict}  T_alpha={rep.statistic:.6f}  ({rep.variant}, alpha={rep.alpha:g})")
    w = rep.witness
    print(f"witness: scale {w.scale}, blocks {w.tag}, x in [{w.x_range[0]:.6g}, {w.x_range[1]:.6g}]")
    if rep.sigma_hat is not None:
        print(f"sigma_hat={rep.sigma_hat:.6g}")
    for name, sub in rep.components.items():
        print(f"  {name}: {sub.verdict} T_alpha={sub.statistic:.6f} sigma_hat={sub.sigma_hat:.6g}")


def cmd_test(args) -> int:
    x, y, _ = read_data(args.data)
    cals = [NullCalibration.load(p) for p in args.cal]
    models = [ShapeModel(c.config(x)) for c in cals]
    for c in cals:
        if c.n != x.size:
            raise ShapeTestError(f"data have n={x.size} but calibration has n={c.n}")
    if args.smooth is not None:
        if len(cals) != 1:
            raise UsageError("--smooth takes exactly one diffineq calibration")
        rep = smoothness_test(y, models[0], cals[0], args.smooth)
    elif len(cals) == 2:
        by_variant = {c.variant: (m, c) for m, c in zip(models, cals)}
        if set(by_variant) != {MONO_LM, MONO_LG}:
            raise UsageError("two calibrations combine only as one mono-lm and one mono-lg")
        rep = combined_monotonicity_test(y, *by_variant[MONO_LM], *by_variant[MONO_LG])
    elif len(cals) == 1:
        rep = evaluate_test(y, models[0], cals[0])
    else:
        raise UsageError("give one --cal (or two for the combined monotonicity test)")
    _print_report(rep, x)
    if args.json:
        Path(args.json).write_text(jsonio.dumps(rep.to_dict()) + "\n")
    return EXIT_REJECT if rep.decision else EXIT_ACCEPT


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _runtime_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + ".runtime.csv")


def cmd_simulate(args) -> int:
    doc = load_study(args.spec)
    if doc["kind"] == "distance":
        rows = distance_rows(doc.get("functions", ("F0", "F1", "F2", "F3", "F4", "F5", "F6")),
                             doc.get("n", 100))
        _write(args.out, distance_csv(rows))
        print(emit_table("distances", rows), end="")
        return EXIT_ACCEPT
    scenarios = parse_scenarios(doc.get("scenarios", []), args.reps, args.seed)
    cache = CalibrationCache(args.cal_sims or doc.get("cal_sims", 10_000),
                             doc.get("cal_seed", 20_050_101), args.threads)
    results = run_study(scenarios, cache, args.threads)
    _write(args.out, results_csv(results))
    if args.out:
        with open(_runtime_path(args.out), "w") as fh:
            fh.write("scenario,runtime_seconds\n")
            for res in results:
                fh.write(f"{res.config.name},{res.runtime:.3f}\n")
    for res in results:
        flag = "  [low precision]" if res.low_precision else ""
        print(f"{res.config.name}: rate={res.rate:.4f} se={res.stderr:.4f} "
              f"({res.runtime:.2f}s){flag}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_ACCEPT


def cmd_tables(args) -> int:
    which = {"1", "2", "3"} if args.which == "all" else {args.which}
    if "1" in which:
        print(emit_table("distances"))
    cache = CalibrationCache(args.cal_sims, args.cal_seed, args.threads)
    if "2" in which:
        res = run_study(level_scenarios(args.reps, args.seed), cache, args.threads)
        print(emit_table("levels", res))
    if "3" in which:
        res = run_study(power_scenarios(args.reps, args.seed), cache, args.threads)
        print(emit_table("powers", res))
    return EXIT_ACCEPT


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shapetest", description="Multiscale tests of shape constraints on a regression mean.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="simulate and store null critical values")
    c.add_argument("--test", required=True, choices=VARIANTS)
    c.add_argument("--n", type=int)
    c.add_argument("--ln", type=int, help="number of base blocks ell_n")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--sims", type=int, default=10_000, help="draws for the quantile batch")
    c.add_argument("--search-sims", type=int, help="draws for the level search batch (default: --sims)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--order", type=int, help="derivative order r (diffineq)")
    c.add_argument("--rfun", help="weight function: const1, exp[:a], neg-exp[:a] (diffineq)")
    c.add_argument("--design", help="CSV whose x column gives the design (default i/(n+1))")
    c.add_argument("--threads", type=int)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("test", help="run a calibrated test on data")
    t.add_argument("--data", required=True)
    t.add_argument("--cal", required=True, action="append")
    t.add_argument("--smooth", type=float, metavar="L", help="test sup |F^(r)| <= L instead")
    t.add_argument("--json")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("--spec", required=True)
    s.add_argument("--out")
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--cal-sims", type=int)
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("tables", help="regenerate the distance, level and power tables")
    b.add_argument("--which", choices=("1", "2", "3", "all"), default="all")
    b.add_argument("--reps", type=int, default=1000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--cal-sims", type=int, default=10_000)
    b.add_argument("--cal-seed", type=int, default=20_050_101)
    b.add_argument("--threads", type=int)
    b.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ShapeTestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
