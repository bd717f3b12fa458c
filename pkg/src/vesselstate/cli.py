"""Command line interface.

Subcommands ``simulate``, ``estimate``, ``validate``, ``run`` and ``compare``.
Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, LengthMismatchError, NumericalError, VesselStateError
from .harness import (
    atomic_write,
    filter_kinds,
    format_estimates,
    format_innovations,
    format_predictions,
    format_rmse,
    format_table,
    format_test_reports,
    format_text_report,
    format_truth,
    parse_innovations,
    read_table,
    run_estimation,
    run_truth,
    synthesize_measurements,
)
from .scenario import Scenario, dump_scenario, load_scenario, load_scenario_dict
from .sensors import format_measurements, parse_measurements
from .validation import STATE_GROUPS, evaluate_innovations, vector_rmse

log = logging.getLogger("vesselstate")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _resolve_scenario(args, out: Path | None) -> Scenario:
    path = getattr(args, "scenario", None)
    if path is None and out is not None and (out / "scenario.json").exists():
        path = out / "scenario.json"
    sc = load_scenario(path)
    data = sc.model_dump(mode="json")
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "filter", None):
        data["filter"]["kind"] = args.filter
    if getattr(args, "sensors", None):
        data["sensors_used"] = [s for s in args.sensors.split(",") if s.strip()]
    if getattr(args, "horizon", None) is not None:
        data["prediction"]["horizon"] = args.horizon
    if getattr(args, "cadence", None) is not None:
        data["prediction"]["cadence"] = args.cadence
    return load_scenario_dict(data)


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def cmd_simulate(args) -> Scenario:
    out = Path(args.out)
    sc = _resolve_scenario(args, None)
    truth = run_truth(sc)
    stream = synthesize_measurements(truth)
    atomic_write(out / "scenario.json", dump_scenario(sc))
    atomic_write(out / "truth.csv", format_truth(truth))
    atomic_write(out / "measurements.csv", format_measurements(stream))
    log.info("simulated %d ticks, %d measurements", sc.n_ticks, len(stream))
    return sc


def cmd_estimate(args) -> Scenario:
    out = Path(args.out)
    sc = _resolve_scenario(args, out)
    atomic_write(out / "scenario.json", dump_scenario(sc))
    src = Path(args.measurements) if getattr(args, "measurements", None) else out / "measurements.csv"
    stream = parse_measurements(_read_text(src))
    for kind in filter_kinds(sc.filter.kind):
        res = run_estimation(sc, stream, kind)
        atomic_write(out / f"estimates_{kind}.csv", format_estimates(res))
        atomic_write(out / f"predictions_{kind}.csv", format_predictions(res))
        atomic_write(out / f"innovations_{kind}.csv", format_innovations(res))
        atomic_write(out / f"counts_{kind}.csv",
                     format_table(["used", "dropped_late"], [[res.used, res.dropped_late]]))
        log.info("%s filter: %d measurements used, %d dropped as late", kind, res.used, res.dropped_late)
    return sc


def _load_states(path: Path, n_state: int = 12):
    header, rows = read_table(path)
    data = np.array([[float(v) for v in r[:1 + n_state]] for r in rows]) if rows else np.zeros((0, 1 + n_state))
    return header, data


def _rmse_groups(est, truth) -> dict[str, float]:
    return {g: vector_rmse(est[:, list(idx)], truth[:, list(idx)], ang) for g, idx, ang in STATE_GROUPS}


def cmd_validate(args) -> Scenario:
    out = Path(args.out)
    sc = _resolve_scenario(args, out)
    _, truth = _load_states(out / "truth.csv")
    sections = {}
    rmse_rows = []
    for kind in filter_kinds(sc.filter.kind):
        _, est = _load_states(out / f"estimates_{kind}.csv")
        if est.shape != truth.shape:
            raise LengthMismatchError(f"estimates_{kind}.csv and truth.csv are not aligned")
        sel = est[:, 0] >= sc.burn_in - 1e-9
        rm = _rmse_groups(est[sel, 1:], truth[sel, 1:])

        header, rows = read_table(out / f"predictions_{kind}.csv")
        pred: dict[int, dict[str, float]] = {}
        if rows:
            P = np.array([[float(v) for v in r[:14]] for r in rows])
            offs = np.rint((P[:, 1] - P[:, 0]) / sc.filter_dt).astype(int)
            k = np.rint(P[:, 1] / sc.filter_dt).astype(int)
            for j in np.unique(offs):
                s = offs == j
                pred[int(j)] = _rmse_groups(P[s, 2:], truth[k[s], 1:])
        records = parse_innovations(_read_text(out / f"innovations_{kind}.csv"))
        tests = evaluate_innovations(records, t_min=sc.burn_in)
        _, crow = read_table(out / f"counts_{kind}.csv")
        atomic_write(out / f"report_{kind}.csv", format_test_reports(tests))
        rmse_rows += format_rmse(kind, rm, pred, sc.filter_dt)
        sections[kind] = {"rmse": rm, "pred": pred, "tests": tests,
                          "used": int(crow[0][0]), "dropped": int(crow[0][1])}
    atomic_write(out / "rmse.csv", format_table(["filter", "kind", "offset_s", "group", "rmse"], rmse_rows))
    text = format_text_report(sc, sections)
    atomic_write(out / "report.txt", text)
    if not args.quiet:
        print(text)
    return sc


def cmd_run(args) -> Scenario:
    cmd_simulate(args)
    args.scenario = None  # later stages read the resolved scenario from the run directory
    cmd_estimate(args)
    return cmd_validate(args)


def cmd_compare(args) -> None:
    ha, a = _load_states(Path(args.a))
    hb, b = _load_states(Path(args.b))
    if a.shape != b.shape or not np.array_equal(a[:, 0], b[:, 0]):
        raise LengthMismatchError("estimate files are not sampled at the same times")
    rows = [["a_vs_b", g, v] for g, v in _rmse_groups(a[:, 1:], b[:, 1:]).items()]
    if args.truth:
        _, t = _load_states(Path(args.truth))
        if t.shape != a.shape:
            raise LengthMismatchError("truth is not aligned with the estimates")
        rows += [["a_vs_truth", g, v] for g, v in _rmse_groups(a[:, 1:], t[:, 1:]).items()]
        rows += [["b_vs_truth", g, v] for g, v in _rmse_groups(b[:, 1:], t[:, 1:]).items()]
    sys.stdout.write(format_table(["pair", "group", "rmse"], rows))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vesselstate", description="USV state estimation simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, estimate=False):
        sp.add_argument("--scenario", type=Path, help="scenario JSON (default: packaged scenario)")
        sp.add_argument("--seed", type=int, help="override the scenario seed (u64)")
        sp.add_argument("--out", type=Path, required=True, help="run directory")
        if estimate:
            sp.add_argument("--filter", choices=["nonlinear", "linear", "both"])
            sp.add_argument("--sensors", help="comma list of GPS,IMU,UVDAR,APRILTAG")
            sp.add_argument("--horizon", type=float, help="prediction horizon in seconds")
            sp.add_argument("--cadence", type=float, help="seconds between forecasts")

    common(sub.add_parser("simulate", help="truth trajectory and measurement log"))
    sp = sub.add_parser("estimate", help="run the estimators on a measurement log")
    common(sp, estimate=True)
    sp.add_argument("--measurements", type=Path, help="measurement CSV (default: <out>/measurements.csv)")
    sp = sub.add_parser("validate", help="innovation tests and RMSE report")
    common(sp, estimate=True)
    sp.add_argument("--quiet", action="store_true")
    sp = sub.add_parser("run", help="simulate, estimate and validate")
    common(sp, estimate=True)
    sp.add_argument("--quiet", action="store_true")
    sp = sub.add_parser("compare", help="compare two estimate CSVs")
    sp.add_argument("a", type=Path)
    sp.add_argument("b", type=Path)
    sp.add_argument("--truth", type=Path, help="truth CSV to score both against")
    return p


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "validate": cmd_validate,
            "run": cmd_run, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "seed", None) is not None and not (0 <= args.seed < 2 ** 64):
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except VesselStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
