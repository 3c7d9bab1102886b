"""Command-line entry point: ``gen``, ``match``, ``learn`` and ``sir``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible request.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Sequence

from . import bandit, matching, sirsim
from .config import ConfigError, RunConfig, read_config_file
from .routing import RouteContext
from .trips import BoundingBox, DataError, GeoPoint, NYC_BOX, load_trips, synth_generate, write_trips

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InfeasibleRequest(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument helpers


def parse_grid(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive) or a comma list; a bare number is a one-point grid."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            lo, hi, step = parts
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(round((hi - lo) / step))
            if not math.isclose(lo + count * step, hi, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(hi))):
                raise ValueError
            return [round(lo + i * step, 10) for i in range(count + 1)]
        values = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed grid {text!r}; use a:b:step or a comma list") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise UsageError(f"malformed grid {text!r}")
    return values


def parse_box(text: str) -> BoundingBox:
    try:
        s, w, n, e = (float(x) for x in text.split(","))
        return BoundingBox(GeoPoint(s, w), GeoPoint(n, e))
    except ValueError as exc:
        raise UsageError(f"bad --box {text!r}: expected south,west,north,east ({exc})") from None


def parse_overrides(items: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_csv(path: Path, comment: str, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with path.open("w", newline="") as fh:
        fh.write(comment + "\n")
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _money(x: float) -> str:
    return f"{x:.2f}"


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, cfg: RunConfig) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    box = parse_box(args.box) if args.box else NYC_BOX
    trips = synth_generate(args.n, args.seed, box, args.horizon, metric=cfg.metric())
    path = args.out / "trips.csv"
    write_trips(path, trips)
    text = path.read_text()
    path.write_text(cfg.comment({"command": "gen", "n": args.n, "seed": args.seed}) + "\n" + text)
    print(f"wrote {len(trips)} trips to {path}")
    return EXIT_OK


def _load_context(args, cfg: RunConfig) -> RouteContext:
    if args.trips:
        loaded = load_trips(args.trips, grid=cfg.grid())
        if not loaded.trips:
            raise DataError(f"{args.trips}: no trips to match")
        if loaded.skipped:
            print(f"skipped {loaded.skipped} invalid row(s)", file=sys.stderr)
        trips = loaded.trips
    else:
        if args.synth < 1:
            raise UsageError("--synth must be >= 1")
        trips = synth_generate(args.synth, args.seed)
    return RouteContext(trips, cfg.metric(), cfg.schedule(), cfg.policy(), cfg["routing.objective"])


SUMMARY_COLUMNS = ("method", "zeta", "n_users", "n_cabs", "solo_count", "merge_count", "total_profit")


def cmd_match(args, cfg: RunConfig) -> int:
    ctx = _load_context(args, cfg)
    n = len(ctx)
    if args.method == "all":
        plan = [(m, args.zeta) for m in ("greedy-max", "greedy-dist", "greedy-profit")]
        if n <= matching.EXACT_MAX_USERS and args.zeta <= matching.EXACT_MAX_ZETA:
            plan.append(("exact", args.zeta))
        else:
            print(f"note: exact skipped (needs n <= {matching.EXACT_MAX_USERS} and zeta <= 3)", file=sys.stderr)
        plan.append(("blossom", 2))
    else:
        if args.method == "exact" and (n > matching.EXACT_MAX_USERS or args.zeta > matching.EXACT_MAX_ZETA):
            raise InfeasibleRequest(
                f"exact solver handles at most {matching.EXACT_MAX_USERS} riders with zeta <= 3 "
                f"(got n={n}, zeta={args.zeta}); use greedy-max for larger batches"
            )
        if args.method == "blossom" and args.zeta != 2:
            raise InfeasibleRequest("blossom matching is defined for two-seat cabs only; pass --zeta 2")
        plan = [(args.method, args.zeta)]

    results = [(matching.run_method(m, ctx, z), z) for m, z in plan]
    extra = {"command": "match", "method": args.method, "zeta": args.zeta, "seed": args.seed,
             "source": args.trips or f"synth:{args.synth}"}
    comment = cfg.comment(extra)
    rows, timing = [], []
    for res, z in results:
        (args.out / f"match_{res.method}.json").write_text(json.dumps(res.to_dict(), indent=2) + "\n")
        rows.append({**res.summary_row(), "zeta": z})
        timing.append({"method": res.method, "wall_time": res.wall_time})
    write_csv(args.out / "match_summary.csv", comment, SUMMARY_COLUMNS, rows)
    write_csv(args.out / "match_timing.csv", comment, ("method", "wall_time"), timing)

    print(f"{'method':<14}{'zeta':>5}{'cabs':>7}{'solo':>7}{'merges':>8}{'profit $':>12}{'time s':>10}")
    for r, t in zip(rows, timing):
        print(f"{r['method']:<14}{r['zeta']:>5}{r['n_cabs']:>7}{r['solo_count']:>7}{r['merge_count']:>8}"
              f"{_money(r['total_profit']):>12}{t['wall_time']:>10.4f}")
    return EXIT_OK


def _demand(args) -> bandit.DemandModel:
    if args.demand_table:
        try:
            knots = [tuple(float(x) for x in item.split(":")) for item in args.demand_table.split(",")]
            thetas, probs = zip(*knots)
        except ValueError:
            raise UsageError(f"bad --demand-table {args.demand_table!r}; use theta:prob,theta:prob,...") from None
        try:
            return bandit.PiecewiseDemand(tuple(thetas), tuple(probs))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        return bandit.QuadraticDemand(args.demand_p0, args.demand_p1)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _day_source(args, cfg: RunConfig, seed: int):
    if not args.day_files:
        return bandit.synthetic_days(args.n_per_day, seed)
    if len(args.day_files) < args.days:
        raise DataError(f"{args.days} days requested but only {len(args.day_files)} day file(s) given")
    grid = cfg.grid()

    def source(day):
        trips = load_trips(args.day_files[day], grid=grid).trips
        if not trips:
            raise DataError(f"{args.day_files[day]}: no trips")
        return trips

    return source


DAY_COLUMNS = ("seed", "day", "theta_deg", "profit", "cumavg_profit", "bdf_mean", "regret")
ARM_COLUMNS = ("seed", "arm", "theta_deg", "pulls", "mean_profit", "bdf_mean_profit")
LEARN_SUMMARY_COLUMNS = ("seed", "bdf_theta_deg", "best_arm_share", "avg_profit", "bdf_mean", "gap_fraction")


def cmd_learn(args, cfg: RunConfig) -> int:
    grid = parse_grid(args.theta_grid)
    if args.days < len(grid):
        raise InfeasibleRequest(f"--days {args.days} is fewer than the {len(grid)} slopes to try once each")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    demand = _demand(args)
    setup = bandit.MarketSetup(cfg.metric(), cfg.schedule(), cfg["discount.min_b"], args.zeta, args.matcher)
    day_rows, arm_rows, summary = [], [], []
    for i in range(args.seeds):
        seed = args.seed + i
        rep = bandit.run_learning(
            args.days, grid, _day_source(args, cfg, seed), demand, setup, seed, normalize=args.normalize
        )
        day_rows += [{"seed": seed, **r} for r in rep.day_rows()]
        arm_rows += [{"seed": seed, **r} for r in rep.arm_rows()]
        avg = float(rep.cumavg()[-1])
        summary.append(
            {
                "seed": seed,
                "bdf_theta_deg": grid[rep.bdf_arm],
                "best_arm_share": rep.best_arm_share(),
                "avg_profit": avg,
                "bdf_mean": rep.bdf_mean,
                "gap_fraction": (rep.bdf_mean - avg) / abs(rep.bdf_mean) if rep.bdf_mean else 0.0,
            }
        )
    extra = {"command": "learn", "days": args.days, "theta_grid": args.theta_grid, "seeds": args.seeds,
             "seed": args.seed, "normalize": args.normalize, "matcher": args.matcher, "zeta": args.zeta,
             "demand": repr(demand)}
    comment = cfg.comment(extra)
    write_csv(args.out / "learn_days.csv", comment, DAY_COLUMNS, day_rows)
    write_csv(args.out / "learn_arms.csv", comment, ARM_COLUMNS, arm_rows)
    write_csv(args.out / "learn_summary.csv", comment, LEARN_SUMMARY_COLUMNS, summary)

    print(f"{'seed':>6}{'BDF theta':>11}{'best share':>12}{'avg $':>10}{'BDF $':>10}{'gap':>8}")
    for s in summary:
        print(f"{s['seed']:>6}{s['bdf_theta_deg']:>11g}{s['best_arm_share']:>12.3f}{_money(s['avg_profit']):>10}"
              f"{_money(s['bdf_mean']):>10}{s['gap_fraction']:>8.2%}")
    return EXIT_OK


SIR_LONG_COLUMNS = ("instance_id", "realization", "c_in", "gamma", "market_share", "matched_pairs", "profit",
                    "baseline_profit")
SIR_SUMMARY_COLUMNS = ("c_in", "gamma", "profit", "baseline_profit", "matched_pairs", "market_share",
                       "opted_share", "share_increase", "profit_increase")
SIR_FIXED_COLUMNS = ("instance_id", "gamma", "feasible_edges", "matched_pairs", "profit")


def sir_instances(args) -> list:
    if args.trips:
        out = []
        for path in args.trips:
            trips = load_trips(path).trips
            if len(trips) < 1:
                raise DataError(f"{path}: no trips")
            out.append(trips)
        return out
    if args.batches < 1:
        raise UsageError("--batches must be >= 1")
    return sirsim.synthetic_batches(args.batches, args.mean_users, args.seed)


def cmd_sir(args, cfg: RunConfig) -> int:
    gammas, cins = parse_grid(args.gamma), parse_grid(args.cin)
    if any(g < 0 for g in gammas) or any(c < 0 for c in cins):
        raise UsageError("gamma and c_in values must be >= 0")
    try:
        config = sirsim.SirConfig(
            realizations=args.realizations,
            base_share=args.base_share,
            outside_factor=args.outside_factor,
            kappa=args.kappa,
            baseline_sir0=args.baseline_sir0,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    instances = sir_instances(args)
    policy, schedule, metric = cfg.policy(), cfg.schedule(), cfg.metric()
    rep = sirsim.run_sir_experiment(instances, gammas, cins, config, schedule, policy, args.seed, metric)

    fixed = []
    for inst_id, trips in enumerate(instances):
        inst = sirsim.prepare_instance(inst_id, trips, metric, schedule, policy, config, args.seed)
        _, opted = inst.flags()
        fixed += [{"instance_id": inst_id, **r} for r in sirsim.fixed_set_sweep(inst, opted, gammas)]

    extra = {"command": "sir", "gamma": args.gamma, "cin": args.cin, "realizations": args.realizations,
             "instances": len(instances), "seed": args.seed, "base_share": args.base_share,
             "outside_factor": args.outside_factor, "kappa": args.kappa, "baseline_sir0": args.baseline_sir0}
    comment = cfg.comment(extra)
    write_csv(args.out / "sir_long.csv", comment, SIR_LONG_COLUMNS, rep.rows)
    write_csv(args.out / "sir_summary.csv", comment, SIR_SUMMARY_COLUMNS, rep.summary)
    write_csv(args.out / "sir_tradeoff.csv", comment, ("gamma", "profit_lower_bound", "min_share_increase"),
              rep.min_share_rows())
    write_csv(args.out / "sir_envelope.csv", comment, ("share_increase", "max_profit_increase"), rep.envelope)
    write_csv(args.out / "sir_fixed_set.csv", comment, SIR_FIXED_COLUMNS, fixed)

    print(f"baseline profit {_money(rep.baseline_profit)}  in-market share {rep.base_share:.3f}")
    print(f"{'c_in':>6}{'gamma':>7}{'profit $':>11}{'pairs':>8}{'share':>8}")
    for s in rep.summary:
        print(f"{s['c_in']:>6g}{s['gamma']:>7g}{_money(s['profit']):>11}{s['matched_pairs']:>8.1f}"
              f"{s['market_share']:>8.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    # globals are accepted before or after the subcommand; SUPPRESS keeps the
    # subparser from clobbering a value given up front
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory (default ./out)")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override one config key; beats the config file")

    p = _Parser(prog="rideprofit", description=__doc__.splitlines()[0])
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--set", action="append", default=None, metavar="KEY=VALUE")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic trips CSV")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--box", help="south,west,north,east in degrees (default midtown Manhattan)")
    g.add_argument("--horizon", type=float, default=60.0, help="request window in minutes")
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("match", parents=[common], help="match one batch of riders")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--trips", help="trip CSV (NYC 2013 schema)")
    src.add_argument("--synth", type=int, help="generate this many synthetic riders")
    m.add_argument("--method", default="greedy-max", choices=list(matching.METHODS) + ["all"])
    m.add_argument("--zeta", type=int, default=3, help="cab capacity")
    m.set_defaults(func=cmd_match)

    ln = sub.add_parser("learn", parents=[common], help="learn the discount slope with UCB1")
    ln.add_argument("--days", type=int, default=200)
    ln.add_argument("--theta-grid", default=",".join(f"{t:g}" for t in bandit.DEFAULT_THETA_GRID))
    ln.add_argument("--seeds", type=int, default=1, help="independent replications, seeds seed..seed+k-1")
    ln.add_argument("--n-per-day", type=int, default=40)
    ln.add_argument("--day-files", nargs="+", help="one trip CSV per day instead of synthetic days")
    ln.add_argument("--demand-p0", type=float, default=0.2)
    ln.add_argument("--demand-p1", type=float, default=0.95)
    ln.add_argument("--demand-table", help="piecewise-linear curve theta:prob,theta:prob,...")
    ln.add_argument("--normalize", action="store_true", help="scale profits by the initial-round peak")
    ln.add_argument("--matcher", default="greedy-max", choices=["greedy-max", "greedy-dist", "greedy-profit"])
    ln.add_argument("--zeta", type=int, default=3)
    ln.set_defaults(func=cmd_learn)

    s = sub.add_parser("sir", parents=[common], help="SIR-gamma profit / market-share sweep")
    s.add_argument("--gamma", default="0:0.9:0.1")
    s.add_argument("--cin", default="100:1000:100")
    s.add_argument("--realizations", type=int, default=30)
    s.add_argument("--trips", nargs="+", help="one trip CSV per instance instead of synthetic batches")
    s.add_argument("--batches", type=int, default=60)
    s.add_argument("--mean-users", type=float, default=210.0)
    s.add_argument("--base-share", type=float, default=0.6)
    s.add_argument("--outside-factor", type=float, default=0.5)
    s.add_argument("--kappa", type=float, default=0.5)
    s.add_argument("--baseline-sir0", action="store_true", help="apply the gamma=0 rule to the baseline too")
    s.set_defaults(func=cmd_sir)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        file_values = read_config_file(args.config) if args.config else {}
        cfg = RunConfig.resolve(file_values, parse_overrides(args.set))
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleRequest as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
