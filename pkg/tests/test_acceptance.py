"""Acceptance checks, one test per criterion.

Each check prints ``PASS criterion N: ...`` or ``FAIL criterion N: ...`` and
writes its deterministic numbers to CSV; criterion 11 reruns 1-10 from scratch
and compares those files byte for byte.

Run standalone with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import csv
import statistics
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from rideprofit import bandit, sirsim
from rideprofit.matching import (
    brute_force_partitions,
    exact_partition_dp,
    greedy_max_profit,
    greedy_order,
    make_context,
    pairwise_blossom,
)
from rideprofit.pricing import CostSchedule, DiscountPolicy
from rideprofit.trips import haversine_metric, synth_generate

SIR_REALIZATIONS = 10  # per (c_in, instance); keeps the full default grid near 20 s


@dataclass
class Outcome:
    number: int
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.detail}"


def dump(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


class Criteria:
    """The ten measurable criteria; shared simulations are computed once per instance."""

    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self._learning = None
        self._sir = None

    def c1(self) -> Outcome:
        t0 = time.perf_counter()
        rows, worst = [], 0.0
        for seed in range(50):
            ctx = make_context(synth_generate(8, seed=1000 + seed))
            e, b = exact_partition_dp(ctx, 3).total_profit, brute_force_partitions(ctx, 3).total_profit
            worst = max(worst, abs(e - b))
            rows.append((seed, 8, e, b))
        elapsed = time.perf_counter() - t0
        dump(self.out / "c1_exact_vs_brute.csv", ("seed", "n", "exact", "brute"), rows)
        ok = worst <= 1e-9 and elapsed < 10
        return Outcome(1, ok, f"50 instances n=8 zeta=3, max |exact-brute| = {worst:.2e} $, {elapsed:.1f} s (< 10 s)")

    def c2(self) -> Outcome:
        t0 = time.perf_counter()
        rows, worst = [], 0.0
        for seed in range(50):
            ctx = make_context(synth_generate(10, seed=2000 + seed))
            b, e = pairwise_blossom(ctx).total_profit, exact_partition_dp(ctx, 2).total_profit
            worst = max(worst, abs(e - b))
            rows.append((seed, 10, b, e))
        elapsed = time.perf_counter() - t0
        dump(self.out / "c2_blossom_vs_exact.csv", ("seed", "n", "blossom", "exact"), rows)
        ok = worst <= 1e-9 and elapsed < 10
        return Outcome(2, ok, f"50 instances n=10 zeta=2, max |blossom-exact| = {worst:.2e} $, {elapsed:.1f} s (< 10 s)")

    def c3(self) -> Outcome:
        t0 = time.perf_counter()
        rows, ratios, above = [], [], 0
        for seed in range(30):
            ctx = make_context(synth_generate(15, seed=3000 + seed))
            g, e = greedy_max_profit(ctx, 3).total_profit, exact_partition_dp(ctx, 3).total_profit
            ratios.append(g / e)
            above += g > e + 1e-9
            rows.append((seed, g, e, g / e))
        elapsed = time.perf_counter() - t0
        dump(self.out / "c3_greedy_ratio.csv", ("seed", "greedy_max", "exact", "ratio"), rows)
        mean = float(np.mean(ratios))
        ok = mean >= 0.80 and above == 0 and elapsed < 60
        return Outcome(3, ok, f"mean greedy/exact = {mean:.4f} (>= 0.80), greedy > exact on {above}/30, "
                              f"min ratio {min(ratios):.4f}, {elapsed:.1f} s (< 60 s)")

    def c4(self) -> Outcome:
        exact_partition_dp(make_context(synth_generate(6, seed=1)), 3)  # compile before timing
        greedy_max_profit(synth_generate(6, seed=1), 3)
        g_times, e_times, rows = [], [], []
        for i in range(10):
            trips = synth_generate(20, seed=4000 + i)
            t0 = time.perf_counter()
            g = greedy_max_profit(trips, 3)
            t1 = time.perf_counter()
            e = exact_partition_dp(trips, 3)
            t2 = time.perf_counter()
            g_times.append(t1 - t0)
            e_times.append(t2 - t1)
            rows.append((i, g.total_profit, e.total_profit))
        big = synth_generate(300, seed=4100)
        t0 = time.perf_counter()
        res = greedy_max_profit(big, 3)
        big_time = time.perf_counter() - t0
        rows.append(("n300", res.total_profit, ""))
        dump(self.out / "c4_speed_profits.csv", ("instance", "greedy_max", "exact"), rows)
        g_med, e_med = statistics.median(g_times), statistics.median(e_times)
        ok = g_med <= e_med / 50 and big_time < 1.0
        return Outcome(4, ok, f"n=20 median greedy {g_med * 1e3:.2f} ms vs exact {e_med * 1e3:.1f} ms "
                              f"(speedup {e_med / g_med:.0f}x, need >= 50x); n=300 greedy {big_time:.3f} s (< 1 s)")

    def c5(self) -> Outcome:
        rows = []
        for seed in range(30):
            ctx = make_context(synth_generate(100, seed=5000 + seed))
            rows.append((
                seed,
                greedy_max_profit(ctx, 3).total_profit,
                greedy_order(ctx, 3, "distance_desc").total_profit,
                greedy_order(ctx, 3, "profit_asc").total_profit,
            ))
        dump(self.out / "c5_heuristics.csv", ("seed", "greedy_max", "greedy_dist", "greedy_profit"), rows)
        gm, gd, gp = (float(np.mean([r[i] for r in rows])) for i in (1, 2, 3))
        ok = gm >= gd and gm >= gp
        return Outcome(5, ok, f"mean profit greedy-max {gm:.2f} $, greedy-dist {gd:.2f} $, greedy-profit {gp:.2f} $")

    def learning(self):
        if self._learning is None:
            t0 = time.perf_counter()
            reps = [bandit.run_learning(200, seed=s) for s in range(20)]
            self._learning = reps, time.perf_counter() - t0
        return self._learning

    def c6(self) -> Outcome:
        reps, elapsed = self.learning()
        shares = [r.best_arm_share() for r in reps]
        bdf = float(np.mean([r.bdf_mean for r in reps]))
        avg = float(np.mean([r.cumavg()[-1] for r in reps]))
        gap = (bdf - avg) / abs(bdf)
        dump(self.out / "c6_bandit.csv", ("seed", "bdf_theta_deg", "best_arm_share", "avg_profit", "bdf_mean"),
             [(s, r.thetas[r.bdf_arm], r.best_arm_share(), float(r.cumavg()[-1]), r.bdf_mean)
              for s, r in enumerate(reps)])
        share = float(np.mean(shares))
        ok = share >= 0.80 and gap <= 0.10 and elapsed < 300
        return Outcome(6, ok, f"best-arm pull share {share:.3f} (need >= 0.80), day-200 gap {gap:.2%} of BDF "
                              f"(need <= 10%), {elapsed:.0f} s (< 300 s)")

    def c7(self) -> Outcome:
        reps, _ = self.learning()
        curve = np.mean([r.regret() for r in reps], axis=0)  # cumulative regret / t, seed-averaged
        dump(self.out / "c7_regret.csv", ("day", "mean_regret_per_day"), [(d + 1, float(v)) for d, v in enumerate(curve)])
        ratio = curve[199] / curve[24]
        return Outcome(7, bool(ratio <= 0.6), f"regret/t at day 200 = {curve[199]:.3f}, at day 25 = {curve[24]:.3f}, "
                                              f"ratio {ratio:.3f} (need <= 0.6)")

    def c8(self) -> Outcome:
        gammas = sirsim.DEFAULT_GAMMA_GRID
        cins = sirsim.DEFAULT_CIN_GRID
        policy = DiscountPolicy(40.0, 0.0, 0.10)
        config = sirsim.SirConfig()
        violations, checks, rows = 0, 0, []
        for seed in range(10):
            trips = sirsim.synthetic_batches(1, 210, seed=seed)[0]
            inst = sirsim.prepare_instance(0, trips, haversine_metric(), CostSchedule(), policy,
                                           config, seed)
            in_market, base = inst.flags()
            u_max = sirsim.response_variates(seed, 0, len(cins) - 1, 0, inst.n)
            _, widest = sirsim.final_opt_ins(inst, policy, gammas[-1], cins[-1], config.outside_factor, u_max)
            for label, opted in (("baseline", base), ("widest", widest), ("everyone", np.ones(inst.n, dtype=bool))):
                sweep = sirsim.fixed_set_sweep(inst, opted, gammas)
                edges = [r["feasible_edges"] for r in sweep]
                pairs = [r["matched_pairs"] for r in sweep]
                violations += sum(a < b for a, b in zip(edges, edges[1:]))
                violations += sum(a < b for a, b in zip(pairs, pairs[1:]))
                checks += 2 * (len(gammas) - 1)
                rows += [(seed, label, r["gamma"], r["feasible_edges"], r["matched_pairs"]) for r in sweep]
            for ci, c_in in enumerate(cins):
                for rz in range(3):
                    u = sirsim.response_variates(seed, 0, ci, rz, inst.n)
                    prev = None
                    for g in gammas:
                        _, opted = sirsim.final_opt_ins(inst, policy, g, c_in, config.outside_factor, u)
                        if prev is not None:
                            violations += int(np.any(prev & ~opted))
                            checks += 1
                        prev = opted
        dump(self.out / "c8_fixed_sets.csv", ("seed", "opted_set", "gamma", "feasible_edges", "matched_pairs"), rows)
        return Outcome(8, violations == 0, f"{violations} violations in {checks} adjacent-gamma comparisons "
                                           f"(edge counts, matched pairs, opted sets; 10 seeds)")

    def sir_report(self):
        if self._sir is None:
            self._sir = sirsim.run_sir_experiment(
                sirsim.synthetic_batches(60, 210.0, seed=0),
                sirsim.DEFAULT_GAMMA_GRID,
                sirsim.DEFAULT_CIN_GRID,
                sirsim.SirConfig(realizations=SIR_REALIZATIONS),
                seed=0,
            )
        return self._sir

    def c9(self) -> Outcome:
        rep = self.sir_report()
        cols = ("c_in", "gamma", "profit", "baseline_profit", "matched_pairs", "market_share", "share_increase")
        dump(self.out / "c9_sir_summary.csv", cols, [tuple(s[c] for c in cols) for s in rep.summary])
        cells = [s for s in rep.summary if s["c_in"] >= 500]
        winners = [s for s in cells if s["profit"] > rep.baseline_profit]
        best = max(cells, key=lambda s: s["profit"])
        return Outcome(9, bool(winners), f"{len(winners)}/{len(cells)} cells with c_in >= 500 beat baseline "
                                         f"{rep.baseline_profit:.2f} $; best c_in={best['c_in']:g} "
                                         f"gamma={best['gamma']:g} at {best['profit']:.2f} $")

    def c10(self) -> Outcome:
        rep = self.sir_report()
        dump(self.out / "c10_tradeoff.csv", ("gamma", "profit_lower_bound", "min_share_increase"),
             [(r["gamma"], r["profit_lower_bound"], r["min_share_increase"]) for r in rep.min_share_rows()])
        bad = []
        for g in rep.gamma_grid:
            vals = [rep.min_share_increase[(g, lb)] for lb in sirsim.PROFIT_LOWER_BOUNDS]
            if any(a > b for a, b in zip(vals, vals[1:])):
                bad.append(g)
        reachable = sum(np.isfinite(v) for v in rep.min_share_increase.values())
        return Outcome(10, not bad, f"non-decreasing in the profit bound for {len(rep.gamma_grid) - len(bad)}/"
                                    f"{len(rep.gamma_grid)} gammas ({reachable} reachable (gamma, bound) cells)")

    def run(self, number: int) -> Outcome:
        return getattr(self, f"c{number}")()


def compare_reruns(first_dir: Path, numbers=range(1, 11)) -> Outcome:
    with tempfile.TemporaryDirectory() as tmp:
        again = Criteria(Path(tmp))
        for n in numbers:
            again.run(n)
        names = sorted(p.name for p in first_dir.glob("c*.csv"))
        differing = [n for n in names if (first_dir / n).read_bytes() != (Path(tmp) / n).read_bytes()]
        missing = sorted({p.name for p in Path(tmp).glob("c*.csv")} - set(names))
    ok = not differing and not missing and len(names) > 0
    detail = f"{len(names) - len(differing)}/{len(names)} CSV files byte-identical on rerun"
    if differing or missing:
        detail += f"; differing {differing + missing}"
    return Outcome(11, ok, detail)


# ---------------------------------------------------------------------------
# pytest wiring


@pytest.fixture(scope="module")
def criteria(tmp_path_factory):
    return Criteria(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture(scope="module")
def done():
    return set()


@pytest.fixture
def announce(request):
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(outcome: Outcome):
        line = outcome.line()
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        assert outcome.passed, line

    return emit


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number, criteria, done, announce):
    outcome = criteria.run(number)
    done.add(number)
    announce(outcome)


@pytest.mark.slow
def test_criterion_11_determinism(criteria, done, announce):
    for n in range(1, 11):
        if n not in done:
            criteria.run(n)
            done.add(n)
    announce(compare_reruns(criteria.out))


def main() -> int:
    failed = 0
    with tempfile.TemporaryDirectory() as tmp:
        crit = Criteria(Path(tmp))
        for n in range(1, 11):
            outcome = crit.run(n)
            failed += not outcome.passed
            print(outcome.line(), flush=True)
        outcome = compare_reruns(crit.out)
        failed += not outcome.passed
        print(outcome.line(), flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
