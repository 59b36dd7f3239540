"""Randomized tuning with batch-wise scenario certification.

Each candidate is a shaping vector.  Phase 1 runs a dichotomic search on the
first scenario batch to freeze the largest real-time-feasible dial value
alpha_hat (or reject the candidate).  Phase 2 replays the surviving settings
on the remaining batches and eliminates a candidate the first time any
certification criterion fails.  Closed-loop costs accumulate across batches
and rank the survivors.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .controller import ClosedLoopReport, MpcSetting, TimingSpec, simulate_closed_loop
from .design import DesignBounds, DesignVector, ShapingVector, realize
from .problems import ProblemDefinition, Scenario, ScenarioBatchSet

# record status values
SURVIVING = "surviving"
INFEASIBLE_AT_A0 = "infeasible_at_A0"
ELIMINATED = "eliminated"

# criterion / failure labels
RT = "rt"
CONTRACTION = "contraction"
CONSTRAINTS = "constraints"
RT_AT_ZERO = "rt_at_zero"


@dataclass(frozen=True)
class CertificationParams:
    """Thresholds of the certification tests and the dial-search precision."""

    gamma: float = 0.98
    eps: float = 0.15
    dev_acc: float = 1.0
    c_max: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps!r}")
        if self.dev_acc <= 0.0:
            raise ValueError(f"dev_acc must be positive, got {self.dev_acc!r}")
        if self.c_max < 0.0:
            raise ValueError(f"c_max must be nonnegative, got {self.c_max!r}")


# certification criteria -----------------------------------------------------


def rt_excess(report: ClosedLoopReport, tau_u: float, dev_acc: float) -> float:
    """Worst relative overshoot of solver time past the real-time budget
    dev_acc * tau_u, clipped at zero.  +inf for diverged reports."""
    if report.diverged:
        return math.inf
    budget = dev_acc * tau_u
    return float(np.max(np.maximum(0.0, report.solver_times / budget - 1.0)))

def contraction_excess(report: ClosedLoopReport, gamma: float) -> float:
    """Violation of the end-of-horizon decrease J_ol(m) <= gamma * J_ol(1)."""
    if report.diverged:
        return math.inf
    return max(0.0, float(report.open_loop_costs[-1] - gamma * report.open_loop_costs[0]))


def constraint_excess(report: ClosedLoopReport) -> float:
    """Worst fine-grid constraint violation over the whole simulation."""
    if report.diverged:
        return math.inf
    return max(0.0, float(np.max(report.max_violations)))


@dataclass
class SetEvaluation:
    """Max-aggregated criteria and summed cost of one setting over a scenario set."""

    rt: float
    contraction: float
    constraint: float
    cost_sum: float
    n_solves: int = 0
    n_scenarios: int = 0
    reports: list[ClosedLoopReport] | None = None

    def passes(self, params: CertificationParams) -> bool:
        return self.rt <= 0.0 and self.contraction <= 0.0 and self.constraint <= params.c_max

    def failed_criterion(self, params: CertificationParams) -> str | None:
        """First failed criterion in precedence order, or None."""
        if self.rt > 0.0:
            return RT
        if self.contraction > 0.0:
            return CONTRACTION
        if self.constraint > params.c_max:
            return CONSTRAINTS
        return None


Evaluator = Callable[[float], SetEvaluation]


def evaluate_on_set(
    problem: ProblemDefinition,
    shaping: ShapingVector,
    alpha: float,
    scenarios: Sequence[Scenario],
    bounds: DesignBounds,
    params: CertificationParams,
    timing: TimingSpec,
    keep_reports: bool = False,
    stop_on_rt: bool = False,
) -> SetEvaluation:
    """Simulate the realized setting on every scenario and aggregate.

    With stop_on_rt the walk stops at the first scenario breaking the
    real-time budget: rt has the highest failure precedence, so the verdict
    cannot change and the remaining simulations would be discarded anyway.
    """
    design = realize(shaping, alpha, bounds)
    setting = MpcSetting.from_design(problem, design)
    rt = contraction = constraint = 0.0
    cost_sum = 0.0
    n_solves = 0
    n_scenarios = 0
    reports: list[ClosedLoopReport] | None = [] if keep_reports else None
    for scenario in scenarios:
        report = simulate_closed_loop(setting, scenario, timing)
        rt = max(rt, rt_excess(report, setting.grid.tau_u, params.dev_acc))
        contraction = max(contraction, contraction_excess(report, params.gamma))
        constraint = max(constraint, constraint_excess(report))
        cost_sum += report.closed_loop_cost
        n_solves += report.n_solves
        n_scenarios += 1
        if reports is not None:
            reports.append(report)
        if stop_on_rt and rt > 0.0:
            break
    return SetEvaluation(rt, contraction, constraint, cost_sum, n_solves, n_scenarios, reports)


# dichotomic dial search ------------------------------------------------------


@dataclass
class AlphaSearch:
    """Outcome of the dichotomic search on one scenario set.

    alpha_hat is None when the candidate is rejected; failure then names the
    reason.  The certificate fields retain the bracketing evaluations: the
    kept dial value is real-time feasible, and unless alpha_hat = 1 the upper
    endpoint is real-time infeasible.
    """

    alpha_hat: float | None
    failure: str | None
    cost_sum: float
    n_evaluations: int
    evaluations: list[tuple[float, SetEvaluation]]
    upper_bound: float | None = None
    lower_eval: SetEvaluation | None = None
    upper_eval: SetEvaluation | None = None

    @property
    def n_solves(self) -> int:
        return sum(ev.n_solves for _, ev in self.evaluations)

    @property
    def n_scenarios(self) -> int:
        """Distinct scenarios touched; every evaluation walks the same batch
        from the start, so the longest walk covers all the others."""
        return max((ev.n_scenarios for _, ev in self.evaluations), default=0)


def find_alpha_max(evaluate: Evaluator, params: CertificationParams) -> AlphaSearch:
    """Largest dial value passing the real-time test, certified on one set.

    Step 1 checks alpha = 0 for real-time feasibility only (reject with
    failure 'rt_at_zero' otherwise).  Step 2 accepts alpha = 1 outright when
    every criterion passes there.  Otherwise the real-time boundary is
    bisected to precision eps, and step 3 re-checks the contraction and
    constraint criteria at the kept value, rejecting on failure.  Total
    evaluations: at most 2 + ceil(log2(1/eps)).
    """
    evaluations: list[tuple[float, SetEvaluation]] = []

    ev0 = evaluate(0.0)
    evaluations.append((0.0, ev0))
    if ev0.rt > 0.0:
        return AlphaSearch(None, RT_AT_ZERO, ev0.cost_sum, 1, evaluations)

    ev1 = evaluate(1.0)
    evaluations.append((1.0, ev1))
    if ev1.passes(params):
        return AlphaSearch(1.0, None, ev1.cost_sum, 2, evaluations, None, ev1, None)

    if ev1.rt <= 0.0:
        # real-time holds on the whole dial range, so alpha_hat = 1; the
        # failure at alpha = 1 is a step-3 rejection by another criterion
        return AlphaSearch(None, ev1.failed_criterion(params), ev1.cost_sum, 2, evaluations, None, ev1, None)

    lo, lo_ev = 0.0, ev0
    hi, hi_ev = 1.0, ev1
    while hi - lo > params.eps:
        mid = 0.5 * (lo + hi)
        ev = evaluate(mid)
        evaluations.append((mid, ev))
        if ev.rt <= 0.0:
            lo, lo_ev = mid, ev
        else:
            hi, hi_ev = mid, ev

    failure = lo_ev.failed_criterion(params)
    if failure is not None and failure != RT:
        return AlphaSearch(None, failure, lo_ev.cost_sum, len(evaluations), evaluations, hi, lo_ev, hi_ev)
    return AlphaSearch(lo, None, lo_ev.cost_sum, len(evaluations), evaluations, hi, lo_ev, hi_ev)


# two-phase tuning ------------------------------------------------------------


@dataclass
class CandidateRecord:
    """Bookkeeping of one shaping-vector candidate through the run.

    scenarios_evaluated counts distinct scenarios: the first batch counts
    once no matter how many dial values the search tried on it, so a
    survivor ends at exactly nb * nsb.  cumulative_cost sums the kept
    first-batch cost and every passed batch; a failed batch adds nothing.
    """

    index: int
    shaping: ShapingVector
    status: str = SURVIVING
    alpha_hat: float | None = None
    design: DesignVector | None = None
    cumulative_cost: float | None = None
    scenarios_evaluated: int = 0
    alpha_evaluations: int = 0
    eliminated_batch: int | None = None
    eliminated_criterion: str | None = None


@dataclass
class TuningResult:
    records: list[CandidateRecord]
    survivors: list[int]
    best_index: int | None
    elimination_trace: list[int]
    ocp_solve_count: int
    step3_rejections: int
    nb: int
    nsb: int

    def best_record(self) -> CandidateRecord | None:
        return None if self.best_index is None else self.records[self.best_index]


CandidateEvaluator = Callable[[ShapingVector, float, Sequence[Scenario]], SetEvaluation]
ReportSink = Callable[[dict, ClosedLoopReport], None]


def _phase1_task(args) -> AlphaSearch:
    problem, shaping, scenarios, bounds, params, timing, keep_reports = args
    return find_alpha_max(
        lambda alpha: evaluate_on_set(
            problem, shaping, alpha, scenarios, bounds, params, timing, keep_reports, stop_on_rt=True
        ),
        params,
    )


def _phase2_task(args) -> SetEvaluation:
    problem, shaping, alpha, scenarios, bounds, params, timing, keep_reports = args
    return evaluate_on_set(
        problem, shaping, alpha, scenarios, bounds, params, timing, keep_reports, stop_on_rt=True
    )


def _map_ordered(task, items, pool):
    if pool is None:
        return [task(item) for item in items]
    return list(pool.map(task, items))


def tune(
    problem: ProblemDefinition,
    shapings: Sequence[ShapingVector],
    batch_set: ScenarioBatchSet,
    bounds: DesignBounds,
    params: CertificationParams,
    timing: TimingSpec,
    jobs: int = 1,
    evaluate: CandidateEvaluator | None = None,
    report_sink: ReportSink | None = None,
    progress: Callable[[str], None] | None = None,
) -> TuningResult:
    """Run the two-phase tuning loop over all candidates.

    Results are byte-reproducible for any worker count: scenario order, cost
    summation order, and elimination order are fixed by candidate and batch
    indices, never by completion time.  A custom evaluate callable (used by
    tests and by non-picklable problems) forces inline execution.
    """
    records = [CandidateRecord(index=j, shaping=s) for j, s in enumerate(shapings)]
    nb, nsb = batch_set.nb, batch_set.nsb
    keep_reports = report_sink is not None
    solve_count = 0
    step3_rejections = 0
    say = progress if progress is not None else (lambda _msg: None)

    pool = None
    if evaluate is None and jobs > 1 and len(records) > 1:
        pool = ProcessPoolExecutor(max_workers=jobs)
    try:
        # phase 1: freeze alpha_hat on the first batch
        batch0 = batch_set.batches[0]
        if evaluate is None:
            items = [(problem, r.shaping, batch0, bounds, params, timing, keep_reports) for r in records]
            outcomes = _map_ordered(_phase1_task, items, pool)
        else:
            outcomes = [
                find_alpha_max(lambda a, s=r.shaping: evaluate(s, a, batch0), params) for r in records
            ]

        for record, outcome in zip(records, outcomes):
            record.alpha_evaluations = outcome.n_evaluations
            record.scenarios_evaluated = outcome.n_scenarios
            solve_count += outcome.n_solves
            _drain_reports(report_sink, outcome, record.index)
            if outcome.alpha_hat is None:
                record.status = INFEASIBLE_AT_A0
                record.eliminated_batch = 1
                record.eliminated_criterion = outcome.failure
                if outcome.failure in (CONTRACTION, CONSTRAINTS):
                    step3_rejections += 1
            else:
                record.alpha_hat = outcome.alpha_hat
                record.design = realize(record.shaping, outcome.alpha_hat, bounds)
                record.cumulative_cost = outcome.cost_sum
        say(f"batch 1: {sum(r.status == SURVIVING for r in records)}/{len(records)} candidates feasible")

        # phase 2: eliminate on the remaining batches at frozen alpha_hat
        trace: list[int] = []
        eliminated = 0
        for ell in range(1, nb):
            alive = [r for r in records if r.status == SURVIVING]
            batch = batch_set.batches[ell]
            if alive:
                if evaluate is None:
                    items = [
                        (problem, r.shaping, r.alpha_hat, batch, bounds, params, timing, keep_reports)
                        for r in alive
                    ]
                    evals = _map_ordered(_phase2_task, items, pool)
                else:
                    evals = [evaluate(r.shaping, r.alpha_hat, batch) for r in alive]
            else:
                evals = []

            for record, ev in zip(alive, evals):
                record.scenarios_evaluated += ev.n_scenarios
                solve_count += ev.n_solves
                if report_sink is not None and ev.reports:
                    for i, rep in enumerate(ev.reports):
                        report_sink({"phase": 2, "candidate": record.index, "batch": ell + 1, "scenario": i}, rep)
                failed = ev.failed_criterion(params)
                if failed is None:
                    record.cumulative_cost += ev.cost_sum
                else:
                    record.status = ELIMINATED
                    record.eliminated_batch = ell + 1
                    record.eliminated_criterion = failed
                    eliminated += 1
            trace.append(eliminated)
            say(f"batch {ell + 1}: {eliminated} eliminated so far, {sum(r.status == SURVIVING for r in records)} alive")
    finally:
        if pool is not None:
            pool.shutdown()

    survivors = sorted(
        (r.index for r in records if r.status == SURVIVING),
        key=lambda j: (records[j].cumulative_cost, j),
    )
    best = survivors[0] if survivors else None
    return TuningResult(
        records=records,
        survivors=survivors,
        best_index=best,
        elimination_trace=trace,
        ocp_solve_count=solve_count,
        step3_rejections=step3_rejections,
        nb=nb,
        nsb=nsb,
    )


def _drain_reports(report_sink: ReportSink | None, outcome: AlphaSearch, candidate: int) -> None:
    if report_sink is None:
        return
    for alpha, ev in outcome.evaluations:
        if ev.reports:
            for i, rep in enumerate(ev.reports):
                report_sink({"phase": 1, "candidate": candidate, "alpha": alpha, "scenario": i}, rep)


# scenario-count certificate ---------------------------------------------------

# ln(10) truncated to four decimals; the standard sizing tables for this
# bound were computed with this convention, and we reproduce them exactly
_LN10 = 2.3025


def required_scenarios(eta: float, delta: float, n_trials: int, allowed_failures: int = 1) -> int:
    """Number of certification scenarios guaranteeing, with confidence
    1 - delta, that each of n_trials candidates violates its criteria with
    probability below eta, allowing a fixed budget of observed failures.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta!r}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials!r}")
    if allowed_failures < 0:
        raise ValueError(f"allowed_failures must be >= 0, got {allowed_failures!r}")
    log_term = _LN10 * math.log10(n_trials / delta)
    base = log_term + allowed_failures + 2.0 * math.sqrt(allowed_failures * log_term)
    return math.ceil(base / eta)
