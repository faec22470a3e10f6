"""Ensemble policy over a learned collection of active sets, and its out-of-sample evaluation."""
from __future__ import annotations

import csv
import enum
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyCollection, NumericalBreakdown, SampleInfeasible
from .lp_core import FEAS_TOL, Status, check_feasibility, solve_lp
from .parametric import (
    ActiveSetKey,
    ParametricProgram,
    ReductionMode,
    instantiate,
    reduced_instance,
    solve_for_sample,
)
from .sampling import draw

# evaluation draws live far away from the training indices
EVAL_INDEX_OFFSET = 1 << 40
OBJ_TOL = 1e-8
# candidates feasible to rounding beat candidates that only pass at FEAS_TOL
STRICT_TOL = 1e-9


class Outcome(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE_PREDICTION = "InfeasiblePrediction"


@dataclass(frozen=True, eq=False)
class PolicyOutcome:
    status: Outcome
    chosen_key: Optional[ActiveSetKey] = None
    point: Optional[np.ndarray] = None
    objective: Optional[float] = None
    candidates_tried: int = 0


def objectives_match(a: float, b: float, tol: float = OBJ_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def ensemble_predict(collection, program: ParametricProgram, sample,
                     mode: ReductionMode = ReductionMode.AS_EQUALITIES) -> PolicyOutcome:
    """Solve the reduced problem for every key and keep the best candidate that is feasible for the full problem.

    Candidates that satisfy the full problem to rounding (STRICT_TOL) take
    precedence over those that only pass at FEAS_TOL; otherwise a point that
    leans a tolerance's width past a nearly binding limit could undercut the
    true optimum. Within a tier the minimum objective wins, ties going to the
    first key in canonical order.
    """
    keys = sorted(collection)
    if not keys:
        raise EmptyCollection("the active-set collection is empty")
    full = instantiate(program, sample)
    best = None
    for key in keys:
        try:
            sol = solve_lp(reduced_instance(program, sample, key, mode))
        except NumericalBreakdown:
            continue
        if sol.status is not Status.OPTIMAL:
            continue
        rep = check_feasibility(full, sol.point, FEAS_TOL)
        if not rep.feasible:
            continue
        rank = (rep.worst_violation > STRICT_TOL, full.objective(sol.point))
        if best is None or rank < best[0]:
            best = (rank, key, sol.point)
    if best is None:
        return PolicyOutcome(Outcome.INFEASIBLE_PREDICTION, candidates_tried=len(keys))
    return PolicyOutcome(Outcome.OPTIMAL, best[1], best[2], best[0][1], len(keys))


@dataclass
class EvalReport:
    n_test: int
    success_probability: float
    failure_count: int
    excluded_infeasible: int = 0
    false_optima: int = 0
    failures_with_known_key: int = 0
    gap_max: float = 0.0
    gap_mean: float = 0.0
    key_hits: dict = field(default_factory=dict)
    eval_seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self, case: str = "") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "n_test", "P(p*)", "failures", "excluded_infeasible", "false_optima",
                    "gap_max", "gap_mean"])
        w.writerow([case, self.n_test, f"{self.success_probability:.4f}", self.failure_count,
                    self.excluded_infeasible, self.false_optima, f"{self.gap_max:.3e}",
                    f"{self.gap_mean:.3e}"])
        return buf.getvalue()


def evaluate_policy(collection, program: ParametricProgram, distribution, n_test: int,
                    eval_seed: Optional[int] = None, key_encoder=None,
                    mode: ReductionMode = ReductionMode.AS_EQUALITIES) -> EvalReport:
    """Run the ensemble on ``n_test`` fresh samples and cross-check every answer with a full solve.

    Samples whose full instance is infeasible are excluded from ``n_test``'s
    denominator and counted separately. Any outcome other than a verified
    optimum counts as a failure.
    """
    if n_test < 1:
        raise ValueError("n_test must be at least 1")
    if eval_seed is not None and eval_seed != distribution.seed:
        from dataclasses import replace

        distribution = replace(distribution, seed=int(eval_seed))
    keys = set(collection)
    if not keys:
        raise EmptyCollection("the active-set collection is empty")
    enc = key_encoder or (lambda k: k.to_hex())
    hits = Counter()
    fails = false_opt = known = excluded = 0
    gaps = []
    tested = 0
    idx = EVAL_INDEX_OFFSET
    while tested < n_test:
        idx += 1
        sample = draw(distribution, idx)
        try:
            truth, true_key = solve_for_sample(program, sample)
        except SampleInfeasible:
            excluded += 1
            continue
        tested += 1
        out = ensemble_predict(keys, program, sample, mode)
        if out.status is Outcome.OPTIMAL and objectives_match(out.objective, truth.objective):
            hits[enc(out.chosen_key)] += 1
            gaps.append(abs(out.objective - truth.objective))
            continue
        fails += 1
        if out.status is Outcome.OPTIMAL:
            false_opt += 1
        if true_key in keys:
            known += 1
    return EvalReport(
        n_test=n_test,
        success_probability=1.0 - fails / n_test,
        failure_count=fails,
        excluded_infeasible=excluded,
        false_optima=false_opt,
        failures_with_known_key=known,
        gap_max=float(max(gaps, default=0.0)),
        gap_mean=float(np.mean(gaps)) if gaps else 0.0,
        key_hits=dict(sorted(hits.items())),
        eval_seed=distribution.seed,
    )
