"""Parametric programs, canonical active-set keys and the per-sample solve pipeline."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NotOptimal, SampleInfeasible
from .lp_core import FEAS_TOL, LpInstance, LpSolution, Status, solve_lp


class ReductionMode(enum.Enum):
    AS_EQUALITIES = "equalities"
    AS_INEQUALITIES = "inequalities"


@dataclass(frozen=True)
class Sample:
    values: np.ndarray
    index: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


class ActiveSetKey:
    """Set of binding inequality rows, stored as a bitmask over ``m`` rows.

    Equality and ordering follow the mask, which makes ``sorted()`` the
    canonical key order used for tie-breaking.
    """

    __slots__ = ("mask", "m", "_hash")

    def __init__(self, rows: Sequence[int] = (), m: int = 0, *, mask: Optional[int] = None):
        if mask is None:
            mask = 0
            for r in rows:
                r = int(r)
                if not 0 <= r < m:
                    raise DimensionMismatch(f"row {r} outside 0..{m - 1}")
                mask |= 1 << r
        elif mask >> m:
            raise DimensionMismatch("mask has bits beyond row count")
        self.mask = mask
        self.m = m
        self._hash = hash((mask, m))

    @property
    def rows(self) -> tuple:
        mask, out, r = self.mask, [], 0
        while mask:
            if mask & 1:
                out.append(r)
            mask >>= 1
            r += 1
        return tuple(out)

    def __len__(self):
        return bin(self.mask).count("1")

    def __contains__(self, row):
        return bool(self.mask >> int(row) & 1)

    def __eq__(self, other):
        return isinstance(other, ActiveSetKey) and self.mask == other.mask and self.m == other.m

    def __lt__(self, other):
        return (self.m, self.mask) < (other.m, other.mask)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"ActiveSetKey({list(self.rows)}, m={self.m})"

    def to_hex(self) -> str:
        return format(self.mask, "x")

    @classmethod
    def from_hex(cls, text: str, m: int) -> "ActiveSetKey":
        return cls(m=m, mask=int(text, 16))


@dataclass(frozen=True, eq=False)
class ParametricProgram:
    """A family of LPs indexed by parameter samples.

    ``instantiator`` must return instances with identical shape and row
    ordering for every sample; only coefficients and right-hand sides vary.
    ``domain_check`` optionally rejects samples for which constraints that do
    not involve the decision variables are violated.
    """

    n: int
    m: int
    sample_dim: int
    instantiator: Callable[[np.ndarray], LpInstance]
    labels: tuple = ()
    fingerprint: str = ""
    domain_check: Optional[Callable[[np.ndarray], bool]] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"g{j}" for j in range(self.m)))
        if len(self.labels) != self.m:
            raise DimensionMismatch(f"{len(self.labels)} labels for {self.m} rows")
        if not self.fingerprint:
            digest = hashlib.sha256(repr((self.n, self.m, self.sample_dim, self.labels)).encode())
            object.__setattr__(self, "fingerprint", digest.hexdigest()[:16])

    def key_labels(self, key: ActiveSetKey) -> list:
        return [self.labels[r] for r in key.rows]


def instantiate(program: ParametricProgram, sample: Sample) -> LpInstance:
    values = sample.values
    if values.size != program.sample_dim:
        raise DimensionMismatch(
            f"sample {sample.index} has {values.size} values, program expects {program.sample_dim}"
        )
    inst = program.instantiator(values)
    if inst.n != program.n or inst.m != program.m:
        raise DimensionMismatch("instantiator returned an instance of the wrong shape")
    return inst


def scaled_slacks(instance: LpInstance, point) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    slack = instance.ineq_rhs - instance.ineq_matrix @ x
    return slack / np.maximum(1.0, np.abs(instance.ineq_rhs))


def extract_active_set(instance: LpInstance, solution: LpSolution, tol: float = FEAS_TOL) -> ActiveSetKey:
    """Rows whose row-scaled slack magnitude is at most ``tol``."""
    if solution.status is not Status.OPTIMAL:
        raise NotOptimal(f"cannot key a solution with status {solution.status.value}")
    s = scaled_slacks(instance, solution.point)
    return ActiveSetKey(np.flatnonzero(np.abs(s) <= tol), instance.m)


def reduced_instance(program: ParametricProgram, sample: Sample, key: ActiveSetKey,
                     mode: ReductionMode = ReductionMode.AS_EQUALITIES) -> LpInstance:
    """The instance restricted to the rows in ``key``.

    ``AS_INEQUALITIES`` keeps the keyed rows as inequalities next to the original
    equalities. ``AS_EQUALITIES`` turns them into equalities and drops every other
    inequality.
    """
    if key.m != program.m:
        raise DimensionMismatch(f"key covers {key.m} rows, program has {program.m}")
    full = instantiate(program, sample)
    rows = list(key.rows)
    A, b = full.ineq_matrix[rows], full.ineq_rhs[rows]
    if mode is ReductionMode.AS_INEQUALITIES:
        return LpInstance(full.cost, full.eq_matrix, full.eq_rhs, A, b)
    E = np.vstack([full.eq_matrix, A])
    e = np.concatenate([full.eq_rhs, b])
    return LpInstance(full.cost, E, e, np.zeros((0, full.n)), np.zeros(0))


def solve_for_sample(program: ParametricProgram, sample: Sample, tol: float = FEAS_TOL):
    """Full solve for one sample; returns ``(solution, key)``.

    Raises SampleInfeasible when the sample lies outside the feasible parameter set.
    """
    if program.domain_check is not None:
        if sample.values.size == program.sample_dim and not program.domain_check(sample.values):
            raise SampleInfeasible(sample.index)
    inst = instantiate(program, sample)
    sol = solve_lp(inst)
    if sol.status is Status.INFEASIBLE:
        raise SampleInfeasible(sample.index)
    if sol.status is not Status.OPTIMAL:
        raise NotOptimal(f"sample {sample.index}: {sol.status.value}")
    return sol, extract_active_set(inst, sol, tol)
