"""Streaming discovery of the optimal active sets that carry most of the mass.

The loop grows the number of "reference" samples ``M``; for each ``M`` it
keeps a look-ahead window of ``W_M`` further samples and measures the
fraction of the window whose key did not occur among the first ``M``. It
stops once that rate of discovery drops below ``alpha - epsilon``.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

from .errors import InsufficientSamples, InvalidConfig, SampleInfeasible, SnapshotMismatch
from .parametric import ActiveSetKey, ParametricProgram, solve_for_sample

SNAPSHOT_FORMAT = "activeset-discovery-snapshot"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class DiscoveryConfig:
    alpha: float = 0.05
    epsilon: float = 0.04
    delta: float = 0.01
    gamma: float = 2.0
    max_m: int = 22000

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidConfig("alpha must lie in (0, 1)")
        if not 0 < self.epsilon < self.alpha:
            raise InvalidConfig("epsilon must lie in (0, alpha)")
        if not 0 < self.delta < 1:
            raise InvalidConfig("delta must lie in (0, 1)")
        if not self.gamma > 1:
            raise InvalidConfig("gamma must exceed 1")
        if int(self.max_m) < 1:
            raise InvalidConfig("max_m must be at least 1")

    @property
    def threshold(self) -> float:
        return self.alpha - self.epsilon

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DerivedConstants:
    c: float
    m_lower: int


def derived_constants(config: DiscoveryConfig) -> DerivedConstants:
    if not isinstance(config, DiscoveryConfig):
        raise InvalidConfig("expected a DiscoveryConfig")
    g = config.gamma
    c = 2.0 * g / config.epsilon**2
    m_lower = 1.0 + (g / (config.delta * (g - 1.0))) ** (1.0 / (g - 1.0))
    # guard the ceiling against representation error (2/0.01 is not exactly 200)
    return DerivedConstants(c=c, m_lower=math.ceil(m_lower - 1e-9))


def window_size(constants: DerivedConstants, M: int) -> int:
    if M < 1:
        raise ValueError("M must be at least 1")
    return math.ceil(constants.c * max(math.log(constants.m_lower), math.log(M)))


class TerminatedBy(enum.Enum):
    STOPPING_RULE = "StoppingRule"
    MAX_M = "MaxM"


# ---------------------------------------------------------------- key sources

class ProgramSource:
    """Keys obtained by sampling a distribution and solving the parametric program."""

    def __init__(self, program: ParametricProgram, distribution):
        self.program = program
        self.distribution = distribution

    @property
    def fingerprint(self) -> str:
        d = self.distribution
        payload = json.dumps([self.program.fingerprint, d.describe()], sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def key_at(self, index: int):
        from .sampling import draw

        try:
            _, key = solve_for_sample(self.program, draw(self.distribution, index))
        except SampleInfeasible:
            return None
        return key

    def keys_for(self, indices):
        return [self.key_at(i) for i in indices]

    def encode_key(self, key: ActiveSetKey) -> str:
        return key.to_hex()

    def decode_key(self, text: str) -> ActiveSetKey:
        return ActiveSetKey.from_hex(text, self.program.m)


def _keys_chunk(source, indices):
    return source.keys_for(indices)


# ---------------------------------------------------------------- state

@dataclass
class DiscoveryState:
    """Committed stream of feasible keys plus the incremental rate bookkeeping.

    Positions are 1-based and count feasible samples only; ``sample_indices``
    maps each position back to the raw stream index.
    """

    key_sequence: list = field(default_factory=list)
    sample_indices: list = field(default_factory=list)
    first_occurrence: dict = field(default_factory=dict)
    infeasible_indices: list = field(default_factory=list)
    next_index: int = 1
    M: int = 0
    W: int = 0
    new_in_window: int = 0
    window_counts: Counter = field(default_factory=Counter)
    current_rate: float = 1.0

    @property
    def samples_drawn(self) -> int:
        return len(self.key_sequence)

    @property
    def infeasible_count(self) -> int:
        return len(self.infeasible_indices)

    @property
    def observed(self) -> set:
        return set(self.first_occurrence)

    def commit(self, index: int, key):
        if key is None:
            self.infeasible_indices.append(index)
            return
        self.key_sequence.append(key)
        self.sample_indices.append(index)
        self.first_occurrence.setdefault(key, len(self.key_sequence))

    def start(self, W: int):
        """Set up the window for ``M = 1`` (positions 2..1+W)."""
        self.M, self.W = 1, W
        self.window_counts = Counter(self.key_sequence[1:1 + W])
        self.new_in_window = sum(
            cnt for key, cnt in self.window_counts.items() if self.first_occurrence[key] > 1
        )
        self.current_rate = self.new_in_window / W

    def advance(self, W_next: int):
        """Move from ``M`` to ``M + 1`` in amortized constant time per window position."""
        M = self.M
        leaving = self.key_sequence[M]  # position M + 1
        self.window_counts[leaving] -= 1
        if self.first_occurrence[leaving] > M:
            self.new_in_window -= 1
        if self.first_occurrence[leaving] == M + 1:
            # this key is now among the first M + 1 samples: its window hits are old
            self.new_in_window -= self.window_counts[leaving]
        M += 1
        end_old = self.M + self.W
        end_new = M + W_next
        for pos in range(end_old + 1, end_new + 1):
            key = self.key_sequence[pos - 1]
            self.window_counts[key] += 1
            if self.first_occurrence[key] > M:
                self.new_in_window += 1
        self.M, self.W = M, W_next
        self.current_rate = self.new_in_window / W_next


def rate_of_discovery(state, M: int, W: int) -> float:
    """Fraction of positions ``M+1..M+W`` whose key first occurred after position ``M``.

    Recomputed from the raw key log; ``state`` may be a DiscoveryState or a
    plain sequence of keys.
    """
    if W < 1 or M < 1:
        raise ValueError("M and W must be positive")
    keys = state.key_sequence if isinstance(state, DiscoveryState) else list(state)
    if len(keys) < M + W:
        raise InsufficientSamples(f"need {M + W} samples, have {len(keys)}")
    first = {}
    for pos, key in enumerate(keys, start=1):
        first.setdefault(key, pos)
    new = sum(1 for key in keys[M:M + W] if first[key] > M)
    return new / W


@dataclass
class DiscoveryResult:
    keys: list  # observed keys in order of first occurrence
    frequencies: list  # empirical frequency over all committed samples
    M: int
    W: int
    rate: float
    terminated_by: TerminatedBy
    samples_drawn: int
    raw_draws: int
    infeasible_count: int
    config: DiscoveryConfig
    source_fingerprint: str = ""
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def K(self) -> int:
        return len(self.keys)

    def to_dict(self, source) -> dict:
        return {
            "K_M": self.K,
            "M": self.M,
            "W_M": self.W,
            "rate": self.rate,
            "terminated_by": self.terminated_by.value,
            "samples_drawn": self.samples_drawn,
            "raw_draws": self.raw_draws,
            "infeasible_count": self.infeasible_count,
            "config": asdict(self.config),
            "source_fingerprint": self.source_fingerprint,
            "keys": [source.encode_key(k) for k in self.keys],
            "frequencies": self.frequencies,
        }


# ---------------------------------------------------------------- runner

class DiscoveryRun:
    """Resumable execution of the discovery loop over a key source."""

    def __init__(self, config: DiscoveryConfig, source, *, jobs: int = 1,
                 progress: Optional[Callable[[dict], None]] = None, chunk: int = 256):
        if not isinstance(config, DiscoveryConfig):
            raise InvalidConfig("expected a DiscoveryConfig")
        self.config = config
        self.constants = derived_constants(config)
        self.source = source
        self.jobs = max(1, int(jobs))
        self.progress = progress
        self.chunk = chunk
        self.state = DiscoveryState()
        self.result: Optional[DiscoveryResult] = None
        self._pool = None
        self._elapsed = 0.0

    # -- sample supply
    def _fill(self, positions: int):
        st = self.state
        while st.samples_drawn < positions:
            need = positions - st.samples_drawn
            if self.jobs == 1:
                batch = list(range(st.next_index, st.next_index + need))
                keys = self.source.keys_for(batch)
            else:
                size = max(need, self.jobs)
                batch = list(range(st.next_index, st.next_index + size))
                step = max(1, min(self.chunk, -(-size // self.jobs)))
                parts = [batch[i:i + step] for i in range(0, size, step)]
                if self._pool is None:
                    self._pool = ProcessPoolExecutor(self.jobs)
                keys = [k for part in self._pool.map(_keys_chunk, [self.source] * len(parts), parts)
                        for k in part]
            for idx, key in zip(batch, keys):
                if st.samples_drawn >= positions:
                    break
                st.commit(idx, key)
                st.next_index = idx + 1

    def _report(self):
        if self.progress is not None:
            st = self.state
            self.progress({"M": st.M, "W": st.W, "rate": st.current_rate,
                           "K": len(st.first_occurrence), "samples": st.samples_drawn})

    def _finish(self, how: TerminatedBy) -> DiscoveryResult:
        st = self.state
        counts = Counter(st.key_sequence)
        keys = sorted(st.first_occurrence, key=st.first_occurrence.get)
        total = st.samples_drawn
        self.result = DiscoveryResult(
            keys=keys,
            frequencies=[counts[k] / total for k in keys],
            M=st.M,
            W=st.W,
            rate=st.current_rate,
            terminated_by=how,
            samples_drawn=total,
            raw_draws=st.next_index - 1,
            infeasible_count=st.infeasible_count,
            config=self.config,
            source_fingerprint=self.source.fingerprint,
            wall_clock=self._elapsed,
        )
        return self.result

    def advance(self, until_m: Optional[int] = None) -> Optional[DiscoveryResult]:
        """Run until termination (returns the result) or until ``M == until_m`` (returns None)."""
        if self.result is not None:
            return self.result
        t0 = time.perf_counter()
        try:
            cfg, st = self.config, self.state
            if st.M == 0:
                W = window_size(self.constants, 1)
                self._fill(1 + W)
                st.start(W)
                self._report()
            while True:
                if st.current_rate < cfg.threshold:
                    return self._finish(TerminatedBy.STOPPING_RULE)
                if st.M >= cfg.max_m:
                    return self._finish(TerminatedBy.MAX_M)
                if until_m is not None and st.M >= until_m:
                    return None
                W_next = window_size(self.constants, st.M + 1)
                self._fill(st.M + 1 + W_next)
                st.advance(W_next)
                self._report()
        finally:
            self._elapsed += time.perf_counter() - t0
            if self.result is not None:
                self.result.wall_clock = self._elapsed
                self.close()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # -- checkpointing
    def snapshot(self) -> dict:
        st = self.state
        enc = self.source.encode_key
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "config": asdict(self.config),
            "config_hash": self.config.digest(),
            "source_fingerprint": self.source.fingerprint,
            "M": st.M,
            "next_index": st.next_index,
            "keys": [enc(k) for k in st.key_sequence],
            "sample_indices": list(st.sample_indices),
            "infeasible_indices": list(st.infeasible_indices),
            "terminated_by": self.result.terminated_by.value if self.result else None,
            "metadata": {"elapsed_s": self._elapsed},
        }

    @classmethod
    def from_snapshot(cls, snapshot: dict, config: DiscoveryConfig, source, **kwargs) -> "DiscoveryRun":
        if snapshot.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotMismatch("not a discovery snapshot")
        if snapshot.get("version") != SNAPSHOT_VERSION:
            raise SnapshotMismatch(f"unsupported snapshot version {snapshot.get('version')}")
        if snapshot["config_hash"] != config.digest():
            raise SnapshotMismatch("snapshot was taken with a different configuration")
        if snapshot["source_fingerprint"] != source.fingerprint:
            raise SnapshotMismatch("snapshot was taken with a different program, distribution or seed")
        run = cls(config, source, **kwargs)
        st = run.state
        keys = [source.decode_key(k) for k in snapshot["keys"]]
        for idx, key in zip(snapshot["sample_indices"], keys):
            st.commit(idx, key)
        st.infeasible_indices = list(snapshot["infeasible_indices"])
        st.next_index = int(snapshot["next_index"])
        run._elapsed = float(snapshot.get("metadata", {}).get("elapsed_s", 0.0))
        M = int(snapshot["M"])
        if M >= 1:
            st.start(window_size(run.constants, 1))
            for m in range(2, M + 1):
                st.advance(window_size(run.constants, m))
        if snapshot.get("terminated_by"):
            run._finish(TerminatedBy(snapshot["terminated_by"]))
        return run


def discover_mass(config: DiscoveryConfig, program, distribution=None,
                  progress: Optional[Callable[[dict], None]] = None, *, jobs: int = 1) -> DiscoveryResult:
    """Run the discovery loop to termination.

    ``program`` is either a ParametricProgram (sampled through ``distribution``)
    or any key source with ``keys_for``/``fingerprint``, such as a categorical system.
    """
    source = ProgramSource(program, distribution) if isinstance(program, ParametricProgram) else program
    return DiscoveryRun(config, source, jobs=jobs, progress=progress).advance()


def resume(snapshot: dict, config: DiscoveryConfig, program, distribution=None,
           progress=None, *, jobs: int = 1) -> DiscoveryResult:
    source = ProgramSource(program, distribution) if isinstance(program, ParametricProgram) else program
    return DiscoveryRun.from_snapshot(snapshot, config, source, jobs=jobs, progress=progress).advance()
