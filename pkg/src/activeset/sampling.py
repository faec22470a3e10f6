"""Reproducible i.i.d. load-deviation streams.

Each sample index owns its own Philox substream keyed by the seed, so any
index can be generated on its own, in any order, with identical results.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

from .parametric import Sample


class Kind(enum.Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"
    CUSTOM = "custom"


@dataclass(frozen=True)
class DistributionSpec:
    kind: Kind = Kind.NORMAL
    sigma_fraction: float = 0.03
    support_sigmas: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", Kind(self.kind.lower()))
        if self.sigma_fraction < 0:
            raise ValueError("sigma_fraction must be nonnegative")
        if not self.support_sigmas > 0:
            raise ValueError("support_sigmas must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def uniforms(seed: int, index: int, count: int) -> np.ndarray:
    """``count`` uniforms in (0, 1) for sample ``index`` of stream ``seed``."""
    bitgen = np.random.Philox(key=int(seed), counter=[0, int(index), 0, 0])
    raw = bitgen.random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True, eq=False)
class Distribution:
    """Independent per-component distribution over load deviations (MW)."""

    kind: Kind
    sigma: np.ndarray
    seed: int
    support_sigmas: float = 3.0
    transform: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def dim(self):
        return self.sigma.size

    def values_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        if self.kind is Kind.NORMAL:
            return self.sigma * ndtri(u)
        if self.kind is Kind.UNIFORM:
            half = self.support_sigmas * self.sigma
            return -half + 2.0 * half * u
        return np.asarray(self.transform(u), dtype=float)

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "support_sigmas": self.support_sigmas,
            "sigma": self.sigma.tolist(),
        }


def make_distribution(spec: DistributionSpec, network=None, *, loads=None, transform=None) -> Distribution:
    """Distribution for the nonzero loads of ``network`` (or an explicit load vector).

    Standard deviations are ``sigma_fraction * |d_i|``. For ``Kind.CUSTOM`` the
    caller supplies ``transform`` mapping a vector of uniforms to deviations.
    """
    if loads is None:
        loads = [b.load_mw for b in network.buses]
    d = np.asarray(loads, dtype=float)
    d = d[d != 0.0]
    sigma = spec.sigma_fraction * np.abs(d)
    sigma.setflags(write=False)
    if spec.kind is Kind.CUSTOM and transform is None:
        raise ValueError("custom distributions need a transform")
    return Distribution(spec.kind, sigma, int(spec.seed), spec.support_sigmas, transform)


def draw(distribution: Distribution, index: int) -> Sample:
    if index < 1:
        raise ValueError("sample indices start at 1")
    u = uniforms(distribution.seed, index, distribution.dim)
    return Sample(distribution.values_from_uniforms(u), index)
