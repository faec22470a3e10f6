"""Categorical key sources with exactly known masses.

These stand in for a parametric program when the true mass of every active
set must be known, e.g. to check the discovery guarantees by simulation.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

from .errors import InvalidMasses, UnknownKey
from .sampling import uniforms


class CategoricalSystem:
    """Draw ``i`` yields label ``j`` (1-based) with probability ``masses[j-1]``."""

    def __init__(self, masses, seed: int = 0):
        p = np.asarray(masses, dtype=float).ravel()
        if p.size == 0 or np.any(~np.isfinite(p)) or np.any(p < 0):
            raise InvalidMasses("masses must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidMasses(f"masses sum to {p.sum()!r}, not 1")
        self.masses = p
        self.seed = int(seed)
        self._cdf = np.cumsum(p)
        self._cdf[-1] = 1.0

    @property
    def labels(self) -> range:
        return range(1, self.masses.size + 1)

    def with_seed(self, seed: int) -> "CategoricalSystem":
        return CategoricalSystem(self.masses, seed)

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256(self.masses.tobytes())
        h.update(str(self.seed).encode())
        return h.hexdigest()[:16]

    def key_at(self, index: int) -> int:
        u = uniforms(self.seed, index, 1)[0]
        return int(np.searchsorted(self._cdf, u, side="right")) + 1

    def keys_for(self, indices) -> list:
        return [self.key_at(i) for i in indices]

    def encode_key(self, key) -> str:
        return str(key)

    def decode_key(self, text: str) -> int:
        return int(text)


def categorical_system(masses, seed: int = 0) -> CategoricalSystem:
    return CategoricalSystem(masses, seed)


def true_unobserved_mass(system: CategoricalSystem, observed) -> float:
    """Exact total mass of the labels not in ``observed``."""
    seen = set(observed)
    valid = set(system.labels)
    unknown = seen - valid
    if unknown:
        raise UnknownKey(f"labels {sorted(unknown)} are not part of the system")
    mask = np.ones(system.masses.size, dtype=bool)
    for label in seen:
        mask[label - 1] = False
    return float(system.masses[mask].sum())


def low_complexity_profile(K0: int, alpha0: float, tail_count: int, seed: int = 0) -> CategoricalSystem:
    """``K0`` equal atoms holding ``1 - alpha0`` plus ``tail_count`` equal atoms holding ``alpha0``.

    With ``tail_count == 0`` the head carries all the mass.
    """
    if K0 < 1 or tail_count < 0 or not 0 <= alpha0 < 1:
        raise InvalidMasses("need K0 >= 1, tail_count >= 0 and 0 <= alpha0 < 1")
    if tail_count == 0:
        return CategoricalSystem(np.full(K0, 1.0 / K0), seed)
    if alpha0 == 0:
        raise InvalidMasses("a nonempty tail needs positive alpha0")
    head = np.full(K0, (1.0 - alpha0) / K0)
    tail = np.full(tail_count, alpha0 / tail_count)
    masses = np.concatenate([head, tail])
    masses[-1] += 1.0 - masses.sum()
    return CategoricalSystem(masses, seed)


def low_complexity_bound(alpha: float, alpha0: float, K0: int, delta0: float) -> float:
    """Iteration count within which a low-complexity system terminates w.h.p."""
    if not alpha > alpha0:
        raise ValueError("the bound needs alpha > alpha0")
    return (K0 * math.log(2.0) + math.log(1.0 / delta0)) / (alpha - alpha0)
