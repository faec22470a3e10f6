"""Monte-Carlo checks of the discovery guarantees on categorical systems."""
from __future__ import annotations

from dataclasses import dataclass, field

from scipy.stats import beta

from .discovery import DiscoveryConfig, DiscoveryRun, TerminatedBy
from .synthetic import CategoricalSystem, low_complexity_bound, true_unobserved_mass


def binomial_upper(failures: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided Clopper-Pearson upper confidence bound for a binomial proportion."""
    if failures >= trials:
        return 1.0
    return float(beta.ppf(confidence, failures + 1, trials - failures))


@dataclass
class TrialOutcome:
    seed: int
    M: int
    K: int
    terminated: bool
    unobserved_mass: float  # mass outside the returned collection
    unobserved_mass_first_m: float  # mass outside the keys of the first M samples


def run_trials(system: CategoricalSystem, config: DiscoveryConfig, trials: int, seed0: int = 1):
    out = []
    for t in range(trials):
        sys_t = system.with_seed(seed0 + t)
        run = DiscoveryRun(config, sys_t)
        res = run.advance()
        first_m = set(run.state.key_sequence[:res.M])
        out.append(TrialOutcome(
            seed=seed0 + t,
            M=res.M,
            K=res.K,
            terminated=res.terminated_by is TerminatedBy.STOPPING_RULE,
            unobserved_mass=true_unobserved_mass(sys_t, res.keys),
            unobserved_mass_first_m=true_unobserved_mass(sys_t, first_m),
        ))
    return out


@dataclass
class Check:
    name: str
    failures: int
    trials: int
    bound: float
    upper: float = field(init=False)

    def __post_init__(self):
        self.upper = binomial_upper(self.failures, self.trials)

    @property
    def passed(self) -> bool:
        return self.upper <= self.bound

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: {self.failures}/{self.trials} failures "
                f"(rate {self.failures / self.trials:.4f}, 99% upper {self.upper:.4f}, bound {self.bound:.4f})")


def stopping_check(outcomes, config: DiscoveryConfig, first_m: bool = False) -> Check:
    """Runs that stopped while more than ``alpha`` of the mass was still undiscovered."""
    attr = "unobserved_mass_first_m" if first_m else "unobserved_mass"
    bad = sum(1 for o in outcomes if o.terminated and getattr(o, attr) > config.alpha)
    name = "stopping rule" + (" (first-M keys)" if first_m else "")
    return Check(name, bad, len(outcomes), config.delta)


def complexity_check(outcomes, config: DiscoveryConfig, K0: int, alpha0: float, delta0: float) -> Check:
    """Runs that needed more iterations than the low-complexity bound (or never stopped)."""
    limit = low_complexity_bound(config.alpha, alpha0, K0, delta0)
    bad = sum(1 for o in outcomes if not o.terminated or o.M > limit)
    return Check(f"sample complexity (M <= {limit:.1f})", bad, len(outcomes), config.delta + delta0)
