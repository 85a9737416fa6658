from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class AttemptRates:
    """
    Per-slot attempt probabilities of a node, conditioned on what ended its
    previous backoff segment: an interruption (beta_d), its own success
    (beta_s) or its own collision (beta_c). beta is the overall rate.

    Simulation estimates leave a rate as None when no samples were seen.
    """
    beta_d: Optional[float]
    beta_s: Optional[float]
    beta_c: Optional[float]
    beta: Optional[float] = None
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    beta_d_defined: bool = True

    def as_tuple(self):
        return self.beta_d, self.beta_s, self.beta_c, self.beta

    def x_rate(self, n_a):
        # rate of a node that attempted in the last cycle: it succeeded iff it attempted alone
        return self.beta_s if n_a == 1 else self.beta_c

    def __str__(self):
        def fmt(v):
            return 'n/a' if v is None else f"{v:.6f}"
        return (f"AttemptRates: beta_d {fmt(self.beta_d)}, beta_s {fmt(self.beta_s)}, "
                f"beta_c {fmt(self.beta_c)}, beta {fmt(self.beta)}")


@dataclass(frozen=True)
class PerformanceReport:
    gamma: float
    theta: float
    rates: AttemptRates
    source: str             # simulation, mrp-analysis, bianchi or meanfield
    fairness: Optional[dict] = None

    def __post_init__(self):
        if self.source not in ('simulation', 'mrp-analysis', 'bianchi', 'meanfield'):
            raise ValueError(f"Invalid source '{self.source}'. Choose simulation, mrp-analysis, bianchi or meanfield.")

    def __str__(self):
        return f"PerformanceReport ({self.source}): gamma {self.gamma:.6f}, theta {self.theta:.6f}, {self.rates}"
