import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PhyTiming:
    # all durations in microseconds, 802.11b defaults
    sigma: float = 20.0     # backoff slot
    t_d: float = 4112.0     # data frame payload time
    ack: float = 112.0
    phy_hdr: float = 192.0
    sifs: float = 10.0
    difs: float = 50.0
    t_o: float = 10.0       # MAC overhead
    delta: float = 0.0      # propagation delay
    delta_r: float = 0.0    # propagation delay on the data/ack exchange
    eifs: float = 0.0       # extra idle time after a collision

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"Slot duration must be positive, got {self.sigma}")
        for field_name in ('t_d', 'ack', 'phy_hdr', 'sifs', 'difs', 't_o', 'delta', 'delta_r', 'eifs'):
            if getattr(self, field_name) < 0:
                raise ValueError(f"Duration '{field_name}' must be non-negative, got {getattr(self, field_name)}")

    @property
    def m(self):
        """Propagation delay in whole slots."""
        return int(math.floor(self.delta / self.sigma))

    @property
    def m_r(self):
        return self.delta_r / self.sigma

    def with_slot(self, sigma):
        return PhyTiming(sigma=sigma, t_d=self.t_d, ack=self.ack, phy_hdr=self.phy_hdr, sifs=self.sifs,
                         difs=self.difs, t_o=self.t_o, delta=self.delta, delta_r=self.delta_r, eifs=self.eifs)

    def in_slots(self, duration):
        return duration / self.sigma


def success_cycle_overhead(t: PhyTiming, delayed=False):
    """Channel time of a successful exchange, T_s, in microseconds."""
    duration = t.t_d + t.ack + 2 * t.phy_hdr + 2 * t.t_o + t.sifs + t.difs
    if delayed:
        duration += 2 * t.delta_r
    return duration


def collision_cycle_overhead(t: PhyTiming, delayed=False):
    """Channel time of a collision, T_c, in microseconds."""
    duration = t.t_d + t.phy_hdr + t.t_o + t.sifs + t.difs + t.eifs
    if delayed:
        duration += t.delta
    return duration
