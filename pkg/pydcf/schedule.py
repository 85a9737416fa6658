import logging
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


class BackoffSchedule:
    """
    Contention windows W_0..W_K of a backoff schedule.

    A fresh backoff at stage s is uniform on {1, ..., W_s}, so the mean
    backoff of stage s is b_s = (1 + W_s) / 2.
    """

    def __init__(self, windows: Sequence[int], name=None):
        windows = tuple(int(w) for w in windows)
        if len(windows) == 0:
            raise ValueError("A schedule needs at least one stage.")
        if any(w < 1 for w in windows):
            raise ValueError(f"Contention windows must be >= 1, got {windows}")

        self.windows = windows
        self.K = len(windows) - 1
        self.name = name
        self.means = tuple((1 + w) / 2 for w in windows)

    @classmethod
    def from_exponents(cls, min_be, p, max_be, K, name=None):
        """W_k = min(p^(minBE + k), p^maxBE) for k = 0..K."""
        if p < 2 or min_be < 0 or max_be < min_be or K < 0:
            raise ValueError(f"Invalid exponent schedule: minBE={min_be}, p={p}, maxBE={max_be}, K={K}")
        windows = [min(p ** (min_be + k), p ** max_be) for k in range(K + 1)]
        return cls(windows, name=name)

    @classmethod
    def from_means(cls, means: Sequence[float], name=None):
        """Build a schedule from mean backoffs b_k, using W_k = 2 b_k - 1."""
        windows = []
        for b in means:
            w = 2 * float(b) - 1
            if w < 1 or not float(w).is_integer():
                raise ValueError(f"Mean backoff {b} does not correspond to an integer window.")
            windows.append(int(w))
        return cls(windows, name=name)

    def get_window(self, s):
        if not 0 <= s <= self.K:
            raise ValueError(f"Invalid stage {s}. Choose a stage in 0..{self.K}.")
        return self.windows[s]

    def get_mean(self, s):
        return (1 + self.get_window(s)) / 2

    def get_K(self):
        return self.K

    def max_window(self):
        return max(self.windows)

    def next_stage(self, s):
        # a collision at the last stage discards the packet and restarts at 0
        return (s + 1) % (self.K + 1)

    def is_nondecreasing(self):
        return bool(np.all(np.diff(self.windows) >= 0))

    def rate_box(self):
        """Lower and upper bound of every conditional attempt rate."""
        return 1.0 / self.max_window(), 1.0

    def __eq__(self, other):
        return isinstance(other, BackoffSchedule) and self.windows == other.windows

    def __hash__(self):
        return hash(self.windows)

    def __str__(self):
        if self.name is not None:
            return f"BackoffSchedule {self.name}: K={self.K}, W={list(self.windows)}"
        return f"BackoffSchedule: K={self.K}, W={list(self.windows)}"

    def __repr__(self):
        return f"BackoffSchedule({list(self.windows)!r})"


def window_for_stage(schedule: BackoffSchedule, s):
    return schedule.get_window(s)


def _ts1():
    return BackoffSchedule.from_means([3 ** k for k in range(8)], name='ts1')


def _ts2():
    return BackoffSchedule.from_means([1.5] * 4 + [64] * 4, name='ts2')


def _ts3():
    return BackoffSchedule.from_means([1.5, 32.5], name='ts3')


def _ts4():
    return BackoffSchedule.from_means([1.5] * 4 + [32.5] * 3, name='ts4')


def _example4():
    return BackoffSchedule.from_means([1] * 101 + [2] * 300, name='example4')


def _ieee80211b():
    return BackoffSchedule.from_exponents(5, 2, 10, 6, name='80211b')


SCHEDULE_PRESETS = {
    'ts1': _ts1,
    'ts2': _ts2,
    'ts3': _ts3,
    'ts4': _ts4,
    'example4': _example4,
    '80211b': _ieee80211b,
}


def preset_schedule(name):
    try:
        return SCHEDULE_PRESETS[name.lower()]()
    except KeyError:
        raise ValueError(f"Invalid schedule preset '{name}'. Choose one of {sorted(SCHEDULE_PRESETS)}.") from None
