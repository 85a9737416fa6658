import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from .exceptions import ConfigError
from .schedule import BackoffSchedule, preset_schedule
from .timing import PhyTiming

logger = logging.getLogger(__name__)

MODES = ('simulate', 'analyze-zero', 'analyze-delay', 'bianchi', 'meanfield',
         'fairness', 'sweep-slot', 'sweep-minbe', 'compare')

# modes that run the two-node delay analysis
DELAY_MODES = ('analyze-delay', 'sweep-slot', 'sweep-minbe')

# config key -> PhyTiming field
TIMING_KEYS = {
    'sigma_us': 'sigma',
    't_d_us': 't_d',
    'ack_us': 'ack',
    'phy_hdr_us': 'phy_hdr',
    'sifs_us': 'sifs',
    'difs_us': 'difs',
    't_o_us': 't_o',
    'delta_us': 'delta',
    'delta_r_us': 'delta_r',
    'eifs_us': 'eifs',
}


@dataclass(frozen=True)
class RunConfig:
    mode: str = 'analyze-zero'
    schedule: BackoffSchedule = field(default_factory=lambda: preset_schedule('80211b'))
    timing: PhyTiming = field(default_factory=PhyTiming)
    n_values: Tuple[int, ...] = (2,)
    cycles: int = 1_000_000
    seed: int = 1
    window: int = 100
    L: Tuple[int, ...] = (1, 2, 5, 10, 20)
    eu1_max: float = 3.0
    minbe_range: Tuple[int, ...] = tuple(range(0, 11))
    p: int = 2
    max_be: int = 10
    K: int = 6
    m_max: int = 20
    variant: str = 'binomial'
    t_end: float = 200.0
    tol: float = 1e-8
    max_iter: int = 1000
    trace: bool = False
    label: str = 'run'
    out: str = '.'
    workers: int = 1

    @property
    def n(self):
        return self.n_values[0]

    @property
    def m(self):
        return self.timing.m

    def output_name(self, suffix=None):
        mode = self.mode if suffix is None else f"{self.mode}_{suffix}"
        return f"{mode}_{self.label}.csv"


def _to_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"Invalid value for '{key}': expected an integer, got '{value}'") from None


def _to_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"Invalid value for '{key}': expected a number, got '{value}'") from None


def _to_bool(key, value):
    lowered = str(value).lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigError(f"Invalid value for '{key}': expected true or false, got '{value}'")


def parse_int_list(key, text):
    """'2..10' is an inclusive range, '1;2;5' a list, '4' a single value."""
    text = str(text).strip()
    if '..' in text:
        first, last = text.split('..', 1)
        first, last = _to_int(key, first), _to_int(key, last)
        if last < first:
            raise ConfigError(f"Invalid range for '{key}': {text}")
        return tuple(range(first, last + 1))
    values = tuple(_to_int(key, v) for v in text.split(';') if v.strip())
    if not values:
        raise ConfigError(f"Empty list for '{key}'")
    return values


def parse_schedule(text):
    """
    Parse a schedule description.

    Accepted forms: a preset name (ts1..ts4, example4, 80211b),
    'K:1;b:1.5,32.5' (mean backoffs), 'K:1;W:2,64' (windows) or
    'minBE:5;p:2;maxBE:10;K:6'.
    """
    text = text.strip()
    if ':' not in text:
        try:
            return preset_schedule(text)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    parts = {}
    for token in text.split(';'):
        if not token.strip():
            continue
        if ':' not in token:
            raise ConfigError(f"Invalid schedule token '{token}' in '{text}'")
        name, value = token.split(':', 1)
        parts[name.strip()] = value.strip()

    try:
        if 'b' in parts or 'W' in parts:
            key = 'b' if 'b' in parts else 'W'
            values = [float(v) for v in parts[key].split(',') if v.strip()]
            schedule = (BackoffSchedule.from_means(values) if key == 'b'
                        else BackoffSchedule(int(v) for v in values))
        elif {'minBE', 'p', 'maxBE', 'K'} <= set(parts):
            schedule = BackoffSchedule.from_exponents(int(parts['minBE']), int(parts['p']),
                                                      int(parts['maxBE']), int(parts['K']))
        else:
            raise ConfigError(f"Invalid schedule '{text}'. Give b:..., W:... or minBE/p/maxBE/K.")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid schedule '{text}': {e}") from None

    if 'K' in parts and ('b' in parts or 'W' in parts) and int(parts['K']) != schedule.K:
        raise ConfigError(f"Schedule '{text}' lists {schedule.K + 1} stages but K={parts['K']}")
    return schedule


def tokenize(text):
    """Split config text into (key, value) pairs: key=value tokens separated by whitespace, # starts a comment."""
    pairs = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0]
        for token in line.split():
            if '=' not in token:
                raise ConfigError(f"Line {line_number}: expected key=value, got '{token}'")
            key, value = token.split('=', 1)
            pairs.append((key.strip(), value.strip()))
    return pairs


def _apply(values, key, value, timing_values):
    if key in TIMING_KEYS:
        timing_values[TIMING_KEYS[key]] = _to_float(key, value)
    elif key == 'mode':
        if value not in MODES:
            raise ConfigError(f"Invalid mode '{value}'. Choose one of {', '.join(MODES)}.")
        values['mode'] = value
    elif key == 'schedule':
        values['schedule'] = parse_schedule(value)
    elif key == 'n':
        values['n_values'] = parse_int_list(key, value)
    elif key in ('L', 'minbe_range'):
        values[key] = parse_int_list(key, value)
    elif key in ('cycles', 'seed', 'window', 'p', 'm_max', 'max_iter', 'workers', 'K'):
        values[key] = _to_int(key, value)
    elif key == 'maxBE':
        values['max_be'] = _to_int(key, value)
    elif key in ('eu1_max', 't_end', 'tol'):
        values[key] = _to_float(key, value)
    elif key == 'trace':
        values[key] = _to_bool(key, value)
    elif key == 'variant':
        if value not in ('binomial', 'poisson'):
            raise ConfigError(f"Invalid variant '{value}'. Choose binomial or poisson.")
        values[key] = value
    elif key in ('label', 'out'):
        values[key] = value
    else:
        raise ConfigError(f"Unknown configuration key '{key}'")


def validate(config: RunConfig):
    if any(n < 1 for n in config.n_values):
        raise ConfigError(f"Number of nodes must be >= 1, got {config.n_values}")
    if config.mode in ('analyze-zero', 'bianchi', 'compare', 'fairness') and any(n < 2 for n in config.n_values):
        raise ConfigError(f"Mode {config.mode} needs n >= 2, got {config.n_values}")
    if config.mode in DELAY_MODES and any(n != 2 for n in config.n_values):
        raise ConfigError("delay analysis supports n=2 only")
    if config.mode in ('compare', 'fairness') and config.m > 0 and any(n != 2 for n in config.n_values):
        raise ConfigError("delay analysis supports n=2 only")
    if config.mode == 'sweep-slot' and config.timing.delta <= 0:
        raise ConfigError("sweep-slot needs a positive delta_us")
    if config.cycles < 1:
        raise ConfigError(f"cycles must be >= 1, got {config.cycles}")
    if config.window < 1:
        raise ConfigError(f"window must be >= 1, got {config.window}")
    if any(L < 1 for L in config.L):
        raise ConfigError(f"Frame lengths must be >= 1, got {config.L}")
    if config.eu1_max <= 1:
        raise ConfigError(f"eu1_max must exceed 1, got {config.eu1_max}")
    if config.m_max < 0:
        raise ConfigError(f"m_max must be >= 0, got {config.m_max}")
    if config.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {config.workers}")
    if config.t_end <= 0:
        raise ConfigError(f"t_end must be positive, got {config.t_end}")
    return config


def parse_config(text: Optional[str] = None, flags: Optional[dict] = None) -> RunConfig:
    """
    Build a validated RunConfig from config text and command-line flags.

    Parameters:
    text (str): Contents of a key=value config file, or None.
    flags (dict): Flag values keyed like the config file; None values are ignored.
                  Flags override the file.

    Returns:
    RunConfig: Configuration with defaults for everything not given.
    """
    pairs = tokenize(text) if text else []
    pairs += [(key, str(value)) for key, value in (flags or {}).items() if value is not None]

    values = {}
    timing_values = {}
    for key, value in pairs:
        _apply(values, key, value, timing_values)

    if 'delta' in timing_values and 'delta_r' not in timing_values:
        timing_values['delta_r'] = timing_values['delta']
    try:
        timing = replace(PhyTiming(), **timing_values)
    except ValueError as e:
        raise ConfigError(str(e)) from None

    config = RunConfig(timing=timing, **values)
    logger.debug(f"Configuration: {config}")
    return validate(config)
