import argparse
import logging
import sys

from pydcf import PyDcf, parse_config
from pydcf.config import MODES
from pydcf.exceptions import NumericalError

logger = logging.getLogger('pydcf')

# flag dest -> config key
FLAG_KEYS = {
    'mode': 'mode',
    'seed': 'seed',
    'cycles': 'cycles',
    'out': 'out',
    'n': 'n',
    'delta_us': 'delta_us',
    'sigma_us': 'sigma_us',
    'window': 'window',
    'L': 'L',
    'eu1_max': 'eu1_max',
    'minbe_range': 'minbe_range',
    'schedule': 'schedule',
    'label': 'label',
    'workers': 'workers',
}


def build_parser():
    parser = argparse.ArgumentParser(description="Analysis and simulation of saturated 802.11 DCF networks",
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--config", type=str, default=None, help="key=value configuration file")
    parser.add_argument("--mode", choices=MODES, default=None, help="what to run")
    parser.add_argument("--seed", type=int, default=None, help="seed of the simulator random streams")
    parser.add_argument("--cycles", type=int, default=None, help="simulated transmission cycles")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--n", type=str, default=None, help="number of nodes: 2, 2..10 or 2;5;10")
    parser.add_argument("--delta-us", dest='delta_us', type=float, default=None, help="propagation delay in us")
    parser.add_argument("--sigma-us", dest='sigma_us', type=float, default=None, help="slot duration in us")
    parser.add_argument("--window", type=int, default=None, help="cycles per short-term unfairness window")
    parser.add_argument("--L", type=str, default=None, help="frame lengths for the Jain index, e.g. 1;2;5")
    parser.add_argument("--eu1-max", dest='eu1_max', type=float, default=None, help="bound on the mean success run")
    parser.add_argument("--minbe-range", dest='minbe_range', type=str, default=None, help="minBE candidates, e.g. 0..10")
    parser.add_argument("--schedule", type=str, default=None, help="preset name or schedule description")
    parser.add_argument("--label", type=str, default=None, help="output file label")
    parser.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    parser.add_argument("-v", "--verbose", action='count', default=0, help="-v for INFO, -vv for DEBUG")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(format='%(asctime)s %(levelname)s %(name)s: %(message)s', level=level)

    try:
        text = None
        if args.config is not None:
            with open(args.config) as file:
                text = file.read()
        flags = {key: getattr(args, dest) for dest, key in FLAG_KEYS.items()}
        config = parse_config(text, flags)
        PyDcf(config).run()
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return 2
    except (ValueError, OSError) as e:
        logger.error(f"{e}")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
