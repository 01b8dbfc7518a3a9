#!/usr/bin/env python3
"""
Command-line front end for the AOM interferometer simulator

    abisim run --config configs/beating_pd.toml --out runs/beating
    abisim fit --csv runs/beating/trace.csv --delta-omega 628318.53 --i-in 1
    abisim sweep --config configs/chopped_switch.toml --param timing.duty --values 0.3:1.0:8 --out runs/duty
    abisim init-config --kind frequency_tuner
    abisim validate --config configs/scan_and_lock.toml

Summary JSON goes to stdout, logs to stderr.

Exit codes:
    0  success
    1  configuration or CSV schema error
    2  scenario, lock or fit failure
    3  I/O error
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from abisim.config.scenario import KINDS, load_config, render_init_config
from abisim.config.settings import Settings, get_settings
from abisim.services.artifacts import read_series, to_json, write_result, write_sweep
from abisim.services.errors import (
    ArtifactError, ConfigError, FitError, LockError, ScenarioError, UndersampledError,
)
from abisim.services.fitting import FitMode, fit_fringe
from abisim.services.scenarios import parse_values, prepare, run_scenario, run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SCENARIO = 2
EXIT_IO = 3


# ==================================
# LOGGING CONFIGURATION
# ==================================

def setup_logging(settings: type[Settings], verbose: bool = False) -> logging.Logger:
    """Configure the package loggers: stderr plus an optional log file"""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    handlers: List[logging.Handler] = []
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter(log_format))
    handlers.append(console_handler)

    if settings.LOG_FILE:
        file_handler = logging.FileHandler(settings.LOG_FILE)
        file_handler.setFormatter(logging.Formatter(log_format))
        handlers.append(file_handler)

    package = logging.getLogger('abisim')
    for old in list(package.handlers):
        package.removeHandler(old)
        old.close()
    for handler in handlers:
        package.addHandler(handler)
    level = 'DEBUG' if verbose else settings.LOG_LEVEL
    package.setLevel(getattr(logging, level, logging.INFO))

    return logging.getLogger(__name__)


def _log_banner(settings: type[Settings]) -> None:
    for msg in settings.validate():
        if msg.startswith('ERROR'):
            logger.error(msg)
        elif msg.startswith('WARNING'):
            logger.warning(msg)
        else:
            logger.info(msg)

    logger.info("=" * 70)
    logger.info("AOM Bi-frequency Interferometer Simulator")
    logger.info("=" * 70)
    for key, value in settings.get_info().items():
        logger.info(f"  {key:.<30} {value}")
    logger.info("=" * 70)


def _log_table(title: str, rows: Dict[str, Any]) -> None:
    logger.info(title)
    for key, value in sorted(rows.items()):
        shown = f"{value:.6g}" if isinstance(value, float) else value
        logger.info(f"  {key:.<30} {shown}")


def _emit(payload: Any) -> None:
    sys.stdout.write(payload if isinstance(payload, str) else to_json(payload))
    sys.stdout.flush()


def _jobs(args, settings: type[Settings]) -> int:
    return max(1, args.jobs if args.jobs is not None else settings.JOBS)


def _load(args, settings: type[Settings]):
    return load_config(Path(args.config), prefix=settings.ENV_PREFIX, seed=args.seed,
                       default_sim_mode=settings.SIM_MODE)


# ==================================
# COMMANDS
# ==================================

def cmd_run(args, settings: type[Settings]) -> int:
    """Run a scenario and write trace.csv / counts.csv / summary.json"""
    cfg, _ = _load(args, settings)
    result = run_scenario(cfg, jobs=_jobs(args, settings))
    write_result(result, Path(args.out), force=args.force)
    _log_table(f"{cfg.kind} headline metrics", result.summary.get('headline', {}))
    _emit(result.summary)
    if result.failures:
        logger.error(f"Scenario finished with {len(result.failures)} failure(s)")
        return EXIT_SCENARIO
    return EXIT_OK


def cmd_fit(args, settings: type[Settings]) -> int:
    """Fit the fringe model to a trace.csv or counts.csv"""
    series = read_series(Path(args.csv), window_s=args.window_s)
    try:
        result = fit_fringe(series, args.i_in, args.delta_omega, FitMode(args.mode),
                            background=args.background, max_nfev=args.max_nfev)
    except FitError as e:
        _emit({'error': type(e).__name__, 'message': str(e), 'diagnostics': e.diagnostics})
        raise
    _emit(result.to_dict())
    return EXIT_OK


def cmd_sweep(args, settings: type[Settings]) -> int:
    """Run a scenario over a grid of one parameter and write sweep.csv"""
    _, raw = _load(args, settings)
    values = parse_values(args.values)
    frame = run_sweep(raw, args.param, values, jobs=_jobs(args, settings), replicas=args.replicas)
    path = write_sweep(frame, Path(args.out), force=args.force)
    failed = int((frame['error'] != '').sum())
    _emit({'param': args.param, 'points': len(frame), 'failed_points': failed, 'path': str(path),
           'rows': json.loads(frame.to_json(orient='records'))})
    if failed == len(frame):
        logger.error("Every sweep point failed")
        return EXIT_SCENARIO
    if failed:
        logger.warning(f"{failed} of {len(frame)} sweep points recorded failures")
    return EXIT_OK


def cmd_init_config(args, settings: type[Settings]) -> int:
    """Print or write a fully commented default scenario file"""
    text = render_init_config(args.kind)
    if not args.out:
        _emit(text)
        return EXIT_OK
    path = Path(args.out)
    if path.exists() and not args.force:
        raise ArtifactError(f"refusing to overwrite {path}; pass --force")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    logger.info(f"Wrote {args.kind} scenario to {path}")
    return EXIT_OK


def cmd_validate(args, settings: type[Settings]) -> int:
    """Parse and cross-check a scenario file; never writes anything"""
    cfg, _ = _load(args, settings)
    prepare(cfg)
    _emit(f"OK {cfg.kind}\n")
    return EXIT_OK


# ==================================
# PARSER
# ==================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='abisim', description='AOM bi-frequency interferometer simulator',
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--verbose', '-v', action='store_true', help='Debug logging')

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument('--config', required=True, help='Scenario TOML file')
    scenario.add_argument('--seed', type=int, default=None, help='Override scenario.seed')

    output = argparse.ArgumentParser(add_help=False)
    output.add_argument('--out', required=True, help='Output directory')
    output.add_argument('--force', action='store_true', help='Overwrite existing artifacts')
    output.add_argument('--jobs', type=int, default=None, help='Parallel workers (default ABISIM_JOBS)')

    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', parents=[common, scenario, output], help='Run a scenario')
    run.set_defaults(handler=cmd_run)

    fit = sub.add_parser('fit', parents=[common], help='Fit a trace or counts CSV')
    fit.add_argument('--csv', required=True, help='trace.csv (time_s,value) or counts.csv (window_index,counts)')
    fit.add_argument('--delta-omega', type=float, required=True, help='Beat angular frequency (rad/s)')
    fit.add_argument('--i-in', type=float, required=True, help='Input intensity in the units of the record')
    fit.add_argument('--window-s', type=float, default=None, help='Counting window of a counts file (s)')
    fit.add_argument('--mode', choices=[m.value for m in FitMode], default=FitMode.BEATING.value)
    fit.add_argument('--background', type=float, default=0.0, help='Known offset, e.g. dark counts per window')
    fit.add_argument('--max-nfev', type=int, default=4000)
    fit.set_defaults(handler=cmd_fit)

    sweep = sub.add_parser('sweep', parents=[common, scenario, output], help='Sweep one parameter')
    sweep.add_argument('--param', required=True, help='Dotted field path, e.g. timing.duty')
    sweep.add_argument('--values', required=True, help="'a:b:n' or 'v1,v2,...'")
    sweep.add_argument('--replicas', type=int, default=1, help='Matched-seed replicas per point')
    sweep.set_defaults(handler=cmd_sweep)

    init = sub.add_parser('init-config', parents=[common], help='Emit a commented default scenario')
    init.add_argument('--kind', required=True, choices=KINDS)
    init.add_argument('--out', default=None, help='Write to this file instead of stdout')
    init.add_argument('--force', action='store_true')
    init.set_defaults(handler=cmd_init_config)

    validate = sub.add_parser('validate', parents=[common, scenario], help='Validate a scenario file')
    validate.set_defaults(handler=cmd_validate)

    return parser


# ==================================
# MAIN ENTRY POINT
# ==================================

def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    setup_logging(settings, verbose=args.verbose)
    _log_banner(settings)

    try:
        return args.handler(args, settings)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (ScenarioError, LockError, FitError, UndersampledError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_SCENARIO
    except (ArtifactError, OSError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130


if __name__ == '__main__':
    sys.exit(main())
