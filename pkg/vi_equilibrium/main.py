import json
import logging
import sys
from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path
from textwrap import dedent

from . import registry
from .config import (
    CONFIG_DIR,
    CONFIG_NAME,
    ConfigNotFoundError,
    InvalidTomlError,
    KeyValidationError,
    SolverConfig,
    UnknownKeyError,
    ValueValidationError,
)
from .problem import Mode, ProblemSpec, SchemaError, load_problem, parse_problem
from .runner import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, INPUT_ERRORS, RunFlags, run, run_batch

logger = logging.getLogger(__name__)


def handle_args(argv: list[str] | None = None) -> Namespace:  # noqa: D103
    parser = ArgumentParser(prog='vi-eq', formatter_class=RawTextHelpFormatter)
    parser.add_argument(
        "mode",
        nargs="?",
        choices=[str(m) for m in Mode],
        help=dedent(
            """\
            What to compute
            - vi: Variational inequality for a map or correspondence
            - gnd: Equilibrium price on the simplex
            - gnd-general: Equilibrium price on the ball intersected with a cone
            - brouwer: Fixed point of a map
            - kakutani: Fixed point of a correspondence
            - retract: Retract points onto the sphere intersected with a cone
            - verify: Recheck the certificate given by --certificate
            Default: the mode of the problem"""
        ),
    )
    parser.add_argument(
        "--mode",
        dest="mode_flag",
        choices=[str(m) for m in Mode],
        help="Same as the positional mode",
    )
    source = parser.add_mutually_exclusive_group()
    source.add_argument(
        "-b",
        "--builtin",
        choices=registry.names(),
        metavar="NAME",
        help=dedent(
            """\
            Run a built-in problem, one of:
            """
        )
        + "\n".join(registry.names()),
    )
    source.add_argument(
        "-s",
        "--spec",
        type=Path,
        help=dedent(
            """\
            Problem document (JSON). If a directory every *.json in it is run,
            --trace and --output are then directories too"""
        ),
    )
    parser.add_argument(
        "--dim", type=int, help="Dimension for the built-ins that accept any dimension"
    )
    parser.add_argument("--tol", type=float, help="Residual target for certification")
    parser.add_argument("--max-iter", type=int, help="Iteration budget for one HS solve")
    parser.add_argument(
        "--seed",
        type=int,
        help="Seed for every random choice. Falls back to $VI_EQ_SEED, then the config",
    )
    parser.add_argument("--trace", type=Path, help="Write the iterate trace here as CSV")
    parser.add_argument(
        "--oracle",
        action="store_true",
        help="Add brute force grid and continuity oracle results to the report",
    )
    parser.add_argument(
        "-o", "--output", type=Path, help="Write the report here instead of to stdout"
    )
    parser.add_argument(
        "--certificate", type=Path, help="Report or certificate to recheck in verify mode"
    )
    parser.add_argument(
        "-j",
        "--jobs",
        type=int,
        default=1,
        help="Worker processes for a directory of problems. Default: '%(default)s'",
    )
    parser.add_argument(
        "-c",
        "--config",
        type=Path,
        help=dedent(
            f"""\
            Path to .toml solver defaults. If dir will assume '{CONFIG_NAME}' in that dir
            Default: '{CONFIG_DIR / CONFIG_NAME}', used only if it exists"""
        ),
    )
    parser.add_argument(
        "--template",
        action="store_true",
        help="Generate a config template at the path specified by --config",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        help="Output additional debugging information",
    )
    return parser.parse_args(argv)


def _fail(where: object, msg: str) -> int:
    # This function is always called from an exception handler
    logger.debug("Input error", exc_info=True)  # noqa: LOG014
    logger.error("In '%s': %s", where, msg)
    return EXIT_ERROR


def _load_config(path: Path, *, explicit: bool) -> SolverConfig | int:
    '''Solver defaults from the TOML file, or an exit code on failure.'''
    try:
        return SolverConfig.from_file(path)
    except ConfigNotFoundError as e:
        if not explicit:
            return SolverConfig()
        return _fail(
            path, f"the file is missing ({type(e.__cause__).__name__}). Initialize using --template"
        )
    except InvalidTomlError as e:
        return _fail(path, f"there is invalid toml: {e}")
    except UnknownKeyError as e:
        return _fail(path, f"remove unknown keys: {' '.join(e.keys)}")
    except KeyValidationError as e:
        return _fail(
            path, f"key '{e.table}.{e.key}' has invalid type {e.actual}, expected {e.expect}"
        )
    except ValueValidationError as e:
        return _fail(path, f"key '{e.key}' = {e.value!r}: {e.reason}")


def _problem(args: Namespace, mode: Mode | None) -> ProblemSpec:
    if args.builtin is not None:
        return registry.builtin(args.builtin, args.dim)
    if args.spec is not None:
        return load_problem(args.spec)
    if mode == Mode.VERIFY and args.certificate is not None:
        # Reports carry the problem they were computed for
        doc = json.loads(args.certificate.read_text())
        if isinstance(doc, dict) and 'problem' in doc:
            return parse_problem(doc['problem'])
    raise SchemaError('problem', 'give --builtin or --spec')


def main(argv: list[str] | None = None) -> int:  # noqa: D103 C901
    logging.basicConfig(
        level=logging.INFO, format='%(asctime)s [%(levelname)s] %(name)-25s: %(message)s'
    )

    args = handle_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    explicit = args.config is not None
    config_path = args.config if explicit else CONFIG_DIR / CONFIG_NAME
    if config_path.is_dir():
        config_path /= CONFIG_NAME

    if args.template:
        try:
            SolverConfig.template(config_path)
        except FileExistsError:
            return _fail(config_path, 'delete existing file before creating template')
        logger.info("Config template generated at '%s'", config_path)
        return EXIT_PASS

    base = _load_config(config_path, explicit=explicit)
    if isinstance(base, int):
        return base

    chosen = args.mode_flag or args.mode
    mode = None if chosen is None else Mode(chosen)
    flags = RunFlags(
        mode=mode,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        trace=args.trace,
        oracle=args.oracle,
        output=args.output,
        certificate=args.certificate,
    )

    if args.spec is not None and args.spec.is_dir():
        results = run_batch(args.spec, flags, base, args.jobs)
        for result in results:
            logger.info("%s: exit %d", result.path.name, result.exit_code)
        if not results or any(r.exit_code == EXIT_ERROR for r in results):
            return EXIT_ERROR
        return EXIT_FAIL if any(r.exit_code != EXIT_PASS for r in results) else EXIT_PASS

    where = args.spec or args.builtin or args.certificate or 'command line'
    try:
        spec = _problem(args, mode)
        report = run(spec, flags, base)
    except INPUT_ERRORS as e:
        return _fail(where, str(e))
    except (OSError, json.JSONDecodeError) as e:
        return _fail(where, str(e))

    if args.output is None:
        sys.stdout.write(report.to_json() + '\n')
    return report.exit_code
