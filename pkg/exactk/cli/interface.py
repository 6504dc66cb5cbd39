import argparse
import logging
from typing import List, Optional

from rich.console import Console
from rich.logging import RichHandler

from exactk.cli.components.command_runner import SWEEP_KINDS, CommandRunner
from exactk.cli.components.output_formatter import OutputFormatter
from exactk.core.errors import ConfigurationError, ContractViolation, DataError, InfeasibleError
from exactk.core.manifest import artifact_version
from exactk.evaluation.harness import METHODS
from exactk.training.config import FEED_MODES

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4

SWITCH = ("on", "off")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (InfeasibleError, FloatingPointError)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (DataError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ConfigurationError, ContractViolation)):
        return EXIT_USAGE
    return EXIT_FAILURE


def configure_logging(console: Console, verbose: bool = False) -> logging.Logger:
    logger = logging.getLogger("exactk")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.addHandler(RichHandler(console=console, show_path=False, markup=False))
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    return logger


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so flag errors render like every other error."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exactk", description="Exact-K card recommendation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    gen = commands.add_parser("gen-data", help="generate train/test card samples")
    gen.add_argument("--mode", choices=("implicit", "oracle"), default="oracle")
    gen.add_argument("--k", type=int, default=4)
    gen.add_argument("--n", type=int, default=20)
    gen.add_argument("--users", type=int, default=200)
    gen.add_argument("--items", type=int, default=200)
    gen.add_argument("--dim", type=int, default=8, help="latent dimension of the synthetic world")
    gen.add_argument("--beta", type=float, default=0.1, help="pairwise synergy coefficient")
    gen.add_argument("--temperature", type=float, default=1.0)
    gen.add_argument("--ratings", help="MovieLens-style ratings file (implicit mode)")
    gen.add_argument("--constraint", choices=("none", "min_ned"), default="none")
    gen.add_argument("--tau", type=float)
    gen.add_argument("--split", type=float, default=0.8)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", required=True)

    train = commands.add_parser("train", help="fit the reward estimator and the policy")
    train.add_argument("--data", required=True)
    train.add_argument("--config")
    train.add_argument("--alpha", type=float)
    train.add_argument("--policy-sampling", choices=SWITCH)
    train.add_argument("--hill-climbing", choices=SWITCH)
    train.add_argument("--feed", choices=FEED_MODES, help="what policy-sampled supervision feeds back")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--out", required=True)

    ev = commands.add_parser("eval", help="score card methods on the test split")
    ev.add_argument("--data", required=True)
    ev.add_argument("--policy")
    ev.add_argument("--reward")
    ev.add_argument("--method", action="append", help=f"repeatable; one of {', '.join(METHODS)}")
    ev.add_argument("--report", required=True)
    ev.add_argument("--beam-size", type=int)
    ev.add_argument("--config")
    ev.add_argument("--seed", type=int)

    export = commands.add_parser("export-attention", help="dump encoder attention weights as CSV")
    export.add_argument("--policy", required=True)
    export.add_argument("--data", required=True)
    export.add_argument("--sample-index", type=int, default=0)
    export.add_argument("--split", choices=("train", "test"), default="test")
    export.add_argument("--out", required=True)

    sweep = commands.add_parser("sweep", help="ablation grid, alpha sweep or beam-size sweep")
    sweep.add_argument("--kind", choices=SWEEP_KINDS, default="ablation")
    sweep.add_argument("--data", required=True)
    sweep.add_argument("--config")
    sweep.add_argument("--alphas", help="comma-separated alpha values")
    sweep.add_argument("--max-beam", type=int, default=5)
    sweep.add_argument("--policy")
    sweep.add_argument("--reward")
    sweep.add_argument("--epochs", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--out", required=True)
    return parser


class ExactKInterface:
    def __init__(self, console: Optional[Console] = None) -> None:
        self.console = console or Console()
        self.parser = build_parser()
        self.runner = CommandRunner(self.console)
        self.handlers = {
            "gen-data": self.runner.gen_data,
            "train": self.runner.train,
            "eval": self.runner.eval,
            "export-attention": self.runner.export_attention,
            "sweep": self.runner.sweep,
        }

    def run(self, argv: Optional[List[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except UsageError as exc:
            OutputFormatter.print_error(self.console, str(exc))
            return EXIT_USAGE

        configure_logging(self.console, args.verbose)
        OutputFormatter.print_banner(self.console, args.command, artifact_version())
        try:
            return self.handlers[args.command](args)
        except KeyboardInterrupt:
            OutputFormatter.print_warning(self.console, "Interrupted; no manifest was written.")
            return EXIT_FAILURE
        except Exception as exc:
            code = exit_code_for(exc)
            if code == EXIT_FAILURE:
                logging.getLogger("exactk").exception("unexpected failure in %s", args.command)
            OutputFormatter.print_error(self.console, f"{args.command} failed (exit {code})", exc)
            return code


def run_cli(argv: Optional[List[str]] = None) -> int:
    interface = ExactKInterface()
    return interface.run(argv)
