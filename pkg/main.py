"""
HierSAIL - Main Application
Command-line entry point: one subcommand per experiment, each writing its
data files and a run manifest under --out.
"""

import sys

import rich_click as click

from config import TOOLKIT_NAME, TOOLKIT_VERSION
from core import ToolkitError
from runconfig import ConfigError, RunConfig, load_run_config, apply_overrides
from experiments import run_experiment
from utils import console_log_func

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

COMMANDS = {
    "map-elites": "Illuminate a problem with plain MAP-Elites on the true objective.",
    "sail": "Surrogate-assisted illumination with UCB acquisition.",
    "fig5": "Hill climbing on GP versus BANN surrogates of 1-D Ackley, over many replicates.",
    "fig6": "Per-segment PCA reduction and local-versus-flat model error on an elite set.",
    "bakeoff": "Training time, prediction time, RMSE and rank correlation per surrogate and sample size.",
    "surface": "Smoothness of GP and BANN mean surfaces over 1-D Ackley.",
    "export": "Illuminate, build the hierarchical surrogate on the elites, export archive and tree.",
}


@click.group(name=TOOLKIT_NAME)
@click.version_option(TOOLKIT_VERSION, prog_name=TOOLKIT_NAME)
def cli():
    """Quality-diversity illumination with GP, BANN and hierarchical surrogates."""


def _make_command(experiment: str, help_text: str):
    @click.command(name=experiment, help=help_text)
    @click.option("--config", "config_path", type=str, default=None, help="YAML run configuration.")
    @click.option("--seed", type=int, default=None, help="Master seed (overrides the config).")
    @click.option("--out", type=str, default=None, help="Output directory (overrides the config).")
    @click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker threads.")
    @click.option("--verbose", is_flag=True, help="Show progress messages.")
    def command(config_path, seed, out, workers, verbose):
        log_func = console_log_func(verbose)
        if config_path:
            cfg = load_run_config(config_path, experiment)
        else:
            cfg = RunConfig(experiment=experiment)
        cfg = apply_overrides(cfg, seed=seed, out=out, workers=workers)
        log_func(f"{experiment}: problem {cfg.problem}, seed {cfg.seed}, output {cfg.out}", "info")
        result = run_experiment(cfg, log_func=log_func)
        log_func(f"{experiment}: manifest written to {result.manifest}", "success")
        return EXIT_OK

    return command


for _name, _help in COMMANDS.items():
    cli.add_command(_make_command(_name, _help))


def cli_main(argv=None) -> int:
    """Run the command line; returns 0 on success, 1 on usage errors, 2 on failures."""
    log_func = console_log_func(verbose=True)
    try:
        result = cli.main(args=argv, prog_name=TOOLKIT_NAME, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        log_func("Aborted", "error")
        return EXIT_USAGE
    except ConfigError as e:
        log_func(f"Config error: {e}", "error")
        return EXIT_USAGE
    except ToolkitError as e:
        log_func(f"Run failed: {e}", "error")
        return EXIT_FAILURE
    except Exception as e:
        log_func(f"Run failed unexpectedly: {type(e).__name__}: {e}", "error")
        return EXIT_FAILURE
    return EXIT_OK if result is None else int(result)


if __name__ == "__main__":
    sys.exit(cli_main())
