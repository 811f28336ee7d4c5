"""Command-line entry point.

Subcommands: ``simulate`` (generate a dataset), ``fit`` (maximum
likelihood), ``analyze`` (risk-category tables and trajectories, after a
fit or on fully pinned parameters), ``lrt`` (nested regime comparison).
Reports are written to files under ``[output] dir``; stderr carries only
diagnostics, and nothing is printed to stdout.

Exit codes: 0 success, 1 malformed dataset, 2 non-convergence,
3 configuration error.

The ``ADDAMSFRAILTY_THREADS`` environment variable is accepted for
interface compatibility; evaluation is deterministic regardless of its
value.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import report as rep
from .analysis import hr_within_table, rc_table, rfv_parameter_table, trajectories
from .config import RunConfig, load_config
from .data import read_csv, write_csv
from .errors import (
    ConfigError,
    DatasetError,
    FrailtyModelError,
    IdentifiabilityError,
    InvalidParameters,
    NonConvergence,
    NonFiniteEvaluation,
)
from .estimation import fit as ml_fit
from .estimation import lrt as lr_test
from .estimation import pinned_result
from .family import classify_branch
from .likelihood import LikelihoodWorkspace
from .simulate import SimConfig, generate

__all__ = ["main", "ingest"]

log = logging.getLogger("addamsfrailty")

EXIT_OK = 0
EXIT_DATA = 1
EXIT_NONCONVERGENCE = 2
EXIT_CONFIG = 3


def ingest(path):
    """Read and validate a dataset file; DatasetError lists every problem."""
    return read_csv(path)


def _load(args) -> RunConfig:
    return load_config(args.config, args.set or [])


def _read_data(config: RunConfig):
    if not config.data_path:
        raise ConfigError("[data] path is required for this command")
    return ingest(config.data_path)


def _outdir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_fit(config: RunConfig):
    data = _read_data(config)
    spec = config.build_spec()
    init = "spec" if config.params and not config.pin_all else None
    result = ml_fit(spec, data, init=init,
                    maxiter=config.fit_maxiter, seed=config.fit_seed)
    if not result.converged:
        raise NonConvergence(
            f"gradient norm {result.gradient_norm:.3g} after "
            f"{result.iterations} iterations"
        )
    return result


def cmd_fit(args) -> int:
    config = _load(args)
    result = _run_fit(config)
    out = _outdir(config)
    table = rfv_parameter_table(result)
    payload = {
        "command": "fit",
        "fit": rep.fit_payload(result),
        "rfv_params": rep.rfv_params_payload(table),
    }
    rep.write_json_report(out / "report.json", payload)
    rep.write_params_csv(out / "params.csv", result)
    rep.write_rfv_params_csv(out / "rfv_params.csv", table)
    log.info("fit converged: loglik %.6g, %d free parameters",
             result.loglik, result.n_free)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args)
    spec = config.build_spec()
    sim = SimConfig(
        spec=spec,
        n_clusters=config.sim_n_clusters,
        seed=config.sim_seed,
        monitoring=config.sim_monitoring,
        stratum_probs=config.sim_stratum_probs,
    )
    data = generate(sim)
    out = _outdir(config)
    target = Path(config.data_path) if config.data_path else out / "data.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, target)
    log.info("simulated %d clusters to %s", len(data.clusters), target)
    return EXIT_OK


def cmd_analyze(args) -> int:
    config = _load(args)
    if config.pin_all:
        spec = config.build_spec()
        if config.data_path:
            data = _read_data(config)
            loglik = LikelihoodWorkspace(spec, data).total_loglik(spec)
        else:
            loglik = float("nan")
        result = pinned_result(spec, loglik)
    else:
        result = _run_fit(config)
    out = _outdir(config)
    k_max = config.analyze_k_max
    discrete = [
        lvl for lvl in result.spec.frailty_link.levels
        if classify_branch(result.spec.frailty_params(lvl)).is_discrete
    ]
    table = rc_table(result, strata=discrete, k_max=k_max)
    hr_rows = hr_within_table(result, k_max=k_max)
    rfv_table = rfv_parameter_table(result)
    curves = []
    units = list(config.analyze_units or result.spec.units)
    for lvl in result.spec.frailty_link.levels:
        curves.extend(
            trajectories(result, lvl, units=units, times=config.analyze_time_grid)
        )
    payload = {
        "command": "analyze",
        "fit": rep.fit_payload(result),
        "rfv_params": rep.rfv_params_payload(rfv_table),
        "rc_table": rep.rc_table_payload(table),
    }
    rep.write_json_report(out / "report.json", payload)
    rep.write_params_csv(out / "params.csv", result)
    rep.write_rfv_params_csv(out / "rfv_params.csv", rfv_table)
    rep.write_rc_table_csv(out / "rc_table.csv", table)
    rep.write_hr_within_csv(out / "hr_within.csv", hr_rows)
    rep.write_trajectories_csv(out / "trajectories.csv", curves)
    return EXIT_OK


def cmd_lrt(args) -> int:
    config = _load(args)
    data = _read_data(config)
    init = "spec" if config.params and not config.pin_all else None
    fits = {}
    for label, kind in (("null", config.lrt_null_regime),
                        ("alt", config.lrt_alt_regime)):
        spec = config.build_spec(regimes=config.regimes_for(kind))
        result = ml_fit(spec, data, init=init,
                        maxiter=config.fit_maxiter, seed=config.fit_seed)
        if not result.converged:
            raise NonConvergence(f"{label} model did not converge")
        fits[label] = result
    stat, p_value = lr_test(fits["null"], fits["alt"])
    df = fits["alt"].n_free - fits["null"].n_free
    out = _outdir(config)
    payload = {
        "command": "lrt",
        "null": {"regime": config.lrt_null_regime,
                 "fit": rep.fit_payload(fits["null"])},
        "alt": {"regime": config.lrt_alt_regime,
                "fit": rep.fit_payload(fits["alt"])},
        "lrt": {
            "statistic": rep.fmt(stat),
            "df": str(df),
            "p_value": rep.fmt(p_value),
        },
    }
    rep.write_json_report(out / "report.json", payload)
    log.info("LRT statistic %.6g on %d df (p = %.3g)", stat, df, p_value)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="addamsfrailty",
        description="Shared discrete-frailty models for clustered "
                    "current-status data",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug-level diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, doc in (
        ("fit", cmd_fit, "maximum-likelihood fit"),
        ("simulate", cmd_simulate, "generate a synthetic dataset"),
        ("analyze", cmd_analyze, "risk-category tables and trajectories"),
        ("lrt", cmd_lrt, "likelihood-ratio test of nested regimes"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config entry")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    threads = os.environ.get("ADDAMSFRAILTY_THREADS")
    if threads is not None:
        try:
            if int(threads) < 1:
                raise ValueError
        except ValueError:
            log.error("ADDAMSFRAILTY_THREADS must be a positive integer")
            return EXIT_CONFIG
    try:
        return args.func(args)
    except DatasetError as exc:
        log.error("dataset rejected:")
        for problem in exc.problems:
            log.error("  %s", problem)
        return EXIT_DATA
    except NonConvergence as exc:
        log.error("no convergence: %s", exc)
        return EXIT_NONCONVERGENCE
    except NonFiniteEvaluation as exc:
        log.error("optimization failed: %s", exc)
        return EXIT_NONCONVERGENCE
    except (ConfigError, IdentifiabilityError, InvalidParameters) as exc:
        log.error("bad configuration: %s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return EXIT_DATA
    except FrailtyModelError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
