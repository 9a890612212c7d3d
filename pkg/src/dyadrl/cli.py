"""Command-line entry point: ``dyadrl <command> [--config FILE] --out DIR``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import _seeding
from .config import ExperimentConfig, load_config
from .env_model.calibration import CalibrationError, calibrate_population_burden
from .env_model.params import ConfigurationError, Population, generate_population, write_population
from .env_model.variants import VariantKind
from .harness import io
from .harness.experiments import (
    ablation_suite,
    collaboration_experiment,
    cumulative_improvement,
    learning_curves,
    summarize,
)
from .harness.trial import Testbed, build_testbed

log = logging.getLogger("dyadrl")

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_CONFIG, EXIT_CALIBRATION, EXIT_IO = 0, 1, 2, 3, 4, 5
COMMANDS = ("calibrate", "run", "ablate", "collaborate", "export-population")


def base_population(cfg: ExperimentConfig) -> Population:
    pop = generate_population(cfg.population_seed, cfg.population_size, cfg.population)
    rng = _seeding.stream(cfg.population_seed, _seeding.SETUP, "burden")
    return calibrate_population_burden(pop, rng)


def make_testbed(cfg: ExperimentConfig, base: Population, target: float, kind=None) -> Testbed:
    variant = cfg.variant_of(kind or cfg.variant.kind)
    log.info("calibrating %s at STE %g", variant.kind.value, target)
    return build_testbed(base, target, variant, seed=cfg.population_seed, n_eval=cfg.n_eval,
                         q_config=cfg.q_config, tol=cfg.tol, mediator_gamma=cfg.mediator_gamma)


def _cell_name(alg: str, target: float, kind) -> str:
    safe = alg.replace("(", "_").replace(")", "").replace(",", "-")
    return f"{safe}_ste{target:g}_{VariantKind(kind).value}"


def _write_curves(out: Path, name: str, metrics, baseline) -> list[str]:
    written = []
    for suffix, per_dyad in (("", True), ("_sum", False)):
        mean, sd = cumulative_improvement(metrics, baseline, per_dyad=per_dyad)
        fname = f"curve_{name}{suffix}.csv"
        io.write_curve(out / fname, mean, sd, metrics.n_runs)
        written.append(fname)
    return written


def cmd_export_population(cfg, out, jobs):
    pop = base_population(cfg)
    write_population(out / "population.csv", pop)
    return ["population.csv"], {}


def cmd_calibrate(cfg, out, jobs):
    base = base_population(cfg)
    rows, files = [], []
    for target in cfg.ste_targets:
        tb = make_testbed(cfg, base, target)
        fname = f"population_ste{target:g}.csv"
        write_population(out / fname, tb.population)
        files.append(fname)
        rows.append({"ste_target": target, "c_treat": tb.c_treat, "achieved_ste": tb.achieved_ste,
                     "reference_c_treat": tb.reference_c_treat if tb.reference_c_treat is not None else "",
                     "variant": tb.variant.kind.value})
    io.write_rows(out / "calibration.csv", rows)
    return files + ["calibration.csv"], {"calibration": rows}


def cmd_run(cfg, out, jobs):
    base = base_population(cfg)
    rows, files = [], []
    for target in cfg.ste_targets:
        tb = make_testbed(cfg, base, target)
        metrics, baseline = learning_curves(tb, cfg.algorithms, cfg.n_runs, cfg.n_dyads, cfg.master_seed, jobs)
        for label, m in metrics.items():
            files += _write_curves(out, _cell_name(label, target, tb.variant.kind), m, baseline)
            rows.append(dict(summarize(m, baseline).as_row(), ste_target=target,
                             variant=tb.variant.kind.value, c_treat=tb.c_treat))
    io.write_rows(out / "summary.csv", rows)
    return files + ["summary.csv"], {}


def cmd_ablate(cfg, out, jobs):
    base = base_population(cfg)
    testbeds = [make_testbed(cfg, base, t, k) for k in cfg.ablation_variants for t in cfg.ste_targets]
    report = ablation_suite(testbeds, cfg.algorithms, cfg.n_runs, cfg.n_dyads, cfg.master_seed, jobs)
    rows = []
    for tb, cell in zip(testbeds, report):
        for label, s in cell.summaries.items():
            rows.append(dict(s.as_row(), testbed=cell.testbed,
                             overlap_ok="" if cell.overlap_ok is None else cell.overlap_ok))
    io.write_rows(out / "ablation.csv", rows)
    return ["ablation.csv"], {}


def cmd_collaborate(cfg, out, jobs):
    base = base_population(cfg)
    target = 0.5 if 0.5 in cfg.ste_targets else max(cfg.ste_targets)
    tb = make_testbed(cfg, base, target)
    rows = []
    for trained, varied, held in (("REL", "aya", "care"), ("CARE", "rel", "aya")):
        for p in cfg.collab_probabilities:
            fixed = {varied: p, held: cfg.collab_other}
            res = collaboration_experiment(tb, trained, fixed, cfg.collab_dyads, cfg.collab_reps, cfg.master_seed)
            rows.append({"trained": trained, "varied": varied, "probability": p,
                         "intervention_rate": res.mean, "se": res.se, "n_reps": cfg.collab_reps})
    io.write_rows(out / "collaboration.csv", rows)
    return ["collaboration.csv"], {"ste_target": target}


HANDLERS = {"calibrate": cmd_calibrate, "run": cmd_run, "ablate": cmd_ablate,
            "collaborate": cmd_collaborate, "export-population": cmd_export_population}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyadrl", description="Dyadic multi-agent RL simulation experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI experiment configuration (defaults if omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--runs", type=int, help="override the number of runs")
    p.add_argument("--jobs", type=int, help="worker processes (env DYADRL_JOBS)")
    p.add_argument("--force", action="store_true", help="overwrite an existing run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _jobs(flag) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("DYADRL_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"DYADRL_JOBS must be an integer, got {env!r}") from None
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.runs is not None:
            if args.runs < 1:
                raise ConfigurationError("--runs must be >= 1")
            cfg.n_runs = args.runs
        jobs = _jobs(args.jobs)
        out = io.prepare_output(args.out, args.force)
        files, extra = HANDLERS[args.command](cfg, out, jobs)
        io.write_manifest(out, args.command, cfg.text, cfg.master_seed, files,
                          dict(extra, n_runs=cfg.n_runs, jobs_independent=True))
    except ConfigurationError as e:
        print(f"dyadrl: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as e:
        print(f"dyadrl: calibration failed: {e}", file=sys.stderr)
        return EXIT_CALIBRATION
    except OSError as e:
        print(f"dyadrl: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # noqa: BLE001
        print(f"dyadrl: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
