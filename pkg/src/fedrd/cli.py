"""Command-line front end: ``fedrd {gen,train,sweep,budget,cost}``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import config as config_mod
from . import nn
from . import rng as rng_mod
from .accountant import budget_report
from .comms import closed_form, paper_totals
from .data import Standardizer, generate, load_csv, split, write_csv
from .exceptions import ConfigError
from .training import TrainingReport, budget_inputs, run_training

log = logging.getLogger("fedrd")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SUMMARY_FIELDS = ["approach", "beta", "seed", "max_auprc", "epochs_to_target", "total_bits"]


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def load_dataset(cfg: config_mod.ExperimentConfig):
    if cfg.generator is not None:
        return generate(cfg.generator)
    return load_csv(cfg.transactions, cfg.accounts)


def prepare_data(cfg: config_mod.ExperimentConfig, seed: int):
    """Split with ``seed`` and standardize with training statistics."""
    ds = load_dataset(cfg)
    train, test = split(ds, cfg.test_fraction, rng_mod.stream(seed, rng_mod.SPLIT), cfg.stratify)
    scaler = Standardizer().fit(train)
    return scaler.transform(train), scaler.transform(test)


def point_config(cfg: config_mod.ExperimentConfig, approach: str, beta: float, seed: int):
    return replace(
        cfg.train,
        approach=approach,
        beta=beta,
        seed=seed,
        alphas=tuple(cfg.alphas),
        pbm_constant=cfg.c,
    )


def run_point(cfg: config_mod.ExperimentConfig, approach: str, beta: float, seed: int) -> TrainingReport:
    train, test = prepare_data(cfg, seed)
    return run_training(point_config(cfg, approach, beta, seed), train, test)


def write_run(report: TrainingReport, run_dir: Path) -> None:
    write_atomic(run_dir / "report.csv", report.to_csv())
    privacy = report.privacy.to_text() if report.privacy is not None else "# no privacy mechanisms\n"
    write_atomic(run_dir / "privacy.txt", report.summary() + privacy)
    rows = [[r.name, int(r.measured), repr(r.expected), repr(r.ratio), repr(r.envelope), r.flagged]
            for r in report.reconciliation]
    write_atomic(run_dir / "cost.csv",
                 _csv_text(["channel", "measured_bits", "closed_form_bits", "ratio", "envelope", "flagged"], rows))


def summary_row(report: TrainingReport, approach: str, beta, seed: int, target: float) -> list:
    return [approach, beta, seed, repr(report.max_auprc), report.epochs_to_target(target), report.ledger.total()]


def sweep_points(cfg: config_mod.ExperimentConfig):
    points = []
    for approach in cfg.approaches:
        betas = cfg.betas if approach != "none" else [None]
        for beta in betas:
            for seed in cfg.seeds:
                points.append((approach, beta, seed))
    return points


def _run_dir_name(approach, beta, seed) -> str:
    b = "none" if beta is None else f"{beta:.2f}"
    return f"{approach}_beta{b}_seed{seed}"


def _execute_point(args):
    cfg, approach, beta, seed = args
    report = run_point(cfg, approach, cfg.train.beta if beta is None else beta, seed)
    report.bundle = None
    report.log = None
    return report


def run_experiment(cfg: config_mod.ExperimentConfig, out: Path, threads: int = 1) -> int:
    """Run every sweep point, write per-run artifacts and ``summary.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "config.yaml", cfg.dump())
    points = sweep_points(cfg)
    jobs = [(cfg, a, b, s) for a, b, s in points]
    rows, errors = [], []
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            futures = [pool.submit(_execute_point, j) for j in jobs]
            results = []
            for f, p in zip(futures, points):
                try:
                    results.append((p, f.result(), None))
                except Exception as exc:  # noqa: BLE001 -- recorded in the manifest
                    results.append((p, None, exc))
    else:
        results = []
        for j, p in zip(jobs, points):
            try:
                results.append((p, _execute_point(j), None))
            except Exception as exc:  # noqa: BLE001
                results.append((p, None, exc))
    for (approach, beta, seed), report, exc in results:
        if exc is not None:
            errors.append({"approach": approach, "beta": beta, "seed": seed,
                           "error": f"{type(exc).__name__}: {exc}"})
            continue
        write_run(report, out / "runs" / _run_dir_name(approach, beta, seed))
        rows.append(summary_row(report, approach, "none" if beta is None else beta, seed, cfg.target_auprc))
    write_atomic(out / "summary.csv", _csv_text(SUMMARY_FIELDS, rows))
    if errors:
        write_atomic(out / "errors.json", json.dumps(errors, indent=2) + "\n")
        return EXIT_RUNTIME
    return EXIT_OK


def _account_model_size(cfg: config_mod.ExperimentConfig, d_b: int) -> int:
    return nn.build_model(nn.embedding_spec(d_b, cfg.train.embedding_size, cfg.train.hidden), 0).size


def cmd_gen(cfg, out: Path, args) -> int:
    ds = load_dataset(cfg)
    write_csv(ds, out / "transactions.csv", out / "accounts.csv")
    print(f"wrote {ds.n} transactions and {ds.n_accounts} accounts to {out}")
    return EXIT_OK


def cmd_train(cfg, out: Path, args) -> int:
    approach, beta, seed = cfg.train.approach, cfg.train.beta, cfg.seeds[0]
    report = run_point(cfg, approach, beta, seed)
    write_atomic(out / "config.yaml", cfg.dump())
    write_run(report, out)
    sys.stdout.write(report.summary())
    return EXIT_OK


def cmd_sweep(cfg, out: Path, args) -> int:
    return run_experiment(cfg, out, args.threads)


def cmd_budget(cfg, out: Path, args) -> int:
    train, _ = prepare_data(cfg, cfg.seeds[0])
    tc = cfg.train
    iterations = tc.max_iterations or tc.epochs * -(-train.n // min(tc.batch_size, train.n))
    rows, texts = [], []
    approaches = [a for a in cfg.approaches if a != "none"] or ["summation"]
    for approach in approaches:
        for beta in cfg.betas:
            pc = point_config(cfg, approach, beta, cfg.seeds[0])
            rep = budget_report(budget_inputs(pc, train, iterations, _account_model_size(cfg, train.d_b)))
            texts.append(rep.to_text())
            for r in rep.to_rows():
                rows.append([approach, beta, r["alpha"], repr(r["eps_t"]), repr(r["eps_b"]),
                             repr(r["embedding_term"]), repr(r["account_term"]), repr(r["averaging_term"]),
                             rep.threshold_holds])
    header = ["approach", "beta", "alpha", "eps_t", "eps_b", "embedding_term", "account_term",
              "averaging_term", "threshold_holds"]
    write_atomic(out / "budget.csv", _csv_text(header, rows))
    write_atomic(out / "privacy.txt", "\n".join(texts))
    sys.stdout.write("\n".join(texts))
    return EXIT_OK


def cmd_cost(cfg, out: Path, args) -> int:
    tc = cfg.train
    if cfg.generator is not None:
        n_train = cfg.generator.n_transactions - round(cfg.test_fraction * cfg.generator.n_transactions)
        k, d_b = cfg.generator.n_banks, cfg.generator.d_b
    else:
        ds = load_dataset(cfg)
        n_train, k, d_b = ds.n - round(cfg.test_fraction * ds.n), ds.n_banks, ds.d_b
    b = min(tc.batch_size, n_train)
    per_epoch = -(-n_train // b)
    iterations = tc.max_iterations or tc.epochs * per_epoch
    theta = _account_model_size(cfg, d_b)
    rows = []
    approaches = [a for a in cfg.approaches if a != "none"] or ["summation"]
    for approach in approaches:
        # full epochs process every training transaction once, short last batch included
        samples = None if tc.max_iterations else n_train * tc.epochs
        cf = closed_form(approach, iterations, b, tc.embedding_size, tc.bins, tc.grad_bins, k, theta,
                         tc.float_bits, sample_total=samples)
        for name, bits in {**cf, **paper_totals(cf)}.items():
            rows.append([approach, name, repr(bits)])
    text = _csv_text(["approach", "channel", "bits"], rows)
    write_atomic(out / "cost.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "sweep": cmd_sweep, "budget": cmd_budget, "cost": cmd_cost}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedrd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--out", help="output directory (overrides the config's output)")
        p.add_argument("--seed", type=int, help="override seeds with a single seed")
        p.add_argument("--threads", type=int, default=1, help="parallel sweep workers")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seeds = [args.seed]
            cfg.train = replace(cfg.train, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out) if args.out else cfg.output
        if out is None:
            raise ConfigError("output: no output directory (use --out or the config's output field)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 -- mapped to the runtime exit code
        log.error("%s failed: %s: %s", args.command, type(exc).__name__, exc)
        try:
            write_atomic(Path(out) / "errors.json",
                         json.dumps([{"command": args.command, "error": f"{type(exc).__name__}: {exc}"}]) + "\n")
        except OSError:
            pass
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
