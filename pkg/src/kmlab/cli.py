"""Command-line entry point: ``kmlab <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from kmlab.complexity import enumerate_programs
from kmlab.core import error_loss, fmt_rational, parse_rational, three_action_loss
from kmlab.environments import env_from_descriptor, sample
from kmlab.experiments import EXPERIMENTS, ExperimentConfig, get_table, run_experiments, write_verdicts
from kmlab.machines import machine_from_descriptor
from kmlab.predict import PredictiveFunction, from_table, normalize, normalized_step, step_report, write_step_csv


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--machine", default="R", help='machine descriptor, "R" or "U:s=<n>:inner=R"')
    p.add_argument("--budget-l", type=int, default=14, help="maximum program length")
    p.add_argument("--budget-s", type=int, default=4096, help="step budget per run")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--s", type=int, default=6, help="block size")
    p.add_argument("--eps", type=parse_rational, default=parse_rational("1/24"), help="num/den")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--cache", default=None, help="directory for saved complexity tables")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="kmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("enumerate", parents=[common], help="run every program up to the budget")
    sub.add_parser("table", parents=[common], help="write the Km/K/M table as CSV")
    pr = sub.add_parser("predict", parents=[common], help="predict a sampled sequence")
    pr.add_argument("--env", default="det:zeros", help='e.g. "det:alt", "bern:3/8", "block:s=6"')
    pr.add_argument("--predictor", choices=["m", "mnorm", "M", "Mnorm", "k"], default="mnorm")
    pr.add_argument("--loss", choices=["error", "three"], default="error")
    ex = sub.add_parser("experiment", parents=[common], help="run one experiment or all")
    ex.add_argument("id", choices=[*EXPERIMENTS, "all"])
    sub.add_parser("all", parents=[common], help="run every experiment")
    return parser


def _config(args, experiment: str = "all") -> ExperimentConfig:
    return ExperimentConfig(
        experiment=experiment,
        machine=args.machine,
        budget_l=args.budget_l,
        budget_s=args.budget_s,
        horizon=args.horizon,
        s=args.s,
        eps=args.eps,
        seed=args.seed,
        out=args.out,
        cache=args.cache,
    )


def _start(cfg: ExperimentConfig, extra: list[str] = ()) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.txt").write_text("\n".join(cfg.manifest_lines() + list(extra)) + "\n")
    write_verdicts([], out / "verdicts.csv")
    return out


def cmd_enumerate(cfg: ExperimentConfig) -> int:
    out = _start(cfg)
    records = enumerate_programs(machine_from_descriptor(cfg.machine), cfg.budget)
    with open(out / "programs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["program", "output", "consumed", "halted", "steps", "exhausted"])
        for r in records:
            w.writerow([r.program, r.output, r.consumed, int(r.halted), r.steps, int(r.exhausted)])
    print(f"{len(records)} programs written to {out / 'programs.csv'}")
    return 0


def cmd_table(cfg: ExperimentConfig) -> int:
    out = _start(cfg)
    base = get_table(cfg)
    maxlen = cfg.horizon_or(8)
    table = type(base)(base.descriptor, base.budget, base.records, maxlen)
    table.write_csv(out / "table.csv")
    print(f"table for {cfg.machine} up to length {maxlen} written to {out / 'table.csv'}")
    return 0


def cmd_predict(cfg: ExperimentConfig, env_name: str, which: str, loss_name: str) -> int:
    out = _start(cfg, [f"env={env_name}", f"predictor={which}", f"loss={loss_name}"])
    env = env_from_descriptor(env_name)
    table = get_table(cfg)
    b: PredictiveFunction = from_table(table, which[0])
    if which.endswith("norm"):
        b = normalize(b)
    loss = error_loss(2) if loss_name == "error" else three_action_loss(parse_rational("1/3") + cfg.eps)
    x = sample(env, cfg.horizon_or(16), cfg.seed)
    reports = []
    for t in range(1, len(x) + 1):
        ctx = x[: t - 1]
        post = normalized_step(b, ctx)
        mu = (env.conditional(ctx, "0"), env.conditional(ctx, "1"))
        reports.append(step_report(t, ctx, post, mu, loss))
    write_step_csv(reports, out / "predict.csv")
    total_b = sum(r.loss_b for r in reports)
    total_mu = sum(r.loss_mu for r in reports)
    print(f"sequence {x}")
    print(f"cumulative loss {fmt_rational(total_b)} (Bayes-optimal {fmt_rational(total_mu)})")
    return 0


def cmd_experiments(cfg: ExperimentConfig) -> int:
    verdicts = run_experiments(cfg)
    for v in verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.experiment}")
        for note in v.notes:
            print(f"      {note}")
    return 0 if all(v.passed for v in verdicts) else 1


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    experiment = args.id if args.command == "experiment" else "all"
    try:
        cfg = _config(args, experiment)
        if args.command == "enumerate":
            return cmd_enumerate(cfg)
        if args.command == "table":
            return cmd_table(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.env, args.predictor, args.loss)
        return cmd_experiments(cfg)
    except ValueError as exc:
        parser.error(str(exc))
    return 2


def main() -> None:
    sys.exit(cli_main())
