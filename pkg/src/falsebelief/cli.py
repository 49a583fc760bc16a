"""Command-line entry point: ``falsebelief <verb> ...``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import rbpf
from ._random import derive_seed
from .corpus import load_corpus, save_corpus, simulate_corpus
from .evaluation import (
    CHECKPOINTS,
    DEFAULT_THRESHOLDS,
    EvalReport,
    HumanVotes,
    annotated_eval,
    infer,
    kfold_cv,
    threshold_curve,
)
from .gibbs import GibbsConfig, gibbs_train
from .ingest import IngestError, discretize, read_event_log, read_grid_csv, validate, write_grid_csv
from .model import Assignment, ModelParams, follow_legend_theta, simulate_trial
from .oracle import BeliefTrajectory, argmax_assignment, exact_posterior


class InputError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _params(args) -> ModelParams:
    if args.params:
        return ModelParams.load(args.params)
    return ModelParams(theta=follow_legend_theta(args.fidelity))


def _filter_config(args) -> rbpf.FilterConfig:
    return rbpf.FilterConfig(n_particles=args.particles, ess_threshold_fraction=args.ess_frac)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(p) -> str:
    return " ".join(f"{x:.4f}" for x in p)


def cmd_simulate(args) -> int:
    params = _params(args)
    corpus, truths = simulate_corpus(params, args.trials, args.ticks, args.rate, args.seed)
    save_corpus(corpus, args.out)
    with open(Path(args.out) / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "assignment", "team_legend"])
        for t, g in zip(corpus.trials, truths):
            w.writerow([t.name, int(g.assignment) + 1, g.team_legend.name])
    print(f"wrote {len(corpus)} trials to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    log = read_event_log(args.log, args.mission)
    diags = validate(log, args.tick)
    for d in diags:
        print(d, file=sys.stderr)
    if any(d.level == "fatal" for d in diags):
        return 1
    grid = discretize(log, args.tick)
    write_grid_csv(grid, args.out)
    print(f"{grid.n_ticks} ticks, {grid.total_placements} placements -> {args.out}")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = GibbsConfig(args.iterations, args.burn_in, args.seed, supervised=not args.unsupervised)
    init = ModelParams.load(args.params) if args.params else ModelParams()
    params, samples = gibbs_train(corpus, cfg, init)
    params.save(args.out)
    if args.chain:
        samples.write_chain(args.chain, first_iteration=cfg.burn_in)
    print(params.to_text(), end="")
    return 0


def cmd_infer(args) -> int:
    grid = read_grid_csv(args.grid)
    params = _params(args)
    traj = infer(grid, params, args.backend, _filter_config(args), args.seed)
    if args.out:
        traj.write_csv(args.out)
    p = traj.final.p_assignment
    pred = argmax_assignment(p)
    print(f"p_assignment at t={traj.final.t}: {_fmt(p)}")
    print(f"prediction: {pred.name if pred is not None else 'NoWinner'}")
    return 0


def cmd_oracle_check(args) -> int:
    params = _params(args)
    cfg = _filter_config(args)
    tv = []
    for k in range(args.trials):
        grid, _ = simulate_trial(params, args.ticks, args.rate, seed=derive_seed(args.seed, k))
        exact = exact_posterior(grid, params).final.p_assignment
        approx = rbpf.run_trial(grid, cfg, params, derive_seed(args.seed, k, 1)).final.p_assignment
        tv.append(0.5 * np.abs(exact - approx).sum())
        print(f"trial {k:3d}  exact {_fmt(exact)}  rbpf {_fmt(approx)}  TV {tv[-1]:.4f}")
    med, worst = float(np.median(tv)), float(np.max(tv))
    ok = med <= args.median_tol and worst <= args.max_tol
    print(f"median TV {med:.4f} (<= {args.median_tol})  max TV {worst:.4f} (<= {args.max_tol})"
          f"  {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


def _report_outputs(report: EvalReport, out: Path, stem: str) -> None:
    print(report.to_table(), end="")
    report.write_csv(out / f"{stem}.csv")
    report.write_curve_csv(out / f"{stem}_curve.csv")
    (out / f"{stem}.txt").write_text(report.to_table())


def _read_votes(path) -> dict:
    votes = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                choice = tuple(Assignment(int(row[f"v{j}"]) - 1) for j in (1, 2, 3))
                votes.setdefault(row["name"], {})[float(row["checkpoint"])] = choice
            except (KeyError, ValueError) as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
    return votes


def cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    out = _out_dir(args)
    if args.mode == "kfold":
        gcfg = GibbsConfig(args.iterations, args.burn_in, args.seed)
        init = ModelParams.load(args.params) if args.params else ModelParams()
        report = kfold_cv(corpus, args.folds, args.seed, gcfg, _filter_config(args), init,
                          args.backend, args.workers, args.thresholds)
        _report_outputs(report, out, "kfold")
        return 0
    if not args.votes or not args.params:
        raise InputError("annotated evaluation needs --votes and --params")
    votes = _read_votes(args.votes)
    missing = [t.name for t in corpus.trials if t.name not in votes]
    if missing:
        raise InputError(f"no votes for trials {missing}")
    if any(t.assignment is None for t in corpus.trials):
        raise InputError("annotated trials need ground-truth assignments")
    hv = [HumanVotes(votes[t.name]) for t in corpus.trials]
    results = annotated_eval(corpus.trials, hv, ModelParams.load(args.params), args.backend,
                             _filter_config(args), args.seed, args.checkpoints, args.thresholds)
    for c, (agent, human) in results.items():
        print(f"== checkpoint {c:g} s: agent ==")
        _report_outputs(agent, out, f"agent_{c:g}")
        print(f"== checkpoint {c:g} s: human ==")
        _report_outputs(human, out, f"human_{c:g}")
    return 0


def cmd_curve(args) -> int:
    preds, truths = [], []
    with open(args.report, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                preds.append([float(row[f"pA_{j}"]) for j in (1, 2, 3)])
                truths.append(Assignment(int(row["truth"]) - 1))
            except (KeyError, ValueError) as exc:
                raise InputError(f"{args.report}: line {lineno}: {exc}") from None
    print("threshold,covered,accuracy")
    for pt in threshold_curve(np.array(preds), truths, args.thresholds):
        print(f"{pt.threshold:g},{pt.covered},{'' if pt.accuracy is None else f'{pt.accuracy:.4f}'}")
    return 0


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traj = BeliefTrajectory.read_csv(args.trajectory)
    data = traj.as_array()
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    for j in range(3):
        ax1.plot(data[:, 0], data[:, 1 + j], label=f"player {j + 1} got LegendB")
    ax1.plot(data[:, 0], data[:, 4], "k--", lw=0.8, label="team uses LegendB")
    ax1.set_ylim(0, 1)
    ax1.set_ylabel("probability")
    ax1.legend(fontsize=7, loc="upper left")
    for j in range(3):
        ax2.plot(data[:, 0], data[:, 8 + j], lw=0.8, label=f"player {j + 1}")
    ax2.set_ylim(0, 1)
    ax2.set_ylabel("p(perceived)")
    ax2.set_xlabel("tick")
    ax2.legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    plt.close(fig)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="falsebelief", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--params", help="parameter file (key = value lines)")
    common.add_argument("--fidelity", type=float, default=0.9,
                        help="marker fidelity of the built-in theta when --params is absent")

    filt = argparse.ArgumentParser(add_help=False)
    filt.add_argument("--particles", type=int, default=5000)
    filt.add_argument("--ess-frac", type=float, default=0.5)
    filt.add_argument("--backend", choices=("exact", "rbpf"), default="rbpf")

    thr = argparse.ArgumentParser(add_help=False)
    thr.add_argument("--thresholds", type=_float_list, default=list(DEFAULT_THRESHOLDS))

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic corpus")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--ticks", type=int, default=900)
    p.add_argument("--rate", type=float, default=0.2, help="placements per player per tick")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="event log (JSON lines) -> grid CSV")
    p.add_argument("log")
    p.add_argument("--mission", type=float, default=900.0, help="mission length in seconds")
    p.add_argument("--tick", type=float, default=1.0, help="tick length in seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="learn theta with the Gibbs sampler")
    p.add_argument("corpus")
    p.add_argument("--iterations", type=int, default=600)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--unsupervised", action="store_true")
    p.add_argument("--chain", help="write kept theta samples to this CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common, filt], help="belief trajectory of one trial")
    p.add_argument("grid")
    p.add_argument("--out", help="trajectory CSV")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("oracle-check", parents=[common, filt],
                       help="compare the particle filter with the exact posterior")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--ticks", type=int, default=300)
    p.add_argument("--rate", type=float, default=0.02)
    p.add_argument("--median-tol", type=float, default=0.05)
    p.add_argument("--max-tol", type=float, default=0.15)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("evaluate", parents=[common, filt, thr], help="k-fold CV or annotated set")
    p.add_argument("mode", choices=("kfold", "annotated"))
    p.add_argument("corpus")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--iterations", type=int, default=600)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--votes", help="CSV with name,checkpoint,v1,v2,v3 (annotated mode)")
    p.add_argument("--checkpoints", type=_float_list, default=list(CHECKPOINTS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curve", parents=[thr], help="coverage curve from a report CSV")
    p.add_argument("report")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("plot", help="plot a trajectory CSV")
    p.add_argument("trajectory")
    p.add_argument("--out", required=True, help="image path (PNG, PDF, ...)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, IngestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
