"""Command-line interface.

Subcommands:

* ``gen``       write a synthetic dataset to a CSV file
* ``calibrate`` one-shot threshold from dataset files, with the coverage
  bias diagnostic
* ``predict``   prediction sets for a test file given a threshold
* ``run``       full multi-trial experiment from a JSON config
* ``sweep``     grid of experiments over one config axis

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import rng, runner
from .calibration import (ScoredPool, Threshold, epsilon_bias, prediction_mask,
                          semicp_threshold)
from .datagen import SyntheticConfig, calibrate_signal_for_accuracy, \
    generate_synthetic, measure_top1_accuracy
from .dataio import load_dataset, load_threshold, save_dataset, save_threshold, \
    write_results
from .errors import ConfigurationError, SemicpError, exit_code_for
from .metrics import avg_size, coverage
from .scores import ScoreSpec
from .unlabeled import EstimatorSpec, build_labeled_records, estimate_scores


def _add_universal(p):
    p.add_argument("--seed", type=int, default=None,
                   help="base random seed (for run/sweep: overrides the "
                        "config seed)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("--out", help="output file path")


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _add_score_flags(p):
    p.add_argument("--score", default="thr", choices=["thr", "aps", "raps", "saps"])
    p.add_argument("--randomized", action="store_true",
                   help="use the randomized score variant")
    p.add_argument("--k-reg", type=int, default=2, help="raps rank offset")
    p.add_argument("--lambda", dest="lam", type=float, default=0.01,
                   help="raps rank penalty")
    p.add_argument("--weight", type=float, default=0.01, help="saps rank weight")


def _score_spec(args) -> ScoreSpec:
    return ScoreSpec(kind=args.score, k_reg=args.k_reg, lam=args.lam,
                     weight=args.weight, randomized=args.randomized)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semicp",
        description="Conformal calibration with labeled and unlabeled data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--signal", type=float, default=2.0,
                   help="true-class logit boost")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--prior", help="comma-separated class probabilities")
    p.add_argument("--target-accuracy", type=float,
                   help="tune the signal to hit this pseudo-label accuracy")
    _add_universal(p)

    p = sub.add_parser("calibrate", help="compute a threshold from files")
    p.add_argument("--labeled", required=True, help="labeled calibration CSV")
    p.add_argument("--unlabeled", help="unlabeled pool CSV (labels ignored)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--estimator", default="nnm",
                   choices=["nnm", "nnm_r", "naive", "debias", "random_match"])
    p.add_argument("--neighbors", type=int, default=1,
                   help="k for k-nearest-neighbor bias averaging")
    p.add_argument("--criterion", default="pseudo_score",
                   choices=["pseudo_score", "confidence", "score_vector",
                            "logit", "feature"])
    _add_score_flags(p)
    _add_universal(p)

    p = sub.add_parser("predict", help="prediction sets for a test file")
    p.add_argument("--test", required=True, help="test CSV")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--threshold", type=float, help="explicit cutoff value")
    group.add_argument("--threshold-file", help="JSON written by calibrate --out")
    _add_score_flags(p)
    _add_universal(p)

    p = sub.add_parser("run", help="run a multi-trial experiment")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    _add_universal(p)

    p = sub.add_parser("sweep", help="run a grid of experiments over one axis")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--axis", choices=list(runner.SWEEP_AXES),
                   help="override the config's sweep axis")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    _add_universal(p)

    return parser


def _cmd_gen(args) -> int:
    if args.out is None:
        raise ConfigurationError("gen requires --out")
    prior = None
    if args.prior:
        prior = tuple(float(x) for x in args.prior.split(","))
    cfg = SyntheticConfig(n_classes=args.classes, n_samples=args.samples,
                          signal=args.signal, noise_sigma=args.noise_sigma,
                          temperature=args.temperature, prior=prior,
                          seed=_seed(args))
    if args.target_accuracy is not None:
        signal, achieved = calibrate_signal_for_accuracy(args.target_accuracy, cfg)
        cfg = SyntheticConfig(n_classes=args.classes, n_samples=args.samples,
                              signal=signal, noise_sigma=args.noise_sigma,
                              temperature=args.temperature, prior=prior,
                              seed=_seed(args))
        print(f"signal={signal:.6f} for target accuracy "
              f"{args.target_accuracy} (probe achieved {achieved:.4f})")
    ds = generate_synthetic(cfg)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples x {ds.n_classes} classes to {args.out} "
          f"(top-1 accuracy {measure_top1_accuracy(ds):.4f})")
    return 0


def _cmd_calibrate(args) -> int:
    spec = _score_spec(args)
    labeled = load_dataset(args.labeled)
    if not labeled.fully_labeled:
        labeled = labeled.subset(np.nonzero(labeled.labels >= 0)[0])
    records = build_labeled_records(labeled, spec)
    n = len(labeled)

    if spec.randomized:
        u_lab = rng.uniforms(rng.stream(_seed(args), 0, 1), np.arange(n))
        lab_scores = records.true_a + records.true_b * u_lab
    else:
        lab_scores = records.true_scores

    est_scores = np.empty(0)
    big_n = 0
    if args.unlabeled:
        unlabeled = load_dataset(args.unlabeled)
        big_n = len(unlabeled)
        estimator = EstimatorSpec(kind=args.estimator, k=args.neighbors,
                                  criterion=args.criterion)
        u_unlab = None
        if spec.randomized:
            u_unlab = rng.uniforms(rng.stream(_seed(args), 0, 2), np.arange(big_n))
        est_scores = estimate_scores(unlabeled, records, spec, estimator,
                                     stream_key=rng.stream(_seed(args), 0, 3),
                                     u=u_unlab)

    threshold = semicp_threshold(ScoredPool(lab_scores, est_scores), args.alpha)
    eps = 0.0
    if big_n and not threshold.include_all:
        eps = epsilon_bias(lab_scores, est_scores, threshold, n, big_n)

    print(f"n={n} N={big_n} alpha={args.alpha} pool={threshold.pool_size}")
    if threshold.include_all:
        print(f"threshold=INCLUDE_ALL (level {threshold.level_index} exceeds "
              f"pool size {threshold.pool_size})")
    else:
        print(f"threshold={threshold.value:.12g} "
              f"(level {threshold.level_index} of {threshold.pool_size})")
    print(f"epsilon={eps:.12g}")
    if args.out:
        save_threshold(threshold, args.out, extra={"n": n, "N": big_n,
                                                   "epsilon": eps})
        print(f"wrote threshold to {args.out}")
    return 0


def _cmd_predict(args) -> int:
    spec = _score_spec(args)
    test = load_dataset(args.test)
    if args.threshold_file:
        threshold = load_threshold(args.threshold_file)
    else:
        threshold = Threshold(value=args.threshold, include_all=False,
                              level_index=0, pool_size=0, alpha=0.0)
    u = None
    if spec.randomized:
        u = rng.uniforms(rng.stream(_seed(args), 0, 4), np.arange(len(test)))
    mask = prediction_mask(test.probs, spec, threshold, u)

    labeled_rows = test.labels >= 0
    print(f"samples={len(test)} avg_size={avg_size(mask):.6g}")
    if np.any(labeled_rows):
        cov = coverage(mask[labeled_rows], test.labels[labeled_rows])
        print(f"coverage={cov:.6g} (over {int(labeled_rows.sum())} labeled rows)")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,label,set_size,covered,classes\n")
            for i in range(len(test)):
                classes = np.nonzero(mask[i])[0]
                label = int(test.labels[i])
                covered = "" if label < 0 else str(int(mask[i, label]))
                fh.write(f"{i},{label},{classes.size},{covered},"
                         f"{'|'.join(str(c) for c in classes)}\n")
        print(f"wrote prediction sets to {args.out}")
    return 0


def _print_summaries(summaries):
    for name, s in summaries.items():
        line = (f"method={name} trials={s.n_trials} "
                f"mean_coverage={s.mean_coverage:.4f} cov_gap={s.cov_gap:.4f} "
                f"over={s.over_cov_gap:.4f} under={s.under_cov_gap:.4f} "
                f"avg_size={s.mean_avg_size:.4f}")
        if s.group_cov_gap is not None:
            line += f" group_cov_gap={s.group_cov_gap:.4f}"
        print(line)


def _cmd_run(args) -> int:
    config = runner.load_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    summaries = runner.run_experiment(config, jobs=args.jobs)
    _print_summaries(summaries)
    if args.out:
        runner.write_experiment_results(config, summaries, args.out, args.format)
        print(f"wrote results to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    if (args.axis is None) != (args.values is None):
        raise ConfigurationError("--axis and --values must be given together")
    if args.axis:
        config = runner.load_config(args.config)
        axis = args.axis
        values = [_parse_sweep_value(v) for v in args.values.split(",")]
    else:
        config, axis, values = runner.sweep_from_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    records = runner.run_sweep(config, axis, values, jobs=args.jobs)
    for rec in records:
        print(f"{axis}={rec['sweep_value']} method={rec['method']} "
              f"cov_gap={rec['cov_gap']:.4f} avg_size={rec['avg_size']:.4f}")
    if args.out:
        write_results(records, args.out, args.format)
        print(f"wrote sweep results to {args.out}")
    return 0


def _parse_sweep_value(text: str):
    try:
        return int(text)
    except ValueError:
        try:
            return float(text)
        except ValueError:
            return text


_COMMANDS = {
    "gen": _cmd_gen,
    "calibrate": _cmd_calibrate,
    "predict": _cmd_predict,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SemicpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
