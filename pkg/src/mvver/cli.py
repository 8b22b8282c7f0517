"""``mvver`` command line interface.

Global flags come before the subcommand::

    mvver --out-dir runs/a --seed 3 gen-blobs --classes 5 --per-class 200
    mvver --out-dir runs/a inject --input runs/a/blobs.csv --ratio 0.4
    mvver --out-dir runs/a curate --input runs/a/noisy.csv --truth runs/a/blobs.csv
    mvver --config exp.json --out-dir runs/exp experiment

On failure a JSON error record is written to stderr and the exit code is 1.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from mvver.classifier import ClassifierConfig, Model, fit
from mvver.dataset import NoiseSpec, inject_noise, load_csv, make_blobs, save_csv
from mvver.entropy import entropy_histogram, records_to_csv
from mvver.harness import ExperimentConfig, evaluate, run_experiment, write_report
from mvver.refine import run_refinement, train_final


def _add_classifier_args(p):
    p.add_argument("--kind", choices=("softmax", "mlp"))
    p.add_argument("--hidden-units", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--l2", type=float)


def _classifier_overrides(args):
    keys = ("kind", "hidden_units", "epochs", "learning_rate", "batch_size", "l2")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _add_refine_args(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--iterations", "-M", type=int, dest="M")
    p.add_argument("--views", "-n", type=int, dest="n")
    p.add_argument("--strong-label", choices=("voted", "original"))
    _add_classifier_args(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="mvver", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="experiment config JSON")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--backend", choices=("numpy", "numba"))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-blobs", help="write a synthetic Gaussian-blob dataset")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--output", default="blobs.csv")

    p = sub.add_parser("inject", help="flip a fixed fraction of labels in every class")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--output", default="noisy.csv")
    p.add_argument("--ledger", default="ledger.json")

    p = sub.add_parser("curate", help="run iterative voting + entropy refinement")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="clean labels for purity reporting")
    p.add_argument("--test", type=Path, help="clean holdout for per-iteration accuracy")
    p.add_argument("--dump-ids", action="store_true", help="write per-iteration id lists")
    p.add_argument("--votes", action="store_true", help="write the first iteration's vote table")
    p.add_argument("--train-final", action="store_true", help="also fit and save the final model")
    _add_refine_args(p)

    p = sub.add_parser("train", help="fit a classifier on a CSV dataset")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", default="model.json")
    _add_classifier_args(p)

    p = sub.add_parser("eval", help="overall accuracy of a saved model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)

    sub.add_parser("experiment", help="repeated noisy-label experiment (needs --config or defaults)")

    p = sub.add_parser("entropy-hist", help="weak-set entropy histogram at a given iteration")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--iteration", type=int, default=2)
    p.add_argument("--bins", type=int, default=20)
    _add_refine_args(p)
    return parser


def _experiment_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _refine_config(args):
    cfg = _experiment_config(args).refine
    seed = args.seed if args.seed is not None else cfg.seed
    updates = {k: getattr(args, k) for k in ("alpha", "M", "n", "strong_label")
               if getattr(args, k, None) is not None}
    clf = _classifier_overrides(args)
    if clf:
        for key in ("view_classifier", "strong_classifier", "final_classifier"):
            updates[key] = replace(getattr(cfg, key), **clf)
    return replace(cfg, seed=seed, **updates)


def _write_ids(path, ids):
    Path(path).write_text("id\n" + "".join(f"{i}\n" for i in np.asarray(ids).tolist()))


def cmd_gen_blobs(args, out):
    ds, _ = make_blobs(args.classes, args.per_class, args.dim, args.separation, args.spread,
                       seed=args.seed or 0)
    save_csv(ds, out / args.output)
    return {"output": str(out / args.output), "N": len(ds), "classes": ds.num_classes}


def cmd_inject(args, out):
    ds = load_csv(args.input)
    noisy, ledger = inject_noise(ds, NoiseSpec(args.ratio, args.seed or 0))
    save_csv(noisy, out / args.output, with_ids=True)
    ledger.save(out / args.ledger)
    return {"output": str(out / args.output), "flips": len(ledger)}


def cmd_curate(args, out):
    ds = load_csv(args.input)
    cfg = _refine_config(args)
    truth = load_csv(args.truth) if args.truth else None
    test = load_csv(args.test) if args.test else None
    result = run_refinement(ds, cfg, truth=truth, test=test, backend=args.backend)
    save_csv(result.curated, out / "curated.csv", with_ids=True)
    _write_ids(out / "weak_ids.csv", result.weak.ids)
    (out / "reports.json").write_text(
        json.dumps([r.to_dict() for r in result.reports], indent=2) + "\n"
    )
    for m, records in enumerate(result.entropy_records, start=1):
        records_to_csv(records, out / f"entropy_m{m}.csv")
    if args.dump_ids:
        for m, strong_ids in enumerate(result.strong_trace, start=1):
            _write_ids(out / f"strong_ids_m{m}.csv", strong_ids)
    if args.votes:
        from mvver.seeds import derive_seed
        from mvver.voting import train_views, vote

        models = train_views(ds, cfg.n, cfg.view_classifier, seed=derive_seed(cfg.seed, 1, "views"),
                             backend=args.backend)
        vote(models, ds).to_csv(out / "votes_m1.csv")
    summary = {"curated": len(result.curated), "weak": len(result.weak),
               "reports": [r.to_dict() for r in result.reports]}
    if args.train_final:
        model = train_final(result.curated, cfg.final_classifier, backend=args.backend)
        model.save(out / "model.json")
        summary["model"] = str(out / "model.json")
    return summary


def cmd_train(args, out):
    ds = load_csv(args.input)
    cfg = replace(ClassifierConfig(seed=args.seed or 0), **_classifier_overrides(args))
    model = fit(ds, cfg, backend=args.backend)
    model.save(out / args.output)
    return {"output": str(out / args.output), "final_loss": float(model.loss_history[-1])}


def cmd_eval(args, out):
    model = Model.load(args.model)
    acc = evaluate(model, load_csv(args.input, num_classes=model.num_classes))
    return {"accuracy": acc}


def cmd_experiment(args, out):
    cfg = _experiment_config(args)
    log = logging.getLogger("mvver.experiment")
    report = run_experiment(
        cfg, backend=args.backend,
        progress=lambda c: log.info("ratio %.2f repeat %d done", c["ratio"], c["repeat"]),
    )
    path = write_report(report, out)
    return {"report": str(path), "summary": report["summary"]}


def cmd_entropy_hist(args, out):
    ds = load_csv(args.input)
    cfg = _refine_config(args)
    if args.iteration < 1:
        raise ValueError("--iteration must be >= 1")
    result = run_refinement(ds, replace(cfg, M=args.iteration), backend=args.backend)
    records = result.entropy_records[args.iteration - 1]
    hist = entropy_histogram(records, args.bins, ds.num_classes)
    records_to_csv(records, out / "entropy_records.csv")
    hist.to_csv(out / "entropy_hist.csv")
    (out / "entropy_hist.json").write_text(hist.to_json() + "\n")
    return {"iteration": args.iteration, "weak": len(records), **hist.to_dict()}


COMMANDS = {
    "gen-blobs": cmd_gen_blobs,
    "inject": cmd_inject,
    "curate": cmd_curate,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "entropy-hist": cmd_entropy_hist,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](args, args.out_dir)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(record) + "\n")
        return 1
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
