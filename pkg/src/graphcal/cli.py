"""Command-line entry point: ``graphcal {calibrate,evaluate,diagnose,split,synth}``.

Exit codes: 0 success, 2 bad input (unreadable/invalid files, bad flags,
unwritable output), 3 a fit diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, metrics, search
from .calibrators import (
    ABLATIONS,
    METHODS,
    CalibratorConfig,
    apply_calibrator,
    calibrator_to_json,
    fit_calibrator,
    load_calibrator,
    uncalibrated,
)
from .data import FORMAT_VERSION, Manifest, atomic_write_text, dump_json, read_matrix, split_json, write_dataset
from .errors import FitDiverged, GraphCalError, GridExhausted, InputError
from .graph import homophily_index
from .synth import SynthConfig, generate_with_truth
from .trainer import NodeMask, SplitPlan, stratified_folds, stratified_split
from . import rng as rngmod

log = logging.getLogger("graphcal")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _load(args) -> tuple[Manifest, "object"]:
    manifest = Manifest.load(args.manifest)
    mask = None
    if getattr(args, "split_seed", None) is not None:
        labels_only = manifest.load_dataset(NodeMask([], [], [])).labels
        mask = stratified_split(labels_only, manifest.num_nodes, seed=args.split_seed).assignments[0][0]
    return manifest, manifest.load_dataset(mask)


def _predictions(args, ds):
    """Probabilities from --calibrator, --probs, or the raw logits."""
    if getattr(args, "calibrator", None):
        c = load_calibrator(args.calibrator)
        return apply_calibrator(c, ds).probs
    if getattr(args, "probs", None):
        if not Path(args.probs).is_file():
            raise InputError(f"probability file not found: {args.probs}")
        return read_matrix(args.probs, ds.num_nodes, ds.num_classes)
    return uncalibrated(ds).probs


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _eval_json(result: metrics.EvalResult, **extra) -> dict:
    return {"format_version": FORMAT_VERSION, **extra, "metrics": result.to_dict()}


def _config_from_args(args) -> CalibratorConfig:
    ablations = tuple(a for flag in args.ablate or () for a in flag.split(",") if a)
    return CalibratorConfig(
        method=args.method, heads=args.heads, bins=args.bins, weight_decay=args.weight_decay,
        initial_T0=args.init_t0, leaky_slope=args.leaky_slope, ablations=ablations,
        cagcn_hidden=args.cagcn_hidden, lr=args.lr, max_epochs=args.epochs, patience=args.patience,
    )


def cmd_calibrate(args) -> int:
    manifest, ds = _load(args)
    config = _config_from_args(args)
    out = _out_dir(args.out)
    extra: dict = {"method": config.method, "manifest": str(manifest.path.name), "seed": args.seed}

    if args.protocol == "repeated":
        plan = stratified_split(ds.labels, ds.num_nodes, labeled_fraction=args.fraction,
                                folds=args.folds, splits=args.splits, seed=args.seed)
        runs = search.run_protocol(ds, config, plan, inits=args.inits, seed=args.seed)
        doc = {
            "format_version": FORMAT_VERSION, **extra, "config": config.to_dict(),
            "splits": args.splits, "folds": args.folds, "inits": args.inits,
            "runs": [{"split": r.split, "fold": r.fold, "init": r.init, "metrics": r.result.to_dict()} for r in runs],
            "summary": search.summarize(runs),
        }
        atomic_write_text(out / "protocol.json", dump_json(doc))
        print(json.dumps(doc["summary"], indent=2))
        return EXIT_OK

    if args.grid:
        labeled = np.concatenate([ds.mask.train, ds.mask.val])
        groups = stratified_folds(ds.labels, np.sort(labeled), args.folds,
                                  rngmod.make_rng(args.seed, rngmod.FOLD, 0))
        masks = [NodeMask(np.concatenate([g for j, g in enumerate(groups) if j != f]), groups[f], ds.mask.test)
                 for f in range(args.folds)]
        plan = SplitPlan(args.seed, float(len(labeled)) / ds.num_nodes, args.folds, [masks])
        grid = search.grid_search(ds, config, plan, seed=args.seed)
        config = grid.best
        extra["grid"] = grid.to_dict()

    c = fit_calibrator(config, ds, args.seed)
    calibrated = apply_calibrator(c, ds)
    test = ds.mask.test
    result = metrics.evaluate(calibrated.probs, ds.labels, test, config.bins)
    before = metrics.evaluate(uncalibrated(ds).probs, ds.labels, test, config.bins)
    extra["fit"] = {k: c.fit_info[k] for k in ("epochs", "best_monitor_nll", "initial_monitor_nll")}
    if calibrated.temperatures is not None:
        t = calibrated.temperatures[test]
        extra["test_temperature"] = {"mean": float(t.mean()), "min": float(t.min()), "max": float(t.max())}
    if config.method == "ts":
        extra["T"] = float(c.params["T"][0])
    extra["uncalibrated"] = before.to_dict()

    atomic_write_text(out / "calibrator.json", dump_json(calibrator_to_json(c)))
    doc = _eval_json(result, **extra)
    atomic_write_text(out / "eval.json", dump_json(doc))
    if args.diagnose:
        diagnostics.write_diagnostics(out / "diagnostics", ds, calibrated.probs, config.bins)
    print(dump_json(doc), end="")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, ds = _load(args)
    probs = _predictions(args, ds)
    nodes = np.arange(ds.num_nodes) if args.all_nodes else ds.mask.test
    doc = _eval_json(metrics.evaluate(probs, ds.labels, nodes, args.bins),
                     source="calibrator" if args.calibrator else "probs" if args.probs else "logits",
                     bins=args.bins, nodes=int(nodes.size))
    text = dump_json(doc)
    if args.out:
        atomic_write_text(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    _, ds = _load(args)
    probs = _predictions(args, ds)
    out = _out_dir(args.out_dir)
    try:
        paths = diagnostics.write_diagnostics(out, ds, probs, args.bins, all_nodes=args.all_nodes)
    except OSError as exc:
        raise InputError(f"cannot write to {out}: {exc.strerror}") from None
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = Manifest.load(args.manifest)
    ds = manifest.load_dataset(NodeMask([], [], []))
    plan = stratified_split(ds.labels, ds.num_nodes, labeled_fraction=args.fraction,
                            folds=args.folds, splits=args.splits, seed=args.seed)
    out = _out_dir(args.out_dir)
    for s, split in enumerate(plan.assignments):
        doc = split_json(split[0], seed=plan.seed, labeled_fraction=plan.labeled_fraction,
                         folds=plan.folds, split_index=s)
        doc["fold_masks"] = [m.to_dict() for m in split]
        path = out / f"split_{s}.json"
        atomic_write_text(path, dump_json(doc))
        print(path)
    return EXIT_OK


def cmd_synth(args) -> int:
    mode = {"none": "none", "global": "global_T", "homophily": "homophily_T"}[args.miscal]
    config = SynthConfig(
        num_nodes=args.nodes, num_classes=args.classes, intra_p=args.intra_p, inter_p=args.inter_p,
        signal=args.signal, noise_sigma=args.noise, miscal_mode=mode, global_T=args.t,
        homophily_coeffs=(args.hom_a, args.hom_b), labeled_fraction=args.fraction, folds=args.folds,
        seed=args.seed,
    )
    ds, truth = generate_with_truth(config)
    out = _out_dir(args.out_dir)
    path = write_dataset(out, ds, seed=args.seed)
    info = {"format_version": FORMAT_VERSION, "config": config.to_dict(),
            "homophily_index": homophily_index(ds.graph, ds.labels)}
    atomic_write_text(out / "synth_config.json", dump_json(info))
    atomic_write_text(out / "temperatures.txt",
                      "".join(f"{i} {float(t)!r}\n" for i, t in enumerate(truth.temperatures)))
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphcal", description="Post-hoc calibration of GNN node predictions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def manifest_arg(sp):
        sp.add_argument("manifest", help="dataset manifest JSON")
        sp.add_argument("--split-seed", type=int, default=None,
                        help="derive a stratified 15%% split instead of the manifest's split file")
        sp.add_argument("--bins", type=int, default=metrics.DEFAULT_BINS)

    def source_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--calibrator", help="fitted calibrator JSON to apply to the logits")
        g.add_argument("--probs", help="probability file (node_id p_1 ... p_K per line)")
        sp.add_argument("--all-nodes", action="store_true", help="evaluate every node, not only the test mask")

    c = sub.add_parser("calibrate", help="fit a calibrator and evaluate it on the test mask")
    manifest_arg(c)
    c.add_argument("--method", choices=METHODS, default="gats")
    c.add_argument("--heads", type=int, default=8)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--weight-decay", type=float, default=0.0)
    c.add_argument("--lr", type=float, default=0.01)
    c.add_argument("--epochs", type=int, default=2000)
    c.add_argument("--patience", type=int, default=100)
    c.add_argument("--init-t0", type=float, default=1.0)
    c.add_argument("--leaky-slope", type=float, default=0.2)
    c.add_argument("--cagcn-hidden", type=int, default=16)
    c.add_argument("--ablate", action="append", metavar="FLAG",
                   help=f"gats ablation ({', '.join(ABLATIONS)}); repeat or comma-separate")
    c.add_argument("--grid", action="store_true", help="search weight decay x initial T0 by cross-validation")
    c.add_argument("--protocol", choices=("single", "repeated"), default="single",
                   help="'repeated' repeats fitting over splits x folds x inits")
    c.add_argument("--fraction", type=float, default=0.15)
    c.add_argument("--splits", type=int, default=5)
    c.add_argument("--folds", type=int, default=3)
    c.add_argument("--inits", type=int, default=5)
    c.add_argument("--diagnose", action="store_true", help="also write diagnostics CSVs")
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate", help="metrics of raw logits, probabilities or a fitted calibrator")
    manifest_arg(e)
    source_args(e)
    e.add_argument("--out", help="also write the JSON here")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("diagnose", help="write per-node factor and reliability CSVs")
    manifest_arg(d)
    source_args(d)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("split", help="write stratified labelled/unlabelled split files")
    s.add_argument("manifest")
    s.add_argument("--fraction", type=float, default=0.15)
    s.add_argument("--folds", type=int, default=3)
    s.add_argument("--splits", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_split)

    y = sub.add_parser("synth", help="generate a synthetic SBM dataset")
    y.add_argument("--nodes", type=int, default=2000)
    y.add_argument("--classes", type=int, default=4)
    y.add_argument("--intra-p", type=float, default=SynthConfig.intra_p)
    y.add_argument("--inter-p", type=float, default=SynthConfig.inter_p)
    y.add_argument("--signal", type=float, default=SynthConfig.signal)
    y.add_argument("--noise", type=float, default=SynthConfig.noise_sigma)
    y.add_argument("--miscal", choices=("none", "global", "homophily"), default="none")
    y.add_argument("--t", type=float, default=2.0, help="global temperature for --miscal global")
    y.add_argument("--hom-a", type=float, default=1.0)
    y.add_argument("--hom-b", type=float, default=0.5)
    y.add_argument("--fraction", type=float, default=0.15)
    y.add_argument("--folds", type=int, default=3)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out-dir", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FitDiverged, GridExhausted) as exc:
        print(f"graphcal: fit diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InputError, GraphCalError) as exc:
        print(f"graphcal: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"graphcal: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
