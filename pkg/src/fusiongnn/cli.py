"""Command-line entry point: ``fusiongnn <command> [flags]``.

Exit codes: 0 on success, 1 when training or search fails at runtime, 2 for
usage and configuration errors. Settings can come from a ``key = value``
config file (``--config``); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import BASELINES, build_mixhop, random_spec, translate
from .childnet import TrainConfig, build_childnet, train_childnet
from .errors import DimensionError, NonFiniteError, ParseError, TrainingError, UsageError
from .graph import (Graph, SplitConfig, generate_synthetic, homophily_ratio, load_graph,
                    save_graph, split_nodes)
from .layers import AGGREGATIONS
from .metrics import (MadConfig, bar_svg, heatmap_svg, mad_profile, usage_matrix, write_records,
                      write_tsv)
from .search import SearchConfig, measure_gap, retrain_derived, run_search
from .topology import read_spec, spec_to_text, write_spec

log = logging.getLogger("fusiongnn")

SYNTH_KEYS = {"n": int, "classes": int, "features": int, "p_intra": float, "p_inter": float,
              "signal": float, "seed": int}
SYNTH_DEFAULTS = {"n": 300, "classes": 3, "features": 16, "p_intra": 0.04, "p_inter": 0.0022,
                  "signal": 1.0, "seed": 0}

# Tuning space for ``tune``.
TUNE_SPACE = {
    "hidden": [16, 32, 64, 128, 256, 512],
    "dropout": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "optimizer": ["adam", "adagrad"],
    "act": ["relu", "elu"],
}
LR_RANGE = (0.001, 0.01)
WD_RANGE = (0.0001, 0.001)


# --- argument handling ----------------------------------------------------

def _int_list(text):
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _float_list(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _agg(text):
    up = str(text).upper()
    if up == "ALL":
        return "ALL"
    if up not in AGGREGATIONS:
        raise argparse.ArgumentTypeError(f"unknown aggregation '{text}'")
    return up


def _common(p: argparse.ArgumentParser, data=True):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    if data:
        p.add_argument("--data", help="dataset directory or synth:key=val,...")
        p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seeds", type=_int_list, default=[0], help="comma-separated seeds")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--blocks", "--depth", dest="blocks", type=int, default=4)
    p.add_argument("--agg", type=_agg, default="SAGE")
    p.add_argument("--act", choices=["relu", "elu"], default="relu")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--optimizer", choices=["adam", "adagrad"], default="adam")
    p.add_argument("-v", "--verbose", action="store_true")


def _arch(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec", help="topology spec file")
    src.add_argument("--baseline", choices=BASELINES)
    p.add_argument("--jk-fusion", default="CONCAT")
    p.add_argument("--pna-width", type=int, default=2)


def _search_flags(p, lam_list=False):
    if lam_list:
        p.add_argument("--lambda", dest="lam", type=_float_list, default=[1.0, 0.1, 0.001])
    else:
        p.add_argument("--lambda", dest="lam", type=float, default=0.001)
    p.add_argument("--arch-lr", type=float, default=0.003)
    p.add_argument("--arch-weight-decay", type=float, default=1e-3)


def build_parser():
    parser = argparse.ArgumentParser(prog="fusiongnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a topology over several seeds")
    _common(p)
    _arch(p)

    p = sub.add_parser("search", help="search a topology, then retrain it from scratch")
    _common(p)
    _search_flags(p)
    p.add_argument("--retrain-epochs", type=int, default=200)

    p = sub.add_parser("gap", help="supernet vs derived childnet at several temperatures")
    _common(p)
    _search_flags(p, lam_list=True)

    p = sub.add_parser("mad", help="MAD profile of a trained topology")
    _common(p)
    _arch(p)
    p.add_argument("--target", choices=["neighbors", "all-pairs"], default="neighbors")
    p.add_argument("--svg", action="store_true", help="also write an SVG bar chart")

    p = sub.add_parser("translate", help="write the spec of a named design")
    _common(p, data=False)
    p.add_argument("--baseline", required=False, choices=[b for b in BASELINES if b != "mixhop"])
    p.add_argument("--jk-fusion", default="CONCAT")
    p.add_argument("--pna-width", type=int, default=2)
    p.add_argument("--svg", action="store_true", help="also write the usage heatmap")

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--config")
    p.add_argument("--out")
    for key, typ in SYNTH_KEYS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=SYNTH_DEFAULTS[key])
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("tune", help="random hyperparameter search by validation accuracy")
    _common(p)
    _arch(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tune-seed", type=int, default=0)
    parser.commands = sub.choices
    return parser


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, str(path))
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", lineno, str(path))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = read_config(args.config)
    actions = parser.commands[args.command]._actions
    known = {a.dest: a for a in actions}
    flags = {tok.split("=", 1)[0] for tok in argv if tok.startswith("-")}
    explicit = {a.dest for a in actions if flags & set(a.option_strings)}
    for key, value in cfg.items():
        if key not in known or key in ("config", "help"):
            raise UsageError(f"{args.config}: unknown key '{key}'")
        if key in explicit:
            continue
        action = known[key]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                parsed = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                parsed = action.type(value)
            else:
                parsed = value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{args.config}: bad value for '{key}': {exc}")
        if action.choices is not None and parsed not in action.choices:
            raise UsageError(f"{args.config}: '{key}' must be one of {', '.join(map(str, action.choices))}")
        setattr(args, key, parsed)
    return args


# --- shared helpers -------------------------------------------------------

def parse_synth(text):
    """``synth:n=300,classes=3,...`` -> generator keyword dict."""
    params = dict(SYNTH_DEFAULTS)
    body = text[len("synth:"):]
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise UsageError(f"--data: expected key=value in '{item}'")
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in SYNTH_KEYS:
            raise UsageError(f"--data: unknown synth key '{key}'")
        try:
            params[key] = SYNTH_KEYS[key](value)
        except ValueError:
            raise UsageError(f"--data: bad value for '{key}': {value}")
    return params


def _synth_graph(params, split=None) -> Graph:
    return generate_synthetic(params["n"], params["classes"], params["features"], params["p_intra"],
                              params["p_inter"], params["signal"], params["seed"], split=split)


def load_data(args) -> Graph:
    if not args.data:
        raise UsageError("--data is required")
    split = SplitConfig(seed=args.split_seed)
    if args.data.startswith("synth:"):
        return _synth_graph(parse_synth(args.data), split)
    path = Path(args.data)
    if not path.is_dir():
        raise UsageError(f"--data: no dataset directory at {path}")
    g = load_graph(path)
    if g.masks is None:
        g.set_masks(split_nodes(g, split))
    return g


def out_dir(args, default):
    path = Path(args.out or default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def train_config(args, seed, epochs_default=200):
    epochs = args.epochs if args.epochs is not None else epochs_default
    return TrainConfig(epochs=epochs, lr=args.lr, weight_decay=args.weight_decay,
                       optimizer=args.optimizer, seed=seed)


def resolve_spec(args, seed=0):
    if args.spec:
        return read_spec(args.spec)
    if not args.baseline:
        raise UsageError("give an architecture with --spec or --baseline")
    name = args.baseline
    agg = "SAGE" if args.agg == "ALL" else args.agg
    if name == "random":
        return random_spec(args.blocks, seed=seed, learnable_agg=args.agg == "ALL", agg=agg,
                           hidden=args.hidden, act=args.act)
    if name == "mixhop":
        return None
    return translate(name, args.blocks, agg, jk_fusion=args.jk_fusion.upper(),
                     pna_width=args.pna_width, hidden=args.hidden, act=args.act)


def build_model(args, g, seed):
    spec = resolve_spec(args, seed)
    if spec is None:
        return build_mixhop(g.num_features, g.num_classes, depth=args.blocks, hidden=args.hidden,
                            act=args.act, seed=seed, dropout=args.dropout)
    return build_childnet(spec, g.num_features, g.num_classes, seed=seed, dropout=args.dropout)


def workers(n_jobs):
    raw = os.environ.get("F2_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise UsageError(f"F2_THREADS must be an integer, got '{raw}'")
    return max(1, min(cap, n_jobs))


def fan_out(fn, items):
    """Run ``fn`` over ``items``; results come back in input order."""
    items = list(items)
    n = workers(len(items))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def search_config(args, seed, lam):
    aggs = AGGREGATIONS if args.agg == "ALL" else (args.agg,)
    return SearchConfig(n_blocks=args.blocks, hidden=args.hidden, aggs=aggs, act=args.act,
                        dropout=args.dropout, temperature=lam,
                        epochs=400 if args.epochs is None else args.epochs, w_lr=args.lr,
                        w_weight_decay=args.weight_decay, w_optimizer=args.optimizer,
                        a_lr=args.arch_lr, a_weight_decay=args.arch_weight_decay, seed=seed)


# --- commands -------------------------------------------------------------

def cmd_train(args):
    g = load_data(args)
    out = out_dir(args, "runs/train")

    def run(seed):
        net = build_model(args, g, seed)
        return train_childnet(net, g, train_config(args, seed))

    results = fan_out(run, args.seeds)
    rows = [[seed, r.best_epoch, r.train_acc, r.val_acc, r.test_acc]
            for seed, r in zip(args.seeds, results)]
    val_m, val_s = mean_std([r.val_acc for r in results])
    test_m, test_s = mean_std([r.test_acc for r in results])
    rows.append(["mean", "", mean_std([r.train_acc for r in results])[0], val_m, test_m])
    rows.append(["std", "", mean_std([r.train_acc for r in results])[1], val_s, test_s])
    write_tsv(out / "train.tsv", ["seed", "best_epoch", "train_acc", "val_acc", "test_acc"], rows)
    print(f"test accuracy {100 * test_m:.2f} ± {100 * test_s:.2f} over {len(results)} seed(s)")
    return 0


def cmd_search(args):
    g = load_data(args)
    out = out_dir(args, "runs/search")

    def run(seed):
        s, res = run_search(g, search_config(args, seed, args.lam))
        retrain = TrainConfig(epochs=args.retrain_epochs, lr=args.lr,
                              weight_decay=args.weight_decay, optimizer=args.optimizer, seed=seed)
        _, tr = retrain_derived(res.spec, g, retrain, seed=seed, dropout=args.dropout)
        return res, tr

    results = fan_out(run, args.seeds)
    rows = []
    for seed, (res, tr) in zip(args.seeds, results):
        write_spec(res.spec, out / f"spec_seed{seed}.txt")
        hist = [[h["epoch"], h["train_loss"], h["val_loss"], h["train_acc"], h["val_acc"]]
                for h in res.history]
        write_tsv(out / f"history_seed{seed}.tsv",
                  ["epoch", "train_loss", "val_loss", "train_acc", "val_acc"], hist)
        forced = "none" if res.forced is None else res.forced
        rows.append([seed, forced, tr.val_acc, tr.test_acc])
    val_m, val_s = mean_std([tr.val_acc for _, tr in results])
    test_m, test_s = mean_std([tr.test_acc for _, tr in results])
    rows += [["mean", "", val_m, test_m], ["std", "", val_s, test_s]]
    write_tsv(out / "search.tsv", ["seed", "forced_output", "val_acc", "test_acc"], rows)
    for seed, (res, _) in zip(args.seeds, results):
        if res.forced is not None:
            print(f"seed {seed}: output mask derived empty, forced level {res.forced} on")
    print(f"retrained test accuracy {100 * test_m:.2f} ± {100 * test_s:.2f}")
    return 0


def cmd_gap(args):
    g = load_data(args)
    out = out_dir(args, "runs/gap")
    if not args.lam:
        raise UsageError("--lambda needs at least one value")

    def run(seed):
        return measure_gap(g, search_config(args, seed, args.lam[0]), args.lam)

    results = fan_out(run, args.seeds)
    rows, records = [], []
    for seed, gap_rows in zip(args.seeds, results):
        for r in gap_rows:
            rows.append([seed, r.temperature, r.supernet_val, r.childnet_val, r.gap,
                         r.max_logit_diff])
            records.append({"seed": seed, **r.record()})
    write_tsv(out / "gap.tsv", ["seed", "lambda", "supernet_val", "childnet_val", "gap",
                                "max_logit_diff"], rows)
    write_records(out / "gap.records", records)
    for row in rows:
        print("seed={} lambda={} supernet={:.4f} childnet={:.4f}".format(*row[:4]))
    return 0


def cmd_mad(args):
    g = load_data(args)
    out = out_dir(args, "runs/mad")
    cfg = MadConfig(target=args.target)

    def run(seed):
        net = build_model(args, g, seed)
        if not hasattr(net, "spec"):
            raise UsageError("mad profiles need a framework topology (not mixhop)")
        res = train_childnet(net, g, train_config(args, seed))
        return mad_profile(net, g, cfg, include_output=True), res

    results = fan_out(run, args.seeds)
    rows = []
    for seed, (profile, res) in zip(args.seeds, results):
        rows += [[seed, tap, value, res.test_acc] for tap, value in profile]
    write_tsv(out / "mad.tsv", ["seed", "tap", "mad", "test_acc"], rows)
    if args.svg:
        profile = results[0][0]
        svg = bar_svg([str(t) for t, _ in profile], [v for _, v in profile],
                      title=f"MAD by block (seed {args.seeds[0]})")
        (out / "mad.svg").write_text(svg, encoding="utf-8")
    return 0


def cmd_translate(args):
    if not args.baseline:
        raise UsageError("--baseline is required")
    agg = "SAGE" if args.agg == "ALL" else args.agg
    if args.baseline == "random":
        spec = random_spec(args.blocks, seed=args.seeds[0], learnable_agg=args.agg == "ALL",
                           agg=agg, hidden=args.hidden, act=args.act)
    else:
        spec = translate(args.baseline, args.blocks, agg, jk_fusion=args.jk_fusion.upper(),
                         pna_width=args.pna_width, hidden=args.hidden, act=args.act)
    if args.out is None:
        sys.stdout.write(spec_to_text(spec))
        return 0
    out = Path(args.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{args.baseline}.spec"
    write_spec(spec, out)
    if args.svg:
        out.with_suffix(".svg").write_text(heatmap_svg(usage_matrix(spec)), encoding="utf-8")
    print(out)
    return 0


def cmd_synth(args):
    if not args.out:
        raise UsageError("--out is required")
    params = {k: getattr(args, k) for k in SYNTH_KEYS}
    g = _synth_graph(params)
    save_graph(g, args.out)
    print(f"wrote {g.n} nodes, {g.num_edges} edges, homophily {homophily_ratio(g):.3f} to {args.out}")
    return 0


def cmd_tune(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    g = load_data(args)
    out = out_dir(args, "runs/tune")
    rng = np.random.default_rng(args.tune_seed)
    trials = []
    for _ in range(args.trials):
        trials.append({
            "hidden": int(rng.choice(TUNE_SPACE["hidden"])),
            "lr": float(np.round(rng.uniform(*LR_RANGE), 6)),
            "dropout": float(rng.choice(TUNE_SPACE["dropout"])),
            "weight_decay": float(np.round(rng.uniform(*WD_RANGE), 6)),
            "optimizer": str(rng.choice(TUNE_SPACE["optimizer"])),
            "act": str(rng.choice(TUNE_SPACE["act"])),
        })

    def run(trial):
        targs = argparse.Namespace(**{**vars(args), **trial})
        accs = []
        for seed in args.seeds:
            net = build_model(targs, g, seed)
            accs.append(train_childnet(net, g, train_config(targs, seed)).val_acc)
        return mean_std(accs)[0]

    scores = fan_out(run, trials)
    keys = list(trials[0])
    rows = [[k, *(t[key] for key in keys), s] for k, (t, s) in enumerate(zip(trials, scores))]
    write_tsv(out / "tune.tsv", ["trial", *keys, "val_acc"], rows)
    best = int(np.argmax(scores))
    lines = [f"{k} = {trials[best][k]}" for k in keys]
    (out / "best.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"best trial {best}: val accuracy {scores[best]:.4f}")
    print("\n".join(lines))
    return 0


COMMANDS = {"train": cmd_train, "search": cmd_search, "gap": cmd_gap, "mad": cmd_mad,
            "translate": cmd_translate, "synth": cmd_synth, "tune": cmd_tune}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ParseError) as exc:
        print(f"fusiongnn: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        seeds = getattr(args, "seeds", [0])
        if not seeds:
            raise UsageError("--seeds must list at least one seed")
        if len(set(seeds)) != len(seeds):
            raise UsageError("--seeds contains duplicates")
        return COMMANDS[args.command](args)
    except (UsageError, ParseError, DimensionError) as exc:
        print(f"fusiongnn: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, NonFiniteError) as exc:
        print(f"fusiongnn: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
