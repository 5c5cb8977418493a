"""Command-line entry point: ``routeseq <command> [flags]``.

Commands: generate, train, eval, diffused-check, rank. Any command accepts
``--config FILE`` holding ``key = value`` lines (keys are the long flag
names, with dashes or underscores); explicit flags override the file.

Exit codes: 0 success, 2 usage/config/I-O error, 3 numerical abort.

Seeds: ``--seed s`` drives everything. ``generate`` draws pairs from ``s``
and shuffles the split with ``s + 1``; ``train`` initialises weights from
``s`` and shuffles epochs with ``s + 1``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import astar, diffusion, evaluation, graph as graph_mod, seq2seq

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("routeseq")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file ('#' starts a comment)."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (p.strip() for p in s.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _apply_config(sub: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "command")}
    defaults = {}
    for key, raw in cfg.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        a = actions[key]
        a.required = False  # argparse checks presence, not defaults
        if isinstance(a, argparse._StoreTrueAction):
            defaults[key] = _bool(raw)
            continue
        conv = a.type or str
        try:
            if a.nargs not in (None, "?"):
                defaults[key] = [conv(p) for p in raw.split()]
            else:
                defaults[key] = conv(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"config key {key!r}: {exc}") from None
    sub.set_defaults(**defaults)


def _graph_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph input")
    g.add_argument("--graph", help="filtered graph file written by 'generate'")
    g.add_argument("--edges", help="MatrixMarket adjacency (default: bundled Minnesota)")
    g.add_argument("--coords", help="lon/lat coordinate file (default: bundled Minnesota)")
    g.add_argument("--bbox", nargs=4, type=float, metavar=("LON_MIN", "LON_MAX", "LAT_MIN", "LAT_MAX"))
    g.add_argument("--inclusive", action="store_true", help="close the bounding box (default: open)")


def _load_graph(args) -> graph_mod.Graph:
    if args.graph:
        return graph_mod.read_graph(args.graph)
    if bool(args.edges) != bool(args.coords):
        raise UsageError("--edges and --coords go together")
    if args.edges:
        g = graph_mod.load_graph(args.edges, args.coords)
    else:
        g = graph_mod.load_minnesota()
    if args.bbox:
        g = graph_mod.filter_bbox(g, *args.bbox, inclusive=args.inclusive)
    return g


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="routeseq", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="sample A* routes and split them")
    _graph_args(p)
    p.add_argument("--n", type=_positive_int, default=3000)
    p.add_argument("--split", type=float, default=0.67)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--dataset", default="routes.txt", help="file name inside --out-dir")

    p = subs.add_parser("train", help="train a route model")
    p.add_argument("--dataset", required=True)
    _graph_args(p)
    p.add_argument("--variant", choices=seq2seq.VARIANTS, default="dual")
    p.add_argument("--hidden", type=_positive_int, default=256)
    p.add_argument("--emb", type=_positive_int, default=256)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--init-scale", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diffuse", action="store_true", help="use the default sigma schedule")
    p.add_argument("--schedule", help="custom schedule 'sigma:epochs,...' (implies --diffuse)")
    p.add_argument("--diffuse-tanh", action="store_true", help="also smooth the decoder tanh")
    p.add_argument("--lstm-context", choices=("h", "hc"), default="h")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--checkpoint", default="model.ckpt", help="file name inside --out-dir")

    p = subs.add_parser("eval", help="score a model on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    _graph_args(p)
    p.add_argument("--max-len", type=_positive_int)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out-dir", default=".")

    p = subs.add_parser("diffused-check", help="closed-form smoothing vs quadrature")
    p.add_argument("--nodes", type=int, default=128)
    p.add_argument("--out-dir", default=".")

    p = subs.add_parser("rank", help="rank of the dual model's context matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--routes", choices=("train", "test", "all"), default="train")
    p.add_argument("--tol", type=float)
    p.add_argument("--out-dir", default=".")

    for sub in subs.choices.values():
        sub.add_argument("--config", help="key = value file; flags win on conflict")
    return parser


def _out(args, name: str) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def cmd_generate(args) -> int:
    g = _load_graph(args)
    ds = astar.generate_dataset(g, args.n, args.split, args.seed)
    astar.save_dataset(ds, _out(args, args.dataset))
    astar.write_histogram(astar.hop_histogram(ds), _out(args, "hops.csv"))
    graph_mod.write_graph(g, _out(args, "graph.txt"))
    mean = sum(r.hops for r in ds.routes) / len(ds.routes)
    print(f"nodes={g.n_nodes} edges={g.n_edges} routes={len(ds.routes)} "
          f"train={len(ds.train_idx)} test={len(ds.test_idx)} mean_hops={mean:.3f}")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.epochs < 1 and not (args.diffuse or args.schedule):
        raise UsageError("--epochs must be >= 1")
    g = _load_graph(args)
    ds = astar.load_dataset(args.dataset, g)
    if not ds.train_idx:
        raise UsageError("training split is empty")
    schedule = None
    if args.schedule:
        schedule = diffusion.DiffusionSchedule.from_string(args.schedule)
    elif args.diffuse:
        schedule = diffusion.schedule_default()
    cfg = seq2seq.TrainConfig(epochs=max(args.epochs, 1), lr=args.lr, beta1=args.beta1, beta2=args.beta2,
                              seed=args.seed, grad_clip_norm=args.clip, schedule=schedule,
                              diffuse_tanh=args.diffuse_tanh)
    m = seq2seq.Seq2SeqModel(args.variant, g.n_nodes, args.emb, args.hidden, args.lstm_context,
                             args.init_scale, args.seed)
    m, curve = seq2seq.train(m, ds.train, cfg)
    seq2seq.save_model(m, _out(args, args.checkpoint), cfg.echo())
    seq2seq.write_loss_curve(curve, _out(args, "loss.csv"))
    print(f"variant={m.variant} d_ctx={m.d_ctx} epochs={len(curve)} final_nll={curve[-1].mean_nll:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    g = _load_graph(args)
    m, _ = seq2seq.load_model(args.checkpoint)
    if m.n_nodes != g.n_nodes:
        raise UsageError(f"checkpoint vocabulary covers {m.n_nodes} nodes, graph has {g.n_nodes}")
    ds = astar.load_dataset(args.dataset, g)
    if not ds.test_idx:
        raise UsageError("test split is empty")
    report = evaluation.evaluate(m, ds, g, args.max_len, args.jobs)
    evaluation.write_report(report, _out(args, "report.csv"))
    print(report.summary())
    return EXIT_OK


def cmd_diffused_check(args) -> int:
    rows = diffusion.oracle_grid(args.nodes)
    with open(_out(args, "diffused.csv"), "w", encoding="utf-8", newline="\n") as f:
        f.write("kind,x,sigma,closed_form,quadrature,abs_err\n")
        for r in rows:
            f.write(f"{r['kind']},{r['x']!r},{r['sigma']!r},{r['closed_form']!r},{r['quadrature']!r},{r['abs_err']!r}\n")
    for kind in diffusion.ORACLE_KINDS:
        worst = max(r["abs_err"] for r in rows if r["kind"] == kind.tag)
        print(f"{kind.tag}: max_abs_err={worst:.3e}")
    return EXIT_OK


def cmd_rank(args) -> int:
    m, _ = seq2seq.load_model(args.checkpoint)
    if m.variant != "dual" or m.lstm_context != "h":
        raise UsageError("rank analysis needs a dual-encoder checkpoint with h-only LSTM context")
    ds = astar.load_dataset(args.dataset)
    routes = {"train": ds.train, "test": ds.test, "all": ds.routes}[args.routes]
    if not routes:
        raise UsageError(f"no {args.routes} routes in dataset")
    ctx = evaluation.context_matrix(m, routes)
    tol = args.tol if args.tol is not None else evaluation.default_rank_tol(ctx)
    ranks = evaluation.rank_analysis(ctx, m.d_h_enc, tol)
    line = f"{ranks[0]} {ranks[1]} {ranks[2]} {tol!r}"
    _out(args, "rank.txt").write_text(line + "\n", encoding="utf-8")
    print(line)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "diffused-check": cmd_diffused_check, "rank": cmd_rank}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # the config file may supply required flags, so find it before the real parse
        scan = argparse.ArgumentParser(add_help=False)
        scan.add_argument("command", nargs="?")
        scan.add_argument("--config")
        pre, _ = scan.parse_known_args(argv)
        subs = parser._subparsers._group_actions[0].choices
        if pre.config and pre.command in subs:
            _apply_config(subs[pre.command], read_config(pre.config))
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"routeseq: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"routeseq: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except seq2seq.TrainingAborted as exc:
        print(f"routeseq: training aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, OSError, ValueError, graph_mod.GraphParseError, astar.GenerationError) as exc:
        print(f"routeseq: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
