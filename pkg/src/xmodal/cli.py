"""Command-line surface: build-index, retrieve, infer, eval, analyze.

One INI config file (see config.py) names every artifact; individual flags
override single values, flag wins. Data goes to standard output or --out;
diagnostics go to standard error. Exit codes: 0 ok, 2 input error, 64 usage
error, 70 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import ensemble
from . import evaluation as ev
from .config import EngineConfig, load_config, load_inputs, make_retriever
from .errors import ConfigError, EngineError
from .index import build_index, save_ivf
from .inference import image_modal_probability, text_modal_probability

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_USAGE = 64
EXIT_INTERNAL = 70


class UsageError(Exception):
    """Bad flag combination or malformed flag value."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route that to 64 instead
    def error(self, message):
        raise UsageError(message)


def _positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {raw!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {raw!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _int_csv(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    try:
        values = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {raw!r}") from None
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected non-negative integers, got {raw!r}")
    return values


def _add_common(parser: argparse.ArgumentParser, *, seeds: bool = False) -> None:
    parser.add_argument("--config", required=True, help="engine config INI path")
    parser.add_argument("--n", type=_positive_int, help="candidate pool size override")
    parser.add_argument("--k", type=_positive_int, help="caption count override")
    parser.add_argument("--temperature", type=_positive_float, help="softmax scale override")
    parser.add_argument(
        "--mode", choices=list(ensemble.MODES), help="ensemble weighting mode override"
    )
    parser.add_argument("--indirect", action="store_true", help="image-ranked caption baseline")
    parser.add_argument("--out", help="write machine-readable output to this path")
    if seeds:
        parser.add_argument("--seeds", type=_int_csv, help="shuffle seeds, comma-separated")


def build_parser() -> _Parser:
    parser = _Parser(prog="xmodal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="build and persist the coarse-space index")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="sidecar path override")
    p.add_argument("--force", action="store_true", help="rebuild even if the sidecar exists")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="dump retrieved captions per query as JSONL")
    _add_common(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("infer", help="per-query predictions as JSONL, stream in file order")
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="seeded-shuffle accuracy evaluation and sweeps")
    _add_common(p, seeds=True)
    p.add_argument("--sweep-k", type=_int_csv, help="evaluate once per caption count")
    p.add_argument("--sweep-n", type=_int_csv, help="evaluate once per candidate pool size")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="entropy, case, and ablation reports")
    analyze_sub = p.add_subparsers(dest="analysis", required=True)
    for name, func in (
        ("entropy", cmd_analyze_entropy),
        ("cases", cmd_analyze_cases),
        ("adjustment", cmd_analyze_adjustment),
        ("retrieval-ablation", cmd_analyze_retrieval),
    ):
        q = analyze_sub.add_parser(name)
        _add_common(q, seeds=True)
        if name == "entropy":
            q.add_argument("--ks", type=_int_csv, default=(1, 2, 4, 8, 16), help="caption counts")
        q.set_defaults(func=func)

    return parser


def _merged_config(args) -> EngineConfig:
    cfg = load_config(args.config)
    retrieval = cfg.retrieval
    if getattr(args, "n", None) is not None or getattr(args, "k", None) is not None:
        retrieval = dataclasses.replace(
            retrieval,
            n_candidates=args.n if args.n is not None else retrieval.n_candidates,
            k_captions=args.k if args.k is not None else retrieval.k_captions,
        )
    inference = cfg.inference
    if getattr(args, "temperature", None) is not None:
        inference = dataclasses.replace(inference, temperature=args.temperature)
    return dataclasses.replace(
        cfg,
        retrieval=retrieval,
        inference=inference,
        mode=args.mode if getattr(args, "mode", None) else cfg.mode,
        seeds=args.seeds if getattr(args, "seeds", None) else cfg.seeds,
    )


def _open_out(args):
    if args.out:
        return open(args.out, "w", encoding="utf-8")
    return None


def _emit_json(obj, args) -> None:
    if args.out:
        Path(args.out).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def cmd_build_index(args) -> int:
    cfg = load_config(args.config)
    base = Path(args.config).parent
    corpus, _, _ = load_inputs(cfg, base)
    if cfg.index.mode == "exact":
        print("index mode is exact; nothing to persist", file=sys.stderr)
        return EXIT_OK
    rel = args.out if args.out else cfg.index.path
    if rel is None:
        raise ConfigError("ivf index has no output path; set [index] path or pass --out")
    sidecar = Path(rel) if args.out else base / rel
    if sidecar.exists() and not args.force:
        print(f"{sidecar}: already exists, keeping it (use --force to rebuild)", file=sys.stderr)
        return EXIT_OK
    matrix = corpus.matrix(cfg.retrieval.coarse_space)
    index = build_index(matrix, "ivf", num_lists=cfg.index.num_lists, seed=cfg.index.seed)
    save_ivf(index, sidecar)
    print(f"{sidecar}: {index.num_lists} lists over {matrix.count} rows", file=sys.stderr)
    return EXIT_OK


def _jsonl_sink(args):
    sink = _open_out(args)

    def write(obj) -> None:
        line = json.dumps(obj, ensure_ascii=False)
        if sink is not None:
            sink.write(line + "\n")
        else:
            print(line)

    return sink, write


def cmd_retrieve(args) -> int:
    cfg = _merged_config(args)
    base = Path(args.config).parent
    corpus, queries, _ = load_inputs(cfg, base)
    retriever = make_retriever(cfg, corpus, base)
    coarse = queries.matrix(cfg.retrieval.coarse_space)
    fine = queries.matrix(cfg.retrieval.query_fine_space)
    sink, write = _jsonl_sink(args)
    try:
        for i in range(len(queries)):
            if args.indirect:
                captions = retriever.indirect_retrieve(coarse.data[i])
            else:
                captions = retriever.retrieve(coarse.data[i], fine.data[i])
            write(
                {
                    "query_id": queries.ids[i],
                    "captions": [
                        {"record_id": e.record_id, "caption": e.caption, "score": e.score}
                        for e in captions.entries
                    ],
                }
            )
    finally:
        if sink is not None:
            sink.close()
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _merged_config(args)
    base = Path(args.config).parent
    corpus, queries, classes = load_inputs(cfg, base)
    retriever = make_retriever(cfg, corpus, base)
    coarse = queries.matrix(cfg.retrieval.coarse_space)
    fine = queries.matrix(cfg.retrieval.query_fine_space)
    infer = queries.matrix(cfg.inference.inference_space)
    caption_infer = corpus.matrix(cfg.inference.inference_space)
    state = ensemble.reset()
    sink, write = _jsonl_sink(args)
    try:
        for i in range(len(queries)):
            if args.indirect:
                captions = retriever.indirect_retrieve(coarse.data[i])
            else:
                captions = retriever.retrieve(coarse.data[i], fine.data[i])
            rows = [corpus.row_of(rid) for rid in captions.record_ids()]
            p_img = image_modal_probability(infer.data[i], classes, cfg.inference)
            p_txt = text_modal_probability(caption_infer.data[rows], classes, cfg.inference)
            state, out = ensemble.step(state, p_img, p_txt, mode=cfg.mode)
            write(
                {
                    "query_id": queries.ids[i],
                    "img_pred": p_img.predicted_class,
                    "txt_pred": p_txt.predicted_class,
                    "ens_pred": out.predicted_class,
                    "ens_label": classes.labels[out.predicted_class],
                    "adj_img": out.adj_img,
                    "adj_txt": out.adj_txt,
                    "p_ens": [float(v) for v in out.p_ens],
                }
            )
    finally:
        if sink is not None:
            sink.close()
    return EXIT_OK


def _acc_cells(summary: dict[str, dict[str, float]]) -> list[str]:
    return [ev.format_mean_std(summary[key]) for key in ("img_acc", "txt_acc", "ens_acc")]


def cmd_eval(args) -> int:
    if args.sweep_k and args.sweep_n:
        raise UsageError("--sweep-k and --sweep-n are mutually exclusive")
    cfg = _merged_config(args)
    base = Path(args.config).parent
    corpus, queries, classes = load_inputs(cfg, base)

    if args.sweep_k or args.sweep_n:
        if args.sweep_k:
            rows = ev.sweep_k(
                args.sweep_k, queries, corpus, classes, cfg.retrieval, cfg.inference,
                mode=cfg.mode, seeds=cfg.seeds,
            )
            param = "k"
        else:
            rows = ev.sweep_n(
                args.sweep_n, queries, corpus, classes, cfg.retrieval, cfg.inference,
                mode=cfg.mode, seeds=cfg.seeds,
            )
            param = "n"
        table = [[row.param, *_acc_cells(row.summary)] for row in rows]
        print(ev.format_table([param, "img_acc", "txt_acc", "ens_acc"], table))
        _emit_json(
            {
                "sweep": param,
                "rows": [{param: row.param, "summary": row.summary} for row in rows],
            },
            args,
        )
        return EXIT_OK

    retriever = make_retriever(cfg, corpus, base)
    runs = [
        ev.evaluate(
            queries, corpus, classes, cfg.retrieval, cfg.inference,
            mode=cfg.mode, seed=seed, indirect=args.indirect, retriever=retriever,
        )
        for seed in cfg.seeds
    ]
    table = [
        [run.seed] + [f"{run.summary[key]:.2f}" for key in ("img_acc", "txt_acc", "ens_acc")]
        for run in runs
    ]
    aggregate = ev.summarize_runs(runs)
    table.append(["all", *_acc_cells(aggregate)])
    print(ev.format_table(["seed", "img_acc", "txt_acc", "ens_acc"], table))
    # single seed: bare per-run report; several: envelope with the aggregate
    if len(runs) == 1:
        _emit_json(runs[0].to_json(), args)
    else:
        _emit_json({"runs": [run.to_json() for run in runs], "aggregate": aggregate}, args)
    return EXIT_OK


def cmd_analyze_entropy(args) -> int:
    cfg = _merged_config(args)
    corpus, queries, classes = load_inputs(cfg, Path(args.config).parent)
    rows = ev.analyze_entropy(args.ks, queries, corpus, classes, cfg.retrieval, cfg.inference)
    table = [[r["k"], f"{r['mean_h_img']:.4f}", f"{r['mean_h_txt']:.4f}"] for r in rows]
    print(ev.format_table(["k", "mean_h_img", "mean_h_txt"], table))
    _emit_json({"rows": rows}, args)
    return EXIT_OK


def _pooled_samples(cfg: EngineConfig, args) -> list[ev.SampleLog]:
    base = Path(args.config).parent
    corpus, queries, classes = load_inputs(cfg, base)
    retriever = make_retriever(cfg, corpus, base)
    samples: list[ev.SampleLog] = []
    for seed in cfg.seeds:
        run = ev.evaluate(
            queries, corpus, classes, cfg.retrieval, cfg.inference,
            mode=cfg.mode, seed=seed, indirect=args.indirect, retriever=retriever,
        )
        samples.extend(run.samples)
    return samples


def cmd_analyze_cases(args) -> int:
    cfg = _merged_config(args)
    rows = ev.analyze_cases(_pooled_samples(cfg, args))
    table = [
        [
            r["case"],
            r["count"],
            "n/a" if r["mean_ratio"] is None else f"{r['mean_ratio']:.4f}",
            r["excluded_zero_txt"],
        ]
        for r in rows
    ]
    print(ev.format_table(["case", "count", "mean_ratio", "excluded_zero_txt"], table))
    _emit_json({"rows": rows}, args)
    return EXIT_OK


def cmd_analyze_adjustment(args) -> int:
    cfg = _merged_config(args)
    corpus, queries, classes = load_inputs(cfg, Path(args.config).parent)
    rows = ev.ablate_adjustment(
        queries, corpus, classes, cfg.retrieval, cfg.inference, seeds=cfg.seeds
    )
    table = [[r["mode"], *_acc_cells(r["summary"])] for r in rows]
    print(ev.format_table(["mode", "img_acc", "txt_acc", "ens_acc"], table))
    _emit_json({"rows": [{"mode": r["mode"], "summary": r["summary"]} for r in rows]}, args)
    return EXIT_OK


def cmd_analyze_retrieval(args) -> int:
    cfg = _merged_config(args)
    corpus, queries, classes = load_inputs(cfg, Path(args.config).parent)
    rows = ev.ablate_retrieval(
        queries, corpus, classes, cfg.retrieval, cfg.inference, mode=cfg.mode, seeds=cfg.seeds
    )
    table = [[r["approach"], *_acc_cells(r["summary"])] for r in rows]
    print(ev.format_table(["approach", "img_acc", "txt_acc", "ens_acc"], table))
    _emit_json({"rows": [{"approach": r["approach"], "summary": r["summary"]} for r in rows]}, args)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (KeyboardInterrupt, BrokenPipeError):
        return EXIT_INTERNAL
    except SystemExit:
        raise
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
