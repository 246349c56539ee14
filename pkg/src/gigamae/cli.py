"""Command-line pipeline: ``targets``, ``train``, ``eval``, ``run`` and ``split``.

Output layout (``output`` in the config)::

    out/targets/<name>.ggme        targets of the full graph
    out/checkpoint/manifest.txt    trained parameters
    out/embeddings.ggme            final embeddings of the full graph (float32 cache)
    out/embeddings.npy             the same embeddings at training precision
    out/train_log.tsv
    out/link/...                   same layout for the train-edge graph, plus split.tsv
    out/report_<task>.txt          human-readable table then key=value block

Exit status: 0 on success, 1 on a configuration error, 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, derive_seed, load_config
from .evaluate import EvalReport, cluster_eval, link_eval, linear_probe
from .graph import Graph, load_graph, load_linqs_cora, read_embedding, read_split, split_edges, write_embedding, write_split
from .model import save_checkpoint
from .targets import gae_embed, node2vec_embed, pca_embed
from .train import train_model

log = logging.getLogger("gigamae")

COMMANDS = ("targets", "train", "eval", "run", "split")


class PipelineError(RuntimeError):
    pass


def _load_data(cfg: RunConfig) -> Graph:
    if cfg.data_format == "linqs":
        return load_linqs_cora(cfg.data["content"], cfg.data["cites"])
    return load_graph(cfg.data["features"], cfg.data["edges"], cfg.data.get("labels"))


def _split_path(cfg: RunConfig) -> Path:
    return cfg.view_dir("link") / "split.tsv"


def _ensure_split(cfg: RunConfig, graph: Graph):
    path = _split_path(cfg)
    if path.exists():
        split = read_split(path)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        split = split_edges(graph, cfg.split_fractions, derive_seed(cfg.seed, "split"))
        write_split(path, split, cfg.hash)
    return split


def _view_graph(cfg: RunConfig, graph: Graph, view: str) -> Graph:
    if view == "full":
        return graph
    return graph.with_edges(_ensure_split(cfg, graph).train_edges)


def _target_path(cfg: RunConfig, view: str, name: str) -> Path:
    return cfg.view_dir(view) / "targets" / f"{name}.ggme"


def cmd_targets(cfg: RunConfig, graph: Graph) -> None:
    for view in cfg.views:
        g = _view_graph(cfg, graph, view)
        (cfg.view_dir(view) / "targets").mkdir(parents=True, exist_ok=True)
        for name in cfg.target_names:
            if name == "node2vec":
                emb = node2vec_embed(g, cfg.node2vec)
            elif name == "pca":
                emb = pca_embed(g.features, cfg.pca)
            else:
                emb = gae_embed(g, cfg.gae)
            emb.meta["config_hash"] = cfg.hash
            emb.meta["view"] = view
            write_embedding(_target_path(cfg, view, name), emb)
            log.info("wrote target %s (%dx%d) for view %s", name, emb.rows, emb.cols, view)


def cmd_train(cfg: RunConfig, graph: Graph, stream=None) -> None:
    for view in cfg.views:
        g = _view_graph(cfg, graph, view)
        targets = []
        for name in cfg.target_names:
            path = _target_path(cfg, view, name)
            if not path.exists():
                raise PipelineError(f"missing target cache {path}; run the 'targets' command first")
            targets.append(read_embedding(path).data)
        out = cfg.view_dir(view)
        log_path = out / "train_log.tsv"
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash={cfg.hash}\n# view={view}\n")
            tee = _Tee(fh, stream)
            model, final, _ = train_model(g, targets, cfg.train, tee, out / "checkpoint", cfg.hash)
        save_checkpoint(out / "checkpoint", model, cfg.hash)
        final.meta["view"] = view
        write_embedding(out / "embeddings.ggme", final)
        np.save(out / "embeddings.npy", final.data)


class _Tee:
    def __init__(self, *streams):
        self.streams = [s for s in streams if s is not None]

    def write(self, text: str) -> None:
        for s in self.streams:
            s.write(text)


def _load_final(cfg: RunConfig, view: str):
    path = cfg.view_dir(view) / "embeddings.ggme"
    if not path.exists():
        raise PipelineError(f"missing embeddings {path}; run the 'train' command first")
    if not (cfg.view_dir(view) / "checkpoint" / "manifest.txt").exists():
        raise PipelineError(f"missing checkpoint in {cfg.view_dir(view) / 'checkpoint'}")
    return read_embedding(path).data


def cmd_eval(cfg: RunConfig, graph: Graph, stream=None) -> list[EvalReport]:
    reports = []
    tasks = ("classify", "cluster", "link") if cfg.task == "all" else (cfg.task,)
    for task in tasks:
        if task == "link":
            z = _load_final(cfg, "link")
            split = read_split(_split_path(cfg))
            report = link_eval(z, split, cfg.hash)
        else:
            if graph.labels is None:
                raise PipelineError(f"task {task!r} needs node labels")
            z = _load_final(cfg, "full")
            if task == "classify":
                report = linear_probe(
                    z, graph.labels, cfg.probe_fractions, cfg.probe_grid, cfg.probe_repeats,
                    derive_seed(cfg.seed, "probe"), cfg.hash,
                )
            else:
                report = cluster_eval(
                    z, graph.labels, graph.num_classes, cfg.cluster_repeats, derive_seed(cfg.seed, "cluster"), cfg.hash
                )
        text = report.to_table() + "\n\n" + report.to_kv() + "\n"
        (cfg.output / f"report_{task}.txt").write_text(text, encoding="utf-8")
        if stream is not None:
            stream.write(report.to_table() + "\n")
        reports.append(report)
    return reports


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gigamae", description="Graph masked autoencoder with multiple reconstruction targets.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, text in (
        ("targets", "compute and cache target embeddings"),
        ("train", "train from cached targets"),
        ("eval", "evaluate trained embeddings"),
        ("run", "targets, train and eval in sequence"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--quiet", action="store_true", help="do not stream the training log to stdout")
    p = sub.add_parser("split", help="write an edge split file")
    p.add_argument("--config", type=Path)
    p.add_argument("--features", type=Path)
    p.add_argument("--edges", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", default="0.85,0.05,0.10")
    return parser


def _thread_limit():
    value = os.environ.get("GIGAMAE_THREADS")
    if not value:
        return nullcontext()
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"GIGAMAE_THREADS must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _cmd_split(args) -> None:
    if args.config is not None:
        cfg = load_config(args.config)
        graph = _load_data(cfg)
        split = split_edges(graph, cfg.split_fractions, derive_seed(cfg.seed, "split"))
        out = args.out or _split_path(cfg)
        config_hash = cfg.hash
    else:
        if args.features is None or args.edges is None or args.out is None:
            raise ConfigError("split needs --config, or all of --features, --edges and --out")
        for p in (args.features, args.edges):
            if not p.exists():
                raise ConfigError(f"path does not exist: {p}")
        try:
            fractions = tuple(float(f) for f in args.fractions.split(","))
        except ValueError:
            raise ConfigError(f"bad --fractions {args.fractions!r}") from None
        graph = load_graph(args.features, args.edges)
        split = split_edges(graph, fractions, args.seed)
        out, config_hash = args.out, ""
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_split(out, split, config_hash)
    print(f"wrote {out}: {split.describe()}")


def run_command(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("gigamae: error: a command is required", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            if args.command == "split":
                _cmd_split(args)
                return 0
            cfg = load_config(args.config)
            cfg.output.mkdir(parents=True, exist_ok=True)
            graph = _load_data(cfg)
            stream = None if args.quiet else stdout
            if args.command in ("targets", "run"):
                cmd_targets(cfg, graph)
            if args.command in ("train", "run"):
                cmd_train(cfg, graph, stream)
            if args.command in ("eval", "run"):
                cmd_eval(cfg, graph, stdout)
    except ConfigError as exc:
        print(f"gigamae: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(f"gigamae: error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 2
    return 0


def main() -> None:
    sys.exit(run_command())
