"""Flat ``key = value`` run configuration and its canonical hash."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .loss import DEFAULT_CLASS_WEIGHTS, ClassWeights
from .targets import GaeConfig, Node2vecConfig, PcaConfig
from .train import TrainConfig

TASKS = ("classify", "cluster", "link", "all")
TARGET_NAMES = ("node2vec", "pca", "gae")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def canonical_text(values: dict[str, str]) -> str:
    return "".join(f"{k}={values[k]}\n" for k in sorted(values))


def config_hash(values: dict[str, str]) -> str:
    """sha256 of the sorted ``key=value`` lines; line order does not matter."""
    return hashlib.sha256(canonical_text(values).encode("utf-8")).hexdigest()


def derive_seed(seed: int, tag: str) -> int:
    """Independent per-component seed from the single global seed."""
    tag_words = [b for b in tag.encode("utf-8")]
    return int(np.random.SeedSequence([seed, *tag_words]).generate_state(1, np.uint64)[0] >> 1)


@dataclass
class RunConfig:
    data: dict[str, Path]
    data_format: str
    task: str
    output: Path
    seed: int
    target_names: tuple[str, ...]
    train: TrainConfig
    node2vec: Node2vecConfig
    pca: PcaConfig
    gae: GaeConfig
    split_fractions: tuple[float, float, float] = (0.85, 0.05, 0.10)
    probe_fractions: tuple[float, float, float] = (0.1, 0.1, 0.8)
    probe_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
    probe_repeats: int = 10
    cluster_repeats: int = 10
    raw: dict[str, str] = field(default_factory=dict)
    hash: str = ""

    @property
    def views(self) -> list[str]:
        """Graph views the task needs: ``full`` (classify, cluster) and/or ``link``."""
        out = []
        if self.task in ("classify", "cluster", "all"):
            out.append("full")
        if self.task in ("link", "all"):
            out.append("link")
        return out

    def view_dir(self, view: str) -> Path:
        return self.output if view == "full" else self.output / "link"


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.split(",") if v.strip())


def _coerce(kind, value: str):
    if kind is bool:
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return value.lower() in ("true", "1", "yes")
    return kind(value)


def _section(cls, values: dict[str, str], prefix: str, overrides: dict):
    """Build dataclass ``cls`` from keys ``prefix.field``; unknown keys are errors."""
    kinds = {f.name: f.type for f in fields(cls)}
    builtin = {"int": int, "float": float, "bool": bool, "str": str}
    kwargs = dict(overrides)
    for key, value in values.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1 :]
        kind = builtin.get(str(kinds.get(name)))
        if kind is None:
            raise ConfigError(f"unknown key {key!r}")
        try:
            kwargs[name] = _coerce(kind, value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{prefix}] {exc}") from None


_TOP_KEYS = {"task", "output", "seed", "targets", "data.format", "data.features", "data.edges", "data.labels",
             "data.content", "data.cites", "split.fractions", "probe.fractions", "probe.grid", "probe.repeats",
             "cluster.repeats", "train.weights.E", "train.weights.F", "train.weights.B", "train.subsets"}
_SECTIONS = ("train.", "n2v.", "pca.", "gae.")


def build_config(values: dict[str, str], base_dir: Path, check_paths: bool = True) -> RunConfig:
    for key in values:
        if key not in _TOP_KEYS and not key.startswith(_SECTIONS):
            raise ConfigError(f"unknown key {key!r}")
    try:
        seed = int(values.get("seed", "0"))
    except ValueError:
        raise ConfigError("seed must be an integer") from None
    task = values.get("task", "all")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}; got {task!r}")
    targets = tuple(t.strip() for t in values.get("targets", "node2vec,pca").split(",") if t.strip())
    bad = [t for t in targets if t not in TARGET_NAMES]
    if not targets or bad:
        raise ConfigError(f"targets must be a non-empty list from {TARGET_NAMES}; got {values.get('targets')!r}")
    if len(set(targets)) != len(targets):
        raise ConfigError("targets contains duplicates")

    fmt = values.get("data.format", "tsv")
    wanted = {"tsv": ("features", "edges"), "linqs": ("content", "cites")}.get(fmt)
    if wanted is None:
        raise ConfigError(f"data.format must be 'tsv' or 'linqs'; got {fmt!r}")
    data = {}
    for name in wanted + (("labels",) if fmt == "tsv" and "data.labels" in values else ()):
        key = f"data.{name}"
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
        path = Path(values[key])
        data[name] = path if path.is_absolute() else base_dir / path
        if check_paths and not data[name].exists():
            raise ConfigError(f"{key}: path does not exist: {data[name]}")
    output = Path(values.get("output", "out"))
    output = output if output.is_absolute() else base_dir / output

    train_over = {"seed": derive_seed(seed, "train")}
    try:
        if "train.subsets" in values:
            subsets = []
            for part in values["train.subsets"].split(";"):
                subsets.append(tuple(int(i) - 1 for i in part.split("+")))
            train_over["subsets"] = tuple(subsets)
        if any(f"train.weights.{c}" in values for c in "EFB"):
            cw = {c: _floats(values.get(f"train.weights.{c}", ",".join(map(str, getattr(DEFAULT_CLASS_WEIGHTS, c)))))
                  for c in "EFB"}
            train_over["class_weights"] = ClassWeights(**cw)
        section_values = {k: v for k, v in values.items() if k not in ("train.subsets",) and not k.startswith("train.weights.")}
        train = _section(TrainConfig, section_values, "train", train_over)
        n2v = _section(Node2vecConfig, values, "n2v", {"seed": derive_seed(seed, "node2vec")})
        pca = _section(PcaConfig, values, "pca", {})
        gae = _section(GaeConfig, values, "gae", {"seed": derive_seed(seed, "gae")})
        split_fr = _floats(values.get("split.fractions", "0.85,0.05,0.10"))
        probe_fr = _floats(values.get("probe.fractions", "0.1,0.1,0.8"))
        grid = _floats(values.get("probe.grid", "0.001,0.01,0.1,1,10"))
        probe_repeats = int(values.get("probe.repeats", "10"))
        cluster_repeats = int(values.get("cluster.repeats", "10"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    subsets = train.subsets
    num_subsets = len(subsets) if subsets else 2 ** len(targets) - 1
    if subsets and any(i < 0 or i >= len(targets) for s in subsets for i in s):
        raise ConfigError("train.subsets refers to a target index that does not exist")
    if train.class_weights.num_subsets != num_subsets:
        if "train.weights.E" in values or len(targets) == 2:
            raise ConfigError(
                f"class weights have {train.class_weights.num_subsets} entries but there are {num_subsets} target subsets"
            )
        train = _section(TrainConfig, section_values, "train", train_over | {"class_weights": ClassWeights.uniform(num_subsets)})
    if len(split_fr) != 3 or abs(sum(split_fr) - 1) > 1e-9:
        raise ConfigError("split.fractions needs three values summing to 1")
    if len(probe_fr) != 3 or abs(sum(probe_fr) - 1) > 1e-9:
        raise ConfigError("probe.fractions needs three values summing to 1")
    if not grid:
        raise ConfigError("probe.grid is empty")
    if probe_repeats < 1 or cluster_repeats < 1:
        raise ConfigError("repeat counts must be >= 1")
    if task in ("classify", "cluster", "all") and fmt == "tsv" and "labels" not in data:
        raise ConfigError(f"task {task!r} needs data.labels")
    return RunConfig(
        data, fmt, task, output, seed, targets, train, n2v, pca, gae,
        split_fr, probe_fr, grid, probe_repeats, cluster_repeats, dict(values), config_hash(values),
    )


def load_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    return build_config(values, path.resolve().parent, check_paths)
