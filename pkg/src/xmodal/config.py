"""Engine configuration: one INI file wires every module together.

Layout:

  [engine]        mode = modal|equal|raw, seeds = 0,1,2
  [space:NAME]    dim = <int>, normalized = true|false
  [corpus]        metadata = <jsonl>, embedding.NAME = <xmeb> per space
  [queries]       metadata = <jsonl>, embedding.NAME = <xmeb> per space
  [classes]       path = <classes.json>
  [retrieval]     coarse_space, fine_space, query_fine_space, n, k
  [inference]     space, temperature
  [index]         mode = exact|ivf, num_lists, seed, path   (optional)

Paths are stored verbatim and resolved against the config file's directory
only at load time. ``parse_config`` and ``render_config`` are inverses:
``parse_config(render_config(cfg)) == cfg``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import MODES
from .errors import ConfigError
from .index import load_ivf
from .inference import InferenceConfig
from .retrieval import RetrievalConfig, Retriever
from .store import (
    ClassSet,
    Corpus,
    EmbeddingSpace,
    QuerySet,
    load_classset,
    load_corpus,
    load_queries,
)

_SPACE_PREFIX = "space:"
_EMB_PREFIX = "embedding."
INDEX_MODES = ("exact", "ivf")


@dataclass
class IndexConfig:
    mode: str = "exact"
    num_lists: int | None = None
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.mode not in INDEX_MODES:
            raise ConfigError(f"index mode must be one of {INDEX_MODES}, got {self.mode!r}")
        if self.mode == "ivf" and (self.num_lists is None or self.num_lists < 1):
            raise ConfigError("ivf index mode needs a positive num_lists")


@dataclass
class EngineConfig:
    spaces: tuple[EmbeddingSpace, ...]
    corpus_metadata: str
    corpus_embeddings: dict[str, str]
    query_metadata: str
    query_embeddings: dict[str, str]
    classset_path: str
    retrieval: RetrievalConfig
    inference: InferenceConfig
    index: IndexConfig = field(default_factory=IndexConfig)
    mode: str = "modal"
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        names = [s.name for s in self.spaces]
        if len(set(names)) != len(names):
            raise ConfigError(f"space names declared more than once: {sorted(names)}")
        declared = set(names)
        referenced = {
            self.retrieval.coarse_space,
            self.retrieval.fine_space,
            self.retrieval.query_fine_space,
            self.inference.inference_space,
        }
        missing = sorted(referenced - declared)
        if missing:
            raise ConfigError(f"referenced spaces never declared: {missing}")
        for origin, paths in (("corpus", self.corpus_embeddings), ("queries", self.query_embeddings)):
            unknown = sorted(set(paths) - declared)
            if unknown:
                raise ConfigError(f"[{origin}] embeddings name undeclared spaces: {unknown}")
        if self.mode not in MODES:
            raise ConfigError(f"engine mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError(f"seeds must be non-negative, got {self.seeds}")

    def space_map(self) -> dict[str, EmbeddingSpace]:
        return {s.name: s for s in self.spaces}


def _require(parser: configparser.ConfigParser, section: str, key: str) -> str:
    if not parser.has_option(section, key):
        raise ConfigError(f"config section [{section}] is missing key '{key}'")
    return parser.get(section, key)


def _as_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None


def _as_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None


def _as_bool(raw: str, where: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def _parse_paths_section(parser, section: str) -> tuple[str, dict[str, str]]:
    metadata = _require(parser, section, "metadata")
    embeddings: dict[str, str] = {}
    for key, value in parser.items(section):
        if key == "metadata":
            continue
        if not key.startswith(_EMB_PREFIX):
            raise ConfigError(f"[{section}] has unknown key '{key}'")
        embeddings[key[len(_EMB_PREFIX):]] = value
    if not embeddings:
        raise ConfigError(f"[{section}] declares no embedding.<space> entries")
    return metadata, embeddings


def parse_config(text: str) -> EngineConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # space names are case-sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config is not valid INI: {exc}") from exc

    spaces = []
    for section in parser.sections():
        if not section.startswith(_SPACE_PREFIX):
            continue
        name = section[len(_SPACE_PREFIX):]
        dim = _as_int(_require(parser, section, "dim"), f"[{section}] dim")
        normalized = True
        if parser.has_option(section, "normalized"):
            normalized = _as_bool(parser.get(section, "normalized"), f"[{section}] normalized")
        try:
            spaces.append(EmbeddingSpace(name=name, dim=dim, normalized=normalized))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc

    for required in ("corpus", "queries", "classes", "retrieval", "inference"):
        if not parser.has_section(required):
            raise ConfigError(f"config is missing section [{required}]")

    corpus_metadata, corpus_embeddings = _parse_paths_section(parser, "corpus")
    query_metadata, query_embeddings = _parse_paths_section(parser, "queries")
    classset_path = _require(parser, "classes", "path")

    try:
        retrieval = RetrievalConfig(
            coarse_space=_require(parser, "retrieval", "coarse_space"),
            fine_space=_require(parser, "retrieval", "fine_space"),
            query_fine_space=_require(parser, "retrieval", "query_fine_space"),
            n_candidates=_as_int(_require(parser, "retrieval", "n"), "[retrieval] n"),
            k_captions=_as_int(_require(parser, "retrieval", "k"), "[retrieval] k"),
        )
        inference = InferenceConfig(
            inference_space=_require(parser, "inference", "space"),
            temperature=_as_float(
                _require(parser, "inference", "temperature"), "[inference] temperature"
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    index = IndexConfig()
    if parser.has_section("index"):
        num_lists = None
        if parser.has_option("index", "num_lists"):
            num_lists = _as_int(parser.get("index", "num_lists"), "[index] num_lists")
        seed = 0
        if parser.has_option("index", "seed"):
            seed = _as_int(parser.get("index", "seed"), "[index] seed")
        index = IndexConfig(
            mode=parser.get("index", "mode", fallback="exact"),
            num_lists=num_lists,
            seed=seed,
            path=parser.get("index", "path", fallback=None),
        )

    mode = "modal"
    seeds: tuple[int, ...] = (0,)
    if parser.has_section("engine"):
        mode = parser.get("engine", "mode", fallback="modal")
        if parser.has_option("engine", "seeds"):
            raw = parser.get("engine", "seeds")
            seeds = tuple(
                _as_int(part.strip(), "[engine] seeds") for part in raw.split(",") if part.strip()
            )

    return EngineConfig(
        spaces=tuple(spaces),
        corpus_metadata=corpus_metadata,
        corpus_embeddings=corpus_embeddings,
        query_metadata=query_metadata,
        query_embeddings=query_embeddings,
        classset_path=classset_path,
        retrieval=retrieval,
        inference=inference,
        index=index,
        mode=mode,
        seeds=seeds,
    )


def render_config(cfg: EngineConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str

    parser["engine"] = {
        "mode": cfg.mode,
        "seeds": ",".join(str(s) for s in cfg.seeds),
    }
    for space in cfg.spaces:
        parser[f"{_SPACE_PREFIX}{space.name}"] = {
            "dim": str(space.dim),
            "normalized": "true" if space.normalized else "false",
        }
    for section, metadata, embeddings in (
        ("corpus", cfg.corpus_metadata, cfg.corpus_embeddings),
        ("queries", cfg.query_metadata, cfg.query_embeddings),
    ):
        body = {"metadata": metadata}
        for name, path in embeddings.items():
            body[f"{_EMB_PREFIX}{name}"] = path
        parser[section] = body
    parser["classes"] = {"path": cfg.classset_path}
    parser["retrieval"] = {
        "coarse_space": cfg.retrieval.coarse_space,
        "fine_space": cfg.retrieval.fine_space,
        "query_fine_space": cfg.retrieval.query_fine_space,
        "n": str(cfg.retrieval.n_candidates),
        "k": str(cfg.retrieval.k_captions),
    }
    parser["inference"] = {
        "space": cfg.inference.inference_space,
        "temperature": repr(cfg.inference.temperature),
    }
    index_body = {"mode": cfg.index.mode, "seed": str(cfg.index.seed)}
    if cfg.index.num_lists is not None:
        index_body["num_lists"] = str(cfg.index.num_lists)
    if cfg.index.path is not None:
        index_body["path"] = cfg.index.path
    parser["index"] = index_body

    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def load_config(path) -> EngineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def load_inputs(cfg: EngineConfig, base_dir) -> tuple[Corpus, QuerySet, ClassSet]:
    """Load every artifact the config names, paths relative to ``base_dir``."""
    base = Path(base_dir)
    spaces = cfg.space_map()
    corpus = load_corpus(
        {name: base / rel for name, rel in cfg.corpus_embeddings.items()},
        base / cfg.corpus_metadata,
        spaces,
    )
    queries = load_queries(
        {name: base / rel for name, rel in cfg.query_embeddings.items()},
        base / cfg.query_metadata,
        spaces,
    )
    classes = load_classset(base / cfg.classset_path, spaces)
    return corpus, queries, classes


def make_retriever(cfg: EngineConfig, corpus: Corpus, base_dir) -> Retriever:
    """Build the configured retriever; a persisted IVF sidecar wins if present."""
    if cfg.index.mode == "ivf" and cfg.index.path is not None:
        sidecar = Path(base_dir) / cfg.index.path
        if sidecar.exists():
            matrix = corpus.matrix(cfg.retrieval.coarse_space)
            return Retriever(corpus, cfg.retrieval, index=load_ivf(sidecar, matrix))
    return Retriever(
        corpus,
        cfg.retrieval,
        index_mode=cfg.index.mode,
        num_lists=cfg.index.num_lists,
        seed=cfg.index.seed,
    )
