"""Synthetic multi-space corpora with controllable signal-to-noise.

Each class owns one prototype vector per space; the prototype rows are
orthonormal (QR of a seeded Gaussian matrix), so classes are maximally
separated before noise. Every corpus record and query draws its class,
then perturbs the prototype with isotropic Gaussian noise and renormalizes.
Smaller noise means cleaner retrieval and sharper class distributions, so
accuracy on these fixtures is tunable by construction.

Spaces mirror the deployment layout: a coarse space for image-to-image
candidate search, a fine space holding caption embeddings and the query's
cross-modal projection, and an inference space shared by captions, queries,
and class prompts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EngineConfig, IndexConfig, render_config
from .inference import InferenceConfig
from .retrieval import RetrievalConfig
from .store import (
    ClassSet,
    Corpus,
    CorpusRecord,
    EmbeddingMatrix,
    EmbeddingSpace,
    QuerySet,
    save_matrix,
    write_classset,
    write_metadata,
)

COARSE, FINE, INFER = "coarse", "fine", "infer"


@dataclass
class SynthSpec:
    num_classes: int = 4
    corpus_per_class: int = 500
    queries_per_class: int = 50
    coarse_dim: int = 32
    fine_dim: int = 48
    inference_dim: int = 24
    image_noise: float = 0.25
    text_noise: float = 0.25
    query_noise: float = 0.25
    n_candidates: int = 128
    k_captions: int = 16
    seed: int = 7

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.num_classes}")
        smallest = min(self.coarse_dim, self.fine_dim, self.inference_dim)
        if smallest < self.num_classes:
            raise ValueError(
                f"every space dim must be >= num_classes so prototypes can be "
                f"orthonormal; got dim {smallest} < {self.num_classes} classes"
            )
        if self.corpus_per_class < 1 or self.queries_per_class < 1:
            raise ValueError("corpus_per_class and queries_per_class must be positive")


@dataclass
class SynthData:
    spec: SynthSpec
    corpus: Corpus
    queries: QuerySet
    classes: ClassSet
    spaces: dict[str, EmbeddingSpace]


def _orthonormal_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, count)))
    return q.T


def _noisy_rows(
    rng: np.random.Generator, prototypes: np.ndarray, labels: np.ndarray, noise: float
) -> np.ndarray:
    rows = prototypes[labels] + noise * rng.standard_normal((labels.size, prototypes.shape[1]))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def make_synthetic(spec: SynthSpec) -> SynthData:
    """Generate an in-memory corpus, query set, and class set."""
    rng = np.random.default_rng(spec.seed)
    spaces = {
        COARSE: EmbeddingSpace(COARSE, spec.coarse_dim),
        FINE: EmbeddingSpace(FINE, spec.fine_dim),
        INFER: EmbeddingSpace(INFER, spec.inference_dim),
    }
    protos = {
        name: _orthonormal_rows(rng, spec.num_classes, space.dim)
        for name, space in spaces.items()
    }

    corpus_labels = np.repeat(np.arange(spec.num_classes), spec.corpus_per_class)
    corpus_matrices = {
        COARSE: _noisy_rows(rng, protos[COARSE], corpus_labels, spec.image_noise),
        FINE: _noisy_rows(rng, protos[FINE], corpus_labels, spec.text_noise),
        INFER: _noisy_rows(rng, protos[INFER], corpus_labels, spec.text_noise),
    }
    records = [
        CorpusRecord(
            id=101 + 7 * row,
            caption=f"a photo of a class-{label}, corpus item {row}",
            row_index=row,
            label=int(label),
        )
        for row, label in enumerate(corpus_labels)
    ]
    corpus = Corpus(
        records=records,
        matrices={name: EmbeddingMatrix(spaces[name], m) for name, m in corpus_matrices.items()},
    )

    query_labels = np.repeat(np.arange(spec.num_classes), spec.queries_per_class)
    query_matrices = {
        COARSE: _noisy_rows(rng, protos[COARSE], query_labels, spec.query_noise),
        FINE: _noisy_rows(rng, protos[FINE], query_labels, spec.query_noise),
        INFER: _noisy_rows(rng, protos[INFER], query_labels, spec.query_noise),
    }
    queries = QuerySet(
        ids=[9001 + 13 * i for i in range(query_labels.size)],
        labels=[int(lab) for lab in query_labels],
        matrices={name: EmbeddingMatrix(spaces[name], m) for name, m in query_matrices.items()},
    )

    classes = ClassSet(
        labels=[f"class-{c}" for c in range(spec.num_classes)],
        embeddings={INFER: EmbeddingMatrix(spaces[INFER], protos[INFER].astype(np.float32))},
    )
    return SynthData(spec=spec, corpus=corpus, queries=queries, classes=classes, spaces=spaces)


def fixture_config(spec: SynthSpec) -> EngineConfig:
    """The EngineConfig matching the file layout ``write_synthetic`` produces."""
    return EngineConfig(
        spaces=(
            EmbeddingSpace(COARSE, spec.coarse_dim),
            EmbeddingSpace(FINE, spec.fine_dim),
            EmbeddingSpace(INFER, spec.inference_dim),
        ),
        corpus_metadata="corpus.jsonl",
        corpus_embeddings={name: f"corpus.{name}.xmeb" for name in (COARSE, FINE, INFER)},
        query_metadata="queries.jsonl",
        query_embeddings={name: f"queries.{name}.xmeb" for name in (COARSE, FINE, INFER)},
        classset_path="classes.json",
        retrieval=RetrievalConfig(
            coarse_space=COARSE,
            fine_space=FINE,
            query_fine_space=FINE,
            n_candidates=spec.n_candidates,
            k_captions=spec.k_captions,
        ),
        inference=InferenceConfig(inference_space=INFER),
        index=IndexConfig(),
        mode="modal",
        seeds=(0, 1, 2),
    )


def write_synthetic(spec: SynthSpec, out_dir) -> Path:
    """Write a complete on-disk fixture; returns the config.ini path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = make_synthetic(spec)

    for name, matrix in data.corpus.matrices.items():
        save_matrix(matrix, out / f"corpus.{name}.xmeb")
    write_metadata(
        [
            {"id": r.id, "caption": r.caption, "label": r.label}
            for r in data.corpus.records
        ],
        out / "corpus.jsonl",
    )

    for name, matrix in data.queries.matrices.items():
        save_matrix(matrix, out / f"queries.{name}.xmeb")
    write_metadata(
        [
            {"id": qid, "label": lab}
            for qid, lab in zip(data.queries.ids, data.queries.labels)
        ],
        out / "queries.jsonl",
    )

    save_matrix(data.classes.embeddings[INFER], out / f"classes.{INFER}.xmeb")
    write_classset(data.classes.labels, {INFER: f"classes.{INFER}.xmeb"}, out / "classes.json")

    config_path = out / "config.ini"
    config_path.write_text(render_config(fixture_config(spec)), encoding="utf-8")
    return config_path
