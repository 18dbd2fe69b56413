"""Two-stage cross-modal retrieval over an image-text corpus.

Stage one gathers N candidates by image-to-image similarity in the coarse
space. Stage two rescores those candidates' captions directly against the
query image embedded in the fine space and keeps the top K, because the
image ranking and the caption ranking need not agree. The indirect variant
skips stage two and takes the captions of the top-K image matches; it exists
as an ablation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCandidatesError, KExceedsNError
from .index import Index, SearchResult, _check_query, build_index
from .store import Corpus

DEFAULT_N = 128
DEFAULT_K = 16


@dataclass
class RetrievalConfig:
    coarse_space: str
    fine_space: str
    query_fine_space: str
    n_candidates: int = DEFAULT_N
    k_captions: int = DEFAULT_K

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates must be positive, got {self.n_candidates}")
        if self.k_captions < 1:
            raise ValueError(f"k_captions must be positive, got {self.k_captions}")
        if self.k_captions > self.n_candidates:
            raise KExceedsNError(
                f"k_captions {self.k_captions} exceeds n_candidates {self.n_candidates}"
            )


@dataclass(frozen=True)
class RetrievedCaption:
    record_id: int
    caption: str
    score: float


@dataclass
class RetrievedCaptions:
    entries: list[RetrievedCaption]

    def __len__(self) -> int:
        return len(self.entries)

    def record_ids(self) -> list[int]:
        return [e.record_id for e in self.entries]

    def captions(self) -> list[str]:
        return [e.caption for e in self.entries]


class Retriever:
    """Corpus plus its coarse-space index; query methods are pure and reusable."""

    def __init__(
        self,
        corpus: Corpus,
        config: RetrievalConfig,
        index: Index | None = None,
        *,
        index_mode: str = "exact",
        num_lists: int | None = None,
        seed: int = 0,
    ):
        self.corpus = corpus
        self.config = config
        coarse = corpus.matrix(config.coarse_space)
        self.index = index if index is not None else build_index(
            coarse, index_mode, num_lists=num_lists, seed=seed
        )

    def coarse_retrieve(
        self, query_image, n: int | None = None, probes: int | None = None
    ) -> SearchResult:
        """Top-N corpus rows by image-to-image similarity; clamps to corpus size."""
        n = self.config.n_candidates if n is None else n
        return self.index.search(query_image, n, probes=probes)

    def fine_retrieve(
        self, query_image_fine, candidates: SearchResult, k: int | None = None
    ) -> RetrievedCaptions:
        """Rescore candidate captions against the fine-space query; keep top K.

        The result is always a subset of ``candidates``, ordered by descending
        caption score with ties broken by ascending record id.
        """
        if len(candidates) == 0:
            raise EmptyCandidatesError("fine retrieval needs a non-empty candidate set")
        k = self.config.k_captions if k is None else k
        fine = self.corpus.matrix(self.config.fine_space)
        q = _check_query(query_image_fine, fine.space.dim)
        rows = np.asarray(candidates.row_indices(), dtype=np.int64)
        scores = fine.data[rows] @ q
        records = self.corpus.records
        scored = sorted(
            ((float(scores[i]), records[row]) for i, row in enumerate(rows)),
            key=lambda pair: (-pair[0], pair[1].id),
        )
        return RetrievedCaptions(
            [
                RetrievedCaption(record_id=rec.id, caption=rec.caption, score=score)
                for score, rec in scored[: max(0, k)]
            ]
        )

    def indirect_retrieve(
        self,
        query_image,
        n: int | None = None,
        k: int | None = None,
        probes: int | None = None,
    ) -> RetrievedCaptions:
        """Ablation baseline: captions of the top-K image matches, image scores kept."""
        k = self.config.k_captions if k is None else k
        candidates = self.coarse_retrieve(query_image, n=n, probes=probes)
        records = self.corpus.records
        top = candidates.entries[: max(0, k)]
        entries = [
            RetrievedCaption(record_id=records[row].id, caption=records[row].caption, score=score)
            for row, score in top
        ]
        entries.sort(key=lambda e: (-e.score, e.record_id))
        return RetrievedCaptions(entries)

    def retrieve(
        self,
        query_image,
        query_image_fine,
        n: int | None = None,
        k: int | None = None,
        probes: int | None = None,
    ) -> RetrievedCaptions:
        """Full two-stage retrieval for one query."""
        candidates = self.coarse_retrieve(query_image, n=n, probes=probes)
        return self.fine_retrieve(query_image_fine, candidates, k=k)
