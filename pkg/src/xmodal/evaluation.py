"""Batch evaluation, parameter sweeps, and analysis reports.

One evaluation run shuffles the labeled query set with a seeded permutation,
pushes every query through retrieval, both modality predictions, and the
streaming ensemble, and logs one record per sample. Given identical inputs
and seed, every logged number is reproducible bit for bit; the only source
of randomness is the shuffle itself.

Accuracies are top-1 and reported as percentages. Aggregation over seeds
uses the population standard deviation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import ensemble
from .ensemble import EnsembleState
from .errors import KExceedsNError, MissingLabelsError
from .inference import InferenceConfig, Prediction, image_modal_probability, text_modal_probability
from .retrieval import RetrievalConfig, Retriever
from .store import ClassSet, Corpus, QuerySet


@dataclass
class SampleLog:
    query_id: int
    true_label: int
    img_pred: int
    txt_pred: int
    ens_pred: int
    adj_img: float
    adj_txt: float
    h_img: float
    h_txt: float
    retrieved_ids: list[int] = field(default_factory=list)


@dataclass
class EvalRun:
    config: dict
    seed: int
    samples: list[SampleLog]
    summary: dict[str, float]

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "summary": self.summary,
            "samples": [asdict(s) for s in self.samples],
        }


def accuracy_percent(correct: int, total: int) -> float:
    return 100.0 * correct / total if total else 0.0


def summarize_samples(samples: Sequence[SampleLog]) -> dict[str, float]:
    total = len(samples)
    return {
        "img_acc": accuracy_percent(sum(s.img_pred == s.true_label for s in samples), total),
        "txt_acc": accuracy_percent(sum(s.txt_pred == s.true_label for s in samples), total),
        "ens_acc": accuracy_percent(sum(s.ens_pred == s.true_label for s in samples), total),
    }


def summarize_runs(runs: Sequence[EvalRun]) -> dict[str, dict[str, float]]:
    """Mean and population std of each accuracy over a set of runs."""
    out: dict[str, dict[str, float]] = {}
    for key in ("img_acc", "txt_acc", "ens_acc"):
        vals = np.array([run.summary[key] for run in runs], dtype=np.float64)
        out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def run_prediction_stream(
    items: Iterable[tuple[int, int, Prediction, Prediction, list[int]]],
    mode: str = "modal",
) -> list[SampleLog]:
    """Feed (query_id, label, p_img, p_txt, retrieved_ids) tuples through a fresh
    ensemble stream in order and log every sample."""
    state = EnsembleState()
    samples: list[SampleLog] = []
    for query_id, label, p_img, p_txt, retrieved in items:
        state, out = ensemble.step(state, p_img, p_txt, mode=mode)
        samples.append(
            SampleLog(
                query_id=query_id,
                true_label=label,
                img_pred=p_img.predicted_class,
                txt_pred=p_txt.predicted_class,
                ens_pred=out.predicted_class,
                adj_img=out.adj_img,
                adj_txt=out.adj_txt,
                h_img=p_img.entropy,
                h_txt=p_txt.entropy,
                retrieved_ids=list(retrieved),
            )
        )
    return samples


def _config_snapshot(
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
    mode: str,
    indirect: bool,
) -> dict:
    return {
        "n": retrieval_config.n_candidates,
        "k": retrieval_config.k_captions,
        "coarse_space": retrieval_config.coarse_space,
        "fine_space": retrieval_config.fine_space,
        "query_fine_space": retrieval_config.query_fine_space,
        "inference_space": inference_config.inference_space,
        "temperature": inference_config.temperature,
        "mode": mode,
        "indirect": indirect,
    }


def _pipeline_items(
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retriever: Retriever,
    inference_config: InferenceConfig,
    order: Sequence[int],
    *,
    indirect: bool,
    n: int | None = None,
    k: int | None = None,
    coarse_cache: dict[int, object] | None = None,
):
    coarse_mat = queries.matrix(retriever.config.coarse_space)
    fine_mat = queries.matrix(retriever.config.query_fine_space)
    infer_mat = queries.matrix(inference_config.inference_space)
    caption_infer = corpus.matrix(inference_config.inference_space)
    for i in order:
        if coarse_cache is not None and i in coarse_cache:
            candidates = coarse_cache[i]
        else:
            candidates = retriever.coarse_retrieve(coarse_mat.data[i], n=n)
            if coarse_cache is not None:
                coarse_cache[i] = candidates
        if indirect:
            captions = retriever.indirect_retrieve(coarse_mat.data[i], n=n, k=k)
        else:
            captions = retriever.fine_retrieve(fine_mat.data[i], candidates, k=k)
        rows = [corpus.row_of(rid) for rid in captions.record_ids()]
        p_img = image_modal_probability(infer_mat.data[i], classes, inference_config)
        p_txt = text_modal_probability(caption_infer.data[rows], classes, inference_config)
        label = queries.labels[i]
        yield queries.ids[i], label, p_img, p_txt, captions.record_ids()


def evaluate(
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
    mode: str = "modal",
    seed: int = 0,
    *,
    indirect: bool = False,
    retriever: Retriever | None = None,
    n: int | None = None,
    k: int | None = None,
    coarse_cache: dict | None = None,
) -> EvalRun:
    """Run the full pipeline over a seeded shuffle of the labeled query set."""
    if not queries.has_labels:
        raise MissingLabelsError("evaluation requires a label on every query")
    if retriever is None:
        retriever = Retriever(corpus, retrieval_config)
    order = np.random.default_rng(seed).permutation(len(queries))
    items = _pipeline_items(
        queries,
        corpus,
        classes,
        retriever,
        inference_config,
        order,
        indirect=indirect,
        n=n,
        k=k,
        coarse_cache=coarse_cache,
    )
    samples = run_prediction_stream(items, mode=mode)
    config = _config_snapshot(retrieval_config, inference_config, mode, indirect)
    if n is not None:
        config["n"] = n
    if k is not None:
        config["k"] = k
    return EvalRun(config=config, seed=seed, samples=samples, summary=summarize_samples(samples))


@dataclass
class SweepRow:
    param: int
    runs: list[EvalRun]
    summary: dict[str, dict[str, float]]


def _sweep_rows(param_values, run_factory, seeds) -> list[SweepRow]:
    rows = []
    for value in param_values:
        runs = [run_factory(value, seed) for seed in seeds]
        rows.append(SweepRow(param=value, runs=runs, summary=summarize_runs(runs)))
    return rows


def sweep_k(
    ks: Sequence[int],
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
    mode: str = "modal",
    seeds: Sequence[int] = (0,),
) -> list[SweepRow]:
    """One evaluation per K; the coarse pass is shared across all K values."""
    if not ks:
        raise ValueError("sweep_k needs at least one K value")
    if max(ks) > retrieval_config.n_candidates:
        raise KExceedsNError(
            f"sweep K {max(ks)} exceeds candidate pool N {retrieval_config.n_candidates}"
        )
    retriever = Retriever(corpus, retrieval_config)
    cache: dict = {}

    def factory(k, seed):
        return evaluate(
            queries,
            corpus,
            classes,
            retrieval_config,
            inference_config,
            mode=mode,
            seed=seed,
            retriever=retriever,
            k=k,
            coarse_cache=cache,
        )

    return _sweep_rows(ks, factory, seeds)


def sweep_n(
    ns: Sequence[int],
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
    mode: str = "modal",
    seeds: Sequence[int] = (0,),
) -> list[SweepRow]:
    """One evaluation per candidate pool size N, K held fixed."""
    if not ns:
        raise ValueError("sweep_n needs at least one N value")
    if min(ns) < retrieval_config.k_captions:
        raise KExceedsNError(
            f"sweep N {min(ns)} is below K {retrieval_config.k_captions}"
        )
    retriever = Retriever(corpus, retrieval_config)

    def factory(n, seed):
        return evaluate(
            queries,
            corpus,
            classes,
            retrieval_config,
            inference_config,
            mode=mode,
            seed=seed,
            retriever=retriever,
            n=n,
            coarse_cache={},
        )

    return _sweep_rows(ns, factory, seeds)


def analyze_entropy(
    ks: Sequence[int],
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
) -> list[dict]:
    """Mean image-modal and text-modal entropy per K over the query set.

    Labels are not consulted, so unlabeled query sets are accepted.
    """
    if not ks:
        raise ValueError("analyze_entropy needs at least one K value")
    if max(ks) > retrieval_config.n_candidates:
        raise KExceedsNError(
            f"entropy K {max(ks)} exceeds candidate pool N {retrieval_config.n_candidates}"
        )
    retriever = Retriever(corpus, retrieval_config)
    coarse_mat = queries.matrix(retrieval_config.coarse_space)
    fine_mat = queries.matrix(retrieval_config.query_fine_space)
    infer_mat = queries.matrix(inference_config.inference_space)
    caption_infer = corpus.matrix(inference_config.inference_space)

    candidates = [retriever.coarse_retrieve(coarse_mat.data[i]) for i in range(len(queries))]
    h_img = [
        image_modal_probability(infer_mat.data[i], classes, inference_config).entropy
        for i in range(len(queries))
    ]
    rows = []
    for k in ks:
        h_txt = []
        for i in range(len(queries)):
            captions = retriever.fine_retrieve(fine_mat.data[i], candidates[i], k=k)
            cap_rows = [corpus.row_of(rid) for rid in captions.record_ids()]
            p_txt = text_modal_probability(caption_infer.data[cap_rows], classes, inference_config)
            h_txt.append(p_txt.entropy)
        rows.append(
            {
                "k": k,
                "mean_h_img": float(np.mean(h_img)),
                "mean_h_txt": float(np.mean(h_txt)),
            }
        )
    return rows


# The three outcome patterns of (image correct, text correct) with a correct
# ensemble; samples falling outside stay unreported.
CASE_PATTERNS = ((True, False), (False, True), (False, False))


def analyze_cases(samples: Sequence[SampleLog]) -> list[dict]:
    """Mean adjusted-confidence ratio per outcome case.

    Samples with a zero text weight cannot form a ratio; they are excluded
    from the mean and counted separately. Empty cases yield no row.
    """
    rows = []
    for number, (img_ok, txt_ok) in enumerate(CASE_PATTERNS, start=1):
        members = [
            s
            for s in samples
            if (s.img_pred == s.true_label) == img_ok
            and (s.txt_pred == s.true_label) == txt_ok
            and s.ens_pred == s.true_label
        ]
        if not members:
            continue
        ratios = [s.adj_img / s.adj_txt for s in members if s.adj_txt > 0.0]
        rows.append(
            {
                "case": number,
                "count": len(members),
                "mean_ratio": float(np.mean(ratios)) if ratios else None,
                "excluded_zero_txt": len(members) - len(ratios),
            }
        )
    return rows


def ablate_adjustment(
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
    seeds: Sequence[int] = (0,),
) -> list[dict]:
    """Two-row comparison: raw confidences as weights versus adjusted ones."""
    retriever = Retriever(corpus, retrieval_config)
    cache: dict = {}
    rows = []
    for mode in ("raw", "modal"):
        runs = [
            evaluate(
                queries,
                corpus,
                classes,
                retrieval_config,
                inference_config,
                mode=mode,
                seed=seed,
                retriever=retriever,
                coarse_cache=cache,
            )
            for seed in seeds
        ]
        rows.append({"mode": mode, "runs": runs, "summary": summarize_runs(runs)})
    return rows


def ablate_retrieval(
    queries: QuerySet,
    corpus: Corpus,
    classes: ClassSet,
    retrieval_config: RetrievalConfig,
    inference_config: InferenceConfig,
    mode: str = "modal",
    seeds: Sequence[int] = (0,),
) -> list[dict]:
    """Two-row comparison: direct fine retrieval versus the indirect baseline."""
    retriever = Retriever(corpus, retrieval_config)
    cache: dict = {}
    rows = []
    for approach, indirect in (("direct", False), ("indirect", True)):
        runs = [
            evaluate(
                queries,
                corpus,
                classes,
                retrieval_config,
                inference_config,
                mode=mode,
                seed=seed,
                indirect=indirect,
                retriever=retriever,
                coarse_cache=cache,
            )
            for seed in seeds
        ]
        rows.append({"approach": approach, "runs": runs, "summary": summarize_runs(runs)})
    return rows


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Plain aligned-text table."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def format_mean_std(stat: dict[str, float]) -> str:
    return f"{stat['mean']:.2f}±{stat['std']:.2f}"
