"""Streaming modal-confidence adjustment and the cross-modal combination.

Each modality keeps its own running min and max of raw confidence over the
test stream, inclusive of the current step. The adjusted confidence is the
min-max normalized position of the current value inside that history, so a
new extremum maps to exactly 1 or 0. While the observed range is degenerate
(always at the first step), both weights fall back to 1, which is the
equal-confidence baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassCountMismatchError
from .inference import Prediction

# Ranges tighter than this are degenerate; the fallback weight is 1.0.
MIN_RANGE = 1e-12

MODES = ("modal", "equal", "raw")


@dataclass(frozen=True)
class EnsembleState:
    """Running confidence extrema over steps 1..t, one pair per modality."""

    t: int = 0
    img_min: float | None = None
    img_max: float | None = None
    txt_min: float | None = None
    txt_max: float | None = None

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "img_min": self.img_min,
            "img_max": self.img_max,
            "txt_min": self.txt_min,
            "txt_max": self.txt_max,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EnsembleState":
        return cls(
            t=int(obj["t"]),
            img_min=obj["img_min"],
            img_max=obj["img_max"],
            txt_min=obj["txt_min"],
            txt_max=obj["txt_max"],
        )


@dataclass(frozen=True)
class EnsembleOutput:
    p_ens: np.ndarray
    adj_img: float
    adj_txt: float
    predicted_class: int


def reset(state: EnsembleState | None = None) -> EnsembleState:
    """Fresh state for a new evaluation stream."""
    return EnsembleState()


def combine(p_img: np.ndarray, p_txt: np.ndarray, adj_img: float, adj_txt: float) -> np.ndarray:
    """Weighted component-wise sum; deliberately not renormalized."""
    return adj_img * np.asarray(p_img, dtype=np.float64) + adj_txt * np.asarray(
        p_txt, dtype=np.float64
    )


def _adjust(value: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span < MIN_RANGE:
        return 1.0
    return (value - lo) / span


def step(
    state: EnsembleState,
    p_img: Prediction,
    p_txt: Prediction,
    mode: str = "modal",
) -> tuple[EnsembleState, EnsembleOutput]:
    """Advance the stream by one sample and combine the two modalities.

    Extrema are updated with the incoming confidences before the adjustment
    is computed, so the adjusted values always land in [0, 1]. ``equal`` mode
    pins both weights to 1 and ``raw`` mode uses the unadjusted confidences;
    both still advance the state so the extrema stay available as diagnostics.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if len(p_img.probs) != len(p_txt.probs):
        raise ClassCountMismatchError(
            f"image prediction has {len(p_img.probs)} classes, text has {len(p_txt.probs)}"
        )
    a_img = p_img.confidence
    a_txt = p_txt.confidence
    if state.t == 0:
        img_min = img_max = a_img
        txt_min = txt_max = a_txt
    else:
        img_min = min(state.img_min, a_img)
        img_max = max(state.img_max, a_img)
        txt_min = min(state.txt_min, a_txt)
        txt_max = max(state.txt_max, a_txt)
    new_state = EnsembleState(
        t=state.t + 1,
        img_min=img_min,
        img_max=img_max,
        txt_min=txt_min,
        txt_max=txt_max,
    )
    if mode == "modal":
        adj_img = _adjust(a_img, img_min, img_max)
        adj_txt = _adjust(a_txt, txt_min, txt_max)
    elif mode == "equal":
        adj_img = adj_txt = 1.0
    else:
        adj_img, adj_txt = a_img, a_txt
    p_ens = combine(p_img.probs, p_txt.probs, adj_img, adj_txt)
    output = EnsembleOutput(
        p_ens=p_ens,
        adj_img=adj_img,
        adj_txt=adj_txt,
        predicted_class=int(np.argmax(p_ens)),
    )
    return new_state, output
