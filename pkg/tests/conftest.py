import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xmodal.synth import SynthSpec, make_synthetic, write_synthetic

# Property tests must behave identically run to run.
settings.register_profile(
    "deterministic",
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("deterministic")


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((count, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


SMALL_SPEC = SynthSpec(
    num_classes=4,
    corpus_per_class=50,
    queries_per_class=10,
    image_noise=0.9,
    text_noise=0.8,
    query_noise=0.9,
    n_candidates=32,
    k_captions=8,
    seed=3,
)


@pytest.fixture(scope="session")
def small_synth():
    """200-record, 40-query fixture noisy enough that modalities disagree."""
    return make_synthetic(SMALL_SPEC)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """The same fixture written to disk next to its config.ini."""
    out = tmp_path_factory.mktemp("fixture")
    config_path = write_synthetic(SMALL_SPEC, out)
    return config_path.parent
