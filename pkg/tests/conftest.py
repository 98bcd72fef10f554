import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    """One short end-to-end run shared by the pipeline tests."""
    from ricens.config import PipelineConfig
    from ricens.pipeline import run_pipeline
    from ricens.synthetic import SyntheticSpec

    config = PipelineConfig(seed=11, epochs=40, patience=8)
    out = tmp_path_factory.mktemp("runs") / "small"
    result = run_pipeline(config, out, synthetic=SyntheticSpec(n_records=160, noise_sd=200.0))
    return config, result
