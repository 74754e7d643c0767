"""Shared fixtures: small synthetic datasets and a CLI runner."""

import numpy as np
import pytest

from subseg import cli
from subseg.encoding import PosEncodingConfig, encode_sequence
from subseg.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Separable 3-class dataset, one activity: (manifest_path, spec)."""
    spec = SyntheticSpec(concept_count=3, videos=4, dim=6, min_segments=12,
                         max_segments=20, mean_scale=6.0, noise=0.3)
    out = tmp_path_factory.mktemp("small_data")
    _, manifest_path = generate_synthetic(spec, 5, out)
    return manifest_path, spec


@pytest.fixture(scope="session")
def two_activity_dataset(tmp_path_factory):
    """Same shape but two activities, for multi-activity CLI paths."""
    spec = SyntheticSpec(concept_count=3, videos=3, dim=6, min_segments=10,
                         max_segments=16, mean_scale=6.0, noise=0.3)
    out = tmp_path_factory.mktemp("two_act_data")
    _, manifest_path = generate_synthetic(spec, 7, out, activities=2)
    return manifest_path, spec


@pytest.fixture()
def run_cli():
    """Invoke the CLI in-process; returns the exit code."""

    def invoke(*argv):
        return cli.main([str(a) for a in argv])

    return invoke


def make_sequence(features, video_id="v", groups=16, pe_dim=4):
    return encode_sequence(np.asarray(features, dtype=float),
                           PosEncodingConfig(groups=groups, dim=pe_dim),
                           video_id=video_id)
