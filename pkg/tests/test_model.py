from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reduced_pca.errors import DegenerateReductionError
from reduced_pca.model import (
    Basis,
    DataSet,
    DenoiserMode,
    DenoiserSpec,
    NoiseModel,
    ReducedModelConfig,
    ReductionKind,
    SpectralLaw,
    derived_moments,
)


def test_bernoulli_moments():
    m, delta = derived_moments(ReducedModelConfig.bernoulli(0.5, [4.0], 0.5))
    assert m == pytest.approx(0.5) and delta == pytest.approx(0.5)


def test_no_reduction_moments():
    m, delta = derived_moments(ReducedModelConfig.general(0.5, [4.0], 1.0, 0.0))
    assert (m, delta) == (1.0, 1.0)


def test_general_moments():
    m, delta = derived_moments(ReducedModelConfig.general(0.5, [4.0], 0.5, 0.25))
    assert m == pytest.approx(0.5) and delta == pytest.approx(0.5)


@given(st.floats(0.01, 1.0))
def test_bernoulli_matches_general(p):
    a = ReducedModelConfig.bernoulli(0.5, [2.0], p)
    b = ReducedModelConfig.general(0.5, [2.0], p, p * (1 - p))
    assert derived_moments(a) == pytest.approx(derived_moments(b), rel=1e-12, abs=1e-15)


@given(st.floats(-3, 3).filter(lambda x: abs(x) > 1e-3), st.one_of(st.just(0.0), st.floats(1e-6, 5)))
def test_delta_at_most_one(mu, s2):
    cfg = ReducedModelConfig.general(1.0, [1.0], mu, s2)
    assert cfg.delta <= 1.0
    assert (cfg.delta == 1.0) == (s2 == 0.0)


def test_spikes_sorted_and_validated():
    cfg = ReducedModelConfig.bernoulli(0.5, [1.0, 3.0, 2.0], 0.5)
    assert cfg.spikes == (3.0, 2.0, 1.0)
    assert cfg.rank == 3
    with pytest.raises(ValueError):
        ReducedModelConfig.bernoulli(0.5, [2.0, 2.0], 0.5)
    with pytest.raises(ValueError):
        ReducedModelConfig.bernoulli(0.5, [0.0], 0.5)
    with pytest.raises(ValueError):
        ReducedModelConfig.bernoulli(0.5, [1.0], 1.5)
    with pytest.raises(ValueError):
        ReducedModelConfig.bernoulli(-0.5, [1.0], 0.5)


def test_zero_mean_reduction_rejected():
    with pytest.raises(DegenerateReductionError):
        ReducedModelConfig.general(0.5, [1.0], 0.0, 1.0)


def test_spectral_law_validation():
    with pytest.raises(ValueError):
        SpectralLaw((1.0, 2.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        SpectralLaw((-1.0,), (1.0,))
    with pytest.raises(ValueError):
        SpectralLaw((1.0,), (0.0,))
    law = SpectralLaw.uniform([0.5, 1.0, 1.5])
    assert law.mean() == pytest.approx(1.0)
    assert SpectralLaw.point_mass().is_point_mass(1.0)
    assert not law.is_point_mass()


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=40))
def test_uniform_weights_sum_to_one(atoms):
    law = SpectralLaw.uniform(atoms)
    assert abs(sum(law.weights) - 1.0) <= 1e-12


config_strategy = st.builds(
    lambda g, spikes, p, unreduced, atoms: ReducedModelConfig.bernoulli(
        g,
        spikes,
        p,
        NoiseModel.UNREDUCED if unreduced else NoiseModel.REDUCED,
        SpectralLaw.uniform(atoms),
    ),
    st.floats(0.05, 4.0),
    st.lists(st.floats(0.1, 50.0), min_size=0, max_size=4, unique=True),
    st.floats(0.05, 1.0),
    st.booleans(),
    st.lists(st.floats(0.1, 5.0), min_size=1, max_size=5),
)


@settings(max_examples=50)
@given(config_strategy)
def test_config_json_round_trip(cfg):
    again = ReducedModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_config_json_file(tmp_path):
    cfg = ReducedModelConfig.general(0.5, [4.0, 1.0], 0.5, 0.25, NoiseModel.UNREDUCED)
    path = tmp_path / "c.json"
    cfg.to_json(path)
    assert ReducedModelConfig.from_json(path) == cfg
    assert cfg.reduction_law is ReductionKind.GENERAL_IID


def test_config_rejects_unknown_keys_and_rank_mismatch():
    with pytest.raises(ValueError):
        ReducedModelConfig.from_dict({"gamma": 0.5, "spikes": [1.0], "bogus": 1})
    with pytest.raises(ValueError):
        ReducedModelConfig.from_dict({"gamma": 0.5, "spikes": [1.0], "rank": 2})


def test_dataset_shapes():
    y = np.zeros((3, 2))
    with pytest.raises(ValueError, match="shape"):
        DataSet(y=y, d=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        DataSet(y=y, d=np.ones_like(y), s_oracle=np.zeros((3, 3)))
    ds = DataSet.unreduced(y)
    assert (ds.n, ds.p) == (3, 2)
    assert np.all(ds.d == 1)


def test_denoiser_spec_basis_rules():
    DenoiserSpec(DenoiserMode.BLP, (1.0,), Basis.POPULATION_PCS)
    DenoiserSpec(DenoiserMode.EBLP_OUT_OF_SAMPLE, (1.0, 0.5), Basis.EMPIRICAL_PCS)
    with pytest.raises(ValueError):
        DenoiserSpec(DenoiserMode.BLP, (1.0,), Basis.EMPIRICAL_PCS)
    with pytest.raises(ValueError):
        DenoiserSpec(DenoiserMode.EBLP_IN_SAMPLE, (1.0,), Basis.POPULATION_PCS)
