import numpy as np
import pytest

from kmgan import nn
from kmgan.nn import Activation, BatchNorm, Dense, MlpSpec
from kmgan.tensor import Tensor

from conftest import assert_grads_match


def test_spec_rejects_dimension_break():
    with pytest.raises(ValueError):
        nn.mlp(Dense(2, 3), Dense(4, 1))
    with pytest.raises(ValueError):
        nn.mlp(Dense(2, 3), BatchNorm(4))


def test_spec_rejects_empty():
    with pytest.raises(ValueError):
        MlpSpec(())


def test_unknown_activation():
    with pytest.raises(ValueError):
        Activation("softplus")


def test_identity_dense_forward():
    spec = nn.mlp(Dense(2, 2))
    params = nn.init_params(spec, np.random.default_rng(0))
    params["0.W"].data[:] = np.eye(2)
    params["0.b"].data[:] = 0.0
    out = nn.forward(spec, params, [[1.0, 2.0]], mode="eval")
    assert np.array_equal(out.data, [[1.0, 2.0]])


def test_sigmoid_of_zero_is_half():
    spec = nn.mlp(Dense(2, 2), Activation("sigmoid"))
    params = nn.init_params(spec, np.random.default_rng(0))
    params["0.W"].data[:] = 0.0
    out = nn.forward(spec, params, [[5.0, -7.0]], mode="eval")
    assert np.allclose(out.data, 0.5)


def test_dense_hand_computed():
    spec = nn.mlp(Dense(2, 1))
    params = nn.init_params(spec, np.random.default_rng(0))
    params["0.W"].data[:] = [[1.0], [1.0]]
    params["0.b"].data[:] = [[0.5]]
    out = nn.forward(spec, params, [[1.0, 2.0]], mode="eval")
    assert out.data[0, 0] == pytest.approx(3.5)


def test_input_dim_mismatch():
    spec = nn.mlp(Dense(3, 2))
    params = nn.init_params(spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.forward(spec, params, np.zeros((2, 4)))


def test_batch_norm_train_standardizes_columns(rng):
    spec = nn.mlp(BatchNorm(4))
    params = nn.init_params(spec, rng)
    # large spread keeps the epsilon term negligible against the 1e-6 bound
    x = rng.normal(3.0, 100.0, size=(64, 4))
    out = nn.forward(spec, params, x, mode="train").data
    assert np.abs(out.mean(axis=0)).max() < 1e-6
    assert np.abs(out.var(axis=0) - 1.0).max() < 1e-6


def test_batch_norm_running_stats_only_move_in_train(rng):
    spec = nn.mlp(BatchNorm(3))
    params = nn.init_params(spec, rng)
    x = rng.normal(size=(16, 3))
    before = params.running["0.mean"].copy()
    nn.forward(spec, params, x, mode="eval")
    assert np.array_equal(params.running["0.mean"], before)
    nn.forward(spec, params, x, mode="train")
    assert not np.array_equal(params.running["0.mean"], before)


def test_init_is_deterministic():
    spec = nn.mlp(Dense(4, 3), BatchNorm(3), Activation("relu"))
    a = nn.init_params(spec, np.random.default_rng(9))
    b = nn.init_params(spec, np.random.default_rng(9))
    for name in a.names():
        assert np.array_equal(a[name].data, b[name].data)


def test_full_mlp_finite_difference(rng):
    # discriminator-shaped stack: dense/BN/activations mixed
    spec = nn.mlp(
        Dense(5, 6), BatchNorm(6), Activation("relu"),
        Dense(6, 4), BatchNorm(4), Activation("tanh"),
        Dense(4, 2), Activation("sigmoid"),
    )
    params = nn.init_params(spec, rng, weight_std=0.5)
    x = rng.normal(size=(6, 5))
    leaves = [params[name] for name in params.names()]

    def build():
        from kmgan import tensor as T

        return T.mean_all(nn.forward(spec, params, x, mode="train"))

    assert_grads_match(build, leaves)


def test_spec_serialization_roundtrip():
    spec = nn.mlp(Dense(2, 3), BatchNorm(3, 1e-4, 0.8), Activation("relu"))
    assert nn.spec_from_list(nn.spec_to_list(spec)) == spec
