import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedbnr.errors import DimensionMismatch
from fedbnr.kernels import init_params, learned_urk, sample_omegas
from fedbnr.messages import (HEADER, ClientModelUpdate, GlobalWeights, IntermediateWeights,
                             ModelBroadcast, PrecisionBroadcast, ScatterMatrix, decode, encode,
                             roundtrip)

URK = learned_urk(2, hidden=(3,), latent_dim=2, m=4)
PARAMS = init_params(URK, seed=1)


def test_header_layout():
    buf = encode(GlobalWeights(np.array([1.0, 2.0])))
    assert HEADER.unpack_from(buf) == (GlobalWeights.TAG, 1, 2)
    assert len(buf) == HEADER.size + 16
    assert np.frombuffer(buf[HEADER.size:], "<f8").tolist() == [1.0, 2.0]


def test_model_broadcast_roundtrip():
    msg = roundtrip(ModelBroadcast(PARAMS, sample_omegas(URK)), template=PARAMS)
    np.testing.assert_array_equal(msg.params.data, PARAMS.data)
    assert msg.params.same_layout(PARAMS)
    np.testing.assert_array_equal(msg.omegas, sample_omegas(URK))


def test_client_update_keeps_sample_count():
    msg = roundtrip(ClientModelUpdate(PARAMS, 17), template=PARAMS)
    assert msg.n_samples == 17
    np.testing.assert_array_equal(msg.params["log_sigma"], PARAMS["log_sigma"])


def test_decode_without_template_is_flat():
    msg = decode(encode(ClientModelUpdate(PARAMS, 3)))
    np.testing.assert_array_equal(msg.params["flat"], PARAMS.data)


def test_asymmetric_scatter_rejected():
    with pytest.raises(ValueError):
        decode(encode(ScatterMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))))


def test_truncated_frame():
    with pytest.raises(DimensionMismatch):
        decode(encode(IntermediateWeights(np.ones(4)))[:-3])


def test_unknown_tag():
    with pytest.raises(ValueError):
        decode(HEADER.pack(99, 1, 1) + b"\0" * 8)


@given(st.integers(1, 9), st.integers(0, 2 ** 31))
def test_matrix_messages_roundtrip_bitwise(d, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    s = a @ a.T
    np.testing.assert_array_equal(roundtrip(ScatterMatrix(s)).matrix, s)
    chol = np.tril(a)
    np.testing.assert_array_equal(roundtrip(PrecisionBroadcast(chol)).chol, chol)
    v = rng.standard_normal(d)
    np.testing.assert_array_equal(roundtrip(IntermediateWeights(v)).vector, v)
