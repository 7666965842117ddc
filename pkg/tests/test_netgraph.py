import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deskdiff.conditioning import CondBatch, embed
from deskdiff.gradcheck import check_gradients, denoiser_probe
from deskdiff.netgraph import tensor as T
from deskdiff.netgraph.checkpoint import CheckpointError, dumps, load_checkpoint, loads, save_checkpoint
from deskdiff.netgraph.denoiser import DenoiserConfig, DenoiserModel, denoiser_forward
from deskdiff.netgraph.layers import cross_attention, dense_forward, time_embedding
from oracles import central_difference


def param(v, name="p"):
    return T.Tensor(np.array(v, dtype=float), requires_grad=True, name=name)


# --- engine -----------------------------------------------------------------

def test_linear_map_gradient_is_input():
    x = np.array([[1.0, -2.0, 3.0]])
    w = param(np.ones((3, 1)))
    T.backward(T.sum_all(T.matmul(x, w)))
    np.testing.assert_array_equal(w.grad, x.T)


def test_unused_parameter_gets_no_gradient():
    a, b = param([1.0, 2.0], "a"), param([3.0], "b")
    grads = T.backward(T.sum_all(T.square(a)))
    assert "b" not in grads and b.grad is None
    np.testing.assert_array_equal(grads["a"], [2.0, 4.0])


def test_gradients_sum_over_multiple_uses():
    a = param([1.5])
    T.backward(T.sum_all(T.add(T.mul(a, a), T.mul(a, 3.0))))
    assert a.grad[0] == pytest.approx(2 * 1.5 + 3.0)


def test_backward_rejects_non_scalar_and_reuse():
    a = param([1.0, 2.0])
    with pytest.raises(ValueError):
        T.backward(T.square(a))
    loss = T.sum_all(T.square(a))
    T.backward(loss)
    with pytest.raises(T.GraphConsumedError):
        T.backward(loss)


def test_no_grad_records_nothing():
    a = param([1.0])
    with T.no_grad():
        out = T.square(a)
    assert out._backward is None


def _fd_check(build, *shapes, seed=0):
    rng = np.random.default_rng(seed)
    leaves = [param(rng.normal(size=s), f"x{i}") for i, s in enumerate(shapes)]
    T.backward(T.sum_all(T.mul(build(*leaves), 1.0)))
    for i, leaf in enumerate(leaves):
        def f(v, i=i):
            vals = [l.value for l in leaves]
            vals[i] = v
            with T.no_grad():
                return float(T.sum_all(build(*[T.Tensor(x) for x in vals])).value)
        np.testing.assert_allclose(leaf.grad, central_difference(f, leaf.value), rtol=1e-6, atol=1e-8)


def test_op_gradients_against_finite_differences():
    w = np.random.default_rng(9).normal(size=(2, 3, 4))
    _fd_check(lambda a, b: T.mul(T.matmul(a, b), w), (2, 3, 5), (5, 4))
    _fd_check(lambda a: T.mul(T.softmax(a), w), (2, 3, 4))
    _fd_check(lambda a: T.mul(T.silu(a), w), (2, 3, 4))
    _fd_check(lambda a, b: T.mul(T.concat([a, b], axis=-1), w), (2, 3, 1), (2, 3, 3))
    _fd_check(lambda a, b: T.mul(T.sub(a, b), w), (2, 3, 4), (1, 4))
    _fd_check(lambda a: T.mul(T.transpose_last(a), w), (2, 4, 3))
    _fd_check(lambda a: T.mul(T.take_rows(a, [0, 2, 2]), w[0]), (4, 4))


# --- layers -----------------------------------------------------------------

def test_dense_examples():
    np.testing.assert_array_equal(dense_forward(np.array([1.0, 2.0]), np.eye(2), np.zeros(2)).value, [1, 2])
    out = dense_forward(np.array([1.0, 1.0]), np.array([[2.0], [3.0]]), np.array([0.5]))
    assert out.value.tolist() == [5.5]
    bias = np.array([[0.1, -0.2, 0.3]])
    out = dense_forward(np.ones((4, 2)), np.zeros((2, 3)), bias)
    np.testing.assert_array_equal(out.value, np.repeat(bias, 4, axis=0))
    with pytest.raises(ValueError):
        dense_forward(np.ones((1, 3)), np.zeros((2, 3)), np.zeros(3))


def test_silu_examples():
    assert T.silu(np.array([0.0])).value[0] == 0.0
    assert T.silu(np.array([40.0])).value[0] == pytest.approx(40.0)
    assert T.silu(np.array([1.0])).value[0] == pytest.approx(1 / (1 + np.exp(-1)), abs=1e-12)
    assert T.silu(np.array([1.0])).value[0] == pytest.approx(0.731059, abs=1e-6)
    assert np.isfinite(T.silu(np.array([-1000.0, 1000.0])).value).all()


def test_time_embedding_examples():
    e0 = time_embedding(0, 8)
    np.testing.assert_array_equal(e0[:4], 0.0)
    np.testing.assert_array_equal(e0[4:], 1.0)
    e = time_embedding(5, 4)
    np.testing.assert_allclose(e, [np.sin(5), np.sin(0.05), np.cos(5), np.cos(0.05)], atol=1e-15)
    with pytest.raises(ValueError):
        time_embedding(3, 5)


@given(st.integers(0, 10_000), st.sampled_from([2, 4, 16, 64]))
def test_time_embedding_bounded(t, dim):
    e = time_embedding(t, dim)
    assert e.shape == (dim,) and np.all(np.abs(e) <= 1.0)


def test_cross_attention_single_token():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(3, 4))
    tok = rng.normal(size=(3, 1, 4))
    out, w = cross_attention(h, tok, return_weights=True)
    np.testing.assert_allclose(out.value, h + tok[:, 0], atol=1e-15)
    np.testing.assert_array_equal(w, 1.0)


def test_cross_attention_repeated_tokens_match_single():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(2, 4))
    tok = rng.normal(size=(2, 1, 4))
    wq, wk, wv = (rng.normal(size=(4, 4)) for _ in range(3))
    one = cross_attention(h, tok, wq, wk, wv).value
    many = cross_attention(h, np.repeat(tok, 5, axis=1), wq, wk, wv).value
    np.testing.assert_allclose(many, one, atol=1e-12)


def test_cross_attention_saturated_softmax():
    h = np.array([[1.0, 0.0]])
    tok = np.array([[[0.0, 0.0], [200.0, 0.0]]])      # logits 0 and 200 / sqrt(2)
    out, w = cross_attention(h, tok, return_weights=True)
    np.testing.assert_allclose(w[0, 0], [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(out.value, h + tok[:, 1], atol=1e-10)


def test_cross_attention_width_mismatch():
    with pytest.raises(ValueError):
        cross_attention(np.zeros((1, 3)), np.zeros((1, 2, 4)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_attention_weights_sum_to_one(m, seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(5, 3)) * 3
    tok = rng.normal(size=(5, m, 3)) * 3
    _, w = cross_attention(h, tok, rng.normal(size=(3, 3)), rng.normal(size=(3, 3)),
                           rng.normal(size=(3, 3)), return_weights=True)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-12)


# --- denoiser ----------------------------------------------------------------

def test_zero_network_outputs_zero(small_config):
    model = DenoiserModel.init(small_config, np.random.default_rng(0))
    for t in model.params.values():
        t.value[...] = 0.0
    x = np.random.default_rng(1).normal(size=(4, 3))
    out = denoiser_forward(model, x, 3, CondBatch.make(4, [0, 1, 2, 3], 1))
    np.testing.assert_array_equal(out.value, 0.0)


@pytest.mark.parametrize("t", [1, 17, 999])
def test_output_shape_contract(small_model, t):
    x = np.random.default_rng(2).normal(size=(5, 3))
    assert denoiser_forward(small_model, x, t, None).shape == (5, 3)
    assert denoiser_forward(small_model, x[0], t, embed(2, 1, small_model.cond_tables)).shape == (3,)


def test_decoder_widths_include_skips(small_model):
    p = small_model.params
    assert p["dec2.w"].shape == (2 * 6, 8)
    assert p["out.w"].shape == (2 * 8, 3)


def test_condition_changes_output(small_model):
    x = np.random.default_rng(3).normal(size=(1, 3))
    a = small_model.predict(x, 5, CondBatch.make(1, 0, 0))
    b = small_model.predict(x, 5, CondBatch.make(1, 3, 1))
    assert np.abs(a - b).max() > 1e-6


def test_unknown_condition_rejected(small_model):
    with pytest.raises(ValueError):
        small_model.predict(np.zeros((1, 3)), 1, CondBatch.make(1, 9, 0))
    with pytest.raises(ValueError):
        small_model.predict(np.zeros((1, 4)), 1, None)


def test_skip_path_carries_encoder_signal(small_model):
    m = small_model.copy()
    m.params["out.w"].value[:8] = 0.0   # rows fed by the upstream decoder activation
    rng = np.random.default_rng(4)
    x1, x2 = rng.normal(size=(2, 1, 3))
    hooks1, hooks2 = {}, {}
    out1 = denoiser_forward(m, x1, 4, None, hooks1).value
    out2 = denoiser_forward(m, x2, 4, None, hooks2).value
    assert np.abs(hooks1["encoder"][0] - hooks2["encoder"][0]).max() > 0
    assert np.abs(out1 - out2).max() > 1e-6


def test_denoiser_forward_is_deterministic(small_model):
    x = np.random.default_rng(5).normal(size=(6, 3))
    cond = CondBatch.make(6, [0, 1, 2, 3, -1, 0], [0, 1, -1, 0, 1, 1])
    a = denoiser_forward(small_model, x, np.arange(1, 7), cond).value
    b = denoiser_forward(small_model, x, np.arange(1, 7), cond).value
    assert a.tobytes() == b.tobytes()


def test_full_denoiser_gradient_check(small_model):
    report = check_gradients(small_model.params, denoiser_probe(small_model, np.random.default_rng(11)))
    assert set(report) == set(small_model.params)
    assert max(report.values()) < 1e-4


def test_gradient_check_detects_corrupted_backward(small_model):
    T._silu_grad_scale = 1.01
    try:
        report = check_gradients(small_model.params, denoiser_probe(small_model, np.random.default_rng(11)))
    finally:
        T._silu_grad_scale = 1.0
    assert max(report.values()) > 1e-4


# --- checkpoint ----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, small_model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, "denoiser", {"k": 1}, small_model.arrays())
    kind, meta, arrays = load_checkpoint(path, expect_kind="denoiser")
    assert kind == "denoiser" and meta == {"k": 1}
    for k, v in small_model.arrays().items():
        assert arrays[k].tobytes() == v.tobytes()


def test_checkpoint_layout_is_little_endian():
    blob = dumps("x", {}, {"a": np.array([[1.5, -2.0]])})
    assert blob[:8] == b"DESKDIFF"
    assert struct.unpack("<I", blob[8:12])[0] == 1
    assert blob.endswith(struct.pack("<2d", 1.5, -2.0))
    assert dumps("x", {}, {"b": np.ones(1), "a": np.zeros(1)}) == dumps("x", {}, {"a": np.zeros(1), "b": np.ones(1)})


def test_checkpoint_rejects_bad_input():
    blob = dumps("denoiser", {}, {"a": np.ones(3)})
    with pytest.raises(CheckpointError):
        loads(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError, match="version"):
        loads(blob[:8] + struct.pack("<I", 99) + blob[12:])
    with pytest.raises(CheckpointError):
        loads(blob[:-4])
    with pytest.raises(CheckpointError):
        loads(blob, expect_kind="autoencoder")
