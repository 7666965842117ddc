import numpy as np
import pytest
from hypothesis import given, strategies as st

from deskdiff.conditioning import (CondBatch, ConditionTables, ConditionVocab, drop_condition,
                                   drop_conditions, embed, embed_batch, fuse, null_embedding)
from deskdiff.netgraph.tensor import Tensor


def make_tables(fusion="project", n_classes=4, n_styles=3, e=3, cond_dim=5, seed=0):
    arrays = ConditionTables.init_params(np.random.default_rng(seed), n_classes, n_styles, e, fusion, cond_dim)
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
    return ConditionTables(params, n_classes, n_styles, e, fusion, cond_dim)


def test_both_missing_gives_null_token():
    tables = make_tables()
    out = embed(None, None, tables)
    assert out.is_null
    np.testing.assert_array_equal(out.fused.value, tables.p("null").value[0])


def test_single_channel_uses_channel_null_row():
    tables = make_tables("concat")
    out = embed(2, None, tables)
    assert not out.is_null
    np.testing.assert_array_equal(out.fused.value[:3], tables.p("class_table").value[2])
    np.testing.assert_array_equal(out.fused.value[3:], tables.p("style_null").value[0])
    out = embed(None, 1, tables)
    np.testing.assert_array_equal(out.fused.value[:3], tables.p("class_null").value[0])
    np.testing.assert_array_equal(out.fused.value[3:], tables.p("style_table").value[1])


def test_embed_rejects_out_of_vocabulary():
    tables = make_tables()
    with pytest.raises(ValueError):
        embed(4, 0, tables)
    with pytest.raises(ValueError):
        embed(0, 3, tables)
    with pytest.raises(ValueError):
        embed_batch(CondBatch.make(2, [0, 7], 0), tables)


def test_fuse_examples():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    np.testing.assert_array_equal(fuse(a, b, "concat").value, [1, 2, 3, 4])
    np.testing.assert_array_equal(fuse(a, b, "sum").value, [4, 6])
    w = np.arange(8.0).reshape(4, 2)
    np.testing.assert_array_equal(fuse(a, b, "project", w, np.array([0.5, -0.5])).value,
                                  np.array([1, 2, 3, 4]) @ w + [0.5, -0.5])
    np.testing.assert_array_equal(fuse(a, np.zeros(2), "sum").value, a)
    np.testing.assert_array_equal(fuse(a, np.array([3.0]), "concat").value, [1, 2, 3])
    np.testing.assert_array_equal(fuse(a, b, "project", np.zeros((4, 3)), np.array([1.0, 2.0, 3.0])).value, [1, 2, 3])
    with pytest.raises(ValueError):
        fuse(a, np.ones(3), "sum")
    with pytest.raises(ValueError):
        fuse(a, b, "product")


@pytest.mark.parametrize("fusion,width", [("concat", 6), ("sum", 3), ("project", 5)])
def test_fused_width_per_mode(fusion, width):
    tables = make_tables(fusion)
    assert tables.cond_dim == width
    assert embed_batch(CondBatch.make(3, [0, -1, 1], [2, 0, -1]), tables).shape == (3, width)


def test_concat_fusion_injective_on_tables():
    tables = make_tables("concat")
    seen = {}
    for c in [None, 0, 1, 2, 3]:
        for s in [None, 0, 1, 2]:
            key = embed(c, s, tables).fused.value.tobytes()
            assert key not in seen
            seen[key] = (c, s)


def test_batch_rows_match_single_lookups():
    tables = make_tables()
    cb = CondBatch.make(4, [0, -1, 3, -1], [1, 2, -1, -1])
    rows = embed_batch(cb, tables).value
    for i, (c, s) in enumerate(zip(cb.class_ids, cb.style_ids)):
        one = embed(None if c < 0 else c, None if s < 0 else s, tables).fused.value
        np.testing.assert_allclose(rows[i], one, rtol=0, atol=1e-14)


def test_drop_extremes():
    tables = make_tables()
    cond = embed(1, 1, tables)
    rng = np.random.default_rng(0)
    assert drop_condition(cond, 0.0, rng, tables) is cond
    assert drop_condition(cond, 1.0, rng, tables).is_null
    cb = CondBatch.make(50, 1, 1)
    assert not drop_conditions(cb, 0.0, rng).null.any()
    assert drop_conditions(cb, 1.0, rng).null.all()
    with pytest.raises(ValueError):
        drop_condition(cond, 1.5, rng, tables)


def test_drop_consumes_one_uniform():
    tables = make_tables()
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    drop_condition(embed(0, 0, tables), 0.5, a, tables)
    b.random()
    assert a.random() == b.random()


def test_drop_rate_matches_probability():
    tables = make_tables()
    cond = embed(2, 0, tables)
    rng = np.random.default_rng(42)
    hits = sum(drop_condition(cond, 0.1, rng, tables).is_null for _ in range(100_000))
    assert abs(hits / 100_000 - 0.1) < 0.01
    frac = drop_conditions(CondBatch.make(100_000, 2, 0), 0.1, np.random.default_rng(43)).null.mean()
    assert abs(frac - 0.1) < 0.01


def test_null_embedding_is_table_row():
    tables = make_tables("sum")
    np.testing.assert_array_equal(null_embedding(tables).fused.value, tables.p("null").value[0])


def test_vocab_names_and_ids():
    v = ConditionVocab(3, 1, ("a", "b", "c"))
    assert v.class_id("b") == 1 and v.class_id("2") == 2 and v.class_id(0) == 0
    with pytest.raises(ValueError):
        v.class_id("z")
    with pytest.raises(ValueError):
        v.style_id(1)


@given(st.lists(st.integers(-1, 3), min_size=1, max_size=8), st.data())
def test_null_mask_only_when_both_missing(classes, data):
    styles = data.draw(st.lists(st.integers(-1, 2), min_size=len(classes), max_size=len(classes)))
    cb = CondBatch.make(len(classes), classes, styles)
    np.testing.assert_array_equal(cb.null, (np.array(classes) < 0) & (np.array(styles) < 0))
