import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from qoipress.expr import DomainError
from qoipress.qoi import Field, QoiSpec, RegionIter, evaluate_qoi, qoi_value_range


def test_evaluate_examples():
    assert evaluate_qoi(QoiSpec.point("x^2"), np.array([1.0, 2.0, 3.0])).tolist() == [1, 4, 9]
    q = evaluate_qoi(QoiSpec.region("x^2", (2,)), np.array([1.0, 1.0, 3.0, 3.0]))
    assert q.tolist() == [1.0, 9.0]
    vec = QoiSpec.vector("x^2+y^2+z^2")
    one = [np.array([1.0]), np.array([2.0]), np.array([2.0])]
    assert evaluate_qoi(vec, one).tolist() == [9.0]


def test_vector_output_has_field_shape():
    rng = np.random.default_rng(0)
    fs = [rng.uniform(1, 2, (3, 4, 5)) for _ in range(3)]
    q = evaluate_qoi(QoiSpec.vector("x*y*z"), fs)
    assert q.shape == (3, 4, 5)
    np.testing.assert_allclose(q, fs[0] * fs[1] * fs[2], rtol=1e-15)


def test_binding_errors():
    vec = QoiSpec.vector("x*y*z")
    with pytest.raises(ValueError, match="3 field"):
        evaluate_qoi(vec, [np.ones(4), np.ones(4)])
    with pytest.raises(ValueError, match="shape"):
        evaluate_qoi(vec, [np.ones(4), np.ones(4), np.ones(5)])


def test_domain_error_has_index():
    with pytest.raises(DomainError) as ei:
        evaluate_qoi(QoiSpec.point("log2(x)"), np.array([1.0, 2.0, -1.0]))
    assert ei.value.index == 2


def test_value_range_examples():
    assert qoi_value_range(QoiSpec.point("x^2"), np.arange(-2.0, 3.0)) == (0.0, 4.0)
    assert qoi_value_range(QoiSpec.point("x^2"), np.full(5, 3.0)).degenerate
    r = qoi_value_range(QoiSpec.point("log2(x)"), np.linspace(1.0, 8.0, 15))
    assert r == pytest.approx((0.0, 3.0))


def test_partial_edge_blocks_are_renormalized():
    x = np.arange(5.0)
    q = evaluate_qoi(QoiSpec.region("x", (2,)), x)
    assert q.tolist() == [0.5, 2.5, 4.0]


def test_field_checks(tmp_path):
    with pytest.raises(ValueError):
        Field(np.array([1.0, np.nan]))
    p = tmp_path / "a.f32"
    np.arange(24, dtype=np.float32).tofile(p)
    f = Field.from_file(p, (2, 3, 4), "f32")
    assert f.shape == (2, 3, 4) and f.width == 4 and f.value_range == (0.0, 23.0)
    with pytest.raises(ValueError, match="bytes"):
        Field.from_file(p, (5, 5), "f32")


def test_stride_larger_than_block_rejected():
    with pytest.raises(ValueError):
        RegionIter((8,), (2,), (3,))


def _explicit_regional(spec, x):
    """Direct C + sum_j w_j g(x_j) per region, with explicit coefficient loops."""
    it = spec.regions(x.shape)
    out = []
    for sl in it:
        vals = x[sl]
        if spec.weights is None:
            w = np.full(vals.shape, 1.0 / vals.size)
        else:
            W = np.asarray(spec.weights).reshape(spec.block)
            w = W[tuple(slice(0, e) for e in vals.shape)]
            w = w * (W.sum() / w.sum())
        total = spec.constant
        for wj, xj in zip(w.ravel(), vals.ravel()):
            total += wj * xj ** 3
        out.append(total)
    return np.array(out).reshape(it.counts)


shapes = st.tuples(st.integers(1, 9), st.integers(1, 9), st.integers(1, 7))
blocks = st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))


@given(shapes.flatmap(lambda s: hnp.arrays(np.float64, s, elements=st.floats(-3, 3))), blocks,
       st.floats(-5, 5))
def test_regional_matches_explicit_sum(x, block, c):
    spec = QoiSpec.region("x^3", block, constant=c)
    np.testing.assert_allclose(evaluate_qoi(spec, x), _explicit_regional(spec, x), rtol=1e-12, atol=1e-12)


@given(shapes.flatmap(lambda s: hnp.arrays(np.float64, s, elements=st.floats(-3, 3))),
       st.lists(st.floats(0.1, 2.0), min_size=8, max_size=8))
def test_weighted_regional_matches_explicit_sum(x, w):
    spec = QoiSpec.region("x^3", (2, 2, 2), weights=w)
    np.testing.assert_allclose(evaluate_qoi(spec, x), _explicit_regional(spec, x), rtol=1e-12, atol=1e-12)


@given(shapes, blocks)
def test_tiling_partitions_the_field(shape, block):
    it = RegionIter(shape, block)
    assert int(it.sizes().sum()) == int(np.prod(shape))
    cover = np.zeros(shape, dtype=int)
    for sl in it:
        cover[sl] += 1
    assert np.all(cover == 1)
    ids = it.block_ids()
    assert np.bincount(ids.ravel(), minlength=len(it)).tolist() == it.sizes().ravel().tolist()


@given(shapes, blocks, st.data())
def test_overlapping_regions_cover_every_point(shape, block, data):
    stride = tuple(data.draw(st.integers(1, b)) for b in block)
    cover = np.zeros(shape, dtype=int)
    for sl in RegionIter(shape, block, stride):
        cover[sl] += 1
    assert np.all(cover >= 1)


def test_header_roundtrip():
    for spec in [QoiSpec.point("1/(x+273.15)"), QoiSpec.region("x^2", (4, 4, 4)),
                 QoiSpec.region("x", (2,), weights=[1.0, 3.0], constant=2.0),
                 QoiSpec.vector("sqrt(x^2+y^2+z^2)")]:
        assert QoiSpec.from_header(spec.to_header()) == spec
