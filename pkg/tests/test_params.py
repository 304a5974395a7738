"""Flat parameter vector <-> named arrays round-tripping."""

import numpy as np
import pytest

from dngd.errors import DimensionError
from dngd.params import ParameterLayout, ParameterVector


def test_flatten_unflatten_roundtrip():
    layout = ParameterLayout([("W0", (3, 4)), ("b0", (4,)), ("W1", (4, 2)), ("b1", (2,))])
    assert layout.size == 12 + 4 + 8 + 2
    rng = np.random.default_rng(0)
    data = rng.normal(size=layout.size)
    arrays = layout.unflatten(data)
    assert [a.shape for a in arrays] == [(3, 4), (4,), (4, 2), (2,)]
    assert np.array_equal(layout.flatten(arrays), data)


def test_unflatten_preserves_leading_axes():
    layout = ParameterLayout([("W", (2, 3)), ("b", (3,))])
    stack = np.arange(5 * 9, dtype=np.float64).reshape(5, 9)
    arrays = layout.unflatten(stack)
    assert arrays[0].shape == (5, 2, 3)
    assert arrays[1].shape == (5, 3)
    # candidate 2 unflattens to exactly the same arrays as its own row
    row = layout.unflatten(stack[2])
    assert np.array_equal(arrays[0][2], row[0])
    assert np.array_equal(arrays[1][2], row[1])


def test_vector_arithmetic_and_copy():
    layout = ParameterLayout([("w", (3,))])
    a = ParameterVector(np.array([1.0, 2.0, 3.0]), layout)
    b = ParameterVector(np.array([0.5, 0.5, 0.5]), layout)
    assert np.array_equal((a + b).data, [1.5, 2.5, 3.5])
    assert np.array_equal((a - b).data, [0.5, 1.5, 2.5])
    assert np.array_equal((2.0 * a).data, [2.0, 4.0, 6.0])
    assert a.norm() == pytest.approx(np.sqrt(14.0))
    c = a.copy()
    c.data[0] = 99.0
    assert a.data[0] == 1.0


def test_dimension_errors():
    layout = ParameterLayout([("w", (3,))])
    with pytest.raises(DimensionError):
        ParameterVector(np.zeros(4), layout)
    with pytest.raises(DimensionError):
        layout.unflatten(np.zeros(5))
    with pytest.raises(DimensionError):
        layout.flatten([np.zeros((2, 2))])
