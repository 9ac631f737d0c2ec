import numpy as np
import pytest

from effmed.errors import InputError
from effmed.samplers import (Constant, Expression, PiecewiseBox, decode_complex, encode_complex, sampler_from_json,
                             scalar_function)

PTS = np.array([[0.1, 0.2, 0.3], [0.9, 0.5, 0.5], [0.5, 0.5, 0.5]])


def test_constant_shape_and_value():
    assert Constant(2.5)(PTS).tolist() == [2.5, 2.5, 2.5]
    assert Constant(1j)(PTS[None]).shape == (1, 3)


def test_piecewise_box_half_open_and_precedence():
    s = PiecewiseBox(0.0, [((0, 0, 0), (0.5, 1, 1), 1.0), ((0.4, 0, 0), (0.6, 1, 1), 2.0)])
    x = np.array([[0.0, 0.5, 0.5], [0.45, 0.5, 0.5], [0.5, 0.5, 0.5], [0.6, 0.5, 0.5]])
    assert s(x).tolist() == [1.0, 2.0, 2.0, 0.0]


def test_expression_evaluation():
    e = Expression("x + 2*y**2 - sqrt(r)", "sin(pi*z)")
    x, y, z = PTS.T
    expect = x + 2 * y**2 - np.sqrt(np.sqrt(x * x + y * y + z * z)) + 1j * np.sin(np.pi * z)
    np.testing.assert_allclose(e(PTS), expect, rtol=1e-15)


def test_expression_comparisons_give_indicators():
    e = Expression("(x < 0.5) * 3")
    assert e(PTS).tolist() == [3.0, 0.0, 0.0]


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open('f')", "lambda: 1", "[x]", "q"])
def test_expression_rejects_anything_else(text):
    with pytest.raises(InputError):
        Expression(text)


def test_json_roundtrip():
    for s in (Constant(0.3 - 0.1j), PiecewiseBox(1.0, [((0, 0, 0), (1, 1, 1), 2j)]), Expression("x*y", "z")):
        back = sampler_from_json(s.to_json())
        np.testing.assert_array_equal(back(PTS), s(PTS))


def test_bare_numbers_and_pairs():
    assert sampler_from_json(0.5)(PTS).tolist() == [0.5] * 3
    assert sampler_from_json([0.5, -1.0])(PTS)[0] == 0.5 - 1j
    assert decode_complex(encode_complex(1 - 2j)) == 1 - 2j
    with pytest.raises(InputError):
        sampler_from_json({"kind": "spline"})
    with pytest.raises(InputError):
        decode_complex([1, 2, 3])


def test_scalar_function():
    f = scalar_function("2 - omega**2/3", "omega")
    np.testing.assert_allclose(f(np.array([0.0, 3.0])), [2.0, -1.0])
    with pytest.raises(InputError):
        scalar_function("x + 1", "omega")
