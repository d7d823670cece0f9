import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avghjb.errors import InvalidConfig
from avghjb.expr import compile_expr


def test_arithmetic_and_functions():
    f = compile_expr("1 - exp(-abs(x))")
    assert float(f(0.0, 1.0)) == 0.0
    g = compile_expr("-u + 2*x**2 / 4 - sqrt(4) + log(1) + max(x, u) - min(x, u)")
    assert float(g(1.0, 3.0)) == pytest.approx(-3 + 0.5 - 2 + 0 + 3 - 1)
    assert float(compile_expr("sign(x)")(-2.0, 0.0)) == -1.0
    assert f.source == "1 - exp(-abs(x))"


def test_where_piecewise_and_comparisons():
    f = compile_expr("where(x > 0, -1, 1)")
    np.testing.assert_array_equal(f(np.array([-1.0, 0.0, 2.0]), 0.0), [1.0, 1.0, -1.0])
    assert float(compile_expr("x <= u")(1.0, 1.0)) == 1.0


def test_broadcasting_and_constants():
    f = compile_expr("2")
    out = f(np.zeros(5), 0.0)
    assert out.shape == (5,) and np.all(out == 2.0)
    out[0] = 9.0  # writable copy
    assert compile_expr("x * u")(np.arange(3.0), np.ones((2, 1))).shape == (2, 3)


def test_params_and_custom_variables():
    f = compile_expr("kappa + theta * x", variables=("x",), params={"kappa": 0.5, "theta": 2})
    assert float(f(1.0)) == 2.5
    with pytest.raises(TypeError):
        f(1.0, 2.0)


@pytest.mark.parametrize("text", [
    "__import__('os')",
    "x.real",
    "y + 1",
    "foo(x)",
    "exp(x, u)",
    "x if u else 1",
    "[x]",
    "0 < x < 1",
    "exp(x=1)",
    "'a'",
    "True",
    "lambda: 1",
    "x +",
])
def test_rejected(text):
    with pytest.raises(InvalidConfig):
        compile_expr(text)


def test_rejects_non_string():
    with pytest.raises(InvalidConfig):
        compile_expr(None)
    assert float(compile_expr(3)(0.0, 0.0)) == 3.0


@given(st.floats(-5, 5), st.floats(-1, 1))
@settings(max_examples=80, deadline=None)
def test_matches_numpy(x, u):
    f = compile_expr("u - x + exp(-abs(x)) * u**2 - where(x < 0, x, 0.5)")
    ref = u - x + np.exp(-abs(x)) * u ** 2 - (x if x < 0 else 0.5)
    assert float(f(x, u)) == pytest.approx(ref, rel=1e-14, abs=1e-14)
