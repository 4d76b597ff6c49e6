import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from greedyopt import Combination, Dictionary, InputError, canonical_dictionary, combine, make_symmetric_dictionary, norm
from greedyopt.core import parse_norm_order

finite = st.floats(-1e3, 1e3, allow_nan=False)
orders = st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf])


def vec(n=3):
    return arrays(float, n, elements=finite)


@pytest.mark.parametrize("v, p, expected", [((3, 4), 2, 5.0), ((1, -1), 1, 2.0), ((-2, 1), math.inf, 2.0)])
def test_norm_examples(v, p, expected):
    assert norm(v, p) == expected


def test_norm_accepts_inf_string():
    assert norm((-2, 1), "inf") == 2.0


@pytest.mark.parametrize("bad", [(1.0, math.nan), (math.inf, 0.0)])
def test_norm_rejects_nonfinite(bad):
    with pytest.raises(InputError):
        norm(bad, 2)


def test_invalid_norm_order():
    with pytest.raises(InputError):
        parse_norm_order(0.5)
    with pytest.raises(InputError):
        parse_norm_order("two")


@settings(max_examples=200, deadline=None)
@given(vec(), vec(), orders, st.floats(-50, 50))
def test_norm_triangle_and_homogeneity(x, y, p, a):
    assert norm(x + y, p) <= norm(x, p) + norm(y, p) + 1e-10 * (1 + norm(x, p) + norm(y, p))
    assert math.isclose(norm(a * x, p), abs(a) * norm(x, p), rel_tol=1e-10, abs_tol=1e-10)


def test_canonical_examples():
    D = canonical_dictionary(2, 2)
    assert D.atoms.tolist() == [[1, 0], [-1, 0], [0, 1], [0, -1]]
    assert D.labels == ("+e1", "-e1", "+e2", "-e2")
    assert canonical_dictionary(1, 1).atoms.tolist() == [[1.0], [-1.0]]
    D3 = canonical_dictionary(3, math.inf)
    assert len(D3) == 6 and np.linalg.matrix_rank(D3.atoms) == 3
    assert all(D3.check().values())


def test_canonical_rejects_zero_dim():
    with pytest.raises(InputError):
        canonical_dictionary(0)


def test_atoms_are_read_only():
    D = canonical_dictionary(2)
    with pytest.raises(ValueError):
        D.atoms[0, 0] = 5.0


def test_make_symmetric_examples():
    D = make_symmetric_dictionary([(2, 0)], 2)
    assert D.atoms.tolist() == [[1, 0], [-1, 0]]
    assert not D.spanning

    D = make_symmetric_dictionary([(1, 1)], 1)
    assert D.atoms.tolist() == [[0.5, 0.5], [-0.5, -0.5]]
    assert not D.spanning and not D.check()["spanning"]

    D = make_symmetric_dictionary([(1, 0), (-1, 0), (0, 1)], 2)
    assert len(D) == 4 and D.spanning
    assert any(np.array_equal(a, [0, -1]) for a in D.atoms)
    assert D.labels[-1] == "-a2"


def test_make_symmetric_dedups_and_errors():
    D = make_symmetric_dictionary([(1, 0), (3, 0), (1, 1e-13)], 2)
    assert len(D) == 2
    with pytest.raises(InputError):
        make_symmetric_dictionary([(0, 0)])
    with pytest.raises(InputError):
        make_symmetric_dictionary([(1, 0), (1, 0, 0)])
    with pytest.raises(InputError):
        make_symmetric_dictionary([])


@settings(max_examples=100, deadline=None)
@given(st.lists(arrays(float, 3, elements=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3)), min_size=1, max_size=6),
       orders)
def test_constructed_dictionaries_pass_checks(raw, p):
    D = make_symmetric_dictionary(raw, p)
    chk = D.check()
    assert chk["unit_norm"] and chk["negation_closed"]
    for i, j in enumerate(D.negation):
        assert D.negation[j] == i


def test_json_roundtrip():
    D = canonical_dictionary(2, math.inf)
    text = D.to_json()
    assert '"p": "inf"' in text
    D2 = Dictionary.from_json(text)
    assert np.array_equal(D2.atoms, D.atoms) and D2.p == math.inf
    with pytest.raises(InputError):
        Dictionary.from_json("{}")


def test_combine_examples():
    D = canonical_dictionary(2, 2)
    assert combine(Combination({}, D)).tolist() == [0, 0]
    c = Combination({0: 0.3}, D)
    assert combine(c).tolist() == [0.3, 0] and c.l1_mass == 0.3 and c.support == 1
    c = Combination({0: 0.5, 2: 0.5}, D)
    assert combine(c).tolist() == [0.5, 0.5] and c.l1_mass == 1.0 and c.in_A1()
    assert c.in_sigma(2) and not c.in_sigma(1) and c.in_LM(1.0) and not c.in_LM(0.99)


def test_combine_index_out_of_range():
    D = canonical_dictionary(2)
    with pytest.raises(InputError):
        combine(Combination({4: 1.0}, D))


coef_maps = st.dictionaries(st.integers(0, 5), st.floats(-5, 5), max_size=6)


@settings(max_examples=200, deadline=None)
@given(coef_maps, coef_maps, st.floats(-3, 3), st.floats(-3, 3))
def test_combine_is_linear(c1, c2, a, b):
    D = canonical_dictionary(3, 2)
    C1, C2 = Combination(c1, D), Combination(c2, D)
    lhs = combine(C1.scaled(a) + C2.scaled(b))
    rhs = a * combine(C1) + b * combine(C2)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + np.abs(rhs).max()))


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.integers(0, 7), st.floats(-1, 1), max_size=8), orders)
def test_A1_members_have_norm_at_most_one(coefs, p):
    D = make_symmetric_dictionary([(1, 2), (3, -1), (0.5, 0.5), (1, 0)], p)
    total = sum(abs(v) for v in coefs.values())
    if total > 1:
        coefs = {k: v / total for k, v in coefs.items()}
    c = Combination(coefs, D)
    assert c.in_LM(1.0 + 1e-12)
    assert norm(combine(c), p) <= 1 + 1e-12
