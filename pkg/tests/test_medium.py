import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from effmed.errors import DivisionByZeroSupport, InputError, PackingViolation, ValidationError
from effmed.medium import (Domain, MediumSpec, medium_json, passivity_check, potential_from_refraction,
                           recipe_i_design, refraction_from_potential)
from effmed.samplers import Constant, Expression, PiecewiseBox

GRID = Domain.unit_cube(6)
PTS = GRID.centers()


def test_vacuum_has_zero_potential():
    q = potential_from_refraction(Constant(1.0), 3.7)
    assert np.all(q(PTS) == 0)


def test_half_index_gives_half_potential():
    q = potential_from_refraction(Constant(0.5), 1.0)
    np.testing.assert_allclose(q(PTS), 0.5, rtol=0, atol=0)


def smooth_samplers():
    coef = st.floats(-3, 3)
    return st.tuples(coef, coef, coef, coef, st.floats(0.1, 5)).map(
        lambda c: (lambda x: c[0] + c[1] * np.sin(c[4] * x[..., 0]) + 1j * c[2] * np.cos(x[..., 1])
                   + c[3] * x[..., 2] ** 2))


@given(smooth_samplers(), st.floats(0.05, 50))
def test_refraction_roundtrip(n2, k):
    back = refraction_from_potential(potential_from_refraction(n2, k), k)
    ref = n2(PTS)
    np.testing.assert_allclose(back(PTS), ref, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(ref))))


@given(smooth_samplers(), st.floats(0.01, 0.7), st.floats(0.0, 0.5))
def test_recipe_reproduces_target(q, n0, slope):
    N = lambda x: n0 * (1 - slope * x[..., 0]) + 0.001  # noqa: E731
    A, Nv = recipe_i_design(q, N, 0.74, GRID)
    qv = q(PTS)
    assert np.max(np.abs(A(PTS) * Nv(PTS) - qv)) < 1e-12 * max(np.max(np.abs(qv)), 1e-300)


@given(st.floats(0.01, 0.7), st.floats(0.05, 0.99), st.floats(-5, 5))
def test_packing_rescaling_leaves_potential(n0, s, qval):
    q = Constant(qval)
    A, N = recipe_i_design(q, Constant(n0), domain=GRID)
    A2, N2 = (lambda x: A(x) / s), (lambda x: s * N(x))
    np.testing.assert_allclose(A2(PTS) * N2(PTS), q(PTS), rtol=1e-12, atol=1e-300)


def test_recipe_examples():
    A, _ = recipe_i_design(Constant(1.0), Constant(0.5), domain=GRID)
    np.testing.assert_array_equal(A(PTS), 2.0)
    A, _ = recipe_i_design(Constant(0.0), Constant(0.1), domain=GRID)
    np.testing.assert_array_equal(A(PTS), 0.0)


def test_recipe_packing_violation():
    with pytest.raises(PackingViolation):
        recipe_i_design(Constant(1.0), Constant(0.8), p_max=0.74, domain=GRID)
    with pytest.raises(PackingViolation):
        recipe_i_design(Constant(1.0), Constant(-0.1), domain=GRID)


def test_recipe_custom_packing_bound():
    recipe_i_design(Constant(1.0), Constant(0.8), p_max=0.9, domain=GRID)
    with pytest.raises(ValidationError):
        recipe_i_design(Constant(1.0), Constant(0.1), p_max=1.2, domain=GRID)


def test_recipe_support_mismatch():
    N = PiecewiseBox(0.0, [((0, 0, 0), (0.5, 1, 1), 0.3)])
    with pytest.raises(DivisionByZeroSupport):
        recipe_i_design(Constant(1.0), N, domain=GRID)
    q = PiecewiseBox(0.0, [((0, 0, 0), (0.5, 1, 1), 0.6)])
    A, _ = recipe_i_design(q, N, domain=GRID)
    a = A(PTS)
    assert np.all(a[PTS[:, 0] < 0.5] == 2.0) and np.all(a[PTS[:, 0] > 0.5] == 0.0)


def test_passivity_examples():
    assert len(passivity_check(Constant(0.0), GRID)) == 0
    assert len(passivity_check(Constant(-0.1j), GRID)) == 0
    bad = passivity_check(Constant(0.1j), GRID)
    assert bad.shape == (GRID.size, 3)


def test_passivity_tolerance_scales_with_k():
    assert len(passivity_check(Constant(1e-13j), GRID, k=1.0)) == 0
    assert len(passivity_check(Constant(1e-11j), GRID, k=1.0)) == GRID.size


def test_domain_validation():
    with pytest.raises(ValidationError):
        Domain((0, 0, 0), (1, 0, 1))
    with pytest.raises(ValidationError):
        Domain((0, 0, 0), (1, 1, 1), (0, 1, 1))
    d = Domain((0, 0, 0), (2, 1, 1), (4, 2, 2))
    assert d.voxel_volume == pytest.approx(0.125)
    assert d.centers()[1].tolist() == [0.25, 0.25, 0.75]
    assert Domain.from_json(d.to_json()) == d


def test_medium_spec_derives_fields(tmp_path):
    doc = medium_json(Domain.unit_cube(4), 2.0, q=Constant(0.8), N=Constant(0.4))
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    med = MediumSpec.load(path)
    x_in = np.array([[0.5, 0.5, 0.5]])
    x_out = np.array([[1.5, 0.5, 0.5]])
    assert med.q(x_in)[0] == 0.8 and med.q(x_out)[0] == 0
    assert med.n2(x_in)[0] == pytest.approx(1 - 0.8 / 4)
    assert med.n2(x_out)[0] == 1.0
    assert med.A(x_in)[0] == pytest.approx(2.0)
    assert med.N(x_out)[0] == 0


def test_medium_spec_requires_exactly_one_potential():
    with pytest.raises(ValidationError):
        MediumSpec(Domain.unit_cube(), 1.0)
    with pytest.raises(ValidationError):
        MediumSpec(Domain.unit_cube(), 1.0, q=Constant(0), n2=Constant(1))
    with pytest.raises(InputError):
        MediumSpec.from_json({"domain": Domain.unit_cube().to_json(), "k": 1.0})


def test_medium_load_errors(tmp_path):
    with pytest.raises(InputError):
        MediumSpec.load(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        MediumSpec.load(bad)


def test_medium_from_refraction_json():
    med = MediumSpec.from_json({"domain": {"lo": [0, 0, 0], "hi": [1, 1, 1]}, "k": 2.0,
                                "n2": {"kind": "expression", "re": "1 + x", "im": "0.1"}})
    v = med.q(np.array([[0.5, 0.5, 0.5]]))[0]
    assert v == pytest.approx(4 * (1 - (1.5 + 0.1j)))
    assert np.imag(v) < 0
