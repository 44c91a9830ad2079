import math
from fractions import Fraction

import numpy as np
import pytest

from slabcover.geometry import dominates
from slabcover.measures import (
    DiscreteMeasure, MeasureFormatError, MeasureValidationError, cantor_centers, format_measure,
    from_spec, gen_cantor_lebesgue, gen_cantor_product, gen_ifs, gen_lebesgue_grid, gen_segment,
    load_measure, parse_measure, save_measure, union,
)


def middle_thirds_centres(m):
    """Exact rational centres by recursive interval splitting."""
    iv = [(Fraction(0), Fraction(1))]
    for _ in range(m):
        iv = [p for a, b in iv for p in ((a, a + (b - a) / 3), (b - (b - a) / 3, b))]
    return sorted(float((a + b) / 2) for a, b in iv)


def test_cantor_product_level_one():
    mu = gen_cantor_product(1 / 3, 1, 2)
    expected = {(1 / 6, 1 / 6), (1 / 6, 5 / 6), (5 / 6, 1 / 6), (5 / 6, 5 / 6)}
    got = {tuple(p) for p in mu.points.tolist()}
    assert len(got) == 4
    for p in got:
        assert any(math.isclose(p[0], q[0], abs_tol=1e-15) and math.isclose(p[1], q[1], abs_tol=1e-15)
                   for q in expected)
    assert mu.weights.tolist() == [0.25] * 4


def test_cantor_product_level_two_coordinates():
    mu = gen_cantor_product(1 / 3, 2, 2)
    assert mu.count == 16
    allowed = np.array([1, 5, 13, 17]) / 18
    assert np.all(np.min(np.abs(mu.points[:, :, None] - allowed), axis=2) < 1e-15)


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_cantor_centres_match_exact_construction(m):
    assert np.allclose(cantor_centers(1 / 3, m), middle_thirds_centres(m), rtol=0, atol=1e-15)


@pytest.mark.parametrize("ratio,depth,n", [(1 / 3, 3, 2), (0.25, 2, 3), (0.4, 4, 2)])
def test_generators_mass_and_box(ratio, depth, n):
    mu = gen_cantor_product(ratio, depth, n)
    assert mu.count == 2 ** (n * depth)
    assert abs(mu.total_mass - 1.0) <= 1e-9
    assert mu.points.min() >= 0 and mu.points.max() <= 1


@pytest.mark.parametrize("ratio,depth", [(0.5, 2), (0.0, 2), (1 / 3, 0), (0.6, 1)])
def test_invalid_cantor_parameters(ratio, depth):
    with pytest.raises(ValueError):
        gen_cantor_product(ratio, depth)


def test_cantor_lebesgue():
    mu = gen_cantor_lebesgue(1 / 3, 1, 2)
    assert mu.count == 4
    assert sorted(set(np.round(mu.points[:, 0], 15))) == [round(1 / 6, 15), round(5 / 6, 15)]
    assert sorted(set(mu.points[:, 1].tolist())) == [0.25, 0.75]
    assert mu.weights.tolist() == [0.25] * 4
    big = gen_cantor_lebesgue(1 / 3, 4, 7)
    assert abs(big.total_mass - 1) <= 1e-9
    assert len(np.unique(big.points[:, 0])) <= 2**4
    with pytest.raises(ValueError):
        gen_cantor_lebesgue(1 / 3, 2, 0)


def test_segment():
    mu = gen_segment((0.5, 0), (0.5, 1), 4)
    assert mu.count == 4 and np.all(mu.points[:, 0] == 0.5)
    assert mu.weights.tolist() == [0.25] * 4
    diag = gen_segment((0.1, 0.2), (0.7, 0.9), 33)
    assert abs(diag.total_mass - math.hypot(0.6, 0.7)) <= 1e-12
    lo, hi = np.minimum((0.1, 0.2), (0.7, 0.9)), np.maximum((0.1, 0.2), (0.7, 0.9))
    assert np.all(diag.points >= lo) and np.all(diag.points <= hi)
    with pytest.raises(ValueError):
        gen_segment((0.2, 0.2), (0.2, 0.2), 3)


def test_horizontal_segment_is_a_chain_in_direction_one():
    mu = gen_segment((0, 0), (1, 0), 25)
    P = mu.points
    for a in range(len(P)):
        for b in range(a + 1, len(P)):
            assert dominates(P[a], P[b], 1) or dominates(P[b], P[a], 1)


def test_lebesgue_grid():
    mu = gen_lebesgue_grid(2, 2)
    assert sorted(map(tuple, mu.points.tolist())) == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
    assert mu.weights.tolist() == [0.25] * 4
    g3 = gen_lebesgue_grid(3, 2)
    assert g3.count == 9
    assert np.allclose(np.unique(g3.points[:, 0]), [1 / 6, 1 / 2, 5 / 6])
    assert abs(gen_lebesgue_grid(7, 3).total_mass - 1) <= 1e-9


def test_ifs_sierpinski():
    mu = gen_ifs([0.5] * 3, [[0, 0], [0.5, 0], [0.25, 0.5]], [1 / 3] * 3, 4)
    assert mu.count == 81 and abs(mu.total_mass - 1) <= 1e-9
    assert mu.spec["singular"]
    assert mu.points.min() >= 0 and mu.points.max() <= 1
    with pytest.raises(ValueError):
        gen_ifs([1.2], [[0, 0]], [1.0], 2)
    with pytest.raises(ValueError):
        gen_ifs([0.5, 0.5], [[0, 0], [0.5, 0.5]], [0.3, 0.3], 2)


def test_generators_are_deterministic():
    for spec in (gen_cantor_product(1 / 3, 3).spec, gen_segment((0, 0), (1, 1), 9).spec,
                 gen_lebesgue_grid(5).spec, gen_cantor_lebesgue(0.25, 2, 3).spec):
        assert format_measure(from_spec(spec)) == format_measure(from_spec(spec))
    with pytest.raises(ValueError):
        from_spec({"kind": "nope"})


def test_union_keeps_smallest_resolution():
    u = union(gen_segment((0.5, 0), (0.5, 1), 64), gen_segment((0, 0.5), (1, 0.5), 32))
    assert u.count == 96 and u.resolution == 32 and abs(u.total_mass - 2) <= 1e-12


def test_round_trip(tmp_path):
    mu = gen_cantor_product(1 / 3, 2, 2)
    path = tmp_path / "c.msr"
    save_measure(mu, path)
    back = load_measure(path)
    assert back == mu
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)
    save_measure(back, tmp_path / "d.msr")
    assert (tmp_path / "c.msr").read_bytes() == (tmp_path / "d.msr").read_bytes()


def test_round_trip_awkward_floats(rng):
    mu = DiscreteMeasure(rng.random((50, 3)), rng.random(50) + 1e-300)
    assert parse_measure(format_measure(mu)) == mu


def _rows(text):
    return text.rstrip("\n").split("\n")


def test_negative_weight_is_a_validation_error():
    lines = _rows(format_measure(gen_lebesgue_grid(2)))
    lines[2] = "0.25,0.75,-1"
    with pytest.raises(MeasureValidationError):
        parse_measure("\n".join(lines) + "\n")


def test_wrong_field_count_cites_row():
    lines = _rows(format_measure(gen_lebesgue_grid(2)))
    lines[3] = "0.25,0.25,0.25,0.25"
    with pytest.raises(MeasureFormatError, match="row 3") as exc:
        parse_measure("\n".join(lines) + "\n")
    assert exc.value.line == 4


def test_parse_errors():
    with pytest.raises(MeasureFormatError):
        parse_measure("")
    with pytest.raises(MeasureFormatError, match="line 1"):
        parse_measure("{not json\n")
    lines = _rows(format_measure(gen_lebesgue_grid(2)))
    lines[1] = "0.25,abc,0.25"
    with pytest.raises(MeasureFormatError) as exc:
        parse_measure("\n".join(lines) + "\n")
    assert exc.value.field == "x2"
    with pytest.raises(MeasureFormatError):
        parse_measure("\n".join(lines[:-1]) + "\n")
    lines = _rows(format_measure(gen_lebesgue_grid(2)))
    lines[0] = lines[0].replace('"mass":1', '"mass":2')
    with pytest.raises(MeasureValidationError):
        parse_measure("\n".join(lines) + "\n")


def test_measure_validation():
    with pytest.raises(MeasureValidationError):
        DiscreteMeasure([[0.5, 0.5]], [0.0])
    with pytest.raises(MeasureValidationError):
        DiscreteMeasure([[1.5, 0.5]], [1.0])
    with pytest.raises(MeasureValidationError):
        DiscreteMeasure([[np.nan, 0.5]], [1.0])
    assert DiscreteMeasure([[1.5, 0.5]], [1.0], check_box=False).count == 1
