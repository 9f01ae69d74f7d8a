"""Tests for the experimental region, model expansion and Cox moves."""

import logging

import numpy as np
import pytest

from app.services.design_model import (
    Design,
    DesignPoint,
    IngredientBounds,
    ModelSpec,
    cox_move,
    expand_points,
    from_pseudocomponents,
    model_expand,
    param_count,
    region_volume,
    to_pseudocomponents,
)
from app.services.errors import CoxRangeError, InvalidArgumentError, RegionViolationError

COCKTAIL_BOUNDS = IngredientBounds((0.3, 0.15, 0.1))


# ---------------------------------------------------------------------------
# Parameter count and term table
# ---------------------------------------------------------------------------

class TestParamCount:

    @pytest.mark.parametrize("q, r, m", [(3, 1, 9), (3, 3, 20), (2, 0, 2), (4, 0, 9), (2, 2, 10)])
    def test_formula(self, q, r, m):
        assert param_count(q, r) == m

    def test_matches_term_table(self):
        for q in range(2, 6):
            for r in range(0, 4):
                spec = ModelSpec(q, r)
                assert len(spec.term_table) == spec.m == param_count(q, r)

    def test_rejects_single_ingredient(self):
        with pytest.raises(InvalidArgumentError):
            param_count(1, 0)

    def test_rejects_negative_process_count(self):
        with pytest.raises(InvalidArgumentError):
            ModelSpec(3, -1)


class TestTermTable:

    def test_labels_q3_r1(self, spec_q3r1):
        assert spec_q3r1.term_labels == (
            "x1", "x2", "x1*x2", "x1*x3", "x2*x3", "x1*z1", "x2*z1", "x3*z1", "z1^2",
        )

    def test_crossings_grouped_by_process_variable(self):
        labels = ModelSpec(2, 2).term_labels
        assert labels == ("x1", "x1*x2", "x1*z1", "x2*z1", "x1*z2", "x2*z2", "z1*z2", "z1^2", "z2^2")

    def test_degrees_at_most_two(self):
        spec = ModelSpec(4, 3)
        assert spec.mixture_exponents.sum(axis=1).max() <= 2
        assert spec.process_exponents.sum(axis=1).max() <= 2

    def test_exponent_arrays_read_only(self, spec_q3r1):
        with pytest.raises(ValueError):
            spec_q3r1.mixture_exponents[0, 0] = 5


# ---------------------------------------------------------------------------
# Model expansion
# ---------------------------------------------------------------------------

class TestModelExpand:

    def test_vertex(self, spec_q3r1):
        f = model_expand(spec_q3r1, DesignPoint([1, 0, 0], [0]))
        np.testing.assert_array_equal(f, [1, 0, 0, 0, 0, 0, 0, 0, 0])

    def test_third_vertex_at_high_setting(self, spec_q3r1):
        f = model_expand(spec_q3r1, DesignPoint([0, 0, 1], [1]))
        np.testing.assert_array_equal(f, [0, 0, 0, 0, 0, 0, 0, 1, 1])

    def test_centroid(self, spec_q3r1):
        third = 1 / 3
        f = model_expand(spec_q3r1, DesignPoint([third, third, third], [-1]))
        expected = [third, third, 1 / 9, 1 / 9, 1 / 9, -third, -third, -third, 1]
        np.testing.assert_allclose(f, expected, atol=1e-15)

    def test_matches_monomial_evaluation(self):
        spec = ModelSpec(3, 2)
        x, z = np.array([0.2, 0.5, 0.3]), np.array([0.4, -0.7])
        f = model_expand(spec, DesignPoint(x, z))
        for value, term in zip(f, spec.term_table):
            expected = np.prod(x ** np.array(term.mixture)) * np.prod(z ** np.array(term.process))
            assert value == pytest.approx(expected, abs=1e-15)

    def test_batched_shape(self, spec_q3r1, random_design_q3r1):
        X = expand_points(spec_q3r1, random_design_q3r1.x, random_design_q3r1.z)
        assert X.shape == (12, 2, 9)
        np.testing.assert_allclose(X[3, 1], model_expand(spec_q3r1, random_design_q3r1.point(3, 1)))

    def test_dimension_mismatch(self, spec_q3r1):
        with pytest.raises(InvalidArgumentError):
            expand_points(spec_q3r1, np.array([0.5, 0.5]), np.array([0.0]))


# ---------------------------------------------------------------------------
# Region and ingestion rule
# ---------------------------------------------------------------------------

class TestRegion:

    def test_volume(self, spec_q3r1):
        assert region_volume(spec_q3r1) == pytest.approx(1.0)
        assert region_volume(ModelSpec(3, 3)) == pytest.approx(4.0)
        assert region_volume(ModelSpec(4, 0)) == pytest.approx(1 / 6)

    def test_tiny_deviation_kept(self):
        p = DesignPoint([0.5, 0.5 + 5e-11])
        assert p.x[1] == 0.5 + 5e-11

    def test_small_deviation_renormalized(self, caplog):
        with caplog.at_level(logging.WARNING):
            p = DesignPoint([0.5, 0.5 + 1e-8])
        assert p.x.sum() == pytest.approx(1.0, abs=1e-15)
        assert "Renormalizing" in caplog.text

    def test_large_deviation_rejected(self):
        with pytest.raises(RegionViolationError):
            DesignPoint([0.5, 0.6])

    def test_tiny_negative_clipped(self):
        p = DesignPoint([-5e-11, 1.0 + 5e-11])
        assert p.x[0] == 0.0

    def test_negative_proportion_rejected(self):
        with pytest.raises(RegionViolationError):
            DesignPoint([-0.1, 1.1])

    def test_process_out_of_range(self):
        with pytest.raises(RegionViolationError):
            DesignPoint([1.0, 0.0], [1.01])

    def test_point_arrays_read_only(self):
        p = DesignPoint([0.5, 0.5], [0.2])
        with pytest.raises(ValueError):
            p.x[0] = 1.0


class TestDesign:

    def test_shapes(self, small_design_q3r1):
        d = small_design_q3r1
        assert (d.S, d.J, d.q, d.r) == (4, 2, 3, 1)
        assert d.point(1, 1).z[0] == -0.5

    def test_from_arrays_without_process(self):
        d = Design.from_arrays(np.array([[[1, 0], [0, 1]]]))
        assert d.r == 0
        assert d.z.shape == (1, 2, 0)

    def test_needs_two_alternatives(self):
        with pytest.raises(InvalidArgumentError):
            Design.from_arrays(np.array([[[1, 0]]]))

    def test_check_spec(self, small_design_q3r1):
        small_design_q3r1.check_spec(ModelSpec(3, 1))
        with pytest.raises(InvalidArgumentError):
            small_design_q3r1.check_spec(ModelSpec(3, 2))


# ---------------------------------------------------------------------------
# Pseudocomponents
# ---------------------------------------------------------------------------

class TestPseudocomponents:

    @pytest.mark.parametrize("a, x", [
        ((0.75, 0.15, 0.10), (1, 0, 0)),
        ((0.30, 0.15, 0.55), (0, 0, 1)),
        ((0.45, 0.30, 0.25), (1 / 3, 1 / 3, 1 / 3)),
    ])
    def test_cocktail_bounds(self, a, x):
        result = to_pseudocomponents(a, COCKTAIL_BOUNDS)
        np.testing.assert_allclose(result, x, atol=1e-12)
        assert result.sum() == pytest.approx(1.0)

    def test_inverse(self):
        a = np.array([0.41, 0.22, 0.37])
        np.testing.assert_allclose(from_pseudocomponents(to_pseudocomponents(a, COCKTAIL_BOUNDS), COCKTAIL_BOUNDS), a)

    def test_below_lower_bound(self):
        with pytest.raises(RegionViolationError):
            to_pseudocomponents((0.2, 0.4, 0.4), COCKTAIL_BOUNDS)

    def test_bounds_must_leave_room(self):
        with pytest.raises(InvalidArgumentError):
            IngredientBounds((0.5, 0.3, 0.2))


# ---------------------------------------------------------------------------
# Cox moves
# ---------------------------------------------------------------------------

class TestCoxMove:

    def test_vertex_splits_remainder(self):
        np.testing.assert_allclose(cox_move([1, 0, 0], 0, -0.3), [0.7, 0.15, 0.15])

    def test_keeps_ratios(self):
        np.testing.assert_allclose(cox_move([0.2, 0.5, 0.3], 0, 0.3), [0.5, 0.3125, 0.1875])

    def test_zero_move_is_identity(self):
        np.testing.assert_allclose(cox_move([0.2, 0.5, 0.3], 1, 0.0), [0.2, 0.5, 0.3])

    def test_move_to_vertex(self):
        np.testing.assert_allclose(cox_move([0.2, 0.5, 0.3], 2, 0.7), [0, 0, 1], atol=1e-15)

    def test_sums_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            x = rng.dirichlet(np.ones(4))
            i = int(rng.integers(4))
            delta = rng.uniform(-x[i], 1 - x[i])
            moved = cox_move(x, i, delta)
            assert moved.sum() == pytest.approx(1.0, abs=1e-12)
            others = [k for k in range(4) if k != i]
            assert moved[others[0]] / moved[others[1]] == pytest.approx(x[others[0]] / x[others[1]])

    def test_near_vertex_stays_on_simplex(self):
        x = np.array([np.nextafter(1 - 1e-11, 2), 6e-12, 4e-12])
        moved = cox_move(x, 0, -x[0])
        assert abs(moved.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(moved, [0.0, 0.6, 0.4], atol=1e-12)
        other = cox_move(x, 0, 0.5 - x[0])
        design = Design(np.array([[moved, other]]), np.zeros((1, 2, 0)))
        assert design.S == 1

    def test_out_of_range(self):
        with pytest.raises(CoxRangeError):
            cox_move([0.2, 0.5, 0.3], 0, 0.9)
        with pytest.raises(CoxRangeError):
            cox_move([0.2, 0.5, 0.3], 0, -0.3)

    def test_bad_index(self):
        with pytest.raises(InvalidArgumentError):
            cox_move([0.5, 0.5], 2, 0.1)
