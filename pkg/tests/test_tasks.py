import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrflightbench.sim import Vec3
from vrflightbench.tasks import (
    CROSSING_DISTANCES,
    CROSSING_WIDTHS,
    KIND_CROSSING,
    KIND_POINTING,
    MODES,
    POINTING_DISTANCES,
    POINTING_WIDTHS,
    SHANNON,
    TaskLayout,
    WELFORD,
    difficulty_index,
    enumerate_conditions,
    instantiate_task,
    randomize_order,
)

# Welford-form indices over each (D, W) grid, computed by hand as log2(2D/W).
POINTING_IDS = [1.8625, 2.5146, 2.8625, 3.3219, 3.5146, 4.3219]
CROSSING_IDS = [3.3219, 3.6439, 3.8074, 4.0589, 4.1293, 4.5443]


class TestDifficultyIndex:
    def test_log2_ten(self):
        assert difficulty_index(2.0, 0.4) == pytest.approx(math.log2(10.0), rel=1e-12)
        assert difficulty_index(2.0, 0.4) == pytest.approx(3.3219, abs=5e-5)

    def test_zero_at_half_width_distance(self):
        for w in (0.1, 0.5, 2.0):
            assert difficulty_index(w / 2.0, w) == 0.0

    def test_easiest_pointing_condition_matches_reported_value(self):
        # D=2, W=1.1 sits at ~1.86 bits, consistent with the study's "1.9".
        assert difficulty_index(2.0, 1.1) == pytest.approx(1.8625, abs=5e-5)

    def test_shannon_form(self):
        assert difficulty_index(2.5, 0.5, SHANNON) == pytest.approx(math.log2(6.0), rel=1e-12)

    @pytest.mark.parametrize("d,w", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
    def test_rejects_non_positive_geometry(self, d, w):
        with pytest.raises(ValueError):
            difficulty_index(d, w)

    def test_rejects_unknown_formulation(self):
        with pytest.raises(ValueError):
            difficulty_index(1.0, 1.0, "guesswork")

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(0.1, 10.0),
        st.floats(0.1, 10.0),
        st.floats(0.01, 1.0),
        st.sampled_from([WELFORD, SHANNON]),
    )
    def test_monotone_in_distance_and_width(self, d, w, delta, form):
        assert difficulty_index(d + delta, w, form) > difficulty_index(d, w, form)
        assert difficulty_index(d, w + delta, form) < difficulty_index(d, w, form)


class TestEnumerateConditions:
    def test_pointing_grid_and_ids(self):
        conditions = enumerate_conditions(KIND_POINTING)
        assert len(conditions) == 6
        grid = {(c.distance, c.width) for c in conditions}
        assert grid == {(d, w) for d in POINTING_DISTANCES for w in POINTING_WIDTHS}
        for got, expected in zip(conditions, POINTING_IDS):
            assert got.id_value == pytest.approx(expected, abs=5e-5)

    def test_crossing_grid_and_ids(self):
        conditions = enumerate_conditions(KIND_CROSSING)
        assert len(conditions) == 6
        grid = {(c.distance, c.width) for c in conditions}
        assert grid == {(d, w) for d in CROSSING_DISTANCES for w in CROSSING_WIDTHS}
        for got, expected in zip(conditions, CROSSING_IDS):
            assert got.id_value == pytest.approx(expected, abs=5e-5)

    def test_sorted_ascending_and_distinct(self):
        for kind in (KIND_POINTING, KIND_CROSSING):
            ids = [c.id_value for c in enumerate_conditions(kind)]
            assert ids == sorted(ids)
            assert len(set(ids)) == 6

    def test_crossing_shannon_range(self):
        ids = [c.id_value for c in enumerate_conditions(KIND_CROSSING, SHANNON)]
        assert min(ids) == pytest.approx(2.585, abs=5e-4)
        assert max(ids) == pytest.approx(3.663, abs=5e-4)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            enumerate_conditions("hovering")


class TestInstantiateTask:
    def test_pointing_plate_on_ground(self):
        condition = next(
            c for c in enumerate_conditions(KIND_POINTING) if c.distance == 2.0 and c.width == 0.4
        )
        task = instantiate_task(condition)
        assert task.target_center == Vec3(3.0, 0.0, 0.0)

    def test_crossing_frame_at_height(self):
        condition = next(
            c for c in enumerate_conditions(KIND_CROSSING) if c.distance == 3.5 and c.width == 0.3
        )
        task = instantiate_task(condition)
        assert task.target_center == Vec3(4.5, 0.0, 1.5)

    def test_spawn_is_fixed(self):
        for kind in (KIND_POINTING, KIND_CROSSING):
            for condition in enumerate_conditions(kind):
                assert instantiate_task(condition).start_pos == Vec3(1.0, 0.0, 0.0)

    def test_distance_is_along_approach_axis(self):
        for condition in enumerate_conditions(KIND_CROSSING):
            task = instantiate_task(condition)
            assert task.target_center.x - task.start_pos.x == pytest.approx(condition.distance)

    def test_layout_override(self):
        condition = enumerate_conditions(KIND_CROSSING)[0]
        task = instantiate_task(condition, TaskLayout(start_pos=Vec3(0.0, 0.0, 0.0), frame_height=2.0))
        assert task.target_center.z == 2.0


class TestRandomizeOrder:
    def test_same_seed_same_plan(self):
        conditions = enumerate_conditions(KIND_POINTING)
        a = randomize_order(conditions, seed=123, participant_id="P03")
        b = randomize_order(conditions, seed=123, participant_id="P03")
        assert a == b

    def test_seed_parity_counterbalances_mode_order(self):
        conditions = enumerate_conditions(KIND_POINTING)
        even = randomize_order(conditions, seed=0)
        odd = randomize_order(conditions, seed=1)
        assert even.entries[0].mode != odd.entries[0].mode
        assert even.entries[0].mode == MODES[0]

    def test_full_factorial_cardinality(self):
        conditions = enumerate_conditions(KIND_POINTING)
        plan = randomize_order(conditions, repetitions=5, seed=9)
        assert len(plan.entries) == 60

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**64 - 1))
    def test_multiset_invariant_over_seeds(self, seed):
        conditions = enumerate_conditions(KIND_CROSSING)
        plan = randomize_order(conditions, repetitions=5, seed=seed)
        counts = Counter((e.mode, e.condition.distance, e.condition.width) for e in plan.entries)
        assert len(counts) == 12
        assert set(counts.values()) == {5}
        per_pair = Counter((e.mode, e.condition.label(), e.trial_index) for e in plan.entries)
        assert set(per_pair.values()) == {1}

    def test_mode_blocks_are_contiguous(self):
        conditions = enumerate_conditions(KIND_POINTING)
        plan = randomize_order(conditions, seed=4)
        modes = [e.mode for e in plan.entries]
        flips = sum(1 for a, b in zip(modes, modes[1:]) if a != b)
        assert flips == 1

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            randomize_order([], seed=0)
        with pytest.raises(ValueError):
            randomize_order(enumerate_conditions(KIND_POINTING), repetitions=0, seed=0)
        with pytest.raises(ValueError):
            randomize_order(enumerate_conditions(KIND_POINTING), seed=0, participant_id="alice")
