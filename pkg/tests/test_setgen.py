"""Moran constructions, dimension estimators, interval-family search."""

import math
import random
from fractions import Fraction

import pytest

from tubelab.core import DyadicScale
from tubelab.setgen import (
    IntervalFamily,
    MoranSpec,
    ball_count_1d,
    box_dim_ratio,
    build_moran,
    check_gcs,
    constant_branch_spec,
    doubling_branch_spec,
    family_offsets,
    frostman_constant,
    katz_tao_constant,
    middle_thirds_spec,
    moran_spec_from_config,
    moran_sum_multiplicity_bound,
    parse_keyvals,
    qa_profile,
    regularity_constant,
    search_interval_family,
    sum_multiplicity,
)

F = Fraction
LOG2_3 = math.log(2) / math.log(3)


def _random_valid_spec(rng: random.Random, levels: int = 4) -> MoranSpec:
    """Random per-level layouts kept valid by slot construction."""
    ns, cs, offs = [], [], []
    for _ in range(levels):
        n = rng.choice([2, 3])
        d = rng.randrange(2 * n + 1, 4 * n + 2)  # c = 1/d, slots of width 1/d
        c = F(1, d)
        # choose n slot positions with gaps >= 2 slots, endpoints flush
        positions = [0]
        remaining = list(range(2, d - 1))
        while len(positions) < n - 1:
            p = rng.choice(remaining)
            if all(abs(p - q) >= 2 for q in positions) and p <= d - 3:
                positions.append(p)
            remaining.remove(p)
            if not remaining:
                break
        if len(positions) < n - 1:
            positions = list(range(0, 2 * (n - 1), 2))
        positions = sorted(positions)[: n - 1] + [d - 1]
        ns.append(n)
        cs.append(c)
        offs.append([F(p, d) for p in sorted(set(positions))[:n]])
        if len(offs[-1]) != n:
            offs[-1] = [F(2 * i, d) for i in range(n - 1)] + [F(d - 1, d)]
    return MoranSpec(n=ns, c=cs, offsets=offs)


class TestBuildMoran:
    def test_middle_thirds_first_generation(self):
        ms = build_moran(middle_thirds_spec(), 1)
        assert ms.intervals(1) == [(F(-1, 2), F(-1, 6)), (F(1, 6), F(1, 2))]

    def test_constant_branch_first_generation(self):
        ms = build_moran(constant_branch_spec(3), 1)
        assert ms.interval_count(1) == 3
        assert ms.length(1) == F(1, 27)

    def test_doubling_counts_telescope(self):
        ms = build_moran(doubling_branch_spec(), 4)
        assert [ms.interval_count(k) for k in range(5)] == [1, 2, 8, 64, 1024]
        assert ms.length(4) == F(1, 1 << 30)

    def test_generation_lengths_and_nesting(self):
        rng = random.Random(31415)
        for _ in range(10):
            spec = _random_valid_spec(rng)
            ms = build_moran(spec, 4)
            expected = F(1)
            for k in range(1, 5):
                expected *= spec.c(k)
                assert ms.length(k) == expected
                ln_par = ms.length(k - 1)
                parents = ms.intervals(k - 1)
                for a, b in ms.intervals(k):
                    assert any(pa <= a and b <= pa + ln_par for pa, _ in parents)

    def test_removed_gaps_partition_parent(self):
        ms = build_moran(middle_thirds_spec(), 3)
        for k in range(1, 4):
            removed = ms.removed_intervals(k)
            kept = sum((b - a) for a, b in ms.intervals(k))
            gaps = sum((b - a) for a, b in removed)
            assert kept + gaps == sum(b - a for a, b in ms.intervals(k - 1))

    def test_midpoints_exact_and_on_generation_endpoints(self):
        ms = build_moran(middle_thirds_spec(), 6)
        for k in range(1, 7):
            eps = set(ms.endpoints(k))
            for (a, b), mid in zip(ms.removed_intervals(k), ms.midpoints(k)):
                assert mid == (a + b) / 2
                assert a in eps and b in eps

    def test_endpoint_condition_persists_gap_endpoints(self):
        ms = build_moran(middle_thirds_spec(), 6)
        deep = set(ms.endpoints(6))
        for a, b in ms.removed_intervals(2):
            assert a in deep and b in deep

    def test_overlapping_offsets_error_names_level(self):
        spec = MoranSpec(n=2, c=F(1, 3), offsets=[0, F(1, 4)])
        with pytest.raises(ValueError, match="level 1"):
            build_moran(spec, 1)

    def test_expansion_ratio_must_leave_room(self):
        spec = MoranSpec(n=3, c=F(1, 3), offsets=[0, F(1, 3), F(2, 3)])
        with pytest.raises(ValueError, match="n_k \\* c_k"):
            build_moran(spec, 1)

    def test_interval_cap_guard(self):
        with pytest.raises(ValueError, match="exceed"):
            build_moran(middle_thirds_spec(), 8, max_intervals=100)

    def test_contains_descends_tree(self):
        ms = build_moran(middle_thirds_spec(), 8)
        assert ms.contains(F(-1, 2))
        assert ms.contains(F(1, 2))
        assert not ms.contains(F(0), 1)
        # 1/6 is a kept endpoint at every generation
        assert ms.contains(F(1, 6), 8)


class TestCheckGcs:
    def test_middle_thirds_ratios(self):
        rep = check_gcs(build_moran(middle_thirds_spec(), 5))
        assert rep["endpoint_ok"] is True
        for k, r in enumerate(rep["hrww_ratio"], 1):
            assert abs(r - 1 / k) < 1e-12

    def test_doubling_ratios(self):
        rep = check_gcs(build_moran(doubling_branch_spec(), 5))
        assert rep["endpoint_ok"] is True
        for k, r in enumerate(rep["hrww_ratio"], 1):
            assert abs(r - 2 / (k + 1)) < 1e-12

    def test_non_flush_right_child(self):
        spec = MoranSpec(n=2, c=F(1, 3), offsets=[0, F(1, 2)])
        rep = check_gcs(build_moran(spec, 2))
        assert rep["endpoint_ok"] is False


class TestBoxDimRatio:
    def test_middle_thirds(self):
        ms = build_moran(middle_thirds_spec(), 6)
        assert abs(box_dim_ratio(ms, 1, 6) - LOG2_3) < 1e-12
        assert abs(box_dim_ratio(ms, 3, 5) - LOG2_3) < 1e-12

    def test_doubling_is_one_third(self):
        ms = build_moran(doubling_branch_spec(), 5)
        for k_lo in (1, 2, 3):
            assert abs(box_dim_ratio(ms, k_lo, 5) - 1 / 3) < 1e-12

    def test_half_dimension(self):
        spec = MoranSpec(n=2, c=F(1, 4), offsets=[0, F(3, 4)])
        ms = build_moran(spec, 4)
        assert abs(box_dim_ratio(ms, 1, 4) - 0.5) < 1e-12

    def test_depth_errors(self):
        ms = build_moran(middle_thirds_spec(), 3)
        with pytest.raises(ValueError):
            box_dim_ratio(ms, 1, 4)
        with pytest.raises(ValueError):
            box_dim_ratio(ms, 0, 3)


def _brute_window_counts(xs, r, windows, closed_right=False):
    counts = []
    for lo, hi in windows:
        pts = [x for x in xs if lo <= x < hi or (closed_right and x == hi)]
        covered = None
        c = 0
        for x in pts:
            if covered is None or x > covered:
                c += 1
                covered = x + 2 * r
        counts.append(c)
    return counts


def _brute_regularity(xs, s, amax):
    best = 0.0
    for a in range(amax + 1):
        r = 2.0 ** -a
        for b in range(a + 1):
            w = 2.0 ** -b
            cells = sorted({math.floor(x / w) for x in xs})
            windows = [(c * w, (c + 1) * w) for c in cells]
            for cnt in _brute_window_counts(xs, r, windows):
                best = max(best, cnt / 2.0 ** ((a - b) * s))
    return best


def _brute_frostman(xs, s, amax, dv):
    tot = _brute_window_counts(xs, dv, [(min(xs), max(xs))], closed_right=True)[0]
    best = 0.0
    for a in range(amax + 1):
        r = 2.0 ** -a
        windows = [(x - r, x + r) for x in xs]
        for cnt in _brute_window_counts(xs, dv, windows, closed_right=True):
            best = max(best, cnt / (r ** s * tot))
    return best


def _brute_katz_tao(xs, t, amax, dv):
    best = 0.0
    for a in range(amax + 1):
        r = 2.0 ** -a
        windows = [(x - r, x + r) for x in xs]
        for cnt in _brute_window_counts(xs, dv, windows, closed_right=True):
            best = max(best, cnt * (dv / r) ** t)
    return best


class TestQaProfile:
    def test_singleton_is_zero(self):
        assert qa_profile([F(1, 2)], 0.5, DyadicScale(8)) == 0.0

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            qa_profile([], 0.5, DyadicScale(8))

    def test_scale_range_empty(self):
        with pytest.raises(ValueError, match="scale range empty"):
            qa_profile([0, F(1, 2)], 0.5, F(1))

    def test_gamma_bounds(self):
        with pytest.raises(ValueError):
            qa_profile([0], 0.0, DyadicScale(4))

    def test_monotone_in_gamma(self):
        ms = build_moran(middle_thirds_spec(), 8)
        e = ms.endpoints(8)
        delta = F(3) ** -8
        vals = [qa_profile(e, g, delta) for g in (0.2, 0.4, 0.6, 0.8)]
        for a, b in zip(vals, vals[1:]):
            assert a >= b - 1e-12

    def test_full_grid_value(self):
        # value pinned from the exact greedy-ball convention: balls of radius
        # 2^-a on the 2^-16 grid cover 2^(17-a)+1 points each
        grid = [F(i, 1 << 16) for i in range((1 << 16) + 1)]
        v = qa_profile(grid, 0.5, DyadicScale(16))
        assert abs(v - 0.91644) < 2e-3

    def test_middle_thirds_profile_near_box_dimension(self):
        ms = build_moran(middle_thirds_spec(), 10)
        v = qa_profile(ms.endpoints(10), 0.25, F(3) ** -10)
        assert abs(v - LOG2_3) < 0.08

    def test_matches_brute_force_small(self):
        rng = random.Random(11)
        for _ in range(8):
            xs = sorted({F(rng.randrange(0, 256), 256) for _ in range(rng.randrange(2, 40))})
            fast = qa_profile(xs, 0.5, DyadicScale(6))
            floats = [float(x) for x in xs]
            best = 0.0
            for a in range(1, 7):
                for b in range(0, min(a - 1, math.floor(0.5 * a)) + 1):
                    w = 2.0 ** -b
                    cells = sorted({math.floor(x / w) for x in floats})
                    windows = [(c * w, (c + 1) * w) for c in cells]
                    for cnt in _brute_window_counts(floats, 2.0 ** -a, windows):
                        if cnt >= 2:
                            best = max(best, math.log2(cnt) / (a - b))
            assert fast == pytest.approx(best, abs=0)


class TestRegularityConstant:
    def test_single_point(self):
        assert regularity_constant([0], 0.5, DyadicScale(8)) == 1.0

    def test_full_grid_at_most_two(self):
        grid = [F(i, 1 << 10) for i in range(1 << 10)]
        assert regularity_constant(grid, 1.0, DyadicScale(10)) <= 2.0

    def test_middle_thirds_constant_depth_independent(self):
        vals = []
        for K in (6, 8):
            ms = build_moran(middle_thirds_spec(), K)
            d = DyadicScale(math.ceil(K * math.log2(3)))
            vals.append(float(regularity_constant(ms.endpoints(K), LOG2_3, d)))
        assert vals[0] == pytest.approx(vals[1], abs=1e-9)
        assert vals[0] == pytest.approx(1.1602, abs=5e-4)


class TestOracleAgreement:
    """The three constants against an independent brute-force maximization."""

    def test_fifty_random_sets(self):
        rng = random.Random(271828)
        for trial in range(50):
            n = rng.randrange(2, 61)
            xs = sorted({F(rng.randrange(0, 512), 512) for _ in range(n)})
            floats = [float(x) for x in xs]
            amax = 5
            delta = DyadicScale(5)
            dv = float(delta.delta)
            s = rng.choice([0.4, 0.7, 1.0])
            t = rng.choice([0.5, 1.0])
            assert regularity_constant(xs, s, delta) == pytest.approx(
                _brute_regularity(floats, s, amax), abs=0
            )
            assert frostman_constant(xs, s, delta) == pytest.approx(
                _brute_frostman(floats, s, amax, dv), abs=0
            )
            assert katz_tao_constant(xs, t, delta) == pytest.approx(
                _brute_katz_tao(floats, t, amax, dv), abs=0
            )


class TestKatzTaoFrostman:
    def test_singletons(self):
        assert katz_tao_constant([F(1, 2)], 1.0, DyadicScale(8)) == 1.0
        assert frostman_constant([F(1, 2)], 0.5, DyadicScale(8)) == pytest.approx(16.0)

    def test_grid_segment_on_axis_planar(self):
        pts = [(F(i, 64), F(0)) for i in range(65)]
        assert katz_tao_constant(pts, 1.0, DyadicScale(6)) <= 3.0

    def test_planar_net_order_one(self):
        net = [(F(i, 32), F(j, 32)) for i in range(33) for j in range(33)]
        c = katz_tao_constant(net, 2.0, DyadicScale(5))
        assert c == pytest.approx(5.0, abs=1e-9)

    def test_planar_matches_1d_on_separated_axis_points(self):
        # with pairwise gaps > 2*delta, ball counts and cell counts coincide,
        # so the planar path and the 1-d path agree on axis-aligned sets
        xs = [F(i, 16) for i in (0, 3, 6, 10, 15)]
        flat = katz_tao_constant(xs, 1.0, DyadicScale(4))
        planar = katz_tao_constant([(x, F(0)) for x in xs], 1.0, DyadicScale(4))
        assert flat == pytest.approx(planar)


class TestSumMultiplicity:
    def test_single_interval(self):
        assert sum_multiplicity([(0, 1)], 2) == 1

    def test_two_far_intervals(self):
        assert sum_multiplicity([(0, 1), (10, 11)], 2) == 2

    def test_arithmetic_progression_of_short_intervals(self):
        eps = F(1, 100)
        fam = [(F(0), eps), (F(1), 1 + eps), (F(2), 2 + eps)]
        assert sum_multiplicity(fam, 2) == 3

    def test_cap_error_mentions_product_bound(self):
        fam = [(F(i), F(i) + F(1, 2)) for i in range(40)]
        with pytest.raises(ValueError, match="product bound"):
            sum_multiplicity(fam, 4, cap=1000)

    def test_disjoint_m1_is_one(self):
        fam = [(0, 1), (3, 4), (6, 7)]
        assert sum_multiplicity(fam, 1) == 1


class TestFamilySearch:
    def test_two_intervals_forced_to_ends(self):
        fam = search_interval_family(2, 3)
        assert fam.intervals == ((F(-1, 2), F(-3, 8)), (F(3, 8), F(1, 2)))
        assert fam.meta["g"] == 3

    def test_four_intervals_reach_factorial_floor(self):
        fam = search_interval_family(4, 3)
        assert fam.meta["g"] == 6  # m! is a hard floor for distinct intervals

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_family_geometry(self, n):
        m = 3
        fam = search_interval_family(n, m, budget=800, seed=1)
        u = F(1, n ** m)
        assert len(fam) == n
        assert all(b - a == u for a, b in fam.intervals)
        assert fam.intervals[0][0] == F(-1, 2) and fam.intervals[-1][1] == F(1, 2)
        assert fam.separated_by(F(m, 2) * u)

    def test_certificate_matches_exact_evaluation(self):
        for n in (2, 4):
            fam = search_interval_family(n, 3, budget=500, seed=2)
            assert sum_multiplicity(fam, 3) == fam.meta["g"]

    def test_more_budget_never_worse(self):
        small = search_interval_family(8, 3, budget=60, seed=3)
        big = search_interval_family(8, 3, budget=1500, seed=3)
        assert big.meta["g"] <= small.meta["g"]

    def test_ordered_tuples_floor(self):
        # any m distinct intervals give m! ordered tuples with equal sums
        fam = search_interval_family(8, 3, budget=400, seed=0)
        assert fam.meta["g"] >= 6

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            search_interval_family(1, 3)
        with pytest.raises(ValueError):
            search_interval_family(4, 1)


class TestMoranSumBound:
    def test_middle_thirds_product(self):
        ms = build_moran(middle_thirds_spec(), 3)
        assert moran_sum_multiplicity_bound(ms, 2, 3) == 27

    def test_bound_dominates_exact_value(self):
        ms = build_moran(middle_thirds_spec(), 3)
        exact = sum_multiplicity(ms.intervals(3), 2)
        assert exact <= moran_sum_multiplicity_bound(ms, 2, 3)

    def test_m1_is_one(self):
        ms = build_moran(middle_thirds_spec(), 4)
        assert moran_sum_multiplicity_bound(ms, 1, 4) == 1

    def test_non_uniform_layout_rejected(self):
        def offsets(k):
            if k == 1:
                return [0, F(2, 3)]
            return [[0, F(2, 3)], [0, F(1, 2)]]

        spec = MoranSpec(n=2, c=F(1, 3), offsets=offsets)
        ms = build_moran(spec, 2)
        with pytest.raises(ValueError, match="non-uniform"):
            moran_sum_multiplicity_bound(ms, 2, 2)
        assert check_gcs(ms)["endpoint_ok"] is False


class TestConfig:
    def test_middle_thirds_from_text(self):
        spec = moran_spec_from_config("n = 2\nc = 1/3\noffsets = 0, 2/3\n")
        ms = build_moran(spec, 2)
        assert ms.intervals(1) == [(F(-1, 2), F(-1, 6)), (F(1, 6), F(1, 2))]

    def test_power_rules(self):
        spec = moran_spec_from_config("n = 2^k\nc = 2^-3k\noffsets = even\n")
        assert spec.n(3) == 8
        assert spec.c(3) == F(1, 1 << 9)
        ms = build_moran(spec, 3)
        assert ms.interval_count(3) == 64

    def test_constant_power_rule(self):
        spec = moran_spec_from_config({"n": "8", "c": "8^-3", "offsets": "searched"})
        assert spec.c(1) == F(1, 512)
        assert len(spec.offsets(2)) == 8

    def test_comment_and_blank_lines(self):
        kv = parse_keyvals("# comment\n\nn = 2 # trailing\nc = 1/3\n")
        assert kv == {"n": "2", "c": "1/3"}

    def test_missing_key(self):
        with pytest.raises(ValueError, match="missing"):
            moran_spec_from_config("n = 2\n")

    def test_malformed_line(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_keyvals("just some words\n")


def test_family_offsets_normalize_to_unit_parent():
    fam = search_interval_family(2, 3)
    assert family_offsets(fam) == [F(0), F(7, 8)]


def test_ball_count_matches_core_greedy():
    from tubelab.core import greedy_ball_cover_1d

    rng = random.Random(4)
    for _ in range(20):
        xs = sorted(F(rng.randrange(0, 200), 64) for _ in range(rng.randrange(1, 30)))
        r = F(rng.randrange(1, 20), 64)
        assert ball_count_1d(xs, r) == greedy_ball_cover_1d(xs, r)
