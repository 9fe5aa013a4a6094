"""Rich-point counting, incidence ratios, and the saturating construction."""

import math
import random
from collections import Counter
from fractions import Fraction as F

import numpy as np
import pytest

from tubelab.core import (
    BOX_UNIT,
    CellSet,
    DyadicScale,
    DyadicTube,
    OrdinaryTube,
    rasterize_tube,
)
from tubelab.incidence import (
    IncidenceRatio,
    RichPointSet,
    TubeFamily,
    _offset_range,
    cantor_slope_family,
    incidence_profile,
    rich_points,
    sharp_example,
    verify_incidence_bound,
)
from tubelab.setgen import regularity_constant

LOG2_3 = math.log(2) / math.log(3)


def _random_family(rng, k, n_tubes):
    seen = set()
    while len(seen) < n_tubes:
        i = rng.randrange(-(1 << k), 1 << k)
        j = rng.randrange(-(1 << k) - 2, (1 << k) + 2)
        seen.add((i, j))
    return TubeFamily.of([DyadicTube(k, i, j) for i, j in sorted(seen)])


def _brute_counts(family):
    """O(|cells| * |tubes|) oracle: per-tube rasterization into a Counter."""
    c = Counter()
    for t in family.tubes:
        for i, j in map(tuple, rasterize_tube(t, family.scale, BOX_UNIT).idx):
            c[(int(i), int(j))] += 1
    return c


class TestTubeFamily:
    def test_of_infers_scale(self):
        fam = TubeFamily.of([DyadicTube(4, 1, 0), DyadicTube(4, -3, 2)])
        assert fam.scale == DyadicScale(4)
        assert len(fam) == 2

    def test_slope_multiset_keeps_repeats(self):
        fam = TubeFamily.of([DyadicTube(3, 2, 0), DyadicTube(3, 2, 5), DyadicTube(3, -1, 0)])
        assert sorted(fam.slopes()) == [F(-1, 8), F(1, 4), F(1, 4)]
        assert fam.slope_set() == [F(-1, 8), F(1, 4)]

    def test_dual_points(self):
        fam = TubeFamily.of([DyadicTube(3, 2, -5)])
        assert fam.dual_points() == [(F(1, 4), F(-5, 8))]

    def test_mixed_scales_rejected(self):
        with pytest.raises(ValueError, match="mixed"):
            TubeFamily(DyadicScale(4), (DyadicTube(4, 0, 0), DyadicTube(5, 0, 0)))

    def test_non_tube_rejected(self):
        with pytest.raises(TypeError):
            TubeFamily(DyadicScale(4), (object(),))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            TubeFamily.of([])


class TestRichPoints:
    def test_single_tube_threshold_one_is_its_raster(self):
        rng = random.Random(7)
        for _ in range(10):
            k = rng.choice([3, 4, 5])
            t = DyadicTube(k, rng.randrange(-(1 << k), 1 << k), rng.randrange(-3, 1 << k))
            rp = rich_points(TubeFamily.of([t]), 1)
            assert rp.cells == rasterize_tube(t, DyadicScale(k), BOX_UNIT)
            assert (rp.counts == 1).all()

    def test_disjoint_parallel_pair_has_no_double_points(self):
        fam = TubeFamily.of([DyadicTube(4, 3, 0), DyadicTube(4, 3, 8)])
        assert len(rich_points(fam, 2)) == 0
        assert len(rich_points(fam, 1)) > 0

    def test_bush_through_origin(self):
        k = 4
        tubes = [DyadicTube(k, i, 0) for i in range(-(1 << k), 1 << k)]
        fam = TubeFamily.of(tubes)
        rp = rich_points(fam, len(tubes))
        assert len(rp) >= 1
        assert (0, 0) in rp.cells
        assert rp.multiplicity((0, 0)) == len(tubes)

    def test_threshold_must_be_positive(self):
        fam = TubeFamily.of([DyadicTube(3, 0, 0)])
        with pytest.raises(ValueError, match="r must be"):
            rich_points(fam, 0)

    def test_monotone_in_threshold(self):
        fam = _random_family(random.Random(3), 5, 30)
        prev = None
        for r in range(1, 8):
            cells = {tuple(c) for c in rich_points(fam, r).cells.idx}
            if prev is not None:
                assert cells <= prev
            prev = cells

    def test_multiplicity_conservation_is_exact(self):
        for seed in range(5):
            fam = _random_family(random.Random(seed), 6, 40)
            total = rich_points(fam, 1).total_multiplicity()
            by_tube = sum(
                len(rasterize_tube(t, fam.scale, BOX_UNIT)) for t in fam.tubes
            )
            assert total == by_tube

    def test_multiplicity_lookup_matches_oracle(self):
        fam = _random_family(random.Random(11), 5, 25)
        oracle = _brute_counts(fam)
        rp = rich_points(fam, 1)
        for cell, count in oracle.items():
            assert rp.multiplicity(cell) == count
        assert rp.multiplicity((1 << 5, 0)) == 0
        assert rp.multiplicity((0, -1)) == 0

    def test_brute_force_equivalence_fifty_trials(self):
        for seed in range(50):
            rng = random.Random(1000 + seed)
            fam = _random_family(rng, 6, rng.randrange(1, 65))
            oracle = _brute_counts(fam)
            rp = rich_points(fam, 1)
            got = {
                (int(i), int(j)): int(c)
                for (i, j), c in zip(rp.cells.idx, rp.counts)
            }
            assert got == dict(oracle)

    def test_ordinary_tube_family_counts(self):
        tubes = [
            OrdinaryTube(F(3, 4), F(1, 2), F(1, 2), F(1, 16)),
            OrdinaryTube(F(-1, 2), F(1, 2), F(1, 2), F(1, 16)),
        ]
        fam = TubeFamily(DyadicScale(5), tuple(tubes))
        rp = rich_points(fam, 1)
        oracle = _brute_counts(fam)
        got = {
            (int(i), int(j)): int(c) for (i, j), c in zip(rp.cells.idx, rp.counts)
        }
        assert got == dict(oracle)
        assert rp.multiplicity((16, 16)) == 2  # both pass through the center

    def test_misaligned_counts_rejected(self):
        cs = CellSet(3, [(0, 0), (1, 1)])
        with pytest.raises(ValueError, match="misaligned"):
            RichPointSet(1, cs, np.array([1]))


class TestOffsetRange:
    def test_characterizes_nonempty_rasters_exactly(self):
        k = 4
        d = F(1, 1 << k)
        scale = DyadicScale(k)
        for i in range(-(1 << k), 1 << k):
            j_lo, j_hi = _offset_range(F(i, 1 << k), d, BOX_UNIT)
            assert j_lo <= j_hi
            for j in range(j_lo - 2, j_hi + 3):
                nonempty = len(rasterize_tube(DyadicTube(k, i, j), scale, BOX_UNIT)) > 0
                assert nonempty == (j_lo <= j <= j_hi), (i, j)


class TestVerifyIncidenceBound:
    def test_parameter_validation(self):
        fam = TubeFamily.of([DyadicTube(4, 0, 0)])
        with pytest.raises(ValueError, match="s must"):
            verify_incidence_bound(fam, 0.3, 1)
        with pytest.raises(ValueError, match="s must"):
            verify_incidence_bound(fam, 1.2, 1)
        with pytest.raises(ValueError, match="r must"):
            verify_incidence_bound(fam, 1.0, 0)

    def test_threshold_beyond_family_size_gives_zero(self):
        fam = TubeFamily.of([DyadicTube(4, 0, 0), DyadicTube(4, 1, 0)])
        assert float(verify_incidence_bound(fam, 1.0, 3)) == 0.0

    def test_universal_bound_at_threshold_one(self):
        # every tube occupies at most 3/delta cells of the unit square and
        # both constants are at least 1, so rho(1) <= 3 for any family
        for seed in range(8):
            rng = random.Random(seed)
            fam = _random_family(rng, 5, rng.randrange(1, 30))
            v = verify_incidence_bound(fam, rng.choice([0.5, 0.7, 1.0]), 1)
            assert float(v) <= 3.0
            assert v.details["c_kt"] >= 1.0
            assert v.details["c_reg"] >= 1.0

    def test_dense_families_stay_below_one_at_threshold_one(self):
        for seed in range(3):
            fam = cantor_slope_family(0.5, DyadicScale(8), seed=seed)
            assert float(verify_incidence_bound(fam, 0.5, 1)) <= 1.0

    def test_details_payload(self):
        fam = TubeFamily.of([DyadicTube(4, 1, 2), DyadicTube(4, 1, 3)])
        v = verify_incidence_bound(fam, 0.5, 1)
        assert isinstance(v, IncidenceRatio)
        assert v.details["tubes"] == 2
        assert v.details["r"] == 1
        assert v.details["s"] == 0.5
        assert v.details["rich_cells"] == len(rich_points(fam, 1))

    def test_profile_matches_single_verifications(self):
        fam = cantor_slope_family(0.5, DyadicScale(6), seed=2)
        prof = incidence_profile(fam, 0.5)
        assert [v.details["r"] for v in prof] == [1, 2, 4, 8][: len(prof)]
        for v in prof:
            single = verify_incidence_bound(fam, 0.5, v.details["r"])
            assert float(v) == float(single)
            assert v.details == single.details

    def test_profile_default_thresholds_cover_max_multiplicity(self):
        fam = TubeFamily.of([DyadicTube(4, i, 0) for i in range(-8, 8)])
        prof = incidence_profile(fam, 1.0)
        rs = [v.details["r"] for v in prof]
        top = int(rich_points(fam, 1).counts.max())
        assert rs == [2**t for t in range(len(rs))]
        assert rs[-1] <= top < 2 * rs[-1]

    def test_profile_custom_thresholds(self):
        fam = TubeFamily.of([DyadicTube(4, 0, 0)])
        prof = incidence_profile(fam, 1.0, rs=[1, 3])
        assert [v.details["r"] for v in prof] == [1, 3]
        with pytest.raises(ValueError, match="r must be"):
            incidence_profile(fam, 1.0, rs=[0])


class TestSharpExample:
    DELTA = DyadicScale(10)

    @pytest.mark.parametrize("r", [4, 16, 64])
    def test_tube_count_within_factor_four(self, r):
        ex = sharp_example(0.5, self.DELTA, r)
        target = r * 2.0**5  # r * delta^(s-1)
        assert target / 4 <= len(ex.family) <= target * 4
        assert ex.meta["predicted_tubes"] == pytest.approx(target)

    @pytest.mark.parametrize("r", [4, 16, 64])
    def test_every_slab_cell_is_rich(self, r):
        ex = sharp_example(0.5, self.DELTA, r)
        rp = rich_points(ex.family, r)
        n = 1 << self.DELTA.k
        cols, rows = int(ex.rect.x1 * n), int(ex.rect.y1 * n)
        assert cols >= 1 and rows >= 1
        for i in range(cols):
            for j in range(rows):
                assert rp.multiplicity((i, j)) >= r

    @pytest.mark.parametrize("r", [4, 16, 64])
    def test_rich_cell_count_lower_bound(self, r):
        ex = sharp_example(0.5, self.DELTA, r)
        rich = len(rich_points(ex.family, r))
        assert rich >= (1 / 64) * 2.0 ** (10 * 1.5) / r

    @pytest.mark.parametrize("r", [4, 16, 64])
    def test_ratio_stays_above_one_sixtyfourth(self, r):
        ex = sharp_example(0.5, self.DELTA, r)
        assert float(verify_incidence_bound(ex.family, 0.5, r)) >= 1 / 64

    def test_slope_set_is_centered_arithmetic_progression(self):
        r = 16
        ex = sharp_example(0.5, self.DELTA, r)
        sep = ex.meta["theta_separation"]
        assert sep == F(1, 32)  # 2^-floor(s*k), here delta^s exactly
        assert ex.family.slope_set() == [(t - r // 2) * sep for t in range(r)]
        assert ex.meta["arc_length"] == r * sep

    @pytest.mark.parametrize("r", [4, 16, 64])
    def test_slope_regularity_bound(self, r):
        ex = sharp_example(0.5, self.DELTA, r)
        c = regularity_constant(ex.family.slope_set(), 0.5, self.DELTA)
        assert float(c) <= 8 * r**0.5

    def test_precondition_flags(self):
        assert sharp_example(0.5, self.DELTA, 16).meta["strict_r_precondition"]
        assert sharp_example(0.5, self.DELTA, 16).meta["thinness_condition"]
        wide = sharp_example(0.5, self.DELTA, 64)
        assert not wide.meta["strict_r_precondition"]
        assert not wide.meta["thinness_condition"]
        assert wide.meta["slab_height_factor"] == F(1, 4)

    def test_small_scale_against_brute_force(self):
        ex = sharp_example(0.5, DyadicScale(6), 4)
        oracle = _brute_counts(ex.family)
        n = 1 << 6
        for i in range(int(ex.rect.x1 * n)):
            for j in range(int(ex.rect.y1 * n)):
                assert oracle[(i, j)] >= 4

    def test_parameter_errors_name_the_inequality(self):
        with pytest.raises(ValueError, match="s must"):
            sharp_example(0.3, self.DELTA, 4)
        with pytest.raises(ValueError, match="s must"):
            sharp_example(1.0, self.DELTA, 4)
        with pytest.raises(ValueError, match="r >= 1"):
            sharp_example(0.5, self.DELTA, 0)
        with pytest.raises(ValueError, match="exceeds"):
            sharp_example(0.5, self.DELTA, 65)
        with pytest.raises(ValueError, match="do not fit"):
            sharp_example(0.55, self.DELTA, 80)


class TestCantorSlopeFamily:
    def test_slope_count_follows_dimension(self):
        for k, s in [(6, 0.5), (8, 0.5), (8, LOG2_3), (6, 1.0)]:
            fam = cantor_slope_family(s, DyadicScale(k), per_slope=1)
            assert len(fam.slope_set()) == 2 ** math.floor(k * s)
            assert len(fam) == len(fam.slope_set())

    def test_slopes_use_only_allowed_binary_digits(self):
        k, s = 8, 0.5
        fam = cantor_slope_family(s, DyadicScale(k), per_slope=2, seed=5)
        mask = sum(
            1 << (k - i)
            for i in range(1, k + 1)
            if math.floor(i * s) > math.floor((i - 1) * s)
        )
        for t in fam.tubes:
            assert t.i >= 0
            assert t.i & ~mask == 0

    def test_per_slope_count_is_exact(self):
        fam = cantor_slope_family(0.5, DyadicScale(6), per_slope=3, seed=1)
        per = Counter(t.i for t in fam.tubes)
        assert set(per.values()) == {3}

    def test_deterministic_under_seed(self):
        a = cantor_slope_family(0.7, DyadicScale(7), seed=9)
        b = cantor_slope_family(0.7, DyadicScale(7), seed=9)
        c = cantor_slope_family(0.7, DyadicScale(7), seed=10)
        assert a.tubes == b.tubes
        assert a.tubes != c.tubes

    def test_all_tubes_meet_unit_square(self):
        fam = cantor_slope_family(0.5, DyadicScale(6), seed=3)
        for t in fam.tubes:
            assert len(rasterize_tube(t, fam.scale, BOX_UNIT)) > 0

    def test_invalid_dimension_rejected(self):
        with pytest.raises(ValueError, match="s must"):
            cantor_slope_family(0.0, DyadicScale(6))
        with pytest.raises(ValueError, match="s must"):
            cantor_slope_family(1.2, DyadicScale(6))


class TestIncidenceSweep:
    def test_random_cantor_families_stay_polylog(self):
        # the headline upper bound, spot-checked at one scale per dimension
        k = 8
        bound = 2.0 ** (k * 0.2)
        for s in (LOG2_3, 0.5, 0.7):
            fam = cantor_slope_family(s, DyadicScale(k), seed=0)
            prof = incidence_profile(fam, s)
            assert max(float(v) for v in prof) <= bound
