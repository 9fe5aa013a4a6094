"""Homogeneous Moran sets, dimension estimators, and low-energy interval families.

Moran constructions live on the base interval [-1/2, 1/2] with exact
rational endpoints. All covering-style estimators count with closed balls
(greedy left-to-right sweep, which is exactly optimal in one dimension);
window positions and radii range over dyadic values, so the supremum they
estimate is approximated within a bounded factor per scale, never exactly.
"""

from __future__ import annotations

import itertools
import math
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from tubelab.core import DyadicScale, dump_rationals

F = Fraction

BASE_LEFT = F(-1, 2)
BASE_RIGHT = F(1, 2)

_ENUM_CAP = 1 << 18  # hard cap on |F|^m tuples in exact sum sweeps


# --------------------------------------------------------------------- specs


class MoranSpec:
    """Per-level data for a Moran construction on [-1/2, 1/2].

    n(k), c(k), offsets(k) give, for level k >= 1, the child count, the
    contraction ratio, and the child placement. offsets(k) is a sorted list
    of positions in [0, 1 - c_k] as fractions of the parent length; it may
    instead be a list of such lists (one per parent, in order) for
    constructions whose layout varies within a level.
    """

    def __init__(self, n, c, offsets, label: str = ""):
        self.n = _as_level_fn(n, int)
        self.c = _as_level_fn(c, F)
        self.offsets = _offsets_fn(offsets)
        self.label = label

    def level(self, k: int):
        return self.n(k), self.c(k), self.offsets(k)

    def layouts_for(self, k: int, parent_count: int) -> list[tuple[Fraction, ...]]:
        """One offset layout per parent, expanding a uniform layout."""
        off = self.offsets(k)
        if off and isinstance(off[0], tuple):
            if len(off) != parent_count:
                raise ValueError(
                    f"level {k}: {len(off)} layouts for {parent_count} parents"
                )
            return list(off)
        return [off] * parent_count

    def uniform_level(self, k: int) -> bool:
        off = self.offsets(k)
        return not (off and isinstance(off[0], tuple))

    def validate_level(self, k: int):
        n_k, c_k = self.n(k), self.c(k)
        if n_k < 2:
            raise ValueError(f"level {k}: need n_k >= 2, got {n_k}")
        if not (0 < c_k < 1):
            raise ValueError(f"level {k}: contraction {c_k} outside (0,1)")
        if n_k * c_k >= 1:
            raise ValueError(f"level {k}: n_k * c_k = {n_k * c_k} >= 1")
        off = self.offsets(k)
        layouts = off if off and isinstance(off[0], tuple) else [off]
        for lay in layouts:
            if len(lay) != n_k:
                raise ValueError(f"level {k}: {len(lay)} offsets for n_k = {n_k}")
            if any(b <= a for a, b in zip(lay, lay[1:])):
                raise ValueError(f"level {k}: offsets not strictly sorted")
            if lay[0] < 0 or lay[-1] > 1 - c_k:
                raise ValueError(f"level {k}: offsets outside [0, 1 - c_k]")
            for a, b in zip(lay, lay[1:]):
                if b - a <= c_k:
                    raise ValueError(
                        f"level {k}: children overlap (offset gap {b - a} <= c_k = {c_k})"
                    )


def _as_level_fn(value, conv) -> Callable[[int], object]:
    if callable(value):
        return lambda k: conv(value(k))
    seq = list(value) if isinstance(value, (list, tuple)) else [value]
    if len(seq) == 1:
        item = conv(seq[0])
        return lambda k: item
    items = [conv(v) for v in seq]

    def fn(k: int):
        if k > len(items):
            raise ValueError(f"spec defines {len(items)} levels, asked for {k}")
        return items[k - 1]

    return fn


def _as_layout(value):
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
        return tuple(tuple(F(x) for x in lay) for lay in value)
    return tuple(F(x) for x in value)


def _offsets_fn(offsets) -> Callable[[int], tuple]:
    """Offsets argument: callable k -> layout (or list of per-parent layouts),
    a flat list (one layout for every level), or a list of per-level layouts."""
    if callable(offsets):
        return lambda k: _as_layout(offsets(k))
    seq = list(offsets)
    if seq and isinstance(seq[0], (list, tuple)):
        layouts = [_as_layout(lay) for lay in seq]

        def fn(k: int):
            if k > len(layouts):
                raise ValueError(f"spec defines {len(layouts)} levels of offsets, asked for {k}")
            return layouts[k - 1]

        return fn
    layout = _as_layout(seq)
    return lambda k: layout


# ---------------------------------------------------------------- moran sets


class MoranSet:
    """Interval tree of a Moran construction, materialized to generation K.

    Level k holds intervals of exact length c_1 * ... * c_k, each nested in
    its level k-1 parent. Removed gaps (the maximal open intervals of
    E_{k-1} minus E_k) and their midpoints are stored per level.
    """

    def __init__(self, spec: MoranSpec, K: int, lefts, lengths, removed, midpoints):
        self.spec = spec
        self.K = K
        self._lefts = lefts          # per level: sorted list of left endpoints
        self._lengths = lengths      # per level: common interval length
        self._removed = removed      # per level: list of (a, b) open gaps
        self._midpoints = midpoints  # per level: midpoints of those gaps

    def interval_count(self, k: int) -> int:
        self._check_level(k)
        return len(self._lefts[k])

    def length(self, k: int) -> Fraction:
        self._check_level(k)
        return self._lengths[k]

    def intervals(self, k: int) -> list[tuple[Fraction, Fraction]]:
        self._check_level(k)
        ln = self._lengths[k]
        return [(a, a + ln) for a in self._lefts[k]]

    def lefts(self, k: int) -> list[Fraction]:
        self._check_level(k)
        return list(self._lefts[k])

    def endpoints(self, k: int) -> list[Fraction]:
        """Sorted endpoints of the generation-k intervals."""
        self._check_level(k)
        ln = self._lengths[k]
        out = []
        for a in self._lefts[k]:
            out.append(a)
            out.append(a + ln)
        return sorted(set(out))

    def removed_intervals(self, k: int) -> list[tuple[Fraction, Fraction]]:
        self._check_level(k)
        if k == 0:
            return []
        return list(self._removed[k])

    def midpoints(self, k: int) -> list[Fraction]:
        self._check_level(k)
        if k == 0:
            return []
        return list(self._midpoints[k])

    def all_midpoints(self) -> list[Fraction]:
        out = []
        for k in range(1, self.K + 1):
            out.extend(self._midpoints[k])
        return sorted(out)

    def contains(self, x, k: int | None = None) -> bool:
        """Whether x lies in E_k (descent through the stored tree)."""
        k = self.K if k is None else k
        self._check_level(k)
        x = F(x)
        ln = self._lengths[k]
        lefts = self._lefts[k]
        lo, hi = 0, len(lefts) - 1
        while lo <= hi:
            mid = (lo + hi) // 2
            if x < lefts[mid]:
                hi = mid - 1
            elif x > lefts[mid] + ln:
                lo = mid + 1
            else:
                return True
        return False

    def _check_level(self, k: int):
        if not (0 <= k <= self.K):
            raise ValueError(f"generation {k} outside built depth {self.K}")


def build_moran(spec: MoranSpec, K: int, max_intervals: int = 1 << 21) -> MoranSet:
    """Materialize the construction to generation K with exact endpoints."""
    if K < 0:
        raise ValueError("K must be >= 0")
    lefts = [[BASE_LEFT]]
    lengths = [BASE_RIGHT - BASE_LEFT]
    removed = [[]]
    midpoints = [[]]
    for k in range(1, K + 1):
        spec.validate_level(k)
        n_k, c_k, _ = spec.level(k)
        parent_len = lengths[k - 1]
        child_len = parent_len * c_k
        layouts = spec.layouts_for(k, len(lefts[k - 1]))
        new_lefts, gaps, mids = [], [], []
        if len(lefts[k - 1]) * n_k > max_intervals:
            raise ValueError(f"generation {k} would exceed {max_intervals} intervals")
        for p, lay in zip(lefts[k - 1], layouts):
            child_lefts = [p + o * parent_len for o in lay]
            new_lefts.extend(child_lefts)
            # removed gaps inside this parent: end slivers (if the layout is
            # not flush) plus the gaps between consecutive children
            if lay[0] > 0:
                gaps.append((p, child_lefts[0]))
            for a, b in zip(child_lefts, child_lefts[1:]):
                gaps.append((a + child_len, b))
            right_end = p + parent_len
            if child_lefts[-1] + child_len < right_end:
                gaps.append((child_lefts[-1] + child_len, right_end))
        mids = [(a + b) / 2 for a, b in gaps]
        lefts.append(new_lefts)
        lengths.append(child_len)
        removed.append(gaps)
        midpoints.append(mids)
    return MoranSet(spec, K, lefts, lengths, removed, midpoints)


def check_gcs(m: MoranSet) -> dict:
    """End-point flushness and the per-level ratio log c_k / log(c_1...c_k).

    The ratio sequence tending to 0 is the growth condition needed for the
    convex-domain constructions; at finite depth it is reported as a trend.
    """
    endpoint_ok = True
    for k in range(1, m.K + 1):
        n_k, c_k, off = m.spec.level(k)
        layouts = off if off and isinstance(off[0], tuple) else [off]
        for lay in layouts:
            if lay[0] != 0 or lay[-1] != 1 - c_k:
                endpoint_ok = False
    ratios = []
    acc = 0.0
    for k in range(1, m.K + 1):
        c_k = m.spec.c(k)
        lc = math.log(c_k.numerator) - math.log(c_k.denominator)
        acc += lc
        ratios.append(lc / acc)
    return {"endpoint_ok": endpoint_ok, "hrww_ratio": ratios}


def box_dim_ratio(m: MoranSet, k_lo: int, K: int) -> float:
    """log(prod n_k) / -log(prod c_k) over levels k_lo..K (floats at the end)."""
    if not (1 <= k_lo <= K):
        raise ValueError("need 1 <= k_lo <= K")
    if K > m.K:
        raise ValueError(f"generation {K} beyond built depth {m.K}")
    num = 0.0
    den = 0.0
    for k in range(k_lo, K + 1):
        num += math.log(m.spec.n(k))
        c_k = m.spec.c(k)
        den -= math.log(c_k.numerator) - math.log(c_k.denominator)
    return num / den


# ------------------------------------------------------- counting machinery


def _sorted_floats(points) -> np.ndarray:
    arr = np.asarray([float(p) for p in points], dtype=np.float64)
    arr.sort()
    return arr


class BallCounter1D:
    """Greedy closed-ball cover counts over windows of one sorted point set.

    A ball of radius r placed at the leftmost uncovered point x covers
    [x, x + 2r]; the jump structure is precomputed with binary lifting so a
    batch of window queries costs O(log n) vector operations.
    """

    def __init__(self, xs: np.ndarray, r: float):
        self.xs = xs
        n = len(xs)
        self.n = n
        nxt = np.searchsorted(xs, xs + 2.0 * r, side="right")
        tables = [np.append(nxt, n).astype(np.int64)]
        while (1 << len(tables)) <= n:
            t = tables[-1]
            tables.append(t[t])
        self.tables = tables

    def counts(self, lo, hi, closed_right: bool = False) -> np.ndarray:
        """Ball counts for windows [lo, hi) (or [lo, hi] when closed_right)."""
        xs, n = self.xs, self.n
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        pos = np.searchsorted(xs, lo, side="left").astype(np.int64)
        end = np.searchsorted(xs, hi, side="right" if closed_right else "left").astype(np.int64)
        inside = pos < end
        cnt = inside.astype(np.int64)
        pos = np.where(inside, pos, n)
        for b in range(len(self.tables) - 1, -1, -1):
            cand = self.tables[b][pos]
            ok = cand < end
            pos = np.where(ok, cand, pos)
            cnt += ok.astype(np.int64) << b
        return cnt


def ball_count_1d(points, r) -> int:
    """|P|_r by the exact greedy sweep (single-window convenience wrapper)."""
    xs = _sorted_floats(points)
    if not len(xs):
        return 0
    counter = BallCounter1D(xs, float(r))
    return int(counter.counts(xs[0], xs[-1], closed_right=True)[0])


def _scale_floor_exponent(delta) -> int:
    """Largest a >= 0 with 2^-a >= delta."""
    if isinstance(delta, DyadicScale):
        return delta.k
    d = F(delta) if not isinstance(delta, float) else None
    if d is not None:
        if d <= 0 or d > 1:
            raise ValueError("delta must be in (0, 1]")
        a = 0
        while F(1, 1 << (a + 1)) >= d:
            a += 1
        return a
    if not (0 < delta <= 1):
        raise ValueError("delta must be in (0, 1]")
    a = max(0, int(math.floor(-math.log2(delta) + 1e-9)))
    while 2.0 ** -(a + 1) >= delta:
        a += 1
    while a > 0 and 2.0 ** -a < delta:
        a -= 1
    return a


def _delta_value(delta) -> float:
    if isinstance(delta, DyadicScale):
        return float(delta.delta)
    return float(delta)


class ProfileValue(float):
    """Estimator output with the counting convention recorded in .note."""

    note: str

    def __new__(cls, value: float, note: str):
        obj = super().__new__(cls, value)
        obj.note = note
        return obj


_PROFILE_NOTE = (
    "greedy closed-ball counts; dyadic radii and dyadic window positions "
    "(sup approximated within a bounded factor per scale)"
)


def _nonempty_windows(xs: np.ndarray, width: float) -> tuple[np.ndarray, np.ndarray]:
    cells = np.unique(np.floor(xs / width))
    lo = cells * width
    return lo, lo + width


def qa_profile(e, gamma: float, delta) -> ProfileValue:
    """Finite-scale profile max log|E ∩ I|_r / log(R/r).

    The max runs over dyadic r = 2^-a >= delta, dyadic R = 2^-b with
    r <= r^(1-gamma) <= R <= 1, and dyadic windows I of length R. This is
    an estimator of the gamma-profile of E, not the limit dimension.
    """
    if not (0 < gamma < 1):
        raise ValueError("gamma must lie in (0, 1)")
    xs = _sorted_floats(e)
    if not len(xs):
        raise ValueError("empty set")
    amax = _scale_floor_exponent(delta)
    if amax < 1:
        raise ValueError("scale range empty")
    best = 0.0
    for a in range(1, amax + 1):
        counter = BallCounter1D(xs, 2.0 ** -a)
        bmax = min(a - 1, int(math.floor((1.0 - gamma) * a + 1e-9)))
        for b in range(0, bmax + 1):
            lo, hi = _nonempty_windows(xs, 2.0 ** -b)
            mx = int(counter.counts(lo, hi).max())
            if mx >= 2:
                best = max(best, math.log2(mx) / (a - b))
    return ProfileValue(best, _PROFILE_NOTE)


def regularity_constant(e, s: float, delta) -> ProfileValue:
    """Minimal C with |E ∩ I|_r <= C (R/r)^s over dyadic scale pairs and windows."""
    if not (0 < s <= 1):
        raise ValueError("s must lie in (0, 1]")
    xs = _sorted_floats(e)
    if not len(xs):
        raise ValueError("empty set")
    amax = _scale_floor_exponent(delta)
    best = 0.0
    for a in range(0, amax + 1):
        counter = BallCounter1D(xs, 2.0 ** -a)
        for b in range(0, a + 1):
            lo, hi = _nonempty_windows(xs, 2.0 ** -b)
            mx = int(counter.counts(lo, hi).max())
            best = max(best, mx / 2.0 ** ((a - b) * s))
    return ProfileValue(best, _PROFILE_NOTE)


def _planar_cell_keys(pts: np.ndarray, inv_delta: float) -> np.ndarray:
    cells = np.floor(pts * inv_delta).astype(np.int64)
    return (cells[:, 0] << 32) + (cells[:, 1] + (np.int64(1) << 30))


def _planar_cell_count(pts: np.ndarray, mask: np.ndarray, inv_delta: float) -> int:
    if not mask.any():
        return 0
    return len(np.unique(_planar_cell_keys(pts[mask], inv_delta)))


def _ball_counts_planar(pts: np.ndarray, r: float, inv_delta: float) -> int:
    """Max over centers in P of the delta-cell count of P ∩ B(x, r).

    Points are pre-sorted by x so each center only examines its x-window;
    when all points occupy distinct cells the count is a plain mask sum.
    """
    order = np.argsort(pts[:, 0], kind="stable")
    p = pts[order]
    xs = p[:, 0]
    keys = _planar_cell_keys(p, inv_delta)
    all_distinct = len(np.unique(keys)) == len(p)
    r2 = r * r
    best = 0
    los = np.searchsorted(xs, xs - r, side="left")
    his = np.searchsorted(xs, xs + r, side="right")
    for i in range(len(p)):
        lo, hi = los[i], his[i]
        seg = p[lo:hi]
        mask = (seg[:, 0] - p[i, 0]) ** 2 + (seg[:, 1] - p[i, 1]) ** 2 <= r2
        if all_distinct:
            best = max(best, int(mask.sum()))
        elif mask.any():
            best = max(best, len(np.unique(keys[lo:hi][mask])))
    return best


def _is_planar(p) -> bool:
    first = next(iter(p))
    return isinstance(first, (tuple, list, np.ndarray)) and len(first) == 2


def katz_tao_constant(p, t: float, delta) -> ProfileValue:
    """Minimal C with |P ∩ B(x,r)|_δ <= C (r/δ)^t, centers in P, dyadic radii."""
    return _ball_ratio_constant(p, delta, lambda count, r, dv, tot: count * (dv / r) ** t)


def frostman_constant(p, s: float, delta) -> ProfileValue:
    """Minimal C with |P ∩ B(x,r)|_δ <= C r^s |P|_δ, centers in P, dyadic radii."""
    return _ball_ratio_constant(p, delta, lambda count, r, dv, tot: count / (r ** s * tot))


def _ball_ratio_constant(p, delta, ratio) -> ProfileValue:
    p = list(p)
    if not p:
        raise ValueError("empty set")
    amax = _scale_floor_exponent(delta)
    dv = _delta_value(delta)
    best = 0.0
    if _is_planar(p):
        pts = np.asarray([[float(a), float(b)] for a, b in p], dtype=np.float64)
        inv = 1.0 / dv
        tot = _planar_cell_count(pts, np.ones(len(pts), dtype=bool), inv)
        for a in range(0, amax + 1):
            r = 2.0 ** -a
            count = _ball_counts_planar(pts, r, inv)
            best = max(best, ratio(count, r, dv, tot))
        return ProfileValue(best, "planar dyadic-cell counts at scale delta")
    xs = _sorted_floats(p)
    counter = BallCounter1D(xs, dv)
    tot = int(counter.counts(xs[0], xs[-1], closed_right=True)[0])
    for a in range(0, amax + 1):
        r = 2.0 ** -a
        counts = counter.counts(xs - r, xs + r, closed_right=True)
        best = max(best, ratio(int(counts.max()), r, dv, tot))
    return ProfileValue(best, _PROFILE_NOTE)


# ------------------------------------------------------------ sum structure


@dataclass(frozen=True)
class IntervalFamily:
    """Sorted closed intervals with rational endpoints."""

    intervals: tuple[tuple[Fraction, Fraction], ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ivs = tuple(sorted((F(a), F(b)) for a, b in self.intervals))
        for a, b in ivs:
            if b < a:
                raise ValueError("interval with b < a")
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    def separated_by(self, gap: Fraction) -> bool:
        ivs = self.intervals
        return all(b[0] - a[1] >= gap for a, b in zip(ivs, ivs[1:]))


def sum_multiplicity(f, m: int, cap: int = _ENUM_CAP) -> int:
    """Exact max over y of the number of ordered m-tuples with y in I_1+...+I_m.

    Enumerates all |F|^m Minkowski sum intervals and sweeps their overlap;
    an enumeration larger than cap raises with a pointer to the per-level
    product bound.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    ivs = f.intervals if isinstance(f, IntervalFamily) else tuple((F(a), F(b)) for a, b in f)
    if not ivs:
        raise ValueError("empty family")
    if len(ivs) ** m > cap:
        raise ValueError(
            f"{len(ivs)}^{m} sum intervals exceed the enumeration cap; "
            "use moran_sum_multiplicity_bound for the per-level product bound"
        )
    sums = [(F(0), F(0))]
    for _ in range(m):
        sums = [(sa + a, sb + b) for sa, sb in sums for a, b in ivs]
    # closed-interval overlap sweep: opens before closes at equal coordinates
    events = []
    for a, b in sums:
        events.append((a, 0))
        events.append((b, 1))
    events.sort()
    depth = best = 0
    for _, kind in events:
        if kind == 0:
            depth += 1
            best = max(best, depth)
        else:
            depth -= 1
    return best


def _slot_sum_multiplicity(slots: Sequence[int], m: int) -> int:
    """sum_multiplicity for slot-aligned unit intervals [t, t+1], exact."""
    ts = np.asarray(sorted(slots), dtype=np.int64)
    sums = np.zeros(1, dtype=np.int64)
    for _ in range(m):
        sums = (sums[:, None] + ts[None, :]).ravel()
    # closed intervals [s, s+m]; overlap profile via difference counts
    lo = int(sums.min())
    hi = int(sums.max()) + m + 2
    diff = np.zeros(hi - lo + 1, dtype=np.int64)
    np.add.at(diff, sums - lo, 1)
    np.add.at(diff, sums - lo + m + 1, -1)
    return int(diff.cumsum().max())


def moran_sum_multiplicity_bound(m: MoranSet, mfold: int, K: int) -> int:
    """Product over levels k <= K of the m-fold sum multiplicity of the
    normalized child family; an upper bound for the full generation-K family."""
    if K > m.K:
        raise ValueError(f"generation {K} beyond built depth {m.K}")
    if mfold < 1:
        raise ValueError("m must be >= 1")
    out = 1
    for k in range(1, K + 1):
        if not m.spec.uniform_level(k):
            raise ValueError(f"level {k} has non-uniform child layouts; bound needs one layout per level")
        n_k, c_k, off = m.spec.level(k)
        fam = [(o, o + c_k) for o in off]
        out *= sum_multiplicity(fam, mfold)
    return out


# ------------------------------------------------------------- family search


def search_interval_family(n: int, m: int, budget: int = 4000, seed: int = 0) -> IntervalFamily:
    """N closed slot intervals of length N^-m in [-1/2, 1/2] with small m-fold
    sum multiplicity.

    The family always contains the two end intervals, and consecutive
    intervals keep distance >= (m/2) N^-m (slot gaps of ceil(m/2)). Candidate
    slot patterns come from perturbed progressions plus seeded random
    restarts; for small N the interior slots are enumerated exhaustively.
    The achieved multiplicity is certified by exact evaluation and stored in
    meta["g"]; more budget never worsens it.
    """
    if m < 2 or n < 2:
        raise ValueError("need m >= 2 and n >= 2")
    if F(n, n ** m) * (F(m, 2) + 1) > 1:
        raise ValueError("infeasible geometry: intervals plus gaps exceed the base interval")
    slots = n ** m
    gap = 1 + (m + 1) // 2  # consecutive slot distance; interval distance >= ceil(m/2) slots
    last = slots - 1
    if (n - 1) * gap > last:
        raise ValueError("infeasible geometry: slot gaps do not fit")

    rng = random.Random(seed)
    evals = 0
    best_ts: tuple[int, ...] | None = None
    best_g: int | None = None

    def valid(ts: Sequence[int]) -> bool:
        return (
            ts[0] == 0
            and ts[-1] == last
            and len(set(ts)) == n
            and all(b - a >= gap for a, b in zip(ts, ts[1:]))
        )

    def evaluate(ts: Sequence[int]) -> int:
        nonlocal evals, best_ts, best_g
        evals += 1
        g = _slot_sum_multiplicity(ts, m)
        if best_g is None or g < best_g:
            best_g, best_ts = g, tuple(ts)
        return g

    # deterministic openers: even progression plus quadratic perturbations
    base = [round(i * last / (n - 1)) for i in range(n)]
    for c in (0, 1, 2, 3):
        cand = _repair_slots([base[i] + c * i * i for i in range(n)], n, gap, last)
        if valid(cand) and evals < budget:
            evaluate(cand)

    if n == 2:
        pass  # endpoints force the family
    elif (last - 1) <= 64 and math.comb(last - 1, n - 2) <= max(budget, 1):
        for interior in itertools.combinations(range(1, last), n - 2):
            if evals >= budget:
                break
            cand = (0, *interior, last)
            if valid(cand):
                evaluate(cand)
    else:
        while evals < budget:
            interior = sorted(rng.sample(range(1, last), n - 2))
            cur = _repair_slots([0, *interior, last], n, gap, last)
            cur_g = evaluate(cur)
            improved = True
            while improved and evals < budget:
                improved = False
                for idx in range(1, n - 1):
                    for step in (-2, -1, 1, 2):
                        trial = list(cur)
                        trial[idx] += step
                        tt = tuple(trial)
                        if not valid(tt):
                            continue
                        g = evaluate(tt)
                        if g < cur_g:
                            cur, cur_g = tt, g
                            improved = True
                        if evals >= budget:
                            break
                    if evals >= budget:
                        break

    if best_ts is None:
        # budget exhausted before any candidate: take the guaranteed repair
        best_ts = _repair_slots(base, n, gap, last)
        best_g = _slot_sum_multiplicity(best_ts, m)

    u = F(1, slots)
    intervals = tuple((BASE_LEFT + t * u, BASE_LEFT + (t + 1) * u) for t in best_ts)
    return IntervalFamily(
        intervals,
        meta={"N": n, "m": m, "g": int(best_g), "slots": list(best_ts), "seed": seed, "separated": True},
    )


def _repair_slots(ts: Sequence[int], n: int, gap: int, last: int) -> tuple[int, ...]:
    """Round a slot pattern to a valid one: sorted, gapped, endpoints pinned."""
    ts = sorted(ts)
    out = [0]
    for t in ts[1:-1]:
        # keep room for the slots still to come, each needing one gap
        bound = last - gap * (n - 1 - len(out))
        out.append(max(out[-1] + gap, min(t, bound)))
    out.append(last)
    if len(out) != n or any(b - a < gap for a, b in zip(out, out[1:])):
        # spread evenly as a last resort
        out = [0] + [gap * i for i in range(1, n - 1)] + [last]
    return tuple(out)


def family_offsets(fam: IntervalFamily) -> list[Fraction]:
    """Offsets (parent-relative child positions) realizing the family on [0, 1]."""
    return [a - BASE_LEFT for a, _ in fam.intervals]


# ------------------------------------------------------------------ factories

_FAMILY_CACHE: dict[tuple, IntervalFamily] = {}


def cached_family(n: int, m: int, budget: int = 4000, seed: int = 0) -> IntervalFamily:
    key = (n, m, budget, seed)
    if key not in _FAMILY_CACHE:
        _FAMILY_CACHE[key] = search_interval_family(n, m, budget=budget, seed=seed)
    return _FAMILY_CACHE[key]


def middle_thirds_spec() -> MoranSpec:
    return MoranSpec(n=2, c=F(1, 3), offsets=[0, F(2, 3)], label="middle-thirds")


def constant_branch_spec(n: int, m: int = 3, budget: int = 4000, seed: int = 0) -> MoranSpec:
    """n children per level, contraction n^-m, layout from the searched family."""
    off = family_offsets(cached_family(n, m, budget, seed))
    return MoranSpec(n=n, c=F(1, n ** m), offsets=off, label=f"constant-branch({n},{m})")


def doubling_branch_spec(m: int = 3, budget: int = 4000, seed: int = 0) -> MoranSpec:
    """2^k children at level k, contraction 2^-mk, per-level searched layouts."""

    def n_fn(k: int) -> int:
        return 1 << k

    def c_fn(k: int) -> Fraction:
        return F(1, 1 << (m * k))

    def off_fn(k: int):
        return family_offsets(cached_family(1 << k, m, budget, seed))

    return MoranSpec(n=n_fn, c=c_fn, offsets=off_fn, label=f"doubling-branch(m={m})")


# ------------------------------------------------------------------- config


def parse_keyvals(text: str) -> dict[str, str]:
    """'key = value' lines; '#' comments and blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


_POWER_RULE = re.compile(r"^(\d+)\^(-?)(\d*)k$")
_CONST_POWER = re.compile(r"^(\d+)\^(-?\d+)$")


def _rule_fn(expr: str):
    """Closed-form sequence rule: '2', '1/3', '2^k', '2^-3k', '8^-3', or a
    comma list of values indexed by level."""
    expr = expr.strip()
    mt = _POWER_RULE.match(expr)
    if mt:
        base = int(mt.group(1))
        coef = int(mt.group(3) or 1) * (-1 if mt.group(2) else 1)
        return lambda k: F(base) ** (coef * k)
    mt = _CONST_POWER.match(expr)
    if mt:
        val = F(int(mt.group(1))) ** int(mt.group(2))
        return lambda k: val
    if "," in expr:
        items = [F(part.strip()) for part in expr.split(",")]
        return _as_level_fn(items, F)
    val = F(expr)
    return lambda k: val


def moran_spec_from_config(source) -> MoranSpec:
    """Build a MoranSpec from config text or a parsed mapping.

    Keys: n, c (closed-form rules or comma lists), offsets (comma list of
    fractions, 'even', or 'searched'), optional m / budget / seed for the
    searched layout.
    """
    kv = parse_keyvals(source) if isinstance(source, str) else dict(source)
    for key in ("n", "c"):
        if key not in kv:
            raise ValueError(f"config missing '{key}'")
    n_rule = _rule_fn(kv["n"])
    c_rule = _rule_fn(kv["c"])

    def n_fn(k: int) -> int:
        val = n_rule(k)
        if val != int(val):
            raise ValueError(f"n rule gave non-integer {val} at level {k}")
        return int(val)

    mode = kv.get("offsets", "even").strip()
    if mode == "even":
        def off_fn(k: int):
            n_k, c_k = n_fn(k), F(c_rule(k))
            step = (1 - c_k) / (n_k - 1)
            return [i * step for i in range(n_k)]
    elif mode == "searched":
        m = int(kv.get("m", 3))
        budget = int(kv.get("budget", 4000))
        seed = int(kv.get("seed", 0))

        def off_fn(k: int):
            return family_offsets(cached_family(n_fn(k), m, budget, seed))
    else:
        fixed = [F(part.strip()) for part in mode.split(",")]

        def off_fn(k: int):
            return fixed

    return MoranSpec(n=n_fn, c=c_rule, offsets=off_fn, label=kv.get("label", "config"))


def dump_set(values) -> str:
    """Sorted rational list, one 'num/den' per line (export format)."""
    return dump_rationals(values)
