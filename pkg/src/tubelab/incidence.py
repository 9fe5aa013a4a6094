"""Rich points of tube families and incidence-bound measurements.

A cell of the delta-grid in [0,1]^2 is r-rich for a family when at least r
tubes rasterize onto it. Multiplicities are exact 64-bit counts accumulated
column-wise (difference arrays along rows, summed once at the end), which
reproduces per-tube rasterization cell for cell.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from tubelab.core import (
    BOX_UNIT,
    Box,
    CellSet,
    DyadicScale,
    DyadicTube,
    OrdinaryTube,
    rasterize_tube,
)
from tubelab.setgen import katz_tao_constant, regularity_constant

F = Fraction


@dataclass(frozen=True)
class TubeFamily:
    """Same-scale tube collection with its slope multiset."""

    scale: DyadicScale
    tubes: tuple

    def __post_init__(self):
        for t in self.tubes:
            if isinstance(t, DyadicTube):
                if t.k != self.scale.k:
                    raise ValueError("mixed tube scales in one family")
            elif not isinstance(t, OrdinaryTube):
                raise TypeError(f"not a tube: {t!r}")

    def __len__(self):
        return len(self.tubes)

    def slopes(self) -> list[Fraction]:
        """Slope multiset (one entry per tube, repeats kept)."""
        return [t.slope for t in self.tubes]

    def slope_set(self) -> list[Fraction]:
        return sorted(set(self.slopes()))

    def dual_points(self) -> list[tuple[Fraction, Fraction]]:
        """Lower corners of the dual squares, one point per tube."""
        return [(t.slope, t.offset) for t in self.tubes]

    @staticmethod
    def of(tubes) -> "TubeFamily":
        tubes = tuple(tubes)
        if not tubes:
            raise ValueError("empty family")
        k = tubes[0].k
        return TubeFamily(DyadicScale(k), tubes)


class RichPointSet:
    """Cells whose tube multiplicity reaches the threshold."""

    def __init__(self, threshold: int, cells: CellSet, counts: np.ndarray):
        if len(counts) != len(cells):
            raise ValueError("counts misaligned with cells")
        self.threshold = threshold
        self.cells = cells
        self.counts = np.asarray(counts, dtype=np.int64)

    def __len__(self):
        return len(self.cells)

    def multiplicity(self, cell) -> int:
        i, j = int(cell[0]), int(cell[1])
        idx = self.cells.idx
        lo = int(np.searchsorted(idx[:, 0], i, side="left"))
        hi = int(np.searchsorted(idx[:, 0], i, side="right"))
        col = idx[lo:hi, 1]
        p = int(np.searchsorted(col, j))
        if p < len(col) and int(col[p]) == j:
            return int(self.counts[lo + p])
        return 0

    def total_multiplicity(self) -> int:
        return int(self.counts.sum())


def _multiplicity_grid(family: TubeFamily) -> np.ndarray:
    """Exact per-cell tube counts over [0,1)^2 at the family scale."""
    k = family.scale.k
    n = 1 << k
    if all(isinstance(t, DyadicTube) for t in family.tubes):
        diff = np.zeros(n * (n + 1), dtype=np.int64)
        m = np.arange(n, dtype=np.int64)
        base = m * (n + 1)
        for t in family.tubes:
            a, b = t.i, t.j
            v1, v2, v3, v4 = a * m, (a + 1) * m, a * (m + 1), (a + 1) * (m + 1)
            lo_u = np.minimum(np.minimum(v1, v2), np.minimum(v3, v4)) + (b << k)
            up_u = np.maximum(np.maximum(v1, v2), np.maximum(v3, v4)) + ((b + 1) << k)
            lo = np.clip(lo_u >> k, 0, n)
            hi = np.clip(-((-up_u) >> k), 0, n)
            sel = hi > lo
            np.add.at(diff, base[sel] + lo[sel], 1)
            np.add.at(diff, base[sel] + hi[sel], -1)
        grid = diff.reshape(n, n + 1).cumsum(axis=1)[:, :n]
        return grid
    # fallback for ordinary tubes: accumulate per-tube rasters
    grid = np.zeros((n, n), dtype=np.int64)
    for t in family.tubes:
        cs = rasterize_tube(t, family.scale, BOX_UNIT)
        if len(cs):
            grid[cs.idx[:, 0], cs.idx[:, 1]] += 1
    return grid


def rich_points(family: TubeFamily, r: int) -> RichPointSet:
    """Cells of [0,1)^2 at scale delta covered by at least r tubes."""
    if r < 1:
        raise ValueError("threshold r must be >= 1")
    grid = _multiplicity_grid(family)
    mask = grid >= r
    idx = np.argwhere(mask)
    counts = grid[mask]
    order = np.lexsort((idx[:, 1], idx[:, 0]))
    return RichPointSet(r, CellSet(family.scale.k, idx[order]), counts[order])


class IncidenceRatio(float):
    """The measured ratio with its ingredients kept in .details."""

    details: dict

    def __new__(cls, value: float, details: dict):
        obj = super().__new__(cls, value)
        obj.details = details
        return obj


def _family_constants(family: TubeFamily, s: float) -> tuple[float, float]:
    c_kt = float(katz_tao_constant(family.dual_points(), 1.0, family.scale))
    c_reg = float(regularity_constant(family.slope_set(), s, family.scale))
    return c_kt, c_reg


def _rho(family: TubeFamily, s: float, r: int, rich: int, c_kt: float, c_reg: float) -> IncidenceRatio:
    inv_delta = float(1 / family.scale.delta)
    value = rich * r ** ((s + 1.0) / s) / ((c_kt * c_reg) ** (1.0 / s) * inv_delta * len(family))
    return IncidenceRatio(
        value,
        {
            "rich_cells": rich,
            "c_kt": c_kt,
            "c_reg": c_reg,
            "tubes": len(family),
            "r": r,
            "s": s,
        },
    )


def verify_incidence_bound(family: TubeFamily, s: float, r: int) -> IncidenceRatio:
    """rho = |P_r|_delta * r^((s+1)/s) / ((C_KT * C_reg)^(1/s) * delta^-1 |F|).

    C_KT is the Katz-Tao constant of the family's dual points at exponent 1;
    C_reg the regularity constant of the slope set at exponent s. The
    incidence bound predicts rho = O(delta^-eps) for admissible families;
    r beyond the family size gives rho = 0 (no cell can be that rich).
    """
    if not (0.5 <= s <= 1.0):
        raise ValueError("s must lie in [1/2, 1]")
    if r < 1:
        raise ValueError("threshold r must be >= 1")
    c_kt, c_reg = _family_constants(family, s)
    rich = int((_multiplicity_grid(family) >= r).sum())
    return _rho(family, s, r, rich, c_kt, c_reg)


def incidence_profile(family: TubeFamily, s: float, rs=None) -> list[IncidenceRatio]:
    """verify_incidence_bound swept over thresholds with shared setup.

    Default thresholds are the powers of two up to the maximum cell
    multiplicity. The multiplicity grid and the two constants are computed
    once, so a sweep costs little more than a single verification.
    """
    if not (0.5 <= s <= 1.0):
        raise ValueError("s must lie in [1/2, 1]")
    grid = _multiplicity_grid(family)
    top = int(grid.max()) if grid.size else 0
    if rs is None:
        rs = []
        r = 1
        while r <= max(top, 1):
            rs.append(r)
            r *= 2
    c_kt, c_reg = _family_constants(family, s)
    out = []
    for r in rs:
        if r < 1:
            raise ValueError("threshold r must be >= 1")
        rich = int((grid >= r).sum())
        out.append(_rho(family, s, int(r), rich, c_kt, c_reg))
    return out


@dataclass(frozen=True)
class SharpExample:
    """Family whose rich-point count meets the incidence bound's shape."""

    family: TubeFamily
    rect: Box          # every cell of this rectangle is r-rich by construction
    richness: int
    meta: dict = field(compare=False, default_factory=dict)


def sharp_example(s: float, delta: DyadicScale, r: int) -> SharpExample:
    """Direction-sparse family saturating the rich-point count.

    Slopes are r consecutive multiples (centered at 0) of the dyadic step
    nearest delta^s from above; each slope carries every offset whose tube
    meets the slab P = [0, 1/r] x [0, c*delta^s]. Every point of P lies in
    one tube per slope, so every cell of P is r-rich. Tube count is
    comparable to r * delta^(s-1).
    """
    if not (0.5 <= s < 1.0):
        raise ValueError("s must lie in [1/2, 1)")
    k = delta.k
    d = delta.delta
    if r < 1:
        raise ValueError("need r >= 1")
    if r > 2 * 2.0 ** (k * s):
        raise ValueError(f"r = {r} exceeds 2 * delta^-s = {2 * 2.0 ** (k * s):.1f}")
    strict_r_ok = r <= 2.0 ** (k * s)
    # paper-style thinness condition delta^(-s(1-s)) >= r^(1-s); recorded, not fatal
    thin_ok = 2.0 ** (k * s * (1.0 - s)) >= r ** (1.0 - s)

    sep_exp = math.floor(s * k)  # separation 2^-sep_exp >= delta^s
    step = 1 << (k - sep_exp)    # slope-index step
    slope_idx = [(t - r // 2) * step for t in range(r)]
    if slope_idx[0] < -(1 << k) or slope_idx[-1] >= (1 << k):
        raise ValueError(
            f"r = {r} directions at separation 2^-{sep_exp} do not fit in [-1, 1)"
        )

    c = F(1, 4)
    x_hi = F(1, r)
    for _ in range(10):
        rect = Box.of(0, 0, x_hi, c * F(2) ** (-sep_exp))
        tubes = []
        ok = True
        for i in slope_idx:
            a = F(i, 1 << k)
            j_lo, j_hi = _offset_range(a, d, rect)
            # coverage check at both x ends: lowest tube below 0, highest above top
            for x in (rect.x0, rect.x1):
                if a * x + j_lo * d > 0 or (a + d) * x + (j_hi + 1) * d < rect.y1:
                    ok = False
            tubes.extend(DyadicTube(k, i, j) for j in range(j_lo, j_hi + 1))
        if ok:
            break
        c /= 2
    else:
        raise ValueError("could not certify slab coverage")

    family = TubeFamily(delta, tuple(tubes))
    return SharpExample(
        family,
        rect,
        r,
        meta={
            "predicted_tubes": r * 2.0 ** (k * (1.0 - s)),
            "slab_height_factor": c,
            "theta_separation": F(2) ** (-sep_exp),
            "arc_length": r * F(2) ** (-sep_exp),
            "strict_r_precondition": strict_r_ok,
            "thinness_condition": thin_ok,
        },
    )


def _offset_range(a: Fraction, d: Fraction, rect: Box) -> tuple[int, int]:
    """Offset indices whose tube hull overlaps rect with positive length.

    The offset-free parts of the hull envelopes are concave (lower) and
    convex (upper), so their extremes over the x-range sit at the endpoints.
    Strict inequalities exclude tubes that only graze the rect boundary, so
    every index in the range rasterizes to at least one cell inside rect.
    """
    ends = (rect.x0, rect.x1)
    lo_env = min(min(a * x, (a + d) * x) for x in ends)
    up_env = max(max(a * x, (a + d) * x) for x in ends)
    # overlaps iff lower env + j*d < y1 somewhere and upper env + (j+1)*d > y0
    j_lo = math.floor((rect.y0 - up_env) / d)
    j_hi = math.ceil((rect.y1 - lo_env) / d) - 1
    return j_lo, j_hi


def cantor_slope_indices(s: float, k: int) -> list[int]:
    """Digit-restricted (Cantor-like) slope indices at scale 2^-k.

    Binary digits are free exactly at positions i <= k where floor(i*s)
    increments, giving 2^floor(k*s) indices in [0, 2^k) that form a
    (delta, s, O(1))-regular set of slopes.
    """
    if not (0 < s <= 1):
        raise ValueError("s must lie in (0, 1]")
    free = [i for i in range(1, k + 1) if math.floor(i * s) > math.floor((i - 1) * s)]
    slopes = [0]
    for i in free:
        bit = 1 << (k - i)
        slopes = slopes + [v + bit for v in slopes]
    return sorted(slopes)


def cantor_slope_family(
    s: float, delta: DyadicScale, per_slope: int | None = None, seed: int = 0
) -> TubeFamily:
    """Random family whose slopes form a digit-restricted (Cantor-like) set.

    Slopes come from cantor_slope_indices; each receives per_slope random
    offsets (default keeps the family near the Katz-Tao density delta^-1).
    """
    k = delta.k
    slopes = cantor_slope_indices(s, k)
    if per_slope is None:
        per_slope = max(1, round(2.0 ** (k * (1.0 - s))))
    rng = random.Random(seed)
    d = delta.delta
    tubes = []
    for i in slopes:
        j_lo, j_hi = _offset_range(F(i, 1 << k), d, BOX_UNIT)
        valid = range(j_lo, j_hi + 1)
        chosen = rng.sample(valid, min(per_slope, len(valid)))
        tubes.extend(DyadicTube(k, i, j) for j in sorted(chosen))
    return TubeFamily(delta, tuple(tubes))
