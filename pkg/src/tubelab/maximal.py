"""Grid Nikodym/Kakeya maximal operators, bushes, and dual-sum norms.

Direction-restricted maximal averages are realized on 4-delta-wide digital
tubes: for slope index t, the tube centered at cell (m, n) occupies, in each
of the 2^k columns ix in [m - 2^(k-1), m + 2^(k-1)), the four rows
n + sigma(ix) - sigma(m) + {-2, -1, 0, 1} with sigma(ix) = (t*ix + 2^(k-1)) >> k.
All tubes then hold the same cell count, so tube averages are plain sums, and
a per-direction pass reduces to a vertical 4-window sum, a shear gather, a
prefix sum along columns, and an endpoint gather.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from tubelab.core import (
    BOX_DEFAULT,
    BOX_UNIT,
    Box,
    CellSet,
    DyadicScale,
    DyadicTube,
    rasterize_tube,
)
from tubelab.incidence import TubeFamily, cantor_slope_indices
from tubelab.setgen import _delta_value, frostman_constant

F = Fraction


# ---------------------------------------------------------------------------
# direction sets


@dataclass(frozen=True)
class DirectionSet:
    """Sorted distinct slope indices at one scale, with provenance."""

    scale: DyadicScale
    indices: tuple
    tag: str = "explicit"
    s: float | None = None

    def __post_init__(self):
        n = 1 << self.scale.k
        if list(self.indices) != sorted(set(self.indices)):
            raise ValueError("slope indices must be sorted and distinct")
        if self.indices and (self.indices[0] < -n or self.indices[-1] >= n):
            raise ValueError("slopes must lie in [-1, 1)")

    def __len__(self):
        return len(self.indices)

    def slopes(self) -> list[Fraction]:
        d = self.scale.delta
        return [i * d for i in self.indices]

    @staticmethod
    def explicit(scale: DyadicScale, slopes) -> "DirectionSet":
        idx = []
        for a in slopes:
            q = F(a) / scale.delta
            if q.denominator != 1:
                raise ValueError(f"slope {a} is not a multiple of delta")
            idx.append(int(q))
        return DirectionSet(scale, tuple(sorted(set(idx))), "explicit")

    @staticmethod
    def cantor(s: float, scale: DyadicScale) -> "DirectionSet":
        idx = tuple(sorted(cantor_slope_indices(s, scale.k)))
        return DirectionSet(scale, idx, "cantor", s)

    @staticmethod
    def net_of_arc(scale: DyadicScale, lo, hi) -> "DirectionSet":
        d = scale.delta
        i_lo = max(math.ceil(F(lo) / d), -(1 << scale.k))
        i_hi = min(math.ceil(F(hi) / d), 1 << scale.k)
        if i_hi <= i_lo:
            raise ValueError("empty slope arc")
        return DirectionSet(scale, tuple(range(i_lo, i_hi)), "net-of-arc", 1.0)

    def window(self, omega, rho) -> "DirectionSet":
        omega, rho, d = F(omega), F(rho), self.scale.delta
        idx = tuple(t for t in self.indices if abs(t * d - omega) <= rho)
        return DirectionSet(self.scale, idx, self.tag, self.s)


# ---------------------------------------------------------------------------
# grid functions


class GridFunction:
    """Nonnegative cell-constant function on a grid-aligned box."""

    def __init__(self, scale: DyadicScale, box: Box, values: np.ndarray):
        c0, c1, r0, r1 = box.grid_range(scale.k)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (c1 - c0, r1 - r0):
            raise ValueError(
                f"values shape {values.shape} does not match box grid {(c1 - c0, r1 - r0)}"
            )
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("values must be finite and nonnegative")
        self.scale = scale
        self.box = box
        self.values = values
        self._col0 = c0
        self._row0 = r0

    @staticmethod
    def constant(value, scale: DyadicScale, box: Box = BOX_DEFAULT) -> "GridFunction":
        c0, c1, r0, r1 = box.grid_range(scale.k)
        return GridFunction(scale, box, np.full((c1 - c0, r1 - r0), float(value)))

    @staticmethod
    def indicator_cells(scale: DyadicScale, cells, box: Box = BOX_DEFAULT) -> "GridFunction":
        f = GridFunction.constant(0.0, scale, box)
        idx = cells.idx if isinstance(cells, CellSet) else np.asarray(list(cells), dtype=np.int64)
        if len(idx):
            i = idx[:, 0] - f._col0
            j = idx[:, 1] - f._row0
            keep = (i >= 0) & (i < f.values.shape[0]) & (j >= 0) & (j < f.values.shape[1])
            f.values[i[keep], j[keep]] = 1.0
        return f

    @staticmethod
    def ball_indicator(scale: DyadicScale, center, radius, box: Box = BOX_DEFAULT) -> "GridFunction":
        """1 on cells whose center lies in the closed ball."""
        cx, cy, r = F(center[0]), F(center[1]), F(radius)
        d = scale.delta
        cells = []
        i_lo, i_hi = math.floor((cx - r) / d) - 1, math.ceil((cx + r) / d) + 1
        j_lo, j_hi = math.floor((cy - r) / d) - 1, math.ceil((cy + r) / d) + 1
        for i in range(i_lo, i_hi + 1):
            for j in range(j_lo, j_hi + 1):
                px, py = (F(2 * i + 1)) * d / 2, (F(2 * j + 1)) * d / 2
                if (px - cx) ** 2 + (py - cy) ** 2 <= r * r:
                    cells.append((i, j))
        return GridFunction.indicator_cells(scale, cells, box)

    def cell_value(self, i: int, j: int) -> float:
        return float(self.values[i - self._col0, j - self._row0])

    def lp_norm(self, p: float) -> float:
        if p < 1:
            raise ValueError("p must be >= 1")
        d2 = float(self.scale.delta) ** 2
        return float((self.values**p).sum() * d2) ** (1.0 / p)

    def max_value(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if self.scale != other.scale or self.box != other.box:
            raise ValueError("mismatched grids")
        return GridFunction(self.scale, self.box, self.values + other.values)

    def __mul__(self, c) -> "GridFunction":
        return GridFunction(self.scale, self.box, self.values * float(c))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# the digital tube and the per-direction pipeline


def _sigma(t: int, ix: np.ndarray, k: int) -> np.ndarray:
    return (t * ix + (1 << (k - 1))) >> k


def digital_tube_cells(scale: DyadicScale, center, t: int) -> CellSet:
    """Cells of the 4-delta digital tube with slope index t centered at a cell."""
    k = scale.k
    m, n = int(center[0]), int(center[1])
    K = 1 << (k - 1)
    ix = np.arange(m - K, m + K, dtype=np.int64)
    rows = n + _sigma(t, ix, k) - int(_sigma(t, np.array([m]), k)[0])
    cols = np.repeat(ix, 4)
    rws = (rows[:, None] + np.array([-2, -1, 0, 1])).ravel()
    return CellSet(k, np.stack([cols, rws], axis=1))


def _check_operator_input(f: GridFunction, scale: DyadicScale):
    if f.scale != scale:
        raise ValueError("scale mismatch between function and direction set")
    if not (f.box.x0 <= -2 and f.box.y0 <= -2 and f.box.x1 >= 2 and f.box.y1 >= 2):
        raise ValueError("function box must contain [-2, 2]^2")


def _vertical_4sums(f: GridFunction) -> np.ndarray:
    """V4[ix, r] = f[ix, r-2] + f[ix, r-1] + f[ix, r] + f[ix, r+1]."""
    vals = f.values
    ncols, nrows = vals.shape
    P = np.zeros((ncols, nrows + 1))
    np.cumsum(vals, axis=1, out=P[:, 1:])
    hi = np.minimum(np.arange(nrows) + 2, nrows)
    lo = np.maximum(np.arange(nrows) - 2, 0)
    return P[:, hi] - P[:, lo]


def _averages_from_v4(f: GridFunction, v4: np.ndarray, t: int) -> np.ndarray:
    k = f.scale.k
    n = 1 << k
    K = n >> 1
    ncols, nrows = v4.shape
    ix_abs = np.arange(ncols, dtype=np.int64) + f._col0
    sig = _sigma(t, ix_abs, k)
    m = np.arange(n, dtype=np.int64)
    sig_c = _sigma(t, m, k)
    # sheared rows r span exactly what the output gather reads
    r_lo = -f._row0 - int(sig_c.max())
    r_hi = n - f._row0 - int(sig_c.min())
    src = np.arange(r_lo, r_hi, dtype=np.int64)[None, :] + sig[:, None]
    valid = (src >= 0) & (src < nrows)
    W = np.where(valid, v4[np.arange(ncols)[:, None], np.clip(src, 0, nrows - 1)], 0.0)
    Q = np.zeros((ncols + 1, W.shape[1]))
    np.cumsum(W, axis=0, out=Q[1:])

    rows = (np.arange(n, dtype=np.int64)[None, :] - f._row0) - sig_c[:, None] - r_lo
    lo_c = (m - K - f._col0)[:, None]
    hi_c = (m + K - f._col0)[:, None]
    out = Q[hi_c, rows] - Q[lo_c, rows]
    return out / (8 * K)


def direction_average_grid(f: GridFunction, t: int) -> np.ndarray:
    """Tube averages in one direction at every center of [0,1)^2, (n, n)."""
    return _averages_from_v4(f, _vertical_4sums(f), t)


def nikodym_apply(f: GridFunction, theta: DirectionSet) -> GridFunction:
    """Largest tube average over the direction set, at every cell of [0,1)^2."""
    _check_operator_input(f, theta.scale)
    if not theta.indices:
        raise ValueError("empty direction set")
    v4 = _vertical_4sums(f)
    out = None
    for t in theta.indices:
        avg = _averages_from_v4(f, v4, t)
        out = avg if out is None else np.maximum(out, avg)
    return GridFunction(theta.scale, BOX_UNIT, np.maximum(out, 0.0))


def kakeya_apply(f: GridFunction, theta: DirectionSet) -> dict:
    """Best tube average per direction, positions swept over [0,1)^2 centers."""
    _check_operator_input(f, theta.scale)
    d = theta.scale.delta
    v4 = _vertical_4sums(f)
    out = {}
    for t in theta.indices:
        out[t * d] = float(_averages_from_v4(f, v4, t).max())
    return out


# ---------------------------------------------------------------------------
# bushes


@dataclass(frozen=True)
class BushCore:
    """Slope-aligned parallelogram |x| <= x_half, |y - slope*x - y_center| <= y_half."""

    slope: Fraction
    y_center: Fraction
    x_half: Fraction
    y_half: Fraction

    def contains(self, x, y) -> bool:
        x, y = F(x), F(y)
        return abs(x) <= self.x_half and abs(y - self.slope * x - self.y_center) <= self.y_half

    def area(self) -> Fraction:
        return 4 * self.x_half * self.y_half

    def vertices(self) -> list:
        out = []
        for sx in (-1, 1):
            for sy in (-1, 1):
                x = sx * self.x_half
                out.append((x, self.slope * x + self.y_center + sy * self.y_half))
        out.extend((F(0), self.y_center + sy * self.y_half) for sy in (-1, 1))
        return out

    def cells(self, scale: DyadicScale) -> list:
        """Cells overlapping the core with positive area."""
        d = scale.delta
        out = []
        i_lo = math.floor(-self.x_half / d)
        i_hi = math.ceil(self.x_half / d) - 1
        for i in range(i_lo, i_hi + 1):
            x_lo, x_hi = max(i * d, -self.x_half), min((i + 1) * d, self.x_half)
            if x_lo >= x_hi:
                continue
            ys = (self.slope * x_lo, self.slope * x_hi)
            y_lo = min(ys) + self.y_center - self.y_half
            y_hi = max(ys) + self.y_center + self.y_half
            for j in range(math.floor(y_lo / d), math.ceil(y_hi / d)):
                out.append((i, j))
        return out

    def indicator(self, scale: DyadicScale, box: Box = BOX_DEFAULT) -> GridFunction:
        return GridFunction.indicator_cells(scale, self.cells(scale), box)


@dataclass(frozen=True)
class BushPair:
    core: BushCore
    union: CellSet
    tubes: TubeFamily
    meta: dict = field(compare=False, default_factory=dict)


def bush_construction(theta: DirectionSet, omega, rho) -> BushPair:
    """All direction-set tubes through the origin with slope within rho of omega.

    The intersection core is a certified parallelogram: every vertex is
    checked against every tube by exact rational membership. Its inscribed
    slope-aligned rectangle of dimensions (delta/(4 rho)) x (delta/4) is
    certified by rational envelope bounds when the window geometry allows,
    and reported in meta["rect_certified"].
    """
    scale = theta.scale
    d = scale.delta
    omega, rho = F(omega), F(rho)
    if rho < d:
        raise ValueError("rho must be at least delta")
    win = theta.window(omega, rho)
    if not win.indices:
        raise ValueError("empty direction window")
    k = scale.k
    tubes = TubeFamily(scale, tuple(DyadicTube(k, t, 0) for t in win.indices))

    a_min, a_max = win.indices[0] * d, win.indices[-1] * d
    spread = a_max - a_min  # slope spread of the window
    mid = (a_min + a_max + d) / 2
    # sqrt(1+mid^2) bounded above by 1 + mid^2/2, its reciprocal below by
    # 1 - mid^2/2 + 3 mid^4/8 (both rational), for the inscribed rectangle
    # of dimensions (delta/(4 rho)) x (delta/4).
    s_up = 1 + mid * mid / 2
    r_inv = 1 - mid * mid / 2 + 3 * mid**4 / 8
    w_half, l_half = d / 8, d / (8 * rho)
    candidates = []
    for num in range(6, 0, -1):
        x_half = min(F(num, 8) * d / (spread + d), F(1, 4))
        y_half = (d + (d - spread) * x_half) / 2 if spread < d else (d - (spread - d) * x_half) / 2
        y_half = min(y_half * F(7, 8), 3 * d / 8)
        if y_half <= 0:
            continue
        cand = BushCore(mid, d / 2, x_half, y_half)
        if all(t.contains(x, y) for t in tubes.tubes for x, y in cand.vertices()):
            rect_ok = (w_half * s_up <= y_half) and (
                (l_half + w_half * abs(mid)) * r_inv <= x_half
            )
            candidates.append((cand, rect_ok))
            if rect_ok:
                break
    if not candidates:
        raise RuntimeError("could not certify a bush core")
    core, rect_ok = next(
        ((c, ok) for c, ok in candidates if ok), candidates[0]
    )

    parts = [rasterize_tube(t, scale, BOX_DEFAULT).idx for t in tubes.tubes]
    union = CellSet(k, np.concatenate(parts))
    # cells from which a unit-length tube in any window direction covers
    # every column of the core
    central = union.idx[np.abs(2 * union.idx[:, 0] + 1) <= (1 << k) // 2]
    area = core.area()
    meta = {
        "window_slopes": win.slopes(),
        "core_area": area,
        "c0_core": float(area * rho / (d * d)),
        "c0_union": float(len(union) * d * d / (d * len(tubes))),
        "central_cells": CellSet(k, central),
        "rect_certified": bool(rect_ok),
        "rect_dims": (float(d / (4 * rho)), float(d / 4)),
    }
    return BushPair(core, union, tubes, meta)


# ---------------------------------------------------------------------------
# norms


class MeasuredNorm(float):
    details: dict

    def __new__(cls, value: float, details: dict):
        obj = super().__new__(cls, value)
        obj.details = details
        return obj


def norm_ratio(f: GridFunction, theta: DirectionSet, p: float, operator: str, mu_weights=None) -> float:
    """||op f||_p / ||f||_p.

    Nikodym output is measured over [0,1)^2. The Kakeya norm weighs each
    direction by mu: explicit per-slope weights, else delta^s for tagged
    direction sets (Frostman normalization), else 1/|Theta|.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    fnorm = f.lp_norm(p)
    if fnorm == 0:
        raise ValueError("f is identically zero")
    if operator == "nikodym":
        return nikodym_apply(f, theta).lp_norm(p) / fnorm
    if operator == "kakeya":
        values = kakeya_apply(f, theta)
        if mu_weights is None:
            w = float(theta.scale.delta) ** theta.s if theta.s is not None else 1.0 / len(theta)
            mu_weights = {slope: w for slope in values}
        total = sum(values[a] ** p * mu_weights[a] for a in values)
        return total ** (1.0 / p) / fnorm
    raise ValueError(f"unknown operator: {operator!r}")


def _sum_indicator_grid(tube_counts: dict, k: int) -> tuple:
    """Multiplicity grid over the slab x in [0,1), all rows, for weighted tubes.

    Returns (grid, col0, row0) with grid[ix - col0, j - row0] the number of
    assigned tubes (with multiplicity) whose rasterization covers the cell.
    """
    n = 1 << k
    m = np.arange(n, dtype=np.int64)
    lows, highs = [], []
    per_tube = []
    for tube, cnt in tube_counts.items():
        a, b = tube.i, tube.j
        v1, v2, v3, v4 = a * m, (a + 1) * m, a * (m + 1), (a + 1) * (m + 1)
        lo = (np.minimum(np.minimum(v1, v2), np.minimum(v3, v4)) + (b << k)) >> k
        up_u = np.maximum(np.maximum(v1, v2), np.maximum(v3, v4)) + ((b + 1) << k)
        hi = -((-up_u) >> k)
        per_tube.append((lo, hi, cnt))
        lows.append(int(lo.min()))
        highs.append(int(hi.max()))
    row0, row1 = min(lows), max(highs)
    diff = np.zeros((n, row1 - row0 + 1), dtype=np.int64)
    cols = np.arange(n)
    for lo, hi, cnt in per_tube:
        np.add.at(diff, (cols, lo - row0), cnt)
        np.add.at(diff, (cols, hi - row0), -cnt)
    grid = diff.cumsum(axis=1)[:, :-1]
    return grid, -n, row0


def _grid_lp(grid: np.ndarray, pprime: float, delta: float) -> float:
    counts = np.bincount(grid.ravel())
    vals = np.arange(len(counts), dtype=np.float64)
    total = float((counts[1:] * vals[1:] ** pprime).sum()) * delta * delta
    return total ** (1.0 / pprime)


def dual_sum_norm(assignment: dict, pprime: float) -> MeasuredNorm:
    """L^p' norm of the summed tube indicators of a cell-to-tube assignment.

    The assignment must give one tube for every cell of [0,1)^2 at the tubes'
    scale. The norm integrates over the slab x in [0,1), all rows. Reports in
    .details the largest (vertical) cell-to-tube distance in units of delta.
    """
    if pprime < 1:
        raise ValueError("p' must be >= 1")
    tubes = list(assignment.values())
    if not tubes:
        raise ValueError("empty assignment")
    k = tubes[0].k
    n = 1 << k
    seen = np.zeros((n, n), dtype=bool)
    for (i, j) in assignment:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"cell {(i, j)} outside the unit square grid")
        seen[i, j] = True
    if not seen.all():
        missing = int((~seen).sum())
        raise ValueError(f"assignment missing {missing} cells of the unit square")

    # exact vertical distance from each cell center to its tube, in units of
    # delta^2/2: center = ((2i+1)/2, (2j+1)/2) * delta
    a_max = 0
    for (i, j), t in assignment.items():
        lo = min(t.i * (2 * i + 1), (t.i + 1) * (2 * i + 1)) + t.j * (2 << k)
        up = max(t.i * (2 * i + 1), (t.i + 1) * (2 * i + 1)) + (t.j + 1) * (2 << k)
        cy = (2 * j + 1) << k
        a_max = max(a_max, lo - cy, cy - up)
    grid, _, _ = _sum_indicator_grid(Counter(tubes), k)
    value = _grid_lp(grid, pprime, float(F(1, n)))
    return MeasuredNorm(
        value,
        {"A": a_max / float(2 << k), "max_multiplicity": int(grid.max()), "pprime": pprime},
    )


def tube_sum_norm(family: TubeFamily, pprime: float) -> MeasuredNorm:
    """L^p' norm of the family's summed indicators, with the density bound.

    Requires one tube per direction. The norm integrates over the slab
    x in [0,1). The comparison bound is C^(1/p) * delta^(2/p') * |F| with C
    the Frostman constant of the slope set at exponent s = 1/(p' - 1)
    (so p = 1 + s is the conjugate exponent).
    """
    if pprime <= 1:
        raise ValueError("p' must exceed 1")
    slopes = family.slopes()
    if len(set(slopes)) != len(slopes):
        raise ValueError("duplicate directions in the family")
    k = family.scale.k
    delta = float(family.scale.delta)
    s = 1.0 / (pprime - 1.0)
    p = 1.0 + s
    grid, _, _ = _sum_indicator_grid(Counter(family.tubes), k)
    value = _grid_lp(grid, pprime, delta)
    c = float(frostman_constant(sorted(set(slopes)), s, family.scale))
    bound = c ** (1.0 / p) * delta ** (2.0 / pprime) * len(family)
    return MeasuredNorm(
        value,
        {"bound": bound, "ratio": value / bound, "frostman": c, "p": p, "s": s},
    )


def aim_at_origin_assignment(theta: DirectionSet) -> dict:
    """Adversarial assignment: each unit-square cell takes the tube through
    its center whose direction points closest back at the origin."""
    k = theta.scale.k
    n = 1 << k
    idx = np.asarray(theta.indices, dtype=np.int64)
    out = {}
    for i in range(n):
        cx = F(2 * i + 1, 2 * n)
        for j in range(n):
            cy = F(2 * j + 1, 2 * n)
            target = cy / cx  # slope of the line to the origin
            t = int(idx[np.argmin(np.abs(idx - float(target) * n))])
            b = cy - F(t, n) * cx
            out[(i, j)] = DyadicTube(k, t, math.floor(b * n))
    return out


def row_tiling_assignment(scale: DyadicScale) -> dict:
    """Each cell takes the horizontal tube at its own row."""
    n = 1 << scale.k
    return {(i, j): DyadicTube(scale.k, 0, j) for i in range(n) for j in range(n)}


# ---------------------------------------------------------------------------
# exponent fitting


class ExponentFit(NamedTuple):
    beta: float
    residual: float


def exponent_fit(samples) -> ExponentFit:
    """OLS slope of log(value) against log(1/delta)."""
    pts = [(float(_delta_value(d)), float(v)) for d, v in samples]
    if len(pts) < 3:
        raise ValueError("need at least 3 samples")
    if len({d for d, _ in pts}) < 2:
        raise ValueError("need at least 2 distinct delta values")
    if any(v <= 0 for _, v in pts):
        raise ValueError("values must be positive")
    x = np.log([1.0 / d for d, _ in pts])
    y = np.log([v for _, v in pts])
    beta, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (beta * x + intercept)) ** 2)))
    return ExponentFit(float(beta), resid)
