"""UE position estimation from beam-index measurement reports.

Pipeline: wrapped Tx-beam-index differences approximate the angles the
cell pairs subtend at the UE; the cosine-rule system over the known
inter-cell distances yields UE-to-cell ranges; least-squares
trilateration yields a point. Each angle also bounds an inscribed-arc
band (an "estimation area"); intersecting the bands refines the point
when more than three cells report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import TWO_PI, ClusterGeometry, Point2D


class EstimationError(Exception):
    """Estimation could not produce a usable result."""


class AnglesUnresolvable(EstimationError):
    """Two reports share a best Tx index: angles degenerate at this codebook size."""


class TriangulationFailed(EstimationError):
    """The range system had no acceptable (positive, consistent) solution."""


@dataclass(frozen=True)
class MeasurementReport:
    """PDP peak per UE Tx beam, recorded at one cell during one full sweep."""

    cell_index: int
    peak_per_tx_beam: np.ndarray
    rx_beam_used: int

    @property
    def n_tx(self) -> int:
        return len(self.peak_per_tx_beam)

    @property
    def best_tx_index(self) -> int:
        return int(np.argmax(self.peak_per_tx_beam))  # lowest index on ties

    @property
    def best_peak(self) -> float:
        return float(self.peak_per_tx_beam[self.best_tx_index])


@dataclass(frozen=True)
class AngleEstimate:
    """Cyclic subtended-angle estimates plus the band halfwidth for areas."""

    theta_tilde: tuple[float, float, float]
    band_halfwidth: float = 0.0


def select_top3(reports: Sequence[MeasurementReport]) -> list[MeasurementReport]:
    """The three reports with the largest best peaks; ties to lower cell index."""
    if len(reports) < 3:
        raise EstimationError("need at least three measurement reports")
    ranked = sorted(reports, key=lambda r: (-r.best_peak, r.cell_index))
    return ranked[:3]


def wrapped_index_angle(n_from: int, n_to: int, n_tx: int) -> float:
    """2*pi * ((n_to - n_from) mod N) / N; raises on equal indices."""
    delta = (n_to - n_from) % n_tx
    if delta == 0:
        raise AnglesUnresolvable(
            "equal best Tx indices: angles unresolvable at this codebook resolution"
        )
    return TWO_PI * delta / n_tx


def angles_from_reports(
    reports: Sequence[MeasurementReport],
    n_tx: int | None = None,
    band_halfwidth: float = 0.0,
) -> AngleEstimate:
    """Cyclic angle estimates from three reports in counterclockwise cell order.

    theta_i is derived from the wrapped difference of the best Tx indices
    of reports i and i+1. The caller is responsible for passing reports
    ordered counterclockwise as seen from the UE side.
    """
    if len(reports) != 3:
        raise EstimationError("angle recovery needs exactly three reports")
    if len({r.cell_index for r in reports}) != 3:
        raise EstimationError("reports must come from distinct cells")
    if n_tx is None:
        n_tx = reports[0].n_tx
    if any(r.n_tx != n_tx for r in reports):
        raise EstimationError("reports disagree on the Tx codebook size")
    idx = [r.best_tx_index for r in reports]
    thetas = tuple(
        wrapped_index_angle(idx[i], idx[(i + 1) % 3], n_tx) for i in range(3)
    )
    return AngleEstimate(thetas, band_halfwidth)


def _pair_residuals(d: np.ndarray, cos_t: np.ndarray, side2: np.ndarray) -> np.ndarray:
    dn = d[[1, 2, 0]]
    return d * d + dn * dn - 2.0 * d * dn * cos_t - side2


def _pair_jacobian(d: np.ndarray, cos_t: np.ndarray) -> np.ndarray:
    J = np.zeros((3, 3))
    for i in range(3):
        j = (i + 1) % 3
        J[i, i] = 2.0 * d[i] - 2.0 * d[j] * cos_t[i]
        J[i, j] = 2.0 * d[j] - 2.0 * d[i] * cos_t[i]
    return J


def _damped_newton(d0, cos_t, side2, tol, max_iter=100):
    d = np.array(d0, dtype=float)
    r = _pair_residuals(d, cos_t, side2)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return d, r, True
        J = _pair_jacobian(d, cos_t)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        cost0 = float(r @ r)
        alpha = 1.0
        moved = False
        while alpha > 1e-7:
            cand = d + alpha * step
            if np.all(cand > 0.0):
                rc = _pair_residuals(cand, cos_t, side2)
                if float(rc @ rc) < cost0:
                    d, r, moved = cand, rc, True
                    break
            alpha *= 0.5
        if not moved:
            break
    return d, r, bool(np.max(np.abs(r)) < tol)


def _grid_seed(cos_t, side2, d_max, n=50):
    ax = np.linspace(d_max / n, d_max, n)
    g1, g2, g3 = np.meshgrid(ax, ax, ax, indexing="ij")
    r1 = g1 * g1 + g2 * g2 - 2.0 * g1 * g2 * cos_t[0] - side2[0]
    r2 = g2 * g2 + g3 * g3 - 2.0 * g2 * g3 * cos_t[1] - side2[1]
    r3 = g3 * g3 + g1 * g1 - 2.0 * g3 * g1 * cos_t[2] - side2[2]
    cost = r1 * r1 + r2 * r2 + r3 * r3
    k = np.unravel_index(np.argmin(cost), cost.shape)
    return np.array([g1[k], g2[k], g3[k]])


def solve_distances(
    est: AngleEstimate,
    d_side: float | Sequence[float],
) -> tuple[float, float, float]:
    """Ranges to the three cells from the cyclic angle estimates.

    d_side is either the common triangle side or the three cyclic
    inter-cell distances |S_i S_{i+1}|. Damped Newton from the symmetric
    start; a coarse grid seed plus Newton polish on stagnation; an
    inconsistent (noisy) system falls through to the Gauss-Newton
    least-squares minimizer of the three residuals.
    """
    sides = np.broadcast_to(np.asarray(d_side, dtype=float), (3,)).copy()
    if np.any(sides <= 0.0):
        raise ValueError("inter-cell distances must be positive")
    thetas = np.asarray(est.theta_tilde, dtype=float)
    if np.any(thetas <= 0.0) or np.any(thetas >= TWO_PI):
        raise TriangulationFailed("angle estimates outside (0, 2*pi)")
    if abs(float(np.sum(thetas)) - TWO_PI) > 1e-6:
        raise TriangulationFailed(
            "cyclic angle estimates do not close to 2*pi (inconsistent reports)"
        )
    cos_t = np.cos(thetas)
    side2 = sides * sides
    scale = float(np.max(sides))
    tol = 1e-9 * scale * scale

    start = np.full(3, scale / math.sqrt(3.0))
    d, r, ok = _damped_newton(start, cos_t, side2, tol)
    if not ok:
        seed = _grid_seed(cos_t, side2, scale)
        d2, r2, ok2 = _damped_newton(seed, cos_t, side2, tol)
        if float(r2 @ r2) < float(r @ r):
            d, r, ok = d2, r2, ok2
    if not ok:
        # inconsistent (noisy) system: settle for the least-squares minimizer
        d, r = _levenberg_polish(d, cos_t, side2)
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise TriangulationFailed("no positive range solution")
    return float(d[0]), float(d[1]), float(d[2])


def _levenberg_polish(d0, cos_t, side2, max_iter=200):
    d = np.array(d0, dtype=float)
    r = _pair_residuals(d, cos_t, side2)
    cost = float(r @ r)
    lam = 1e-3
    for _ in range(max_iter):
        J = _pair_jacobian(d, cos_t)
        g = J.T @ r
        if np.linalg.norm(g) < 1e-10 * max(cost, 1.0):
            break
        try:
            step = np.linalg.solve(J.T @ J + lam * np.eye(3), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        cand = np.maximum(d + step, 1e-9)
        rc = _pair_residuals(cand, cos_t, side2)
        cc = float(rc @ rc)
        if cc < cost:
            d, r, cost = cand, rc, cc
            lam = max(lam * 0.3, 1e-12)
        else:
            lam *= 10.0
            if lam > 1e12:
                break
    return d, r


def _trilat_cost(p: np.ndarray, anchors: np.ndarray, d: np.ndarray) -> float:
    r = np.hypot(*(p - anchors).T)
    f = r - d
    return float(f @ f)


def _gauss_newton_point(p0, anchors, d, max_iter=60):
    p = np.array(p0, dtype=float)
    cost = _trilat_cost(p, anchors, d)
    for _ in range(max_iter):
        diff = p - anchors
        r = np.maximum(np.hypot(diff[:, 0], diff[:, 1]), 1e-12)
        f = r - d
        J = diff / r[:, None]
        step, *_ = np.linalg.lstsq(J, -f, rcond=None)
        alpha = 1.0
        moved = False
        while alpha > 1e-9:
            cand = p + alpha * step
            c = _trilat_cost(cand, anchors, d)
            if c < cost:
                p, cost, moved = cand, c, True
                break
            alpha *= 0.5
        if not moved or np.linalg.norm(alpha * step) < 1e-13:
            break
    return p, cost


def _inside_triangle(p: np.ndarray, tri: np.ndarray) -> bool:
    signs = []
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        signs.append((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))
    return all(s >= 0 for s in signs) or all(s <= 0 for s in signs)


def locate_ue(distances: Sequence[float], anchors: Sequence[Point2D]) -> Point2D:
    """Least-squares trilateration over >= 3 anchors.

    Runs Gauss-Newton from a linearized start and from the anchor
    centroid; ambiguous near-ties resolve towards the point inside the
    first three anchors' triangle.
    """
    S = np.array([[p.x, p.y] for p in anchors], dtype=float)
    d = np.asarray(distances, dtype=float)
    if len(S) < 3 or len(S) != len(d):
        raise ValueError("need matching distances for at least three anchors")
    A = 2.0 * (S[1:] - S[0])
    b = (d[0] ** 2 - d[1:] ** 2) + (np.sum(S[1:] ** 2, axis=1) - np.sum(S[0] ** 2))
    p_lin, *_ = np.linalg.lstsq(A, b, rcond=None)
    candidates = [_gauss_newton_point(p_lin, S, d),
                  _gauss_newton_point(S.mean(axis=0), S, d)]
    candidates.sort(key=lambda pc: pc[1])
    best, runner = candidates[0], candidates[1]
    if runner[1] - best[1] < 1e-9 * max(best[1], 1.0):
        if _inside_triangle(runner[0], S[:3]) and not _inside_triangle(best[0], S[:3]):
            best = runner
    return Point2D(float(best[0][0]), float(best[0][1]))


def subtended_angle(px, py, a: Point2D, b: Point2D):
    """Unsigned angle in [0, pi] under which segment ab is seen from (px, py)."""
    vax, vay = a.x - px, a.y - py
    vbx, vby = b.x - px, b.y - py
    dot = vax * vbx + vay * vby
    cross = vax * vby - vay * vbx
    return np.abs(np.arctan2(cross, dot))


@dataclass(frozen=True, eq=False)
class EstimationArea:
    """Rasterized inscribed-angle band (or an intersection of bands)."""

    x_edges: np.ndarray  # cell-center x coordinates
    y_edges: np.ndarray  # cell-center y coordinates
    resolution: float
    mask: np.ndarray  # (ny, nx) boolean membership of cell centers
    contains: Callable[[Point2D], bool] = field(compare=False)

    @property
    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    @property
    def cell_count(self) -> int:
        return int(self.mask.sum())

    def centroid(self) -> Point2D | None:
        if self.is_empty:
            return None
        ys, xs = np.nonzero(self.mask)
        return Point2D(float(self.x_edges[xs].mean()), float(self.y_edges[ys].mean()))

    def intersect(self, other: "EstimationArea") -> "EstimationArea":
        if self.mask.shape != other.mask.shape:
            raise ValueError("areas must share one grid to intersect")
        mine, theirs = self.contains, other.contains
        return EstimationArea(
            self.x_edges, self.y_edges, self.resolution,
            self.mask & other.mask,
            contains=lambda p: mine(p) and theirs(p),
        )


def area_grid(geom: ClusterGeometry, resolution: float):
    """Cell-center axes covering the base triangle's bounding box."""
    tri = geom.triangle()
    x0, x1 = min(p.x for p in tri), max(p.x for p in tri)
    y0, y1 = min(p.y for p in tri), max(p.y for p in tri)
    nx = max(1, int(math.ceil((x1 - x0) / resolution)))
    ny = max(1, int(math.ceil((y1 - y0) / resolution)))
    xs = x0 + (np.arange(nx) + 0.5) * resolution
    ys = y0 + (np.arange(ny) + 0.5) * resolution
    return xs, ys


def _band_member(theta_tilde, pair, band_halfwidth, side_reference):
    """Vectorized membership test for one inscribed-angle band."""
    if band_halfwidth <= 0.0:
        raise ValueError("band halfwidth must be positive")
    a, b = pair
    lo, hi = theta_tilde - band_halfwidth, theta_tilde + band_halfwidth

    ref_sign = 0.0
    if side_reference is not None:
        ref_sign = np.sign((b.x - a.x) * (side_reference.y - a.y)
                           - (b.y - a.y) * (side_reference.x - a.x))

    def member(px, py):
        ang = subtended_angle(px, py, a, b)
        ok = (ang >= lo) & (ang <= hi)
        if ref_sign != 0.0:
            side = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
            ok &= (np.sign(side) == ref_sign)
        return ok

    return member


def estimation_area(
    theta_tilde: float,
    pair: tuple[Point2D, Point2D],
    band_halfwidth: float,
    xs: np.ndarray,
    ys: np.ndarray,
    resolution: float,
    side_reference: Point2D | None = None,
) -> EstimationArea:
    """Points whose subtended angle over the anchor pair falls in the band.

    Membership requires theta_tilde - h <= subtended <= theta_tilde + h
    and, when a side reference is given, lying on the reference's side of
    the chord (the inscribed-angle locus is mirror-symmetric about it).
    """
    member = _band_member(theta_tilde, pair, band_halfwidth, side_reference)
    gx, gy = np.meshgrid(xs, ys)
    mask = member(gx, gy)
    return EstimationArea(
        xs, ys, resolution, mask,
        contains=lambda p: bool(member(np.asarray(p.x), np.asarray(p.y))),
    )


def _order_ccw(reports: Sequence[MeasurementReport],
               positions: Sequence[Point2D]) -> list[MeasurementReport]:
    """Counterclockwise order around the reports' cell centroid."""
    cx = sum(positions[r.cell_index].x for r in reports) / len(reports)
    cy = sum(positions[r.cell_index].y for r in reports) / len(reports)
    def key(r):
        p = positions[r.cell_index]
        return math.atan2(p.y - cy, p.x - cx)
    return sorted(reports, key=key)


def estimate_point(
    reports: Sequence[MeasurementReport],
    geom: ClusterGeometry,
) -> tuple[Point2D, list[MeasurementReport], AngleEstimate]:
    """Point estimate from the top-3 reports; raises EstimationError subclasses."""
    top3 = _order_ccw(select_top3(reports), geom.sc_positions)
    est = angles_from_reports(top3)
    anchors = [geom.sc_positions[r.cell_index] for r in top3]
    sides = [anchors[i].distance_to(anchors[(i + 1) % 3]) for i in range(3)]
    dists = solve_distances(est, sides)
    return locate_ue(dists, anchors), top3, est


def refine_location(
    reports: Sequence[MeasurementReport],
    geom: ClusterGeometry,
    band_halfwidth: float,
    grid_resolution: float = 1.0,
) -> tuple[Point2D, EstimationArea]:
    """Intersect every pair's estimation area; fall back to the point solve.

    The top-3 cells contribute their three cyclic areas; every further
    report pairs with its two nearest selected anchors. The returned
    point is the intersection centroid, or the plain point solve when
    the intersection rasterizes empty.
    """
    point, top3, est = estimate_point(reports, geom)
    xs, ys = area_grid(geom, grid_resolution)
    positions = geom.sc_positions

    members = []
    for i in range(3):
        a, b = top3[i], top3[(i + 1) % 3]
        # an interior UE always lies on the remaining cell's side of the chord
        third = positions[top3[(i + 2) % 3].cell_index]
        members.append(_band_member(
            est.theta_tilde[i],
            (positions[a.cell_index], positions[b.cell_index]),
            band_halfwidth, third))

    selected = {r.cell_index for r in top3}
    n_tx = top3[0].n_tx
    for extra in reports:
        if extra.cell_index in selected:
            continue
        p_extra = positions[extra.cell_index]
        nearest = sorted(top3, key=lambda r: p_extra.distance_to(positions[r.cell_index]))[:2]
        for anchor in nearest:
            try:
                theta = wrapped_index_angle(
                    extra.best_tx_index, anchor.best_tx_index, n_tx)
            except AnglesUnresolvable:
                continue
            theta = min(theta, TWO_PI - theta)  # unsigned angle for a lone pair
            if theta <= 0.0:
                continue
            members.append(_band_member(
                theta, (p_extra, positions[anchor.cell_index]),
                band_halfwidth, point))

    # rasterize incrementally: later bands only look at still-alive cells
    gx, gy = np.meshgrid(xs, ys)
    mask = members[0](gx, gy)
    for member in members[1:]:
        yi, xi = np.nonzero(mask)
        if yi.size == 0:
            break
        keep = member(xs[xi], ys[yi])
        mask = np.zeros_like(mask)
        mask[yi[keep], xi[keep]] = True

    overlap = EstimationArea(
        xs, ys, grid_resolution, mask,
        contains=lambda p: all(
            bool(m(np.asarray(p.x), np.asarray(p.y))) for m in members),
    )
    refined = overlap.centroid()
    return (refined if refined is not None else point), overlap
