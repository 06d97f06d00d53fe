"""Exact lattice-polytope computations.

Everything here runs in exact arithmetic: Python integers for hull
construction and Fractions for rank/solve steps.  The incremental
(beneath-beyond) hull inserts one point at a time, replacing the facets the
point sees by the cone over the horizon; ties (point on a facet hyperplane)
are handled by re-triangulating the touched facet, and non-extreme corners
are filtered at the end by an exact tight-plane rank test.

Lower-dimensional hulls are computed by projecting the affine hull onto an
independent coordinate subset (a lattice-preserving bijection), hulling
there, and lifting facet normals back.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

Point = Tuple[int, ...]


class HullError(RuntimeError):
    """Internal inconsistency while building a hull."""


class PolytopeInputError(ValueError):
    """Malformed polytope data."""


@dataclass(frozen=True)
class Facet:
    normal: Point
    offset: int
    vertices: Tuple[int, ...]


@dataclass(frozen=True)
class SupportSample:
    w: Tuple[Fraction, ...]
    value: Fraction
    exposed_dim: int


@dataclass(frozen=True)
class LatticePolytope:
    n: int
    dim: int
    vertices: Tuple[Point, ...]
    facets: Tuple[Facet, ...]
    equalities: Tuple[Tuple[Point, int], ...]

    def contains(self, point: Sequence[int]) -> bool:
        p = tuple(point)
        for normal, offset in self.equalities:
            if _dot(normal, p) != offset:
                return False
        return all(_dot(f.normal, p) <= f.offset for f in self.facets)

    def vertex_set(self) -> frozenset:
        return frozenset(self.vertices)


# ---------------------------------------------------------------------------
# exact linear algebra helpers

def _dot(u: Sequence, v: Sequence):
    return sum(a * b for a, b in zip(u, v))


def _sub(u: Point, v: Point) -> Point:
    return tuple(a - b for a, b in zip(u, v))


def _primitive(vec: Sequence[int]) -> Point:
    g = 0
    for x in vec:
        g = math.gcd(g, abs(x))
    if g == 0:
        raise ValueError("zero vector has no primitive form")
    return tuple(x // g for x in vec)


def _canonical_sign(vec: Point) -> Point:
    for x in vec:
        if x > 0:
            return vec
        if x < 0:
            return tuple(-y for y in vec)
    return vec


class _FracRowBasis:
    """Incremental row basis over the rationals (for rank bookkeeping)."""

    def __init__(self, width: int):
        self.width = width
        self.rows: List[List[Fraction]] = []
        self.pivots: List[int] = []

    def _reduce(self, row):
        row = [Fraction(x) for x in row]
        for basis_row, piv in zip(self.rows, self.pivots):
            if row[piv]:
                factor = row[piv] / basis_row[piv]
                row = [a - factor * b for a, b in zip(row, basis_row)]
        return row

    def add(self, row) -> bool:
        reduced = self._reduce(row)
        for j, x in enumerate(reduced):
            if x:
                self.rows.append(reduced)
                self.pivots.append(j)
                return True
        return False

    @property
    def rank(self) -> int:
        return len(self.rows)


def _rank(rows: Iterable[Sequence]) -> int:
    rows = list(rows)
    if not rows:
        return 0
    basis = _FracRowBasis(len(rows[0]))
    for row in rows:
        basis.add(row)
    return basis.rank


def _int_det(mat: Sequence[Sequence[int]]) -> int:
    """Fraction-free (Bareiss) determinant of a small integer matrix."""
    size = len(mat)
    if size == 0:
        return 1
    m = [list(row) for row in mat]
    sign = 1
    prev = 1
    for k in range(size - 1):
        if m[k][k] == 0:
            for i in range(k + 1, size):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, size):
            for j in range(k + 1, size):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
            m[i][k] = 0
        prev = m[k][k]
    return sign * m[-1][-1]


def _int_kernel(rows: Sequence[Sequence[int]], n: int) -> List[Point]:
    """Basis of the saturated integer kernel {x in Z^n : row . x = 0 for all rows}."""
    cols = [[row[j] for row in rows] for j in range(n)]
    transform = [[1 if i == j else 0 for i in range(n)] for j in range(n)]
    c = 0
    for r in range(len(rows)):
        while True:
            nz = [j for j in range(c, n) if cols[j][r] != 0]
            if not nz:
                break
            if len(nz) == 1:
                j = nz[0]
                cols[c], cols[j] = cols[j], cols[c]
                transform[c], transform[j] = transform[j], transform[c]
                c += 1
                break
            j0 = min(nz, key=lambda j: abs(cols[j][r]))
            for j in nz:
                if j == j0:
                    continue
                q = cols[j][r] // cols[j0][r]
                if q:
                    cols[j] = [a - q * b for a, b in zip(cols[j], cols[j0])]
                    transform[j] = [a - q * b for a, b in zip(transform[j], transform[j0])]
    return [tuple(transform[j]) for j in range(c, n)]


def _saturation_basis(diffs: Sequence[Point], n: int) -> List[Point]:
    """Basis of span_Q(diffs) intersected with Z^n."""
    normals = _int_kernel(diffs, n)
    return _int_kernel(normals, n)


def _solve_fraction(rows: Sequence[Sequence], rhs: Sequence) -> Optional[List[Fraction]]:
    """Exact solve of a (possibly overdetermined) consistent system; None if inconsistent."""
    m = [[Fraction(x) for x in row] + [Fraction(b)] for row, b in zip(rows, rhs)]
    n_cols = len(rows[0])
    pivots = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, len(m)) if m[i][c]), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c]:
                factor = m[i][c]
                m[i] = [a - factor * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    for i in range(r, len(m)):
        if m[i][n_cols]:
            return None
    solution = [Fraction(0)] * n_cols
    for row_idx, c in enumerate(pivots):
        solution[c] = m[row_idx][n_cols]
    if len(pivots) < n_cols:
        return None  # underdetermined; callers always pass full-rank systems
    return solution


def _simplex_normal(points: Sequence[Point]) -> Optional[Point]:
    """Integer normal of the hyperplane through d points in Z^d (None if degenerate)."""
    d = len(points[0])
    base = points[0]
    rows = [_sub(p, base) for p in points[1:]]
    normal = []
    for j in range(d):
        minor = [[row[k] for k in range(d) if k != j] for row in rows]
        normal.append((-1) ** j * _int_det(minor))
    if all(x == 0 for x in normal):
        return None
    return _primitive(normal)


# ---------------------------------------------------------------------------
# full-dimensional beneath-beyond

def _initial_simplex(pts: Sequence[Point], d: int) -> List[int]:
    basis = _FracRowBasis(d)
    chosen = [0]
    for i in range(1, len(pts)):
        if basis.add(_sub(pts[i], pts[0])):
            chosen.append(i)
            if len(chosen) == d + 1:
                return chosen
    raise HullError("points do not span the expected dimension")


def _hull_fulldim(pts: List[Point], d: int):
    """Facet planes and vertex indices of the hull of full-dimensional pts.

    Facets are kept as oriented simplices (index sets of size d) glued along
    ridges; coplanar simplices triangulating one geometric facet are merged
    when reporting planes.
    """
    simplex = _initial_simplex(pts, d)
    ref = tuple(Fraction(sum(pts[i][j] for i in simplex), d + 1) for j in range(d))

    facets: dict = {}
    ridge_map: dict = {}
    next_id = 0

    def orient(normal: Point, offset: int) -> Tuple[Point, int]:
        r = _dot(normal, ref)
        if r == offset:
            raise HullError("reference point lies on a facet hyperplane")
        if r > offset:
            return tuple(-x for x in normal), -offset
        return normal, offset

    def add_facet(corners: frozenset) -> None:
        nonlocal next_id
        pts_list = [pts[i] for i in sorted(corners)]
        normal = _simplex_normal(pts_list)
        if normal is None:
            return
        normal, offset = orient(normal, _dot(normal, pts_list[0]))
        fid = next_id
        next_id += 1
        facets[fid] = (normal, offset, corners)
        for drop in corners:
            ridge_map.setdefault(corners - {drop}, []).append(fid)

    def remove_facet(fid: int) -> None:
        _, _, corners = facets.pop(fid)
        for drop in corners:
            ridge = corners - {drop}
            ridge_map[ridge].remove(fid)
            if not ridge_map[ridge]:
                del ridge_map[ridge]

    for subset in itertools.combinations(simplex, d):
        add_facet(frozenset(subset))

    order = [i for i in range(len(pts)) if i not in simplex]
    for ip in order:
        p = pts[ip]
        strict = False
        visible = []
        for fid, (normal, offset, _) in facets.items():
            s = _dot(normal, p)
            if s > offset:
                strict = True
                visible.append(fid)
            elif s == offset:
                visible.append(fid)
        if not strict:
            continue  # p already inside (or on the boundary of) the hull
        visible_set = set(visible)
        horizon = []
        for fid in visible:
            corners = facets[fid][2]
            for drop in corners:
                ridge = corners - {drop}
                partners = [g for g in ridge_map[ridge] if g != fid]
                if all(g in visible_set for g in partners):
                    continue
                horizon.append(ridge)
        for fid in visible:
            remove_facet(fid)
        fresh = []
        for ridge in set(horizon):
            before = next_id
            add_facet(ridge | {ip})
            if next_id != before:
                fresh.append(before)
        # exactness guard: new planes must support every live corner
        # (kept facets already had p on their non-positive side)
        corner_ids = set().union(*(c for _, _, c in facets.values()))
        for fid in fresh:
            normal, offset, _ = facets[fid]
            for ci in corner_ids:
                if _dot(normal, pts[ci]) > offset:
                    raise HullError("hull insertion produced an unsupported plane")

    planes: dict = {}
    for normal, offset, corners in facets.values():
        planes.setdefault((normal, offset), set()).update(corners)

    candidates = set().union(*(c for _, _, c in facets.values()))
    tight_normals = {i: [] for i in candidates}
    for (normal, offset) in planes:
        for i in candidates:
            if _dot(normal, pts[i]) == offset:
                planes[(normal, offset)].add(i)
                tight_normals[i].append(normal)
    vertex_ids = {i for i in candidates if _rank(tight_normals[i]) == d}
    facet_list = [
        (normal, offset, tuple(sorted(members & vertex_ids)))
        for (normal, offset), members in planes.items()
    ]
    return facet_list, vertex_ids


def _peel_axis_midpoints(points: set) -> set:
    """Drop points that are axis-midpoints of two others; extremes survive.

    Safe pre-filter before hulling large lattice sets: a removed point is the
    midpoint of two retained-or-removed set points, hence never extreme.
    """
    if not points:
        return points
    n = len(next(iter(points)))
    current = set(points)
    while True:
        removable = []
        for p in current:
            for i in range(n):
                up = p[:i] + (p[i] + 1,) + p[i + 1 :]
                dn = p[:i] + (p[i] - 1,) + p[i + 1 :]
                if up in current and dn in current:
                    removable.append(p)
                    break
        if not removable:
            return current
        current.difference_update(removable)


# ---------------------------------------------------------------------------
# public operations

def convex_hull(points: Iterable[Sequence[int]]) -> LatticePolytope:
    """Exact convex hull; handles duplicates and lower-dimensional inputs."""
    seen = set()
    pts: List[Point] = []
    n = None
    for p in points:
        tp = tuple(int(x) for x in p)
        if n is None:
            n = len(tp)
        elif len(tp) != n:
            raise PolytopeInputError("points of mixed dimensions")
        if tp not in seen:
            seen.add(tp)
            pts.append(tp)
    if not pts:
        raise PolytopeInputError("empty point set")
    if len(pts) > 512:
        pts = sorted(_peel_axis_midpoints(set(pts)))
    else:
        pts.sort()

    if len(pts) == 1:
        p = pts[0]
        eqs = tuple(
            (tuple(1 if j == i else 0 for j in range(n)), p[i]) for i in range(n)
        )
        return LatticePolytope(n, 0, (p,), (), eqs)

    origin = pts[0]
    diffs = [_sub(p, origin) for p in pts[1:]]
    basis = _FracRowBasis(n)
    for drow in diffs:
        basis.add(drow)
    dim = basis.rank

    equalities = tuple(
        sorted(
            (_canonical_sign(_primitive(u)), _dot(_canonical_sign(_primitive(u)), origin))
            for u in _int_kernel(diffs, n)
        )
    )

    # choose an independent coordinate subset for a lattice-preserving projection
    col_basis = _FracRowBasis(basis.rank)
    proj_cols: List[int] = []
    for j in range(n):
        column = [row[j] for row in basis.rows]
        if col_basis.add(column):
            proj_cols.append(j)
            if len(proj_cols) == dim:
                break

    if dim == 1:
        projected = [(p[proj_cols[0]],) for p in pts]
        lo = min(range(len(pts)), key=lambda i: projected[i])
        hi = max(range(len(pts)), key=lambda i: projected[i])
        vertex_ids = {lo, hi}
        facet_list = [((1,), projected[hi][0], (hi,)), ((-1,), -projected[lo][0], (lo,))]
    else:
        projected = [tuple(p[j] for j in proj_cols) for p in pts]
        facet_list, vertex_ids = _hull_fulldim(projected, dim)

    ordered = sorted(vertex_ids, key=lambda i: pts[i])
    new_index = {old: new for new, old in enumerate(ordered)}
    vertices = tuple(pts[i] for i in ordered)

    facets = []
    for normal, offset, members in facet_list:
        ambient = [0] * n
        for k, j in enumerate(proj_cols):
            ambient[j] = normal[k]
        facets.append(
            Facet(tuple(ambient), offset, tuple(sorted(new_index[i] for i in members)))
        )
    facets.sort(key=lambda f: (f.normal, f.offset))
    return LatticePolytope(n, dim, vertices, tuple(facets), equalities)


def support_function(P: LatticePolytope, w: Sequence) -> SupportSample:
    """Exact maximum of w . x over P plus the dimension of the maximizing face."""
    if not P.vertices:
        raise PolytopeInputError("empty polytope")
    w_vec = tuple(Fraction(x) for x in w)
    if len(w_vec) != P.n:
        raise PolytopeInputError(f"direction has {len(w_vec)} entries, expected {P.n}")
    values = [_dot(w_vec, v) for v in P.vertices]
    best = max(values)
    argmax = [v for v, val in zip(P.vertices, values) if val == best]
    exposed_dim = _rank([_sub(v, argmax[0]) for v in argmax[1:]])
    return SupportSample(w_vec, best, exposed_dim)


def lattice_points(P: LatticePolytope) -> List[Point]:
    """All integer points of P via a bounding-box scan filtered by the facets."""
    if not P.vertices:
        raise PolytopeInputError("empty polytope")
    lo = [min(v[i] for v in P.vertices) for i in range(P.n)]
    hi = [max(v[i] for v in P.vertices) for i in range(P.n)]
    box = 1
    for a, b in zip(lo, hi):
        box *= b - a + 1
    rows = [(f.normal, f.offset, False) for f in P.facets]
    rows += [(normal, offset, True) for normal, offset in P.equalities]
    if box > 4096 and _fits_int64(rows, lo, hi):
        grid = np.stack(
            np.meshgrid(*(np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)), indexing="ij"),
            axis=-1,
        ).reshape(-1, P.n)
        keep = np.ones(len(grid), dtype=bool)
        for normal, offset, is_eq in rows:
            vals = grid @ np.asarray(normal, dtype=np.int64)
            keep &= (vals == offset) if is_eq else (vals <= offset)
        return sorted(tuple(int(x) for x in row) for row in grid[keep])
    result = []
    for candidate in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
        ok = True
        for normal, offset, is_eq in rows:
            val = _dot(normal, candidate)
            if (is_eq and val != offset) or (not is_eq and val > offset):
                ok = False
                break
        if ok:
            result.append(candidate)
    return sorted(result)


def _fits_int64(rows, lo, hi) -> bool:
    for normal, offset, _ in rows:
        bound = sum(abs(a) * max(abs(l), abs(h)) for a, l, h in zip(normal, lo, hi))
        if bound >= 2**62 or abs(offset) >= 2**62:
            return False
    return True


def dilate(P: LatticePolytope, k: int) -> LatticePolytope:
    """Scale by a positive integer: vertices and offsets scale, normals do not."""
    if k < 1:
        raise ValueError("dilation factor must be a positive integer")
    return LatticePolytope(
        P.n,
        P.dim,
        tuple(tuple(k * x for x in v) for v in P.vertices),
        tuple(Facet(f.normal, k * f.offset, f.vertices) for f in P.facets),
        tuple((normal, k * offset) for normal, offset in P.equalities),
    )


@dataclass(frozen=True)
class AffineIso:
    """Witness for a lattice-affine isomorphism: x -> matrix @ x + translation."""

    matrix: Tuple[Tuple[Fraction, ...], ...]
    translation: Tuple[Fraction, ...]

    def apply(self, point: Sequence[int]) -> Tuple[Fraction, ...]:
        return tuple(
            _dot(row, point) + t for row, t in zip(self.matrix, self.translation)
        )


def _lattice_coordinates(vertices: Sequence[Point], n: int):
    origin = vertices[0]
    diffs = [_sub(v, origin) for v in vertices]
    basis = _saturation_basis(diffs, n)
    coords = []
    for d in diffs:
        if not basis:
            coords.append(())
            continue
        sol = _solve_fraction([[b[i] for b in basis] for i in range(n)], d)
        if sol is None or any(x.denominator != 1 for x in sol):
            raise HullError("difference vector outside the saturated lattice")
        coords.append(tuple(int(x) for x in sol))
    return origin, basis, coords


def affinely_isomorphic(P: LatticePolytope, Q: LatticePolytope):
    """Search for a lattice-affine bijection of vertex sets; returns (bool, witness).

    The map must be unimodular on the lattice of the affine hull.  Images of
    an affine basis of P's vertices are enumerated exhaustively, which is fine
    at the vertex counts that occur here.
    """
    if P.dim != Q.dim or len(P.vertices) != len(Q.vertices):
        return False, None
    dim = P.dim
    if dim == 0:
        zero = tuple(tuple(Fraction(0) for _ in range(P.n)) for _ in range(Q.n))
        return True, AffineIso(zero, tuple(Fraction(x) for x in Q.vertices[0]))

    p_origin, p_basis, p_coords = _lattice_coordinates(P.vertices, P.n)
    q_origin, q_basis, q_coords = _lattice_coordinates(Q.vertices, Q.n)
    q_coord_set = set(q_coords)

    basis_rows = _FracRowBasis(dim)
    anchor = [0]
    for i in range(1, len(p_coords)):
        if basis_rows.add(_sub(p_coords[i], p_coords[0])):
            anchor.append(i)
            if len(anchor) == dim + 1:
                break
    delta_p = [_sub(p_coords[i], p_coords[anchor[0]]) for i in anchor[1:]]

    for image in itertools.permutations(range(len(q_coords)), dim + 1):
        delta_q = [_sub(q_coords[image[k + 1]], q_coords[image[0]]) for k in range(dim)]
        # solve M @ delta_p[k] = delta_q[k]; columns of the system are delta_p
        mat_rows = []
        ok = True
        for r in range(dim):
            sol = _solve_fraction(
                [list(dp) for dp in delta_p], [dq[r] for dq in delta_q]
            )
            if sol is None:
                ok = False
                break
            mat_rows.append(sol)
        if not ok:
            continue
        if any(x.denominator != 1 for row in mat_rows for x in row):
            continue
        m_int = [[int(x) for x in row] for row in mat_rows]
        if abs(_int_det(m_int)) != 1:
            continue
        y0 = p_coords[anchor[0]]
        z0 = q_coords[image[0]]
        mapped = set()
        for y in p_coords:
            rel = _sub(y, y0)
            mapped.add(tuple(_dot(row, rel) + z for row, z in zip(m_int, z0)))
        if mapped != q_coord_set:
            continue
        witness = _ambient_witness(
            P.n, Q.n, p_origin, p_basis, q_origin, q_basis, m_int, y0, z0
        )
        return True, witness
    return False, None


def _ambient_witness(n_p, n_q, p_origin, p_basis, q_origin, q_basis, m_int, y0, z0):
    dim = len(m_int)
    gram = [[_dot(p_basis[i], p_basis[j]) for j in range(dim)] for i in range(dim)]
    # rows of (B_P B_P^T)^{-1} B_P give lattice coordinates of x - p_origin
    coord_rows = []
    for i in range(dim):
        rhs = [Fraction(1) if j == i else Fraction(0) for j in range(dim)]
        coord_rows.append(_solve_fraction(gram, rhs))
    proj = [
        [sum(coord_rows[i][k] * p_basis[k][j] for k in range(dim)) for j in range(n_p)]
        for i in range(dim)
    ]
    # ambient linear part: B_Q^T @ M @ proj  (maps R^{n_p} -> R^{n_q})
    mp = [
        [sum(Fraction(m_int[i][k]) * proj[k][j] for k in range(dim)) for j in range(n_p)]
        for i in range(dim)
    ]
    linear = [
        [sum(Fraction(q_basis[k][i]) * mp[k][j] for k in range(dim)) for j in range(n_p)]
        for i in range(n_q)
    ]
    # translation: q_origin + B_Q^T (z0 - M y0) - linear @ p_origin
    shift = [
        Fraction(z0[i]) - sum(Fraction(m_int[i][k]) * y0[k] for k in range(dim))
        for i in range(dim)
    ]
    translation = [
        Fraction(q_origin[i])
        + sum(Fraction(q_basis[k][i]) * shift[k] for k in range(dim))
        - sum(linear[i][j] * p_origin[j] for j in range(n_p))
        for i in range(n_q)
    ]
    return AffineIso(
        tuple(tuple(row) for row in linear),
        tuple(translation),
    )


def halfspace_representation(P: LatticePolytope):
    """Irredundant facet inequalities plus affine-hull equalities."""
    return (
        [(f.normal, f.offset) for f in P.facets],
        [(normal, offset) for normal, offset in P.equalities],
    )


def to_json(P: LatticePolytope) -> str:
    payload = {
        "n": P.n,
        "dim": P.dim,
        "vertices": [list(v) for v in P.vertices],
        "facets": [{"normal": list(f.normal), "offset": f.offset} for f in P.facets],
        "equalities": [
            {"normal": list(normal), "offset": offset} for normal, offset in P.equalities
        ],
    }
    return json.dumps(payload, sort_keys=True)


def from_json(text: str) -> LatticePolytope:
    """Load a polytope; the hull of the listed vertices is recomputed and
    cross-checked against any facets present in the payload."""
    try:
        payload = json.loads(text)
        vertices = [tuple(int(x) for x in v) for v in payload["vertices"]]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise PolytopeInputError(f"bad polytope JSON: {exc}") from exc
    P = convex_hull(vertices)
    declared = payload.get("facets")
    if declared:
        got = {(tuple(f.normal), f.offset) for f in P.facets}
        want = set()
        try:
            for f in declared:
                want.add((_primitive(tuple(int(x) for x in f["normal"])), int(f["offset"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise PolytopeInputError(f"bad facet entry: {exc}") from exc
        if got != want:
            raise PolytopeInputError("declared facets do not match the hull of the vertices")
    return P
