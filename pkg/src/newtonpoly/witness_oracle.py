"""Vertex oracle from witness-set line intersections.

The hypersurface is probed along a generic parametrized line; as the ambient
coordinates are stretched, the intersection points either cluster at one of n
distinguished limits on the line or run off to infinity.  Counting the
cluster sizes reads off the exposed vertex coordinate by coordinate, and the
observed convergence/divergence speeds are checked against explicit
subexponential bounds before a vertex is certified.
"""

from __future__ import annotations

import cmath
import math
import random
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .numbers import ScaledComplex
from .slp import Exponent, SparsePolynomial, Slp, evaluate_dir

LN2 = math.log(2.0)


class GenericityFailure(RuntimeError):
    """No acceptable random line after several redraws."""


class DegreeMismatchError(RuntimeError):
    """The line meets the hypersurface in fewer points than expected."""


class RootCoincidenceError(RuntimeError):
    """Two intersection points collide at the base parameter."""


class PathCrossingError(RuntimeError):
    """Two tracked paths approached within the merge guard."""


class TrackingFailureError(RuntimeError):
    """The corrector failed to converge even after step halving."""


class IndeterminateError(RuntimeError):
    """Some path settled in no region; the direction is not general enough."""


class AmbiguousClusterError(RuntimeError):
    """A path landed inside two cluster balls (excluded by construction)."""


class RateViolationError(RuntimeError):
    """A certified bound or expected slope failed on the samples."""


# ---------------------------------------------------------------------------
# line-intersection backends

class SparseLineBackend:
    """Exact term-by-term evaluation of s -> f(t^w . (s a - b)).

    Terms are rescaled by the dominant power of t before summing, so plain
    complex arithmetic suffices for any stretch that occurs in practice.
    """

    def __init__(self, poly: SparsePolynomial):
        if poly.is_zero():
            raise ValueError("the zero polynomial defines no hypersurface")
        self.poly = poly
        self.n = poly.n
        self._dots: Dict[Tuple[float, ...], Tuple[List[float], float]] = {}

    def degree_bound(self) -> int:
        return self.poly.total_degree()

    def _weights(self, w: Tuple[float, ...]):
        cached = self._dots.get(w)
        if cached is None:
            dots = [
                sum(wi * a for wi, a in zip(w, alpha)) for _, alpha in self.poly.terms
            ]
            cached = (dots, max(dots))
            self._dots[w] = cached
        return cached

    def eval_ds(self, line: "WitnessLine", s: complex, t: float, w: Sequence[float]):
        w_key = tuple(float(x) for x in w)
        dots, h = self._weights(w_key)
        lnt = math.log(t)
        p = [s * ai - bi for ai, bi in zip(line.a, line.b)]
        g = 0j
        dg = 0j
        for (coeff, alpha), dot in zip(self.poly.terms, dots):
            scale = math.exp((dot - h) * lnt) if lnt else 1.0
            if scale == 0.0:
                continue
            c = coeff.to_complex() if hasattr(coeff, "to_complex") else complex(coeff)
            c *= scale
            val = 1 + 0j
            for pi, a in zip(p, alpha):
                if a:
                    val *= pi**a
            g += c * val
            for i, a in enumerate(alpha):
                if not a:
                    continue
                dterm = a * line.a[i] * p[i] ** (a - 1)
                for j, aj in enumerate(alpha):
                    if j != i and aj:
                        dterm *= p[j] ** aj
                dg += c * dterm
        return ScaledComplex.from_complex(g), ScaledComplex.from_complex(dg)


class SlpLineBackend:
    """Black-box program evaluation of s -> f(t^w . (s a - b)) with scaled arithmetic."""

    def __init__(self, slp: Slp):
        self.slp = slp
        self.n = slp.n

    def degree_bound(self) -> int:
        degs: List[int] = []
        for ins in self.slp.instructions:
            if ins[0] == "in":
                degs.append(1)
            elif ins[0] == "const":
                degs.append(0)
            elif ins[0] == "add":
                degs.append(max(degs[ins[1]], degs[ins[2]]))
            else:
                degs.append(degs[ins[1]] + degs[ins[2]])
        return degs[self.slp.output]

    def eval_ds(self, line: "WitnessLine", s: complex, t: float, w: Sequence[float]):
        log2t = math.log2(t)
        xs = [
            ScaledComplex.from_log2(s * ai - bi, float(wi) * log2t)
            for ai, bi, wi in zip(line.a, line.b, w)
        ]
        vs = [
            ScaledComplex.from_log2(ai, float(wi) * log2t)
            for ai, wi in zip(line.a, w)
        ]
        return evaluate_dir(self.slp, xs, vs)


# ---------------------------------------------------------------------------
# lines and their constants

@dataclass(frozen=True)
class WitnessLine:
    n: int
    a: Tuple[complex, ...]
    b: Tuple[complex, ...]
    degree: int

    def ratios(self) -> Tuple[complex, ...]:
        return tuple(bi / ai for ai, bi in zip(self.a, self.b))


@dataclass(frozen=True)
class LineConstants:
    a_min: float
    a_max: float
    b_min: float
    b_max: float
    gamma: Tuple[float, ...]
    Gamma: Tuple[float, ...]
    C: float


def make_line(
    n: int,
    rng,
    backend,
    a: Optional[Sequence[complex]] = None,
    b: Optional[Sequence[complex]] = None,
    degree: Optional[int] = None,
    max_attempts: int = 5,
) -> WitnessLine:
    """Draw (or validate) a generic line: nonzero direction entries, separated
    anchor ratios, and distinct simple intersection points at t = 1."""
    rng = random.Random(rng) if isinstance(rng, int) else rng
    fixed = a is not None
    attempts = 1 if fixed else max_attempts
    last = "no attempt made"
    for _ in range(attempts):
        if fixed:
            a_vec = tuple(complex(x) for x in a)
            b_vec = tuple(complex(x) for x in b)
        else:
            a_vec = tuple(_random_entry(rng) for _ in range(n))
            b_vec = tuple(_random_entry(rng) for _ in range(n))
        if any(x == 0 for x in a_vec):
            last = "a direction entry is zero"
            continue
        ratios = [bi / ai for ai, bi in zip(a_vec, b_vec)]
        if any(
            abs(ratios[i] - ratios[j]) <= 1e-3
            for i in range(n)
            for j in range(i + 1, n)
        ):
            last = "anchor ratios are too close"
            continue
        probe = WitnessLine(n, a_vec, b_vec, degree or 0)
        try:
            roots = initial_roots(backend, probe, degree_hint=degree)
        except (DegreeMismatchError, RootCoincidenceError) as exc:
            last = str(exc)
            continue
        return WitnessLine(n, a_vec, b_vec, len(roots))
    raise GenericityFailure(f"no generic line after {attempts} attempts: {last}")


def _random_entry(rng: random.Random) -> complex:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    radius = 1.0 + 0.5 * (rng.random() - 0.5)
    return radius * complex(math.cos(angle), math.sin(angle))


def line_constants(line: WitnessLine, C: float) -> LineConstants:
    """Geometry constants of the line; cluster radii gamma keep the balls disjoint."""
    mags_a = [abs(x) for x in line.a]
    mags_b = [abs(x) for x in line.b]
    a_min = min([1.0] + mags_a)
    a_max = max([1.0] + mags_a)
    b_min = min([1.0] + mags_b)
    b_max = max([1.0] + mags_b)
    ratios = line.ratios()
    gamma = []
    big_gamma = []
    for i in range(line.n):
        seps = [abs(ratios[i] - ratios[j]) for j in range(line.n) if j != i]
        gamma.append(min([a_min] + [0.5 * s for s in seps]))
        big_gamma.append(max([2.0 / a_max] + seps))
        for s in seps:
            if gamma[i] > 0.5 * s:
                raise AmbiguousClusterError("cluster radii are not separating")
    return LineConstants(a_min, a_max, b_min, b_max, tuple(gamma), tuple(big_gamma), C)


# ---------------------------------------------------------------------------
# initial intersection points

def initial_roots(backend, line: WitnessLine, degree_hint: Optional[int] = None) -> List[complex]:
    """Roots of s -> f(line(s)) at t = 1.

    The univariate restriction is reconstructed from evaluations at roots of
    unity (confirmed on a second circle), then all roots are found at once by
    simultaneous Aberth iteration.
    """
    cap = backend.degree_bound()
    if degree_hint is not None and degree_hint > cap:
        cap = degree_hint
    if cap == 0:
        raise DegreeMismatchError("the polynomial is constant on the line")
    zeros = [0.0] * line.n

    def phi(s: complex) -> complex:
        return backend.eval_ds(line, s, 1.0, zeros)[0].to_complex()

    coeffs = _interpolate(phi, cap + 1, 1.0)
    scale = max(abs(c) for c in coeffs)
    if scale == 0:
        raise DegreeMismatchError("the polynomial vanishes identically on the line")
    deg = max((k for k, c in enumerate(coeffs) if abs(c) > 1e-9 * scale), default=0)
    coeffs2 = _interpolate(phi, cap + 2, 1.29)
    deg2 = max((k for k, c in enumerate(coeffs2) if abs(c) > 1e-9 * scale), default=0)
    if deg != deg2:
        raise DegreeMismatchError(
            f"interpolated degrees disagree between node circles ({deg} vs {deg2})"
        )
    if max(abs(a - b) for a, b in zip(coeffs[: deg + 1], coeffs2[: deg + 1])) > 1e-6 * scale:
        raise DegreeMismatchError("interpolated coefficients disagree between node circles")
    if degree_hint is not None and deg != degree_hint:
        raise DegreeMismatchError(f"expected degree {degree_hint}, interpolation found {deg}")
    if deg == 0:
        raise DegreeMismatchError("the restriction to the line is constant")

    roots = _aberth(coeffs[: deg + 1])
    for z in roots:
        bound = sum(abs(c) * max(1.0, abs(z)) ** k for k, c in enumerate(coeffs[: deg + 1]))
        if abs(_horner(coeffs[: deg + 1], z)) > 1e-10 * bound:
            raise RootCoincidenceError("a computed root has a large residual")
    for i in range(deg):
        for j in range(i + 1, deg):
            if abs(roots[i] - roots[j]) <= 1e-8:
                raise RootCoincidenceError("two intersection points coincide at t = 1")
    return roots


def _interpolate(phi: Callable[[complex], complex], count: int, radius: float) -> List[complex]:
    nodes = [radius * cmath.exp(2j * math.pi * k / count) for k in range(count)]
    values = np.array([phi(z) for z in nodes], dtype=complex)
    raw = np.fft.fft(values) / count
    return [complex(raw[k]) / radius**k for k in range(count)]


def _horner(coeffs: Sequence[complex], z: complex) -> complex:
    acc = 0j
    for c in reversed(coeffs):
        acc = acc * z + c
    return acc


def _horner_pair(coeffs: Sequence[complex], z: complex) -> Tuple[complex, complex]:
    acc = 0j
    dacc = 0j
    for c in reversed(coeffs):
        dacc = dacc * z + acc
        acc = acc * z + c
    return acc, dacc


def _aberth(coeffs: Sequence[complex], max_iter: int = 200) -> List[complex]:
    """Simultaneous root refinement; all roots converge together."""
    deg = len(coeffs) - 1
    lead = coeffs[-1]
    monic = [c / lead for c in coeffs]
    if deg == 1:
        return [-monic[0]]
    radius = 1.0 + max(abs(c) ** (1.0 / (deg - k)) for k, c in enumerate(monic[:-1]))
    z = [
        radius * cmath.exp(2j * math.pi * (k + 0.37) / deg) for k in range(deg)
    ]
    for _ in range(max_iter):
        moved = 0.0
        for k in range(deg):
            p, dp = _horner_pair(monic, z[k])
            if p == 0:
                continue
            if dp == 0:
                z[k] *= 1 + 1e-6
                moved = math.inf
                continue
            newton = p / dp
            rep = sum(1.0 / (z[k] - z[j]) for j in range(deg) if j != k)
            denom = 1.0 - newton * rep
            step = newton if denom == 0 else newton / denom
            z[k] -= step
            moved = max(moved, abs(step))
        if moved < 1e-13 * (1.0 + max(abs(x) for x in z)):
            break
    return z


# ---------------------------------------------------------------------------
# path tracking

@dataclass(frozen=True)
class TrackedPath:
    samples: Tuple[Tuple[float, complex, float], ...]
    status: str = "undecided"  # "undecided" | "diverging" | "cluster"
    cluster: Optional[int] = None


def _newton_correct(backend, line, w, s: complex, t: float):
    rel = math.inf
    for _ in range(30):
        g, dg = backend.eval_ds(line, s, t, w)
        if g.is_zero():
            return s, 0.0
        if dg.is_zero():
            return None
        quotient = g / dg
        if quotient.exponent > 64:
            return None
        step = quotient.to_complex()
        s = s - step
        rel = abs(step) / (1.0 + abs(s))
        if rel < 1e-12:
            return s, rel
    return (s, rel) if rel < 1e-9 else None


def _schedule(t_max: float, record_at: Sequence[float], density: int = 1) -> List[float]:
    ts = {1.0, float(t_max)}
    step = 2.0 ** (1.0 / density)
    t = 1.0
    while t * step < t_max:
        t *= step
        ts.add(t)
    for extra in record_at:
        if 1.0 < extra <= t_max:
            ts.add(float(extra))
    return sorted(ts)


# a path this close to an anchor ratio can never leave its cluster ball again;
# freezing it avoids meaningless sub-noise corrections
FREEZE_CLUSTER = 1e-8
# beyond this modulus a path is certainly diverging and further growth would
# only exhaust the double range
FREEZE_ESCAPE = 1e12


def track_paths(
    backend,
    line: WitnessLine,
    w: Sequence[float],
    t_max: float = 1e8,
    record_at: Sequence[float] = (),
) -> List[TrackedPath]:
    """Continue every intersection point from t = 1 to t_max.

    Prediction extrapolates the previous slope in log t; correction is Newton
    in s; failed corrections shrink the step in log t adaptively.  Paths deep
    inside a cluster ball or far beyond the escape radius are frozen (their
    later samples repeat the frozen value).  A pairwise merge guard runs over
    the active paths at every schedule point.
    """
    w_vec = [float(x) for x in w]
    for density in (1, 2):
        try:
            return _track_once(backend, line, w_vec, t_max, record_at, density)
        except PathCrossingError:
            if density == 2:
                raise
    raise AssertionError("unreachable")


def _track_once(backend, line, w_vec, t_max, record_at, density):
    """All paths advance in lockstep on a shared adaptive substep.

    Lockstep makes hops detectable: a corrected point that moved by a sizable
    fraction of the distance to the nearest other path has likely been
    captured by that path's root, so the substep is rejected and halved.
    """
    roots = initial_roots(backend, line)
    schedule = _schedule(t_max, record_at, density)
    ratios = line.ratios()
    count = len(roots)

    def is_frozen(s: complex) -> bool:
        if abs(s) > FREEZE_ESCAPE:
            return True
        return any(abs(s - r) < FREEZE_CLUSTER for r in ratios)

    s_cur: List[complex] = list(roots)
    slopes: List[Optional[complex]] = [None] * count
    frozen = [is_frozen(s) for s in s_cur]
    rels = [0.0] * count
    trails: List[List[Tuple[float, complex, float]]] = [[(1.0, s, 0.0)] for s in s_cur]

    # with no slope estimate yet the first substep must be small enough that
    # no root can outrun its tracker: root log-velocities scale like the
    # largest dot product of w with the exponents
    dynamic_scale = sum(abs(x) for x in w_vec) * max(1, backend.degree_bound())
    first_cap = min(LN2, 0.25 / (1.0 + dynamic_scale))

    position = math.log(schedule[0])
    for t_next in schedule[1:]:
        end = math.log(t_next)
        step = end - position
        failures = 0
        while position < end - 1e-15 and not all(frozen):
            step = min(step, end - position)
            for i in range(count):
                if frozen[i]:
                    continue
                if slopes[i] is None:
                    step = min(step, first_cap)
                elif abs(slopes[i]) * step > 0.5 * (1.0 + abs(s_cur[i])):
                    step = min(step, 0.5 * (1.0 + abs(s_cur[i])) / abs(slopes[i]))
            preds = [
                s_cur[i] + slopes[i] * step if (not frozen[i] and slopes[i] is not None) else s_cur[i]
                for i in range(count)
            ]
            t_new = math.exp(position + step)
            proposal: List[Optional[Tuple[complex, float]]] = [None] * count
            ok = True
            for i in range(count):
                if frozen[i]:
                    continue
                corrected = _newton_correct(backend, line, w_vec, preds[i], t_new)
                if corrected is None:
                    ok = False
                    break
                s_new, rel = corrected
                spacing = min(
                    (abs(preds[i] - preds[j]) for j in range(count) if j != i),
                    default=math.inf,
                )
                moved = abs(s_new - preds[i])
                if moved > 0.45 * spacing and moved > 1e-9 * (1.0 + abs(s_new)):
                    ok = False  # landed suspiciously close to a neighbouring path
                    break
                proposal[i] = (s_new, rel)
            if not ok:
                step *= 0.5
                failures += 1
                if failures > 300 or step < 1e-13:
                    raise TrackingFailureError(
                        f"corrector stalled near t={math.exp(position):.6g}"
                    )
                continue
            for i in range(count):
                if frozen[i] or proposal[i] is None:
                    continue
                s_new, rel = proposal[i]
                slopes[i] = (s_new - s_cur[i]) / step
                s_cur[i] = s_new
                rels[i] = rel
                if is_frozen(s_new):
                    frozen[i] = True
            position += step
            step *= 1.4
        position = end
        active = [s_cur[i] for i in range(count) if not frozen[i]]
        for i in range(len(active)):
            for j in range(i + 1, len(active)):
                if abs(active[i] - active[j]) < 1e-10:
                    raise PathCrossingError(f"two paths merged at t={t_next:g}")
        for i in range(count):
            trails[i].append((t_next, s_cur[i], 0.0 if frozen[i] else rels[i]))
    return [TrackedPath(tuple(trail)) for trail in trails]


# ---------------------------------------------------------------------------
# classification and certification

@dataclass(frozen=True)
class VertexCertificate:
    beta: Exponent
    w: Tuple[float, ...]
    degree: int
    t_entry: float
    assignments: Tuple[Tuple[str, Optional[int]], ...]
    rate_checks: Optional[Tuple[bool, ...]] = None
    slopes_ok: Optional[bool] = None


def classify_paths(
    paths: Sequence[TrackedPath], line: WitnessLine, consts: LineConstants
) -> Tuple[List[TrackedPath], VertexCertificate]:
    """Assign every path to a cluster or to infinity and count the vertex.

    A certificate is only issued when every path lands in exactly one region
    at the final stretch; the entry time is the earliest schedule point after
    which no path leaves its region again.
    """
    ratios = line.ratios()
    escape = 2.0 * consts.b_max / consts.a_min
    assignments: List[Tuple[str, Optional[int]]] = []
    classified: List[TrackedPath] = []
    for idx, path in enumerate(paths):
        _, s_end, _ = path.samples[-1]
        hits = [i for i in range(line.n) if abs(s_end - ratios[i]) <= consts.gamma[i]]
        if len(hits) > 1:
            raise AmbiguousClusterError(f"path {idx} lies in {len(hits)} cluster balls")
        if hits:
            assignments.append(("cluster", hits[0]))
            classified.append(replace(path, status="cluster", cluster=hits[0]))
        elif abs(s_end) > escape:
            assignments.append(("diverging", None))
            classified.append(replace(path, status="diverging"))
        else:
            raise IndeterminateError(
                f"path {idx} ended at |s|={abs(s_end):.3g}, in no region"
            )

    def in_region(idx: int, s: complex) -> bool:
        kind, cluster = assignments[idx]
        if kind == "cluster":
            return abs(s - ratios[cluster]) <= consts.gamma[cluster]
        return abs(s) > escape

    length = len(paths[0].samples)
    if any(len(p.samples) != length for p in paths):
        raise AssertionError("paths were tracked on different schedules")
    entry_idx = length - 1
    for k in range(length - 1, -1, -1):
        if all(in_region(i, p.samples[k][1]) for i, p in enumerate(paths)):
            entry_idx = k
        else:
            break
    t_entry = paths[0].samples[entry_idx][0]

    beta = [0] * line.n
    diverging = 0
    for kind, cluster in assignments:
        if kind == "cluster":
            beta[cluster] += 1
        else:
            diverging += 1
    degree = len(paths)
    assert sum(beta) + diverging == degree
    cert = VertexCertificate(
        tuple(beta), (), degree, t_entry, tuple(assignments)
    )
    return classified, cert


@dataclass(frozen=True)
class RateParams:
    """Exponents, constants, and expected log-log slopes for certification."""

    gap_conv: Optional[float]
    gap_div: Optional[float]
    C: float
    n_terms: int
    gamma: Tuple[float, ...]
    slope_conv: Optional[Dict[int, Optional[float]]] = None
    slope_div: Optional[float] = None
    fitted: bool = False


def rate_params_from_support(
    support: Sequence[Exponent],
    coeff_mags: Sequence[float],
    w: Sequence[float],
    consts: LineConstants,
    table_variant: bool = False,
    C: Optional[float] = None,
) -> RateParams:
    """Exact certification parameters from a known exponent set.

    ``table_variant`` reproduces the reference convergence tables: cluster radii
    are replaced by their upper counterparts and the divergence exponent uses
    the gap to the top-degree terms (the empirically observed growth rate)
    instead of the worst-case gap.
    """
    dots = [sum(float(wi) * a for wi, a in zip(w, alpha)) for alpha in support]
    h = max(dots)
    face = [k for k, d in enumerate(dots) if d >= h - 1e-12]
    if len(face) != 1:
        raise IndeterminateError("the direction exposes more than one support point")
    beta_idx = face[0]
    beta = support[beta_idx]
    off_face = [k for k in range(len(support)) if k != beta_idx]
    gap_conv = min((h - dots[k] for k in off_face), default=None)
    total_deg = max(sum(alpha) for alpha in support)
    top = [k for k in range(len(support)) if sum(support[k]) == total_deg]
    gap_div_agg = h - max(dots[k] for k in top) if top else None
    slope_conv: Dict[int, Optional[float]] = {}
    for i in range(len(beta)):
        if beta[i] == 0:
            continue
        relevant = [dots[k] for k in off_face if support[k][i] == 0]
        slope_conv[i] = (h - max(relevant)) if relevant else None
    if C is None:
        C = max(coeff_mags) / coeff_mags[beta_idx]
    if table_variant:
        return RateParams(
            gap_conv=gap_conv,
            gap_div=gap_div_agg,
            C=C,
            n_terms=len(support),
            gamma=consts.Gamma,
            slope_conv=slope_conv,
            slope_div=gap_div_agg,
        )
    return RateParams(
        gap_conv=gap_conv,
        gap_div=gap_conv,  # worst-case exponent is certified for divergence too
        C=C,
        n_terms=len(support),
        gamma=consts.gamma,
        slope_conv=slope_conv,
        slope_div=gap_div_agg,
    )


def rate_params_from_sparse(
    poly: SparsePolynomial,
    w: Sequence[float],
    consts: LineConstants,
    table_variant: bool = False,
    C: Optional[float] = None,
) -> RateParams:
    mags = []
    for coeff, _ in poly.terms:
        mags.append(abs(coeff.to_complex() if hasattr(coeff, "to_complex") else complex(coeff)))
    return rate_params_from_support(poly.support(), mags, w, consts, table_variant, C=C)


def fitted_rate_params(
    paths: Sequence[TrackedPath],
    cert: VertexCertificate,
    line: WitnessLine,
    consts: LineConstants,
    C: Optional[float] = None,
    n_terms: Optional[int] = None,
) -> RateParams:
    """Certification parameters when nothing is known about the coefficients.

    The decay/growth exponents are fitted from the tracked samples (with a
    safety margin), so the subexponential behaviour itself is what gets
    certified; C defaults to 10.
    """
    if C is None:
        warnings.warn("no coefficient-ratio bound supplied; defaulting to C = 10")
        C = 10.0
    if n_terms is None:
        n_terms = math.comb(line.n + cert.degree, cert.degree)
    slopes = _aggregate_slopes(paths, cert, line)
    conv_fits = [-s for key, s in slopes.items() if key != "diverging" and s is not None]
    div_fit = slopes.get("diverging")
    gap_conv = 0.9 * min(conv_fits) if conv_fits else None
    gap_div = 0.9 * div_fit if div_fit is not None else None
    return RateParams(
        gap_conv=gap_conv,
        gap_div=gap_div,
        C=C,
        n_terms=n_terms,
        gamma=consts.gamma,
        fitted=True,
    )


# below this distance (or beyond the escape freeze) a double-precision sample
# carries no rate information; bound checks and slope fits ignore it
MEASUREMENT_FLOOR = 1e-7


def _aggregate_slopes(paths, cert, line) -> Dict:
    """Log-log slopes of the per-cluster distance products and the divergence product.

    Only samples inside the trustworthy measurement band contribute: past the
    entry time, above the noise floor, and below the escape freeze.
    """
    ratios = line.ratios()
    groups: Dict = {}
    for path, (kind, cluster) in zip(paths, cert.assignments):
        key = "diverging" if kind == "diverging" else cluster
        groups.setdefault(key, []).append(path)
    out: Dict = {}
    for key, members in groups.items():
        ts = []
        ys = []
        for pos, (t, _, _) in enumerate(members[0].samples):
            if t <= cert.t_entry:
                continue
            acc = 0.0
            usable = True
            for path in members:
                s = path.samples[pos][1]
                if key == "diverging":
                    value = abs(s)
                    usable &= value < FREEZE_ESCAPE
                else:
                    value = abs(s - ratios[key])
                    usable &= value > MEASUREMENT_FLOOR
                if not usable:
                    break
                acc += math.log(value)
            if usable:
                ts.append(t)
                ys.append(acc)
        if len(ts) < 3:
            out[key] = None
            continue
        # prefer the asymptotic tail when enough of it is measurable
        if len(ts) > 6:
            ts, ys = ts[len(ts) // 2 :], ys[len(ys) // 2 :]
        out[key] = float(np.polyfit(np.log(ts), ys, 1)[0])
    return out


def convergence_bound(consts: LineConstants, rates: RateParams, degree: int, i: int, t: float) -> float:
    base = consts.a_max / consts.a_min * (1.0 + consts.Gamma[i] / rates.gamma[i])
    return t ** (-rates.gap_conv) * rates.C * rates.n_terms * base**degree


def divergence_bound(consts: LineConstants, rates: RateParams, degree: int, t: float) -> float:
    base = consts.a_min / (2.0 * (consts.a_max + consts.b_max))
    return t**rates.gap_div / (rates.C * rates.n_terms) * base**degree


def divergence_bound_statement(consts: LineConstants, rates: RateParams, degree: int, t: float) -> float:
    """Alternative constant with a_min in place of b_max; kept for reference."""
    base = consts.a_min / (2.0 * (consts.a_max + consts.a_min))
    return t**rates.gap_div / (rates.C * rates.n_terms) * base**degree


def verify_rates(
    paths: Sequence[TrackedPath],
    cert: VertexCertificate,
    consts: LineConstants,
    line: WitnessLine,
    w: Sequence[float],
    rates: RateParams,
    slope_tolerance: float = 0.10,
) -> VertexCertificate:
    """Check the subexponential bounds at every sample past entry, and that
    fitted log-log slopes match the expected decay/growth rates."""
    ratios = line.ratios()
    beta = cert.beta
    total = sum(beta)
    checks: List[bool] = []
    for path, (kind, cluster) in zip(paths, cert.assignments):
        ok = True
        for t, s, _ in path.samples:
            if t <= cert.t_entry:
                continue
            if kind == "cluster":
                if rates.gap_conv is None:
                    continue
                dist = abs(s - ratios[cluster])
                if dist <= MEASUREMENT_FLOOR:
                    continue  # saturated sample, no information
                if dist ** beta[cluster] > convergence_bound(consts, rates, cert.degree, cluster, t):
                    ok = False
                    break
            else:
                if rates.gap_div is None:
                    continue
                mag = abs(s)
                if mag >= FREEZE_ESCAPE:
                    continue  # frozen repetition of an escaped value
                if mag ** (cert.degree - total) < divergence_bound(consts, rates, cert.degree, t):
                    ok = False
                    break
        checks.append(ok)
    if not all(checks):
        bad = [i for i, ok in enumerate(checks) if not ok]
        raise RateViolationError(f"certified bounds failed on paths {bad}")

    slopes_ok = True
    if not rates.fitted:
        fitted = _aggregate_slopes(paths, cert, line)
        for key, slope in fitted.items():
            if slope is None:
                continue
            if key == "diverging":
                expected = rates.slope_div
            else:
                expected = (rates.slope_conv or {}).get(key)
                expected = -expected if expected is not None else None
            if expected is None or expected == 0:
                continue
            if abs(slope - expected) > slope_tolerance * abs(expected):
                slopes_ok = False
    if not slopes_ok:
        raise RateViolationError("observed slopes disagree with the expected rates")
    return replace(cert, w=tuple(float(x) for x in w), rate_checks=tuple(checks), slopes_ok=slopes_ok)


# ---------------------------------------------------------------------------
# the composed query

@dataclass
class WitnessConfig:
    t_max: float = 1e8
    record_at: Tuple[float, ...] = ()
    retries: int = 3
    rng: Optional[random.Random] = None
    rate_source: Optional[Callable] = None  # w -> RateParams
    C: Optional[float] = None
    n_terms: Optional[int] = None


def witness_vertex_query(
    backend,
    line: WitnessLine,
    consts: LineConstants,
    w: Sequence,
    config: Optional[WitnessConfig] = None,
) -> VertexCertificate:
    """Track, classify, and certify one direction; perturb and retry when the
    direction turns out not to be general enough."""
    config = config or WitnessConfig()
    rng = config.rng or random.Random(1)
    w_cur = list(w)
    last: Optional[Exception] = None
    for attempt in range(config.retries + 1):
        try:
            paths = track_paths(
                backend, line, [float(x) for x in w_cur], config.t_max, config.record_at
            )
            paths, cert = classify_paths(paths, line, consts)
            if config.rate_source is not None:
                rates = config.rate_source(w_cur)
            else:
                rates = fitted_rate_params(
                    paths, cert, line, consts, C=config.C, n_terms=config.n_terms
                )
            return verify_rates(paths, cert, consts, line, w_cur, rates)
        except (IndeterminateError, RateViolationError, PathCrossingError) as exc:
            last = exc
            exact = all(isinstance(x, (int, Fraction)) for x in w_cur)
            bump = [rng.choice((-1, 0, 1)) for _ in range(line.n)]
            if not any(bump):
                bump[rng.randrange(line.n)] = 1
            if exact:
                w_cur = [Fraction(x) + Fraction(r, 8) for x, r in zip(w_cur, bump)]
            else:
                w_cur = [float(x) + r / 8.0 for x, r in zip(w_cur, bump)]
    raise IndeterminateError(f"no certifiable direction near {tuple(map(float, w))}: {last}")
