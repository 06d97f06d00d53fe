"""Vertex and support-function oracles from black-box evaluation.

Two query styles:

* deterministic vertex queries: given a coefficient cap, a coefficient-ratio
  cap, and a finite exponent superset, a single evaluation at a certified
  stretch factor pins down the exposed vertex;

* adaptive support queries: for rational directions the support value lies in
  a known discrete group, so a 1/tau-convergent sequence of log-magnitude
  ratios identifies it without any coefficient information.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from scipy.optimize import linprog

from .polytope import LatticePolytope, convex_hull
from .slp import Exponent, Slp, evaluate, scaled_point

E_INV = math.exp(-1.0)


class NotGenericError(ValueError):
    """Two candidate exponents have (numerically) equal dot products with w."""


class NoUniqueCandidateError(RuntimeError):
    """The measured ratio does not single out one candidate exponent."""


class EvaluationZeroError(RuntimeError):
    """f vanished exactly at the query point."""


class NoConvergenceError(RuntimeError):
    """The support estimate did not settle on a group element."""


class UnboundedError(RuntimeError):
    """The requested directions do not cut out a bounded region."""


@dataclass(frozen=True)
class EvalBounds:
    """Coefficient log-magnitude cap, log-ratio cap, and exponent superset."""

    delta: float
    lam: float
    superset: Tuple[Exponent, ...]

    def __post_init__(self):
        if self.delta < 1 or self.lam < 1:
            raise ValueError("delta and lambda must both be at least 1")
        if not self.superset:
            raise ValueError("the exponent superset must be nonempty")
        if len(set(self.superset)) != len(self.superset):
            raise ValueError("the exponent superset contains duplicates")


@dataclass(frozen=True)
class DirectionGap:
    w: Tuple
    d_w: float


@dataclass(frozen=True)
class SupportEstimate:
    w: Tuple[Fraction, ...]
    group_gen: Fraction
    samples: Tuple[Tuple[float, float], ...]
    h_value: Optional[Fraction]


@dataclass(frozen=True)
class VertexAnswer:
    beta: Exponent
    ratio: float
    t: float
    d_w: float


def min_gap(B: Sequence[Exponent], w: Sequence) -> DirectionGap:
    """Smallest pairwise separation of {w . beta : beta in B}; exact for rational w."""
    if len(B) < 2:
        raise ValueError("need at least two candidate exponents")
    exact = all(isinstance(x, (int, Fraction)) for x in w)
    if exact:
        w_vec = [Fraction(x) for x in w]
        dots = sorted(sum(wi * a for wi, a in zip(w_vec, beta)) for beta in B)
        gap = min(b - a for a, b in zip(dots, dots[1:]))
        if gap == 0:
            raise NotGenericError(f"direction {tuple(w)} does not separate the candidates")
        return DirectionGap(tuple(w), float(gap))
    dots = sorted(sum(float(wi) * a for wi, a in zip(w, beta)) for beta in B)
    gap = min(b - a for a, b in zip(dots, dots[1:]))
    if gap < 1e-12:
        raise NotGenericError(f"direction {tuple(w)} does not separate the candidates")
    return DirectionGap(tuple(w), gap)


def threshold_t(bounds: EvalBounds, gap: DirectionGap) -> float:
    """Stretch factors above this certify a vertex query for these bounds."""
    if gap.d_w <= 0:
        raise ValueError("the direction gap must be positive")
    top = max(
        2.0 * bounds.lam,
        2.0 * (bounds.delta + E_INV),
        bounds.lam + math.log(len(bounds.superset)) + 1.0,
    )
    return math.exp(top / gap.d_w)


def vertex_query(
    f: Slp,
    bounds: EvalBounds,
    w: Sequence,
    t: Optional[float] = None,
    rng: Optional[random.Random] = None,
) -> VertexAnswer:
    """Identify the exposed vertex from one evaluation at a large stretch.

    The default evaluation point is all-ones; if the value vanishes exactly or
    no unique candidate emerges, a fresh random unit-modulus point is tried
    twice before giving up.
    """
    gap = min_gap(bounds.superset, w)
    if t is None:
        t = 2.0 * threshold_t(bounds, gap)
    elif math.log(t) * gap.d_w <= 0:
        raise ValueError("stretch factor must exceed 1")
    rng = rng or random.Random(0)
    w_float = [float(x) for x in w]
    log_t = math.log(t)
    x = [1.0 + 0.0j] * f.n
    last_error: Optional[Exception] = None
    for attempt in range(3):
        value = evaluate(f, scaled_point(t, w_float, x))
        if value.is_zero():
            last_error = EvaluationZeroError("f vanished at the query point")
        else:
            ratio = value.log_abs() / log_t
            near = [
                beta
                for beta in bounds.superset
                if abs(sum(wi * a for wi, a in zip(w_float, beta)) - ratio) < gap.d_w / 2
            ]
            if len(near) == 1:
                return VertexAnswer(near[0], ratio, t, gap.d_w)
            last_error = NoUniqueCandidateError(
                f"{len(near)} candidates within d_w/2 of the measured ratio {ratio:.6f}"
            )
        x = [complex(math.cos(a), math.sin(a)) for a in (rng.uniform(0, 2 * math.pi) for _ in range(f.n))]
    raise last_error


def group_generator(w: Sequence[Fraction]) -> Fraction:
    """Positive generator of {w . beta : beta integral} for rational nonzero w."""
    fracs = [Fraction(x) for x in w]
    if all(x == 0 for x in fracs):
        raise ValueError("the direction must be nonzero")
    lcd = 1
    for x in fracs:
        lcd = lcd * x.denominator // math.gcd(lcd, x.denominator)
    ints = [int(x * lcd) for x in fracs]
    g = 0
    for v in ints:
        g = math.gcd(g, abs(v))
    return Fraction(g, lcd)


def support_estimate(
    f: Slp,
    w: Sequence,
    x: Optional[Sequence[complex]] = None,
    tau0: float = 4.0,
    growth: float = 1.5,
    max_steps: int = 200,
    tol: Optional[float] = None,
    rng: Optional[random.Random] = None,
    retries: int = 2,
) -> SupportEstimate:
    """Estimate the support value in direction w by monitoring log|f(e^{tau w}. x)| / tau.

    The estimate converges like 1/tau to a multiple of the direction's group
    generator; convergence is declared when three consecutive estimates round
    to the same multiple with shrinking errors below ``tol``.
    """
    if not all(isinstance(v, (int, Fraction)) for v in w):
        raise TypeError("support estimates need exact rational direction entries")
    w_vec = tuple(Fraction(v) for v in w)
    gen = group_generator(w_vec)
    gen_f = float(gen)
    if tol is None:
        tol = 0.25 * gen_f
    rng = rng or random.Random(0)
    w_float = [float(v) for v in w_vec]

    attempts = retries + 1
    samples: List[Tuple[float, float]] = []
    for attempt in range(attempts):
        if x is None or attempt > 0:
            point = [
                complex(math.cos(a), math.sin(a))
                for a in (rng.uniform(0, 2 * math.pi) for _ in range(f.n))
            ]
        else:
            point = [complex(v) for v in x]
        samples = []
        history: List[Tuple[int, float]] = []
        tau = tau0
        failed = False
        for _ in range(max_steps):
            value = evaluate(f, scaled_point(math.e, [wi * tau for wi in w_float], point))
            if value.is_zero():
                failed = True
                break
            est = value.log_abs() / tau
            samples.append((tau, est))
            multiple = round(est / gen_f)
            dist = abs(est - multiple * gen_f)
            history.append((multiple, dist))
            if len(history) >= 3:
                (m0, d0), (m1, d1), (m2, d2) = history[-3:]
                if m0 == m1 == m2 and d0 >= d1 >= d2 and d2 < tol:
                    return SupportEstimate(w_vec, gen, tuple(samples), Fraction(m2) * gen)
            tau *= growth
        if not failed:
            break  # schedule exhausted without convergence; a new x will not help more
    raise NoConvergenceError(
        f"no 1/tau convergence in direction {tuple(float(v) for v in w_vec)}"
    )


def _box_bounds(directions: Sequence[Sequence[Fraction]], values: Sequence[Fraction], n: int) -> List[int]:
    """Per-coordinate integer maxima of {x >= 0, W x <= h}; raises if unbounded."""
    a_ub = [[float(v) for v in row] for row in directions]
    b_ub = [float(v) for v in values]
    his = []
    for i in range(n):
        cost = [0.0] * n
        cost[i] = -1.0
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * n, method="highs")
        if res.status == 3:
            raise UnboundedError(f"coordinate {i + 1} is unbounded under the given directions")
        if res.status != 0:
            raise UnboundedError(f"direction system is infeasible or ill-posed (status {res.status})")
        his.append(int(math.floor(-res.fun + 1e-6)) + 1)
    return his


def adaptive_superset(
    f: Slp,
    n: int,
    directions: Sequence[Sequence],
    rng: Optional[random.Random] = None,
) -> Tuple[List[Exponent], List[Tuple[Tuple[Fraction, ...], Fraction]]]:
    """Lattice points of the region cut out by estimated support values.

    Returns the candidate exponents and the (direction, value) pairs that
    produced them; the true support is always contained in the candidates.
    """
    rng = rng or random.Random(0)
    dir_vecs = [tuple(Fraction(v) for v in d) for d in directions]
    if any(len(d) != n for d in dir_vecs):
        raise ValueError(f"directions must have {n} entries")
    cuts = []
    for d in dir_vecs:
        est = support_estimate(f, d, rng=rng)
        cuts.append((d, est.h_value))
    his = _box_bounds([c[0] for c in cuts], [c[1] for c in cuts], n)
    points: List[Exponent] = []
    for candidate in itertools.product(*(range(h + 1) for h in his)):
        ok = True
        for d, h in cuts:
            if sum(di * ci for di, ci in zip(d, candidate)) > h:
                ok = False
                break
        if ok:
            points.append(candidate)
    if not points:
        raise UnboundedError("no lattice points satisfy the estimated cuts")
    return points, cuts


def bounding_polytope(
    f: Slp,
    n: int,
    directions: Sequence[Sequence],
    rng: Optional[random.Random] = None,
) -> LatticePolytope:
    """Hull of the integer points allowed by the estimated support cuts.

    The result contains the Newton polytope of f, and its lattice points form
    a valid candidate superset for deterministic vertex queries.
    """
    points, _ = adaptive_superset(f, n, directions, rng=rng)
    return convex_hull(points)
