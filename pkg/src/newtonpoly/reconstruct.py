"""Drive a vertex oracle to a complete Newton polytope.

The loop keeps an exact hull of the certified vertices found so far and, for
every hull facet, asks the oracle about a slightly perturbed outer normal.
The perturbation is small enough (in exact rational arithmetic) that the
answer must lie on the face the facet normal exposes: if it lies beyond the
facet the hull grows, if it lies on the facet the facet is confirmed as a
facet of the true polytope.  The polytope is complete when every facet (and,
for lower-dimensional polytopes, every affine-hull equality) is confirmed.
"""

from __future__ import annotations

import math
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import eval_oracle as ev
from . import witness_oracle as wo
from .polytope import LatticePolytope, Point, convex_hull, support_function
from .slp import Exponent, Slp


class OracleIndeterminate(RuntimeError):
    """The oracle could not certify a vertex for this direction."""


class OracleInconsistent(RuntimeError):
    """The oracle returned a point strictly inside the current hull."""


class OracleExhausted(RuntimeError):
    """No certified answers at all; nothing to reconstruct from."""


# ---------------------------------------------------------------------------
# oracle adapters

class EvalVertexOracle:
    """Vertex oracle backed by black-box evaluation.

    Two modes: deterministic queries against user-supplied coefficient bounds
    and a candidate superset, or fully adaptive queries that first estimate
    support values to build the candidate set, then identify vertices by their
    exact support value.
    """

    kind = "eval"

    def __init__(self, slp: Slp, n: int, superset: Sequence[Exponent], bounds=None, rng=None):
        self.slp = slp
        self.n = n
        self.superset = [tuple(p) for p in superset]
        self.bounds = bounds
        self.rng = rng or random.Random(0)
        self.coord_bound = max(1, max((max(p) for p in self.superset), default=1))
        self._matrix = np.asarray(self.superset, dtype=np.int64)
        # candidates still compatible with every support cut seen so far;
        # the true support always survives, imposters get peeled away
        self._live = np.ones(len(self.superset), dtype=bool)
        self._cache: Dict[Tuple, Point] = {}
        self._support_cache: Dict[Tuple, Fraction] = {}
        self._lock = threading.Lock()  # pruning must not race under --jobs

    @classmethod
    def from_bounds(cls, slp: Slp, bounds: ev.EvalBounds, rng=None) -> "EvalVertexOracle":
        n = len(bounds.superset[0])
        return cls(slp, n, bounds.superset, bounds=bounds, rng=rng)

    @classmethod
    def adaptive(
        cls,
        slp: Slp,
        n: int,
        directions: Optional[Sequence[Sequence[int]]] = None,
        rng=None,
    ) -> "EvalVertexOracle":
        if directions is None:
            directions = [tuple(1 if j == i else 0 for j in range(n)) for i in range(n)]
        superset, _ = ev.adaptive_superset(slp, n, directions, rng=rng)
        return cls(slp, n, superset, bounds=None, rng=rng)

    def query(self, w: Sequence) -> Point:
        key = tuple(Fraction(x) for x in w)
        if key in self._cache:
            return self._cache[key]
        if self.bounds is not None:
            beta = self._query_bounds(key)
        else:
            beta = self._query_adaptive(key)
        self._cache[key] = beta
        return beta

    def _query_bounds(self, w) -> Point:
        try:
            answer = ev.vertex_query(self.slp, self.bounds, w, rng=self.rng)
        except (ev.NotGenericError, ev.NoUniqueCandidateError, ev.EvaluationZeroError) as exc:
            raise OracleIndeterminate(str(exc)) from exc
        return answer.beta

    def _query_adaptive(self, w) -> Point:
        h = self.support(w)
        scaled, target = self._scaled_cut(w, h)
        dots = self._dots(scaled)
        hits = np.nonzero(self._live & (dots == target))[0]
        if len(hits) != 1:
            raise OracleIndeterminate(
                f"{len(hits)} candidate exponents attain the support value"
            )
        return tuple(int(x) for x in self._matrix[hits[0]])

    @staticmethod
    def _scaled_cut(w, h: Fraction):
        lcd = 1
        for x in w:
            lcd = lcd * x.denominator // math.gcd(lcd, x.denominator)
        lcd = lcd * h.denominator // math.gcd(lcd, h.denominator)
        return [int(x * lcd) for x in w], int(h * lcd)

    def _dots(self, scaled: Sequence[int]) -> np.ndarray:
        bound = sum(abs(s) * self.coord_bound for s in scaled)
        if bound >= 2**62:
            return np.asarray(
                [sum(s * int(c) for s, c in zip(scaled, row)) for row in self.superset],
                dtype=object,
            )
        return self._matrix @ np.asarray(scaled, dtype=np.int64)

    def support(self, w: Sequence) -> Fraction:
        key = tuple(Fraction(x) for x in w)
        if key in self._support_cache:
            return self._support_cache[key]
        try:
            est = ev.support_estimate(self.slp, key, rng=self.rng)
        except ev.NoConvergenceError as exc:
            raise OracleIndeterminate(str(exc)) from exc
        scaled, target = self._scaled_cut(key, est.h_value)
        with self._lock:
            self._support_cache[key] = est.h_value
            self._live &= self._dots(scaled) <= target
        return est.h_value


class WitnessVertexOracle:
    """Vertex oracle backed by witness-set path tracking."""

    kind = "witness"

    def __init__(
        self,
        backend,
        line: wo.WitnessLine,
        consts: wo.LineConstants,
        config: Optional[wo.WitnessConfig] = None,
    ):
        self.backend = backend
        self.line = line
        self.consts = consts
        base = config or wo.WitnessConfig()
        # the reconstruction driver does its own (cone-safe) retries
        base.retries = 0
        self.config = base
        self.n = line.n
        self.coord_bound = max(1, line.degree)
        self._cache: Dict[Tuple, Point] = {}
        self.certificates: List[wo.VertexCertificate] = []

    def query(self, w: Sequence) -> Point:
        key = tuple(Fraction(x) for x in w)
        if key in self._cache:
            return self._cache[key]
        try:
            cert = wo.witness_vertex_query(
                self.backend, self.line, self.consts, list(key), self.config
            )
        except (
            wo.IndeterminateError,
            wo.RateViolationError,
            wo.PathCrossingError,
            wo.TrackingFailureError,
        ) as exc:
            raise OracleIndeterminate(str(exc)) from exc
        self.certificates.append(cert)
        self._cache[key] = cert.beta
        return cert.beta

    support = None


# ---------------------------------------------------------------------------
# directions

def random_direction(
    n: int,
    bound: int,
    rng: random.Random,
    candidates: Optional[Sequence[Point]] = None,
    max_attempts: int = 256,
) -> Tuple[int, ...]:
    """Nonzero integer direction, redrawn until it separates the candidates.

    Small candidate sets get full pairwise separation; for sets too large for
    any bounded integer vector to separate (pigeonhole), a unique maximizer
    and minimizer are required instead.  The bound doubles on repeated failure.
    """
    if bound < 1:
        raise ValueError("direction bound must be at least 1")
    full_check = candidates is not None and len(candidates) <= 2048
    for attempt in range(max_attempts):
        if attempt and attempt % 32 == 0:
            bound *= 2
        w = tuple(rng.randint(-bound, bound) for _ in range(n))
        if not any(w):
            continue
        if candidates is None:
            return w
        dots = sorted(sum(wi * c for wi, c in zip(w, cand)) for cand in candidates)
        if full_check:
            if all(a != b for a, b in zip(dots, dots[1:])):
                return w
        else:
            if dots[0] != dots[1] and dots[-1] != dots[-2]:
                return w
    raise OracleIndeterminate(f"no separating direction found in {max_attempts} draws")


def facet_query_direction(
    normal: Sequence[int], coord_bound: int, r_bound: int, rng: random.Random
) -> Tuple[int, ...]:
    """Outer normal nudged into general position without leaving the facet's cone.

    The tilt r has integer entries and the normal is scaled by
    M > n * r_bound * coord_bound, so for any two candidate exponents the
    scaled normal part dominates the tilt: every maximizer of M*u + r also
    maximizes u, i.e. the oracle's answer lands on the facet's exposed face.
    Keeping the direction integral keeps all dot-product gaps at least 1,
    which is what lets the witness tracker converge at a usable rate.
    """
    n = len(normal)
    m = n * r_bound * coord_bound + 1
    while True:
        r = [rng.randint(-r_bound, r_bound) for _ in range(n)]
        if any(r):
            break
    return tuple(m * u + ri for u, ri in zip(normal, r))


# ---------------------------------------------------------------------------
# reconstruction

@dataclass
class ReconstructConfig:
    seed: int = 0
    seed_budget: Optional[int] = None  # default 8 n certified queries
    direction_bound: int = 5
    facet_retries: int = 4
    jobs: int = 1


@dataclass
class ReconstructionReport:
    polytope: LatticePolytope
    queries: int
    indeterminate: int
    confirmed_facets: int
    unconfirmed: List[Tuple[Point, int]]
    complete: bool
    query_log: List[Tuple[Tuple[float, ...], str]] = field(repr=False, default_factory=list)


def reconstruct(oracle, n: int, config: Optional[ReconstructConfig] = None) -> ReconstructionReport:
    """Assemble the full polytope from certified vertex answers.

    Seed phase: query perturbed coordinate directions and random directions
    until the vertex set stops gaining affine dimension.  Loop phase: confirm
    or refute each hull facet (and each affine-hull equality, from both
    sides); every refutation inserts a new vertex and re-hulls.
    """
    cfg = config or ReconstructConfig()
    rng = random.Random(cfg.seed)
    budget = cfg.seed_budget if cfg.seed_budget is not None else 8 * n

    confirmed: set = set()
    log: List[Tuple[Tuple[float, ...], str]] = []
    counters = {"queries": 0, "indeterminate": 0}

    def ask(w) -> Optional[Point]:
        counters["queries"] += 1
        try:
            beta = oracle.query(tuple(w))
        except OracleIndeterminate:
            counters["indeterminate"] += 1
            log.append((tuple(float(x) for x in w), "indeterminate"))
            return None
        log.append((tuple(float(x) for x in w), f"vertex {beta}"))
        return beta

    def affine_rank(points) -> int:
        pts = list(points)
        if len(pts) <= 1:
            return 0
        base = pts[0]
        from .polytope import _FracRowBasis, _sub  # exact rank bookkeeping

        basis = _FracRowBasis(n)
        for p in pts[1:]:
            basis.add(_sub(p, base))
        return basis.rank

    # ---- seed phase
    seed_dirs: List[Tuple] = []
    for i in range(n):
        unit = tuple(1 if j == i else 0 for j in range(n))
        neg = tuple(-1 if j == i else 0 for j in range(n))
        seed_dirs.append(facet_query_direction(unit, oracle.coord_bound, cfg.direction_bound, rng))
        seed_dirs.append(facet_query_direction(neg, oracle.coord_bound, cfg.direction_bound, rng))
    stable = 0
    rank = 0
    attempts = 0
    attempt_cap = 16 * n + 4 * budget
    while attempts < attempt_cap:
        attempts += 1
        if seed_dirs:
            w = seed_dirs.pop(0)
        else:
            try:
                w = random_direction(n, cfg.direction_bound, rng, candidates=list(confirmed) or None)
            except OracleIndeterminate:
                break
        before = len(confirmed)
        beta = ask(w)
        if beta is not None:
            confirmed.add(beta)
            new_rank = affine_rank(confirmed)
            if len(confirmed) > before and new_rank > rank:
                rank = new_rank
                stable = 0
            else:
                stable += 1
        if confirmed and rank == n:
            break
        if not seed_dirs and stable >= budget:
            break
    if not confirmed:
        raise OracleExhausted("the oracle certified no direction at all")

    # ---- facet confirmation loop
    confirmed_planes: set = set()
    unconfirmed: List[Tuple[Point, int]] = []
    while True:
        hull = convex_hull(confirmed)
        tasks = []  # (plane key, normal, offset)
        for f in hull.facets:
            if (f.normal, f.offset) not in confirmed_planes:
                tasks.append(((f.normal, f.offset), f.normal, f.offset))
        for normal, offset in hull.equalities:
            for side_normal, side_offset in (
                (normal, offset),
                (tuple(-x for x in normal), -offset),
            ):
                if (side_normal, side_offset) not in confirmed_planes:
                    tasks.append(((side_normal, side_offset), side_normal, side_offset))
        if not tasks:
            unconfirmed = []
            break

        # pre-draw perturbations so parallel execution stays deterministic
        prepared = []
        for key, normal, offset in tasks:
            dirs = [
                facet_query_direction(normal, oracle.coord_bound, cfg.direction_bound, rng)
                for _ in range(cfg.facet_retries)
            ]
            prepared.append((key, normal, offset, dirs))

        has_support = getattr(oracle, "support", None) is not None

        def probe(task):
            key, normal, offset, dirs = task
            sublog: List[Tuple[Tuple[float, ...], str]] = []
            if has_support:
                # a support value settles the facet without a unique vertex
                try:
                    h = oracle.support(tuple(Fraction(u) for u in normal))
                    sublog.append((tuple(float(u) for u in normal), f"support {h}"))
                    if h == offset:
                        return key, normal, offset, "confirm", None, sublog
                    if h < offset:
                        return key, normal, offset, "inconsistent", None, sublog
                except OracleIndeterminate:
                    sublog.append((tuple(float(u) for u in normal), "indeterminate"))
            for w in dirs:
                try:
                    beta = oracle.query(tuple(w))
                    sublog.append((tuple(float(x) for x in w), f"vertex {beta}"))
                    return key, normal, offset, "vertex", beta, sublog
                except OracleIndeterminate:
                    sublog.append((tuple(float(x) for x in w), "indeterminate"))
            return key, normal, offset, "fail", None, sublog

        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(probe, prepared))
        else:
            results = [probe(task) for task in prepared]

        inserted = False
        round_unconfirmed = []
        for key, normal, offset, outcome, beta, sublog in results:
            for entry in sublog:
                counters["queries"] += 1
                if entry[1] == "indeterminate":
                    counters["indeterminate"] += 1
            log.extend(sublog)
            if outcome == "confirm":
                confirmed_planes.add(key)
            elif outcome == "inconsistent":
                raise OracleInconsistent(
                    f"support value below hull facet {normal} . x <= {offset}"
                )
            elif outcome == "fail":
                round_unconfirmed.append(key)
            else:
                value = sum(u * b for u, b in zip(normal, beta))
                if value > offset:
                    if beta not in confirmed:
                        confirmed.add(beta)
                        inserted = True
                    else:
                        round_unconfirmed.append(key)
                elif value == offset:
                    confirmed_planes.add(key)
                else:
                    raise OracleInconsistent(
                        f"oracle answer {beta} lies strictly inside facet {normal} . x <= {offset}"
                    )
        if inserted:
            continue
        if round_unconfirmed:
            unconfirmed = round_unconfirmed
            break

    hull = convex_hull(confirmed)
    complete = not unconfirmed
    return ReconstructionReport(
        polytope=hull,
        queries=counters["queries"],
        indeterminate=counters["indeterminate"],
        confirmed_facets=len(hull.facets) + 2 * len(hull.equalities) - len(unconfirmed),
        unconfirmed=unconfirmed,
        complete=complete,
        query_log=log,
    )


@dataclass
class VerificationReport:
    checked: int
    indeterminate: int
    discrepancies: List[Tuple[Tuple[int, ...], Point]]

    @property
    def ok(self) -> bool:
        return not self.discrepancies


def verify(
    P: LatticePolytope, oracle, k: int, rng: Optional[random.Random] = None
) -> VerificationReport:
    """Spot-check a reconstructed polytope with k extra random directions."""
    rng = rng or random.Random(0)
    vertex_set = set(P.vertices)
    discrepancies = []
    indeterminate = 0
    for _ in range(k):
        w = random_direction(P.n, 5, rng, candidates=P.vertices)
        try:
            beta = oracle.query(tuple(w))
        except OracleIndeterminate:
            indeterminate += 1
            continue
        best = support_function(P, w).value
        if beta not in vertex_set or sum(wi * b for wi, b in zip(w, beta)) != best:
            discrepancies.append((w, beta))
    return VerificationReport(k, indeterminate, discrepancies)
