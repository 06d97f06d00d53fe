import cmath
import math
import random
import warnings
from fractions import Fraction

import numpy as np
import pytest

from newtonpoly.eval_oracle import EvalBounds, vertex_query
from newtonpoly.slp import SparsePolynomial, parse_sparse, sparse_to_slp
from newtonpoly.witness_oracle import (
    AmbiguousClusterError,
    DegreeMismatchError,
    GenericityFailure,
    IndeterminateError,
    RateViolationError,
    RateParams,
    SlpLineBackend,
    SparseLineBackend,
    WitnessConfig,
    WitnessLine,
    classify_paths,
    convergence_bound,
    divergence_bound,
    divergence_bound_statement,
    fitted_rate_params,
    initial_roots,
    line_constants,
    make_line,
    rate_params_from_sparse,
    track_paths,
    verify_rates,
    witness_vertex_query,
)
from conftest import QUAD_LINE_A, QUAD_LINE_B, random_sparse

DECADES = (1e2, 1e4, 1e6, 1e8)


@pytest.fixture(scope="module")
def quad_setup(quad_poly):
    backend = SparseLineBackend(quad_poly)
    line = make_line(2, 0, backend, a=QUAD_LINE_A, b=QUAD_LINE_B)
    consts = line_constants(line, C=5.0)
    return quad_poly, backend, line, consts


def quad_roots_oracle(t: float, w: str):
    """Exact roots of the stretched quadratic restriction via the closed form."""
    a1, a2 = QUAD_LINE_A
    b1, b2 = QUAD_LINE_B
    if w == "up":  # direction (1, 1)
        coeffs = [
            t * t * a1 * a1,
            -2 * t * t * a1 * b1 + 3 * t * a1 + 2 * t * a2,
            t * t * b1 * b1 - 3 * t * b1 - 2 * t * b2 - 5,
        ]
    else:  # direction (-1, -1), cleared of the t^{-2} prefactor
        coeffs = [
            a1 * a1,
            -2 * a1 * b1 + 3 * t * a1 + 2 * t * a2,
            b1 * b1 - 3 * t * b1 - 2 * t * b2 - 5 * t * t,
        ]
    return list(np.roots(coeffs))


def sample_at(path, t):
    return next(s for tv, s, _ in path.samples if tv == t)


class TestMakeLine:
    def test_accepts_the_worked_example_line(self, quad_setup):
        _, _, line, _ = quad_setup
        assert line.degree == 2
        assert line.a == QUAD_LINE_A and line.b == QUAD_LINE_B

    def test_rejects_zero_direction_entry(self, quad_poly):
        backend = SparseLineBackend(quad_poly)
        with pytest.raises(GenericityFailure, match="zero"):
            make_line(2, 0, backend, a=(0, 1 + 1j), b=(1, 2))

    def test_rejects_proportional_anchor(self, quad_poly):
        backend = SparseLineBackend(quad_poly)
        a = (2 + 1j, 3 - 2j)
        b = (2 * (2 + 1j), 2 * (3 - 2j))
        with pytest.raises(GenericityFailure, match="ratios"):
            make_line(2, 0, backend, a=a, b=b)

    def test_random_lines_are_generic(self, disc_poly):
        backend = SparseLineBackend(disc_poly)
        line = make_line(3, 7, backend)
        assert line.degree == 2
        ratios = line.ratios()
        for i in range(3):
            for j in range(i + 1, 3):
                assert abs(ratios[i] - ratios[j]) > 1e-3


class TestLineConstants:
    def test_worked_example_values(self, quad_setup):
        _, _, _, consts = quad_setup
        assert consts.a_min == 1.0
        assert consts.a_max == pytest.approx(math.sqrt(13))
        assert consts.b_min == 1.0
        assert consts.b_max == pytest.approx(math.sqrt(13))
        # separation of the two anchor ratios
        sep = abs(QUAD_LINE_B[0] / QUAD_LINE_A[0] - QUAD_LINE_B[1] / QUAD_LINE_A[1])
        assert consts.Gamma[0] == pytest.approx(sep) == pytest.approx(1.5342, abs=1e-4)
        assert consts.gamma[0] == pytest.approx(sep / 2) == pytest.approx(0.7671, abs=1e-4)
        assert consts.C == 5.0

    def test_cluster_balls_are_disjoint(self, quad_setup):
        _, _, line, consts = quad_setup
        ratios = line.ratios()
        for i in range(line.n):
            for j in range(i + 1, line.n):
                assert consts.gamma[i] + consts.gamma[j] <= abs(ratios[i] - ratios[j]) + 1e-12


class TestInitialRoots:
    def test_quadratic_matches_closed_form(self, quad_setup):
        _, backend, line, _ = quad_setup
        roots = initial_roots(backend, line)
        want = quad_roots_oracle(1.0, "up")
        for r in roots:
            assert min(abs(r - z) for z in want) < 1e-9

    def test_linear_polynomial_single_root(self):
        poly = parse_sparse("1 : 1 0\n2 : 0 1\n-3 : 0 0")
        backend = SparseLineBackend(poly)
        line = make_line(2, 3, backend)
        assert line.degree == 1
        roots = initial_roots(backend, line)
        assert len(roots) == 1

    def test_discriminant_two_roots(self, disc_poly):
        backend = SparseLineBackend(disc_poly)
        line = make_line(3, 5, backend)
        roots = initial_roots(backend, line)
        assert len(roots) == 2
        assert abs(roots[0] - roots[1]) > 1e-8

    def test_degree_override_mismatch(self, quad_poly):
        backend = SparseLineBackend(quad_poly)
        with pytest.raises((DegreeMismatchError, GenericityFailure)):
            make_line(2, 0, backend, a=QUAD_LINE_A, b=QUAD_LINE_B, degree=3)

    def test_slp_backend_agrees(self, quad_setup):
        quad, _, line, _ = quad_setup
        backend = SlpLineBackend(sparse_to_slp(quad))
        roots = initial_roots(backend, line)
        want = quad_roots_oracle(1.0, "up")
        for r in roots:
            assert min(abs(r - z) for z in want) < 1e-9


class TestBackends:
    def test_sparse_and_slp_backends_agree(self):
        rng = random.Random(19)
        for _ in range(6):
            poly = random_sparse(rng)
            line = make_line(poly.n, rng.randint(0, 99), SparseLineBackend(poly))
            sparse_backend = SparseLineBackend(poly)
            slp_backend = SlpLineBackend(sparse_to_slp(poly))
            for _ in range(5):
                s = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
                t = math.exp(rng.uniform(0, 8))
                w = [rng.uniform(-2, 2) for _ in range(poly.n)]
                g1, d1 = sparse_backend.eval_ds(line, s, t, w)
                g2, d2 = slp_backend.eval_ds(line, s, t, w)
                # backends scale differently; compare the Newton steps
                if g1.is_zero() or d1.is_zero():
                    continue
                step1 = (g1 / d1).to_complex()
                step2 = (g2 / d2).to_complex()
                assert cmath.isclose(step1, step2, rel_tol=1e-8, abs_tol=1e-12)


class TestTrackPaths:
    def test_constant_direction_keeps_paths_fixed(self, quad_setup):
        _, backend, line, _ = quad_setup
        paths = track_paths(backend, line, (0.0, 0.0), t_max=256.0)
        for path in paths:
            first = path.samples[0][1]
            for _, s, _ in path.samples:
                assert abs(s - first) < 1e-9

    def test_convergent_direction_matches_closed_form(self, quad_setup):
        _, backend, line, _ = quad_setup
        paths = track_paths(backend, line, (1.0, 1.0), t_max=1e8, record_at=DECADES)
        for t in DECADES:
            got = sorted(abs(sample_at(p, t)) for p in paths)
            want = sorted(abs(z) for z in quad_roots_oracle(t, "up"))
            assert got == pytest.approx(want, rel=1e-6)

    def test_divergent_direction_matches_closed_form(self, quad_setup):
        _, backend, line, _ = quad_setup
        paths = track_paths(backend, line, (-1.0, -1.0), t_max=1e8, record_at=DECADES)
        for t in DECADES:
            got = sorted(abs(sample_at(p, t)) for p in paths)
            want = sorted(abs(z) for z in quad_roots_oracle(t, "down"))
            assert got == pytest.approx(want, rel=1e-6)

    def test_residuals_are_small(self, quad_setup):
        _, backend, line, _ = quad_setup
        paths = track_paths(backend, line, (1.0, 1.0), t_max=1e8)
        for path in paths:
            for _, _, res in path.samples:
                assert res < 1e-8


class TestClassify:
    def test_convergent_certificate(self, quad_setup):
        _, backend, line, consts = quad_setup
        paths = track_paths(backend, line, (1.0, 1.0), t_max=1e8)
        _, cert = classify_paths(paths, line, consts)
        assert cert.beta == (2, 0)
        assert cert.t_entry <= 1e2

    def test_divergent_certificate(self, quad_setup):
        _, backend, line, consts = quad_setup
        paths = track_paths(backend, line, (-1.0, -1.0), t_max=1e8)
        _, cert = classify_paths(paths, line, consts)
        assert cert.beta == (0, 0)
        assert sum(1 for kind, _ in cert.assignments if kind == "diverging") == 2

    def test_mixed_certificate(self, quad_setup):
        _, backend, line, consts = quad_setup
        paths = track_paths(backend, line, (0.0, 1.0), t_max=1e8)
        _, cert = classify_paths(paths, line, consts)
        assert cert.beta == (0, 1)

    def test_conservation(self, quad_setup):
        _, backend, line, consts = quad_setup
        for w in ((1.0, 1.0), (-1.0, -1.0), (0.0, 1.0), (1.0, 0.0)):
            paths = track_paths(backend, line, w, t_max=1e8)
            try:
                _, cert = classify_paths(paths, line, consts)
            except IndeterminateError:
                continue
            diverging = sum(1 for kind, _ in cert.assignments if kind == "diverging")
            assert sum(cert.beta) + diverging == cert.degree == 2


class TestVerifyRates:
    def test_reference_convergence_bound_column(self, quad_setup):
        quad, backend, line, consts = quad_setup
        rates = rate_params_from_sparse(quad, (1.0, 1.0), consts, table_variant=True, C=5.0)
        assert rates.gap_conv == 1.0
        for t in DECADES:
            assert convergence_bound(consts, rates, 2, 0, t) == pytest.approx(1040.0 / t, rel=1e-9)

    def test_reference_divergence_bound_column(self, quad_setup):
        quad, backend, line, consts = quad_setup
        rates = rate_params_from_sparse(quad, (-1.0, -1.0), consts, table_variant=True, C=5.0)
        assert rates.gap_div == 2.0
        for t in DECADES:
            assert divergence_bound(consts, rates, 2, t) == pytest.approx(t * t / 4160.0, rel=1e-9)
        # the alternative constant variant is also available for reference
        assert divergence_bound_statement(consts, rates, 2, 1e2) > 0

    def test_certificates_hold_on_both_directions(self, quad_setup):
        quad, backend, line, consts = quad_setup
        for w, variant in (((1.0, 1.0), True), ((-1.0, -1.0), True), ((1.0, 1.0), False)):
            paths = track_paths(backend, line, w, t_max=1e8)
            cls, cert = classify_paths(paths, line, consts)
            rates = rate_params_from_sparse(quad, w, consts, table_variant=variant, C=5.0)
            done = verify_rates(cls, cert, consts, line, w, rates)
            assert all(done.rate_checks) and done.slopes_ok

    def test_wrong_expected_slope_is_rejected(self, quad_setup):
        quad, backend, line, consts = quad_setup
        paths = track_paths(backend, line, (1.0, 1.0), t_max=1e8)
        cls, cert = classify_paths(paths, line, consts)
        bogus = RateParams(
            gap_conv=1.0,
            gap_div=None,
            C=5.0,
            n_terms=4,
            gamma=consts.gamma,
            slope_conv={0: 7.0},
            slope_div=None,
        )
        with pytest.raises(RateViolationError):
            verify_rates(cls, cert, consts, line, (1.0, 1.0), bogus)

    def test_fitted_params_certify_without_support_knowledge(self, quad_setup):
        _, backend, line, consts = quad_setup
        paths = track_paths(backend, line, (1.0, 1.0), t_max=1e8)
        cls, cert = classify_paths(paths, line, consts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rates = fitted_rate_params(cls, cert, line, consts)
        assert rates.fitted and rates.C == 10.0
        done = verify_rates(cls, cert, consts, line, (1.0, 1.0), rates)
        assert all(done.rate_checks)


class TestWitnessVertexQuery:
    def test_worked_example_directions(self, quad_setup):
        quad, backend, line, consts = quad_setup
        cfg = WitnessConfig(
            rate_source=lambda w: rate_params_from_sparse(quad, [float(x) for x in w], consts, C=5.0)
        )
        up = witness_vertex_query(backend, line, consts, (1, 1), cfg)
        assert up.beta == (2, 0)
        down = witness_vertex_query(backend, line, consts, (-1, -1), cfg)
        assert down.beta == (0, 0)

    def test_agrees_with_evaluation_oracle(self, disc_poly):
        backend = SparseLineBackend(disc_poly)
        line = make_line(3, 11, backend)
        consts = line_constants(line, C=4.0)
        cfg = WitnessConfig(
            rate_source=lambda w: rate_params_from_sparse(disc_poly, [float(x) for x in w], consts)
        )
        w = (Fraction(-6, 5), Fraction(2, 5), Fraction(37, 10))
        cert = witness_vertex_query(backend, line, consts, list(w), cfg)
        superset = ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))
        answer = vertex_query(
            sparse_to_slp(disc_poly), EvalBounds(2.0, 2.0, superset), w, t=45.0
        )
        assert cert.beta == answer.beta == (1, 0, 1)

    def test_pinned_intersection_point(self):
        # f = x^2 + xy - x = x (x + y - 1): one witness point sits exactly at
        # b1/a1 for every stretch; its distance is 0 and every bound holds
        poly = SparsePolynomial.from_terms(2, [(1, (2, 0)), (1, (1, 1)), (-1, (1, 0))])
        backend = SparseLineBackend(poly)
        line = make_line(2, 3, backend)
        consts = line_constants(line, C=3.0)
        roots = initial_roots(backend, line)
        r1 = line.ratios()[0]
        assert min(abs(z - r1) for z in roots) < 1e-9
        paths = track_paths(backend, line, (1.0, 0.0), t_max=1e8)
        classified, cert = classify_paths(paths, line, consts)
        assert cert.beta == (2, 0)
        rates = rate_params_from_sparse(poly, (1.0, 0.0), consts)
        done = verify_rates(classified, cert, consts, line, (1.0, 0.0), rates)
        assert all(done.rate_checks)

    def test_indeterminate_direction_retries_and_certifies(self, quad_setup):
        quad, backend, line, consts = quad_setup
        # (1, 2) exposes the edge between x^2 and y: ties force a perturbed retry
        cfg = WitnessConfig(
            rng=random.Random(5),
            rate_source=lambda w: rate_params_from_sparse(quad, [float(x) for x in w], consts),
        )
        cert = witness_vertex_query(backend, line, consts, (1, 2), cfg)
        assert sum(cert.beta) <= 2
