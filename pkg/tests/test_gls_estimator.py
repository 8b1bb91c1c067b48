"""
Test the naive and variance-optimized estimates of S and J and the GLS projections.
"""

from fractions import Fraction

import numpy as np
import pytest

from bell_data import canonicalize, chsh_values, flatten, load_embedded
from config import CLAMP_TARGET
from gls_estimator import (
    NOSIGNALLING_B,
    covariance_matrix,
    facet_anchor,
    functional,
    naive_estimate,
    nosignalling_deviations,
    optimized_estimate,
    project_facet,
    project_nosignalling,
    solve_psd,
)
from tests.conftest import dataset_from_blocks, random_dataset


def _exact_solve(A, b):
    """Gauss-Jordan elimination over the rationals."""
    n = len(A)
    M = [list(row) + [rhs] for row, rhs in zip(A, b)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[pivot] = M[pivot], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def _exact_optimized(ds, kind):
    """Optimized value and variance computed entirely in Fractions."""
    counts = [c for a, b in [(1, 1), (1, 2), (2, 1), (2, 2)] for row in ds.table(a, b).counts for c in row]
    p = []
    sigma = [[Fraction(0)] * 16 for _ in range(16)]
    for i in range(4):
        n = sum(counts[4 * i : 4 * i + 4])
        block = [Fraction(c, n) for c in counts[4 * i : 4 * i + 4]]
        p += block
        for j in range(4):
            for k in range(4):
                sigma[4 * i + j][4 * i + k] = ((block[j] if j == k else 0) - block[j] * block[k]) / n

    a = [Fraction(int(x)) for x in functional(kind).a]
    B = [[Fraction(int(x)) for x in row] for row in NOSIGNALLING_B]

    def sig_times(v):
        return [sum(sigma[r][c] * v[c] for c in range(16)) for r in range(16)]

    cols = [[B[r][k] for r in range(16)] for k in range(4)]
    sig_cols = [sig_times(col) for col in cols]
    sigma_bb = [[sum(cols[j][r] * sig_cols[k][r] for r in range(16)) for k in range(4)] for j in range(4)]
    sig_a = sig_times(a)
    sigma_ba = [sum(cols[k][r] * sig_a[r] for r in range(16)) for k in range(4)]
    c = _exact_solve(sigma_bb, sigma_ba)

    value = sum(ar * pr for ar, pr in zip(a, p)) - sum(
        c[k] * sum(cols[k][r] * p[r] for r in range(16)) for k in range(4)
    )
    variance = sum(ar * sr for ar, sr in zip(a, sig_a)) - sum(sb * ck for sb, ck in zip(sigma_ba, c))
    return float(value), float(variance)


class TestNaiveEstimate:
    """Test the plug-in estimates."""

    def test_delft_S(self, delft):
        """Delft: S = 2.4225 with se 0.2038266, z 2.07284, p 0.0190936."""
        est = naive_estimate(delft, "S")
        assert est.value == pytest.approx(2.4225, abs=1e-4)
        assert est.se == pytest.approx(0.2038266, rel=1e-5)
        assert est.z == pytest.approx(2.07284, rel=1e-5)
        assert est.p.p == pytest.approx(0.0190936, rel=1e-5)

    def test_delft_J(self, delft):
        est = naive_estimate(delft, "J")
        assert est.value == pytest.approx(0.1195162, rel=1e-5)
        assert est.se == pytest.approx(0.09475703, rel=1e-5)
        assert est.bound == 0.0

    def test_munich_S(self):
        est = naive_estimate(load_embedded("munich"), "S")
        assert est.value == pytest.approx(2.609047, rel=1e-5)
        assert est.se == pytest.approx(0.2484456, rel=1e-5)
        assert est.p.p == pytest.approx(0.007114475, rel=1e-5)

    def test_nist(self, nist):
        """NIST: tiny violation measured very precisely; quoted z came from rounded S and se."""
        s = naive_estimate(nist, "S")
        assert s.value == pytest.approx(2.000092, rel=1e-5)
        assert s.se == pytest.approx(1.572689e-05, rel=1e-5)
        assert s.z == pytest.approx((s.value - 2) / s.se, rel=1e-12)
        assert s.z == pytest.approx(5.859873, rel=1e-2)
        assert s.p.p == pytest.approx(2.062969e-09, rel=1e-5)
        j = naive_estimate(nist, "J")
        assert j.z == pytest.approx(4.778576, rel=1e-5)
        assert j.p.p == pytest.approx(8.827054e-07, rel=1e-5)

    def test_vienna(self):
        est = naive_estimate(load_embedded("vienna"), "S")
        assert est.value == pytest.approx(2.000028, rel=1e-5)
        assert est.se == pytest.approx(3.283419e-06, rel=1e-5)
        assert est.z == pytest.approx(8.527696, rel=1e-2)

    def test_zhang(self, zhang):
        est = naive_estimate(zhang, "S")
        assert est.value == pytest.approx(2.58, abs=0.005)
        assert 6.5 <= est.z <= 8.0

    def test_no_variability(self):
        """Deterministic blocks have se 0; S exactly at the bound gives p = 1."""
        ds = dataset_from_blocks([[5, 0, 0, 0]] * 4)
        est = naive_estimate(ds, "S")
        assert est.se == 0.0
        assert est.value == pytest.approx(2.0)
        assert est.p.p == 1.0

    def test_unknown_functional(self):
        with pytest.raises(ValueError, match="unknown functional"):
            functional("K")


class TestOptimizedEstimate:
    """Test the variance-optimized estimates."""

    def test_delft(self, delft):
        """Delft: optimized S = 2.462658 with p near 0.01."""
        est = optimized_estimate(delft, "S")
        assert est.value == pytest.approx(2.462658, rel=1e-5)
        assert 0.009 <= est.p.p <= 0.012
        assert not est.regularized

    def test_munich(self):
        est = optimized_estimate(load_embedded("munich"), "S")
        assert est.value == pytest.approx(2.582261, rel=1e-5)
        assert est.p.p == pytest.approx(0.008782296, rel=1e-5)

    def test_nist(self, nist):
        est = optimized_estimate(nist, "S")
        assert est.z == pytest.approx(7.637903, rel=1e-2)
        assert est.p.p == pytest.approx(1.110193e-14, rel=1e-5)

    def test_vienna(self):
        """Vienna: optimization halves the standard error, so z roughly doubles to about 17.5."""
        ds = load_embedded("vienna")
        naive, optimized = naive_estimate(ds, "S"), optimized_estimate(ds, "S")
        assert 17.0 <= optimized.z <= 18.0
        assert optimized.se == pytest.approx(naive.se / 2, rel=0.1)

    def test_weihs(self):
        ds = load_embedded("weihs")
        assert naive_estimate(ds, "S").value == pytest.approx(2.73, abs=0.005)
        assert optimized_estimate(ds, "S").value == pytest.approx(2.71, abs=0.005)
        assert naive_estimate(ds, "S").z > 25

    def test_zhang_barely_moves(self, zhang):
        """Zhang: the optimized S is within half a percent of the naive one."""
        naive = naive_estimate(zhang, "S").value
        assert abs(optimized_estimate(zhang, "S").value - naive) / naive <= 0.005

    def test_S_is_two_plus_four_J(self, delft, rng):
        """After optimization S = 2 + 4J holds to rounding."""
        datasets = [delft, load_embedded("nist")] + [canonicalize(random_dataset(rng)).dataset for _ in range(20)]
        for ds in datasets:
            s = optimized_estimate(ds, "S")
            j = optimized_estimate(ds, "J")
            assert s.value == pytest.approx(2 + 4 * j.value, abs=1e-10)
            assert s.se == pytest.approx(4 * j.se, rel=1e-8)

    def test_variance_never_worse(self, rng):
        """The optimized standard error never exceeds the naive one."""
        for _ in range(1000):
            ds = random_dataset(rng, low=1, high=200)
            for kind in ("S", "J"):
                assert optimized_estimate(ds, kind).se <= naive_estimate(ds, kind).se + 1e-12

    def test_matches_exact_rationals(self, rng):
        """Floating-point GLS agrees with the same computation in Fractions."""
        for _ in range(10):
            ds = random_dataset(rng, low=1, high=21)
            for kind in ("S", "J"):
                value, variance = _exact_optimized(ds, kind)
                est = optimized_estimate(ds, kind)
                assert est.value == pytest.approx(value, abs=1e-12)
                assert est.se**2 == pytest.approx(variance, abs=1e-12)

    @pytest.mark.slow
    def test_unbiased_with_predicted_spread(self, rng):
        """Simulated no-signalling data: optimized S is centred on the truth with the plug-in spread."""
        truth = np.concatenate(
            [[0.4, 0.1, 0.1, 0.4], [0.35, 0.15, 0.15, 0.35], [0.35, 0.15, 0.15, 0.35], [0.1, 0.4, 0.4, 0.1]]
        )
        true_s = chsh_values([0.6, 0.4, 0.4, -0.6])[-1]
        values, ses = [], []
        for _ in range(2000):
            blocks = [rng.multinomial(400, truth[4 * i : 4 * i + 4]) for i in range(4)]
            est = optimized_estimate(dataset_from_blocks(blocks), "S")
            values.append(est.value)
            ses.append(est.se)
        values = np.array(values)
        assert abs(values.mean() - true_s) < 4 * values.std() / np.sqrt(len(values))
        assert values.std() == pytest.approx(np.mean(ses), rel=0.1)


class TestProjections:
    """Test the GLS projections used to start the likelihood fits."""

    def test_nosignalling_projection(self, delft):
        """Projected frequencies are normalized, positive and no-signalling."""
        proj = project_nosignalling(flatten(delft))
        np.testing.assert_allclose(NOSIGNALLING_B.T @ proj.probs, 0.0, atol=1e-12)
        np.testing.assert_allclose(proj.probs.reshape(4, 4).sum(axis=1), 1.0, atol=1e-12)
        assert proj.probs.min() > 0
        assert not proj.clamped

    def test_projection_is_optimized_estimate(self, delft):
        """a^T of the projection equals the optimized S."""
        proj = project_nosignalling(flatten(delft))
        assert functional("S")(proj.probs) == pytest.approx(optimized_estimate(delft, "S").value, abs=1e-12)

    def test_facet_projection(self, delft):
        """The facet projection lies on S = 2 and stays no-signalling."""
        proj = project_facet(flatten(delft))
        assert functional("S")(proj.probs) == pytest.approx(2.0, abs=1e-12)
        np.testing.assert_allclose(NOSIGNALLING_B.T @ proj.probs, 0.0, atol=1e-12)
        assert proj.probs.min() > 0

    def test_clamped_projection_stays_valid(self):
        """Strongly signalling counts still project to a positive no-signalling point."""
        ds = dataset_from_blocks([[30, 1, 1, 1], [1, 1, 1, 30], [1, 30, 1, 1], [1, 1, 30, 1]])
        proj = project_nosignalling(flatten(ds))
        assert proj.probs.min() >= CLAMP_TARGET * (1 - 1e-9)
        np.testing.assert_allclose(NOSIGNALLING_B.T @ proj.probs, 0.0, atol=1e-10)
        np.testing.assert_allclose(proj.probs.reshape(4, 4).sum(axis=1), 1.0, atol=1e-12)

    def test_facet_anchor(self):
        anchor = facet_anchor()
        assert functional("S")(anchor) == pytest.approx(2.0)
        np.testing.assert_allclose(NOSIGNALLING_B.T @ anchor, 0.0, atol=1e-15)
        assert anchor.min() > 0


class TestDiagnostics:
    """Test covariance helpers and no-signalling deviations."""

    def test_covariance_blocks(self, delft):
        """Each block is (diag(p) - p p^T) / n and rows sum to zero."""
        fv = flatten(delft)
        cov = covariance_matrix(fv)
        p = fv.block(0)
        np.testing.assert_allclose(cov.block(0), (np.diag(p) - np.outer(p, p)) / 53)
        np.testing.assert_allclose(cov.sigma.sum(axis=1), 0.0, atol=1e-15)

    def test_deviations(self, delft):
        """Four deviations with finite standard errors."""
        devs = nosignalling_deviations(delft)
        assert len(devs) == 4
        expected = (23 + 3) / 53 - (33 + 11) / 79
        assert devs[0].value == pytest.approx(expected)
        assert all(d.se > 0 for d in devs)

    def test_solve_psd_singular_falls_back(self):
        """A singular matrix is solved with the pseudo-inverse and flagged."""
        matrix = np.array([[1.0, 1.0], [1.0, 1.0]])
        x, regularized = solve_psd(matrix, np.array([2.0, 2.0]))
        assert regularized
        np.testing.assert_allclose(x, [1.0, 1.0])
