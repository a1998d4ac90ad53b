import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandlab.lattice import (BandProfile, BandwidthWarning, SampledBandMatrix, build_lattice, build_variance_matrix,
                             flat_variance, identity_variance, make_rng, sample_matrix)
from bandlab.profile import theta_exact_dft
from bandlab.resolvent import (RowResampler, eigen_deloc, fluct_avg_probe, lambda_stat, membership_sums,
                               minor_resolvent, partial_expectation_probe, resolvent, sc_residual, spectrum,
                               t_matrix, t_prime, verify_resolvent_identities, y_matrix)
from bandlab.semicircle import msc


def gaussian(N, W):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        return build_variance_matrix(build_lattice(1, N), BandProfile(W=W))


def test_two_by_two_example():
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    obs = resolvent(H, [1j])[0]
    np.testing.assert_allclose(obs.G, [[0.5j, 0.5], [0.5, 0.5j]], atol=1e-15)
    mass = np.sum(np.abs(obs.G[:, 0]) ** 2)
    assert mass == pytest.approx(0.5) and mass == pytest.approx(obs.G[0, 0].imag / 1.0)
    assert lambda_stat(obs.G, complex(msc(1j))) == pytest.approx(0.5, abs=1e-15)


def test_diagonal_matrix():
    h = np.array([0.3, -1.0, 2.0])
    z = 0.1 + 0.4j
    G = resolvent(np.diag(h), [z])[0].G
    np.testing.assert_allclose(G, np.diag(1 / (h - z)), atol=1e-15)


def test_defining_identity_and_spectral_route_agree():
    S = gaussian(64, 6)
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 1)
    zs = [0.2j, 1.0 + 0.5j]
    multi = resolvent(H, zs)
    for obs in multi:
        R = (H.H - obs.z * np.eye(64)) @ obs.G - np.eye(64)
        assert np.max(np.abs(R)) < 1e-9
        single = resolvent(H, [obs.z])[0]
        np.testing.assert_allclose(single.G, obs.G, atol=1e-12)


def test_rejects_tiny_eta():
    with pytest.raises(ValueError):
        resolvent(np.eye(3), [1e-9j])


def test_lambda_properties():
    m = complex(msc(0.3j))
    assert lambda_stat(m * np.eye(5), m) == 0.0
    S = gaussian(64, 6)
    G = resolvent(sample_matrix(S, "complex-Hermitian", "gaussian", 2), [0.3j])[0].G
    assert lambda_stat(G, m) >= np.max(np.abs(np.diagonal(G) - m))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["real-symmetric", "complex-Hermitian"]),
       st.floats(-1.8, 1.8), st.floats(0.01, 2.0))
def test_mass_identity_and_column_sums(seed, cls, E, eta):
    S = gaussian(96, 8)
    H = sample_matrix(S, cls, "gaussian", seed)
    z = complex(E, eta)
    obs = resolvent(H, [z])[0]
    lhs = np.sum(np.abs(obs.G) ** 2, axis=0)
    rhs = np.diagonal(obs.G).imag / eta
    assert np.max(np.abs(lhs - rhs) / rhs) < 1e-9
    T = t_matrix(S, obs.G)
    np.testing.assert_allclose(T.sum(axis=0), rhs, rtol=1e-9)


def test_identity_variance_makes_T_the_squared_modulus():
    lat = build_lattice(1, 16)
    H = sample_matrix(identity_variance(lat), "complex-Hermitian", "gaussian", 0)
    G = resolvent(H, [0.5j])[0].G
    np.testing.assert_allclose(t_matrix(identity_variance(lat), G), np.abs(G) ** 2)


def test_associativity_of_left_and_right_averages():
    S = gaussian(128, 10)
    G = resolvent(sample_matrix(S, "complex-Hermitian", "gaussian", 5), [0.3j])[0].G
    T, Tp = t_matrix(S, G), t_prime(S, G)
    np.testing.assert_allclose(T @ S.dense(), S.dense() @ Tp, atol=1e-9)
    y_matrix(T, S, Tp)


def test_noiseless_residual_vanishes():
    S = gaussian(256, 32)
    z = 0.2 + 0.3j
    m = complex(msc(z))
    m2 = abs(m) ** 2
    Theta = theta_exact_dft(S, z).full()
    # the proxy |G_iy|^2 = delta_iy |m|^2 + |m|^2 Theta_iy gives T = S (proxy) = Theta
    proxy = m2 * np.eye(S.N) + m2 * Theta
    T = S.dense() @ proxy
    np.testing.assert_allclose(T, Theta, atol=1e-14)
    res = sc_residual(T, S, m)
    assert res.max_abs <= 1e-12 * Theta.max()
    zero = sc_residual(np.zeros((S.N, S.N)), S, m)
    np.testing.assert_allclose(zero.E, -m2 * S.dense())


def test_residual_ratio_normalization():
    S = gaussian(128, 16)
    G = resolvent(sample_matrix(S, "complex-Hermitian", "gaussian", 9), [0.5j])[0].G
    res = sc_residual(t_matrix(S, G), S, complex(msc(0.5j)), M=S.M, eta=0.5)
    psi = (S.M * 0.5) ** -0.5
    assert res.bound == pytest.approx(psi**4 + psi**2 * S.M**-0.5)
    assert res.ratio == pytest.approx(res.max_abs / res.bound)


def random_hermitian(n, rng):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (A + A.conj().T) / 2


def test_resolvent_identities_at_i():
    rng = np.random.default_rng(0)
    H = random_hermitian(5, rng)
    rep = verify_resolvent_identities(H, 1j, [], 0, 1, 2)
    assert rep.family_a_offdiag < 1e-8 and rep.family_a_inverse < 1e-8
    assert rep.family_b_left < 1e-8 and rep.family_b_right < 1e-8
    rep_t = verify_resolvent_identities(H, 1j, [4], 0, 0, 2)
    assert rep_t.family_a_inverse < 1e-8


def test_resolvent_identities_random_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(8, 25))
        H = random_hermitian(n, rng) if rng.random() < 0.5 else random_hermitian(n, rng).real
        z = complex(rng.uniform(-2, 2), rng.uniform(0.05, 1.5))
        perm = rng.permutation(n)
        t = int(rng.integers(0, 4))
        i, j, k = (int(v) for v in perm[t:t + 3])
        worst = max(worst, verify_resolvent_identities(H, z, perm[:t].tolist(), i, j, k).worst)
    assert worst < 1e-8


def test_family_b_matches_direct_entry():
    rng = np.random.default_rng(7)
    H = random_hermitian(12, rng)
    z = 0.4 + 0.3j
    G = np.linalg.inv(H - z * np.eye(12))
    Gi, keep = minor_resolvent(H, z, [0])
    # minor indices follow the kept sites
    j = 3
    direct = -G[0, 0] * sum(H[0, keep[a]] * Gi[a, list(keep).index(j)] for a in range(len(keep)))
    assert direct == pytest.approx(G[0, j], abs=1e-12)


def test_identity_argument_checks():
    H = random_hermitian(6, np.random.default_rng(1))
    with pytest.raises(ValueError):
        verify_resolvent_identities(H, 1j, [1], 1, 2, 3)
    with pytest.raises(ValueError):
        verify_resolvent_identities(H, 1j, [], 1, 2, 2)


def test_row_resampler_schur_update():
    S = gaussian(64, 6)
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 4)
    z = 0.2 + 0.3j
    G = np.linalg.inv(H.H - z * np.eye(64))
    x = 7
    res = RowResampler(H.H, G, z, x, S.dense()[x], H.symmetry_class)
    rows = res.draw_rows(make_rng(3), 4)
    for h in rows:
        A = H.H.copy()
        A[x, :] = h
        A[:, x] = h.conj()
        direct = np.linalg.inv(A - z * np.eye(64))
        np.testing.assert_allclose(res.new_resolvent(h), direct, atol=1e-12)
    g_mu_x, g_x_mu = res.entries(rows, 11)
    for r, h in enumerate(rows):
        full = res.new_resolvent(h)
        assert g_mu_x[r] == pytest.approx(full[11, x], abs=1e-12)
        assert g_x_mu[r] == pytest.approx(full[x, 11], abs=1e-12)


def test_partial_expectation_of_row_independent_observable():
    S = gaussian(64, 6)
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 4)
    z = 0.3j
    x, y = 5, 20

    def minor_entry(G):
        return float((G[y, y] - G[y, x] * G[x, y] / G[x, x]).real)

    G = np.linalg.inv(H.H - z * np.eye(64))
    est = partial_expectation_probe(S, H, z, x, y, observable=minor_entry, inner_trials=16, seed=2)
    assert est.estimate == pytest.approx(minor_entry(G), abs=1e-10)
    assert est.stderr < 1e-10


def test_partial_expectation_of_diagonal_modulus():
    N, W, eta = 512, 128, 0.25
    S = gaussian(N, W)
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 12)
    pe = partial_expectation_probe(S, H, 1j * eta, 3, 3, "abs2", inner_trials=32, seed=1)
    slack = 3 * pe.stderr + 10 * (1 / (N * eta) + W**-0.5)
    assert abs(pe.deviation) <= slack


def test_partial_expectation_of_centered_part_vanishes():
    S = gaussian(128, 16)
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 6)
    pe = partial_expectation_probe(S, H, 0.3j, 2, 9, "abs2", inner_trials=64, seed=4)
    first, second = pe.samples[:32], pe.samples[32:]
    centered = second - first.mean()
    se = math.sqrt(second.var(ddof=1) / 32 + first.var(ddof=1) / 32)
    assert abs(centered.mean()) <= 4 * se
    with pytest.raises(ValueError):
        partial_expectation_probe(S, H, 0.3j, 2, 9, inner_trials=8)


def test_averaging_gain_from_centering():
    S = gaussian(512, 128)
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 3)
    z = 0.25j
    plain = fluct_avg_probe(S, H, z, 0, 5, "ggstar_noq")
    centered = fluct_avg_probe(S, H, z, 0, 5, "q_ggstar", inner_trials=16, seed=1)
    # the positive sum is of the order of Psi^2
    assert 0.05 <= plain.ratio <= 20
    assert centered.magnitude < plain.magnitude / 5


def test_off_diagonal_average_is_centered_for_flat_profile():
    mags = {}
    for N in (64, 256):
        P = flat_variance(build_lattice(1, N))
        vals = [fluct_avg_probe(P, sample_matrix(P, "complex-Hermitian", "gaussian", s), 0.25j, 0, 5, "gg_noq")
                for s in range(4)]
        mags[N] = np.mean([v.magnitude for v in vals])
        assert all(v.ratio < 1 for v in vals)
    assert mags[256] < mags[64]
    with pytest.raises(ValueError):
        fluct_avg_probe(P, sample_matrix(P, "complex-Hermitian", "gaussian", 0), 0.25j, 0, 5, "nope")


def test_completeness_of_eigenvectors():
    S = gaussian(128, 10)
    sp = spectrum(sample_matrix(S, "complex-Hermitian", "gaussian", 1))
    np.testing.assert_allclose(np.sum(np.abs(sp.eigenvectors) ** 2, axis=1), 1.0, atol=1e-9)


def test_membership_of_uniform_vector():
    N = 512
    ell = N // 8
    u = np.full((N, 1), N**-0.5)
    val = float(membership_sums(u, ell)[0])
    far = N - (2 * ell - 1)
    # each of the N terms equals N^(-1/2) sqrt(far / N)
    assert val == pytest.approx(N * N**-0.5 * math.sqrt(far / N), rel=1e-12)
    assert math.sqrt(far / N) == pytest.approx(math.sqrt(3 / 4), abs=2e-3)
    assert val > 0.1


def test_membership_of_localized_vector():
    N = 256
    u = np.zeros((N, 1))
    u[17, 0] = 1.0
    for ell in (1, 5, 100):
        assert membership_sums(u, ell)[0] == 0.0


def test_membership_two_dimensional_matches_brute_force():
    lat = build_lattice(2, 8)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((lat.N, 2)) + 1j * rng.standard_normal((lat.N, 2))
    u /= np.linalg.norm(u, axis=0)
    dist = lat.distance_matrix()
    for ell in (1.5, 3.0):
        direct = [sum(abs(u[x, c]) * math.sqrt(sum(abs(u[y, c]) ** 2 for y in range(lat.N) if dist[x, y] >= ell))
                      for x in range(lat.N)) for c in range(2)]
        np.testing.assert_allclose(membership_sums(u, ell, lat), direct, rtol=1e-12)


def test_membership_one_dimensional_matches_brute_force():
    N = 40
    rng = np.random.default_rng(1)
    u = rng.standard_normal((N, 3))
    u /= np.linalg.norm(u, axis=0)
    d = np.abs((np.arange(N)[:, None] - np.arange(N)[None, :] + N // 2) % N - N // 2)
    for ell in (1, 4, 13):
        direct = [sum(abs(u[x, c]) * math.sqrt(np.sum(u[d[x] >= ell, c] ** 2)) for x in range(N)) for c in range(3)]
        np.testing.assert_allclose(membership_sums(u, ell), direct, rtol=1e-12)


def test_wigner_matrix_is_delocalized():
    P = flat_variance(build_lattice(1, 512))
    stats = eigen_deloc(sample_matrix(P, "complex-Hermitian", "gaussian", 0), 0.1, 0.1, 512 / 8)
    assert stats.fraction <= 0.2
    assert np.all(stats.ipr < 0.05)


def test_deloc_argument_checks():
    H = SampledBandMatrix(np.eye(16), "real-symmetric", "gaussian", 0)
    with pytest.raises(ValueError):
        eigen_deloc(H, ell=8)
    with pytest.raises(ValueError):
        eigen_deloc(H, eps=0.0)
