import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandlab.lattice import (BandProfile, BandwidthWarning, build_lattice, build_variance_matrix, flat_variance,
                             identity_variance, mix_mean_field, sample_matrix, sample_mean_field_mix, sample_noise,
                             make_rng, smooth_window)


def quiet_matrix(d, L, profile):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        return build_variance_matrix(build_lattice(d, L), profile)


def test_one_dimensional_sites_and_reduction():
    lat = build_lattice(1, 8)
    assert sorted(lat.representatives()[:, 0].tolist()) == list(range(-4, 4))
    assert lat.canonical([5]).tolist() == [-3]


def test_two_dimensional_norm():
    lat = build_lattice(2, 4)
    assert lat.N == 16
    assert lat.norm([3, 3]) == pytest.approx(math.sqrt(2))
    assert lat.norm([3, 3]) == pytest.approx(lat.norm([-1, -1]))


def test_canonical_matches_brute_force():
    lat = build_lattice(1, 6)
    got = [int(lat.canonical([i])[0]) for i in range(12)]
    # brute force: the representative in [-3, 2] congruent to i
    want = [next(r for r in range(-3, 3) if (r - i) % 6 == 0) for i in range(12)]
    assert got == want == [0, 1, 2, -3, -2, -1, 0, 1, 2, -3, -2, -1]


def test_bad_lattice_arguments():
    with pytest.raises(ValueError):
        build_lattice(0, 8)
    with pytest.raises(ValueError):
        build_lattice(1, 1)


def test_vanishing_width_gives_identity():
    S = quiet_matrix(1, 16, BandProfile(W=1e-3))
    np.testing.assert_allclose(S.dense(), np.eye(16), atol=1e-300)


def test_small_gaussian_against_direct_sum():
    N, W = 8, 2.0
    S = quiet_matrix(1, N, BandProfile(W=W))
    f = lambda x: np.exp(-x**2 / 2) / math.sqrt(2 * math.pi)
    reps = np.array([((k + N // 2) % N) - N // 2 for k in range(N)])
    Z = math.fsum(f(reps / W))
    oracle = np.array([[f((((i - j) + N // 2) % N - N // 2) / W) / Z for j in range(N)] for i in range(N)])
    np.testing.assert_allclose(S.dense(), oracle, rtol=1e-13)
    np.testing.assert_allclose(S.dense().sum(axis=1), 1.0, atol=1e-15)


def test_heavy_tail_cutoff_support():
    S = quiet_matrix(1, 64, BandProfile("heavy-tail", W=4, beta=1.5, a=0.25, b=0.45))
    x = np.abs(S.lattice.representatives()[:, 0])
    assert np.all(S.row[x >= 0.45 * 64] == 0.0)
    assert np.all(S.row[x < 0.25 * 64] > 0.0)


def test_smooth_window_limits():
    t = np.linspace(0, 0.5, 101)
    w = smooth_window(t, 0.25, 0.45)
    assert np.all(w[t <= 0.25] == 1.0) and np.all(w[t >= 0.45] == 0.0)
    assert np.all(np.diff(w) <= 0)


def test_bandwidth_warning_outside_window():
    with pytest.warns(BandwidthWarning):
        build_variance_matrix(build_lattice(1, 256), BandProfile(W=1.0))


def test_mixture_cases():
    S = quiet_matrix(1, 32, BandProfile(W=4))
    assert mix_mean_field(S, 0.0) is S
    I2 = identity_variance(build_lattice(1, 2))
    np.testing.assert_allclose(mix_mean_field(I2, 0.5).dense(), [[0.75, 0.25], [0.25, 0.75]], atol=1e-15)
    for eps in (0.1, 0.3, 0.5):
        np.testing.assert_allclose(mix_mean_field(S, eps).dense().sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        mix_mean_field(S, 0.6)


profiles = st.one_of(
    st.builds(lambda W, L: (1, L, BandProfile(W=W)), st.floats(0.5, 40), st.integers(4, 128)),
    st.builds(lambda W, L: (2, L, BandProfile(W=W)), st.floats(0.5, 8), st.integers(2, 16)),
    st.builds(lambda W, b, L: (1, L, BandProfile("heavy-tail", W=W, beta=b)),
              st.floats(1, 16), st.floats(0.5, 1.9), st.integers(32, 256)),
)


@settings(max_examples=60, deadline=None)
@given(profiles, st.sampled_from([0.0, 0.2, 0.5]))
def test_stochastic_symmetric_and_spectrum(case, eps):
    d, L, prof = case
    S = mix_mean_field(quiet_matrix(d, L, prof), eps)
    dense = S.dense()
    np.testing.assert_allclose(dense.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(dense, dense.T)
    ev = np.linalg.eigvalsh(dense)
    assert ev.min() >= -1 + 1e-6 and ev.max() <= 1 + 1e-10


@settings(max_examples=30, deadline=None)
@given(profiles)
def test_circulant_reconstruction_matches_assembly(case):
    d, L, prof = case
    S = quiet_matrix(d, L, prof)
    lat = S.lattice
    coords = lat.coords()
    direct = np.empty((lat.N, lat.N))
    for i in range(lat.N):
        diff = lat.canonical(coords[i] - coords)
        direct[i] = S.row[lat.site_index(diff)]
    np.testing.assert_array_equal(S.dense(), direct)
    v = np.random.default_rng(0).standard_normal(lat.N)
    np.testing.assert_allclose(S.apply(v), S.dense() @ v, atol=1e-12)


def test_effective_size_tracks_volume():
    for d, L, W in ((1, 512, 32), (2, 64, 8)):
        S = quiet_matrix(d, L, BandProfile(W=W))
        fmax = (2 * math.pi) ** (-d / 2)
        assert S.M == pytest.approx(W**d / fmax, rel=0.02)


def test_flat_variance_is_rank_one():
    S = flat_variance(build_lattice(1, 16))
    np.testing.assert_allclose(S.dense(), np.full((16, 16), 1 / 16))


def test_sampling_is_deterministic():
    S = quiet_matrix(1, 64, BandProfile(W=6))
    a = sample_matrix(S, "complex-Hermitian", "gaussian", 17).H
    b = sample_matrix(S, "complex-Hermitian", "gaussian", 17).H
    assert a.tobytes() == b.tobytes()
    c = sample_matrix(S, "complex-Hermitian", "gaussian", 18).H
    assert not np.array_equal(a, c)


def test_complex_entries_are_circular():
    zeta = sample_noise(500, "complex-Hermitian", "gaussian", make_rng(4))
    off = zeta[np.triu_indices(500, 1)][:100_000]
    assert off.size == 100_000
    assert abs(np.mean(off**2)) < 0.02
    assert np.mean(np.abs(off) ** 2) == pytest.approx(1.0, abs=0.02)


def test_real_class_is_real_symmetric():
    S = quiet_matrix(1, 64, BandProfile(W=6))
    H = sample_matrix(S, "real-symmetric", "bernoulli", 2).H
    assert np.isrealobj(H)
    np.testing.assert_array_equal(H, H.T)


def test_complex_class_is_exactly_hermitian():
    S = quiet_matrix(1, 64, BandProfile(W=6))
    H = sample_matrix(S, "complex-Hermitian", "gaussian", 2).H
    np.testing.assert_array_equal(H, H.conj().T)
    assert np.all(np.diagonal(H).imag == 0)


def test_second_moments_match_variances():
    # entries on one circulant offset share a variance, so 48 draws give > 10^4 samples per offset
    N, draws = 256, 48
    S = quiet_matrix(1, N, BandProfile(W=12))
    acc = np.zeros((draws, N, N))
    for t in range(draws):
        acc[t] = np.abs(sample_matrix(S, "complex-Hermitian", "gaussian", 100 + t).H) ** 2
    i = np.arange(N)
    for k in (0, 1, 5, 12, 30):
        samples = acc[:, i, (i + k) % N].ravel()
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - S.row[k]) < 4 * se


def test_mean_field_mixture_variance():
    N, draws, eps = 256, 40, 0.5
    S = quiet_matrix(1, N, BandProfile(W=12))
    H0 = sample_matrix(S, "complex-Hermitian", "gaussian", 1)
    assert sample_mean_field_mix(H0, 0.0, 9) is H0
    acc = []
    for t in range(draws):
        H = sample_mean_field_mix(sample_matrix(S, "complex-Hermitian", "gaussian", 500 + t), eps, 900 + t)
        np.testing.assert_array_equal(H.H, H.H.conj().T)
        acc.append(np.abs(H.H) ** 2)
    acc = np.array(acc)
    i = np.arange(N)
    for k in (1, 8, 100):
        v = acc[:, i, (i + k) % N].mean()
        target = 0.5 * S.row[k] + 0.5 / N
        assert v == pytest.approx(target, rel=0.05)
