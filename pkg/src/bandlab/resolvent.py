"""Resolvents of sampled band matrices and the random observables built from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .lattice import (COMPLEX_HERMITIAN, SampledBandMatrix, TorusLattice, VarianceMatrix,
                      _standard_draws, make_rng, normalize_class)
from .semicircle import msc, psi_standard

MatrixLike = Union[SampledBandMatrix, np.ndarray]


def _matrix(H: MatrixLike) -> np.ndarray:
    return H.H if isinstance(H, SampledBandMatrix) else np.asarray(H)


@dataclass
class Spectrum:
    """Eigendecomposition of a Hermitian matrix, shared across spectral parameters."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def resolvent(self, z: complex) -> np.ndarray:
        U = self.eigenvectors
        return (U / (self.eigenvalues - z)) @ U.conj().T


def spectrum(H: MatrixLike) -> Spectrum:
    evals, evecs = np.linalg.eigh(_matrix(H))
    return Spectrum(evals, evecs)


@dataclass
class ResolventObservables:
    z: complex
    m: complex
    G: np.ndarray
    identity_residual: float
    mass_residual: float

    @property
    def eta(self) -> float:
        return self.z.imag

    @property
    def lam(self) -> float:
        return lambda_stat(self.G, self.m)

    @property
    def T_bar(self) -> np.ndarray:
        return np.diagonal(self.G).imag / (self.G.shape[0] * self.eta)


def identity_residual(H: np.ndarray, z: complex, G: np.ndarray) -> float:
    R = (H - z * np.eye(H.shape[0])) @ G - np.eye(H.shape[0])
    return float(np.max(np.abs(R)))


def mass_residual(G: np.ndarray, eta: float) -> float:
    """Worst relative violation of sum_y |G_yx|^2 = Im G_xx / eta."""
    lhs = np.sum(np.abs(G) ** 2, axis=0)
    rhs = np.diagonal(G).imag / eta
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


def resolvent(H: MatrixLike, z_list, spec: Optional[Spectrum] = None, check: bool = True) -> list[ResolventObservables]:
    """Resolvents at every z in ``z_list``.

    One eigendecomposition is shared across the list when it has more than one
    point (or when ``spec`` is supplied); a single point uses a direct inverse.
    """
    A = _matrix(H)
    zs = [complex(z) for z in np.atleast_1d(z_list)]
    for z in zs:
        if z.imag < 1e-6:
            raise ValueError(f"eta={z.imag} below 1e-6")
    if spec is None and len(zs) > 1:
        spec = spectrum(A)
    out = []
    for z in zs:
        if spec is not None:
            G = spec.resolvent(z)
        else:
            G = np.linalg.inv(A - z * np.eye(A.shape[0]))
        idr = identity_residual(A, z, G) if check else float("nan")
        mr = mass_residual(G, z.imag) if check else float("nan")
        out.append(ResolventObservables(z, complex(msc(z)), G, idr, mr))
    return out


def lambda_stat(G: np.ndarray, m: complex) -> float:
    D = G - m * np.eye(G.shape[0])
    return float(np.max(np.abs(D)))


def _dense(S) -> np.ndarray:
    return S.dense() if isinstance(S, VarianceMatrix) else np.asarray(S)


def t_matrix(S, G: np.ndarray) -> np.ndarray:
    """T_xy = sum_i s_xi |G_iy|^2."""
    return _dense(S) @ (np.abs(G) ** 2)


def t_prime(S, G: np.ndarray) -> np.ndarray:
    """T'_xy = sum_j |G_xj|^2 s_jy."""
    return (np.abs(G) ** 2) @ _dense(S)


def y_matrix(T: np.ndarray, S, T_prime: Optional[np.ndarray] = None, tol: float = 1e-9) -> np.ndarray:
    """Y = T S; when ``T_prime`` is given the factorization S T' is checked too."""
    Sd = _dense(S)
    Y = T @ Sd
    if T_prime is not None:
        Y2 = Sd @ T_prime
        scale = max(float(np.max(np.abs(Y))), 1e-300)
        if np.max(np.abs(Y - Y2)) > tol * scale:
            raise ArithmeticError("T S and S T' disagree beyond tolerance")
    return Y


@dataclass
class SelfConsistentResidual:
    E: np.ndarray
    max_abs: float
    ratio: Optional[float]
    bound: Optional[float]


def sc_residual(T: np.ndarray, S, m: complex, M: Optional[float] = None, eta: Optional[float] = None) -> SelfConsistentResidual:
    """E = T - |m|^2 S T - |m|^2 S, with the ratio max|E| / (Psi^4 + Psi^2 M^-1/2)."""
    Sd = _dense(S)
    m2 = abs(m) ** 2
    E = T - m2 * (Sd @ T) - m2 * Sd
    mx = float(np.max(np.abs(E)))
    if M is None or eta is None:
        return SelfConsistentResidual(E, mx, None, None)
    psi = psi_standard(M, eta)
    bound = psi**4 + psi**2 * M**-0.5
    return SelfConsistentResidual(E, mx, mx / bound, bound)


# --- minors and resolvent identities -------------------------------------------------

def minor_resolvent(H: np.ndarray, z: complex, removed: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Resolvent of H with rows and columns in ``removed`` deleted.

    Returns the inverse together with the kept indices; entry (a, b) of the
    inverse belongs to original indices (keep[a], keep[b]).
    """
    N = H.shape[0]
    rem = set(int(r) for r in removed)
    keep = np.array([i for i in range(N) if i not in rem], dtype=int)
    sub = H[np.ix_(keep, keep)]
    return np.linalg.inv(sub - z * np.eye(keep.size)), keep


class _Minor:
    def __init__(self, H: np.ndarray, z: complex, removed: Sequence[int]):
        self.G, keep = minor_resolvent(H, z, removed)
        self.pos = {int(k): a for a, k in enumerate(keep)}

    def __call__(self, i: int, j: int) -> complex:
        return complex(self.G[self.pos[i], self.pos[j]])


@dataclass
class IdentityReport:
    family_a_offdiag: float
    family_a_inverse: float
    family_b_left: Optional[float]
    family_b_right: Optional[float]

    @property
    def worst(self) -> float:
        vals = [v for v in (self.family_a_offdiag, self.family_a_inverse, self.family_b_left, self.family_b_right) if v is not None]
        return max(vals)


def _rel(a: complex, b: complex) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def verify_resolvent_identities(H: MatrixLike, z: complex, T_set: Sequence[int], i: int, j: int, k: int,
                                pivot_floor: float = 1e-12) -> IdentityReport:
    A = _matrix(H)
    T = set(int(t) for t in T_set)
    if i in T or j in T or k in T:
        raise ValueError("indices i, j, k must lie outside the removed set")
    if k in (i, j):
        raise ValueError("k must differ from i and j")
    GT = _Minor(A, z, sorted(T))
    GTk = _Minor(A, z, sorted(T | {k}))
    if abs(GT(k, k)) < pivot_floor:
        raise ArithmeticError("degenerate pivot G_kk")
    offd = _rel(GT(i, j), GTk(i, j) + GT(i, k) * GT(k, j) / GT(k, k))
    inv_lhs = 1.0 / GT(i, i)
    inv_rhs = 1.0 / GTk(i, i) - GT(i, k) * GT(k, i) / (GT(i, i) * GTk(i, i) * GT(k, k))
    inv = _rel(inv_lhs, inv_rhs)
    left = right = None
    if i != j:
        GTi = _Minor(A, z, sorted(T | {i}))
        GTj = _Minor(A, z, sorted(T | {j}))
        others_i = [q for q in range(A.shape[0]) if q not in T and q != i]
        others_j = [q for q in range(A.shape[0]) if q not in T and q != j]
        sum_l = sum(A[i, q] * GTi(q, j) for q in others_i)
        sum_r = sum(GTj(i, q) * A[q, j] for q in others_j)
        left = _rel(GT(i, j), -GT(i, i) * sum_l)
        right = _rel(GT(i, j), -GT(j, j) * sum_r)
    return IdentityReport(offd, inv, left, right)


# --- row resampling and partial expectations ----------------------------------------------

class RowResampler:
    """Resolvent after redrawing row and column ``x`` of H, in O(N^2) per draw.

    The minor resolvent with index x removed comes from G by one rank-one
    update; a fresh row h then gives the new resolvent through the Schur
    complement.
    """

    def __init__(self, H: np.ndarray, G: np.ndarray, z: complex, x: int, s_row: np.ndarray,
                 symmetry_class: str = COMPLEX_HERMITIAN, distribution="gaussian"):
        self.N = H.shape[0]
        self.z = complex(z)
        self.x = int(x)
        self.G = G
        self.cls = normalize_class(symmetry_class)
        self.distribution = distribution
        self.scale = np.sqrt(np.asarray(s_row, dtype=float))
        self._minor = None

    @property
    def minor(self) -> np.ndarray:
        if self._minor is None:
            G, x = self.G, self.x
            minor = G - np.outer(G[:, x], G[x, :]) / G[x, x]
            minor[x, :] = 0.0
            minor[:, x] = 0.0
            self._minor = minor
        return self._minor

    def draw_rows(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.cls == COMPLEX_HERMITIAN:
            re = _standard_draws(rng, self.distribution, (count, self.N))
            im = _standard_draws(rng, self.distribution, (count, self.N))
            zeta = (re + 1j * im) / np.sqrt(2.0)
            zeta[:, self.x] = _standard_draws(rng, self.distribution, (count,))
        else:
            zeta = _standard_draws(rng, self.distribution, (count, self.N))
        return zeta * self.scale[None, :]

    def new_resolvent(self, h: np.ndarray) -> np.ndarray:
        """Full resolvent when row x of H is replaced by ``h`` (column x by conj(h))."""
        x = self.x
        hx = h.copy()
        hxx = float(np.real(hx[x]))
        hx[x] = 0.0
        row_vec = hx @ self.minor
        col_vec = self.minor @ hx.conj()
        Gxx = 1.0 / (hxx - self.z - row_vec @ hx.conj())
        col = -Gxx * col_vec
        row = -Gxx * row_vec
        G = self.minor + np.outer(col, row) / Gxx
        G[:, x] = col
        G[x, :] = row
        G[x, x] = Gxx
        return G


    def entries(self, rows: np.ndarray, mu: int) -> tuple[np.ndarray, np.ndarray]:
        """New (G_{mu x}, G_{x mu}) for each resampled row, without forming the minor."""
        G, x = self.G, self.x
        hz = np.array(rows, dtype=complex)
        hxx = hz[:, x].real.copy()
        hz[:, x] = 0.0
        hc = hz.conj()
        gx = G[:, x]
        rx = G[x, :]
        Gxx = G[x, x]
        HG = hz @ G
        h_gx = hz @ gx
        rx_hc = hc @ rx
        quad = np.sum(HG * hc, axis=1) - h_gx * rx_hc / Gxx
        row_mu = HG[:, mu] - h_gx * rx[mu] / Gxx
        col_mu = hc @ G[mu, :] - gx[mu] * rx_hc / Gxx
        Gnew = 1.0 / (hxx - self.z - quad)
        return -Gnew * col_mu, -Gnew * row_mu


ObservableSpec = Union[str, Callable[[np.ndarray], float]]


def _observable(spec: ObservableSpec, x: int, y: int) -> Callable[[np.ndarray], float]:
    if callable(spec):
        return spec
    if spec == "abs2":
        return lambda G: float(abs(G[x, y]) ** 2)
    if spec == "re":
        return lambda G: float(G[x, y].real)
    raise ValueError(f"unknown observable {spec!r}")


@dataclass
class PartialExpectation:
    estimate: float
    stderr: float
    baseline: Optional[float]
    deviation: Optional[float]
    samples: np.ndarray


def partial_expectation_probe(S: VarianceMatrix, H: SampledBandMatrix, z: complex, x: int, y: int,
                              observable: ObservableSpec = "abs2", inner_trials: int = 32, seed: int = 0,
                              theta_column: Optional[np.ndarray] = None) -> PartialExpectation:
    """Monte Carlo estimate of the partial expectation over row/column x.

    With the default observable |G_xy|^2 the baseline delta_xy |m|^2 + |m|^2 Theta_xy
    is reported; ``theta_column`` supplies Theta_{.0} to avoid recomputation.
    """
    if inner_trials < 16:
        raise ValueError("inner_trials must be at least 16")
    z = complex(z)
    A = H.H
    G = np.linalg.inv(A - z * np.eye(A.shape[0]))
    lat = S.lattice
    s_row = S.row[lat.site_index(lat.coords()[x] - lat.coords())] if lat.d > 1 else S.row[(x - np.arange(S.N)) % S.N]
    res = RowResampler(A, G, z, x, s_row, H.symmetry_class, H.distribution if H.distribution in ("gaussian", "bernoulli") else "gaussian")
    f = _observable(observable, x, y)
    rng = make_rng(seed)
    rows = res.draw_rows(rng, inner_trials)
    vals = np.array([f(res.new_resolvent(r)) for r in rows])
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(vals.size))
    base = dev = None
    if observable == "abs2":
        from .profile import theta_exact_dft
        col = theta_column if theta_column is not None else theta_exact_dft(S, z).column
        m2 = abs(complex(msc(z))) ** 2
        diff = lat.site_index(lat.coords()[x] - lat.coords()[y]) if lat.d > 1 else (x - y) % S.N
        base = (1.0 if x == y else 0.0) * m2 + m2 * float(col[diff])
        dev = est - base
    return PartialExpectation(est, se, base, dev, vals)


# --- fluctuation averaging probes -------------------------------------------------------

FLUCT_KINDS = ("gg_noq", "ggstar_noq", "q_gg", "q_ggstar", "ggg_star")


@dataclass
class FluctuationRecord:
    kind: str
    magnitude: float
    bound: float
    ratio: float


def _fa_bound(kind: str, psi: float, M: float) -> float:
    q = psi + M**-0.25
    return {
        "gg_noq": psi * q * q,
        "ggstar_noq": psi**2,
        "q_gg": psi**3,
        "q_ggstar": psi**2 * q * q,
        "ggg_star": psi**2 * q * q,
    }[kind]


def fluct_avg_probe(S: VarianceMatrix, H: SampledBandMatrix, z: complex, rho: int, mu: int, kind: str,
                    inner_trials: int = 16, seed: int = 0, nu: Optional[int] = None,
                    support_tol: float = 1e-6) -> FluctuationRecord:
    """Averaged monomial sum_a s_{rho a} X_a with the partial expectations
    inside the Q kinds estimated by row resampling.

    Sites a with s_{rho a} below ``support_tol * max s`` are skipped.
    """
    if kind not in FLUCT_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {FLUCT_KINDS}")
    z = complex(z)
    A = H.H
    N = A.shape[0]
    G = np.linalg.inv(A - z * np.eye(N))
    Sd = S.dense()
    s = Sd[rho]
    nu = (mu + 1) % N if nu is None else nu
    psi = psi_standard(S.M, z.imag)
    sites = [a for a in range(N) if a != mu and s[a] >= support_tol * s.max()]
    if kind == "gg_noq":
        sites = [a for a in sites if a != nu]
        val = sum(s[a] * G[mu, a] * G[a, nu] for a in sites)
    elif kind == "ggstar_noq":
        val = sum(s[a] * abs(G[mu, a]) ** 2 for a in sites)
    elif kind == "ggg_star":
        w = np.zeros(N)
        w[sites] = s[sites]
        inner = Sd * np.outer(w, np.ones(N))
        np.fill_diagonal(inner, 0.0)
        inner[:, mu] = 0.0
        # sum_{a != b} s_{rho a} s_{ab} G_ba G_a mu conj(G_mu b)
        val = np.einsum("ab,ba,a,b->", inner, G, G[:, mu], G[mu, :].conj())
    else:
        rng = make_rng(seed)
        val = 0.0 + 0.0j
        for a in sites:
            res = RowResampler(A, G, z, a, Sd[a], H.symmetry_class)
            rows = res.draw_rows(rng, inner_trials)
            g_mu_a, g_a_mu = res.entries(rows, mu)
            if kind == "q_gg":
                current, draws = G[mu, a] * G[a, mu], g_mu_a * g_a_mu
            else:
                current, draws = abs(G[mu, a]) ** 2, np.abs(g_mu_a) ** 2
            val += s[a] * (current - np.mean(draws))
    mag = float(abs(val))
    bound = _fa_bound(kind, psi, S.M)
    return FluctuationRecord(kind, mag, bound, mag / bound)


# --- eigenvector delocalization -------------------------------------------------------------

@dataclass
class DelocalizationStats:
    eigenvalues: np.ndarray
    interval: tuple[float, float]
    ell: float
    eps: float
    membership_sum: np.ndarray
    in_interval: np.ndarray
    localized: np.ndarray
    ipr: np.ndarray

    @property
    def fraction(self) -> float:
        return float(np.count_nonzero(self.localized)) / self.eigenvalues.size


def _far_weights_1d(prob: np.ndarray, ell: int) -> np.ndarray:
    """For each site x and column vector, the weight on sites at periodic distance >= ell."""
    N = prob.shape[0]
    csum = np.concatenate([np.zeros((1, prob.shape[1])), np.cumsum(np.concatenate([prob, prob, prob]), axis=0)])
    x = np.arange(N) + N
    lo = x - (ell - 1)
    hi = x + (ell - 1)
    near = csum[hi + 1] - csum[lo]
    total = csum[2 * N] - csum[N]
    return np.clip(total[None, :] - near, 0.0, None)


def membership_sums(vectors: np.ndarray, ell: float, lattice: Optional[TorusLattice] = None) -> np.ndarray:
    """sum_x |u(x)| * ||P_{x,ell} u|| for each column u, with periodic distance."""
    prob = np.abs(vectors) ** 2
    N = prob.shape[0]
    if lattice is None or lattice.d == 1:
        L = N
        ell_int = int(np.ceil(ell))
        if ell_int <= 0:
            far = np.broadcast_to(prob.sum(axis=0), prob.shape)
        elif 2 * ell_int - 1 >= L:
            far = np.zeros_like(prob)
        else:
            far = _far_weights_1d(prob, ell_int)
    else:
        mask = (lattice.distance_matrix() >= ell).astype(float)
        far = mask @ prob
    return np.sum(np.abs(vectors) * np.sqrt(far), axis=0)


def eigen_deloc(H: MatrixLike, kappa: float = 0.1, eps: float = 0.1, ell: Optional[float] = None,
                spec: Optional[Spectrum] = None, lattice: Optional[TorusLattice] = None) -> DelocalizationStats:
    A = _matrix(H)
    N = A.shape[0]
    ell = N / 8 if ell is None else ell
    if lattice is None and isinstance(H, SampledBandMatrix):
        lattice = H.lattice
    side = lattice.L if lattice is not None else N
    if not ell < side / 2:
        raise ValueError("ell must be smaller than half the torus side")
    if eps <= 0:
        raise ValueError("eps must be positive")
    spec = spectrum(A) if spec is None else spec
    lo, hi = -2.0 + kappa, 2.0 - kappa
    inside = (spec.eigenvalues >= lo) & (spec.eigenvalues <= hi)
    sums = membership_sums(spec.eigenvectors, ell, lattice)
    ipr = np.sum(np.abs(spec.eigenvectors) ** 4, axis=0)
    return DelocalizationStats(spec.eigenvalues, (lo, hi), float(ell), float(eps), sums, inside, inside & (sums <= eps), ipr)
