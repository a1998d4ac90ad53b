"""Deterministic diffusion profile: exact evaluations and closed-form approximations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .lattice import TorusLattice, VarianceMatrix
from .potentials import fractional_integral, smoothed_yukawa, stable_potential
from .semicircle import alpha, msc

ETA_FLOOR = 1e-8


class DegenerateProfileWarning(UserWarning):
    """Variance profile carries no spatial spread (for example S = identity)."""


@dataclass(frozen=True)
class FourierSymbol:
    """Values of the symbol on the dual lattice, indexed like ``numpy.fft.fftfreq``."""

    values: np.ndarray
    lattice: TorusLattice
    W: float
    row: np.ndarray = field(repr=False)

    def momenta(self) -> np.ndarray:
        """Dual-lattice momenta in [-pi, pi) per axis, shape ``values.shape + (d,)``."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.lattice.L)
        grids = np.meshgrid(*([k] * self.lattice.d), indexing="ij")
        return np.stack(grids, axis=-1)

    def at(self, p) -> np.ndarray:
        """Symbol at arbitrary momenta ``p`` (trailing axis of length d for d > 1)."""
        reps = self.lattice.representatives().astype(float)
        p = np.asarray(p, dtype=float)
        if self.lattice.d == 1 and (p.ndim == 0 or p.shape[-1] != 1):
            phase = p[..., None] * reps[:, 0]
        else:
            phase = p @ reps.T
        return np.cos(phase) @ self.row

    def scaled(self, q) -> np.ndarray:
        """Symbol at momenta ``q / W``."""
        return self.at(np.asarray(q, dtype=float) / self.W)


def _as_variance(S: Union[VarianceMatrix, np.ndarray]) -> VarianceMatrix:
    if isinstance(S, VarianceMatrix):
        return S
    A = np.asarray(S, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    N = A.shape[0]
    col = A[:, 0]
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    if not np.allclose(A, col[idx], rtol=0, atol=1e-14):
        raise ValueError("matrix is not circulant")
    return VarianceMatrix(TorusLattice(1, N), None, col.copy(), 1.0)


def s_hat(S: Union[VarianceMatrix, np.ndarray], W: Optional[float] = None) -> FourierSymbol:
    V = _as_variance(S)
    spec = np.fft.fftn(V.row_grid())
    scale = max(1.0, float(np.max(np.abs(spec.real))))
    if np.max(np.abs(spec.imag)) > 1e-10 * scale:
        raise ValueError("variance row is not symmetric: its transform has an imaginary part")
    return FourierSymbol(spec.real.copy(), V.lattice, V.W if W is None else W, V.row)


def diffusion_constant(S: VarianceMatrix, W: Optional[float] = None):
    """Second moment of the variance row divided by 2 W^2 (scalar for d = 1)."""
    W = S.W if W is None else W
    reps = S.lattice.representatives().astype(float) / W
    Dm = 0.5 * np.einsum("x,xi,xj->ij", S.row, reps, reps)
    if np.allclose(Dm, 0):
        warnings.warn("diffusion constant vanishes: the profile has no spatial spread", DegenerateProfileWarning, stacklevel=2)
    return float(Dm[0, 0]) if S.lattice.d == 1 else Dm


@dataclass(frozen=True)
class DiffusionProfile:
    """Column Theta_{x0} in site order plus provenance."""

    lattice: TorusLattice
    z: complex
    method: str
    column: np.ndarray
    tail_bound: Optional[float] = None

    def full(self) -> np.ndarray:
        return self.column[self.lattice.difference_index()]

    def grid(self) -> np.ndarray:
        return self.column.reshape(self.lattice.shape)


def _check_eta(z: complex) -> None:
    if z.imag < ETA_FLOOR:
        raise ValueError(f"eta={z.imag} below {ETA_FLOOR}: the profile system is numerically singular")


def theta_exact_dense(S: VarianceMatrix, z: complex, columns: Sequence[int] = (0,)) -> Union[DiffusionProfile, list]:
    """Solve (1 - |m|^2 S) Theta = |m|^2 S for the requested columns."""
    z = complex(z)
    _check_eta(z)
    m2 = abs(complex(msc(z))) ** 2
    Sd = S.dense()
    A = np.eye(S.N) - m2 * Sd
    cols = list(columns)
    X = np.linalg.solve(A, m2 * Sd[:, cols])
    if cols == [0]:
        return DiffusionProfile(S.lattice, z, "dense-solve", X[:, 0])
    return [DiffusionProfile(S.lattice, z, "dense-solve", X[:, k]) for k in range(len(cols))]


def theta_exact_dft(S: VarianceMatrix, z: complex) -> DiffusionProfile:
    z = complex(z)
    _check_eta(z)
    m2 = abs(complex(msc(z))) ** 2
    sh = s_hat(S).values
    col = np.fft.ifftn(m2 * sh / (1.0 - m2 * sh)).real.reshape(-1)
    return DiffusionProfile(S.lattice, z, "circulant-dft", col)


def theta_series(S: VarianceMatrix, z: complex, n_max: int) -> DiffusionProfile:
    """Partial random-walk sum of |m|^(2n) S^n, n = 1..n_max, column 0."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    z = complex(z)
    m2 = abs(complex(msc(z))) ** 2
    Sd = S.dense()
    v = np.zeros(S.N)
    v[0] = 1.0
    acc = np.zeros(S.N)
    w = 1.0
    for _ in range(n_max):
        v = Sd @ v
        w *= m2
        acc += w * v
    tail = m2 ** (n_max + 1) / (1.0 - m2)
    return DiffusionProfile(S.lattice, z, "geometric-series", acc, tail_bound=tail)


# --- closed forms, d = 1 -----------------------------------------------------

def _mz(z: complex):
    z = complex(z)
    m = complex(msc(z))
    return abs(m) ** 2, alpha(z.real), z.imag


def theta_closed_1d_momentum(x, z: complex, W: float, N: int, D: float):
    """Momentum sum over 2 pi Z / N, folded onto one period in closed form."""
    m2, a, eta = _mz(z)
    c = np.sqrt(a * eta / D) * N / (2.0 * np.pi * W)
    r = np.arange(N)
    arg = 2.0 * np.pi * c / N
    denom = 2.0 * np.sinh(arg / 2.0) ** 2 + 2.0 * np.sin(np.pi * r / N) ** 2
    folded = np.pi / (c * N) * np.sinh(arg) / denom
    per_site = np.fft.ifft(folded).real * N
    full = m2 * N / (4.0 * np.pi**2 * W**2 * D) * per_site
    out = full[np.mod(np.asarray(x, dtype=np.int64), N)]
    return float(out) if out.ndim == 0 else out


def theta_closed_1d_poisson(x, z: complex, W: float, N: int, D: float):
    """Periodized exponential profile, images summed until they fall below 1e-16."""
    m2, a, eta = _mz(z)
    rate = np.sqrt(a * eta) / (W * np.sqrt(D))
    pref = m2 / (2.0 * W * np.sqrt(D * a * eta))
    x = np.asarray(x, dtype=float)
    total = np.exp(-rate * np.abs(x))
    k = 1
    while True:
        term = np.exp(-rate * np.abs(x + k * N)) + np.exp(-rate * np.abs(x - k * N))
        total = total + term
        if np.all(term <= 1e-16 * total):
            break
        k += 1
    out = pref * total
    return float(out) if out.ndim == 0 else out


def theta_closed_1d(x, z: complex, W: float, N: int, D: float):
    """Both closed forms: (momentum sum, Poisson sum)."""
    return theta_closed_1d_momentum(x, z, W, N, D), theta_closed_1d_poisson(x, z, W, N, D)


# --- closed forms, d >= 2 ----------------------------------------------------

def _inv_sqrt(D: np.ndarray) -> np.ndarray:
    ev, U = np.linalg.eigh(D)
    if np.any(ev <= 0):
        raise ValueError("diffusion matrix must be positive definite")
    return U @ np.diag(ev**-0.5) @ U.T


def smoothing_scale(z: complex, D: np.ndarray) -> float:
    _, a, eta = _mz(z)
    d = D.shape[0]
    return float(np.sqrt(a * eta / (np.trace(D) / d)))


def theta_closed_dd(x, z: complex, W: float, L: int, D, method: str = "poisson", image_cut: float = 40.0):
    """Smoothed Yukawa profile for d in {2, 3}.

    The momentum cutoff is chi(W |D^{1/2} p| / sqrt(tr D / d)), which keeps the
    image sum radial.  ``method="momentum"`` evaluates the finite dual-lattice
    sum by FFT and returns the profile at ``x``; ``"poisson"`` sums images of
    the radially integrated potential.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = D.shape[0]
    if d not in (2, 3):
        raise ValueError(f"unsupported dimension {d}; use theta_closed_1d for d = 1")
    m2, a, eta = _mz(z)
    x = np.asarray(x, dtype=float)
    t = smoothing_scale(z, D)
    if method == "momentum":
        from .potentials import cutoff
        k = 2.0 * np.pi * np.fft.fftfreq(L)
        P = np.stack(np.meshgrid(*([k] * d), indexing="ij"), axis=-1)
        quad = np.einsum("...i,ij,...j->...", P, D, P)
        chi = cutoff(W * np.sqrt(quad) / np.sqrt(np.trace(D) / d))
        vals = np.fft.ifftn(chi / (a * eta + W**2 * quad)).real * m2
        idx = tuple(np.mod(np.rint(x[..., i]).astype(np.int64), L) for i in range(d))
        return vals[idx]
    if method != "poisson":
        raise ValueError(f"unknown method {method!r}")
    Dm12 = _inv_sqrt(D)
    scale = np.sqrt(a * eta) / W
    pref = m2 * (a * eta) ** (d / 2 - 1) / (W**d * np.sqrt(np.linalg.det(D)))
    lam_min = float(np.min(np.linalg.eigvalsh(Dm12)))
    reach = int(np.ceil(image_cut / (scale * lam_min * L) + 0.5))
    flat = x.reshape(-1, d)
    total = np.zeros(flat.shape[0])
    rng = np.arange(-reach, reach + 1)
    shifts = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d) * L
    for s in shifts:
        y = (flat + s) @ Dm12.T * scale
        rad = np.sqrt(np.sum(y * y, axis=-1))
        keep = rad <= image_cut
        if np.any(keep):
            total[keep] += smoothed_yukawa(rad[keep], d, t)
    out = (pref * total).reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


# --- heavy tail ----------------------------------------------------------------

def heavy_tail_B(S: VarianceMatrix) -> float:
    """Coefficient of |q|^beta in 1 - S_W(q) for the heavy-tail profile."""
    prof = S.profile
    if prof is None or prof.kind != "heavy-tail":
        raise ValueError("heavy_tail_B needs a heavy-tail variance matrix")
    return prof.h0 * prof.W * fractional_integral(prof.beta) / S.Z


def heavy_tail_scale(z: complex, B: float, beta: float) -> float:
    _, a, eta = _mz(z)
    return (a * eta / B) ** (1.0 / beta)


def theta_heavy_tail(x, z: complex, W: float, beta: float, B: float):
    if not 1 < beta < 2:
        raise ValueError(f"closed-form heavy-tail profile needs beta in (1, 2), got {beta}")
    m2, a, eta = _mz(z)
    lam = heavy_tail_scale(z, B, beta)
    v = stable_potential(lam * np.abs(np.asarray(x, dtype=float)) / W, beta)
    return m2 / (W * a * eta) * lam * v


# --- spectral gap -------------------------------------------------------------

@dataclass(frozen=True)
class GapRecord:
    gap: float
    reference: float
    ratio: float
    kind: str


def spectral_gap(S: VarianceMatrix) -> GapRecord:
    vals = np.abs(s_hat(S).values).reshape(-1)
    gap = 1.0 - float(np.max(vals[1:])) if vals.size > 1 else 1.0
    prof = S.profile
    if prof is not None and prof.kind == "heavy-tail":
        ref = (prof.W / S.N) ** prof.beta
        kind = "heavy-tail"
    else:
        ref = (S.W / S.lattice.L) ** 2
        kind = "rapid-decay"
    return GapRecord(gap, ref, gap / ref, kind)


# --- mean-field mixture ----------------------------------------------------------

def theta_mean_field(x, z: complex, W: float, N: int, D: float, eps: float,
                     periodic: bool = False, zero_mode: bool = False):
    """Exponential profile of the mixed ensemble.

    With ``periodic`` the exponential is summed over torus images; with
    ``zero_mode`` its own p = 0 Fourier component is replaced by the exact
    constant Im m / (N eta) of the mixed profile.
    """
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"mean-field weight must lie in [0, 1/2], got {eps}")
    m2, a, eta = _mz(z)
    A = (1.0 - eps) * a * eta + eps
    Bdiff = (1.0 - eps) * W**2 * D
    rate = np.sqrt(A / Bdiff)
    amp = m2 * (1.0 - eps) / (2.0 * np.sqrt(A * Bdiff))
    x = np.asarray(x, dtype=float)
    if periodic:
        total = np.exp(-rate * np.abs(x))
        k = 1
        while True:
            term = np.exp(-rate * np.abs(x + k * N)) + np.exp(-rate * np.abs(x - k * N))
            total = total + term
            if np.all(term <= 1e-16 * total):
                break
            k += 1
    else:
        total = np.exp(-rate * np.abs(x))
    out = amp * total
    if zero_mode:
        m = complex(msc(complex(z)))
        out = out - m2 * (1.0 - eps) / (N * A) + m.imag / (N * eta)
    return float(out) if out.ndim == 0 else out


# --- symbol fits ----------------------------------------------------------------

def _loglog_slope(q: np.ndarray, r: np.ndarray) -> float:
    return float(np.polyfit(np.log(q), np.log(np.abs(r)), 1)[0])


def quadratic_symbol_exponent(S: VarianceMatrix, q_low: float = 0.05, q_high: float = 0.5, points: int = 24) -> float:
    """Fitted power of the residual S_W(q) - (1 - D q^2) along the first axis."""
    sym = s_hat(S)
    D = diffusion_constant(S)
    Dxx = D if np.ndim(D) == 0 else D[0, 0]
    q = np.geomspace(q_low, q_high, points)
    if S.lattice.d == 1:
        vals = sym.scaled(q)
    else:
        p = np.zeros((points, S.lattice.d))
        p[:, 0] = q
        vals = sym.scaled(p)
    return _loglog_slope(q, vals - (1.0 - Dxx * q * q))


def heavy_tail_symbol_exponent(S: VarianceMatrix, q_low: float = 0.02, q_high: float = 0.2, points: int = 16) -> float:
    """Fitted power of 1 - S_W(q) for small q."""
    q = np.geomspace(q_low, q_high, points)
    return _loglog_slope(q, 1.0 - s_hat(S).scaled(q))
