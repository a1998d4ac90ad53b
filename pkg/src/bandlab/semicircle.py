"""Semicircle Stieltjes transform, spectral domain and deterministic control parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

DEFAULT_KAPPA = 0.1
DEFAULT_GAMMA = 0.1
DEFAULT_K = 4


def msc(z):
    """Root of m**2 + z*m + 1 = 0 with positive imaginary part (vectorized)."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise ValueError("msc requires Im z > 0")
    disc = np.sqrt(z * z - 4.0)
    r1 = (-z + disc) / 2.0
    r2 = (-z - disc) / 2.0
    m = np.where(r1.imag > 0, r1, r2)
    # one Newton step on the quadratic tightens the residual near the edges
    m = m - (m * m + z * m + 1.0) / (2.0 * m + z)
    return m[()] if m.ndim == 0 else m


def alpha(E):
    E = np.asarray(E, dtype=float)
    if np.any(np.abs(E) >= 2):
        raise ValueError("alpha requires |E| < 2")
    a = 2.0 / np.sqrt(4.0 - E * E)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class SpectralParameter:
    E: float
    eta: float
    M: float
    kappa: float = DEFAULT_KAPPA
    gamma: float = DEFAULT_GAMMA

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)

    @property
    def eta_min(self) -> float:
        return self.M ** (-1.0 + self.gamma)

    @property
    def in_domain(self) -> bool:
        return in_domain(self.E, self.eta, self.M, self.kappa, self.gamma)

    def violations(self) -> list[str]:
        out = []
        if not -2 + self.kappa <= self.E <= 2 - self.kappa:
            out.append(f"energy E={self.E} outside [-2+kappa, 2-kappa] with kappa={self.kappa}")
        if self.eta < self.eta_min:
            out.append(f"eta={self.eta} below M^(-1+gamma)={self.eta_min:.6g} (M={self.M:.6g}, gamma={self.gamma})")
        if self.eta > 10:
            out.append(f"eta={self.eta} above 10")
        return out


def in_domain(E: float, eta: float, M: float, kappa: float = DEFAULT_KAPPA, gamma: float = DEFAULT_GAMMA) -> bool:
    return bool(-2 + kappa <= E <= 2 - kappa and M ** (-1.0 + gamma) <= eta <= 10)


@dataclass(frozen=True)
class SemicircleData:
    z: complex
    m: complex
    alpha: float
    im_m: float
    abs_m_sq: float


def semicircle_data(z: complex) -> SemicircleData:
    z = complex(z)
    m = complex(msc(z))
    a = alpha(z.real) if abs(z.real) < 2 else float("nan")
    return SemicircleData(z, m, a, m.imag, abs(m) ** 2)


def phi_sq(N: float, W: float, eta: float) -> float:
    """Squared control parameter max(1/(N eta), 1/(W sqrt(eta)))."""
    return max(1.0 / (N * eta), 1.0 / (W * np.sqrt(eta)))


def phi_eps_sq(N: float, W: float, eta: float, eps: float) -> float:
    return max(1.0 / (N * eta), 1.0 / (W * np.sqrt(eps + eta)))


def psi_standard(M: float, eta: float) -> float:
    return float((M * eta) ** -0.5)


def is_admissible(psi: float, M: float, gamma: float = DEFAULT_GAMMA) -> bool:
    return bool(M**-0.5 <= psi <= M ** (-gamma / 2.0))


@dataclass(frozen=True)
class ControlParameters:
    phi_sq: float
    phi_eps_sq: float
    psi: float
    admissible: bool


def control_parameters(N: int, W: float, M: float, eta: float, eps: float = 0.0,
                       gamma: float = DEFAULT_GAMMA) -> ControlParameters:
    psi = psi_standard(M, eta)
    return ControlParameters(phi_sq(N, W, eta), phi_eps_sq(N, W, eta, eps), psi, is_admissible(psi, M, gamma))


def _bracket(x):
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def upsilon(displacement, z: complex, W: float, N: int, D, a: Optional[float] = None,
            K: int = DEFAULT_K, d: int = 1, L: Optional[int] = None):
    """Deterministic envelope for |T - Theta| at displacement(s) x - y.

    For d = 1, ``displacement`` is an int or array of ints and ``D`` a scalar.
    For d >= 2, ``displacement`` has a trailing axis of length d, ``D`` is the
    d x d diffusion matrix and ``L`` the torus side.
    """
    z = complex(z)
    eta = z.imag
    if not 0 < eta <= 1:
        raise ValueError("upsilon requires eta in (0, 1]")
    if K < 1:
        raise ValueError("K must be at least 1")
    a = alpha(z.real) if a is None else a
    if d == 1:
        x = np.asarray(displacement)
        r = np.abs(np.mod(x + N // 2, N) - N // 2).astype(float)
        out = (1.0 / (N * eta)
               + np.exp(-np.sqrt(a * eta) * r / (W * np.sqrt(D))) / (W * np.sqrt(eta))
               + _bracket(np.sqrt(eta) * r / W) ** (-K) / W)
        return float(out) if out.ndim == 0 else out

    from .potentials import smoothed_yukawa

    L = int(round(N ** (1.0 / d))) if L is None else L
    x = np.asarray(displacement, dtype=float)
    x = np.mod(x + L // 2, L) - L // 2
    D = np.atleast_2d(np.asarray(D, dtype=float))
    evals, evecs = np.linalg.eigh(D)
    Dm12 = evecs @ np.diag(evals**-0.5) @ evecs.T
    scaled = np.sqrt(a * eta) / W * (x @ Dm12.T)
    rad = np.sqrt(np.sum(scaled * scaled, axis=-1))
    r = np.sqrt(np.sum(x * x, axis=-1))
    t = np.sqrt(a * eta / (np.trace(D) / d))
    yuk = smoothed_yukawa(rad, d, t)
    out = (eta ** (d / 2 - 1) / W**d * yuk
           + W ** (-d) * _bracket(r / W) ** (-K)
           + eta ** (d / 2) / W**d * _bracket(np.sqrt(eta) * r / W) ** (-K))
    return float(out) if np.ndim(out) == 0 else out
