"""Torus geometry, variance profiles and band-matrix sampling."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

REAL_SYMMETRIC = "real-symmetric"
COMPLEX_HERMITIAN = "complex-Hermitian"
SYMMETRY_CLASSES = (REAL_SYMMETRIC, COMPLEX_HERMITIAN)

_CLASS_ALIASES = {
    "rs": REAL_SYMMETRIC,
    "real": REAL_SYMMETRIC,
    "real-symmetric": REAL_SYMMETRIC,
    "ch": COMPLEX_HERMITIAN,
    "complex": COMPLEX_HERMITIAN,
    "complex-hermitian": COMPLEX_HERMITIAN,
}


class BandwidthWarning(UserWarning):
    """Band width outside the recommended window [L**delta, L]."""


def normalize_class(name: str) -> str:
    try:
        return _CLASS_ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown symmetry class {name!r}; expected one of {SYMMETRY_CLASSES}") from None


@dataclass(frozen=True)
class TorusLattice:
    """Discrete torus of side ``L`` in ``d`` dimensions.

    Sites are ordered row-major: the site with coordinates ``(c_0, ..., c_{d-1})``,
    each in ``[0, L)``, has index ``sum_k c_k * L**(d-1-k)``.
    """

    d: int
    L: int

    def __post_init__(self) -> None:
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"side length must be an integer >= 2, got {self.L}")

    @property
    def N(self) -> int:
        return self.L**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    def canonical(self, vec) -> np.ndarray:
        """Representative of ``vec`` with every coordinate in ``[-L/2, L/2)``."""
        v = np.asarray(vec)
        half = self.L // 2
        return np.mod(v + half, self.L) - half

    def norm(self, vec) -> np.ndarray:
        """Periodic Euclidean length; the last axis holds coordinates when d > 1."""
        c = self.canonical(vec).astype(float)
        if self.d == 1 and (c.ndim == 0 or c.shape[-1] != 1):
            return np.abs(c)
        return np.sqrt(np.sum(c * c, axis=-1))

    def coords(self) -> np.ndarray:
        """(N, d) array of site coordinates in ``[0, L)`` in canonical order."""
        grids = np.indices(self.shape).reshape(self.d, -1).T
        return grids.astype(np.int64)

    def representatives(self) -> np.ndarray:
        """(N, d) array of canonical representatives of every site."""
        return self.canonical(self.coords())

    def site_index(self, coords) -> np.ndarray:
        c = np.mod(np.asarray(coords, dtype=np.int64), self.L)
        if self.d == 1 and (c.ndim == 0 or c.shape[-1] != 1):
            return c
        weights = self.L ** np.arange(self.d - 1, -1, -1, dtype=np.int64)
        return c @ weights

    def distances_from_origin(self) -> np.ndarray:
        return self.norm(self.representatives())

    def difference_index(self) -> np.ndarray:
        """(N, N) array whose (i, j) entry is the site index of ``[i - j]_L``."""
        c = self.coords()
        diff = c[:, None, :] - c[None, :, :]
        return self.site_index(diff).astype(np.int32 if self.N < 2**31 else np.int64)

    def distance_matrix(self) -> np.ndarray:
        return self.distances_from_origin()[self.difference_index()]


def build_lattice(d: int, L: int) -> TorusLattice:
    return TorusLattice(d, L)


def gaussian_density(x: np.ndarray) -> np.ndarray:
    """Standard Gaussian density on R^d evaluated at rows of ``x`` (shape (..., d))."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    return np.exp(-0.5 * np.sum(x * x, axis=-1)) / (2.0 * np.pi) ** (d / 2)


def smooth_window(t: np.ndarray, a: float, b: float) -> np.ndarray:
    """Smooth even cutoff: 1 for |t| <= a, 0 for |t| >= b, C-infinity in between."""
    t = np.abs(np.asarray(t, dtype=float))
    u = np.clip((t - a) / (b - a), 0.0, 1.0)

    def bump(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    num = bump(1.0 - u)
    return num / (num + bump(u))


@dataclass(frozen=True)
class BandProfile:
    """Shape of the variance profile.

    ``kind`` is ``"rapid-decay"`` (density ``density`` evaluated at ``x/W``)
    or ``"heavy-tail"``, where the density is
    ``h0 * (1 + x**4) ** (-(1 + beta)/4) * (1 + correction / (1 + x**4))``
    times the smooth window ``sigma(x/N)`` with cutoffs ``a < b``.
    """

    kind: str = "rapid-decay"
    W: float = 1.0
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    beta: float = 1.5
    h0: float = 1.0
    correction: float = 0.0
    a: float = 0.25
    b: float = 0.45
    delta: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in ("rapid-decay", "heavy-tail"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not self.W > 0:
            raise ValueError(f"band width must be positive, got {self.W}")
        if self.kind == "heavy-tail":
            if not 0 < self.beta < 2:
                raise ValueError(f"heavy-tail exponent must lie in (0, 2), got {self.beta}")
            if not 0 < self.a < self.b < 0.5:
                raise ValueError(f"cutoffs must satisfy 0 < a < b < 1/2, got a={self.a}, b={self.b}")
            if not self.h0 > 0:
                raise ValueError("h0 must be positive")
            if self.correction <= -1:
                raise ValueError("correction amplitude must exceed -1 to keep the density positive")

    def f(self, x: np.ndarray) -> np.ndarray:
        """Density evaluated at rescaled displacements ``x`` (shape (..., d))."""
        x = np.asarray(x, dtype=float)
        if self.kind == "heavy-tail":
            t = np.abs(x[..., 0] if x.ndim and x.shape[-1] == 1 else x)
            q = 1.0 + t**4
            return self.h0 * q ** (-(1.0 + self.beta) / 4.0) * (1.0 + self.correction / q)
        dens = self.density or gaussian_density
        return dens(x)

    def decay_constants(self, orders: Sequence[int] = (2, 4, 8), radius: float = 50.0, samples: int = 2001) -> dict[int, float]:
        """Empirical sup of |f(x)| <x>^n along a ray, for the rapid-decay check."""
        r = np.linspace(0.0, radius, samples)
        x = np.zeros((samples, 1))
        x[:, 0] = r
        vals = np.abs(self.f(x))
        bracket = np.sqrt(1.0 + r * r)
        return {n: float(np.max(vals * bracket**n)) for n in orders}


@dataclass(frozen=True)
class VarianceMatrix:
    """Circulant stochastic matrix stored through its generating row ``s_{x0}``."""

    lattice: TorusLattice
    profile: Optional[BandProfile]
    row: np.ndarray
    Z: float
    epsilon: float = 0.0

    @property
    def N(self) -> int:
        return self.lattice.N

    @property
    def W(self) -> float:
        return self.profile.W if self.profile is not None else float(self.lattice.L)

    @property
    def M(self) -> float:
        return 1.0 / float(np.max(self.row))

    def dense(self) -> np.ndarray:
        return self.row[self.lattice.difference_index()]

    def row_grid(self) -> np.ndarray:
        return self.row.reshape(self.lattice.shape)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Multiply S by the columns of ``v`` with the convolution theorem."""
        shape = self.lattice.shape
        v = np.asarray(v)
        cols = v.reshape(shape + v.shape[1:])
        axes = tuple(range(self.lattice.d))
        sh = np.fft.fftn(self.row_grid()).real
        expand = sh.reshape(shape + (1,) * (v.ndim - 1))
        out = np.fft.ifftn(np.fft.fftn(cols, axes=axes) * expand, axes=axes)
        if not np.iscomplexobj(v):
            out = out.real
        return out.reshape(v.shape)


def build_variance_matrix(lattice: TorusLattice, profile: BandProfile) -> VarianceMatrix:
    L, d = lattice.L, lattice.d
    W = profile.W
    lo = L**profile.delta
    if W < lo or W > L:
        warnings.warn(f"band width W={W} outside [L^delta, L] = [{lo:.3g}, {L}]", BandwidthWarning, stacklevel=2)
    reps = lattice.representatives().astype(float)
    if profile.kind == "heavy-tail":
        if d != 1:
            raise ValueError("heavy-tail profiles are implemented for d = 1 only")
        vals = profile.f(reps / W) * smooth_window(reps[:, 0] / lattice.N, profile.a, profile.b)
    else:
        vals = profile.f(reps / W)
    vals = np.asarray(vals, dtype=float).reshape(-1)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("profile density must be finite and nonnegative on the lattice")
    Z = float(math.fsum(vals))
    if Z <= 0:
        raise ValueError("profile row vanishes on every lattice site; increase W")
    row = vals / Z
    # fold the rounding defect into the largest entry so the row sums to 1
    row[np.argmax(row)] += 1.0 - math.fsum(row)
    return VarianceMatrix(lattice, profile, row, Z)


def identity_variance(lattice: TorusLattice) -> VarianceMatrix:
    row = np.zeros(lattice.N)
    row[0] = 1.0
    return VarianceMatrix(lattice, None, row, 1.0)


def flat_variance(lattice: TorusLattice) -> VarianceMatrix:
    """The mean-field matrix with every entry equal to 1/N."""
    return VarianceMatrix(lattice, None, np.full(lattice.N, 1.0 / lattice.N), float(lattice.N))


def mix_mean_field(S: VarianceMatrix, eps: float) -> VarianceMatrix:
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"mean-field weight must lie in [0, 1/2], got {eps}")
    if eps == 0.0:
        return S
    row = (1.0 - eps) * S.row + eps / S.N
    row[np.argmax(row)] += 1.0 - math.fsum(row)
    return VarianceMatrix(S.lattice, S.profile, row, S.Z, epsilon=eps)


# --- sampling ---------------------------------------------------------------

Distribution = Union[str, Callable[[np.random.Generator, tuple], np.ndarray]]


def _standard_draws(rng: np.random.Generator, distribution: Distribution, shape: tuple) -> np.ndarray:
    """Real draws with mean 0 and variance 1."""
    if callable(distribution):
        out = np.asarray(distribution(rng, shape), dtype=float)
        if out.shape != shape:
            raise ValueError("custom distribution returned the wrong shape")
        return out
    if distribution == "gaussian":
        return rng.standard_normal(shape)
    if distribution == "bernoulli":
        return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
    raise ValueError(f"unknown entry distribution {distribution!r}")


def _distribution_name(distribution: Distribution) -> str:
    return distribution if isinstance(distribution, str) else getattr(distribution, "__name__", "custom")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream owned by a single call."""
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


@dataclass(frozen=True)
class SampledBandMatrix:
    H: np.ndarray
    symmetry_class: str
    distribution: str
    seed: int
    mean_field: Optional[tuple[float, int]] = None
    lattice: Optional[TorusLattice] = field(default=None, compare=False)

    @property
    def N(self) -> int:
        return self.H.shape[0]


def sample_noise(N: int, symmetry_class: str, distribution: Distribution, rng: np.random.Generator) -> np.ndarray:
    """Hermitian noise matrix zeta with E|zeta_ij|^2 = 1 and real diagonal."""
    cls = normalize_class(symmetry_class)
    if cls == REAL_SYMMETRIC:
        X = _standard_draws(rng, distribution, (N, N))
        upper = np.triu(X)
        return upper + np.triu(X, 1).T
    re = _standard_draws(rng, distribution, (N, N))
    im = _standard_draws(rng, distribution, (N, N))
    diag = _standard_draws(rng, distribution, (N,))
    Z = np.triu((re + 1j * im) / np.sqrt(2.0), 1)
    Z = Z + Z.conj().T
    Z[np.diag_indices(N)] = diag
    return Z


def sample_matrix(S: VarianceMatrix, symmetry_class: str = COMPLEX_HERMITIAN,
                  distribution: Distribution = "gaussian", seed: int = 0) -> SampledBandMatrix:
    cls = normalize_class(symmetry_class)
    rng = make_rng(seed)
    zeta = sample_noise(S.N, cls, distribution, rng)
    H = np.sqrt(S.dense()) * zeta
    return SampledBandMatrix(H, cls, _distribution_name(distribution), int(seed), lattice=S.lattice)


def sample_mean_field_mix(H: SampledBandMatrix, eps: float, U_seed: int,
                          distribution: Distribution = "gaussian") -> SampledBandMatrix:
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"mean-field weight must lie in [0, 1/2], got {eps}")
    if eps == 0.0:
        return H
    N = H.N
    rng = make_rng(U_seed)
    U = sample_noise(N, H.symmetry_class, distribution, rng) / np.sqrt(N)
    mixed = np.sqrt(1.0 - eps) * H.H + np.sqrt(eps) * U
    return SampledBandMatrix(mixed, H.symmetry_class, H.distribution, H.seed, (float(eps), int(U_seed)), H.lattice)
