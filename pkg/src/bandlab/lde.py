"""Monte Carlo check of moment bounds for linear and bilinear forms in independent variables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import Distribution, _standard_draws, make_rng

LDE_KINDS = ("linear", "bilinear-offdiag", "bilinear-two-family")
COEFFICIENT_FAMILIES = ("decaying", "random", "unit")


@dataclass(frozen=True)
class LDEReport:
    kind: str
    n: int
    trials: int
    coefficients: str
    p_list: tuple[int, ...]
    ratios: dict[int, float]
    rescaled_ratios: dict[int, float]
    scale: float = 10.0
    norms: dict[str, float] = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return max(max(self.ratios.values()), max(self.rescaled_ratios.values()))

    @property
    def max_rescale_deviation(self) -> float:
        return max(abs(self.rescaled_ratios[p] / self.ratios[p] - 1.0) for p in self.p_list)


def _circulant_kernel(n: int, width: float) -> np.ndarray:
    k = np.arange(n)
    dist = np.minimum(k, n - k)
    return np.exp(-dist / width)


class _CirculantForm:
    """a_ij = kernel[(i - j) mod n]; applied with FFTs."""

    def __init__(self, kernel: np.ndarray):
        self.kernel = kernel
        self.fk = np.fft.rfft(kernel)
        self.n = kernel.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        return np.fft.irfft(np.fft.rfft(X, axis=1) * self.fk[None, :], n=self.n, axis=1)

    def diag(self) -> np.ndarray:
        return np.full(self.n, self.kernel[0])

    def frob_sq(self) -> float:
        return float(self.n * np.sum(self.kernel**2))


class _LowRankForm:
    """a = sum_r c_r u_r v_r^T."""

    def __init__(self, c: np.ndarray, U: np.ndarray, V: np.ndarray):
        self.c, self.U, self.V = c, U, V

    def apply(self, X: np.ndarray) -> np.ndarray:
        return ((X @ self.V) * self.c[None, :]) @ self.U.T

    def diag(self) -> np.ndarray:
        return np.einsum("r,ir,ir->i", self.c, self.U, self.V)

    def frob_sq(self) -> float:
        return float(np.einsum("r,s,rs,rs->", self.c, self.c, self.U.T @ self.U, self.V.T @ self.V))


def _linear_coefficients(n: int, family: str, rng: np.random.Generator) -> np.ndarray:
    if family == "unit":
        b = np.zeros(n)
        b[0] = 1.0
        return b
    if family == "decaying":
        return 1.0 / (1.0 + np.arange(n) / 10.0)
    if family == "random":
        return rng.standard_normal(n)
    raise ValueError(f"unknown coefficient family {family!r}")


def _bilinear_form(n: int, family: str, rng: np.random.Generator, symmetric: bool, scale: float = 1.0):
    if family == "decaying":
        return _CirculantForm(scale * _circulant_kernel(n, 10.0))
    if family == "random":
        rank = 4
        c = rng.standard_normal(rank)
        U = rng.standard_normal((n, rank)) / np.sqrt(n)
        V = U if symmetric else rng.standard_normal((n, rank)) / np.sqrt(n)
        return _LowRankForm(scale * c, U, V)
    if family == "unit":
        # the single pair (0, 1), symmetrized for the off-diagonal kind
        U = np.zeros((n, 2))
        V = np.zeros((n, 2))
        U[0, 0] = V[1, 0] = 1.0
        U[1, 1] = V[0, 1] = 1.0
        c = np.array([1.0, 1.0 if symmetric else 0.0])
        return _LowRankForm(scale * c, U, V)
    raise ValueError(f"unknown coefficient family {family!r}")


def _moment(values: np.ndarray, p: int) -> float:
    return float(np.mean(np.abs(values) ** p) ** (1.0 / p))


def lde_validate(kind: str, n: int = 10_000, p_list: Sequence[int] = (2, 4, 8), trials: int = 200, seed: int = 0,
                 coefficients: str = "decaying", distribution: Distribution = "gaussian", scale: float = 10.0,
                 chunk: int = 50) -> LDEReport:
    """Normalized p-th moments of linear and bilinear forms.

    Linear ratios are ||sum b_i X_i||_p / (sqrt(p) ||b||); bilinear ratios are
    ||sum a_ij X_i X_j||_p / (p ||a||_F) with the diagonal excluded for the
    off-diagonal kind.  The rescaled ratios reuse the same draws with every
    coefficient multiplied by ``scale``.
    """
    if kind not in LDE_KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {LDE_KINDS}")
    if n < 100:
        raise ValueError("n must be at least 100")
    p_list = tuple(int(p) for p in p_list)
    if any(p % 2 for p in p_list):
        raise ValueError("moment orders must be even")
    rng = make_rng(seed)
    X = _standard_draws(rng, distribution, (trials, n))
    Y = _standard_draws(rng, distribution, (trials, n)) if kind == "bilinear-two-family" else None

    def evaluate(mult: float) -> tuple[np.ndarray, float]:
        coef_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        if kind == "linear":
            b = mult * _linear_coefficients(n, coefficients, coef_rng)
            return X @ b, float(np.linalg.norm(b))
        symmetric = kind == "bilinear-offdiag"
        form = _bilinear_form(n, coefficients, coef_rng, symmetric, mult)
        diag = form.diag()
        frob_sq = form.frob_sq() - (float(np.sum(diag**2)) if symmetric else 0.0)
        out = []
        for start in range(0, trials, chunk):
            Xc = X[start:start + chunk]
            if symmetric:
                out.append(np.sum(Xc * form.apply(Xc), axis=1) - (Xc * Xc) @ diag)
            else:
                out.append(np.sum(Xc * form.apply(Y[start:start + chunk]), axis=1))
        return np.concatenate(out), float(np.sqrt(frob_sq))

    values, norm = evaluate(1.0)
    scaled_values, scaled_norm = evaluate(scale)
    growth = (lambda p: np.sqrt(p)) if kind == "linear" else (lambda p: float(p))
    denom = lambda p: growth(p) * norm
    scaled_denom = lambda p: growth(p) * scaled_norm
    ratios = {p: float(_moment(values, p) / denom(p)) for p in p_list}
    rescaled = {p: float(_moment(scaled_values, p) / scaled_denom(p)) for p in p_list}
    return LDEReport(kind, n, trials, coefficients, p_list, ratios, rescaled, scale, {"coefficient_norm": norm})
