"""Yukawa-type potentials and their smoothed and superdiffusive variants.

``yukawa(r, d)`` is the inverse Fourier transform of 1/(1+|q|^2) on R^d.
``smoothed_yukawa(r, d, t)`` inserts the momentum cutoff chi(t|q|).
``stable_potential(x, beta)`` is the inverse Fourier transform of 1/(1+|q|^beta) on R.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

ASYMPTOTIC_SWITCH = 20.0
QUADRATURE_SPLIT = 50.0
_FAR = 60.0


def cutoff(q):
    """Cosine taper: 1 on |q| <= 1/2, 0 on |q| >= 1."""
    q = np.abs(np.asarray(q, dtype=float))
    u = np.clip(2.0 * q - 1.0, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * u))


def yukawa(r, d: int):
    r = np.abs(np.asarray(r, dtype=float))
    if d == 1:
        return 0.5 * np.exp(-r)
    with np.errstate(divide="ignore"):
        if d == 2:
            return special.k0(r) / (2.0 * np.pi)
        if d == 3:
            return np.exp(-r) / (4.0 * np.pi * r)
    raise ValueError(f"unsupported dimension {d}")


@lru_cache(maxsize=64)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(qmax: float, rmax: float, break_at: float, order: int = 24):
    """Composite Gauss-Legendre nodes on [0, qmax] with a break at the taper start."""
    per_unit = max(rmax / np.pi, 1.0) * 2.0
    x, w = _gauss_legendre(order)
    nodes, weights = [], []
    for lo, hi in ((0.0, break_at), (break_at, qmax)):
        n_pan = int(np.ceil((hi - lo) * per_unit)) + 2
        edges = np.linspace(lo, hi, n_pan + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
        weights.append((half[:, None] * w[None, :]).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def smoothed_yukawa(r, d: int, t: float, chunk: int = 4096):
    """(V * phi_t)(r): radial inverse transform of chi(t q)/(1+q^2), d in {1, 2, 3}.

    Arguments with r > 60 fall back to the closed form, where the difference
    is far below double precision.
    """
    r = np.abs(np.asarray(r, dtype=float))
    shape = r.shape
    flat = r.ravel()
    out = np.empty_like(flat)
    far = flat > _FAR
    out[far] = yukawa(flat[far], d)
    near_idx = np.nonzero(~far)[0]
    if near_idx.size:
        qmax = 1.0 / t
        q, w = _panel_nodes(qmax, float(flat[near_idx].max()), 0.5 * qmax)
        base = cutoff(t * q) / (1.0 + q * q) * w
        for start in range(0, near_idx.size, chunk):
            idx = near_idx[start:start + chunk]
            rr = flat[idx][:, None]
            if d == 1:
                kern = np.cos(q[None, :] * rr) / np.pi
            elif d == 2:
                kern = q[None, :] * special.j0(q[None, :] * rr) / (2.0 * np.pi)
            elif d == 3:
                kern = q[None, :] ** 2 * np.sinc(q[None, :] * rr / np.pi) / (2.0 * np.pi**2)
            else:
                raise ValueError(f"unsupported dimension {d}")
            out[idx] = kern @ base
    return out.reshape(shape)


# --- superdiffusive potential ------------------------------------------------

def stable_constant(beta: float) -> float:
    """Leading coefficient C_beta of the far-field decay C_beta |x|^(-1-beta)."""
    return math.gamma(1.0 + beta) * math.sin(math.pi * beta / 2.0) / math.pi


def stable_asymptotic(x, beta: float, terms: int = 8):
    """Asymptotic expansion of the superdiffusive potential for large |x|."""
    x = np.abs(np.asarray(x, dtype=float))
    total = np.zeros_like(x)
    prev = np.inf
    for n in range(1, terms + 1):
        sn = math.sin(math.pi * n * beta / 2.0)
        if abs(sn) < 1e-12:
            continue
        c = (-1) ** (n + 1) * math.gamma(1.0 + n * beta) * sn / math.pi
        term = c * x ** (-1.0 - n * beta)
        size = float(np.max(np.abs(term))) if term.size else 0.0
        if size > prev:
            break
        total = total + term
        prev = size
    return total


def stable_potential_at_zero(beta: float) -> float:
    if not beta > 1:
        raise ValueError("the potential is unbounded at the origin for beta <= 1")
    return 1.0 / (beta * math.sin(math.pi / beta))


def _stable_quad(x: float, beta: float) -> float:
    f = lambda q: 1.0 / (1.0 + q**beta)
    head, _ = integrate.quad(lambda q: math.cos(q * x) * f(q), 0.0, QUADRATURE_SPLIT, limit=2000,
                             points=[1.0], epsabs=1e-13, epsrel=1e-11)
    tail, _ = integrate.quad(f, QUADRATURE_SPLIT, np.inf, weight="cos", wvar=x, limlst=200)
    return (head + tail) / math.pi


def stable_potential(x, beta: float, switch: float = ASYMPTOTIC_SWITCH):
    """(1/2pi) int e^{iqx}/(1+|q|^beta) dq, by oscillatory quadrature or far-field asymptotics."""
    if not 0 < beta <= 2:
        raise ValueError(f"beta must lie in (0, 2], got {beta}")
    x = np.abs(np.asarray(x, dtype=float))
    flat = x.ravel()
    out = np.empty_like(flat)
    for i, xi in enumerate(flat):
        if xi == 0.0:
            out[i] = stable_potential_at_zero(beta)
        elif xi > switch:
            out[i] = float(stable_asymptotic(xi, beta))
        else:
            out[i] = _stable_quad(float(xi), beta)
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def fractional_integral(beta: float) -> float:
    """int_R (1 - cos u)/|u|^(1+beta) du in closed form."""
    return math.pi / (math.gamma(1.0 + beta) * math.sin(math.pi * beta / 2.0))
