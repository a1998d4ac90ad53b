"""Seeded Monte Carlo campaigns over sampled band matrices."""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .lattice import (BandProfile, TorusLattice, VarianceMatrix, build_lattice, build_variance_matrix,
                      mix_mean_field, normalize_class, sample_matrix, sample_mean_field_mix)
from .profile import (diffusion_constant, heavy_tail_B, spectral_gap, theta_closed_1d_poisson,
                      theta_closed_dd, theta_exact_dft, theta_heavy_tail, theta_mean_field)
from .resolvent import eigen_deloc, lambda_stat, resolvent, spectrum
from .semicircle import SpectralParameter, msc, phi_eps_sq, phi_sq, psi_standard, upsilon

OBSERVABLES = ("lambda", "residual", "profile", "deloc")
DEFAULT_EPS_GRID = (0.05, 0.1, 0.2)


class SpecError(ValueError):
    """Experiment settings violate a structural or physical constraint."""


class MemoryBudgetError(SpecError):
    pass


def derive_seed(master_seed: int, trial: int, stream: int = 0) -> int:
    """64-bit seed depending only on (master_seed, trial, stream)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(stream)))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass(frozen=True)
class ExperimentSpec:
    d: int = 1
    L: int = 64
    profile: BandProfile = field(default_factory=lambda: BandProfile(W=8))
    symmetry_class: str = "complex-Hermitian"
    distribution: str = "gaussian"
    epsilon: float = 0.0
    E_list: tuple[float, ...] = (0.0,)
    eta_list: tuple[float, ...] = (0.5,)
    observables: tuple[str, ...] = ("lambda", "residual", "profile")
    trials: int = 1
    master_seed: int = 0
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    kappa: float = 0.1
    gamma: float = 0.1
    memory_budget_mb: float = 4096.0
    deloc_eps: float = 0.1
    deloc_ell: Optional[float] = None
    K: int = 4

    @property
    def N(self) -> int:
        return self.L**self.d

    @property
    def W(self) -> float:
        return self.profile.W

    def z_grid(self) -> list[complex]:
        return [complex(E, eta) for E in self.E_list for eta in self.eta_list]

    def echo(self) -> dict[str, Any]:
        prof = asdict(self.profile)
        prof.pop("density", None)
        out = asdict(self)
        out["profile"] = prof
        return out


def estimated_memory_mb(spec: ExperimentSpec, threads: int = 1) -> float:
    """Rough peak footprint of one trial times the number of concurrent trials."""
    N = spec.N
    per_trial = N * N * (16 * 3 + 8 * 4)
    if "deloc" in spec.observables or len(spec.z_grid()) > 1:
        per_trial += N * N * 16
    shared = N * N * 8 * 2
    return (per_trial * max(threads, 1) + shared) / 2**20


def validate_spec(spec: ExperimentSpec) -> VarianceMatrix:
    """Check the spec and return the effective variance matrix."""
    if spec.trials < 1:
        raise SpecError("trials must be at least 1")
    unknown = [o for o in spec.observables if o not in OBSERVABLES]
    if unknown:
        raise SpecError(f"unknown observables {unknown}; expected a subset of {OBSERVABLES}")
    if spec.W > spec.L:
        raise SpecError(f"band width W={spec.W} exceeds the torus side L={spec.L}")
    if not 0.0 <= spec.epsilon <= 0.5:
        raise SpecError(f"mean-field weight epsilon={spec.epsilon} outside [0, 1/2]")
    try:
        normalize_class(spec.symmetry_class)
        lattice = build_lattice(spec.d, spec.L)
        S = build_variance_matrix(lattice, spec.profile)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    S_eff = mix_mean_field(S, spec.epsilon)
    if not spec.E_list or not spec.eta_list:
        raise SpecError("spectral grid is empty")
    for z in spec.z_grid():
        sp = SpectralParameter(z.real, z.imag, S_eff.M, spec.kappa, spec.gamma)
        if not sp.in_domain:
            raise SpecError("spectral point outside the bulk domain: " + "; ".join(sp.violations()))
    if sorted(spec.eps_grid) != list(spec.eps_grid):
        raise SpecError("domination grid must be increasing")
    return S_eff


@dataclass(frozen=True)
class DominationCheck:
    eps_grid: tuple[float, ...]
    frequencies: tuple[float, ...]
    threshold: float
    passed: bool
    samples: int


def domination_check(samples, psi, N: int, eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
                     threshold: float = 0.05, decision_eps: float = 0.2) -> DominationCheck:
    """Empirical frequency of |X| > N^eps * psi for each eps in the grid."""
    X = np.abs(np.asarray(samples, dtype=float)).ravel()
    if X.size == 0:
        raise ValueError("no samples")
    if X.size < 20:
        warnings.warn("fewer than 20 samples: exceedance frequencies are unreliable", stacklevel=2)
    bound = np.broadcast_to(np.asarray(psi, dtype=float), np.asarray(samples).shape).ravel()
    grid = tuple(float(e) for e in eps_grid)
    freqs = tuple(float(np.mean(X > N**e * bound)) for e in grid)
    key = min(range(len(grid)), key=lambda i: abs(grid[i] - decision_eps))
    return DominationCheck(grid, freqs, threshold, freqs[key] <= threshold, int(X.size))


def quantile(values, q: float) -> float:
    """Linearly interpolated quantile of the finite entries of ``values``."""
    v = np.sort(np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float))
    if v.size == 0:
        return float("nan")
    pos = q * (v.size - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, v.size - 1)
    return float(v[lo] + (pos - lo) * (v[hi] - v[lo]))


@dataclass
class RunRecord:
    spec: dict[str, Any]
    rows: list[dict[str, Any]]
    aggregates: list[dict[str, Any]]
    deterministic: list[dict[str, Any]]
    profiles: dict[str, dict[str, list]]
    provenance: dict[str, Any]
    timing: dict[str, float] = field(default_factory=dict, compare=False)
    # per-trial first columns of T keyed by z; kept in memory only
    t_columns: dict = field(default_factory=dict, compare=False, repr=False)

    def column(self, name: str, z: Optional[complex] = None) -> list:
        return [r[name] for r in self.rows if z is None or (r["E"] == z.real and r["eta"] == z.imag)]


def _closed_profile(spec: ExperimentSpec, S: VarianceMatrix, z: complex, lattice: TorusLattice) -> np.ndarray:
    reps = lattice.representatives()
    if spec.d == 1:
        x = reps[:, 0]
        D = diffusion_constant(S)
        if spec.profile.kind == "heavy-tail":
            if not 1 < spec.profile.beta < 2:
                return np.full(S.N, np.nan)
            return theta_heavy_tail(x, z, spec.W, spec.profile.beta, heavy_tail_B(S))
        if spec.epsilon > 0:
            return theta_mean_field(x, z, spec.W, S.N, D, spec.epsilon, periodic=True, zero_mode=True)
        return theta_closed_1d_poisson(x, z, spec.W, S.N, D)
    if spec.d in (2, 3) and spec.profile.kind == "rapid-decay":
        return theta_closed_dd(reps, z, spec.W, spec.L, diffusion_constant(S), method="momentum")
    return np.full(S.N, np.nan)


def _envelope(spec: ExperimentSpec, S: VarianceMatrix, z: complex, lattice: TorusLattice) -> np.ndarray:
    if not 0 < z.imag <= 1 or spec.profile.kind == "heavy-tail":
        return np.full(S.N, np.nan)
    D = diffusion_constant(S)
    reps = lattice.representatives()
    if spec.d == 1:
        return upsilon(reps[:, 0], z, spec.W, S.N, D, K=spec.K)
    return upsilon(reps, z, spec.W, S.N, D, K=spec.K, d=spec.d, L=spec.L)


def _trial(spec: ExperimentSpec, S: VarianceMatrix, S_base: VarianceMatrix, thetas: dict, trial: int) -> dict:
    seed_H = derive_seed(spec.master_seed, trial, 0)
    H = sample_matrix(S_base, spec.symmetry_class, spec.distribution, seed_H)
    if spec.epsilon > 0:
        H = sample_mean_field_mix(H, spec.epsilon, derive_seed(spec.master_seed, trial, 1), spec.distribution)
    zs = spec.z_grid()
    need_spec = "deloc" in spec.observables or len(zs) > 1
    sp = spectrum(H) if need_spec else None
    deloc = None
    if "deloc" in spec.observables:
        ell = spec.deloc_ell if spec.deloc_ell is not None else spec.L / 8
        deloc = eigen_deloc(H, spec.kappa, spec.deloc_eps, ell, spec=sp, lattice=S.lattice).fraction
    Sd = S.dense() if ("residual" in spec.observables or "profile" in spec.observables) else None
    di = S.lattice.difference_index() if "profile" in spec.observables else None
    rows, columns = [], {}
    for obs in resolvent(H, zs, spec=sp, check=False):
        z = obs.z
        eta = z.imag
        phi = math.sqrt(phi_eps_sq(S.N, spec.W, eta, spec.epsilon))
        lam = lambda_stat(obs.G, obs.m)
        row = {"trial": trial, "E": z.real, "eta": eta, "Lambda": lam, "Phi": phi,
               "max_T_minus_Theta": None, "residual_ratio": None, "deloc_fraction": deloc}
        if Sd is not None:
            A2 = np.abs(obs.G) ** 2
            T = Sd @ A2
            del A2
            if "residual" in spec.observables:
                m2 = abs(obs.m) ** 2
                E = T - m2 * (Sd @ T) - m2 * Sd
                psi = psi_standard(S.M, eta)
                row["residual_ratio"] = float(np.max(np.abs(E))) / (psi**4 + psi**2 * S.M**-0.5)
                del E
            if "profile" in spec.observables:
                row["max_T_minus_Theta"] = float(np.max(np.abs(T - thetas[z][di])))
                columns[z] = T[:, 0].copy()
            del T
        rows.append(row)
    return {"rows": rows, "columns": columns}


def _tag(z: complex) -> str:
    return f"E{z.real:+.4g}_eta{z.imag:.4g}"


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> RunRecord:
    started = time.perf_counter()
    S = validate_spec(spec)
    budget = estimated_memory_mb(spec, threads)
    if budget > spec.memory_budget_mb:
        raise MemoryBudgetError(f"estimated memory {budget:.0f} MB exceeds the budget of {spec.memory_budget_mb:.0f} MB")
    S_base = build_variance_matrix(S.lattice, spec.profile) if spec.epsilon > 0 else S
    zs = spec.z_grid()
    thetas = {z: theta_exact_dft(S, z).column for z in zs}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda t: _trial(spec, S, S_base, thetas, t), range(spec.trials)))
    rows = [r for res in results for r in res["rows"]]
    lattice = S.lattice

    aggregates, deterministic, profiles = [], [], {}
    gap = spectral_gap(S)
    for z in zs:
        sel = [r for r in rows if r["E"] == z.real and r["eta"] == z.imag]
        N_eta = S.N * z.imag
        lam_phi = [r["Lambda"] / r["Phi"] for r in sel]
        prof_err = [N_eta * r["max_T_minus_Theta"] for r in sel if r["max_T_minus_Theta"] is not None]
        resid = [r["residual_ratio"] for r in sel if r["residual_ratio"] is not None]
        aggregates.append({
            "E": z.real, "eta": z.imag,
            "Lambda_over_Phi_median": quantile(lam_phi, 0.5), "Lambda_over_Phi_p95": quantile(lam_phi, 0.95),
            "N_eta_max_T_minus_Theta_median": quantile(prof_err, 0.5), "N_eta_max_T_minus_Theta_p95": quantile(prof_err, 0.95),
            "residual_ratio_median": quantile(resid, 0.5), "residual_ratio_p95": quantile(resid, 0.95),
        })
        closed = _closed_profile(spec, S, z, lattice)
        theta = thetas[z]
        deterministic.append({
            "E": z.real, "eta": z.imag, "spectral_gap": gap.gap, "gap_ratio": gap.ratio,
            "max_Theta": float(np.max(theta)), "sup_Theta_minus_theta": float(np.nanmax(np.abs(theta - closed))) if np.any(np.isfinite(closed)) else None,
        })
        if "profile" in spec.observables:
            T_mean = np.mean([res["columns"][z] for res in results], axis=0)
            table = {}
            reps = lattice.representatives()
            for k in range(spec.d):
                table["x" if spec.d == 1 else f"x{k + 1}"] = reps[:, k].tolist()
            table["Theta"] = theta.tolist()
            table["theta_closed"] = np.asarray(closed).tolist()
            table["Upsilon"] = np.asarray(_envelope(spec, S, z, lattice)).tolist()
            table["T_trial_mean"] = T_mean.tolist()
            profiles[_tag(z)] = table
    provenance = {
        "version": __version__,
        "master_seed": int(spec.master_seed),
        "trial_seeds": [derive_seed(spec.master_seed, t, 0) for t in range(spec.trials)],
        "N": S.N,
        "M": S.M,
    }
    timing = {"seconds": time.perf_counter() - started, "threads": threads}
    t_columns = {z: [res["columns"][z] for res in results] for z in zs if "profile" in spec.observables}
    return RunRecord(spec.echo(), rows, aggregates, deterministic, profiles, provenance, timing, t_columns)


SWEEP_AXES = ("N", "W", "eta", "eps", "beta")


def instantiate(template: ExperimentSpec, axis: str, value: float) -> ExperimentSpec:
    if axis == "N":
        L = int(round(value ** (1.0 / template.d)))
        if L**template.d != int(value):
            raise SpecError(f"N={value} is not a perfect {template.d}-th power")
        return replace(template, L=L)
    if axis == "W":
        return replace(template, profile=replace(template.profile, W=float(value)))
    if axis == "eta":
        return replace(template, eta_list=(float(value),))
    if axis == "eps":
        return replace(template, epsilon=float(value))
    if axis == "beta":
        return replace(template, profile=replace(template.profile, beta=float(value)))
    raise SpecError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass
class SlopeFit:
    statistic: str
    axis_values: list[float]
    values: list[float]
    slope: Optional[float]
    stderr: Optional[float]


def loglog_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    pts = [(math.log(x), math.log(abs(y))) for x, y in zip(xs, ys)
           if y is not None and math.isfinite(y) and y != 0 and x > 0]
    if len(pts) < 2:
        return None, None
    X = np.array([p[0] for p in pts])
    Y = np.array([p[1] for p in pts])
    A = np.vstack([X, np.ones_like(X)]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    slope = float(coef[0])
    if len(pts) == 2:
        return slope, None
    resid = Y - A @ coef
    s2 = float(resid @ resid) / (len(pts) - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    return slope, float(math.sqrt(cov[0, 0]))


SWEEP_STATISTICS = (
    ("Lambda_over_Phi_median", "aggregates"),
    ("N_eta_max_T_minus_Theta_p95", "aggregates"),
    ("residual_ratio_median", "aggregates"),
    ("spectral_gap", "deterministic"),
    ("sup_Theta_minus_theta", "deterministic"),
    ("max_Theta", "deterministic"),
)


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    records: list[RunRecord]
    fits: list[SlopeFit]


def sweep(template: ExperimentSpec, axis: str, values: Sequence[float], threads: int = 1) -> SweepResult:
    specs = [instantiate(template, axis, v) for v in values]
    for s in specs:
        validate_spec(s)
    records = [run_experiment(s, threads) for s in specs]
    fits = []
    for name, section in SWEEP_STATISTICS:
        ys = []
        for rec in records:
            entries = getattr(rec, section)
            v = entries[0].get(name) if entries else None
            ys.append(v if v is None or math.isfinite(v) else None)
        slope, err = loglog_fit(list(values), ys)
        fits.append(SlopeFit(name, [float(v) for v in values], ys, slope, err))
    return SweepResult(axis, [float(v) for v in values], records, fits)


def default_threads() -> int:
    env = os.environ.get("BANDLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1
