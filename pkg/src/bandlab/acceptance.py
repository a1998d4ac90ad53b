"""Quantitative acceptance checks at desk scale, shared by the CLI and the test suite.

Every check returns a CheckResult with the measured values, the threshold it
was held to and a pass flag.  Monte Carlo checks use fixed master seeds.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .config import mean_field_hypotheses
from .harness import ExperimentSpec, domination_check, loglog_fit, run_experiment
from .lattice import (BandProfile, BandwidthWarning, build_lattice, build_variance_matrix, mix_mean_field,
                      sample_matrix, sample_mean_field_mix)
from .lde import LDE_KINDS, lde_validate
from .profile import (diffusion_constant, heavy_tail_B, spectral_gap, theta_closed_1d, theta_closed_1d_poisson,
                      theta_exact_dense, theta_exact_dft, theta_heavy_tail, theta_series)
from .resolvent import (eigen_deloc, identity_residual, lambda_stat, mass_residual, resolvent, sc_residual,
                        verify_resolvent_identities)
from .semicircle import msc, phi_sq


@dataclass
class CheckResult:
    number: int
    title: str
    passed: bool
    measured: dict
    expected: str
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{status}] criterion {self.number:2d} {self.title}: {shown} (expected {self.expected}; {self.seconds:.1f} s)"


def _short(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _timed(fn: Callable[[], CheckResult]) -> CheckResult:
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        res = fn()
    res.seconds = time.perf_counter() - t0
    return res


def _gauss(d: int, L: int, W: float):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandwidthWarning)
        return build_variance_matrix(build_lattice(d, L), BandProfile(W=W))


# --- 1: exact identities -----------------------------------------------------------

def check_exact_identities(tol: float = 1e-9, instances: int = 100, seed: int = 11) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = {}
    # stochasticity over a spread of profiles
    mats = [_gauss(1, 64, 1e-3), _gauss(1, 128, 8), _gauss(1, 512, 40), _gauss(2, 16, 3)]
    ht = build_variance_matrix(build_lattice(1, 256), BandProfile("heavy-tail", W=8, beta=1.5))
    mats += [ht, mix_mean_field(mats[1], 0.3)]
    worst["row_sum"] = max(float(np.max(np.abs(S.dense().sum(axis=1) - 1.0))) for S in mats)

    S = mats[2]
    herm, res_id, res_mass, res_theta = 0.0, 0.0, 0.0, 0.0
    for cls in ("real-symmetric", "complex-Hermitian"):
        H = sample_matrix(S, cls, "gaussian", seed)
        herm = max(herm, float(np.max(np.abs(H.H - H.H.conj().T))))
        zs = [complex(E, eta) for E, eta in ((0.0, 0.05), (1.2, 0.3), (-0.7, 1.0))]
        for obs in resolvent(H, zs):
            scale = max(1.0, float(np.max(np.abs(obs.G))) * (np.max(np.abs(H.H)) + abs(obs.z)))
            res_id = max(res_id, obs.identity_residual / scale)
            res_mass = max(res_mass, obs.mass_residual)
    worst["hermiticity"] = herm
    worst["resolvent_identity"] = res_id
    worst["mass_identity"] = res_mass

    E = rng.uniform(-1.9, 1.9, 2000)
    eta = 10 ** rng.uniform(-3, 1, 2000)
    z = E + 1j * eta
    m = msc(z)
    worst["msc_equation"] = float(np.max(np.abs(m + 1 / m + z) / np.abs(z)))
    worst["msc_imaginary_identity"] = float(np.max(np.abs((1 - np.abs(m) ** 2) - eta * np.abs(m) ** 2 / m.imag)
                                                   / np.abs(1 - np.abs(m) ** 2)))
    for Sx in (mats[1], mats[2], mats[3], ht):
        for zz in (0.3 + 0.1j, -1.0 + 0.5j):
            col = theta_exact_dft(Sx, zz).column
            mm = complex(msc(zz))
            target = mm.imag / (Sx.N * zz.imag)
            res_theta = max(res_theta, abs(col.mean() - target) / target)
    worst["theta_mass"] = res_theta

    ident = 0.0
    for _ in range(instances):
        n = int(rng.integers(8, 31))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        A = (A + A.conj().T) / 2
        zz = complex(rng.uniform(-1.5, 1.5), rng.uniform(0.1, 1.0))
        t_size = int(rng.integers(0, 4))
        perm = rng.permutation(n)
        T = perm[:t_size].tolist()
        i, j, k = (int(v) for v in perm[t_size:t_size + 3])
        same = rng.random() < 0.2
        rep = verify_resolvent_identities(A, zz, T, i, i if same else j, k)
        ident = max(ident, rep.worst)
    worst["resolvent_expansions"] = ident

    N, W = 1024, 64
    Sp = _gauss(1, N, W)
    D = diffusion_constant(Sp)
    x = np.arange(-N // 2, N // 2)
    pois_gap = 0.0
    for zz in (0.1j, 0.5 + 0.1j, 0.02j):
        mom, poi = theta_closed_1d(x, zz, W, N, D)
        pois_gap = max(pois_gap, float(np.max(np.abs(mom - poi)) / np.max(poi)))
    worst["poisson_vs_momentum"] = pois_gap

    limits = {k: tol for k in worst}
    limits["poisson_vs_momentum"] = 1e-8
    passed = all(worst[k] <= limits[k] for k in worst)
    return CheckResult(1, "exact identities", passed, worst, f"all <= {tol:g} (theta forms <= 1e-8)")


# --- 2: method triangle -----------------------------------------------------------

def check_method_triangle(n_max: int = 400) -> CheckResult:
    dense_dft, series_excess = 0.0, 0.0
    detail = {}
    for N in (128, 512):
        S = _gauss(1, N, N / 8)
        for eta in (0.1, 0.5):
            z = complex(0.5, eta)
            a = theta_exact_dense(S, z).column
            b = theta_exact_dft(S, z).column
            c = theta_series(S, z, n_max)
            gap = float(np.max(np.abs(a - b)))
            err = float(np.max(np.abs(c.column - a)))
            dense_dft = max(dense_dft, gap)
            series_excess = max(series_excess, err - c.tail_bound)
            detail[f"N{N}_eta{eta}"] = {"dense_vs_dft": gap, "series_error": err, "tail_bound": c.tail_bound}
    passed = dense_dft <= 1e-8 and series_excess <= 1e-14
    return CheckResult(2, "Theta method triangle", passed,
                       {"max_dense_vs_dft": dense_dft, "max_series_error_minus_tail_bound": series_excess},
                       "dense vs DFT <= 1e-8; series error within tail bound", details=detail)


# --- 3: profile asymptotics -----------------------------------------------------------

def profile_error(W: int, eta: float = 0.1, ratio: int = 8, E: float = 0.0) -> float:
    N = ratio * W
    S = _gauss(1, N, W)
    z = complex(E, eta)
    theta = theta_exact_dft(S, z).column
    x = S.lattice.representatives()[:, 0]
    closed = theta_closed_1d_poisson(x, z, W, N, diffusion_constant(S))
    return float(np.max(np.abs(theta - closed)))


def check_profile_asymptotics(widths=(64, 128, 256)) -> CheckResult:
    errs = [profile_error(W) for W in widths]
    slope, stderr = loglog_fit(widths, errs)
    passed = slope is not None and -2.6 <= slope <= -1.4
    return CheckResult(3, "profile asymptotics", passed, {"sup_errors": errs, "slope": slope},
                       "slope in [-2.6, -1.4]", details={"stderr": stderr, "widths": list(widths)})


# --- 4: spectral gap -----------------------------------------------------------------

def check_spectral_gap(ratios=(4, 8, 16), W: int = 32, W_heavy: int = 16, beta: float = 1.5) -> CheckResult:
    rapid = [spectral_gap(_gauss(1, k * W, W)).ratio for k in ratios]
    heavy = []
    for k in ratios:
        S = build_variance_matrix(build_lattice(1, k * W_heavy), BandProfile("heavy-tail", W=W_heavy, beta=beta))
        heavy.append(spectral_gap(S).ratio)
    spread_r = max(rapid) / min(rapid)
    spread_h = max(heavy) / min(heavy)
    return CheckResult(4, "spectral gap scaling", spread_r <= 2 and spread_h <= 2,
                       {"rapid_ratios": rapid, "rapid_spread": spread_r, "heavy_ratios": heavy, "heavy_spread": spread_h},
                       "max/min <= 2 for both families")


# --- 5-7: the shared wide-band campaign -------------------------------------------------

WIDE_SEED = 20260514


@lru_cache(maxsize=2)
def wide_band_campaign(trials: int = 20, seed: int = WIDE_SEED):
    spec = ExperimentSpec(d=1, L=1024, profile=BandProfile(W=512), symmetry_class="complex-Hermitian",
                          E_list=(0.0,), eta_list=(0.25, 0.5, 1.0),
                          observables=("lambda", "residual", "profile"), trials=trials, master_seed=seed)
    t0 = time.perf_counter()
    rec = run_experiment(spec)
    return rec, time.perf_counter() - t0


def check_local_law(trials: int = 20) -> CheckResult:
    rec, secs = wide_band_campaign(trials)
    ratios = [r["Lambda"] / r["Phi"] for r in rec.rows]
    frac = float(np.mean(np.array(ratios) <= 10))
    dom = domination_check([r["Lambda"] for r in rec.rows], [r["Phi"] for r in rec.rows], 1024)
    return CheckResult(5, "improved local law", frac >= 0.95,
                       {"fraction_within_10": frac, "max_ratio": max(ratios), "campaign_seconds": secs},
                       ">= 0.95 of cells with Lambda/Phi <= 10",
                       details={"domination_frequencies": dom.frequencies})


def check_diffusion_profile(trials: int = 20) -> CheckResult:
    rec, _ = wide_band_campaign(trials)
    eta, N, W = 0.25, 1024, 512
    errs = [N * eta * r["max_T_minus_Theta"] for r in rec.rows if r["eta"] == eta]
    p95 = float(np.percentile(errs, 95))
    tag = next(t for t in rec.profiles if "eta0.25" in t)
    S = _gauss(1, N, W)
    z = complex(0.0, eta)
    theta = theta_exact_dft(S, z).column
    cols = np.array(rec.t_columns[z])
    x = np.abs(S.lattice.representatives()[:, 0])
    sel = x <= 3 * W / math.sqrt(eta)
    corr = float(np.corrcoef(np.log(cols).mean(axis=0)[sel], np.log(theta)[sel])[0, 1])
    return CheckResult(6, "diffusion profile", p95 <= 50 and corr >= 0.95,
                       {"p95_N_eta_max_T_minus_Theta": p95, "log_correlation": corr},
                       "p95 <= 50 and correlation >= 0.95", details={"profile_tag": tag})


def noiseless_residual(N: int = 1024, W: float = 512, z: complex = 0.5j) -> float:
    """Residual of the exact profile substituted for T, relative to max Theta."""
    S = _gauss(1, N, W)
    Theta = theta_exact_dft(S, z).full()
    return sc_residual(Theta, S, complex(msc(z))).max_abs / float(np.max(Theta))


def check_self_consistent(trials: int = 20) -> CheckResult:
    rec, _ = wide_band_campaign(trials)
    medians = {}
    for eta in (0.25, 0.5, 1.0):
        vals = [r["residual_ratio"] for r in rec.rows if r["eta"] == eta]
        medians[eta] = float(np.median(vals))
    proxy = noiseless_residual()
    passed = all(v <= 100 for v in medians.values()) and proxy <= 1e-12
    return CheckResult(7, "self-consistent residual", passed,
                       {"median_ratio_eta0.25": medians[0.25], "median_ratio_eta0.5": medians[0.5],
                        "median_ratio_eta1": medians[1.0], "noiseless_residual": proxy},
                       "medians <= 100; noiseless residual at rounding level (<= 1e-12 relative)")


# --- 8: delocalization contrast -------------------------------------------------------------

def deloc_fractions(W: float, trials: int = 10, N: int = 1024, eps: float = 0.1, seed: int = 808) -> list[float]:
    S = _gauss(1, N, W)
    out = []
    for t in range(trials):
        H = sample_matrix(S, "complex-Hermitian", "gaussian", seed * 1000 + t)
        out.append(eigen_deloc(H, kappa=0.1, eps=eps, ell=N / 8).fraction)
    return out


def check_delocalization(trials: int = 10) -> CheckResult:
    wide = deloc_fractions(512, trials)
    narrow = deloc_fractions(8, trials)
    fw, fn = float(np.mean(wide)), float(np.mean(narrow))
    return CheckResult(8, "delocalization contrast", fw <= 0.2 and fn >= 0.6,
                       {"wide_W512_fraction": fw, "narrow_W8_fraction": fn},
                       "wide <= 0.2 and narrow >= 0.6")


# --- 9: mean-field mixture ----------------------------------------------------------------

def check_mean_field(trials: int = 20, seed: int = 909) -> CheckResult:
    N, W, eps, eta = 512, 128, 0.3, 0.06
    hyp = mean_field_hypotheses(N, W, eps, eta)
    S = _gauss(1, N, W)
    z = complex(0.0, eta)
    m = complex(msc(z))
    vals = []
    for t in range(trials):
        H = sample_matrix(S, "complex-Hermitian", "gaussian", seed * 1000 + t)
        He = sample_mean_field_mix(H, eps, seed * 1000 + t + 500)
        G = resolvent(He, [z], check=False)[0].G
        vals.append(lambda_stat(G, m) ** 2 * N * eta)
    frac = float(np.mean(np.array(vals) <= 50))
    return CheckResult(9, "mean-field mixture", all(hyp.values()) and frac >= 0.9,
                       {"fraction_within_50": frac, "max_scaled": max(vals), "hypotheses_hold": all(hyp.values())},
                       ">= 0.9 of trials with Lambda^2 N eta <= 50", details={"hypotheses": hyp})


# --- 10: heavy tail -------------------------------------------------------------------------

def check_heavy_tail(N: int = 2048, W: int = 64, beta: float = 1.5, eta: float = 0.05,
                     decade: tuple[float, float] = (32.0, 320.0)) -> CheckResult:
    S = build_variance_matrix(build_lattice(1, N), BandProfile("heavy-tail", W=W, beta=beta))
    z = complex(0.0, eta)
    theta = theta_exact_dft(S, z).column
    x = np.arange(int(decade[0]), int(decade[1]) + 1)
    vals = theta[x]
    slope = float(np.polyfit(np.log(x), np.log(vals), 1)[0])
    closed = theta_heavy_tail(x, z, W, beta, heavy_tail_B(S))
    rel = float(np.max(np.abs(closed / vals - 1.0)))
    passed = abs(slope + 1 + beta) <= 0.3 and rel <= 0.25
    return CheckResult(10, "heavy-tail superdiffusion", passed,
                       {"tail_slope": slope, "max_relative_error": rel},
                       f"slope within 0.3 of {-(1 + beta):g}; closed form within 25% on x in {decade}")


# --- 11: large deviations -------------------------------------------------------------------

def check_large_deviations(n: int = 10_000, trials: int = 200, seed: int = 1111) -> CheckResult:
    worst_ratio, worst_dev = 0.0, 0.0
    table = {}
    for kind in LDE_KINDS:
        for fam in ("decaying", "random"):
            rep = lde_validate(kind, n, (2, 4, 8), trials, seed, fam)
            table[f"{kind}/{fam}"] = rep.ratios
            worst_ratio = max(worst_ratio, rep.max_ratio)
            worst_dev = max(worst_dev, rep.max_rescale_deviation)
    return CheckResult(11, "large deviation bounds", worst_ratio <= 3 and worst_dev <= 0.02,
                       {"max_ratio": worst_ratio, "max_rescale_deviation": worst_dev},
                       "ratios <= 3; rescaling changes ratios by <= 2%", details={"ratios": table})


# --- 12: two dimensions -------------------------------------------------------------------

def check_two_dimensional(trials: int = 10, seed: int = 1212, L: int = 64, W: int = 16, eta: float = 0.25) -> CheckResult:
    S = _gauss(2, L, W)
    N = S.N
    z = complex(0.0, eta)
    bound = max(1.0 / S.M, 1.0 / (N * eta))
    theta_max = float(np.max(theta_exact_dft(S, z).column))
    m = complex(msc(z))
    lam2 = []
    for t in range(trials):
        H = sample_matrix(S, "complex-Hermitian", "gaussian", seed * 1000 + t)
        G = resolvent(H, [z], check=False)[0].G
        lam2.append(lambda_stat(G, m) ** 2)
        del G, H
    ratios = [v / bound for v in lam2]
    frac = float(np.mean(np.array(ratios) <= 10))
    return CheckResult(12, "two-dimensional sanity", theta_max / bound <= 10 and frac >= 0.9,
                       {"max_Theta_over_bound": theta_max / bound, "fraction_Lambda2_within_10": frac,
                        "Lambda2_over_bound": ratios},
                       "max Theta <= 10 bound; Lambda^2 <= 10 bound in >= 90% of trials")


CHECKS: dict[int, Callable[[], CheckResult]] = {
    1: check_exact_identities,
    2: check_method_triangle,
    3: check_profile_asymptotics,
    4: check_spectral_gap,
    5: check_local_law,
    6: check_diffusion_profile,
    7: check_self_consistent,
    8: check_delocalization,
    9: check_mean_field,
    10: check_heavy_tail,
    11: check_large_deviations,
    12: check_two_dimensional,
}

RUNTIME_LIMITS = {1: 60, 2: 30, 3: 120, 4: 30, 5: 900, 8: 600, 12: 1200}

SUITES = {
    "identities": (1,),
    "profile": (2, 3, 4, 10),
    "lde": (11,),
    "deloc": (8,),
    "all": tuple(range(1, 13)),
}


def run_check(number: int) -> CheckResult:
    res = _timed(CHECKS[number])
    limit = RUNTIME_LIMITS.get(number)
    if limit is not None:
        res.details["runtime_limit_s"] = limit
        res.details["within_runtime"] = res.seconds <= limit
    return res


def run_suite(name: str, report: Optional[Callable[[CheckResult], None]] = None) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(name)
    out = []
    for n in SUITES[name]:
        res = run_check(n)
        if report is not None:
            report(res)
        out.append(res)
    return out
