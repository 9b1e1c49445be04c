"""Experiment drivers shared by the command line and the tests.

Each driver takes a :class:`~ionreservoir.config.RunConfig` and returns an
:class:`Outcome`: named output columns, pass/fail checks and diagnostics.
Nothing here touches the filesystem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic, master, trajectories
from .config import ConfigError, RunConfig
from .fock import coherent_amplitudes, missing_norm
from .model import derive, dissipator_strength


class LeakageError(RuntimeError):
    """Truncation leaves more probability outside the basis than allowed."""


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": _num(self.value), "threshold": _num(self.threshold)}


@dataclass
class Outcome:
    experiment: str
    columns: dict[str, np.ndarray]
    checks: list[Check] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _coherent_leakage(modulus: float, dim: int) -> float:
    return missing_norm(coherent_amplitudes(complex(modulus), dim))


def initial_leakage(cfg: RunConfig) -> float:
    p = cfg.params
    return max(_coherent_leakage(abs(p.alpha_g), p.dim), _coherent_leakage(abs(p.alpha_e), p.dim))


def guard_leakage(cfg: RunConfig, leakage: float) -> None:
    if leakage > cfg.run.leakage_tol and not cfg.run.allow_leakage:
        raise LeakageError(
            f"truncation leakage {leakage:.3g} exceeds {cfg.run.leakage_tol:.3g} at dim={cfg.params.dim}; "
            "raise params.dim or set run.allow_leakage = true"
        )


def conventions(cfg: RunConfig) -> dict:
    """Every convention choice that shapes the numbers in a run."""
    p, r = cfg.params, cfg.run
    out = {
        "base": cfg.base,
        "dissipator_preset": p.dissipator_preset,
        "kappa": dissipator_strength(p),
        "noise_amplitude": math.sqrt(2.0 * dissipator_strength(p)),
        "f_convention": r.f_convention,
        "r_mode": r.r_mode,
        "master_mode": r.master_mode,
        "rate_convention": r.rate_convention,
        "courant": r.courant,
        "time_unit": p.time_unit,
        "hbar": 1.0,
    }
    try:
        d = derive(p)
        out.update(g=d.g, g_convention=d.g_source, omega_e=d.omega_e, neglected_sigma_x=d.neglected_sigma_x)
    except ValueError as exc:
        out.update(g=None, g_convention=f"unavailable: {exc}")
    return out


def analytic_sweep(cfg: RunConfig) -> Outcome:
    p, t = cfg.params, cfg.times()
    dp = analytic.displaced_params(p, t)
    reach = max(float(np.max(np.abs(a))) for a in (dp.ag_plus, dp.ag_minus, dp.ae_plus, dp.ae_minus))
    leak = max(initial_leakage(cfg), _coherent_leakage(reach, p.dim))
    guard_leakage(cfg, leak)
    terms = analytic.coherence_terms(p, t)
    R = analytic.coherence_modulus_R(p, t, mode=cfg.run.r_mode)
    cols = {"t": t, "R": R}
    for name, col in zip(("gg", "ge", "eg", "ee"), terms.T):
        cols[f"{name}_re"] = col.real
        cols[f"{name}_im"] = col.imag
    cols["suppression"] = analytic.suppression_factor(p, t)
    # positivity of the reduced internal state: |rho_ge| <= sqrt(p_g p_e) <= 1/2
    checks = [] if cfg.run.r_mode != "exact" else [Check("R_at_most_half", bool(np.max(R) <= 0.5 + 1e-12), float(np.max(R)), 0.5)]
    diag = {"leakage_max": leak, "displaced_amplitude_max": reach}
    if cfg.run.f_convention != "unitary" or cfg.run.r_mode != "exact":
        probe = t[:: max(1, t.size // 20)]
        rep = analytic.verify_unitarity(p, probe, convention=cfg.run.f_convention)
        diag.update(norm_deviation=rep.max_norm_deviation, oracle_deviation=rep.max_oracle_deviation)
    return Outcome("analytic-sweep", cols, checks, diag)


def _master_series(cfg: RunConfig, t):
    p = cfg.params
    leak = initial_leakage(cfg)
    guard_leakage(cfg, leak)
    series = master.integrate(master.initial_blocks(p), t, p, mode=cfg.run.master_mode, courant=cfg.run.courant, keep_blocks=False)
    coh = master.lab_coherence(series, p).values
    return series, coh, leak


def master_sweep(cfg: RunConfig) -> Outcome:
    p, t = cfg.params, cfg.times()
    series, coh, leak = _master_series(cfg, t)
    cols = {
        "t": t,
        "R": np.abs(coh),
        "R_diagonal": master.closed_form_R(p, t, convention=cfg.run.rate_convention),
        "pop_g": series.traces[:, 0].real,
        "pop_e": series.traces[:, 3].real,
    }
    checks = [Check("trace_drift", series.max_trace_drift < 1e-8, series.max_trace_drift, 1e-8)]
    diag = {
        "leakage_max": leak,
        "top_level_population_max": series.max_top_population,
        "dt": series.dt,
        "steps": int(series.substeps.sum()),
    }
    return Outcome("master-sweep", cols, checks, diag)


def _ensemble(cfg: RunConfig, t):
    leak = initial_leakage(cfg)
    guard_leakage(cfg, leak)
    res = trajectories.run_ensemble(cfg.params, cfg.run.n_traj, t, base_seed=cfg.run.base_seed, substeps=cfg.run.substeps)
    return res, leak


def ensemble_sweep(cfg: RunConfig) -> Outcome:
    t = cfg.times()
    res, leak = _ensemble(cfg, t)
    cols = {
        "t": t,
        "R": res.R,
        "stderr": res.R_stderr,
        "pop_g": res.traces[:, 0].real,
        "pop_e": res.traces[:, 3].real,
    }
    checks = [Check("norm_drift", res.max_norm_drift < 1e-7, res.max_norm_drift, 1e-7)]
    diag = {"leakage_max": leak, "dt": res.dt, "n_traj": res.n_traj, "base_seed": res.base_seed}
    return Outcome("ensemble-sweep", cols, checks, diag)


def compare(cfg: RunConfig) -> Outcome:
    """Run the configured engines on one grid and compare them pairwise."""
    p, t, run = cfg.params, cfg.times(), cfg.run
    engines = tuple(dict.fromkeys(run.engines))
    kappa = dissipator_strength(p)
    if "analytic" in engines and kappa > 0:
        raise ConfigError(f"the analytic engine has no reservoir; it needs kappa = 0 (preset gives {kappa})")
    curves, stderr, diag = {}, None, {}
    if "analytic" in engines:
        curves["analytic"] = analytic.coherence_modulus_R(p, t, mode=run.r_mode)
    if "master" in engines:
        series, coh, leak = _master_series(cfg, t)
        curves["master"] = np.abs(coh)
        diag["master_trace_drift"] = series.max_trace_drift
        diag["leakage_max"] = leak
    if "ensemble" in engines:
        res, leak = _ensemble(cfg, t)
        curves["ensemble"] = res.R
        stderr = res.R_stderr
        diag["ensemble_norm_drift"] = res.max_norm_drift
        diag["leakage_max"] = leak
    diag.setdefault("leakage_max", initial_leakage(cfg))
    guard_leakage(cfg, diag["leakage_max"])

    cols = {"t": t}
    cols.update({f"R_{e}": curves[e] for e in engines})
    if stderr is not None:
        cols["stderr"] = stderr
    checks, pairs = [], {}
    for a, b in itertools.combinations(engines, 2):
        delta = np.abs(curves[a] - curves[b])
        entry = {"max_abs": float(delta.max()), "mean_abs": float(delta.mean())}
        stochastic = "ensemble" in (a, b) and kappa > 0
        if stochastic:
            live = stderr > 0
            z = np.where(live, delta / np.where(live, stderr, 1.0), np.where(delta > 1e-12, np.inf, 0.0))
            frac = float(np.mean(z < run.sigma_tol))
            entry.update(max_sigma=float(z.max()), fraction_within=frac)
            checks.append(Check(f"{a}_vs_{b}_fraction_within_{run.sigma_tol:g}_stderr", frac >= run.min_fraction, frac, run.min_fraction))
        else:
            checks.append(Check(f"{a}_vs_{b}_max_abs", entry["max_abs"] < run.deviation_tol, entry["max_abs"], run.deviation_tol))
        pairs[f"{a}-{b}"] = entry
    diag["pairs"] = pairs
    return Outcome("compare", cols, checks, diag)


def rates(cfg: RunConfig) -> Outcome:
    """Fitted dephasing rate of each Fock level against r (n^2 + n + 1)."""
    p, run = cfg.params, cfg.run
    leak = initial_leakage(cfg)
    guard_leakage(cfg, leak)
    rows = master.fit_decay_rates(p, run.n_list, window=run.fit_window, courant=run.courant, convention=run.rate_convention)
    n = np.array([r.n for r in rows], dtype=float)
    fitted = np.array([r.fitted_rate for r in rows])
    model = np.array([r.model_rate for r in rows])
    expected = n * n + n + 1
    ref = fitted[0] / expected[0]
    quiet = bool(np.all(fitted == 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = fitted / fitted[0] * expected[0] if fitted[0] else np.full(n.shape, np.nan)
        rel = np.abs(fitted / (ref * expected) - 1.0) if ref else np.full(n.shape, np.nan)
    cols = {
        "n": n,
        "fitted_rate": fitted,
        "model_rate": model,
        "ratio_to_n0": ratio,
        "expected_ratio": expected,
        "rel_error": rel,
    }
    flags, checks = [], []
    if quiet:
        flags.append("no decoherence")
        checks.append(Check("rates_vanish", True, 0.0, 0.0))
    else:
        checks.append(Check("ratio_rel_error", bool(np.nanmax(rel) < run.rate_tol), float(np.nanmax(rel)), run.rate_tol))
    with np.errstate(divide="ignore", invalid="ignore"):
        prefactor = np.abs(fitted - model) / model
    diag = {
        "leakage_max": leak,
        "fit_window": rows[0].window,
        "model_rel_error_max": float(np.nanmax(prefactor)) if not quiet else 0.0,
        "rate_constant": master.decay_rate_constant(p, run.rate_convention),
    }
    return Outcome("rates", cols, checks, diag, flags)


DRIVERS = {
    "analytic-sweep": analytic_sweep,
    "master-sweep": master_sweep,
    "ensemble-sweep": ensemble_sweep,
    "compare": compare,
    "rates": rates,
}


def execute(cfg: RunConfig) -> Outcome:
    return DRIVERS[cfg.experiment](cfg)
