"""
Analysis
Metrics over traces and the named studies behind `sweep --study`.

Each study takes a resolved LoopConfig (normally a preset), fans its runs out
over worker processes, and returns a StudyReport holding every raw point next
to the fits and tolerance verdicts drawn from them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from app.config import (
    ADAPTATION_WINDOW_S,
    INPUT_GAP_TOL,
    LYAPUNOV_TOL,
    SETTLING_BAND,
    STEADY_TAIL_FRACTION,
    SWEEP_WORKERS,
)
from app.control.controller import adaptation_margin, initial_state, step_controller
from app.control.errors import BlowUp, LengthMismatch, UnknownStudy
from app.control.estimator import Estimate, EstimatorConfig, build_stack, estimation_error_study
from app.control.lift import remainder_study, state_input_grid
from app.control.numerics import power_law_fit
from app.control.plant import equilibrium_input
from app.control.simloop import LoopConfig, Trace, run
from app.models.schemas import StudyCheck, StudyReport

logger = logging.getLogger(__name__)

# W decrease is only meaningful when T|z|^2 + e_u^2 exceeds this
LAMBDA_DENOM_FLOOR = 1e-12


# === TRACE METRICS ===

@dataclass(frozen=True)
class ConvergenceMetrics:
    terminal_norm: float
    settling_time: Optional[float]
    settled: bool
    steady_error: float
    overshoot: float


def _dwell_bounds(trace: Trace) -> List[Tuple[int, int]]:
    """[start, stop) index ranges of constant setpoint."""
    edges = [0] + [c for c in trace.setpoint_changes if 0 < c < len(trace)] + [len(trace)]
    return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]


def convergence_metric(
    trace: Trace,
    band: float = SETTLING_BAND,
    tail_fraction: float = STEADY_TAIL_FRACTION,
) -> ConvergenceMetrics:
    """Terminal norm, time to stay inside band * peak, and max |z1 - r| over each dwell's tail."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    norms = np.linalg.norm(trace.z_tilde, axis=1)
    peak = float(np.max(norms))
    threshold = band * peak

    outside = np.nonzero(norms > threshold)[0]
    if outside.size == 0:
        settling: Optional[float] = float(trace.t[0])
    elif outside[-1] == len(trace) - 1:
        settling = None
    else:
        settling = float(trace.t[outside[-1] + 1])

    steady = 0.0
    overshoot = 0.0
    offset = trace.z[:, 0] - trace.r
    for a, b in _dwell_bounds(trace):
        width = max(1, int(math.ceil(tail_fraction * (b - a))))
        steady = max(steady, float(np.max(np.abs(offset[b - width:b]))))
        side = np.sign(offset[a])
        if side != 0.0:
            overshoot = max(overshoot, float(np.max(-side * offset[a:b])))

    return ConvergenceMetrics(
        terminal_norm=float(norms[-1]),
        settling_time=settling,
        settled=settling is not None,
        steady_error=steady,
        overshoot=max(0.0, overshoot),
    )


@dataclass(frozen=True)
class LyapunovAudit:
    violations: int
    audited: int
    min_margin: float
    fitted_lambda: Optional[float]
    violation_steps: List[int]
    late_violations: int = 0
    last_violation: Optional[int] = None
    settled_lambda: Optional[float] = None


def adaptation_window_steps(T: float, seconds: float = ADAPTATION_WINDOW_S) -> int:
    return int(math.ceil(seconds / T - 1e-9))


def lyapunov_audit(trace: Trace, P_z=None, skip: Optional[int] = None, window: int = 0) -> LyapunovAudit:
    """
    Count steps with W(k+1) > W(k) + tol for k >= skip.

    Pairs ending at a setpoint change are not audited. When P_z is given,
    V_z is recomputed from the trace states. A violation is late when it
    happens at least `window` steps after the end of the transient and after
    the most recent setpoint change; settled_lambda is fitted on late steps only.
    """
    skip = trace.skip if skip is None else skip
    if window < 0:
        raise ValueError(f"window must be non-negative, got {window}")
    if P_z is not None:
        P = np.asarray(P_z, dtype=float)
        zt = trace.z_tilde
        W = np.einsum("ki,ij,kj->k", zt, P, zt) + trace.Veu
    else:
        W = trace.W
    sq_norm = np.sum(trace.z_tilde ** 2, axis=1)
    excluded = set(trace.setpoint_changes)
    anchors = sorted({max(skip, 0)} | excluded)

    violations: List[int] = []
    late = 0
    margins: List[float] = []
    rates: List[float] = []
    settled_rates: List[float] = []
    a = 0
    for k in range(max(skip, 0), len(trace) - 1):
        while a + 1 < len(anchors) and anchors[a + 1] <= k:
            a += 1
        is_late = k - anchors[a] >= window
        if k + 1 in excluded:
            continue
        dW = W[k + 1] - W[k]
        margins.append(-dW)
        if dW > LYAPUNOV_TOL:
            violations.append(k)
            late += int(is_late)
        denom = trace.T * sq_norm[k] + trace.e_u[k] ** 2
        if denom > LAMBDA_DENOM_FLOOR:
            rates.append(-dW / denom)
            if is_late:
                settled_rates.append(-dW / denom)

    return LyapunovAudit(
        violations=len(violations),
        audited=len(margins),
        min_margin=float(min(margins)) if margins else 0.0,
        fitted_lambda=float(min(rates)) if rates else None,
        violation_steps=violations,
        late_violations=late,
        last_violation=violations[-1] if violations else None,
        settled_lambda=float(min(settled_rates)) if settled_rates else None,
    )


@dataclass(frozen=True)
class InputConvergence:
    gap: np.ndarray
    first_below: Optional[int]
    settled_step: Optional[int]
    settled_time: Optional[float]


def input_convergence(trace: Trace, oracle_trace: Optional[Trace] = None, tol: float = INPUT_GAP_TOL) -> InputConvergence:
    """
    |u - u_bar| / (1 + |u_bar|) per step.

    u_bar comes from oracle_trace when given, otherwise from the cancelling
    input evaluated along the trace's own states.
    """
    if oracle_trace is not None:
        if len(oracle_trace) != len(trace):
            raise LengthMismatch(f"trace has {len(trace)} records, oracle trace has {len(oracle_trace)}")
        u_bar = oracle_trace.u
    else:
        u_bar = trace.u_oracle
    gap = np.abs(trace.u - u_bar) / (1.0 + np.abs(u_bar))

    below = gap < tol
    first = int(np.argmax(below)) if below.any() else None
    above = np.nonzero(~below)[0]
    if above.size == 0:
        settled: Optional[int] = 0
    elif above[-1] == len(gap) - 1:
        settled = None
    else:
        settled = int(above[-1] + 1)

    return InputConvergence(
        gap=gap,
        first_below=first,
        settled_step=settled,
        settled_time=None if settled is None else float(trace.t[settled]),
    )


def sandbox_input_errors(beta: float, gamma: float, e0: float, steps: int, alpha: float = 0.0, v: float = 0.0) -> np.ndarray:
    """
    The shipped controller on a frozen state fed exact estimates: z_hat = (v,), z_hat_{n+1} = alpha + beta u.

    Returns e_u(0..steps); the recursion is e_u(k+1) = (1 - |beta| gamma) e_u(k).
    """
    if beta == 0.0:
        raise ValueError("beta must be nonzero")
    state = initial_state((1.0,), gamma, (), beta_sign=1 if beta > 0.0 else -1)
    state = replace(state, u=(v - alpha - e0) / beta)
    z_hat = np.array([v])
    out = np.empty(steps + 1)
    for k in range(steps + 1):
        est = Estimate(z_hat=z_hat, z_lift_hat=alpha + beta * state.u, k=k)
        u, state = step_controller(state, est)
        out[k] = v - (alpha + beta * u)
    return out


def linear_response(A_cl: np.ndarray, z0: Sequence[float], times: Sequence[float]) -> np.ndarray:
    """exp(A_cl t) z0 for each t."""
    z0 = np.asarray(z0, dtype=float)
    return np.array([expm(A_cl * t) @ z0 for t in times])


# === PARALLEL FAN-OUT ===

def parallel_map(fn: Callable[[Any], Any], items: Sequence[Any], workers: Optional[int] = None) -> List[Any]:
    """Order-preserving map; a process pool when workers > 1. fn must be module-level."""
    workers = SWEEP_WORKERS if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _steady_error_job(cfg: LoopConfig) -> float:
    return convergence_metric(run(cfg)).steady_error


def _tuning_job(cfg: LoopConfig) -> Dict[str, Any]:
    try:
        metrics = convergence_metric(run(cfg))
    except BlowUp as e:
        return {"blowup": True, "message": str(e).splitlines()[0]}
    return {
        "blowup": False,
        "terminal_norm": metrics.terminal_norm,
        "settling_time": metrics.settling_time,
        "overshoot": metrics.overshoot,
        "steady_error": metrics.steady_error,
    }


def _check(name: str, value: Optional[float], lo: Optional[float] = None, hi: Optional[float] = None, note: str = "") -> StudyCheck:
    ok = value is not None and math.isfinite(value)
    if ok and lo is not None:
        ok = value >= lo
    if ok and hi is not None:
        ok = value <= hi
    return StudyCheck(name=name, value=value, lo=lo, hi=hi, passed=bool(ok), note=note)


def _flag(name: str, passed: bool, note: str = "") -> StudyCheck:
    return StudyCheck(name=name, passed=bool(passed), note=note)


def _regulation(cfg: LoopConfig) -> LoopConfig:
    return cfg.replace(setpoints=((0.0, 0.0),))


# === STUDIES ===

TAYLOR_T_LIST = (0.02, 0.01, 0.005, 0.0025)
SLOPE_TOL = 0.2


def taylor_remainder_study(base: LoopConfig, workers: Optional[int] = None) -> StudyReport:
    plant = base.plant
    u0 = equilibrium_input(plant)
    if base.input_range is not None:
        inputs = np.linspace(base.input_range[0], base.input_range[1], 5)
    else:
        inputs = u0 + np.linspace(-0.5, 0.5, 5)
    grid = state_input_grid(plant.box.lower, plant.box.upper, inputs, points_per_axis=5)
    rep = remainder_study(plant, grid, TAYLOR_T_LIST)

    points = [
        {"T": T, **{f"max_err_{i + 1}": float(rep.max_err[row, i]) for i in range(plant.n)}}
        for row, T in enumerate(rep.T_list)
    ]
    checks: List[StudyCheck] = []
    if rep.exact:
        checks.append(_check("max_remainder", float(np.max(rep.max_err)), hi=1e-12, note="model is exact"))
    else:
        for i, (slope, order) in enumerate(zip(rep.slopes, rep.expected)):
            checks.append(_check(f"slope_{i + 1}", slope, order - SLOPE_TOL, order + SLOPE_TOL))

    return StudyReport(
        study="taylor-remainder",
        preset=base.name,
        parameters={"T_list": list(rep.T_list), "grid_size": rep.grid_size, "inputs": inputs.tolist()},
        points=points,
        fits={"slopes": rep.slopes, "expected_orders": rep.expected, "fitted_M": rep.fitted_M, "exact": rep.exact},
        checks=checks,
    )


EST_T_LIST = (0.02, 0.01, 0.005, 0.002)
EST_HORIZON = 4.0
EST_NOISE = 1e-3


def est_error_study(base: LoopConfig, workers: Optional[int] = None) -> StudyReport:
    n = base.plant.n
    rep = estimation_error_study(
        _regulation(base), EST_T_LIST, EST_NOISE, horizon=EST_HORIZON,
        mapper=lambda fn, items: parallel_map(fn, items, workers),
    )
    points = [
        {"T": T, "clean_sup_error": c, "noisy_sup_error": d}
        for T, c, d in zip(rep.T_list, rep.clean_errors, rep.noisy_errors)
    ]
    return StudyReport(
        study="est-error",
        preset=base.name,
        parameters={"T_list": rep.T_list, "d_bar": rep.d_bar, "horizon": EST_HORIZON, "gamma_over_T": base.gamma / base.T},
        points=points,
        fits={"slope_clean": rep.slope_clean, "slope_noise": rep.slope_noise},
        checks=[
            _check("slope_clean", rep.slope_clean, 0.7, 1.3),
            _check("slope_noise", rep.slope_noise, -n - 0.4, -n + 0.4),
        ],
    )


ULTIMATE_D_BARS = (0.5e-3, 1e-3, 2e-3)
ULTIMATE_T_FACTORS = (2.0, 1.5, 1.0)
ULTIMATE_SEEDS = 20
ULTIMATE_HORIZON = 6.0


def ultimate_bound_study(
    base: LoopConfig,
    d_bar_list: Sequence[float] = ULTIMATE_D_BARS,
    T_list: Optional[Sequence[float]] = None,
    seeds: int = ULTIMATE_SEEDS,
    workers: Optional[int] = None,
) -> StudyReport:
    """
    Steady error vs (d_bar, T) over seeds, fitted as c d_bar^p T^q.

    Every run regulates at the origin over ULTIMATE_HORIZON.

    T^-n is checked only as an upper bound: c is fitted at the largest T and
    every point must satisfy err <= c d_bar T^-n.
    """
    n = base.plant.n
    reg = _regulation(base).replace(horizon=ULTIMATE_HORIZON)
    T_list = sorted((float(T) for T in (T_list or [base.T * f for f in ULTIMATE_T_FACTORS])), reverse=True)
    d_bar_list = sorted(float(d) for d in d_bar_list)
    if len(T_list) < 3 or len(d_bar_list) < 3:
        raise ValueError("ultimate-bound study needs at least 3 values on each axis")
    if seeds < 20:
        raise ValueError(f"need at least 20 seeds per point, got {seeds}")

    jobs = [
        reg.replace(T=T, d_bar=d, seed=s)
        for T in T_list
        for d in d_bar_list
        for s in range(seeds)
    ]
    errors = parallel_map(_steady_error_job, jobs, workers)
    clean = _steady_error_job(reg.replace(d_bar=0.0))

    points: List[Dict[str, Any]] = []
    per_point: Dict[Tuple[float, float], np.ndarray] = {}
    idx = 0
    for T in T_list:
        for d in d_bar_list:
            errs = np.array(errors[idx: idx + seeds])
            idx += seeds
            per_point[(T, d)] = errs
            points.append({
                "T": T,
                "d_bar": d,
                "mean_steady_error": float(errs.mean()),
                "max_steady_error": float(errs.max()),
                "min_steady_error": float(errs.min()),
            })

    features = [[p["d_bar"], p["T"]] for p in points]
    coef = power_law_fit(features, [p["mean_steady_error"] for p in points])
    p_exp, q_exp = float(coef[1]), float(coef[2])

    T_big = T_list[0]
    c = max(float(per_point[(T_big, d)].max()) * T_big ** n / d for d in d_bar_list)
    bound_ok = all(
        float(per_point[(T, d)].max()) <= c * d * T ** (-n) * (1.0 + 1e-9)
        for T in T_list
        for d in d_bar_list
    )

    checks = [
        _check("d_bar_exponent", p_exp, 0.7, 1.3),
        _flag("upper_bound_c_dbar_T^-n", bound_ok, note=f"c={c:.4g} fitted at T={T_big:g}"),
        _check("noise_free_steady_error", clean, hi=1e-4),
    ]
    T_ref = T_list[-1]
    for lo_d, hi_d in zip(d_bar_list, d_bar_list[1:]):
        if abs(hi_d / lo_d - 2.0) < 1e-9:
            ratio = float(per_point[(T_ref, hi_d)].mean() / per_point[(T_ref, lo_d)].mean())
            checks.append(_check(f"doubling_ratio_{lo_d:g}", ratio, 1.5, 2.5))

    return StudyReport(
        study="ultimate-bound",
        preset=base.name,
        parameters={"T_list": T_list, "d_bar_list": d_bar_list, "seeds": seeds, "horizon": ULTIMATE_HORIZON,
                    "setpoint": 0.0},
        points=points,
        fits={"log_c": float(coef[0]), "p": p_exp, "q": q_exp, "c_upper": c,
              "note": "q is the realized exponent; T^-n is certified only as an upper bound"},
        checks=checks,
    )


NEGATIVE_CONTROL_T = 0.5
TERMINAL_FRACTION = 1e-2


def lyapunov_study(base: LoopConfig, workers: Optional[int] = None) -> StudyReport:
    """
    Audit W = V_z + e_u^2 along a noise-free run.

    W may rise while the held input catches up with v after the transient
    and after each setpoint change; only rises later than ADAPTATION_WINDOW_S
    fail the study.
    """
    clean = base.replace(d_bar=0.0)
    trace = run(clean)
    window = adaptation_window_steps(base.T)
    audit = lyapunov_audit(trace, window=window)
    metrics = convergence_metric(trace)
    peak = float(np.max(np.linalg.norm(trace.z_tilde, axis=1)))

    try:
        bad = run(clean.replace(T=NEGATIVE_CONTROL_T))
        bad_violations = lyapunov_audit(bad).violations
        negative_ok = bad_violations > 0
        negative_note = f"violations={bad_violations}"
    except BlowUp as e:
        negative_ok = True
        negative_note = f"blow-up: {str(e).splitlines()[0]}"

    last_t = None if audit.last_violation is None else float(trace.t[audit.last_violation])
    return StudyReport(
        study="lyapunov",
        preset=base.name,
        parameters={"T": base.T, "skip": trace.skip, "excluded_steps": trace.setpoint_changes,
                    "window_steps": window, "window_s": ADAPTATION_WINDOW_S,
                    "negative_control_T": NEGATIVE_CONTROL_T},
        points=[{"k": k, "t": float(trace.t[k]), "W": float(trace.W[k]), "dW": float(trace.W[k + 1] - trace.W[k])}
                for k in audit.violation_steps],
        fits={"violations": audit.violations, "late_violations": audit.late_violations,
              "last_violation_t": last_t, "audited": audit.audited, "min_margin": audit.min_margin,
              "fitted_lambda": audit.fitted_lambda, "settled_lambda": audit.settled_lambda,
              "terminal_norm": metrics.terminal_norm},
        checks=[
            _check("late_violations", float(audit.late_violations), hi=0.0,
                   note=f"{audit.violations - audit.late_violations} rises inside the adaptation window"),
            _check("terminal_over_peak", metrics.terminal_norm / peak if peak > 0.0 else 0.0, hi=TERMINAL_FRACTION),
            _flag("negative_control_fails", negative_ok, note=negative_note),
        ],
    )


INPUT_CONVERGENCE_DEADLINE = 2.0
SANDBOX_STEPS = 50
SANDBOX_PAIRS = 20


def sandbox_pairs(count: int = SANDBOX_PAIRS, seed: int = 0) -> List[Tuple[float, float]]:
    """Seeded (beta, gamma) pairs with 0.05 <= beta gamma <= 0.95, beta of either sign."""
    rng = np.random.default_rng(seed)
    magnitude = rng.uniform(0.5, 20.0, size=count)
    product = rng.uniform(0.05, 0.95, size=count)
    sign = rng.choice([-1.0, 1.0], size=count)
    return [(float(s * b), float(p / b)) for s, b, p in zip(sign, magnitude, product)]


def sandbox_recursion_deviation(beta: float, gamma: float, steps: int = SANDBOX_STEPS) -> float:
    """Largest |e_u(k+1) - (1 - |beta| gamma) e_u(k)| over a sandbox run from e_u(0) = 1."""
    e = sandbox_input_errors(beta, gamma, e0=1.0, steps=steps, alpha=0.3, v=-0.7)
    return float(np.max(np.abs(e[1:] - (1.0 - abs(beta) * gamma) * e[:-1])))


def input_convergence_study(base: LoopConfig, workers: Optional[int] = None) -> StudyReport:
    trace = run(_regulation(base).replace(d_bar=0.0))
    conv = input_convergence(trace)

    margin = adaptation_margin(base.plant, base.gamma)
    beta = margin.beta_max
    rate = 1.0 - beta * base.gamma
    pairs = [(beta, base.gamma)] + sandbox_pairs(seed=base.seed)
    sandbox_dev = max(sandbox_recursion_deviation(b, g) for b, g in pairs)

    stride = max(1, len(trace) // 200)
    points = [{"k": int(k), "t": float(trace.t[k]), "gap": float(conv.gap[k])} for k in range(0, len(trace), stride)]
    return StudyReport(
        study="input-convergence",
        preset=base.name,
        parameters={"tol": INPUT_GAP_TOL, "deadline_s": INPUT_CONVERGENCE_DEADLINE, "sandbox_beta": beta,
                    "sandbox_pairs": len(pairs)},
        points=points,
        fits={"first_below": conv.first_below, "settled_step": conv.settled_step,
              "settled_time": conv.settled_time, "sandbox_rate": rate, "gamma_beta_max": margin.gamma_beta_max,
              "lambda_u_max": margin.lambda_u_max},
        checks=[
            _check("settled_time", conv.settled_time, hi=INPUT_CONVERGENCE_DEADLINE),
            _check("sandbox_recursion_deviation", sandbox_dev, hi=1e-10),
            _check("gamma_beta_max", margin.gamma_beta_max, hi=1.0 - 1e-12),
        ],
    )


GAMMA_MULTIPLES = (0.5, 1.0, 2.0, 4.0)
NEGATIVE_GAMMA_FACTOR = 3.0
# largest per-step input kick gamma * noise_gain * d_bar allowed for the noisy runs
NOISE_KICK_LIMIT = 0.25


def tuning_noise_bound(base: LoopConfig, gamma_max: float) -> float:
    """The preset's d_bar, or EST_NOISE capped at NOISE_KICK_LIMIT / (gamma_max * noise_gain)."""
    if base.d_bar > 0.0:
        return base.d_bar
    gain = build_stack(base.estimator_config).noise_gain
    return min(EST_NOISE, NOISE_KICK_LIMIT / (gamma_max * gain))


def gamma_tuning_study(base: LoopConfig, workers: Optional[int] = None) -> StudyReport:
    """
    Settling, overshoot and noisy steady error across gamma; gamma = 3/beta_max must diverge.

    Boundedness is graded on the noise-free runs; the noisy runs only supply steady error.
    """
    beta_max = adaptation_margin(base.plant, base.gamma).beta_max
    gammas = [base.gamma * m for m in GAMMA_MULTIPLES]
    negative = NEGATIVE_GAMMA_FACTOR / beta_max
    noisy_d = tuning_noise_bound(base, max(gammas))

    jobs: List[LoopConfig] = []
    for g in gammas + [negative]:
        jobs.append(base.replace(gamma=g, d_bar=0.0))
        jobs.append(base.replace(gamma=g, d_bar=noisy_d))
    results = parallel_map(_tuning_job, jobs, workers)

    points: List[Dict[str, Any]] = []
    checks: List[StudyCheck] = []
    for i, g in enumerate(gammas + [negative]):
        clean, noisy = results[2 * i], results[2 * i + 1]
        is_negative = i == len(gammas)
        points.append({
            "gamma": g,
            "gamma_beta_max": g * beta_max,
            "negative_control": is_negative,
            "blowup": clean["blowup"],
            "noisy_blowup": noisy["blowup"],
            "settling_time": clean.get("settling_time"),
            "overshoot": clean.get("overshoot"),
            "noisy_steady_error": noisy.get("steady_error"),
        })
        if is_negative:
            diverged = clean["blowup"] or not (clean["terminal_norm"] < 1.0)
            checks.append(_flag("negative_control_diverges", diverged, note=f"gamma={g:.4g}"))
        elif g * beta_max < 1.0:
            checks.append(_flag(f"bounded_gamma_{g:.4g}", not clean["blowup"]))

    return StudyReport(
        study="gamma-tuning",
        preset=base.name,
        parameters={"gammas": gammas, "negative_gamma": negative, "beta_max": beta_max, "noisy_d_bar": noisy_d},
        points=points,
        checks=checks,
    )


RHO_SEEDS = 400
RHO_TOL = 0.10


def rho_averaging_study(base: LoopConfig, workers: Optional[int] = None, seeds: int = RHO_SEEDS) -> StudyReport:
    """
    Estimator noise gain vs window length at fixed T.

    Common random numbers: each seed draws one noise vector of the longest
    window and shorter windows use its prefix.
    """
    n, T = base.plant.n, base.T
    if seeds < 200:
        raise ValueError(f"need at least 200 seeds, got {seeds}")
    d_bar = base.d_bar if base.d_bar > 0.0 else EST_NOISE
    rhos = list(range(n + 1, 4 * (n + 1) + 1))
    rng = np.random.default_rng(base.seed)
    noise = rng.uniform(-d_bar, d_bar, size=(seeds, rhos[-1]))

    points: List[Dict[str, Any]] = []
    for rho in rhos:
        stack = build_stack(EstimatorConfig(n=n, rho=rho, T=T))
        errs = noise[:, :rho] @ stack.pinv.T
        mse = float(np.mean(np.sum(errs ** 2, axis=1)))
        points.append({"rho": rho, "noise_gain": stack.noise_gain, "analytic_mse": stack.noise_gain ** 2 * d_bar ** 2 / 3.0,
                       "mc_mse": mse})

    analytic_ok = all(b["noise_gain"] <= a["noise_gain"] * (1.0 + 1e-9) for a, b in zip(points, points[1:]))
    worst = max(b["mc_mse"] / a["mc_mse"] for a, b in zip(points, points[1:]))
    return StudyReport(
        study="rho-averaging",
        preset=base.name,
        parameters={"T": T, "d_bar": d_bar, "seeds": seeds, "rho_range": [rhos[0], rhos[-1]]},
        points=points,
        fits={"worst_mc_ratio": worst},
        checks=[
            _flag("analytic_non_increasing", analytic_ok),
            _check("mc_worst_ratio", worst, hi=1.0 + RHO_TOL),
        ],
    )


STUDIES: Dict[str, Callable[..., StudyReport]] = {
    "taylor-remainder": taylor_remainder_study,
    "est-error": est_error_study,
    "ultimate-bound": ultimate_bound_study,
    "lyapunov": lyapunov_study,
    "input-convergence": input_convergence_study,
    "gamma-tuning": gamma_tuning_study,
    "rho-averaging": rho_averaging_study,
}


def run_study(name: str, base: LoopConfig, workers: Optional[int] = None) -> StudyReport:
    try:
        study = STUDIES[name]
    except KeyError:
        raise UnknownStudy(f"unknown study '{name}'; choose from {sorted(STUDIES)}") from None
    logger.info(f"[Analysis/{name}] starting on {base.name}")
    report = study(base, workers=workers)
    verdict = "PASS" if report.passed else "FAIL"
    logger.info(f"[Analysis/{name}] {verdict} ({sum(c.passed for c in report.checks)}/{len(report.checks)} checks)")
    return report
