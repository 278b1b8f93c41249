"""Controllability classification and loop-trajectory search.

The parameter case split: isotropic drag (xi == eta) or equal moments
(m1 == m2) remove the asymmetry that swimming needs, and no control bound
helps.  Opposite moments (m1 + m2 == 0) make the threshold q vanish and
leave the unobstructed regime.  Otherwise the swimmer is controllable with
amplitudes above q = 2*kappa*|m1+m2|/|m1*m2| but obstructed below it: the
zeta functional drifts monotonically, so no trajectory with active shape
dynamics can return to the origin.

loop_search probes that obstruction numerically by direct shooting:
piecewise-constant controls on n intervals, a quadratic penalty on the
periodicity defect with continuation, a Gauss-Newton feasibility
restoration, and multi-start.  The observable is the collapse of the best
feasible loop size as the control bound shrinks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _fast
from .errors import DegenerateParams
from .expansion import closed_form_constants
from .model import DEFAULT_REFERENCE, _reference_offset, f_table, validate_params
from .simulator import ControlSignal, integrate
from .transform import (ENERGY_FLOOR, c0_closed_form, normal_path,
                        obstruction_ratio, stlc_threshold)

NONTRIVIAL_SIZE = 1e-6
DEFECT_TOL = 1e-9


class ControllabilityClass(enum.Enum):
    NOT_STLC_Q_ANY = "NOT_STLC_Q_ANY"
    STLC_Q_NOT_STLC = "STLC_Q_NOT_STLC"
    STLC = "STLC"


@dataclass(frozen=True)
class Classification:
    regime: ControllabilityClass
    q: float
    c0: float


def classify(params):
    """Case analysis on the parameter set, with q and c0 attached."""
    validate_params(params)
    q = stlc_threshold(params)
    c0 = c0_closed_form(params)
    if params.xi == params.eta or params.m1 == params.m2:
        regime = ControllabilityClass.NOT_STLC_Q_ANY
    elif params.m1 + params.m2 == 0.0:
        regime = ControllabilityClass.STLC
    else:
        regime = ControllabilityClass.STLC_Q_NOT_STLC
    return Classification(regime=regime, q=q, c0=c0)


@dataclass
class LoopResult:
    """Best loop candidate found for one control bound."""

    controls: np.ndarray
    trajectory: object
    defect: float
    objective: float
    eps: float
    T: float
    n: int
    feasible: bool
    nontrivial: bool
    no_feasible_loop: bool = False
    start_summaries: list = field(default_factory=list)


def _defect_gate(objective):
    """Feasibility tolerance for the periodicity defect, scaled by size.

    The relative form is what makes the obstruction observable: the
    irreducible return gap of a would-be loop grows like the cube of its
    size (through c0 times the shape energy), while this gate only grows
    linearly, so below the amplitude threshold every nontrivial candidate
    is eventually rejected no matter how well the optimizer converges.
    """
    return DEFECT_TOL * objective


def _penalty_call(y0, u_batch, T, nsub, mu, wsize, pt, c):
    return _fast.penalty_batch(y0, u_batch, T, nsub, mu, wsize,
                               pt[0], pt[1], pt[2], pt[3], pt[4], pt[5], c)


def _merit_and_grad(u, y0, T, nsub, lam, mu, pt, c, fd_step):
    """Augmented-Lagrangian merit -size + lam.r + mu|r|^2 with FD gradient.

    One batched rollout call evaluates the base point and all forward
    differences; the merit is assembled from the returned sizes and end
    states.
    """
    m = len(u)
    batch = np.empty((m + 1, m))
    batch[0] = u
    batch[1:] = u[None, :] + fd_step * np.eye(m)
    _, sizes, _, finals = _penalty_call(y0, batch, T, nsub, 0.0, 0.0, pt, c)
    r = finals - y0
    phi = -sizes + r @ lam + mu * np.sum(r * r, axis=1)
    return phi[0], (phi[1:] - phi[0]) / fd_step


def _restore_gauss_newton(u, y0, T, nsub, eps, pt, c, fd_step, tol,
                          max_iter=15):
    """Drive the periodicity residual down by damped Gauss-Newton.

    The residual z(T) - z(0) is 4-dimensional against 2n unknowns, so the
    least-norm step barely moves the controls and preserves the loop shape
    found by the penalty phase.  Coordinates pinned at the control bound
    are dropped from the solve so clipping cannot stall the iteration.
    """
    m = len(u)
    for _ in range(max_iter):
        batch = np.empty((m + 1, m))
        batch[0] = u
        batch[1:] = u[None, :] + fd_step * np.eye(m)
        _, _, defects, finals = _penalty_call(y0, batch, T, nsub, 1.0, 0.0,
                                              pt, c)
        r = finals[0] - y0
        if defects[0] <= tol:
            break
        jac = (finals[1:] - finals[0]) / fd_step
        step, *_ = np.linalg.lstsq(jac.T, -r, rcond=None)
        lo = (u <= -eps + 1e-12) & (step < 0.0)
        hi = (u >= eps - 1e-12) & (step > 0.0)
        free = ~(lo | hi)
        if not free.all() and free.any():
            sol, *_ = np.linalg.lstsq(jac[free].T, -r, rcond=None)
            step = np.zeros(m)
            step[free] = sol
        best_u, best_d = u, defects[0]
        scale = 1.0
        for _ in range(8):
            cand = np.clip(u + scale * step, -eps, eps)
            _, _, dc, _ = _penalty_call(y0, cand[None, :], T, nsub, 1.0,
                                        0.0, pt, c)
            if dc[0] < best_d:
                best_u, best_d = cand, dc[0]
                break
            scale *= 0.5
        if best_d >= defects[0]:
            break
        u = best_u
    return u


def _optimize_start(u0, y0, T, n, nsub, eps, pt, c, stages, maxiter_stage):
    fd_step = max(1e-7 * eps, 1e-12)
    bounds = [(-eps, eps)] * (2 * n)
    u = np.clip(np.asarray(u0, dtype=float), -eps, eps)

    _, sizes, defects, _ = _penalty_call(y0, u[None, :], T, nsub, 1.0, 0.0,
                                         pt, c)
    s0 = max(float(sizes[0]), 1e-12)
    d0 = max(float(defects[0]), 1e-12)
    mu = max(10.0, 0.1 * s0 / (d0 * d0))
    lam = np.zeros(4)
    r_prev = None

    for _ in range(stages):
        res = minimize(
            _merit_and_grad, u, jac=True, method="L-BFGS-B", bounds=bounds,
            args=(y0, T, nsub, lam, mu, pt, c, fd_step),
            options={"maxiter": maxiter_stage, "ftol": 1e-18, "gtol": 1e-14})
        u = res.x
        _, _, _, finals = _penalty_call(y0, u[None, :], T, nsub, 0.0, 0.0,
                                        pt, c)
        r = finals[0] - y0
        lam = lam + 2.0 * mu * r
        if r_prev is not None and np.max(np.abs(r)) > 0.25 * np.max(
                np.abs(r_prev)):
            mu *= 10.0
        else:
            mu *= 2.0
        r_prev = r
    return _restore_gauss_newton(u, y0, T, nsub, eps, pt, c, fd_step,
                                 0.01 * DEFECT_TOL)


def _validate_candidate(params, u, eps, T, n, tol, reference):
    u = np.clip(np.asarray(u, dtype=float).reshape(n, 2), -eps, eps)
    signal = ControlSignal.piecewise_constant(
        np.linspace(0.0, T, n + 1), u, bound=eps if eps > 0 else None)
    atol = tol * max(1e-6, eps * eps)
    traj = integrate(params, np.zeros(4), signal, T, tol=tol, atol=atol,
                     reference=reference)
    _, states = traj.dense(max(801, 4 * len(traj.t)))
    norms = np.sqrt(np.sum(states ** 2, axis=1))
    node_norms = np.sqrt(np.sum(traj.y ** 2, axis=1))
    objective = float(max(norms.max(), node_norms.max()))
    defect = float(np.max(np.abs(traj.y[-1] - traj.y[0])))
    return u, traj, objective, defect


def _adaptive_polish(params, u, eps, T, n, nsub, pt, c, tol, reference):
    """Inexact Gauss-Newton against the adaptive integrator.

    The optimizer works on a fixed-step transcription; at large amplitudes
    its discretization error shows up as a spurious periodicity defect
    under accurate re-integration.  Corrector iterations remove it: the
    residual comes from the adaptive integrator while the Jacobian comes
    from the cheap fixed-step model, which is accurate enough to direct
    the least-norm steps.  Near-feasible inputs exit immediately.
    """
    def resid_vec(u_flat):
        _, traj, objective, _ = _validate_candidate(
            params, u_flat, eps, T, n, tol, reference)
        return traj.y[-1] - traj.y[0], objective

    fd_step = max(1e-6 * eps, 1e-10)
    u = np.asarray(u, dtype=float).ravel().copy()
    m = len(u)
    r, objective = resid_vec(u)
    # 10x finer than the optimizer grid keeps the Jacobian model error
    # well below the residuals being corrected.
    nsub_j = 10 * nsub
    for _ in range(6):
        # 1e-13 is the practical resolution of the validated defect;
        # pushing past it just burns iterations.
        if np.max(np.abs(r)) <= max(0.3 * _defect_gate(objective), 1e-13):
            break
        batch = np.empty((m + 1, m))
        batch[0] = u
        batch[1:] = u[None, :] + fd_step * np.eye(m)
        _, _, _, finals = _penalty_call(np.zeros(4), batch, T, nsub_j, 1.0,
                                        0.0, pt, c)
        jac = (finals[1:] - finals[0]) / fd_step
        step, *_ = np.linalg.lstsq(jac.T, -r, rcond=None)
        improved = False
        scale = 1.0
        for _ in range(5):
            cand = np.clip(u + scale * step, -eps, eps)
            rc, objc = resid_vec(cand)
            if np.max(np.abs(rc)) < np.max(np.abs(r)):
                u, r, objective = cand, rc, objc
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    return u


def _trivial_result(params, eps, T, n, tol, reference):
    signal = ControlSignal.zero()
    traj = integrate(params, np.zeros(4), signal, T, tol=tol,
                     reference=reference)
    return LoopResult(controls=np.zeros((n, 2)), trajectory=traj,
                      defect=0.0, objective=0.0, eps=eps, T=T, n=n,
                      feasible=True, nontrivial=False,
                      no_feasible_loop=False)


def loop_search(params, eps, T=None, n=40, seed=0, n_starts=8,
                warm_starts=(), nsub=10, stages=5, maxiter_stage=25,
                tol=1e-10, reference=DEFAULT_REFERENCE):
    """Best loop found under sup-norm control bound eps.

    Direct shooting over n piecewise-constant intervals on [0, T]
    (T defaults to eps, the small-time regime).  Multi-start penalty
    continuation maximizes the largest state norm along the trajectory
    subject to returning to the origin; candidates are re-validated with
    the adaptive integrator and polished against it.  A result counts as
    feasible when the validated defect is below 1e-9 times the objective
    and as nontrivial when additionally the objective exceeds 1e-6.  The trivial
    loop is always a fallback candidate, so a result is always returned;
    no_feasible_loop reports whether every optimized start failed
    validation.
    """
    validate_params(params)
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    if n < 2:
        raise ValueError("need at least two control intervals")
    if T is None:
        T = eps if eps > 0.0 else 1.0
    if T <= 0.0:
        raise ValueError("T must be positive")
    if eps == 0.0:
        return _trivial_result(params, eps, T, n, tol, reference)

    pt = params.astuple()
    c = _reference_offset(reference)
    y0 = np.zeros(4)

    starts = [np.asarray(w, dtype=float).ravel() for w in warm_starts]
    for i in range(n_starts):
        rng = np.random.default_rng((seed, i))
        starts.append(rng.uniform(-0.9 * eps, 0.9 * eps, 2 * n))

    candidates = []
    summaries = []
    # A warm start is also validated as-is: a loop feasible at a smaller
    # bound stays admissible here, which keeps the best objective monotone
    # in eps when searches are chained.
    for w in starts[:len(warm_starts)]:
        u_val, traj, objective, defect = _validate_candidate(
            params, w, eps, T, n, tol, reference)
        candidates.append((defect <= _defect_gate(objective), objective,
                           defect, u_val, traj))
    for u0 in starts:
        u_opt = _optimize_start(u0, y0, T, n, nsub, eps, pt, c, stages,
                                maxiter_stage)
        u_val, traj, objective, defect = _validate_candidate(
            params, u_opt, eps, T, n, tol, reference)
        feasible = defect <= _defect_gate(objective)
        candidates.append((feasible, objective, defect, u_val, traj))
        summaries.append((objective, defect, feasible))

    gate_passed = any(cand[0] for cand in candidates)
    candidates.sort(key=lambda cand: (cand[0], cand[1]), reverse=True)

    best = _trivial_result(params, eps, T, n, tol, reference)
    best.start_summaries = summaries
    polish_budget = 3
    for feasible, objective, defect, u_val, traj in candidates:
        if objective <= best.objective or polish_budget == 0:
            continue
        if not feasible and _defect_gate(objective) <= 1e-13:
            # gate below the defect resolution: cannot validate, skip
            continue
        polish_budget -= 1
        u_pol = _adaptive_polish(params, u_val, eps, T, n, nsub, pt, c, tol,
                                 reference)
        u_pol, traj, objective, defect = _validate_candidate(
            params, u_pol, eps, T, n, tol, reference)
        feasible = defect <= _defect_gate(objective)
        gate_passed = gate_passed or feasible
        if feasible and objective > best.objective:
            best = LoopResult(controls=u_pol, trajectory=traj, defect=defect,
                              objective=objective, eps=eps, T=T, n=n,
                              feasible=True,
                              nontrivial=objective > NONTRIVIAL_SIZE,
                              start_summaries=summaries)
            break
    best.no_feasible_loop = not gate_passed
    best.start_summaries = summaries
    return best


@dataclass(frozen=True)
class InequalityReport:
    """Integral inequalities along one trajectory, with the fitted factor.

    z3 here means the unit-gain coordinate z3/b4^2, whose derivative is
    z4 times the factor u; K is the largest |u| seen along the path.  Both
    bounds are then self-consistent in that normalization.
    """

    int_abs_z3z4: float
    int_z3sq: float
    int_z4sq: float
    k_fitted: float
    eps: float
    horizon: float
    bound1_ok: bool
    bound2_ok: bool
    trivial: bool


def _chain_factor(params, alpha, hperp, hpar, consts, g_norm, reference):
    """The factor u with d/dt (z3/b4^2) = z4*u, evaluated pointwise.

    The combination b4*thetadot - b3*alphadot vanishes linearly at
    alpha = 0, so near zero the ratio against alpha is taken by a central
    difference instead of division.
    """
    b3, b4 = consts["b3"], consts["b4"]

    def combo(a):
        ft = f_table(a, params, reference)
        thetadot = ft[0][2] + ft[1][2] * hpar + ft[2][2] * hperp
        alphadot = ft[0][3] + ft[1][3] * hpar + ft[2][3] * hperp
        return b4 * thetadot - b3 * alphadot

    if abs(alpha) >= 1e-8:
        slope = combo(alpha) / alpha
    else:
        d = 1e-5
        slope = (combo(d) - combo(-d)) / (2.0 * d)
    return g_norm * b4 * slope


def lemma_bounds_check(traj, params, density=10, reference=DEFAULT_REFERENCE,
                       strict=False):
    """Check the two loop inequalities with a trajectory-fitted constant.

    Verifies int |z3 z4| <= K*eps*int z4^2 and int z3^2 <= K^2*eps^2*int
    z4^2, where eps is the declared bound of the trajectory's control
    signal and K = sup |u| along the path.  Trajectories with shape energy
    below 1e-14 are flagged trivial (raised as UndefinedRatio only when
    strict).
    """
    from scipy.integrate import simpson

    from .errors import UndefinedRatio

    if traj.signal is None:
        raise ValueError("trajectory carries no control signal reference")
    consts = closed_form_constants(params)
    if params.m1 == params.m2 or params.m1 + params.m2 == 0.0:
        raise DegenerateParams("normal coordinates undefined for this set")
    g = 8.0 * (params.m1 - params.m2) / (consts["a2"] * (params.m1 + params.m2))
    g_norm = g / consts["b4"] ** 2

    ts, z3n, z4 = normal_path(traj, params, density)
    int_abs = float(simpson(np.abs(z3n * z4), x=ts))
    int_z3 = float(simpson(z3n * z3n, x=ts))
    int_z4 = float(simpson(z4 * z4, x=ts))
    eps = float(traj.signal.bound)
    horizon = float(traj.t[-1] - traj.t[0])

    if int_z4 < ENERGY_FLOOR:
        if strict:
            raise UndefinedRatio(int_z4)
        return InequalityReport(int_abs_z3z4=int_abs, int_z3sq=int_z3,
                                int_z4sq=int_z4, k_fitted=0.0, eps=eps,
                                horizon=horizon, bound1_ok=True,
                                bound2_ok=True, trivial=True)

    states = traj.state(ts)
    k_fit = 0.0
    for row, t in zip(states, ts):
        hperp, hpar = traj.signal.eval(float(t))
        u = _chain_factor(params, row[3], hperp, hpar, consts, g_norm,
                          reference)
        k_fit = max(k_fit, abs(u))
    ok1 = int_abs <= k_fit * eps * int_z4 * (1.0 + 1e-9)
    ok2 = int_z3 <= (k_fit * eps) ** 2 * int_z4 * (1.0 + 1e-9)
    return InequalityReport(int_abs_z3z4=int_abs, int_z3sq=int_z3,
                            int_z4sq=int_z4, k_fitted=k_fit, eps=eps,
                            horizon=horizon, bound1_ok=ok1, bound2_ok=ok2,
                            trivial=False)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    T: float
    objective: float
    defect: float
    feasible: bool
    nontrivial: bool
    ratio: float
    z4_energy: float
    n_feasible_starts: int


@dataclass
class SweepResult:
    params: object
    classification: Classification
    rows: list
    objectives_nonincreasing: bool
    final_below_threshold: bool
    verdict: str
    results: list = field(default_factory=list)


def _sweep_verdict(classification, rows, nonincreasing, final_small):
    if classification.regime is not ControllabilityClass.STLC_Q_NOT_STLC:
        return "NOT APPLICABLE"
    if len(rows) < 2:
        return "INSUFFICIENT DATA"
    if nonincreasing and final_small:
        return "OBSTRUCTION OBSERVED"
    return "NOT OBSERVED"


def epsilon_sweep(params, eps_list, T_rule="eps", n=40, seed=0, n_starts=8,
                  nsub=10, tol=1e-10, reference=DEFAULT_REFERENCE):
    """loop_search across a decreasing list of control bounds.

    T follows the small-time rule T = eps unless T_rule is a number.  Each
    level warm-starts from the previous best controls (clipped), which
    keeps the reported objectives comparable across levels.  The
    obstruction ratio of the best loop is recorded when defined; for
    parameter sets without normal coordinates it is NaN.  The full
    LoopResult of every level is retained in results, parallel to rows.
    """
    validate_params(params)
    cls = classify(params)
    rows = []
    results = []
    warm = []
    for eps in eps_list:
        T = float(eps) if T_rule == "eps" else float(T_rule)
        result = loop_search(params, float(eps), T=T, n=n, seed=seed,
                             n_starts=n_starts, warm_starts=warm, nsub=nsub,
                             tol=tol, reference=reference)
        ratio = math.nan
        energy = math.nan
        try:
            floor = min(ENERGY_FLOOR, 1e-3 * eps ** 5)
            orat = obstruction_ratio(result.trajectory, params,
                                     energy_floor=floor)
            energy = orat.z4_energy
            if orat.defined:
                ratio = orat.ratio
        except DegenerateParams:
            pass
        rows.append(SweepRow(
            eps=float(eps), T=T, objective=result.objective,
            defect=result.defect, feasible=result.feasible,
            nontrivial=result.nontrivial, ratio=ratio, z4_energy=energy,
            n_feasible_starts=sum(1 for s in result.start_summaries
                                  if s[2])))
        results.append(result)
        warm = [np.clip(result.controls.ravel(), -eps, eps)] \
            if result.objective > 0.0 else []
    objectives = [r.objective for r in rows]
    nonincreasing = all(objectives[i + 1] <= objectives[i] + 1e-8
                        for i in range(len(objectives) - 1))
    final_small = bool(objectives) and objectives[-1] < NONTRIVIAL_SIZE
    return SweepResult(params=params, classification=cls, rows=rows,
                       objectives_nonincreasing=nonincreasing,
                       final_below_threshold=final_small,
                       verdict=_sweep_verdict(cls, rows, nonincreasing,
                                              final_small),
                       results=results)
