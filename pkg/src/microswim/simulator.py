"""Time integration of the controlled swimmer.

The integrator is an adaptive Dormand-Prince 5(4) pair with the usual FSAL
trick.  Control discontinuities (piecewise-constant signals) are never
stepped over: integration restarts at every breakpoint.  Each accepted step
stores the state at both ends together with the one-sided derivatives, and
dense evaluation uses the cubic Hermite interpolant of those four values,
which is exact at the nodes even where the control jumps.

A fixed-step variant of the same pair exists for convergence-order studies
and to mirror the rollouts used inside the loop optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from .errors import NonFiniteState, StepSizeUnderflow
from .model import DEFAULT_REFERENCE, SwimmerState, _reference_offset, validate_params

TOL_MIN = 1e-12
TOL_MAX = 1e-4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0

# Dormand-Prince 5(4): stage times, stage weights, embedded error weights.
_C = (0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0,
     -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0,
     11.0 / 84.0),
)
_E = (35.0 / 384.0 - 5179.0 / 57600.0, 0.0,
      500.0 / 1113.0 - 7571.0 / 16695.0, 125.0 / 192.0 - 393.0 / 640.0,
      -2187.0 / 6784.0 + 92097.0 / 339200.0, 11.0 / 84.0 - 187.0 / 2100.0,
      -1.0 / 40.0)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Two-channel control (h_perp, h_par) with a declared sup-norm bound."""

    kind: str
    bound: float
    edges: np.ndarray | None = None
    values: np.ndarray | None = None
    amp: tuple = (0.0, 0.0)
    freq: float = 0.0
    phase: tuple = (0.0, 0.0)

    @staticmethod
    def zero():
        return ControlSignal(kind="zero", bound=0.0)

    @staticmethod
    def piecewise_constant(edges, values, bound=None):
        edges = np.asarray(edges, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if edges.ndim != 1 or len(edges) != len(values) + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if values.shape[1] != 2:
            raise ValueError("values must have two columns (h_perp, h_par)")
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if bound is None:
            bound = peak
        elif peak > bound * (1.0 + 1e-12):
            raise ValueError(f"values exceed declared bound {bound!r}")
        return ControlSignal(kind="piecewise_constant", bound=float(bound),
                             edges=edges, values=values)

    @staticmethod
    def sinusoidal(amp_perp, amp_par, freq, phase=(0.0, 0.0), bound=None):
        peak = max(abs(amp_perp), abs(amp_par))
        if bound is None:
            bound = peak
        elif peak > bound * (1.0 + 1e-12):
            raise ValueError(f"amplitudes exceed declared bound {bound!r}")
        return ControlSignal(kind="sinusoidal", bound=float(bound),
                             amp=(float(amp_perp), float(amp_par)),
                             freq=float(freq),
                             phase=(float(phase[0]), float(phase[1])))

    def eval(self, t):
        if self.kind == "zero":
            return np.zeros(2)
        if self.kind == "piecewise_constant":
            i = int(np.searchsorted(self.edges, t, side="right")) - 1
            i = min(max(i, 0), len(self.values) - 1)
            return self.values[i].copy()
        w = 2.0 * math.pi * self.freq
        return np.array([self.amp[0] * math.sin(w * t + self.phase[0]),
                         self.amp[1] * math.sin(w * t + self.phase[1])])

    def breakpoints(self, t0, t1):
        """Interior discontinuity times within (t0, t1)."""
        if self.kind != "piecewise_constant":
            return np.empty(0)
        inner = self.edges[(self.edges > t0) & (self.edges < t1)]
        return np.asarray(inner, dtype=float)

    def is_constant_between_breakpoints(self):
        return self.kind in ("zero", "piecewise_constant")


@dataclass
class Trajectory:
    """Accepted nodes, one-sided derivatives per step, run statistics."""

    t: np.ndarray
    y: np.ndarray
    f_start: np.ndarray
    f_end: np.ndarray
    stats: dict = field(default_factory=dict)
    signal: object = None

    @property
    def final_state(self):
        return SwimmerState.from_array(self.y[-1])

    @property
    def f(self):
        """Derivative at each node (right-limit, left-limit at the end)."""
        return np.vstack([self.f_start, self.f_end[-1]])

    def state(self, tq):
        """Cubic Hermite dense evaluation; accepts a scalar or an array."""
        tq_arr = np.atleast_1d(np.asarray(tq, dtype=float))
        idx = np.searchsorted(self.t, tq_arr, side="right") - 1
        idx = np.clip(idx, 0, len(self.t) - 2)
        t0 = self.t[idx]
        h = self.t[idx + 1] - t0
        s = (tq_arr - t0) / h
        s2 = s * s
        s3 = s2 * s
        h00 = 2.0 * s3 - 3.0 * s2 + 1.0
        h10 = s3 - 2.0 * s2 + s
        h01 = -2.0 * s3 + 3.0 * s2
        h11 = s3 - s2
        out = (h00[:, None] * self.y[idx]
               + (h * h10)[:, None] * self.f_start[idx]
               + h01[:, None] * self.y[idx + 1]
               + (h * h11)[:, None] * self.f_end[idx])
        if np.isscalar(tq) or np.asarray(tq).ndim == 0:
            return out[0]
        return out

    def dense(self, n=401):
        ts = np.linspace(self.t[0], self.t[-1], n)
        return ts, self.state(ts)


def _make_base_rhs(params, reference):
    c = _reference_offset(reference)
    p = params.astuple()

    def base(y, hperp, hpar, out):
        _fast.rhs_into(y, hperp, hpar, p[0], p[1], p[2], p[3], p[4], p[5],
                       c, out)

    return base


def _dp45_stages(base, eval_u, t, h, y, k, yt):
    """Stages 2..7 of the pair; k[0] must hold the derivative at (t, y).

    On return yt holds the fifth-order solution and k[6] its derivative
    (FSAL), ready for reuse as the next first stage.  k[0] is untouched.
    """
    for stage in range(1, 7):
        row = _A[stage]
        yt[:] = y
        for j, aij in enumerate(row):
            if aij != 0.0:
                yt += (h * aij) * k[j]
        u = eval_u(t + _C[stage] * h)
        base(yt, u[0], u[1], k[stage])


def _error_norm(err, y0, y1, atol, rtol):
    # Step control watches theta and alpha only: the right-hand side never
    # reads x or y, so the position is a slaved quadrature and equivariant
    # runs (translated or rotated starts) see identical step sequences.
    sc = atol + rtol * np.maximum(np.abs(y0[2:]), np.abs(y1[2:]))
    return math.sqrt(float(np.mean((err[2:] / sc) ** 2)))


def _initial_step(base, span, y0, f0, u, atol, rtol):
    sc = atol + rtol * np.abs(y0[2:])
    d0 = math.sqrt(float(np.mean((y0[2:] / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((f0[2:] / sc) ** 2)))
    h0 = 1e-6 * span if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = np.empty(4)
    base(y1, u[0], u[1], f1)
    d2 = math.sqrt(float(np.mean(((f1 - f0)[2:] / sc) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6 * span, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span)


def integrate(params, z0, signal, T, tol=1e-10, atol=None,
              reference=DEFAULT_REFERENCE, max_steps=1_000_000):
    """Adaptive integration from t=0 to t=T under the given signal.

    tol is the relative tolerance and must lie in [1e-12, 1e-4]; atol
    defaults to tol.  The per-step error test divides by
    atol + tol * |y| on the shape components (theta, alpha), which drive
    the whole system; see _error_norm.  Raises StepSizeUnderflow or
    NonFiniteState on breakdown.
    """
    validate_params(params)
    if not (TOL_MIN <= tol <= TOL_MAX):
        raise ValueError(f"tol={tol!r} outside [{TOL_MIN}, {TOL_MAX}]")
    if T <= 0.0:
        raise ValueError("T must be positive")
    if atol is None:
        atol = tol
    y0 = z0.as_array() if isinstance(z0, SwimmerState) else \
        np.asarray(z0, dtype=float).copy()
    base = _make_base_rhs(params, reference)
    const_u = signal.is_constant_between_breakpoints()

    seg_edges = np.concatenate([[0.0], signal.breakpoints(0.0, T), [T]])
    ts = [0.0]
    ys = [y0.copy()]
    f_start = []
    f_end = []
    stats = {"steps": 0, "rejected": 0, "nfev": 0, "tol": tol, "atol": atol}

    k = [np.empty(4) for _ in range(7)]
    yt = np.empty(4)
    y = y0.copy()
    for si in range(len(seg_edges) - 1):
        ta, tb = float(seg_edges[si]), float(seg_edges[si + 1])
        span = tb - ta
        u_fixed = signal.eval(0.5 * (ta + tb)) if const_u else None

        def eval_u(tq):
            return u_fixed if const_u else signal.eval(tq)

        t = ta
        u = eval_u(t)
        base(y, u[0], u[1], k[0])
        h = _initial_step(base, span, y, k[0], u, atol, tol)
        stats["nfev"] += 2
        while t < tb - 1e-14 * max(1.0, abs(tb)):
            h = min(h, tb - t)
            if h < 16.0 * np.finfo(float).eps * max(1.0, abs(t)):
                raise StepSizeUnderflow(t, h)
            if stats["steps"] + stats["rejected"] > max_steps:
                raise RuntimeError(f"max_steps={max_steps} exceeded at t={t}")
            _dp45_stages(base, eval_u, t, h, y, k, yt)
            stats["nfev"] += 6
            err = h * (_E[0] * k[0] + _E[2] * k[2] + _E[3] * k[3]
                       + _E[4] * k[4] + _E[5] * k[5] + _E[6] * k[6])
            if not (np.all(np.isfinite(yt)) and np.all(np.isfinite(err))):
                raise NonFiniteState(t)
            enorm = _error_norm(err, y, yt, atol, tol)
            if enorm <= 1.0:
                t = tb if tb - (t + h) < 1e-14 * max(1.0, abs(tb)) else t + h
                ts.append(t)
                ys.append(yt.copy())
                f_start.append(k[0].copy())
                f_end.append(k[6].copy())
                y[:] = yt
                k[0][:] = k[6]
                stats["steps"] += 1
                factor = _MAX_FACTOR if enorm == 0.0 else \
                    min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * enorm ** -0.2))
                h *= factor
            else:
                stats["rejected"] += 1
                h *= max(_MIN_FACTOR, _SAFETY * enorm ** -0.2)
    return Trajectory(t=np.array(ts), y=np.array(ys),
                      f_start=np.array(f_start), f_end=np.array(f_end),
                      stats=stats, signal=signal)


def integrate_fixed(params, z0, signal, T, n_steps,
                    reference=DEFAULT_REFERENCE):
    """Fixed-step fifth-order run on a uniform grid refined by breakpoints.

    No error control; used for convergence-order checks and to reproduce
    optimizer rollouts.  Signal breakpoints are inserted into the grid so
    steps never straddle a control jump.
    """
    validate_params(params)
    if T <= 0.0 or n_steps < 1:
        raise ValueError("need T > 0 and n_steps >= 1")
    y0 = z0.as_array() if isinstance(z0, SwimmerState) else \
        np.asarray(z0, dtype=float).copy()
    base = _make_base_rhs(params, reference)
    grid = np.union1d(np.linspace(0.0, T, n_steps + 1),
                      signal.breakpoints(0.0, T))
    const_u = signal.is_constant_between_breakpoints()

    y = y0.copy()
    k = [np.empty(4) for _ in range(7)]
    yt = np.empty(4)
    ys = [y.copy()]
    f_start = []
    f_end = []
    nfev = 0
    for i in range(len(grid) - 1):
        t, h = grid[i], grid[i + 1] - grid[i]
        tm = t + 0.5 * h

        def eval_u(tq, tm=tm):
            # constant segments read the midpoint so edge nodes are unambiguous
            return signal.eval(tm) if const_u else signal.eval(tq)

        u = eval_u(t)
        base(y, u[0], u[1], k[0])
        _dp45_stages(base, eval_u, t, h, y, k, yt)
        nfev += 7
        if not np.all(np.isfinite(yt)):
            raise NonFiniteState(float(t))
        f_start.append(k[0].copy())
        f_end.append(k[6].copy())
        y[:] = yt
        ys.append(y.copy())
    stats = {"steps": len(grid) - 1, "rejected": 0, "nfev": nfev,
             "tol": None, "atol": None}
    return Trajectory(t=grid.copy(), y=np.array(ys),
                      f_start=np.array(f_start), f_end=np.array(f_end),
                      stats=stats, signal=signal)


def planar_motion(state_row, phi, dx, dy):
    """Apply the rigid motion (rotation phi, translation (dx, dy))."""
    x, y, th, al = state_row
    c, s = math.cos(phi), math.sin(phi)
    return np.array([c * x - s * y + dx, s * x + c * y + dy, th + phi, al])


def equivariance_check(params, z0, signal, T, phi, dx, dy,
                       tol=1e-10, n_samples=101, reference=DEFAULT_REFERENCE):
    """Largest gap between transforming the start and transforming the path.

    Integrates from z0 and from the rigidly moved z0 under the same signal
    and compares the moved first trajectory against the second on a uniform
    sample grid.  The shape dynamics never see (x, y, theta) except through
    the frame rotation, so the gap is integrator noise.
    """
    y0 = z0.as_array() if isinstance(z0, SwimmerState) else \
        np.asarray(z0, dtype=float)
    t1 = integrate(params, y0, signal, T, tol=tol, reference=reference)
    t2 = integrate(params, planar_motion(y0, phi, dx, dy), signal, T,
                   tol=tol, reference=reference)
    ts = np.linspace(0.0, T, n_samples)
    s1 = t1.state(ts)
    s2 = t2.state(ts)
    moved = np.array([planar_motion(row, phi, dx, dy) for row in s1])
    return float(np.max(np.abs(moved - s2)))
