"""Normal coordinates, derived constants, and the obstruction functional.

The linear change (theta, alpha) -> (z3, z4) with

    z4 = alpha / b4,
    z3 = g * (b4*theta - b3*alpha),   g = 8*(m1 - m2) / (a2*(m1 + m2)),

turns the small-state dynamics into a chain: z4 responds directly to the
bending control and z3 integrates z4.  The gain of that chain is exactly
b4^2, so in the rescaled coordinate z3n = z3/b4^2 the identity
d/dt z3n = z4 * (1 + corrections) holds with corrections vanishing at the
origin.  All quadratic coefficients below are expressed against z3n.

Least squares over sampled small states and controls identifies c1, c2, c3
in xdot = c3*z4^2 + c1*z3n*H + c2*z4*H + h.o.t., where H is the bending
channel (h_par).  The combination c0 = c3 + a2*c2 - c1 is the coefficient
of z4^2 in the derivative of

    zeta = x - c1*z3n*z4 - (1/2)*c2*z4^2,

and has the closed form c0 = 108*kappa*(m2^2 - m1^2)*(eta - xi) /
(ell^8 * eta^3 * xi).  Its sign is therefore fixed by (m2^2 - m1^2)(eta - xi),
and it vanishes exactly when eta = xi or |m1| = |m2|.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import DegenerateParams, PoorFit
from .expansion import closed_form_constants
from .model import ControlInput, PhysParams, SwimmerState, dynamics, validate_params

POOR_FIT_TOL = 1e-3
ENERGY_FLOOR = 1e-14
# Base sampling amplitude for identify_c123.  1e-3 leaves quartic residue
# right at the degenerate-composite tolerance for moderate parameter
# scales; 5e-4 buys a 16x margin while staying far above roundoff.
FIT_AMPLITUDE = 5e-4


@dataclass(frozen=True)
class NormalState:
    """Positions plus the chained shape/orientation coordinates."""

    x: float
    y: float
    z3: float
    z4: float


@dataclass(frozen=True)
class C123Fit:
    c1: float
    c2: float
    c3: float
    residual: float


@dataclass(frozen=True)
class DerivedConstants:
    """Leading model constants plus the identified quadratic coefficients.

    c1, c2, c3 (and their composite c0 check) require the normal
    coordinates, which exist only when m1 != m2 and m1 + m2 != 0; otherwise
    they are NaN and ``available`` is False with ``note`` saying why.  The
    c0 field always holds the closed form.
    """

    a1: float
    a2: float
    b1: float
    b2: float
    b3: float
    b4: float
    c1: float
    c2: float
    c3: float
    c0: float
    q: float
    fit_residual: float
    available: bool
    note: str

    @property
    def c0_composite(self):
        return self.c3 + self.a2 * self.c2 - self.c1


def c0_closed_form(params):
    l, xi, eta, kap, m1, m2 = params.astuple()
    return 108.0 * kap * (m2 * m2 - m1 * m1) * (eta - xi) / (l ** 8 * eta ** 3 * xi)


def stlc_threshold(params):
    """Control amplitude below which the obstruction operates."""
    validate_params(params)
    return 2.0 * params.kappa * abs(params.m1 + params.m2) / abs(params.m1 * params.m2)


def _chart_note(params):
    if params.m1 == params.m2:
        return "m1 == m2: b4 = 0, normal coordinates undefined"
    if params.m1 + params.m2 == 0.0:
        return "m1 + m2 == 0: z3 coefficient diverges"
    return ""


def _require_chart(params):
    note = _chart_note(params)
    if note:
        raise DegenerateParams(note)


def to_normal(state, params):
    """Map a swimmer state to normal coordinates; x, y pass through."""
    _require_chart(params)
    k = closed_form_constants(params)
    g = 8.0 * (params.m1 - params.m2) / (k["a2"] * (params.m1 + params.m2))
    z4 = state.alpha / k["b4"]
    z3 = g * (k["b4"] * state.theta - k["b3"] * state.alpha)
    return NormalState(x=state.x, y=state.y, z3=z3, z4=z4)


def from_normal(ns, params):
    """Inverse of to_normal."""
    _require_chart(params)
    k = closed_form_constants(params)
    g = 8.0 * (params.m1 - params.m2) / (k["a2"] * (params.m1 + params.m2))
    alpha = k["b4"] * ns.z4
    theta = ns.z3 / (g * k["b4"]) + k["b3"] * ns.z4
    return SwimmerState(x=ns.x, y=ns.y, theta=theta, alpha=alpha)


def _regression_system(params, h, consts):
    """Sampled xdot rows and basis columns at amplitude h."""
    b4sq = consts["b4"] ** 2
    grid = (-h, -0.5 * h, 0.0, 0.5 * h, h)
    ctrl = (-h, 0.0, h)
    rows = []
    ys = []
    for z3v in grid:
        for z4v in grid:
            state = from_normal(NormalState(0.0, 0.0, z3v, z4v), params)
            for up in ctrl:
                for uq in ctrl:
                    xdot = dynamics(state, ControlInput(up, uq), params)[0]
                    rows.append([z4v * z4v, (z3v / b4sq) * uq, z4v * uq])
                    ys.append(xdot)
    return np.array(rows), np.array(ys)


def identify_c123(params, base_amplitude=FIT_AMPLITUDE, fit_tol=POOR_FIT_TOL):
    """Quadratic coefficients of xdot by two-amplitude regression.

    Fits {z4^2, z3n*H, z4*H} at amplitudes h and h/2.  The sampling grid is
    sign-symmetric, so odd-degree contamination is orthogonal to the basis
    and the leading fit bias is quadratic in the amplitude; the combination
    (4c(h/2) - c(h))/3 removes it.  The residual is taken from the h/2
    system against the extrapolated coefficients, relative to the sample
    norm.  Raises PoorFit above fit_tol: that signals either a missing
    basis term or a coordinate-convention mismatch.
    """
    validate_params(params)
    _require_chart(params)
    consts = closed_form_constants(params)
    h = base_amplitude
    x_h, y_h = _regression_system(params, h, consts)
    x_h2, y_h2 = _regression_system(params, 0.5 * h, consts)
    c_h = np.linalg.lstsq(x_h, y_h, rcond=None)[0]
    c_h2 = np.linalg.lstsq(x_h2, y_h2, rcond=None)[0]
    c = (4.0 * c_h2 - c_h) / 3.0
    resid = float(np.linalg.norm(x_h2 @ c - y_h2) / np.linalg.norm(y_h2))
    if not np.isfinite(resid) or resid > fit_tol:
        raise PoorFit(resid, fit_tol)
    return C123Fit(c1=float(c[1]), c2=float(c[2]), c3=float(c[0]),
                   residual=resid)


def derived_constants(params, strict=True):
    """All derived constants for a parameter set.

    For m1 == m2 the normal coordinates do not exist: with strict=True this
    raises DegenerateParams, otherwise the c-fields come back NaN with
    available=False.  For m1 + m2 == 0 (where q = 0 and c0 = 0) the result
    is always returned in flagged form, since the classification side needs
    those values.
    """
    validate_params(params)
    k = closed_form_constants(params)
    q = stlc_threshold(params)
    c0 = c0_closed_form(params)
    note = _chart_note(params)
    if note:
        if strict and params.m1 == params.m2:
            raise DegenerateParams(note)
        nan = math.nan
        return DerivedConstants(a1=k["a1"], a2=k["a2"], b1=k["b1"],
                                b2=k["b2"], b3=k["b3"], b4=k["b4"],
                                c1=nan, c2=nan, c3=nan, c0=c0, q=q,
                                fit_residual=nan, available=False, note=note)
    fit = identify_c123(params)
    return DerivedConstants(a1=k["a1"], a2=k["a2"], b1=k["b1"], b2=k["b2"],
                            b3=k["b3"], b4=k["b4"], c1=fit.c1, c2=fit.c2,
                            c3=fit.c3, c0=c0, q=q, fit_residual=fit.residual,
                            available=True, note="")


@functools.lru_cache(maxsize=64)
def _cached_constants(params_tuple):
    return derived_constants(PhysParams(*params_tuple))


def cached_constants(params):
    """derived_constants with memoization on the parameter tuple."""
    return _cached_constants(params.astuple())


def zeta(state, params, constants=None):
    """The almost-conserved displacement functional.

    zeta = x - c1*z3n*z4 - (1/2)*c2*z4^2 with z3n = z3/b4^2; along any
    trajectory its derivative is c0*z4^2 plus remainders that are small for
    small states and controls.
    """
    if constants is None:
        constants = cached_constants(params)
    if not constants.available:
        raise DegenerateParams(constants.note)
    ns = to_normal(state, params)
    z3n = ns.z3 / constants.b4 ** 2
    return ns.x - constants.c1 * z3n * ns.z4 - 0.5 * constants.c2 * ns.z4 ** 2


@dataclass(frozen=True)
class ObstructionRatio:
    delta_zeta: float
    z4_energy: float
    ratio: float
    defined: bool


def _dense_times(traj, density=10):
    n = max(2, density * (len(traj.t) - 1))
    if n % 2 == 1:
        n += 1
    return np.linspace(traj.t[0], traj.t[-1], n + 1)


def normal_path(traj, params, density=10):
    """Sampled (t, z3n, z4) along a trajectory's dense output."""
    _require_chart(params)
    k = closed_form_constants(params)
    g = 8.0 * (params.m1 - params.m2) / (k["a2"] * (params.m1 + params.m2))
    ts = _dense_times(traj, density)
    states = traj.state(ts)
    z4 = states[:, 3] / k["b4"]
    z3 = g * (k["b4"] * states[:, 2] - k["b3"] * states[:, 3])
    return ts, z3 / k["b4"] ** 2, z4


def obstruction_ratio(traj, params, constants=None, energy_floor=ENERGY_FLOOR,
                      density=10):
    """Net zeta change per unit of shape energy along a trajectory.

    The energy integral uses composite Simpson quadrature on the dense
    output at ``density`` times the step resolution.  Ratios below
    energy_floor are flagged undefined rather than amplified; studies that
    integrate deliberately tiny trajectories can lower the floor.
    """
    if constants is None:
        constants = cached_constants(params)
    ts, _, z4 = normal_path(traj, params, density)
    energy = float(simpson(z4 * z4, x=ts))
    start = SwimmerState.from_array(traj.y[0])
    end = SwimmerState.from_array(traj.y[-1])
    dz = zeta(end, params, constants) - zeta(start, params, constants)
    if energy < energy_floor:
        return ObstructionRatio(delta_zeta=dz, z4_energy=energy,
                                ratio=math.nan, defined=False)
    return ObstructionRatio(delta_zeta=dz, z4_energy=energy,
                            ratio=dz / energy, defined=True)
