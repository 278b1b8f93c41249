"""Resistive-force model of a planar two-link magnetic swimmer.

The swimmer is two rigid slender links of common length ``ell`` joined by a
torsional spring of stiffness ``kappa``.  The steered link carries a permanent
magnetic moment of magnitude ``m2`` and defines the body orientation ``theta``;
the trailing link carries moment ``m1`` and makes the relative (shape) angle
``alpha`` with it.  Both moments point transverse to their link.  An external
field with components ``(h_perp, h_par)`` in the frame of the steered link
exerts torques ``m2*h_par`` on the steered link and
``m1*(h_par*cos(alpha) + h_perp*sin(alpha))`` on the trailing one.

Each link is dragged anisotropically: coefficient ``xi`` along the link and
``eta`` across it.  Balancing drag against the magnetic and elastic torques
gives a linear system ``A(alpha) qdot = k(alpha) + B(alpha) u`` for the body
velocities, so the dynamics are affine in the two field components.

Geometry, with ``t1 = (cos(theta), sin(theta))`` and ``n1`` its left normal:
the reference point ``(x, y)`` sits on the steered link (midpoint by default),
the joint lies behind it at ``(x, y) + c*ell*t1``, the steered link spans the
joint to the free end ahead of it, and the trailing link extends backwards
from the joint along ``-t2`` where ``t2`` points along ``theta + alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveParameter, SingularResistance, ZeroMagnetization

# Joint position along the steered link, in units of ell, for each choice of
# reference point.  "midpoint" is the calibrated default; the other two are
# kept for sensitivity checks and give different Taylor data.
REFERENCE_OFFSETS = {
    "midpoint": -0.5,
    "joint": 0.0,
    "free_end": -1.0,
}
DEFAULT_REFERENCE = "midpoint"

RCOND_FLOOR = 1e-10


@dataclass(frozen=True)
class PhysParams:
    """Physical parameters: link length, drag pair, stiffness, moments."""

    ell: float
    xi: float
    eta: float
    kappa: float
    m1: float
    m2: float

    def astuple(self):
        return (self.ell, self.xi, self.eta, self.kappa, self.m1, self.m2)


@dataclass(frozen=True)
class SwimmerState:
    """Configuration (x, y, theta, alpha) of the swimmer."""

    x: float
    y: float
    theta: float
    alpha: float

    def as_array(self):
        return np.array([self.x, self.y, self.theta, self.alpha], dtype=float)

    @classmethod
    def from_array(cls, z):
        x, y, theta, alpha = (float(v) for v in z)
        return cls(x, y, theta, alpha)


@dataclass(frozen=True)
class ControlInput:
    """Field components (h_perp, h_par) in the steered-link frame."""

    h_perp: float
    h_par: float

    @property
    def sup_norm(self):
        return max(abs(self.h_perp), abs(self.h_par))

    def as_array(self):
        return np.array([self.h_perp, self.h_par], dtype=float)


@dataclass(frozen=True)
class FieldEval:
    """Drift and control fields at one state, lab frame and body table."""

    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    ftable: np.ndarray


def validate_params(params):
    """Check positivity of ell, xi, eta, kappa and nonzero magnetizations."""
    for name in ("ell", "xi", "eta", "kappa"):
        v = getattr(params, name)
        if not math.isfinite(v) or v <= 0.0:
            raise NonPositiveParameter(name, v)
    for name in ("m1", "m2"):
        v = getattr(params, name)
        if not math.isfinite(v) or v == 0.0:
            raise ZeroMagnetization(name, v)
    return params


def _reference_offset(reference):
    try:
        return REFERENCE_OFFSETS[reference]
    except KeyError:
        raise ValueError(
            f"unknown reference point {reference!r}, "
            f"expected one of {sorted(REFERENCE_OFFSETS)}") from None


def _resistance_rows(alpha, sa, ca, params, c):
    """Rows of A, B, k in any commutative ring containing the inputs.

    ``sa`` and ``ca`` must be sin(alpha) and cos(alpha) in that ring.  Used
    with floats for simulation and with truncated power series for Taylor
    extraction, so only +, -, * on the inputs are allowed here.
    """
    ell, xi, eta = params.ell, params.xi, params.eta
    l2 = ell * ell
    l3 = l2 * ell

    # Transverse-drag tensor of the trailing link in steered-link axes.
    d11 = xi * (ca * ca) + eta * (sa * sa)
    d12 = (xi - eta) * (ca * sa)
    d22 = xi * (sa * sa) + eta * (ca * ca)

    a11 = xi * ell + ell * d11
    a12 = ell * d12
    a13 = l2 * (c * d12 + 0.5 * eta * sa)
    a14 = l2 * (0.5 * eta * sa)
    a22 = eta * ell + ell * d22
    a23 = eta * l2 * (c + 0.5) + l2 * (c * d22 - 0.5 * eta * ca)
    a24 = l2 * (-0.5 * eta * ca)
    a33 = (eta * l3 * (c * c + c + 1.0 / 3.0)
           + l3 * (c * c * d22 - c * eta * ca + eta / 3.0))
    a34 = l3 * (eta / 3.0 - 0.5 * c * eta * ca)
    a44 = l3 * (eta / 3.0)

    a_rows = [
        [a11, a12, a13, a14],
        [a12, a22, a23, a24],
        [a13, a23, a33, a34],
        [a14, a24, a34, a44],
    ]
    # Columns ordered (h_par, h_perp): torque on the steered link comes from
    # h_par only, the trailing link sees the field rotated by alpha.
    m1, m2 = params.m1, params.m2
    b_rows = [
        [0.0, 0.0],
        [0.0, 0.0],
        [m2 + m1 * ca, m1 * sa],
        [m1 * ca, m1 * sa],
    ]
    k_row = [0.0, 0.0, 0.0, -params.kappa * alpha]
    return a_rows, b_rows, k_row


def resistance_system(alpha, params, reference=DEFAULT_REFERENCE):
    """Assemble (A, B, k) at shape angle alpha.

    A is symmetric positive definite for valid parameters; B has columns for
    (h_par, h_perp); k is the elastic restoring term.  Raises
    SingularResistance when A is ill-conditioned beyond ``RCOND_FLOOR``.
    """
    c = _reference_offset(reference)
    sa, ca = math.sin(alpha), math.cos(alpha)
    a_rows, b_rows, k_row = _resistance_rows(alpha, sa, ca, params, c)
    a = np.array(a_rows, dtype=float)
    b = np.array(b_rows, dtype=float)
    k = np.array(k_row, dtype=float)
    rcond = 1.0 / np.linalg.cond(a)
    if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SingularResistance(rcond if np.isfinite(rcond) else 0.0)
    return a, b, k


def body_velocity(alpha, u, params, reference=DEFAULT_REFERENCE):
    """Velocities (vx, vy, theta_dot, alpha_dot) in the steered-link frame."""
    a, b, k = resistance_system(alpha, params, reference)
    rhs = k + b @ np.array([u.h_par, u.h_perp])
    return np.linalg.solve(a, rhs)


def dynamics(state, u, params, reference=DEFAULT_REFERENCE):
    """Lab-frame state derivative; affine in the control u."""
    vb = body_velocity(state.alpha, u, params, reference)
    ct, st = math.cos(state.theta), math.sin(state.theta)
    return np.array([
        ct * vb[0] - st * vb[1],
        st * vb[0] + ct * vb[1],
        vb[2],
        vb[3],
    ])


def f_table(alpha, params, reference=DEFAULT_REFERENCE):
    """Body-frame field table, shape (3, 4).

    Row 0 is the elastic drift, rows 1 and 2 the responses to unit h_par and
    unit h_perp.  Entry [i, j] is the j-th velocity component of channel i.
    """
    a, b, k = resistance_system(alpha, params, reference)
    rhs = np.column_stack([k, b[:, 0], b[:, 1]])
    return np.linalg.solve(a, rhs).T


def field_eval(state, params, reference=DEFAULT_REFERENCE):
    """Drift and control vector fields at ``state`` in the lab frame."""
    table = f_table(state.alpha, params, reference)
    ct, st = math.cos(state.theta), math.sin(state.theta)
    rot = np.array([[ct, -st], [st, ct]])
    fields = []
    for row in table:
        lab = row.copy()
        lab[:2] = rot @ row[:2]
        fields.append(lab)
    return FieldEval(f0=fields[0], f1=fields[1], f2=fields[2], ftable=table)
