"""Taylor coefficients of the body-frame field table in the shape angle.

Coefficients are extracted twice with unrelated methods: truncated power
series pushed through the same assembly code as the float path, and central
finite differences with Richardson extrapolation.  The two must agree before
a value is reported, which guards against both stencil bugs and assembly
bugs.  Small-angle structure of the table:

    f0 = (a1*al^2, O(al^2), (a2/2)*al, -a2*al) + higher order
    f1 = (b1*al, b2, b3, b4) + higher order
    f2 = O(al) in every component

with a1 = 3k/(l^2 eta), a2 = 24k/(l^3 eta), b2 = 3(m1+m2)/(4 l^2 eta),
b3 = 3(5 m2 - 3 m1)/(2 l^3 eta), b4 = 12(m1 - m2)/(l^3 eta) and
b1 = 3(m2 - m1)/(2 l^2 eta) - 3(m1 + m2)/(8 l^2 xi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentMethods, OracleMismatch
from .model import DEFAULT_REFERENCE, _reference_offset, _resistance_rows, f_table

MAX_FD_ORDER = 4

# Central stencils lose accuracy to roundoff as the order grows; the base
# step is widened so the Richardson table stays above the noise floor.
_FD_BASE_STEP = {0: 1e-3, 1: 1e-3, 2: 1e-3, 3: 5e-3, 4: 2e-2}


class Jet:
    """Taylor polynomial of one variable, truncated at a fixed order.

    Arithmetic operates on the coefficient array; sin and cos use the
    derivative recurrence so no symbolic machinery is involved.
    """

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)

    @classmethod
    def variable(cls, value, order):
        c = np.zeros(order + 1)
        c[0] = value
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, order):
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @property
    def order(self):
        return len(self.c) - 1

    def coeff(self, k):
        return float(self.c[k])

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(float(other), self.order)

    def __add__(self, other):
        other = self._lift(other)
        return Jet(self.c + other.c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        other = self._lift(other)
        return Jet(self.c - other.c)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        n = self.order
        out = np.convolve(self.c, other.c)[:n + 1]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        n = self.order
        q = np.zeros(n + 1)
        b0 = other.c[0]
        for k in range(n + 1):
            acc = self.c[k]
            for j in range(k):
                acc -= q[j] * other.c[k - j]
            q[k] = acc / b0
        return Jet(q)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def sin_cos(self):
        n = self.order
        s = np.zeros(n + 1)
        co = np.zeros(n + 1)
        s[0] = math.sin(self.c[0])
        co[0] = math.cos(self.c[0])
        for k in range(n):
            ds = 0.0
            dc = 0.0
            for j in range(k + 1):
                ds += (j + 1) * self.c[j + 1] * co[k - j]
                dc -= (j + 1) * self.c[j + 1] * s[k - j]
            s[k + 1] = ds / (k + 1)
            co[k + 1] = dc / (k + 1)
        return Jet(s), Jet(co)

    def __repr__(self):
        return f"Jet({self.c.tolist()})"


def _jet_solve(a_rows, rhs_cols):
    """Gaussian elimination over jets; pivots on the constant term."""
    n = len(a_rows)
    m = len(rhs_cols[0])
    aug = [list(a_rows[i]) + [rhs_cols[i][j] for j in range(m)] for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col].c[0]))
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1.0 / aug[col][col]
        aug[col] = [e * inv for e in aug[col]]
        for r in range(n):
            if r != col:
                factor = aug[r][col]
                aug[r] = [er - factor * ec for er, ec in zip(aug[r], aug[col])]
    return [[aug[i][n + j] for j in range(m)] for i in range(n)]


def f_table_any(alpha, params, reference=DEFAULT_REFERENCE):
    """f_table accepting a float or a Jet for the shape angle.

    Floats take the numpy path; jets run the identical assembly through
    series arithmetic and return a nested 3x4 list of jets.
    """
    if not isinstance(alpha, Jet):
        return f_table(alpha, params, reference)
    c = _reference_offset(reference)
    sa, ca = alpha.sin_cos()
    a_rows, b_rows, k_row = _resistance_rows(alpha, sa, ca, params, c)
    lift = lambda v: v if isinstance(v, Jet) else Jet.constant(float(v), alpha.order)
    a_rows = [[lift(v) for v in row] for row in a_rows]
    rhs = [[lift(k_row[i]), lift(b_rows[i][0]), lift(b_rows[i][1])] for i in range(4)]
    sol = _jet_solve(a_rows, rhs)
    return [[sol[comp][chan] for comp in range(4)] for chan in range(3)]


def _fd_derivative(f, order, h):
    if order == 0:
        return f(0.0)
    if order == 1:
        return (f(h) - f(-h)) / (2.0 * h)
    if order == 2:
        return (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h)
    if order == 3:
        return (f(2 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2 * h)) / (2.0 * h ** 3)
    if order == 4:
        return (f(2 * h) - 4.0 * f(h) + 6.0 * f(0.0) - 4.0 * f(-h) + f(-2 * h)) / h ** 4
    raise ValueError(f"finite differences not implemented for order {order}")


def _fd_coeff(f, order, h):
    """Richardson table over step halvings; returns (coefficient, tail)."""
    if order == 0:
        return f(0.0), 0.0
    levels = 3
    tab = [[_fd_derivative(f, order, h / 2 ** i)] for i in range(levels)]
    for j in range(1, levels):
        fac = 4.0 ** j
        for i in range(j, levels):
            tab[i].append((fac * tab[i][j - 1] - tab[i - 1][j - 1]) / (fac - 1.0))
    best = tab[levels - 1][levels - 1]
    tail = abs(best - tab[levels - 1][levels - 2])
    return best / math.factorial(order), tail / math.factorial(order)


def taylor_coeff(f, order, step=None, rel_tol=1e-6):
    """Taylor coefficient of f at 0 by two independent methods.

    f must accept a float or a Jet.  Returns (value, error_estimate) where
    the value comes from the series route.  Raises InconsistentMethods when
    the routes differ by more than rel_tol relative to max(1, magnitudes).
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    jet_out = f(Jet.variable(0.0, order))
    if isinstance(jet_out, Jet):
        jet_val = jet_out.coeff(order)
    else:
        jet_val = float(jet_out) if order == 0 else 0.0
    if order > MAX_FD_ORDER:
        return jet_val, math.nan
    h = step if step is not None else _FD_BASE_STEP[order]
    fd_val, tail = _fd_coeff(f, order, h)
    scale = max(1.0, abs(jet_val), abs(fd_val))
    gap = abs(jet_val - fd_val)
    if gap > rel_tol * scale:
        raise InconsistentMethods(order, fd_val, jet_val, gap / scale)
    return jet_val, gap + tail


@dataclass(frozen=True)
class CoefficientCheck:
    function: str
    order: int
    computed: float
    expected: float
    error_estimate: float
    ok: bool
    inconclusive: bool


@dataclass(frozen=True)
class ConstantCheck:
    name: str
    computed: float
    expected: float
    ok: bool


@dataclass(frozen=True)
class SlopeCheck:
    function: str
    claimed: int
    slope: float
    ok: bool
    npoints: int


@dataclass
class TaylorReport:
    params: object
    reference: str
    coefficients: list = field(default_factory=list)
    constants: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def ok(self):
        return (all(c.ok for c in self.coefficients)
                and all(c.ok for c in self.constants)
                and all(s.ok for s in self.slopes))

    def failures(self):
        out = [f"{c.function}[{c.order}]" for c in self.coefficients if not c.ok]
        out += [c.name for c in self.constants if not c.ok]
        out += [f"slope({s.function})" for s in self.slopes if not s.ok]
        return out

    def summary(self):
        lines = [f"reference={self.reference} degenerate={self.degenerate}"]
        for c in self.coefficients:
            mark = "ok" if c.ok else "FAIL"
            extra = " (inconclusive error estimate)" if c.inconclusive else ""
            lines.append(
                f"  {c.function} order {c.order}: computed {c.computed:+.9e} "
                f"expected {c.expected:+.9e} [{mark}]{extra}")
        for c in self.constants:
            mark = "ok" if c.ok else "FAIL"
            lines.append(
                f"  constant {c.name}: computed {c.computed:+.9e} "
                f"expected {c.expected:+.9e} [{mark}]")
        for s in self.slopes:
            mark = "ok" if s.ok else "FAIL"
            lines.append(
                f"  remainder {s.function}: slope {s.slope:.3f} "
                f"(claimed >= {s.claimed - 0.1:.1f}, {s.npoints} pts) [{mark}]")
        lines.append("all checks passed" if self.ok else
                     "FAILED: " + ", ".join(self.failures()))
        return "\n".join(lines)


def closed_form_constants(params):
    """Leading coefficients predicted from the resistance assembly."""
    l, xi, eta, kap, m1, m2 = params.astuple()
    l2, l3 = l * l, l ** 3
    return {
        "a1": 3.0 * kap / (l2 * eta),
        "a2": 24.0 * kap / (l3 * eta),
        "b1": 1.5 * (m2 - m1) / (l2 * eta) - 0.375 * (m1 + m2) / (l2 * xi),
        "b2": 0.75 * (m1 + m2) / (l2 * eta),
        "b3": 1.5 * (5.0 * m2 - 3.0 * m1) / (l3 * eta),
        "b4": 12.0 * (m1 - m2) / (l3 * eta),
    }


# (channel, component) -> ([(order, constant name or None)], remainder order).
# None means the coefficient must vanish.
_STRUCTURE = {
    (0, 0): ([(0, None), (1, None), (2, "a1")], 3),
    (0, 1): ([(0, None), (1, None)], 2),
    (0, 2): ([(0, None), (1, "a2/2")], 2),
    (0, 3): ([(0, None), (1, "-a2")], 2),
    (1, 0): ([(0, None), (1, "b1")], 2),
    (1, 1): ([(0, "b2")], 1),
    (1, 2): ([(0, "b3")], 1),
    (1, 3): ([(0, "b4")], 1),
    (2, 0): ([(0, None)], 1),
    (2, 1): ([(0, None)], 1),
    (2, 2): ([(0, None)], 1),
    (2, 3): ([(0, None)], 1),
}


def _expected_value(name, consts):
    if name is None:
        return 0.0
    if name == "a2/2":
        return 0.5 * consts["a2"]
    if name == "-a2":
        return -consts["a2"]
    return consts[name]


def _remainder_slope(fval, computed_coeffs, claimed):
    """Log-log slope of the series remainder over alpha in [1e-4, 1e-1]."""
    alphas = np.logspace(-4, -1, 13)
    pts = []
    for a in alphas:
        rem = fval(a)
        for order, coeff in computed_coeffs:
            rem -= coeff * a ** order
        # below this the remainder is roundoff from the linear solve
        if abs(rem) > 1e-12 * max(1.0, abs(fval(a))):
            pts.append((math.log10(a), math.log10(abs(rem))))
    if len(pts) < 4:
        return math.inf, len(pts)
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope), len(pts)


def expansion_report(params, reference=DEFAULT_REFERENCE, tol=1e-6,
                     raise_on_mismatch=True):
    """Verify the small-angle structure of the field table.

    Each coefficient is computed by taylor_coeff (series + finite differences)
    and compared with its closed form; remainders are slope-checked on a
    log-log fit.  Raises OracleMismatch on the first failed comparison when
    raise_on_mismatch is set, with the full report attached.
    """
    consts = closed_form_constants(params)
    report = TaylorReport(params=params, reference=reference,
                          degenerate=(params.m1 == params.m2))

    for (chan, comp), (orders, rem_order) in sorted(_STRUCTURE.items()):
        name = f"f{chan},{comp + 1}"
        fval = lambda a, chan=chan, comp=comp: f_table_any(a, params, reference)[chan][comp]
        computed_here = []
        for order, cname in orders:
            expected = _expected_value(cname, consts)
            value, err = taylor_coeff(fval, order)
            ok = abs(value - expected) <= tol * max(1.0, abs(expected))
            inconclusive = err >= tol * max(1.0, abs(expected), abs(value))
            report.coefficients.append(CoefficientCheck(
                function=name, order=order, computed=value, expected=expected,
                error_estimate=err, ok=ok, inconclusive=inconclusive))
            computed_here.append((order, value))
        slope, npts = _remainder_slope(fval, computed_here, rem_order)
        report.slopes.append(SlopeCheck(
            function=name, claimed=rem_order, slope=slope,
            ok=slope >= rem_order - 0.1, npoints=npts))

    by_key = {(c.function, c.order): c.computed for c in report.coefficients}
    measured = {
        "a1": by_key[("f0,1", 2)],
        "a2": -by_key[("f0,4", 1)],
        "b1": by_key[("f1,1", 1)],
        "b2": by_key[("f1,2", 0)],
        "b3": by_key[("f1,3", 0)],
        "b4": by_key[("f1,4", 0)],
    }
    for cname, comp_val in measured.items():
        expected = consts[cname]
        ok = abs(comp_val - expected) <= tol * max(1.0, abs(expected))
        report.constants.append(ConstantCheck(cname, comp_val, expected, ok))
    # the same constant enters two components; they must agree with each other
    halves = 2.0 * by_key[("f0,3", 1)]
    ok = abs(halves - measured["a2"]) <= tol * max(1.0, abs(measured["a2"]))
    report.constants.append(ConstantCheck("a2 (cross)", halves, measured["a2"], ok))

    if raise_on_mismatch and not report.ok:
        bad = report.failures()[0]
        for c in report.coefficients:
            if not c.ok:
                raise OracleMismatch(f"{c.function}[{c.order}]", c.computed,
                                     c.expected, report)
        for c in report.constants:
            if not c.ok:
                raise OracleMismatch(c.name, c.computed, c.expected, report)
        raise OracleMismatch(bad, math.nan, math.nan, report)
    return report
