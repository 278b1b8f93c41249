"""Exception types shared across the package."""


class MicroswimError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveParameter(MicroswimError):
    """A geometric or drag parameter that must be positive is not."""

    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__(f"parameter {name!r} must be positive and finite, got {value!r}")


class ZeroMagnetization(MicroswimError):
    """A link magnetization is zero (or not finite)."""

    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__(f"magnetization {name!r} must be nonzero and finite, got {value!r}")


class SingularResistance(MicroswimError):
    """The assembled resistance matrix is numerically singular."""

    def __init__(self, rcond):
        self.rcond = rcond
        super().__init__(f"resistance matrix is numerically singular (rcond={rcond:.3e})")


class InconsistentMethods(MicroswimError):
    """Finite-difference and series-arithmetic derivatives disagree."""

    def __init__(self, order, fd_value, jet_value, rel_err):
        self.order = order
        self.fd_value = fd_value
        self.jet_value = jet_value
        self.rel_err = rel_err
        super().__init__(
            f"order-{order} coefficient disagrees between methods: "
            f"series={jet_value!r}, finite-difference={fd_value!r} "
            f"(relative error {rel_err:.3e})")


class OracleMismatch(MicroswimError):
    """A computed Taylor coefficient does not match its closed form."""

    def __init__(self, coefficient, computed, expected, report=None):
        self.coefficient = coefficient
        self.computed = computed
        self.expected = expected
        self.report = report
        super().__init__(
            f"coefficient {coefficient}: computed {computed!r}, expected {expected!r}")


class DegenerateParams(MicroswimError):
    """Parameters for which the normal-form change of coordinates is undefined."""


class PoorFit(MicroswimError):
    """Least-squares identification left a residual above tolerance."""

    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(f"fit residual {residual:.3e} exceeds tolerance {tol:.3e}")


class StepSizeUnderflow(MicroswimError):
    """Adaptive integration could not meet the tolerance with a representable step."""

    def __init__(self, t, step):
        self.t = t
        self.step = step
        super().__init__(f"step size underflow at t={t!r} (h={step:.3e})")


class NonFiniteState(MicroswimError):
    """Integration produced a NaN or infinite state component."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"non-finite state encountered at t={t!r}")


class UndefinedRatio(MicroswimError):
    """The displacement ratio is undefined because the denominator vanishes."""

    def __init__(self, energy):
        self.energy = energy
        super().__init__(f"shape-energy integral {energy:.3e} too small for a ratio")


class NoFeasibleLoop(MicroswimError):
    """No optimized start reduced the periodicity defect below tolerance.

    Reported through LoopResult.no_feasible_loop rather than raised: the
    trivial loop always exists, so the search still returns a result.
    """

    def __init__(self, eps, best_defect):
        self.eps = eps
        self.best_defect = best_defect
        super().__init__(
            f"no loop with defect below tolerance at bound {eps!r} "
            f"(best defect {best_defect:.3e})")
