"""Linear programs over bounded variables, solved by the built-in simplex.

A :class:`LinearProgram` stores a dense row matrix, per-row sense and
right-hand side, and per-variable bounds.  :func:`solve_lp` converts it
to the uniform slack form expected by the kernel in
:mod:`ucinfer._simplex`: one slack per row with bounds ``[0, inf)`` for
``<=`` rows, ``(-inf, 0]`` for ``>=`` rows and ``[0, 0]`` for ``=`` rows.

Returned duals follow the shadow-price convention: ``duals[i]`` is the
derivative of the optimal objective with respect to ``rhs[i]``.  For a
minimization this means binding ``<=`` rows carry non-positive duals and
binding ``>=`` rows non-negative ones.
"""

from dataclasses import dataclass, field

import numpy as np

from ._simplex import simplex_default, simplex_jit, simplex_numpy
from .errors import (LpValidationError, SimplexIterationLimit,
                     SimplexNumericalError)

LE = 0
GE = 1
EQ = 2

_SENSE_NAMES = {LE: "<=", GE: ">=", EQ: "="}


@dataclass(frozen=True)
class LinearProgram:
    """min c.x  s.t.  A x (sense) b,  lo <= x <= hi."""

    c: np.ndarray
    A: np.ndarray
    sense: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    var_names: tuple = ()
    row_names: tuple = ()

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]


@dataclass
class LpSolution:
    status: str                 # optimal | infeasible | unbounded
    primal: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    iterations: int


class LpBuilder:
    """Incremental assembly of a LinearProgram with named columns/rows."""

    def __init__(self):
        self._obj = []
        self._lo = []
        self._hi = []
        self._vnames = []
        self._rows = []          # (coef dict, sense, rhs)
        self._rnames = []

    def add_var(self, lo=0.0, hi=np.inf, obj=0.0, name=None):
        j = len(self._obj)
        self._obj.append(float(obj))
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        self._vnames.append(name if name is not None else f"x{j}")
        return j

    def add_row(self, coefs, sense, rhs, name=None):
        """coefs: iterable of (var_index, coefficient)."""
        i = len(self._rows)
        self._rows.append((list(coefs), int(sense), float(rhs)))
        self._rnames.append(name if name is not None else f"c{i}")
        return i

    @property
    def n_vars(self):
        return len(self._obj)

    def build(self) -> LinearProgram:
        n = len(self._obj)
        m = len(self._rows)
        A = np.zeros((m, n))
        sense = np.empty(m, dtype=np.int8)
        b = np.empty(m)
        for i, (coefs, sns, rhs) in enumerate(self._rows):
            for j, a in coefs:
                A[i, j] += a
            sense[i] = sns
            b[i] = rhs
        lp = LinearProgram(
            c=np.asarray(self._obj, dtype=np.float64),
            A=A,
            sense=sense,
            b=b,
            lo=np.asarray(self._lo, dtype=np.float64),
            hi=np.asarray(self._hi, dtype=np.float64),
            var_names=tuple(self._vnames),
            row_names=tuple(self._rnames),
        )
        validate_lp(lp)
        return lp


def validate_lp(lp: LinearProgram) -> None:
    n, m = lp.n_vars, lp.n_rows
    if lp.A.shape != (m, n):
        raise LpValidationError(
            f"A has shape {lp.A.shape}, expected ({m}, {n})")
    for nm, arr, size in (("c", lp.c, n), ("sense", lp.sense, m),
                          ("b", lp.b, m), ("lo", lp.lo, n), ("hi", lp.hi, n)):
        if arr.shape != (size,):
            raise LpValidationError(f"{nm} has shape {arr.shape}, "
                                    f"expected ({size},)")
    if not np.all(np.isfinite(lp.c)):
        raise LpValidationError("objective contains NaN or inf")
    if not np.all(np.isfinite(lp.A)):
        raise LpValidationError("constraint matrix contains NaN or inf")
    if not np.all(np.isfinite(lp.b)):
        raise LpValidationError("rhs contains NaN or inf")
    if np.any(np.isnan(lp.lo)) or np.any(np.isnan(lp.hi)):
        raise LpValidationError("bounds contain NaN")
    if np.any(lp.lo > lp.hi):
        j = int(np.argmax(lp.lo > lp.hi))
        raise LpValidationError(f"variable {j}: lower bound {lp.lo[j]} "
                                f"exceeds upper bound {lp.hi[j]}")
    bad = ~np.isin(lp.sense, (LE, GE, EQ))
    if np.any(bad):
        raise LpValidationError(f"unknown sense code in rows "
                                f"{np.nonzero(bad)[0].tolist()}")


_STATUS = {0: "optimal", 1: "infeasible", 2: "unbounded"}


def _certify_primal(lp: LinearProgram, x: np.ndarray, tol: float) -> bool:
    """Check a claimed-optimal point against the original rows and bounds.

    Healthy solves land within machine noise of feasibility; a corrupted
    basis misses by orders of magnitude, so the margin is loose.
    """
    if not np.all(np.isfinite(x)):
        return False
    atol = 10.0 * tol * (1.0 + float(np.max(np.abs(lp.b))))
    if np.any(x < lp.lo - atol) or np.any(x > lp.hi + atol):
        return False
    r = lp.A @ x
    le, ge, eq = lp.sense == LE, lp.sense == GE, lp.sense == EQ
    return not (np.any(r[le] > lp.b[le] + atol)
                or np.any(r[ge] < lp.b[ge] - atol)
                or np.any(np.abs(r[eq] - lp.b[eq]) > atol))


def _solve_bounds_only(lp, kernel=None):
    # No rows: each variable independently sits at its cheapest bound.
    n = lp.n_vars
    x = np.empty(n)
    for j in range(n):
        if lp.c[j] > 0.0:
            if not np.isfinite(lp.lo[j]):
                return LpSolution("unbounded", None, -np.inf, None, None, 0)
            x[j] = lp.lo[j]
        elif lp.c[j] < 0.0:
            if not np.isfinite(lp.hi[j]):
                return LpSolution("unbounded", None, -np.inf, None, None, 0)
            x[j] = lp.hi[j]
        else:
            if np.isfinite(lp.lo[j]):
                x[j] = lp.lo[j] if (not np.isfinite(lp.hi[j])
                                    or -lp.lo[j] <= lp.hi[j]) else lp.hi[j]
            elif np.isfinite(lp.hi[j]):
                x[j] = lp.hi[j]
            else:
                x[j] = 0.0
    return LpSolution("optimal", x, float(lp.c @ x), np.zeros(0),
                      lp.c.copy(), 0)


def solve_lp(lp: LinearProgram, tol_feas: float = 1e-7,
             max_iter: int | None = None, bland_after: int = 1000,
             kernel=None, crash=None) -> LpSolution:
    """Solve with the selected backend kernel (numba by default).

    ``kernel`` overrides the backend, mainly for cross-backend tests:
    pass :data:`ucinfer.lp.KERNEL_NUMPY` or :data:`ucinfer.lp.KERNEL_NUMBA`.
    ``crash`` optionally names, per row, a variable to open the basis
    with (-1 for none); it is used only when that variable's column is a
    unit column whose implied value fits its bounds, so it can change
    the pivot path but never the solved problem.
    Raises :class:`SimplexIterationLimit` when the pivot budget runs out.
    """
    validate_lp(lp)
    n, m = lp.n_vars, lp.n_rows
    if m == 0:
        return _solve_bounds_only(lp)
    if kernel is None:
        kernel = simplex_default
    if max_iter is None:
        max_iter = 50_000 + 50 * (n + m)
    if crash is None:
        crash = np.full(m, -1, dtype=np.int64)

    lo = np.empty(n + m)
    hi = np.empty(n + m)
    lo[:n] = lp.lo
    hi[:n] = lp.hi
    for i in range(m):
        if lp.sense[i] == LE:
            lo[n + i], hi[n + i] = 0.0, np.inf
        elif lp.sense[i] == GE:
            lo[n + i], hi[n + i] = -np.inf, 0.0
        else:
            lo[n + i], hi[n + i] = 0.0, 0.0

    AT = np.ascontiguousarray(lp.A.T, dtype=np.float64)
    b = lp.b.astype(np.float64)
    c = lp.c.astype(np.float64)

    # The pivot loop runs entirely in floating point; rare degenerate
    # tie patterns can leave the working basis near-singular, either
    # raising at a refactorization or, worse, returning a wildly
    # infeasible point labeled optimal.  Every optimal claim is
    # therefore certified against the original rows and bounds, and a
    # failed attempt falls through a fixed ladder of safer settings
    # (no crash basis, earlier Bland pivoting, tighter refreshes, then
    # the plain numpy kernel, whose different rounding breaks the tie
    # pattern).  The ladder depends only on the LP, so solves stay
    # deterministic.
    nocrash = np.full(m, -1, dtype=np.int64)
    attempts = [
        (kernel, np.asarray(crash, dtype=np.int64), int(bland_after), 100),
        (kernel, nocrash, min(200, int(bland_after)), 25),
    ]
    if kernel is not simplex_numpy:
        attempts.append((simplex_numpy, nocrash,
                         min(200, int(bland_after)), 25))
    result = None
    for kern, cr, ba, rf in attempts:
        try:
            status, x, y, z, iters = kern(AT, b, c, lo, hi, cr,
                                          float(tol_feas), 1e-9, ba, rf,
                                          int(max_iter))
        except np.linalg.LinAlgError:
            continue
        if status != 0 or _certify_primal(lp, x[:n], tol_feas):
            result = (status, x, y, z, iters)
            break
    if result is None:
        raise SimplexNumericalError(
            f"no settings produced a certified simplex solution "
            f"({m} rows, {n} columns)")
    status, x, y, z, iters = result

    if status == 3:
        raise SimplexIterationLimit(
            f"simplex exceeded {max_iter} iterations "
            f"({m} rows, {n} columns)")
    name = _STATUS[int(status)]
    if name != "optimal":
        return LpSolution(name, None,
                          -np.inf if name == "unbounded" else np.nan,
                          None, None, int(iters))
    primal = x[:n].copy()
    return LpSolution("optimal", primal, float(lp.c @ primal), y.copy(),
                      z[:n].copy(), int(iters))


KERNEL_NUMPY = simplex_numpy
KERNEL_NUMBA = simplex_jit
KERNEL_DEFAULT = simplex_default
