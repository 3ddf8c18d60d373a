"""Two-phase primal simplex for bounded variables, dense arithmetic.

The kernel solves

    min c.x   s.t.   A x + s = b,   lo <= (x, s) <= hi

where ``A`` holds only the structural columns and is handed to the
kernel transposed (``AT``, shape (n, m), C order) so that fetching a
column of ``A`` is a contiguous read; one slack per row and the phase-1
artificials are represented implicitly (their columns are unit
vectors), which keeps pricing at O(m n) instead of O(m (n + 2m)).
Sense encoding lives in the slack bounds: ``[0, inf)`` for ``<=`` rows,
``(-inf, 0]`` for ``>=`` rows, ``[0, 0]`` for ``=`` rows (see
:mod:`ucinfer.lp`).

Conventions (all deterministic):

- Variables whose bounds strictly straddle zero start "parked" at zero
  (nonbasic, enterable in both directions); others start at the finite
  bound nearest zero.  Each row opens its basis with the crash-hint
  column when that is a unit column whose implied value fits its bounds,
  else with its slack when the residual fits the slack bounds, else with
  a phase-1 artificial.
- Dantzig pricing, first-maximum tie-break on the reduced-cost
  violation.
- Ratio-test ties resolved toward the largest pivot magnitude (first
  occurrence); under Bland's rule, toward the smallest variable index.
- Bland's rule engaged after ``bland_after`` consecutive degenerate
  pivots (degenerate: step length <= 1e-9).
- Basis inverse rebuilt every ``refactor_every`` pivots and again before
  optimality is declared, so the returned point comes from a freshly
  factorized basis.

Status codes: 0 optimal, 1 infeasible, 2 unbounded, 3 iteration limit.
"""

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA, jit

# nonbasic-at-lower / nonbasic-at-upper / basic / nonbasic parked at zero
_AT_LO = 0
_AT_UP = 1
_BASIC = 2
_PARKED = 3

_TOL_DEGEN = 1e-9
_TOL_PIVOT = 1e-11


def _simplex_core(AT, b, c, lo, hi, crash, tol_feas, tol_piv, bland_after,
                  refactor_every, max_iter):
    n, m = AT.shape
    ns = n + m                   # structural + slack
    n2 = ns + m                  # + artificial

    lof = np.empty(n2)
    hif = np.empty(n2)
    for j in range(ns):
        lof[j] = lo[j]
        hif[j] = hi[j]

    xval = np.zeros(n2)
    vstat = np.empty(n2, dtype=np.int8)
    for j in range(ns):
        lj = lof[j]
        hj = hif[j]
        if lj < 0.0 < hj:
            xval[j] = 0.0
            vstat[j] = _PARKED
        elif lj >= 0.0:
            xval[j] = lj
            vstat[j] = _AT_LO
        else:
            xval[j] = hj
            vstat[j] = _AT_UP

    resid = b - np.dot(xval[:n], AT)
    for i in range(m):
        resid[i] -= xval[n + i]

    basis = np.empty(m, dtype=np.int64)
    Binv = np.zeros((m, m))
    sigma = np.ones(m)
    for i in range(m):
        js = n + i
        ja = ns + i
        # fixed artificial unless this row turns out to need one
        lof[ja] = 0.0
        hif[ja] = 0.0
        xval[ja] = 0.0
        vstat[ja] = _AT_LO

        jc = crash[i]
        placed = False
        if 0 <= jc < n and vstat[jc] != _BASIC:
            aij = AT[jc, i]
            if abs(aij) > 1e-9:
                only = True
                for i2 in range(m):
                    if i2 != i and AT[jc, i2] != 0.0:
                        only = False
                        break
                if only:
                    val = (resid[i] + aij * xval[jc]) / aij
                    if lof[jc] - tol_feas <= val <= hif[jc] + tol_feas:
                        for i2 in range(m):
                            resid[i2] = resid[i2] - AT[jc, i2] * (
                                min(max(val, lof[jc]), hif[jc]) - xval[jc])
                        basis[i] = jc
                        xval[jc] = min(max(val, lof[jc]), hif[jc])
                        vstat[jc] = _BASIC
                        Binv[i, i] = 1.0 / aij
                        placed = True
        if placed:
            continue
        r = resid[i] + xval[js]
        if lof[js] - tol_feas <= r <= hif[js] + tol_feas:
            basis[i] = js
            xval[js] = min(max(r, lof[js]), hif[js])
            vstat[js] = _BASIC
            Binv[i, i] = 1.0
        else:
            gap_val = resid[i]
            sigma[i] = 1.0 if gap_val >= 0.0 else -1.0
            basis[i] = ja
            xval[ja] = sigma[i] * gap_val
            vstat[ja] = _BASIC
            lof[ja] = 0.0
            hif[ja] = np.inf
            Binv[i, i] = sigma[i]
    bscale = 1.0 + np.max(np.abs(b)) if m > 0 else 1.0

    cstruct = np.zeros(n)
    cart = np.ones(m)

    iters = 0
    y = np.zeros(m)
    z = np.zeros(n2)
    w = np.zeros(m)
    for phase in range(1, 3):
        if phase == 2:
            feas1 = 0.0
            for i in range(ns, n2):
                feas1 += xval[i]
            if feas1 > tol_feas * bscale:
                return 1, xval[:ns].copy(), y, z[:ns].copy(), iters
            cstruct = c.copy()
            cart = np.zeros(m)
            for j in range(ns, n2):
                hif[j] = 0.0
                if vstat[j] != _BASIC:
                    xval[j] = 0.0
                    vstat[j] = _AT_LO

        bland = False
        stall = 0
        since_refactor = 0
        want_refactor = False
        while True:
            if want_refactor:
                B = np.zeros((m, m))
                for k in range(m):
                    col = basis[k]
                    if col < n:
                        for i in range(m):
                            B[i, k] = AT[col, i]
                    elif col < ns:
                        B[col - n, k] = 1.0
                    else:
                        B[col - ns, k] = sigma[col - ns]
                Binv = np.ascontiguousarray(np.linalg.inv(B))
                xnb = xval.copy()
                for k in range(m):
                    xnb[basis[k]] = 0.0
                rhs = b - np.dot(xnb[:n], AT)
                for i in range(m):
                    rhs[i] -= xnb[n + i]
                    rhs[i] -= sigma[i] * xnb[ns + i]
                xB = np.dot(Binv, rhs)
                for k in range(m):
                    xval[basis[k]] = xB[k]
                since_refactor = 0
                want_refactor = False

            iters += 1
            if iters > max_iter:
                return 3, xval[:ns].copy(), y, z[:ns].copy(), iters

            cB = np.empty(m)
            for i in range(m):
                col = basis[i]
                if col < n:
                    cB[i] = cstruct[col]
                elif col < ns:
                    cB[i] = 0.0
                else:
                    cB[i] = cart[col - ns]
            y = np.dot(cB, Binv)
            z[:n] = cstruct - np.dot(AT, y)
            for i in range(m):
                z[n + i] = -y[i]
                z[ns + i] = cart[i] - sigma[i] * y[i]

            # entering choice
            j = -1
            if bland:
                for jj in range(n2):
                    st = vstat[jj]
                    if st == _BASIC or hif[jj] <= lof[jj]:
                        continue
                    zj = z[jj]
                    if (st == _AT_LO or st == _PARKED) and zj < -tol_piv:
                        j = jj
                        break
                    if (st == _AT_UP or st == _PARKED) and zj > tol_piv:
                        j = jj
                        break
            else:
                best = tol_piv
                for jj in range(n2):
                    st = vstat[jj]
                    if st == _BASIC or hif[jj] <= lof[jj]:
                        continue
                    zj = z[jj]
                    if (st == _AT_LO or st == _PARKED) and -zj > best:
                        best = -zj
                        j = jj
                    elif (st == _AT_UP or st == _PARKED) and zj > best:
                        best = zj
                        j = jj

            if j < 0:
                if since_refactor > 0:
                    # refresh and re-price before declaring optimality
                    want_refactor = True
                    continue
                break

            direction = 1.0
            if vstat[j] == _AT_UP or (vstat[j] == _PARKED and z[j] > 0.0):
                direction = -1.0

            if j < n:
                w = np.dot(Binv, AT[j])
            elif j < ns:
                w = Binv[:, j - n].copy()
            else:
                w = sigma[j - ns] * np.ascontiguousarray(Binv[:, j - ns])

            # ratio test over the basic variables
            if direction > 0.0:
                t_flip = hif[j] - xval[j]
            else:
                t_flip = xval[j] - lof[j]
            t_block = np.inf
            for i in range(m):
                st = direction * w[i]
                col = basis[i]
                if st > _TOL_PIVOT:
                    lb = lof[col]
                    if lb > -np.inf:
                        t = (xval[col] - lb) / st
                        if t < 0.0:
                            t = 0.0
                        if t < t_block:
                            t_block = t
                elif st < -_TOL_PIVOT:
                    ub = hif[col]
                    if ub < np.inf:
                        t = (xval[col] - ub) / st
                        if t < 0.0:
                            t = 0.0
                        if t < t_block:
                            t_block = t

            t_star = min(t_flip, t_block)
            if not np.isfinite(t_star):
                return 2, xval[:ns].copy(), y, z[:ns].copy(), iters

            if t_flip <= t_block:
                # entering variable runs to its far bound; basis unchanged
                xval[j] = hif[j] if direction > 0.0 else lof[j]
                vstat[j] = _AT_UP if direction > 0.0 else _AT_LO
                for i in range(m):
                    xval[basis[i]] -= t_flip * direction * w[i]
                if t_flip <= _TOL_DEGEN:
                    stall += 1
                else:
                    stall = 0
            else:
                # leaving row among ties at t_block
                window = t_block + 1e-9 * (1.0 + t_block)
                r = -1
                best_mag = -1.0
                best_idx = np.int64(1 << 60)
                for i in range(m):
                    st = direction * w[i]
                    col = basis[i]
                    t = np.inf
                    if st > _TOL_PIVOT:
                        if lof[col] > -np.inf:
                            t = (xval[col] - lof[col]) / st
                    elif st < -_TOL_PIVOT:
                        if hif[col] < np.inf:
                            t = (xval[col] - hif[col]) / st
                    if t < 0.0:
                        t = 0.0
                    if t <= window:
                        if bland:
                            if col < best_idx:
                                best_idx = col
                                r = i
                        else:
                            mag = abs(w[i])
                            if mag > best_mag:
                                best_mag = mag
                                r = i
                if r < 0 or abs(w[r]) < _TOL_PIVOT:
                    # pivot too small to trust: rebuild and retry
                    want_refactor = True
                    stall += 1
                    if stall >= bland_after:
                        bland = True
                    continue

                leave = basis[r]
                for i in range(m):
                    xval[basis[i]] -= t_star * direction * w[i]
                xval[j] = xval[j] + direction * t_star
                if direction * w[r] > 0.0:
                    xval[leave] = lof[leave]
                    vstat[leave] = _AT_LO
                else:
                    xval[leave] = hif[leave]
                    vstat[leave] = _AT_UP
                vstat[j] = _BASIC
                basis[r] = j

                piv = w[r]
                for k in range(m):
                    Binv[r, k] /= piv
                for i in range(m):
                    if i != r:
                        wi = w[i]
                        if wi != 0.0:
                            for k in range(m):
                                Binv[i, k] -= wi * Binv[r, k]

                since_refactor += 1
                if t_star <= _TOL_DEGEN:
                    stall += 1
                else:
                    stall = 0
                if since_refactor >= refactor_every:
                    want_refactor = True

            if stall >= bland_after:
                bland = True

    return 0, xval[:ns].copy(), y, z[:ns].copy(), iters


simplex_numpy = _simplex_core
simplex_jit = jit(_simplex_core) if HAVE_NUMBA else _simplex_core
simplex_default = simplex_jit if USE_NUMBA else simplex_numpy
