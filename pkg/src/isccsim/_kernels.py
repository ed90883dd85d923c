"""Hot numeric kernels, numba-jitted with a pure-python/numpy fallback.

The JIT path is the default.  Set ``ISCCSIM_DISABLE_NUMBA=1`` in the
environment to select the fallback path (same source, uncompiled); the
benchmark under ``benchmarks/`` compares the two.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("ISCCSIM_DISABLE_NUMBA", "0") != "1"

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


_JIT_OPTS = dict(cache=True, nogil=True)


@njit(**_JIT_OPTS)
def _chol_lower(A, L):
    """In-place lower Cholesky of SPD ``A`` into ``L``. Returns False if not PD."""
    n = A.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return True


@njit(**_JIT_OPTS)
def _chol_solve(L, b, x):
    """Solve L L^T x = b given the lower factor."""
    n = L.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]


@njit(**_JIT_OPTS)
def _constraint_slacks(v, S, caps, c_lin, tau, has_lin, budget, slacks):
    """Slacks s_i = -g_i(v) for ball, quadratic caps and the linear halfspace.

    Layout: slacks[0] = ball, slacks[1..J] = caps, slacks[J+1] = halfspace.
    Returns the minimum slack.
    """
    J = S.shape[0]
    smin = budget - v @ v
    slacks[0] = smin
    for j in range(J):
        sj = caps[j] - v @ (S[j] @ v)
        slacks[1 + j] = sj
        if sj < smin:
            smin = sj
    if has_lin:
        sl = c_lin @ v - tau
        slacks[1 + J] = sl
        if sl < smin:
            smin = sl
    else:
        slacks[1 + J] = 1.0
    return smin


@njit(**_JIT_OPTS)
def barrier_maximize(Q, t, S, caps, c_lin, tau, has_lin, budget, v0,
                     eps_gap, max_newton):
    """Log-barrier solver for the per-terminal beam QCQP in real coordinates.

    maximize   -v'Qv + 2 t'v
    subject to v'v <= budget,  v'S[j]v <= caps[j],  c_lin'v >= tau.

    All arrays float64; ``Q`` symmetric PSD, shape (n, n); ``S`` shape (J, n, n).
    ``v0`` must be strictly feasible.  Returns (v, status, kkt_residual,
    newton_steps); status 0 = converged, 1 = v0 not strictly feasible,
    2 = Newton iteration cap hit (best iterate returned).
    """
    n = v0.shape[0]
    J = S.shape[0]
    m = 1 + J + (1 if has_lin else 0)

    v = v0.copy()
    slacks = np.empty(1 + J + 1)
    smin = _constraint_slacks(v, S, caps, c_lin, tau, has_lin, budget, slacks)
    if smin <= 0.0:
        return v0.copy(), 1, np.inf, 0

    grad = np.empty(n)
    hess = np.empty((n, n))
    Lf = np.empty((n, n))
    dv = np.empty(n)
    vtrial = np.empty(n)
    strial = np.empty(1 + J + 1)

    tb = 1.0
    mu = 20.0
    total_newton = 0
    status = 0
    gscale = 1.0 + np.sqrt(t @ t) + np.abs(Q).max()

    while True:
        # centering: Newton on  tb*(v'Qv - 2t'v) - sum log s_i
        for _ in range(max_newton):
            total_newton += 1
            _constraint_slacks(v, S, caps, c_lin, tau, has_lin, budget, slacks)

            for i in range(n):
                grad[i] = 0.0
                for jdx in range(n):
                    hess[i, jdx] = 0.0
            # objective part
            Qv = Q @ v
            for i in range(n):
                grad[i] = tb * (2.0 * Qv[i] - 2.0 * t[i])
                for jdx in range(n):
                    hess[i, jdx] = tb * 2.0 * Q[i, jdx]
            # ball barrier
            s0 = slacks[0]
            for i in range(n):
                gi = 2.0 * v[i]
                grad[i] += gi / s0
                for jdx in range(n):
                    hess[i, jdx] += (gi * 2.0 * v[jdx]) / (s0 * s0)
                hess[i, i] += 2.0 / s0
            # quadratic caps
            for j in range(J):
                sj = slacks[1 + j]
                Sv = S[j] @ v
                for i in range(n):
                    gi = 2.0 * Sv[i]
                    grad[i] += gi / sj
                    for jdx in range(n):
                        hess[i, jdx] += (gi * 2.0 * Sv[jdx]) / (sj * sj) \
                            + 2.0 * S[j][i, jdx] / sj
            # halfspace
            if has_lin:
                sl = slacks[1 + J]
                for i in range(n):
                    grad[i] += -c_lin[i] / sl
                    for jdx in range(n):
                        hess[i, jdx] += (c_lin[i] * c_lin[jdx]) / (sl * sl)
            # tiny ridge keeps the factorization PD in flat directions
            ridge = 1e-12 * (1.0 + tb)
            for i in range(n):
                hess[i, i] += ridge

            ok = _chol_lower(hess, Lf)
            if not ok:
                for i in range(n):
                    hess[i, i] += 1e-6 * (1.0 + tb)
                ok = _chol_lower(hess, Lf)
                if not ok:
                    status = 2
                    break
            _chol_solve(Lf, -grad, dv)

            # a small Newton decrement alone can mask a large gradient along a
            # near-active constraint normal; require scaled stationarity too
            lam2 = -(grad @ dv)
            gnorm = np.sqrt(grad @ grad)
            if lam2 / 2.0 <= 1e-12 and gnorm <= 1e-8 * tb * gscale:
                break

            # backtracking: keep strictly feasible, then Armijo decrease
            alpha = 1.0
            feasible = False
            for _bt in range(70):
                for i in range(n):
                    vtrial[i] = v[i] + alpha * dv[i]
                sm = _constraint_slacks(vtrial, S, caps, c_lin, tau, has_lin,
                                        budget, strial)
                if sm > 0.0:
                    feasible = True
                    break
                alpha *= 0.5
            if not feasible:
                break

            phi0 = tb * (v @ (Q @ v) - 2.0 * (t @ v))
            phi0 -= np.log(slacks[0])
            for j in range(J):
                phi0 -= np.log(slacks[1 + j])
            if has_lin:
                phi0 -= np.log(slacks[1 + J])

            gdv = grad @ dv
            accepted = False
            for _bt in range(70):
                for i in range(n):
                    vtrial[i] = v[i] + alpha * dv[i]
                sm = _constraint_slacks(vtrial, S, caps, c_lin, tau, has_lin,
                                        budget, strial)
                if sm > 0.0:
                    phi1 = tb * (vtrial @ (Q @ vtrial) - 2.0 * (t @ vtrial))
                    phi1 -= np.log(strial[0])
                    for j in range(J):
                        phi1 -= np.log(strial[1 + j])
                    if has_lin:
                        phi1 -= np.log(strial[1 + J])
                    if phi1 <= phi0 + 0.25 * alpha * gdv:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break
            for i in range(n):
                v[i] = vtrial[i]
            if total_newton >= max_newton * 12:
                status = 2
                break

        if status == 2:
            break
        if m / tb <= eps_gap:
            break
        tb *= mu
        if tb > 1e14:
            break

    # KKT residual from barrier multipliers lambda_i = 1/(tb * s_i)
    _constraint_slacks(v, S, caps, c_lin, tau, has_lin, budget, slacks)
    lam_ball = 1.0 / (tb * slacks[0])
    r = 2.0 * (Q @ v) - 2.0 * t + lam_ball * 2.0 * v
    for j in range(J):
        lam_j = 1.0 / (tb * slacks[1 + j])
        r += lam_j * 2.0 * (S[j] @ v)
    if has_lin:
        lam_l = 1.0 / (tb * slacks[1 + J])
        r += lam_l * (-c_lin)
    scale = 1.0 + np.sqrt(t @ t) + np.abs(Q).max()
    kkt = np.sqrt(r @ r) / scale + m / tb
    return v, status, kkt, total_newton


@njit(**_JIT_OPTS)
def _chol_lower_complex(A, L):
    """In-place lower Cholesky of Hermitian PD ``A``; False if not PD."""
    n = A.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * np.conj(L[j, k])
            if i == j:
                d = s.real
                if d <= 0.0:
                    return False
                L[i, i] = np.sqrt(d)
            else:
                L[i, j] = s / L[j, j]
    return True


@njit(**_JIT_OPTS)
def rate_quadforms(g, sigma_b2):
    """SINR quadratic forms q[l, k] = g_lk^H D_lk^{-1} g_lk for all pairs.

    ``g[l, k]`` is the effective M-vector H_lk^H w_k.  Uses one Cholesky of
    the all-signal covariance per BS and the rank-one downdate identity
    q = x / (1 - x) with x = g^H S^{-1} g.
    """
    L, K, M = g.shape
    q = np.empty((L, K))
    S = np.empty((M, M), dtype=np.complex128)
    low = np.empty((M, M), dtype=np.complex128)
    y = np.empty(M, dtype=np.complex128)
    for l in range(L):
        for i in range(M):
            for j in range(M):
                S[i, j] = 0.0
            S[i, i] = sigma_b2
        for k in range(K):
            for i in range(M):
                gi = g[l, k, i]
                for j in range(M):
                    S[i, j] += gi * np.conj(g[l, k, j])
        ok = _chol_lower_complex(S, low)
        if not ok:
            for i in range(M):
                S[i, i] += 1e-14 * sigma_b2 + 1e-300
            _chol_lower_complex(S, low)
        for k in range(K):
            # forward solve L y = g
            for i in range(M):
                s = g[l, k, i]
                for j in range(i):
                    s -= low[i, j] * y[j]
                y[i] = s / low[i, i]
            x = 0.0
            for i in range(M):
                x += (y[i].real * y[i].real + y[i].imag * y[i].imag)
            if x >= 1.0:
                x = 1.0 - 1e-16
            q[l, k] = x / (1.0 - x)
    return q


@njit(**_JIT_OPTS)
def capacity_water_level(tvals, cvals, fmec, rho, cap):
    """Multiplier for the box+capacity proximal step of the per-BS update.

    Minimizes sum_k c_k*w_k + (rho/2)(w_k - t_k)^2 over w in [0,1]^K with
    sum_k fmec_k*w_k <= cap.  Returns (w, lam).
    """
    K = tvals.shape[0]
    w = np.empty(K)
    for k in range(K):
        wk = tvals[k] - cvals[k] / rho
        w[k] = min(1.0, max(0.0, wk))
    used = 0.0
    for k in range(K):
        used += fmec[k] * w[k]
    if used <= cap:
        return w, 0.0

    # bisection on the capacity multiplier; usage is non-increasing in lam
    lo = 0.0
    hi = 1.0
    for _ in range(200):
        over = False
        used = 0.0
        for k in range(K):
            wk = tvals[k] - (cvals[k] + hi * fmec[k]) / rho
            wk = min(1.0, max(0.0, wk))
            used += fmec[k] * wk
        if used > cap:
            hi *= 2.0
            over = True
        if not over:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        used = 0.0
        for k in range(K):
            wk = tvals[k] - (cvals[k] + mid * fmec[k]) / rho
            wk = min(1.0, max(0.0, wk))
            used += fmec[k] * wk
        if used > cap:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * (1.0 + hi):
            break
    lam = hi
    for k in range(K):
        wk = tvals[k] - (cvals[k] + lam * fmec[k]) / rho
        w[k] = min(1.0, max(0.0, wk))
    return w, lam
