"""Compiled inner loops (numba) for the simulation-heavy routines.

Everything here is a plain-array kernel with scalar state variables; the
public modules own validation, object construction, and bookkeeping.
The general-purpose reference integrator lives in ``dde`` and these
kernels are cross-checked against it in the test suite.
"""

import numba
import numpy as np

JIT = dict(cache=True, nogil=True)


@numba.njit(**JIT)
def sweep_scalar_flow(weights, n_steps, n_tail, h, psi_starts):
    """RK4 on dpsi/dt = sum_m weights[j][m] sin((m+1) psi) for each grid row.

    weights: (n_alpha, n_harm) cosine-weighted amplitudes per grid point.
    psi_starts: (n_alpha,) initial condition per grid point (already
    perturbed by the caller).  Returns (psi_final, psi_tail_mean) arrays,
    the tail mean taken over the last n_tail accepted states.
    """
    n_alpha, n_harm = weights.shape
    finals = np.empty(n_alpha)
    tails = np.empty(n_alpha)
    for i in range(n_alpha):
        w = weights[i]
        p = psi_starts[i]
        acc = 0.0
        for step in range(n_steps):
            k1 = 0.0
            for m in range(n_harm):
                k1 += w[m] * np.sin((m + 1) * p)
            p2 = p + 0.5 * h * k1
            k2 = 0.0
            for m in range(n_harm):
                k2 += w[m] * np.sin((m + 1) * p2)
            p3 = p + 0.5 * h * k2
            k3 = 0.0
            for m in range(n_harm):
                k3 += w[m] * np.sin((m + 1) * p3)
            p4 = p + h * k3
            k4 = 0.0
            for m in range(n_harm):
                k4 += w[m] * np.sin((m + 1) * p4)
            p = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if step >= n_steps - n_tail:
                acc += p
        finals[i] = p
        tails[i] = acc / n_tail
    return finals, tails


@numba.njit(**JIT)
def integrate_planar(x, y, A, B, h, n_steps, record):
    """Fixed-step RK4 for the uncoupled planar oscillator.

    record: preallocated (n_steps + 1, 2) output, record[0] = (x, y)
    on entry is ignored and overwritten.
    """
    BA = B / A
    A2 = A * A
    Bm1 = B - 1.0
    record[0, 0] = x
    record[0, 1] = y
    for i in range(n_steps):
        f = BA * x * x + 2.0 * A * x * y + x * x * y
        k1x = Bm1 * x + A2 * y + f
        k1y = -B * x - A2 * y - f
        cx = x + 0.5 * h * k1x
        cy = y + 0.5 * h * k1y
        f = BA * cx * cx + 2.0 * A * cx * cy + cx * cx * cy
        k2x = Bm1 * cx + A2 * cy + f
        k2y = -B * cx - A2 * cy - f
        cx = x + 0.5 * h * k2x
        cy = y + 0.5 * h * k2y
        f = BA * cx * cx + 2.0 * A * cx * cy + cx * cx * cy
        k3x = Bm1 * cx + A2 * cy + f
        k3y = -B * cx - A2 * cy - f
        cx = x + h * k3x
        cy = y + h * k3y
        f = BA * cx * cx + 2.0 * A * cx * cy + cx * cx * cy
        k4x = Bm1 * cx + A2 * cy + f
        k4y = -B * cx - A2 * cy - f
        x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        record[i + 1, 0] = x
        record[i + 1, 1] = y
    return x, y


@numba.njit(**JIT)
def adjoint_backward_period(Z0, states, A, B, h, n_sub):
    """One backward period of the adjoint equation dZ/dt = -J(x(t))^T Z.

    states: (M+1, 2) one-period forward trajectory at spacing h/... the
    grid is states[k] at t = k*h, M*h = period.  The adjoint is stepped
    backward from t = period to t = 0 with step h, evaluating the
    Jacobian at interpolated midpoints (linear interpolation; the grid is
    fine).  Z samples are written at every n_sub-th node, newest first:
    out[j] = Z(t = (M - j*n_sub) * h).  Returns (Z_final, out).
    """
    M = states.shape[0] - 1
    n_out = M // n_sub + 1
    out = np.empty((n_out, 2))
    zx = Z0[0]
    zy = Z0[1]
    idx = 0
    for k in range(M, -1, -1):
        if k % n_sub == 0:
            out[idx, 0] = zx
            out[idx, 1] = zy
            idx += 1
        if k == 0:
            break
        # step backward from node k to node k-1
        x0 = states[k, 0]
        y0 = states[k, 1]
        xm = 0.5 * (states[k, 0] + states[k - 1, 0])
        ym = 0.5 * (states[k, 1] + states[k - 1, 1])
        x1 = states[k - 1, 0]
        y1 = states[k - 1, 1]
        # dZ/ds = +J(x)^T Z with s = -t (backward in t)
        # J = [[B-1+fx, A^2+fy], [-B-fx, -A^2-fy]]
        fx = 2.0 * (B / A) * x0 + 2.0 * A * y0 + 2.0 * x0 * y0
        fy = 2.0 * A * x0 + x0 * x0
        k1x = (B - 1.0 + fx) * zx + (-B - fx) * zy
        k1y = (A * A + fy) * zx + (-A * A - fy) * zy
        fx = 2.0 * (B / A) * xm + 2.0 * A * ym + 2.0 * xm * ym
        fy = 2.0 * A * xm + xm * xm
        ax = zx + 0.5 * h * k1x
        ay = zy + 0.5 * h * k1y
        k2x = (B - 1.0 + fx) * ax + (-B - fx) * ay
        k2y = (A * A + fy) * ax + (-A * A - fy) * ay
        ax = zx + 0.5 * h * k2x
        ay = zy + 0.5 * h * k2y
        k3x = (B - 1.0 + fx) * ax + (-B - fx) * ay
        k3y = (A * A + fy) * ax + (-A * A - fy) * ay
        fx = 2.0 * (B / A) * x1 + 2.0 * A * y1 + 2.0 * x1 * y1
        fy = 2.0 * A * x1 + x1 * x1
        ax = zx + h * k3x
        ay = zy + h * k3y
        k4x = (B - 1.0 + fx) * ax + (-B - fx) * ay
        k4y = (A * A + fy) * ax + (-A * A - fy) * ay
        zx = zx + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        zy = zy + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return np.array([zx, zy]), out


@numba.njit(inline="always")
def _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, tq, comp):
    """Cubic Hermite read of component ``comp`` at time ``tq``."""
    s = tq * inv_h + t0_idx
    j = int(np.floor(s))
    if j < 0:
        j = 0
    if j > ntot - 2:
        j = ntot - 2
    u = s - j
    u2 = u * u
    u3 = u2 * u
    h00 = 2.0 * u3 - 3.0 * u2 + 1.0
    h10 = u3 - 2.0 * u2 + u
    h01 = -2.0 * u3 + 3.0 * u2
    h11 = u3 - u2
    return (
        h00 * Y[j, comp]
        + h10 * h * Fv[j, comp]
        + h01 * Y[j + 1, comp]
        + h11 * h * Fv[j + 1, comp]
    )


@numba.njit(**JIT)
def integrate_coupled_pair(A, B, K, k1c, tau1, k2c, tau2, tau, h, n_steps,
                           Y, Fv, t0_idx, rec_from):
    """Delay-coupled pair with polynomial coupling on the x equations.

    dx_i/dt = (B-1) x_i + A^2 y_i + f(x_i, y_i)
              + K (k1c * x_j(t - tau - tau1) + k2c * x_j(t - tau - tau2)^2)
    dy_i/dt = -B x_i - A^2 y_i - f(x_i, y_i)

    Y, Fv: (t0_idx + 1 + n_steps, 4) node buffers; rows 0..t0_idx hold the
    initial history (states and derivatives) on the step grid, with node
    t0_idx at t = 0.  Delayed values are read with cubic Hermite
    interpolation.  Records states from step index rec_from onward.
    Returns (rec, ok): ok = False on non-finite blow-up.
    """
    L1 = tau + tau1
    L2 = tau + tau2
    BA = B / A
    A2 = A * A
    Bm1 = B - 1.0
    ntot = Y.shape[0]
    inv_h = 1.0 / h
    x1 = Y[t0_idx, 0]
    y1 = Y[t0_idx, 1]
    x2 = Y[t0_idx, 2]
    y2 = Y[t0_idx, 3]
    nrec = n_steps - rec_from + 1
    rec = np.empty((nrec, 4))
    if rec_from == 0:
        rec[0, 0] = x1
        rec[0, 1] = y1
        rec[0, 2] = x2
        rec[0, 3] = y2
    d1x = d1y = d1u = d1v = 0.0
    d2x = d2y = d2u = d2v = 0.0
    d3x = d3y = d3u = d3v = 0.0
    for n in range(n_steps):
        t = n * h
        sx1 = sy1 = sx2 = sy2 = 0.0
        for stage in range(4):
            if stage == 0:
                ts = t
                cx1 = x1
                cy1 = y1
                cx2 = x2
                cy2 = y2
                w = 1.0
            elif stage == 1:
                ts = t + 0.5 * h
                cx1 = x1 + 0.5 * h * d1x
                cy1 = y1 + 0.5 * h * d1y
                cx2 = x2 + 0.5 * h * d1u
                cy2 = y2 + 0.5 * h * d1v
                w = 2.0
            elif stage == 2:
                ts = t + 0.5 * h
                cx1 = x1 + 0.5 * h * d2x
                cy1 = y1 + 0.5 * h * d2y
                cx2 = x2 + 0.5 * h * d2u
                cy2 = y2 + 0.5 * h * d2v
                w = 2.0
            else:
                ts = t + h
                cx1 = x1 + h * d3x
                cy1 = y1 + h * d3y
                cx2 = x2 + h * d3u
                cy2 = y2 + h * d3v
                w = 1.0
            z1x1 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - L1, 0)
            z1x2 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - L1, 2)
            z2x1 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - L2, 0)
            z2x2 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - L2, 2)
            f1 = BA * cx1 * cx1 + 2.0 * A * cx1 * cy1 + cx1 * cx1 * cy1
            f2 = BA * cx2 * cx2 + 2.0 * A * cx2 * cy2 + cx2 * cx2 * cy2
            dx1 = Bm1 * cx1 + A2 * cy1 + f1 + K * (k1c * z1x2 + k2c * z2x2 * z2x2)
            dy1 = -B * cx1 - A2 * cy1 - f1
            dx2 = Bm1 * cx2 + A2 * cy2 + f2 + K * (k1c * z1x1 + k2c * z2x1 * z2x1)
            dy2 = -B * cx2 - A2 * cy2 - f2
            if stage == 0:
                d1x = dx1
                d1y = dy1
                d1u = dx2
                d1v = dy2
                if n > 0:
                    # node 0 keeps the history's left-derivative
                    Fv[t0_idx + n, 0] = dx1
                    Fv[t0_idx + n, 1] = dy1
                    Fv[t0_idx + n, 2] = dx2
                    Fv[t0_idx + n, 3] = dy2
            elif stage == 1:
                d2x = dx1
                d2y = dy1
                d2u = dx2
                d2v = dy2
            elif stage == 2:
                d3x = dx1
                d3y = dy1
                d3u = dx2
                d3v = dy2
            sx1 += w * dx1
            sy1 += w * dy1
            sx2 += w * dx2
            sy2 += w * dy2
        x1 += h / 6.0 * sx1
        y1 += h / 6.0 * sy1
        x2 += h / 6.0 * sx2
        y2 += h / 6.0 * sy2
        if not (np.isfinite(x1) and np.isfinite(y1) and np.isfinite(x2) and np.isfinite(y2)):
            return rec, False
        Y[t0_idx + n + 1, 0] = x1
        Y[t0_idx + n + 1, 1] = y1
        Y[t0_idx + n + 1, 2] = x2
        Y[t0_idx + n + 1, 3] = y2
        if n + 1 >= rec_from:
            m = n + 1 - rec_from
            rec[m, 0] = x1
            rec[m, 1] = y1
            rec[m, 2] = x2
            rec[m, 3] = y2
    # derivative at the final node, so the buffer is a complete
    # (state, derivative) history for warm restarts
    tend = n_steps * h
    z1x1 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, tend - L1, 0)
    z1x2 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, tend - L1, 2)
    z2x1 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, tend - L2, 0)
    z2x2 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, tend - L2, 2)
    f1 = BA * x1 * x1 + 2.0 * A * x1 * y1 + x1 * x1 * y1
    f2 = BA * x2 * x2 + 2.0 * A * x2 * y2 + x2 * x2 * y2
    Fv[t0_idx + n_steps, 0] = Bm1 * x1 + A2 * y1 + f1 + K * (k1c * z1x2 + k2c * z2x2 * z2x2)
    Fv[t0_idx + n_steps, 1] = -B * x1 - A2 * y1 - f1
    Fv[t0_idx + n_steps, 2] = Bm1 * x2 + A2 * y2 + f2 + K * (k1c * z1x1 + k2c * z2x1 * z2x1)
    Fv[t0_idx + n_steps, 3] = -B * x2 - A2 * y2 - f2
    return rec, True


@numba.njit(**JIT)
def integrate_mean_field_pair(A, B, K, tau, win, h, n_steps, Y, Fv, t0_idx, rec_from):
    """Pair under delayed mean-field feedback on both x equations.

    State: (x1, y1, x2, y2, m) where m is the running mean of x1 + x2
    over the trailing window ``win``:

        dm/dt = (x1(t) + x2(t) - x1(t - win) - x2(t - win)) / win
        dx_i/dt = ... + K * (x1(t - tau) + x2(t - tau) - m)

    Buffers as in ``integrate_coupled_pair`` but with 5 components.
    """
    BA = B / A
    A2 = A * A
    Bm1 = B - 1.0
    ntot = Y.shape[0]
    inv_h = 1.0 / h
    x1 = Y[t0_idx, 0]
    y1 = Y[t0_idx, 1]
    x2 = Y[t0_idx, 2]
    y2 = Y[t0_idx, 3]
    mm = Y[t0_idx, 4]
    nrec = n_steps - rec_from + 1
    rec = np.empty((nrec, 5))
    if rec_from == 0:
        for c in range(5):
            rec[0, c] = Y[t0_idx, c]
    d1_ = np.zeros(5)
    d2_ = np.zeros(5)
    d3_ = np.zeros(5)
    cur = np.empty(5)
    for n in range(n_steps):
        t = n * h
        acc = np.zeros(5)
        for stage in range(4):
            if stage == 0:
                ts = t
                cur[0] = x1
                cur[1] = y1
                cur[2] = x2
                cur[3] = y2
                cur[4] = mm
                w = 1.0
            elif stage == 1:
                ts = t + 0.5 * h
                cur[0] = x1 + 0.5 * h * d1_[0]
                cur[1] = y1 + 0.5 * h * d1_[1]
                cur[2] = x2 + 0.5 * h * d1_[2]
                cur[3] = y2 + 0.5 * h * d1_[3]
                cur[4] = mm + 0.5 * h * d1_[4]
                w = 2.0
            elif stage == 2:
                ts = t + 0.5 * h
                cur[0] = x1 + 0.5 * h * d2_[0]
                cur[1] = y1 + 0.5 * h * d2_[1]
                cur[2] = x2 + 0.5 * h * d2_[2]
                cur[3] = y2 + 0.5 * h * d2_[3]
                cur[4] = mm + 0.5 * h * d2_[4]
                w = 2.0
            else:
                ts = t + h
                cur[0] = x1 + h * d3_[0]
                cur[1] = y1 + h * d3_[1]
                cur[2] = x2 + h * d3_[2]
                cur[3] = y2 + h * d3_[3]
                cur[4] = mm + h * d3_[4]
                w = 1.0
            if tau > 0.0:
                xd1 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - tau, 0)
                xd2 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - tau, 2)
            else:
                xd1 = cur[0]
                xd2 = cur[2]
            xw1 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - win, 0)
            xw2 = _hermite4(Y, Fv, ntot, t0_idx, inv_h, h, ts - win, 2)
            forcing = K * (xd1 + xd2 - cur[4])
            f1 = BA * cur[0] * cur[0] + 2.0 * A * cur[0] * cur[1] + cur[0] * cur[0] * cur[1]
            f2 = BA * cur[2] * cur[2] + 2.0 * A * cur[2] * cur[3] + cur[2] * cur[2] * cur[3]
            dd0 = Bm1 * cur[0] + A2 * cur[1] + f1 + forcing
            dd1 = -B * cur[0] - A2 * cur[1] - f1
            dd2 = Bm1 * cur[2] + A2 * cur[3] + f2 + forcing
            dd3 = -B * cur[2] - A2 * cur[3] - f2
            dd4 = (cur[0] + cur[2] - xw1 - xw2) / win
            if stage == 0:
                d1_[0] = dd0
                d1_[1] = dd1
                d1_[2] = dd2
                d1_[3] = dd3
                d1_[4] = dd4
                if n > 0:
                    # node 0 keeps the history's left-derivative
                    Fv[t0_idx + n, 0] = dd0
                    Fv[t0_idx + n, 1] = dd1
                    Fv[t0_idx + n, 2] = dd2
                    Fv[t0_idx + n, 3] = dd3
                    Fv[t0_idx + n, 4] = dd4
            elif stage == 1:
                d2_[0] = dd0
                d2_[1] = dd1
                d2_[2] = dd2
                d2_[3] = dd3
                d2_[4] = dd4
            elif stage == 2:
                d3_[0] = dd0
                d3_[1] = dd1
                d3_[2] = dd2
                d3_[3] = dd3
                d3_[4] = dd4
            acc[0] += w * dd0
            acc[1] += w * dd1
            acc[2] += w * dd2
            acc[3] += w * dd3
            acc[4] += w * dd4
        x1 += h / 6.0 * acc[0]
        y1 += h / 6.0 * acc[1]
        x2 += h / 6.0 * acc[2]
        y2 += h / 6.0 * acc[3]
        mm += h / 6.0 * acc[4]
        if not (np.isfinite(x1) and np.isfinite(x2) and np.isfinite(mm)):
            return rec, False
        Y[t0_idx + n + 1, 0] = x1
        Y[t0_idx + n + 1, 1] = y1
        Y[t0_idx + n + 1, 2] = x2
        Y[t0_idx + n + 1, 3] = y2
        Y[t0_idx + n + 1, 4] = mm
        if n + 1 >= rec_from:
            m = n + 1 - rec_from
            rec[m, 0] = x1
            rec[m, 1] = y1
            rec[m, 2] = x2
            rec[m, 3] = y2
            rec[m, 4] = mm
    if n_steps > 0:
        # buffer is not reused for restarts; just avoid garbage in the slot
        for c in range(5):
            Fv[t0_idx + n_steps, c] = Fv[t0_idx + n_steps - 1, c]
    return rec, True
