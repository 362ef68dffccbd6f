"""Inner loops: Hermite rows, the Bohmian velocity field, DOPRI5 stepping
and Gauss-Kronrod quadrature of Hermite-pair integrands.

Everything here is scalar-loop code compiled by :func:`bohmtraj._accel.jit`.
The public modules wrap these with validation and friendlier signatures.
"""

import math

import numpy as np

from ._accel import jit

# termination codes shared with dynamics.py
REACHED = 0
NODE_PROXIMITY = 1
STEP_UNDERFLOW = 2
MAX_STEPS = 3


@jit
def hermite_row(z, nmax, h, dh):
    """Fill ``h[n] = H_n(z)`` and ``dh[n] = H_n'(z)`` for n <= nmax."""
    h[0] = 1.0
    dh[0] = 0.0
    if nmax >= 1:
        h[1] = 2.0 * z
        dh[1] = 2.0
    for k in range(1, nmax):
        h[k + 1] = 2.0 * z * h[k] - 2.0 * k * h[k - 1]
        dh[k + 1] = 2.0 * (k + 1) * h[k]


@jit
def term_factors(x, coef, quanta, sqrt_om, h, dh, phi, dphi):
    """Real per-term products c_j K_j prod_k H(z_k) and their x-gradients,
    written into ``phi`` (m,) and ``dphi`` (m, n). The Gaussian is left
    out; it multiplies psi and its gradient by the same real factor plus
    a real multiple of psi, neither of which changes the velocity."""
    m, n = quanta.shape
    nmax = h.shape[1] - 1
    for k in range(n):
        hermite_row(sqrt_om[k] * x[k], nmax, h[k], dh[k])
    for j in range(m):
        prod = coef[j]
        for k in range(n):
            prod *= h[k, quanta[j, k]]
        phi[j] = prod
        for i in range(n):
            d = coef[j] * sqrt_om[i] * dh[i, quanta[j, i]]
            for k in range(n):
                if k != i:
                    d *= h[k, quanta[j, k]]
            dphi[j, i] = d


@jit
def velocity_field(y, t, nblk, field, out):
    """Velocity of ``nblk`` stacked points; returns the smallest density.

    Uses Im(psi* grad psi) = sum_{j<l} sin((E_j - E_l) t)
    (phi_j grad phi_l - phi_l grad phi_j), so pairs of equal energy drop
    out exactly instead of cancelling to rounding level.
    """
    coef, quanta, sqrt_om, om, energies, h, dh, phi, dphi = field
    m, n = quanta.shape
    min_rho = np.inf
    for b in range(nblk):
        x = y[b * n:(b + 1) * n]
        term_factors(x, coef, quanta, sqrt_om, h, dh, phi, dphi)
        re = 0.0
        im = 0.0
        for j in range(m):
            re += phi[j] * math.cos(energies[j] * t)
            im -= phi[j] * math.sin(energies[j] * t)
        g = re * re + im * im
        q = 0.0
        for k in range(n):
            q += om[k] * x[k] * x[k]
        rho = g * math.exp(-q)
        if rho < min_rho:
            min_rho = rho
        for i in range(n):
            out[b * n + i] = 0.0
        if g > 0.0:
            for j in range(m):
                for l in range(j + 1, m):
                    s = math.sin((energies[j] - energies[l]) * t)
                    if s == 0.0:
                        continue
                    for i in range(n):
                        out[b * n + i] += s * (phi[j] * dphi[l, i] - phi[l] * dphi[j, i])
            for i in range(n):
                out[b * n + i] /= g
    return min_rho


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_A71, _A73, _A74, _A75, _A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                                -2187.0 / 6784.0, 11.0 / 84.0)
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0,
                                71.0 / 1920.0, -17253.0 / 339200.0,
                                22.0 / 525.0, -1.0 / 40.0)
# continuous extension (4th order)
_D1 = -12715105075.0 / 11282082432.0
_D3 = 87487479700.0 / 32700410799.0
_D4 = -10690763975.0 / 1880347072.0
_D5 = 701980252875.0 / 199316789632.0
_D6 = -1453857185.0 / 822651844.0
_D7 = 69997945.0 / 29380423.0

_SAFE = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - _BETA * 0.75
_FAC_MIN = 0.2   # largest shrink 5x
_FAC_MAX = 10.0  # largest growth 10x


@jit
def initial_step(y, t, direction, nblk, field, rtol, atol, f0):
    velocity_field(y, t, nblk, field, f0)
    d0 = 0.0
    d1 = 0.0
    for i in range(y.size):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / y.size)
    d1 = math.sqrt(d1 / y.size)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-4
    else:
        h = 0.01 * d0 / d1
    return direction * min(max(h, 1e-8), 0.1)


@jit
def advance(y, t, t_target, state, counters, rtol, atol, guard, hmin,
            max_steps, nblk, field, work, sample_t, samples, isample):
    """Step ``y`` in place from ``t`` to ``t_target`` with DOPRI5.

    ``state`` holds [h, facold, min_density]; ``counters`` holds
    [accepted, rejected, guard_rejections]. Dense-output samples whose time
    falls inside an accepted step are written to ``samples`` starting at row
    ``isample``. Returns (t, next_isample, status).
    """
    n = y.size
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    k5 = work[4]
    k6 = work[5]
    k7 = work[6]
    ytmp = work[7]
    ynew = work[8]
    direction = 1.0 if t_target >= t else -1.0
    h = state[0]
    facold = state[1]
    if h == 0.0 or (h > 0.0) != (direction > 0.0):
        h = initial_step(y, t, direction, nblk, field, rtol, atol, k1)
    rho = velocity_field(y, t, nblk, field, k1)
    if rho < state[2]:
        state[2] = rho
    if rho < guard:
        state[0] = h
        return t, isample, NODE_PROXIMITY
    nsamp = sample_t.size
    status = REACHED
    while direction * (t_target - t) > 0.0:
        if counters[0] >= max_steps:
            status = MAX_STEPS
            break
        remaining = t_target - t
        last = abs(h) >= abs(remaining) * (1.0 - 1e-14)
        hh = remaining if last else h

        for i in range(n):
            ytmp[i] = y[i] + hh * _A21 * k1[i]
        rmin = velocity_field(ytmp, t + _C2 * hh, nblk, field, k2)
        for i in range(n):
            ytmp[i] = y[i] + hh * (_A31 * k1[i] + _A32 * k2[i])
        rmin = min(rmin, velocity_field(ytmp, t + _C3 * hh, nblk, field, k3))
        for i in range(n):
            ytmp[i] = y[i] + hh * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        rmin = min(rmin, velocity_field(ytmp, t + _C4 * hh, nblk, field, k4))
        for i in range(n):
            ytmp[i] = y[i] + hh * (_A51 * k1[i] + _A52 * k2[i]
                                   + _A53 * k3[i] + _A54 * k4[i])
        rmin = min(rmin, velocity_field(ytmp, t + _C5 * hh, nblk, field, k5))
        for i in range(n):
            ytmp[i] = y[i] + hh * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                   + _A64 * k4[i] + _A65 * k5[i])
        rmin = min(rmin, velocity_field(ytmp, t + hh, nblk, field, k6))
        for i in range(n):
            ynew[i] = y[i] + hh * (_A71 * k1[i] + _A73 * k3[i] + _A74 * k4[i]
                                   + _A75 * k5[i] + _A76 * k6[i])
        rmin = min(rmin, velocity_field(ynew, t + hh, nblk, field, k7))

        if not rmin >= guard:
            # a stage landed too close to a node: shrink and retry
            counters[1] += 1
            counters[2] += 1
            h = 0.25 * hh
            if abs(h) < hmin:
                status = NODE_PROXIMITY
                break
            continue

        err = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e = hh * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                      + _E6 * k6[i] + _E7 * k7[i])
            err += (e / sc) ** 2
        err = math.sqrt(err / n)
        if not err == err:
            err = 1e10

        fac11 = err ** _EXPO1 if err > 0.0 else 0.0
        if err <= 1.0:
            fac = fac11 / facold ** _BETA
            fac = min(1.0 / _FAC_MIN, max(1.0 / _FAC_MAX, fac / _SAFE))
            t_new = t_target if last else t + hh
            # dense output for samples inside (t, t_new]
            if isample < nsamp and direction * (sample_t[isample] - t_new) <= 0.0:
                for i in range(n):
                    ydiff = ynew[i] - y[i]
                    bspl = hh * k1[i] - ydiff
                    # reuse ytmp/k2 as interpolant coefficient storage
                    ytmp[i] = ydiff - hh * k7[i] - bspl
                    k2[i] = hh * (_D1 * k1[i] + _D3 * k3[i] + _D4 * k4[i]
                                  + _D5 * k5[i] + _D6 * k6[i] + _D7 * k7[i])
                while isample < nsamp and direction * (sample_t[isample] - t_new) <= 0.0:
                    s = sample_t[isample]
                    if s == t_new:
                        for i in range(n):
                            samples[isample, i] = ynew[i]
                    else:
                        th = (s - t) / hh
                        th1 = 1.0 - th
                        for i in range(n):
                            ydiff = ynew[i] - y[i]
                            bspl = hh * k1[i] - ydiff
                            samples[isample, i] = y[i] + th * (
                                ydiff + th1 * (bspl + th * (ytmp[i] + th1 * k2[i])))
                    isample += 1
            facold = max(err, 1e-4)
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            t = t_new
            counters[0] += 1
            if rmin < state[2]:
                state[2] = rmin
            h = hh / fac
        else:
            counters[1] += 1
            h = hh / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            if abs(h) < hmin:
                status = STEP_UNDERFLOW
                break
    state[0] = h
    state[1] = facold
    return t, isample, status


# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1]
_XGK = np.array([0.991455371120812639206854697526329,
                 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926,
                 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013,
                 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245,
                 0.0])
_WGK = np.array([0.022935322010529224963732008058970,
                 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518,
                 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550,
                 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649,
                 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082,
                0.279705391489276667901467771423780,
                0.381830050505118944950369775488975,
                0.417959183673469387755102040816327])


@jit
def pair_integrand(a, b, sqrt_om, x, h):
    """H_a H_b / [H_a, H_b] in the x variable (z = sqrt(omega) x)."""
    z = sqrt_om * x
    nmax = max(a, b)
    h[0] = 1.0
    if nmax >= 1:
        h[1] = 2.0 * z
    for k in range(1, nmax):
        h[k + 1] = 2.0 * z * h[k] - 2.0 * k * h[k - 1]
    ha = h[a]
    hb = h[b]
    dha = 2.0 * a * h[a - 1] if a > 0 else 0.0
    dhb = 2.0 * b * h[b - 1] if b > 0 else 0.0
    return ha * hb / (sqrt_om * (ha * dhb - dha * hb))


@jit
def _gk15(a, b, sqrt_om, lo, hi, h):
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    fc = pair_integrand(a, b, sqrt_om, centre, h)
    resk = fc * _WGK[7]
    resg = fc * _WG[3]
    for j in range(7):
        dx = half * _XGK[j]
        fsum = (pair_integrand(a, b, sqrt_om, centre - dx, h)
                + pair_integrand(a, b, sqrt_om, centre + dx, h))
        resk += _WGK[j] * fsum
        if j % 2 == 1:
            resg += _WG[j // 2] * fsum
    return resk * half, abs((resk - resg) * half)


@jit
def pair_quad(a, b, sqrt_om, lo, hi, abs_tol, rel_tol, max_intervals):
    """Adaptive GK15 integral of the pair integrand over [lo, hi].

    Bisects the interval with the largest error estimate until the summed
    estimate meets the tolerance. Returns (value, error_estimate).
    """
    if lo == hi:
        return 0.0, 0.0
    h = np.empty(max(a, b) + 2)
    los = np.empty(max_intervals)
    his = np.empty(max_intervals)
    vals = np.empty(max_intervals)
    errs = np.empty(max_intervals)
    v, e = _gk15(a, b, sqrt_om, lo, hi, h)
    los[0] = lo
    his[0] = hi
    vals[0] = v
    errs[0] = e
    count = 1
    total = v
    err_total = e
    while err_total > max(abs_tol, rel_tol * abs(total)) and count < max_intervals:
        worst = 0
        for i in range(1, count):
            if errs[i] > errs[worst]:
                worst = i
        l0 = los[worst]
        h0 = his[worst]
        mid = 0.5 * (l0 + h0)
        if mid == l0 or mid == h0:
            break
        v1, e1 = _gk15(a, b, sqrt_om, l0, mid, h)
        v2, e2 = _gk15(a, b, sqrt_om, mid, h0, h)
        los[worst] = l0
        his[worst] = mid
        vals[worst] = v1
        errs[worst] = e1
        los[count] = mid
        his[count] = h0
        vals[count] = v2
        errs[count] = e2
        count += 1
        total = 0.0
        err_total = 0.0
        for i in range(count):
            total += vals[i]
            err_total += errs[i]
    return total, err_total


@jit
def pair_quad_many(a, b, sqrt_om, refs, xs, abs_tol, rel_tol, out, err):
    for i in range(xs.size):
        v, e = pair_quad(a, b, sqrt_om, refs[i], xs[i], abs_tol, rel_tol, 400)
        out[i] = v
        err[i] = e
