"""Order/chaos diagnostics: finite-time Lyapunov numbers, nodal points and
confinement of trajectories to surfaces."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.stats import qmc

from . import _kernels
from .dynamics import REASONS, NodeSingularityError, relative_drift, velocity_generic
from .wavefunction import amplitude, peak_density


@dataclass
class LyapunovSeries:
    t: np.ndarray
    chi: np.ndarray
    log_stretch: np.ndarray
    renorm_interval: float
    initial_separation: float
    reason: str = "reached"

    @property
    def final(self):
        return float(self.chi[-1]) if self.chi.size else math.nan

    def envelope(self, t=None):
        """ln(1 + s)/s with s = t - t0: the decay of an orbit whose
        separation grows only linearly."""
        t0 = float(self.t[0]) - self.renorm_interval if self.t.size else 0.0
        s = (self.t if t is None else np.asarray(t)) - t0
        return np.log1p(s) / s

    def block_rates(self, window=100.0, start=None):
        """Local stretching rates sum ln(d_k/d0) / window over consecutive
        windows beginning at ``start`` (default: half the span)."""
        per = max(1, int(round(window / self.renorm_interval)))
        t0 = float(self.t[0]) - self.renorm_interval
        if start is None:
            start = t0 + 0.5 * (float(self.t[-1]) - t0)
        first = int(np.searchsorted(self.t, start))
        usable = (self.log_stretch.size - first) // per * per
        blocks = self.log_stretch[first:first + usable].reshape(-1, per)
        return blocks.sum(axis=1) / (per * self.renorm_interval)

    def label(self):
        """Advisory ordered/chaotic call: chaotic when the final value sits
        more than 10x above the envelope."""
        if not self.chi.size:
            return "undetermined"
        return "chaotic" if self.final > 10.0 * float(self.envelope()[-1]) else "ordered"


def lyapunov(spec, d0=1e-8, renorm_interval=0.5, t_end=None):
    """Two-trajectory finite-time Lyapunov number with renormalization.

    The fiducial orbit and a shadow displaced by ``d0`` along (1, .., 1)
    are integrated as one stacked system. Every ``renorm_interval`` the
    separation d is logged and the shadow pulled back to distance ``d0``;
    chi(t) = sum ln(d_k / d0) / (t - t0).
    """
    if not 1e-10 <= d0 <= 1e-6:
        raise ValueError("d0 must lie in [1e-10, 1e-6]")
    psi = spec.psi
    n = psi.dim
    t0 = float(spec.t0)
    t_end = float(spec.t_end if t_end is None else t_end)
    if not t_end > t0:
        raise ValueError("Lyapunov series runs forward in time")
    guard = spec.guard()
    field_ = psi.kernel_field()
    y = np.empty(2 * n)
    y[:n] = spec.x0
    y[n:] = y[:n] + d0 / math.sqrt(n)
    rho = _kernels.velocity_field(y.copy(), t0, 2, field_, np.zeros(2 * n))
    if not rho >= guard:
        raise NodeSingularityError("initial density below guard")
    state = np.array([0.0, 1e-4, np.inf])
    counters = np.zeros(3, dtype=np.int64)
    work = np.zeros((9, 2 * n))
    no_t = np.empty(0)
    no_samples = np.empty((0, 2 * n))
    count = int(math.floor((t_end - t0) / renorm_interval + 1e-9))
    ts = np.empty(count)
    stretch = np.empty(count)
    t = t0
    reason = "reached"
    done = 0
    for k in range(count):
        target = t0 + (k + 1) * renorm_interval
        t, _, status = _kernels.advance(
            y, t, target, state, counters, spec.rel_tol, spec.abs_tol, guard,
            spec.min_step, spec.max_steps, 2, field_, work, no_t, no_samples, 0)
        if status != _kernels.REACHED:
            reason = REASONS[status]
            break
        sep = y[n:] - y[:n]
        d = math.sqrt(float(np.dot(sep, sep)))
        ts[k] = t
        stretch[k] = math.log(d / d0)
        y[n:] = y[:n] + sep * (d0 / d)
        done = k + 1
    ts = ts[:done]
    stretch = stretch[:done]
    chi = np.cumsum(stretch) / (ts - t0)
    return LyapunovSeries(ts, chi, stretch, renorm_interval, d0, reason)


@dataclass
class NodalPoint:
    x: np.ndarray
    t: float
    residual: float
    surface_residual: float = None

    @property
    def on_surface(self):
        return self.surface_residual is not None


@dataclass
class NodalSearch:
    points: list
    failures: list = field(default_factory=list)
    scale: float = 1.0


def default_seeds(psi, count=64, seed=0):
    """Scrambled Sobol points in the box |x_k| <= 3/sqrt(omega_k)."""
    m = max(1, math.ceil(math.log2(count)))
    raw = qmc.Sobol(d=psi.dim, scramble=True, seed=seed).random_base2(m)[:count]
    return (2.0 * raw - 1.0) * 3.0 / psi.sqrt_omegas


def find_nodal_points(psi, t, seeds=None, surface=None, level=None, tol=1e-10,
                      max_iter=80, seed=0, dedupe=1e-6):
    """Damped Gauss-Newton on (Re psi, Im psi[, C(x) - level]) from each seed.

    Works with the Gaussian-free amplitude, which has the same zeros and
    better conditioning. A point is accepted when |psi| < tol * scale, with
    scale the square root of the peak density, and (if constrained) when
    |C - level| < 1e-8 * max(1, |level|).
    """
    if surface is not None and level is None:
        raise ValueError("a surface constraint needs its level")
    if seeds is None:
        seeds = default_seeds(psi, seed=seed)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    scale = math.sqrt(peak_density(psi, t))
    surf_tol = 1e-8 * max(1.0, abs(level)) if surface is not None else None

    def residual(x):
        a = complex(psi.stripped_amplitude(x, t))
        mag = float(np.sum(np.abs(psi.spatial_factors(x)))) or 1.0
        r = [a.real / mag, a.imag / mag]
        if surface is not None:
            try:
                r.append(surface.evaluate(x) - level)
            except ArithmeticError:
                return None, mag
        return np.array(r), mag

    points = []
    failures = []
    for x0 in seeds:
        x = x0.copy()
        r, mag = residual(x)
        ok = False
        for _ in range(max_iter):
            if r is None:
                break
            da = psi.stripped_gradient(x, t) / mag
            rows = [da.real, da.imag]
            if surface is not None:
                rows.append(surface.gradient(x))
            jac = np.array(rows)
            if not np.all(np.isfinite(jac)):
                break
            step = np.linalg.lstsq(jac, -r, rcond=None)[0]
            norm0 = np.linalg.norm(r)
            lam = 1.0
            while lam > 1e-6:
                r_new, mag_new = residual(x + lam * step)
                if r_new is not None and np.linalg.norm(r_new) < norm0:
                    break
                lam *= 0.5
            else:
                break
            x = x + lam * step
            r, mag = r_new, mag_new
            if np.linalg.norm(step) * lam < 1e-15 * max(1.0, np.linalg.norm(x)):
                break
            if abs(r[0]) + abs(r[1]) < 1e-15 and (surface is None or abs(r[2]) < 1e-13 * max(1.0, abs(level))):
                break
        if r is not None:
            res = float(abs(amplitude(psi, x, t)))
            sres = None
            if surface is not None:
                sres = float(abs(surface.evaluate(x) - level))
            ok = res < tol * scale and (sres is None or sres < surf_tol)
        if ok:
            if not any(np.linalg.norm(p.x - x) < dedupe for p in points):
                points.append(NodalPoint(x, float(t), res, sres))
        else:
            failures.append(x0)
    return NodalSearch(points, failures, scale)


def vortex_circulation(psi, center, t, radius=1e-3, axes=(0, 1), samples=256):
    """Line integral of the velocity around a small circle in the plane of
    ``axes``. Around a simple nodal point this is +-2 pi."""
    center = np.asarray(center, dtype=float)
    theta = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
    pts = np.repeat(center[None, :], samples, axis=0)
    i, j = axes
    pts[:, i] += radius * np.cos(theta)
    pts[:, j] += radius * np.sin(theta)
    v = velocity_generic(psi, pts, t)
    tangent_i = -radius * np.sin(theta)
    tangent_j = radius * np.cos(theta)
    dtheta = 2.0 * math.pi / samples
    return float(np.sum(v[:, i] * tangent_i + v[:, j] * tangent_j) * dtheta)


_FIT_FRACTIONS = (0.1, 0.25, 0.5, 1.0)


def _surface_features(x):
    n = x.shape[1]
    cols = [x[:, i] for i in range(n)]
    cols += [x[:, i] * x[:, j] for i in range(n) for j in range(i, n)]
    cols += [np.log(np.abs(x[:, i]) + 1e-300) for i in range(n)]
    return np.column_stack(cols)


def surface_fit_residual(x):
    """RMS residual of the best separable quadratic-plus-log surface.

    Columns (x_i, x_i x_j, ln|x_i|) are centred and scaled to unit RMS; the
    smallest singular value over sqrt(samples) measures how far the points
    are from lying on any such surface.
    """
    f = _surface_features(np.asarray(x, dtype=float))
    f = f - f.mean(axis=0)
    rms = np.sqrt(np.mean(f * f, axis=0))
    keep = rms > 1e-14
    f = f[:, keep] / rms[keep]
    s = np.linalg.svd(f, compute_uv=False)
    return float(s[-1] / math.sqrt(f.shape[0]))


@dataclass
class ConfinementReport:
    max_drift: float = None
    spans: tuple = ()
    axis_variance: np.ndarray = None
    fit_residual: tuple = ()

    @property
    def confined(self):
        if self.max_drift is not None:
            return self.max_drift < 1e-6
        return self.fit_residual[-1] < 1e-6


def confinement_statistic(traj, quantity=None):
    """Drift of a known quantity, or surface-fit residuals over growing
    spans when none is given."""
    if traj.t.size == 0:
        raise ValueError("empty trajectory")
    if quantity is not None:
        vals = quantity.evaluate_many(traj.x)
        finite = np.isfinite(vals)
        drift = relative_drift(vals[finite], vals[finite][0])
        return ConfinementReport(max_drift=float(np.max(drift)))
    k = traj.t.size
    spans = []
    var = []
    fits = []
    for frac in _FIT_FRACTIONS:
        end = max(2, int(round(frac * k)))
        seg = traj.x[:end]
        spans.append(float(traj.t[end - 1] - traj.t[0]))
        var.append(np.var(seg, axis=0))
        fits.append(surface_fit_residual(seg))
    return ConfinementReport(spans=tuple(spans), axis_variance=np.array(var),
                             fit_residual=tuple(fits))
