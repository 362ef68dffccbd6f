"""Bohmian velocity field and adaptive trajectory integration."""

from dataclasses import dataclass, field
from itertools import combinations
import math

import numpy as np

from . import _kernels
from . import hermite
from .wavefunction import Superposition, peak_density

REASONS = {
    _kernels.REACHED: "reached",
    _kernels.NODE_PROXIMITY: "node-proximity",
    _kernels.STEP_UNDERFLOW: "step-underflow",
    _kernels.MAX_STEPS: "max-steps",
}


class NodeSingularityError(ArithmeticError):
    """Velocity requested where the density is below the guard."""


class TermCountError(ValueError):
    pass


def velocity_generic(psi, x, t, min_density=0.0):
    """Im(grad psi / psi) at points ``x`` (shape (..., dim)).

    The Gaussian factor multiplies psi and its gradient alike, so the
    velocity is formed from the Gaussian-free sums; the density guard is
    still applied to the true density. The numerator is taken as
    Im(psi* grad psi) = sum_{j<l} sin((E_j - E_l) t) (phi_j grad phi_l -
    phi_l grad phi_j) over the real term factors, so equal-energy terms
    cancel exactly.
    """
    x = psi._coords(x)
    t = np.asarray(t, dtype=float)
    phi = psi.spatial_factors(x)
    dphi = psi.spatial_gradients(x)
    a = np.sum(phi * psi._phases(t, phi.shape[1:]), axis=0)
    g = a.real ** 2 + a.imag ** 2
    rho = g * psi.gaussian(x)
    if np.any(~(rho > min_density)):
        raise NodeSingularityError(
            f"density {np.min(rho):.3g} not above guard {min_density:.3g}")
    num = np.zeros(x.shape)
    e = psi.energies
    for j, l in combinations(range(len(psi)), 2):
        if e[j] == e[l]:
            continue
        s = np.sin((e[j] - e[l]) * t)[..., None]
        num += s * (phi[j][..., None] * dphi[l] - phi[l][..., None] * dphi[j])
    return num / g[..., None]


def velocity_expanded(psi, x, t, min_density=0.0):
    """Velocity from the explicit pairwise trigonometric expansion.

    x_i' = (1/G~) sum_{j<l} c_j c_l K_j K_l prod_{k!=i} H_jk H_lk
           [H_ji, H_li]_x sin((E_j - E_l) t)

    with G~ = sum_j phi_j^2 + 2 sum_{j<l} phi_j phi_l cos((E_j - E_l) t).
    Brackets are taken in x, i.e. sqrt(omega_i) times the z bracket.
    Independent of :func:`velocity_generic` apart from Hermite evaluation.
    """
    m = len(psi)
    if not 2 <= m <= psi.dim + 1:
        raise TermCountError(f"expanded form needs 2..{psi.dim + 1} terms, got {m}")
    x = psi._coords(x)
    t = np.asarray(t, dtype=float)
    n = psi.dim
    z = x * psi.sqrt_omegas
    hv = {}
    for j in range(m):
        for k in range(n):
            q = int(psi.quanta[j, k])
            if (k, q) not in hv:
                hv[k, q] = hermite.evaluate(q, z[..., k])
    phi = [psi.weights[j] * np.prod([hv[k, int(psi.quanta[j, k])] for k in range(n)], axis=0)
           for j in range(m)]
    gt = sum(p * p for p in phi)
    for j, l in combinations(range(m), 2):
        gt = gt + 2.0 * phi[j] * phi[l] * np.cos((psi.energies[j] - psi.energies[l]) * t)
    if np.any(~(gt * psi.gaussian(x) > min_density)):
        raise NodeSingularityError("density not above guard")
    out = np.zeros(x.shape)
    for j, l in combinations(range(m), 2):
        s = np.sin((psi.energies[j] - psi.energies[l]) * t)
        cc = psi.weights[j] * psi.weights[l]
        for i in range(n):
            a, b = int(psi.quanta[j, i]), int(psi.quanta[l, i])
            if a == b:
                continue
            rest = np.ones(x.shape[:-1])
            for k in range(n):
                if k != i:
                    rest = rest * hv[k, int(psi.quanta[j, k])] * hv[k, int(psi.quanta[l, k])]
            br = psi.sqrt_omegas[i] * hermite.bracket(a, b, z[..., i])
            out[..., i] += cc * rest * br * s
    return out / gt[..., None]


@dataclass(frozen=True)
class TrajectorySpec:
    """Initial data and controls for one trajectory.

    ``min_density_guard=None`` means 1e-12 times the peak density at t0.
    ``t_end < t0`` integrates backwards in time.
    """

    psi: Superposition
    x0: tuple
    t0: float = 0.0
    t_end: float = 100.0
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    sample_interval: float = 0.01
    min_density_guard: float = None
    max_steps: int = 50_000_000
    min_step: float = 1e-13

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.x0) != self.psi.dim:
            raise ValueError(f"x0 has {len(self.x0)} coordinates, psi is {self.psi.dim}-d")
        if self.t_end == self.t0:
            raise ValueError("t_end must differ from t0")
        for name in ("rel_tol", "abs_tol"):
            tol = getattr(self, name)
            if not 0.0 < tol <= 1e-3:
                raise ValueError(f"{name}={tol} outside (0, 1e-3]")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")

    def guard(self):
        if self.min_density_guard is not None:
            return float(self.min_density_guard)
        return 1e-12 * peak_density(self.psi, self.t0)

    def sample_times(self):
        span = self.t_end - self.t0
        direction = math.copysign(1.0, span)
        count = int(math.floor(abs(span) / self.sample_interval * (1 + 1e-12)))
        times = self.t0 + direction * self.sample_interval * np.arange(count + 1)
        if abs(times[-1] - self.t_end) > 1e-9 * max(1.0, abs(self.t_end)):
            times = np.append(times, self.t_end)
        else:
            times[-1] = self.t_end
        return times


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    accepted: int
    rejected: int
    guard_rejections: int
    min_density: float
    reason: str
    spec: TrajectorySpec = field(repr=False, default=None)

    @property
    def completed(self):
        return self.reason == "reached"

    @property
    def t_reached(self):
        return float(self.t[-1])

    def diagnostics(self):
        return {
            "accepted_steps": int(self.accepted),
            "rejected_steps": int(self.rejected),
            "guard_rejections": int(self.guard_rejections),
            "min_density": float(self.min_density),
            "termination": self.reason,
            "t_reached": self.t_reached,
            "samples": int(self.t.size),
        }


def integrate(spec):
    """Integrate one trajectory with DOPRI5 and dense output.

    Stops early with reason ``node-proximity`` when steps keep landing where
    the density is below the guard, or ``step-underflow`` when the error
    control drives the step below ``spec.min_step``.
    """
    psi = spec.psi
    guard = spec.guard()
    field_ = psi.kernel_field()
    x0 = np.array(spec.x0, dtype=np.float64)
    n = x0.size
    rho0 = float(_kernels.velocity_field(x0.copy(), float(spec.t0), 1, field_, np.zeros(n)))
    if not rho0 >= guard:
        raise NodeSingularityError(
            f"initial density {rho0:.3g} below guard {guard:.3g}")
    times = spec.sample_times()
    samples = np.empty((times.size, n))
    samples[0] = x0
    y = x0.copy()
    state = np.array([0.0, 1e-4, np.inf])
    counters = np.zeros(3, dtype=np.int64)
    work = np.zeros((9, n))
    t, filled, status = _kernels.advance(
        y, float(spec.t0), float(spec.t_end), state, counters,
        spec.rel_tol, spec.abs_tol, guard, spec.min_step, spec.max_steps,
        1, field_, work, times[1:], samples[1:], 0)
    filled += 1
    return Trajectory(t=times[:filled].copy(), x=samples[:filled].copy(),
                      accepted=int(counters[0]), rejected=int(counters[1]),
                      guard_rejections=int(counters[2]),
                      min_density=float(state[2]), reason=REASONS[status],
                      spec=spec)


@dataclass
class ConservedSeries:
    t: np.ndarray
    value: np.ndarray
    drift: np.ndarray
    singular: np.ndarray

    @property
    def max_drift(self):
        ok = ~self.singular
        return float(np.max(self.drift[ok])) if ok.any() else math.nan


def relative_drift(values, reference):
    """|C - C0| / max(|C0|, 1)."""
    return np.abs(values - reference) / max(abs(reference), 1.0)


def conserved_series(traj, quantity):
    """Value of ``quantity`` at each sample and its drift from the first.

    Samples where the quantity is singular come back as NaN and are flagged
    rather than raising.
    """
    values = quantity.evaluate_many(traj.x)
    singular = ~np.isfinite(values)
    ref = values[0]
    if not math.isfinite(ref):
        finite = np.flatnonzero(~singular)
        ref = values[finite[0]] if finite.size else math.nan
    drift = relative_drift(values, ref)
    return ConservedSeries(t=traj.t, value=values, drift=drift, singular=singular)
