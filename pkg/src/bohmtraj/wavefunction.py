"""Superpositions of N-dimensional harmonic-oscillator eigenstates.

Units: hbar = 1 and all masses 1. A term with quantum numbers (n_1..n_N)
is the product of 1-d eigenfunctions, each a Hermite polynomial of
sqrt(omega_k) x_k times a Gaussian, evolving with phase exp(-i E t).
"""

from dataclasses import dataclass
import math

import numpy as np

from . import hermite


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class OscillatorSystem:
    """Frequencies of an isotropic-mass oscillator with ``2 <= dim <= 4``."""

    frequencies: tuple

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.frequencies)
        if not 2 <= len(freqs) <= 4:
            raise DimensionError(f"dimension must be 2, 3 or 4, got {len(freqs)}")
        if not all(math.isfinite(w) and w > 0 for w in freqs):
            raise ValueError(f"frequencies must be positive and finite: {freqs}")
        object.__setattr__(self, "frequencies", freqs)

    @property
    def dim(self):
        return len(self.frequencies)

    @property
    def masses(self):
        return (1.0,) * self.dim

    hbar = 1.0


@dataclass(frozen=True)
class Term:
    coefficient: float
    quanta: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficient", float(self.coefficient))
        object.__setattr__(self, "quanta",
                           tuple(hermite.check_index(n) for n in self.quanta))


def energy(quanta, system):
    """E = sum_k (n_k + 1/2) omega_k."""
    if len(quanta) != system.dim:
        raise DimensionError(f"{len(quanta)} quanta for a {system.dim}-d system")
    return math.fsum((n + 0.5) * w for n, w in zip(quanta, system.frequencies))


def normalization(quanta, system):
    """K = prod_k (omega_k / pi)^(1/4) / sqrt(2^n_k n_k!)."""
    if len(quanta) != system.dim:
        raise DimensionError(f"{len(quanta)} quanta for a {system.dim}-d system")
    k = 1.0
    for n, w in zip(quanta, system.frequencies):
        k *= (w / math.pi) ** 0.25 / math.sqrt(2.0 ** n * math.factorial(n))
    return k


class Superposition:
    """Immutable sum of eigenstates with real coefficients.

    Terms with equal quanta are merged (coefficients added) and terms whose
    coefficient is zero are dropped. Term order is otherwise preserved.
    """

    def __init__(self, system, terms):
        if not isinstance(system, OscillatorSystem):
            system = OscillatorSystem(tuple(system))
        merged = {}
        count = 0
        for term in terms:
            count += 1
            if not isinstance(term, Term):
                term = Term(*term)
            if len(term.quanta) != system.dim:
                raise DimensionError(
                    f"term {term.quanta} does not match dimension {system.dim}")
            if term.quanta in merged:
                merged[term.quanta] += term.coefficient
            else:
                merged[term.quanta] = term.coefficient
        kept = tuple(Term(c, q) for q, c in merged.items() if c != 0.0)
        if not kept:
            raise ValueError("superposition has no non-zero terms")
        self.system = system
        self.terms = kept
        # input terms absorbed by merging equal quanta or dropping zeros
        self.merged = count - len(kept)
        self.energies = np.array([energy(t.quanta, system) for t in kept])
        self.norms = np.array([normalization(t.quanta, system) for t in kept])
        self.weights = np.array([t.coefficient for t in kept]) * self.norms
        self.quanta = np.array([t.quanta for t in kept], dtype=np.int64)
        self.omegas = np.array(system.frequencies)
        self.sqrt_omegas = np.sqrt(self.omegas)
        for arr in (self.energies, self.norms, self.weights, self.quanta,
                    self.omegas, self.sqrt_omegas):
            arr.setflags(write=False)

    @classmethod
    def from_quanta(cls, frequencies, quanta, coefficients=None):
        if coefficients is None:
            coefficients = [1.0 / math.sqrt(len(quanta))] * len(quanta)
        return cls(OscillatorSystem(tuple(frequencies)),
                   [Term(c, tuple(q)) for c, q in zip(coefficients, quanta)])

    @property
    def dim(self):
        return self.system.dim

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        body = " + ".join(f"{t.coefficient:.6g}*Psi{t.quanta}" for t in self.terms)
        return f"Superposition({body}; omega={self.system.frequencies})"

    def __eq__(self, other):
        if not isinstance(other, Superposition):
            return NotImplemented
        return self.system == other.system and self.terms == other.terms

    def __hash__(self):
        return hash((self.system, self.terms))

    def kernel_field(self):
        """Arrays in the layout expected by the compiled velocity kernel."""
        nmax = int(self.quanta.max())
        n = self.dim
        return (np.ascontiguousarray(self.weights, dtype=np.float64),
                np.ascontiguousarray(self.quanta, dtype=np.int64),
                np.ascontiguousarray(self.sqrt_omegas, dtype=np.float64),
                np.ascontiguousarray(self.omegas, dtype=np.float64),
                np.ascontiguousarray(self.energies, dtype=np.float64),
                np.zeros((n, nmax + 1)), np.zeros((n, nmax + 1)),
                np.zeros(len(self.terms)), np.zeros((len(self.terms), n)))

    # -- evaluation --------------------------------------------------------

    def _coords(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"points have {x.shape[-1]} coordinates, "
                                 f"expected {self.dim}")
        return x

    def _hermite_tables(self, x):
        nmax = int(self.quanta.max())
        return [hermite._table(nmax, self.sqrt_omegas[k] * x[..., k])
                for k in range(self.dim)]

    def spatial_factors(self, x):
        """Per-term products c_j K_j prod_k H(z_k), without the Gaussian."""
        x = self._coords(x)
        tables = self._hermite_tables(x)
        out = np.empty((len(self.terms),) + x.shape[:-1])
        for j, q in enumerate(self.quanta):
            prod = np.full(x.shape[:-1], self.weights[j])
            for k in range(self.dim):
                prod = prod * tables[k][q[k]]
            out[j] = prod
        return out

    def spatial_gradients(self, x):
        """d/dx_i of the per-term products, shape (terms, ..., dim)."""
        x = self._coords(x)
        tables = self._hermite_tables(x)
        out = np.empty((len(self.terms),) + x.shape)
        for j, q in enumerate(self.quanta):
            for i in range(self.dim):
                n = q[i]
                d = (2.0 * n * tables[i][n - 1] * self.sqrt_omegas[i]
                     if n > 0 else np.zeros(x.shape[:-1]))
                prod = self.weights[j] * d
                for k in range(self.dim):
                    if k != i:
                        prod = prod * tables[k][q[k]]
                out[j, ..., i] = prod
        return out

    def _phases(self, t, shape):
        t = np.asarray(t, dtype=float)
        arg = self.energies.reshape((-1,) + (1,) * len(shape)) * t
        return np.exp(-1j * arg)

    def gaussian(self, x):
        x = self._coords(x)
        return np.exp(-0.5 * np.sum(self.omegas * x * x, axis=-1))

    def stripped_amplitude(self, x, t):
        """Amplitude with the common Gaussian factor removed."""
        phi = self.spatial_factors(x)
        return np.sum(phi * self._phases(t, phi.shape[1:]), axis=0)

    def stripped_gradient(self, x, t):
        dphi = self.spatial_gradients(x)
        ph = self._phases(t, dphi.shape[1:-1])[..., None]
        return np.sum(dphi * ph, axis=0)


def amplitude(psi, x, t):
    """Complex value of psi at points ``x`` (shape (..., dim)) and time t."""
    return psi.gaussian(x) * psi.stripped_amplitude(x, t)


def gradient(psi, x, t):
    """Complex gradient, shape (..., dim).

    Uses dH_n(sqrt(w) x)/dx = 2 n sqrt(w) H_{n-1} for the polynomial part and
    -w_k x_k for the Gaussian.
    """
    x = psi._coords(x)
    g = psi.gaussian(x)[..., None]
    a = psi.stripped_amplitude(x, t)[..., None]
    da = psi.stripped_gradient(x, t)
    return g * (da - psi.omegas * x * a)


def density(psi, x, t):
    """G = Re(psi)^2 + Im(psi)^2."""
    a = amplitude(psi, x, t)
    return a.real ** 2 + a.imag ** 2


def peak_density(psi, t, points_per_axis=9):
    """Grid estimate of max density over the box |x_k| <= 3/sqrt(w_k)."""
    axes = [np.linspace(-3.0, 3.0, points_per_axis) / s for s in psi.sqrt_omegas]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return float(np.max(density(psi, grid, t)))
