"""Free Fermi gas thermodynamics through the Fermi-Dirac polylogarithm.

Units: hbar^2/2m = 1, so the dispersion is |k|^2.  All routines take the
argument of the polylogarithm in log form, x = log z = beta*mu, which keeps
very degenerate gases (log z of order a few hundred) representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, DomainError

SQRT_PI = math.sqrt(math.pi)

# c_d in the p-wave scattering functional, equal to d * |S^{d-1}|
SCATTERING_CONSTANT = {1: 2.0, 2: 4.0 * math.pi, 3: 12.0 * math.pi}

# zero-temperature limits of the correction coefficient
ZERO_T_COEFFICIENT = {
    1: 2.0 * math.pi**2 / 3.0,
    2: 4.0 * math.pi**2,
    3: 12.0 * math.pi / 5.0 * (6.0 * math.pi**2) ** (2.0 / 3.0),
}


def gamma_fn(s: float) -> float:
    """Gamma function; half-integers go through the recursion from Gamma(1/2)."""
    twice = 2.0 * s
    if s > 0 and twice == round(twice) and twice <= 340:
        n = int(round(twice))
        if n % 2 == 0:
            return float(math.factorial(n // 2 - 1))
        val = SQRT_PI
        t = 0.5
        while t < s - 0.25:
            val *= t
            t += 1.0
        return val
    return math.gamma(s)


def sphere_area(d: int) -> float:
    """|S^{d-1}|, the surface area of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)


@dataclass(frozen=True)
class GrandParams:
    """Grand-canonical control parameters (d, beta, mu).

    The fugacity is carried as ``log_z = beta*mu`` to avoid overflow.
    """

    d: int
    beta: float
    mu: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be positive and finite, got {self.beta}")
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu}")

    @classmethod
    def from_log_z(cls, d: int, beta: float, log_z: float) -> "GrandParams":
        return cls(d, beta, log_z / beta)

    @property
    def log_z(self) -> float:
        return self.beta * self.mu

    @property
    def z(self) -> float:
        return math.exp(self.log_z) if self.log_z < 700 else math.inf

    @property
    def zeta(self) -> float:
        return 1.0 + abs(self.log_z)

    def with_mu(self, mu: float) -> "GrandParams":
        return GrandParams(self.d, self.beta, mu)


# ---------------------------------------------------------------- polylog

def _cvz_alternating(terms: np.ndarray) -> float:
    """Sum_{k>=0} (-1)^k a_k by the Cohen-Villegas-Zagier acceleration.

    Valid for moment sequences a_k (completely monotone in k); error about
    5.8^{-n} relative for n terms.
    """
    n = len(terms)
    d = (3.0 + math.sqrt(8.0)) ** n
    d = 0.5 * (d + 1.0 / d)
    b = -1.0
    c = -d
    s = 0.0
    for k in range(n):
        c = b - c
        s += c * terms[k]
        b = (k + n) * (k - n) * b / ((k + 0.5) * (k + 1.0))
    return s / d


def polylog_neg_series(s: float, x: float, n_terms: int = 48) -> float:
    """-Li_s(-e^x) from the alternating series, accelerated; requires x <= 0."""
    if s <= 0:
        raise DomainError(f"polylog order must be positive, got {s}")
    if x > 0:
        raise DomainError("the alternating series needs x <= 0")
    k = np.arange(1, n_terms + 1, dtype=float)
    a = np.exp(k * x - s * np.log(k))
    return _cvz_alternating(a)


def polylog_neg_quad(s: float, x: float, rtol: float = 1e-12) -> float:
    """-Li_s(-e^x) from the Fermi-Dirac integral, split at max(x, 1)."""
    if s <= 0:
        raise DomainError(f"polylog order must be positive, got {s}")
    cut = max(x, 1.0)
    occ = lambda t: special.expit(x - t)  # 1/(e^{t-x}+1)
    head, err_h = integrate.quad(occ, 0.0, cut, weight="alg", wvar=(s - 1.0, 0.0),
                                 epsabs=0.0, epsrel=rtol, limit=400)
    tail, err_t = integrate.quad(lambda u: (cut + u) ** (s - 1.0) * special.expit(x - cut - u),
                                 0.0, np.inf, epsabs=0.0, epsrel=rtol, limit=400)
    total = head + tail
    err = err_h + err_t
    if not total > 0 or err > 1e-10 * total:
        raise AccuracyError(f"polylog quadrature reached only {err / max(total, 1e-300):.2e} relative",
                            achieved=err / max(total, 1e-300))
    return total / gamma_fn(s)


@lru_cache(maxsize=4096)
def polylog_neg(s: float, x: float) -> float:
    """Value of -Li_s(-e^x) for s > 0 and real x.

    Uses the accelerated alternating series for x <= 0 and adaptive
    quadrature of the Fermi-Dirac integral otherwise.
    """
    s = float(s)
    x = float(x)
    if not s > 0:
        raise DomainError(f"polylog order must be positive, got {s}")
    if x <= 0:
        return polylog_neg_series(s, x)
    return polylog_neg_quad(s, x)


def polylog_neg_asymptotic(s: float, x: float) -> float:
    """Leading large-x behaviour x^s / Gamma(s+1)."""
    return x**s / gamma_fn(s + 1.0)


# ------------------------------------------------------------- free gas

def free_pressure(params: GrandParams) -> float:
    """psi0 = beta^{-1-d/2} |S^{d-1}| Gamma(d/2) / (2 (2 pi)^d) * (-Li_{d/2+1}(-z))."""
    d, beta = params.d, params.beta
    pref = sphere_area(d) * gamma_fn(d / 2.0) / (2.0 * (2.0 * math.pi) ** d)
    return beta ** (-1.0 - d / 2.0) * pref * polylog_neg(d / 2.0 + 1.0, params.log_z)


def free_pressure_quadrature(params: GrandParams) -> float:
    """(1/(beta (2pi)^d)) * integral of log(1 + z e^{-beta k^2}) dk, radially."""
    d, beta, lz = params.d, params.beta, params.log_z
    f = lambda k: np.logaddexp(0.0, lz - beta * k * k) * k ** (d - 1)
    kstar = math.sqrt(max(lz, 0.0) / beta)
    pts = [0.0, kstar] if kstar > 0 else [0.0]
    total = 0.0
    for lo, hi in zip(pts, pts[1:] + [np.inf]):
        val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return sphere_area(d) * total / (beta * (2.0 * math.pi) ** d)


def free_density(params: GrandParams) -> float:
    """rho0 = (4 pi beta)^{-d/2} (-Li_{d/2}(-z))."""
    d = params.d
    return (4.0 * math.pi * params.beta) ** (-d / 2.0) * polylog_neg(d / 2.0, params.log_z)


def coefficient_ratio(d: int, log_z: float) -> float:
    """(-Li_{d/2+1}(-z)) / (-Li_{d/2}(-z))^{1+2/d}."""
    return polylog_neg(d / 2.0 + 1.0, log_z) / polylog_neg(d / 2.0, log_z) ** (1.0 + 2.0 / d)


def correction_coefficient(params: GrandParams) -> float:
    """2 pi c_d (-Li_{d/2+1}(-z)) / (-Li_{d/2}(-z))^{1+2/d}."""
    d = params.d
    return 2.0 * math.pi * SCATTERING_CONSTANT[d] * coefficient_ratio(d, params.log_z)


def fermi_momentum(d: int, rho: float) -> float:
    return 2.0 * math.pi * (rho / ball_volume(d)) ** (1.0 / d)


def ground_state_energy_density(d: int, rho: float) -> float:
    """Energy density of the filled Fermi sea at density rho.

    e0 = (2 pi)^{-d} * integral over |k| < k_F of |k|^2, with k_F fixed by
    rho = |B(k_F)| / (2 pi)^d.
    """
    if rho < 0:
        raise DomainError(f"density must be non-negative, got {rho}")
    if rho == 0:
        return 0.0
    kf = fermi_momentum(d, rho)
    radial, _ = integrate.quad(lambda k: k ** (d + 1), 0.0, kf, epsabs=0.0, epsrel=1e-13)
    return sphere_area(d) * radial / (2.0 * math.pi) ** d


def energy_density_closed_form_variant(d: int, rho: float) -> float:
    """The closed form 4 pi d^{2/d}/(d+2) (d/2)^{2/d} Gamma(d/2)^{2/d} rho^{1+2/d}.

    Kept only for cross-checking: it coincides with the Fermi-sea value for
    d = 1, 2 and is smaller by the factor d^{2/d-1} = 3^{-1/3} for d = 3.
    """
    return (4.0 * math.pi * d ** (2.0 / d) / (d + 2.0) * (d / 2.0) ** (2.0 / d)
            * gamma_fn(d / 2.0) ** (2.0 / d) * rho ** (1.0 + 2.0 / d))


@dataclass(frozen=True)
class FreeGasPoint:
    psi0: float
    rho0: float
    coeff: float
    e0: float


def free_gas_point(params: GrandParams) -> FreeGasPoint:
    rho0 = free_density(params)
    return FreeGasPoint(
        psi0=free_pressure(params),
        rho0=rho0,
        coeff=correction_coefficient(params),
        e0=ground_state_energy_density(params.d, rho0),
    )


def free_energy_density(d: int, beta: float, rho: float) -> tuple[float, float]:
    """Canonical free-energy density phi0(beta, rho) of the ideal Fermi gas.

    Computed directly as energy minus T*entropy of the Fermi-Dirac occupation
    at the chemical potential that reproduces rho.  Returns (phi0, mu).
    """
    from scipy.optimize import brentq

    target = lambda lz: free_density(GrandParams.from_log_z(d, beta, lz)) - rho
    lo, hi = -50.0, 50.0
    while target(lo) > 0:
        lo *= 2
    while target(hi) < 0:
        hi *= 2
    lz = brentq(target, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)

    def integrand(k):
        t = lz - beta * k * k
        occ = special.expit(t)
        # -(n log n + (1-n) log(1-n)) with n = expit(t), written stably
        ent = np.logaddexp(0.0, t) - occ * t
        return (k * k * occ - ent / beta) * k ** (d - 1)

    kstar = math.sqrt(max(lz, 0.0) / beta)
    pts = [0.0, kstar] if kstar > 0 else [0.0]
    total = 0.0
    for a, b in zip(pts, pts[1:] + [np.inf]):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return sphere_area(d) * total / (2.0 * math.pi) ** d, lz / beta
