"""Error envelopes, the cutoff choice, the temperature regimes and the final bound.

Every envelope is evaluated as ``constant * structure``: the structure is a
sum of named monomials in a, b, rho0, zeta and log(b/a), and the constant
comes from the registry (default 1.0).  Checks on exponents therefore never
depend on the constants.

Notation: x = a^d rho0 (diluteness), ell = log(b/a), lx = |log x|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, PreconditionError, RegimeError
from .registry import ConstantRegistry, default_registry
from .thermo import (SCATTERING_CONSTANT, ZERO_T_COEFFICIENT, GrandParams, correction_coefficient,
                     free_density, free_energy_density, free_pressure)


@dataclass(frozen=True)
class BoundInputs:
    a: float
    params: GrandParams
    registry: ConstantRegistry = field(default_factory=default_registry, compare=False)
    z0: float = 1e-3
    rho0: float = field(init=False)

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"scattering length must be positive, got {self.a}")
        if self.params.log_z < math.log(self.z0):
            raise DomainError(f"fugacity {self.params.z:.3g} below z0 = {self.z0:g}")
        object.__setattr__(self, "rho0", free_density(self.params))

    @classmethod
    def from_diluteness(cls, d: int, x: float, log_z: float, beta: float = 1.0,
                        registry: ConstantRegistry | None = None) -> "BoundInputs":
        """Inputs with a chosen so that a^d rho0 = x."""
        params = GrandParams.from_log_z(d, beta, log_z)
        a = (x / free_density(params)) ** (1.0 / d)
        return cls(a, params, registry or default_registry())

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def zeta(self) -> float:
        return self.params.zeta

    @property
    def x(self) -> float:
        return self.a**self.d * self.rho0

    @property
    def log_x(self) -> float:
        return abs(math.log(self.x))

    @property
    def dilute(self) -> bool:
        return self.x < self.registry["diluteness"]

    @property
    def valid(self) -> bool:
        """a^d rho0 zeta^{d/2} |log a^d rho0| < c, the high-temperature hypothesis."""
        return self.dilute and self.x * self.zeta ** (self.d / 2) * self.log_x < self.registry["validity"]


@dataclass(frozen=True)
class Envelope:
    constant: float
    terms: dict        # name -> structure value

    @property
    def structure(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def value(self) -> float:
        return self.constant * self.structure


# ---------------------------------------------------------------- error envelopes

def _check_b(inp: BoundInputs, b: float) -> float:
    cap = inp.registry["b_cap"] * inp.rho0 ** (-1.0 / inp.d)
    if not (inp.a < b <= cap * (1 + 1e-12)):
        raise PreconditionError(f"b = {b:.6g} outside (a, C rho0^(-1/d)] = ({inp.a:.6g}, {cap:.6g}]")
    return math.log(b / inp.a)


def xi_envelopes(inp: BoundInputs, b: float) -> dict:
    """Sub-envelopes of eps_2 per unit volume, already integrated against the Jastrow moments."""
    d, a, rho, zeta = inp.d, inp.a, inp.rho0, inp.zeta
    ell = _check_b(inp, b)
    reg = inp.registry
    return {
        "xi_ge3": Envelope(reg["xi_ge3"], {"a^(4d-2) rho^5 zeta^(3d/2) ell^3":
                                           a ** (4 * d - 2) * rho**5 * zeta ** (1.5 * d) * ell**3}),
        "xi_eq1": Envelope(reg["xi_eq1"], {"a^(2d) rho^(3+2/d) ell": a ** (2 * d) * rho ** (3 + 2 / d) * ell,
                                           "a^(2d) b^2 rho^(3+4/d)": a ** (2 * d) * b**2 * rho ** (3 + 4 / d)}),
        "xi_i": Envelope(reg["xi_i"], {"a^(4d) b^(4-d) rho^(4+6/d) ell^2":
                                       a ** (4 * d) * b ** (4 - d) * rho ** (4 + 6 / d) * ell**2}),
        "xi_ii": Envelope(reg["xi_ii"], {"a^(3d-2) b rho^(4+1/d) ell":
                                         a ** (3 * d - 2) * b * rho ** (4 + 1 / d) * ell}),
        "xi_iii": Envelope(reg["xi_iii"], {"a^(3d) rho^(4+2/d) zeta^d ell^2":
                                           a ** (3 * d) * rho ** (4 + 2 / d) * zeta**d * ell**2}),
    }


def xi_ge3_structure(rho0: float, I_g: float, I_gamma: float) -> float:
    """rho0^5 I_g^3 (1 + I_gamma^3): the un-integrated structure of the xi_{>=3} envelope."""
    return rho0**5 * I_g**3 * (1.0 + I_gamma**3)


def eps_envelopes(inp: BoundInputs, b: float) -> dict:
    """eps_Z, eps_2, eps_3 per unit volume; eps_2 also carries the xi sub-envelopes."""
    if not inp.valid:
        raise RegimeError("a^d rho0 zeta^{d/2} |log a^d rho0| is not small: the envelopes do not apply")
    d, a, rho, zeta = inp.d, inp.a, inp.rho0, inp.zeta
    ell = _check_b(inp, b)
    reg = inp.registry
    eps_z = Envelope(reg["eps_Z"], {
        "a^d b^2 rho^(2+4/d) / zeta": a**d * b**2 * rho ** (2 + 4 / d) / zeta,
        "a^(2d) rho^(3+2/d) zeta^(d/2-1) ell^2": a ** (2 * d) * rho ** (3 + 2 / d) * zeta ** (d / 2 - 1) * ell**2,
    })
    if d >= 2:
        eps_2 = Envelope(reg["eps_2"], {
            "a^(2d) rho^(3+2/d) ell": a ** (2 * d) * rho ** (3 + 2 / d) * ell,
            "a^(4d-2) rho^5 zeta^(3d/2) ell^3": a ** (4 * d - 2) * rho**5 * zeta ** (1.5 * d) * ell**3,
        })
        eps_3 = Envelope(reg["eps_3"], {
            "a^(2d) b^2 rho^(3+4/d)": a ** (2 * d) * b**2 * rho ** (3 + 4 / d),
            "a^(3d-2) rho^4 zeta^(d/2) ell": a ** (3 * d - 2) * rho**4 * zeta ** (d / 2) * ell,
        })
    else:
        eps_2 = Envelope(reg["eps_2"], {
            "a b rho^5 ell": a * b * rho**5 * ell,
            "a^2 rho^5 zeta^(3/2) ell^3": a**2 * rho**5 * zeta**1.5 * ell**3,
        })
        eps_3 = Envelope(reg["eps_3"], {"a^2 rho^5 zeta ell^2": a**2 * rho**5 * zeta * ell**2})
    return {"eps_Z": eps_z, "eps_2": eps_2, "eps_3": eps_3, "xi": xi_envelopes(inp, b)}


def total_envelope(inp: BoundInputs, b: float) -> Envelope:
    """Everything the cutoff b trades off, per unit volume.

    The first term is the O(a^d/b^d) correction of the two-body integral
    times the leading term; the rest are the combined error envelopes.
    """
    d, a, rho, zeta = inp.d, inp.a, inp.rho0, inp.zeta
    ell = _check_b(inp, b)
    t = {"a^(2d) b^(-d) rho^(2+2/d)": a ** (2 * d) * b ** (-d) * rho ** (2 + 2 / d)}
    if d == 3:
        t["a^3 b^2 rho^(10/3) / zeta"] = a**3 * b**2 * rho ** (10 / 3) / zeta
        t["a^6 rho^(11/3) zeta^(1/2) ell^2"] = a**6 * rho ** (11 / 3) * zeta**0.5 * ell**2
        t["a^10 rho^5 zeta^(9/2) ell^3"] = a**10 * rho**5 * zeta**4.5 * ell**3
    elif d == 2:
        t["a^2 b^2 rho^4 / zeta"] = a**2 * b**2 * rho**4 / zeta
        t["a^4 rho^4 zeta ell"] = a**4 * rho**4 * zeta * ell
        t["a^6 rho^5 zeta^3 ell^3"] = a**6 * rho**5 * zeta**3 * ell**3
    else:
        t["a b rho^5 ell"] = a * b * rho**5 * ell
        t["a^2 rho^5 zeta^(3/2) ell^3"] = a**2 * rho**5 * zeta**1.5 * ell**3
    return Envelope(1.0, t)


def choose_b(inp: BoundInputs) -> float:
    """The cutoff balancing the two b-dependent terms of the total envelope."""
    d, a, rho, x, zeta = inp.d, inp.a, inp.rho0, inp.x, inp.zeta
    cap = inp.registry["b_cap"] * rho ** (-1.0 / d)
    if d == 3:
        b = a * x ** (-2 / 15) * zeta ** (1 / 5)
    elif d == 2:
        b = a * x ** (-1 / 4) * zeta ** (1 / 4)
    else:
        b = a * x ** (-1 / 2) * inp.log_x ** (-1 / 2)
    return min(b, cap)


def grid_optimal_b(inp: BoundInputs, n: int = 200) -> tuple[float, float]:
    """(b, total) minimizing the total envelope on a log grid over (2a, rho0^{-1/d}]."""
    hi = inp.registry["b_cap"] * inp.rho0 ** (-1.0 / inp.d)
    lo = 2.0 * inp.a
    if hi <= lo:
        raise RegimeError("no room for a cutoff: 2a exceeds the interparticle distance")
    grid = np.geomspace(lo, hi, n)
    vals = np.array([total_envelope(inp, b).structure for b in grid])
    i = int(np.argmin(vals))
    return float(grid[i]), float(vals[i])


# ---------------------------------------------------------------- delta envelopes

def high_temp_delta(d: int, x: float, zeta: float) -> dict:
    lx = abs(math.log(x))
    if d == 3:
        return {"x^(6/15) zeta^(-3/5)": x ** (6 / 15) * zeta ** (-3 / 5),
                "x zeta^(1/2) lx^2": x * zeta**0.5 * lx**2,
                "x^(7/3) zeta^(9/2) lx^3": x ** (7 / 3) * zeta**4.5 * lx**3}
    if d == 2:
        return {"x^(1/2) zeta^(-1/2)": x**0.5 * zeta**-0.5,
                "x zeta lx": x * zeta * lx,
                "x^2 zeta^3 lx^3": x**2 * zeta**3 * lx**3}
    return {"x^(1/2) lx^(1/2)": x**0.5 * lx**0.5,
            "x zeta^(3/2) lx^3": x * zeta**1.5 * lx**3}


def low_temp_delta(d: int, x: float, zeta: float) -> dict:
    lx = abs(math.log(x))
    zero_t = {3: x ** (2 / 3), 2: x * lx**2, 1: x ** (13 / 17)}[d]
    return {"zero-temperature": zero_t, "x^(-1) zeta^(-2)": 1.0 / (x * zeta**2)}


def regime_threshold(d: int, x: float, registry: ConstantRegistry | None = None) -> float:
    """zeta above which the low-temperature bound is used.

    Obtained by equating the last high-temperature term with x^{-1} zeta^{-2}.
    """
    reg = registry or default_registry()
    lx = abs(math.log(x))
    base = {3: x ** (-20 / 39) * lx ** (-6 / 13),
            2: x ** (-3 / 5) * lx ** (-3 / 5),
            1: x ** (-4 / 7) * lx ** (-6 / 7)}[d]
    return reg["threshold"] * base


def final_delta(d: int, x: float) -> float:
    """Quoted delta envelope of the main lower bound.

    In d = 2 its log power 8/7 is not what balancing the two branches gives
    (6/5, see balanced_delta); d = 1 and d = 3 coincide with balanced_delta.
    """
    lx = abs(math.log(x))
    return {3: x ** (1 / 39) * lx ** (12 / 13),
            2: x ** (1 / 5) * lx ** (8 / 7),
            1: x ** (1 / 7) * lx ** (12 / 7)}[d]


def balanced_delta(d: int, x: float) -> float:
    """delta at the regime threshold, where both branches have the same size."""
    lx = abs(math.log(x))
    return {3: x ** (1 / 39) * lx ** (12 / 13),
            2: x ** (1 / 5) * lx ** (6 / 5),
            1: x ** (1 / 7) * lx ** (12 / 7)}[d]


# ---------------------------------------------------------------- reports

@dataclass(frozen=True)
class BoundReport:
    d: int
    a: float
    rho0: float
    x: float
    log_z: float
    zeta: float
    regime: str
    b_choice: float          # nan in the low-temperature branch (no cutoff is used)
    coefficient: float
    leading_term: float
    delta: Envelope
    eps: dict | None
    valid: bool
    checks: dict = field(default_factory=dict)

    @property
    def delta_d(self) -> float:
        return self.delta.value

    def lower_bound(self, psi0: float) -> float:
        return psi0 - self.leading_term * (1.0 + self.delta_d)


def high_temp_bound(inp: BoundInputs) -> BoundReport:
    if not inp.valid:
        raise RegimeError("high-temperature bound needs a^d rho0 zeta^{d/2} |log a^d rho0| < c; "
                          "use low_temp_bound or report no bound")
    d = inp.d
    b = choose_b(inp)
    coeff = correction_coefficient(inp.params)
    delta = Envelope(inp.registry["delta_high"], high_temp_delta(d, inp.x, inp.zeta))
    eps = eps_envelopes(inp, b)
    total = total_envelope(inp, b).structure
    checks = {"total_over_leading": total / (inp.a**d * inp.rho0 ** (2 + 2 / d))}
    return BoundReport(d, inp.a, inp.rho0, inp.x, inp.params.log_z, inp.zeta, "high_temperature", b,
                       coeff, coeff * inp.a**d * inp.rho0 ** (2 + 2 / d), delta, eps, True, checks)


def legendre_residual(params: GrandParams) -> float:
    """Relative residual of psi0 = rho0 mu - phi0(beta, rho0)."""
    psi0 = free_pressure(params)
    rho0 = free_density(params)
    phi0, _ = free_energy_density(params.d, params.beta, rho0)
    return abs(psi0 - (rho0 * params.mu - phi0)) / abs(psi0)


def low_temp_bound(inp: BoundInputs, check_legendre: bool = True) -> BoundReport:
    d = inp.d
    coeff = correction_coefficient(inp.params)
    delta = Envelope(inp.registry["delta_low"], low_temp_delta(d, inp.x, inp.zeta))
    checks = {"zero_t_constant": ZERO_T_COEFFICIENT[d], "coefficient_over_zero_t": coeff / ZERO_T_COEFFICIENT[d]}
    if check_legendre:
        checks["legendre_residual"] = legendre_residual(inp.params)
    return BoundReport(d, inp.a, inp.rho0, inp.x, inp.params.log_z, inp.zeta, "low_temperature",
                       math.nan, coeff, coeff * inp.a**d * inp.rho0 ** (2 + 2 / d), delta, None,
                       inp.dilute, checks)


def main_bound(inp: BoundInputs) -> BoundReport:
    """Low-temperature branch above the zeta threshold, high-temperature branch below."""
    if not inp.dilute:
        raise DomainError(f"a^d rho0 = {inp.x:.3g} is not below the diluteness constant")
    if inp.zeta >= regime_threshold(inp.d, inp.x, inp.registry):
        rep = low_temp_bound(inp, check_legendre=False)
    else:
        rep = high_temp_bound(inp)
    rep.checks["final_delta"] = final_delta(inp.d, inp.x)
    rep.checks["balanced_delta"] = balanced_delta(inp.d, inp.x)
    return rep


# ---------------------------------------------------------------- two-body leading term

def two_body_leading(energy_moment_2: float, rho2_coefficient: float) -> float:
    """Per-volume two-body energy: (integral of (|grad f|^2 + v f^2/2)|x|^2) times the |x|^2 coefficient of rho^(2)."""
    return energy_moment_2 * rho2_coefficient


def leading_term(params: GrandParams, a: float) -> float:
    d = params.d
    return correction_coefficient(params) * a**d * free_density(params) ** (2 + 2 / d)


# ---------------------------------------------------------------- density of the trial state

def density_deviation_envelope(rho0: float, d: int, I_x2g: float, I_g: float, I_gamma: float,
                               registry: ConstantRegistry | None = None,
                               tau0: float | None = None) -> Envelope:
    """Bound on |<N>_J / volume - rho0| from the first diagrams plus the tail.

    The one-g term is controlled by I_{|x|^2 g} rho0 tau0, where tau0 is the
    kinetic density L^{-d} sum_k e(k) gamma_hat(k).  Without ``tau0`` the
    degenerate-gas scaling tau0 ~ rho0^{1+2/d} is used; away from degeneracy
    the thermal value 1/beta per particle dominates and tau0 must be passed.
    """
    reg = registry or default_registry()
    kinetic = rho0 ** (1 + 2 / d) if tau0 is None else tau0
    return Envelope(1.0, {
        "I_x2g rho tau": reg["density.quadratic"] * I_x2g * rho0 * kinetic,
        "I_g^2 I_gamma^2 rho^3": reg["density.loop"] * I_g**2 * I_gamma**2 * rho0**3,
        "I_g^2 rho^3": reg["density.tree"] * I_g**2 * rho0**3,
    })


# ---------------------------------------------------------------- density from the pressure bound

@dataclass(frozen=True)
class DensityDeviation:
    relative: float        # optimized bound on |rho - rho0| / rho0
    eps: float             # optimal shift of mu
    quotient_term: float   # (psi0(mu+eps) - psi0(mu))/eps - rho0
    error_term: float      # C a^d rho0^{2+2/d} / eps


def _shift_terms(inp: BoundInputs, eps: float) -> tuple[float, float]:
    p = inp.params
    psi = free_pressure(p)
    quotient = (free_pressure(p.with_mu(p.mu + eps)) - psi) / eps - inp.rho0
    error = inp.registry["density.shift"] * inp.a**inp.d * inp.rho0 ** (2 + 2 / inp.d) / eps
    return quotient, error


def rho_vs_rho0(inp: BoundInputs) -> DensityDeviation:
    """Optimize the difference-quotient bound on the density over the shift eps."""
    if inp.a == 0:
        return DensityDeviation(0.0, math.inf, 0.0, 0.0)
    # natural scale of mu: the Fermi energy or the temperature, whichever is larger
    scale = max(1.0 / inp.params.beta, abs(inp.params.mu))
    fun = lambda t: sum(_shift_terms(inp, scale * math.exp(t)))
    res = minimize_scalar(fun, bounds=(math.log(1e-14), math.log(10.0)), method="bounded",
                          options={"xatol": 1e-10})
    eps = scale * math.exp(res.x)
    q, e = _shift_terms(inp, eps)
    return DensityDeviation((q + e) / inp.rho0, eps, q, e)
