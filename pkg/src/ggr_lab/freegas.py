"""The free Fermi gas on a periodic box: momentum lattice, one-particle kernel
and the Wick determinants built from it.

Conventions on the torus [0, L)^d sampled by the grid x = h*j, j in Z_M^d:

    gamma(x)   = L^{-d} sum_k gamma_hat(k) e^{-i k.x},    k = 2 pi n / L,
    g_hat(q)   = h^d sum_x g(x) e^{+i q.x},

with n running over the Brillouin zone Z_M^d of the grid.  With these
conventions the position and momentum representations are exact duals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DomainError, PreconditionError, RefinementError
from .thermo import GrandParams, free_density, polylog_neg, sphere_area

DEFAULT_TRUNC_TOL = 1e-12


def _fft_ints(M: int) -> np.ndarray:
    """Integer labels 0, 1, ..., -1 of Z_M in FFT order."""
    return np.fft.fftfreq(M, 1.0 / M).round().astype(np.int64)


@dataclass(frozen=True, eq=False)
class DiscreteTorusModel:
    """Free Fermi gas on a periodic box of side L with M grid points per side.

    ``dispersion`` is ``"continuum"`` (|k|^2, the box of the continuum gas) or
    ``"lattice"`` (sum_i (2 - 2 cos(k_i h)) / h^2, the discrete Laplacian used
    by the exact Fock-space oracle).
    """

    L: float
    d: int
    M: int
    params: GrandParams
    dispersion: str = "continuum"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def n_sites(self) -> int:
        return self.M**self.d

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.d

    def momentum_components(self) -> list[np.ndarray]:
        k1 = 2.0 * math.pi * _fft_ints(self.M) / self.L
        return list(np.meshgrid(*([k1] * self.d), indexing="ij"))

    def _energy_1d(self, k: np.ndarray) -> np.ndarray:
        if self.dispersion == "lattice":
            return (2.0 - 2.0 * np.cos(k * self.h)) / self.h**2
        return k * k

    @cached_property
    def energies(self) -> np.ndarray:
        """One-particle energies on the momentum lattice, FFT order."""
        k1 = 2.0 * math.pi * _fft_ints(self.M) / self.L
        e1 = self._energy_1d(k1)
        out = np.zeros(self.shape)
        for axis in range(self.d):
            sh = [1] * self.d
            sh[axis] = self.M
            out = out + e1.reshape(sh)
        return out

    @cached_property
    def gamma_hat(self) -> np.ndarray:
        """Fermi occupation z e^{-beta e}/(1 + z e^{-beta e}) on the momentum lattice."""
        p = self.params
        return special.expit(p.log_z - p.beta * self.energies)

    @cached_property
    def density(self) -> float:
        """Finite-box density rho0(L) = L^{-d} sum_k gamma_hat(k)."""
        return float(self.gamma_hat.sum()) / self.L**self.d

    @cached_property
    def gamma_kernel(self) -> np.ndarray:
        """gamma(x) on the position grid (real and even), index j <-> x = h j."""
        if self.n_sites > 2**26:
            raise RefinementError(f"full kernel with {self.n_sites} sites is too large; use axis_kernel",
                                  needed=None)
        return np.real(np.fft.fftn(self.gamma_hat)) / self.L**self.d

    def derivative_kernel(self, axes: tuple) -> np.ndarray:
        """Spectral derivative d/dx_{axes[0]} d/dx_{axes[1]} ... of gamma on the grid."""
        comps = self.momentum_components()
        mult = np.ones(self.shape, dtype=complex)
        for a in axes:
            kk = comps[a].astype(complex)
            if self.M % 2 == 0:
                # the Nyquist mode has no odd derivative on a real grid
                kk[tuple(self.M // 2 if i == a else slice(None) for i in range(self.d))] = 0.0
            mult = mult * (-1j * kk)
        return np.real(np.fft.fftn(mult * self.gamma_hat)) / self.L**self.d

    def axis_kernel(self, cutoff: float = 1e-18) -> np.ndarray:
        """gamma(x e_1) for x = h j, j = 0..M-1, without the full d-dim table.

        The momentum sum over the transverse components is done first and
        only over the modes where gamma_hat exceeds ``cutoff``.
        """
        if self.d == 1:
            return np.real(np.fft.fft(self.gamma_hat)) / self.L
        p = self.params
        ints = _fft_ints(self.M)
        k1 = 2.0 * math.pi * ints / self.L
        e1 = self._energy_1d(k1)
        keep = special.expit(p.log_z - p.beta * e1) > cutoff
        ek = e1[keep]
        # transverse energies over the kept 1-D modes, broadcast over d-1 axes
        trans = np.zeros((len(ek),) * (self.d - 1))
        for axis in range(self.d - 1):
            sh = [1] * (self.d - 1)
            sh[axis] = len(ek)
            trans = trans + ek.reshape(sh)
        marginal = np.zeros(self.M)
        idx = np.nonzero(keep)[0]
        for i in idx:
            marginal[i] = special.expit(p.log_z - p.beta * (e1[i] + trans)).sum()
        return np.real(np.fft.fft(marginal)) / self.L**self.d

    def kernel_at(self, displacement) -> np.ndarray:
        """gamma at arbitrary displacements (..., d) by direct momentum summation."""
        disp = np.asarray(displacement, dtype=float)
        comps = [c.ravel() for c in self.momentum_components()]
        gh = self.gamma_hat.ravel()
        keep = gh > 1e-18
        kmat = np.stack([c[keep] for c in comps], axis=1)
        phase = disp.reshape(-1, self.d) @ kmat.T
        vals = np.cos(phase) @ gh[keep] / self.L**self.d
        return vals.reshape(disp.shape[:-1])

    def positions(self) -> np.ndarray:
        """Minimum-image coordinates of the grid, shape (M,)*d + (d,)."""
        x1 = self.h * _fft_ints(self.M)
        return np.stack(np.meshgrid(*([x1] * self.d), indexing="ij"), axis=-1)

    def radii(self) -> np.ndarray:
        return np.sqrt((self.positions() ** 2).sum(axis=-1))

    def transform(self, g: np.ndarray) -> np.ndarray:
        """Grid transform g_hat(q) = h^d sum_x g(x) e^{iqx}, FFT order."""
        g = np.asarray(g).reshape(self.shape)
        return self.h**self.d * self.n_sites * np.fft.ifftn(g)


def _needed_M(L: float, params: GrandParams, tol: float) -> int:
    need = (L / math.pi) * math.sqrt(max(params.log_z - math.log(tol), 1.0) / params.beta)
    m = max(8, int(math.ceil(need)))
    return m + (m % 2)


def build_model(L: float, d: int, M: int, params: GrandParams,
                trunc_tol: float = DEFAULT_TRUNC_TOL) -> DiscreteTorusModel:
    """Continuum free gas on the box [0, L)^d truncated to the Brillouin zone of an M-grid."""
    if params.d != d:
        raise DomainError(f"model dimension {d} does not match params dimension {params.d}")
    if not L > 0:
        raise DomainError(f"box side must be positive, got {L}")
    if M < 8 or M % 2:
        raise DomainError(f"grid size must be even and >= 8, got {M}")
    kedge = math.pi * M / L
    edge = special.expit(params.log_z - params.beta * kedge**2)
    if edge >= trunc_tol:
        needed = _needed_M(L, params, trunc_tol)
        raise RefinementError(
            f"occupation at the zone edge is {edge:.2e} >= {trunc_tol:.0e}; need M >= {needed}",
            needed=needed)
    model = DiscreteTorusModel(float(L), d, int(M), params, "continuum")
    _self_test(model)
    return model


def lattice_model(M: int, d: int, params: GrandParams) -> DiscreteTorusModel:
    """Free fermions hopping on the lattice Z_M^d (unit spacing)."""
    if params.d != d:
        raise DomainError(f"model dimension {d} does not match params dimension {params.d}")
    if M < 2:
        raise DomainError(f"lattice needs at least 2 sites per side, got {M}")
    model = DiscreteTorusModel(float(M), d, int(M), params, "lattice")
    _self_test(model)
    return model


def _self_test(model: DiscreteTorusModel) -> None:
    if model.n_sites > 2**22:
        return
    g0 = float(model.gamma_kernel.flat[0])
    if abs(g0 - model.density) > 1e-12 * max(1.0, model.density):
        raise RefinementError("kernel self-test failed: gamma(0) differs from the mean occupation")


def sample_radial_on_torus(model: DiscreteTorusModel, radial: Callable[[np.ndarray], np.ndarray],
                           support: float | None = None) -> np.ndarray:
    """Sample a radial function on the grid using minimum-image distances.

    ``support`` (the radius beyond which the function vanishes) must not
    exceed L/2, otherwise the periodic images would overlap.
    """
    if support is not None and support > model.L / 2.0 + 1e-12:
        raise PreconditionError(f"support radius {support} exceeds half the box side {model.L / 2}")
    return np.asarray(radial(model.radii()), dtype=float)


def sample_jastrow(model: DiscreteTorusModel, jastrow) -> np.ndarray:
    """g = f^2 - 1 of a JastrowFactor sampled on the torus grid."""
    return sample_radial_on_torus(model, jastrow.g, support=jastrow.b)


# ---------------------------------------------------------------- Wick densities

def _kernel_lookup(model: DiscreteTorusModel, diff: np.ndarray) -> np.ndarray:
    idx = tuple(np.mod(diff[..., a], model.M) for a in range(model.d))
    return model.gamma_kernel[idx]


def wick_density(model: DiscreteTorusModel, points) -> np.ndarray:
    """rho^(q)(x_1..x_q) = det[gamma(x_i - x_j)] for grid points.

    ``points`` holds integer grid indices with shape (q, d), or (..., q, d)
    for a batch of configurations.
    """
    pts = np.asarray(points)
    if not np.issubdtype(pts.dtype, np.integer):
        raise DomainError("wick_density takes integer grid indices; use kernel_at for off-grid points")
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[-2] < 1:
        raise DomainError("need at least one point")
    diff = pts[..., :, None, :] - pts[..., None, :, :]
    mat = _kernel_lookup(model, diff)
    out = np.linalg.det(mat)
    return out if out.ndim else float(out)


def _fit_quadratic(r: np.ndarray, y: np.ndarray) -> float:
    basis = np.stack([r**2, r**4], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(coef[0])


def rho2_quadratic_coefficient(model: DiscreteTorusModel, window_factor: float = 0.05) -> float:
    """Coefficient of |x1 - x2|^2 in rho^(2) at small separation.

    rho^(2)(0, r e_1) = rho0^2 - gamma(r e_1)^2 is fitted by c2 r^2 + c4 r^4
    over grid points 0 < r <= window_factor * rho0^{-1/d}.
    """
    rho0 = model.density
    window = window_factor * rho0 ** (-1.0 / model.d)
    n_pts = int(math.floor(window / model.h + 1e-9))
    if n_pts < 4:
        needed = int(math.ceil(4 * model.L / window))
        raise RefinementError(f"fit window holds {n_pts} grid points (< 4); need M >= {needed + needed % 2}",
                              needed=needed + needed % 2)
    g_axis = model.axis_kernel()
    g0 = g_axis[0]
    j = np.arange(1, n_pts + 1)
    r = model.h * j
    # rho0^2 - gamma^2 written as (g0 - g)(g0 + g) to avoid cancellation
    y = (g0 - g_axis[j]) * (g0 + g_axis[j])
    return _fit_quadratic(r, y)


def rho2_coefficient_formula(params: GrandParams) -> float:
    """2 pi (-Li_{d/2+1}(-z)) / (-Li_{d/2}(-z))^{1+2/d} * rho0^{2+2/d}."""
    d = params.d
    rho0 = free_density(params)
    ratio = polylog_neg(d / 2 + 1, params.log_z) / polylog_neg(d / 2, params.log_z) ** (1 + 2 / d)
    return 2.0 * math.pi * ratio * rho0 ** (2.0 + 2.0 / d)


# ---------------------------------------------------------------- momentum sums

def _boltzmann_moment_integrand(params: GrandParams, p: float, n: int, m: int):
    lz, beta = params.log_z, params.beta

    def fn(k):
        w = np.exp(lz - beta * k * k)
        return k**p * w**n / (1.0 + w) ** m
    return fn


def momentum_moment(model: DiscreteTorusModel, p: float, n: int, m: int) -> float:
    """L^{-d} sum_k |k|^p w^n / (1 + w)^m with w = z e^{-beta |k|^2}."""
    if not (1 <= n <= m) or p < 0:
        raise DomainError(f"need 1 <= n <= m and p >= 0, got p={p}, n={n}, m={m}")
    prm = model.params
    k2 = sum(c * c for c in model.momentum_components())
    w = np.exp(prm.log_z - prm.beta * k2)
    vals = k2 ** (p / 2.0) * w**n / (1.0 + w) ** m
    return float(vals.sum()) / model.L**model.d


def momentum_moment_continuum(params: GrandParams, p: float, n: int, m: int) -> float:
    """(2 pi)^{-d} int |k|^p w^n / (1 + w)^m dk by radial quadrature."""
    d = params.d
    fn = _boltzmann_moment_integrand(params, p + d - 1, n, m)
    kstar = math.sqrt(max(params.log_z, 0.0) / params.beta)
    pts = [0.0, kstar] if kstar > 0 else [0.0]
    total = 0.0
    for lo, hi in zip(pts, pts[1:] + [np.inf]):
        val, _ = integrate.quad(fn, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return sphere_area(d) * total / (2.0 * math.pi) ** d


# ---------------------------------------------------------------- kernel moments

@dataclass(frozen=True)
class KernelMoments:
    I_gamma: float
    I_dgamma: float
    I_d2gamma: float


def kernel_moments(model: DiscreteTorusModel) -> KernelMoments:
    """L^1 norms over the box of gamma, its gradient and its Hessian.

    The gradient and Hessian norms sum |partial_i gamma| and
    |partial_i partial_j gamma| over the components.
    """
    dv = model.h**model.d
    i_gamma = dv * float(np.abs(model.gamma_kernel).sum())
    i_d = sum(dv * float(np.abs(model.derivative_kernel((a,))).sum()) for a in range(model.d))
    i_dd = 0.0
    for a in range(model.d):
        for b in range(model.d):
            i_dd += dv * float(np.abs(model.derivative_kernel((a, b))).sum())
    return KernelMoments(i_gamma, i_d, i_dd)


def jastrow_integral(model: DiscreteTorusModel, g: np.ndarray) -> float:
    """I_g on the grid, h^d sum |g|."""
    return model.h**model.d * float(np.abs(g).sum())
