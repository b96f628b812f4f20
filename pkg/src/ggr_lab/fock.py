"""Exact Fock-space computations for a small lattice Fermi gas.

Spinless fermions hop on the periodic lattice Z_M^d with the discrete
Laplacian.  The trial state is Gamma_J = F Gamma F / Z_J with
F = prod_{i<j} f(x_i - x_j) diagonal in the occupation basis.  Everything is
computed sector by sector in the particle number.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, SizeGuardError
from .freegas import DiscreteTorusModel, lattice_model
from .thermo import GrandParams

MAX_SITES = 14


@dataclass(frozen=True, eq=False)
class LatticeModel:
    """Lattice gas on Z_M^d; pair functions are given per displacement.

    ``f`` and ``v`` are arrays of shape (M,)*d indexed by the displacement
    x_i - x_j mod M.  ``f[0]`` never enters the exact state (two fermions
    cannot share a site) but it does enter the diagram values through
    g(0) = f(0)^2 - 1.
    """

    M: int
    d: int
    beta: float
    mu: float
    f: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise DomainError("the oracle supports d = 1 and d = 2")
        if self.M**self.d > MAX_SITES:
            raise SizeGuardError(f"{self.M ** self.d} sites exceed the Fock-space guard {MAX_SITES}")
        f = np.asarray(self.f, dtype=float).reshape((self.M,) * self.d)
        v = np.asarray(self.v, dtype=float).reshape((self.M,) * self.d)
        if np.any(f < 0) or np.any(f > 1):
            raise DomainError("the pair factor f must satisfy 0 <= f <= 1")
        if np.any(v < 0):
            raise DomainError("the pair potential must be non-negative")
        if not np.allclose(f, _reflect(f)) or not np.allclose(v, _reflect(v)):
            raise DomainError("pair functions must be even in the displacement")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "v", v)

    @property
    def n_sites(self) -> int:
        return self.M**self.d

    @property
    def params(self) -> GrandParams:
        return GrandParams(self.d, self.beta, self.mu)

    def coords(self) -> np.ndarray:
        return np.array(list(itertools.product(range(self.M), repeat=self.d)), dtype=np.int64)

    def hopping_matrix(self) -> np.ndarray:
        """Discrete -Laplacian with periodic boundary conditions."""
        n = self.n_sites
        c = self.coords()
        index = {tuple(x): i for i, x in enumerate(c)}
        h = np.zeros((n, n))
        for i, x in enumerate(c):
            h[i, i] += 2.0 * self.d
            for a in range(self.d):
                for s in (1, -1):
                    y = x.copy()
                    y[a] = (y[a] + s) % self.M
                    h[i, index[tuple(y)]] -= 1.0
        return h

    def pair_table(self, values: np.ndarray) -> np.ndarray:
        c = self.coords()
        diff = np.mod(c[:, None, :] - c[None, :, :], self.M)
        return values[tuple(diff[..., a] for a in range(self.d))]

    def free_model(self) -> DiscreteTorusModel:
        return lattice_model(self.M, self.d, self.params)

    def g(self) -> np.ndarray:
        return self.f**2 - 1.0

    def with_beta(self, beta: float) -> "LatticeModel":
        return LatticeModel(self.M, self.d, beta, self.mu, self.f, self.v)


def _reflect(a: np.ndarray) -> np.ndarray:
    out = a
    for axis in range(a.ndim):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


# ---------------------------------------------------------------- Fock sectors

@dataclass(frozen=True, eq=False)
class Sector:
    n: int
    states: np.ndarray        # (dim, n) occupied sites, ascending
    occupation: np.ndarray    # (dim, sites) 0/1
    hamiltonian: np.ndarray   # hopping part only
    energies: np.ndarray
    vectors: np.ndarray
    f_squared: np.ndarray     # F^2 per basis state
    interaction: np.ndarray   # V per basis state


def _sector(model: LatticeModel, hop: np.ndarray, ftab: np.ndarray, vtab: np.ndarray, n: int) -> Sector:
    sites = model.n_sites
    combos = list(itertools.combinations(range(sites), n))
    states = np.array(combos, dtype=np.int64).reshape(len(combos), n)
    dim = len(states)
    occ = np.zeros((dim, sites), dtype=np.int64)
    if n:
        occ[np.arange(dim)[:, None], states] = 1
    lookup = {tuple(s): i for i, s in enumerate(states)}
    H = np.zeros((dim, dim))
    for i, s in enumerate(states):
        occ_i = occ[i]
        H[i, i] = hop[s, s].sum()
        for pos, x in enumerate(s):
            for y in np.nonzero(hop[:, x])[0]:
                if y == x or occ_i[y]:
                    continue
                # c_y^dagger c_x with the ordering sign from the sites in between
                lo, hi = (x, y) if x < y else (y, x)
                between = int(occ_i[lo + 1:hi].sum())
                new = tuple(sorted(set(s) - {x} | {int(y)}))
                H[lookup[new], i] += hop[y, x] * (-1) ** between
    E, U = np.linalg.eigh(H)
    f2 = np.ones(dim)
    vint = np.zeros(dim)
    for a, b in itertools.combinations(range(n), 2):
        f2 *= ftab[states[:, a], states[:, b]] ** 2
        vint += vtab[states[:, a], states[:, b]]
    return Sector(n, states, occ, H, E, U, f2, vint)


@dataclass(frozen=True, eq=False)
class ExactState:
    model: LatticeModel
    sectors: tuple
    log_z: float            # log Z of the free Gibbs state (determinant identity)
    log_zj: float           # log Z_J
    gamma: np.ndarray       # one-particle kernel of the free Gibbs state
    log_ratio: float        # log(Z_J / Z), computed without cancellation


def _weights(model: LatticeModel, sec: Sector) -> np.ndarray:
    return model.beta * (model.mu * sec.n - sec.energies)


def build_sectors(model: LatticeModel) -> tuple:
    hop = model.hopping_matrix()
    ftab = model.pair_table(model.f)
    vtab = model.pair_table(model.v)
    return tuple(_sector(model, hop, ftab, vtab, n) for n in range(model.n_sites + 1))


def exact_free_state(model: LatticeModel, sectors: tuple | None = None) -> tuple[float, np.ndarray, float]:
    """(log Z via det(1 + e^{-beta(h - mu)}), gamma^(1), log Z via the Fock trace)."""
    hop = model.hopping_matrix()
    eps, U = np.linalg.eigh(hop)
    x = model.beta * (model.mu - eps)
    log_z_det = float(np.logaddexp(0.0, x).sum())
    occ = 1.0 / (1.0 + np.exp(-x))
    gamma = (U * occ) @ U.T
    sectors = sectors or build_sectors(model)
    log_z_trace = float(logsumexp(np.concatenate([_weights(model, s) for s in sectors])))
    return log_z_det, gamma, log_z_trace


def _log_zj_terms(model: LatticeModel, sec: Sector) -> tuple[np.ndarray, np.ndarray]:
    w = (sec.vectors**2 * sec.f_squared[:, None]).sum(axis=0)
    return _weights(model, sec), w


def log_zj(model: LatticeModel, sectors: tuple) -> float:
    logs, ws = [], []
    for sec in sectors:
        lw, w = _log_zj_terms(model, sec)
        logs.append(lw); ws.append(w)
    logs = np.concatenate(logs); ws = np.concatenate(ws)
    keep = ws > 0
    return float(logsumexp(logs[keep], b=ws[keep]))


def log_ratio(model: LatticeModel, sectors: tuple, log_z_trace: float) -> float:
    """log(Z_J / Z) = log(1 + <F^2 - 1>_0), exactly 0 when f = 1."""
    mean = 0.0
    for sec in sectors:
        p = np.exp(_weights(model, sec) - log_z_trace)
        excess = (sec.vectors**2 * (sec.f_squared - 1.0)[:, None]).sum(axis=0)
        mean += float(np.dot(p, excess))
    return math.log1p(mean)


def exact_jastrow_state(model: LatticeModel) -> ExactState:
    sectors = build_sectors(model)
    log_z, gamma, log_z_trace = exact_free_state(model, sectors)
    ratio = log_ratio(model, sectors, log_z_trace)
    return ExactState(model, sectors, log_z, log_z_trace + ratio, gamma, ratio)


def dbeta_log_zj(state: ExactState) -> float:
    """d/dbeta log Z_J at fixed mu, from the spectral representation."""
    m = state.model
    num = 0.0
    for sec in state.sectors:
        lw, w = _log_zj_terms(m, sec)
        num += float(np.sum(np.exp(lw - state.log_zj) * w * (m.mu * sec.n - sec.energies)))
    return num


def dbeta_log_zj_numeric(model: LatticeModel, rel_step: float = 1e-4) -> float:
    """Symmetric difference with one Richardson step (steps h and h/2)."""
    def lz(beta):
        m = model.with_beta(beta)
        return log_zj(m, build_sectors(m))

    h = rel_step * model.beta
    d1 = (lz(model.beta + h) - lz(model.beta - h)) / (2 * h)
    d2 = (lz(model.beta + h / 2) - lz(model.beta - h / 2)) / h
    return (4 * d2 - d1) / 3


def diagonal_weights(state: ExactState, sec: Sector) -> np.ndarray:
    """<s| e^{beta(mu N - H)} |s> / Z_J for every basis state of a sector."""
    lw = _weights(state.model, sec) - state.log_zj
    return (sec.vectors**2 * np.exp(lw)[None, :]).sum(axis=1)


def reduced_density(state: ExactState, sites) -> float:
    """rho_J^(q) at distinct lattice sites (flat site indices)."""
    sites = list(sites)
    if len(set(sites)) < len(sites):
        return 0.0
    total = 0.0
    for sec in state.sectors:
        if sec.n < len(sites):
            continue
        mask = np.all(sec.occupation[:, sites] == 1, axis=1)
        if mask.any():
            total += float(np.sum(sec.f_squared[mask] * diagonal_weights(state, sec)[mask]))
    return total


def mean_particle_number(state: ExactState) -> float:
    return sum(float(np.sum(sec.n * sec.f_squared * diagonal_weights(state, sec))) for sec in state.sectors)


def _sector_density_matrix(state: ExactState, sec: Sector) -> np.ndarray:
    lw = _weights(state.model, sec) - state.log_zj
    gam = (sec.vectors * np.exp(lw)) @ sec.vectors.T
    F = np.sqrt(sec.f_squared)
    return F[:, None] * gam * F[None, :]


def jastrow_spectrum(state: ExactState) -> np.ndarray:
    """Eigenvalues of Gamma_J, via the isospectral Gamma^{1/2} F^2 Gamma^{1/2}."""
    out = []
    for sec in state.sectors:
        lw = _weights(state.model, sec) - state.log_zj
        half = sec.vectors * np.exp(0.5 * lw)[None, :]          # U D^{1/2}
        B = half.T @ (sec.f_squared[:, None] * half)            # D^{1/2} U^T F^2 U D^{1/2}
        out.append(np.linalg.eigvalsh(B))
    return np.concatenate(out)


def entropy(spectrum: np.ndarray) -> float:
    lam = spectrum[spectrum > 0]
    return float(-np.sum(lam * np.log(lam)))


def entropy_margin(state: ExactState, dbeta: float | None = None) -> float:
    """RHS - LHS of  -S(Gamma_J)/beta <= -log(Z_J)/beta + d/dbeta log Z_J."""
    m = state.model
    s = entropy(jastrow_spectrum(state))
    db = dbeta_log_zj(state) if dbeta is None else dbeta
    return (-state.log_zj / m.beta + db) - (-s / m.beta)


def pressure_functional(state: ExactState) -> float:
    """P[Gamma_J] with -|Lambda| P = Tr[(H - mu N + V) Gamma_J] - S / beta."""
    m = state.model
    energy = 0.0
    for sec in state.sectors:
        rho = _sector_density_matrix(state, sec)
        K = sec.hamiltonian + np.diag(sec.interaction - m.mu * sec.n)
        energy += float(np.sum(rho * K))
    s = entropy(jastrow_spectrum(state))
    return -(energy - s / m.beta) / m.n_sites


def gibbs_pressure(model: LatticeModel, sectors: tuple | None = None) -> float:
    """Pressure of the interacting Gibbs state, (1/(beta |Lambda|)) log Tr e^{-beta(H - mu N + V)}."""
    sectors = sectors or build_sectors(model)
    logs = []
    for sec in sectors:
        e = np.linalg.eigvalsh(sec.hamiltonian + np.diag(sec.interaction))
        logs.append(model.beta * (model.mu * sec.n - e))
    return float(logsumexp(np.concatenate(logs))) / (model.beta * model.n_sites)


def free_pressure(state: ExactState) -> float:
    return state.log_z / (state.model.beta * state.model.n_sites)


# ---------------------------------------------------------------- comparison with the series

@dataclass(frozen=True)
class GGRComparison:
    exact: float
    truncated: tuple       # truncated series for p_max = 2 .. p_max
    residuals: tuple
    tail: float
    rho0_Ig: float
    rho0_Ig_Igamma: float
    in_regime: bool
    entropy_margin: float


def lattice_torus_data(model: LatticeModel):
    from .diagrams.engines import TorusData
    return TorusData(model.free_model(), model.g())


def compare_ggr(model: LatticeModel, p_max: int, registry=None, method: str = "diagrams",
                state: ExactState | None = None) -> GGRComparison:
    from .diagrams.expansion import zj_expansion

    state = state or exact_jastrow_state(model)
    data = lattice_torus_data(model)
    series = zj_expansion(data, p_max, registry=registry, method=method)
    partial = np.cumsum(series.terms)
    truncated = tuple(float(partial[p]) for p in range(2, p_max + 1))
    residuals = tuple(abs(state.log_ratio - t) for t in truncated)
    fm = data.model
    rho0 = fm.density
    I_g = float(np.abs(data.flat_g).sum())
    I_gamma = float(np.abs(data.gamma).sum())
    return GGRComparison(
        exact=state.log_ratio, truncated=truncated, residuals=residuals, tail=series.tail,
        rho0_Ig=rho0 * I_g, rho0_Ig_Igamma=rho0 * I_g * I_gamma,
        in_regime=rho0 * I_g * I_gamma < 0.2, entropy_margin=entropy_margin(state),
    )


@dataclass(frozen=True)
class DensityCheck:
    deviation: float      # |<N>_J / sites - rho0|
    rho0: float
    I_x2g: float
    I_g: float
    I_gamma: float
    tau0: float           # kinetic density of the free state

    def envelope(self, d: int, registry=None):
        from .bounds import density_deviation_envelope
        return density_deviation_envelope(self.rho0, d, self.I_x2g, self.I_g, self.I_gamma,
                                          registry, tau0=self.tau0)


def density_check(state: ExactState) -> DensityCheck:
    """Exact <N>_J per site against rho0, with the norms entering its envelope."""
    m = state.model
    fm = m.free_model()
    g = np.abs(m.g())
    ints = np.arange(m.M)
    r1 = np.minimum(ints, m.M - ints) ** 2
    r2 = sum(np.meshgrid(*([r1] * m.d), indexing="ij"))
    rho0 = fm.density
    return DensityCheck(
        deviation=abs(mean_particle_number(state) / m.n_sites - rho0),
        rho0=rho0,
        I_x2g=float((r2 * g).sum()),
        I_g=float(g.sum()),
        I_gamma=float(np.abs(fm.gamma_kernel).sum()),
        tau0=float((fm.energies * fm.gamma_hat).sum()) / m.n_sites,
    )


def random_weak_model(rng: np.random.Generator, M: int, strength: float = 0.05,
                      d: int = 1, beta_range=(0.5, 2.0), mu_range=(-1.0, 1.0)) -> LatticeModel:
    """A random lattice model with a short-ranged, weak Jastrow factor."""
    shape = (M,) * d
    coords = np.stack(np.meshgrid(*([np.arange(M)] * d), indexing="ij"), axis=-1)
    dist = np.sqrt((np.minimum(coords, M - coords) ** 2).sum(axis=-1))
    width = rng.uniform(0.6, 1.5)
    depth = rng.uniform(0.3, 1.0) * strength
    g = -depth * np.exp(-(dist / width) ** 2)
    g[dist > M / 2 - 1] = 0.0
    f = np.sqrt(1.0 + g)
    v = rng.uniform(0.0, 2.0) * np.exp(-dist**2) * (dist > 0)
    beta = rng.uniform(*beta_range)
    mu = rng.uniform(*mu_range)
    return LatticeModel(M, d, beta, mu, f.reshape(shape), v.reshape(shape))
