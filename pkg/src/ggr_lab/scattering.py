"""p-wave scattering for radial repulsive potentials and the cut-off Jastrow factor.

The scattering function f0 minimizes  int (|grad f|^2 + v f^2 / 2) |x|^2 dx
with f0 -> 1 at infinity.  Radially this gives the Euler-Lagrange equation

    -(r^{d+1} f0')' + (1/2) v r^{d+1} f0 = 0,

and outside the support of v the solution is 1 - a^d / r^d, which defines the
scattering length a.  The minimum value is c_d a^d with c_d = d |S^{d-1}|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import DomainError, InputError, PreconditionError, SolverError
from .thermo import SCATTERING_CONSTANT, sphere_area


# ============================================================ potentials

@dataclass(frozen=True)
class HardCore:
    radius: float
    d: int = 3

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"hard-core radius must be positive, got {self.radius}")
        _check_dim(self.d)

    kind = "hardcore"
    hard_core = True

    @property
    def support_radius(self) -> float:
        return self.radius

    @property
    def breakpoints(self) -> tuple:
        return ()

    def inside(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True)
class SoftSphere:
    height: float
    radius: float
    d: int = 3

    def __post_init__(self):
        if self.height < 0:
            raise DomainError(f"potential must be non-negative, got V0={self.height}")
        if not self.radius > 0:
            raise DomainError(f"soft-sphere radius must be positive, got {self.radius}")
        _check_dim(self.d)

    kind = "softsphere"
    hard_core = False

    @property
    def support_radius(self) -> float:
        return self.radius

    @property
    def breakpoints(self) -> tuple:
        return (0.0, self.radius)

    def inside(self, r):
        """v on the closed support [0, R] (left limit at R)."""
        return np.full_like(np.asarray(r, dtype=float), self.height)


@dataclass(frozen=True)
class TabulatedRadial:
    r: tuple
    v: tuple
    d: int = 3
    _interp: Callable = field(init=False, repr=False, compare=False)

    kind = "tabulated"
    hard_core = False

    def __post_init__(self):
        _check_dim(self.d)
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise DomainError("tabulated potential needs matching 1-D r and v arrays with >= 2 samples")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise DomainError("tabulated radii must be non-negative and strictly increasing")
        if np.any(v < 0):
            raise DomainError(f"negative potential sample {v.min()} (only repulsive potentials are supported)")
        if r[0] > 0:
            r = np.concatenate([[0.0], r])
            v = np.concatenate([[v[0]], v])
        object.__setattr__(self, "r", tuple(r))
        object.__setattr__(self, "v", tuple(v))
        # monotone cubic pieces keep v >= 0 between samples
        object.__setattr__(self, "_interp", PchipInterpolator(r, v, extrapolate=False))

    @property
    def support_radius(self) -> float:
        return self.r[-1]

    @property
    def breakpoints(self) -> tuple:
        return tuple(self.r)

    def inside(self, r):
        return np.clip(self._interp(np.asarray(r, dtype=float)), 0.0, None)


Potential = HardCore | SoftSphere | TabulatedRadial


def _check_dim(d):
    if d not in (1, 2, 3):
        raise DomainError(f"dimension must be 1, 2 or 3, got {d}")


def potential_value(pot: Potential, r) -> np.ndarray:
    """v(r) everywhere; +inf inside a hard core, 0 outside the support."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    R = pot.support_radius
    if pot.hard_core:
        out[r < R] = np.inf
        return out
    m = r <= R
    out[m] = pot.inside(r[m])
    return out


def potential_from_mapping(spec: Mapping[str, str]) -> Potential:
    """Build a potential from flat key=value entries.

    Keys: ``kind`` (hardcore | softsphere | tabulated), ``d``, then ``a0`` for
    a hard core, ``V0`` and ``R`` for a soft sphere, or ``table`` holding
    comma-separated ``r:v`` pairs for a tabulated potential.
    """
    def need(key, conv=float):
        if key not in spec:
            raise InputError(f"potential spec is missing required key '{key}'", key=key)
        try:
            return conv(str(spec[key]).strip())
        except ValueError:
            raise InputError(f"potential spec key '{key}' has invalid value {spec[key]!r}", key=key)

    kind = need("kind", str).lower()
    d = need("d", int)
    try:
        if kind in ("hardcore", "hard_core", "hard-core"):
            return HardCore(need("a0"), d)
        if kind in ("softsphere", "soft_sphere", "soft-sphere"):
            return SoftSphere(need("V0"), need("R"), d)
        if kind in ("tabulated", "table"):
            raw = need("table", str)
            pairs = [p.split(":") for p in raw.replace(";", ",").split(",") if p.strip()]
            try:
                rs = [float(a) for a, _ in pairs]
                vs = [float(b) for _, b in pairs]
            except ValueError:
                raise InputError("potential table must be comma-separated r:v pairs", key="table")
            return TabulatedRadial(tuple(rs), tuple(vs), d)
    except DomainError as exc:
        raise InputError(str(exc), key="kind") from exc
    raise InputError(f"unknown potential kind {kind!r}", key="kind")


# ============================================================ quadrature helpers

def _simpson_weights(n_intervals: int, h: float) -> np.ndarray:
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _geometric_gauss(fun, lo: float, hi: float, panels: int = 64) -> float:
    """Composite Gauss-Legendre on geometrically graded panels of [lo, hi]."""
    if hi <= lo:
        return 0.0
    if lo > 0:
        edges = np.geomspace(lo, hi, panels + 1)
    else:
        edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return float(np.dot(w, fun(x)))


# ============================================================ solution

@dataclass(frozen=True)
class ScatteringSolution:
    potential: Potential
    d: int
    a: float
    a_variational: float
    energy_integral: float
    unweighted_energy: float
    r_max: float
    r_nodes: np.ndarray = field(repr=False)
    f_nodes: np.ndarray = field(repr=False)
    fp_nodes: np.ndarray = field(repr=False)
    v_nodes: np.ndarray = field(repr=False)
    segments: tuple = field(repr=False)

    @property
    def support(self) -> float:
        return self.potential.support_radius

    @property
    def a_power(self) -> float:
        return self.a**self.d

    def f0(self, r) -> np.ndarray:
        return _evaluate(self, r, 1.0)[0]

    def f0_prime(self, r) -> np.ndarray:
        return _evaluate(self, r, 1.0)[1]

    def grid(self, n_exterior: int = 400):
        """f0 tabulated on [0, r_max]: solver nodes inside, geometric grid outside."""
        R = self.support
        ext = np.geomspace(R, self.r_max, n_exterior + 1)[1:]
        if self.potential.hard_core:
            r = np.concatenate([[0.0, R], ext])
        else:
            r = np.concatenate([self.r_nodes, ext])
        return r, self.f0(r)


def _evaluate(sol: ScatteringSolution, r, scale: float):
    r = np.asarray(r, dtype=float)
    f = np.empty_like(r)
    fp = np.zeros_like(r)
    R = sol.support
    A = sol.a_power
    d = sol.d
    out = r > R
    f[out] = scale * (1.0 - A / r[out] ** d)
    fp[out] = scale * d * A / r[out] ** (d + 1)
    ins = ~out
    if sol.potential.hard_core:
        f[ins] = 0.0
    elif np.any(ins):
        spline = CubicHermiteSpline(sol.r_nodes, sol.f_nodes, sol.fp_nodes)
        f[ins] = scale * spline(r[ins])
        fp[ins] = scale * spline(r[ins], 1)
    return f, fp


def _rk4_segment(d, vfun, r0, r1, n, f0, fp0):
    """Fixed-step RK4 for f'' = -(d+1)/r f' + v f / 2 on [r0, r1]."""
    h = (r1 - r0) / n
    r = r0 + h * np.arange(n + 1)
    v_full = vfun(r)
    v_half = vfun(r[:-1] + 0.5 * h)
    f = np.empty(n + 1)
    fp = np.empty(n + 1)
    f[0], fp[0] = f0, fp0

    def rhs(rr, vv, y, yp):
        if rr == 0.0:
            # regular point: f'' = v f / (2 (d+2)) at the origin
            return yp, 0.5 * vv * y / (d + 2.0)
        return yp, -(d + 1.0) / rr * yp + 0.5 * vv * y

    y, yp = f0, fp0
    for i in range(n):
        ri = r[i]
        k1 = rhs(ri, v_full[i], y, yp)
        k2 = rhs(ri + 0.5 * h, v_half[i], y + 0.5 * h * k1[0], yp + 0.5 * h * k1[1])
        k3 = rhs(ri + 0.5 * h, v_half[i], y + 0.5 * h * k2[0], yp + 0.5 * h * k2[1])
        k4 = rhs(ri + h, v_full[i + 1], y + h * k3[0], yp + h * k3[1])
        y = y + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        yp = yp + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        f[i + 1], fp[i + 1] = y, yp
    return r, f, fp, v_full


def solve_scattering(v: Potential, r_max: float, n_per_segment: int = 2000,
                     check_tol: float = 1e-8) -> ScatteringSolution:
    """Solve the p-wave scattering problem for ``v`` and tabulate f0 up to r_max.

    The regular solution is integrated outward through the support with RK4
    and matched to alpha (1 - A/r^d) at the support edge; a = A^{1/d}.  The
    scattering length is also recovered from the variational value
    energy_integral / c_d, and the two must agree to ``check_tol``.
    About ``n_per_segment`` RK4 steps span the support; they are shared among
    the smooth pieces of v by length (at least four per piece).
    """
    d = v.d
    R = v.support_radius
    if not r_max > 2.0 * R:
        raise PreconditionError(f"r_max={r_max} must exceed twice the support radius {R}")
    n = int(n_per_segment)
    n += n % 2
    S = sphere_area(d)

    if v.hard_core:
        # Dirichlet condition f0(R) = 0; with J = r^{d+1} f0' constant outside
        r_nodes = np.array([R])
        f_nodes = np.array([0.0])
        fp_nodes = np.array([1.0 / R ** (d + 1)])
        v_nodes = np.array([0.0])
        segments = ()
        inner_energy = 0.0
        inner_plain = 0.0
        f_R, J_R = 0.0, 1.0
    else:
        bps = sorted(set([0.0] + [b for b in v.breakpoints if 0.0 < b <= R] + [R]))
        rs, fs, fps, vs, segments = [], [], [], [], []
        f_cur, fp_cur = 1.0, 0.0
        inner_energy = 0.0
        inner_plain = 0.0
        for lo, hi in zip(bps[:-1], bps[1:]):
            # steps are shared out by segment length so dense tables stay cheap
            n_seg = max(4, int(math.ceil(n * (hi - lo) / R)))
            n_seg += n_seg % 2
            r_seg, f_seg, fp_seg, v_seg = _rk4_segment(d, v.inside, lo, hi, n_seg, f_cur, fp_cur)
            w = _simpson_weights(n_seg, (hi - lo) / n_seg)
            dens = fp_seg**2 + 0.5 * v_seg * f_seg**2
            inner_energy += float(np.dot(w, dens * r_seg ** (d + 1)))
            inner_plain += float(np.dot(w, dens * r_seg ** (d - 1)))
            segments.append((len(np.concatenate(rs)) if rs else 0, n_seg))
            sl = slice(1, None) if rs else slice(None)
            rs.append(r_seg[sl]); fs.append(f_seg[sl]); fps.append(fp_seg[sl]); vs.append(v_seg[sl])
            f_cur, fp_cur = f_seg[-1], fp_seg[-1]
        r_nodes = np.concatenate(rs)
        f_nodes = np.concatenate(fs)
        fp_nodes = np.concatenate(fps)
        v_nodes = np.concatenate(vs)
        f_R, J_R = f_cur, fp_cur * R ** (d + 1)

    # match f = alpha (1 - A/r^d), r^{d+1} f' = alpha d A at r = R
    alpha = f_R + J_R / (d * R**d)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise SolverError("matching to the exterior solution failed", residual=alpha)
    A = J_R / (d * alpha)
    if A < 0:
        raise SolverError("negative scattering volume from matching", residual=A)
    f_nodes = f_nodes / alpha
    fp_nodes = fp_nodes / alpha
    inner_energy /= alpha**2
    inner_plain /= alpha**2
    a = A ** (1.0 / d)

    ext_energy = _geometric_gauss(lambda r: (d * A) ** 2 / r ** (d + 1), R, r_max) + d * A**2 / r_max**d
    energy = S * (inner_energy + ext_energy)
    ext_plain = (d * A) ** 2 / (d + 2.0) / R ** (d + 2)
    unweighted = S * (inner_plain + ext_plain)
    a_var = (energy / SCATTERING_CONSTANT[d]) ** (1.0 / d)

    if a > 0 and abs(a_var - a) > check_tol * a:
        raise SolverError(f"matched a={a} and variational a={a_var} disagree", residual=abs(a_var - a) / a)
    return ScatteringSolution(
        potential=v, d=d, a=a, a_variational=a_var, energy_integral=energy,
        unweighted_energy=unweighted, r_max=float(r_max), r_nodes=r_nodes,
        f_nodes=f_nodes, fp_nodes=fp_nodes, v_nodes=v_nodes, segments=tuple(segments),
    )


def soft_sphere_scattering_length(V0: float, R: float, d: int) -> float:
    """Closed form for the soft sphere via modified Bessel functions.

    Inside, f0 is proportional to r^{-d/2} I_{d/2}(kappa r) with
    kappa = sqrt(V0/2); matching value and flux at R fixes a.
    """
    from scipy.special import ive

    if V0 == 0:
        return 0.0
    nu = d / 2.0
    kap = math.sqrt(V0 / 2.0)
    x = kap * R
    # f = r^{-nu} I_nu(kappa r);  r f'/f = x I_{nu+1}(x) / I_nu(x)
    logder = x * ive(nu + 1.0, x) / ive(nu, x)
    # 1 - A/R^d = c,  d A / R^d = c * logder  ->  A/R^d = logder / (d + logder)
    return R * (logder / (d + logder)) ** (1.0 / d)


# ============================================================ Jastrow factor

@dataclass(frozen=True)
class JastrowFactor:
    solution: ScatteringSolution
    b: float

    @property
    def d(self) -> int:
        return self.solution.d

    @property
    def a(self) -> float:
        return self.solution.a

    @property
    def scale(self) -> float:
        return 1.0 / (1.0 - self.solution.a_power / self.b**self.d)

    @property
    def potential(self) -> Potential:
        return self.solution.potential

    def f(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        val, _ = _evaluate(self.solution, r, self.scale)
        return np.where(r >= self.b, 1.0, val)

    def f_prime(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        _, der = _evaluate(self.solution, r, self.scale)
        return np.where(r >= self.b, 0.0, der)

    def g(self, r) -> np.ndarray:
        return self.f(r) ** 2 - 1.0


def build_jastrow(sol: ScatteringSolution, b: float) -> JastrowFactor:
    """Cut-off and rescaled scattering function with cutoff b."""
    R = sol.support
    if not b > R:
        raise PreconditionError(f"cutoff b={b} must exceed the potential support radius {R}")
    if not b > sol.a:
        raise PreconditionError(f"cutoff b={b} must exceed the scattering length {sol.a}")
    j = JastrowFactor(sol, float(b))
    fb = float(j.f(np.array([b * (1.0 - 1e-15)]))[0])
    if abs(fb - 1.0) > 1e-9:
        raise SolverError("Jastrow factor is not continuous at the cutoff", residual=fb - 1.0)
    return j


def _radial_moment(j: JastrowFactor, density, power: int) -> float:
    """|S^{d-1}| * int_0^b density(f, f', v, r) r^{power} dr."""
    sol = j.solution
    d = j.d
    s = j.scale
    total = 0.0
    R = sol.support
    if sol.potential.hard_core:
        # inside the core f = 0, f' = 0; the v f^2 term vanishes
        core = density(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1))
        if core[0] != 0.0:
            total += core[0] * R ** (power + 1) / (power + 1)
    else:
        for start, n in sol.segments:
            sl = slice(start, start + n + 1)
            r = sol.r_nodes[sl]
            w = _simpson_weights(n, (r[-1] - r[0]) / n)
            vals = density(s * sol.f_nodes[sl], s * sol.fp_nodes[sl], sol.v_nodes[sl], r) * r**power
            total += float(np.dot(w, vals))

    A = sol.a_power

    def ext(r):
        f = s * (1.0 - A / r**d)
        fp = s * d * A / r ** (d + 1)
        return density(f, fp, np.zeros_like(r), r) * r**power

    total += _geometric_gauss(ext, R, j.b)
    return sphere_area(d) * total


def g_moment(j: JastrowFactor, n: int) -> float:
    """I_{|x|^n g} = int |g(x)| |x|^n dx."""
    if n < 0:
        raise DomainError("moment order must be non-negative")
    return _radial_moment(j, lambda f, fp, v, r: np.abs(f * f - 1.0), n + j.d - 1)


def energy_moment(j: JastrowFactor, v: Potential | None, n: int) -> float:
    """int (|grad f|^2 + v f^2 / 2) |x|^n dx."""
    if n < 0:
        raise DomainError("moment order must be non-negative")
    if v is not None and v != j.potential:
        raise PreconditionError("potential does not match the one the Jastrow factor was built from")
    return _radial_moment(j, lambda f, fp, vv, r: fp * fp + 0.5 * vv * f * f, n + j.d - 1)


def f_gradf_moment(j: JastrowFactor, n: int) -> float:
    """int f |grad f| |x|^n dx."""
    if n < 0:
        raise DomainError("moment order must be non-negative")
    return _radial_moment(j, lambda f, fp, v, r: f * np.abs(fp), n + j.d - 1)
