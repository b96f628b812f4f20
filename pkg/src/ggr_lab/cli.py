"""Command-line front end: ``ggr-lab <command> --config <path>``.

Config files are flat ``key = value`` text with ``[section]`` headers.  Every
command reads its own section; ``[potential]`` describes a potential and
``[constants]`` overrides entries of the constant registry.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import GGRError, InputError, SizeGuardError

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_GUARD = 0, 1, 2, 3
COMMANDS = ("scatter", "thermo", "diagrams", "oracle", "bound")


class VerificationFailure(Exception):
    pass


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    command: str
    parser: configparser.ConfigParser
    source: str
    out: str | None
    verify: bool
    selftest: bool
    threads: int
    seed: int

    def section(self, name: str) -> "Section":
        if not self.parser.has_section(name):
            return Section(name, {})
        return Section(name, dict(self.parser.items(name)))

    @property
    def config_hash(self) -> str:
        canon = io.StringIO()
        for sec in sorted(self.parser.sections()):
            canon.write(f"[{sec}]\n")
            for k, v in sorted(self.parser.items(sec)):
                canon.write(f"{k}={v}\n")
        return hashlib.sha256(canon.getvalue().encode()).hexdigest()[:16]

    def registry(self):
        from .registry import default_registry
        reg = default_registry()
        sec = self.section("constants")
        for key in sec.values:
            reg.set(key, sec.float(key))
        return reg


@dataclass
class Section:
    name: str
    values: dict

    def _raw(self, key, default):
        if key in self.values:
            return self.values[key]
        if default is None:
            raise InputError(f"[{self.name}] missing key {key!r}", key=key)
        return default

    def str(self, key, default=None) -> str:
        return str(self._raw(key, default)).strip()

    def float(self, key, default=None) -> float:
        raw = self._raw(key, default)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise InputError(f"[{self.name}] {key} = {raw!r} is not a number", key=key) from None

    def int(self, key, default=None) -> int:
        raw = self._raw(key, default)
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise InputError(f"[{self.name}] {key} = {raw!r} is not an integer", key=key) from None

    def floats(self, key, default=None) -> list[float]:
        raw = self._raw(key, default)
        if isinstance(raw, (list, tuple)):
            return [float(v) for v in raw]
        try:
            vals = [float(v) for v in str(raw).replace(";", ",").split(",") if v.strip()]
        except ValueError:
            raise InputError(f"[{self.name}] {key} = {raw!r} is not a list of numbers", key=key) from None
        if not vals:
            raise InputError(f"[{self.name}] {key} is empty", key=key)
        return vals

    def sweep(self, key) -> list[float]:
        """An explicit list ``key`` or a range ``key_min``, ``key_max``, ``key_n`` (log-spaced when ``key_log = yes``)."""
        if key in self.values:
            return self.floats(key)
        lo, hi, n = self.float(f"{key}_min"), self.float(f"{key}_max"), self.int(f"{key}_n")
        if n < 1:
            raise InputError(f"[{self.name}] {key}_n must be positive", key=f"{key}_n")
        if self.str(f"{key}_log", "no").lower() in ("yes", "true", "1"):
            if lo <= 0 or hi <= 0:
                raise InputError(f"[{self.name}] log-spaced {key} needs positive bounds", key=f"{key}_min")
            return list(np.geomspace(lo, hi, n))
        return list(np.linspace(lo, hi, n))

    def flag(self, key, default="no") -> bool:
        return self.str(key, default).lower() in ("yes", "true", "1", "on")


def _read_config(path: str | None) -> tuple[configparser.ConfigParser, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if path is None:
        return parser, ""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}", key="--config") from None
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise InputError(f"malformed config {path}: {exc}", key="--config") from None
    return parser, text


# ---------------------------------------------------------------- CSV output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12e" % float(v)
    return str(v)


def render_csv(cfg: RunConfig, columns: list[str], rows: list[tuple], notes: list[str] = ()) -> str:
    out = io.StringIO()
    out.write(f"# ggr-lab {__version__} seed={cfg.seed} config-hash={cfg.config_hash}\n")
    for note in notes:
        out.write(f"# {note}\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def _parallel_map(cfg: RunConfig, fn, items):
    items = list(items)
    if cfg.threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))          # results come back in input order


# ---------------------------------------------------------------- commands

def cmd_scatter(cfg: RunConfig):
    from .scattering import potential_from_mapping, solve_scattering
    from .thermo import SCATTERING_CONSTANT

    sec = cfg.section("scatter")
    pot_sec = cfg.section("potential")
    if "potential" in sec.values:
        path = sec.str("potential")
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError:
            raise InputError(f"cannot read potential file {path}", key="potential") from None
        pot_keys = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise InputError(f"potential file line {line!r} is not key = value", key=line)
            k, v = line.split("=", 1)
            pot_keys[k.strip()] = v.strip()
    else:
        pot_keys = dict(pot_sec.values)
    pot = potential_from_mapping(pot_keys)
    r_max = sec.float("r_max", 4.0 * max(pot.support_radius, 1.0))
    sol = solve_scattering(pot, r_max)
    cd = SCATTERING_CONSTANT[pot.d]
    ad = sol.a**pot.d
    resid = (sol.energy_integral - cd * ad) / (cd * ad) if ad > 0 else sol.energy_integral
    size = getattr(pot, "radius", pot.support_radius)
    v0 = getattr(pot, "height", math.inf if pot.hard_core else math.nan)
    rows = [(pot.d, pot.kind, size, v0, sol.a, sol.energy_integral, resid)]
    if cfg.verify and abs(resid) > 1e-6:
        raise VerificationFailure(f"energy integral differs from c_d a^d by {resid:.3e}")
    return ["d", "kind", "a0_or_R", "V0", "a", "energy_integral", "c_d_a_d_residual"], rows, []


def cmd_thermo(cfg: RunConfig):
    from .thermo import (ZERO_T_COEFFICIENT, GrandParams, correction_coefficient, free_density,
                         free_pressure, polylog_neg)

    sec = cfg.section("thermo")
    notes = []
    if cfg.selftest:
        # (measured error, tolerance)
        checks = {
            "-Li_1(-1) = log 2": (abs(polylog_neg(1.0, 0.0) - math.log(2.0)), 1e-14),
            "-Li_3/2(-1) series": (abs(polylog_neg(1.5, 0.0) - 0.7651470246254079), 1e-12),
        }
        for dd in (1, 2, 3):
            c = correction_coefficient(GrandParams.from_log_z(dd, 1.0, 100.0))
            checks[f"d={dd} limit at log z = 100"] = (abs(c / ZERO_T_COEFFICIENT[dd] - 1.0), 1e-3)
        bad = [k for k, (err, tol) in checks.items() if not err < tol]
        notes += [f"selftest {k}: {'FAIL' if k in bad else 'ok'} ({err:.2e} < {tol:.0e})"
                  for k, (err, tol) in checks.items()]
        if bad:
            raise VerificationFailure("thermo selftest failed: " + ", ".join(bad))
        if not sec.values:
            rows = [(k, err, tol, k not in bad) for k, (err, tol) in checks.items()]
            return ["check", "error", "tolerance", "ok"], rows, notes
    d = sec.int("d")
    beta = sec.float("beta", 1.0)
    log_zs = sec.sweep("log_z")

    def row(lz):
        p = GrandParams.from_log_z(d, beta, lz)
        c = correction_coefficient(p)
        return (d, beta, lz, p.zeta, free_pressure(p), free_density(p), c, c / ZERO_T_COEFFICIENT[d])

    rows = _parallel_map(cfg, row, log_zs)
    return ["d", "beta", "log_z", "zeta", "psi0", "rho0", "coeff", "coeff_over_zeroT_limit"], rows, notes


def _torus_g(model, sec):
    kind = sec.str("g", "gaussian")
    r = model.radii()
    if kind == "gaussian":
        return -sec.float("g_depth", 0.3) * np.exp(-(r / sec.float("g_width", 1.0)) ** 2)
    if kind == "zero":
        return np.zeros(model.shape)
    raise InputError(f"[{sec.name}] unknown g kind {kind!r}", key="g")


def cmd_diagrams(cfg: RunConfig):
    from .diagrams import (TorusData, count_graphs, dump_line, enumerate_diagrams, enumerate_trees,
                           value_momentum, value_position)
    from .freegas import lattice_model
    from .thermo import GrandParams

    sec = cfg.section("diagrams")
    q, p, d, M = sec.int("q"), sec.int("p"), sec.int("d", 1), sec.int("M", 8)
    params = GrandParams.from_log_z(d, sec.float("beta", 1.0), sec.float("log_z", 0.0))
    model = lattice_model(M, d, params)
    data = TorusData(model, _torus_g(model, sec))
    external = None
    if q:
        ext = [int(round(v)) for v in sec.floats("external", ",".join(["0"] * (q * d)))]
        if len(ext) != q * d:
            raise InputError(f"[diagrams] external needs {q * d} grid indices", key="external")
        external = np.array(ext, dtype=np.int64).reshape(q, d)
    diagrams = enumerate_diagrams(q, p, sec.str("filter", "all"))
    values = _parallel_map(cfg, lambda dg: value_position(dg, data, external), diagrams)
    lines = [dump_line(dg, v) for dg, v in zip(diagrams, values)]
    notes = [f"diagrams q={q} p={p} count={len(diagrams)}"]
    if cfg.verify:
        failures = []
        for dg, v in zip(diagrams, values):
            w = value_momentum(dg, data, external)
            if abs(v - w) > 1e-10 * max(abs(v), abs(w), 1e-300) and abs(v - w) > 1e-15:
                failures.append(f"engine mismatch {dump_line(dg, v)} vs {w}")
        counts = {
            "|L_1^1| = 2": len(enumerate_diagrams(1, 1, "linked")) == 2,
            "|L_2^1 with k=1| = 4": len(enumerate_diagrams(1, 2, lambda dg: dg.linked and dg.stats.k == 1)) == 4,
            "|G_1^2| = 3": count_graphs(2, 1) == 3,
            "Cayley n<=7": all(len(enumerate_trees(n)) == n ** (n - 2) for n in range(2, 8)),
        }
        failures += [f"count identity failed: {k}" for k, ok in counts.items() if not ok]
        notes.append(f"verify: {len(diagrams)} engine comparisons, {len(counts)} count identities, "
                     f"{len(failures)} failures")
        if failures:
            raise VerificationFailure("; ".join(failures[:5]))
    return None, lines, notes


def cmd_oracle(cfg: RunConfig):
    from .fock import LatticeModel, compare_ggr, random_weak_model

    sec = cfg.section("oracle")
    M, d, p_max = sec.int("M", 10), sec.int("d", 1), sec.int("p_max", 4)
    n_models = sec.int("n_models", 3)
    strength = sec.float("strength", 0.3)
    rng = np.random.default_rng(cfg.seed)
    models = []
    if sec.flag("include_free", "yes"):
        shape = (M,) * d
        models.append(LatticeModel(M, d, sec.float("beta", 1.0), sec.float("mu", 0.0),
                                   np.ones(shape), np.zeros(shape)))
    models += [random_weak_model(rng, M, strength=strength, d=d) for _ in range(n_models)]
    reg = cfg.registry()

    def run(m):
        rows = []
        c = compare_ggr(m, p_max, registry=reg)
        for i, trunc in enumerate(c.truncated):
            rows.append((m.M, m.beta, m.mu, c.rho0_Ig, c.rho0_Ig_Igamma, i + 2, c.exact, trunc,
                         c.residuals[i], c.tail if i + 2 == p_max else math.nan, c.entropy_margin))
        return c, rows

    results = _parallel_map(cfg, run, models)
    rows = [r for _, rs in results for r in rs]
    notes = []
    if cfg.verify:
        bad = []
        for k, (c, _) in enumerate(results):
            if c.entropy_margin < -1e-8:
                bad.append(f"model {k}: entropy inequality violated")
            if c.rho0_Ig == 0.0:          # f = 1: the series is exactly zero
                if max(c.residuals) > 1e-12:
                    bad.append(f"model {k}: nonzero residual without correlations")
                continue
            if c.in_regime and c.residuals[-1] > c.tail:
                bad.append(f"model {k}: residual above tail estimate")
            if c.residuals[-1] >= c.residuals[0]:
                bad.append(f"model {k}: residual did not decrease with p_max")
        notes.append(f"verify: {len(results)} models, {len(bad)} failures")
        if bad:
            raise VerificationFailure("; ".join(bad))
    cols = ["M", "beta", "mu", "rho0Ig", "rho0IgIgamma", "p_max", "exact_logZJ_over_Z", "truncated",
            "residual", "tail_estimate", "entropy_margin"]
    return cols, rows, notes


def cmd_bound(cfg: RunConfig):
    from .bounds import BoundInputs, high_temp_bound, low_temp_bound, main_bound, regime_threshold
    from .errors import DomainError, RegimeError

    sec = cfg.section("bound")
    d = sec.int("d")
    beta = sec.float("beta", 1.0)
    xs = sec.sweep("x")
    log_zs = sec.sweep("log_z")
    reg = cfg.registry()
    if any(x <= 0 for x in xs):
        raise InputError("[bound] a^d rho0 must be positive (a = 0 is degenerate)", key="x")

    def row(point):
        x, lz = point
        inp = BoundInputs.from_diluteness(d, x, lz, beta, reg)
        try:
            rep = main_bound(inp)
        except (DomainError, RegimeError):
            return (d, inp.a, inp.rho0, x, lz, inp.zeta, "none", math.nan, math.nan, math.nan, False)
        return (d, inp.a, inp.rho0, x, lz, inp.zeta, rep.regime, rep.b_choice, rep.leading_term,
                rep.delta_d, rep.valid)

    points = [(x, lz) for lz in log_zs for x in xs]
    rows = _parallel_map(cfg, row, points)
    notes = []
    if cfg.verify:
        bad = []
        for x in xs:
            zt = regime_threshold(d, x, reg)
            inp = BoundInputs.from_diluteness(d, x, zt - 1.0, beta, reg)     # zeta = threshold
            try:
                hi = high_temp_bound(inp).delta.structure
            except RegimeError:
                continue
            lo = low_temp_bound(inp, check_legendre=False).delta.structure
            if not 0.25 <= hi / lo <= 4.0:
                bad.append(f"x={x:.3g}: branches differ by {hi / lo:.3g} at the threshold")
        notes.append(f"verify: threshold continuity at {len(xs)} points, {len(bad)} failures")
        if bad:
            raise VerificationFailure("; ".join(bad))
    cols = ["d", "a", "rho0", "x=a^d_rho0", "log_z", "zeta", "regime", "b_choice", "leading_term",
            "delta_d", "valid"]
    plot = _bound_plot_blocks(rows, log_zs)
    return cols, rows, notes, plot


def _bound_plot_blocks(rows, log_zs) -> str:
    out = io.StringIO()
    for lz in log_zs:
        out.write(f"# delta_d vs x at log_z={_fmt(lz)}\n")
        for r in rows:
            if r[4] == lz and np.isfinite(r[9]):
                out.write(f"{_fmt(r[3])} {_fmt(r[9])}\n")
        out.write("\n\n")
    return out.getvalue()


HANDLERS = {"scatter": cmd_scatter, "thermo": cmd_thermo, "diagrams": cmd_diagrams,
            "oracle": cmd_oracle, "bound": cmd_bound}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ggr-lab", description="GGR cluster-expansion toolkit")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value config with [section] headers")
    ap.add_argument("--out", help="output CSV path (default: stdout)")
    ap.add_argument("--verify", action="store_true", help="run cross-checks; exit 1 on failure")
    ap.add_argument("--selftest", action="store_true", help="run built-in reference checks")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (fallback: GGR_LAB_THREADS)")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized inputs")
    return ap


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("GGR_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"GGR_LAB_THREADS={env!r} is not an integer", key="GGR_LAB_THREADS") from None
    return 1


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        parser, text = _read_config(args.config)
        cfg = RunConfig(args.command, parser, text, args.out, args.verify, args.selftest,
                        _threads(args.threads), args.seed)
        result = HANDLERS[args.command](cfg)
    except VerificationFailure as exc:
        print(f"ggr-lab: verification failed: {exc}", file=stderr)
        return EXIT_VERIFY
    except InputError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"ggr-lab: input error: {exc}{key}", file=stderr)
        return EXIT_INPUT
    except SizeGuardError as exc:
        print(f"ggr-lab: resource guard: {exc}", file=stderr)
        return EXIT_GUARD
    except GGRError as exc:
        print(f"ggr-lab: input error: {exc}", file=stderr)
        return EXIT_INPUT

    cols, rows, notes = result[:3]
    plot = result[3] if len(result) > 3 else None
    if cols is None:        # diagram dump: preformatted lines
        body = io.StringIO()
        body.write(f"# ggr-lab {__version__} seed={cfg.seed} config-hash={cfg.config_hash}\n")
        for note in notes:
            body.write(f"# {note}\n")
        for line in rows:
            body.write(line + "\n")
        text_out = body.getvalue()
    else:
        text_out = render_csv(cfg, cols, rows, notes)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text_out)
        if plot is not None:
            with open(args.out + ".plot.dat", "w", encoding="utf-8", newline="\n") as fh:
                fh.write(plot)
    else:
        stdout.write(text_out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
