"""
Command-line front end.

    python -m ldthermo <command> [--model NAME] [--param k=v ...] [--epsilon E]
        [--delta-t DT] [--seed S] [--out DIR] [--grid lo:hi:n[,...]]
        [--tolerance TOL] [--config FILE] [--target X] [--attractor X] [--set key=value ...]

Every run writes ``summary.json`` (inputs, key scalars, tolerances and the
outcome of each built-in check) plus command-specific CSV files into the
output directory. The exit status is 0 when every check passes, 1 when a check
fails or the computation itself fails, and 2 for configuration errors.

Config files are INI-style. ``[model]`` holds ``name``, ``drift_expr[i]``,
``diffusion_expr[i][j]`` and ``domain``; ``[model.params]`` holds model
parameters; ``[run]`` (or a section named after the command) holds run keys
such as ``epsilon`` or ``delta_t``. Command-line flags override the file.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import action, cit, eit, fpe, ou, report, sde
from ._version import __version__
from .errors import ConfigError, ExpressionError, InvalidParam, LDThermoError, UnknownModel
from .grid import Grid, parse_grid
from .models import ModelSpec, model_from_config, validate_model

__all__ = ["COMMANDS", "RunConfig", "load_config", "build_config", "run", "main"]

COMMANDS = ("validate", "simulate", "fpe", "quasipotential", "decompose", "epr", "entropy", "eit", "ou-demo")
OUT_ENV = "LDTHERMO_OUT"


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# key -> (parser, check, description of the valid range)
RUN_KEYS = {
    "epsilon": (float, _positive, "> 0"),
    "delta_t": (float, _positive, "> 0"),
    "seed": (int, lambda v: 0 <= v < 2 ** 64, "a nonnegative 64-bit integer"),
    "out": (str, None, ""),
    "grid": (str, None, ""),
    "tolerance": (float, _positive, "> 0"),
    "target": (str, None, ""),
    "attractor": (str, None, ""),
    "x0": (str, None, ""),
    "y0": (str, None, ""),
    "horizon": (float, _positive, "> 0"),
    "step": (float, _positive, "> 0"),
    "n_paths": (int, lambda v: v >= 1, ">= 1"),
    "record_stride": (int, lambda v: v >= 1, ">= 1"),
    "alpha": (str, None, ""),
    "method": (str, lambda v: v in ("explicit", "implicit"), "'explicit' or 'implicit'"),
    "sigma": (float, _nonneg, ">= 0"),
    "x_prime": (float, None, ""),
    "t": (float, _positive, "> 0"),
}

MODEL_KEYS = ("model.name", "model.domain")


@dataclass
class RunConfig:
    command: str
    model: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: str = "ldthermo_out"
    seed: int = 0

    def as_dict(self) -> dict:
        return {"command": self.command, "model": dict(sorted(self.model.items())),
                "params": dict(sorted(self.params.items())), "seed": self.seed}

    def get(self, key, default=None):
        return self.params.get(key, default)


def _is_model_key(key: str) -> bool:
    return (key in MODEL_KEYS or key.startswith("model.params.") or key.startswith("model.drift_expr[")
            or key.startswith("model.diffusion_expr["))


def load_config(path: str, command: str) -> dict:
    """Flatten an INI file into dotted keys; raises ConfigError on unreadable files."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key="--config") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}", key="--config") from exc
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if section in ("run", command):
                name = key
            else:
                name = f"{section}.{key}"
            flat[name] = value.strip()
    return flat


def _coerce(key, raw):
    kind, check, desc = RUN_KEYS[key]
    try:
        val = kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}", key=key) from exc
    if kind is float and not np.isfinite(val):
        raise ConfigError(f"{key}: must be finite", key=key)
    if check is not None and not check(val):
        raise ConfigError(f"{key}: {raw!r} out of range (must be {desc})", key=key)
    return val


def build_config(command: str, flat: dict) -> RunConfig:
    """Validate flat dotted keys and split them into model and run blocks."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", key="command")
    model, params = {}, {}
    for key, raw in flat.items():
        if raw is None:
            continue
        if _is_model_key(key):
            model[key] = raw
        elif key in RUN_KEYS:
            params[key] = _coerce(key, raw)
        else:
            raise ConfigError(f"unknown key {key!r}", key=key)
    out = params.pop("out", None) or os.environ.get(OUT_ENV) or "ldthermo_out"
    seed = params.pop("seed", 0)
    return RunConfig(command, model, params, out, seed)


def _build_model(cfg: RunConfig) -> ModelSpec:
    try:
        return model_from_config(cfg.model)
    except (InvalidParam, UnknownModel, ExpressionError) as exc:
        key = "model.name" if isinstance(exc, UnknownModel) else _guess_model_key(cfg, str(exc))
        raise ConfigError(str(exc).strip("'\""), key=key) from exc


def _guess_model_key(cfg, message):
    for key in cfg.model:
        tail = key.split(".")[-1]
        if f"'{tail}'" in message or f"{tail}=" in message or f"{tail} " in message:
            return key
    return "model"


def _vector(cfg, key, model, default=None):
    raw = cfg.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"{key} is required for {cfg.command}", key=key)
        return np.asarray(default, dtype=float).reshape(model.dim)
    try:
        vals = np.array([float(s) for s in str(raw).replace(";", ",").split(",") if s.strip()])
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as a vector", key=key) from exc
    if vals.size != model.dim:
        raise ConfigError(f"{key}: expected {model.dim} components, got {vals.size}", key=key)
    return vals


def _grid(cfg, model, nodes_1d=401, nodes_2d=161):
    raw = cfg.get("grid")
    if raw is None:
        lo, hi = model.domain
        n = nodes_1d if model.dim == 1 else nodes_2d
        return Grid(tuple(lo), tuple(hi), (n,) * model.dim)
    try:
        return parse_grid(raw, model.dim)
    except InvalidParam as exc:
        raise ConfigError(str(exc), key="grid") from exc


def _default_attractor(model):
    if model.has_phi:
        return eit.ness_diagnostics(model).x_star[0]
    return np.zeros(model.dim)


# -- commands ----------------------------------------------------------------------

class _Run:
    def __init__(self, cfg: RunConfig, model: ModelSpec):
        self.cfg = cfg
        self.model = model
        self.header = report.ReportHeader.for_config(cfg.as_dict(), cfg.seed)
        self.scalars = {}
        self.checks = {}
        self.tolerances = {}
        self.files = []

    def check(self, name, value, bound, passed=None):
        self.tolerances[name] = bound
        ok = bool(value <= bound) if passed is None else bool(passed)
        self.checks[name] = {"value": value, "bound": bound, "passed": ok}

    def csv(self, name, columns):
        path = report.emit_report(columns, self.cfg.out, name, "csv", self.header)
        self.files.append(os.path.basename(path))


def _cmd_validate(r: _Run):
    grid = _grid(r.cfg, r.model, 41, 41) if r.cfg.get("grid") else None
    rep = validate_model(r.model, grid, raise_errors=False)
    r.scalars.update(rep.as_dict())
    r.check("spd_margin_positive", -rep.spd_margin, 0.0, rep.spd_margin > 0)
    r.check("symmetry_error", rep.symmetry_error, 1e-12)
    if rep.decomposition_residual is not None:
        r.check("decomposition_residual", rep.decomposition_residual, 1e-10)


def _cmd_simulate(r: _Run):
    m, c = r.model, r.cfg
    ens = sde.EnsembleConfig(c.get("epsilon", 0.1), c.get("step", 1e-3), c.get("horizon", 1.0),
                             c.get("n_paths", 1000), c.seed, c.get("record_stride", 10))
    x0 = _vector(c, "x0", m, np.zeros(m.dim))
    traj = sde.simulate_ensemble(m, x0, ens)
    final = traj.final()
    r.scalars.update(n_paths=ens.n_paths, n_steps=ens.n_steps, final_mean=final.mean(axis=0),
                     final_cov=np.atleast_2d(np.cov(final, rowvar=False)))
    r.csv("trajectories", report.trajectory_columns(traj))
    if c.get("grid"):
        dens = sde.histogram_density(final, _grid(c, m), ens.epsilon, ens.horizon)
        r.scalars["n_outside"] = dens.meta["n_outside"]
        r.csv("density", report.density_columns(dens))
    r.check("finite_states", 0.0, 0.0, bool(np.all(np.isfinite(traj.states))))


def _cmd_fpe(r: _Run):
    m, c = r.model, r.cfg
    eps = c.get("epsilon", 0.1)
    grid = _grid(c, m)
    cfg = fpe.FPEConfig(grid, eps, c.get("step"), c.get("method", "implicit" if "horizon" not in c.params
                                                           else "explicit"))
    if "horizon" in c.params:
        p0 = fpe.near_delta(grid, _vector(c, "x0", m, np.zeros(m.dim)), eps)
        dens = fpe.evolve_fpe(m, cfg, p0, c.get("horizon"))
    else:
        dens = fpe.stationary_density(m, cfg)
    flux = fpe.probability_flux(m, eps, dens)
    mean, cov = dens.moments()
    r.scalars.update(mass=dens.mass, mean=mean, cov=cov, solver={k: v for k, v in dens.meta.items()},
                     hill_identity_residual=flux.identity_residual, max_interface_flux=flux.max_interface)
    r.csv("density", report.density_columns(dens))
    r.csv("flux", report.flux_columns(flux))
    r.check("mass", abs(dens.mass - 1.0), 1e-8)
    r.check("hill_identity", flux.identity_residual, 1e3 * np.finfo(float).eps * flux.scale)
    if m.has_phi and "horizon" not in c.params and np.all(dens.values > 0):
        phi_hat = cit.phi_from_density(dens).values
        phi = m.phi(grid.mesh())
        r.scalars["wkb_sup_error"] = float(np.max(np.abs((phi_hat - phi) - (phi_hat - phi).min())))


def _cmd_quasipotential(r: _Run):
    m, c = r.model, r.cfg
    x_attr = _vector(c, "attractor", m, _default_attractor(m))
    tol = c.get("tolerance", 0.02)
    if c.get("target") is None and c.get("grid"):
        grid = _grid(c, m)
        vals = action.quasipotential_field(m, x_attr, grid.points())
        columns = {f"x{i + 1}": grid.points()[:, i] for i in range(m.dim)}
        columns["quasipotential"] = vals
        r.csv("quasipotential_field", columns)
        if m.has_phi:
            ref = m.phi(grid.points()) - float(m.phi(x_attr))
            err = float(np.max(np.abs(vals - ref)) / max(1.0, float(np.max(np.abs(ref)))))
            r.scalars["max_relative_error"] = err
            r.check("analytic_agreement", err, tol)
        return
    target = _vector(c, "target", m)
    value, path = action.quasipotential(m, x_attr, target)
    r.scalars.update(value=value, attractor=x_attr, target=target, horizon=path.horizon, n_intervals=path.N)
    r.csv("path", report.path_columns(m, path))
    if m.has_phi:
        ref = float(m.phi(target) - m.phi(x_attr))
        rel = abs(value - ref) / max(abs(ref), 1e-300)
        r.scalars.update(reference=ref, relative_error=rel)
        r.check("analytic_agreement", rel, tol)


def _phi_source(r: _Run, grid):
    """Analytic phi when the model has one, otherwise -eps ln p from the stationary FPE."""
    m, c = r.model, r.cfg
    if m.has_phi:
        return None, "analytic"
    dens = fpe.stationary_density(m, fpe.FPEConfig(grid, c.get("epsilon", 0.05), method="implicit"))
    return cit.phi_from_density(dens), "fpe"


def _cmd_decompose(r: _Run):
    m, c = r.model, r.cfg
    grid = _grid(c, m, 41, 41) if m.has_phi else _grid(c, m)
    phi, src = _phi_source(r, grid)
    dec = cit.drift_decomposition(m, phi, grid.mesh())
    cols = {f"x{i + 1}": grid.points()[:, i] for i in range(m.dim)}
    g = dec.gamma.reshape(-1, m.dim)
    for i in range(m.dim):
        cols[f"gamma{i + 1}"] = g[:, i]
    cols["orthogonality"] = dec.orthogonality.reshape(-1)
    r.csv("decomposition", cols)
    r.scalars.update(phi_source=src, orthogonality_residual=dec.orthogonality_residual,
                     max_abs_gamma=float(np.max(np.abs(dec.gamma))))
    if src == "analytic":
        r.check("orthogonality", dec.orthogonality_residual, c.get("tolerance", 1e-12))
    else:
        # the no-flux walls distort -eps ln p near the boundary; judge the central half of the box
        lo, hi = np.array(grid.lower), np.array(grid.upper)
        mid, half = (lo + hi) / 2, (hi - lo) / 4
        central = np.all(np.abs(grid.mesh() - mid) <= half + 1e-12, axis=-1)
        x_star = eit.ness_diagnostics(m, phi).x_star[0]
        inner = cit.drift_decomposition(m, phi, grid.mesh()[central])
        r.scalars["orthogonality_central"] = inner.residual_outside(x_star, 0.1)
        r.check("orthogonality", r.scalars["orthogonality_central"], c.get("tolerance", 0.05))


def _cmd_epr(r: _Run):
    m, c = r.model, r.cfg
    grid = _grid(c, m, 41, 41) if m.has_phi else _grid(c, m)
    phi, src = _phi_source(r, grid)
    epr = cit.epr_breakdown(m, phi, grid.mesh(), tol=np.inf)
    r.csv("epr", report.epr_columns(grid.points(), epr))
    rel = epr.relative_residual
    r.scalars.update(phi_source=src, relative_residual=rel, max_total=float(np.max(epr.total)))
    r.check("pythagorean_identity", rel, c.get("tolerance", 1e-10 if src == "analytic" else 0.05))
    rate = cit.lyapunov_rate(m, phi, grid.mesh())
    r.check("lyapunov_nonpositive", float(np.max(rate)), 1e-10 if src == "analytic" else 1e-2)


def _cmd_entropy(r: _Run):
    m, c = r.model, r.cfg
    eps = c.get("epsilon", 0.1)
    dt = c.get("delta_t", 0.01)
    grid = _grid(c, m)
    dens = fpe.stationary_density(m, fpe.FPEConfig(grid, eps, method="implicit"))
    rep = cit.meso_eit_entropy(m, eps, dens, dt)
    r.scalars.update(rep.as_dict())
    r.scalars["uncertainty_product"] = cit.uncertainty_product(eps, dt)
    r.check("production_nonnegative", -rep.ds_cit_dt_production, 0.0)
    if m.constant_diffusion:
        ref = float(np.mean(cit.kernel_entropy(m, eps, dt, np.zeros(m.dim))))
        r.scalars["difference_closed_form"] = ref
        r.check("difference_closed_form", abs(rep.difference - ref), c.get("tolerance", 1e-6))


def _cmd_eit(r: _Run):
    m, c = r.model, r.cfg
    eps = c.get("epsilon", 0.05)
    dt = c.get("delta_t", 0.1)
    if not m.has_phi:
        raise ConfigError("eit needs a model with an analytic stationary rate function", key="model.name")
    xgrid = _grid(c, m, 21, 11)
    field_ = eit.build_eit_field(m, None, xgrid, dt, epsilon=eps, y_count=21)
    con = eit.contract(field_)
    r.csv("eit_field", report.eit_field_columns(field_))
    cfg = eit.EITDynamicsConfig(dt, c.get("step", 1e-3), c.get("alpha", 0.0))
    x0 = _vector(c, "x0", m, np.ones(m.dim))
    y0 = _vector(c, "y0", m, np.zeros(m.dim))
    rel = eit.eit_relaxation(m, None, cfg, x0, y0, c.get("horizon", 5.0))
    r.csv("ledger", rel.ledger_columns())
    r.scalars.update(phi_start=float(rel.phi[0]), phi_end=float(rel.phi[-1]),
                     cumulative_increase=rel.cumulative_increase,
                     max_dphi_dt=float(np.max(rel.dphi_dt)))
    r.check("contraction_minimum", float(np.max(np.abs(con.grid_min - con.phi_x))), 1e-12)
    r.check("relaxation_monotone", rel.cumulative_increase, c.get("tolerance", 1e-6))


def _cmd_ou_demo(r: _Run):
    c = r.cfg
    pr = ou.OUParams(float(r.model.params.get("b", 1.0)), float(r.model.params.get("D", 1.0)))
    x_prime = c.get("x_prime", 1.0)
    t = c.get("t", 1.0)
    xs = np.linspace(-3, 3, 121)
    cols = {"x": xs}
    for eps in (0.2, 0.1, 0.05, 0.02):
        cols[f"neg_eps_log_p_eps{eps:g}"] = -eps * np.log(ou.ou_transition(pr, eps, xs, t, x_prime))
    cols["finite_time_rate"] = ou.ou_finite_time_rate(pr, xs, t, x_prime)
    r.csv("ou_kernel_sweep", cols)
    ts = np.linspace(0.1, 3.0, 30)
    eps_first = [ou.ou_double_limit(ou.DoubleLimitSpec(0.0, 0.0, x_prime, 0.0, ti, "eps-first", pr)) for ti in ts]
    sig_first = [ou.ou_double_limit(ou.DoubleLimitSpec(0.0, 0.0, x_prime, 0.0, ti, "sigma-first", pr)) for ti in ts]
    r.csv("double_limit", {"t": ts, "eps_first": eps_first, "sigma_first": sig_first})
    e1 = ou.ou_double_limit(ou.DoubleLimitSpec(0.0, 0.0, x_prime, 0.0, t, "eps-first", pr))
    s1 = ou.ou_double_limit(ou.DoubleLimitSpec(0.0, 0.0, x_prime, 0.0, t, "sigma-first", pr))
    r.scalars.update(eps_first=e1, sigma_first=s1, params={"b": pr.b, "D": pr.D}, x_prime=x_prime, t=t)
    r.check("eps_first_is_zero", abs(e1), 0.0)
    r.check("orders_disagree", -abs(s1 - e1), 0.0, s1 != e1)
    if r.model.name == "ou1d":
        res = action.minimize_action(r.model, [x_prime], [0.0], t, max(8, int(64 * t)))
        r.scalars["minimum_action"] = res.action
        r.check("action_matches_rate", abs(res.action - s1) / max(s1, 1e-300), c.get("tolerance", 5e-3))


_DISPATCH = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "fpe": _cmd_fpe,
    "quasipotential": _cmd_quasipotential,
    "decompose": _cmd_decompose,
    "epr": _cmd_epr,
    "entropy": _cmd_entropy,
    "eit": _cmd_eit,
    "ou-demo": _cmd_ou_demo,
}


def run(cfg: RunConfig, stream=None) -> int:
    """Execute one command; writes ``summary.json`` and returns the exit status."""
    stream = stream or sys.stdout
    model = _build_model(cfg)
    if cfg.command == "ou-demo" and model.name != "ou1d":
        raise ConfigError("ou-demo runs on the ou1d model", key="model.name")
    os.makedirs(cfg.out, exist_ok=True)
    r = _Run(cfg, model)
    error = None
    start = time.perf_counter()
    try:
        _DISPATCH[cfg.command](r)
    except ConfigError:
        raise
    except LDThermoError as exc:
        error = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - start
    passed = error is None and all(ch["passed"] for ch in r.checks.values())
    summary = {
        "command": cfg.command,
        "inputs": cfg.as_dict(),
        "model": {"name": model.name, "dim": model.dim, "params": dict(model.params)},
        "results": r.scalars,
        "checks": r.checks,
        "tolerances": r.tolerances,
        "files": sorted(r.files),
        "error": error,
        "passed": passed,
    }
    report.emit_report(summary, cfg.out, "summary", "json", r.header)
    status = "PASS" if passed else "FAIL"
    print(f"{cfg.command}: {status} ({elapsed:.2f} s) -> {os.path.join(cfg.out, 'summary.json')}", file=stream)
    if error:
        print(f"  error: {error}", file=stream)
    for name, ch in r.checks.items():
        if not ch["passed"]:
            print(f"  check {name} failed: {ch['value']!r} > {ch['bound']!r}", file=stream)
    return 0 if passed else 1


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--model", help="ou1d, linear2d, doublewell1d or custom")
    common.add_argument("--param", action="append", default=[], metavar="K=V", help="model parameter")
    common.add_argument("--set", action="append", default=[], metavar="K=V", help="any run key")
    common.add_argument("--epsilon", type=str)
    common.add_argument("--delta-t", dest="delta_t", type=str)
    common.add_argument("--seed", type=str)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./ldthermo_out)")
    common.add_argument("--grid", help="lo:hi:n[,lo:hi:n]")
    common.add_argument("--tolerance", type=str)
    common.add_argument("--target", help="comma-separated state")
    common.add_argument("--attractor", help="comma-separated state")
    p = argparse.ArgumentParser(prog="ldthermo", description="Large-deviations thermodynamics toolkit")
    p.add_argument("--version", action="version", version=f"ldthermo {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _split_kv(item, flag):
    if "=" not in item:
        raise ConfigError(f"{flag} expects K=V, got {item!r}", key=flag)
    k, v = item.split("=", 1)
    return k.strip(), v.strip()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        flat = load_config(args.config, args.command) if args.config else {}
        if args.model:
            flat["model.name"] = args.model
        for item in args.param:
            k, v = _split_kv(item, "--param")
            flat[f"model.params.{k}"] = v
        for item in args.set:
            k, v = _split_kv(item, "--set")
            flat[k] = v
        for key in ("epsilon", "delta_t", "seed", "out", "grid", "tolerance", "target", "attractor"):
            val = getattr(args, key)
            if val is not None:
                flat[key] = val
        cfg = build_config(args.command, flat)
        return run(cfg)
    except ConfigError as exc:
        where = f" [key: {exc.key}]" if exc.key else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
