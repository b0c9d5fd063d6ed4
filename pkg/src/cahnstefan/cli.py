"""Batch experiment driver: ``cahnstefan <subcommand> --config run.ini``.

Configs are INI files. Every output directory receives the resolved config
and a schema stamp so that a run can be reproduced from its own outputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .dynamics import SolverConfig, SolverError, run_cahn_hilliard, run_stefan
from .field import PeriodicField, read_field_csv, write_field_csv
from .potential import PotentialModel, build_custom, build_double_well
from .preparation import prepare_recovery, recovery_plan, wrinkle, wrinkle_plan

SCHEMA_VERSION = "1"
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


DEFAULTS: dict[str, dict[str, str]] = {
    "potential": {"kind": "double_well", "W": "", "dW": "", "d2W": "", "domain": "-3, 3",
                  "n_hull": "4096", "path": ""},
    "grid": {"n": "512"},
    "run": {"eps": "0.1", "eps_list": "0.1, 0.05, 0.025", "tau": "auto", "T_end": "0.01",
            "S": "auto", "snapshot_stride": "100", "nonlinear_tol": "1e-10",
            "nonlinear_max_iter": "50", "samples": "50", "workers": "1"},
    "target": {"kind": "sinusoid", "value": "0", "m": "1.6", "amplitude": "0.3", "wavenumber": "1",
               "pieces": "", "path": "", "modes": "8", "seed": "0"},
    "preparation": {"mode": "recovery", "region": "0, 1"},
    "audit": {"windows": "32", "bins": "64", "tol": "0.05", "e": "0.05", "delta": "0.05",
              "correlation_tol": "1e-3"},
    "output": {"dir": "out"},
}

_SAFE_NAMES = {name: getattr(np, name) for name in
               ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "cosh", "sinh", "pi",
                "where", "maximum", "minimum", "ones_like", "zeros_like")}


@dataclass
class ExperimentConfig:
    parser: configparser.ConfigParser
    n: int
    eps: float
    eps_list: list[float]
    solver: SolverConfig
    samples: int
    workers: int
    prep_mode: str
    region: tuple[float, float]
    windows: int
    bins: int
    tol: float
    e: float
    delta: float
    correlation_tol: float
    out: Path
    seed: int
    base_dir: Path = field(default_factory=Path.cwd)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def _typed(cp: configparser.ConfigParser, section: str, key: str, kind):
    raw = cp.get(section, key)
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path: str | None, out: str | None = None, seed: int | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(p) as fh:
                cp.read_file(fh, source=str(p))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = p.parent
        for section in cp.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key in cp[section]:
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
    if out is not None:
        cp.set("output", "dir", out)
    if seed is not None:
        cp.set("target", "seed", str(seed))

    eps_list = _floats(cp.get("run", "eps_list"), "[run] eps_list")
    if not eps_list or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("[run] eps_list must be non-empty and strictly decreasing")
    if any(not 0 < e <= 1 for e in eps_list):
        raise ConfigError("[run] eps_list entries must lie in (0, 1]")
    eps = _typed(cp, "run", "eps", float)
    if not 0 < eps <= 1:
        raise ConfigError("[run] eps must lie in (0, 1]")
    tau_raw, s_raw = cp.get("run", "tau"), cp.get("run", "S")
    try:
        solver = SolverConfig(
            tau=None if tau_raw == "auto" else _typed(cp, "run", "tau", float),
            T_end=_typed(cp, "run", "T_end", float),
            S=None if s_raw == "auto" else _typed(cp, "run", "S", float),
            snapshot_stride=_typed(cp, "run", "snapshot_stride", int),
            nonlinear_tol=_typed(cp, "run", "nonlinear_tol", float),
            nonlinear_max_iter=_typed(cp, "run", "nonlinear_max_iter", int),
        )
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from exc
    n = _typed(cp, "grid", "n", int)
    if n < 16 or n & (n - 1):
        raise ConfigError(f"[grid] n must be a power of two >= 16, got {n}")
    mode = cp.get("preparation", "mode")
    if mode not in ("none", "recovery", "wrinkle"):
        raise ConfigError(f"[preparation] mode must be none, recovery or wrinkle, got {mode!r}")
    region = _floats(cp.get("preparation", "region"), "[preparation] region")
    if len(region) != 2:
        raise ConfigError("[preparation] region needs two numbers x0, x1")
    cfg = ExperimentConfig(
        parser=cp, n=n, eps=eps, eps_list=eps_list, solver=solver,
        samples=_typed(cp, "run", "samples", int), workers=_typed(cp, "run", "workers", int),
        prep_mode=mode, region=(region[0], region[1]),
        windows=_typed(cp, "audit", "windows", int), bins=_typed(cp, "audit", "bins", int),
        tol=_typed(cp, "audit", "tol", float), e=_typed(cp, "audit", "e", float),
        delta=_typed(cp, "audit", "delta", float),
        correlation_tol=_typed(cp, "audit", "correlation_tol", float),
        out=Path(cp.get("output", "dir")), seed=_typed(cp, "target", "seed", int), base_dir=base,
    )
    if cfg.samples < 5 or cfg.workers < 1:
        raise ConfigError("[run] samples must be >= 5 and workers >= 1")
    if n % cfg.windows:
        raise ConfigError(f"[audit] windows={cfg.windows} must divide n={n}")
    return cfg


# -- builders -----------------------------------------------------------------

def _expr(text: str, what: str):
    try:
        code = compile(text, what, "eval")
    except SyntaxError as exc:
        raise ConfigError(f"{what}: cannot parse {text!r}") from exc

    def fn(v):
        return np.asarray(eval(code, {"__builtins__": {}}, {**_SAFE_NAMES, "v": v}), dtype=float) + 0 * v

    return fn


def build_model(cfg: ExperimentConfig) -> PotentialModel:
    cp = cfg.parser
    kind = cp.get("potential", "kind")
    try:
        n_hull = int(cp.get("potential", "n_hull"))
        dom = _floats(cp.get("potential", "domain"), "[potential] domain")
        if kind == "double_well":
            return build_double_well(n_hull=n_hull, domain=(dom[0], dom[1]))
        if kind != "custom":
            raise ConfigError(f"[potential] kind must be double_well or custom, got {kind!r}")
        src = cp["potential"]
        if src.get("path"):
            extra = configparser.ConfigParser(interpolation=None)
            extra.optionxform = str
            ppath = cfg.base_dir / src["path"]
            if not extra.read(ppath):
                raise ConfigError(f"[potential] path not found: {ppath}")
            src = extra["potential"]
        exprs = [src.get(k, "") for k in ("W", "dW", "d2W")]
        if not all(exprs):
            raise ConfigError("[potential] custom kind needs W, dW and d2W expressions in v")
        W, dW, d2W = (_expr(t, f"[potential] {k}") for t, k in zip(exprs, ("W", "dW", "d2W")))
        return build_custom(W, dW, d2W, (dom[0], dom[1]), n_hull=n_hull, name="custom")
    except ValueError as exc:
        raise ConfigError(f"[potential] {exc}") from exc


def build_target(cfg: ExperimentConfig) -> PeriodicField:
    cp = cfg.parser
    kind = cp.get("target", "kind")
    n = cfg.n
    x = np.arange(n) / n
    try:
        if kind == "constant":
            return PeriodicField.constant(float(cp.get("target", "value")), n)
        if kind == "sinusoid":
            m, amp = float(cp.get("target", "m")), float(cp.get("target", "amplitude"))
            k = int(cp.get("target", "wavenumber"))
            return PeriodicField(m + amp * np.sin(2 * np.pi * k * x))
        if kind == "piecewise":
            pairs = [p.split(":") for p in cp.get("target", "pieces").split(",") if p.strip()]
            if not pairs or any(len(p) != 2 for p in pairs):
                raise ConfigError("[target] pieces must read 'x0:v0, x1:v1, ...'")
            breaks = np.array([float(a) for a, _ in pairs])
            vals = np.array([float(b) for _, b in pairs])
            if breaks[0] != 0 or np.any(np.diff(breaks) <= 0) or breaks[-1] >= 1:
                raise ConfigError("[target] piece breakpoints must start at 0, increase and stay < 1")
            return PeriodicField(vals[np.searchsorted(breaks, x, side="right") - 1])
        if kind == "file":
            p = cfg.base_dir / cp.get("target", "path")
            if not p.is_file():
                raise ConfigError(f"[target] file not found: {p}")
            f = read_field_csv(p)
            if f.n != n:
                raise ConfigError(f"[target] file has n={f.n}, grid expects n={n}")
            return f
        if kind == "noise":
            rng = np.random.default_rng(cfg.seed)
            modes = int(cp.get("target", "modes"))
            c = np.zeros(n // 2 + 1, dtype=complex)
            c[1:modes + 1] = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)
            g = np.fft.irfft(c, n=n)
            g /= np.max(np.abs(g))
            m, amp = float(cp.get("target", "m")), float(cp.get("target", "amplitude"))
            return PeriodicField(m + amp * g)
    except ValueError as exc:
        raise ConfigError(f"[target] {exc}") from exc
    raise ConfigError(f"[target] unknown kind {kind!r}")


def prepared(model: PotentialModel, cfg: ExperimentConfig, target: PeriodicField, eps: float) -> PeriodicField:
    if cfg.prep_mode == "recovery":
        return prepare_recovery(model, target, eps)
    if cfg.prep_mode == "wrinkle":
        return wrinkle(model, target, cfg.region, eps)
    return target


# -- output -------------------------------------------------------------------

def _open_out(cfg: ExperimentConfig, force: bool) -> Path:
    out = cfg.out
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.ini", "w") as fh:
        cfg.parser.write(fh)
    (out / "SCHEMA_VERSION").write_text(SCHEMA_VERSION + "\n")
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, (float, np.floating)) else v for v in r])


# -- subcommands --------------------------------------------------------------

def cmd_potential(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    model.write_envelope_csv(out / "envelope.csv")
    rows = [("sigma_G", a, b) for a, b in model.sigma_G] + [("sigma_L", a, b) for a, b in model.sigma_L]
    _write_rows(out / "sets.csv", ("set", "left", "right"), rows)
    if model.growth_warning:
        print("warning: |W'|/(1+W) still rising at the edge of the hull domain", file=sys.stderr)
    print(f"potential: PASS sigma_G={model.sigma_G} sigma_L={model.sigma_L}")
    return EXIT_PASS


def _dump(traj, out: Path) -> None:
    traj.write_ledger_csv(out / "ledger.csv")
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    _write_rows(out / "snapshots.csv", ("index", "t", "file"),
                [(i, t, f"snapshots/u_{i:05d}.csv") for i, t in enumerate(traj.times)])
    for i, u in enumerate(traj.snapshots):
        write_field_csv(u, snap / f"u_{i:05d}.csv")


def cmd_run(cfg: ExperimentConfig, out: Path, which: str) -> int:
    model = build_model(cfg)
    target = build_target(cfg)
    try:
        if which == "ch":
            traj = run_cahn_hilliard(model, prepared(model, cfg, target, cfg.eps), cfg.eps, cfg.solver)
        else:
            traj = run_stefan(model, target, cfg.solver)
    except SolverError as exc:
        if exc.trajectory is not None:
            _dump(exc.trajectory, out)
        print(f"run-{which}: FAIL {exc}")
        return EXIT_FAIL
    _dump(traj, out)
    res = traj.ledger[-1, -1]
    print(f"run-{which}: PASS steps={len(traj.rows) - 1} F_final={traj.rows[-1][1]:.10g} residual={res:.3g}")
    return EXIT_PASS


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    target = build_target(cfg)
    table = analysis.convergence_study(model, target, cfg.eps_list, cfg.solver, cfg.solver.T_end,
                                       samples=cfg.samples, workers=cfg.workers)
    _write(out / "convergence.csv", table.to_csv())
    verdict = analysis.convergence_verdict(table)
    fields = [prepare_recovery(model, target, e) for e in cfg.eps_list]
    reports = [verdict, analysis.linf_bound_audit(fields)]
    _write(out / "summary.txt", "".join(r.summary() + "\n" for r in reports))
    for r in reports:
        print(r.summary())
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def cmd_audit(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    target = build_target(cfg)
    fields = [prepared(model, cfg, target, e) for e in cfg.eps_list]
    finest, eps = fields[-1], cfg.eps_list[-1]
    eym = analysis.young_measure(fields, cfg.windows, cfg.bins)
    _write_rows(out / "young_measure.csv", ["window"] + [f"bin{j}" for j in range(cfg.bins)],
                [(i, *row.tolist()) for i, row in enumerate(eym.hist)])
    asserted = [
        analysis.audit_support_dichotomy(model, eym, target, cfg.tol),
        analysis.oscillation_audit(model, finest, eps, cfg.e, cfg.delta),
        analysis.neighborhood_audit(model, finest, eps, cfg.e),
    ]
    reported = [analysis.audit_correlation(model, eym, lambda v: v, cfg.correlation_tol),
                analysis.gamma_liminf_probe(model, target, cfg.eps_list)]
    asserted.append(reported.pop())
    if len(fields) >= 3:
        reported.append(analysis.chemical_potential_audit(model, fields, cfg.eps_list))
    lines = []
    for r in asserted + reported:
        _write(out / f"{r.name}.csv", r.to_csv())
        tag = "" if r in asserted else " (reported)"
        lines.append(r.summary() + tag)
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_PASS if all(r.passed for r in asserted) else EXIT_FAIL


def cmd_prepare(cfg: ExperimentConfig, out: Path) -> int:
    model = build_model(cfg)
    target = build_target(cfg)
    write_field_csv(target, out / "target.csv")
    rows = []
    for eps in cfg.eps_list:
        if cfg.prep_mode == "wrinkle":
            plan = wrinkle_plan(model, target, cfg.region, eps)
        else:
            plan = recovery_plan(model, target, eps)
        u = plan.field if cfg.prep_mode != "none" else target
        write_field_csv(u, out / f"prepared_eps_{eps:.6g}.csv")
        for r in plan.regions:
            rows.append((eps, r.start, r.length, r.component, r.a, r.b, r.fraction, int(r.kept)))
        for note in plan.notes:
            print(f"note (eps={eps:g}): {note}", file=sys.stderr)
    _write_rows(out / "regions.csv", ("eps", "start", "length", "component", "a", "b", "fraction", "kept"), rows)
    print(f"prepare: PASS {len(cfg.eps_list)} fields written")
    return EXIT_PASS


COMMANDS = {
    "potential": cmd_potential,
    "run-ch": lambda c, o: cmd_run(c, o, "ch"),
    "run-stefan": lambda c, o: cmd_run(c, o, "stefan"),
    "sweep": cmd_sweep,
    "audit": cmd_audit,
    "prepare": cmd_prepare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cahnstefan", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI experiment file")
        sp.add_argument("--out", help="output directory (overrides [output] dir)")
        sp.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        sp.add_argument("--seed", type=int, help="seed for randomized targets")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.out, args.seed)
        # validate the model and target before touching the file system
        build_model(cfg)
        build_target(cfg)
        out = _open_out(cfg, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = COMMANDS[args.command](cfg, out)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            code = EXIT_CONFIG
    for msg in dict.fromkeys(str(w.message) for w in caught):
        print(f"warning: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
