"""Command-line front end.

``elastweak <solve|convergence|check|infsup>`` with an optional flat
``key = value`` config file; command-line flags override file values.
Exit codes: 0 success, 1 failed checks or assertions, 2 configuration
error, 3 mesh error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER = 0, 1, 2, 3, 4
COMMANDS = ("solve", "convergence", "check", "infsup")
SUITES = ("identity", "commuting", "exactness", "simplified")
CONTROLS = ("rt-stress", "q-high")

logger = logging.getLogger("elastweak")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    mesh: str = "box:2"
    degree: int = 0
    lam: float = 1.0
    mu: float = 1.0
    case: str = "trig"
    simplified: bool = False
    out: str | None = None
    seed: int = 0
    threads: int = 1
    assert_rates: float | None = None
    assert_variation: float | None = None
    suites: list = field(default_factory=lambda: list(SUITES))
    control: str | None = None
    inject_fault: str | None = None
    trials: int | None = None

    def mesh_levels(self):
        """(kind, values): ('box', [n, ...]) or ('file', [path])."""
        kind, _, spec = self.mesh.partition(":")
        if kind == "file" and spec:
            return "file", [spec]
        if kind == "box" and spec:
            try:
                levels = [int(s) for s in spec.split(",")]
            except ValueError:
                raise ConfigError(f"mesh: cannot parse box levels {spec!r}") from None
            if any(n < 1 for n in levels):
                raise ConfigError("mesh: box subdivisions n must satisfy n >= 1")
            return "box", levels
        raise ConfigError(f"mesh: expected box:N[,N...] or file:PATH, got {self.mesh!r}")

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}")
        if self.degree not in (0, 1):
            raise ConfigError(f"degree: r must be 0 or 1, got {self.degree}")
        if not self.mu > 0:
            raise ConfigError(f"mu: must satisfy mu > 0, got {self.mu}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda: must satisfy lambda >= 0, got {self.lam}")
        if self.simplified and self.degree != 0:
            raise ConfigError("simplified: the reduced element is defined only for degree 0")
        if self.threads < 1:
            raise ConfigError("threads: must be >= 1")
        if self.control is not None and self.control not in CONTROLS:
            raise ConfigError(f"negative-control: expected one of {CONTROLS}")
        bad = [s for s in self.suites if s not in SUITES]
        if bad:
            raise ConfigError(f"suite: unknown suite(s) {bad}; expected {SUITES}")
        from .verify import CASES
        if self.case not in CASES:
            raise ConfigError(f"case: expected one of {CASES}, got {self.case!r}")
        kind, levels = self.mesh_levels()
        if self.command in ("convergence",) and kind == "file":
            raise ConfigError("convergence needs box mesh levels, e.g. box:2,4,8")
        if self.command == "convergence" and len(levels) < 3:
            raise ConfigError(f"convergence needs at least 3 mesh levels, got {len(levels)}")
        if self.inject_fault not in (None, "vect-sign"):
            raise ConfigError("inject-fault: only 'vect-sign' is available")


_KEYS = {"mesh": str, "degree": int, "lambda": float, "mu": float, "case": str,
         "simplified": "bool", "out": str, "seed": int, "threads": int,
         "assert_rates": float, "assert_variation": float, "suite": str,
         "negative_control": str, "trials": int}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        kind = _KEYS[key]
        try:
            if kind == "bool":
                if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(val)
                values[key] = val.lower() in ("true", "1", "yes")
            else:
                values[key] = kind(val)
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value {val!r} for {key}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastweak",
                                description="Mixed FEM for elasticity with weak symmetry.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--mesh", help="box:N, box:N1,N2,... or file:PATH (Gmsh 2.2 ASCII)")
    p.add_argument("--degree", type=int, help="polynomial degree r (0 or 1)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="Lame parameter lambda")
    p.add_argument("--mu", type=float, help="Lame parameter mu")
    p.add_argument("--case", help="manufactured case: trig, poly-quadratic, poly-linear")
    p.add_argument("--simplified", action="store_true", default=None,
                   help="use the reduced 24-dof stress element (r = 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="BLAS threads")
    p.add_argument("--assert-rates", type=float,
                   help="exit 1 if any fitted rate is below this value")
    p.add_argument("--assert-variation", type=float,
                   help="infsup: exit 1 if (max - min) / max of beta exceeds this")
    p.add_argument("--suite", action="append", choices=SUITES,
                   help="check: run only this suite (repeatable)")
    p.add_argument("--negative-control", choices=CONTROLS,
                   help="infsup: use a deliberately unstable pairing")
    p.add_argument("--trials", type=int, help="check: random inputs per identity")
    p.add_argument("--inject-fault", choices=("vect-sign",), help="test hook: mutate vect")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(args) -> RunConfig:
    vals = read_config_file(args.config) if args.config else {}
    flag = {"mesh": args.mesh, "degree": args.degree, "lambda": args.lambda_, "mu": args.mu,
            "case": args.case, "simplified": args.simplified, "out": args.out,
            "seed": args.seed, "threads": args.threads, "assert_rates": args.assert_rates,
            "assert_variation": args.assert_variation, "negative_control": args.negative_control,
            "trials": args.trials}
    vals.update({k: v for k, v in flag.items() if v is not None})
    suites = args.suite or ([vals["suite"]] if "suite" in vals else list(SUITES))
    defaults = {"convergence": "box:2,4,8", "infsup": "box:1,2,3,4", "check": "box:1"}
    cfg = RunConfig(
        command=args.command,
        mesh=vals.get("mesh", defaults.get(args.command, "box:2")),
        degree=vals.get("degree", 0), lam=vals.get("lambda", 1.0), mu=vals.get("mu", 1.0),
        case=vals.get("case", "trig"), simplified=bool(vals.get("simplified", False)),
        out=vals.get("out"), seed=vals.get("seed", 0), threads=vals.get("threads", 1),
        assert_rates=vals.get("assert_rates"), assert_variation=vals.get("assert_variation"),
        suites=suites, control=vals.get("negative_control"), inject_fault=args.inject_fault,
        trials=vals.get("trials"))
    cfg.validate()
    return cfg


def _set_threads(n: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_mesh(spec_kind, value):
    from .mesh import build_box_mesh, read_mesh_file
    return build_box_mesh(value) if spec_kind == "box" else read_mesh_file(value)


def _outdir(cfg) -> Path | None:
    if cfg.out is None:
        return None
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# commands

SOLVE_HEADER = ["h", "dof_sigma", "dof_u", "dof_p", "residual", "weak_symmetry",
                "err_sigma", "err_div", "err_u", "err_p"]


def cmd_solve(cfg: RunConfig) -> int:
    import numpy as np
    from .mesh import write_vtk
    from .verify import compute_errors, manufactured_case, solve_case
    kind, levels = cfg.mesh_levels()
    mesh = _load_mesh(kind, levels[0])
    case = manufactured_case(cfg.case, cfg.lam, cfg.mu)
    system, report, err = solve_case(case, mesh, cfg.degree, cfg.simplified)
    row = [f"{err.h:.6e}", err.dof_sigma, err.dof_u, err.dof_p, f"{report.residual:.3e}",
           f"{report.weak_symmetry:.3e}", f"{err.err_sigma:.6e}", f"{err.err_div:.6e}",
           f"{err.err_u:.6e}", f"{err.err_p:.6e}"]
    text = ",".join(SOLVE_HEADER) + "\n" + ",".join(str(x) for x in row) + "\n"
    sys.stdout.write(text)
    out = _outdir(cfg)
    if out is not None:
        (out / "summary.csv").write_text(text)
        write_vtk(out / "solution.vtk", mesh, cell_data=_cell_fields(system, report))
    return EXIT_OK


def _cell_fields(system, report):
    """Cell-centroid values of stress rows, displacement and rotation vector."""
    import numpy as np
    from .verify import discrete_values
    Sigma, Vh, Qh = system.spaces
    n = Sigma.mesh.n_cells
    cen = np.full((1, 3), 0.25)
    sig = np.zeros((n, 3, 3))
    u = np.zeros((n, 3))
    p = np.zeros((n, 3))
    for target, space, coeffs in ((sig, Sigma, report.sigma), (u, Vh, report.u),
                                  (p, Qh, report.p)):
        for basis, cells in space.groups():
            vals = discrete_values(space, coeffs, cells, cen, basis)[:, 0]
            target[cells] = vals.reshape(target[cells].shape)
    return {"sigma_row0": sig[:, 0], "sigma_row1": sig[:, 1], "sigma_row2": sig[:, 2],
            "displacement": u, "rotation": p}


def cmd_convergence(cfg: RunConfig) -> int:
    from .verify import convergence_study, manufactured_case
    _, levels = cfg.mesh_levels()
    case = manufactured_case(cfg.case, cfg.lam, cfg.mu)
    table = convergence_study(case, cfg.degree, levels, cfg.simplified)
    text = table.to_csv()
    sys.stdout.write(text)
    out = _outdir(cfg)
    if out is not None:
        (out / "convergence.csv").write_text(text)
    if cfg.assert_rates is not None:
        rates = table.rates()
        low = {k: v for k, v in rates.items() if not v >= cfg.assert_rates}
        if low:
            print(f"rates below {cfg.assert_rates}: " +
                  ", ".join(f"{k}={v:.3f}" for k, v in low.items()), file=sys.stderr)
            return EXIT_FAIL
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    from . import polyform
    from .verify import (run_commuting_suite, run_exactness_suite, run_identity_suite,
                         run_simplified_suite)
    kind, levels = cfg.mesh_levels()
    mesh = _load_mesh(kind, levels[0])
    fault = polyform.inject_vect_sign_error() if cfg.inject_fault else contextlib.nullcontext()
    reports = []
    with fault:
        for name in SUITES:
            if name not in cfg.suites:
                continue
            if name == "identity":
                rep = run_identity_suite(cfg.seed, cfg.trials or 100)
            elif name == "commuting":
                rep = run_commuting_suite(mesh, cfg.degree, cfg.trials or 20, cfg.seed)
            elif name == "exactness":
                rep = run_exactness_suite(mesh, cfg.degree)
            else:
                rep = run_simplified_suite(mesh)
            for line in rep.lines():
                print(line)
            reports.append(rep)
    checks = [c for rep in reports for c in rep.checks]
    failed = [c.name for c in checks if not c.passed]
    summary = {"passed": len(checks) - len(failed), "failed": len(failed), "failures": failed}
    print("SUMMARY " + json.dumps(summary, sort_keys=True))
    out = _outdir(cfg)
    if out is not None:
        with open(out / "checks.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["check", "passed", "value", "detail"])
            for c in checks:
                wr.writerow([c.name, int(c.passed), f"{c.value:.6e}", c.detail])
    return EXIT_FAIL if failed else EXIT_OK


def cmd_infsup(cfg: RunConfig) -> int:
    from .verify import infsup_for_mesh
    kind, levels = cfg.mesh_levels()
    rows = []
    for i, level in enumerate(levels):
        mesh = _load_mesh(kind, level)
        beta = infsup_for_mesh(mesh, cfg.degree, cfg.simplified, cfg.control)
        rows.append((i, mesh.mesh_size(), beta))
    text = "level,h,beta\n" + "".join(f"{i},{h:.6e},{b:.6e}\n" for i, h, b in rows)
    sys.stdout.write(text)
    out = _outdir(cfg)
    if out is not None:
        (out / "infsup.csv").write_text(text)
    if cfg.assert_variation is not None:
        betas = [b for _, _, b in rows]
        var = (max(betas) - min(betas)) / max(betas) if max(betas) > 0 else 1.0
        if var > cfg.assert_variation or min(betas) <= 0:
            print(f"beta variation {var:.3f} exceeds {cfg.assert_variation}", file=sys.stderr)
            return EXIT_FAIL
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _set_threads(cfg.threads)
    from .mesh import MeshError
    from .solver import SolverError
    handlers = {"solve": cmd_solve, "convergence": cmd_convergence, "check": cmd_check,
                "infsup": cmd_infsup}
    try:
        return handlers[cfg.command](cfg)
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except OSError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
