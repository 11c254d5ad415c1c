"""Command-line interface.

    homoglab <subcommand> [--config path.json] [--out dir] [--eps 1/8,1/16,...]
             [--cells-per-period 16] [--format csv|json]

Subcommands: cell, correctors, green, neumann-fn, poisson, dtn, expand,
rates, all.  The config is a JSON document with keys {coefficient, mesh,
solver, experiments[]}; command-line flags override it.  Exit code is 0
iff all selected experiments pass.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import cell as cellmod
from . import correctors as corrmod
from . import expand as expmod
from . import kernels as kermod
from . import mesh as fem
from . import ratelab
from .coeff import rescale
from .mesh import SolverOptions


def _parse_eps(text):
    return tuple(float(Fraction(tok)) for tok in text.split(","))


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _coefficient(config, args):
    spec = config.get("coefficient", {"family": "layered", "params": {}})
    if args.coeff_family:
        spec = {"family": args.coeff_family, "params": json.loads(args.coeff_params or "{}")}
    return ratelab.coefficient_from_spec(spec)


def _solver(config):
    s = config.get("solver", {})
    return SolverOptions(kind=s.get("kind", "direct"), tol=s.get("tol", 1e-10))


def _mesh_n(config, args, default=64):
    if args.n:
        return args.n
    return config.get("mesh", {}).get("n", default)


def _outpath(args, name):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, name)


def _emit_json(args, name, payload):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    path = _outpath(args, name)
    with open(path, "w") as fh:
        fh.write(text)
    print(f"wrote {path}")


def cmd_cell(args, config):
    field = _coefficient(config, args)
    solver = _solver(config)
    n = config.get("mesh", {}).get("cell_n", 256)
    cs = ratelab.cell_solution(field, n, solver)
    stats = cs.stats()
    stats["F_divergence_residual"] = cellmod.flux_divergence_residual(cs.grid, cs.F, cs.b_gauss)
    _emit_json(args, "cell.json", stats)
    if args.format == "csv":
        fem.Field(cs.grid, cs.chi[0, 0]).to_csv(_outpath(args, "chi_1.csv"))
        fem.Field(cs.grid, cs.b_nodal[0, 0, 0, 0]).to_csv(_outpath(args, "b_11.csv"))
    return 0


def cmd_correctors(args, config):
    field = _coefficient(config, args)
    solver = _solver(config)
    eps_list = _parse_eps(args.eps) if args.eps else (1 / 8, 1 / 16, 1 / 32)
    cpp = args.cells_per_period or config.get("mesh", {}).get("cells_per_period", 16)
    cs = ratelab.cell_solution(field, config.get("mesh", {}).get("cell_n", 256), solver)
    out = []
    for eps in eps_list:
        dm = fem.DomainMesh(int(round(cpp / eps)))
        x0 = None
        if args.pin:
            x, y = (float(t) for t in args.pin.split(","))
            x0 = int(np.argmin(np.sum((dm.nodes - (x, y)) ** 2, axis=1)))
        cset = corrmod.build(rescale(field, eps), dm, hatA=cs.hatA, x0=x0, options=solver)
        out.append(corrmod.corrector_report(cset, cs))
    _emit_json(args, "correctors.json", out)
    return 0


def _kernel_command(args, config, kind):
    field = _coefficient(config, args)
    solver = _solver(config)
    n = _mesh_n(config, args)
    dm = fem.DomainMesh(n)
    eps = float(Fraction(args.eps.split(",")[0])) if args.eps else 1 / 8
    sc = rescale(field, eps)
    source = int(np.argmin(np.sum((dm.nodes - (0.75, 0.5)) ** 2, axis=1)))
    if kind == "green":
        fld = kermod.green(sc, dm, source, options=solver)
        table = kermod.KernelTable("green", eps, dm, [source], [fld])
    elif kind == "neumann-fn":
        fld = kermod.neumann_fn(sc, dm, source, options=solver)
        table = kermod.KernelTable("neumann-fn", eps, dm, [source], [fld])
    else:
        pos = dm.n_boundary // 8
        fld = kermod.poisson_kernel(sc, dm, pos, options=solver)
        table = kermod.KernelTable("poisson", eps, dm, [pos], [fld])
    table.to_csv(_outpath(args, f"{kind}.csv"))
    print(f"wrote {_outpath(args, f'{kind}.csv')}")
    return 0


def cmd_dtn(args, config):
    field = _coefficient(config, args)
    solver = _solver(config)
    n = _mesh_n(config, args)
    dm = fem.DomainMesh(n)
    eps = float(Fraction(args.eps.split(",")[0])) if args.eps else 1 / 8
    D = kermod.dtn(rescale(field, eps), dm, options=solver)
    D.to_csv(_outpath(args, "dtn.csv"))
    print(f"wrote {_outpath(args, 'dtn.csv')}")
    return 0


def cmd_expand(args, config):
    field = _coefficient(config, args)
    solver = _solver(config)
    eps = float(Fraction(args.eps.split(",")[0])) if args.eps else 1 / 8
    cpp = args.cells_per_period or 16
    dm = fem.DomainMesh(int(round(cpp / eps)))
    sc = rescale(field, eps)
    cs = ratelab.cell_solution(field, config.get("mesh", {}).get("cell_n", 256), solver)
    result = {}
    if args.check == "conormal" or args.family == "neumann":
        opn = fem.assemble(sc, dm, mode="neumann")
        opn0 = fem.assemble(cs.hatA, dm, mode="neumann", m=field.m)
        F = np.cos(np.pi * dm.nodes[:, 0])[:, None]
        u_eps = fem.solve_neumann(opn, F, options=solver)
        u0 = fem.solve_neumann(opn0, F, options=solver)
        cset = corrmod.build(sc, dm, hatA=cs.hatA, options=solver)
        e = expmod.build_expansion(u_eps, u0, "neumann", correctors=cset)
        result["conormal"] = expmod.conormal_identity_check(e, sc, cs.hatA)
    else:
        op = fem.assemble(sc, dm, mode="dirichlet")
        op0 = fem.assemble(cs.hatA, dm, mode="dirichlet", m=field.m)
        f = np.ones((dm.nnodes, field.m))
        u_eps = fem.solve_dirichlet(op, f, bdata=0.0, options=solver)
        u0 = fem.solve_dirichlet(op0, f, bdata=0.0, options=solver)
        if args.family == "dirichlet":
            cset = corrmod.build(sc, dm, hatA=cs.hatA, with_neumann=False, options=solver)
            e = expmod.build_expansion(u_eps, u0, "dirichlet", correctors=cset)
        else:
            e = expmod.build_expansion(u_eps, u0, "chi", cell_solution=cs, epsilon=eps)
        result["w_h1"] = fem.norm(e.w, "W1p", 2)
        if args.check == "residual":
            result["residual"] = expmod.residual_identity_check(e, sc, cs, op=op)["residual"]
        if args.experiment == "s-epsilon":
            cset = corrmod.build(sc, dm, hatA=cs.hatA, with_neumann=False, options=solver)
            r = expmod.s_epsilon(sc, cset.phi, cset.phi_star, dm,
                                 np.sin(2 * np.pi * dm.nodes[:, 0]), hatA=cs.hatA,
                                 options=solver)
            result["s_epsilon_norms"] = r["norms"]
    _emit_json(args, "expand.json", result)
    return 0


def cmd_rates(args, config, experiments=None):
    solver = _solver(config)
    ids = experiments or config.get("experiments") or ["cell-oracle"]
    if args.experiments:
        ids = args.experiments.split(",")
    kwargs = {}
    if args.eps:
        kwargs["eps_list"] = _parse_eps(args.eps)
    if args.cells_per_period:
        kwargs["cells_per_period"] = args.cells_per_period
    coeff_spec = config.get("coefficient")
    configs = [ratelab.ExperimentConfig(i, coefficient=coeff_spec, solver=solver,
                                        seed=config.get("seed", 0), **kwargs)
               for i in ids]
    reports = ratelab.run_many(configs)
    ok = True
    for i in ids:
        rep = reports[i]
        ok &= rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'} {i}: {rep.detail}")
        path = _outpath(args, f"{i}.{args.format}")
        ratelab.emit(rep, args.format, path)
    return 0 if ok else 1


def cmd_all(args, config):
    return cmd_rates(args, config, experiments=sorted(ratelab.EXPERIMENTS))


def main(argv=None):
    parser = argparse.ArgumentParser(prog="homoglab", description=__doc__)
    parser.add_argument("command", choices=["cell", "correctors", "green", "neumann-fn",
                                            "poisson", "dtn", "expand", "rates", "all"])
    parser.add_argument("--config", help="JSON config path")
    parser.add_argument("--out", help="output directory (default .)")
    parser.add_argument("--eps", "--eps-list", dest="eps",
                        help="comma-separated epsilon list, fractions allowed")
    parser.add_argument("--cells-per-period", type=int, dest="cells_per_period")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--experiments", help="comma-separated experiment ids (rates)")
    parser.add_argument("--coeff-family", dest="coeff_family",
                        help="coefficient family override")
    parser.add_argument("--coeff-params", dest="coeff_params",
                        help="JSON params for the coefficient family")
    parser.add_argument("--family", choices=["chi", "dirichlet", "neumann"],
                        default="chi", help="corrector family for expand")
    parser.add_argument("--n", type=int, help="mesh resolution for kernel commands")
    parser.add_argument("--pin", help="x0,y0 pin point for Neumann correctors")
    parser.add_argument("--check", choices=["residual", "conormal"], default=None)
    parser.add_argument("--experiment", choices=["poisson-approx", "div-approx", "s-epsilon"],
                        default=None)
    args = parser.parse_args(argv)
    config = _load_config(args.config)

    if args.command == "cell":
        return cmd_cell(args, config)
    if args.command == "correctors":
        return cmd_correctors(args, config)
    if args.command in ("green", "neumann-fn", "poisson"):
        return _kernel_command(args, config, args.command)
    if args.command == "dtn":
        return cmd_dtn(args, config)
    if args.command == "expand":
        return cmd_expand(args, config)
    if args.command == "rates":
        return cmd_rates(args, config)
    if args.command == "all":
        return cmd_all(args, config)
    return 2


if __name__ == "__main__":
    sys.exit(main())
