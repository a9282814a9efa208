"""Command-line orchestration: coefficient generation, single solves,
convergence sweeps, and CSV emission.

Subcommands: generate-coeff, check-cordes, solve-fine, solve-lod,
convergence, recover-u.  Options come from an optional key=value config file
plus flags, flags winning.  Every output file starts with a comment line
echoing the effective configuration; the convergence table uses the fixed
header H,ell,p,err_energy,err_L2,eoc_energy,eoc_L2,wall_time_s, where p = 0
labels the rows without post-processing.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import assembly
from .coeffs import CoeffSet, check_cordes, read_coeff_file, write_coeff_file
from .fespace import VectorFESpace
from .lod import Discretization, multiscale_solve
from .mesh import MeshHierarchy
from .recovery import ScalarPoissonSpace, recover_u


def load_cos_y3(x, y):
    return np.cos(np.pi * x) * y**3


def load_zero(x, y):
    return np.zeros_like(x)


def load_one(x, y):
    return np.ones_like(x)


def load_sine_laplacian(x, y):
    return -2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)


LOADS = {
    "cospix-y3": load_cos_y3,
    "zero": load_zero,
    "one": load_one,
    "sine-laplacian": load_sine_laplacian,
}


@dataclass
class RunConfig:
    sigma: float = 1.0
    delta: float = 0.1
    eps_exp: int = 5
    seed: int = 1
    fine_exp: int = 6
    coarse_exps: tuple = (0, 1, 2, 3, 4)
    ells: tuple = (1, 2, 3, 4)
    ps: tuple = (1, 2)
    f: str = "cospix-y3"
    coeff_file: str | None = None
    out_dir: str = "out"
    recovery_exp: int | None = None

    def validate(self):
        if self.f not in LOADS:
            raise SystemExit(f"unknown load {self.f!r}; choose from {sorted(LOADS)}")
        for p in self.ps:
            if p not in (1, 2):
                raise SystemExit("p must be 1 or 2")
        if self.fine_exp < self.eps_exp:
            raise SystemExit("fine mesh must resolve the coefficient grid (fine-exp >= eps-exp)")
        if self.recovery_exp is not None and self.recovery_exp > self.fine_exp:
            raise SystemExit("recovery mesh must not be finer than the fine mesh")

    def validate_lod(self):
        """h <= min(eps, H/2) for every requested coarse level."""
        self.validate()
        for ce in self.coarse_exps:
            if self.fine_exp < ce + 1:
                raise SystemExit("need h <= H/2 (fine-exp >= coarse-exp + 1)")

    def echo(self) -> str:
        parts = [
            f"sigma={self.sigma!r}", f"delta={self.delta!r}",
            f"eps_exp={self.eps_exp}", f"seed={self.seed}",
            f"fine_exp={self.fine_exp}",
            "coarse_exps=" + ",".join(str(c) for c in self.coarse_exps),
            "ells=" + ",".join(str(e) for e in self.ells),
            "p=" + ",".join(str(p) for p in self.ps),
            f"f={self.f}",
            f"coeff={'file:' + self.coeff_file if self.coeff_file else 'generate'}",
        ]
        if self.recovery_exp is not None:
            parts.append(f"recovery_exp={self.recovery_exp}")
        return "# config: " + " ".join(parts)


def _parse_int_list(text: str) -> tuple:
    return tuple(int(t) for t in str(text).replace(",", " ").split())


def read_config_file(path) -> dict:
    """key = value lines; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"bad config line: {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_LIST_KEYS = {"coarse_exps", "ells", "ps"}
_INT_KEYS = {"eps_exp", "seed", "fine_exp", "recovery_exp"}
_FLOAT_KEYS = {"sigma", "delta"}


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f_ in fields(RunConfig):
        flag = getattr(args, f_.name, None)
        if flag is not None:
            values[f_.name] = flag
    for key, val in list(values.items()):
        if key in _LIST_KEYS and not isinstance(val, tuple):
            values[key] = _parse_int_list(val)
        elif key in _INT_KEYS and val is not None:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
    unknown = set(values) - {f_.name for f_ in fields(RunConfig)}
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    cfg = replace(cfg, **values)
    cfg.validate()
    return cfg


def _coeffs(cfg: RunConfig) -> CoeffSet:
    if cfg.coeff_file and Path(cfg.coeff_file).exists():
        return read_coeff_file(cfg.coeff_file)
    return CoeffSet.multiscale(seed=cfg.seed, eps_exp=cfg.eps_exp)


def _print_cordes(report):
    print(f"cordes: worst ratio {report.worst_ratio:.12g}, "
          f"delta_max {report.delta_max:.12g}, delta_floor {report.delta_floor:.12g}, "
          f"delta {report.delta:g} -> {'satisfied' if report.satisfied else 'VIOLATED'}")


def cmd_generate_coeff(cfg: RunConfig) -> int:
    coeffs = CoeffSet.multiscale(seed=cfg.seed, eps_exp=cfg.eps_exp)
    report = check_cordes(coeffs, cfg.delta)
    _print_cordes(report)
    if not report.satisfied:
        print(f"worst cell ratio {report.worst_ratio!r} exceeds "
              f"1/(1+{cfg.delta!r}) or delta below floor", file=sys.stderr)
        return 1
    path = cfg.coeff_file or str(Path(cfg.out_dir) / "coeffs.bin")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_coeff_file(path, coeffs)
    print(f"wrote {path}")
    return 0


def cmd_check_cordes(cfg: RunConfig) -> int:
    report = check_cordes(_coeffs(cfg), cfg.delta)
    _print_cordes(report)
    return 0 if report.satisfied else 1


def _write_vector_csv(path, cfg, mesh, vec2):
    lines = [cfg.echo(), "vertex,x,y,vx,vy"]
    for i, ((x, y), (vx, vy)) in enumerate(zip(mesh.vertices, vec2)):
        lines.append(f"{i},{float(x)!r},{float(y)!r},{float(vx)!r},{float(vy)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _write_scalar_csv(path, cfg, mesh, vals):
    lines = [cfg.echo(), "vertex,x,y,u"]
    for i, ((x, y), u) in enumerate(zip(mesh.vertices, vals)):
        lines.append(f"{i},{float(x)!r},{float(y)!r},{float(u)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_solve_fine(cfg: RunConfig) -> int:
    import scipy.sparse.linalg as spla

    coeffs = _coeffs(cfg)
    hierarchy = MeshHierarchy(cfg.fine_exp + 1)
    space = VectorFESpace(hierarchy.levels[cfg.fine_exp])
    A = assembly.assemble_a(space, coeffs, cfg.sigma)
    load = assembly.assemble_load(space, LOADS[cfg.f], coeffs)
    free = space.free_dofs
    z = space.extend(spla.spsolve(A[free][:, free].tocsc(), load[free]))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_vector_csv(out / "z_fine.csv", cfg, space.mesh, z.reshape(-1, 2))
    energy = float(np.sqrt(max(z @ (A @ z), 0.0)))
    print(f"fine solve: {space.n_free} free dofs, |z|_a = {energy:.6e}; "
          f"wrote {out / 'z_fine.csv'}")
    return 0


def cmd_solve_lod(cfg: RunConfig) -> int:
    coeffs = _coeffs(cfg)
    hierarchy = MeshHierarchy(cfg.fine_exp + 1)
    coarse_exp = cfg.coarse_exps[0]
    ell = cfg.ells[-1]
    disc = Discretization(hierarchy, coarse_exp, cfg.fine_exp, coeffs, sigma=cfg.sigma)
    f = LOADS[cfg.f]
    zh = disc.solve_fine(f)
    res = multiscale_solve(disc, f, ell=ell, p_orders=cfg.ps)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rec_exp = cfg.recovery_exp if cfg.recovery_exp is not None else coarse_exp
    u_ref = recover_u(hierarchy, cfg.fine_exp, rec_exp, zh)
    lines = [cfg.echo(), "quantity,err_energy,err_L2"]
    et = disc.energy_norm(zh - res["solution"].z_tilde)
    lt = disc.l2_norm(zh - res["solution"].z_tilde)
    lines.append(f"tilde,{et!r},{lt!r}")
    rmesh = hierarchy.levels[rec_exp]
    K = ScalarPoissonSpace(rmesh).stiffness()
    M = ScalarPoissonSpace(rmesh).mass()
    for p in cfg.ps:
        zhat = res["z_hat"][p]
        lines.append(f"p{p},{disc.energy_norm(zh - zhat)!r},{disc.l2_norm(zh - zhat)!r}")
        u_hat = recover_u(hierarchy, cfg.fine_exp, rec_exp, zhat)
        du = u_hat - u_ref
        lines.append(
            f"u_p{p}_vs_u_fine,{float(np.sqrt(max(du @ (K @ du), 0.0)))!r},"
            f"{float(np.sqrt(max(du @ (M @ du), 0.0)))!r}")
        _write_scalar_csv(out / f"u_recovered_p{p}.csv", cfg, rmesh, u_hat)
        _write_vector_csv(out / f"z_hat_p{p}.csv", cfg, disc.fine, zhat.reshape(-1, 2))
    (out / "errors.csv").write_text("\n".join(lines) + "\n")
    _write_vector_csv(out / "z_tilde.csv", cfg, disc.fine, res["solution"].z_tilde.reshape(-1, 2))
    print(f"wrote {out / 'errors.csv'}")
    return 0


def eoc(err_prev, err_next, H_prev, H_next) -> float:
    return float(np.log(err_prev / err_next) / np.log(H_prev / H_next))


def cmd_convergence(cfg: RunConfig) -> int:
    if len(cfg.coarse_exps) < 3:
        raise SystemExit("convergence sweep needs at least 3 coarse levels")
    coeffs = _coeffs(cfg)
    hierarchy = MeshHierarchy(cfg.fine_exp + 1)
    f = LOADS[cfg.f]
    records = []
    zh = None
    for ce in cfg.coarse_exps:
        disc = Discretization(hierarchy, ce, cfg.fine_exp, coeffs, sigma=cfg.sigma)
        if zh is None:
            zh = disc.solve_fine(f)
        H = 2.0**-ce
        for ell in cfg.ells:
            t0 = time.perf_counter()
            res = multiscale_solve(disc, f, ell=ell, p_orders=cfg.ps)
            wall = time.perf_counter() - t0
            e = zh - res["solution"].z_tilde
            records.append((H, ell, 0, disc.energy_norm(e), disc.l2_norm(e), wall))
            for p in cfg.ps:
                e = zh - res["z_hat"][p]
                records.append((H, ell, p, disc.energy_norm(e), disc.l2_norm(e), wall))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "convergence.csv"
    write_convergence_csv(path, cfg, records)
    print(f"wrote {path}")
    return 0


def write_convergence_csv(path, cfg: RunConfig, records):
    """records: (H, ell, p, err_energy, err_L2, wall_time); EOCs are filled in
    per (ell, p) series between consecutive H values."""
    series: dict = {}
    for rec in records:
        series.setdefault((rec[1], rec[2]), []).append(rec)
    eocs = {}
    for key, recs in series.items():
        recs.sort(key=lambda r: -r[0])
        for i, rec in enumerate(recs):
            if i == 0 or recs[i - 1][3] <= 0 or rec[3] <= 0:
                eocs[(rec[0], *key)] = (float("nan"), float("nan"))
            else:
                eocs[(rec[0], *key)] = (
                    eoc(recs[i - 1][3], rec[3], recs[i - 1][0], rec[0]),
                    eoc(recs[i - 1][4], rec[4], recs[i - 1][0], rec[0])
                    if recs[i - 1][4] > 0 and rec[4] > 0 else float("nan"),
                )
    lines = [cfg.echo(), "H,ell,p,err_energy,err_L2,eoc_energy,eoc_L2,wall_time_s"]
    for H, ell, p, ee, el, wall in records:
        ee_eoc, el_eoc = eocs[(H, ell, p)]
        lines.append(f"{H!r},{ell},{p},{ee!r},{el!r},{ee_eoc!r},{el_eoc!r},{wall:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_recover_u(cfg: RunConfig, z_csv: str) -> int:
    hierarchy = MeshHierarchy(cfg.fine_exp + 1)
    fine = hierarchy.levels[cfg.fine_exp]
    rows = [ln for ln in Path(z_csv).read_text().splitlines()
            if ln and not ln.startswith("#") and not ln.startswith("vertex")]
    if len(rows) != fine.n_vertices:
        raise SystemExit(f"{z_csv}: {len(rows)} rows but fine mesh has "
                         f"{fine.n_vertices} vertices (check --fine-exp)")
    z = np.zeros(2 * fine.n_vertices)
    for row in rows:
        i, _, _, vx, vy = row.split(",")
        z[2 * int(i)] = float(vx)
        z[2 * int(i) + 1] = float(vy)
    rec_exp = cfg.recovery_exp if cfg.recovery_exp is not None else cfg.coarse_exps[0]
    u = recover_u(hierarchy, cfg.fine_exp, rec_exp, z)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_scalar_csv(out / "u_recovered.csv", cfg, hierarchy.levels[rec_exp], u)
    print(f"wrote {out / 'u_recovered.csv'}")
    return 0


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="key=value config file; flags override it")
    sub.add_argument("--sigma", type=float, help="stabilization parameter")
    sub.add_argument("--delta", type=float, help="requested Cordes parameter")
    sub.add_argument("--eps-exp", dest="eps_exp", type=int, help="coefficient grid 2^-k")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--fine-exp", dest="fine_exp", type=int, help="fine mesh level 2^-k")
    sub.add_argument("--coarse-exps", dest="coarse_exps", help="comma-separated coarse levels")
    sub.add_argument("--ell", dest="ells", help="comma-separated oversampling orders")
    sub.add_argument("--p", dest="ps", help="comma-separated post-processing orders (1, 2)")
    sub.add_argument("--f", dest="f", choices=sorted(LOADS), help="load function")
    sub.add_argument("--coeff-file", dest="coeff_file")
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--recovery-exp", dest="recovery_exp", type=int)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ndlod",
        description="multiscale solver for nondivergence-form elliptic problems")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("generate-coeff", "check-cordes", "solve-fine", "solve-lod",
                 "convergence", "recover-u"):
        sub = subs.add_parser(name)
        _add_common(sub)
        if name == "recover-u":
            sub.add_argument("z_csv", help="vector field CSV from solve-fine/solve-lod")
    args = parser.parse_args(argv)
    cfg = build_config(args)
    if args.command in ("solve-lod", "convergence"):
        cfg.validate_lod()
    if args.command == "generate-coeff":
        return cmd_generate_coeff(cfg)
    if args.command == "check-cordes":
        return cmd_check_cordes(cfg)
    if args.command == "solve-fine":
        return cmd_solve_fine(cfg)
    if args.command == "solve-lod":
        return cmd_solve_lod(cfg)
    if args.command == "convergence":
        return cmd_convergence(cfg)
    if args.command == "recover-u":
        return cmd_recover_u(cfg, args.z_csv)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
