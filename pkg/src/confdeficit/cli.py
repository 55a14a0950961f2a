"""Command-line tools for the conformal energy deficit.

Every subcommand builds a domain from the flags (or a config file), reads
its input map, writes a JSON report (and CSV tables where relevant) into
``--out`` and prints the report path. Exit status is 0 on success, 1 when the
computation raises a :class:`~confdeficit.errors.DomainError` or a
verification criterion fails, and 2 on input/output or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .domain import build_chart_grid, build_icosphere
from .errors import DomainError
from .io import MapFileError, load_map, save_map, write_csv, write_json
from .maps import monomial_exponents
from .moebius import MoebiusTransform, inverse, sample_random

log = logging.getLogger("confdeficit")

__all__ = ["main", "build_parser", "make_domain"]


def make_domain(cfg):
    """Domain described by a configuration."""
    if cfg.backend == "mesh":
        if cfg.n != 3:
            raise ConfigError("the mesh backend is only available for n = 3")
        return build_icosphere(level=cfg.level, order=cfg.order)
    return build_chart_grid(cfg.n, resolution=cfg.resolution)


def _config_from_args(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.replace(backend=args.backend, n=args.n, level=args.level, resolution=args.resolution,
                       order=args.order, seed=args.seed, k=args.k, fraction=args.fraction, kappa=args.kappa,
                       n_starts=getattr(args, "starts", None), out=args.out)


def _meta(cfg, dom):
    meta = {"config_sha256": cfg.digest(), "seed": cfg.seed, "version": __version__}
    if dom is not None:
        meta["domain"] = dom.metadata()
    return meta


def _write_report(cfg, name, payload, dom):
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{name}.json")
    payload = dict(payload)
    meta = _meta(cfg, dom)
    dom_meta = meta.get("domain", {})
    extra = {k: v for k, v in payload.get("metadata", {}).items() if k not in dom_meta or dom_meta[k] != v}
    payload["metadata"] = {**extra, **meta}
    write_json(payload, path)
    print(path)
    return path


def _load(args, dom):
    if not args.map:
        raise MapFileError("--map is required")
    return load_map(args.map, dom)


# ----------------------------------------------------------------------------
# subcommands


def cmd_energy(args, cfg):
    """Dirichlet energy, volume and conformality defect of a map."""
    from .functionals import conformality_defect, dirichlet_energy, volume

    dom = make_domain(cfg)
    u = _load(args, dom)
    gap = conformality_defect(u)
    payload = {"dirichlet": dirichlet_energy(u), "volume": volume(u),
               "conformality_defect_mean": float(dom.integrate(gap)), "conformality_defect_max": float(gap.max()),
               "sampling": "smooth" if u.is_smooth else "nodal"}
    _write_report(cfg, "energy", payload, dom)
    return 0


def cmd_deficit(args, cfg):
    """Energy, volume and deficit of a map."""
    from .functionals import deficit

    dom = make_domain(cfg)
    u = _load(args, dom)
    rep = deficit(u, cfg.volume_floor)
    _write_report(cfg, "deficit", rep.to_dict(), dom)
    return 0


def cmd_degree(args, cfg):
    """Degree of a sphere-valued map, optionally the local degree at random points."""
    from .functionals import degree_sphere_valued, local_degree_field

    dom = make_domain(cfg)
    u = _load(args, dom)
    payload = {"degree_tol": cfg.degree_tol}
    try:
        payload["degree"] = degree_sphere_valued(u, tol=cfg.degree_tol)
    except DomainError as exc:
        if not args.points:
            raise
        payload["degree_error"] = f"{type(exc).__name__}: {exc}"
    if args.points:
        rng = np.random.default_rng(cfg.seed)
        pts = rng.uniform(-1.5, 1.5, size=(args.points, dom.n))
        field_ = local_degree_field(u, pts)
        header, rows = field_.to_rows()
        os.makedirs(cfg.out, exist_ok=True)
        write_csv([dict(zip(header, r)) for r in rows], os.path.join(cfg.out, "local_degree.csv"), header)
        payload.update(r_min=field_.r_min, flagged=int(field_.flagged.sum()), points=len(pts))
    _write_report(cfg, "degree", payload, dom)
    return 0


def cmd_fit(args, cfg):
    """Best Moebius approximation up to scaling and translation."""
    from .fitting import fit_moebius

    dom = make_domain(cfg)
    u = _load(args, dom)
    res = fit_moebius(u, n_starts=cfg.n_starts, seed=cfg.seed, grad_tol=cfg.grad_tol,
                      volume_floor=cfg.volume_floor)
    payload = res.to_dict()
    payload["grad_tol"] = cfg.grad_tol
    _write_report(cfg, "fit", payload, dom)
    return 0


def cmd_normalize(args, cfg):
    """Normalize by projection onto the Moebius directions and compare with the fit."""
    from .fitting import fit_moebius, normalize_projection
    from .quadratics import w12_inner

    dom = make_domain(cfg)
    u = _load(args, dom)
    res = normalize_projection(u, tol=cfg.proj_tol, volume_floor=cfg.volume_floor)
    fit = fit_moebius(u, n_starts=cfg.n_starts, seed=cfg.seed, grad_tol=cfg.grad_tol,
                      volume_floor=cfg.volume_floor)
    gap = inverse(res.psi).action_distance(fit.transform, dom.points)
    payload = {"psi": res.psi.to_dict(), "lambda": res.lam, "projection_residual": res.projection_residual,
               "proj_tol": cfg.proj_tol, "iterations": res.iterations, "shift": res.shift, "scale": res.scale,
               "w_norm_w12": float(np.sqrt(w12_inner(res.w, res.w))),
               "fit_transform": fit.transform.to_dict(), "inverse_psi_vs_fit_max_distance": gap}
    _write_report(cfg, "normalize", payload, dom)
    return 0


def cmd_bubble(args, cfg):
    """Rescale the map so its energy spreads over a fixed chart ball."""
    from .fitting import bubble_normalize, rotation_distance

    dom = make_domain(cfg)
    u = _load(args, dom)
    res = bubble_normalize(u, k=args.k, fraction=args.fraction)
    payload = res.to_dict()
    payload["rotation_distance"] = rotation_distance(res.normalized)[0]
    os.makedirs(cfg.out, exist_ok=True)
    write_csv([{"s": s, "cap_fraction": c, "lower": res.window[0], "upper": res.window[1]}
               for s, c in zip(res.cap_levels, res.cap_fractions)], os.path.join(cfg.out, "bubble_caps.csv"))
    save_map(res.normalized, os.path.join(cfg.out, "bubble_normalized.json"))
    _write_report(cfg, "bubble", payload, dom)
    return 0


def cmd_spectrum(args, cfg):
    """Lowest eigenvalues of the constrained second variation at the identity."""
    from .quadratics import coercivity_spectrum

    dom = make_domain(cfg)
    rep = coercivity_spectrum(dom, m=args.m, basis=args.basis)
    payload = {"eigenvalues": rep.eigenvalues, "residuals": rep.residuals,
               "kernel_dimension": rep.kernel_dimension, "basis": rep.basis,
               "subspace_dimension": rep.subspace_dimension, "metadata": rep.metadata}
    _write_report(cfg, "spectrum", payload, dom)
    return 0


def cmd_flow(args, cfg):
    """Run the preconditioned deficit-decreasing flow."""
    from .fitting import deficit_flow
    from .functionals import el_residual

    dom = make_domain(cfg)
    u = _load(args, dom)
    rows = []

    def record(i, v, rep):
        res = el_residual(v, cfg.volume_floor).norm if i % args.residual_every == 0 else float("nan")
        rows.append({"step": i, "D": rep.dirichlet, "V": rep.volume, "E": rep.deficit, "residual": res,
                     "volume_floor": cfg.volume_floor})

    flow = deficit_flow(u, steps=args.steps, step=args.step, volume_floor=cfg.volume_floor, callback=record)
    os.makedirs(cfg.out, exist_ok=True)
    write_csv(rows, os.path.join(cfg.out, "flow.csv"), ["step", "D", "V", "E", "residual", "volume_floor"])
    save_map(flow.final, os.path.join(cfg.out, "flow_final.json"))
    d = flow.deficits
    payload = {"initial_deficit": d[0], "final_deficit": d[-1], "steps": len(d) - 1,
               "violations": int(np.sum(np.diff(d) > 0)), "final_residual": flow.residual_norm}
    _write_report(cfg, "flow", payload, dom)
    return 0


def cmd_expand_volume(args, cfg):
    """Check the volume expansion of id + w in homogeneous terms."""
    from .quadratics import volume_expansion

    dom = make_domain(cfg)
    w = _load(args, dom)
    res = volume_expansion(w)
    payload = {"terms": res.terms, "volume": res.volume, "residual": res.residual}
    _write_report(cfg, "expand_volume", payload, dom)
    return 0


def cmd_verify(args, cfg):
    """Run the acceptance criteria."""
    from .acceptance import run_all

    only = [int(c) for c in args.criteria.split(",")] if args.criteria else None
    results = run_all(cfg, only=only, echo=print)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "acceptance.json")
    write_json({"results": [r.to_dict() for r in results], "metadata": _meta(cfg, None)}, path)
    print(path)
    return 0 if all(r.passed for r in results) else 1


def cmd_make_map(args, cfg):
    """Write a map file of a standard kind."""
    n = cfg.n
    rng = np.random.default_rng(cfg.seed)
    if args.kind == "identity":
        spec = {"kind": "identity", "n": n}
    elif args.kind == "moebius":
        phi = sample_random(n, rng) if args.lam is None else MoebiusTransform(
            np.eye(n), np.eye(n)[-1], float(args.lam))
        spec = {"kind": "moebius", "transform": phi.to_dict()}
    elif args.kind == "power":
        spec = {"kind": "power", "k": args.power}
    else:
        exps = monomial_exponents(n, 3)
        coeffs = args.amplitude * rng.standard_normal((exps.shape[0], n)) / np.sqrt(exps.shape[0])
        spec = {"kind": "polynomial", "exponents": exps.tolist(), "coeffs": coeffs.tolist(),
                "plus_identity": True}
    write_json(spec, args.output)
    print(args.output)
    return 0


COMMANDS = {
    "energy": cmd_energy,
    "deficit": cmd_deficit,
    "degree": cmd_degree,
    "fit": cmd_fit,
    "normalize": cmd_normalize,
    "bubble": cmd_bubble,
    "spectrum": cmd_spectrum,
    "flow": cmd_flow,
    "expand-volume": cmd_expand_volume,
    "verify": cmd_verify,
    "make-map": cmd_make_map,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--n", type=int, help="ambient dimension (sphere S^{n-1})")
    common.add_argument("--backend", choices=["mesh", "chart"])
    common.add_argument("--level", type=int, help="icosphere refinement level")
    common.add_argument("--resolution", type=int, help="chart grid cells per axis")
    common.add_argument("--order", type=int, help="per-triangle Gauss order")
    common.add_argument("--map", help="input map JSON")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--k", type=int, help="covering number for the cap window")
    common.add_argument("--fraction", type=float, help="energy share of the selected chart ball")
    common.add_argument("--kappa", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="confdeficit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__)
        if name == "spectrum":
            p.add_argument("-m", type=int, default=6, help="number of eigenvalues")
            p.add_argument("--basis", choices=["polynomial", "nodal"], default="polynomial")
        elif name in ("fit", "normalize"):
            p.add_argument("--starts", type=int, help="number of starts of the fit")
        elif name == "flow":
            p.add_argument("--steps", type=int, default=200)
            p.add_argument("--step", type=float, default=0.5)
            p.add_argument("--residual-every", type=int, default=10)
        elif name == "degree":
            p.add_argument("--points", type=int, default=0, help="random target points for the local degree")
        elif name == "verify":
            p.add_argument("--criteria", help="comma-separated subset, e.g. 1,3,6")
        elif name == "make-map":
            p.add_argument("kind", choices=["identity", "moebius", "power", "perturbation"])
            p.add_argument("output")
            p.add_argument("--lam", type=float, help="dilation factor at e_n (moebius)")
            p.add_argument("--power", type=int, default=2, help="exponent (power)")
            p.add_argument("--amplitude", type=float, default=0.1, help="size of the cubic field (perturbation)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config_from_args(args)
        log.info("config sha256=%s seed=%d", cfg.digest(), cfg.seed)
        return COMMANDS[args.command](args, cfg)
    except DomainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, MapFileError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
