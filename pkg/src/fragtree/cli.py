"""Command-line front end.

Subcommands: ``simulate`` (trace files), ``tree`` (marginal tree + height
sample + interval snapshots), ``verify`` (statistical suites), ``constants``
(exponent/constant tables).  Every output is a pure function of the config
file bytes and flags: randomness flows from the mandatory --seed, replica
seeds are seed..seed+R-1, and no timestamps or environment values are
written.  Options may come from a JSON --config file; explicit flags win.

Exit codes: 0 success, 1 statistical-check failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dislocation as dl
from . import genealogy as gen
from . import height as hgt
from . import reports
from . import verify as ver
from .engine import load_trace, save_trace, simulate_homogeneous, simulate_self_similar
from .errors import FragtreeError, ValidationError

EXIT_OK = 0
EXIT_STAT_FAIL = 1
EXIT_CONFIG = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option defaults (flags override)")
    p.add_argument("--measure", help="measure spec file (JSON)")
    p.add_argument("--alpha", type=float, help="self-similarity index (< 0)")
    p.add_argument("--seed", type=int, help="base RNG seed (required; no implicit entropy)")
    p.add_argument("--n", type=int, help="number of tagged labels")
    p.add_argument("--k", type=int, help="number of leaves for tree/height outputs")
    p.add_argument("--replicas", type=int, help="replica count (seeds seed..seed+R-1)")
    p.add_argument("--horizon", type=float, help="homogeneous time horizon")
    p.add_argument("--death-tol", dest="death_tol", type=float, help="death truncation tolerance")
    p.add_argument("--mass-floor", dest="mass_floor", type=float, help="full-mode mass floor")
    p.add_argument("--eps", type=float, help="restriction eps for infinite measures")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fragtree",
                                 description="Self-similar fragmentation simulator and verifier")
    sub = ap.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate traces and write them to files")
    _add_common(p_sim)
    p_sim.add_argument("--mode", choices=["tree", "full"], help="tracking mode (default tree)")
    p_sim.add_argument("--homogeneous", action="store_true",
                       help="simulate at index 0 with --horizon instead of --alpha")

    p_tree = sub.add_parser("tree", help="marginal tree, height sample, interval snapshots")
    _add_common(p_tree)
    p_tree.add_argument("--trace", help="read an existing trace file instead of simulating")
    p_tree.add_argument("--figures", action="store_true", help="also render figures (PNG)")

    p_ver = sub.add_parser("verify", help="run a statistical verification suite")
    _add_common(p_ver)
    p_ver.add_argument("--suite", help="one of: " + ", ".join(ver.SUITE_NAMES))
    p_ver.add_argument("--beta", type=float, help="stable index for the tail suite")
    p_ver.add_argument("--figures", action="store_true", help="also render figures (PNG)")

    p_const = sub.add_parser("constants", help="exponent tables and measure constants")
    _add_common(p_const)
    p_const.add_argument("--q", help="comma-separated q grid (default 0.5,1,2)")
    p_const.add_argument("--N", dest="grind_n", type=int, help="keep-N for phi_xi/phi_sigma")
    p_const.add_argument("--grind-eps", dest="grind_eps", type=float,
                         help="eps for phi_xi/phi_sigma (default 0.2)")
    return ap


def _merge_config(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    """Fill unset options from the JSON config file; flags keep priority."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc}")
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValidationError(f"unknown config key {key!r}")
        flag = "--" + key.replace("_", "-")
        given = any(a == flag or a.startswith(flag + "=") for a in argv)
        if not given:
            setattr(args, attr, value)
    return args


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ValidationError(f"--{name.replace('_', '-')} is required")


def _load_measure(args) -> dl.DislocationMeasure:
    _require(args, "measure")
    return dl.load_measure(args.measure)


def _outdir(args) -> str:
    _require(args, "out")
    return reports.ensure_dir(args.out)


def cmd_simulate(args) -> int:
    measure = _load_measure(args)
    _require(args, "seed", "n", "out")
    replicas = args.replicas or 1
    out = _outdir(args)
    mode = args.mode or "tree"
    death_tol = args.death_tol if args.death_tol is not None else 0.01
    mass_floor = args.mass_floor if args.mass_floor is not None else 1e-6
    paths = []
    for r in range(replicas):
        seed = args.seed + r
        if args.homogeneous:
            if args.horizon is None:
                raise ValidationError("--homogeneous needs --horizon")
            tr = simulate_homogeneous(measure, args.n, seed, horizon=args.horizon,
                                      mode=mode, mass_floor=mass_floor, eps=args.eps)
        else:
            if args.alpha is None or args.alpha >= 0:
                raise ValidationError("self-similar simulation needs --alpha < 0")
            tr = simulate_self_similar(measure, args.alpha, args.n, seed,
                                       death_tol=death_tol, mode=mode,
                                       mass_floor=mass_floor, eps=args.eps)
        path = os.path.join(out, f"trace_{r:04d}.txt")
        save_trace(tr, path)
        paths.append(path)
    print("\n".join(paths))
    return EXIT_OK


def cmd_tree(args) -> int:
    out = _outdir(args)
    _require(args, "seed")
    if args.trace:
        tr = load_trace(args.trace)
    else:
        measure = _load_measure(args)
        _require(args, "alpha", "n")
        if args.alpha >= 0:
            raise ValidationError("--alpha must be < 0")
        tr = simulate_self_similar(measure, args.alpha, args.n, args.seed,
                                   death_tol=args.death_tol if args.death_tol is not None else 0.01,
                                   eps=args.eps)
    k = args.k or tr.n
    tree = gen.build_marginal_tree(tr, k)
    with open(os.path.join(out, "tree.nwk"), "w") as f:
        f.write(tree.to_newick() + "\n")
    with open(os.path.join(out, "tree.json"), "w") as f:
        f.write(tree.to_json() + "\n")

    planar = hgt.randomize_orders(tree, np.random.default_rng(args.seed))
    hs = hgt.leaf_positions(planar)
    with open(os.path.join(out, "heights.tsv"), "w") as f:
        f.write(hs.export_text())

    heights = sorted(hs.h)
    levels = [0.0] + [float(np.quantile(heights, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)]
    with open(os.path.join(out, "intervals.tsv"), "w") as f:
        f.write("# level\tlengths...\n")
        for level in levels:
            lens = [ln for ln, _ in hgt.interval_fragmentation(planar, level)]
            f.write("\t".join([f"{level:.17g}"] + [f"{x:.17g}" for x in lens]) + "\n")

    if k <= 512:
        labels, dmat = tree.distance_matrix()
        rows = []
        for i, la in enumerate(labels):
            for j in range(i + 1, len(labels)):
                rows.append((la, labels[j], dmat[i, j]))
        reports.write_csv(os.path.join(out, "distances.csv"), ["i", "j", "distance"], rows)

    if args.figures:
        from . import plots
        plots.plot_height_sample(os.path.join(out, "height_sample.png"), hs,
                                 title=f"height sample, k={k}")
    print(f"tree with {k} leaves written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    _require(args, "suite", "out")
    out = _outdir(args)
    kwargs = {}
    if args.suite == "dimension":
        kwargs["alpha"] = args.alpha if args.alpha is not None else -0.5
    if args.suite == "tail":
        kwargs["beta"] = args.beta if args.beta is not None else 1.5
    res = ver.run_suite(args.suite, seed=args.seed, **kwargs)

    with open(os.path.join(out, f"{args.suite}_summary.txt"), "w") as f:
        f.write(res.summary() + "\n")
    tables = res.tables
    if "z" in tables:
        reports.write_laplace_grid(os.path.join(out, f"{args.suite}_z.csv"),
                                   tables["q_grid"], tables["t_grid"], tables["z"])
        if args.figures:
            from . import plots
            plots.plot_laplace_z(os.path.join(out, f"{args.suite}_z.png"),
                                 tables["q_grid"], tables["t_grid"], tables["z"])
    if "pooled" in tables:
        reports.write_covering_table(os.path.join(out, "covering.csv"), tables["pooled"])
        if args.figures:
            from . import plots
            eps = [e for e, _ in tables["pooled"]]
            ns = [c for _, c in tables["pooled"]]
            plots.plot_loglog_fit(os.path.join(out, "covering.png"),
                                  [1.0 / e for e in eps], ns, tables["slope"], 0.0,
                                  "1/eps", "N(eps)", "covering numbers")
    if "structure" in tables:
        reports.write_structure_table(os.path.join(out, "structure.csv"), tables["structure"])
        if args.figures:
            from . import plots
            ds = [d for d, _ in tables["structure"]]
            ms = [m for _, m in tables["structure"]]
            plots.plot_loglog_fit(os.path.join(out, "structure.png"), ds, ms,
                                  tables["slope"], 0.0, "delta", "M(delta)",
                                  "structure function")
    if "report" in tables:
        reports.write_regression(os.path.join(out, "tail_regression.csv"), "tail",
                                 tables["report"])
    print(res.summary())
    return EXIT_OK if res.passed else EXIT_STAT_FAIL


def cmd_constants(args) -> int:
    measure = _load_measure(args)
    q_grid = [0.5, 1.0, 2.0]
    if args.q:
        q_grid = [float(x) for x in args.q.split(",")]
    lines = []
    lines.append(f"measure: {dl.canonical_json(measure.spec())}")
    lines.append(f"measure hash: {measure.spec_hash()}")
    try:
        c = dl.constants(measure)
        lines.append(f"varrho = {c.varrho!r}")
        lines.append(f"p_lower = {c.p_lower!r}")
        lines.append(f"A = {c.A!r}")
        flag = "  (finite-measure convention)" if c.finite_measure else ""
        lines.append(f"theta_low = {c.theta_low!r}{flag}")
        lines.append(f"theta_up = {c.theta_up!r}{flag}")
    except FragtreeError as exc:
        lines.append(f"constants: unavailable ({exc})")
    rows = []
    for q in q_grid:
        try:
            rep = measure.tagged_exponent(q)
            val = "-inf (divergent)" if rep.divergent else repr(rep.value)
            lines.append(f"Phi({q!r}) = {val}")
            rows.append((q, rep.value, rep.error, int(rep.divergent)))
        except FragtreeError as exc:
            lines.append(f"Phi({q!r}): unavailable ({exc})")
    grind_n = args.grind_n
    if grind_n is not None:
        ge = args.grind_eps if args.grind_eps is not None else 0.2
        for q in q_grid:
            try:
                xi = dl.phi_xi(measure, grind_n, ge, q)
                sg, kill = dl.phi_sigma(measure, grind_n, ge, q)
                lines.append(f"phi_xi({q!r}; N={grind_n}, eps={ge!r}) = {xi.value!r}")
                lines.append(f"phi_sigma({q!r}; N={grind_n}, eps={ge!r}) = {sg.value!r} "
                             f"(killing rate {kill!r})")
            except FragtreeError as exc:
                lines.append(f"phi_xi/phi_sigma({q!r}): unavailable ({exc})")
    text = "\n".join(lines)
    print(text)
    if args.out:
        out = _outdir(args)
        with open(os.path.join(out, "constants.txt"), "w") as f:
            f.write(text + "\n")
        if rows:
            reports.write_csv(os.path.join(out, "phi.csv"),
                              ["q", "value", "quad_error", "divergent"], rows)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, argv)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "tree":
            return cmd_tree(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "constants":
            return cmd_constants(args)
        raise ValidationError(f"unknown command {args.command}")
    except FragtreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
