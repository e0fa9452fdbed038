"""Deterministic delimited report writers.

Every writer produces byte-stable output given the same inputs: floats are
rendered with repr (shortest exact round trip), rows keep a fixed order, and
no timestamps or environment data are embedded.
"""

from __future__ import annotations

import os

from .estimators import RegressionReport


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_covering_table(path, table) -> None:
    write_csv(path, ["eps", "n_balls"], table)


def write_laplace_grid(path, q_grid, t_grid, z) -> None:
    rows = []
    for iq, q in enumerate(q_grid):
        for it, t in enumerate(t_grid):
            rows.append((q, t, float(z[iq, it])))
    write_csv(path, ["q", "t", "z"], rows)


def write_structure_table(path, table) -> None:
    write_csv(path, ["delta", "M"], table)


def write_tail_table(path, xs, tail) -> None:
    write_csv(path, ["x", "weighted_tail"], zip(xs, tail))


def write_regression(path, name: str, rep: RegressionReport, extra: dict | None = None) -> None:
    rows = [
        ("name", name),
        ("slope", rep.slope),
        ("intercept", rep.intercept),
        ("stderr", rep.stderr),
        ("window_lo", rep.window[0]),
        ("window_hi", rep.window[1]),
        ("n_points", rep.n_points),
    ]
    if rep.flag:
        rows.append(("flag", rep.flag))
    for k in sorted(extra or {}):
        rows.append((k, extra[k]))
    write_csv(path, ["key", "value"], rows)


def write_mass_loss(path, rows) -> None:
    write_csv(path, ["t", "lower", "upper", "se_lower", "se_upper"],
              [(r["t"], r["lower"], r["upper"], r["se_lower"], r["se_upper"]) for r in rows])


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
