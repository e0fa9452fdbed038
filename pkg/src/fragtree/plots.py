"""Optional matplotlib rendering of report tables.

Figures are a convenience layer over the delimited outputs (opt-in via the
CLI ``--figures`` flag); the CSV files remain the deterministic contract.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["figure.figsize"] = (5.0, 3.4)
plt.rcParams["figure.dpi"] = 150
plt.rcParams["savefig.bbox"] = "tight"


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)


def plot_loglog_fit(path, xs, ys, slope, intercept, xlabel, ylabel, title=""):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    fig, ax = plt.subplots()
    ax.loglog(xs, ys, "o", ms=4)
    keep = ys > 0
    ax.loglog(xs[keep], np.exp(intercept) * xs[keep] ** slope, "-",
              label=f"slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_height_sample(path, hs, title=""):
    fig, ax = plt.subplots()
    ax.plot(hs.u, hs.h, ".", ms=2)
    ax.set_xlabel("u")
    ax.set_ylabel("height")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_laplace_z(path, q_grid, t_grid, z, title=""):
    fig, ax = plt.subplots()
    for iq, q in enumerate(q_grid):
        ax.plot(t_grid, z[iq], "o-", label=f"q={q}")
    ax.axhline(3.0, color="gray", ls="--", lw=0.8)
    ax.axhline(-3.0, color="gray", ls="--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("z")
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_mass_loss(path, rows, title=""):
    t = [r["t"] for r in rows]
    lo = [r["lower"] for r in rows]
    up = [r["upper"] for r in rows]
    fig, ax = plt.subplots()
    ax.fill_between(t, lo, up, alpha=0.3, label="dust bracket")
    ax.plot(t, lo, "-", lw=1)
    ax.plot(t, up, "-", lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("mass lost")
    ax.set_ylim(0, 1.02)
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path)
