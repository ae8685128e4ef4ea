"""Matplotlib figures written straight to files (Agg backend, nothing shown)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "plot_design",
    "plot_pmf",
    "plot_jsa",
    "plot_squeeze_matrix",
    "plot_singular_values",
    "plot_thss",
]

_TWO_PI_THZ = 2 * math.pi * 1e12


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)


def plot_design(design, path, max_domains=200):
    """Domain signs near the crystal centre and the amplitude traces."""
    dom = design.domains
    tr = design.trace
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5.5))
    mid = dom.n_domains // 2
    lo = max(0, mid - max_domains // 2)
    hi = min(dom.n_domains, lo + max_domains)
    z = dom.boundaries[lo:hi + 1] * 1e3
    ax0.step(z[:-1], dom.signs[lo:hi], where="post", lw=0.8)
    ax0.set_ylim(-1.5, 1.5)
    ax0.set_xlabel("z (mm)")
    ax0.set_ylabel("g(z)")
    ax0.set_title(f"{dom.n_domains} domains, w = {dom.width * 1e6:.2f} um (central section)")
    ax1.plot(tr.z * 1e3, tr.target.real, label="target Re A", lw=1.2)
    ax1.plot(tr.z * 1e3, tr.realized.real, label="realized Re A", lw=0.8)
    ax1.plot(tr.z * 1e3, tr.target.imag, "--", label="target Im A", lw=1.0)
    ax1.plot(tr.z * 1e3, tr.realized.imag, ":", label="realized Im A", lw=0.8)
    ax1.set_xlabel("z (mm)")
    ax1.set_ylabel("amplitude at dk0")
    ax1.legend(fontsize=8)
    _save(fig, path)


def plot_pmf(dk, realized, target, dk0, path):
    fig, ax = plt.subplots(figsize=(7, 3.5))
    x = (np.asarray(dk) - dk0) * 1e-3
    ax.plot(x, np.abs(realized), label="|realized|", lw=1.0)
    ax.plot(x, np.abs(target), "--", label="target", lw=1.0)
    ax.set_xlabel("dk - dk0 (1/mm)")
    ax.set_ylabel("PMF")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_jsa(jsa, path, title="|f|"):
    cs = 0.5 * (jsa.axis_s.start + jsa.axis_s.stop)
    ci = 0.5 * (jsa.axis_i.start + jsa.axis_i.stop)
    ext = [
        (jsa.axis_i.start - ci) / _TWO_PI_THZ, (jsa.axis_i.stop - ci) / _TWO_PI_THZ,
        (jsa.axis_s.start - cs) / _TWO_PI_THZ, (jsa.axis_s.stop - cs) / _TWO_PI_THZ,
    ]
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(np.abs(jsa.values), origin="lower", extent=ext, aspect="equal", cmap="viridis")
    ax.set_xlabel("idler detuning (THz)")
    ax.set_ylabel("signal detuning (THz)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    _save(fig, path)


def plot_squeeze_matrix(gamma, path):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(np.abs(gamma.values), cmap="magma", origin="lower")
    ticks = range(len(gamma.labels))
    ax.set_xticks(list(ticks), [str(l) for l in gamma.labels])
    ax.set_yticks(list(ticks), [str(l) for l in gamma.labels])
    ax.set_xlabel("idler bin")
    ax.set_ylabel("signal bin")
    ax.set_title("|gamma_nm|")
    fig.colorbar(im, ax=ax, shrink=0.8)
    _save(fig, path)


def plot_singular_values(values, path, k=20):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    v = np.asarray(values)[:k]
    ax.bar(np.arange(1, v.size + 1), v)
    ax.set_xlabel("index")
    ax.set_ylabel("Schmidt coefficient")
    _save(fig, path)


def plot_thss(rows, path):
    rows = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    order = np.lexsort((rows[:, 2], rows[:, 1], rows[:, 0]))
    r = rows[order]
    x = np.arange(len(r))
    ax.plot(x, r[:, 4], "o-", ms=3, label="Var (x1 - x2)/sqrt2")
    ax.plot(x, r[:, 7], "s-", ms=3, label="Var p1")
    ax.plot(x, r[:, 6], "^-", ms=3, label="PT symplectic eigenvalue")
    ax.axhline(0.5, color="k", lw=0.6)
    ax.set_xlabel("scan point (b11, b12, b22 lexicographic)")
    ax.set_ylabel("variance")
    ax.legend(fontsize=8)
    _save(fig, path)
