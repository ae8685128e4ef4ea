"""Frequency-bin basis, squeezing-matrix extraction and mode bookkeeping.

Bin ``n`` is the normalised Gaussian

    G_n(w) = exp(-(w - W - n dw/2)^2 / (4 sigma^2)) / (2 pi sigma^2)^(1/4)

so neighbouring labels sit half a pump spacing apart. A pump peak ``p`` and a
PMF peak ``q`` together populate signal bin ``q - p`` and idler bin ``-(p + q)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .spectra import JsaAxis, JsaGrid

__all__ = [
    "BinBasis",
    "SqueezeMatrix",
    "InvalidMatrixError",
    "ModeCount",
    "gaussian_overlap",
    "extract_squeeze_matrix",
    "analytic_squeeze_matrix",
    "filter_squeeze_matrix",
    "reconstruct_jsa",
    "count_modes",
    "block_decompose",
    "singular_spectrum",
    "schmidt_number",
    "write_squeeze_csv",
    "read_squeeze_csv",
]


class InvalidMatrixError(ValueError):
    """Squeezing matrix is not square, finite and symmetric."""


@dataclass(frozen=True)
class BinBasis:
    labels: tuple
    center: float
    sigma: float
    delta_omega: float
    axis: str = "signal"

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(n) for n in self.labels))
        if self.axis not in ("signal", "idler"):
            raise ValueError("axis must be 'signal' or 'idler'")

    @classmethod
    def spanning(cls, n_max, center, sigma, delta_omega, axis="signal"):
        return cls(tuple(range(-n_max, n_max + 1)), center, sigma, delta_omega, axis)

    def centers(self):
        return self.center + 0.5 * self.delta_omega * np.asarray(self.labels, dtype=float)

    def functions(self, omega):
        """Rows are ``G_n`` sampled at ``omega``."""
        omega = np.asarray(omega, dtype=float)
        d = omega[None, :] - self.centers()[:, None]
        return np.exp(-(d**2) / (4 * self.sigma**2)) / (2 * math.pi * self.sigma**2) ** 0.25

    def gram(self, axis: JsaAxis):
        g = self.functions(axis.values)
        return (g * axis.trapezoid_weights()) @ g.T

    def analytic_gram(self):
        c = self.centers()
        return np.exp(-((c[:, None] - c[None, :]) ** 2) / (8 * self.sigma**2))


def gaussian_overlap(separation, sigma):
    """Overlap of two unit bins whose centres differ by ``separation``."""
    return math.exp(-(separation**2) / (8 * sigma**2))


@dataclass
class SqueezeMatrix:
    """Symmetric unit-scale matrix over bin labels; ``scale`` is the global squeezing."""

    labels: tuple
    values: np.ndarray
    scale: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        vals = np.asarray(self.values, dtype=complex)
        n = len(self.labels)
        if vals.shape != (n, n):
            raise InvalidMatrixError(f"matrix shape {vals.shape} does not match {n} labels")
        if not np.all(np.isfinite(vals)):
            raise InvalidMatrixError("matrix has non-finite entries")
        top = np.max(np.abs(vals)) if vals.size else 0.0
        if top > 0 and np.max(np.abs(vals - vals.T)) > 1e-9 * top:
            raise InvalidMatrixError("squeezing matrix must be symmetric")
        self.values = 0.5 * (vals + vals.T)
        if len(set(self.labels)) != n:
            raise InvalidMatrixError("duplicate mode labels")

    @property
    def gamma(self):
        return self.scale * self.values

    def index(self, label):
        return self.labels.index(label)

    def entry(self, n, m):
        return complex(self.values[self.index(n), self.index(m)])

    def submatrix(self, labels):
        idx = [self.index(l) for l in labels]
        return SqueezeMatrix(tuple(labels), self.values[np.ix_(idx, idx)], self.scale,
                             dict(self.metadata))

    def renormalized(self):
        norm = math.sqrt(float(np.sum(np.abs(self.values) ** 2)))
        if norm == 0:
            return self
        return SqueezeMatrix(self.labels, self.values / norm, self.scale, dict(self.metadata))

    def with_scale(self, scale):
        return SqueezeMatrix(self.labels, self.values, float(scale), dict(self.metadata))


def _check_margin(basis: BinBasis, axis: JsaAxis, margin_sigma):
    c = basis.centers()
    lo = axis.start + margin_sigma * basis.sigma
    hi = axis.stop - margin_sigma * basis.sigma
    if c.min() < lo * (1 - 1e-15) or c.max() > hi * (1 + 1e-15):
        raise ValueError(
            f"bin centres on the {basis.axis} axis are closer than {margin_sigma:g} sigma "
            "to the grid edge"
        )


def extract_squeeze_matrix(jsa: JsaGrid, basis_s: BinBasis, basis_i: BinBasis,
                           margin_sigma: float = 6.0, warn_residual: float = 1e-2) -> SqueezeMatrix:
    """Overlap integrals of the JSA with bin pairs, by 2-D trapezoidal quadrature.

    Rows of the result index the signal bin and columns the idler bin before
    symmetrisation.
    """
    if basis_s.labels != basis_i.labels:
        raise ValueError("signal and idler bases must share labels")
    _check_margin(basis_s, jsa.axis_s, margin_sigma)
    _check_margin(basis_i, jsa.axis_i, margin_sigma)
    gs = basis_s.functions(jsa.omega_s) * jsa.axis_s.trapezoid_weights()
    gi = basis_i.functions(jsa.omega_i) * jsa.axis_i.trapezoid_weights()
    raw = gs @ jsa.values @ gi.T
    asym = float(np.max(np.abs(raw - raw.T)))
    gamma = 0.5 * (raw + raw.T)
    residual = 1.0 - float(np.sum(np.abs(gamma) ** 2)) if jsa.norm == "unit" else math.nan
    spans = not (residual > warn_residual)
    if not spans:
        warnings.warn(f"basis does not span JSA (residual {residual:.3e})", stacklevel=2)
    meta = {
        "asymmetry": asym,
        "residual": residual,
        "spans_jsa": spans,
        "source": "overlap",
    }
    return SqueezeMatrix(basis_s.labels, gamma, 1.0, meta)


def reconstruct_jsa(gamma: SqueezeMatrix, basis_s: BinBasis, basis_i: BinBasis,
                    jsa: JsaGrid) -> np.ndarray:
    """``sum gamma_nm G_n(ws) G_m(wi)`` on the grid of ``jsa``."""
    gs = basis_s.functions(jsa.omega_s)
    gi = basis_i.functions(jsa.omega_i)
    return gs.T @ gamma.values @ gi


def analytic_squeeze_matrix(pump_coefficients: Mapping[int, float],
                            pmf_coefficients: Mapping[int, float],
                            scale: float = 1.0, labels: Sequence[int] | None = None,
                            renormalize: bool = True) -> SqueezeMatrix:
    """Closed-form bin matrix from pump peaks ``a_p`` and frequency-space PMF peaks ``b_q``.

    Each product ``a_p b_q / sqrt(2)`` lands on (signal ``q - p``, idler ``-(p + q)``),
    so populated labels always share parity.
    """
    reach = max(abs(p) for p in pump_coefficients) + max(abs(q) for q in pmf_coefficients)
    labels = tuple(range(-reach, reach + 1)) if labels is None else tuple(labels)
    pos = {l: k for k, l in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)), dtype=complex)
    for p, a in pump_coefficients.items():
        for q, b in pmf_coefficients.items():
            s, i = q - p, -(p + q)
            if s in pos and i in pos:
                mat[pos[s], pos[i]] += a * b / math.sqrt(2)
    mat = 0.5 * (mat + mat.T)
    out = SqueezeMatrix(labels, mat, scale, {"source": "analytic"})
    return out.renormalized() if renormalize else out


def filter_squeeze_matrix(gamma: SqueezeMatrix, transmission_s: Mapping[int, float],
                          transmission_i: Mapping[int, float] | None = None,
                          renormalize: bool = True) -> SqueezeMatrix:
    """Weight entry (n, m) by the arm transmissions evaluated at the bin centres."""
    transmission_i = transmission_s if transmission_i is None else transmission_i
    ts = np.array([transmission_s[l] for l in gamma.labels])
    ti = np.array([transmission_i[l] for l in gamma.labels])
    w = 0.5 * (ts[:, None] * ti[None, :] + ti[:, None] * ts[None, :])
    meta = dict(gamma.metadata)
    meta["filtered"] = True
    out = SqueezeMatrix(gamma.labels, gamma.values * w, gamma.scale, meta)
    return out.renormalized() if renormalize else out


@dataclass(frozen=True)
class ModeCount:
    distinct_pairs: int
    single_mode_terms: int
    two_mode_terms: int


def _active(gamma: SqueezeMatrix, threshold):
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1), relative to max |gamma|")
    mag = np.abs(gamma.values)
    top = mag.max()
    return mag > threshold * top if top > 0 else np.zeros(mag.shape, dtype=bool)


def count_modes(gamma: SqueezeMatrix, threshold: float = 1e-3) -> ModeCount:
    act = np.triu(_active(gamma, threshold))
    single = int(np.count_nonzero(np.diag(act)))
    total = int(np.count_nonzero(act))
    return ModeCount(total, single, total - single)


def block_decompose(gamma: SqueezeMatrix, threshold: float = 1e-3):
    """Connected components of the above-threshold coupling graph.

    Labels with no above-threshold entry at all are left out.
    """
    act = _active(gamma, threshold)
    used = np.nonzero(act.any(axis=1))[0]
    if used.size == 0:
        return []
    sub = act[np.ix_(used, used)]
    n, comp = connected_components(csr_matrix(sub.astype(np.int8)), directed=False)
    blocks = [tuple(sorted(gamma.labels[used[k]] for k in np.nonzero(comp == c)[0]))
              for c in range(n)]
    return sorted(blocks, key=lambda b: (len(b), b))


def singular_spectrum(jsa: JsaGrid, return_vectors: bool = False):
    """Schmidt coefficients of the discretised JSA, descending, ``sum s^2 = 1``."""
    if jsa.norm != "unit":
        raise ValueError("singular spectrum needs a unit-normalised JSA")
    mat = jsa.values * math.sqrt(jsa.cell_area)
    if return_vectors:
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        return s, u, vh
    return np.linalg.svd(mat, compute_uv=False)


def schmidt_number(singular_values) -> float:
    lam = np.asarray(singular_values) ** 2
    lam = lam / lam.sum()
    return float(1.0 / np.sum(lam**2))


def write_squeeze_csv(path, gamma: SqueezeMatrix, provenance=None):
    path = Path(path)
    lines = ["n,m,re_gamma,im_gamma"]
    for a, n in enumerate(gamma.labels):
        for b, m in enumerate(gamma.labels):
            v = gamma.values[a, b]
            lines.append(f"{n},{m},{float(v.real)!r},{float(v.imag)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {
        "labels": list(gamma.labels),
        "scale": gamma.scale,
        "residual": gamma.metadata.get("residual"),
        "metadata": gamma.metadata,
        "provenance": provenance or {},
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")


def read_squeeze_csv(path) -> SqueezeMatrix:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    labels = meta.get("labels") or sorted({int(v) for v in data[:, 0]} | {int(v) for v in data[:, 1]})
    pos = {l: k for k, l in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)), dtype=complex)
    filled = np.zeros(mat.shape, dtype=bool)
    for n, m, re, im in data:
        a, b = pos[int(n)], pos[int(m)]
        mat[a, b] = re + 1j * im
        filled[a, b] = True
    # entries given on one side only are mirrored
    missing = ~filled & filled.T
    mat[missing] = mat.T[missing]
    return SqueezeMatrix(tuple(labels), mat, float(meta.get("scale", 1.0)),
                         dict(meta.get("metadata", {})))
