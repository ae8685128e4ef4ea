"""Gaussian covariance states built from squeezing matrices.

Conventions: quadratures ``x = (a + a^dag)/sqrt(2)``, ``p = (a - a^dag)/(i sqrt(2))``,
vacuum variance 1/2, covariance ordered ``(x1, p1, x2, p2, ...)``. A squeezing
matrix ``beta`` generates ``exp(1/2 sum beta_jk a_j^dag a_k^dag - h.c.)``, whose
Heisenberg action is ``a -> A a + B a^dag`` with ``[[A, B], [B*, A*]] =
expm([[0, beta], [beta*, 0]])``. A positive real single-mode ``beta = r`` gives
``Var(p) = exp(-2r)/2``; a two-mode ``beta_01 = r`` squeezes ``(x0 - x1)/sqrt 2`` and
``(p0 + p1)/sqrt 2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.linalg import sqrtm

from .modes import InvalidMatrixError, SqueezeMatrix

__all__ = [
    "ModeLabel",
    "CovarianceState",
    "LinearOpticalElement",
    "RegistryError",
    "takagi",
    "heisenberg_blocks",
    "symplectic_from_squeeze",
    "passive_symplectic",
    "symplectic_form",
    "vacuum",
    "covariance_from_squeeze",
    "apply_element",
    "eliminate_polarization",
    "quadrature_variance",
    "quadrature_direction",
    "symplectic_eigenvalues",
    "thss_state",
    "thss_scan",
    "write_thss_csv",
    "write_covariance",
    "PBS",
    "HWP",
    "BS",
    "PhaseShift",
]


class RegistryError(KeyError):
    """A requested mode tag is not present in the state's registry."""


class ModeLabel(NamedTuple):
    bin: int
    path: int = 1
    pol: str = "H"

    def __str__(self):
        return f"{self.bin}:{self.path}{self.pol}"


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def _fix_column_signs(u):
    # only a sign flip per column leaves U diag(r) U^T unchanged
    u = u.copy()
    for k in range(u.shape[1]):
        col = u[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if nz.size == 0:
            continue
        v = col[nz[0]]
        s = np.sign(v.real) if abs(v.real) > 1e-12 * abs(v) else np.sign(v.imag)
        if s < 0:
            u[:, k] = -col
    return u


def takagi(mat, tol=1e-12):
    """Factor a complex symmetric matrix as ``U diag(r) U^T``, ``r`` descending."""
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise InvalidMatrixError("Takagi factorization needs a square matrix")
    top = np.abs(mat).max() if mat.size else 0.0
    if top == 0:
        return np.zeros(n), np.eye(n, dtype=complex)
    if np.abs(mat - mat.T).max() > 1e-9 * top:
        raise InvalidMatrixError("Takagi factorization needs a symmetric matrix")
    if np.abs(mat.imag).max() <= tol * top:
        vals, vecs = np.linalg.eigh(mat.real)
        order = np.argsort(-np.abs(vals), kind="stable")
        vals, vecs = vals[order], vecs[:, order]
        phases = np.where(vals >= 0, 1.0, 1j)
        u = vecs * phases
        r = np.abs(vals)
    else:
        left, r, vh = np.linalg.svd(mat)
        u = left @ sqrtm((vh @ np.conj(left)).T)
    return r, _fix_column_signs(u)


def symplectic_form(n_modes):
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _xxpp_to_xpxp(n):
    perm = np.empty(2 * n, dtype=int)
    perm[0::2] = np.arange(n)
    perm[1::2] = np.arange(n) + n
    return perm


def _from_ab(a, b):
    """Real xpxp symplectic of ``a -> A a + B a^dag``."""
    n = a.shape[0]
    s = np.block([
        [np.real(a + b), -np.imag(a - b)],
        [np.imag(a + b), np.real(a - b)],
    ])
    perm = _xxpp_to_xpxp(n)
    return s[np.ix_(perm, perm)]


def heisenberg_blocks(beta):
    """``(A, B)`` of the Bogoliubov map generated by squeezing matrix ``beta``."""
    r, u = takagi(beta)
    a = (u * np.cosh(r)) @ u.conj().T
    b = (u * np.sinh(r)) @ u.T
    return a, b


def symplectic_from_squeeze(beta):
    a, b = heisenberg_blocks(beta)
    return _from_ab(a, b)


def passive_symplectic(m):
    """Symplectic of the mode-space unitary ``a -> M a``."""
    m = np.asarray(m, dtype=complex)
    return _from_ab(m, np.zeros_like(m))


def symplectic_eigenvalues(cov):
    n = cov.shape[0] // 2
    ev = np.linalg.eigvals(1j * symplectic_form(n) @ cov)
    return np.sort(np.abs(ev))[::2]


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass
class CovarianceState:
    labels: tuple
    cov: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = tuple(ModeLabel(*l) for l in self.labels)
        self.cov = np.asarray(self.cov, dtype=float)
        n = len(self.labels)
        if self.cov.shape != (2 * n, 2 * n):
            raise ValueError("covariance shape does not match the registry")
        if len(set(self.labels)) != n:
            raise RegistryError("duplicate mode labels in registry")

    @property
    def n_modes(self):
        return len(self.labels)

    def index(self, label):
        label = ModeLabel(*label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise RegistryError(f"mode {label} not in registry") from None

    def purity_determinant(self):
        """``det(2V)``: one for pure states."""
        return float(np.linalg.det(2 * self.cov))

    def uncertainty_margin(self):
        """Smallest eigenvalue of ``V + i Omega / 2``; non-negative when physical."""
        herm = self.cov + 0.5j * symplectic_form(self.n_modes)
        return float(np.linalg.eigvalsh(herm).min())

    def reduced(self, labels: Iterable):
        labels = [ModeLabel(*l) for l in labels]
        idx = np.array([[2 * self.index(l), 2 * self.index(l) + 1] for l in labels]).ravel()
        return CovarianceState(tuple(labels), self.cov[np.ix_(idx, idx)], dict(self.metadata))

    def with_modes(self, labels: Iterable):
        """Append vacuum modes."""
        new = [ModeLabel(*l) for l in labels]
        n = 2 * len(new)
        cov = np.block([
            [self.cov, np.zeros((self.cov.shape[0], n))],
            [np.zeros((n, self.cov.shape[0])), 0.5 * np.eye(n)],
        ])
        return CovarianceState(self.labels + tuple(new), cov, dict(self.metadata))

    def transformed(self, symp):
        return CovarianceState(self.labels, symp @ self.cov @ symp.T, dict(self.metadata))


def vacuum(labels):
    labels = tuple(ModeLabel(*l) for l in labels)
    return CovarianceState(labels, 0.5 * np.eye(2 * len(labels)))


def covariance_from_squeeze(gamma: SqueezeMatrix, pairing: str = "single") -> CovarianceState:
    """Pure multimode squeezed vacuum generated by ``gamma.gamma``.

    ``pairing="cross"`` couples every horizontally polarised bin to every vertical one,
    ``sum gamma_nm a_nH^dag a_mV^dag``, on a registry of H modes followed by V modes.
    """
    g = gamma.gamma
    if pairing == "single":
        labels = tuple(ModeLabel(b, 1, "H") for b in gamma.labels)
        beta = g
    elif pairing == "cross":
        labels = tuple(ModeLabel(b, 1, "H") for b in gamma.labels) + tuple(
            ModeLabel(b, 1, "V") for b in gamma.labels)
        z = np.zeros_like(g)
        beta = np.block([[z, g], [g.T, z]])
    else:
        raise ValueError("pairing must be 'single' or 'cross'")
    s = symplectic_from_squeeze(beta)
    return CovarianceState(labels, 0.5 * s @ s.T, {"pairing": pairing})


# ---------------------------------------------------------------------------
# Passive elements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearOpticalElement:
    """Passive element acting on every bin.

    ``PBS`` routes vertical polarisation between paths 1 and 2, ``HWP`` mixes the
    polarisations on ``path``, ``BS`` mixes paths 1 and 2 for each polarisation and
    ``PHASE`` multiplies modes on ``path`` (all paths when ``path`` is None).
    """

    kind: str
    theta: float = 0.0
    path: int | None = None
    paths: tuple = (1, 2)

    def __post_init__(self):
        if self.kind not in ("PBS", "HWP", "BS", "PHASE"):
            raise ValueError(f"unknown element kind {self.kind!r}")
        if self.kind == "HWP" and self.path is None:
            raise ValueError("HWP needs a path")

    def mode_matrix(self, labels: Sequence[ModeLabel]):
        labels = [ModeLabel(*l) for l in labels]
        pos = {l: k for k, l in enumerate(labels)}
        n = len(labels)
        m = np.zeros((n, n), dtype=complex)
        p1, p2 = self.paths

        def need(label):
            if label not in pos:
                raise RegistryError(f"{self.kind} needs mode {label} in registry")
            return pos[label]

        done = set()
        for lab in labels:
            k = pos[lab]
            if k in done:
                continue
            if self.kind == "PBS":
                if lab.pol == "V" and lab.path in (p1, p2):
                    other = need(ModeLabel(lab.bin, p2 if lab.path == p1 else p1, "V"))
                    m[k, other] = m[other, k] = 1.0
                    done.update((k, other))
                else:
                    m[k, k] = 1.0
                    done.add(k)
            elif self.kind == "HWP":
                if lab.path != self.path:
                    m[k, k] = 1.0
                    done.add(k)
                    continue
                h = need(ModeLabel(lab.bin, lab.path, "H"))
                v = need(ModeLabel(lab.bin, lab.path, "V"))
                c, s = math.cos(2 * self.theta), math.sin(2 * self.theta)
                m[np.ix_([h, v], [h, v])] = 1j * np.array([[c, s], [s, -c]])
                done.update((h, v))
            elif self.kind == "BS":
                if lab.path not in (p1, p2):
                    m[k, k] = 1.0
                    done.add(k)
                    continue
                a = need(ModeLabel(lab.bin, p1, lab.pol))
                b = need(ModeLabel(lab.bin, p2, lab.pol))
                ph = np.exp(1j * self.theta)
                m[np.ix_([a, b], [a, b])] = np.array([[1, ph], [-np.conj(ph), 1]]) / math.sqrt(2)
                done.update((a, b))
            else:
                on = self.path is None or lab.path == self.path
                m[k, k] = np.exp(1j * self.theta) if on else 1.0
                done.add(k)
        return m

    def symplectic(self, labels):
        return passive_symplectic(self.mode_matrix(labels))


def PBS(paths=(1, 2)):
    return LinearOpticalElement("PBS", paths=tuple(paths))


def HWP(theta, path):
    return LinearOpticalElement("HWP", theta=theta, path=path)


def BS(theta=0.0, paths=(1, 2)):
    return LinearOpticalElement("BS", theta=theta, paths=tuple(paths))


def PhaseShift(theta, path=None):
    return LinearOpticalElement("PHASE", theta=theta, path=path)


def apply_element(state: CovarianceState, element: LinearOpticalElement) -> CovarianceState:
    return state.transformed(element.symplectic(state.labels))


def eliminate_polarization(state: CovarianceState, return_full: bool = False):
    """Split a cross-polarised state into two single-polarisation copies.

    Path-2 vacuum ports are added, then PBS, a 45 degree half-wave plate on path 2,
    a balanced beam splitter and a -pi/4 phase on both paths that removes the
    plate's i. The result keeps the horizontal modes of both paths: path 1 carries
    the state generated by ``+gamma/2`` per pair term and path 2 the one generated by
    ``-gamma/2``. The vertical modes are left in vacuum and dropped.
    """
    if state.metadata.get("pairing") != "cross":
        raise ValueError("eliminate_polarization needs a cross-polarised state")
    extra = [ModeLabel(l.bin, 2, l.pol) for l in state.labels]
    st = state.with_modes(extra)
    network = [PBS(), HWP(math.pi / 4, path=2), BS(0.0), PhaseShift(-math.pi / 4)]
    for element in network:
        st = apply_element(st, element)
    bins = [l.bin for l in state.labels if l.pol == "H"]
    keep = [ModeLabel(b, 1, "H") for b in bins] + [ModeLabel(b, 2, "H") for b in bins]
    out = st.reduced(keep)
    out.metadata = {"pairing": "single", "paths": [1, 2]}
    return (out, st) if return_full else out


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------


def quadrature_direction(state: CovarianceState, weights: dict):
    """Unit vector from ``{(label, 'x'|'p'): weight}``."""
    d = np.zeros(2 * state.n_modes)
    for (label, quad), w in weights.items():
        d[2 * state.index(label) + (0 if quad == "x" else 1)] += w
    return d


def quadrature_variance(state: CovarianceState, direction) -> float:
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("direction must be non-zero")
    if abs(norm - 1) > 1e-9:
        raise ValueError("direction must be normalised")
    return float(d @ state.cov @ d)


def thss_state(b11, b12, b22) -> CovarianceState:
    beta = np.array([[b11, b12], [b12, b22]], dtype=complex)
    return covariance_from_squeeze(SqueezeMatrix((1, 2), beta))


def thss_scan(b11_values, b12_values, b22_values):
    """Rows ``(b11, b12, b22, var_x1, var_xminus, var_pplus, ptse, var_p1)``.

    ``ptse`` is the smallest symplectic eigenvalue of the partial transpose; below
    1/2 the two modes are entangled.
    """
    sqrt2 = math.sqrt(2)
    rows = []
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    for b11 in b11_values:
        for b12 in b12_values:
            for b22 in b22_values:
                v = thss_state(b11, b12, b22).cov
                xm = np.array([1, 0, -1, 0]) / sqrt2
                pp = np.array([0, 1, 0, 1]) / sqrt2
                ptse = float(symplectic_eigenvalues(flip @ v @ flip).min())
                rows.append((float(b11), float(b12), float(b22), float(v[0, 0]),
                             float(xm @ v @ xm), float(pp @ v @ pp), ptse, float(v[1, 1])))
    return rows


THSS_COLUMNS = ("b11", "b12", "b22", "var_x1", "var_xminus", "var_pplus", "ptse", "var_p1")


def write_thss_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(THSS_COLUMNS)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


def write_covariance(path, state: CovarianceState):
    path = Path(path)
    np.savetxt(path, state.cov, delimiter=",", fmt="%.17g")
    registry = {
        "labels": [list(l) for l in state.labels],
        "ordering": "x1,p1,x2,p2,...",
        "vacuum_variance": 0.5,
        "metadata": state.metadata,
    }
    path.with_suffix(".json").write_text(json.dumps(registry, sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")
