"""Pump envelopes, frequency-space PMFs and joint spectral amplitudes.

The joint spectral amplitude is the product ``f(ws, wi) = alpha(ws + wi) phi(ws, wi)``
of a pump envelope and a phase-matching function pulled back from mismatch space
through a dispersion model. Grids are always renormalised numerically to unit
``sum |f|^2 dws dwi``.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .dispersion import BinGeometry, LinearExpansion
from .poling import SupportTruncationError

__all__ = [
    "PumpSpec",
    "JsaAxis",
    "JsaGrid",
    "FilterSpec",
    "PmfSampler",
    "Peak",
    "pump_envelope",
    "pulse_duration_scale",
    "pmf_frequency_space",
    "grid_axes",
    "assemble_jsa",
    "apply_filter",
    "find_peaks",
    "write_jsa",
    "read_jsa",
    "write_jsa_csv",
]

_MAGIC = b"QJSA"
_MIN_SEPARATION_SIGMA = 12.0


@dataclass(frozen=True)
class PumpSpec:
    """Gaussian superposition pump ``alpha(w) = sum_n a_n g(w - Om_p + n dw)``."""

    coefficients: Mapping[int, float]
    center: float
    delta_omega: float
    sigma: float
    normalize: bool = False
    min_separation_sigma: float = _MIN_SEPARATION_SIGMA

    def __post_init__(self):
        coeffs = {int(n): complex(v) for n, v in self.coefficients.items()}
        if all(v.imag == 0 for v in coeffs.values()):
            coeffs = {n: float(v.real) for n, v in coeffs.items()}
        total = sum(abs(v) ** 2 for v in coeffs.values())
        if total == 0:
            raise ValueError("pump coefficients are all zero")
        if abs(total - 1) > 1e-9:
            if not self.normalize:
                raise ValueError(f"pump coefficients must satisfy sum a_n^2 = 1 (got {total:.12g})")
            coeffs = {n: v / math.sqrt(total) for n, v in coeffs.items()}
        object.__setattr__(self, "coefficients", dict(sorted(coeffs.items())))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if len(coeffs) > 1 and self.delta_omega < self.min_separation_sigma * self.sigma:
            warnings.warn(
                f"pump peaks closer than {self.min_separation_sigma:g} sigma; "
                "frequency bins will overlap",
                stacklevel=2,
            )

    @classmethod
    def from_list(cls, values, center, delta_omega, sigma, normalize=False):
        values = list(values)
        if len(values) % 2 != 1:
            raise ValueError("need an odd number of coefficients (n = -N..N)")
        n = len(values) // 2
        return cls(dict(zip(range(-n, n + 1), values)), center, delta_omega, sigma, normalize)

    @property
    def n_max(self):
        return max(abs(n) for n in self.coefficients)

    def scaled_peak(self, index, factor):
        """Copy with ``a_index`` multiplied by ``factor`` and the set renormalised."""
        coeffs = dict(self.coefficients)
        coeffs[index] = coeffs[index] * factor
        return PumpSpec(coeffs, self.center, self.delta_omega, self.sigma, normalize=True,
                        min_separation_sigma=self.min_separation_sigma)


def pump_envelope(spec: PumpSpec, omega_p):
    omega_p = np.asarray(omega_p, dtype=float)
    amp = (4 * math.pi * spec.sigma**2) ** -0.25
    out = np.zeros(omega_p.shape, dtype=complex)
    det = omega_p - spec.center
    for n, a in spec.coefficients.items():
        out += a * amp * np.exp(-((det + n * spec.delta_omega) ** 2) / (8 * spec.sigma**2))
    return out


def pulse_duration_scale(sigma: float) -> float:
    """Reciprocal of the ordinary-frequency bandwidth ``sigma / 2 pi``, in seconds."""
    return 2 * math.pi / sigma


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JsaAxis:
    start: float
    step: float
    count: int

    @property
    def values(self):
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self):
        return self.start + self.step * (self.count - 1)

    def trapezoid_weights(self):
        w = np.full(self.count, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w

    def to_dict(self):
        return {"start": self.start, "step": self.step, "count": self.count}


def grid_axes(center_s, center_i, half_span, size):
    """Two equal-step axes covering ``center +/- half_span``."""
    if size < 2:
        raise ValueError("grid size must be at least 2")
    step = 2 * half_span / (size - 1)
    return (JsaAxis(center_s - half_span, step, size),
            JsaAxis(center_i - half_span, step, size))


@dataclass
class JsaGrid:
    axis_s: JsaAxis
    axis_i: JsaAxis
    values: np.ndarray
    norm: str = "raw"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.axis_s.count, self.axis_i.count):
            raise ValueError("values shape does not match axes (rows = signal)")
        if self.norm not in ("raw", "unit"):
            raise ValueError("norm flag must be 'raw' or 'unit'")

    @property
    def omega_s(self):
        return self.axis_s.values

    @property
    def omega_i(self):
        return self.axis_i.values

    @property
    def cell_area(self):
        return self.axis_s.step * self.axis_i.step

    def norm_squared(self):
        return float(np.sum(np.abs(self.values) ** 2) * self.cell_area)

    def normalized(self):
        raw = math.sqrt(self.norm_squared())
        meta = dict(self.metadata)
        meta.setdefault("raw_norm", raw)
        return JsaGrid(self.axis_s, self.axis_i, self.values / raw, "unit", meta)


class PmfSampler:
    """Evaluates a mismatch-space PMF on frequency grids through a dispersion model."""

    def __init__(self, pmf: Callable[[np.ndarray], np.ndarray], model):
        self.pmf = pmf
        self.model = model

    def __call__(self, omega_s, omega_i):
        return np.asarray(self.pmf(self.model.phase_mismatch(omega_s, omega_i)), dtype=complex)

    def on_grid(self, axis_s: JsaAxis, axis_i: JsaAxis):
        lin = isinstance(self.model, LinearExpansion) and self.model.symmetric_gvm
        if lin and math.isclose(axis_s.step, axis_i.step, rel_tol=1e-12):
            # mismatch depends on ws - wi only: one value per (i - j)
            n_s, n_i = axis_s.count, axis_i.count
            k = np.arange(-(n_i - 1), n_s)
            diff = (axis_s.start - axis_i.start) + axis_s.step * k
            ref = self.model.omega_s - self.model.omega_i
            half = 0.5 * (self.model.ks_prime - self.model.ki_prime)
            dk = self.model.dk0 - half * (diff - ref)
            line = np.asarray(self.pmf(dk), dtype=complex)
            idx = np.arange(n_s)[:, None] - np.arange(n_i)[None, :] + (n_i - 1)
            return line[idx]
        ws, wi = np.meshgrid(axis_s.values, axis_i.values, indexing="ij")
        return self(ws, wi)


def pmf_frequency_space(phi, geometry: BinGeometry | None, model, dk=None) -> PmfSampler:
    """Wrap a mismatch-space PMF as a frequency-space sampler.

    ``phi`` is either a callable of ``dk`` or samples on the grid ``dk`` (linearly
    interpolated and zero outside). When ``geometry`` is given its width must agree
    with the model's group-velocity mismatch.
    """
    if geometry is not None:
        _, ks, ki = model.slowness()
        implied = 2 * geometry.sigma_k / abs(ks - ki)
        if not math.isclose(implied, geometry.sigma, rel_tol=1e-9):
            raise ValueError("bin geometry is inconsistent with the dispersion model")
    if callable(phi):
        return PmfSampler(phi, model)
    if dk is None:
        raise ValueError("sampled PMF needs its dk grid")
    dk = np.asarray(dk, dtype=float)
    phi = np.asarray(phi, dtype=complex)

    def interp(x):
        re = np.interp(x, dk, phi.real, left=0.0, right=0.0)
        im = np.interp(x, dk, phi.imag, left=0.0, right=0.0)
        return re + 1j * im

    return PmfSampler(interp, model)


def _edge_ratio(values):
    peak = np.max(np.abs(values))
    edges = max(np.abs(values[0]).max(), np.abs(values[-1]).max(),
                np.abs(values[:, 0]).max(), np.abs(values[:, -1]).max())
    return edges / peak if peak > 0 else math.inf


def assemble_jsa(pump: PumpSpec, sampler: PmfSampler, axis_s: JsaAxis, axis_i: JsaAxis,
                 normalize=True, support_tol=1e-6, threads: int = 1, provenance=None) -> JsaGrid:
    phi = sampler.on_grid(axis_s, axis_i)
    ws = axis_s.values
    wi = axis_i.values

    def rows(sl):
        return pump_envelope(pump, ws[sl, None] + wi[None, :]) * phi[sl]

    chunks = [slice(i, min(i + 128, ws.size)) for i in range(0, ws.size, 128)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.concatenate(list(pool.map(rows, chunks)))
    else:
        values = np.concatenate([rows(sl) for sl in chunks])
    ratio = _edge_ratio(values)
    if support_tol is not None and ratio >= support_tol:
        raise SupportTruncationError(
            f"JSA not negligible at grid boundary: |f|/max = {ratio:.3e} (limit {support_tol:g})"
        )
    meta = {"edge_ratio": float(ratio)}
    if provenance:
        meta["provenance"] = provenance
    grid = JsaGrid(axis_s, axis_i, values, "raw", meta)
    return grid.normalized() if normalize else grid


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterSpec:
    """Notch ``1 - exp(-(w - centre)^2 / (4 sigma_f^2))`` on both arms."""

    center_s: float
    center_i: float
    sigma_f: float

    def __post_init__(self):
        if self.sigma_f < 0:
            raise ValueError("sigma_f must be non-negative")

    def transmission(self, omega, center):
        omega = np.asarray(omega, dtype=float)
        if self.sigma_f == 0:
            return np.ones(omega.shape)
        return -np.expm1(-((omega - center) ** 2) / (4 * self.sigma_f**2))

    def transmission_s(self, omega):
        return self.transmission(omega, self.center_s)

    def transmission_i(self, omega):
        return self.transmission(omega, self.center_i)


def apply_filter(jsa: JsaGrid, filt: FilterSpec) -> JsaGrid:
    ts = filt.transmission_s(jsa.omega_s)
    ti = filt.transmission_i(jsa.omega_i)
    filtered = jsa.values * ts[:, None] * ti[None, :]
    before = jsa.norm_squared()
    after = float(np.sum(np.abs(filtered) ** 2) * jsa.cell_area)
    meta = dict(jsa.metadata)
    meta["transmitted_fraction"] = after / before
    meta["filter_sigma_f"] = filt.sigma_f
    out = JsaGrid(jsa.axis_s, jsa.axis_i, filtered, "raw", meta)
    if jsa.norm == "unit":
        out = JsaGrid(jsa.axis_s, jsa.axis_i, filtered / math.sqrt(after), "unit", meta)
    return out


# ---------------------------------------------------------------------------
# Peak finding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Peak:
    omega_s: float
    omega_i: float
    height: float
    row: int
    col: int


def _refine(logs, idx, n):
    # parabolic fit through log|f|, exact for Gaussian lobes
    if idx <= 0 or idx >= n - 1:
        return 0.0
    a, b, c = logs
    denom = a - 2 * b + c
    return 0.5 * (a - c) / denom if denom < 0 else 0.0


def find_peaks(jsa: JsaGrid, rel_threshold: float = 0.25):
    """Local maxima of ``|f|`` above ``rel_threshold * max|f|``, ordered by (ws, wi)."""
    mag = np.abs(jsa.values)
    top = mag.max()
    if top == 0:
        return []
    local = (mag == ndimage.maximum_filter(mag, size=3, mode="constant", cval=0.0))
    mask = local & (mag >= rel_threshold * top)
    labels, count = ndimage.label(mask, structure=np.ones((3, 3)))
    peaks = []
    with np.errstate(divide="ignore"):
        logmag = np.log(mag)
    ns, ni = mag.shape
    for lab in range(1, count + 1):
        rr, cc = np.nonzero(labels == lab)
        k = np.argmax(mag[rr, cc])
        r, c = int(rr[k]), int(cc[k])
        dr = _refine(logmag[r - 1:r + 2, c], r, ns) if 0 < r < ns - 1 else 0.0
        dc = _refine(logmag[r, c - 1:c + 2], c, ni) if 0 < c < ni - 1 else 0.0
        peaks.append(Peak(
            omega_s=float(jsa.axis_s.start + (r + dr) * jsa.axis_s.step),
            omega_i=float(jsa.axis_i.start + (c + dc) * jsa.axis_i.step),
            height=float(mag[r, c]),
            row=r,
            col=c,
        ))
    peaks.sort(key=lambda p: (p.row, p.col))
    return peaks


# ---------------------------------------------------------------------------
# Container
# ---------------------------------------------------------------------------


def write_jsa(path, jsa: JsaGrid):
    header = {
        "axis_s": jsa.axis_s.to_dict(),
        "axis_i": jsa.axis_i.to_dict(),
        "norm": jsa.norm,
        "units": "rad/s",
        "layout": "row-major, rows = signal, little-endian float64 (re, im)",
        "metadata": jsa.metadata,
    }
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    data = np.ascontiguousarray(jsa.values, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        fh.write(data)


def read_jsa(path) -> JsaGrid:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a JSA container")
    (n,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + n].decode("utf-8"))
    ax_s = JsaAxis(**header["axis_s"])
    ax_i = JsaAxis(**header["axis_i"])
    values = np.frombuffer(raw[8 + n:], dtype="<c16")
    if values.size != ax_s.count * ax_i.count:
        raise ValueError(f"{path}: payload size does not match header")
    values = values.reshape(ax_s.count, ax_i.count).astype(complex)
    return JsaGrid(ax_s, ax_i, values, header["norm"], header.get("metadata", {}))


def write_jsa_csv(path, jsa: JsaGrid, max_points=256):
    if jsa.axis_s.count > max_points or jsa.axis_i.count > max_points:
        raise ValueError(f"CSV export limited to grids of at most {max_points}^2")
    ws, wi = np.meshgrid(jsa.omega_s, jsa.omega_i, indexing="ij")
    table = np.column_stack([ws.ravel(), wi.ravel(), jsa.values.real.ravel(),
                             jsa.values.imag.ravel()])
    np.savetxt(path, table, delimiter=",", fmt="%.17g",
               header="omega_s_radps,omega_i_radps,re_f,im_f", comments="")
