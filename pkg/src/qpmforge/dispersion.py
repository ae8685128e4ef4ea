"""Refractive-index and phase-mismatch models.

Two dispersion models are provided. :class:`LinearExpansion` carries the
first-order Taylor expansion of the phase mismatch about the centre
frequencies; :class:`SellmeierTable` evaluates the full
``k_p(w_s + w_i) - k_s(w_s) - k_i(w_i)`` from a tabulated Sellmeier set.

All frequencies are angular (rad/s), wavenumbers in rad/m and group
slownesses ``k' = dk/dw`` in s/m.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import bisect

__all__ = [
    "DispersionDomainError",
    "SellmeierAxis",
    "SellmeierSet",
    "LinearExpansion",
    "SellmeierTable",
    "BinGeometry",
    "phase_mismatch",
    "coherence_length",
    "find_symmetric_gvm_point",
    "symmetric_gvm_table",
    "bin_geometry_from",
    "load_sellmeier_set",
    "available_sellmeier_sets",
    "wavelength_to_omega",
    "omega_to_wavelength",
]

SELLMEIER_DIR_ENV = "QPMFORGE_SELLMEIER_DIR"


class DispersionDomainError(ValueError):
    """A frequency (or wavelength) lies outside a model's validity window."""


def wavelength_to_omega(wavelength):
    return 2 * np.pi * SPEED_OF_LIGHT / wavelength


def omega_to_wavelength(omega):
    return 2 * np.pi * SPEED_OF_LIGHT / omega


# ---------------------------------------------------------------------------
# Sellmeier sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SellmeierAxis:
    """One principal-axis index formula, wavelength in micrometres.

    ``n^2 = A + sum_j P_j / (lam^2 - C_j) + sum_j Q_j lam^2 / (lam^2 - R_j) - D lam^2``

    An optional thermo-optic correction ``dn = (a(lam) dT + b(lam) dT^2) 1e-6``
    uses cubic polynomials in ``lam`` for ``a`` and ``b``, ``dT = T - 25 C``.
    """

    A: float
    poles: tuple[tuple[float, float], ...] = ()
    resonances: tuple[tuple[float, float], ...] = ()
    D: float = 0.0
    thermo_a: tuple[float, ...] = ()
    thermo_b: tuple[float, ...] = ()

    def index(self, lam_um, temperature_c=25.0):
        lam2 = lam_um * lam_um
        n2 = self.A - self.D * lam2
        for p, cc in self.poles:
            n2 = n2 + p / (lam2 - cc)
        for q, r in self.resonances:
            n2 = n2 + q * lam2 / (lam2 - r)
        n = np.sqrt(n2)
        dt = temperature_c - 25.0
        if dt and (self.thermo_a or self.thermo_b):
            a = sum(coef * lam_um**k for k, coef in enumerate(self.thermo_a))
            b = sum(coef * lam_um**k for k, coef in enumerate(self.thermo_b))
            n = n + (a * dt + b * dt * dt) * 1e-6
        return n


@dataclass(frozen=True)
class SellmeierSet:
    name: str
    provenance: str
    axes: Mapping[str, SellmeierAxis]
    window_um: tuple[float, float]

    def index(self, axis, lam_um, temperature_c=25.0):
        try:
            formula = self.axes[axis]
        except KeyError:
            raise KeyError(f"Sellmeier set {self.name!r} has no axis {axis!r}") from None
        return formula.index(lam_um, temperature_c)


_BUILTIN_SETS = {
    "kato2002": SellmeierSet(
        name="kato2002",
        provenance=(
            "K. Kato and E. Takaoka, Appl. Opt. 41, 5040 (2002), "
            "doi:10.1364/AO.41.005040; KTP x/y/z at 20 C"
        ),
        axes={
            "x": SellmeierAxis(3.29100, poles=((0.04140, 0.03978), (9.35522, 31.45571))),
            "y": SellmeierAxis(3.45018, poles=((0.04341, 0.04597), (16.98825, 39.43799))),
            "z": SellmeierAxis(4.59423, poles=((0.06206, 0.04763), (110.80672, 86.12171))),
        },
        window_um=(0.43, 3.54),
    ),
    "fradkin_konig": SellmeierSet(
        name="fradkin_konig",
        provenance=(
            "KTP y: F. Konig and F. N. C. Wong, Appl. Phys. Lett. 84, 1644 (2004), "
            "doi:10.1063/1.1668320; KTP z: K. Fradkin et al., Appl. Phys. Lett. 74, "
            "914 (1999), doi:10.1063/1.123408; thermo-optic terms from S. Emanueli "
            "and A. Arie, Appl. Opt. 42, 6661 (2003), doi:10.1364/AO.42.006661"
        ),
        axes={
            "y": SellmeierAxis(
                2.09930,
                resonances=((0.922683, 0.0467695),),
                D=0.0138408,
                thermo_a=(6.2897, 6.3061, -6.0629, 2.6486),
                thermo_b=(-0.14445, 2.2244, -3.5770, 1.3470),
            ),
            "z": SellmeierAxis(
                2.12725,
                resonances=((1.18431, 5.14852e-2), (0.6603, 100.00507)),
                D=9.68956e-3,
                thermo_a=(9.9587, 9.9228, -8.9603, 4.1010),
                thermo_b=(-1.1882, 10.459, -9.8136, 3.1481),
            ),
        },
        window_um=(0.35, 4.0),
    ),
}


def _set_from_json(path: Path) -> SellmeierSet:
    raw = json.loads(path.read_text(encoding="utf-8"))
    axes = {}
    for name, spec in raw["axes"].items():
        axes[name] = SellmeierAxis(
            A=float(spec["A"]),
            poles=tuple(tuple(map(float, p)) for p in spec.get("poles", [])),
            resonances=tuple(tuple(map(float, r)) for r in spec.get("resonances", [])),
            D=float(spec.get("D", 0.0)),
            thermo_a=tuple(map(float, spec.get("thermo_a", []))),
            thermo_b=tuple(map(float, spec.get("thermo_b", []))),
        )
    return SellmeierSet(
        name=raw.get("name", path.stem),
        provenance=raw.get("provenance", f"external file {path.name}"),
        axes=axes,
        window_um=tuple(raw.get("window_um", (0.0, math.inf))),
    )


def available_sellmeier_sets() -> list[str]:
    names = set(_BUILTIN_SETS)
    ext = os.environ.get(SELLMEIER_DIR_ENV)
    if ext and Path(ext).is_dir():
        names.update(p.stem for p in Path(ext).glob("*.json"))
    return sorted(names)


def load_sellmeier_set(name: str) -> SellmeierSet:
    """Look up a coefficient set, external directory first, then built-ins."""
    ext = os.environ.get(SELLMEIER_DIR_ENV)
    if ext:
        candidate = Path(ext) / f"{name}.json"
        if candidate.is_file():
            return _set_from_json(candidate)
    try:
        return _BUILTIN_SETS[name]
    except KeyError:
        raise KeyError(
            f"unknown Sellmeier set {name!r}; available: {available_sellmeier_sets()}"
        ) from None


# ---------------------------------------------------------------------------
# Dispersion models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearExpansion:
    """First-order expansion of the phase mismatch about ``(omega_s, omega_i)``.

    With ``symmetric_gvm`` set, ``kp_prime`` must equal the mean of the signal
    and idler slownesses; :meth:`symmetric` builds such a model.
    """

    dk0: float
    kp_prime: float
    ks_prime: float
    ki_prime: float
    omega_s: float
    omega_i: float
    symmetric_gvm: bool = False
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        if self.symmetric_gvm:
            mean = 0.5 * (self.ks_prime + self.ki_prime)
            if abs(self.kp_prime - mean) > 1e-12 * abs(mean):
                raise ValueError(
                    "symmetric group-velocity matching requires kp' = (ks' + ki')/2; "
                    f"got kp'={self.kp_prime!r}, mean={mean!r}"
                )

    @classmethod
    def symmetric(cls, dk0, ks_prime, ki_prime, omega_s, omega_i):
        return cls(
            dk0=dk0,
            kp_prime=0.5 * (ks_prime + ki_prime),
            ks_prime=ks_prime,
            ki_prime=ki_prime,
            omega_s=omega_s,
            omega_i=omega_i,
            symmetric_gvm=True,
        )

    @property
    def omega_p(self):
        return self.omega_s + self.omega_i

    def slowness(self):
        return self.kp_prime, self.ks_prime, self.ki_prime

    def linearized(self):
        return self

    def phase_mismatch(self, omega_s, omega_i):
        omega_s = np.asarray(omega_s, dtype=float)
        omega_i = np.asarray(omega_i, dtype=float)
        if np.any(omega_s <= 0):
            raise DispersionDomainError("signal frequency must be positive")
        if np.any(omega_i <= 0):
            raise DispersionDomainError("idler frequency must be positive")
        ds = omega_s - self.omega_s
        di = omega_i - self.omega_i
        return (
            self.dk0
            + self.kp_prime * (ds + di)
            - self.ks_prime * ds
            - self.ki_prime * di
        )


@dataclass(frozen=True)
class SellmeierTable:
    """Full phase mismatch from one Sellmeier set and an axis assignment."""

    sellmeier: SellmeierSet
    pump_axis: str
    signal_axis: str
    idler_axis: str
    omega_s: float
    omega_i: float
    temperature_c: float = 25.0
    kind: str = field(default="sellmeier", init=False)

    @property
    def omega_p(self):
        return self.omega_s + self.omega_i

    def _check(self, omega, label):
        lam = omega_to_wavelength(np.real(np.asarray(omega))) * 1e6
        lo, hi = self.sellmeier.window_um
        if np.any(lam < lo) or np.any(lam > hi):
            raise DispersionDomainError(
                f"{label} wavelength outside Sellmeier window {lo}-{hi} um "
                f"(set {self.sellmeier.name!r})"
            )

    def wavenumber(self, which, omega, check=True):
        axis = {"p": self.pump_axis, "s": self.signal_axis, "i": self.idler_axis}[which]
        if check:
            self._check(omega, {"p": "pump", "s": "signal", "i": "idler"}[which])
        lam_um = 2 * np.pi * SPEED_OF_LIGHT / omega * 1e6
        return omega * self.sellmeier.index(axis, lam_um, self.temperature_c) / SPEED_OF_LIGHT

    def group_slowness(self, which, omega):
        # complex-step derivative: exact to rounding for analytic index formulas
        h = 1e-20 * omega
        self._check(omega, {"p": "pump", "s": "signal", "i": "idler"}[which])
        return np.imag(self.wavenumber(which, omega + 1j * h, check=False)) / h

    @property
    def dk0(self):
        return float(
            self.wavenumber("p", self.omega_p)
            - self.wavenumber("s", self.omega_s)
            - self.wavenumber("i", self.omega_i)
        )

    def slowness(self):
        return (
            float(self.group_slowness("p", self.omega_p)),
            float(self.group_slowness("s", self.omega_s)),
            float(self.group_slowness("i", self.omega_i)),
        )

    def linearized(self) -> LinearExpansion:
        kp, ks, ki = self.slowness()
        return LinearExpansion(self.dk0, kp, ks, ki, self.omega_s, self.omega_i)

    def phase_mismatch(self, omega_s, omega_i):
        omega_s = np.asarray(omega_s, dtype=float)
        omega_i = np.asarray(omega_i, dtype=float)
        return (
            self.wavenumber("p", omega_s + omega_i)
            - self.wavenumber("s", omega_s)
            - self.wavenumber("i", omega_i)
        )

    def gvm_residual(self, omega):
        """Relative residual of ``kp' - (ks' + ki')/2`` at degeneracy ``omega``."""
        kp = self.group_slowness("p", 2 * omega)
        ks = self.group_slowness("s", omega)
        ki = self.group_slowness("i", omega)
        return (kp - 0.5 * (ks + ki)) / kp


def phase_mismatch(model, omega_s, omega_i):
    return model.phase_mismatch(omega_s, omega_i)


def coherence_length(model) -> float:
    """Domain width ``pi/|dk0|`` that flips the nonlinearity every pi of phase slip."""
    dk0 = model.dk0 if hasattr(model, "dk0") else float(model)
    if dk0 == 0:
        raise ValueError("intrinsically phase-matched; poling not required")
    return math.pi / abs(dk0)


def find_symmetric_gvm_point(model, window: Sequence[float] = (1.2e-6, 2.4e-6), maxiter=60):
    """Degenerate centre frequencies ``(omega_s, omega_i, omega_p)`` at which
    ``kp' = (ks' + ki')/2``.

    ``window`` is a (min, max) degenerate signal wavelength range in metres.
    A :class:`LinearExpansion` already flagged symmetric is returned as is.
    """
    if isinstance(model, LinearExpansion):
        if not model.symmetric_gvm:
            raise ValueError("linear model is not flagged as symmetric-GVM")
        return model.omega_s, model.omega_i, model.omega_p

    lo, hi = sorted(window)

    def residual(lam):
        return model.gvm_residual(wavelength_to_omega(lam))

    r_lo, r_hi = residual(lo), residual(hi)
    if np.sign(r_lo) == np.sign(r_hi):
        raise ValueError("no symmetric-GVM point found in window")
    lam = bisect(residual, lo, hi, xtol=1e-22, rtol=4 * np.finfo(float).eps, maxiter=maxiter,
                 disp=False)
    omega = wavelength_to_omega(lam)
    if abs(model.gvm_residual(omega)) >= 1e-9:
        raise ValueError("bisection did not reach the 1e-9 GVM residual")
    return omega, omega, 2 * omega


def symmetric_gvm_table(model: SellmeierTable, window=(1.2e-6, 2.4e-6)) -> SellmeierTable:
    """Copy of ``model`` re-centred on its symmetric-GVM degenerate point."""
    ws, wi, _ = find_symmetric_gvm_point(model, window)
    return replace(model, omega_s=ws, omega_i=wi)


@dataclass(frozen=True)
class BinGeometry:
    """Frequency-bin widths and spacings in both frequency and mismatch space.

    All four quantities are stored as magnitudes; ``orientation`` is the sign
    of ``ks' - ki'`` and fixes which way PMF peaks map onto ``w_s - w_i``.
    """

    sigma: float
    delta_omega: float
    n_max: int
    sigma_k: float
    delta_k: float
    orientation: int = 1

    @property
    def spacing_ratio(self):
        return self.delta_omega / self.sigma


def bin_geometry_from(model, sigma_k: float, spacing_ratio: float, n_max: int = 0) -> BinGeometry:
    if spacing_ratio < 1:
        raise ValueError("spacing_ratio must be >= 1")
    _, ks, ki = model.slowness()
    diff = ks - ki
    if diff == 0:
        raise ValueError("degenerate group velocities; frequency mapping singular")
    sigma = 2.0 * sigma_k / abs(diff)
    delta_k = spacing_ratio * sigma_k
    return BinGeometry(
        sigma=sigma,
        delta_omega=2.0 * delta_k / abs(diff),
        n_max=int(n_max),
        sigma_k=float(sigma_k),
        delta_k=delta_k,
        orientation=1 if diff > 0 else -1,
    )
