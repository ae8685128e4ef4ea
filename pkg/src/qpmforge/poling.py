"""Custom poling: target phase-matching functions and +/-1 domain synthesis.

The target PMF in mismatch space is a sum of Gaussians

    Phi_t(dk) = sum_m c_m exp(-(dk - dk0 - m*delta_k)^2 / (8 sigma_k^2))

and a crystal is a sequence of equal-width domains whose nonlinearity sign is
+1 or -1. Domains are chosen left to right so that the running PMF amplitude
at ``dk0`` follows the amplitude of the target nonlinearity profile.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.integrate import quad

__all__ = [
    "TargetPmfSpec",
    "DomainConfiguration",
    "AmplitudeTrace",
    "FeasibilityReport",
    "DesignResult",
    "BiasReport",
    "InfeasibleDesignError",
    "SupportTruncationError",
    "feasibility_check",
    "target_pmf",
    "target_nonlinearity",
    "target_amplitude",
    "synthesize_domains",
    "pmf_coherent_sum",
    "bias_diagnostic",
    "normalize_pmf",
    "default_dk_grid",
    "write_domain_file",
    "read_domain_file",
    "write_pmf_csv",
    "read_pmf_csv",
]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_FEASIBILITY_RTOL = 1e-12


class InfeasibleDesignError(ValueError):
    def __init__(self, report: "FeasibilityReport"):
        super().__init__(
            f"target PMF violates the maximum-slope bound (slack={report.slack:.6g})"
        )
        self.report = report


class SupportTruncationError(ValueError):
    """Sampled function does not decay to negligible values at the grid edges."""


@dataclass(frozen=True)
class TargetPmfSpec:
    coefficients: Mapping[int, float]
    dk0: float
    delta_k: float
    sigma_k: float
    length: float

    def __post_init__(self):
        coeffs = {int(m): float(v) for m, v in self.coefficients.items()}
        if any(v < 0 for v in coeffs.values()):
            raise ValueError("coefficients must be non-negative for a real PMF")
        object.__setattr__(self, "coefficients", dict(sorted(coeffs.items())))
        if self.sigma_k <= 0 or self.length <= 0:
            raise ValueError("sigma_k and length must be positive")

    @classmethod
    def from_list(cls, values, dk0, delta_k, sigma_k, length, relative=False):
        """Coefficients listed for m = -N..N; ``relative`` scales by the slope bound."""
        values = list(values)
        if len(values) % 2 != 1:
            raise ValueError("need an odd number of coefficients (m = -N..N)")
        n = len(values) // 2
        scale = _SQRT_2_OVER_PI / (length * sigma_k) if relative else 1.0
        return cls({m: scale * v for m, v in zip(range(-n, n + 1), values)},
                   dk0, delta_k, sigma_k, length)

    @property
    def n_max(self):
        return max(abs(m) for m in self.coefficients) if self.coefficients else 0

    @property
    def n_gaussians(self):
        return 2 * self.n_max + 1

    @property
    def slope_bound(self):
        return _SQRT_2_OVER_PI / (self.length * self.sigma_k)

    @property
    def is_symmetric(self):
        c = self.coefficients
        return all(math.isclose(c.get(m, 0.0), c.get(-m, 0.0), rel_tol=1e-12, abs_tol=0.0)
                   for m in c)

    def scaled(self, factor):
        return TargetPmfSpec({m: factor * v for m, v in self.coefficients.items()},
                             self.dk0, self.delta_k, self.sigma_k, self.length)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    slack: float
    bound: float
    load: float
    asymmetric: bool


def feasibility_check(spec: TargetPmfSpec) -> FeasibilityReport:
    c = spec.coefficients
    load = c.get(0, 0.0) + 2.0 * sum(
        max(c.get(m, 0.0), c.get(-m, 0.0)) for m in range(1, spec.n_max + 1)
    )
    bound = spec.slope_bound
    slack = bound - load
    return FeasibilityReport(
        feasible=slack >= -_FEASIBILITY_RTOL * bound,
        slack=slack,
        bound=bound,
        load=load,
        asymmetric=not spec.is_symmetric,
    )


def target_pmf(spec: TargetPmfSpec, dk):
    dk = np.asarray(dk, dtype=float)
    out = np.zeros(dk.shape)
    for m, cm in spec.coefficients.items():
        out += cm * np.exp(-((dk - spec.dk0 - m * spec.delta_k) ** 2) / (8 * spec.sigma_k**2))
    return out


def target_nonlinearity(spec: TargetPmfSpec, z):
    """Inverse transform of the target PMF; complex, carries the ``exp(-i dk0 z)`` carrier."""
    z = np.asarray(z, dtype=float)
    pref = 2 * spec.length * spec.sigma_k / math.sqrt(2 * math.pi)
    env = np.zeros(z.shape, dtype=complex)
    for m, cm in spec.coefficients.items():
        env += cm * np.exp(-1j * m * spec.delta_k * z)
    return pref * np.exp(-2 * spec.sigma_k**2 * z**2) * np.exp(-1j * spec.dk0 * z) * env


def _amplitude_integrand(spec, z):
    # g_t(z) exp(i dk0 z) / L with the carrier removed analytically
    pref = 2 * spec.sigma_k / math.sqrt(2 * math.pi)
    env = sum(cm * np.exp(-1j * m * spec.delta_k * z) for m, cm in spec.coefficients.items())
    return pref * np.exp(-2 * spec.sigma_k**2 * z**2) * env


def target_amplitude(spec: TargetPmfSpec, z: float) -> complex:
    """Target amplitude ``A_t(z, dk0)``, integrated from the left crystal face."""
    half = spec.length / 2
    if abs(z) > half * (1 + 1e-12):
        raise ValueError(f"z={z!r} outside the crystal [-L/2, L/2]")
    z = min(max(z, -half), half)
    if z == -half:
        return 0j
    limit = max(200, 20 * spec.n_max + 50)
    re, _ = quad(lambda t: _amplitude_integrand(spec, t).real, -half, z,
                 epsabs=1e-15, epsrel=1e-12, limit=limit)
    im, _ = quad(lambda t: _amplitude_integrand(spec, t).imag, -half, z,
                 epsabs=1e-15, epsrel=1e-12, limit=limit)
    return complex(re, im)


def _cumulative_target_amplitude(spec: TargetPmfSpec, nodes, order=8):
    """``A_t`` at increasing ``nodes`` by per-interval Gauss-Legendre quadrature."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[-spec.length / 2], np.asarray(nodes, dtype=float)])
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = _amplitude_integrand(spec, pts)
    pieces = half * (vals * w[None, :]).sum(axis=1)
    return np.cumsum(pieces)


@dataclass
class DomainConfiguration:
    """Ordered +/-1 domain orientations of uniform width, centred on z = 0 by default."""

    signs: np.ndarray
    width: float
    z0: float | None = None
    dk0: float | None = None

    def __post_init__(self):
        signs = np.asarray(self.signs)
        if signs.ndim != 1 or signs.size == 0:
            raise ValueError("need a non-empty 1-D sign sequence")
        if not np.all((signs == 1) | (signs == -1)):
            raise ValueError("domain orientations must be exactly +1 or -1")
        self.signs = signs.astype(np.int8)
        if self.z0 is None:
            self.z0 = -0.5 * self.signs.size * self.width

    @classmethod
    def periodic(cls, n_domains, width, dk0=None):
        return cls(np.where(np.arange(n_domains) % 2 == 0, 1, -1), width, dk0=dk0)

    @property
    def n_domains(self):
        return int(self.signs.size)

    @property
    def length(self):
        return self.n_domains * self.width

    @property
    def boundaries(self):
        return self.z0 + self.width * np.arange(self.n_domains + 1)

    @property
    def n_walls(self):
        return int(np.count_nonzero(np.diff(self.signs)))

    def nonlinearity(self, z):
        """g(z), zero outside the crystal."""
        z = np.asarray(z, dtype=float)
        idx = np.floor((z - self.z0) / self.width).astype(int)
        inside = (idx >= 0) & (idx < self.n_domains)
        out = np.zeros(z.shape)
        out[inside] = self.signs[idx[inside]]
        return out


@dataclass
class AmplitudeTrace:
    z: np.ndarray
    realized: np.ndarray
    target: np.ndarray

    @property
    def final_error(self):
        return abs(self.target[-1] - self.realized[-1])


@dataclass
class DesignResult:
    domains: DomainConfiguration
    trace: AmplitudeTrace
    feasibility: FeasibilityReport
    phase_reference: float
    metadata: dict = field(default_factory=dict)


def _domain_contributions(domains: DomainConfiguration, dk: float):
    w = domains.width
    centres = domains.boundaries[:-1] + 0.5 * w
    return (w / domains.length) * np.sinc(dk * w / (2 * np.pi)) * np.exp(1j * dk * centres)


def synthesize_domains(spec: TargetPmfSpec, width: float | None = None,
                       mirror: bool = False) -> DesignResult:
    """Greedy left-to-right domain selection tracking the target amplitude at ``dk0``.

    The realized amplitude can only move along the directions of the single-domain
    contributions, so the target is expressed in the phase reference of the
    central domain (a global phase of the PMF).

    With ``mirror`` only the left half is tracked and the right half is its mirror
    image, which makes the realized PMF exactly real about the crystal centre.
    """
    report = feasibility_check(spec)
    if not report.feasible:
        raise InfeasibleDesignError(report)
    if width is None:
        width = math.pi / abs(spec.dk0)
    n = int(math.floor(spec.length / width * (1 + 1e-12)))
    if n < 10:
        raise ValueError("crystal must hold at least 10 domains")

    probe = DomainConfiguration(np.ones(n, dtype=np.int8), width, dk0=spec.dk0)
    steps = _domain_contributions(probe, spec.dk0)
    phase_ref = math.remainder(float(np.angle(steps[n // 2])), math.pi)
    rotation = np.exp(1j * phase_ref)

    z = probe.boundaries
    target = np.concatenate([[0j], _cumulative_target_amplitude(spec, z[1:])]) * rotation

    signs = np.empty(n, dtype=np.int8)
    realized = np.empty(n + 1, dtype=complex)
    realized[0] = 0j
    prev = 1
    acc = 0j
    for j in range((n + 1) // 2 if mirror else n):
        up = acc + steps[j]
        down = acc - steps[j]
        d_up = abs(target[j + 1] - up)
        d_down = abs(target[j + 1] - down)
        if abs(d_up - d_down) <= 1e-14 * abs(steps[j]):
            s = prev
        else:
            s = 1 if d_up < d_down else -1
        acc = up if s == 1 else down
        signs[j] = s
        realized[j + 1] = acc
        prev = s
    if mirror:
        signs[n - (n + 1) // 2:] = signs[:(n + 1) // 2][::-1]
        realized[1:] = np.cumsum(signs * steps)

    domains = DomainConfiguration(signs, width, dk0=spec.dk0)
    meta = {
        "n_domains": n,
        "width_m": width,
        "effective_length_m": domains.length,
        "nominal_length_m": spec.length,
        "domain_walls": domains.n_walls,
        "mirror": bool(mirror),
    }
    return DesignResult(domains, AmplitudeTrace(z, realized, target), report, phase_ref, meta)


def pmf_coherent_sum(domains: DomainConfiguration, dk, threads: int = 1, chunk: int = 256):
    """Realized PMF ``(1/L) int g(z) exp(i dk z) dz`` as a closed-form sum over domains."""
    dk = np.atleast_1d(np.asarray(dk, dtype=float))
    w = domains.width
    offsets = w * np.arange(domains.n_domains)
    g = domains.signs.astype(float)
    pref = (w / domains.length) * np.sinc(dk * w / (2 * np.pi)) * np.exp(
        1j * dk * (domains.z0 + 0.5 * w)
    )

    def block(sl):
        phases = np.exp(1j * np.multiply.outer(dk[sl], offsets))
        return np.sum(phases * g, axis=1)

    slices = [slice(i, min(i + chunk, dk.size)) for i in range(0, dk.size, chunk)]
    if threads > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, slices))
    else:
        parts = [block(sl) for sl in slices]
    total = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)
    return pref * total


@dataclass
class BiasReport:
    peaks: list
    asymmetry: list

    @property
    def direction_ok(self):
        return all(a["direction_ok"] for a in self.asymmetry)


def bias_diagnostic(domains: DomainConfiguration, spec: TargetPmfSpec) -> BiasReport:
    """Realized peak heights versus target and the left/right asymmetry of +/-m pairs.

    The predicted asymmetry is the ratio of single-domain sinc envelopes at the two
    peak positions: peaks nearer dk = 0 are enhanced.
    """
    ms = sorted(spec.coefficients)
    centres = np.array([spec.dk0 + m * spec.delta_k for m in ms])
    realized = np.abs(pmf_coherent_sum(domains, centres))
    peaks = []
    ratio = {}
    for m, dk, val in zip(ms, centres, realized):
        cm = spec.coefficients[m]
        r = val / cm if cm > 0 else math.nan
        ratio[m] = r
        peaks.append({"m": m, "dk_radpm": float(dk), "realized": float(val),
                      "target": cm, "ratio": float(r)})
    w = domains.width
    asym = []
    for m in range(1, spec.n_max + 1):
        if m not in ratio or -m not in ratio:
            continue
        measured = ratio[m] / ratio[-m]
        predicted = float(
            np.sinc((spec.dk0 + m * spec.delta_k) * w / (2 * np.pi))
            / np.sinc((spec.dk0 - m * spec.delta_k) * w / (2 * np.pi))
        )
        asym.append({
            "m": m,
            "measured": float(measured),
            "predicted": predicted,
            "direction_ok": bool(np.sign(measured - 1) == np.sign(predicted - 1)),
        })
    return BiasReport(peaks, asym)


def default_dk_grid(spec: TargetPmfSpec, samples_per_sigma: int = 32):
    half = spec.n_max * spec.delta_k + 16 * spec.sigma_k
    n = int(math.ceil(2 * half / spec.sigma_k * samples_per_sigma)) + 1
    return np.linspace(spec.dk0 - half, spec.dk0 + half, n)


def normalize_pmf(dk, phi, jacobian: float = 1.0, support_tol: float | None = 1e-6):
    """Return ``(phi / N, N)`` with ``N^2 = int |phi|^2 d(omega)``.

    ``jacobian`` is ``d(omega)/d(dk)``: pass ``sigma/sigma_k`` to measure the norm
    in the frequency-difference variable.
    """
    dk = np.asarray(dk, dtype=float)
    phi = np.asarray(phi)
    peak = np.max(np.abs(phi))
    if peak == 0:
        raise ValueError("cannot normalise an identically zero PMF")
    if support_tol is not None:
        edge = max(abs(phi[0]), abs(phi[-1])) / peak
        if edge >= support_tol:
            raise SupportTruncationError(
                f"PMF not negligible at grid boundary: |phi|/max = {edge:.3e} "
                f"(limit {support_tol:g})"
            )
    norm = math.sqrt(np.trapezoid(np.abs(phi) ** 2, dk) * jacobian)
    return phi / norm, norm


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_domain_file(path, domains: DomainConfiguration, length=None, dk0=None):
    length = domains.length if length is None else length
    dk0 = domains.dk0 if dk0 is None else dk0
    buf = io.StringIO()
    buf.write(f"# L_m={length!r}\n")
    buf.write(f"# w_m={domains.width!r}\n")
    buf.write(f"# dk0_radpm={float(dk0)!r}\n")
    chars = "".join("+" if s > 0 else "-" for s in domains.signs)
    for i in range(0, len(chars), 80):
        buf.write(chars[i:i + 80] + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_domain_file(path) -> DomainConfiguration:
    header = {}
    chars = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = float(value)
            continue
        bad = set(line) - {"+", "-"}
        if bad:
            raise ValueError(f"unexpected characters in domain file: {sorted(bad)}")
        chars.append(line)
    for key in ("L_m", "w_m", "dk0_radpm"):
        if key not in header:
            raise ValueError(f"domain file missing header {key}")
    signs = np.array([1 if ch == "+" else -1 for ch in "".join(chars)], dtype=np.int8)
    return DomainConfiguration(signs, header["w_m"], dk0=header["dk0_radpm"])


def write_pmf_csv(path, dk, phi):
    rows = ["dk_radpm,re_phi,im_phi"]
    for k, v in zip(np.asarray(dk), np.asarray(phi, dtype=complex)):
        rows.append(f"{float(k)!r},{float(v.real)!r},{float(v.imag)!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_pmf_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]
