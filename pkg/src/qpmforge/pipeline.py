"""Builds library objects from a :class:`ProjectConfig` and runs the standard pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ProjectConfig
from .dispersion import (
    BinGeometry,
    LinearExpansion,
    SellmeierTable,
    bin_geometry_from,
    coherence_length,
    load_sellmeier_set,
    symmetric_gvm_table,
    wavelength_to_omega,
)
from .modes import BinBasis, analytic_squeeze_matrix, filter_squeeze_matrix
from .poling import DomainConfiguration, TargetPmfSpec, pmf_coherent_sum, target_pmf
from .spectra import (
    FilterSpec,
    JsaGrid,
    PumpSpec,
    apply_filter,
    assemble_jsa,
    grid_axes,
    pmf_frequency_space,
)

__all__ = ["Setup", "build_setup", "build_model"]


def build_model(cfg: ProjectConfig):
    d = cfg.dispersion
    if d["kind"] == "linear":
        dk0 = d["dk0_radpm"]
        if dk0 is None:
            dk0 = math.pi / d["coherence_length_m"]
        ws = wavelength_to_omega(d["signal_wavelength_m"])
        wi = wavelength_to_omega(d["idler_wavelength_m"])
        ks, ki = d["ks_prime_spm"], d["ki_prime_spm"]
        kp = d["kp_prime_spm"]
        if kp is None:
            if not d["symmetric_gvm"]:
                raise ValueError("kp_prime_spm is required without symmetric_gvm")
            return LinearExpansion.symmetric(dk0, ks, ki, ws, wi)
        return LinearExpansion(dk0, kp, ks, ki, ws, wi, bool(d["symmetric_gvm"]))
    sset = load_sellmeier_set(d["sellmeier_set"])
    pa, sa, ia = d["axes"]
    if d["signal_wavelength_m"] is not None:
        ws = wavelength_to_omega(d["signal_wavelength_m"])
        wi = wavelength_to_omega(d["idler_wavelength_m"] or d["signal_wavelength_m"])
        return SellmeierTable(sset, pa, sa, ia, ws, wi, d["temperature_c"])
    probe = SellmeierTable(sset, pa, sa, ia, 1.0, 1.0, d["temperature_c"])
    return symmetric_gvm_table(probe, tuple(d["window_m"]))


@dataclass
class Setup:
    """Every derived object a pipeline run needs."""

    config: ProjectConfig
    model: object
    geometry: BinGeometry
    target: TargetPmfSpec
    pump: PumpSpec
    width: float

    @property
    def center_s(self):
        return self.model.omega_s

    @property
    def center_i(self):
        return self.model.omega_i

    @property
    def reach(self):
        """Largest bin label populated by the pump and PMF peaks."""
        return self.pump.n_max + self.target.n_max

    def frequency_pmf_coefficients(self):
        """PMF peak weights ``b_q`` indexed by their frequency-difference offset."""
        o = self.geometry.orientation
        c = self.target.coefficients
        b = {q: c.get(-q * o, 0.0) for q in range(-self.target.n_max, self.target.n_max + 1)}
        norm = math.sqrt(sum(v * v for v in b.values()))
        return {q: v / norm for q, v in b.items()} if norm > 0 else b

    def axes(self, size=None):
        size = self.config.grid["size"] if size is None else size
        half = self.reach * self.geometry.delta_omega / 2 + self.config.grid["margin_sigma"] * self.geometry.sigma
        return grid_axes(self.center_s, self.center_i, half, size)

    def basis(self):
        g = self.geometry
        return (BinBasis.spanning(self.reach, self.center_s, g.sigma, g.delta_omega, "signal"),
                BinBasis.spanning(self.reach, self.center_i, g.sigma, g.delta_omega, "idler"))

    def sampler(self, domains: DomainConfiguration | None = None, threads=1):
        if domains is None:
            fn = lambda dk: target_pmf(self.target, dk)
        else:
            fn = lambda dk: pmf_coherent_sum(domains, np.ravel(dk), threads=threads).reshape(np.shape(dk))
        return pmf_frequency_space(fn, self.geometry, self.model)

    def jsa(self, domains=None, size=None, threads=1) -> JsaGrid:
        ax_s, ax_i = self.axes(size)
        prov = {
            "pump_coefficients": {str(k): v for k, v in self.pump.coefficients.items()},
            "pmf_coefficients": {str(k): v for k, v in self.target.coefficients.items()},
            "pmf_source": "target" if domains is None else "domains",
            "dispersion": self.model.kind,
        }
        return assemble_jsa(self.pump, self.sampler(domains, threads), ax_s, ax_i,
                            threads=threads, provenance=prov)

    def filter_spec(self):
        f = self.config.filter
        if not f["enabled"]:
            return None
        return FilterSpec(self.center_s, self.center_i, f["sigma_f_ratio"] * self.geometry.sigma)

    def filtered(self, jsa: JsaGrid):
        spec = self.filter_spec()
        return jsa if spec is None else apply_filter(jsa, spec)

    def analytic_matrix(self, filtered=False):
        bs, bi = self.basis()
        gamma = analytic_squeeze_matrix(self.pump.coefficients, self.frequency_pmf_coefficients(),
                                        scale=self.config.state["gamma"], labels=bs.labels)
        spec = self.filter_spec()
        if filtered and spec is not None:
            ts = dict(zip(bs.labels, spec.transmission_s(bs.centers())))
            ti = dict(zip(bi.labels, spec.transmission_i(bi.centers())))
            gamma = filter_squeeze_matrix(gamma, ts, ti)
        return gamma


def build_setup(cfg: ProjectConfig) -> Setup:
    model = build_model(cfg)
    tp = cfg.target_pmf
    geom = bin_geometry_from(model, tp["sigma_k_per_m"], tp["spacing_ratio"])
    relative = tp["coefficients"] is None
    values = tp["coefficients_relative"] if relative else tp["coefficients"]
    target = TargetPmfSpec.from_list(values, model.dk0, geom.delta_k, geom.sigma_k, tp["L_m"],
                                     relative=relative)
    geom = BinGeometry(geom.sigma, geom.delta_omega, target.n_max, geom.sigma_k, geom.delta_k,
                       geom.orientation)
    pump = PumpSpec.from_list(cfg.pump["coefficients"], model.omega_p, geom.delta_omega,
                              geom.sigma, normalize=bool(cfg.pump["normalize"]))
    width = tp["width_m"] if tp["width_m"] is not None else coherence_length(model)
    return Setup(cfg, model, geom, target, pump, width)
