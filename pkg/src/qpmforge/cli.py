"""Design custom-poled crystals and simulate their frequency-bin squeezed states.

Exit codes: 0 success, 2 infeasible design, 3 missing or invalid input file,
4 invalid squeezing matrix.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .modes import (
    InvalidMatrixError,
    SqueezeMatrix,
    block_decompose,
    count_modes,
    extract_squeeze_matrix,
    read_squeeze_csv,
    schmidt_number,
    singular_spectrum,
    write_squeeze_csv,
)
from .pipeline import Setup, build_setup
from .poling import (
    InfeasibleDesignError,
    bias_diagnostic,
    default_dk_grid,
    feasibility_check,
    normalize_pmf,
    pmf_coherent_sum,
    read_domain_file,
    synthesize_domains,
    target_pmf,
    write_domain_file,
    write_pmf_csv,
)
from .spectra import find_peaks, read_jsa, write_jsa
from .state import (
    covariance_from_squeeze,
    eliminate_polarization,
    thss_scan,
    write_covariance,
    write_thss_csv,
)

log = logging.getLogger("qpmforge")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_MATRIX = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _fmt(v):
    return f"{float(v):.17g}"


class Run:
    """Shared state of one invocation: config, output directory and flags."""

    def __init__(self, args):
        self.args = args
        if not args.config:
            raise CliError("--config is required", EXIT_INPUT)
        path = Path(args.config)
        if not path.is_file() and path.suffix == "" and path.name == str(path):
            # bare name of a bundled example, e.g. ``--config fig3``
            bundled = resources.files("qpmforge") / "examples" / f"{path.name}.toml"
            if bundled.is_file():
                path = Path(str(bundled))
        if not path.is_file():
            raise CliError(f"config file not found: {path}", EXIT_INPUT)
        try:
            self.config = load_config(path)
        except ConfigError as exc:
            raise CliError(f"invalid config: {exc}", EXIT_INPUT) from exc
        if args.grid_size is not None:
            self.config.data["grid"]["size"] = int(args.grid_size)
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.threads = max(1, int(args.threads))
        self._setup = None
        _dump_json(self.out / "resolved_config.json", self.config.data)

    @property
    def setup(self) -> Setup:
        if self._setup is None:
            try:
                self._setup = build_setup(self.config)
            except (ValueError, KeyError) as exc:
                raise CliError(f"invalid config: {exc}", EXIT_INPUT) from exc
        return self._setup

    @property
    def plots(self):
        return bool(self.config.output["plots"]) and not self.args.no_plots

    def figure(self, name):
        return self.out / f"{name}.{self.config.output['plot_format']}"

    def domains(self, path=None):
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise CliError(f"domain file not found: {p}", EXIT_INPUT)
            try:
                return read_domain_file(p)
            except ValueError as exc:
                raise CliError(f"invalid domain file {p}: {exc}", EXIT_INPUT) from exc
        return self.design(write=False).domains

    def design(self, write=True):
        s = self.setup
        try:
            design = synthesize_domains(s.target, s.width)
        except InfeasibleDesignError as exc:
            raise CliError(
                f"infeasible target PMF: slack = {exc.report.slack:.6g} "
                f"(bound {exc.report.bound:.6g}, load {exc.report.load:.6g})",
                EXIT_INFEASIBLE,
            ) from exc
        if write:
            write_domain_file(self.out / "domains.txt", design.domains, length=s.target.length)
            with open(self.out / "amplitude_trace.csv", "w", encoding="utf-8") as fh:
                fh.write("z_m,re_realized,im_realized,re_target,im_target\n")
                for z, a, t in zip(design.trace.z, design.trace.realized, design.trace.target):
                    fh.write(",".join(_fmt(v) for v in (z, a.real, a.imag, t.real, t.imag)) + "\n")
        return design


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_design(run: Run):
    s = run.setup
    t0 = time.perf_counter()
    report = feasibility_check(s.target)
    design = run.design()
    bias = bias_diagnostic(design.domains, s.target)
    result = {
        "feasible": report.feasible,
        "slack": report.slack,
        "slope_bound": report.bound,
        "asymmetric_target": report.asymmetric,
        "phase_reference": design.phase_reference,
        "final_tracking_error": design.trace.final_error,
        "peaks": bias.peaks,
        "asymmetry": bias.asymmetry,
        "bias_direction_ok": bias.direction_ok,
        **design.metadata,
    }
    _dump_json(run.out / "bias_report.json", result)
    if run.plots:
        from .plotting import plot_design

        plot_design(design, run.figure("design"))
    log.debug("design took %.3f s", time.perf_counter() - t0)
    print(f"domains: {design.domains.n_domains}  width: {design.domains.width:.6g} m  "
          f"walls: {design.domains.n_walls}")
    for p in bias.peaks:
        print(f"  m={p['m']:+d}  realized/target = {p['ratio']:.4f}")
    return EXIT_OK


def cmd_pmf(run: Run):
    s = run.setup
    domains = run.domains(run.args.domains)
    dk = default_dk_grid(s.target)
    phi = pmf_coherent_sum(domains, dk, threads=run.threads)
    target = target_pmf(s.target, dk)
    write_pmf_csv(run.out / "pmf.csv", dk, phi)
    write_pmf_csv(run.out / "target_pmf.csv", dk, target)
    jac = s.geometry.sigma / s.geometry.sigma_k
    _, n_dk = normalize_pmf(dk, phi, support_tol=None)
    _, n_w = normalize_pmf(dk, phi, jacobian=jac, support_tol=None)
    re = np.abs(phi.real).max()
    summary = {
        "samples": int(dk.size),
        "norm_dk": n_dk,
        "norm_omega": n_w,
        "max_abs": float(np.abs(phi).max()),
        "imag_to_real": float(np.abs(phi.imag).max() / re) if re > 0 else math.inf,
    }
    _dump_json(run.out / "pmf_report.json", summary)
    if run.plots:
        from .plotting import plot_pmf

        plot_pmf(dk, phi, target, s.target.dk0, run.figure("pmf"))
    print(f"PMF samples: {dk.size}  max|phi| = {summary['max_abs']:.6g}  "
          f"max|Im|/max|Re| = {summary['imag_to_real']:.3e}")
    return EXIT_OK


def _peak_rows(s: Setup, peaks):
    half = 0.5 * s.geometry.delta_omega
    rows = []
    for p in peaks:
        rows.append({
            "omega_s_radps": p.omega_s,
            "omega_i_radps": p.omega_i,
            "bin_s": (p.omega_s - s.center_s) / half,
            "bin_i": (p.omega_i - s.center_i) / half,
            "height": p.height,
        })
    return rows


def _write_peaks(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("omega_s_radps,omega_i_radps,bin_s,bin_i,height\n")
        for r in rows:
            fh.write(",".join(_fmt(r[k]) for k in
                              ("omega_s_radps", "omega_i_radps", "bin_s", "bin_i", "height")) + "\n")


def cmd_jsa(run: Run):
    s = run.setup
    domains = run.domains(run.args.domains) if run.args.domains else None
    from .poling import SupportTruncationError

    try:
        jsa = s.jsa(domains, threads=run.threads)
    except SupportTruncationError as exc:
        raise CliError(str(exc), EXIT_INPUT) from exc
    thr = run.config.output["peak_threshold"]
    out = {}
    grids = [("jsa", jsa)]
    if s.filter_spec() is not None:
        grids.append(("jsa_filtered", s.filtered(jsa)))
    for name, grid in grids:
        write_jsa(run.out / f"{name}.qjsa", grid)
        rows = _peak_rows(s, find_peaks(grid, thr))
        _write_peaks(run.out / f"peaks{name[3:]}.csv", rows)
        out[name] = {"peaks": len(rows), "transmitted_fraction": grid.metadata.get("transmitted_fraction"),
                     "raw_norm": grid.metadata.get("raw_norm")}
        print(f"{name}: {len(rows)} peaks above {thr:g} of max")
        if run.plots:
            from .plotting import plot_jsa

            plot_jsa(grid, run.figure(name), title=name.replace("_", " "))
    _dump_json(run.out / "jsa_report.json", out)
    return EXIT_OK


def _load_jsa(run: Run, path):
    if path is None:
        name = "jsa_filtered.qjsa" if run.setup.filter_spec() is not None else "jsa.qjsa"
        path = run.out / name
    p = Path(path)
    if not p.is_file():
        raise CliError(f"JSA container not found: {p}", EXIT_INPUT)
    try:
        return read_jsa(p)
    except (ValueError, KeyError) as exc:
        raise CliError(f"invalid JSA container {p}: {exc}", EXIT_INPUT) from exc


def _mode_summary(gamma, threshold):
    c = count_modes(gamma, threshold)
    return {
        "threshold": threshold,
        "distinct_pairs": c.distinct_pairs,
        "single_mode_terms": c.single_mode_terms,
        "two_mode_terms": c.two_mode_terms,
        "blocks": [list(b) for b in block_decompose(gamma, threshold)],
    }


def cmd_modes(run: Run):
    s = run.setup
    jsa = _load_jsa(run, run.args.jsa)
    if jsa.norm != "unit":
        raise CliError("modes needs a unit-normalised JSA container", EXIT_INPUT)
    thr = run.args.threshold if run.args.threshold is not None else run.config.output["mode_threshold"]
    bs, bi = s.basis()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            gamma = extract_squeeze_matrix(jsa, bs, bi)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_INPUT) from exc
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    gamma = gamma.with_scale(run.config.state["gamma"])
    write_squeeze_csv(run.out / "gamma.csv", gamma, provenance=jsa.metadata.get("provenance"))
    sv = singular_spectrum(jsa)
    np.savetxt(run.out / "singular_values.csv", sv, fmt="%.17g", header="singular_value", comments="")
    summary = _mode_summary(gamma, thr)
    summary.update({
        "residual": gamma.metadata["residual"],
        "spans_jsa": gamma.metadata["spans_jsa"],
        "asymmetry": gamma.metadata["asymmetry"],
        "schmidt_number": schmidt_number(sv),
        "filtered_input": "transmitted_fraction" in jsa.metadata,
    })
    if s.filter_spec() is not None:
        summary["bin_centre_filter_model"] = _mode_summary(s.analytic_matrix(filtered=True),
                                                           run.config.output["mode_threshold"])
    _dump_json(run.out / "modes.json", summary)
    if run.plots:
        from .plotting import plot_singular_values, plot_squeeze_matrix

        plot_squeeze_matrix(gamma, run.figure("gamma"))
        plot_singular_values(sv, run.figure("singular_values"))
    print(f"distinct pairs: {summary['distinct_pairs']} "
          f"({summary['single_mode_terms']} single-mode, {summary['two_mode_terms']} two-mode)")
    print(f"blocks: {summary['blocks']}")
    print(f"residual: {summary['residual']:.3e}  Schmidt number: {summary['schmidt_number']:.6g}")
    return EXIT_OK


def _load_gamma(run: Run, path):
    p = Path(path) if path is not None else run.out / "gamma.csv"
    if not p.is_file():
        raise CliError(f"squeezing matrix not found: {p}", EXIT_INPUT)
    try:
        return read_squeeze_csv(p)
    except InvalidMatrixError as exc:
        raise CliError(f"invalid squeezing matrix: {exc}", EXIT_MATRIX) from exc
    except (ValueError, KeyError, IndexError) as exc:
        raise CliError(f"invalid squeezing matrix file {p}: {exc}", EXIT_MATRIX) from exc


def _write_variances(path, state):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin,path,pol,var_x,var_p,min_var\n")
        for k, lab in enumerate(state.labels):
            blk = state.cov[2 * k:2 * k + 2, 2 * k:2 * k + 2]
            fh.write(f"{lab.bin},{lab.path},{lab.pol},{_fmt(blk[0, 0])},{_fmt(blk[1, 1])},"
                     f"{_fmt(np.linalg.eigvalsh(blk).min())}\n")


def cmd_state(run: Run):
    st_cfg = run.config.state
    gamma = _load_gamma(run, run.args.gamma)
    try:
        state = covariance_from_squeeze(gamma, st_cfg["pairing"])
    except InvalidMatrixError as exc:
        raise CliError(f"invalid squeezing matrix: {exc}", EXIT_MATRIX) from exc
    write_covariance(run.out / "covariance.csv", state)
    _write_variances(run.out / "variances.csv", state)
    summary = {
        "pairing": st_cfg["pairing"],
        "modes": state.n_modes,
        "det_2V": state.purity_determinant(),
        "uncertainty_margin": state.uncertainty_margin(),
    }
    if st_cfg["block"]:
        try:
            red = state.reduced([(b, 1, "H") for b in st_cfg["block"]])
        except KeyError as exc:
            raise CliError(f"block labels not in matrix: {exc}", EXIT_MATRIX) from exc
        write_covariance(run.out / "covariance_block.csv", red)
        summary["block"] = list(st_cfg["block"])
        summary["block_det_2V"] = red.purity_determinant()
    if st_cfg["eliminate"]:
        out, full = eliminate_polarization(state, return_full=True)
        write_covariance(run.out / "covariance_eliminated.csv", out)
        _write_variances(run.out / "variances_eliminated.csv", out)
        n = len(gamma.labels)
        cross = np.linalg.norm(out.cov[:2 * n, 2 * n:])
        summary["eliminated_cross_block_frobenius"] = float(cross)
        summary["eliminated_det_2V"] = out.purity_determinant()
    if st_cfg["thss_b11"] or st_cfg["thss_b12"] or st_cfg["thss_b22"]:
        rows = thss_scan(st_cfg["thss_b11"] or [0.0], st_cfg["thss_b12"] or [0.0],
                         st_cfg["thss_b22"] or [0.0])
        write_thss_csv(run.out / "thss.csv", rows)
        summary["thss_rows"] = len(rows)
        if run.plots:
            from .plotting import plot_thss

            plot_thss(rows, run.figure("thss"))
    _dump_json(run.out / "state.json", summary)
    print(f"modes: {state.n_modes}  det(2V) = {summary['det_2V']:.12g}")
    if "block_det_2V" in summary:
        print(f"block {summary['block']}: det(2V) = {summary['block_det_2V']:.12g}")
    if "eliminated_cross_block_frobenius" in summary:
        print(f"eliminated: cross-block Frobenius {summary['eliminated_cross_block_frobenius']:.3e}")
    return EXIT_OK


def cmd_report(run: Run):
    """Full pipeline into one directory: design, PMF, JSA, modes and state."""
    t0 = time.perf_counter()
    cmd_design(run)
    run.args.domains = str(run.out / "domains.txt")
    cmd_pmf(run)
    run.args.domains = None if not run.args.realized else run.args.domains
    cmd_jsa(run)
    run.args.jsa = None
    cmd_modes(run)
    run.args.gamma = None
    cmd_state(run)
    summary = {}
    for name in ("bias_report", "pmf_report", "jsa_report", "modes", "state"):
        summary[name] = json.loads((run.out / f"{name}.json").read_text(encoding="utf-8"))
    _dump_json(run.out / "summary.json", summary)
    print(f"report written to {run.out} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


COMMANDS = {
    "design": cmd_design,
    "pmf": cmd_pmf,
    "jsa": cmd_jsa,
    "modes": cmd_modes,
    "state": cmd_state,
    "report": cmd_report,
}


def _common_flags(suppress):
    # subcommand copies use SUPPRESS so flags given before the command survive
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="TOML or JSON project file")
    common.add_argument("--out-dir", default=d("."), help="output directory (default: cwd)")
    common.add_argument("--threads", type=int, default=d(1), help="worker threads for PMF sums")
    common.add_argument("--grid-size", type=int, default=d(None), help="override grid.size")
    common.add_argument("--no-plots", action="store_true", default=d(False),
                        help="skip figure output")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser():
    top = _common_flags(False)
    common = _common_flags(True)
    parser = argparse.ArgumentParser(prog="qpmforge", description=__doc__.splitlines()[0],
                                     parents=[top])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="synthesise a domain sequence")
    p = sub.add_parser("pmf", parents=[common], help="evaluate the realized PMF")
    p.add_argument("--domains", help="domain file (default: design from config)")
    p = sub.add_parser("jsa", parents=[common], help="assemble the joint spectral amplitude")
    p.add_argument("--domains", help="use the realized PMF of this domain file")
    p = sub.add_parser("modes", parents=[common], help="extract the squeezing matrix")
    p.add_argument("--jsa", help="JSA container (default: from --out-dir)")
    p.add_argument("--threshold", type=float, default=None,
                   help="relative threshold for mode counting and blocks")
    p = sub.add_parser("state", parents=[common], help="covariance simulation")
    p.add_argument("--gamma", help="squeezing-matrix CSV (default: from --out-dir)")
    p = sub.add_parser("report", parents=[common], help="run the whole pipeline")
    p.add_argument("--realized", action="store_true",
                   help="build the JSA from the designed crystal instead of the target PMF")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("domains", "jsa", "threshold", "gamma", "realized"):
        if not hasattr(args, name):
            setattr(args, name, None)
    if args.threshold is not None and not 0 < args.threshold < 1:
        parser.error("--threshold must lie in (0, 1)")
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run = Run(args)
        return COMMANDS[args.command](run)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
