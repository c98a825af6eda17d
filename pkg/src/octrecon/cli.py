"""Command-line interface: ``octrecon <command> [options]``.

Every command writes CSV tables plus ``manifest.json`` into ``--out``.
Exit status is 0 on success, 1 for user errors (bad options, bad input
files) and 2 for internal errors; failures print a JSON error record on
stderr.
"""

import argparse
import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import io as oio
from .admm import AdmmConfig, AdmmSolver, estimate_support
from .deconv import lucy_richardson
from .errors import InvalidArgumentError, OctReconError
from .forward import (
    Interferogram,
    NoiseModel,
    ReflectivityProfile,
    gaussian_resolution,
    gaussian_spectrum,
    simulate_interferogram,
    truncate_bandwidth,
)
from .grids import SpatialGrid, WavenumberGrid
from .idft import RECON_METHODS, psf_report, reconstruct_idft, shift_variance_map
from .units import parse_length
from .wedge import (
    AirWedgeSpec,
    BenchSettings,
    resolution_benchmark,
    source_for_fwhm,
    synthesis_grid,
    synthesize_air_wedge,
)

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    """Raised by the parser instead of exiting, so errors share one reporting path."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _length(text):
    try:
        return parse_length(text)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_length(text):
    value = _length(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"length must be positive, got {text!r}")
    return value


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _non_negative_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(value) and value >= 0):
        raise argparse.ArgumentTypeError(f"expected a finite non-negative number, got {text!r}")
    return value


def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _noise(text):
    if text == "none":
        return 0.0
    return _non_negative_float(text)


def _methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = sorted(set(methods) - set(RECON_METHODS))
    if not methods or unknown:
        bad = f"unknown {', '.join(unknown)}; " if unknown else ""
        raise argparse.ArgumentTypeError(f"{bad}methods must be a comma list from {', '.join(RECON_METHODS)}")
    return [m for m in RECON_METHODS if m in methods]


def _fractions(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated fractions, got {text!r}") from None
    if not values or any(not 0 < v <= 1 for v in values):
        raise argparse.ArgumentTypeError("fractions must lie in (0, 1]")
    return values


def _add_source(p, default_peak=1.0):
    g = p.add_argument_group("source")
    g.add_argument("--lambda-min", type=_positive_length, default=parse_length("791.6nm"),
                   help="shortest sampled wavelength (default 791.6nm)")
    g.add_argument("--lambda-max", type=_positive_length, default=parse_length("994.0nm"),
                   help="longest sampled wavelength (default 994.0nm)")
    g.add_argument("--samples", type=_positive_int, default=2048, help="spectral samples M (default 2048)")
    g.add_argument("--center", type=_positive_length, default=parse_length("892.8nm"),
                   help="source centre wavelength (default 892.8nm)")
    width = g.add_mutually_exclusive_group()
    width.add_argument("--psf-fwhm", type=_positive_length,
                       help="calibrate the Gaussian so the measured PSF FWHM equals this (default 3.40um)")
    width.add_argument("--fwhm-lambda", type=_positive_length, help="Gaussian FWHM in wavelength")
    g.add_argument("--source-peak", type=_non_negative_float, default=default_peak,
                   help=f"peak value of the effective spectrum (default {default_peak:g})")


def _add_out(p):
    p.add_argument("--out", type=Path, required=True, help="output directory")


def _add_admm(p, default_step, lam_rel=0.01):
    g = p.add_argument_group("admm")
    lam = g.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=_non_negative_float, help="absolute l1 weight")
    lam.add_argument("--lambda-rel", type=_non_negative_float,
                     help=f"l1 weight as a fraction of ||A^T i||_inf (default {lam_rel:g})")
    g.add_argument("--rho", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=1.6)
    g.add_argument("--max-iterations", type=_positive_int, default=1000)
    g.add_argument("--grid-step", type=_positive_length, default=default_step,
                   help="reconstruction grid step for admm")
    g.add_argument("--nonnegative", action="store_true", help="constrain the reflectivity to be >= 0")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="octrecon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="synthesise spectra of a phantom")
    _add_source(p, default_peak=1e5)
    _add_out(p)
    p.add_argument("--phantom", choices=("wedge", "layers"), default="layers")
    p.add_argument("--lines", type=_positive_int, default=1, help="A-lines (wedge: default 200)")
    p.add_argument("--min-sep", type=_length, default=parse_length("0.5um"))
    p.add_argument("--max-sep", type=_length, default=parse_length("15um"))
    p.add_argument("--top", type=_length, default=parse_length("100um"), help="depth of the first interface")
    p.add_argument("--layer-count", type=_positive_int, default=8)
    p.add_argument("--layer-spacing", type=_positive_length, default=parse_length("20um"))
    p.add_argument("--reflectivity", type=_non_negative_float, default=0.1)
    p.add_argument("--synthesis-step", type=_positive_length, default=parse_length("6.25nm"))
    p.add_argument("--noise", type=_noise, default=0.0, help="'none' or Gaussian sigma")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--encoding", choices=oio.ENCODINGS, default="float64-le")

    p = sub.add_parser("psf", help="axial PSF of the source")
    _add_source(p)
    _add_out(p)
    p.add_argument("--oversample", type=_positive_int, default=8)

    p = sub.add_parser("recon", help="reconstruct depth profiles from a spectra file")
    _add_out(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--method", choices=RECON_METHODS, default="idft")
    p.add_argument("--oversample", type=_positive_int, default=1, help="IDFT zero-padding factor")
    p.add_argument("--lr-iterations", type=_positive_int, default=20)
    _add_admm(p, default_step=parse_length("1um"))
    support = p.add_mutually_exclusive_group()
    support.add_argument("--auto-support", action="store_true",
                         help="estimate the admm grid extent from the IDFT magnitude")
    support.add_argument("--z-range", nargs=2, type=_length, metavar=("START", "STOP"),
                         help="admm grid extent (default 0 to 1mm)")
    p.add_argument("--lines", type=str, default=None, help="comma list of A-line indices (default all)")

    p = sub.add_parser("bench-wedge", help="air-wedge resolution benchmark")
    _add_source(p)
    _add_out(p)
    p.add_argument("--methods", type=_methods, default=list(RECON_METHODS))
    p.add_argument("--noise", type=_noise, default=0.0, help="'none' or Gaussian sigma")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--lines", type=_positive_int, default=200)
    p.add_argument("--min-sep", type=_length, default=parse_length("0.5um"))
    p.add_argument("--max-sep", type=_length, default=parse_length("15um"))
    p.add_argument("--top", type=_length, default=parse_length("100um"))
    p.add_argument("--bandwidth-fraction", type=float, default=1.0)
    p.add_argument("--lr-iterations", type=_positive_int, default=20)
    p.add_argument("--workers", type=_positive_int, default=1)
    _add_admm(p, default_step=parse_length("0.1um"))

    p = sub.add_parser("dirichlet", help="shift-variant sampling kernel map")
    _add_out(p)
    p.add_argument("--delta-k", type=float, default=2094.1, help="k step in rad/m (default 2094.1)")
    p.add_argument("--k0", type=float, default=None, help="first wavenumber in rad/m (default 2*pi/994nm)")
    p.add_argument("--samples", type=_positive_int, default=2048)
    p.add_argument("--z-start", type=_length, default=parse_length("4.6um"))
    p.add_argument("--z-stop", type=_length, default=parse_length("5.0um"))
    p.add_argument("--z-step", type=_positive_length, default=parse_length("0.1um"))
    p.add_argument("--bins", type=_positive_int, default=16, help="kernel samples written per depth")

    p = sub.add_parser("truncate", help="bandwidth reduction around the spectral centroid")
    _add_source(p)
    _add_out(p)
    p.add_argument("--fractions", type=_fractions, default=[1.0, 0.5, 0.25, 0.125])
    p.add_argument("--input", type=Path, help="spectra file with a reference row to truncate as well")

    p = sub.add_parser("rerun", help="re-execute a manifest and compare output hashes")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="directory for the re-run (default: a temporary directory)")
    return parser


def _source(args):
    k = WavenumberGrid.from_wavelengths(args.lambda_min, args.lambda_max, args.samples)
    if args.fwhm_lambda is not None:
        return gaussian_spectrum(k, args.center, args.fwhm_lambda, args.source_peak)
    target = args.psf_fwhm if args.psf_fwhm is not None else parse_length("3.40um")
    return source_for_fwhm(k, target, args.center, args.source_peak)


def _config(args) -> dict:
    """Computation settings only; output paths are left out so tables are location-independent."""
    skip = {"out", "input", "manifest"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _admm_config(args, grid):
    lam_rel = args.lambda_rel if args.lambda_rel is not None else 0.01
    return AdmmConfig(lam=args.lam, lam_rel=lam_rel, rho=args.rho, alpha=args.alpha,
                      max_iterations=args.max_iterations, recon_grid=grid, nonnegative=args.nonnegative)


def cmd_simulate(args, config):
    if args.max_sep < args.min_sep:
        raise InvalidArgumentError("--max-sep must not be smaller than --min-sep")
    s = _source(args)
    if args.phantom == "wedge":
        lines = args.lines if args.lines > 1 else 200
        spec = AirWedgeSpec(lines, args.min_sep, args.max_sep, args.top)
        z = synthesis_grid(spec, args.synthesis_step * 16)
        profiles = synthesize_air_wedge(spec, z)
    else:
        deepest = args.top + (args.layer_count - 1) * args.layer_spacing
        z = SpatialGrid.covering(0.0, deepest + 20e-6, args.synthesis_step)
        positions = args.top + args.layer_spacing * np.arange(args.layer_count)
        profiles = [ReflectivityProfile.point_reflectors(z, positions, args.reflectivity)
                    for _ in range(args.lines)]
    noise = NoiseModel.gaussian(args.noise, args.seed) if args.noise > 0 else NoiseModel()
    spectra = [simulate_interferogram(p, s, noise.with_seed((args.seed + j) % 2**64))
               for j, p in enumerate(profiles)]
    outputs = {}
    outputs["spectra.octspec"] = oio.save_spectra(args.out / "spectra.octspec", spectra, s, args.encoding)
    rows = []
    for j, p in enumerate(profiles):
        for pos, refl in zip(p.metadata["positions"], p.metadata["reflectivities"]):
            rows.append((j, pos, refl))
    outputs["truth.csv"] = oio.write_table(args.out / "truth.csv", ["line", "z_m", "reflectivity"], rows, config)
    return outputs, f"wrote {len(spectra)} A-lines of {s.k_grid.m_count} samples"


def cmd_psf(args, config):
    s = _source(args)
    rep = psf_report(s, oversample=args.oversample)
    rows = list(zip(rep.offsets, rep.psf / rep.psf.max()))
    outputs = {"psf.csv": oio.write_table(args.out / "psf.csv", ["offset_m", "psf"], rows, config)}
    summary = [("fwhm_m", rep.fwhm), ("peak_position_m", rep.peak_position), ("delta_z_m", rep.delta_z),
               ("idft_step_m", s.k_grid.idft_step), ("imaging_depth_m", s.k_grid.imaging_depth)]
    if args.fwhm_lambda is not None:
        summary.append(("analytic_fwhm_m", gaussian_resolution(args.center, args.fwhm_lambda)))
    outputs["psf_summary.csv"] = oio.write_table(args.out / "psf_summary.csv", ["quantity", "value"], summary, config)
    return outputs, f"fwhm_um={rep.fwhm * 1e6:.4f}"


def _line_selection(text, count):
    if text is None:
        return list(range(count))
    try:
        lines = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidArgumentError(f"--lines must be a comma list of integers, got {text!r}") from None
    if not lines or any(not 0 <= j < count for j in lines):
        raise InvalidArgumentError(f"--lines entries must lie in [0, {count})")
    return lines


def cmd_recon(args, config):
    spectra, reference = oio.load_spectra(args.input)
    lines = _line_selection(args.lines, len(spectra))
    if args.method != "idft" and reference is None:
        raise InvalidArgumentError(f"method {args.method} needs a spectra file with a reference row")
    rows = []
    nonzero = 0
    solver = None
    for j in lines:
        i = spectra[j]
        if args.method == "idft":
            rec = reconstruct_idft(i, oversample=args.oversample)
        elif args.method == "idft-deconv":
            rec = lucy_richardson(reconstruct_idft(i, oversample=args.oversample),
                                  psf_report(reference, oversample=args.oversample), args.lr_iterations)
        else:
            if args.auto_support:
                grid = estimate_support(i, step=args.grid_step)
            else:
                start, stop = args.z_range if args.z_range else (0.0, 1e-3 - args.grid_step)
                if stop <= start:
                    raise InvalidArgumentError("--z-range STOP must exceed START")
                grid = SpatialGrid.covering(start, stop, args.grid_step)
            if solver is None or solver.cfg.recon_grid != grid:
                solver = AdmmSolver(reference, _admm_config(args, grid))
            rec = solver.solve(i)
        nonzero += int(np.count_nonzero(rec.values))
        for z, v in zip(rec.z_grid.values, rec.values):
            rows.append((j, z, float(np.real(v)), float(np.imag(v)), float(abs(v))))
    outputs = {"profile.csv": oio.write_table(
        args.out / "profile.csv", ["line", "z_m", "real", "imag", "magnitude"], rows, config)}
    return outputs, f"reconstructed {len(lines)} A-lines with {args.method}; {nonzero} nonzero samples"


def cmd_bench(args, config):
    if args.max_sep < args.min_sep:
        raise InvalidArgumentError("--max-sep must not be smaller than --min-sep")
    if not 0 < args.bandwidth_fraction <= 1:
        raise InvalidArgumentError("--bandwidth-fraction must lie in (0, 1]")
    s = _source(args)
    spec = AirWedgeSpec(args.lines, args.min_sep, args.max_sep, args.top)
    noise = NoiseModel.gaussian(args.noise, args.seed) if args.noise > 0 else NoiseModel("none", 0.0, args.seed)
    cfg = _admm_config(args, SpatialGrid(0.0, args.grid_step, 1))
    settings = BenchSettings(lr_iterations=args.lr_iterations, bandwidth_fraction=args.bandwidth_fraction)
    reports = resolution_benchmark(spec, s, noise, args.methods, cfg, settings, workers=args.workers)
    outputs = {}
    columns = ["lateral_index", "expected_separation_m", "fitted_separation_m", "relative_error",
               "fit_r_squared", "fit_success"]
    for rep in reports:
        rows = [(m.lateral_index, m.expected_separation, m.fitted_separation, m.relative_error,
                 m.fit_quality, m.fit_success) for m in rep.per_position]
        name = f"resolution_{rep.method}.csv"
        outputs[name] = oio.write_table(args.out / name, columns, rows, config)
    summary = [(r.method, r.resolution) for r in reports]
    outputs["summary.csv"] = oio.write_table(args.out / "summary.csv", ["method", "resolution_m"], summary, config)
    text = ", ".join(f"{r.method}={r.resolution * 1e6:.3f}um" for r in reports)
    return outputs, f"resolution: {text}"


def cmd_dirichlet(args, config):
    if args.z_stop < args.z_start:
        raise InvalidArgumentError("--z-stop must not precede --z-start")
    if not args.delta_k > 0:
        raise InvalidArgumentError("--delta-k must be positive")
    k0 = args.k0 if args.k0 is not None else 2 * math.pi / parse_length("994.0nm")
    k = WavenumberGrid(k0, args.delta_k, args.samples)
    count = int(math.floor((args.z_stop - args.z_start) / args.z_step + 1e-9)) + 1
    z_values = args.z_start + args.z_step * np.arange(count)
    kernel = shift_variance_map(z_values, k)
    bins = min(args.bins, args.samples)
    rows = []
    for z, row in zip(z_values, kernel):
        for m in range(bins):
            rows.append((z, m, m * k.idft_step, row[m], row[m] / row.max()))
    outputs = {"kernel_map.csv": oio.write_table(
        args.out / "kernel_map.csv", ["z_source_m", "bin", "z_prime_m", "magnitude", "normalised"], rows, config)}
    return outputs, f"{count} source depths x {bins} bins"


def cmd_truncate(args, config):
    s = _source(args)
    full = psf_report(s).fwhm
    spectra, reference = ([], None)
    if args.input is not None:
        spectra, reference = oio.load_spectra(args.input)
        if reference is None:
            raise InvalidArgumentError("--input must contain a reference row")
    rows = []
    outputs = {}
    for fraction in args.fractions:
        probe = reference if reference is not None else s
        _, cut = truncate_bandwidth(Interferogram(probe.values, probe.k_grid), probe, fraction)
        fwhm = psf_report(cut).fwhm
        rows.append((fraction, cut.k_grid.m_count, cut.k_grid.lambda_min, cut.k_grid.lambda_max, fwhm, fwhm / full))
        if args.input is not None:
            cut_spectra = [truncate_bandwidth(i, reference, fraction)[0] for i in spectra]
            name = f"truncated_{fraction:g}.octspec"
            outputs[name] = oio.save_spectra(args.out / name, cut_spectra, cut)
    columns = ["fraction", "m_count", "lambda_min_m", "lambda_max_m", "fwhm_m", "fwhm_ratio"]
    outputs["truncation.csv"] = oio.write_table(args.out / "truncation.csv", columns, rows, config)
    text = ", ".join(f"{r[0]:g}:{r[5]:.2f}x" for r in rows)
    return outputs, f"fwhm ratio vs full band: {text}"


COMMANDS = {
    "simulate": cmd_simulate,
    "psf": cmd_psf,
    "recon": cmd_recon,
    "bench-wedge": cmd_bench,
    "dirichlet": cmd_dirichlet,
    "truncate": cmd_truncate,
}


def _replace_out(argv, out):
    argv = list(argv)
    for j, token in enumerate(argv):
        if token == "--out" and j + 1 < len(argv):
            argv[j + 1] = str(out)
            return argv
        if token.startswith("--out="):
            argv[j] = f"--out={out}"
            return argv
    raise InvalidArgumentError("manifest argv has no --out option")


def cmd_rerun(args):
    manifest = oio.read_manifest(args.manifest)
    original = Path(args.manifest).parent
    if args.out is None:
        workdir = Path(tempfile.mkdtemp(prefix="octrecon-rerun-"))
    else:
        workdir = args.out
    argv = _replace_out(manifest["argv"], workdir)
    status = main(argv)
    if status != EXIT_OK:
        return status
    mismatches = []
    for name, digest in manifest["outputs"].items():
        new = oio.file_sha256(workdir / name)
        if new != digest:
            mismatches.append(name)
    report = {"manifest": str(args.manifest), "rerun_dir": str(workdir), "original_dir": str(original),
              "identical": not mismatches, "mismatched": mismatches}
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if not mismatches else EXIT_INTERNAL


def _report_error(kind, message, status):
    record = {"error": kind, "message": message, "exit_status": status}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return status


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _report_error("usage", str(exc), EXIT_USER)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "rerun":
            return cmd_rerun(args)
        config = _config(args)
        outputs, message = COMMANDS[args.command](args, config)
        seed = getattr(args, "seed", None)
        oio.write_manifest(args.out / "manifest.json", args.command, argv, config, seed, outputs)
        print(message)
        return EXIT_OK
    except (OctReconError, ValueError) as exc:
        return _report_error(type(exc).__name__, str(exc), EXIT_USER)
    except OSError as exc:
        return _report_error(type(exc).__name__, str(exc), EXIT_USER)
    except Exception as exc:  # noqa: BLE001
        return _report_error(type(exc).__name__, f"internal error: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
