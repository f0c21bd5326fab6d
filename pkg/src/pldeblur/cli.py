"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 I/O or argument error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from itertools import product
from pathlib import Path

import numpy as np

from . import dataio, metrics, solvers
from ._backend import BACKEND
from .core import DenoiserSpec, SolverConfig, validate
from .linops import circ_convolve, wiener_init
from .unrolled import CORRUPTIONS, UnrolledParams, grad_check

log = logging.getLogger("pldeblur")

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2
METHODS = ("pnp3", "pnp2", "rl", "wiener")
IMAGE_SUFFIXES = {".pgm", ".pldf"}
CSV_FIELDS = ["image", "kernel", "alpha", "method", "psnr", "ssim", "iters", "seconds"]
SUMMARY_FIELDS = ["kernel", "alpha", "method", "n", "psnr_mean", "ssim_mean", "iters_mean", "seconds_mean"]


class CliError(Exception):
    """I/O or argument problem (exit code 2)."""


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def sidecar_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".json")


def _kernel(text):
    try:
        return dataio.parse_kernel_spec(text)
    except OSError as exc:
        raise CliError(f"cannot read kernel {text}: {exc}") from None


def _load(path, **kw):
    try:
        return dataio.load_image(path, **kw)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None


def _rho(text, alpha):
    if text in (None, "auto"):
        rho = solvers.default_rho_init(alpha)
        log.info("rho0=%g (table default for alpha=%g)", rho, alpha)
        return rho
    return float(text)


def reconstruct(method, y, kernel, alpha, denoiser, iters, rho, pad):
    """Run one method, optionally on a reflect-padded copy; returns (image, report dict)."""
    height, width = y.shape
    if pad == "reflect":
        y = dataio.reflect_pad(y)
    if method == "wiener":
        out = wiener_init(y, kernel, alpha)
        report = {"iters": 0, "terminated_by": "max_iters", "delta_history": [], "data_term_history": []}
    elif method == "rl":
        run = solvers.richardson_lucy_run(y, kernel, alpha, 50 if iters is None else iters)
        out, report = run.final, run.summary()
    else:
        cfg = SolverConfig(alpha=alpha, rho1_init=rho, rho2_init=rho, denoiser=denoiser,
                           max_iters=150 if iters is None else iters)
        run = (solvers.pnp3_run if method == "pnp3" else solvers.pnp2_run)(y, kernel, cfg)
        out, report = run.final, run.summary()
    report["rho0"] = rho
    if pad == "reflect":
        out = dataio.center_crop(out, width, height)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{method} produced non-finite values")
    return out, report


def cmd_simulate(args):
    x = _load(args.input).data
    problems = validate(x)
    if problems:
        raise CliError(f"{args.input}: scene image violates {problems}")
    kernel = _kernel(args.kernel)
    y = dataio.poisson_forward(x, kernel, args.alpha, args.seed)
    dataio.save_float(args.out, y)
    write_json(sidecar_path(args.out), {
        "alpha": args.alpha,
        "kernel": args.kernel,
        "kernel_hash": dataio.kernel_hash(kernel),
        "seed": args.seed,
        "input": str(args.input),
        "backend": BACKEND,
    })
    log.info("wrote %s (mean count %.4g)", args.out, y.mean())
    return EXIT_OK


def cmd_deblur(args):
    y = _load(args.input).data
    kernel = _kernel(args.kernel)
    denoiser = DenoiserSpec.parse(args.denoiser)
    rho = _rho(args.rho, args.alpha)
    start = time.perf_counter()
    out, report = reconstruct(args.method, y, kernel, args.alpha, denoiser, args.iters, rho, args.pad)
    report.update({
        "method": args.method,
        "alpha": args.alpha,
        "denoiser": str(denoiser),
        "pad": args.pad,
        "kernel_hash": dataio.kernel_hash(kernel),
        "wall_time_s": time.perf_counter() - start,
    })
    dataio.save_image(args.out, out)
    write_json(sidecar_path(args.out), report)
    log.info("%s: %d iterations", args.method, report["iters"])
    return EXIT_OK


def _list_images(corpus):
    corpus = Path(corpus)
    if not corpus.is_dir():
        raise CliError(f"corpus directory {corpus} not found")
    return sorted(p for p in corpus.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _list_kernels(spec):
    path = Path(spec)
    if path.is_dir():
        return [(p.name, dataio.load_kernel(p)) for p in sorted(path.iterdir()) if p.is_file()]
    return [(s, _kernel(s)) for s in spec.split(";") if s]


def summarize(rows):
    cells = {}
    for row in rows:
        cells.setdefault((row["kernel"], row["alpha"], row["method"]), []).append(row)
    out = []
    for (kernel, alpha, method), group in cells.items():
        out.append({
            "kernel": kernel, "alpha": alpha, "method": method, "n": len(group),
            **{f"{k}_mean": float(np.mean([r[k] for r in group])) for k in ("psnr", "ssim", "iters", "seconds")},
        })
    return out


def cmd_benchmark(args):
    images = _list_images(args.corpus)
    kernels = _list_kernels(args.kernels)
    alphas = [float(a) for a in args.alphas.split(",") if a]
    methods = [m for m in args.methods.split(",") if m]
    bad = set(methods) - set(METHODS)
    if bad:
        raise CliError(f"unknown methods {sorted(bad)}")
    denoiser = DenoiserSpec.parse(args.denoiser)
    rows = []
    for img_path, (kname, kernel), alpha in product(images, kernels, alphas):
        x = np.clip(_load(img_path).data, 0.0, 1.0)
        y = dataio.poisson_forward(x, kernel, alpha, args.seed)
        for method in methods:
            start = time.perf_counter()
            out, report = reconstruct(method, y, kernel, alpha, denoiser, args.iters,
                                      _rho(args.rho, alpha), args.pad)
            rows.append({
                "image": img_path.name, "kernel": kname, "alpha": alpha, "method": method,
                "psnr": metrics.psnr(out, x), "ssim": metrics.ssim(out, x),
                "iters": report["iters"], "seconds": time.perf_counter() - start,
            })
            log.info("%s %s alpha=%g %s: %.2f dB", img_path.name, kname, alpha, method, rows[-1]["psnr"])
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    out = Path(args.out)
    with open(out.with_name(out.stem + "_summary.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        writer.writerows(summarize(rows))
    return EXIT_OK


def gradcheck_problem(seed, size, K):
    """Seeded smooth test scene, Gaussian blur, counts at alpha=20 and randomized params."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:size, :size] / size
    x = 0.5 + 0.25 * np.sin(2 * np.pi * (xx * rng.uniform(1, 2) + yy * rng.uniform(0, 1)))
    x = np.clip(x + 0.2 * (yy > rng.uniform(0.3, 0.7)), 0.0, 1.0)
    kernel = dataio.gaussian_kernel(5, 1.0)
    alpha = 20.0
    y = dataio.poisson_forward(x, kernel, alpha, seed)
    params = UnrolledParams(rng.uniform(2, 20, K), rng.uniform(2, 20, K), rng.uniform(0.3, 0.9, K))
    return y, kernel, alpha, params, x


def cmd_gradcheck(args):
    y, kernel, alpha, params, xref = gradcheck_problem(args.seed, args.size, args.k)
    report = grad_check(y, kernel, alpha, params, xref, corrupt=args.corrupt_adjoint)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_raw_convert(args):
    try:
        frame = dataio.load_raw(args.raw, args.meta)
    except OSError as exc:
        raise CliError(f"cannot read raw frame: {exc}") from None
    y = dataio.raw_to_photons(frame)
    dataio.save_float(args.out, y)
    meta = {"black_level": frame.black_level, "gain": frame.gain, "mean_photons": float(y.mean())}
    if args.estimate_alpha:
        alpha = dataio.estimate_alpha(y, args.beta)
        meta["alpha"] = alpha
        meta["beta"] = args.beta
        print(f"{alpha:.1f}")
    write_json(sidecar_path(args.out), meta)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pldeblur", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="blur a scene and draw Poisson counts")
    p.add_argument("--input", required=True)
    p.add_argument("--kernel", required=True, help="kernel file or gauss:size,sx,sy,theta")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("deblur", help="reconstruct a scene from photon counts")
    p.add_argument("--method", choices=METHODS, default="pnp3")
    p.add_argument("--input", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--denoiser", default="tv:0.01")
    p.add_argument("--iters", type=int)
    p.add_argument("--rho", default="auto")
    p.add_argument("--pad", choices=("reflect", "none"), default="none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("benchmark", help="PSNR/SSIM table over images, kernels, photon levels and methods")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kernels", required=True, help="directory of kernel files or ';'-separated specs")
    p.add_argument("--alphas", default="5,10,20,40")
    p.add_argument("--methods", default="pnp3,rl,wiener")
    p.add_argument("--denoiser", default="tv:0.01")
    p.add_argument("--iters", type=int)
    p.add_argument("--rho", default="auto")
    p.add_argument("--pad", choices=("reflect", "none"), default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gradcheck", help="finite-difference check of the unrolled gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--corrupt-adjoint", choices=CORRUPTIONS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("raw-convert", help="convert a raw frame to photon counts")
    p.add_argument("--raw", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--estimate-alpha", action="store_true")
    p.add_argument("--beta", type=float, default=0.33)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_raw_convert)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, OSError, dataio.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
