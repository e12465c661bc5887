"""Command-line harness: synth / solve / phase / landscape / deblur.

Every subcommand reads defaults, then an optional JSON config file
(--config), then explicit flags, in increasing precedence.  Config keys
use the long flag names with underscores (e.g. {"max_iters": 500,
"precondition": false}).  Errors exit nonzero after printing a single
machine-parseable line "error: <message>" to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import harness, imaging, landscape
from .circulant import Filter
from .errors import MsbdError, ParameterError
from .losses import LossConfig, build_preconditioner, default_mu
from .metrics import normalized_error, shift_sign_distance, success_indicator
from .signals import (
    generate_observations,
    load_observations,
    sample_bernoulli_gaussian,
    save_observations,
    synthesize_filter,
)
from .solver import DeadlineExceeded, SolverConfig, run_with_restarts

SOLVER_KEYS = (
    "mu",
    "eta",
    "max_iters",
    "restarts",
    "loss",
    "precondition",
    "seed",
)


def _solver_config(params, theta) -> SolverConfig:
    return SolverConfig(
        eta=params.get("eta", 0.1),
        max_iters=params.get("max_iters", 200),
        mu=params.get("mu"),
        theta=theta,
        restarts=params.get("restarts"),
        tol=params.get("tol", 1e-8),
        loss_kind=params.get("loss", "logcosh"),
        use_preconditioner=params.get("precondition", True),
        seed=params.get("seed", 0),
    )


def _merged(args, defaults):
    """defaults <- config file <- explicit flags, raising on unknown keys."""
    params = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ParameterError(f"config {config_path} must hold a JSON object")
        for key, value in loaded.items():
            if key not in params:
                raise ParameterError(f"unknown config key {key!r}")
            params[key] = value
    for key in params:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            params[key] = value
    if getattr(args, "no_precondition", False):
        params["precondition"] = False
    return params


def _add_solver_flags(sub):
    sub.add_argument("--mu", type=float, help="surrogate smoothing width")
    sub.add_argument("--eta", type=float, help="step size")
    sub.add_argument("--max-iters", dest="max_iters", type=int, help="iteration cap")
    sub.add_argument("--restarts", type=int, help="random restarts (default ceil(3 log n))")
    sub.add_argument("--loss", choices=("logcosh", "l4"), help="objective")
    sub.add_argument(
        "--no-precondition",
        dest="no_precondition",
        action="store_true",
        help="skip the spectral preconditioner",
    )
    sub.add_argument("--budget-s", dest="budget_s", type=float, help="per-trial wall budget")


def _add_common(sub):
    sub.add_argument("--n", type=int, help="signal length")
    sub.add_argument("--p", type=int, help="number of observations")
    sub.add_argument("--theta", type=float, help="activation probability")
    sub.add_argument("--kappa", type=float, help="filter condition number")
    sub.add_argument("--seed", type=int, help="base seed")
    sub.add_argument("--config", help="JSON config file")


SYNTH_DEFAULTS = {
    "n": 64,
    "p": 256,
    "theta": 0.3,
    "kappa": 1.0,
    "seed": 0,
    "noise_sigma": 0.0,
}


def _cmd_synth(args):
    params = _merged(args, SYNTH_DEFAULTS)
    if not args.out:
        raise ParameterError("synth needs --out <file> for the observations")
    g = synthesize_filter(params["n"], params["kappa"], params["seed"])
    X = sample_bernoulli_gaussian(params["n"], params["p"], params["theta"], params["seed"])
    obs = generate_observations(g, X, params["noise_sigma"])
    save_observations(obs, args.out)
    print(f"wrote {args.out} n={obs.n} p={obs.p} theta={params['theta']:g} seed={params['seed']}")
    return 0


SOLVE_DEFAULTS = {
    "n": 64,
    "p": 256,
    "theta": 0.3,
    "kappa": 1.0,
    "seed": 0,
    "mu": None,
    "eta": 0.1,
    "max_iters": 200,
    "restarts": None,
    "loss": "logcosh",
    "precondition": True,
    "tol": 1e-8,
    "budget_s": 60.0,
}


def _cmd_solve(args):
    params = _merged(args, SOLVE_DEFAULTS)
    g_true = None
    if args.data:
        obs, meta = load_observations(args.data)
        theta = params["theta"] if args.theta is not None else meta["theta"]
        if not (0.0 < theta < 1.0) or math.isnan(theta):
            raise ParameterError("observations carry no theta; pass --theta")
    else:
        g_true = synthesize_filter(params["n"], params["kappa"], params["seed"])
        X = sample_bernoulli_gaussian(params["n"], params["p"], params["theta"], params["seed"])
        obs = generate_observations(g_true, X)
        theta = params["theta"]

    cfg = _solver_config(params, theta)
    deadline = time.monotonic() + params["budget_s"] if params["budget_s"] else None
    result = run_with_restarts(obs, cfg, g_true=g_true, deadline=deadline)
    print(f"loss={result.final_loss:.17g}")
    print(f"iterations={result.iterations_used}")
    print(f"restart={result.restart_index}")
    print(f"converged={str(result.converged).lower()}")
    if g_true is not None:
        from .circulant import inverse_filter

        report = shift_sign_distance(result.g_inv_hat, inverse_filter(g_true).coeffs)
        ok, score = success_indicator(result.g_inv_hat, g_true)
        R = build_preconditioner(obs, theta) if cfg.use_preconditioner else None
        err = normalized_error(result.h_final, R, g_true)
        print(f"distance={report.distance:.17g}")
        print(f"shift={report.best_shift}")
        print(f"sign={report.best_sign:+d}")
        print(f"peak_ratio={report.peak_ratio:.17g}")
        print(f"success={str(ok).lower()}")
        print(f"score={score:.17g}")
        print(f"normalized_error={err:.17g}")
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write("g_inv_hat\n")
            for v in result.g_inv_hat:
                fh.write(f"{v:.17g}\n")
        print(f"wrote {args.out}")
    return 0


PHASE_DEFAULTS = {
    "n": 32,
    "p": 256,
    "theta": 0.2,
    "kappa": 1.0,
    "seed": 0,
    "trials": 10,
    "mu": None,
    "eta": 0.1,
    "max_iters": 200,
    "restarts": None,
    "loss": "logcosh",
    "precondition": True,
    "tol": 1e-8,
    "budget_s": 60.0,
    "workers": 1,
}


def _parse_grid(specs):
    axes = {}
    for spec in specs or ():
        if "=" not in spec:
            raise ParameterError(f"grid spec {spec!r} is not axis=v1,v2,...")
        name, _, values = spec.partition("=")
        name = name.strip()
        try:
            parsed = [float(v) for v in values.split(",") if v.strip()]
        except ValueError as exc:
            raise ParameterError(f"grid spec {spec!r}: {exc}") from exc
        if name in ("n", "p"):
            parsed = [int(v) for v in parsed]
        axes[name] = parsed
    return axes


def _cmd_phase(args):
    params = _merged(args, PHASE_DEFAULTS)
    if not args.out:
        raise ParameterError("phase needs --out <csv>")
    axes = _parse_grid(args.grid)
    if len(axes) != 2:
        raise ParameterError(f"exactly two --grid axes required, got {len(axes)}")
    fixed = {
        name: params[name]
        for name in harness.AXIS_NAMES
        if name not in axes
    }
    solver = _solver_config(params, theta=params["theta"])
    grid = harness.ExperimentGrid(
        axes=axes,
        fixed=fixed,
        trials_per_cell=params["trials"],
        base_seed=params["seed"],
        solver=solver,
    )
    table = harness.run_phase_grid(
        grid,
        workers=int(params["workers"]),
        budget_s=params["budget_s"],
    )
    harness.emit_results(table, args.out, include_timing=args.emit_timing)
    harness.print_timing_summary(table)
    print(f"wrote {args.out} rows={len(table.rows)}")
    return 0


LANDSCAPE_DEFAULTS = {
    "n": 3,
    "p": 30,
    "theta": 0.3,
    "kappa": 1.0,
    "seed": 0,
    "mu": None,
    "xi0": None,
    "samples": 200,
    "grid_size": 60,
    "precondition": True,
}


def _landscape_instance(params):
    """Observations and preconditioner for surface export (kappa=1 -> identity filter)."""
    n, p = params["n"], params["p"]
    X = sample_bernoulli_gaussian(n, p, params["theta"], params["seed"])
    if params["kappa"] == 1.0:
        e1 = np.zeros(n)
        e1[0] = 1.0
        return generate_observations(Filter(e1), X), None
    g = synthesize_filter(n, params["kappa"], params["seed"])
    obs = generate_observations(g, X)
    R = build_preconditioner(obs, params["theta"]) if params["precondition"] else None
    return obs, R


def _cmd_landscape(args):
    params = _merged(args, LANDSCAPE_DEFAULTS)
    mu = params["mu"] if params["mu"] is not None else default_mu(params["n"])
    if args.mode == "surface":
        if not args.out:
            raise ParameterError("landscape surface needs --out <csv>")
        obs, R = _landscape_instance(params)
        cfg = LossConfig(mu=mu, theta=params["theta"])
        rows = landscape.export_sphere_surface(obs, R, cfg, params["grid_size"])
        landscape.write_surface_csv(rows, args.out)
        print(f"wrote {args.out} rows={rows.shape[0]}")
        return 0

    xi0 = params["xi0"]
    if xi0 is None:
        xi0 = 1.0 / (4.0 * math.log(params["n"]))
    annulus, core = landscape.verify_geometry(
        params["n"],
        params["p"],
        params["theta"],
        params["kappa"],
        xi0,
        mu,
        params["samples"],
        params["seed"],
    )
    for report in (annulus, core):
        print(
            f"region={report.region} samples={report.samples} "
            f"min_directional_gradient={report.min_directional_gradient:.17g} "
            f"min_hessian_eig={report.min_hessian_eig:.17g} "
            f"violations={report.violations}"
        )
    return 0


DEBLUR_DEFAULTS = {
    "p": 200,
    "theta": 0.1,
    "seed": 0,
    "mu": None,
    "eta": 0.1,
    "max_iters": 200,
    "restarts": 4,
    "loss": "logcosh",
    "precondition": True,
    "tol": 1e-8,
    "budget_s": 300.0,
    "height": None,
    "width": None,
}


def _cmd_deblur(args):
    params = _merged(args, DEBLUR_DEFAULTS)
    if not args.image:
        raise ParameterError("deblur needs --image <png>")
    if not args.out:
        raise ParameterError("deblur needs --out <png>")
    img = imaging.read_image(args.image)
    if params["height"] and params["width"]:
        from PIL import Image

        data = np.clip(img, 0.0, 1.0)
        pil = Image.fromarray(np.round(data * 255.0).astype(np.uint8))
        pil = pil.resize((int(params["width"]), int(params["height"])))
        img = np.asarray(pil, dtype=np.float64) / 255.0
    if args.mono and img.ndim == 3:
        img = img.mean(axis=2)

    shape = img.shape[:2]
    if args.kernels_dir:
        files = sorted(
            os.path.join(args.kernels_dir, f)
            for f in os.listdir(args.kernels_dir)
            if f.lower().endswith(".png")
        )
        if not files:
            raise ParameterError(f"no PNG kernels in {args.kernels_dir}")
        planes = [imaging.kernel_ingest(f, shape).pixels for f in files]
        kernels = imaging.KernelStack(np.stack(planes), mode="normalized")
    else:
        kernels = imaging.sample_bg_kernel_stack(
            shape[0], shape[1], params["p"], params["theta"], params["seed"]
        )

    if img.ndim == 2:
        channels = {"mono": [imaging.ImagePlane(b) for b in imaging.blur_stack(img, kernels)]}
        truth = {"mono": img}
    else:
        names = ("R", "G", "B")
        channels = {}
        truth = {}
        for c, name in enumerate(names):
            blurred = imaging.blur_stack(img[:, :, c], kernels)
            channels[name] = [imaging.ImagePlane(b, channel=name) for b in blurred]
            truth[name] = img[:, :, c]

    cfg = SolverConfig(
        eta=params["eta"],
        max_iters=params["max_iters"],
        mu=params["mu"],
        theta=params["theta"],
        restarts=params["restarts"],
        loss_kind=params["loss"],
        use_preconditioner=params["precondition"],
        seed=params["seed"],
        tol=params["tol"],
    )
    deadline = time.monotonic() + params["budget_s"] if params["budget_s"] else None
    result = imaging.deblur_channels(channels, cfg, deadline=deadline)
    for name in channels:
        print(
            f"channel={name} loss={result.final_losses[name]:.17g} "
            f"iterations={result.iterations[name]} shift={result.shifts[name]} "
            f"sign={result.signs[name]:+d}"
        )
    reference = np.sum([truth[name] for name in channels], axis=0)
    err = imaging.aligned_relative_error(result.recovered, reference)
    print(f"aligned_relative_error={err:.17g}")

    out = result.recovered.pixels
    lo, hi = float(out.min()), float(out.max())
    scaled = (out - lo) / (hi - lo) if hi > lo else np.zeros_like(out)
    imaging.write_image(args.out, scaled)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msbd",
        description="Multichannel sparse blind deconvolution experiments",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate and save synthetic observations")
    _add_common(synth)
    synth.add_argument("--noise-sigma", dest="noise_sigma", type=float, help="additive noise level")
    synth.add_argument("--out", help="observations CSV path")
    synth.set_defaults(func=_cmd_synth)

    solve = subs.add_parser("solve", help="recover one instance and report metrics")
    _add_common(solve)
    _add_solver_flags(solve)
    solve.add_argument("--data", help="solve saved observations instead of synthesizing")
    solve.add_argument("--out", help="write the recovered equalizer as CSV")
    solve.set_defaults(func=_cmd_solve)

    phase = subs.add_parser("phase", help="Monte Carlo success-rate grid")
    _add_common(phase)
    _add_solver_flags(phase)
    phase.add_argument("--grid", action="append", help="axis=v1,v2,... (exactly two)")
    phase.add_argument("--trials", type=int, help="trials per cell")
    phase.add_argument("--workers", type=int, help="parallel worker processes")
    phase.add_argument(
        "--emit-timing",
        dest="emit_timing",
        action="store_true",
        help="write measured runtimes (breaks byte reproducibility)",
    )
    phase.add_argument("--out", help="results CSV path")
    phase.set_defaults(func=_cmd_phase)

    land = subs.add_parser("landscape", help="surface export / geometry verification")
    land.add_argument("mode", choices=("surface", "verify"))
    _add_common(land)
    land.add_argument("--mu", type=float, help="surrogate smoothing width")
    land.add_argument("--xi0", type=float, help="basin margin")
    land.add_argument("--samples", type=int, help="draws per region")
    land.add_argument("--grid-size", dest="grid_size", type=int, help="surface lattice size")
    land.add_argument(
        "--no-precondition",
        dest="no_precondition",
        action="store_true",
        help="skip the spectral preconditioner",
    )
    land.add_argument("--out", help="surface CSV path")
    land.set_defaults(func=_cmd_landscape)

    deblur = subs.add_parser("deblur", help="blind image deblurring demo")
    deblur.add_argument("--image", help="ground-truth PNG to blur and recover")
    deblur.add_argument("--kernels-dir", dest="kernels_dir", help="directory of PNG blur kernels")
    deblur.add_argument("--p", type=int, help="number of blurred observations")
    deblur.add_argument("--theta", type=float, help="kernel sparsity")
    deblur.add_argument("--seed", type=int, help="base seed")
    deblur.add_argument("--height", type=int, help="canvas height (resize)")
    deblur.add_argument("--width", type=int, help="canvas width (resize)")
    deblur.add_argument("--mono", action="store_true", help="collapse to grayscale")
    deblur.add_argument("--config", help="JSON config file")
    _add_solver_flags(deblur)
    deblur.add_argument("--out", help="recovered PNG path")
    deblur.set_defaults(func=_cmd_deblur)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DeadlineExceeded:
        print("error: wall-clock budget exceeded", file=sys.stderr)
        return 3
    except MsbdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
