"""Command-line front end.

Exit codes: 0 success, 2 input or contract error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    DEFAULT_STAGES,
    SpectrumCurve,
    divergence_error,
    energy_spectrum,
    enstrophy_spectrum,
    spectral_slope,
    stage_report,
)
from .flowmatch import PathSpec, conditional_velocity, fm_loss, interpolate
from .hodge import distance_to_solenoidal, leray_project_array
from .io import FloFormatError, read_flo, write_flo, write_manifest
from .noise import GrfSpec, StreamNoiseSpec, central_difference_divergence, divfree_noise_array, frame_rng, split_seed
from .solver import DEFAULT_FORCING_AMPLITUDE, SolverConfig, UnstableStep, simulate
from .spectral import Grid, VectorField2

log = logging.getLogger("divfree")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class InputError(Exception):
    pass


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("DIVFREE_THREADS", "1")))


def _grid_of(arr: np.ndarray) -> Grid:
    _, c, h, w = arr.shape
    if c != 2:
        raise InputError(f"expected 2 velocity channels, file has C = {c}")
    return Grid(w, h)


def _load(path) -> np.ndarray:
    try:
        return read_flo(path)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from exc


def _trajectory_path(out: Path, index: int, count: int) -> Path:
    if count == 1:
        return out
    return out.with_name(f"{out.stem}_{index:04d}{out.suffix}")


# ---------------------------------------------------------------------------
# simulate


def _run_trajectory(args, index: int):
    seed = split_seed(args.seed, index)
    phase = args.forcing_phase
    if args.random_phase:
        phase = float(2 * np.pi * frame_rng(seed, 1).random())
    config = SolverConfig(
        nu=args.nu,
        dt=args.dt,
        record_every=args.record_every,
        snapshots=args.snapshots,
        forcing_amplitude=args.forcing_amplitude,
        forcing_phase=phase,
        grid=Grid(args.grid, args.grid),
        seed=seed,
        init=GrfSpec(alpha=args.alpha, tau=args.tau, seed=seed, amplitude=args.amplitude),
    )
    return config, simulate(config).to_array()


def cmd_simulate(args) -> int:
    out = Path(args.out)
    n = args.trajectories
    try:
        with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
            results = list(pool.map(lambda i: _run_trajectory(args, i), range(n)))
    except UnstableStep as exc:
        print(f"error: unstable step at index {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for i, (config, arr) in enumerate(results):
        path = _trajectory_path(out, i, n)
        checksum = write_flo(path, arr)
        cfg = asdict(config)
        write_manifest(
            path,
            cfg,
            config.seed,
            checksum,
            command="simulate",
            base_seed=args.seed,
            trajectory_index=i,
            seed_split="SeedSequence(base_seed, spawn_key=(index,)).generate_state(1, uint64)",
            frame_divergence_error=[divergence_error(VectorField2.from_array(config.grid, f)) for f in arr],
        )
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# project


def cmd_project(args) -> int:
    arr = _load(args.inp)
    grid = _grid_of(arr)
    out = leray_project_array(arr, grid)
    pre = [divergence_error(VectorField2.from_array(grid, f)) for f in arr]
    post = [divergence_error(VectorField2.from_array(grid, f)) for f in out]
    checksum = write_flo(args.out, out)
    write_manifest(
        args.out,
        {"input": str(args.inp)},
        None,
        checksum,
        command="project",
        divergence_error_pre=pre,
        divergence_error_post=post,
    )
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# noise


def cmd_noise(args) -> int:
    mode = {"spectral": "spectral", "fd": "finite_difference"}[args.mode]
    grid = Grid(args.grid, args.grid)
    spec = StreamNoiseSpec(
        mode=mode, grf=GrfSpec(alpha=args.alpha, tau=args.tau, seed=args.seed), blur_sigma=args.blur_sigma
    )
    arr = divfree_noise_array(spec, grid, args.frames, args.first_frame)
    extra = {"divergence_error": [divergence_error(VectorField2.from_array(grid, f)) for f in arr]}
    if mode == "finite_difference":
        cd = central_difference_divergence(arr, grid)
        extra["central_difference_divergence_error"] = [float(np.mean(d**2)) for d in cd]
    checksum = write_flo(args.out, arr)
    cfg = asdict(spec)
    cfg.update(grid=asdict(grid), frames=args.frames, first_frame=args.first_frame)
    write_manifest(args.out, cfg, args.seed, checksum, command="noise", **extra)
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def parse_stages(text: str) -> list[tuple[int, int]]:
    stages = []
    for part in text.split(","):
        try:
            a, b = (int(s) for s in part.split(":"))
        except ValueError as exc:
            raise InputError(f"bad stage {part!r}; expected start:end") from exc
        stages.append((a, b))
    return stages


EVAL_COLUMNS = ["stage", "u_mse", "v_mse", "div_mse", "u_mse_std", "v_mse_std", "div_mse_std"]


def cmd_eval(args) -> int:
    pred, ref = _load(args.pred), _load(args.ref)
    if pred.shape != ref.shape:
        raise InputError(f"shape mismatch: pred {pred.shape} vs ref {ref.shape}")
    grid = _grid_of(pred)
    T = pred.shape[0]
    if args.stages is None:
        stages = {k: v for k, v in DEFAULT_STAGES.items() if v[1] < T} or {f"0:{T - 1}": (0, T - 1)}
    else:
        stages = parse_stages(args.stages)
        for a, b in stages:
            if not 0 <= a <= b < T:
                raise InputError(f"stage {a}:{b} outside frames 0..{T - 1}")
    pf = [VectorField2.from_array(grid, f) for f in pred]
    rf = [VectorField2.from_array(grid, f) for f in ref]
    reports = stage_report(pf, rf, stages)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVAL_COLUMNS)
        for r in reports:
            w.writerow([r.stage] + [repr(getattr(r, c)) for c in EVAL_COLUMNS[1:]])
    frames_out = out.with_name(f"{out.stem}_frames{out.suffix}")
    with frames_out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "frame", "metric", "value"])
        for r in reports:
            for metric, series in r.series.items():
                for i, val in zip(r.frames, series):
                    w.writerow([r.stage, int(i), metric, repr(float(val))])
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# spectrum


def parse_fit(text: str) -> tuple[int, int]:
    try:
        a, b = (int(s) for s in text.split(":"))
    except ValueError as exc:
        raise InputError(f"bad fit range {text!r}; expected kmin:kmax") from exc
    return a, b


def write_spectrum_csv(path, curve: SpectrumCurve, fit: tuple[int, int] | None) -> float | None:
    """Write ``shell,value`` rows and a trailing ``# slope=...`` comment; return the slope."""
    slope = None
    note = ""
    if fit is not None:
        try:
            slope = spectral_slope(curve, *fit)
        except ValueError as exc:
            note = f" note={exc}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shell", "value"])
        for k, v in zip(curve.shells, curve.values):
            w.writerow([int(k), repr(float(v))])
        if fit is not None:
            s = "nan" if slope is None else repr(slope)
            fh.write(f"# slope={s} fit={fit[0]}:{fit[1]} kind={curve.kind}{note}\n")
    return slope


def cmd_spectrum(args) -> int:
    arr = _load(args.inp)
    grid = _grid_of(arr)
    T = arr.shape[0]
    frame = args.frame if args.frame >= 0 else T + args.frame
    if not 0 <= frame < T:
        raise InputError(f"frame {args.frame} out of range for {T} frames")
    u = VectorField2.from_array(grid, arr[frame])
    curve = enstrophy_spectrum(u) if args.kind == "enstrophy" else energy_spectrum(u)
    fit = parse_fit(args.fit) if args.fit else None
    slope = write_spectrum_csv(args.out, curve, fit)
    if slope is not None:
        log.info("fitted slope %.4f over shells %s", slope, args.fit)
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fm-probe


def _truth_model(spec: PathSpec):
    def model(x, tau, cond):
        u0, y = cond
        return conditional_velocity(spec, x, y, tau, u0=u0 if spec.kind == "linear" else None)

    return model


def _zero_model(x, tau, cond):
    return VectorField2.zeros(x.grid)


def cmd_fm_probe(args) -> int:
    arr = _load(args.data)
    grid = _grid_of(arr)
    data = [VectorField2.from_array(grid, f) for f in arr]
    for i, y in enumerate(data):
        d = distance_to_solenoidal(y)
        if d > 1e-6:
            raise InputError(f"frame {i} is not solenoidal (||u - Pu||/||u|| = {d:.2e} > 1e-6)")
    spec = PathSpec(kind="linear" if args.path == "linear" else "affine_sigma", sigma_min=args.sigma_min)
    noise = StreamNoiseSpec(grf=GrfSpec(alpha=args.alpha, tau=args.tau, seed=args.seed))
    u0s = [VectorField2.from_array(grid, a) for a in divfree_noise_array(noise, grid, len(data))]
    taus = np.linspace(0.0, 1.0, args.tau_samples)
    truth = _truth_model(spec)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "interp_div_error", "loss_at_truth", "loss_at_zero"])
        for tau in taus:
            tau = float(tau)
            pairs = [(u0, y, tau, (u0, y)) for u0, y in zip(u0s, data)]
            div = np.mean([divergence_error(interpolate(spec, u0, y, tau)) for u0, y in zip(u0s, data)])
            w.writerow([repr(tau), repr(float(div)), repr(fm_loss(truth, spec, pairs)), repr(fm_loss(_zero_model, spec, pairs))])
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divfree", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"divfree {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate Navier-Stokes trajectories")
    s.add_argument("--nu", type=float, default=1e-3)
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--record-every", type=int, default=1000)
    s.add_argument("--snapshots", type=int, default=50)
    s.add_argument("--alpha", type=float, default=2.5)
    s.add_argument("--tau", type=float, default=7.0)
    s.add_argument("--amplitude", type=float, default=None, help="GRF amplitude (default tau**(alpha-1))")
    s.add_argument("--forcing-amplitude", type=float, default=DEFAULT_FORCING_AMPLITUDE)
    s.add_argument("--forcing-phase", type=float, default=0.0)
    s.add_argument("--random-phase", action="store_true", help="draw a phase per trajectory from its seed")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trajectories", type=int, default=1)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("project", help="Leray-project every frame of a file")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("noise", help="sample divergence-free Gaussian noise")
    s.add_argument("--mode", choices=["spectral", "fd"], default="spectral")
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--frames", type=int, default=1)
    s.add_argument("--first-frame", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--blur-sigma", type=float, default=2.0)
    s.add_argument("--alpha", type=float, default=2.5)
    s.add_argument("--tau", type=float, default=7.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_noise)

    s = sub.add_parser("eval", help="staged MSE / divergence metrics")
    s.add_argument("--pred", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--stages", default=None, help='e.g. "15:49,50:100,101:300" (inclusive)')
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("spectrum", help="shell-binned enstrophy or energy spectrum")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--frame", type=int, default=-1)
    s.add_argument("--kind", choices=["enstrophy", "energy"], default="enstrophy")
    s.add_argument("--fit", default="4:16")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("fm-probe", help="flow-matching loss and interpolant audit")
    s.add_argument("--data", required=True)
    s.add_argument("--path", choices=["linear", "affine"], default="affine")
    s.add_argument("--sigma-min", type=float, default=1e-4)
    s.add_argument("--tau-samples", type=int, default=11)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--alpha", type=float, default=2.5)
    s.add_argument("--tau", type=float, default=7.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fm_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, FloFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnstableStep as exc:
        print(f"error: unstable step at index {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
