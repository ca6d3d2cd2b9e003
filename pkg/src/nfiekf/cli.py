"""Command-line entry point: Monte-Carlo benchmarks and single-run demos.

Outputs are plain CSV plus a JSON manifest; identical config and seed give
byte-identical files. Config files are JSON objects mirroring the SimConfig
fields, with an optional "profile" key holding [time, length] knots.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .sim import (
    FILTER_NAMES,
    BenchmarkResult,
    CableProfile,
    SimConfig,
    draw_initial_error,
    run_benchmark,
    run_single,
    simulate_truth,
    steps_to_threshold,
    synthesize_imu,
)


class ConfigError(Exception):
    """Malformed configuration or flags; rendered with file/line context."""


def _fmt(x: float) -> str:
    return repr(float(x))


def load_config(path: str) -> tuple[SimConfig, CableProfile | None]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    profile = None
    if "profile" in data:
        profile = parse_profile_knots(data.pop("profile"), where=path)
    try:
        cfg = SimConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e
    return cfg, profile


def parse_profile_knots(raw, where: str = "--profile") -> CableProfile:
    try:
        knots = tuple((float(t), float(l)) for t, l in raw)
        return CableProfile(knots)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: bad cable profile ({e})") from e


def parse_profile_flag(text: str) -> CableProfile:
    """Inline profile syntax: 't:l,t:l,...' (seconds:metres)."""
    knots = []
    for part in text.split(","):
        t, sep, l = part.partition(":")
        if not sep:
            raise ConfigError(f"--profile: expected 't:l' pairs, got '{part}'")
        try:
            knots.append((float(t), float(l)))
        except ValueError as e:
            raise ConfigError(f"--profile: {e}") from e
    try:
        return CableProfile(tuple(knots))
    except ValueError as e:
        raise ConfigError(f"--profile: {e}") from e


def _apply_overrides(cfg: SimConfig, args) -> SimConfig:
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if getattr(args, "runs", None) is not None:
        cfg.runs = args.runs
    if args.tol is not None:
        cfg.tol = args.tol
    return SimConfig(**{**cfg.to_dict()})  # re-validate


def _parse_filters(text: str | None) -> tuple[str, ...]:
    if not text:
        return FILTER_NAMES
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    bad = [n for n in names if n not in FILTER_NAMES]
    if bad:
        raise ConfigError(f"--filters: unknown filter(s) {bad}; choose from {list(FILTER_NAMES)}")
    return names


def render_outputs(result: BenchmarkResult) -> dict[str, str]:
    """All output files as name -> content, computed before anything is written."""
    runs_lines = ["run,step,time_s,filter,err_norm,cycles,diverged"]
    for run in range(result.cfg.runs):
        for step, t in enumerate(result.times):
            for name in result.names:
                err = result.err[name][run, step]
                if step == 0:
                    cyc = div = ""
                else:
                    cyc = str(int(result.cycles[name][run, step - 1]))
                    div = str(int(result.diverged_flags[name][run, step - 1]))
                runs_lines.append(f"{run},{step},{_fmt(t)},{name},{_fmt(err)},{cyc},{div}")

    summary_lines = ["step,time_s,filter,err_norm_mean,err_norm_std"]
    for step, t in enumerate(result.times):
        for name in result.names:
            mean = result.err_mean(name)[step]
            std = result.err_std(name)[step]
            summary_lines.append(f"{step},{_fmt(t)},{name},{_fmt(mean)},{_fmt(std)}")

    manifest = {
        "version": __version__,
        "seed": result.cfg.rng_seed,
        "config": result.cfg.to_dict(),
        "profile": [list(k) for k in result.profile.knots],
        "n_steps": int(result.times.shape[0] - 1),
        "filters": {
            name: {
                "mean_steps_to_1pct": result.mean_steps_to_1pct(name),
                "reached_runs": result.reached_runs(name),
                "final_err_mean": result.final_err_mean(name),
                "diverged_runs": result.diverged_runs[name],
                "excluded_runs": result.excluded_rows[name],
                "mean_cycles": result.mean_cycles(name),
            }
            for name in result.names
        },
    }
    return {
        "runs.csv": "\n".join(runs_lines) + "\n",
        "summary.csv": "\n".join(summary_lines) + "\n",
        "manifest.json": json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    }


def print_steps_table(result: BenchmarkResult, stream=None) -> None:
    stream = stream or sys.stdout
    print(f"{'filter':>8}  {'steps-to-1% (mean)':>19}  {'reached':>7}  "
          f"{'final err (mean)':>16}  {'diverged runs':>13}  {'mean cycles':>11}", file=stream)
    for name in result.names:
        print(
            f"{name:>8}  {result.mean_steps_to_1pct(name):>19.2f}  "
            f"{result.reached_runs(name):>4}/{result.cfg.runs:<2}  "
            f"{result.final_err_mean(name):>16.3e}  {result.diverged_runs[name]:>13d}  "
            f"{result.mean_cycles(name):>11.2f}",
            file=stream,
        )


def _load_cfg_and_profile(args) -> tuple[SimConfig, CableProfile | None]:
    cfg, profile = (SimConfig(), None) if args.config is None else load_config(args.config)
    if args.profile is not None:
        profile = parse_profile_flag(args.profile)
    return _apply_overrides(cfg, args), profile


def cmd_bench(args) -> int:
    cfg, profile = _load_cfg_and_profile(args)
    names = _parse_filters(args.filters)

    result = run_benchmark(cfg, profile, names)
    outputs = render_outputs(result)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fname, content in outputs.items():
        (out_dir / fname).write_text(content)

    print_steps_table(result)
    print(f"wrote {', '.join(sorted(outputs))} to {out_dir}")
    return 0


def cmd_demo(args) -> int:
    cfg, profile = _load_cfg_and_profile(args)
    names = _parse_filters(args.filters)
    if profile is None:
        profile = CableProfile.default()

    truth = simulate_truth(cfg, profile)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.rng_seed, spawn_key=(0,)))
    if args.xi0 is not None:
        try:
            xi0 = np.array([float(v) for v in args.xi0.split(",")])
        except ValueError as e:
            raise ConfigError(f"--xi0: {e}") from e
        if xi0.shape != (5,):
            raise ConfigError("--xi0: expected 5 comma-separated values")
    else:
        xi0 = draw_initial_error(cfg, rng)
    imu = synthesize_imu(truth, cfg, rng)
    single = run_single(cfg, truth, imu, xi0, names)

    print(f"single run, seed {cfg.rng_seed}, |xi0| = {np.linalg.norm(xi0):.4f}")
    header = "step  time_s " + "".join(f"{name:>12}" for name in names)
    if "nf-iekf" in names:
        header += "  nf-cycles"
    print(header)
    n = truth.n_steps
    for k in range(0, n + 1, max(1, n // 20)):
        row = f"{k:>4}  {truth.times[k]:>6.2f}"
        for name in names:
            row += f"{single.filters[name].err_norms[k]:>12.3e}"
        if "nf-iekf" in names and k >= 1:
            row += f"{single.filters['nf-iekf'].cycles[k - 1]:>11d}"
        print(row)

    manifest = {
        "version": __version__,
        "seed": cfg.rng_seed,
        "config": cfg.to_dict(),
        "profile": [list(k) for k in profile.knots],
        "xi0": [float(v) for v in xi0],
        "filters": {},
    }
    for name in names:
        fr = single.filters[name]
        entry = {
            "final_err": fr.final_err,
            "steps_to_1pct": steps_to_threshold(fr.err_norms),
            "diverged_updates": fr.diverged_updates,
            "mean_cycles": float(np.mean(fr.cycles)),
        }
        manifest["filters"][name] = entry
        line = (f"{name:>8}: final err {fr.final_err:.3e}, steps-to-1% {entry['steps_to_1pct']}, "
                f"diverged updates {fr.diverged_updates}")
        if name == "nf-iekf":
            line += f", mean cycles {entry['mean_cycles']:.2f}"
        print(line)

    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = ["step,time_s,filter,err_norm,cycles,diverged"]
        for step, t in enumerate(truth.times):
            for name in names:
                fr = single.filters[name]
                if step == 0:
                    cyc = div = ""
                else:
                    cyc = str(int(fr.cycles[step - 1]))
                    div = str(int(fr.diverged_flags[step - 1]))
                lines.append(f"{step},{_fmt(t)},{name},{_fmt(fr.err_norms[step])},{cyc},{div}")
        (out_dir / "demo.csv").write_text("\n".join(lines) + "\n")
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        print(f"wrote demo.csv, manifest.json to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfiekf",
        description="Crane-pendulum benchmark for invariant filtering with "
                    "noise-free constraint pseudo-measurements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file mirroring SimConfig fields")
    common.add_argument("--seed", type=int, default=None, help="RNG seed override")
    common.add_argument("--tol", type=float, default=None,
                        help="innovation-stabilization tolerance override")
    common.add_argument("--filters", default=None,
                        help=f"comma-separated subset of {','.join(FILTER_NAMES)}")
    common.add_argument("--profile", default=None,
                        help="inline cable profile knots as 't:l,t:l,...'")

    bench = sub.add_parser("bench", parents=[common], help="run the Monte-Carlo benchmark")
    bench.add_argument("--runs", type=int, default=None, help="number of Monte-Carlo runs")
    bench.add_argument("--out", default="bench_out", help="output directory for CSVs and manifest")
    bench.set_defaults(func=cmd_bench)

    demo = sub.add_parser("demo", parents=[common], help="run and dump a single trajectory")
    demo.add_argument("--xi0", default=None,
                      help="explicit initial error, 5 comma-separated values")
    demo.add_argument("--out", default=None, help="optional output directory")
    demo.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
