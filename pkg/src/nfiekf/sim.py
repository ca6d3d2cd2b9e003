"""Crane-pendulum ground truth, IMU synthesis, and the Monte-Carlo benchmark.

The hook hangs from a cable of prescribed time-varying length l(t) attached
at the world origin. Its swing angle follows

    theta_dd = -(g / l) sin(theta) - 2 (l_dot / l) theta_dot,

integrated with fixed-step RK4 at ten times the IMU rate. The recorded
truth keeps the analytic rotation and position (so the cable constraint
holds to machine precision) and the interval-average velocity, which makes
the first-order IMU replay of the recorded trajectory exact: a zero-noise
filter started on the truth stays on it to roundoff.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .filters import Belief, Iekf, NoiseFreeIekf, PlanarEkf, UpdateReport
from .gain import factor_psd
from .lie import SE2_2, GroupElement, rot2
from .model import Constraint, ImuSample, NoiseParams, gravity_vector

FILTER_NAMES = ("ekf", "iekf", "nf-iekf")

THREADS_ENV = "NFIEKF_THREADS"


@dataclass(frozen=True)
class CableProfile:
    """Piecewise-linear cable length over time: knots of (time_s, length_m)."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        knots = tuple((float(t), float(l)) for t, l in self.knots)
        if len(knots) < 1:
            raise ValueError("profile needs at least one knot")
        times = [t for t, _ in knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        if any(l <= 0 for _, l in knots):
            raise ValueError("cable lengths must be positive")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def default(cls) -> "CableProfile":
        # Stand-in hoist profile: load raised from 5.2 m to 2.6 m of cable over
        # the first 1.5 s, then held. Hoisting from the start keeps the swing
        # angle observable throughout the run.
        return cls(((0.0, 5.2), (1.5, 2.6), (2.0, 2.6)))

    @property
    def start(self) -> float:
        return self.knots[0][0]

    @property
    def end(self) -> float:
        return self.knots[-1][0]

    def _check(self, t: float) -> None:
        if t < self.start or t > self.end:
            raise ValueError(f"time {t} outside the profile span [{self.start}, {self.end}]")

    def length(self, t: float) -> float:
        self._check(t)
        times = [k[0] for k in self.knots]
        lengths = [k[1] for k in self.knots]
        return float(np.interp(t, times, lengths))

    def rate(self, t: float) -> float:
        self._check(t)
        if len(self.knots) == 1:
            return 0.0
        times = [k[0] for k in self.knots]
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(self.knots) - 2)
        (t0, l0), (t1, l1) = self.knots[i], self.knots[i + 1]
        return (l1 - l0) / (t1 - t0)


def _default_p0() -> np.ndarray:
    return np.diag([0.05**2, 0.5**2, 0.5**2, 0.5**2, 0.5**2])


@dataclass
class SimConfig:
    """Benchmark configuration; the defaults reproduce the crane scenario."""

    theta0: float = np.deg2rad(20.0)   # initial swing angle, rad
    duration: float = 2.0              # simulated time, s
    rate: float = 100.0                # IMU and update rate, Hz
    gravity: float = 9.81              # m/s^2, pulling along -y
    gyro_noise_std: float = 0.005      # rad/s
    accel_noise_std: float = 0.005     # m/s^2
    p0: np.ndarray = field(default_factory=_default_p0)
    n_baseline: float = 1e-4           # small measurement variance for EKF/IEKF
    tol: float = 1e-7                  # innovation-stabilization tolerance
    max_iter: int = 20                 # cycle cap for the noise-free update
    runs: int = 30                     # Monte-Carlo repetitions
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("duration", "rate", "gravity", "n_baseline", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gyro_noise_std < 0 or self.accel_noise_std < 0:
            raise ValueError("noise standard deviations must be nonnegative")
        if self.runs < 1 or self.max_iter < 1:
            raise ValueError("runs and max_iter must be at least 1")
        p0 = np.asarray(self.p0, dtype=float)
        if p0.shape == (5,):
            p0 = np.diag(p0)
        if p0.shape != (5, 5) or np.max(np.abs(p0 - p0.T)) > 1e-9 * max(1.0, np.max(np.abs(p0))):
            raise ValueError("p0 must be a symmetric 5x5 matrix (or its diagonal)")
        self.p0 = 0.5 * (p0 + p0.T)

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "duration": self.duration,
            "rate": self.rate,
            "gravity": self.gravity,
            "gyro_noise_std": self.gyro_noise_std,
            "accel_noise_std": self.accel_noise_std,
            "p0": [list(row) for row in self.p0],
            "n_baseline": self.n_baseline,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "runs": self.runs,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {
            "theta0", "duration", "rate", "gravity", "gyro_noise_std",
            "accel_noise_std", "p0", "n_baseline", "tol", "max_iter",
            "runs", "rng_seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class TruthTrajectory:
    """Sampled ground truth: analytic pose sequence plus the raw pendulum state."""

    times: np.ndarray
    poses: list[GroupElement]
    thetas: np.ndarray        # swing angle from the downward vertical
    theta_rates: np.ndarray
    lengths: np.ndarray
    gravity: np.ndarray

    def __post_init__(self) -> None:
        n = self.times.shape[0]
        if not (len(self.poses) == self.thetas.shape[0] == self.theta_rates.shape[0]
                == self.lengths.shape[0] == n):
            raise ValueError("truth series must all have equal length")

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1


def _swing_accel(theta: float, theta_dot: float, l: float, l_dot: float, g: float) -> float:
    return -(g / l) * np.sin(theta) - 2.0 * (l_dot / l) * theta_dot


def simulate_truth(cfg: SimConfig, profile: CableProfile | None = None) -> TruthTrajectory:
    """Integrate the variable-length pendulum and sample the hook's extended pose."""
    if profile is None:
        profile = CableProfile.default()
    dt = 1.0 / cfg.rate
    n = int(round(cfg.duration * cfg.rate))
    if profile.start > 0.0 or profile.end < cfg.duration:
        raise ValueError("cable profile must cover [0, duration]")

    def lookup(t: float) -> tuple[float, float]:
        # Clamped beyond the profile end; only the lookahead sample uses it.
        if t >= profile.end:
            return profile.length(profile.end), 0.0
        return profile.length(t), profile.rate(t)

    def deriv(t: float, th: float, om: float) -> tuple[float, float]:
        l, ld = lookup(t)
        return om, _swing_accel(th, om, l, ld, cfg.gravity)

    nsub = 10
    h = dt / nsub
    thetas = np.empty(n + 2)
    rates = np.empty(n + 2)
    th, om = float(cfg.theta0), 0.0
    thetas[0], rates[0] = th, om
    for k in range(n + 1):
        t0 = k * dt
        for j in range(nsub):
            t = t0 + j * h
            k1t, k1o = deriv(t, th, om)
            k2t, k2o = deriv(t + h / 2, th + h / 2 * k1t, om + h / 2 * k1o)
            k3t, k3o = deriv(t + h / 2, th + h / 2 * k2t, om + h / 2 * k2o)
            k4t, k4o = deriv(t + h, th + h * k3t, om + h * k3o)
            th += h / 6 * (k1t + 2 * k2t + 2 * k3t + k4t)
            om += h / 6 * (k1o + 2 * k2o + 2 * k3o + k4o)
        thetas[k + 1], rates[k + 1] = th, om

    sample_t = np.arange(n + 2) * dt
    lengths = np.array([lookup(t)[0] for t in sample_t])
    px = lengths * np.sin(thetas[: n + 2])
    py = -lengths * np.cos(thetas[: n + 2])

    poses = []
    for k in range(n + 1):
        # Body frame flipped so the lever (0, -l) points up the cable.
        R = rot2(thetas[k] + np.pi)
        v = np.array([(px[k + 1] - px[k]) / dt, (py[k + 1] - py[k]) / dt])
        poses.append(SE2_2.from_parts(R, v, np.array([px[k], py[k]])))

    return TruthTrajectory(
        times=sample_t[: n + 1],
        poses=poses,
        thetas=thetas[: n + 1],
        theta_rates=rates[: n + 1],
        lengths=lengths[: n + 1],
        gravity=gravity_vector(2, cfg.gravity),
    )


def synthesize_imu(
    truth: TruthTrajectory, cfg: SimConfig, rng: np.random.Generator | None = None
) -> list[ImuSample]:
    """IMU samples from the truth increments, optionally with Gaussian noise.

    The noise-free samples replay the recorded truth exactly under the
    first-order propagation model.
    """
    dt = float(truth.times[1] - truth.times[0])
    out = []
    for k in range(truth.n_steps):
        omega = (truth.thetas[k + 1] - truth.thetas[k]) / dt
        dv = truth.poses[k + 1].v - truth.poses[k].v
        accel = truth.poses[k].R.T @ (dv / dt - truth.gravity)
        if rng is not None:
            omega = omega + cfg.gyro_noise_std * rng.standard_normal()
            accel = accel + cfg.accel_noise_std * rng.standard_normal(2)
        out.append(ImuSample(omega=float(omega), accel=accel, dt=dt))
    return out


def crane_constraints(truth: TruthTrajectory) -> list[Constraint]:
    """Cable-length constraints at steps 1..n: R (0, -l) + p = 0."""
    return [
        Constraint(
            r=np.array([0.0, -truth.lengths[k]]),
            alpha=0.0,
            beta=1.0,
            y=np.zeros(2),
        )
        for k in range(1, truth.n_steps + 1)
    ]


def make_filters(cfg: SimConfig, names: tuple[str, ...] = FILTER_NAMES) -> dict:
    """Benchmark filters keyed by name, all consuming the same data streams."""
    bad = [n for n in names if n not in FILTER_NAMES]
    if bad:
        raise ValueError(f"unknown filter names: {bad}")
    g = gravity_vector(2, cfg.gravity)
    noisy = NoiseParams.from_stds(
        cfg.gyro_noise_std, cfg.accel_noise_std, 2, meas_cov=cfg.n_baseline * np.eye(2)
    )
    noise_free = NoiseParams.from_stds(cfg.gyro_noise_std, cfg.accel_noise_std, 2)
    filters = {
        "ekf": lambda: PlanarEkf(noisy, g),
        "iekf": lambda: Iekf(noisy, g),
        "nf-iekf": lambda: NoiseFreeIekf(noise_free, g, tol=cfg.tol, max_iter=cfg.max_iter),
    }
    return {name: filters[name]() for name in names}


@dataclass
class FilterRun:
    """One filter's trace over one run."""

    err_norms: np.ndarray              # length n_steps + 1; entry 0 is |xi0|
    cycles: np.ndarray                 # update cycles per step
    diverged_flags: np.ndarray         # bool per step
    log_failures: int                  # error-norm evaluations off the log branch
    beliefs: list[Belief] | None = None
    reports: list[UpdateReport] | None = None

    @property
    def diverged_updates(self) -> int:
        return int(np.count_nonzero(self.diverged_flags))

    @property
    def final_err(self) -> float:
        return float(self.err_norms[-1])


@dataclass
class SingleRunResult:
    """Per-filter traces for one simulated run, plus the shared streams."""

    truth: TruthTrajectory
    imu: list[ImuSample]
    constraints: list[Constraint]
    xi0: np.ndarray
    filters: dict[str, FilterRun]


def steps_to_threshold(err_norms: np.ndarray, fraction: float = 0.01) -> int:
    """First step k >= 1 with err <= fraction * err[0]; n_steps + 1 if never."""
    threshold = fraction * err_norms[0]
    hits = np.nonzero(err_norms[1:] <= threshold)[0]
    return int(hits[0]) + 1 if hits.size else err_norms.shape[0]


def run_single(
    cfg: SimConfig,
    truth: TruthTrajectory,
    imu: list[ImuSample],
    xi0: np.ndarray,
    names: tuple[str, ...] = FILTER_NAMES,
    keep_beliefs: bool = False,
) -> SingleRunResult:
    """Run the requested filters over one shared measurement stream."""
    constraints = crane_constraints(truth)
    chi0_hat = truth.poses[0] @ SE2_2.exp(-xi0)
    n = truth.n_steps
    results: dict[str, FilterRun] = {}
    for name, flt in make_filters(cfg, names).items():
        belief = flt.init_belief(chi0_hat, cfg.p0)
        err = np.empty(n + 1)
        err[0] = np.linalg.norm(xi0)
        cycles = np.zeros(n, dtype=int)
        diverged = np.zeros(n, dtype=bool)
        log_failures = 0
        beliefs = [belief] if keep_beliefs else None
        reports: list[UpdateReport] | None = [] if keep_beliefs else None
        for k in range(1, n + 1):
            belief = flt.propagate(belief, imu[k - 1])
            belief, report = flt.update(belief, constraints[k - 1])
            cycles[k - 1] = report.iterations
            diverged[k - 1] = report.diverged
            try:
                xi = SE2_2.log(flt.mean_pose(belief).inverse() @ truth.poses[k])
                err[k] = np.linalg.norm(xi)
            except ValueError:
                err[k] = np.nan
                log_failures += 1
            if keep_beliefs:
                beliefs.append(belief)
                reports.append(report)
        results[name] = FilterRun(
            err_norms=err,
            cycles=cycles,
            diverged_flags=diverged,
            log_failures=log_failures,
            beliefs=beliefs,
            reports=reports,
        )
    return SingleRunResult(truth=truth, imu=imu, constraints=constraints, xi0=xi0, filters=results)


@dataclass
class BenchmarkResult:
    """Aggregated Monte-Carlo statistics plus the per-run error traces."""

    cfg: SimConfig
    profile: CableProfile
    times: np.ndarray
    names: tuple[str, ...]
    err: dict[str, np.ndarray]                 # (runs, n_steps + 1)
    cycles: dict[str, np.ndarray]              # (runs, n_steps)
    diverged_flags: dict[str, np.ndarray]      # (runs, n_steps) bool
    excluded_rows: dict[str, int]              # runs with log failures, left out of means

    @property
    def diverged_runs(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(flags.any(axis=1)))
            for name, flags in self.diverged_flags.items()
        }

    def err_mean(self, name: str) -> np.ndarray:
        return np.nanmean(self.err[name], axis=0)

    def err_std(self, name: str) -> np.ndarray:
        return np.nanstd(self.err[name], axis=0)

    def steps_to_1pct(self, name: str) -> np.ndarray:
        return np.array([steps_to_threshold(row) for row in self.err[name]])

    def mean_steps_to_1pct(self, name: str) -> float:
        return float(np.mean(self.steps_to_1pct(name)))

    def reached_runs(self, name: str) -> int:
        n_cap = self.err[name].shape[1]
        return int(np.count_nonzero(self.steps_to_1pct(name) < n_cap))

    def mean_cycles(self, name: str) -> float:
        return float(np.mean(self.cycles[name]))

    def final_err_mean(self, name: str) -> float:
        return float(np.nanmean(self.err[name][:, -1]))


def draw_initial_error(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample xi0 from N(0, P0) through the rank-aware factorization."""
    factor = factor_psd(cfg.p0)
    return factor.L @ rng.standard_normal(factor.rank)


def _run_index(cfg: SimConfig, truth: TruthTrajectory, names: tuple[str, ...], run: int):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.rng_seed, spawn_key=(run,)))
    xi0 = draw_initial_error(cfg, rng)
    imu = synthesize_imu(truth, cfg, rng)
    return run_single(cfg, truth, imu, xi0, names)


def run_benchmark(
    cfg: SimConfig,
    profile: CableProfile | None = None,
    names: tuple[str, ...] = FILTER_NAMES,
) -> BenchmarkResult:
    """Monte-Carlo comparison of the filters on shared per-run streams.

    Each run draws its initial error xi0 from N(0, P0), sets the initial
    estimate to truth * exp(-xi0), and feeds every filter the same noisy IMU
    sequence. Runs use independent, counter-indexed RNG streams, so results
    are reproducible for a given (seed, config) regardless of scheduling;
    set the NFIEKF_THREADS environment variable to run them concurrently.
    """
    if profile is None:
        profile = CableProfile.default()
    truth = simulate_truth(cfg, profile)
    workers = int(os.environ.get(THREADS_ENV, "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            singles = list(pool.map(lambda r: _run_index(cfg, truth, names, r), range(cfg.runs)))
    else:
        singles = [_run_index(cfg, truth, names, r) for r in range(cfg.runs)]

    n = truth.n_steps
    err = {name: np.empty((cfg.runs, n + 1)) for name in names}
    cycles = {name: np.empty((cfg.runs, n), dtype=int) for name in names}
    diverged = {name: np.zeros((cfg.runs, n), dtype=bool) for name in names}
    excluded = {name: 0 for name in names}
    for r, single in enumerate(singles):
        for name in names:
            run = single.filters[name]
            err[name][r] = run.err_norms
            cycles[name][r] = run.cycles
            diverged[name][r] = run.diverged_flags
            excluded[name] += int(run.log_failures > 0)
    return BenchmarkResult(
        cfg=cfg,
        profile=profile,
        times=truth.times,
        names=names,
        err=err,
        cycles=cycles,
        diverged_flags=diverged,
        excluded_rows=excluded,
    )
