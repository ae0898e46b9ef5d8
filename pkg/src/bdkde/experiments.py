"""Experiment orchestration: bias curves, variation curves, inequality checks.

Seed discipline: every Monte Carlo work item derives its generator from
``SeedSequence(master_seed, spawn_key=(kind, n_index, h_index, replication))``
with kind codes ``1`` (variation) and ``2`` (inequality check).  Work items
are therefore independent of scheduling, and any thread count reproduces the
serial results bit for bit.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .construct import BandwidthKernelFamily, KernelPair, construct_pair, family, variation_norm
from .densities import DensityModel, by_name
from .errors import AccuracyError, ConfigError, InputError
from .estimator import GridSpec, fit, l1_error_grid
from .kernels import Kernel, kernel
from .quadrature import QuadratureSpec, bias_l1, integrate_line, smooth

KERNEL_MODES = ("fixed-order-s", "bandwidth-dependent", "k0-only")
EXPERIMENT_KINDS = ("bias", "variation", "remark3")

_KIND_VARIATION = 1
_KIND_REMARK3 = 2


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kinds: tuple[str, ...]
    density: str
    base_kernel: str
    s: int
    a_exponent: float = 1.0
    kernel_mode: str = "bandwidth-dependent"
    h_start: float = 0.5
    h_ratio: float = 0.5
    h_count: int = 6
    n_grid: tuple[int, ...] = ()
    replications: int = 0
    master_seed: int = 0
    variation_h: float | None = None  # default: head of the h grid
    coupling_c: float | None = None  # optional h(n) = c * n^-gamma
    coupling_gamma: float | None = None
    quad_abs_tol: float = 1e-9
    quad_rel_tol: float = 1e-6
    grid_step: float = 0.01
    grid_pad: float = 1.0
    grid_tol: float = 1e-4
    expectations: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        for kind in self.kinds:
            if kind not in EXPERIMENT_KINDS:
                raise ConfigError(f"unknown experiment kind {kind!r}; choose from {EXPERIMENT_KINDS}")
        if self.kernel_mode not in KERNEL_MODES:
            raise ConfigError(f"unknown kernel mode {self.kernel_mode!r}; choose from {KERNEL_MODES}")
        if self.s < 1:
            raise ConfigError("s must be >= 1")
        if not (0.0 < self.a_exponent <= 1.0):
            raise ConfigError("a_exponent must lie in (0, 1]")
        if not (0.0 < self.h_start <= 1.0):
            raise ConfigError("h grid must start in (0, 1]")
        if not (0.0 < self.h_ratio < 1.0):
            raise ConfigError("h_ratio must lie in (0, 1) so the grid strictly decreases")
        if self.h_count < 1:
            raise ConfigError("h_count must be >= 1")
        needs_sampling = any(k in self.kinds for k in ("variation", "remark3"))
        if needs_sampling:
            if len(self.n_grid) == 0:
                raise ConfigError("sampling experiments need a non-empty n_grid")
            if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
                raise ConfigError("n_grid must be strictly increasing")
            if any(n < 1 for n in self.n_grid):
                raise ConfigError("sample sizes must be >= 1")
            if self.replications < 1:
                raise ConfigError("replications must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")
        if (self.coupling_c is None) != (self.coupling_gamma is None):
            raise ConfigError("h coupling needs both coupling_c and coupling_gamma")
        if self.variation_h is not None and not (0.0 < self.variation_h <= 1.0):
            raise ConfigError("variation_h must lie in (0, 1]")

    @property
    def h_grid(self) -> tuple[float, ...]:
        return tuple(self.h_start * self.h_ratio**i for i in range(self.h_count))

    def quad_spec(self) -> QuadratureSpec:
        return QuadratureSpec(abs_tol=self.quad_abs_tol, rel_tol=self.quad_rel_tol)


_SECTION_KEYS = {
    "experiment": {"name", "kinds", "density", "base_kernel", "s", "a_exponent", "kernel_mode"},
    "h_grid": {"start", "ratio", "count"},
    "sampling": {
        "n_grid",
        "replications",
        "master_seed",
        "variation_h",
        "coupling_c",
        "coupling_gamma",
    },
    "numerics": {"quad_abs_tol", "quad_rel_tol", "grid_step", "grid_pad", "grid_tol"},
    "expectations": None,  # free-form: name -> [lo, hi]
}


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a validated config from parsed TOML; unknown keys are errors."""
    for section, keys in _SECTION_KEYS.items():
        if section in doc and keys is not None:
            extra = set(doc[section]) - keys
            if extra:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    unknown = set(doc) - set(_SECTION_KEYS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    exp = doc.get("experiment", {})
    hsec = doc.get("h_grid", {})
    samp = doc.get("sampling", {})
    num = doc.get("numerics", {})
    expect = []
    for key, rng in doc.get("expectations", {}).items():
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            raise ConfigError(f"expectation {key!r} must be a [lo, hi] pair")
        expect.append((str(key), float(rng[0]), float(rng[1])))
    try:
        cfg = ExperimentConfig(
            name=str(exp["name"]),
            kinds=tuple(exp["kinds"]),
            density=str(exp["density"]),
            base_kernel=str(exp["base_kernel"]),
            s=int(exp["s"]),
            a_exponent=float(exp.get("a_exponent", 1.0)),
            kernel_mode=str(exp.get("kernel_mode", "bandwidth-dependent")),
            h_start=float(hsec.get("start", 0.5)),
            h_ratio=float(hsec.get("ratio", 0.5)),
            h_count=int(hsec.get("count", 6)),
            n_grid=tuple(int(n) for n in samp.get("n_grid", ())),
            replications=int(samp.get("replications", 0)),
            master_seed=int(samp.get("master_seed", 0)),
            variation_h=(float(samp["variation_h"]) if "variation_h" in samp else None),
            coupling_c=(float(samp["coupling_c"]) if "coupling_c" in samp else None),
            coupling_gamma=(float(samp["coupling_gamma"]) if "coupling_gamma" in samp else None),
            quad_abs_tol=float(num.get("quad_abs_tol", 1e-9)),
            quad_rel_tol=float(num.get("quad_rel_tol", 1e-6)),
            grid_step=float(num.get("grid_step", 0.01)),
            grid_pad=float(num.get("grid_pad", 1.0)),
            grid_tol=float(num.get("grid_tol", 1e-4)),
            expectations=tuple(expect),
        )
    except KeyError as exc:
        raise ConfigError(f"missing required config key: {exc}") from None
    # Resolve names eagerly so a typo fails before any computation.
    by_name(cfg.density)
    kernel(cfg.base_kernel)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(doc)


# --- kernel selection --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelPlan:
    """Resolved kernels for one experiment run."""

    pair: KernelPair
    fam: BandwidthKernelFamily
    mode: str

    def at(self, h: float) -> Kernel:
        if self.mode == "k0-only":
            return self.pair.k0
        if self.mode == "fixed-order-s":
            # Conventional fixed order-s kernel: the family frozen at h_cap,
            # i.e. unit s-th moment.  For a gaussian base with s = 2 this is
            # exactly the plain gaussian kernel.
            return self.fam.at(self.fam.h_cap)
        return self.fam.at(h)


def make_plan(cfg: ExperimentConfig) -> KernelPlan:
    pair = construct_pair(kernel(cfg.base_kernel), cfg.s)
    return KernelPlan(pair, family(pair, cfg.a_exponent), cfg.kernel_mode)


# --- rate fitting ------------------------------------------------------------


@dataclass(frozen=True)
class RateReport:
    """Least-squares slope of log(error) against log(grid)."""

    grid: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float
    residual_max: float
    excluded: tuple[int, ...] = ()


def fit_rate(
    grid_values: Sequence[float],
    error_values: Sequence[float],
    noise_estimates: Sequence[float] | None = None,
    noise_fraction: float = 0.1,
) -> RateReport:
    """Fit the empirical convergence order.

    Points whose noise estimate exceeds ``noise_fraction`` of the value are
    excluded (and reported): they sit at the quadrature or Monte Carlo noise
    floor and would corrupt the slope.
    """
    g = np.asarray(grid_values, dtype=float)
    e = np.asarray(error_values, dtype=float)
    if g.shape != e.shape or g.ndim != 1:
        raise InputError("grid and error sequences must be 1-d and equally long")
    excluded: list[int] = []
    if noise_estimates is not None:
        noise = np.asarray(noise_estimates, dtype=float)
        if noise.shape != e.shape:
            raise InputError("noise estimates must match the error sequence")
        excluded = [i for i in range(e.size) if noise[i] > noise_fraction * e[i]]
    keep = np.array([i for i in range(e.size) if i not in set(excluded)], dtype=int)
    if keep.size < 3:
        raise InputError(f"need at least 3 usable points, have {keep.size}")
    g, e = g[keep], e[keep]
    if np.any(e <= 0.0) or np.any(g <= 0.0):
        raise InputError("rate fitting needs strictly positive grid and error values")
    lx, ly = np.log(g), np.log(e)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateReport(
        tuple(g),
        tuple(e),
        float(slope),
        float(intercept),
        float(r_squared),
        float(np.max(np.abs(ly - pred))),
        tuple(excluded),
    )


# --- experiment runners ------------------------------------------------------


class BiasPoint(NamedTuple):
    h: float
    bias: float
    quad_err: float


def bias_curve(cfg: ExperimentConfig, plan: KernelPlan | None = None) -> list[BiasPoint]:
    """Deterministic bias values along the h grid (pure quadrature)."""
    plan = plan or make_plan(cfg)
    density = by_name(cfg.density)
    spec = cfg.quad_spec()
    rows = []
    for h in cfg.h_grid:
        try:
            value, err = bias_l1(density, plan.at(h), h, spec)
        except AccuracyError as exc:
            # Annotate the row with the best estimate instead of aborting.
            value, err = exc.value, exc.error
        rows.append(BiasPoint(h, float(value), float(err)))
    return rows


def _estimation_grid(cfg: ExperimentConfig, density: DensityModel, k: Kernel, h: float) -> GridSpec:
    r = density.radius + h * k.radius + cfg.grid_pad
    return GridSpec(-r, r, cfg.grid_step, cfg.grid_tol)


def _smooth_on_grid(density, k, h, xs, spec) -> np.ndarray:
    return np.array([smooth(density, k, h, float(x), spec) for x in xs])


def _grid_function(xs: np.ndarray, values: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    # Exact at the grid nodes, which is everywhere l1_error_grid looks.
    return lambda q: np.interp(q, xs, values)


def _map_possibly_threaded(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class VariationPoint(NamedTuple):
    n: int
    h: float
    mean_variation: float
    std_err: float
    replications: int


def variation_curve(
    cfg: ExperimentConfig, plan: KernelPlan | None = None, threads: int = 1
) -> list[VariationPoint]:
    """Monte Carlo estimate of E ∫ |f̂_n - f * S_h K| along the n grid.

    The bandwidth is fixed per curve (``variation_h``, default the head of
    the h grid) unless the config couples it to n as ``c * n^-gamma``.
    """
    plan = plan or make_plan(cfg)
    density = by_name(cfg.density)
    inner = cfg.quad_spec().inner()
    coupled = cfg.coupling_c is not None
    h_fixed = cfg.variation_h if cfg.variation_h is not None else cfg.h_grid[0]

    ref_cache: dict[float, tuple[GridSpec, Kernel, Callable]] = {}

    def resolve(h: float):
        if h not in ref_cache:
            k = plan.at(h)
            grid = _estimation_grid(cfg, density, k, h)
            xs = grid.xs()
            ref = _grid_function(xs, _smooth_on_grid(density, k, h, xs, inner))
            ref_cache[h] = (grid, k, ref)
        return ref_cache[h]

    rows = []
    for i_n, n in enumerate(cfg.n_grid):
        h = float(np.clip(cfg.coupling_c * n**-cfg.coupling_gamma, 1e-6, 1.0)) if coupled else h_fixed
        grid, k, ref = resolve(h)

        def one_replication(rep: int, n=n, i_n=i_n, h=h, grid=grid, k=k, ref=ref) -> float:
            seed = np.random.SeedSequence(cfg.master_seed, spawn_key=(_KIND_VARIATION, i_n, 0, rep))
            samples = density.sampler(seed, n)
            return l1_error_grid(fit(samples, k, h), ref, grid).value

        values = np.array(_map_possibly_threaded(one_replication, range(cfg.replications), threads))
        se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
        rows.append(VariationPoint(n, h, float(values.mean()), se, cfg.replications))
    return rows


class Remark3Point(NamedTuple):
    n: int
    h: float
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float


@dataclass(frozen=True)
class Remark3Report:
    rows: tuple[Remark3Point, ...]
    violations: int  # count of lhs > rhs beyond 2 combined standard errors
    penalty_bound: dict[float, float]  # h -> 2 h ∫f ∫|ks|


def remark3_check(
    cfg: ExperimentConfig, plan: KernelPlan | None = None, threads: int = 1
) -> Remark3Report:
    """Compare the variation of the h-dependent estimator with its bound.

    For each (n, h) cell the same samples drive both estimators, so the
    bound, which holds pathwise under shared samples, is tested at its
    sharpest.
    """
    plan = plan or make_plan(cfg)
    if plan.mode != "bandwidth-dependent":
        raise ConfigError("the inequality check needs kernel_mode = 'bandwidth-dependent'")
    density = by_name(cfg.density)
    inner = cfg.quad_spec().inner()
    h_list = cfg.h_grid[:3]
    n_list = cfg.n_grid[:3]
    beta0_ks = variation_norm(plan.pair.ks)
    mass = integrate_line(
        density.pdf, cfg.quad_spec(), (-density.radius, density.radius)
    ).value

    rows = []
    violations = 0
    penalty = {}
    for i_h, h in enumerate(h_list):
        kn = plan.fam.at(h)
        k0 = plan.pair.k0
        grid = _estimation_grid(cfg, density, kn, h)
        xs = grid.xs()
        ref_n = _grid_function(xs, _smooth_on_grid(density, kn, h, xs, inner))
        ref_0 = _grid_function(xs, _smooth_on_grid(density, k0, h, xs, inner))
        bound = 2.0 * h * mass * beta0_ks
        penalty[h] = bound
        for i_n, n in enumerate(n_list):

            def one_replication(rep: int, n=n, i_n=i_n, i_h=i_h, h=h):
                seed = np.random.SeedSequence(cfg.master_seed, spawn_key=(_KIND_REMARK3, i_n, i_h, rep))
                samples = density.sampler(seed, n)
                lhs = l1_error_grid(fit(samples, kn, h), ref_n, grid).value
                first = l1_error_grid(fit(samples, k0, h), ref_0, grid).value
                return lhs, first

            pairs = _map_possibly_threaded(one_replication, range(cfg.replications), threads)
            lhs_vals = np.array([p[0] for p in pairs])
            rhs_vals = np.array([p[1] for p in pairs]) + bound
            r = cfg.replications
            lhs_se = float(lhs_vals.std(ddof=1) / np.sqrt(r)) if r > 1 else 0.0
            rhs_se = float(rhs_vals.std(ddof=1) / np.sqrt(r)) if r > 1 else 0.0
            row = Remark3Point(
                n, h, float(lhs_vals.mean()), float(rhs_vals.mean()), lhs_se, rhs_se
            )
            rows.append(row)
            if row.lhs - row.rhs > 2.0 * float(np.hypot(lhs_se, rhs_se)):
                violations += 1
    return Remark3Report(tuple(rows), violations, penalty)


# --- persistence ---------------------------------------------------------


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        # repr of a Python float is the shortest round-trip form, which keeps
        # the byte-identical determinism contract independent of formatting.
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _expectation_checks(cfg: ExperimentConfig, slopes: dict[str, float]) -> dict:
    out = {}
    for name, lo, hi in cfg.expectations:
        measured = slopes.get(name)
        out[name] = {
            "range": [lo, hi],
            "measured": measured,
            "pass": (measured is not None and lo <= measured <= hi),
        }
    return out


def run(cfg: ExperimentConfig, out_dir, threads: int = 1) -> dict[str, str]:
    """Execute the configured experiment kinds and persist results.

    Writes one CSV per kind plus ``summary.json`` echoing the config and
    seed; outputs are byte-identical across runs and thread counts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = make_plan(cfg)
    paths: dict[str, str] = {}
    slopes: dict[str, float] = {}
    summary: dict = {
        "name": cfg.name,
        "master_seed": cfg.master_seed,
        "config": asdict(cfg),
        "results": {},
    }

    def _fit_summary(name: str, grid, values, noise) -> dict:
        try:
            report = fit_rate(grid, values, noise)
        except InputError as exc:
            return {"slope": None, "fit_error": str(exc)}
        slopes[name] = report.slope
        return {
            "slope": report.slope,
            "intercept": report.intercept,
            "r_squared": report.r_squared,
            "excluded_points": list(report.excluded),
        }

    if "bias" in cfg.kinds:
        rows = bias_curve(cfg, plan)
        path = out / "bias_curve.csv"
        _write_csv(path, ("h", "bias", "quad_err"), rows)
        paths["bias"] = str(path)
        summary["results"]["bias"] = {
            "csv": path.name,
            **_fit_summary(
                "bias_slope", [r.h for r in rows], [r.bias for r in rows], [r.quad_err for r in rows]
            ),
        }

    if "variation" in cfg.kinds:
        rows = variation_curve(cfg, plan, threads)
        path = out / "variation_curve.csv"
        _write_csv(
            path, ("n", "h", "mean_variation", "std_err", "R"),
            [(r.n, r.h, r.mean_variation, r.std_err, r.replications) for r in rows],
        )
        paths["variation"] = str(path)
        summary["results"]["variation"] = {
            "csv": path.name,
            **_fit_summary(
                "variation_slope",
                [float(r.n) for r in rows],
                [r.mean_variation for r in rows],
                [r.std_err for r in rows],
            ),
        }

    if "remark3" in cfg.kinds:
        report3 = remark3_check(cfg, plan, threads)
        path = out / "remark3.csv"
        _write_csv(path, ("n", "h", "lhs", "rhs", "lhs_se", "rhs_se"), report3.rows)
        paths["remark3"] = str(path)
        summary["results"]["remark3"] = {
            "csv": path.name,
            "violations": report3.violations,
            "penalty_bound": {repr(h): b for h, b in report3.penalty_bound.items()},
        }

    summary["expectations"] = _expectation_checks(cfg, slopes)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths["summary"] = str(summary_path)
    return paths
