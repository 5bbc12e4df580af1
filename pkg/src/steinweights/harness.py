"""Experiment harness: run weighting schemes over a grid of sample sizes.

A run is described by a JSON-friendly config dict. For every (n, trial)
cell the harness draws one point set, computes every requested scheme's
weights on that same point set, evaluates the test functions, and emits
one record per scheme, test function and coordinate. Randomness derives
from the config seed through named SeedSequence spawn keys, so reruns and
parallel execution produce byte-identical records.

Per-trial stream layout: SeedSequence(seed, spawn_key=(n, trial)) spawns
two children, the first for point generation and the second for the
test-function draws (omega then offset, drawn only when a random cosine
is requested).
"""

from __future__ import annotations

import csv
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import baselines, simplex_qp
from .errors import (
    DominanceError,
    SteinWeightsError,
    UnsupportedConfigurationError,
)
from .kernels import RbfKernel, median_heuristic_bandwidth
from .samplers import (
    ChainConfig,
    mala_chain_moments,
    mala_chains,
    sample_gmm_iid,
    sgld_chains,
    tune_mala_step,
)
from .stein import ScoreTarget, SteinGram, ksd_weighted, stein_gram
from .targets import (
    GaussianMixture,
    ProbitModel,
    gaussianity_interpolation,
    probit_simulate,
    random_gaussian_mixture,
    read_probit_dataset,
    write_probit_dataset,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "ExperimentResult",
    "SummaryRow",
    "RateFit",
    "GroundTruth",
    "build_target_model",
    "probit_ground_truth",
    "run_experiment",
    "summarize",
    "rate_fit",
    "evaluate_test_function",
    "write_records_csv",
    "write_summary_csv",
    "read_points",
    "write_points",
    "PARALLEL_ENV_VAR",
]

PARALLEL_ENV_VAR = "STEINWEIGHTS_PARALLEL"

SCHEME_KINDS = (
    "uniform",
    "stein",
    "exact_is",
    "control_functional",
    "control_functional_normalized",
    "kde",
    "kde_normalized",
)

TEST_FUNCTIONS = ("coordinate_mean", "coordinate_square", "random_cosine")

RECORD_COLUMNS = (
    "scheme",
    "n",
    "trial",
    "test_fn",
    "estimate",
    "sq_error",
    "ksd",
    "iterations",
    "wall_ms",
    "status",
)

_DOMINANCE_SLACK = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""

    target: dict
    sampler: dict
    schemes: tuple
    n_grid: tuple
    trials: int
    test_functions: tuple
    seed: int
    output_dir: str | None = None
    ground_truth: dict | None = None
    record_timing: bool = False

    def __post_init__(self):
        schemes = tuple(dict(s) for s in self.schemes)
        if not schemes:
            raise ValueError("at least one weighting scheme is required")
        labels = [s.get("label", s.get("kind")) for s in schemes]
        for s in schemes:
            if s.get("kind") not in SCHEME_KINDS:
                raise ValueError(f"unknown scheme kind {s.get('kind')!r}")
        if len(set(labels)) != len(labels):
            raise ValueError("scheme labels must be unique; add 'label' to duplicates")
        object.__setattr__(self, "schemes", schemes)
        n_grid = tuple(int(n) for n in self.n_grid)
        if not n_grid or any(n < 1 for n in n_grid):
            raise ValueError("n_grid must list positive sample sizes")
        object.__setattr__(self, "n_grid", n_grid)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        fns = tuple(self.test_functions)
        for fn in fns:
            if fn not in TEST_FUNCTIONS:
                raise ValueError(f"unknown test function {fn!r}")
        if not fns:
            raise ValueError("at least one test function is required")
        object.__setattr__(self, "test_functions", fns)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {
            "target",
            "sampler",
            "schemes",
            "n_grid",
            "trials",
            "test_functions",
            "seed",
            "output_dir",
            "ground_truth",
            "record_timing",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            target=dict(_require(data, "target", "experiment config")),
            sampler=dict(data.get("sampler", {"kind": "iid"})),
            schemes=tuple(_require(data, "schemes", "experiment config")),
            n_grid=tuple(_require(data, "n_grid", "experiment config")),
            trials=int(_require(data, "trials", "experiment config")),
            test_functions=tuple(_require(data, "test_functions", "experiment config")),
            seed=int(_require(data, "seed", "experiment config")),
            output_dir=data.get("output_dir"),
            ground_truth=data.get("ground_truth"),
            record_timing=bool(data.get("record_timing", False)),
        )

    def to_dict(self) -> dict:
        return {
            "target": dict(self.target),
            "sampler": dict(self.sampler),
            "schemes": [dict(s) for s in self.schemes],
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "test_functions": list(self.test_functions),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "ground_truth": self.ground_truth,
            "record_timing": self.record_timing,
        }


@dataclass(frozen=True)
class ExperimentRecord:
    """One scheme evaluated with one test-function coordinate on one trial.

    ``ground_truth`` travels with the in-memory record for accounting
    checks but is not a CSV column; it is recomputable from the config.
    """

    scheme: str
    n: int
    trial: int
    test_fn: str
    estimate: float
    sq_error: float
    ksd: float
    iterations: int
    wall_ms: float
    status: str
    ground_truth: float = float("nan")


@dataclass(frozen=True)
class SummaryRow:
    scheme: str
    test_fn: str
    n: int
    mse: float
    trials_ok: int
    trials_failed: int


@dataclass(frozen=True)
class RateFit:
    """OLS fit of log MSE against log n."""

    slope: float
    stderr: float
    n_points: int
    excluded: int


@dataclass(frozen=True)
class GroundTruth:
    """Moment oracle used to score estimates.

    Either closed-form (``exact_cosine`` set) or backed by thinned draws
    from a long-chain run.
    """

    mean: np.ndarray
    second_moment: np.ndarray
    thinned: np.ndarray | None = None
    exact_cosine: Callable[[np.ndarray, float], float] | None = field(
        default=None, compare=False
    )

    def cosine(self, omega: np.ndarray, offset: float) -> float:
        if self.exact_cosine is not None:
            return float(self.exact_cosine(omega, offset))
        if self.thinned is not None and len(self.thinned):
            return float(np.mean(np.cos(self.thinned @ omega + offset)))
        raise UnsupportedConfigurationError(
            "ground truth has no cosine oracle; drop random_cosine or store draws"
        )


def _require(mapping: dict, key: str, what: str):
    """Fetch a required key from a user-supplied spec dict.

    Raises ValueError instead of KeyError so callers (the CLI in
    particular) report missing keys as configuration errors.
    """
    try:
        return mapping[key]
    except KeyError:
        raise ValueError(f"{what} spec is missing required key {key!r}") from None


def build_target_model(spec: dict):
    """Materialize a target spec dict into a mixture or probit model."""
    kind = spec.get("kind")
    if kind == "standard_normal":
        d = int(_require(spec, "dimension", "standard_normal target"))
        return GaussianMixture(np.array([1.0]), np.zeros((1, d)), np.array([1.0]))
    if kind == "gmm":
        return GaussianMixture(
            weights=np.asarray(_require(spec, "weights", "gmm target"), dtype=float),
            means=np.asarray(_require(spec, "means", "gmm target"), dtype=float),
            variances=np.asarray(
                _require(spec, "variances", "gmm target"), dtype=float
            ),
        )
    if kind == "gmm_fixture":
        return random_gaussian_mixture(
            n_components=int(spec.get("components", 20)),
            dimension=int(spec.get("dimension", 2)),
            seed=int(_require(spec, "seed", "gmm_fixture target")),
            mean_range=tuple(spec.get("mean_range", (-5.0, 5.0))),
            variance_range=tuple(spec.get("variance_range", (0.3, 1.0))),
        )
    if kind == "probit":
        return read_probit_dataset(
            _require(spec, "dataset", "probit target"),
            prior_variance=float(spec.get("prior_variance", 0.1)),
        )
    if kind == "probit_simulated":
        model = probit_simulate(
            n_data=int(_require(spec, "n_data", "probit_simulated target")),
            dimension=int(_require(spec, "dimension", "probit_simulated target")),
            seed=int(_require(spec, "seed", "probit_simulated target")),
            prior_variance=float(spec.get("prior_variance", 0.1)),
        )
        out = spec.get("dataset_out")
        if out:
            write_probit_dataset(out, model)
        return model
    raise ValueError(f"unknown target kind {spec.get('kind')!r}")


def _resolve_proposal(sampler: dict, model) -> GaussianMixture:
    prop = sampler.get("proposal")
    if prop is None:
        if not isinstance(model, GaussianMixture):
            raise UnsupportedConfigurationError(
                "iid sampling needs a mixture target or an explicit proposal"
            )
        return model
    if prop.get("kind") == "interpolated":
        if not isinstance(model, GaussianMixture):
            raise UnsupportedConfigurationError(
                "interpolated proposals require a mixture target"
            )
        return gaussianity_interpolation(
            model, float(_require(prop, "lam", "interpolated proposal"))
        )
    built = build_target_model(prop)
    if not isinstance(built, GaussianMixture):
        raise UnsupportedConfigurationError("proposal must be a mixture")
    return built


def probit_ground_truth(
    model: ProbitModel,
    draws: int = 1_000_000,
    burn_in: int = 10_000,
    seed: int = 0,
    step_size: float | None = None,
    store_every: int = 10,
) -> GroundTruth:
    """Long single-chain MALA estimate of posterior mean and second moment.

    When no step size is given it is tuned toward 0.574 acceptance first.
    Thinned draws are kept so cosine expectations can be scored too.
    """
    target = model.as_target()
    if step_size is None:
        step_size, warm = tune_mala_step(target, seed=seed)
    else:
        warm = None
    result = mala_chain_moments(
        target,
        n_draws=draws,
        burn_in=burn_in,
        step_size=step_size,
        seed=seed,
        init=warm,
        store_every=store_every,
    )
    return GroundTruth(
        mean=result["mean"],
        second_moment=result["second_moment"],
        thinned=result["thinned"],
    )


def _resolve_ground_truth(cfg: ExperimentConfig, model) -> GroundTruth:
    spec = cfg.ground_truth
    if spec is None or spec.get("kind") == "exact":
        if not isinstance(model, GaussianMixture):
            raise UnsupportedConfigurationError(
                "target has no closed-form moments; configure a ground_truth oracle"
            )
        moments = model.moments()
        return GroundTruth(
            mean=moments.mean,
            second_moment=moments.second_moment,
            exact_cosine=moments.cosine_expectation,
        )
    if spec.get("kind") == "mala_oracle":
        if not isinstance(model, ProbitModel):
            raise UnsupportedConfigurationError("mala_oracle expects a probit target")
        return probit_ground_truth(
            model,
            draws=int(spec.get("draws", 1_000_000)),
            burn_in=int(spec.get("burn_in", 10_000)),
            seed=int(spec.get("seed", 0)),
            step_size=spec.get("step_size"),
            store_every=int(spec.get("store_every", 10)),
        )
    raise ValueError(f"unknown ground_truth kind {spec.get('kind')!r}")


@dataclass
class _RunContext:
    config: ExperimentConfig
    model: object
    target: ScoreTarget
    proposal: GaussianMixture | None
    proposal_log_density: Callable | None
    ground: GroundTruth


def _build_context(cfg: ExperimentConfig, ground: GroundTruth | None = None) -> _RunContext:
    model = build_target_model(cfg.target)
    target = model.as_target()
    sampler_kind = cfg.sampler.get("kind", "iid")
    proposal = None
    proposal_log_density = None
    if sampler_kind == "iid":
        proposal = _resolve_proposal(cfg.sampler, model)
        proposal_log_density = proposal.log_density
    elif sampler_kind == "mala":
        if target.log_density is None:
            raise UnsupportedConfigurationError("MALA sampling needs a log-density")
        _require(cfg.sampler, "step_size", "mala sampler")
    elif sampler_kind == "sgld":
        if not hasattr(model, "data_score_minibatch"):
            raise UnsupportedConfigurationError(
                "SGLD sampling needs a target with a decomposable likelihood"
            )
        _require(cfg.sampler, "step_size", "sgld sampler")
        _require(cfg.sampler, "minibatch_size", "sgld sampler")
    else:
        raise ValueError(f"unknown sampler kind {sampler_kind!r}")
    for scheme in cfg.schemes:
        if scheme["kind"] == "exact_is" and proposal_log_density is None:
            raise UnsupportedConfigurationError(
                "exact_is needs an iid sampler with a tractable proposal density"
            )
        if scheme["kind"] == "kde" and not target.density_normalized:
            raise UnsupportedConfigurationError(
                "unnormalized targets support only kde_normalized"
            )
    if ground is None:
        ground = _resolve_ground_truth(cfg, model)
    return _RunContext(cfg, model, target, proposal, proposal_log_density, ground)


def _chain_seed(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, np.uint64)[0])


def _sample_points(ctx: _RunContext, n: int, seed_seq: np.random.SeedSequence) -> np.ndarray:
    sampler = ctx.config.sampler
    kind = sampler.get("kind", "iid")
    if kind == "iid":
        rng = np.random.default_rng(seed_seq)
        return sample_gmm_iid(ctx.proposal, n, rng)
    if kind == "mala":
        config = ChainConfig(
            n_chains=n,
            n_steps=int(sampler.get("n_steps", 10)),
            step_size=float(_require(sampler, "step_size", "mala sampler")),
            init_scale=float(sampler.get("init_scale", 1.0)),
            seed=_chain_seed(seed_seq),
        )
        return mala_chains(ctx.target, config)
    if kind == "sgld":
        config = ChainConfig(
            n_chains=n,
            n_steps=int(sampler.get("n_steps", 100)),
            step_size=float(_require(sampler, "step_size", "sgld sampler")),
            init_scale=float(sampler.get("init_scale", 1.0)),
            minibatch_size=int(_require(sampler, "minibatch_size", "sgld sampler")),
            seed=_chain_seed(seed_seq),
        )
        return sgld_chains(ctx.model, config)
    raise ValueError(f"unknown sampler kind {kind!r}")


def evaluate_test_function(
    kind: str,
    points: np.ndarray,
    weights: np.ndarray,
    omega: np.ndarray | None = None,
    offset: float | None = None,
) -> tuple[list[str], np.ndarray]:
    """Weighted estimates for one test function.

    Returns record ids and the matching estimate values; vector-valued
    functions contribute one id per coordinate.
    """
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if kind == "coordinate_mean":
        vals = w @ pts
        return [f"coordinate_mean.{i}" for i in range(pts.shape[1])], vals
    if kind == "coordinate_square":
        vals = w @ (pts * pts)
        return [f"coordinate_square.{i}" for i in range(pts.shape[1])], vals
    if kind == "random_cosine":
        if omega is None or offset is None:
            raise ValueError("random_cosine needs omega and offset")
        val = float(w @ np.cos(pts @ omega + offset))
        return ["random_cosine"], np.array([val])
    raise ValueError(f"unknown test function {kind!r}")


def _truth_values(ctx: _RunContext, kind: str, omega, offset) -> np.ndarray:
    if kind == "coordinate_mean":
        return np.asarray(ctx.ground.mean, dtype=float)
    if kind == "coordinate_square":
        return np.asarray(ctx.ground.second_moment, dtype=float)
    if kind == "random_cosine":
        return np.array([ctx.ground.cosine(omega, offset)])
    raise ValueError(f"unknown test function {kind!r}")


def _scheme_weights(
    ctx: _RunContext,
    scheme: dict,
    points: np.ndarray,
    gram: SteinGram | None,
) -> tuple[np.ndarray, int]:
    """Compute one scheme's weights; returns (weights, solver iterations)."""
    kind = scheme["kind"]
    n = points.shape[0]
    if kind == "uniform":
        return baselines.weights_uniform(n), 0
    if kind == "exact_is":
        return (
            baselines.weights_exact_is(ctx.target, ctx.proposal_log_density, points),
            0,
        )
    if kind == "stein":
        if gram is None:
            raise UnsupportedConfigurationError("stein scheme needs a Gram matrix")
        problem = simplex_qp.QpProblem(
            gram=gram, lower_bound=float(scheme.get("lower_bound", 0.0))
        )
        solution = simplex_qp.solve(
            problem,
            method=scheme.get("solver", "auto"),
            max_iters=scheme.get("max_iters"),
            tol=scheme.get("tol"),
        )
        return solution.weights, solution.iterations
    if kind in ("control_functional", "control_functional_normalized"):
        if gram is None:
            raise UnsupportedConfigurationError(
                "control functional weights need a Gram matrix"
            )
        lam = scheme.get("lam")
        return (
            baselines.weights_control_functional(
                gram,
                lam=None if lam is None else float(lam),
                normalize=kind.endswith("normalized"),
            ),
            0,
        )
    if kind in ("kde", "kde_normalized"):
        bandwidth = scheme.get("bandwidth")
        return (
            baselines.weights_kde(
                ctx.target,
                points,
                bandwidth=None if bandwidth is None else float(bandwidth),
                normalize=kind.endswith("normalized"),
            ),
            0,
        )
    raise ValueError(f"unknown scheme kind {kind!r}")


def _failed_records(ctx: _RunContext, n: int, trial: int, scheme_label: str) -> list:
    records = []
    d = ctx.target.dimension
    nan = float("nan")
    for fn in ctx.config.test_functions:
        if fn == "random_cosine":
            ids = ["random_cosine"]
        else:
            ids = [f"{fn}.{i}" for i in range(d)]
        for rid in ids:
            records.append(
                ExperimentRecord(
                    scheme=scheme_label,
                    n=n,
                    trial=trial,
                    test_fn=rid,
                    estimate=nan,
                    sq_error=nan,
                    ksd=nan,
                    iterations=0,
                    wall_ms=0.0,
                    status="failed",
                )
            )
    return records


def _trial_records(ctx: _RunContext, n: int, trial: int) -> list:
    cfg = ctx.config
    root = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(n, trial))
    points_ss, fn_ss = root.spawn(2)
    fn_rng = np.random.default_rng(fn_ss)
    omega = offset = None
    try:
        points = _sample_points(ctx, n, points_ss)
        bandwidth = median_heuristic_bandwidth(points)
        kernel = RbfKernel(bandwidth)
        gram = stein_gram(ctx.target, kernel, points)
    except SteinWeightsError:
        return [
            rec
            for s in cfg.schemes
            for rec in _failed_records(ctx, n, trial, s.get("label", s["kind"]))
        ]
    if "random_cosine" in cfg.test_functions:
        omega = fn_rng.standard_normal(ctx.target.dimension)
        offset = float(fn_rng.uniform(0.0, 2.0 * np.pi))
    records = []
    ksd_by_kind: dict[str, float] = {}
    for scheme in cfg.schemes:
        label = scheme.get("label", scheme["kind"])
        start = time.perf_counter()
        try:
            weights, iterations = _scheme_weights(ctx, scheme, points, gram)
        except SteinWeightsError:
            records.extend(_failed_records(ctx, n, trial, label))
            continue
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        wall_ms = elapsed_ms if cfg.record_timing else 0.0
        ksd_val = ksd_weighted(gram, weights)
        if scheme["kind"] in ("uniform", "exact_is", "stein"):
            ksd_by_kind.setdefault(scheme["kind"], ksd_val)
        for fn in cfg.test_functions:
            ids, estimates = evaluate_test_function(fn, points, weights, omega, offset)
            truths = _truth_values(ctx, fn, omega, offset)
            for rid, est, truth in zip(ids, estimates, truths):
                err = (float(est) - float(truth)) ** 2
                records.append(
                    ExperimentRecord(
                        scheme=label,
                        n=n,
                        trial=trial,
                        test_fn=rid,
                        estimate=float(est),
                        sq_error=err,
                        ksd=ksd_val,
                        iterations=int(iterations),
                        wall_ms=wall_ms,
                        status="ok",
                        ground_truth=float(truth),
                    )
                )
    if "stein" in ksd_by_kind:
        for other in ("uniform", "exact_is"):
            if other in ksd_by_kind:
                if ksd_by_kind["stein"] > ksd_by_kind[other] + _DOMINANCE_SLACK:
                    raise DominanceError(
                        f"stein weights lost to {other} on trial {trial} at n={n}: "
                        f"{ksd_by_kind['stein']:.6e} > {ksd_by_kind[other]:.6e}"
                    )
    return records


@lru_cache(maxsize=4)
def _cached_context(cfg_json: str) -> _RunContext:
    import json

    data = json.loads(cfg_json)
    ground_payload = data.pop("_ground_payload", None)
    cfg = ExperimentConfig.from_dict(data)
    ground = None
    if ground_payload is not None:
        ground = GroundTruth(
            mean=np.asarray(ground_payload["mean"]),
            second_moment=np.asarray(ground_payload["second_moment"]),
            thinned=None
            if ground_payload["thinned"] is None
            else np.asarray(ground_payload["thinned"]),
        )
    return _build_context(cfg, ground=ground)


def _worker_trial(args) -> list:
    cfg_json, n, trial = args
    ctx = _cached_context(cfg_json)
    return _trial_records(ctx, n, trial)


def _parallel_degree() -> int:
    raw = os.environ.get(PARALLEL_ENV_VAR, "").strip()
    if not raw:
        return 1
    degree = int(raw)
    if degree < 0:
        raise ValueError(f"{PARALLEL_ENV_VAR} must be a nonnegative integer")
    if degree == 0:
        return os.cpu_count() or 1
    return degree


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: list
    ground: GroundTruth

    def records_path(self) -> str | None:
        if self.config.output_dir is None:
            return None
        return os.path.join(self.config.output_dir, "records.csv")


def _record_sort_key(rec: ExperimentRecord):
    return (rec.scheme, rec.n, rec.trial, rec.test_fn)


def run_experiment(config) -> ExperimentResult:
    """Execute a full experiment; returns records, summary, and ground truth.

    Parallelism over trials is controlled by the STEINWEIGHTS_PARALLEL
    environment variable (unset or 1 = serial, 0 = one worker per CPU).
    Output is identical regardless of the degree.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    ctx = _build_context(cfg)
    jobs = [(n, t) for n in cfg.n_grid for t in range(cfg.trials)]
    degree = _parallel_degree()
    if degree > 1 and len(jobs) > 1:
        import json

        payload = cfg.to_dict()
        if cfg.ground_truth is not None and cfg.ground_truth.get("kind") == "mala_oracle":
            payload["_ground_payload"] = {
                "mean": ctx.ground.mean.tolist(),
                "second_moment": ctx.ground.second_moment.tolist(),
                "thinned": None
                if ctx.ground.thinned is None
                else ctx.ground.thinned.tolist(),
            }
        cfg_json = json.dumps(payload, sort_keys=True)
        args = [(cfg_json, n, t) for n, t in jobs]
        # Spawned workers sidestep the fork-under-BLAS-threads deadlock.
        mp_ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=degree, mp_context=mp_ctx) as pool:
            chunks = list(pool.map(_worker_trial, args, chunksize=8))
        records = [rec for chunk in chunks for rec in chunk]
    else:
        records = [rec for n, t in jobs for rec in _trial_records(ctx, n, t)]
    records.sort(key=_record_sort_key)
    summary = summarize(records)
    result = ExperimentResult(cfg, records, summary, ctx.ground)
    if cfg.output_dir is not None:
        os.makedirs(cfg.output_dir, exist_ok=True)
        write_records_csv(os.path.join(cfg.output_dir, "records.csv"), records)
        write_summary_csv(os.path.join(cfg.output_dir, "summary.csv"), summary)
    return result


def _family(test_fn: str) -> str:
    head, _, tail = test_fn.rpartition(".")
    if head and tail.isdigit():
        return head
    return test_fn


def summarize(records) -> list:
    """Aggregate records into per (scheme, test family, n) MSE rows.

    Vector test functions pool their per-coordinate squared errors, so the
    MSE is the mean over coordinates and trials. Failed trials are counted
    and excluded.
    """
    groups: dict[tuple, list] = {}
    for rec in records:
        groups.setdefault((rec.scheme, _family(rec.test_fn), rec.n), []).append(rec)
    rows = []
    for (scheme, fam, n), recs in sorted(groups.items()):
        ok = [r for r in recs if r.status == "ok"]
        failed_trials = {r.trial for r in recs if r.status != "ok"}
        ok_trials = {r.trial for r in ok}
        mse = float(np.mean([r.sq_error for r in ok])) if ok else float("nan")
        rows.append(
            SummaryRow(
                scheme=scheme,
                test_fn=fam,
                n=n,
                mse=mse,
                trials_ok=len(ok_trials),
                trials_failed=len(failed_trials),
            )
        )
    return rows


def rate_fit(summary, scheme: str, test_fn: str) -> RateFit:
    """Slope and standard error of log MSE versus log n for one scheme.

    Rows with zero, negative, or non-finite MSE cannot enter the log fit;
    they are excluded and counted in ``excluded``.
    """
    pairs = [
        (row.n, row.mse)
        for row in summary
        if row.scheme == scheme and row.test_fn == test_fn
    ]
    if not pairs:
        raise ValueError(f"no summary rows for scheme {scheme!r} and {test_fn!r}")
    usable = [(n, m) for n, m in pairs if np.isfinite(m) and m > 0.0]
    excluded = len(pairs) - len(usable)
    if len(usable) < 2:
        raise ValueError("rate fit needs at least two usable (n, mse) points")
    x = np.log(np.array([n for n, _ in usable], dtype=float))
    y = np.log(np.array([m for _, m in usable], dtype=float))
    x_bar = x.mean()
    y_bar = y.mean()
    sxx = float(np.sum((x - x_bar) ** 2))
    slope = float(np.sum((x - x_bar) * (y - y_bar)) / sxx)
    intercept = y_bar - slope * x_bar
    resid = y - intercept - slope * x
    dof = len(usable) - 2
    if dof > 0:
        stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx))
    else:
        stderr = float("nan")
    return RateFit(slope=slope, stderr=stderr, n_points=len(usable), excluded=excluded)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(path, records) -> None:
    """Write records in canonical order with a pinned column set.

    Floats are rendered with shortest round-trip repr, so two runs of the
    same config produce byte-identical files.
    """
    ordered = sorted(records, key=_record_sort_key)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for rec in ordered:
            writer.writerow(
                [
                    rec.scheme,
                    rec.n,
                    rec.trial,
                    rec.test_fn,
                    _fmt(rec.estimate),
                    _fmt(rec.sq_error),
                    _fmt(rec.ksd),
                    rec.iterations,
                    _fmt(rec.wall_ms),
                    rec.status,
                ]
            )


def write_summary_csv(path, summary) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "test_fn", "n", "mse", "trials_ok", "trials_failed"])
        for row in sorted(summary, key=lambda r: (r.scheme, r.test_fn, r.n)):
            writer.writerow(
                [row.scheme, row.test_fn, row.n, _fmt(row.mse), row.trials_ok, row.trials_failed]
            )


def write_points(path, points: np.ndarray) -> None:
    """Write a point set as delimited text, one row per point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(pts.shape[1])])
        for row in pts:
            writer.writerow([repr(float(v)) for v in row])


def read_points(path) -> np.ndarray:
    """Read a delimited point set; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError("point file is empty")
    start = 0
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        start = 1
    if start == len(rows):
        raise ValueError("point file has a header but no data rows")
    return np.array([[float(v) for v in row] for row in rows[start:]])
