"""Training loops, posterior summaries and run comparison."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data.io import config_hash, format_float, read_json, read_matrix, write_json, write_matrix
from .data.sets import Problem
from .hyper import HyperState, PriorConfig, SmoothingStep, init_hyper, update_hyper
from .model import Batch, LayerSpec, Network, ParamState, forward, grad_q_and_sse, init_params
from .numcore import RngStream
from .sampler import (
    PreconditionerState,
    SamplerConfig,
    ScheduleSet,
    prune,
    sparse_rate,
    step_psgld,
    step_sgld,
    validate_schedules,
)

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "epsilon", "omega", "alpha", "sigma", "mean_rho", "sparse_rate", "train_loss")


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, iteration: int, trace_tail: list):
        super().__init__(message)
        self.iteration = iteration
        self.trace_tail = trace_tail


class ConfigError(ValueError):
    pass


def _reject_unknown(cls, d: dict, where: str):
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


@dataclass
class RunConfig:
    """Everything that determines a run.

    ``model`` is either ``{"kind": "linear"}``, ``{"kind": "mlp", "hidden": [...],
    "activation": "tanh", "sparse_from": -1}`` or ``{"layers": [LayerSpec dicts]}``.
    ``sparse_rate`` (percent) is a shorthand for a one-event prune plan at 60%
    of the iterations, used when ``sampler.prune_plan`` is empty.
    """

    model: dict = field(default_factory=lambda: {"kind": "linear"})
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    batch_size: int = 50
    iterations: int = 10_000
    seed: int = 0
    eval_every: int = 100
    trace_every: int = 10
    sparse_rate: float = 0.0
    delta0: float = 0.5
    sigma_init: float = 1.0
    store_samples: bool = True
    check_invariants: bool = False
    label: str = ""
    data: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if not 0 <= self.sparse_rate < 100:
            raise ConfigError("sparse_rate must lie in [0, 100)")
        if not 0 < self.delta0 < 1:
            raise ConfigError("delta0 must lie in (0, 1)")
        burn = self.sampler.burn_in
        if burn is not None and self.iterations and not 0 <= burn < self.iterations:
            raise ConfigError("burn_in must be smaller than the iteration count")

    @property
    def name(self) -> str:
        return self.label or self.sampler.variant

    def prune_plan(self) -> list[tuple[int, float]]:
        if self.sampler.prune_plan:
            return [(int(k), float(s)) for k, s in self.sampler.prune_plan]
        if self.sparse_rate > 0 and self.iterations > 0:
            return [(max(1, int(0.6 * self.iterations)), float(self.sparse_rate))]
        return []

    def burn_in(self) -> int:
        """Explicit burn-in, or half the run extended past the last prune event."""
        if self.sampler.burn_in is not None:
            return int(self.sampler.burn_in)
        plan = self.prune_plan()
        last = plan[-1][0] if plan else 0
        return min(max(self.iterations // 2, last), max(self.iterations - 1, 0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sampler"]["prune_plan"] = [list(x) for x in self.sampler.prune_plan]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = dict(d)
        _reject_unknown(cls, d, "run config")
        s = dict(d.pop("sampler", {}))
        _reject_unknown(SamplerConfig, s, "sampler")
        sched = dict(s.pop("schedules", {}))
        _reject_unknown(ScheduleSet, sched, "sampler.schedules")
        pr = dict(d.pop("prior", {}))
        _reject_unknown(PriorConfig, pr, "prior")
        try:
            sampler = SamplerConfig(
                schedules=ScheduleSet(**sched),
                **{k: (tuple(tuple(x) for x in v) if k == "prune_plan" else v) for k, v in s.items()},
            )
            return cls(sampler=sampler, prior=PriorConfig(**pr), **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir", None)
        return config_hash(d)


def build_network(model: dict, n_in: int, n_out: int) -> Network:
    if "layers" in model:
        return Network([LayerSpec(**l) for l in model["layers"]])
    kind = model.get("kind", "linear")
    if kind == "linear":
        if n_out != 1:
            raise ConfigError("linear model needs a single output")
        return Network.linear(n_in)
    if kind == "mlp":
        widths = [n_in, *model.get("hidden", [64]), n_out]
        return Network.mlp(widths, model.get("activation", "tanh"), model.get("sparse_from", -1))
    raise ConfigError(f"unknown model kind {kind!r}")


@dataclass
class RunResult:
    label: str
    variant: str
    eval_iterations: list[int]
    curves: dict[str, list[float]]
    samples: np.ndarray | None
    sample_count: int
    posterior_mean: np.ndarray
    final_params: ParamState
    final_hyper: HyperState
    sparse_rate: float
    final_metrics: dict[str, float]
    posterior_metrics: dict[str, float]
    trace: list[tuple]
    wall_clock: float
    seed: int
    config_hash: str
    config: dict = field(default_factory=dict)
    invariant_violations: int = 0
    sparse_rate_history: list[float] = field(default_factory=list)


def _minibatches(rng: np.random.Generator, n_total: int, size: int):
    """Endless stream of index arrays; each epoch is a fresh permutation."""
    size = min(size, n_total)
    while True:
        perm = rng.permutation(n_total)
        for start in range(0, n_total - size + 1, size):
            yield perm[start : start + size]


def train(config: RunConfig, problem: Problem) -> RunResult:
    """Run one chain.

    Each iteration draws a minibatch, takes the log-posterior gradient, applies an SGLD
    or preconditioned step, optionally refreshes the latent variables, and
    executes due prune events.  All randomness comes from the chain stream
    ``RngStream(seed, 0)``; evaluation uses none.
    """
    # divergence is detected explicitly; silence numpy's overflow chatter
    with np.errstate(over="ignore", invalid="ignore"):
        return _train(config, problem)


def _train(config: RunConfig, problem: Problem) -> RunResult:
    violations = validate_schedules(config.sampler.schedules)
    if violations:
        raise ConfigError("schedule violations: " + "; ".join(violations))
    if config.batch_size > problem.n_train:
        raise ConfigError("batch_size exceeds the training set size")
    t0 = time.perf_counter()
    sc, sched, prior = config.sampler, config.sampler.schedules, config.prior
    net = build_network(config.model, problem.x_train.shape[1], problem.y_train.shape[1])
    rng = RngStream(config.seed, 0).generator()
    params = init_params(net, rng)
    hyper = init_hyper(net, prior, config.delta0, config.sigma_init)
    pre = PreconditionerState.zeros(net.size, sc.eta, sc.v_convention, sc.freeze_preconditioner)
    N = problem.n_train
    # scalar observations: every output column is one Gaussian datum
    n_obs = N * problem.y_train.shape[1]
    batches = _minibatches(rng, N, config.batch_size)
    plan = dict(config.prune_plan())
    burn_in = config.burn_in()
    K = config.iterations

    eval_its: list[int] = []
    curves: dict[str, list[float]] = {}
    trace: list[tuple] = []
    samples = [] if config.store_samples else None
    count = 0
    beta_sum = np.zeros(net.size)
    pred_sum = np.zeros_like(problem.y_test)
    n_violations = 0
    rates = []

    def record_eval(k):
        eval_its.append(k)
        for key, val in problem.metrics(forward(params, net, problem.x_test)).items():
            curves.setdefault(key, []).append(val)

    for k in range(1, K + 1):
        idx = next(batches)
        batch = Batch(problem.x_train[idx], problem.y_train[idx], N)
        try:
            grad, sse = grad_q_and_sse(params, net, batch, hyper, prior)
            eps = float(sched.eps(k))
            noise = rng.standard_normal(net.size)
            alpha = float(sched.alpha(k))
            if sc.preconditioned:
                params, pre = step_psgld(params, grad, pre, eps, sc.tau, noise, alpha, k)
            else:
                params = step_sgld(params, grad, eps, sc.tau, noise, k)
            omega = float(sched.omega(k))
            if sc.adaptive:
                resid = forward(params, net, batch.inputs) - batch.targets
                rss = batch.scale * float(np.sum(resid * resid))
                if not np.isfinite(rss):
                    raise FloatingPointError(f"non-finite residual at iteration {k}")
                hyper = update_hyper(hyper, params, net, rss, SmoothingStep(omega), prior, n_obs)
                if config.check_invariants:
                    n_violations += len(hyper.violations(prior))
        except FloatingPointError as exc:
            raise DivergenceError(f"divergence at iteration {k}: {exc}", k, trace[-10:]) from exc
        if k in plan:
            params = prune(params, net, plan[k])
        rate = sparse_rate(params, net)
        if config.trace_every and k % config.trace_every == 0:
            mean_rho = float(hyper.rho.mean()) if hyper.rho.size else float("nan")
            trace.append((k, eps, omega, alpha, hyper.sigma, mean_rho, rate, sse / batch.inputs.shape[0]))
            rates.append(rate)
        if k % config.eval_every == 0:
            record_eval(k)
        if k > burn_in and (k - burn_in) % sc.thinning == 0:
            count += 1
            beta_sum += params.beta
            pred_sum += forward(params, net, problem.x_test)
            if samples is not None:
                samples.append(params.beta.copy())

    if count:
        post_mean = beta_sum / count
        post_metrics = problem.metrics(pred_sum / count)
    else:
        post_mean = params.beta.copy()
        post_metrics = problem.metrics(forward(params, net, problem.x_test))
    final_metrics = problem.metrics(forward(params, net, problem.x_test))
    return RunResult(
        label=config.name,
        variant=sc.variant,
        eval_iterations=eval_its,
        curves=curves,
        samples=np.array(samples) if samples else (np.zeros((0, net.size)) if samples is not None else None),
        sample_count=count,
        posterior_mean=post_mean,
        final_params=params,
        final_hyper=hyper,
        sparse_rate=sparse_rate(params, net),
        final_metrics=final_metrics,
        posterior_metrics=post_metrics,
        trace=trace,
        wall_clock=time.perf_counter() - t0,
        seed=config.seed,
        config_hash=config.hash(),
        config=config.to_dict(),
        invariant_violations=n_violations,
        sparse_rate_history=rates,
    )


@dataclass
class PosteriorSummary:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def posterior_summary(samples, level: float = 0.95) -> PosteriorSummary:
    """Coordinatewise mean and central ``level`` interval."""
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("posterior_summary needs at least two samples")
    tail = (1 - level) / 2
    lo, hi = np.quantile(s, [tail, 1 - tail], axis=0)
    return PosteriorSummary(s.mean(axis=0), lo, hi)


@dataclass
class MomentReport:
    mean: np.ndarray
    var: np.ndarray
    mean_se: np.ndarray
    var_se: np.ndarray
    n_samples: int


def _batch_means_se(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    n = x.shape[0] - x.shape[0] % n_batches
    if n < n_batches:
        return np.full(x.shape[1:], np.nan)
    bm = x[:n].reshape(n_batches, -1, *x.shape[1:]).mean(axis=1)
    return bm.std(axis=0, ddof=1) / np.sqrt(n_batches)


def analytic_target_diagnostic(
    mean,
    var,
    variant: str = "sgld",
    eps: float = 1e-3,
    n_samples: int = 100_000,
    burn_in: int = 10_000,
    seed: int = 0,
    tau: float = 1.0,
    schedules: ScheduleSet | None = None,
    eta: float = 1e-3,
) -> MomentReport:
    """Sample a diagonal Gaussian with full-batch gradients at constant ``eps``.

    ``schedules`` supplies only the preconditioner weights ``alpha_k``; the
    default ramps ``1 - alpha_k = 1/(k+1)`` so ``V`` becomes the running mean of
    the squared gradient.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.broadcast_to(np.asarray(var, dtype=float), mean.shape)
    d = mean.size
    if n_samples <= 0:
        return MomentReport(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), 0)
    schedules = schedules or ScheduleSet(omega_c1=1.0, omega_c2=1.0, omega_gamma=1.0, alpha_floor=0.9)
    rng = RngStream(seed, 0).generator()
    params = ParamState(np.zeros(d))
    pre = PreconditionerState.zeros(d, eta)
    draws = np.empty((n_samples, d))
    noise_all = rng.standard_normal((burn_in + n_samples, d))
    for k in range(1, burn_in + n_samples + 1):
        grad = -(params.beta - mean) / var
        if variant.startswith("psgld"):
            params, pre = step_psgld(params, grad, pre, eps, tau, noise_all[k - 1], float(schedules.alpha(k)), k)
        else:
            params = step_sgld(params, grad, eps, tau, noise_all[k - 1], k)
        if k > burn_in:
            draws[k - burn_in - 1] = params.beta
    centered = (draws - draws.mean(axis=0)) ** 2
    return MomentReport(
        draws.mean(axis=0),
        draws.var(axis=0),
        _batch_means_se(draws),
        _batch_means_se(centered),
        n_samples,
    )


@dataclass
class ComparisonRow:
    label: str
    final: float
    auc: float
    headline: float
    rank: int = 0


def compare_runs(results: list[RunResult], metric: str = "mse") -> list[ComparisonRow]:
    """Rank runs by the last learning-curve value, lower first.

    ``auc`` is the trapezoidal area under the curve divided by its iteration
    span and ``headline`` the metric of the posterior-mean prediction.  Runs
    without curve points sort last; ties keep label order.
    """
    if not results:
        return []
    cadence = results[0].eval_iterations
    for r in results[1:]:
        if r.eval_iterations != cadence:
            raise ValueError(f"evaluation cadence of {r.label!r} differs from {results[0].label!r}")
    rows = []
    for r in results:
        if metric not in r.posterior_metrics:
            raise ValueError(f"run {r.label!r} has no metric {metric!r}")
        curve = np.asarray(r.curves.get(metric, []), dtype=float)
        its = np.asarray(r.eval_iterations, dtype=float)
        final = float(curve[-1]) if curve.size else float("nan")
        if curve.size > 1:
            auc = float(np.sum((curve[1:] + curve[:-1]) * np.diff(its)) / 2 / (its[-1] - its[0]))
        else:
            auc = final
        rows.append(ComparisonRow(r.label, final, auc, float(r.posterior_metrics[metric])))
    rows.sort(key=lambda row: (np.isnan(row.final), 0.0 if np.isnan(row.final) else row.final, row.label))
    for i, row in enumerate(rows, 1):
        row.rank = i
    return rows


def comparison_csv(rows: list[ComparisonRow], metric: str) -> str:
    lines = [f"rank,label,{metric}_final,{metric}_posterior,{metric}_auc"]
    for r in rows:
        lines.append(f"{r.rank},{r.label},{format_float(r.final)},{format_float(r.headline)},{format_float(r.auc)}")
    return "\n".join(lines) + "\n"


# persistence -----------------------------------------------------------------


def _stamp(result: RunResult) -> str:
    return f"seed={result.seed} config_hash={result.config_hash}"


def save_run(result: RunResult, out_dir) -> Path:
    """Write curves.csv, trace.csv, posterior.csv (when samples were kept), summary.json, hyper.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted(result.curves)
    stamp = _stamp(result)
    lines = ["# " + stamp, ",".join(["iteration", *keys])]
    for i, it in enumerate(result.eval_iterations):
        lines.append(",".join([str(it), *(format_float(result.curves[k][i]) for k in keys)]))
    (out / "curves.csv").write_text("\n".join(lines) + "\n")

    lines = ["# " + stamp, ",".join(TRACE_COLUMNS)]
    for row in result.trace:
        lines.append(",".join([str(row[0]), *(format_float(v) for v in row[1:])]))
    (out / "trace.csv").write_text("\n".join(lines) + "\n")

    if result.samples is not None:
        write_matrix(out / "posterior.csv", result.samples, "posterior_beta", stamp)
    write_matrix(out / "posterior_mean.csv", result.posterior_mean, "posterior_mean_beta", stamp)
    mask = np.column_stack([result.final_params.beta, result.final_params.pruned])
    write_matrix(out / "final_beta.csv", mask, "beta_mask", stamp)
    (out / "hyper.json").write_text(result.final_hyper.to_json() + "\n")
    write_json(
        out / "summary.json",
        dict(
            label=result.label,
            variant=result.variant,
            seed=result.seed,
            config_hash=result.config_hash,
            config=result.config,
            sample_count=result.sample_count,
            sparse_rate=result.sparse_rate,
            final_metrics=result.final_metrics,
            posterior_metrics=result.posterior_metrics,
            invariant_violations=result.invariant_violations,
            wall_clock=result.wall_clock,
        ),
    )
    return out


def _read_table(path: Path) -> tuple[list[str], np.ndarray]:
    lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    rows = [list(map(float, l.split(","))) for l in lines[1:]]
    return header, np.array(rows).reshape(len(rows), len(header))


def load_run(run_dir) -> RunResult:
    """Rebuild a :class:`RunResult` from :func:`save_run` output."""
    run_dir = Path(run_dir)
    summary = read_json(run_dir / "summary.json")
    header, table = _read_table(run_dir / "curves.csv")
    curves = {k: table[:, i].tolist() for i, k in enumerate(header) if k != "iteration"}
    its = table[:, 0].astype(int).tolist() if table.size else []
    trace = []
    if (run_dir / "trace.csv").exists():
        _, tr = _read_table(run_dir / "trace.csv")
        trace = [(int(r[0]), *r[1:]) for r in tr]
    samples = read_matrix(run_dir / "posterior.csv") if (run_dir / "posterior.csv").exists() else None
    fb = read_matrix(run_dir / "final_beta.csv")
    hyper = HyperState.from_json((run_dir / "hyper.json").read_text())
    return RunResult(
        label=summary["label"],
        variant=summary["variant"],
        eval_iterations=its,
        curves=curves,
        samples=samples,
        sample_count=summary["sample_count"],
        posterior_mean=read_matrix(run_dir / "posterior_mean.csv").ravel(),
        final_params=ParamState(fb[:, 0], fb[:, 1].astype(bool)),
        final_hyper=hyper,
        sparse_rate=summary["sparse_rate"],
        final_metrics=summary["final_metrics"],
        posterior_metrics=summary["posterior_metrics"],
        trace=trace,
        wall_clock=summary["wall_clock"],
        seed=summary["seed"],
        config_hash=summary["config_hash"],
        config=summary["config"],
        invariant_violations=summary.get("invariant_violations", 0),
    )
