"""Experiment orchestration: (algorithm x environment x replication) grids.

Every replication draws a fresh instance from the configured prior and runs
each algorithm on that same instance. Seeds derive from the master seed by
counter (SplitMix64 mixing), never from scheduling, so results are
identical at any parallelism level. Within a replication all algorithms
share the environment stream (common random numbers for attraction draws)
while each gets its own policy-sampling stream.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import envgen
from .cascade import expected_cascade_reward
from .envgen import BanditInstance, PriorSpec, misspecified_prior
from .policies import (
    POLICY_NAMES,
    bayes_ucb_policy,
    cascade_klucb_policy,
    cascade_linucb_policy,
    cascade_ucb1_policy,
    default_horizon_delta,
    glmts_policy,
    gts_policy,
    lints_policy,
    newton_glmts_policy,
    oracle_policy,
    ts_beta_policy,
)

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "SweepTable",
    "run_experiment",
    "run_misspecification_sweep",
    "emit_csv",
    "parse_csv",
    "emit_plot_data",
    "emit_sweep_csv",
    "derive_seed",
    "checkpoint_rounds",
]

CSV_HEADER = "algorithm,round,mean_cum_regret,stderr,n_reps"
THREADS_ENV_VAR = "CASCADE_BANDITS_THREADS"

# sub-stream tags for counter-based seed derivation
_STREAM_INSTANCE = 0
_STREAM_ENV = 1
_STREAM_POLICY = 2

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, *indices: int) -> int:
    """Mix the master seed with counter indices into a 64-bit stream seed."""
    z = _splitmix64(master_seed & _MASK64)
    for idx in indices:
        z = _splitmix64(z ^ (idx & _MASK64))
    return z


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid; defaults match the standard synthetic setting."""

    kind: str = "bernoulli"  # bernoulli | linear | logistic | instances
    instance_file: str = ""
    L: int = 30
    K: int = 3
    d: int = 5
    T: int = 10000
    lam: float = 1e-4
    replications: int = 100
    seed: int = 0
    algorithms: tuple = ("gts", "ts-beta")
    alg_params: dict = field(default_factory=dict)
    log_every: int = 100
    parallelism: int = 1
    strict: bool = False
    # prior fed to prior-informed algorithms when sweeping misspecification;
    # the truth stays Beta(1, 10)
    misspecification_c: int | None = None
    linear_feedback: str = "bernoulli"
    noise_std: float = 0.1
    click_threshold: float = 0.5
    out_csv: str = "results.csv"
    emit_figure: bool = True

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        known = set(POLICY_NAMES) | {"oracle"}
        for name in self.algorithms:
            if name not in known:
                raise ValueError(f"unknown algorithm {name!r}; see list-algorithms")
        if self.kind not in ("bernoulli", "linear", "logistic", "instances"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.kind == "instances" and not self.instance_file:
            raise ValueError("kind 'instances' needs instance_file")

    def params_for(self, algorithm: str) -> dict:
        return dict(self.alg_params.get(algorithm, {}))

    def semantic_dict(self) -> dict:
        """Fields that influence the numbers (not where they are written)."""
        doc = dataclasses.asdict(self)
        for key in ("parallelism", "out_csv", "emit_figure", "strict"):
            doc.pop(key)
        doc["algorithms"] = list(self.algorithms)
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ResultTable:
    """Aggregated regret curves: per algorithm and checkpoint round."""

    rounds: np.ndarray
    series: dict  # algorithm -> {"mean": array, "stderr": array, "n_reps": int}
    metadata: dict = field(default_factory=dict)

    @property
    def algorithms(self) -> list:
        return list(self.series)

    def final_regret(self, algorithm: str) -> float:
        return float(self.series[algorithm]["mean"][-1])

    def __eq__(self, other):
        if not isinstance(other, ResultTable):
            return NotImplemented
        if not np.array_equal(self.rounds, other.rounds):
            return False
        if list(self.series) != list(other.series):
            return False
        for alg in self.series:
            a, b = self.series[alg], other.series[alg]
            if a["n_reps"] != b["n_reps"]:
                return False
            if not (np.array_equal(a["mean"], b["mean"]) and np.array_equal(a["stderr"], b["stderr"])):
                return False
        return True


@dataclass
class SweepTable:
    """Misspecification sweep: one ResultTable per shift level c."""

    c_values: tuple
    tables: dict  # c -> ResultTable
    metadata: dict = field(default_factory=dict)

    def final_regret(self, algorithm: str, c: int) -> float:
        return self.tables[c].final_regret(algorithm)


def checkpoint_rounds(T: int, log_every: int) -> np.ndarray:
    rounds = list(range(log_every, T + 1, log_every))
    if not rounds or rounds[-1] != T:
        rounds.append(T)
    return np.asarray(rounds, dtype=int)


def _draw_instance(config: ExperimentConfig, rng: np.random.Generator) -> BanditInstance:
    if config.kind == "bernoulli":
        if config.misspecification_c is None:
            beta1 = rng.integers(1, 11, size=config.L).astype(float)
            prior = PriorSpec(beta1, 10.0)
            means = rng.beta(beta1, 10.0)
        else:
            means = rng.beta(1.0, 10.0, size=config.L)
            prior = misspecified_prior(config.misspecification_c)
        return BanditInstance("bernoulli", config.L, config.K, means=means, prior=prior)
    if config.kind == "linear":
        return envgen.sample_linear_instance(
            config.L,
            config.K,
            config.d,
            rng,
            feedback_mode=config.linear_feedback,
            noise_std=config.noise_std,
            click_threshold=config.click_threshold,
        )
    if config.kind == "logistic":
        return envgen.sample_logistic_instance(config.L, config.K, config.d, rng)
    raise ValueError(f"cannot draw instances for kind {config.kind!r}")


def _instance_priors(instance: BanditInstance, params: dict):
    if "prior_alpha" in params or "prior_beta" in params:
        a, b = float(params.pop("prior_alpha", 1.0)), float(params.pop("prior_beta", 1.0))
        return np.full(instance.L, a), np.full(instance.L, b)
    if instance.prior is not None:
        return instance.prior.item_arrays(instance.L)
    return np.ones(instance.L), np.ones(instance.L)


def build_policy(name: str, instance: BanditInstance, config: ExperimentConfig, rng):
    """Construct one policy for one instance from the config's parameters."""
    params = config.params_for(name)
    L, K, d = instance.L, instance.K, instance.d
    lam = float(params.pop("lam", config.lam))
    if name == "gts":
        return gts_policy(
            L,
            K,
            prior_mean=float(params.pop("prior_mean", 0.0)),
            prior_var=float(params.pop("prior_var", 1.0)),
            noise_var=float(params.pop("noise_var", 1.0)),
            rng=rng,
        )
    if name in ("ts-beta", "bayes-ucb"):
        alphas, betas = _instance_priors(instance, params)
        maker = ts_beta_policy if name == "ts-beta" else bayes_ucb_policy
        return maker(L, K, alphas, betas, rng=rng)
    if name == "cascade-ucb1":
        return cascade_ucb1_policy(L, K, rng=rng)
    if name == "cascade-klucb":
        return cascade_klucb_policy(L, K, rng=rng)
    if name == "oracle":
        return oracle_policy(instance.means, K, rng=rng)
    if name == "newton-glmts":
        return newton_glmts_policy(
            d,
            K,
            step_size=float(params.pop("step_size", 1.0)),
            sample_scale=float(params.pop("sample_scale", 1.0)),
            rng=rng,
        )
    # ellipsoid-based policies share the radius parameterization
    radius_kw = dict(
        S=float(params.pop("S", 1.0)),
        sigma_sq=float(params.pop("sigma_sq", 0.25)),
        delta=float(params.pop("delta", default_horizon_delta(config.T))),
        radius_prefactor=str(params.pop("radius_prefactor", "sigma_sq")),
    )
    if name == "lints":
        return lints_policy(d, K, lam, rng=rng, **radius_kw)
    if name == "cascade-linucb":
        scale = params.pop("confidence_scale", None)
        scale = None if scale in (None, "auto") else float(scale)
        return cascade_linucb_policy(d, K, lam, confidence_scale=scale, rng=rng, **radius_kw)
    if name == "glmts":
        from .glm import get_link

        return glmts_policy(
            d,
            K,
            lam,
            link=get_link(str(params.pop("link", "sigmoid"))),
            refit_every=int(params.pop("refit_every", 1)),
            irls_tol=float(params.pop("irls_tol", 1e-8)),
            irls_max_iter=int(params.pop("irls_max_iter", 100)),
            rng=rng,
            **radius_kw,
        )
    raise ValueError(f"unknown algorithm {name!r}")


def _simulate_replication(args):
    """Run every algorithm on one freshly drawn instance.

    Returns (rep_index, {algorithm: cum-regret-at-checkpoints}) or
    (rep_index, {"__error__": (algorithm, message)}) when one fails.
    """
    rep, config, instances = args
    inst_rng = np.random.default_rng(derive_seed(config.seed, _STREAM_INSTANCE, rep))
    if instances is not None:
        instance = instances[rep % len(instances)]
    else:
        instance = _draw_instance(config, inst_rng)
    rounds = checkpoint_rounds(config.T, config.log_every)
    # the linear model's reward is the sum of item-level rewards, so its
    # regret is the top-K-sum gap rather than the cascade (any-click) gap
    use_linear_regret = instance.kind == "linear"
    out = {}
    for alg_index, name in enumerate(config.algorithms):
        env_rng = np.random.default_rng(derive_seed(config.seed, _STREAM_ENV, rep))
        pol_rng = np.random.default_rng(derive_seed(config.seed, _STREAM_POLICY, rep, alg_index))
        try:
            policy = build_policy(name, instance, config, pol_rng)
            out[name] = _run_policy(
                policy, instance, config.T, rounds, env_rng, use_linear_regret
            )
        except Exception as exc:  # noqa: BLE001 - diagnostics recorded upstream
            return rep, {"__error__": (name, f"{type(exc).__name__}: {exc}")}
    return rep, out


def _run_policy(policy, instance, T, checkpoints, env_rng, use_linear_regret):
    means = instance.means
    if use_linear_regret:
        best = float(np.sort(means)[::-1][: instance.K].sum())
    else:
        best = expected_cascade_reward(np.sort(means)[::-1][: instance.K])
    is_checkpoint = np.zeros(T + 1, dtype=bool)
    is_checkpoint[checkpoints] = True
    record = np.empty(len(checkpoints))
    cum = 0.0
    ck = 0
    redraw = instance.redraw_features
    context = instance.features
    for t in range(1, T + 1):
        if redraw:
            context, means = instance.round_context(env_rng)
            if use_linear_regret:
                best = float(np.sort(means)[::-1][: instance.K].sum())
            else:
                best = expected_cascade_reward(np.sort(means)[::-1][: instance.K])
        action = policy.select(context)
        feedback = envgen.env_step(instance, action, env_rng, means=means)
        policy.update(action, feedback)
        chosen = means[list(action.items)]
        played = float(chosen.sum()) if use_linear_regret else expected_cascade_reward(chosen)
        cum += best - played
        if is_checkpoint[t]:
            record[ck] = cum
            ck += 1
    return record


def _effective_parallelism(config: ExperimentConfig) -> int:
    override = os.environ.get(THREADS_ENV_VAR)
    if override:
        return max(1, int(override))
    return max(1, config.parallelism)


def _load_instances(config: ExperimentConfig):
    if config.kind != "instances":
        return None
    with open(config.instance_file) as fh:
        docs = json.load(fh)
    instances = [BanditInstance.from_dict(doc) for doc in docs]
    if not instances:
        raise ValueError(f"no instances in {config.instance_file}")
    return instances


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Run the grid and aggregate mean/stderr regret at every checkpoint.

    A failing algorithm aborts its whole replication (all algorithms), which
    is dropped from aggregation with a recorded diagnostic unless ``strict``
    is set, in which case the failure is raised.
    """
    started = time.time()
    instances = _load_instances(config)
    tasks = [(rep, config, instances) for rep in range(config.replications)]
    workers = _effective_parallelism(config)
    if workers == 1:
        raw = [_simulate_replication(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_simulate_replication, tasks, chunksize=1))
    raw.sort(key=lambda pair: pair[0])

    failures = []
    kept = []
    for rep, payload in raw:
        if "__error__" in payload:
            alg, message = payload["__error__"]
            if config.strict:
                raise RuntimeError(f"replication {rep}, algorithm {alg}: {message}")
            failures.append({"replication": rep, "algorithm": alg, "message": message})
        else:
            kept.append(payload)
    if not kept:
        raise RuntimeError("every replication failed; nothing to aggregate")

    rounds = checkpoint_rounds(config.T, config.log_every)
    series = {}
    for name in config.algorithms:
        matrix = np.stack([payload[name] for payload in kept])
        n = matrix.shape[0]
        stderr = matrix.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(rounds))
        series[name] = {"mean": matrix.mean(axis=0), "stderr": stderr, "n_reps": n}
    metadata = {
        "config_hash": config.config_hash(),
        "master_seed": config.seed,
        "git": _git_describe(),
        "wall_time_s": round(time.time() - started, 3),
        "failures": failures,
    }
    return ResultTable(rounds, series, metadata)


def run_misspecification_sweep(
    config: ExperimentConfig, c_values=None, T: int = 1000
) -> SweepTable:
    """Rerun the bernoulli grid feeding Beta(1+c, 10-c) priors at each c.

    The true means always come from Beta(1, 10); prior-agnostic algorithms
    see identical instances and seeds at every c.
    """
    if config.kind != "bernoulli":
        raise ValueError("the misspecification sweep runs on the bernoulli environment")
    c_values = tuple(range(9)) if c_values is None else tuple(int(c) for c in c_values)
    tables = {}
    for c in c_values:
        sub = dataclasses.replace(config, T=T, misspecification_c=c)
        tables[c] = run_experiment(sub)
    metadata = {
        "config_hash": config.config_hash(),
        "master_seed": config.seed,
        "T": T,
        "c_values": list(c_values),
    }
    return SweepTable(c_values, tables, metadata)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def emit_csv(table: ResultTable, path) -> None:
    """Write `algorithm,round,mean_cum_regret,stderr,n_reps` rows.

    Floats are repr-formatted so the file parses back bit-exactly.
    """
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for alg, data in table.series.items():
            for i, rnd in enumerate(table.rounds):
                fh.write(
                    f"{alg},{int(rnd)},{float(data['mean'][i])!r},"
                    f"{float(data['stderr'][i])!r},{data['n_reps']}\n"
                )


def parse_csv(path) -> ResultTable:
    """Read a results CSV back into a ResultTable (metadata-free)."""
    series: dict = {}
    rounds: list[int] = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        for line in fh:
            alg, rnd, mean, stderr, n = line.rstrip("\n").split(",")
            entry = series.setdefault(alg, {"rounds": [], "mean": [], "stderr": [], "n_reps": int(n)})
            entry["rounds"].append(int(rnd))
            entry["mean"].append(float(mean))
            entry["stderr"].append(float(stderr))
    if not series:
        raise ValueError(f"no data rows in {path}")
    first = next(iter(series.values()))
    rounds = np.asarray(first["rounds"], dtype=int)
    out = {}
    for alg, entry in series.items():
        if entry["rounds"] != first["rounds"]:
            raise ValueError("checkpoint rounds differ across algorithms")
        out[alg] = {
            "mean": np.asarray(entry["mean"]),
            "stderr": np.asarray(entry["stderr"]),
            "n_reps": entry["n_reps"],
        }
    return ResultTable(rounds, out)


def emit_plot_data(table: ResultTable, path) -> None:
    """Per-algorithm (x, y, y_err) blocks in gnuplot's whitespace format."""
    with open(path, "w") as fh:
        for block, (alg, data) in enumerate(table.series.items()):
            if block:
                fh.write("\n\n")
            fh.write(f"# algorithm: {alg}\n")
            fh.write("# round mean_cum_regret stderr\n")
            for i, rnd in enumerate(table.rounds):
                fh.write(f"{int(rnd)} {float(data['mean'][i])!r} {float(data['stderr'][i])!r}\n")


def emit_sweep_csv(sweep: SweepTable, path) -> None:
    """Final regret per (algorithm, c): `algorithm,c,final_mean_regret,stderr,n_reps`."""
    with open(path, "w") as fh:
        fh.write("algorithm,c,final_mean_regret,stderr,n_reps\n")
        algorithms = sweep.tables[sweep.c_values[0]].algorithms
        for alg in algorithms:
            for c in sweep.c_values:
                data = sweep.tables[c].series[alg]
                fh.write(
                    f"{alg},{c},{float(data['mean'][-1])!r},"
                    f"{float(data['stderr'][-1])!r},{data['n_reps']}\n"
                )
