"""Feature-mask regression: how well masked features predict a value target.

A dataset is two folds of per-step rows (all agents' observations, the
state, the timestep, and a scalar target; by default the discounted
return-to-go of the recorded policy). For a given mask the harness zeroes
the masked features everywhere, fits a regressor on the training fold, and
reports validation metrics: the mean target, RMSE and MAE, their ratio, and
the RMSE gap to the ``nothing`` mask as a fraction of the mean target. The
timestep one-hot is appended after masking and is never masked, so a target
that is a pure function of time stays predictable under every mask.

The default regressor is closed-form ridge regression (deterministic and
exactly checkable against the normal equations); an iterative feed-forward
approximator with validation-based early stopping is available opt-in.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .episodes import run_episode, spec_to_dict
from .errors import ConfigError
from .observation import MASKS, ObservationLayout, StateLayout, apply_mask
from .policies import Policy
from .rng import derive_seed
from .scenario import ScenarioSpec
from .units import StatTable

DATASET_KIND = "skirmish-dataset"

# Desk-scale default fold sizes; the original-scale 8192/4096 are accepted.
DEFAULT_TRAIN_EPISODES = 512
DEFAULT_VAL_EPISODES = 256

TRAIN, VAL = 0, 1


@dataclass
class RegressionDataset:
    obs: np.ndarray       # (N, n_allies, obs_dim)
    state: np.ndarray     # (N, state_dim)
    timestep: np.ndarray  # (N,) int
    target: np.ndarray    # (N,) float
    episode: np.ndarray   # (N,) int
    fold: np.ndarray      # (N,) TRAIN or VAL
    obs_params: dict
    state_params: dict
    episode_limit: int
    gamma: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.target)
        for name in ("obs", "state", "timestep", "episode", "fold"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"dataset field {name!r} length mismatch")

    @property
    def obs_layout(self) -> ObservationLayout:
        return ObservationLayout.from_params(self.obs_params)

    @property
    def state_layout(self) -> StateLayout:
        return StateLayout.from_params(self.state_params)

    def fold_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold == fold)

    def save(self, path: str) -> None:
        header = {
            "kind": DATASET_KIND,
            "version": 1,
            "n": len(self.target),
            "obs_params": self.obs_params,
            "state_params": self.state_params,
            "episode_limit": self.episode_limit,
            "gamma": self.gamma,
            "meta": self.meta,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
            for i in range(len(self.target)):
                row = {
                    "t": int(self.timestep[i]),
                    "episode": int(self.episode[i]),
                    "fold": int(self.fold[i]),
                    "target": float(self.target[i]),
                    "obs": self.obs[i].tolist(),
                    "state": self.state[i].tolist(),
                }
                fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")

    @staticmethod
    def load(path: str) -> "RegressionDataset":
        with open(path, "r", encoding="utf-8") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: header line is not valid JSON") from exc
            if header.get("kind") != DATASET_KIND:
                raise ConfigError(f"{path}: not a regression dataset")
            obs, state, ts, target, episode, fold = [], [], [], [], [], []
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{lineno}: invalid JSON row") from exc
                obs.append(row["obs"])
                state.append(row["state"])
                ts.append(row["t"])
                target.append(row["target"])
                episode.append(row["episode"])
                fold.append(row["fold"])
        return RegressionDataset(
            obs=np.asarray(obs, dtype=np.float64),
            state=np.asarray(state, dtype=np.float64),
            timestep=np.asarray(ts, dtype=np.int64),
            target=np.asarray(target, dtype=np.float64),
            episode=np.asarray(episode, dtype=np.int64),
            fold=np.asarray(fold, dtype=np.int64),
            obs_params=header["obs_params"],
            state_params=header["state_params"],
            episode_limit=int(header["episode_limit"]),
            gamma=float(header["gamma"]),
            meta=header.get("meta", {}),
        )


def mc_returns(rewards: list[float], gamma: float) -> list[float]:
    """Discounted return-to-go; satisfies target_t = r_t + gamma * target_{t+1}."""
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _record_task(args):
    from .episodes import run_episode as _run
    from .scenario import parse_scenario
    from .units import load_stat_table

    spec_dict, policy, seed, opponent, stat_path = args
    table = load_stat_table(stat_path) if stat_path else None
    spec = parse_scenario(spec_dict, table)
    return _run(
        spec, policy, seed, opponent, stat_table=table,
        record_observations=True, record_states=True,
    )


def export_regression_dataset(
    policy: Policy,
    spec: ScenarioSpec,
    n_train: int = DEFAULT_TRAIN_EPISODES,
    n_val: int = DEFAULT_VAL_EPISODES,
    seed: int = 0,
    target: str = "mc_return",
    gamma: float = 0.99,
    opponent: str | None = None,
    stat_table: StatTable | None = None,
    stat_table_path: str | None = None,
    external_targets: list[list[float]] | None = None,
    jobs: int = 1,
) -> RegressionDataset:
    """Record episodes under ``policy`` and build the two-fold dataset.

    Episode seeds are independent, so recording parallelizes across
    ``jobs`` workers; row order is by episode index either way.
    """
    if n_train <= 0 or n_val <= 0:
        raise ConfigError("both folds need at least one episode")
    if target not in ("mc_return", "external"):
        raise ConfigError(f"unknown target kind {target!r}")
    if target == "external" and external_targets is None:
        raise ConfigError("target='external' requires external_targets")

    n_total = n_train + n_val
    ep_seeds = [derive_seed(seed, i) for i in range(n_total)]
    if jobs > 1:
        tasks = [
            (spec_to_dict(spec), policy, s, opponent, stat_table_path)
            for s in ep_seeds
        ]
        methods = multiprocessing.get_all_start_methods()
        ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
        with ctx.Pool(jobs) as pool:
            records = list(pool.imap(_record_task, tasks, chunksize=4))
    else:
        records = [
            run_episode(
                spec,
                policy,
                s,
                opponent,
                stat_table=stat_table,
                record_observations=True,
                record_states=True,
            )
            for s in ep_seeds
        ]

    obs_rows, state_rows, ts, tgt, epi, fold = [], [], [], [], [], []
    obs_params = state_params = None
    episode_limit = spec.episode_limit
    for i, record in enumerate(records):
        if target == "external":
            if i >= len(external_targets) or len(external_targets[i]) != record.length:
                raise ConfigError(
                    f"external targets for episode {i} do not match its length"
                )
            values = [float(v) for v in external_targets[i]]
        else:
            values = mc_returns(record.rewards, gamma)
        which = TRAIN if i < n_train else VAL
        for t in range(record.length):
            obs_rows.append(record.observations[t])
            state_rows.append(record.states[t])
            ts.append(t)
            tgt.append(values[t])
            epi.append(i)
            fold.append(which)
        if obs_params is None:
            from .observation import observation_layout, state_layout
            from .engine import init_world
            from .scenario import sample_instance

            world = init_world(sample_instance(spec, ep_seeds[0]), ep_seeds[0], stat_table)
            obs_params = observation_layout(world).params()
            state_params = state_layout(world).params()

    return RegressionDataset(
        obs=np.asarray(obs_rows, dtype=np.float64),
        state=np.asarray(state_rows, dtype=np.float64),
        timestep=np.asarray(ts, dtype=np.int64),
        target=np.asarray(tgt, dtype=np.float64),
        episode=np.asarray(epi, dtype=np.int64),
        fold=np.asarray(fold, dtype=np.int64),
        obs_params=obs_params,
        state_params=state_params,
        episode_limit=episode_limit,
        gamma=gamma if target == "mc_return" else float("nan"),
        meta={"scenario": spec_to_dict(spec), "policy": policy.name, "seed": seed},
    )


@dataclass
class RegressorConfig:
    kind: str = "ridge"          # "ridge" | "mlp"
    alpha: float = 1e-3          # ridge regularization strength
    hidden: int = 64             # mlp width
    learning_rate: float = 0.005
    batch_size: int = 512
    eval_every: int = 5
    patience: int = 10
    max_epochs: int = 500
    seed: int = 0


@dataclass
class RegressionMetrics:
    mask_id: str
    q_bar: float
    eps_rmse: float
    eps_abs: float
    ratio: float
    delta_ratio: float | None = None

    COLUMNS = ("Q̄", "ε_rmse", "ε_rmse/Q̄", "ε_abs", "δ-ratio")

    def row(self) -> tuple:
        return (self.mask_id, self.q_bar, self.eps_rmse, self.ratio, self.eps_abs, self.delta_ratio)


def design_matrix(dataset: RegressionDataset, mask_id: str) -> np.ndarray:
    """Masked (observations | state | timestep one-hot) feature rows."""
    if mask_id not in MASKS:
        raise ConfigError(f"unknown mask {mask_id!r}")
    n = len(dataset.target)
    obs = apply_mask(dataset.obs, dataset.obs_layout, mask_id, own_exempt=True)
    state = apply_mask(dataset.state, dataset.state_layout, mask_id, own_exempt=False)
    t_onehot = np.zeros((n, dataset.episode_limit), dtype=np.float64)
    t_onehot[np.arange(n), np.minimum(dataset.timestep, dataset.episode_limit - 1)] = 1.0
    return np.concatenate([obs.reshape(n, -1), state, t_onehot], axis=1)


class RidgeModel:
    """Closed-form ridge with an unpenalized intercept (centered solve)."""

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.coef: np.ndarray | None = None
        self.intercept = 0.0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RidgeModel":
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        yc = y - y_mean
        gram = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
        try:
            self.coef = np.linalg.solve(gram, Xc.T @ yc)
        except np.linalg.LinAlgError as exc:
            raise ConfigError(
                "degenerate feature matrix: singular system with zero regularization"
            ) from exc
        self.intercept = float(y_mean - x_mean @ self.coef)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept


class MLPModel:
    """Small feed-forward regressor trained with Adam on the MSE loss.

    Validation MSE is checked every ``eval_every`` epochs; training stops
    once it has failed to improve ``patience`` consecutive checks, keeping
    the best-epoch weights. Hard epoch cap at ``max_epochs``.
    """

    def __init__(self, cfg: RegressorConfig):
        self.cfg = cfg
        self.params: list[np.ndarray] | None = None

    def _init_params(self, d_in: int, rng: np.random.Generator) -> list[np.ndarray]:
        h = self.cfg.hidden
        return [
            rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, h)),
            np.zeros(h),
            rng.normal(0.0, np.sqrt(2.0 / h), size=(h, 1)),
            np.zeros(1),
        ]

    @staticmethod
    def _forward(params, X):
        W1, b1, W2, b2 = params
        hidden = np.maximum(X @ W1 + b1, 0.0)
        return hidden, (hidden @ W2 + b2).ravel()

    def fit(self, X, y, X_val, y_val) -> "MLPModel":
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        params = self._init_params(X.shape[1], rng)
        moments = [(np.zeros_like(p), np.zeros_like(p)) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        best_val = np.inf
        best_params = [p.copy() for p in params]
        stall = 0
        n = len(y)
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                Xb, yb = X[idx], y[idx]
                hidden, pred = self._forward(params, Xb)
                err = (pred - yb) / len(yb)
                W2 = params[2]
                g_out = err[:, None]
                grads = [None] * 4
                grads[2] = 2.0 * hidden.T @ g_out
                grads[3] = 2.0 * g_out.sum(axis=0)
                g_hidden = 2.0 * (g_out @ W2.T) * (hidden > 0.0)
                grads[0] = Xb.T @ g_hidden
                grads[1] = g_hidden.sum(axis=0)
                step += 1
                for k in range(4):
                    m, v = moments[k]
                    m[:] = beta1 * m + (1 - beta1) * grads[k]
                    v[:] = beta2 * v + (1 - beta2) * grads[k] ** 2
                    m_hat = m / (1 - beta1**step)
                    v_hat = v / (1 - beta2**step)
                    params[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            if epoch % cfg.eval_every == 0:
                _, val_pred = self._forward(params, X_val)
                val_mse = float(np.mean((val_pred - y_val) ** 2))
                if val_mse < best_val:
                    best_val = val_mse
                    best_params = [p.copy() for p in params]
                    stall = 0
                else:
                    stall += 1
                    if stall >= cfg.patience:
                        break
        self.params = best_params
        return self

    def predict(self, X) -> np.ndarray:
        return self._forward(self.params, X)[1]


def masked_regression(
    dataset: RegressionDataset,
    mask_id: str,
    cfg: RegressorConfig | None = None,
    _design: np.ndarray | None = None,
) -> RegressionMetrics:
    """Fit under one mask and report validation metrics (delta left unset)."""
    cfg = cfg or RegressorConfig()
    train_rows = dataset.fold_rows(TRAIN)
    val_rows = dataset.fold_rows(VAL)
    if len(train_rows) == 0 or len(val_rows) == 0:
        raise ConfigError("both dataset folds must be nonempty")
    X = design_matrix(dataset, mask_id) if _design is None else _design
    y = dataset.target
    if cfg.kind == "ridge":
        model = RidgeModel(cfg.alpha).fit(X[train_rows], y[train_rows])
    elif cfg.kind == "mlp":
        model = MLPModel(cfg).fit(X[train_rows], y[train_rows], X[val_rows], y[val_rows])
    else:
        raise ConfigError(f"unknown regressor kind {cfg.kind!r}")
    pred = model.predict(X[val_rows])
    err = pred - y[val_rows]
    q_bar = float(np.mean(y[val_rows]))
    eps_rmse = float(np.sqrt(np.mean(err**2)))
    eps_abs = float(np.mean(np.abs(err)))
    ratio = eps_rmse / q_bar if q_bar != 0.0 else float("nan")
    return RegressionMetrics(mask_id, q_bar, eps_rmse, eps_abs, ratio)


def _mask_task(args):
    dataset, mask_id, cfg = args
    return masked_regression(dataset, mask_id, cfg)


def run_masked_regressions(
    dataset: RegressionDataset,
    mask_ids: list[str],
    cfg: RegressorConfig | None = None,
    jobs: int = 1,
) -> list[RegressionMetrics]:
    """Metrics for each mask, with the delta column filled against ``nothing``.

    The ``nothing`` baseline is always fitted (and reported only if asked
    for). Output order follows ``mask_ids`` regardless of ``jobs``.
    """
    cfg = cfg or RegressorConfig()
    wanted = list(mask_ids)
    fit_ids = wanted if "nothing" in wanted else wanted + ["nothing"]
    if jobs > 1:
        methods = multiprocessing.get_all_start_methods()
        ctx = multiprocessing.get_context("fork" if "fork" in methods else "spawn")
        with ctx.Pool(jobs) as pool:
            fitted = list(pool.imap(_mask_task, [(dataset, m, cfg) for m in fit_ids]))
    else:
        fitted = [masked_regression(dataset, m, cfg) for m in fit_ids]
    by_id = {m.mask_id: m for m in fitted}
    nothing_rmse = by_id["nothing"].eps_rmse
    for metrics in fitted:
        if metrics.q_bar != 0.0:
            metrics.delta_ratio = (metrics.eps_rmse - nothing_rmse) / metrics.q_bar
    return [by_id[m] for m in wanted]
