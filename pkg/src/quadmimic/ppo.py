"""Proximal Policy Optimization with generalized advantage estimation.

Gaussian policy with a state-independent log-std vector, separate value
network, clipped surrogate objective, per-network gradient-norm clipping
and Adam. A single-threaded rollout loop over the batched environment
keeps runs bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .imitation import OBS_DIM, ACTION_DIM, ImitationVecEnv, CurriculumSchedule
from .mlp import Act, AdamState, MlpSpec

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0


class UpdateAborted(Exception):
    """Non-finite numbers reached the optimizer."""


@dataclass
class PpoConfig:
    clip_range: float = 0.2
    learning_rate: float = 5e-5
    gamma: float = 0.95
    gae_lambda: float = 0.95
    minibatch: int = 128
    max_grad_norm: float = 0.5
    epochs_per_iter: int = 4
    rollout_horizon: int = 4096
    log_std_init: float = -1.0
    seed: int = 0

    def __post_init__(self):
        if self.clip_range <= 0:
            raise ValueError("clip_range must be positive")
        if not (0 <= self.gamma < 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma in [0,1), lambda in [0,1]")


def policy_spec() -> MlpSpec:
    return MlpSpec((OBS_DIM, 256, 256, ACTION_DIM), (Act.RELU, Act.RELU, Act.LINEAR))


def value_spec() -> MlpSpec:
    return MlpSpec((OBS_DIM, 256, 256, 1), (Act.RELU, Act.RELU, Act.LINEAR))


@dataclass
class GaussianPolicy:
    params: list
    log_std: np.ndarray
    spec: MlpSpec = field(default_factory=policy_spec)

    @classmethod
    def init(cls, rng: np.random.Generator, log_std_init: float = -1.0) -> "GaussianPolicy":
        spec = policy_spec()
        params = mlp.init(spec, rng)
        # near-zero head: the initial policy is the plain reference tracker
        w, b = params[-1]
        params[-1] = (w * 0.01, b)
        return cls(params, np.full(ACTION_DIM, log_std_init), spec)

    def mean(self, obs):
        y, _ = mlp.forward(self.params, self.spec, obs)
        return y

    def act(self, obs, rng: np.random.Generator | None = None, deterministic: bool = False):
        """Sample actions; returns (actions, log_probs, means)."""
        mean, _ = mlp.forward(self.params, self.spec, obs)
        if deterministic or rng is None:
            return mean, self.log_prob_of(mean, mean), mean
        std = np.exp(self.log_std)
        noise = rng.normal(0.0, 1.0, size=mean.shape)
        actions = mean + std * noise
        return actions, self.log_prob_of(actions, mean), mean

    def log_prob_of(self, actions, mean):
        std = np.exp(self.log_std)
        z = (actions - mean) / std
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) - 0.5 * ACTION_DIM * np.log(2 * np.pi)

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * ACTION_DIM * (1.0 + np.log(2 * np.pi)))

    def clone(self) -> "GaussianPolicy":
        return GaussianPolicy(mlp.copy_params(self.params), self.log_std.copy(), self.spec)


@dataclass
class ValueNet:
    params: list
    spec: MlpSpec = field(default_factory=value_spec)

    @classmethod
    def init(cls, rng: np.random.Generator) -> "ValueNet":
        spec = value_spec()
        return cls(mlp.init(spec, rng), spec)

    def value(self, obs):
        y, _ = mlp.forward(self.params, self.spec, obs)
        return y[..., 0]


def compute_gae(rewards, values, dones, gamma: float, lam: float):
    """GAE over (T, n) arrays; values has the bootstrap row (T+1, n).

    delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
    A_t = delta_t + gamma lam (1 - done_t) A_{t+1}; returns = A + V.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    for t in range(t_len - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * not_done - values[t]
        last = delta + gamma * lam * not_done * last
        adv[t] = last
    return adv, adv + values[:-1]


@dataclass
class VectorAdam:
    """Adam for a single flat parameter vector (the policy log-std)."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def update(self, x, g):
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.step_count += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mh = self.m / (1 - self.beta1**self.step_count)
        vh = self.v / (1 - self.beta2**self.step_count)
        return x - self.learning_rate * mh / (np.sqrt(vh) + self.eps)


def _grad_norm(grads, extra=None):
    total = 0.0
    for gw, gb in grads:
        total += float(np.sum(gw * gw)) + float(np.sum(gb * gb))
    if extra is not None:
        total += float(np.sum(extra * extra))
    return np.sqrt(total)


def _scale_grads(grads, scale, extra=None):
    out = [(gw * scale, gb * scale) for gw, gb in grads]
    return (out, None if extra is None else extra * scale)


def ppo_update(policy: GaussianPolicy, value: ValueNet, batch: dict, config: PpoConfig, rng: np.random.Generator,
               policy_opt: AdamState, value_opt: AdamState, log_std_opt: VectorAdam | None = None) -> dict:
    """Clipped-surrogate update over shuffled minibatches.

    Advantages must already be normalized. Gradient norms are clipped per
    network (the policy's log-std counts toward its norm). A non-finite
    loss or gradient aborts the update and reports it in the stats.
    """
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["log_probs"]
    adv = batch["advantages"]
    returns = batch["returns"]
    n = len(obs)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "clip_fraction": 0.0, "approx_kl": 0.0, "aborted": False,
             "policy_grad_norm": 0.0, "value_grad_norm": 0.0, "updates": 0}
    eps = config.clip_range
    if log_std_opt is None:
        log_std_opt = VectorAdam(config.learning_rate)
    for _ in range(config.epochs_per_iter):
        order = rng.permutation(n)
        for start in range(0, n - config.minibatch + 1, config.minibatch):
            idx = order[start : start + config.minibatch]
            b = len(idx)
            mean, cache = mlp.forward(policy.params, policy.spec, obs[idx])
            std = np.exp(policy.log_std)
            z = (actions[idx] - mean) / std
            logp = -0.5 * np.sum(z * z, axis=-1) - np.sum(policy.log_std) - 0.5 * ACTION_DIM * np.log(2 * np.pi)
            ratio = np.exp(logp - logp_old[idx])
            a = adv[idx]
            surr1 = ratio * a
            surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * a
            pi_loss = -float(np.mean(np.minimum(surr1, surr2)))
            use1 = surr1 <= surr2
            dlogp = np.where(use1, -a * ratio, 0.0) / b  # d(pi_loss)/d(logp)
            dmean = dlogp[:, None] * (z / std)
            dlogstd = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
            pgrads, _ = mlp.backward(policy.params, policy.spec, cache, dmean)

            vpred, vcache = mlp.forward(value.params, value.spec, obs[idx])
            verr = vpred[:, 0] - returns[idx]
            v_loss = 0.5 * float(np.mean(verr * verr))
            vgrads, _ = mlp.backward(value.params, value.spec, vcache, (verr / b)[:, None])

            finite = np.isfinite(pi_loss) and np.isfinite(v_loss)
            finite = finite and all(np.all(np.isfinite(g)) for gr in pgrads for g in gr)
            finite = finite and np.all(np.isfinite(dlogstd))
            if not finite:
                stats["aborted"] = True
                return stats

            pnorm = _grad_norm(pgrads, dlogstd)
            if pnorm > config.max_grad_norm:
                pgrads, dlogstd = _scale_grads(pgrads, config.max_grad_norm / pnorm, dlogstd)
            vnorm = _grad_norm(vgrads)
            if vnorm > config.max_grad_norm:
                vgrads, _ = _scale_grads(vgrads, config.max_grad_norm / vnorm)

            policy.params = mlp.adam_step(policy.params, pgrads, policy_opt)
            policy.log_std = np.clip(log_std_opt.update(policy.log_std, dlogstd), LOG_STD_MIN, LOG_STD_MAX)
            value.params = mlp.adam_step(value.params, vgrads, value_opt)

            stats["policy_loss"] += pi_loss
            stats["value_loss"] += v_loss
            stats["clip_fraction"] += float(np.mean(np.abs(ratio - 1.0) > eps))
            stats["approx_kl"] += float(np.mean(logp_old[idx] - logp))
            stats["policy_grad_norm"] = max(stats["policy_grad_norm"], min(pnorm, config.max_grad_norm))
            stats["value_grad_norm"] = max(stats["value_grad_norm"], min(vnorm, config.max_grad_norm))
            stats["updates"] += 1
    for key in ("policy_loss", "value_loss", "clip_fraction", "approx_kl"):
        stats[key] /= max(stats["updates"], 1)
    return stats


def collect_rollout(env: ImitationVecEnv, policy: GaussianPolicy, value: ValueNet, horizon: int, rng, obs):
    """Gather `horizon` env-steps of experience; returns (batch, last obs, episode infos)."""
    n = env.n
    t_len = max(1, horizon // n)
    shape = (t_len, n)
    data = {
        "obs": np.empty(shape + (OBS_DIM,)),
        "actions": np.empty(shape + (ACTION_DIM,)),
        "log_probs": np.empty(shape),
        "rewards": np.empty(shape),
        "values": np.empty((t_len + 1, n)),
        "dones": np.empty(shape),
    }
    episodes = []
    for t in range(t_len):
        actions, logp, _ = policy.act(obs, rng)
        data["obs"][t] = obs
        data["actions"][t] = actions
        data["log_probs"][t] = logp
        data["values"][t] = value.value(obs)
        obs, rewards, dones, info = env.step(actions)
        data["rewards"][t] = rewards
        data["dones"][t] = dones.astype(float)
        episodes.extend(info["episodes"])
    data["values"][t_len] = value.value(obs)
    return data, obs, episodes


@dataclass
class TrainLogRow:
    iteration: int
    steps: int
    mean_reward: float
    stage: int
    dr_scale: float
    mean_ratio: float
    policy_loss: float
    value_loss: float
    clip_fraction: float
    approx_kl: float
    log_std_mean: float


def train(
    env: ImitationVecEnv,
    schedule: CurriculumSchedule,
    config: PpoConfig,
    total_steps: int,
    log_path=None,
    stop_fn=None,
):
    """Alternate rollout collection, GAE, PPO updates and curriculum moves.

    The env must share `schedule`, so stage advances steer later resets.
    stop_fn(row) may end training early (used by the analysis harnesses).
    Returns (policy, value, log rows).
    """
    rng = np.random.default_rng([config.seed, 4242])
    policy = GaussianPolicy.init(rng, config.log_std_init)
    value = ValueNet.init(rng)
    policy_opt = AdamState(learning_rate=config.learning_rate)
    value_opt = AdamState(learning_rate=config.learning_rate)
    log_std_opt = VectorAdam(config.learning_rate)
    obs = env.reset()
    rows = []
    iteration = 0
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(list(TrainLogRow.__annotations__.keys()))
    try:
        while env.total_steps < total_steps:
            iteration += 1
            batch, obs, episodes = collect_rollout(env, policy, value, config.rollout_horizon, rng, obs)
            adv, ret = compute_gae(batch["rewards"], batch["values"], batch["dones"], config.gamma, config.gae_lambda)
            flat = {
                "obs": batch["obs"].reshape(-1, OBS_DIM),
                "actions": batch["actions"].reshape(-1, ACTION_DIM),
                "log_probs": batch["log_probs"].reshape(-1),
                "advantages": (adv - adv.mean()) / (adv.std() + 1e-8),
                "returns": ret.reshape(-1),
            }
            flat["advantages"] = flat["advantages"].reshape(-1)
            stats = ppo_update(policy, value, flat, config, rng, policy_opt, value_opt, log_std_opt)
            mean_reward = float(batch["rewards"].mean())
            schedule.update(mean_reward)
            ratios = [e["success_time_ratio"] for e in episodes]
            row = TrainLogRow(
                iteration,
                int(env.total_steps),
                mean_reward,
                schedule.stage_index,
                schedule.stage.dr_scale,
                float(np.mean(ratios)) if ratios else float("nan"),
                stats["policy_loss"],
                stats["value_loss"],
                stats["clip_fraction"],
                stats["approx_kl"],
                float(policy.log_std.mean()),
            )
            rows.append(row)
            if writer is not None:
                writer.writerow([getattr(row, k) for k in TrainLogRow.__annotations__])
                fh.flush()
            if stop_fn is not None and stop_fn(row):
                break
    finally:
        if fh is not None:
            fh.close()
    return policy, value, rows


def save_policy(policy: GaussianPolicy, path) -> None:
    mlp.save_checkpoint(policy.params, policy.spec, path, extra={"log_std": policy.log_std.tolist()})


def load_policy(path) -> GaussianPolicy:
    params, spec, _, extra = mlp.load_checkpoint(path)
    return GaussianPolicy(params, np.array(extra["log_std"]), spec)
