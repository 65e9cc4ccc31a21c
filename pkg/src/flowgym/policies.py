"""Trainable chunk policies: imitation, reward-weighted, and group-optimized.

All three estimators share one training loop.  A run is a sequence of
phases; each phase trains to a validation plateau on the current training
records and (except for pure imitation) ends by collecting fresh rollouts
from the live policy, growing the training set by a fixed fraction.  The
group-optimized variant prepends a pretraining phase and maintains a
reward-surrogate network that scores sampled chunks during training.

Every random draw comes from a named substream of the run seed keyed by
loop counters, so a run interrupted at an epoch boundary and resumed from
its saved state reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from sklearn.base import BaseEstimator

from . import flow
from .checks import ValidationError, require
from .codec import AugmentedChunk, ChunkNormalizer, decode
from .datasets import Dataset, TrajectoryRecord
from .env import rollout, sample_task, state_from_observation
from .explorer import ExploreParams, perturb
from .networks import SurrogateArch, VelocityArch
from .optim import AdamWParams, AdamWState, adamw_init, adamw_step
from .rewards import REWARD_IDS, evaluate_terms
from .rng import substream


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite or the surrogate error explodes."""


DEFAULT_THRESHOLD = 0.01
SMALL_DATASET_CUTOFF = 10_000

#: plateau patience by method: (full-scale, desk-scale) epochs
PATIENCE_DEFAULTS = {"ilfm": (500, 50), "rwfm": (500, 50), "grpo": (50, 10)}


def default_patience(method: str, n_train: int) -> int:
    full, desk = PATIENCE_DEFAULTS[method]
    return desk if n_train < SMALL_DATASET_CUTOFF else full


@dataclass(frozen=True)
class PlateauState:
    """Stopping rule: no validation value may beat the running best by more
    than ``threshold`` for ``patience`` consecutive evaluations."""

    threshold: float = DEFAULT_THRESHOLD
    patience: int = 50

    def __post_init__(self):
        require(self.patience > 0, "patience must be positive")
        require(self.threshold >= 0.0, "threshold must be >= 0")


def plateau(history, state: PlateauState) -> bool:
    """True iff the last ``patience`` entries all failed to improve.

    An improvement means strictly exceeding the previous best by more than
    the threshold; matching best + threshold exactly does not reset the
    counter.  An empty history never counts as plateaued.
    """
    if len(history) == 0:
        return False
    best = -math.inf
    last_improve = 0
    for i, value in enumerate(history):
        if value > best + state.threshold:
            last_improve = i
        best = max(best, value)
    return (len(history) - 1 - last_improve) >= state.patience


class PlateauTracker:
    """Incremental form of :func:`plateau` over a growing history."""

    def __init__(self, rule: PlateauState):
        self.rule = rule
        self.best = -math.inf
        self.since_improve = 0
        self.n_seen = 0

    def update(self, value: float) -> bool:
        improved = value > self.best + self.rule.threshold
        if improved:
            self.since_improve = 0
        elif self.n_seen > 0:
            self.since_improve += 1
        self.best = max(self.best, value)
        self.n_seen += 1
        return improved

    @property
    def plateaued(self) -> bool:
        return self.n_seen > 0 and self.since_improve >= self.rule.patience

    def state_dict(self) -> dict:
        return {"best": self.best, "since_improve": self.since_improve,
                "n_seen": self.n_seen}

    @classmethod
    def from_state(cls, rule: PlateauState, payload: dict) -> "PlateauTracker":
        tracker = cls(rule)
        tracker.best = float(payload["best"])
        tracker.since_improve = int(payload["since_improve"])
        tracker.n_seen = int(payload["n_seen"])
        return tracker


@dataclass
class EvalResult:
    """Per-task outcomes of rolling a policy (or controller) on fixed tasks."""

    rewards: np.ndarray
    position_terms: np.ndarray
    penalty_terms: np.ndarray
    horizons: np.ndarray

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def mean_position_term(self) -> float:
        return float(self.position_terms.mean())

    @property
    def mean_penalty_term(self) -> float:
        return float(self.penalty_terms.mean())

    @property
    def mean_horizon(self) -> float:
        return float(self.horizons.mean())


def evaluate_policy(arch: VelocityArch, params: np.ndarray,
                    normalizer: ChunkNormalizer, records, reward_id: str,
                    rng: np.random.Generator, steps: int = 4,
                    dt: float = 0.1) -> EvalResult:
    """Sample one chunk per record's task, roll it out, and score it."""
    records = list(records)
    require(len(records) > 0, "cannot evaluate on an empty task set")
    obs_vecs = np.stack([r.obs.vector() for r in records]).astype(np.float32)
    encoded = flow.sample_policy(arch, params, obs_vecs, rng, steps=steps)
    rewards = np.empty(len(records))
    pos_terms = np.empty(len(records))
    pen_terms = np.empty(len(records))
    horizons = np.empty(len(records))
    for i, record in enumerate(records):
        chunk = decode(AugmentedChunk(encoded[i].astype(np.float64)),
                       normalizer, dt=dt)
        state = state_from_observation(record.obs.obs)
        ro = rollout(state, chunk, dt=dt)
        pos, pen = evaluate_terms(reward_id, record.obs, chunk, ro)
        rewards[i] = pos + pen
        pos_terms[i] = pos
        pen_terms[i] = pen
        horizons[i] = chunk.horizon
    return EvalResult(rewards, pos_terms, pen_terms, horizons)


def evaluate_demonstrator(records, reward_id: str, rng: np.random.Generator,
                          h_max: int, dt: float = 0.1) -> EvalResult:
    """Run the scripted controller on each record's task with fresh draws."""
    from .demonstrator import run_controller, sample_params

    records = list(records)
    require(len(records) > 0, "cannot evaluate on an empty task set")
    rewards = np.empty(len(records))
    pos_terms = np.empty(len(records))
    pen_terms = np.empty(len(records))
    horizons = np.empty(len(records))
    for i, record in enumerate(records):
        params = sample_params(rng)
        horizon = int(rng.integers(1, h_max + 1))
        state = state_from_observation(record.obs.obs)
        chunk, ro = run_controller(params, state, record.obs.goal, horizon, dt)
        pos, pen = evaluate_terms(reward_id, record.obs, chunk, ro)
        rewards[i] = pos + pen
        pos_terms[i] = pos
        pen_terms[i] = pen
        horizons[i] = horizon
    return EvalResult(rewards, pos_terms, pen_terms, horizons)


def collect_records(arch: VelocityArch, params: np.ndarray,
                    normalizer: ChunkNormalizer, n: int, reward_id: str,
                    explore: ExploreParams | None, rng: np.random.Generator,
                    steps: int = 4, dt: float = 0.1,
                    id_prefix: str = "col-") -> list[TrajectoryRecord]:
    """Roll the live policy on ``n`` fresh tasks and score with the true reward.

    Draw order: all tasks, then one batched policy-noise draw, then (only
    when exploration is enabled with nonzero magnitude) one perturbation per
    chunk in task order.  Disabled exploration consumes no draws, so
    collection with explorer magnitude 0 matches collection with no
    explorer bit for bit.
    """
    require(n >= 1, "collection size must be >= 1")
    tasks = [sample_task(rng) for _ in range(n)]
    obs_vecs = np.stack([aug.vector() for _, aug in tasks]).astype(np.float32)
    encoded = flow.sample_policy(arch, params, obs_vecs, rng, steps=steps)
    records = []
    for i, (state, aug_obs) in enumerate(tasks):
        aug = AugmentedChunk(encoded[i].astype(np.float64))
        if explore is not None:
            aug = perturb(rng, aug, explore, normalizer)
        chunk = decode(aug, normalizer, dt=dt)
        ro = rollout(state, chunk, dt=dt)
        pos, pen = evaluate_terms(reward_id, aug_obs, chunk, ro)
        records.append(TrajectoryRecord(
            record_id=f"{id_prefix}{i:06d}", obs=aug_obs, chunk=chunk,
            rollout=ro, reward=pos + pen, split="train"))
    return records


@dataclass
class ResumePayload:
    """Everything needed to continue a run from an epoch boundary."""

    state: dict
    policy_params: np.ndarray
    policy_opt: AdamWState
    surrogate_params: np.ndarray | None = None
    surrogate_opt: AdamWState | None = None
    best_params: np.ndarray | None = None


@dataclass
class _Loop:
    """Mutable training position; mirrored into the persisted state dict."""

    phase: str                 # "pretrain" or "main"
    iteration: int             # 0 during pretrain, then 1..n_phases
    epoch: int                 # completed epochs in the current phase
    epoch_global: int
    tracker: PlateauTracker
    n_collected: int = 0
    best_val_global: float = -math.inf
    surrogate_initial_mse: float | None = None
    done: bool = False

    def state_dict(self) -> dict:
        return {
            "phase": self.phase,
            "iteration": self.iteration,
            "epoch": self.epoch,
            "epoch_global": self.epoch_global,
            "tracker": self.tracker.state_dict(),
            "n_collected": self.n_collected,
            "best_val_global": self.best_val_global,
            "surrogate_initial_mse": self.surrogate_initial_mse,
            "done": self.done,
        }


class _FlowPolicyBase(BaseEstimator):
    """Shared machinery; concrete classes fix the method id and defaults."""

    _method = "base"

    # -- configuration helpers ------------------------------------------------

    def _cfg(self, name, default=None):
        value = getattr(self, name, None)
        return default if value is None else value

    def _explore_params(self) -> ExploreParams:
        return ExploreParams(magnitude=float(self._cfg("explore_magnitude", 0.0)),
                             bumps_per_channel=int(self._cfg("bumps_per_channel", 2)))

    def _validate_config(self):
        require(self.reward in REWARD_IDS,
                f"unknown reward {self.reward!r}; expected one of {REWARD_IDS}")
        require(self._cfg("alpha", 0.0) >= 0.0, "alpha must be >= 0")
        require(int(self.batch_size) >= 1, "batch_size must be >= 1")
        require(int(self.euler_steps) >= 1, "euler_steps must be >= 1")
        require(float(self._cfg("gamma", 0.2)) > 0.0, "gamma must be > 0")
        require(int(self._cfg("collections", 0)) >= 0,
                "collections must be >= 0")

    # -- persistence hooks ----------------------------------------------------

    def _emit(self, hook, loop: _Loop, rows, records=(), is_new_best=False):
        self.metrics_.extend(rows)
        if hook is not None:
            hook(loop.state_dict(), list(rows), list(records),
                 is_new_best=is_new_best)

    def _row(self, loop: _Loop, cumulative: int, train_loss=None,
             val_reward=None, test_reward=None) -> dict:
        return {
            "method": self._method,
            "reward": self.reward,
            "alpha": float(self._cfg("alpha", 0.0)),
            "explore_magnitude": float(self._cfg("explore_magnitude", 0.0)),
            "seed": int(self.seed),
            "iteration": loop.iteration,
            "epoch": loop.epoch,
            "cumulative_trajectories": cumulative,
            "train_loss": train_loss,
            "val_reward": val_reward,
            "test_reward": test_reward,
        }

    # -- epoch internals ------------------------------------------------------

    def _train_arrays(self, records):
        obs = np.stack([r.obs.vector() for r in records]).astype(np.float32)
        aug = np.stack([self._dataset.encoded_chunk(r) for r in records])
        rew = np.array([r.reward for r in records], dtype=np.float64)
        require(bool(np.all(np.isfinite(rew))), "training records missing rewards")
        return obs, aug, rew

    def _policy_epoch(self, loop: _Loop, obs, aug, rew, use_grpo: bool,
                      fm_alpha: float = 0.0) -> float:
        """One shuffled pass; returns the size-weighted mean batch loss."""
        n = obs.shape[0]
        batch = int(self.batch_size)
        perm = substream(self.seed, "shuffle", loop.epoch_global).permutation(n)
        total = 0.0
        for step_idx, start in enumerate(range(0, n, batch)):
            idx = perm[start:start + batch]
            path_rng = substream(self.seed, "path", loop.epoch_global, step_idx)
            if use_grpo:
                sampler_rng = substream(self.seed, "sampler",
                                        loop.epoch_global, step_idx)
                group = flow.sample_group_batch(
                    self.arch_, self.params_, self.surrogate_arch_,
                    self.surrogate_params_, obs[idx],
                    group_size=int(self.group_size),
                    alpha=float(self.alpha),
                    explore=self._explore_params(),
                    norm=self.normalizer_, rng=sampler_rng,
                    steps=int(self.euler_steps))
                graph = flow.grpo_loss(self.arch_, self.params_, group, path_rng)
            else:
                graph = flow.rwfm_loss(self.arch_, self.params_, obs[idx],
                                       aug[idx], rew[idx], fm_alpha, path_rng)
            value = graph.value
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite policy loss at iteration {loop.iteration} "
                    f"epoch {loop.epoch + 1} step {step_idx}")
            grads = graph.grad(self.arch_)
            self.params_, self.opt_state_ = adamw_step(
                self.opt_state_, self.params_, grads)
            total += value * len(idx)
        return total / n

    def _surrogate_pass(self, loop: _Loop, obs, aug, rew, val_records):
        """E_rs surrogate epochs plus the divergence guard on val MSE."""
        n = obs.shape[0]
        batch = int(self.surrogate_batch_size)
        targets = rew.astype(np.float64)
        for sub in range(int(self.surrogate_epochs)):
            perm = substream(self.seed, "surrogate_shuffle",
                             loop.epoch_global, sub).permutation(n)
            for start in range(0, n, batch):
                idx = perm[start:start + batch]
                graph = flow.surrogate_loss(self.surrogate_arch_,
                                            self.surrogate_params_,
                                            obs[idx], aug[idx], targets[idx])
                if not math.isfinite(graph.value):
                    raise TrainingDiverged(
                        f"non-finite surrogate loss at iteration "
                        f"{loop.iteration} epoch {loop.epoch + 1}")
                grads = graph.grad(self.surrogate_arch_)
                self.surrogate_params_, self.surrogate_opt_ = adamw_step(
                    self.surrogate_opt_, self.surrogate_params_, grads)
        val_mse = self._surrogate_val_mse(val_records)
        if val_mse > 10.0 * max(loop.surrogate_initial_mse, 1e-12):
            raise TrainingDiverged(
                f"surrogate validation MSE {val_mse:.4g} exceeds 10x its "
                f"initial value {loop.surrogate_initial_mse:.4g}")

    def _surrogate_val_mse(self, val_records) -> float:
        obs, aug, rew = self._train_arrays(val_records)
        pred = self.surrogate_arch_.predict(self.surrogate_params_, aug, obs)
        return float(np.mean((pred.astype(np.float64) - rew) ** 2))

    def _validate(self) -> float:
        """Mean reward over the fixed validation tasks with fixed noise."""
        result = evaluate_policy(self.arch_, self.params_, self.normalizer_,
                                 self._val_records, self.reward,
                                 substream(self.seed, "val"),
                                 steps=int(self.euler_steps),
                                 dt=self._dataset.dt)
        return result.mean_reward

    # -- the run --------------------------------------------------------------

    def fit(self, dataset: Dataset, hook=None, resume: ResumePayload | None = None):
        """Train on ``dataset`` (mutated in place by collections).

        ``hook(state, rows, records, is_new_best=...)`` is invoked at every
        persistence point; ``resume`` continues a previous run from its last
        persisted state, with the dataset already containing the previously
        collected records.
        """
        self._validate_config()
        dataset.compute_rewards(self.reward)
        self._dataset = dataset
        self.dt_ = dataset.dt
        self._val_records = dataset.split("val")
        self._test_records = dataset.split("test")
        train_records = dataset.split("train")
        require(len(train_records) > 0, "dataset has no training records")
        require(len(self._val_records) > 0, "dataset has no validation records")
        require(len(self._test_records) > 0, "dataset has no test records")
        self._check_disjoint(train_records)

        n_demo_train = len(train_records) - sum(
            1 for r in train_records if not r.record_id.startswith("demo-"))
        patience = int(self._cfg("patience") or
                       default_patience(self._method, n_demo_train))
        rule = PlateauState(threshold=float(self._cfg("plateau_threshold",
                                                      DEFAULT_THRESHOLD)),
                            patience=patience)
        self.plateau_rule_ = rule

        uses_surrogate = self._method == "grpo"
        self.arch_ = VelocityArch(h_prime=dataset.h_prime,
                                  width=int(self.velocity_width),
                                  cond_dim=int(self.cond_dim),
                                  kernel=int(self.kernel_size))
        self.normalizer_ = dataset.normalizer
        if uses_surrogate:
            self.surrogate_arch_ = SurrogateArch(h_prime=dataset.h_prime,
                                                 width=int(self.surrogate_width),
                                                 kernel=int(self.kernel_size))

        self.metrics_ = []
        self.interrupted_ = False

        if resume is not None:
            loop = self._restore(resume, rule, uses_surrogate)
        else:
            loop = self._fresh_start(rule, uses_surrogate)

        if loop.done:
            self._finalize(loop)
            return self

        n_phases = max(int(self._cfg("collections", 0)), 1)
        collect_enabled = int(self._cfg("collections", 0)) >= 1
        stop_after = self._cfg("stop_after_epochs")

        while not loop.done:
            records = self._dataset.split("train")
            obs, aug, rew = self._train_arrays(records)
            if uses_surrogate and loop.surrogate_initial_mse is None:
                loop.surrogate_initial_mse = self._surrogate_val_mse(
                    self._val_records)
            pretraining = loop.phase == "pretrain"
            if pretraining:
                cap = int(self._cfg("pretrain_cap", 2000))
            else:
                cap = int(self._cfg("max_epochs_per_phase", 4000))

            if loop.tracker.n_seen == 0:
                val0 = self._validate()
                improved = loop.tracker.update(val0)
                if val0 > loop.best_val_global:
                    loop.best_val_global = val0
                    self.best_params_ = self.params_.copy()
                    improved = True
                else:
                    improved = False
                self._emit(hook, loop,
                           [self._row(loop, len(records), val_reward=val0)],
                           is_new_best=improved)

            while not loop.tracker.plateaued and loop.epoch < cap:
                if stop_after is not None and loop.epoch_global >= int(stop_after):
                    self.interrupted_ = True
                    self._finalize(loop)
                    return self
                # pretraining is plain imitation: unweighted flow matching
                train_loss = self._policy_epoch(
                    loop, obs, aug, rew,
                    use_grpo=(uses_surrogate and not pretraining),
                    fm_alpha=0.0 if pretraining else float(self._cfg("alpha", 0.0)))
                if uses_surrogate:
                    self._surrogate_pass(loop, obs, aug, rew, self._val_records)
                loop.epoch += 1
                loop.epoch_global += 1
                val = self._validate()
                loop.tracker.update(val)
                new_best = val > loop.best_val_global
                if new_best:
                    loop.best_val_global = val
                    self.best_params_ = self.params_.copy()
                self._emit(hook, loop,
                           [self._row(loop, len(records),
                                      train_loss=train_loss, val_reward=val)],
                           is_new_best=new_best)

            rows, new_records = self._advance(loop, collect_enabled, n_phases)
            self._emit(hook, loop, rows, new_records)

        self._finalize(loop)
        return self

    def _advance(self, loop: _Loop, collect_enabled: bool, n_phases: int):
        """Close out a phase: test evaluation, optional collection, move on."""
        records = self._dataset.split("train")
        test_result = evaluate_policy(
            self.arch_, self.params_, self.normalizer_, self._test_records,
            self.reward, substream(self.seed, "eval", loop.iteration),
            steps=int(self.euler_steps), dt=self._dataset.dt)
        rows = [self._row(loop, len(records),
                          test_reward=test_result.mean_reward)]
        self.last_test_result_ = test_result

        new_records: list[TrajectoryRecord] = []
        if loop.phase == "pretrain":
            loop.phase = "main"
            loop.iteration = 1
        else:
            if collect_enabled:
                n_new = max(1, round(float(self.gamma) * len(records)))
                explore = None
                if self._method == "rwfm":
                    explore = self._explore_params()
                new_records = collect_records(
                    self.arch_, self.params_, self.normalizer_, n_new,
                    self.reward, explore,
                    substream(self.seed, "collect", loop.iteration),
                    steps=int(self.euler_steps), dt=self._dataset.dt,
                    id_prefix=f"col-{loop.iteration:02d}-")
                self._dataset.append(new_records)
                self._check_disjoint(self._dataset.split("train"))
                loop.n_collected += len(new_records)
                rows.append(self._row(loop, len(records) + len(new_records)))
            if loop.iteration >= n_phases:
                loop.done = True
            else:
                loop.iteration += 1
        if not loop.done:
            loop.epoch = 0
            loop.tracker = PlateauTracker(loop.tracker.rule)
        return rows, new_records

    def _fresh_start(self, rule: PlateauState, uses_surrogate: bool) -> _Loop:
        self.params_ = self.arch_.init_params(substream(self.seed, "init"))
        self.opt_state_ = adamw_init(
            self.arch_.n_params,
            AdamWParams(learning_rate=float(self.learning_rate),
                        beta1=float(self.beta1), beta2=float(self.beta2),
                        weight_decay=float(self.weight_decay)))
        self.best_params_ = self.params_.copy()
        if uses_surrogate:
            self.surrogate_params_ = self.surrogate_arch_.init_params(
                substream(self.seed, "surrogate_init"))
            self.surrogate_opt_ = adamw_init(
                self.surrogate_arch_.n_params,
                AdamWParams(learning_rate=float(self.surrogate_lr),
                            beta1=float(self.beta1), beta2=float(self.beta2),
                            weight_decay=float(self.weight_decay)))
        else:
            self.surrogate_params_ = None
            self.surrogate_opt_ = None
        phase = "pretrain" if uses_surrogate else "main"
        iteration = 0 if uses_surrogate else 1
        return _Loop(phase=phase, iteration=iteration, epoch=0,
                     epoch_global=0, tracker=PlateauTracker(rule))

    def _restore(self, resume: ResumePayload, rule: PlateauState,
                 uses_surrogate: bool) -> _Loop:
        state = resume.state
        self.params_ = np.asarray(resume.policy_params, dtype=np.float32)
        self.opt_state_ = resume.policy_opt
        self.best_params_ = (np.asarray(resume.best_params, dtype=np.float32)
                             if resume.best_params is not None
                             else self.params_.copy())
        if uses_surrogate:
            require(resume.surrogate_params is not None,
                    "resume payload missing surrogate parameters")
            self.surrogate_params_ = np.asarray(resume.surrogate_params,
                                                dtype=np.float32)
            self.surrogate_opt_ = resume.surrogate_opt
        else:
            self.surrogate_params_ = None
            self.surrogate_opt_ = None
        initial_mse = state.get("surrogate_initial_mse")
        return _Loop(
            phase=str(state["phase"]),
            iteration=int(state["iteration"]),
            epoch=int(state["epoch"]),
            epoch_global=int(state["epoch_global"]),
            tracker=PlateauTracker.from_state(rule, state["tracker"]),
            n_collected=int(state["n_collected"]),
            best_val_global=float(state["best_val_global"]),
            surrogate_initial_mse=(None if initial_mse is None
                                   else float(initial_mse)),
            done=bool(state["done"]))

    def _check_disjoint(self, train_records):
        train_ids = {r.record_id for r in train_records}
        held_out = {r.record_id for r in self._val_records}
        held_out |= {r.record_id for r in self._test_records}
        overlap = train_ids & held_out
        if overlap:
            raise ValidationError(
                f"training records overlap held-out splits: {sorted(overlap)[:5]}")

    def _finalize(self, loop: _Loop):
        self.n_epochs_ = loop.epoch_global
        self.final_state_ = loop.state_dict()
        self.best_val_ = loop.best_val_global

    # -- inference ------------------------------------------------------------

    def sample_encoded(self, obs_vectors: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
        """(B, 7) observation vectors -> (B, 3, h_prime) encoded chunks."""
        obs_vectors = np.asarray(obs_vectors, dtype=np.float32)
        return flow.sample_policy(self.arch_, self.params_, obs_vectors, rng,
                                  steps=int(self.euler_steps))

    def predict(self, obs_vectors: np.ndarray, seed: int | None = None):
        """Sample one native chunk per (7,) observation row."""
        obs_vectors = np.asarray(obs_vectors, dtype=np.float64)
        if obs_vectors.ndim == 1:
            return self.predict(obs_vectors[None], seed=seed)[0]
        rng = substream(self.seed if seed is None else seed, "task")
        encoded = self.sample_encoded(obs_vectors, rng)
        return [decode(AugmentedChunk(encoded[i].astype(np.float64)),
                       self.normalizer_, dt=getattr(self, "dt_", 0.1))
                for i in range(encoded.shape[0])]


class ILFMPolicy(_FlowPolicyBase):
    """Imitation flow matching: one training phase, no collections."""

    _method = "ilfm"

    def __init__(self, reward="position", batch_size=256, learning_rate=5e-3,
                 beta1=0.9, beta2=0.95, weight_decay=0.01, patience=None,
                 plateau_threshold=0.01, euler_steps=4, velocity_width=32,
                 cond_dim=32, kernel_size=5, seed=0, max_epochs_per_phase=4000,
                 stop_after_epochs=None):
        self.reward = reward
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.patience = patience
        self.plateau_threshold = plateau_threshold
        self.euler_steps = euler_steps
        self.velocity_width = velocity_width
        self.cond_dim = cond_dim
        self.kernel_size = kernel_size
        self.seed = seed
        self.max_epochs_per_phase = max_epochs_per_phase
        self.stop_after_epochs = stop_after_epochs


class RWFMPolicy(_FlowPolicyBase):
    """Reward-weighted flow matching with explorer-perturbed collection."""

    _method = "rwfm"

    def __init__(self, reward="position", alpha=10.0, explore_magnitude=0.1,
                 bumps_per_channel=2, collections=4, gamma=0.2, batch_size=256,
                 learning_rate=5e-3, beta1=0.9, beta2=0.95, weight_decay=0.01,
                 patience=None, plateau_threshold=0.01, euler_steps=4,
                 velocity_width=32, cond_dim=32, kernel_size=5, seed=0,
                 max_epochs_per_phase=4000, stop_after_epochs=None):
        self.reward = reward
        self.alpha = alpha
        self.explore_magnitude = explore_magnitude
        self.bumps_per_channel = bumps_per_channel
        self.collections = collections
        self.gamma = gamma
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.patience = patience
        self.plateau_threshold = plateau_threshold
        self.euler_steps = euler_steps
        self.velocity_width = velocity_width
        self.cond_dim = cond_dim
        self.kernel_size = kernel_size
        self.seed = seed
        self.max_epochs_per_phase = max_epochs_per_phase
        self.stop_after_epochs = stop_after_epochs


class GRPOPolicy(_FlowPolicyBase):
    """Group-relative optimization against a learned reward surrogate.

    Pretrains by imitation, then each epoch samples ``group_size`` chunks
    per observation, perturbs them, scores them with the surrogate, and
    weights the flow-matching update by the in-group advantages.
    Collection runs without the explorer.
    """

    _method = "grpo"

    def __init__(self, reward="position", alpha=2.0, explore_magnitude=0.1,
                 bumps_per_channel=2, group_size=10, collections=4, gamma=0.2,
                 batch_size=128, learning_rate=5e-3, surrogate_lr=1e-4,
                 surrogate_batch_size=512, surrogate_epochs=3,
                 surrogate_width=32, beta1=0.9, beta2=0.95, weight_decay=0.01,
                 patience=None, plateau_threshold=0.01, euler_steps=4,
                 velocity_width=32, cond_dim=32, kernel_size=5, seed=0,
                 pretrain_cap=2000, max_epochs_per_phase=4000,
                 stop_after_epochs=None):
        self.reward = reward
        self.alpha = alpha
        self.explore_magnitude = explore_magnitude
        self.bumps_per_channel = bumps_per_channel
        self.group_size = group_size
        self.collections = collections
        self.gamma = gamma
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.surrogate_lr = surrogate_lr
        self.surrogate_batch_size = surrogate_batch_size
        self.surrogate_epochs = surrogate_epochs
        self.surrogate_width = surrogate_width
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.patience = patience
        self.plateau_threshold = plateau_threshold
        self.euler_steps = euler_steps
        self.velocity_width = velocity_width
        self.cond_dim = cond_dim
        self.kernel_size = kernel_size
        self.seed = seed
        self.pretrain_cap = pretrain_cap
        self.max_epochs_per_phase = max_epochs_per_phase
        self.stop_after_epochs = stop_after_epochs


METHODS = {"ilfm": ILFMPolicy, "rwfm": RWFMPolicy, "grpo": GRPOPolicy}
