"""Training-loop estimator tests on miniature datasets."""

import numpy as np
import pytest

from flowgym.datasets import generate_demo_dataset
from flowgym.explorer import ExploreParams
from flowgym.networks import VelocityArch
from flowgym.policies import (GRPOPolicy, ILFMPolicy, PlateauState,
                              PlateauTracker, ResumePayload, RWFMPolicy,
                              TrainingDiverged, collect_records,
                              default_patience, evaluate_demonstrator,
                              evaluate_policy, plateau)
from flowgym.rng import substream

TINY = dict(batch_size=16, velocity_width=2, cond_dim=4, kernel_size=3,
            seed=0)


def tiny_dataset(n=30, seed=5):
    return generate_demo_dataset(n, seed=seed, h_max=16, h_prime=8)


def test_plateau_rule_basics():
    state = PlateauState(threshold=0.01, patience=3)
    assert not plateau([], state)
    assert not plateau([-3.0, -2.0, -1.0, 0.0], state)
    assert plateau([-1.0, -1.0, -1.0, -1.0], state)
    # exactly best + threshold is not an improvement
    assert plateau([-1.0, -0.99, -0.99, -0.99], state)
    # strictly above best + threshold resets the counter
    assert not plateau([-1.0, -0.98, -1.2, -1.2], state)
    assert plateau([-1.0, -0.98, -1.2, -1.2, -1.2], state)


def test_plateau_initial_value_counts_as_history():
    # a first validation that is never beaten plateaus after patience more
    state = PlateauState(threshold=0.01, patience=2)
    assert not plateau([-1.0], state)
    assert not plateau([-1.0, -1.5], state)
    assert plateau([-1.0, -1.5, -1.5], state)


def test_tracker_matches_batch_rule():
    state = PlateauState(threshold=0.01, patience=4)
    rng = np.random.default_rng(0)
    history = list(rng.uniform(-2, 0, size=60))
    tracker = PlateauTracker(state)
    for i, value in enumerate(history):
        tracker.update(value)
        assert tracker.plateaued == plateau(history[:i + 1], state)
    restored = PlateauTracker.from_state(state, tracker.state_dict())
    assert restored.best == tracker.best
    assert restored.plateaued == tracker.plateaued


def test_default_patience_scales_with_dataset():
    assert default_patience("ilfm", 1900) == 50
    assert default_patience("rwfm", 1900) == 50
    assert default_patience("grpo", 1900) == 10
    assert default_patience("rwfm", 30000) == 500
    assert default_patience("grpo", 30000) == 50


def test_ilfm_fit_structure():
    ds = tiny_dataset()
    est = ILFMPolicy(reward="position", patience=2, max_epochs_per_phase=30,
                     **TINY)
    est.fit(ds)
    rows = est.metrics_
    # first row is the pre-training validation, last is the test evaluation
    assert rows[0]["epoch"] == 0 and rows[0]["val_reward"] is not None
    assert rows[0]["train_loss"] is None
    assert rows[-1]["test_reward"] is not None
    assert est.n_epochs_ == rows[-1]["epoch"]
    assert est.final_state_["done"] is True
    assert est.final_state_["phase"] == "main"
    monotone = [r["epoch"] for r in rows[:-1]]
    assert monotone == sorted(monotone)
    assert all(r["cumulative_trajectories"] == 28 for r in rows)
    assert est.params_.dtype == np.float32
    assert np.all(np.isfinite(est.params_))


def test_ilfm_reproducible_and_seed_sensitive():
    a = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=4,
                   **TINY)
    a.fit(tiny_dataset())
    b = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=4,
                   **TINY)
    b.fit(tiny_dataset())
    np.testing.assert_array_equal(a.params_, b.params_)
    assert a.metrics_ == b.metrics_
    kwargs = dict(TINY, seed=1)
    c = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=4,
                   **kwargs)
    c.fit(tiny_dataset())
    assert not np.array_equal(a.params_, c.params_)


def test_rwfm_alpha_zero_matches_ilfm_bitwise():
    ilfm = ILFMPolicy(reward="position", patience=2, max_epochs_per_phase=6,
                      **TINY)
    ilfm.fit(tiny_dataset())
    rwfm = RWFMPolicy(reward="position", alpha=0.0, collections=0,
                      patience=2, max_epochs_per_phase=6, **TINY)
    rwfm.fit(tiny_dataset())
    np.testing.assert_array_equal(ilfm.params_, rwfm.params_)
    assert ilfm.n_epochs_ == rwfm.n_epochs_


def test_rwfm_collections_grow_dataset():
    ds = tiny_dataset()
    est = RWFMPolicy(reward="position", alpha=5.0, explore_magnitude=0.1,
                     collections=2, gamma=0.25, patience=1,
                     max_epochs_per_phase=3, **TINY)
    est.fit(ds)
    # two collections of gamma * |train| each: 7 then 9 (train grew to 35)
    assert est.final_state_["n_collected"] == 16
    assert len(ds.split("train")) == 44
    prefixes = {r.record_id.split("-")[0] for r in ds.split("train")}
    assert prefixes == {"demo", "col"}
    collected = [r for r in ds.records if r.record_id.startswith("col-")]
    assert all(r.reward is not None and r.reward <= 0 for r in collected)
    assert all(r.split == "train" for r in collected)
    # iterations advanced through both collection phases
    test_rows = [r for r in est.metrics_ if r["test_reward"] is not None]
    assert [r["iteration"] for r in test_rows] == [1, 2]
    # cumulative trajectory counts step up after each collection
    cums = [r["cumulative_trajectories"] for r in est.metrics_]
    assert cums == sorted(cums)
    assert cums[-1] == 44


def test_collect_without_explorer_matches_zero_magnitude():
    ds = tiny_dataset()
    est = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=2,
                     **TINY)
    est.fit(ds)
    a = collect_records(est.arch_, est.params_, est.normalizer_, 5,
                        "position", None, substream(3, "collect"),
                        steps=4, dt=ds.dt)
    b = collect_records(est.arch_, est.params_, est.normalizer_, 5,
                        "position", ExploreParams(magnitude=0.0),
                        substream(3, "collect"), steps=4, dt=ds.dt)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.chunk.values, rb.chunk.values)
        assert ra.reward == rb.reward
    c = collect_records(est.arch_, est.params_, est.normalizer_, 5,
                        "position", ExploreParams(magnitude=0.5),
                        substream(3, "collect"), steps=4, dt=ds.dt)
    assert any(not np.array_equal(ra.chunk.values, rc.chunk.values)
               for ra, rc in zip(a, c))


def test_grpo_fit_phases_and_surrogate():
    ds = tiny_dataset()
    est = GRPOPolicy(reward="position", alpha=2.0, explore_magnitude=0.1,
                     group_size=3, collections=1, gamma=0.25, patience=1,
                     pretrain_cap=3, max_epochs_per_phase=3,
                     surrogate_width=3, surrogate_batch_size=16,
                     surrogate_epochs=1, **TINY)
    est.fit(ds)
    assert est.surrogate_params_ is not None
    assert np.all(np.isfinite(est.surrogate_params_))
    iters = [r["iteration"] for r in est.metrics_]
    assert 0 in iters and 1 in iters  # pretrain rows then main rows
    # pretrain ends with a test evaluation row at iteration 0
    pretrain_tests = [r for r in est.metrics_
                      if r["iteration"] == 0 and r["test_reward"] is not None]
    assert len(pretrain_tests) == 1
    assert est.final_state_["phase"] == "main"
    assert est.final_state_["done"] is True
    assert len(ds.split("train")) == 35  # 28 + round(0.25 * 28)


def test_resume_equivalence_in_process():
    full = ILFMPolicy(reward="position", patience=5, max_epochs_per_phase=12,
                      **TINY)
    full.fit(tiny_dataset())
    assert full.n_epochs_ == 5

    part = ILFMPolicy(reward="position", patience=5, max_epochs_per_phase=12,
                      stop_after_epochs=2, **TINY)
    ds = tiny_dataset()
    part.fit(ds)
    assert part.interrupted_
    assert part.final_state_["epoch_global"] == 2

    cont = ILFMPolicy(reward="position", patience=5, max_epochs_per_phase=12,
                      **TINY)
    payload = ResumePayload(state=part.final_state_,
                            policy_params=part.params_,
                            policy_opt=part.opt_state_,
                            best_params=part.best_params_)
    cont.fit(ds, resume=payload)
    np.testing.assert_array_equal(full.params_, cont.params_)
    assert full.metrics_ == part.metrics_ + cont.metrics_
    assert full.best_val_ == cont.best_val_


def test_resume_of_finished_run_is_noop():
    est = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=2,
                     **TINY)
    ds = tiny_dataset()
    est.fit(ds)
    again = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=2,
                       **TINY)
    payload = ResumePayload(state=est.final_state_,
                            policy_params=est.params_,
                            policy_opt=est.opt_state_,
                            best_params=est.best_params_)
    again.fit(ds, resume=payload)
    assert again.metrics_ == []
    np.testing.assert_array_equal(again.params_, est.params_)


def test_evaluate_policy_decomposition():
    ds = tiny_dataset()
    est = ILFMPolicy(reward="position_time", patience=1,
                     max_epochs_per_phase=2, **TINY)
    est.fit(ds)
    result = evaluate_policy(est.arch_, est.params_, est.normalizer_,
                             ds.split("test"), "position_time",
                             substream(0, "eval"), dt=ds.dt)
    np.testing.assert_allclose(result.rewards,
                               result.position_terms + result.penalty_terms,
                               atol=1e-12)
    assert np.all(result.penalty_terms < 0)  # time penalty always bites
    assert np.all(result.horizons >= 1)
    pos_only = evaluate_policy(est.arch_, est.params_, est.normalizer_,
                               ds.split("test"), "position",
                               substream(0, "eval"), dt=ds.dt)
    assert np.all(pos_only.penalty_terms == 0)


def test_evaluate_demonstrator_deterministic():
    ds = tiny_dataset()
    a = evaluate_demonstrator(ds.split("test"), "position",
                              substream(4, "eval"), h_max=16, dt=ds.dt)
    b = evaluate_demonstrator(ds.split("test"), "position",
                              substream(4, "eval"), h_max=16, dt=ds.dt)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    assert np.all(a.rewards <= 0)
    assert np.all((a.horizons >= 1) & (a.horizons <= 16))


def test_divergence_raises():
    est = ILFMPolicy(reward="position", learning_rate=1e12, patience=5,
                     max_epochs_per_phase=10, **{k: v for k, v in TINY.items()
                                                 if k != "batch_size"},
                     batch_size=16)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged, match="non-finite"):
            est.fit(tiny_dataset())


def test_get_params_round_trip():
    est = RWFMPolicy(reward="position_time", alpha=20.0, seed=3)
    params = est.get_params()
    clone = RWFMPolicy(**params)
    assert clone.get_params() == params
    assert params["alpha"] == 20.0
    assert params["reward"] == "position_time"


def test_predict_returns_native_chunks():
    ds = tiny_dataset()
    est = ILFMPolicy(reward="position", patience=1, max_epochs_per_phase=2,
                     **TINY)
    est.fit(ds)
    obs = np.stack([r.obs.vector() for r in ds.split("test")])
    chunks = est.predict(obs, seed=7)
    assert len(chunks) == len(ds.split("test"))
    for chunk in chunks:
        assert 1 <= chunk.horizon <= 16
        assert np.all(np.abs(chunk.values[0]) <= 3.0 + 1e-9)
        assert np.all(np.abs(chunk.values[1]) <= 1.0 + 1e-9)
    single = est.predict(obs[0], seed=7)
    np.testing.assert_array_equal(single.values, chunks[0].values)


def test_arch_reconstruction_from_descriptor():
    arch = VelocityArch(h_prime=8, width=2, cond_dim=4, kernel=3)
    clone = VelocityArch(**arch.describe())
    assert clone == arch
