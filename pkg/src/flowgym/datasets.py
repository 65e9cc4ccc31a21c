"""Trajectory datasets and their JSONL on-disk format.

A dataset file starts with one header line (format version, chunk-length
limit, timestep, fitted normalizer) followed by one record per line, so a
trained policy can be evaluated against any dataset file without refitting
anything.  Record ids are unique within a file and splits are assigned at
generation time; training never moves records between splits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import json
import os

import numpy as np

from . import rewards as rewards_mod
from .checks import ValidationError, require
from .codec import (H_MAX, H_PRIME, ActionChunk, ChunkNormalizer,
                    encode, fit_normalizer)
from .env import DEFAULT_DT, AugmentedObservation, ObservationRollout

FORMAT_KIND = "flowgym-dataset"
FORMAT_VERSION = 1

VAL_FRACTION = 0.01
TEST_FRACTION = 0.04


@dataclass(frozen=True)
class TrajectoryRecord:
    """One task with one executed chunk and its observed rollout."""

    record_id: str
    obs: AugmentedObservation
    chunk: ActionChunk
    rollout: ObservationRollout
    reward: float | None = None
    split: str = "train"

    def __post_init__(self):
        require(self.split in ("train", "val", "test"),
                f"unknown split {self.split!r}")
        require(self.rollout.horizon == self.chunk.horizon,
                "rollout length does not match chunk horizon")

    def with_reward(self, value: float) -> "TrajectoryRecord":
        return replace(self, reward=float(value))


def split_counts(n: int) -> tuple[int, int, int]:
    """(train, val, test) sizes: about 1% val and 4% test, at least 1 each."""
    require(n >= 3, "need at least 3 records to split")
    n_val = max(1, round(VAL_FRACTION * n))
    n_test = max(1, round(TEST_FRACTION * n))
    return n - n_val - n_test, n_val, n_test


def assign_splits(n: int) -> list[str]:
    n_train, n_val, n_test = split_counts(n)
    return ["train"] * n_train + ["val"] * n_val + ["test"] * n_test


class Dataset:
    """Record collection plus the normalizer fitted on its initial chunks."""

    def __init__(self, records, normalizer: ChunkNormalizer,
                 dt: float = DEFAULT_DT, h_prime: int = H_PRIME):
        self.records: list[TrajectoryRecord] = list(records)
        self.normalizer = normalizer
        self.dt = float(dt)
        self.h_prime = int(h_prime)
        self._check_unique_ids()
        self._encoded: dict[str, np.ndarray] = {}

    def _check_unique_ids(self):
        ids = [r.record_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate record ids in dataset")

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> list[TrajectoryRecord]:
        return [r for r in self.records if r.split == name]

    @property
    def h_max(self) -> int:
        return int(self.normalizer.h_max)

    def append(self, new_records) -> None:
        """Add records (training collections); ids must stay unique."""
        existing = {r.record_id for r in self.records}
        for r in new_records:
            if r.record_id in existing:
                raise ValidationError(f"duplicate record id {r.record_id!r}")
            existing.add(r.record_id)
            self.records.append(r)

    def compute_rewards(self, reward_id: str) -> None:
        """Fill every record's reward under ``reward_id`` (overwrites)."""
        for i, r in enumerate(self.records):
            value = rewards_mod.evaluate(reward_id, r.obs, r.chunk, r.rollout)
            self.records[i] = r.with_reward(value)

    def encoded_chunk(self, record: TrajectoryRecord) -> np.ndarray:
        """Cached float32 encoding of a record's chunk: (3, h_prime)."""
        cached = self._encoded.get(record.record_id)
        if cached is None:
            cached = encode(record.chunk, self.normalizer,
                            self.h_prime).values.astype(np.float32)
            self._encoded[record.record_id] = cached
        return cached

    def training_arrays(self, records=None):
        """(obs (N,7), encoded chunks (N,3,H'), rewards (N,)) float32/float64."""
        if records is None:
            records = self.split("train")
        obs = np.stack([r.obs.vector() for r in records]).astype(np.float32)
        aug = np.stack([self.encoded_chunk(r) for r in records])
        rew = np.array([np.nan if r.reward is None else r.reward
                        for r in records], dtype=np.float64)
        return obs, aug, rew


def _record_to_json(record: TrajectoryRecord) -> dict:
    return {
        "id": record.record_id,
        "observation": record.obs.obs.tolist(),
        "goal": record.obs.goal.tolist(),
        "actions": record.chunk.values.tolist(),
        "observations": record.rollout.observations.tolist(),
        "collided": bool(record.rollout.collided),
        "reward": record.reward,
        "split": record.split,
    }


def _record_from_json(payload: dict, dt: float) -> TrajectoryRecord:
    obs = AugmentedObservation(
        obs=np.asarray(payload["observation"], dtype=np.float64),
        goal=np.asarray(payload["goal"], dtype=np.float64))
    chunk = ActionChunk(np.asarray(payload["actions"], dtype=np.float64), dt=dt)
    rollout = ObservationRollout(
        np.asarray(payload["observations"], dtype=np.float64),
        collided=bool(payload["collided"]))
    reward = payload.get("reward")
    return TrajectoryRecord(
        record_id=str(payload["id"]), obs=obs, chunk=chunk, rollout=rollout,
        reward=None if reward is None else float(reward),
        split=str(payload["split"]))


def save_dataset(dataset: Dataset, path: str) -> None:
    header = {
        "kind": FORMAT_KIND,
        "version": FORMAT_VERSION,
        "dt": dataset.dt,
        "h_prime": dataset.h_prime,
        "normalizer": dataset.normalizer.to_dict(),
        "n_records": len(dataset.records),
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in dataset.records:
            fh.write(json.dumps(_record_to_json(record), sort_keys=True) + "\n")
    os.replace(tmp, path)


def load_dataset(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line:
            raise ValidationError(f"{path}: empty dataset file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: bad dataset header: {exc}") from exc
        if header.get("kind") != FORMAT_KIND:
            raise ValidationError(f"{path}: not a {FORMAT_KIND} file")
        if header.get("version") != FORMAT_VERSION:
            raise ValidationError(
                f"{path}: unsupported format version {header.get('version')}")
        dt = float(header["dt"])
        records = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                records.append(_record_from_json(json.loads(line), dt))
            except (KeyError, json.JSONDecodeError, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad record: {exc}") from exc
    normalizer = ChunkNormalizer.from_dict(header["normalizer"])
    dataset = Dataset(records, normalizer, dt=dt,
                      h_prime=int(header["h_prime"]))
    if header.get("n_records") != len(records):
        raise ValidationError(
            f"{path}: header announces {header.get('n_records')} records "
            f"but file holds {len(records)}")
    return dataset


def save_records_jsonl(records, path: str) -> None:
    """Bare record lines (no header); used for collected-data journals."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_json(record), sort_keys=True) + "\n")
    os.replace(tmp, path)


def append_records_jsonl(records, path: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_json(record), sort_keys=True) + "\n")


def load_records_jsonl(path: str, dt: float) -> list[TrajectoryRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(_record_from_json(json.loads(line), dt))
            except (KeyError, json.JSONDecodeError, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


def generate_demo_dataset(count: int, seed: int, dt: float = DEFAULT_DT,
                          h_max: int = H_MAX,
                          h_prime: int = H_PRIME) -> Dataset:
    """Generate ``count`` demonstrations and fit the normalizer on them."""
    from .demonstrator import generate_demo
    from .rng import substream

    require(count >= 3, "need at least 3 demonstrations")
    rng = substream(seed, "demo")
    splits = assign_splits(count)
    records = []
    for i in range(count):
        obs, chunk, rollout = generate_demo(rng, dt=dt, h_max=h_max)
        records.append(TrajectoryRecord(
            record_id=f"demo-{i:06d}", obs=obs, chunk=chunk,
            rollout=rollout, split=splits[i]))
    normalizer = fit_normalizer([r.chunk for r in records], h_max=h_max)
    return Dataset(records, normalizer, dt=dt, h_prime=h_prime)
