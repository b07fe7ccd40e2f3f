"""Core domain types, configuration, and the line-delimited dataset format.

A dataset file holds one JSON object per line:

    {"id": "t000001",
     "question": "...",
     "steps": [{"features": [0.1, -2.0], "text": "Step 1 ..."}, ...],
     "gold_first_error": 1}

``gold_first_error`` is the 0-based index of the first incorrect step,
``null`` for a trajectory whose steps are all correct, and omitted entirely
when the trajectory is unlabeled.

Configuration files are flat ``key = value`` lines (``#`` starts a comment);
keys mirror the :class:`Config` fields, with ``lambda`` accepted for the
diversity-regularizer weight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "Config",
    "ConfigError",
    "DatasetError",
    "GoldLabel",
    "StepRecord",
    "Trajectory",
    "load_config",
    "load_dataset",
    "make_trajectory",
    "save_dataset",
]


class ConfigError(ValueError):
    """Invalid configuration value or configuration file."""


class DatasetError(ValueError):
    """Malformed dataset file; the message carries the offending line number."""


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One reasoning step: its 0-based position and fixed feature vector."""

    index: int
    features: np.ndarray
    text: str | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size == 0:
            raise ValueError(f"step {self.index}: features must be a nonempty vector")
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"step {self.index}: features must be finite")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    def __eq__(self, other):
        if not isinstance(other, StepRecord):
            return NotImplemented
        return (
            self.index == other.index
            and self.text == other.text
            and np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True)
class GoldLabel:
    """Prefix label: index of the first incorrect step, or None if all correct."""

    first_error: int | None = None

    def __post_init__(self):
        if self.first_error is not None and self.first_error < 0:
            raise ValueError("first_error must be non-negative")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A question with an ordered list of steps and an optional gold label."""

    id: str
    question: str
    steps: tuple[StepRecord, ...]
    gold: GoldLabel | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("trajectory id must be nonempty")
        steps = tuple(self.steps)
        if not steps:
            raise ValueError(f"trajectory {self.id!r}: needs at least one step")
        for pos, step in enumerate(steps):
            if step.index != pos:
                raise ValueError(
                    f"trajectory {self.id!r}: step index {step.index} at position {pos}"
                )
        dims = {step.features.shape[0] for step in steps}
        if len(dims) != 1:
            raise ValueError(f"trajectory {self.id!r}: inconsistent feature dimensions {dims}")
        if self.gold is not None and self.gold.first_error is not None:
            if self.gold.first_error >= len(steps):
                raise ValueError(
                    f"trajectory {self.id!r}: gold first_error {self.gold.first_error} "
                    f"out of range for {len(steps)} steps"
                )
        matrix = np.stack([step.features for step in steps])
        matrix.setflags(write=False)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "_matrix", matrix)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def feature_dim(self) -> int:
        return self.steps[0].features.shape[0]

    def features_matrix(self) -> np.ndarray:
        """All step features stacked into an (n_steps, feature_dim) array."""
        return self._matrix

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.id == other.id
            and self.question == other.question
            and self.gold == other.gold
            and self.steps == other.steps
        )


def make_trajectory(
    id: str,
    question: str,
    step_features: Iterable[Iterable[float]],
    step_texts: Iterable[str | None] | None = None,
    gold_first_error: int | None = None,
    labeled: bool = True,
) -> Trajectory:
    """Convenience constructor from raw feature rows."""
    rows = [np.asarray(row, dtype=np.float64) for row in step_features]
    texts = list(step_texts) if step_texts is not None else [None] * len(rows)
    if len(texts) != len(rows):
        raise ValueError("step_texts length must match step_features length")
    steps = tuple(
        StepRecord(index=i, features=row, text=text)
        for i, (row, text) in enumerate(zip(rows, texts))
    )
    gold = GoldLabel(gold_first_error) if labeled else None
    return Trajectory(id=id, question=question, steps=steps, gold=gold)


_INT_FIELDS = {"n_heads", "feature_dim", "trunk_dim", "batch_size", "seed"}
_FLOAT_FIELDS = {"lam", "lr", "delta", "delta_pred", "delta_std"}
_KEY_ALIASES = {"lambda": "lam"}


@dataclass(frozen=True)
class Config:
    """Model and selection hyperparameters.

    ``lam`` is the diversity-regularizer weight (written ``lambda`` in config
    files; that word is reserved in Python). ``delta_std`` may be ``inf``,
    which disables the epistemic gate; every other real must be finite.
    """

    n_heads: int
    feature_dim: int
    trunk_dim: int = 0
    lam: float = 0.01
    lr: float = 1e-2
    batch_size: int = 256
    delta: float = 0.5
    delta_pred: float = 0.95
    delta_std: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.n_heads < 1:
            raise ConfigError("n_heads must be a positive integer")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be a positive integer")
        if self.trunk_dim < 0:
            raise ConfigError("trunk_dim must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be a positive integer")
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ConfigError("lam must be a finite non-negative real")
        if not math.isfinite(self.lr) or self.lr <= 0:
            raise ConfigError("lr must be a finite positive real")
        if not (math.isfinite(self.delta) and 0.0 < self.delta < 1.0):
            raise ConfigError("delta must lie in (0, 1)")
        # delta_pred = 0.5 is legal: max(mu, 1-mu) >= 0.5 so the gate never fires
        if not (math.isfinite(self.delta_pred) and 0.5 <= self.delta_pred <= 1.0):
            raise ConfigError("delta_pred must lie in [0.5, 1]")
        if math.isnan(self.delta_std) or self.delta_std < 0:
            raise ConfigError("delta_std must be non-negative (inf allowed)")

    @property
    def head_input_dim(self) -> int:
        return self.trunk_dim if self.trunk_dim > 0 else self.feature_dim

    def with_overrides(self, **kwargs) -> "Config":
        return replace(self, **kwargs)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            out[key] = getattr(self, f.name)
        return out


def load_config(path: str | Path, **overrides) -> Config:
    """Parse a flat key=value config file, then apply keyword overrides."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key in _INT_FIELDS:
            try:
                values[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {key} must be an integer") from exc
        elif key in _FLOAT_FIELDS:
            try:
                values[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {key} must be a real number") from exc
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Config(**values)


def save_dataset(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    """Write trajectories as line-delimited JSON, one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            record: dict = {
                "id": traj.id,
                "question": traj.question,
                "steps": [
                    {"features": [float(v) for v in step.features]}
                    | ({"text": step.text} if step.text is not None else {})
                    for step in traj.steps
                ],
            }
            if traj.gold is not None:
                record["gold_first_error"] = traj.gold.first_error
            fh.write(json.dumps(record) + "\n")


def load_dataset(path: str | Path) -> list[Trajectory]:
    """Read a line-delimited dataset file, validating as it goes.

    The feature dimension of the first record is enforced on every later
    record; duplicate ids and malformed lines raise :class:`DatasetError`
    with the 1-based line number.
    """
    trajectories: list[Trajectory] = []
    seen_ids: set[str] = set()
    expected_dim: int | None = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                raise DatasetError(f"{path}:{lineno}: blank line in dataset")
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                traj = _record_to_trajectory(record)
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
            if traj.id in seen_ids:
                raise DatasetError(f"{path}:{lineno}: duplicate id {traj.id!r}")
            seen_ids.add(traj.id)
            if expected_dim is None:
                expected_dim = traj.feature_dim
            elif traj.feature_dim != expected_dim:
                raise DatasetError(
                    f"{path}:{lineno}: feature dimension {traj.feature_dim} "
                    f"!= {expected_dim} from first record"
                )
            trajectories.append(traj)
    return trajectories


def _record_to_trajectory(record: dict) -> Trajectory:
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    traj_id = record["id"]
    question = record["question"]
    if not isinstance(traj_id, str) or not isinstance(question, str):
        raise ValueError("id and question must be strings")
    raw_steps = record["steps"]
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ValueError("steps must be a nonempty list")
    steps = []
    for i, raw_step in enumerate(raw_steps):
        feats = raw_step["features"]
        text = raw_step.get("text")
        if text is not None and not isinstance(text, str):
            raise ValueError(f"step {i}: text must be a string")
        steps.append(StepRecord(index=i, features=np.asarray(feats, dtype=np.float64), text=text))
    if "gold_first_error" in record:
        first_error = record["gold_first_error"]
        if first_error is not None and not isinstance(first_error, int):
            raise ValueError("gold_first_error must be an integer or null")
        gold = GoldLabel(first_error)
    else:
        gold = None
    return Trajectory(id=traj_id, question=question, steps=tuple(steps), gold=gold)
