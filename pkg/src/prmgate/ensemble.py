"""Ensemble step scorer: shared trunk, n sigmoid heads, loss, and SGD.

The trunk is an affine map followed by tanh (skipped entirely when
``trunk_dim == 0``); each head is an affine map to a single logit passed
through a sigmoid. Training minimizes, per trajectory,

    mean over heads of [ prefix BCE + lam * ||head - head_init||_2 ]

where the prefix runs up to and including the first gold error (all steps
when the trajectory is error-free) and ``head_init`` is the frozen copy of
the head parameters taken at construction. The L2 penalty is the plain
Euclidean norm, not its square; its subgradient at zero distance is zero.

Checkpoint format (single file, little-endian): header
``magic b"APRM" | uint32 version=1 | uint32 n_heads | uint32 feature_dim |
uint32 trunk_dim | uint64 step_count`` followed by float64 parameters in
fixed order: trunk weights (row-major), trunk biases, head weights
(row-major), head biases, initial head weights, initial head biases.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import Config, GoldLabel, Trajectory

__all__ = [
    "CheckpointError",
    "DivergenceError",
    "EnsembleModel",
    "ForwardOutput",
    "Gradients",
    "forward",
    "grad",
    "init_model",
    "load_checkpoint",
    "loss",
    "prefix_labels",
    "save_checkpoint",
    "sgd_step",
    "sigmoid",
]

LOG_CLAMP = 1e-12       # probability clamp applied before logarithms
NORM_EPS = 1e-12        # below this distance the L2 subgradient is zero
_PROB_FLOOR = 1e-300    # keeps forward outputs strictly inside (0, 1)
_PROB_CEIL = float(np.nextafter(1.0, 0.0))

CHECKPOINT_MAGIC = b"APRM"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ")


class CheckpointError(ValueError):
    """Unreadable, truncated, or incompatible checkpoint file."""


class DivergenceError(FloatingPointError):
    """Non-finite gradient entries; the parameter update was aborted."""


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class EnsembleModel:
    """Trunk + head parameters, the frozen head snapshots, and a step counter."""

    trunk_w: np.ndarray       # (trunk_dim, feature_dim)
    trunk_b: np.ndarray       # (trunk_dim,)
    heads_w: np.ndarray       # (n_heads, head_input_dim)
    heads_b: np.ndarray       # (n_heads,)
    heads_w_init: np.ndarray  # frozen copy of heads_w at construction
    heads_b_init: np.ndarray  # frozen copy of heads_b at construction
    step_count: int = 0

    @property
    def n_heads(self) -> int:
        return self.heads_w.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.trunk_w.shape[1] if self.trunk_dim > 0 else self.heads_w.shape[1]

    @property
    def trunk_dim(self) -> int:
        return self.trunk_w.shape[0]

    @property
    def head_input_dim(self) -> int:
        return self.heads_w.shape[1]

    def copy(self) -> "EnsembleModel":
        return EnsembleModel(
            trunk_w=self.trunk_w.copy(),
            trunk_b=self.trunk_b.copy(),
            heads_w=self.heads_w.copy(),
            heads_b=self.heads_b.copy(),
            heads_w_init=self.heads_w_init.copy(),
            heads_b_init=self.heads_b_init.copy(),
            step_count=self.step_count,
        )

    def head_drift(self) -> np.ndarray:
        """Euclidean distance of each head (weights and bias) from its snapshot."""
        dw = self.heads_w - self.heads_w_init
        db = self.heads_b - self.heads_b_init
        return np.sqrt(np.sum(dw * dw, axis=1) + db * db)


@dataclass(frozen=True)
class ForwardOutput:
    """Per-head, per-step correctness probabilities, shape (n_heads, n_steps)."""

    probs: np.ndarray


@dataclass
class Gradients:
    """Gradient of the batch-mean loss, shaped like the model parameters."""

    trunk_w: np.ndarray
    trunk_b: np.ndarray
    heads_w: np.ndarray
    heads_b: np.ndarray

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.trunk_w))
            and np.all(np.isfinite(self.trunk_b))
            and np.all(np.isfinite(self.heads_w))
            and np.all(np.isfinite(self.heads_b))
        )


def init_model(config: Config, rng: np.random.Generator) -> EnsembleModel:
    """Draw weights uniform(-a, a) with a = 1/sqrt(fan_in); biases start at zero."""
    d = config.feature_dim
    trunk_dim = config.trunk_dim
    if trunk_dim > 0:
        a = 1.0 / np.sqrt(d)
        trunk_w = rng.uniform(-a, a, size=(trunk_dim, d))
    else:
        trunk_w = np.zeros((0, d))
    trunk_b = np.zeros(trunk_dim)
    h_in = config.head_input_dim
    a = 1.0 / np.sqrt(h_in)
    heads_w = rng.uniform(-a, a, size=(config.n_heads, h_in))
    heads_b = np.zeros(config.n_heads)
    return EnsembleModel(
        trunk_w=trunk_w,
        trunk_b=trunk_b,
        heads_w=heads_w,
        heads_b=heads_b,
        heads_w_init=heads_w.copy(),
        heads_b_init=heads_b.copy(),
    )


def _trunk_out(model: EnsembleModel, x: np.ndarray) -> np.ndarray:
    if model.trunk_dim == 0:
        return x
    return np.tanh(x @ model.trunk_w.T + model.trunk_b)


def forward(model: EnsembleModel, traj: Trajectory) -> ForwardOutput:
    """Score every step with every head; output shape (n_heads, n_steps)."""
    x = traj.features_matrix()
    if x.shape[1] != model.feature_dim:
        raise ValueError(
            f"trajectory {traj.id!r} has feature dim {x.shape[1]}, model expects {model.feature_dim}"
        )
    hidden = _trunk_out(model, x)
    logits = hidden @ model.heads_w.T + model.heads_b
    probs = np.clip(sigmoid(logits).T, _PROB_FLOOR, _PROB_CEIL)
    return ForwardOutput(probs=probs)


def prefix_labels(n_steps: int, label: GoldLabel) -> tuple[int, np.ndarray]:
    """Labeled prefix end k and the 0/1 targets for steps 0..k.

    Error-free trajectories label every step 1; otherwise steps before the
    first error are 1, the error step is 0, and later steps are unlabeled.
    """
    if label.first_error is None:
        k = n_steps - 1
        y = np.ones(n_steps)
    else:
        if label.first_error >= n_steps:
            raise ValueError(
                f"first_error {label.first_error} out of range for {n_steps} steps"
            )
        k = label.first_error
        y = np.ones(k + 1)
        y[k] = 0.0
    return k, y


def _penalty(model: EnsembleModel, lam: float) -> float:
    if lam == 0.0:
        return 0.0
    return lam * float(np.mean(model.head_drift()))


def loss(model: EnsembleModel, traj: Trajectory, label: GoldLabel, lam: float = 0.0) -> float:
    """Head-averaged prefix BCE plus lam times the mean head drift."""
    out = forward(model, traj)
    k, y = prefix_labels(traj.n_steps, label)
    p = np.clip(out.probs[:, : k + 1], LOG_CLAMP, 1.0 - LOG_CLAMP)
    bce = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p), axis=1)
    return float(np.mean(bce)) + _penalty(model, lam)


def grad(
    model: EnsembleModel,
    batch: list[tuple[Trajectory, GoldLabel]],
    lam: float = 0.0,
) -> Gradients:
    """Analytic gradient of the batch-mean loss.

    Items are accumulated in list order so the reduction is bit-reproducible.
    """
    if not batch:
        raise ValueError("grad requires a non-empty batch")
    n = model.n_heads
    g_tw = np.zeros_like(model.trunk_w)
    g_tb = np.zeros_like(model.trunk_b)
    g_hw = np.zeros_like(model.heads_w)
    g_hb = np.zeros_like(model.heads_b)
    for traj, label in batch:
        x = traj.features_matrix()
        hidden = _trunk_out(model, x)
        logits = hidden @ model.heads_w.T + model.heads_b
        p = sigmoid(logits).T                       # (n_heads, n_steps)
        k, y = prefix_labels(traj.n_steps, label)
        # d(BCE_h)/d(logit_hi) = (p - y) / (k + 1) on the labeled prefix
        r = (p[:, : k + 1] - y) / (k + 1.0)
        u = hidden[: k + 1]                         # (k + 1, head_input_dim)
        g_hw += (r @ u) / n
        g_hb += np.sum(r, axis=1) / n
        if model.trunk_dim > 0:
            du = (r.T @ model.heads_w) / n          # (k + 1, trunk_dim)
            da = du * (1.0 - u * u)                 # tanh backprop
            g_tw += da.T @ x[: k + 1]
            g_tb += np.sum(da, axis=0)
    b = float(len(batch))
    g_tw /= b
    g_tb /= b
    g_hw /= b
    g_hb /= b
    if lam != 0.0:
        # subgradient of mean head drift; zero for heads still at their snapshot
        dw = model.heads_w - model.heads_w_init
        db = model.heads_b - model.heads_b_init
        norms = np.sqrt(np.sum(dw * dw, axis=1) + db * db)
        scale = np.where(norms < NORM_EPS, 0.0, lam / (n * np.maximum(norms, NORM_EPS)))
        g_hw += dw * scale[:, None]
        g_hb += db * scale
    return Gradients(trunk_w=g_tw, trunk_b=g_tb, heads_w=g_hw, heads_b=g_hb)


def sgd_step(model: EnsembleModel, g: Gradients, lr: float) -> EnsembleModel:
    """In-place plain SGD update; raises DivergenceError on non-finite entries."""
    if not g.is_finite():
        raise DivergenceError(f"non-finite gradient at step {model.step_count}")
    model.trunk_w -= lr * g.trunk_w
    model.trunk_b -= lr * g.trunk_b
    model.heads_w -= lr * g.heads_w
    model.heads_b -= lr * g.heads_b
    model.step_count += 1
    return model


def save_checkpoint(model: EnsembleModel, path: str) -> None:
    """Write the binary checkpoint described in the module docstring."""
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        model.n_heads,
        model.feature_dim,
        model.trunk_dim,
        model.step_count,
    )
    parts = [header]
    for arr in (
        model.trunk_w,
        model.trunk_b,
        model.heads_w,
        model.heads_b,
        model.heads_w_init,
        model.heads_b_init,
    ):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def _array_sizes(n_heads: int, feature_dim: int, trunk_dim: int) -> list[tuple[str, tuple[int, ...]]]:
    h_in = trunk_dim if trunk_dim > 0 else feature_dim
    return [
        ("trunk_w", (trunk_dim, feature_dim)),
        ("trunk_b", (trunk_dim,)),
        ("heads_w", (n_heads, h_in)),
        ("heads_b", (n_heads,)),
        ("heads_w_init", (n_heads, h_in)),
        ("heads_b_init", (n_heads,)),
    ]


def load_checkpoint(path: str) -> EnsembleModel:
    """Read a checkpoint, validating magic, version, dims, and exact length."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"checkpoint {path} too short for header")
    magic, version, n_heads, feature_dim, trunk_dim, step_count = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"checkpoint {path} has bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint {path} has unsupported version {version}")
    if n_heads < 1 or feature_dim < 1:
        raise CheckpointError(f"checkpoint {path} has invalid dims")
    fields = _array_sizes(n_heads, feature_dim, trunk_dim)
    n_floats = sum(int(np.prod(shape)) for _, shape in fields)
    expected = _HEADER.size + 8 * n_floats
    if len(blob) != expected:
        raise CheckpointError(
            f"checkpoint {path} has {len(blob)} bytes, expected {expected}"
        )
    flat = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    arrays = {}
    pos = 0
    for name, shape in fields:
        size = int(np.prod(shape))
        arrays[name] = flat[pos : pos + size].reshape(shape).copy()
        pos += size
    return EnsembleModel(step_count=int(step_count), **arrays)
