"""Choosing which perspective's retrieval to put in the prompt.

The main selector is disjoint LinUCB: every arm (perspective) keeps its own
ridge-regression statistics ``A_a = I + sum x x^T`` and ``b_a = sum r x``
over the feature vectors ``x = [top-1 cosine, top-1 Jaccard]`` it was
rewarded on, and is scored as ``theta_a . x + alpha * sqrt(x^T A_a^-1 x)``
with ``theta_a = A_a^-1 b_a``. The reward is the Exact Match of the
completion produced with that arm's retrieval.

Baselines: concatenating every arm's retrieval (union), picking the arm
with the highest cosine, and one-vs-rest logistic regression.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import DegenerateData, DegenerateDataWarning, DimMismatch, InvalidParam, MultiRetrieverError
from .retrievers import RetrievalResult

logger = logging.getLogger(__name__)

N_FEATURES = 2  # (cosine, jaccard), in that order


@dataclass
class LinUcbState:
    n_arms: int
    d: int
    alpha: float
    A: np.ndarray
    b: np.ndarray
    update_count: int = 0
    shared: bool = False
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    def _slot(self, arm: int) -> int:
        return 0 if self.shared else arm

    def theta(self, arm: int) -> np.ndarray:
        s = self._slot(arm)
        return np.linalg.solve(self.A[s], self.b[s])

    def to_dict(self) -> dict:
        return {
            "n_arms": self.n_arms,
            "d": self.d,
            "alpha": self.alpha,
            "A": [a.reshape(-1).tolist() for a in self.A],
            "b": [v.tolist() for v in self.b],
            "update_count": self.update_count,
            "shared": self.shared,
        }

    @classmethod
    def from_dict(cls, data: dict) -> LinUcbState:
        d = int(data["d"])
        A = np.array([np.asarray(a, dtype=np.float64).reshape(d, d) for a in data["A"]])
        b = np.array([np.asarray(v, dtype=np.float64) for v in data["b"]])
        return cls(int(data["n_arms"]), d, float(data["alpha"]), A, b,
                   int(data.get("update_count", 0)), bool(data.get("shared", False)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> LinUcbState:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinUcbState):
            return NotImplemented
        return (self.n_arms == other.n_arms and self.d == other.d and self.alpha == other.alpha
                and self.update_count == other.update_count and self.shared == other.shared
                and np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b))


def linucb_init(n_arms: int, d: int = N_FEATURES, alpha: float = 0.1, shared: bool = False) -> LinUcbState:
    if n_arms < 2:
        raise InvalidParam("LinUCB needs at least two arms")
    if d < 1:
        raise InvalidParam("feature dimension must be >= 1")
    if not alpha >= 0.0 or not math.isfinite(alpha):
        raise InvalidParam(f"alpha must be a finite value >= 0, got {alpha}")
    slots = 1 if shared else n_arms
    return LinUcbState(n_arms, d, float(alpha),
                       np.stack([np.eye(d) for _ in range(slots)]),
                       np.zeros((slots, d)), 0, shared)


def _check_feats(state: LinUcbState, feats) -> np.ndarray:
    x = np.asarray(feats, dtype=np.float64)
    if x.shape != (state.n_arms, state.d):
        raise DimMismatch(f"features shaped {x.shape}, expected {(state.n_arms, state.d)}")
    if not np.all(np.isfinite(x)):
        raise InvalidParam("features must be finite")
    return x


def linucb_score(state: LinUcbState, feats) -> np.ndarray:
    """Upper confidence score per arm, solving each A_a exactly."""
    x = _check_feats(state, feats)
    scores = np.empty(state.n_arms)
    for arm in range(state.n_arms):
        s = state._slot(arm)
        sol = np.linalg.solve(state.A[s], np.column_stack([state.b[s], x[arm]]))
        theta, a_inv_x = sol[:, 0], sol[:, 1]
        width = max(float(x[arm] @ a_inv_x), 0.0)
        scores[arm] = float(theta @ x[arm]) + state.alpha * math.sqrt(width)
    return scores


def linucb_select(state: LinUcbState, feats) -> int:
    return int(np.argmax(linucb_score(state, feats)))


def linucb_update(state: LinUcbState, arm: int, x, r: int | float) -> None:
    if not 0 <= arm < state.n_arms:
        raise InvalidParam(f"arm {arm} out of range for {state.n_arms} arms")
    vec = np.asarray(x, dtype=np.float64).reshape(-1)
    if vec.shape[0] != state.d:
        raise DimMismatch(f"feature length {vec.shape[0]} != d {state.d}")
    if not np.all(np.isfinite(vec)):
        raise InvalidParam("features must be finite")
    s = state._slot(arm)
    state.A[s] += np.outer(vec, vec)
    state.b[s] += float(r) * vec
    state.update_count += 1


def build_arm_features(results_per_arm: Sequence[Sequence[RetrievalResult]]) -> np.ndarray:
    """``[top-1 cosine, top-1 jaccard]`` per arm; an arm with no results gets zeros."""
    feats = np.zeros((len(results_per_arm), N_FEATURES))
    for arm, results in enumerate(results_per_arm):
        if results:
            feats[arm] = (results[0].cosine, results[0].jaccard)
    return feats


class BanditPipeline(Protocol):
    """What the trainer needs from a completion pipeline."""

    def arm_features(self, task) -> np.ndarray: ...

    def arm_reward(self, task, arm: int) -> int: ...


def train_linucb(state: LinUcbState, validation_tasks: Sequence, pipeline: BanditPipeline,
                 passes: int = 1, shuffle_seed: int = 0, *, full_information: bool = False,
                 on_step: Callable[[object, int, int], None] | None = None) -> LinUcbState:
    """Fit a copy of ``state`` on validation tasks and return it.

    Each pass visits the tasks in a seeded shuffle. On-policy (default): the
    current policy picks an arm, that arm's completion is scored, and only
    that arm is updated. With ``full_information`` every arm is scored and
    updated per task. Tasks whose pipeline call fails are skipped and
    counted in ``state.history``.
    """
    if not validation_tasks:
        raise InvalidParam("need at least one validation task")
    if passes < 1:
        raise InvalidParam("passes must be >= 1")
    state = copy.deepcopy(state)
    rng = random.Random(shuffle_seed)
    for pass_no in range(passes):
        order = list(validation_tasks)
        rng.shuffle(order)
        rewarded = selected = skipped = 0
        for task in order:
            try:
                feats = _check_feats(state, pipeline.arm_features(task))
                arm = linucb_select(state, feats)
                if full_information:
                    rewards = [int(pipeline.arm_reward(task, a)) for a in range(state.n_arms)]
                    reward = rewards[arm]
                else:
                    reward = int(pipeline.arm_reward(task, arm))
            except MultiRetrieverError as exc:
                logger.warning("skipping task %s during training: %s", getattr(task, "task_id", task), exc)
                skipped += 1
                continue
            if full_information:
                for a, r in enumerate(rewards):
                    linucb_update(state, a, feats[a], r)
            else:
                linucb_update(state, arm, feats[arm], reward)
            selected += 1
            rewarded += reward
            if on_step is not None:
                on_step(task, arm, reward)
        accuracy = rewarded / selected if selected else 0.0
        state.history.append({"pass": pass_no, "selected": selected, "rewarded": rewarded,
                              "skipped": skipped, "selection_accuracy": accuracy})
        logger.info("LinUCB pass %d: selection accuracy %.3f over %d tasks (%d skipped)",
                    pass_no, accuracy, selected, skipped)
    return state


# --------------------------------------------------------------------------- baselines

def max_similarity_select(results_per_arm: Sequence[Sequence[RetrievalResult]]) -> int:
    """Arm with the highest top-1 cosine; arms with no results never win a tie."""
    best, best_cos = 0, -math.inf
    for arm, results in enumerate(results_per_arm):
        cos = results[0].cosine if results else -math.inf
        if cos > best_cos:
            best, best_cos = arm, cos
    return best


def union_context(results_per_arm: Sequence[Sequence[RetrievalResult]],
                  dedup: bool = True) -> list[RetrievalResult]:
    """Every arm's results in arm order, first occurrence of each snippet kept."""
    out: list[RetrievalResult] = []
    seen: set[str] = set()
    for results in results_per_arm:
        for r in results:
            if dedup and r.snippet_id in seen:
                continue
            seen.add(r.snippet_id)
            out.append(r)
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def logistic_objective(w: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean binary cross-entropy plus ``l2 / 2 * |w|^2`` (bias unpenalized)."""
    z = X @ w + bias
    # log(1 + e^z) - y z, computed stably
    loss = np.logaddexp(0.0, z) - y * z
    return float(loss.mean() + 0.5 * l2 * (w @ w))


def logistic_gradient(w: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray,
                      l2: float) -> tuple[np.ndarray, float]:
    err = _sigmoid(X @ w + bias) - y
    return X.T @ err / len(y) + l2 * w, float(err.mean())


def standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard deviations, with constant columns given scale 1."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


@dataclass
class LogisticModel:
    weights: np.ndarray  # (n_arms, d)
    bias: np.ndarray  # (n_arms,)
    # class rate for arms whose labels were single-class, NaN otherwise
    prior: np.ndarray

    @property
    def n_arms(self) -> int:
        return int(self.weights.shape[0])

    def predict_proba(self, feats) -> np.ndarray:
        x = np.asarray(feats, dtype=np.float64)
        if x.shape != self.weights.shape:
            raise DimMismatch(f"features shaped {x.shape}, expected {self.weights.shape}")
        probs = _sigmoid(np.einsum("ad,ad->a", x, self.weights) + self.bias)
        return np.where(np.isnan(self.prior), probs, self.prior)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "prior": [None if math.isnan(p) else p for p in self.prior.tolist()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> LogisticModel:
        prior = data.get("prior") or [None] * len(data["bias"])
        return cls(np.asarray(data["weights"], dtype=np.float64),
                   np.asarray(data["bias"], dtype=np.float64),
                   np.array([math.nan if p is None else p for p in prior], dtype=np.float64))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> LogisticModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _labels(label, n_arms: int) -> np.ndarray:
    if label is None:
        return np.zeros(n_arms)
    if isinstance(label, (int, np.integer)):
        y = np.zeros(n_arms)
        y[int(label)] = 1.0
        return y
    y = np.asarray(label, dtype=np.float64)
    if y.shape != (n_arms,):
        raise DimMismatch(f"per-arm labels shaped {y.shape}, expected {(n_arms,)}")
    return y


def logistic_train(samples: Sequence[tuple], lr: float = 0.1, epochs: int = 500,
                   l2: float = 1e-4, strict: bool = False) -> LogisticModel:
    """One-vs-rest logistic regression, one binary model per arm.

    Each sample is ``(arm_features, label)`` where ``label`` is the winning
    arm index, ``None`` when no arm succeeded, or a per-arm 0/1 sequence when
    several arms succeeded. Arm ``a``'s model sees only ``features[a]``.
    Full-batch gradient descent from zero weights on per-arm standardized
    features; the L2 penalty applies in that standardized space.
    """
    if not samples:
        raise InvalidParam("need at least one training sample")
    X = np.array([np.asarray(f, dtype=np.float64) for f, _ in samples])
    if X.ndim != 3:
        raise DimMismatch("every sample needs an (n_arms, d) feature array")
    n, n_arms, d = X.shape
    Y = np.array([_labels(lab, n_arms) for _, lab in samples])
    weights = np.zeros((n_arms, d))
    bias = np.zeros(n_arms)
    prior = np.full(n_arms, math.nan)
    for arm in range(n_arms):
        y = Y[:, arm]
        if np.all(y == y[0]):
            msg = f"arm {arm} has single-class labels; using its class rate {y[0]:.0f}"
            if strict:
                raise DegenerateData(msg)
            warnings.warn(msg, DegenerateDataWarning, stacklevel=2)
            prior[arm] = float(y.mean())
            continue
        # descend on standardized features, then map back to raw feature space
        mu, sd = standardization(X[:, arm, :])
        Z = (X[:, arm, :] - mu) / sd
        w, b0 = np.zeros(d), 0.0
        for _ in range(epochs):
            gw, gb = logistic_gradient(w, b0, Z, y, l2)
            w -= lr * gw
            b0 -= lr * gb
        weights[arm] = w / sd
        bias[arm] = b0 - float(weights[arm] @ mu)
    return LogisticModel(weights, bias, prior)


def logistic_select(model: LogisticModel, feats) -> int:
    return int(np.argmax(model.predict_proba(feats)))
