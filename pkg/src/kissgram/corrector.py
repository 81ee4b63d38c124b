"""Player 2: sample row deletions and learn which rows block expansion.

The policy scores rows from geometric features with a linear function and
samples a deletion set through a temperatured softmax without replacement.
Training is plain REINFORCE on the shared team reward with a moving-average
baseline; the log-likelihood gradient is exact and finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ProtectedRow
from .gram import GramState

FEATURE_BASE = 4  # max-cosine degree, mean cosine, age, conflict score


@dataclass(frozen=True)
class RowFeatures:
    """Raw per-row observations; the value histogram sums to m - 1."""

    max_degree: int
    mean_cosine: float
    value_counts: tuple[int, ...]
    age: int
    conflict_score: int


def row_features(state: GramState, c1_values: Sequence[float], ages: Sequence[int],
                 conflicts: Sequence[int]) -> list[RowFeatures]:
    """Observe every row of the state against the search's cosine set.

    Off-diagonal entries are binned to the nearest set value so every row's
    histogram accounts for all m - 1 partners.
    """
    g = state.entries
    m = state.m
    vals = np.asarray(c1_values, dtype=float)
    off_mask = ~np.eye(m, dtype=bool)
    gmax = g[off_mask].max() if m > 1 else -1.0
    out = []
    for i in range(m):
        row = g[i][np.arange(m) != i]
        counts = np.zeros(len(vals), dtype=int)
        if row.size and len(vals):
            nearest = np.argmin(np.abs(row[:, None] - vals[None, :]), axis=1)
            for k in nearest:
                counts[k] += 1
        out.append(RowFeatures(
            max_degree=int(np.count_nonzero(np.abs(row - gmax) <= 1e-9)) if row.size else 0,
            mean_cosine=float(row.mean()) if row.size else 0.0,
            value_counts=tuple(int(c) for c in counts),
            age=int(ages[i]),
            conflict_score=int(conflicts[i]),
        ))
    return out


def feature_matrix(features: Sequence[RowFeatures], rounds: int = 1) -> np.ndarray:
    """Normalized feature rows used for policy scoring."""
    m = len(features)
    if m == 0:
        return np.zeros((0, FEATURE_BASE))
    k = len(features[0].value_counts)
    out = np.zeros((m, FEATURE_BASE + k))
    denom = max(m - 1, 1)
    conflict_total = max(sum(f.conflict_score for f in features), 1)
    for i, f in enumerate(features):
        out[i, 0] = f.max_degree / denom
        out[i, 1] = f.mean_cosine
        out[i, 2] = f.age / max(rounds, 1)
        out[i, 3] = f.conflict_score / conflict_total
        out[i, 4:] = np.asarray(f.value_counts, dtype=float) / denom
    return out


@dataclass(frozen=True)
class CorrectorPolicy:
    """Feature-linear softmax deletion policy."""

    weights: np.ndarray
    temperature: float = 1.0
    max_delete_fraction: float = 0.2
    protected_prefix: int = 0

    def __post_init__(self):
        if not 0.0 <= self.max_delete_fraction < 1.0:
            raise ValueError("max_delete_fraction must lie in [0, 1)")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        w = np.ascontiguousarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @staticmethod
    def zeros(n_features: int, **kwargs) -> "CorrectorPolicy":
        return CorrectorPolicy(weights=np.zeros(n_features), **kwargs)


@dataclass(frozen=True)
class CorrectionDraw:
    """One sampled deletion: the set, the draw order, and its context."""

    indices: tuple[int, ...]       # sorted deletion set
    sequence: tuple[int, ...]      # order the rows were drawn in
    eligible: tuple[int, ...]      # rows that were available to the sampler
    features: np.ndarray           # feature matrix at sampling time


def sample_index_set(policy: CorrectorPolicy, state: GramState, features: np.ndarray,
                     rng: np.random.Generator,
                     protected: Sequence[int] | int | None = None) -> CorrectionDraw:
    """Sample rows for deletion (softmax without replacement, capped size).

    The set size is a Binomial(len(eligible), max_delete_fraction) draw
    truncated at floor(max_delete_fraction * m); an empty set is a legal
    pass.  Protected rows are never eligible.
    """
    m = state.m
    if protected is None:
        protected = policy.protected_prefix
    if isinstance(protected, int):
        eligible = list(range(protected, m))
    else:
        blocked = set(int(i) for i in protected)
        eligible = [i for i in range(m) if i not in blocked]
    cap = int(policy.max_delete_fraction * m)
    k = 0
    if eligible and cap > 0:
        k = min(int(rng.binomial(len(eligible), policy.max_delete_fraction)), cap, len(eligible))
    scores = features @ policy.weights
    remaining = list(eligible)
    sequence: list[int] = []
    for _ in range(k):
        logits = np.array([scores[i] for i in remaining]) / policy.temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        pick = int(rng.choice(len(remaining), p=probs))
        sequence.append(remaining.pop(pick))
    return CorrectionDraw(
        indices=tuple(sorted(sequence)),
        sequence=tuple(sequence),
        eligible=tuple(eligible),
        features=features,
    )


def apply_correction(state: GramState, delete_set: Sequence[int],
                     protected: Sequence[int] | int = 0) -> GramState:
    """Principal submatrix on the kept rows; invariants survive deletion."""
    m = state.m
    dels = sorted(set(int(i) for i in delete_set))
    if any(i < 0 or i >= m for i in dels):
        raise IndexError(f"deletion index out of range for m={m}")
    if isinstance(protected, int):
        bad = [i for i in dels if i < protected]
    else:
        shielded = set(int(i) for i in protected)
        bad = [i for i in dels if i in shielded]
    if bad:
        raise ProtectedRow(f"rows {bad} are protected")
    keep = [i for i in range(m) if i not in set(dels)]
    entries = state.entries[np.ix_(keep, keep)]
    exact = None
    if state.exact is not None:
        exact = tuple(tuple(state.exact[i][j] for j in keep) for i in keep)
    return GramState(dim=state.dim, entries=entries, exact=exact)


def log_prob(policy: CorrectorPolicy, draw: CorrectionDraw) -> float:
    """Log-likelihood of the drawn sequence, up to the weight-independent
    size term."""
    scores = draw.features @ policy.weights
    remaining = list(draw.eligible)
    total = 0.0
    for pick in draw.sequence:
        logits = np.array([scores[i] for i in remaining]) / policy.temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        total += float(np.log(probs[remaining.index(pick)]))
        remaining.remove(pick)
    return total


def grad_log_prob(policy: CorrectorPolicy, draw: CorrectionDraw) -> np.ndarray:
    """Exact gradient of log_prob with respect to the policy weights."""
    scores = draw.features @ policy.weights
    remaining = list(draw.eligible)
    grad = np.zeros_like(policy.weights)
    for pick in draw.sequence:
        feats = draw.features[remaining]
        logits = np.array([scores[i] for i in remaining]) / policy.temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        grad += (draw.features[pick] - probs @ feats) / policy.temperature
        remaining.remove(pick)
    return grad


@dataclass(frozen=True)
class EpisodeSample:
    """Training record: the deletions drawn in one episode and its reward."""

    draws: tuple[CorrectionDraw, ...]
    team_reward: float


def policy_gradient_update(policy: CorrectorPolicy, episodes: Sequence[EpisodeSample],
                           learning_rate: float, baseline: float) -> tuple[CorrectorPolicy, float]:
    """One REINFORCE step; returns (new policy, updated moving baseline).

    Weights move along mean advantage-weighted score gradients; episodes
    whose reward equals the baseline contribute nothing.
    """
    if not episodes:
        raise ValueError("policy_gradient_update needs at least one episode")
    grad = np.zeros_like(policy.weights)
    for ep in episodes:
        advantage = ep.team_reward - baseline
        if advantage == 0.0:
            continue
        for draw in ep.draws:
            grad += advantage * grad_log_prob(policy, draw)
    grad /= len(episodes)
    new_weights = policy.weights + learning_rate * grad
    mean_reward = sum(ep.team_reward for ep in episodes) / len(episodes)
    new_baseline = 0.9 * baseline + 0.1 * mean_reward
    return replace(policy, weights=new_weights), new_baseline
