"""Discovery of the discrete cosine set of feasible kissing structures.

New sphere centers tangent to n-1 chosen spheres are solved in closed form;
a UCB tree search grows configurations toward larger sphere counts and the
cosines of the best structures are recorded until their frequencies settle
on a discrete set.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import RankDeficient
from .filler import DiscreteSet, SearchTree, backpropagate, fingerprint_state
from .gram import COSINE_CAP, gram_from_vectors

# Exact algebraic constants that recur in lattice-derived configurations.
_SQRT3 = math.sqrt(3.0)
_SQRT6 = math.sqrt(6.0)
ALGEBRAIC_CONSTANTS: dict[str, float] = {
    "sqrt(6)/12": _SQRT6 / 12,
    "sqrt(3)/6": _SQRT3 / 6,
    "sqrt(6)/6": _SQRT6 / 6,
    "(2*sqrt(3)-sqrt(6))/12": (2 * _SQRT3 - _SQRT6) / 12,
    "(2*sqrt(3)+sqrt(6))/12": (2 * _SQRT3 + _SQRT6) / 12,
}
ALGEBRAIC_CONSTANTS.update({f"-{k}": -v for k, v in list(ALGEBRAIC_CONSTANTS.items())})

SNAP_MAX_DENOMINATOR = 12
SNAP_TOL = 1e-6


@dataclass(frozen=True)
class CosineValue:
    """A cosine with its exact form when one was recognized."""

    value: float
    exact: Fraction | None = None
    label: str = ""

    def display(self) -> str:
        return self.label if self.label else f"{self.value:.9f}"


def snap_value(x: float, tol: float = SNAP_TOL) -> CosineValue:
    """Snap to a low-height rational (denominator <= 12) or a known
    algebraic constant when within tolerance; otherwise keep the float."""
    frac = Fraction(x).limit_denominator(SNAP_MAX_DENOMINATOR)
    if abs(float(frac) - x) <= tol:
        num, den = frac.numerator, frac.denominator
        label = f"{num}" if den == 1 else f"{num}/{den}"
        return CosineValue(value=float(frac), exact=frac, label=label)
    for label, target in ALGEBRAIC_CONSTANTS.items():
        if abs(target - x) <= tol:
            return CosineValue(value=target, exact=None, label=label)
    return CosineValue(value=x)


@dataclass(frozen=True)
class CosineSet:
    """Finite set of admissible cosine values, sorted ascending."""

    entries: tuple[CosineValue, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries",
                           tuple(sorted(self.entries, key=lambda e: e.value)))

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(e.value for e in self.entries)

    @property
    def is_rational(self) -> bool:
        return all(e.exact is not None for e in self.entries)

    def as_discrete_set(self) -> DiscreteSet:
        exact = tuple(e.exact for e in self.entries) if self.is_rational else None
        return DiscreteSet(values=self.values, exact=exact)

    @staticmethod
    def from_floats(values, snap: bool = True) -> "CosineSet":
        entries = tuple(snap_value(v) if snap else CosineValue(v) for v in values)
        return CosineSet(entries=entries)


@dataclass
class CosineHistogram:
    """Occurrence counts of rounded cosine values."""

    digits: int = 9
    bins: dict[float, int] = field(default_factory=dict)

    @property
    def total_samples(self) -> int:
        return sum(self.bins.values())

    def record(self, value: float):
        key = round(float(value), self.digits)
        if key == 0.0:
            key = 0.0  # merge -0.0
        self.bins[key] = self.bins.get(key, 0) + 1

    def merged(self, other: "CosineHistogram") -> "CosineHistogram":
        out = CosineHistogram(digits=self.digits, bins=dict(self.bins))
        for k, v in other.bins.items():
            out.bins[k] = out.bins.get(k, 0) + v
        return out


@dataclass(frozen=True)
class TangentSystem:
    """The linear part of the tangency equations for n-1 chosen centers."""

    basis_matrix: np.ndarray   # (n-1, n) stacked center coordinates
    rhs: np.ndarray            # (1/2, ..., 1/2)
    particular: np.ndarray     # minimum-norm solution of A x = b
    kernel_dir: np.ndarray     # unit vector spanning ker(A)


def build_tangent_system(centers: np.ndarray, tol: float = 1e-9) -> TangentSystem:
    a = np.asarray(centers, dtype=float)
    k, n = a.shape
    if k != n - 1:
        raise RankDeficient(f"need exactly n-1 = {n - 1} centers, got {k}")
    u, s, vt = np.linalg.svd(a)
    if s.size < n - 1 or s[-1] <= tol:
        raise RankDeficient("stacked center matrix is not of full row rank")
    b = np.full(n - 1, 0.5)
    particular = vt[: n - 1].T @ ((u.T @ b) / s)
    kernel = vt[n - 1]
    nz = np.nonzero(np.abs(kernel) > tol)[0]
    if nz.size and kernel[nz[0]] < 0:
        kernel = -kernel  # canonical sign for determinism
    return TangentSystem(basis_matrix=a, rhs=b, particular=particular, kernel_dir=kernel)


def solve_tangent(centers: np.ndarray, tol: float = 1e-9) -> list[np.ndarray]:
    """Unit centers tangent to all the given ones: zero, one or two solutions."""
    system = build_tangent_system(centers, tol)
    radicand = 1.0 - float(system.particular @ system.particular)
    if radicand < -tol:
        return []
    r = math.sqrt(max(radicand, 0.0))
    plus = system.particular + r * system.kernel_dir
    if r == 0.0:
        return [plus]
    return [plus, system.particular - r * system.kernel_dir]


def _batched_tangent(vs: np.ndarray, combos: np.ndarray, tol: float) -> np.ndarray:
    """Solve every combination at once; returns candidate unit vectors."""
    a = vs[combos]                                   # (K, n-1, n)
    n = vs.shape[1]
    u, s, vt = np.linalg.svd(a)
    ok = s[:, -1] > tol                              # full row rank
    b = np.full(n - 1, 0.5)
    coeff = (u.transpose(0, 2, 1) @ b) / np.where(s > tol, s, 1.0)
    part = np.einsum("kij,ki->kj", vt[:, : n - 1, :], coeff)
    kernel = vt[:, n - 1, :]
    rad = 1.0 - np.einsum("ki,ki->k", part, part)
    ok &= rad >= -tol
    r = np.sqrt(np.clip(rad, 0.0, None))
    sols = np.concatenate([part + r[:, None] * kernel, part - r[:, None] * kernel])
    return sols[np.concatenate([ok, ok])]


def _action_key(profile: np.ndarray) -> bytes:
    q = np.sort(np.rint(profile * 1e9).astype(np.int64))
    return hashlib.blake2b(q.tobytes(), digest_size=16).digest()


def _grow_seed(vs: np.ndarray, n: int) -> np.ndarray:
    """Pad a seed below n-1 centers with orthonormal completions.

    Orthogonal padding (cosine 0) keeps every bootstrap pair feasible and,
    unlike tangency-grown seeds, stays compatible with lattice completions:
    a mutually-tangent bootstrap triple in four dimensions provably admits
    no discrete-cosine fourth neighbor, poisoning the whole run.  Axis
    directions are preferred so the bootstrap is deterministic.
    """
    axis = 0
    while vs.shape[0] < n - 1:
        rank = np.linalg.matrix_rank(vs, tol=1e-10)
        basis = np.linalg.svd(vs)[2][:rank]
        while axis < n:
            resid = np.eye(n)[axis] - (np.eye(n)[axis] @ basis.T) @ basis
            axis += 1
            norm = float(np.linalg.norm(resid))
            if norm > 1e-8:
                vs = np.vstack([vs, (resid / norm)[None, :]])
                break
        else:
            raise RankDeficient("cannot complete the seed to n-1 independent centers")
    return vs


@dataclass(frozen=True)
class CosineSimResult:
    cosine_set: CosineSet
    converged: bool
    histogram: CosineHistogram
    best_count: int
    best_contacts: int


def _rollout(dim: int, vs0: np.ndarray, tree: SearchTree, rng: np.random.Generator,
             exploit: bool, combo_cap: int, tol: float) -> tuple[np.ndarray, list[float]]:
    """One configuration-growing pass; returns the final centers and the
    cosines recorded along the way."""
    vs = vs0.copy()
    trajectory: list[tuple[bytes, bytes]] = []
    buffer: list[float] = []
    while True:
        m = vs.shape[0]
        if math.comb(m, dim - 1) <= combo_cap:
            combos = np.array(list(itertools.combinations(range(m), dim - 1)))
        else:
            picks = np.sort(rng.integers(0, m, size=(combo_cap, dim - 1)), axis=1)
            valid = (np.diff(picks, axis=1) > 0).all(axis=1)
            combos = np.unique(picks[valid], axis=0)
            if combos.size == 0:
                break
        sols = _batched_tangent(vs, combos, tol)
        if sols.shape[0] == 0:
            break
        sols = sols[(sols @ vs.T).max(axis=1) <= COSINE_CAP + tol]
        if sols.shape[0] == 0:
            break
        seen: dict[bytes, int] = {}
        for i in range(sols.shape[0]):
            key = np.rint(sols[i] * 1e9).astype(np.int64).tobytes()
            if key not in seen:
                seen[key] = i
        cands = sols[sorted(seen.values())]
        state_fp = fingerprint_state(gram_from_vectors(vs, dim))
        profiles = cands @ vs.T
        keys = [_action_key(profiles[i]) for i in range(cands.shape[0])]
        # Tight contacts (cosines at the cap) densify the packing; the noise
        # keeps exploration rollouts diverse.
        contacts = np.count_nonzero(np.abs(profiles - COSINE_CAP) <= 1e-7, axis=1)
        visited = [i for i, k in enumerate(keys)
                   if tree.edge_visits.get((state_fp, k), 0) > 0]
        if exploit:
            if visited:
                pick = max(visited, key=lambda i: tree.edge_value[(state_fp, keys[i])])
            else:
                pick = int(np.lexsort((np.arange(len(keys)), -contacts))[0])
        else:
            fresh = [i for i in range(len(keys)) if i not in set(visited)]
            pool = fresh if fresh else list(range(len(keys)))
            prior = contacts + rng.uniform(0.0, 1.0, size=len(keys))
            if not fresh:
                pick = max(pool, key=lambda i: tree.ucb(state_fp, keys[i]))
            else:
                pick = max(pool, key=lambda i: prior[i])
        buffer.extend(float(c) for c in profiles[pick])
        trajectory.append((state_fp, keys[pick]))
        vs = np.vstack([vs, cands[pick][None, :]])
    backpropagate(tree, trajectory, float(vs.shape[0]))
    return vs, buffer


def _contact_pairs(vs: np.ndarray) -> int:
    g = vs @ vs.T
    return int(np.count_nonzero(np.abs(g[np.triu_indices(len(g), k=1)] - COSINE_CAP) <= 1e-7))


def simulate_cosine_set(dim: int, seed_config: np.ndarray, budget: int,
                        ucb_c: float = math.sqrt(2.0), *,
                        rng: np.random.Generator | None = None,
                        combo_cap: int = 512, digits: int = 9,
                        noise_floor: float = 0.005,
                        tol: float = 1e-9) -> CosineSimResult:
    """Record cosine frequencies over ``budget`` guided rollouts.

    Rollouts alternate between exploring fresh branches and exploiting the
    tree's best path.  Samples are committed to the histogram only by
    rollouts matching the best structure found so far, ranked by sphere
    count and then by tight-contact pairs; a strict improvement obsoletes
    earlier samples.  A value enters the extracted set when its frequency
    clears the noise floor and it persists across both halves of the
    committed samples.  Exhausting the budget is not an error: the partial
    histogram is returned with the convergence flag down.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if dim < 2:
        raise RankDeficient("cosine simulation needs dimension at least 2")
    if rng is None:
        rng = np.random.default_rng(0)
    vs0 = np.asarray(seed_config, dtype=float)
    if vs0.ndim != 2 or vs0.shape[1] != dim:
        raise RankDeficient(f"seed centers must be vectors of dimension {dim}")
    vs0 = vs0 / np.linalg.norm(vs0, axis=1)[:, None]
    if vs0.shape[0] < dim - 1:
        vs0 = _grow_seed(vs0, dim)
    tree = SearchTree(exploration=ucb_c)
    best_key = (vs0.shape[0], -1)
    commits: list[list[float]] = []
    for rollout in range(budget):
        exploit = rollout % 2 == 1
        vs, buffer = _rollout(dim, vs0, tree, rng, exploit, combo_cap, tol)
        key = (vs.shape[0], _contact_pairs(vs))
        if key > best_key:
            best_key = key
            commits = [buffer]
        elif key == best_key:
            commits.append(buffer)
    halves = [CosineHistogram(digits=digits), CosineHistogram(digits=digits)]
    for c_i, buffer in enumerate(commits):
        half = halves[0] if c_i < (len(commits) + 1) // 2 else halves[1]
        for value in buffer:
            half.record(value)
    merged = halves[0].merged(halves[1])
    extracted = _extract(merged, halves, noise_floor)
    per_half = [_extract(h, [h], noise_floor) for h in halves]
    converged = (len(commits) >= 2 and len(extracted.values) > 0
                 and per_half[0].values == per_half[1].values)
    return CosineSimResult(cosine_set=extracted, converged=converged,
                           histogram=merged, best_count=best_key[0],
                           best_contacts=max(best_key[1], 0))


def _extract(merged: CosineHistogram, halves: list[CosineHistogram],
             noise_floor: float) -> CosineSet:
    """Group bins by snapped value, then apply the floor and persistence."""
    total = max(merged.total_samples, 1)
    half_seen: list[set[str]] = [
        {snap_value(k).display() for k in h.bins} for h in halves]
    groups: dict[str, dict] = {}
    for key, count in sorted(merged.bins.items()):
        snapped = snap_value(key)
        g = groups.setdefault(snapped.display(), {"entry": snapped, "count": 0})
        g["count"] += count
    kept = [g["entry"] for label, g in groups.items()
            if g["count"] >= noise_floor * total
            and all(label in seen for seen in half_seen)]
    return CosineSet(entries=tuple(kept))
