"""Candidate enumeration against an exhaustive oracle, and UCB selection."""

import itertools
import math

import numpy as np
import pytest

from kissgram.errors import EmptyCandidates
from kissgram.filler import (
    ActionSpec,
    CapOnly,
    DiscreteSet,
    MembershipList,
    SearchTree,
    backpropagate,
    enumerate_lifted,
    enumerate_membership,
    enumerate_small,
    fingerprint_column,
    fingerprint_state,
    select_action,
)
from kissgram.gram import (
    CandidateColumn,
    GramState,
    Tolerances,
    extend,
    factorize,
    full_rank_prefix,
    gram_from_vectors,
    permute_state,
)
from kissgram.refconfigs import generate

TOLS = Tolerances()
C1 = (-1.0, -0.5, 0.0, 0.5)


def oracle_small(state: GramState, values, tols=TOLS) -> set[tuple[float, ...]]:
    """Exhaustive rank-increasing action set via full eigenvalue checks."""
    m = state.m
    out = set()
    for tup in itertools.product(values, repeat=m):
        g = np.zeros((m + 1, m + 1))
        g[:m, :m] = state.entries
        g[m, :m] = tup
        g[:m, m] = tup
        g[m, m] = 1.0
        w = np.linalg.eigvalsh(g)
        if w[0] >= -tols.psd and int(np.count_nonzero(w > tols.rank)) == m + 1:
            out.add(tup)
    return out


def oracle_lifted(state: GramState, values, c2, tols=TOLS) -> set[tuple[float, ...]]:
    """Exhaustive lifted action set via dense inverses and pseudo-inverses."""
    n = state.dim
    basis = state.entries[:n, :n]
    chol = np.linalg.cholesky(basis)
    pinv = np.linalg.pinv(basis)
    cross = state.entries[n:, :n]
    out = set()
    for head in itertools.product(values, repeat=n):
        h = np.array(head)
        y = np.linalg.inv(chol) @ h
        if abs(np.linalg.norm(y) - 1.0) > tols.psd:
            continue
        tail = cross @ pinv @ h
        if isinstance(c2, CapOnly):
            if tail.size and tail.max() > c2.max_value + tols.cosine:
                continue
            snapped = tail
        else:
            snapped = []
            ok = True
            for t in tail:
                dist = [abs(t - v) for v in c2.values]
                k = int(np.argmin(dist))
                if dist[k] > tols.snap:
                    ok = False
                    break
                snapped.append(c2.values[k])
            if not ok:
                continue
            snapped = np.array(snapped)
        out.add(tuple(np.concatenate([h, snapped]).tolist()))
    return out


def as_set(candidates) -> set[tuple[float, ...]]:
    return {tuple(c.full.tolist()) for c in candidates}


def test_enumerate_small_single_sphere_example():
    spec = ActionSpec(c1=DiscreteSet(C1))
    got = as_set(enumerate_small(GramState.single(3), spec))
    assert got == {(-0.5,), (0.0,), (0.5,)}  # [-1] loses rank, [1] is capped out


def test_enumerate_small_matches_oracle_on_identity_pair():
    spec = ActionSpec(c1=DiscreteSet(C1))
    state = GramState(dim=3, entries=np.eye(2))
    assert as_set(enumerate_small(state, spec)) == oracle_small(state, C1)


def test_enumerate_small_empty_value_set():
    spec = ActionSpec(c1=DiscreteSet(()))
    assert enumerate_small(GramState.single(2), spec) == []


def test_enumerate_small_is_lexicographic():
    spec = ActionSpec(c1=DiscreteSet(C1))
    state = GramState(dim=3, entries=np.eye(2))
    cols = [tuple(c.full.tolist()) for c in enumerate_small(state, spec)]
    assert cols == sorted(cols)


def test_enumerate_lifted_recovers_missing_e8_root():
    spec = ActionSpec(c1=DiscreteSet(C1))
    e8 = generate("E8Roots").gram.as_float()
    state = permute_state(e8, full_rank_prefix(e8))
    sub = GramState(dim=8, entries=state.entries[:239, :239])
    cands = enumerate_lifted(sub, factorize(sub), spec)
    assert len(cands) == 1
    assert np.abs(cands[0].full - state.entries[239, :239]).max() < 1e-9


def test_enumerate_lifted_hexagon_is_stuck():
    spec = ActionSpec(c1=DiscreteSet(C1))
    hexagon = generate("Hexagon").gram.as_float()
    assert enumerate_lifted(hexagon, factorize(hexagon), spec) == []


def test_enumerate_lifted_cap_only_postcondition():
    rng = np.random.default_rng(0)
    spec = ActionSpec(c1=DiscreteSet(C1), c2=CapOnly(0.5))
    built = generate("CrossPolytope(3)").gram.as_float()
    cands = enumerate_lifted(built, factorize(built), spec)
    for c in cands:
        assert c.tail.size == 0 or c.tail.max() <= 0.5 + 1e-9


def test_enumerate_lifted_agrees_with_oracle_randomized():
    rng = np.random.default_rng(12)
    spec_values_pool = [(-1.0, -0.5, 0.0, 0.5), (-1.0, -0.5, 0.5), (-0.5, 0.0, 0.5)]
    for _ in range(40):
        n = int(rng.integers(2, 4))
        extra = int(rng.integers(0, 3))
        values = spec_values_pool[int(rng.integers(len(spec_values_pool)))]
        state = _random_discrete_state(rng, n, n + extra, values)
        if state is None:
            continue
        spec = ActionSpec(c1=DiscreteSet(values))
        cands = enumerate_lifted(state, factorize(state), spec)
        assert as_set(cands) == oracle_lifted(state, values, spec.c2)


def _random_discrete_state(rng, n, m, values):
    """Grow a random feasible configuration over the given cosine set."""
    state = GramState.single(n)
    spec = ActionSpec(c1=DiscreteSet(values))
    while state.m < m:
        if state.m < n:
            cands = enumerate_small(state, spec)
        else:
            try:
                cands = enumerate_lifted(state, factorize(state), spec)
            except Exception:
                return None
        if not cands:
            return state if state.m >= n else None
        state = extend(state, cands[int(rng.integers(len(cands)))])
    return state


def test_transpose_inverse_convention_runs():
    spec = ActionSpec(c1=DiscreteSet(C1))
    built = generate("CrossPolytope(2)").gram.as_float()
    cands = enumerate_lifted(built, factorize(built), spec,
                             norm_convention="transpose_inverse")
    for c in cands:
        assert c.full.max() <= 0.5 + 1e-9


def test_selection_cold_tree_takes_first_candidate():
    tree = SearchTree()
    state = GramState.single(2)
    a = CandidateColumn(head=np.array([0.5]))
    b = CandidateColumn(head=np.array([0.0]))
    assert select_action(tree, state, [a, b]) is a


def test_selection_pure_exploitation():
    tree = SearchTree(exploration=0.0)
    state = GramState.single(2)
    a = CandidateColumn(head=np.array([0.5]))
    b = CandidateColumn(head=np.array([0.0]))
    fp = fingerprint_state(state)
    backpropagate(tree, [(fp, fingerprint_column(a))], 1.0)
    backpropagate(tree, [(fp, fingerprint_column(b))], 0.0)
    assert select_action(tree, state, [a, b]) is a


def test_selection_exploration_bonus_flips_choice():
    # Q(a)=1.0 with 90 visits, Q(b)=0.9 with 10 visits, c=1:
    # bonus(b) = sqrt(ln(100)/10) ~ 0.679 beats the 0.1 value gap.
    assert math.sqrt(math.log(100) / 10) - math.sqrt(math.log(100) / 90) > 0.1
    tree = SearchTree(exploration=1.0)
    state = GramState.single(2)
    a = CandidateColumn(head=np.array([0.5]))
    b = CandidateColumn(head=np.array([0.0]))
    fp = fingerprint_state(state)
    for _ in range(90):
        backpropagate(tree, [(fp, fingerprint_column(a))], 1.0)
    for _ in range(10):
        backpropagate(tree, [(fp, fingerprint_column(b))], 0.9)
    assert select_action(tree, state, [a, b]) is b


def test_selection_empty_candidates():
    with pytest.raises(EmptyCandidates):
        select_action(SearchTree(), GramState.single(2), [])


def test_backpropagate_running_mean():
    tree = SearchTree()
    edge = (b"s", b"a")
    backpropagate(tree, [edge], 6.0)
    assert tree.edge_value[edge] == 6.0 and tree.edge_visits[edge] == 1
    backpropagate(tree, [edge], 10.0)
    assert tree.edge_value[edge] == 8.0 and tree.edge_visits[edge] == 2
    for _ in range(5):
        backpropagate(tree, [edge], 8.0)
    assert tree.edge_value[edge] == pytest.approx(8.0)
    assert tree.node_visits[b"s"] == 7


def test_fingerprint_is_permutation_invariant():
    built = generate("D4Roots").gram.as_float()
    rng = np.random.default_rng(3)
    order = list(rng.permutation(built.m))
    assert fingerprint_state(built) == fingerprint_state(permute_state(built, order))
    other = generate("CrossPolytope(4)").gram.as_float()
    assert fingerprint_state(built) != fingerprint_state(other)


def test_action_spec_validation():
    with pytest.raises(ValueError):
        ActionSpec(c1=DiscreteSet((0.9,)))
    with pytest.raises(ValueError):
        ActionSpec(c1=DiscreteSet(C1), c2=CapOnly(0.7))
    spec = ActionSpec(c1=DiscreteSet(C1))
    assert isinstance(spec.c2, DiscreteSet)  # defaults to C1


def test_enumeration_determinism():
    spec = ActionSpec(c1=DiscreteSet(C1))
    built = generate("D4Roots").gram.as_float()
    state = permute_state(built, full_rank_prefix(built))
    sub = GramState(dim=4, entries=state.entries[:20, :20])
    runs = [as_set(enumerate_lifted(sub, factorize(sub), spec)) for _ in range(2)]
    assert runs[0] == runs[1]
    streams = [[tuple(c.full.tolist()) for c in enumerate_lifted(sub, factorize(sub), spec)]
               for _ in range(2)]
    assert streams[0] == streams[1]


def test_enumerate_membership_restricts_to_list():
    built = generate("D4Roots")
    spec = ActionSpec(c1=DiscreteSet(C1), c_star=MembershipList(vectors=built.vectors))
    state = gram_from_vectors(built.vectors[:6], 4)
    used = np.zeros(24, dtype=bool)
    used[:6] = True
    pairs = enumerate_membership(state, built.vectors[:6], spec, used=used)
    assert pairs, "remaining roots must be reachable"
    for idx, col in pairs:
        assert not used[idx]
        expected = built.vectors[idx] @ built.vectors[:6].T
        assert np.abs(col.full - expected).max() < 1e-7


def test_enumerate_membership_small_regime_requires_rank_growth():
    built = generate("CrossPolytope(3)")
    spec = ActionSpec(c1=DiscreteSet(C1), c_star=MembershipList(vectors=built.vectors))
    state = gram_from_vectors(built.vectors[:1], 3)
    used = np.zeros(6, dtype=bool)
    used[0] = True
    pairs = enumerate_membership(state, built.vectors[:1], spec, used=used)
    # The antipode -e1 extends PSD but keeps rank 1, so it is excluded.
    indices = {i for i, _ in pairs}
    assert 3 not in indices
    assert {1, 2, 4, 5} <= indices


def test_blame_counts_single_violator_rows():
    spec = ActionSpec(c1=DiscreteSet((-1.0, -0.5, 0.5)))
    e8 = generate("E8Roots").gram.as_float()
    state = permute_state(e8, full_rank_prefix(e8))
    sub = GramState(dim=8, entries=state.entries[:40, :40])
    blame = np.zeros(40)
    enumerate_lifted(sub, factorize(sub), spec, blame=blame)
    assert blame[:8].sum() == 0  # heads are never blamed
    assert blame.sum() >= 0


def test_enumerate_small_rejects_lifted_regime():
    from kissgram.errors import DimensionMismatch

    spec = ActionSpec(c1=DiscreteSet(C1))
    state = GramState(dim=2, entries=np.eye(2))
    with pytest.raises(DimensionMismatch):
        enumerate_small(state, spec)
    with pytest.raises(DimensionMismatch):
        enumerate_lifted(GramState.single(3), factorize(state), spec)


def test_action_spec_rejects_capped_out_tail_values():
    with pytest.raises(ValueError):
        ActionSpec(c1=DiscreteSet((0.0,)), c2=DiscreteSet((0.9,)))
