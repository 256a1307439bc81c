import json

import numpy as np
import pytest

from protoquad.embedders.base import GradientMatrix
from protoquad.embedders.fisher import estimate_fisher_info
from protoquad.evaluation.analysis import subset_objective
from protoquad.exceptions import DegenerateCandidate, PoolExhausted
from protoquad.kernels.fisher import AffinityVector, KernelOracle, affinity_vector
from protoquad.kernels.precomputed import PrecomputedKernel
from protoquad.selection.base import InverseState, SelectionReport, default_tol_d, extend_inverse
from protoquad.selection.influence import influence_report, influence_scores, one_step_sbq_scores
from protoquad.selection.sbq import (
    greedy_step,
    posterior_variance,
    quadrature_weights,
    replay_state,
    select_sbq,
)


def random_spd(rng, t, oversample=5):
    X = rng.normal(size=(t, t + oversample)) / np.sqrt(t + oversample)
    return X @ X.T


def precomputed(t=25, seed=0):
    rng = np.random.default_rng(seed)
    K = random_spd(rng, t)
    return K, PrecomputedKernel(K), AffinityVector(rng.normal(size=t), 2.0)


def test_bordered_inverse_two_by_two():
    """A = [2], b = [1], c = 2 gives [[2/3, -1/3], [-1/3, 2/3]]."""
    state = extend_inverse(InverseState.empty(), [], 2.0)
    state = extend_inverse(state, [1.0], 2.0)

    assert np.allclose(state.inv, np.array([[2.0, -1.0], [-1.0, 2.0]]) / 3.0, rtol=0, atol=1e-15)


def test_bordered_inverse_growth_to_200():
    """K_SS * inv stays within 1e-8 of the identity at every size."""
    K = random_spd(np.random.default_rng(11), 200, oversample=50)
    state = InverseState.empty()
    for j in range(200):
        state = extend_inverse(state, K[state.indices, j], K[j, j], index=j)
        assert state.inverse_residual() <= 1e-8


def test_degenerate_border_rejected():
    """A duplicated atom has a zero Schur complement."""
    state = extend_inverse(InverseState.empty(), [], 1.0)

    with pytest.raises(DegenerateCandidate):
        extend_inverse(state, [1.0], 1.0)
    assert default_tol_d(0.5) == 1e-10
    assert default_tol_d(4.0) == pytest.approx(4e-10)


def test_first_pick_maximizes_normalized_affinity():
    """With nothing selected the gain is z_j^2 / k(j, j)."""
    K, kernel, affinity = precomputed()
    chosen, state = greedy_step(InverseState.empty(), kernel, affinity)

    assert chosen == int(np.argmax(affinity.z ** 2 / np.diag(K)))
    assert state.indices == [chosen]


def test_variance_trace_nonincreasing():
    K, kernel, affinity = precomputed()
    report = select_sbq(10, kernel, affinity)

    assert len(report.selections) == 10
    assert all(b <= a + 1e-12 for a, b in zip(report.variance_trace, report.variance_trace[1:]))
    assert report.variance_trace[0] == pytest.approx(affinity.test_self_term - report.objective_trace[0])


def test_objective_matches_dense_solve():
    """g(S) from the rank-one updates equals z_S^T K_SS^-1 z_S."""
    K, kernel, affinity = precomputed()
    report = select_sbq(8, kernel, affinity)

    for s in range(1, 9):
        expected = subset_objective(K, affinity.z, report.selections[:s])
        assert report.objective_trace[s - 1] == pytest.approx(expected, rel=1e-8)


def test_weights_are_orthogonal_projection():
    """z_i - sum_j w_j k(j, i) vanishes on the selection."""
    K, kernel, affinity = precomputed()
    report = select_sbq(10, kernel, affinity)
    S = report.selections

    residual = affinity.z[S] - K[np.ix_(S, S)] @ np.asarray(report.weights)
    assert np.max(np.abs(residual)) <= 1e-8


def test_ties_go_to_lowest_index():
    """Equal gains pick the lowest index first."""
    kernel = PrecomputedKernel(np.eye(5))
    report = select_sbq(3, kernel, AffinityVector(np.ones(5), 5.0))

    assert report.selections == [0, 1, 2]


def test_degenerate_candidates_are_skipped():
    """Duplicates of selected atoms are never picked; the run truncates at the rank."""
    base = np.random.default_rng(2).normal(size=(3, 3))
    G = np.vstack([base, base])
    kernel = PrecomputedKernel(G @ G.T)
    report = select_sbq(5, kernel, AffinityVector(G @ np.ones(3), 3.0))

    assert len(report.selections) == 3
    assert report.truncated
    assert len({i % 3 for i in report.selections}) == 3


def test_candidate_restriction():
    K, kernel, affinity = precomputed()
    report = select_sbq(4, kernel, affinity, candidates=[20, 3, 7, 11, 3, 15])

    assert set(report.selections) <= {3, 7, 11, 15, 20}
    assert report.config["num_candidates"] == 5
    with pytest.raises(IndexError):
        select_sbq(2, kernel, affinity, candidates=[25])


def test_empty_pool_step():
    kernel = PrecomputedKernel(np.eye(2))

    with pytest.raises(PoolExhausted):
        greedy_step(InverseState.empty(), kernel, AffinityVector(np.ones(2), 1.0), candidates=[])


def test_exhausted_step_carries_partial_report():
    """A step with only degenerate candidates left reports the selection made so far."""
    kernel = PrecomputedKernel(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    affinity = AffinityVector(np.array([0.6, 0.6, 0.2]), 1.0)
    state = InverseState.empty()
    first, state = greedy_step(state, kernel, affinity)
    second, state = greedy_step(state, kernel, affinity)
    assert (first, second) == (0, 2)

    with pytest.raises(PoolExhausted) as info:
        greedy_step(state, kernel, affinity, candidates=[1])
    report = info.value.report
    assert report.selections == [0, 2]
    assert report.truncated
    assert report.kernel_evals == 3
    assert np.allclose(report.objective_trace, [0.36, 0.40], rtol=0, atol=1e-12)
    assert np.allclose(report.variance_trace, [0.64, 0.60], rtol=0, atol=1e-12)

    with pytest.raises(PoolExhausted) as info:
        greedy_step(state, kernel, affinity, candidates=[])
    assert info.value.report.selections == [0, 2]
    assert info.value.report.truncated


def test_near_duplicate_second_step():
    """K = [[1, .9], [.9, 1]] and z = (.8, .8) give g = .64 then .64 * 2 / 1.9."""
    kernel = PrecomputedKernel(np.array([[1.0, 0.9], [0.9, 1.0]]))
    affinity = AffinityVector(np.array([0.8, 0.8]), 1.0)
    first, state = greedy_step(InverseState.empty(), kernel, affinity)
    assert first == 0
    assert state.objective == pytest.approx(0.64, abs=1e-12)

    second, state = greedy_step(state, kernel, affinity)
    assert second == 1
    assert state.objective == pytest.approx(0.64 * 2 / 1.9, abs=1e-12)
    assert state.objective == pytest.approx(0.6737, abs=1e-4)


def test_greedy_matches_dense_solve_greedy():
    """At t = 10 the incremental greedy follows a greedy that re-solves K_SS at every step."""
    K, kernel, affinity = precomputed(t=10, seed=4)
    report = select_sbq(10, kernel, affinity)

    chosen, trace = [], []
    for _ in range(10):
        rest = [j for j in range(10) if j not in chosen]
        values = [subset_objective(K, affinity.z, chosen + [j]) for j in rest]
        best = int(np.argmax(values))
        chosen.append(rest[best])
        trace.append(values[best])

    assert report.selections == chosen
    assert np.allclose(report.objective_trace, trace, rtol=1e-8, atol=1e-10)


def test_k_must_be_positive():
    K, kernel, affinity = precomputed()

    with pytest.raises(ValueError):
        select_sbq(0, kernel, affinity)


def test_replay_reproduces_state():
    """Replaying the selection recovers weights and posterior variance."""
    K, kernel, affinity = precomputed()
    report = select_sbq(6, kernel, affinity)
    state = replay_state(kernel, affinity, report.selections)

    assert np.allclose(quadrature_weights(state), report.weights)
    assert posterior_variance(state, affinity) == pytest.approx(report.variance)


def test_report_is_deterministic():
    """Two runs serialize identically."""
    first = select_sbq(7, *precomputed(seed=4)[1:])
    second = select_sbq(7, *precomputed(seed=4)[1:])

    assert first.to_json() == second.to_json()
    payload = json.loads(first.to_json())
    assert {"selections", "weights", "objective_trace", "variance_trace", "kernel_evals",
            "config", "truncated"} <= set(payload)
    assert SelectionReport.from_dict(payload).selections == first.selections


def make_influence_oracle(seed=0):
    rng = np.random.default_rng(seed)
    train = GradientMatrix(rng.normal(size=(30, 4)))
    test = GradientMatrix(rng.normal(size=(5, 4)))
    return KernelOracle(train, test, estimate_fisher_info(train, mode="full"))


def test_influence_scores_match_dense_solve():
    """score(i) = f_i^T info^-1 f_test."""
    oracle = make_influence_oracle()
    G, T = oracle.train_grads.rows, oracle.test_grads.rows
    direct = G @ np.linalg.solve(oracle.metric.info, T[2])

    assert np.allclose(influence_scores(oracle, 2), direct, rtol=1e-10, atol=1e-12)


def test_influence_ranking_is_scale_invariant():
    """Scaling the metric rescales scores and keeps the ranking."""
    oracle = make_influence_oracle()
    scaled = KernelOracle(oracle.train_grads, oracle.test_grads, oracle.metric.scaled(7.0))
    first, second = influence_scores(oracle, 1), influence_scores(scaled, 1)

    assert np.allclose(second, first / 7.0)
    assert np.array_equal(np.argsort(-first, kind="stable"), np.argsort(-second, kind="stable"))


def test_zero_test_gradient_scores_zero():
    rng = np.random.default_rng(0)
    train = GradientMatrix(rng.normal(size=(10, 3)))
    oracle = KernelOracle(train, GradientMatrix(np.zeros((1, 3))), estimate_fisher_info(train))

    assert np.array_equal(influence_scores(oracle, 0), np.zeros(10))
    assert np.isnan(influence_report(oracle, 0, k=3).spearman)


def test_influence_report_rankings():
    oracle = make_influence_oracle()
    report = influence_report(oracle, 0, k=5)
    scores = np.asarray(report.influence_scores)

    assert report.top_influence == np.argsort(-scores, kind="stable")[:5].tolist()
    assert np.allclose(report.sbq_scores, one_step_sbq_scores(oracle, 0))
    assert -1.0 <= report.spearman <= 1.0
    assert 0.0 <= report.top_overlap <= 1.0


def test_full_mode_affinity_selection_end_to_end():
    """A full-mode selection charges (|S| + 1) evaluations per remaining candidate."""
    oracle = make_influence_oracle(seed=3)
    affinity = affinity_vector(oracle)
    report = select_sbq(4, oracle, affinity)

    assert len(report.selections) == 4
    assert report.kernel_evals == sum((s + 1) * (30 - s) for s in range(4))
