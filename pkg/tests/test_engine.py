import numpy as np
import pytest

from qaoa_warmstart import engine
from qaoa_warmstart.engine import EngineError, ParameterVector
from qaoa_warmstart.graphs import IsingGraph

from tests.oracles import (
    brute_force_score,
    brute_force_state,
    finite_difference_gradient,
    random_ising_graph,
)


class TestParameterVector:
    def test_interleaving(self):
        theta = ParameterVector.from_values([0.1, 0.2, 0.3, 0.4])
        assert theta.depth == 2
        assert list(theta.gammas) == [0.1, 0.3]
        assert list(theta.betas) == [0.2, 0.4]

    def test_from_angles_round_trip(self):
        theta = ParameterVector.from_angles([1, 2], [3, 4])
        assert theta.values == (1.0, 3.0, 2.0, 4.0)

    def test_rejects_odd_length(self):
        with pytest.raises(EngineError):
            ParameterVector.from_values([0.1, 0.2, 0.3])

    def test_rejects_non_finite(self):
        with pytest.raises(EngineError):
            ParameterVector.from_values([0.1, float("nan")])


class TestSimulate:
    def test_zero_angles_leave_uniform_superposition(self, single_edge_graph):
        theta = ParameterVector.from_values([0.0, 0.0])
        state = engine.simulate(single_edge_graph, theta)
        assert np.allclose(state, 0.5)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            g = random_ising_graph(rng, max_nodes=6)
            p = int(rng.integers(1, 4))
            theta = ParameterVector.from_values(rng.uniform(-1, 1, size=2 * p))
            expected = brute_force_state(g, theta)
            actual = engine.simulate(g, theta)
            assert np.max(np.abs(actual - expected)) < 1e-10

    def test_norm_preserved_for_deep_circuits(self):
        rng = np.random.default_rng(5)
        g = random_ising_graph(rng, max_nodes=8)
        theta = ParameterVector.from_values(rng.uniform(-3, 3, size=16))
        state = engine.simulate(g, theta)
        assert abs(np.vdot(state, state).real - 1.0) <= 1e-12

    def test_qubit_ceiling(self):
        g = IsingGraph(nodes=5, edges=((0, 1),), weights=(1.0,))
        with pytest.raises(EngineError, match="ceiling"):
            engine.simulate(g, ParameterVector.from_values([0.1, 0.2]), qubit_ceiling=4)


class TestScore:
    def test_zero_angles_score_zero(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            g = random_ising_graph(rng)
            p = int(rng.integers(1, 5))
            theta = ParameterVector.from_values(np.zeros(2 * p))
            assert abs(engine.score(g, theta)) <= 1e-12

    def test_single_edge_closed_form(self, single_edge_graph, single_edge_optimum):
        # <Z0Z1> = sin(4 beta) sin(2 gamma w); at (pi/4, 3pi/8) the score
        # -w <Z0Z1> is exactly 1 for w = 1.
        assert engine.score(single_edge_graph, single_edge_optimum) == pytest.approx(
            1.0, abs=1e-9
        )
        rng = np.random.default_rng(2)
        for _ in range(10):
            gamma, beta = rng.uniform(-2, 2, size=2)
            theta = ParameterVector.from_values([gamma, beta])
            expected = -np.sin(4 * beta) * np.sin(2 * gamma)
            assert engine.score(single_edge_graph, theta) == pytest.approx(
                expected, abs=1e-12
            )

    def test_matches_brute_force(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            g = random_ising_graph(rng)
            p = int(rng.integers(1, 4))
            theta = ParameterVector.from_values(rng.uniform(-2, 2, size=2 * p))
            assert engine.score(g, theta) == pytest.approx(
                brute_force_score(g, theta), abs=1e-10
            )

    def test_weight_norm_bound(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            g = random_ising_graph(rng)
            theta = ParameterVector.from_values(rng.uniform(-3, 3, size=8))
            assert abs(engine.score(g, theta)) <= sum(abs(w) for w in g.weights) + 1e-12

    def test_mixer_period_pi(self):
        rng = np.random.default_rng(51)
        g = random_ising_graph(rng)
        theta = ParameterVector.from_values(rng.uniform(-1, 1, size=4))
        shifted = ParameterVector.from_values(
            [v + (np.pi if i % 2 == 1 else 0.0) for i, v in enumerate(theta.values)]
        )
        assert engine.score(g, theta) == pytest.approx(
            engine.score(g, shifted), abs=1e-10
        )

    def test_weight_scaling_linearity(self):
        # Scaling weights by lam and gammas by 1/lam leaves each edge's
        # <ZZ> term unchanged, so the score scales by lam.
        rng = np.random.default_rng(61)
        for _ in range(5):
            g = random_ising_graph(rng)
            lam = float(rng.uniform(0.5, 3.0))
            scaled = IsingGraph(
                nodes=g.nodes,
                edges=g.edges,
                weights=tuple(w * lam for w in g.weights),
            )
            theta = ParameterVector.from_values(rng.uniform(-1, 1, size=4))
            rescaled = ParameterVector.from_values(
                [v / lam if i % 2 == 0 else v for i, v in enumerate(theta.values)]
            )
            assert engine.score(scaled, rescaled) == pytest.approx(
                lam * engine.score(g, theta), rel=1e-10
            )


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(71)
        for _ in range(8):
            g = random_ising_graph(rng, max_nodes=6)
            p = int(rng.integers(1, 4))
            theta = ParameterVector.from_values(rng.uniform(-1.5, 1.5, size=2 * p))
            analytic = engine.gradient(g, theta)
            numeric = finite_difference_gradient(g, theta)
            denom = np.maximum(np.abs(numeric), 1e-6)
            assert np.max(np.abs(analytic - numeric) / denom) < 1e-5

    def test_single_edge_beta_stationary_at_optimum(
        self, single_edge_graph, single_edge_optimum
    ):
        # d(score)/d(beta) = -4 w cos(4 beta) sin(2 gamma w) = 0 at the optimum.
        grads = engine.gradient(single_edge_graph, single_edge_optimum)
        assert grads[1] == pytest.approx(0.0, abs=1e-10)
        assert grads[0] == pytest.approx(0.0, abs=1e-10)

    def test_zero_at_converged_optimum(self, single_edge_graph, single_edge_optimum):
        assert np.linalg.norm(
            engine.gradient(single_edge_graph, single_edge_optimum)
        ) < 1e-8
