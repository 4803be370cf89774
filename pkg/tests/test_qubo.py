"""QUBO builders, preprocessing, solvers, spin transform, covering encoding."""

import itertools

import numpy as np
import pytest

from coarsetree import (
    AnnealSchedule,
    GuardError,
    QuboProblem,
    ValidationError,
    WeightedDataset,
    build_graph,
    build_msc_qubo,
    build_mwis_qubo,
    decode_selection,
    energy,
    exact_mwis,
    reduce_qubo,
    slack_coeffs,
    solve_qubo_anneal,
    solve_qubo_exact,
    to_ising,
    write_qubo_text,
)


def _graph(coords, epsilon, weights=None):
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0] if coords.ndim > 1 else coords.size
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    ds = WeightedDataset(coords, weights)
    return build_graph(ds, np.arange(n), epsilon)


def _random_graph(rng, n_max):
    n = int(rng.integers(1, n_max + 1))
    ds = WeightedDataset(rng.uniform(0, 4, size=(n, 2)), rng.uniform(0.5, 3.0, n))
    return build_graph(ds, np.arange(n), float(rng.uniform(0.5, 3.0)))


def _enumerate_min(p):
    """Reference minimizer by direct enumeration (lexicographic tie rule).

    Treats energies within 1e-9 as tied so float noise from the summation
    order cannot override the tie rule; callers keep true gaps well above
    that.
    """
    best_bits, best_e = None, np.inf
    for bits in itertools.product((0, 1), repeat=p.n_vars):
        if any(bits[v] != b for v, b in p.fixed.items()):
            continue
        e = energy(p, bits)
        if e < best_e - 1e-9:
            best_bits, best_e = bits, e
    return np.array(best_bits), best_e


class TestBuildMwisQubo:
    def test_adjacent_pair_coefficients(self):
        p = build_mwis_qubo(_graph([0.0, 1.0], 2.0, weights=[1.0, 2.0]))
        assert p.coeffs[(0, 0)] == -1.0
        assert p.coeffs[(1, 1)] == -2.0
        np.testing.assert_allclose(p.coeffs[(0, 1)], 2.2)
        bits, e = solve_qubo_exact(p)
        np.testing.assert_array_equal(bits, [0, 1])
        assert e == -2.0

    def test_penalty_margin_scales_with_gamma(self):
        g = _graph([0.0, 1.0], 2.0, weights=[3.0, 1.0])
        p = build_mwis_qubo(g, gamma=0.5)
        np.testing.assert_allclose(p.coeffs[(0, 1)], 4.5)

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValidationError):
            build_mwis_qubo(_graph([0.0, 1.0], 2.0), gamma=0.0)

    def test_triangle_selects_heaviest(self):
        p = build_mwis_qubo(_graph([0.0, 1.0, 2.0], 5.0, weights=[1.0, 2.0, 3.0]))
        bits, e = solve_qubo_exact(p)
        np.testing.assert_array_equal(bits, [0, 0, 1])
        assert e == -3.0


class TestEnergy:
    def test_manual_evaluation(self):
        p = QuboProblem(2, {(0, 0): -1.0, (1, 1): -2.0, (0, 1): 5.0}, offset=0.5)
        assert energy(p, [0, 0]) == 0.5
        assert energy(p, [1, 0]) == -0.5
        assert energy(p, [0, 1]) == -1.5
        assert energy(p, [1, 1]) == 2.5

    def test_fixed_bits_enforced(self):
        p = QuboProblem(2, {(1, 1): 1.0}, offset=-3.0, fixed={0: 1})
        assert energy(p, [1, 0]) == -3.0
        with pytest.raises(ValidationError):
            energy(p, [0, 0])

    def test_wrong_length_rejected(self):
        p = QuboProblem(2, {})
        with pytest.raises(ValidationError):
            energy(p, [0, 1, 1])


class TestReduce:
    def test_single_isolated_vertex_fully_reduced(self):
        p = reduce_qubo(build_mwis_qubo(_graph([0.0], 1.0, weights=[5.0])))
        assert p.fixed == {0: 1}
        assert p.coeffs == {}
        assert p.offset == -5.0
        bits, e = solve_qubo_exact(p)
        np.testing.assert_array_equal(bits, [1])
        assert e == -5.0

    def test_isolated_vertices_pinned_coupled_kept(self):
        rng = np.random.default_rng(53)
        # two tight clusters of 3 plus 4 scattered singletons
        coords = np.concatenate(
            [rng.uniform(0, 0.5, (3, 2)), rng.uniform(10, 10.5, (3, 2)),
             np.array([[20.0, 0.0], [30.0, 0.0], [40.0, 0.0], [50.0, 0.0]])]
        )
        g = build_graph(WeightedDataset(coords, rng.uniform(1, 2, 10)), np.arange(10), 1.0)
        p = build_mwis_qubo(g)
        reduced = reduce_qubo(p)
        assert sorted(reduced.fixed) == [6, 7, 8, 9]
        assert all(b == 1 for b in reduced.fixed.values())
        assert len(reduced.free_vars) == 6
        # re-substituted optimum equals the graph optimum
        bits, e = solve_qubo_exact(reduced)
        np.testing.assert_allclose(e, -exact_mwis(g).total_weight, rtol=1e-12)

    def test_reduction_preserves_energies(self):
        rng = np.random.default_rng(59)
        for _ in range(50):
            g = _random_graph(rng, 8)
            p = build_mwis_qubo(g)
            reduced = reduce_qubo(p)
            for bits in itertools.product((0, 1), repeat=p.n_vars):
                if any(bits[v] != b for v, b in reduced.fixed.items()):
                    continue
                np.testing.assert_allclose(energy(reduced, bits), energy(p, bits), rtol=1e-12, atol=1e-12)

    def test_nothing_to_reduce(self):
        p = build_mwis_qubo(_graph([0.0, 1.0], 2.0))
        assert reduce_qubo(p) is p


class TestSolveExact:
    def test_all_zero_objective_gives_all_zeros(self):
        bits, e = solve_qubo_exact(QuboProblem(3, {}))
        np.testing.assert_array_equal(bits, [0, 0, 0])
        assert e == 0.0

    def test_tie_prefers_lexicographically_smallest(self):
        p = QuboProblem(2, {(0, 0): -1.0, (1, 1): -1.0, (0, 1): 2.0})
        bits, e = solve_qubo_exact(p)
        np.testing.assert_array_equal(bits, [0, 1])
        assert e == -1.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(61)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            coeffs = {}
            for i in range(n):
                for j in range(i, n):
                    if i == j or rng.random() < 0.4:
                        coeffs[(i, j)] = float(np.round(rng.normal() * 4) / 2)
            p = QuboProblem(n, coeffs, offset=float(rng.normal()))
            bits, e = solve_qubo_exact(p)
            ref_bits, ref_e = _enumerate_min(p)
            np.testing.assert_array_equal(bits, ref_bits)
            np.testing.assert_allclose(e, ref_e, rtol=1e-12, atol=1e-12)

    def test_size_guard(self):
        with pytest.raises(GuardError):
            solve_qubo_exact(QuboProblem(26, {(i, i): -1.0 for i in range(26)}))


class TestAnneal:
    def test_pair_reaches_optimum(self):
        p = build_mwis_qubo(_graph([0.0, 1.0], 2.0, weights=[1.0, 2.0]))
        bits, e = solve_qubo_anneal(p, AnnealSchedule(sweeps=100, restarts=2, seed=3))
        np.testing.assert_array_equal(bits, [0, 1])
        assert e == -2.0

    def test_edgeless_selects_everything(self):
        g = _graph(np.arange(20.0) * 10, 1.0, weights=np.arange(1.0, 21.0))
        p = build_mwis_qubo(g)
        bits, e = solve_qubo_anneal(p, AnnealSchedule(sweeps=50, restarts=1, seed=0))
        np.testing.assert_array_equal(bits, np.ones(20))
        np.testing.assert_allclose(e, -g.weights.sum())

    def test_degenerate_flat_objective_returns_zeros(self):
        bits, e = solve_qubo_anneal(QuboProblem(6, {}), AnnealSchedule(sweeps=20, restarts=2, seed=1))
        np.testing.assert_array_equal(bits, np.zeros(6))
        assert e == 0.0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(67)
        g = _random_graph(rng, 15)
        p = build_mwis_qubo(g)
        sched = AnnealSchedule(sweeps=300, restarts=4, seed=11)
        first = solve_qubo_anneal(p, sched)
        second = solve_qubo_anneal(p, sched)
        np.testing.assert_array_equal(first[0], second[0])
        assert first[1] == second[1]

    def test_usually_matches_exact_on_small_instances(self):
        rng = np.random.default_rng(71)
        hits = 0
        for trial in range(50):
            g = _random_graph(rng, 12)
            p = build_mwis_qubo(g)
            bits, e = solve_qubo_anneal(p, AnnealSchedule(sweeps=500, restarts=4, seed=trial))
            _, e_ref = solve_qubo_exact(p)
            hits += bool(np.isclose(e, e_ref, rtol=1e-9, atol=1e-9))
        assert hits >= 47

    def test_schedule_validation(self):
        with pytest.raises(ValidationError):
            AnnealSchedule(sweeps=0)
        with pytest.raises(ValidationError):
            AnnealSchedule(t_initial=0.001, t_final=0.01)
        with pytest.raises(ValidationError):
            AnnealSchedule(t_final=0.0)


class TestIsing:
    def test_single_variable_transform(self):
        model = to_ising(QuboProblem(1, {(0, 0): -1.0}))
        np.testing.assert_allclose(model.h, [-0.5])
        assert model.offset == -0.5
        assert model.energy([1]) == -1.0
        assert model.energy([-1]) == 0.0

    def test_exhaustive_equality(self):
        rng = np.random.default_rng(73)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            coeffs = {}
            for i in range(n):
                for j in range(i, n):
                    if i == j or rng.random() < 0.5:
                        coeffs[(i, j)] = float(rng.normal() * 3)
            p = QuboProblem(n, coeffs, offset=float(rng.normal()))
            model = to_ising(p)
            for bits in itertools.product((0, 1), repeat=n):
                spins = tuple(2 * b - 1 for b in bits)
                assert abs(model.energy(spins) - energy(p, bits)) <= 1e-12

    def test_fixed_variables_excluded(self):
        p = QuboProblem(3, {(1, 1): -2.0, (1, 2): 1.0}, offset=-5.0, fixed={0: 1})
        model = to_ising(p)
        assert model.var_ids == (1, 2)
        assert model.h.size == 2
        # spins cover the free variables; fixed contribution rides in offset
        assert model.energy([1, 1]) == energy(p, [1, 1, 1])


class TestSlackCoeffs:
    def test_worked_examples(self):
        assert slack_coeffs(5) == (1, 2, 1)
        assert slack_coeffs(1) == (0,)
        assert slack_coeffs(8) == (1, 2, 4)
        assert slack_coeffs(2) == (1,)
        assert slack_coeffs(3) == (1, 1)

    def test_invalid_count(self):
        with pytest.raises(ValidationError):
            slack_coeffs(0)

    def test_exhaustive_coverage_up_to_64(self):
        for n_states in range(1, 65):
            gammas = slack_coeffs(n_states)
            sums = set()
            for bits in itertools.product((0, 1), repeat=len(gammas)):
                sums.add(sum(g * b for g, b in zip(gammas, bits)))
            assert sums == set(range(n_states))


class TestMscQubo:
    def test_two_close_points_select_cheaper(self):
        g = _graph([0.0, 1.0], 2.0)
        p = build_msc_qubo(g, costs=[1.0, 2.0], lam=5.0)
        bits, e = solve_qubo_exact(p)
        assert decode_selection(p, bits) == (0,)
        np.testing.assert_allclose(e, 1.0)  # pure cost, no penalty

    def test_isolated_point_must_be_selected(self):
        g = _graph([0.0], 1.0)
        p = build_msc_qubo(g, costs=[3.0])
        assert p.n_vars == 1  # single forced state needs no slack bit
        bits, e = solve_qubo_exact(p)
        np.testing.assert_array_equal(bits, [1])
        np.testing.assert_allclose(e, 3.0)

    def test_line_cover(self):
        g = _graph([1.0, 2.0, 3.0, 4.0], 1.5)
        p = build_msc_qubo(g, costs=np.ones(4))
        bits, e = solve_qubo_exact(p)
        chosen = decode_selection(p, bits)
        np.testing.assert_allclose(e, 2.0)
        covered = set()
        for v in chosen:
            covered.add(v)
            covered.update(np.flatnonzero(g.adjacency[v]).tolist())
        assert covered == {0, 1, 2, 3}

    def test_penalty_bound_enforced(self):
        g = _graph([0.0, 1.0], 2.0)
        with pytest.raises(ValidationError):
            build_msc_qubo(g, costs=[1.0, 2.0], lam=4.0)  # needs > n*max = 4

    def test_costs_validated(self):
        g = _graph([0.0, 1.0], 2.0)
        with pytest.raises(ValidationError):
            build_msc_qubo(g, costs=[1.0, 0.0])
        with pytest.raises(ValidationError):
            build_msc_qubo(g, costs=[1.0])


class TestExport:
    def test_text_format_round_trip(self, tmp_path):
        p = QuboProblem(3, {(0, 0): -1.5, (0, 2): 2.0, (1, 1): 0.0}, offset=0.25)
        path = tmp_path / "problem.qubo"
        write_qubo_text(p, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "3 0.25"
        assert lines[1:] == ["0 0 -1.5", "0 2 2.0"]  # zero terms dropped, keys sorted

    def test_reduced_export_keeps_offset(self, tmp_path):
        p = reduce_qubo(build_mwis_qubo(_graph([0.0], 1.0, weights=[2.0])))
        path = tmp_path / "reduced.qubo"
        write_qubo_text(p, path)
        assert path.read_text().splitlines()[0] == "1 -2.0"
