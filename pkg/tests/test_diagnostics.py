import itertools

import numpy as np
import pytest

from relayfl.channel import ChannelParams, compute_round_timings
from relayfl.core import run_round
from relayfl.diagnostics import (
    CentralizedReference,
    avg_clients_aggregated,
    cell_class_distributions,
    compute_F,
    hat_cell_models,
    round_A1,
    table2_metric,
)
from relayfl.rngtools import substream
from relayfl.scheduler import schedule_round
from relayfl.tasks import QuadraticTask, evaluate_global_loss, quadratic_global_optimum
from relayfl.topology import PartitionConfig, TopologyConfig, build_chain_topology, partition_labels


def prepared(seed=1, L=3, K=30, C=6):
    topo = build_chain_topology(
        TopologyConfig(num_cells=L, num_clients=K), substream(seed, "topology")
    )
    topo, _ = partition_labels(
        PartitionConfig(num_classes=C, classes_per_cell=4, classes_per_client=2),
        topo,
        substream(seed, "partition"),
    )
    return topo


class TestComputeF:
    def test_all_ones_row_is_zero(self):
        v = np.array([3.0, 5.0, 7.0])
        norms = np.array([1.2, 0.4, 2.2])
        assert compute_F(np.ones(3), v, norms) == 0.0

    def test_identity_row_unit_norms(self):
        # |1 - 1/3| + 1/3 + 1/3 = 4/3
        v = np.ones(3)
        norms = np.ones(3)
        row = np.array([1.0, 0.0, 0.0])
        assert abs(compute_F(row, v, norms) - 4.0 / 3.0) <= 1e-12

    def test_adding_cells_never_increases_F_equal_norms(self):
        # exhaustive over all rows containing the destination, L <= 6
        for L in range(2, 7):
            v = np.ones(L)
            norms = np.ones(L)
            for bits in itertools.product([0, 1], repeat=L - 1):
                row = np.array([1] + list(bits), dtype=float)
                f_here = compute_F(row, v, norms)
                for j in range(1, L):
                    if row[j] == 0:
                        bigger = row.copy()
                        bigger[j] = 1
                        assert compute_F(bigger, v, norms) <= f_here + 1e-12

    def test_zero_iff_full_row_or_zero_offdiag_norms(self):
        rng = substream(5, "f")
        for _ in range(50):
            L = int(rng.integers(2, 7))
            v = rng.integers(1, 9, size=L).astype(float)
            norms = rng.uniform(0.1, 2.0, size=L)
            row = np.zeros(L)
            row[0] = 1
            for j in range(1, L):
                row[j] = rng.integers(0, 2)
            f = compute_F(row, v, norms)
            if row.all():
                assert f == 0.0
            else:
                assert f > 0.0
        # missing cells with zero model norms also vanish
        row = np.array([1.0, 0.0])
        assert compute_F(row, np.array([1.0, 1.0]), np.array([0.0, 0.0])) == 0.0


class TestCentralizedReference:
    def test_single_cell_equals_plain_descent(self):
        topo = prepared(L=1, K=10)
        task = QuadraticTask.with_basis_centers(6)
        ref = CentralizedReference(topology=topo, task=task, w_c=np.zeros(task.dimension))
        dist = cell_class_distributions(topo)[0]
        w = np.zeros(task.dimension)
        for lr in (0.1, 0.1):
            w = w - lr * task.gradient(w, dist)
        out = ref.step([0.1, 0.1])
        assert np.allclose(out, w, rtol=0, atol=1e-15)

    def test_identical_cells_aggregate_is_identity(self):
        topo = prepared(L=3, K=30)
        # overwrite: every client uniform, so all cell distributions match
        for c in topo.clients:
            c.label_distribution = np.full(6, 1.0 / 6.0)
        task = QuadraticTask.with_basis_centers(6)
        ref = CentralizedReference(topology=topo, task=task, w_c=np.ones(task.dimension))
        dist = cell_class_distributions(topo)[0]
        w = np.ones(task.dimension) - 0.2 * task.gradient(np.ones(task.dimension), dist)
        assert np.allclose(ref.step([0.2]), w)

    def test_quadratic_gap_contracts(self):
        topo = prepared(L=3, K=30, seed=4)
        task = QuadraticTask.with_basis_centers(6)
        w_star = quadratic_global_optimum(task, topo)
        ref = CentralizedReference(topology=topo, task=task, w_c=np.zeros(task.dimension))
        gaps = []
        for _ in range(30):
            w = ref.step([0.1] * 3)
            gaps.append(
                evaluate_global_loss(w, task, topo) - evaluate_global_loss(w_star, task, topo)
            )
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))

    def test_a1_zero_at_shared_init(self):
        w0 = np.array([0.3, -1.0])
        assert np.all(round_A1([w0.copy(), w0.copy()], w0) == 0.0)


class TestHatModels:
    def test_left_convention_volumes(self):
        topo = prepared(L=3, K=30, seed=2)
        models = {c.id: np.full(2, float(c.id)) for c in topo.clients}
        hats, volumes = hat_cell_models(models, topo)
        sets = topo.hat_client_sets()
        for l in range(3):
            n = sum(topo.clients[k].data_volume for k in sets[l])
            assert volumes[l] == n
            manual = sum(topo.clients[k].data_volume * models[k] for k in sets[l]) / n
            assert np.allclose(hats[l], manual)


class TestTable2Metric:
    def test_identity_counts_uploaders(self):
        topo = prepared(L=3, K=60)
        p = np.eye(3, dtype=int)
        expected = sum(len(s) for s in topo.uploader_sets) / 3
        assert avg_clients_aggregated(p, topo) == pytest.approx(expected)

    def test_full_dissemination_counts_everyone(self):
        topo = prepared(L=3, K=60)
        p = np.ones((3, 3), dtype=int)
        assert avg_clients_aggregated(p, topo) == pytest.approx(60.0)

    def test_counts_match_independent_formula(self):
        # independent re-derivation straight from the destination sets
        topo = prepared(L=4, K=40, seed=3)
        rng = substream(6, "p")
        p = np.eye(4, dtype=int)
        p[0, 1] = p[1, 2] = p[3, 2] = 1
        total = 0
        for l in range(4):
            for j in range(4):
                if not p[j, l]:
                    continue
                ids = set(topo.uploader_sets[j])
                if j < l:
                    ids.add(topo.roc_of[(j, j + 1)])
                elif j > l:
                    ids.add(topo.roc_of[(j - 1, j)])
                total += len(ids)
        assert avg_clients_aggregated(p, topo) == pytest.approx(total / 4)

    def test_round_average(self):
        topo = prepared(L=3, K=60)
        ps = [np.eye(3, dtype=int), np.ones((3, 3), dtype=int)]
        lo = avg_clients_aggregated(ps[0], topo)
        assert table2_metric(ps, topo) == pytest.approx((lo + 60.0) / 2)


class TestFOnRealRounds:
    def test_f_zero_under_full_participation(self):
        topo = prepared(L=3, K=30)
        task = QuadraticTask.with_basis_centers(6)
        timings = compute_round_timings(topo, ChannelParams(), epochs=2, t_max_override=1e9)
        sched = schedule_round(timings, topo.hat_volumes())
        assert np.array_equal(sched.participation, np.ones((3, 3), dtype=int))
        es = [np.zeros(task.dimension) for _ in range(3)]
        result = run_round(
            es, topo, task, sched.plan, sched.participation, timings,
            lr_values=[0.1], train_rng=lambda cid: substream(1, "t", cid),
        )
        hats, volumes = hat_cell_models(result.client_models, topo)
        norms = np.array([np.linalg.norm(h) for h in hats])
        for l in range(3):
            assert compute_F(result.realized_participation[:, l], volumes, norms) == 0.0
