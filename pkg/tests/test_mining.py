"""Clustering behavior pinned against exhaustive and arithmetic oracles."""

from __future__ import annotations

import itertools
import random

import pytest

from otpk.mining import ClusteringResult, Dataset, MiningError, kmeans, parse_dataset


def sse_of(points, centroids, assignments) -> float:
    return sum(
        sum((x - c) ** 2 for x, c in zip(p, centroids[a]))
        for p, a in zip(points, assignments)
    )


def best_partition_sse(points, k) -> float:
    """Exhaustive oracle: minimum SSE over every assignment of points to k
    clusters, scoring each non-empty cluster against its own mean."""
    n = len(points)
    best = float("inf")
    for assignment in itertools.product(range(k), repeat=n):
        groups: dict[int, list] = {}
        for idx, cluster in enumerate(assignment):
            groups.setdefault(cluster, []).append(points[idx])
        total = 0.0
        for members in groups.values():
            mean = tuple(sum(c) / len(members) for c in zip(*members))
            total += sum(sum((x - m) ** 2 for x, m in zip(p, mean)) for p in members)
        best = min(best, total)
    return best


class TestParseDataset:
    def test_one_dimensional(self):
        data = parse_dataset("0\n1\n10\n11\n")
        assert data.dim == 1
        assert data.points == ((0.0,), (1.0,), (10.0,), (11.0,))

    def test_multi_dimensional(self):
        data = parse_dataset("1,2\n3,4\n")
        assert data.dim == 2 and len(data.points) == 2

    def test_ragged_row_reports_line(self):
        with pytest.raises(MiningError) as info:
            parse_dataset("1,2\n3\n")
        assert info.value.code == "DIMENSION_MISMATCH"
        assert "line 2" in str(info.value)

    def test_empty_input(self):
        with pytest.raises(MiningError) as info:
            parse_dataset("")
        assert info.value.code == "EMPTY_DATASET"

    def test_non_numeric_field(self):
        with pytest.raises(MiningError) as info:
            parse_dataset("1\ntwo\n")
        assert info.value.code == "BAD_REQUEST"
        assert "line 2" in str(info.value)

    def test_non_finite_rejected(self):
        with pytest.raises(MiningError):
            parse_dataset("1\nnan\n")

    def test_blank_lines_skipped(self):
        assert len(parse_dataset("1\n\n2\n").points) == 2


class TestKmeans:
    def test_two_well_separated_groups(self):
        data = parse_dataset("0\n1\n10\n11\n")
        result = kmeans(data, 2, 50)
        assert result.centroids == ((0.5,), (10.5,))
        assert result.assignments == (0, 0, 1, 1)
        assert result.sse == pytest.approx(1.0, abs=1e-12)
        # converged answer matches the exhaustive optimum here
        assert result.sse == pytest.approx(best_partition_sse(data.points, 2), abs=1e-9)

    def test_k_equals_point_count(self):
        data = parse_dataset("3\n7\n9\n")
        result = kmeans(data, 3, 10)
        assert result.centroids == ((3.0,), (7.0,), (9.0,))
        assert result.assignments == (0, 1, 2)
        assert result.sse == 0.0

    def test_k_one_is_the_mean(self):
        data = parse_dataset("1\n2\n3\n4\n")
        result = kmeans(data, 1, 10)
        assert result.centroids == ((2.5,),)
        assert set(result.assignments) == {0}

    def test_validation_errors(self):
        data = parse_dataset("1\n2\n")
        with pytest.raises(MiningError) as info:
            kmeans(data, 3, 10)
        assert info.value.code == "K_TOO_LARGE"
        with pytest.raises(MiningError):
            kmeans(data, 0, 10)
        with pytest.raises(MiningError):
            kmeans(data, 1, 0)
        with pytest.raises(MiningError) as info:
            kmeans(Dataset((), 0), 1, 10)
        assert info.value.code == "EMPTY_DATASET"

    def test_deterministic(self):
        rng = random.Random(7)
        csv = "\n".join(f"{rng.uniform(-5, 5)},{rng.uniform(-5, 5)}" for _ in range(40))
        data = parse_dataset(csv)
        assert kmeans(data, 4, 25) == kmeans(data, 4, 25)

    def test_sse_non_increasing_across_iterations(self):
        rng = random.Random(21)
        for trial in range(10):
            csv = "\n".join(str(rng.uniform(0, 100)) for _ in range(24))
            data = parse_dataset(csv)
            final = kmeans(data, 3, 50)
            history = [
                kmeans(data, 3, cap).sse for cap in range(1, final.iterations_run + 1)
            ]
            for earlier, later in zip(history, history[1:]):
                assert later <= earlier + 1e-9

    def test_final_centroids_are_exact_means(self):
        rng = random.Random(4)
        csv = "\n".join(
            f"{rng.uniform(-10, 10)},{rng.uniform(-10, 10)}" for _ in range(30)
        )
        data = parse_dataset(csv)
        result = kmeans(data, 4, 60)
        for j, centroid in enumerate(result.centroids):
            members = [
                data.points[i] for i, a in enumerate(result.assignments) if a == j
            ]
            if not members:  # empty cluster legitimately keeps its old centroid
                continue
            mean = tuple(sum(c) / len(members) for c in zip(*members))
            for got, want in zip(centroid, mean):
                assert got == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_small_instances_against_exhaustive_oracle(self):
        rng = random.Random(99)
        worse_than_optimal = 0
        for trial in range(20):
            n = rng.randint(3, 8)
            k = rng.randint(1, min(3, n))
            points = tuple((rng.uniform(0, 10), rng.uniform(0, 10)) for _ in range(n))
            data = Dataset(points, 2)
            result = kmeans(data, k, 100)
            optimum = best_partition_sse(points, k)
            assert result.sse >= optimum - 1e-9  # cannot beat the true optimum
            # converged: one extra pass changes nothing
            again = kmeans(data, k, result.iterations_run + 1)
            assert again.assignments == result.assignments
            if result.sse > optimum + 1e-9:
                worse_than_optimal += 1  # Lloyd may stop in a local optimum
        # informational: locally-stable but suboptimal outcomes are allowed
        assert worse_than_optimal <= 20

    def test_empty_cluster_keeps_previous_centroid(self):
        # duplicate seeds: centroid 1 starts equal to centroid 0, every point
        # ties to index 0, so cluster 1 goes empty and keeps its seed position
        data = Dataset(((1.0,), (1.0,), (4.0,)), 1)
        result = kmeans(data, 2, 10)
        assert result.centroids[1] == (1.0,)

    def test_result_is_frozen(self):
        result = kmeans(parse_dataset("1\n2\n"), 1, 5)
        assert isinstance(result, ClusteringResult)
        with pytest.raises(AttributeError):
            result.sse = 0.0
