"""The protected resource: a deterministic clustering job.

Lloyd iterations with fully pinned-down behavior so results are reproducible
bit for bit: centroids start at the first k points in input order, distance
ties go to the lowest centroid index, empty clusters keep their previous
centroid, and iteration stops as soon as an assignment pass changes nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["Dataset", "ClusteringResult", "MiningError", "parse_dataset", "kmeans"]


class MiningError(Exception):
    """A mining request that cannot be served; ``code`` names the reason."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Dataset:
    """Fixed-dimension point list; every point has exactly ``dim`` coordinates."""

    points: tuple[tuple[float, ...], ...]
    dim: int


@dataclass(frozen=True)
class ClusteringResult:
    centroids: tuple[tuple[float, ...], ...]
    assignments: tuple[int, ...]
    iterations_run: int
    sse: float


def parse_dataset(text: str) -> Dataset:
    """Parse CSV text, one point per line, numeric fields only.

    Blank lines are skipped. A row whose width differs from the first row is a
    dimension mismatch, reported with its line number.
    """
    points: list[tuple[float, ...]] = []
    dim: int | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        values = []
        for field in fields:
            try:
                value = float(field)
            except ValueError:
                raise MiningError(
                    "BAD_REQUEST", f"non-numeric field {field.strip()!r} at line {lineno}"
                ) from None
            if not math.isfinite(value):
                raise MiningError(
                    "BAD_REQUEST", f"non-finite value {field.strip()!r} at line {lineno}"
                )
            values.append(value)
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise MiningError(
                "DIMENSION_MISMATCH",
                f"row of width {len(values)} at line {lineno}, expected {dim}",
            )
        points.append(tuple(values))
    if not points:
        raise MiningError("EMPTY_DATASET", "no data points in input")
    assert dim is not None
    return Dataset(tuple(points), dim)


def _dist2(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    return sum((x - y) ** 2 for x, y in zip(a, b))


def _mean(points: list[tuple[float, ...]]) -> tuple[float, ...]:
    n = len(points)
    return tuple(sum(coords) / n for coords in zip(*points))


def kmeans(data: Dataset, k: int, max_iters: int = 100) -> ClusteringResult:
    """Deterministic Lloyd clustering.

    One iteration = assign every point to its nearest centroid (squared
    Euclidean, ties to the lowest index), then recompute each centroid as the
    mean of its points. Stops when an assignment pass repeats the previous one
    or after ``max_iters`` passes.
    """
    n = len(data.points)
    if n == 0:
        raise MiningError("EMPTY_DATASET", "cannot cluster an empty dataset")
    if k < 1:
        raise MiningError("BAD_REQUEST", f"k must be >= 1, got {k}")
    if k > n:
        raise MiningError("K_TOO_LARGE", f"k={k} exceeds the {n} available points")
    if max_iters < 1:
        raise MiningError("BAD_REQUEST", f"max_iters must be >= 1, got {max_iters}")

    centroids = [data.points[i] for i in range(k)]
    assignments: list[int] | None = None
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        new_assignments = []
        for point in data.points:
            best = 0
            best_d = _dist2(point, centroids[0])
            for j in range(1, k):
                d = _dist2(point, centroids[j])
                if d < best_d:
                    best = j
                    best_d = d
            new_assignments.append(best)
        if new_assignments == assignments:
            break
        assignments = new_assignments
        for j in range(k):
            members = [data.points[i] for i in range(n) if assignments[i] == j]
            if members:  # empty cluster keeps its previous centroid
                centroids[j] = _mean(members)

    assert assignments is not None
    sse = sum(_dist2(data.points[i], centroids[assignments[i]]) for i in range(n))
    return ClusteringResult(
        centroids=tuple(centroids),
        assignments=tuple(assignments),
        iterations_run=iterations,
        sse=sse,
    )
