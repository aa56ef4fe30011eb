"""Discretized Brownian excursions and the real trees they encode.

A nonnegative grid path h(0..n) on the uniform grid of [0, 1] encodes a tree
through the pseudo-metric

    d(i, j) = h(i) + h(j) - 2 * min_{i <= k <= j} h(k).

Standard Brownian excursions are sampled by pinning a random walk into a
bridge and applying the Vervaat transform (cyclic shift at the argmin).  The
encoded measured tree uses twice the excursion as its height function and the
uniform measure on grid indices as its mass measure.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .trees import GridPoint, MeasuredTree

#: Distance queries per tree before a sparse RMQ table pays for itself.
_INDEX_THRESHOLD = 32

#: Default grid resolution for stand-alone excursion trees.
DEFAULT_RESOLUTION = 2**16


def sample_brownian_bridge(stream, n):
    """Random-walk bridge on the uniform grid of [0, 1].

    Cumulative sums of i.i.d. normals scaled by n^{-1/2}, pinned by
    B_i = W_i - (i/n) W_n; both endpoints are exactly zero.
    """
    n = int(n)
    if n < 2:
        raise ValueError("resolution must be at least 2")
    steps = stream.gen.standard_normal(n) / np.sqrt(n)
    walk = np.empty(n + 1)
    walk[0] = 0.0
    np.cumsum(steps, out=walk[1:])
    return walk - (np.arange(n + 1) / n) * walk[n]


def brownian_bridge_batch(stream, n, count):
    """Batch of bridges, one per row (same law as the scalar sampler)."""
    n = int(n)
    if n < 2:
        raise ValueError("resolution must be at least 2")
    steps = stream.gen.standard_normal((count, n)) / np.sqrt(n)
    walk = np.zeros((count, n + 1))
    np.cumsum(steps, axis=1, out=walk[:, 1:])
    return walk - (np.arange(n + 1) / n) * walk[:, n:n + 1]


@dataclass
class Excursion:
    """Nonnegative grid path vanishing at both endpoints."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("an excursion needs at least two grid values")
        if values[0] != 0.0 or values[-1] != 0.0:
            raise ValueError("excursion must vanish at both endpoints")
        if np.any(values < 0.0):
            raise ValueError("excursion values must be nonnegative")
        self.values = values

    @property
    def n(self):
        return self.values.size - 1


def vervaat(bridge):
    """Cyclic shift of a bridge at its first minimum, yielding an excursion."""
    bridge = np.asarray(bridge, dtype=float)
    n = bridge.size - 1
    if n < 1:
        raise ValueError("bridge must have at least two values")
    if bridge[0] != 0.0 or bridge[n] != 0.0:
        raise ValueError("bridge must be pinned at both ends")
    k = int(np.argmin(bridge[:n]))
    values = np.concatenate((bridge[k:n], bridge[: k + 1])) - bridge[k]
    values[0] = 0.0
    values[-1] = 0.0
    return Excursion(values)


def sample_excursion(stream, n):
    """Standard Brownian excursion on an n-step grid (bridge plus Vervaat)."""
    return vervaat(sample_brownian_bridge(stream, n))


class RMQIndex:
    """Sparse-table range-minimum index: O(n log n) build, O(1) queries."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("need a nonempty 1-d array")
        self.size = values.size
        levels = [values]
        step = 1
        while 2 * step <= values.size:
            prev = levels[-1]
            levels.append(np.minimum(prev[:-step], prev[step:]))
            step *= 2
        self._levels = levels

    def query(self, i, j):
        """Exact minimum of values[i..j], both endpoints included."""
        if i > j:
            i, j = j, i
        if i < 0 or j >= self.size:
            raise IndexError("query range out of bounds")
        span = j - i + 1
        k = span.bit_length() - 1
        level = self._levels[k]
        return min(level[i], level[j - (1 << k) + 1])


def tree_distance(exc, idx, i, j):
    """Encoded-tree distance between grid indices: h(i)+h(j)-2*min h on [i, j].

    ``idx`` may be None, in which case the range minimum is a direct scan.
    """
    values = exc.values
    i, j = int(i), int(j)
    if not (0 <= i <= exc.n and 0 <= j <= exc.n):
        raise IndexError("grid index out of range")
    if i == j:
        return 0.0
    if i > j:
        i, j = j, i
    lowest = idx.query(i, j) if idx is not None else values[i : j + 1].min()
    return float(values[i] + values[j] - 2.0 * lowest)


class ExcursionTree(MeasuredTree):
    """Measured tree encoded by twice an excursion.

    The mass measure is uniform on grid indices {0, ..., n-1} (an atomic
    stand-in for the continuum push-forward measure; statistics converge at
    the grid rate).  A sparse RMQ table is built automatically once a tree
    has answered enough distance queries to amortize the build cost.
    """

    def __init__(self, exc, index="auto"):
        if not isinstance(exc, Excursion):
            exc = Excursion(np.asarray(exc, dtype=float))
        self.exc = exc
        self.doubled = Excursion(2.0 * exc.values)
        self.source_file = None
        self._queries = 0
        if index not in ("auto", "sparse", "none"):
            raise ValueError("index must be 'auto', 'sparse' or 'none'")
        self._index_mode = index
        self._index = RMQIndex(self.doubled.values) if index == "sparse" else None

    @property
    def metric_eps(self):
        # Grid noise of encoded distances; recorded with experiment configs.
        return 4.0 / np.sqrt(self.exc.n)

    def sample_point(self, stream):
        return GridPoint(int(stream.gen.integers(self.exc.n)))

    def contains_ref(self, ref):
        return isinstance(ref, GridPoint) and 0 <= ref.index <= self.exc.n

    def distance(self, p, q):
        self._require(p)
        self._require(q)
        if self._index is None and self._index_mode == "auto":
            self._queries += 1
            if self._queries > _INDEX_THRESHOLD:
                self._index = RMQIndex(self.doubled.values)
        return tree_distance(self.doubled, self._index, p.index, q.index)


def excursion_tree(exc, index="auto"):
    """Wrap an excursion as the measured tree it encodes."""
    return ExcursionTree(exc, index=index)


# ---------------------------------------------------------------------------
# On-disk formats (versioned; see README)

_CSV_HEADER = "# bcrtsim-excursion v1 n={n}"


def save_excursion(exc, path):
    """Write an excursion to ``path``; .csv gives a column file, else .npz."""
    path = os.fspath(path)
    if path.endswith(".csv"):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_CSV_HEADER.format(n=exc.n) + "\n")
            for value in exc.values:
                fh.write(f"{value!r}\n")
    else:
        np.savez(path if path.endswith(".npz") else path + ".npz",
                 format_version=1, resolution=exc.n, values=exc.values)
    return path


def load_excursion(path):
    path = os.fspath(path)
    if path.endswith(".csv"):
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("# bcrtsim-excursion v1"):
                raise ValueError(f"unrecognized excursion header: {header!r}")
            values = np.array([float(line) for line in fh if line.strip()])
        exc = Excursion(values)
        n = int(header.rsplit("n=", 1)[1])
        if exc.n != n:
            raise ValueError("excursion header resolution does not match data")
        return exc
    with np.load(path) as payload:
        if int(payload["format_version"]) != 1:
            raise ValueError("unsupported excursion format version")
        values = payload["values"]
        if int(payload["resolution"]) != values.size - 1:
            raise ValueError("excursion resolution does not match data")
        return Excursion(values)
