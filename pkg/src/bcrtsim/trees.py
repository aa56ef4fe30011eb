"""Measured real trees: point references, gluing, reduced-tree extraction.

A measured tree exposes two capabilities: sample a point from its mass
measure and evaluate distances between point references.  Concrete carriers
are excursion-encoded trees (see :mod:`bcrtsim.excursion`), finite trees with
weighted atoms, segments with equally spaced atoms, and recursive glued
composites.  Reduced trees (the subtree spanned by m sampled points) are
reconstructed exactly from distance matrices by iterative Gromov-product
insertion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .randomness import TreeShape, all_quadruples, normalize_simplex3


class TreeMetricError(Exception):
    """Base class for metric and reconstruction failures."""


class FourPointViolation(TreeMetricError):
    """A distance matrix fails the four-point condition beyond tolerance."""

    def __init__(self, violation, quadruple):
        self.violation = violation
        self.quadruple = quadruple
        super().__init__(
            f"four-point violation {violation:.6g} at quadruple {quadruple}"
        )


class DegenerateMetric(TreeMetricError):
    """Coincident sample points or a collapsed (non-binary) reduced shape."""


class ForeignPointError(TreeMetricError):
    """A point reference does not belong to the tree it was used with."""


class TreeFormatError(Exception):
    """Malformed serialized tree payload."""


# ---------------------------------------------------------------------------
# Point references


@dataclass(frozen=True)
class GridPoint:
    """A grid index of an excursion-encoded tree."""

    index: int


@dataclass(frozen=True)
class AtomPoint:
    """An atom id of a finite tree."""

    atom: int


@dataclass(frozen=True)
class ChildPoint:
    """A point inside child ``child`` (1..3) of a glued tree."""

    child: int
    point: object


@dataclass(frozen=True)
class BranchPoint:
    """The gluing vertex of a glued tree (addressable, carries no mass)."""


def chain_ref(word, inner):
    """Wrap a point reference in child layers along ``word`` (outermost first)."""
    ref = inner
    for letter in reversed(word):
        ref = ChildPoint(int(letter), ref)
    return ref


class MeasuredTree:
    """Capability base class: measure sampling plus distance evaluation."""

    #: Reconstruction tolerance appropriate for this tree's metric.
    metric_eps = 1e-9

    def sample_point(self, stream):
        raise NotImplementedError

    def distance(self, p, q):
        raise NotImplementedError

    def contains_ref(self, ref):
        raise NotImplementedError

    def _require(self, ref):
        if not self.contains_ref(ref):
            raise ForeignPointError(f"{ref!r} does not address a point of {type(self).__name__}")


# ---------------------------------------------------------------------------
# Finite trees


class FiniteTree(MeasuredTree):
    """Finite tree with positive edge lengths and mass on a vertex subset.

    Vertices are 0..n_vertices-1.  ``mass`` maps vertices to weights summing
    to 1 (within 1e-12); vertices without mass are still addressable points.
    """

    def __init__(self, n_vertices, edges, mass):
        n_vertices = int(n_vertices)
        if n_vertices < 1:
            raise ValueError("need at least one vertex")
        adj = {v: {} for v in range(n_vertices)}
        for u, v, length in edges:
            u, v, length = int(u), int(v), float(length)
            if not (0 <= u < n_vertices and 0 <= v < n_vertices):
                raise ValueError("edge endpoint out of range")
            if u == v:
                raise ValueError("self-loop edge")
            if length <= 0.0:
                raise ValueError("edge lengths must be positive")
            adj[u][v] = length
            adj[v][u] = length
        if len(list(edges)) != n_vertices - 1:
            raise ValueError("a tree on n vertices has n-1 edges")
        seen = {0}
        stack = [0]
        while stack:
            for nbr in adj[stack.pop()]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        if len(seen) != n_vertices:
            raise ValueError("tree is not connected")
        weights = np.zeros(n_vertices)
        for v, w in dict(mass).items():
            v = int(v)
            if not 0 <= v < n_vertices:
                raise ValueError("mass vertex out of range")
            if w < 0.0:
                raise ValueError("mass weights must be nonnegative")
            weights[v] = float(w)
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mass must sum to 1")
        self.n_vertices = n_vertices
        self.edge_list = [(int(u), int(v), float(l)) for u, v, l in edges]
        self.adj = adj
        self.weights = weights
        self._mass_vertices = np.flatnonzero(weights)
        self._mass_cum = np.cumsum(weights[self._mass_vertices])
        self._dist = None

    def _distances(self):
        if self._dist is None:
            n = self.n_vertices
            dist = np.zeros((n, n))
            for src in range(n):
                stack = [(src, -1, 0.0)]
                while stack:
                    vertex, parent, acc = stack.pop()
                    dist[src, vertex] = acc
                    for nbr, length in self.adj[vertex].items():
                        if nbr != parent:
                            stack.append((nbr, vertex, acc + length))
            self._dist = dist
        return self._dist

    def sample_point(self, stream):
        u = stream.gen.random()
        idx = int(np.searchsorted(self._mass_cum, u, side="right"))
        idx = min(idx, len(self._mass_vertices) - 1)
        return AtomPoint(int(self._mass_vertices[idx]))

    def contains_ref(self, ref):
        return isinstance(ref, AtomPoint) and 0 <= ref.atom < self.n_vertices

    def distance(self, p, q):
        self._require(p)
        self._require(q)
        return float(self._distances()[p.atom, q.atom])


class StickTree(MeasuredTree):
    """A segment with ``atoms`` equally spaced mass atoms (endpoints included)."""

    def __init__(self, length, atoms):
        length = float(length)
        atoms = int(atoms)
        if length <= 0.0:
            raise ValueError("length must be positive")
        if atoms < 2:
            raise ValueError("need at least two atoms")
        self.length = length
        self.atoms = atoms
        self._step = length / (atoms - 1)

    def sample_point(self, stream):
        return AtomPoint(int(stream.gen.integers(self.atoms)))

    def contains_ref(self, ref):
        return isinstance(ref, AtomPoint) and 0 <= ref.atom < self.atoms

    def distance(self, p, q):
        self._require(p)
        self._require(q)
        return abs(p.atom - q.atom) * self._step


# ---------------------------------------------------------------------------
# Glued trees


class _GluedMetric(MeasuredTree):
    """Shared metric logic for eager and lazily materialized glued trees.

    Subclasses provide ``_delta()`` (a probability triple), ``_child(k)`` and
    ``_glue_ref(k)`` (the gluing point of child k, as a reference local to
    that child).  Within child k the metric is sqrt(delta_k) times the child
    metric; across children i != j it is
    sqrt(delta_i) d_i(x, X_i) + sqrt(delta_j) d_j(X_j, y).
    """

    def _delta(self):
        raise NotImplementedError

    def _child(self, k):
        raise NotImplementedError

    def _glue_ref(self, k):
        raise NotImplementedError

    def sample_point(self, stream):
        delta = self._delta()
        u = stream.gen.random()
        k = 1 if u < delta[0] else (2 if u < delta[0] + delta[1] else 3)
        return ChildPoint(k, self._child(k).sample_point(stream))

    def contains_ref(self, ref):
        if isinstance(ref, BranchPoint):
            return True
        return (
            isinstance(ref, ChildPoint)
            and ref.child in (1, 2, 3)
            and self._child(ref.child).contains_ref(ref.point)
        )

    def distance(self, p, q):
        self._require(p)
        self._require(q)
        delta = self._delta()
        if isinstance(p, BranchPoint) and isinstance(q, BranchPoint):
            return 0.0
        if isinstance(p, BranchPoint):
            p, q = q, p
        if isinstance(q, BranchPoint):
            k = p.child
            scale = np.sqrt(delta[k - 1])
            return float(scale * self._child(k).distance(p.point, self._glue_ref(k)))
        i, j = p.child, q.child
        if i == j:
            return float(np.sqrt(delta[i - 1]) * self._child(i).distance(p.point, q.point))
        left = np.sqrt(delta[i - 1]) * self._child(i).distance(p.point, self._glue_ref(i))
        right = np.sqrt(delta[j - 1]) * self._child(j).distance(q.point, self._glue_ref(j))
        return float(left + right)


class GluedTree(_GluedMetric):
    """Three rescaled trees identified at sampled gluing points.

    The gluing vertex is addressable as :class:`BranchPoint` but carries no
    mass: sampled points always resolve into one of the children.
    """

    def __init__(self, children, glue_refs, delta):
        children = tuple(children)
        glue_refs = tuple(glue_refs)
        if len(children) != 3 or len(glue_refs) != 3:
            raise ValueError("exactly three children and three gluing points required")
        delta = normalize_simplex3(delta)
        for child, ref in zip(children, glue_refs):
            if not child.contains_ref(ref):
                raise ForeignPointError(f"gluing point {ref!r} is not a point of its child")
        self.children = children
        self.glue_refs = glue_refs
        self.delta = delta

    def _delta(self):
        return self.delta

    def _child(self, k):
        return self.children[k - 1]

    def _glue_ref(self, k):
        return self.glue_refs[k - 1]

    @property
    def metric_eps(self):
        eps = [child.metric_eps for child in self.children]
        s = np.sqrt(self.delta)
        worst = 0.0
        for i in range(3):
            for j in range(i + 1, 3):
                worst = max(worst, s[i] * eps[i] + s[j] * eps[j])
        return max(worst, max(eps))


def glue(t1, t2, t3, x1, x2, x3, delta):
    """One gluing step: identify sampled points of three rescaled trees.

    The result's mass measure is the delta-mixture of the child measures and
    the identified vertex keeps zero mass.
    """
    return GluedTree((t1, t2, t3), (x1, x2, x3), delta)


# ---------------------------------------------------------------------------
# Distance matrices and reduced trees


def sample_point(tree, stream):
    """Draw a point reference from the tree's mass measure."""
    return tree.sample_point(stream)


def distance(tree, p, q):
    """Tree pseudo-metric between two point references."""
    return tree.distance(p, q)


def distance_matrix(tree, points):
    """Symmetric matrix of pairwise distances (exact zero diagonal)."""
    points = list(points)
    m = len(points)
    mat = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            d = tree.distance(points[i], points[j])
            mat[i, j] = d
            mat[j, i] = d
    return mat


def validate_distance_matrix(mat):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("distance matrix must be square")
    if np.any(np.diag(mat) != 0.0):
        raise ValueError("diagonal must be exactly zero")
    if not np.array_equal(mat, mat.T):
        raise ValueError("matrix must be exactly symmetric")
    if np.any(mat < 0.0):
        raise ValueError("distances must be nonnegative")
    return mat


def four_point_check(mat, tol=None):
    """Maximum four-point violation over all index quadruples.

    For each quadruple the three pairwise-sum combinations are formed; in a
    tree metric the two largest coincide, so the violation is (largest minus
    second largest).  With ``tol`` set, a violation beyond it raises
    :class:`FourPointViolation` carrying the worst quadruple.
    """
    mat = validate_distance_matrix(mat)
    worst = 0.0
    worst_quad = None
    for i, j, k, l in all_quadruples(mat.shape[0]):
        s = sorted((mat[i, j] + mat[k, l], mat[i, k] + mat[j, l], mat[i, l] + mat[j, k]))
        gap = s[2] - s[1]
        if gap > worst:
            worst = gap
            worst_quad = (i, j, k, l)
    if tol is not None and worst > tol:
        raise FourPointViolation(worst, worst_quad)
    return worst


def pendant_triple(mat):
    """Pendant lengths of the Steiner tree of three points, in label order.

    Closed form from Gromov products; degenerate (collinear) configurations
    yield a zero entry instead of failing.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    p1 = 0.5 * (mat[0, 1] + mat[0, 2] - mat[1, 2])
    p2 = 0.5 * (mat[0, 1] + mat[1, 2] - mat[0, 2])
    p3 = 0.5 * (mat[0, 2] + mat[1, 2] - mat[0, 1])
    return np.maximum([p1, p2, p3], 0.0)


def pendant_triples(d12, d13, d23):
    """Vectorized :func:`pendant_triple` over arrays of pair distances."""
    d12, d13, d23 = np.asarray(d12), np.asarray(d13), np.asarray(d23)
    out = np.stack(
        [0.5 * (d12 + d13 - d23), 0.5 * (d12 + d23 - d13), 0.5 * (d13 + d23 - d12)],
        axis=-1,
    )
    return np.maximum(out, 0.0)


class ReducedTree:
    """Labelled binary tree-shape with positive edge lengths.

    Lengths are indexed by the shape's canonical edge order.
    """

    def __init__(self, shape, lengths):
        lengths = np.asarray(lengths, dtype=float)
        if lengths.shape != (shape.edge_count,):
            raise ValueError("one length per edge required")
        if np.any(lengths <= 0.0):
            raise ValueError("edge lengths must be positive")
        self.shape = shape
        self.lengths = lengths
        self._adj = {}
        for (u, v), length in zip(shape.edges, lengths):
            self._adj.setdefault(u, {})[v] = float(length)
            self._adj.setdefault(v, {})[u] = float(length)

    @classmethod
    def from_graph(cls, m, edges, lengths):
        """Build from an edge list with matching per-edge lengths."""
        shape = TreeShape(m, edges)
        return cls(shape, shape.reorder([float(x) for x in lengths]))

    @property
    def m(self):
        return self.shape.m

    @property
    def total_length(self):
        return float(self.lengths.sum())

    def leaf_distance(self, i, j):
        if not (1 <= i <= self.m and 1 <= j <= self.m):
            raise ValueError("leaf labels out of range")
        if i == j:
            return 0.0
        stack = [(i, -1, 0.0)]
        while stack:
            vertex, parent, acc = stack.pop()
            if vertex == j:
                return acc
            for nbr, length in self._adj[vertex].items():
                if nbr != parent:
                    stack.append((nbr, vertex, acc + length))
        raise RuntimeError("unreachable leaf")  # pragma: no cover

    def leaf_matrix(self):
        mat = np.zeros((self.m, self.m))
        for i in range(1, self.m + 1):
            for j in range(i + 1, self.m + 1):
                d = self.leaf_distance(i, j)
                mat[i - 1, j - 1] = d
                mat[j - 1, i - 1] = d
        return mat

    def pendant_length(self, leaf):
        """Length of the pendant edge at a leaf label."""
        leaf = int(leaf)
        if not 1 <= leaf <= self.m:
            raise ValueError("leaf label out of range")
        other = tuple(sorted(set(range(1, self.m + 1)) - {leaf}))
        key = min((leaf,), other)
        for split, length in zip(self.shape.splits, self.lengths):
            if split == key:
                return float(length)
        raise RuntimeError("pendant split missing")  # pragma: no cover

    def pendant_vector(self):
        return np.array([self.pendant_length(leaf) for leaf in range(1, self.m + 1)])


def reconstruct_reduced_tree(mat, eps):
    """Rebuild the spanned binary tree from an additive distance matrix.

    Leaves are inserted one at a time: leaf z attaches to the path between
    the pair (x*, y*) of placed leaves minimizing the Gromov product
    (d(x,z) + d(y,z) - d(x,y))/2, at distance
    (d(x*,z) + d(x*,y*) - d(y*,z))/2 from x*; the product itself is the
    pendant length.  Attachment landing within ``eps`` of an existing vertex
    collapses onto it.  Zero-length pendants, leaf collisions and collapsed
    (non-binary) shapes raise :class:`DegenerateMetric`; a four-point
    violation beyond ``eps`` raises :class:`FourPointViolation`.
    """
    mat = validate_distance_matrix(mat)
    m = mat.shape[0]
    if m < 2:
        raise ValueError("need at least two points")
    eps = float(eps)
    four_point_check(mat, tol=eps)

    if mat[0, 1] <= eps:
        raise DegenerateMetric("coincident sample points")
    if m == 2:
        return ReducedTree.from_graph(2, [(1, 2)], [mat[0, 1]])

    adj = {1: {2: float(mat[0, 1])}, 2: {1: float(mat[0, 1])}}
    next_internal = m + 1

    def path(src, dst):
        stack = [(src, -1, [src])]
        while stack:
            vertex, parent, acc = stack.pop()
            if vertex == dst:
                return acc
            for nbr in adj[vertex]:
                if nbr != parent:
                    stack.append((nbr, vertex, acc + [nbr]))
        raise RuntimeError("disconnected working graph")  # pragma: no cover

    for z in range(3, m + 1):
        best = None
        for x in range(1, z):
            for y in range(x + 1, z):
                gp = 0.5 * (mat[x - 1, z - 1] + mat[y - 1, z - 1] - mat[x - 1, y - 1])
                if best is None or gp < best[0]:
                    best = (gp, x, y)
        pendant, x_star, y_star = best
        if pendant <= eps:
            raise DegenerateMetric(f"zero-length pendant for leaf {z}")
        a = 0.5 * (
            mat[x_star - 1, z - 1] + mat[x_star - 1, y_star - 1] - mat[y_star - 1, z - 1]
        )
        verts = path(x_star, y_star)
        cum = [0.0]
        for u, v in zip(verts, verts[1:]):
            cum.append(cum[-1] + adj[u][v])
        a = min(max(a, 0.0), cum[-1])
        attach = None
        for idx in range(len(verts) - 1):
            lo, hi = cum[idx], cum[idx + 1]
            if a > hi and idx < len(verts) - 2:
                continue
            if a - lo <= eps:
                attach = verts[idx]
            elif hi - a <= eps:
                attach = verts[idx + 1]
            else:
                u, v = verts[idx], verts[idx + 1]
                w = next_internal
                next_internal += 1
                left, right = a - lo, hi - a
                del adj[u][v]
                del adj[v][u]
                adj[u][w] = left
                adj.setdefault(w, {})[u] = left
                adj[v][w] = right
                adj[w][v] = right
                attach = w
            break
        if attach <= m:
            raise DegenerateMetric(f"leaf {z} attaches onto leaf {attach}")
        adj[attach][z] = pendant
        adj.setdefault(z, {})[attach] = pendant

    # Contract any internal edge that fell below tolerance (defensive; the
    # collapse rule above prevents this in normal operation).
    for u in list(adj):
        for v, length in list(adj.get(u, {}).items()):
            if u > m and v > m and u < v and length <= eps:
                for nbr, l2 in adj[v].items():
                    if nbr != u:
                        adj[u][nbr] = l2
                        adj[nbr][u] = l2
                        del adj[nbr][v]
                del adj[u][v]
                del adj[v]

    for vertex, nbrs in adj.items():
        if vertex > m and len(nbrs) != 3:
            raise DegenerateMetric("collapsed attachment produced a non-binary shape")

    edges = []
    lengths = []
    for u in adj:
        for v, length in adj[u].items():
            if u < v:
                edges.append((u, v))
                lengths.append(length)
    return ReducedTree.from_graph(m, edges, lengths)


def reduced_tree(tree, m, stream, eps=None):
    """Sample m points, form their distance matrix, reconstruct the subtree."""
    m = int(m)
    if m < 2:
        raise ValueError("need at least two points")
    points = [tree.sample_point(stream) for _ in range(m)]
    mat = distance_matrix(tree, points)
    if eps is None:
        eps = tree.metric_eps
    return reconstruct_reduced_tree(mat, eps)


# ---------------------------------------------------------------------------
# Serialization (format documented in schemas/tree_format.schema.json)

FORMAT_NAME = "bcrtsim-tree"
FORMAT_VERSION = 1


def ref_to_json(ref):
    if isinstance(ref, GridPoint):
        return {"kind": "grid", "index": ref.index}
    if isinstance(ref, AtomPoint):
        return {"kind": "atom", "id": ref.atom}
    if isinstance(ref, BranchPoint):
        return {"kind": "branch-point"}
    if isinstance(ref, ChildPoint):
        return {"kind": "child", "child": ref.child, "point": ref_to_json(ref.point)}
    raise TreeFormatError(f"unsupported point reference {type(ref).__name__}")


def ref_from_json(obj, path="/"):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise TreeFormatError(f"expected a point reference object at {path}")
    kind = obj["kind"]
    try:
        if kind == "grid":
            return GridPoint(int(obj["index"]))
        if kind == "atom":
            return AtomPoint(int(obj["id"]))
        if kind == "branch-point":
            return BranchPoint()
        if kind == "child":
            return ChildPoint(int(obj["child"]), ref_from_json(obj["point"], path + "point/"))
    except (KeyError, TypeError, ValueError) as exc:
        raise TreeFormatError(f"malformed point reference at {path}: {exc}") from exc
    raise TreeFormatError(f"unknown point reference kind {kind!r} at {path}")


def _tree_to_json(tree):
    from . import excursion as excursion_mod

    if isinstance(tree, FiniteTree):
        return {
            "kind": "finite",
            "vertices": tree.n_vertices,
            "edges": [[u, v, l] for u, v, l in tree.edge_list],
            "mass": [[int(v), float(tree.weights[v])] for v in np.flatnonzero(tree.weights)],
        }
    if isinstance(tree, StickTree):
        return {"kind": "stick", "length": tree.length, "atoms": tree.atoms}
    if isinstance(tree, GluedTree):
        return {
            "kind": "glued",
            "delta": [float(x) for x in tree.delta],
            "children": [_tree_to_json(child) for child in tree.children],
            "glue_points": [ref_to_json(ref) for ref in tree.glue_refs],
        }
    if isinstance(tree, excursion_mod.ExcursionTree):
        if tree.source_file is None:
            raise TreeFormatError(
                "excursion tree has no file reference; save the excursion first"
            )
        return {
            "kind": "excursion-ref",
            "file": str(tree.source_file),
            "resolution": tree.exc.n,
        }
    raise TreeFormatError(f"cannot serialize {type(tree).__name__}")


def _tree_from_json(obj, path="/"):
    from . import excursion as excursion_mod

    if not isinstance(obj, dict) or "kind" not in obj:
        raise TreeFormatError(f"expected a tree object with a 'kind' at {path}")
    kind = obj["kind"]
    try:
        if kind == "finite":
            return FiniteTree(
                obj["vertices"],
                [(u, v, l) for u, v, l in obj["edges"]],
                {v: w for v, w in obj["mass"]},
            )
        if kind == "stick":
            return StickTree(obj["length"], obj["atoms"])
        if kind == "glued":
            children = [
                _tree_from_json(child, f"{path}children/{i}/")
                for i, child in enumerate(obj["children"])
            ]
            refs = [
                ref_from_json(ref, f"{path}glue_points/{i}/")
                for i, ref in enumerate(obj["glue_points"])
            ]
            return GluedTree(children, refs, obj["delta"])
        if kind == "excursion-ref":
            exc = excursion_mod.load_excursion(obj["file"])
            tree = excursion_mod.ExcursionTree(exc)
            tree.source_file = obj["file"]
            return tree
        if kind == "reduced":
            return reduced_tree_from_json(obj, path)
    except TreeFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise TreeFormatError(f"malformed {kind!r} tree at {path}: {exc}") from exc
    raise TreeFormatError(f"unknown tree kind {kind!r} at {path}")


def reduced_tree_to_json(rt):
    return {
        "kind": "reduced",
        "m": rt.m,
        "shape": [list(split) for split in rt.shape.splits],
        "lengths": [float(x) for x in rt.lengths],
    }


def _shape_from_splits(m, splits):
    """Rebuild the edge list of a shape from its canonical split list."""
    leaves = frozenset(range(1, m + 1))
    # Cluster below each edge when the tree is rooted at leaf 1.
    clusters = []
    for split in splits:
        side = frozenset(split)
        clusters.append(side if 1 not in side else leaves - side)
    if len(set(clusters)) != len(clusters):
        raise TreeFormatError("duplicate splits in reduced-tree shape")
    order = sorted(range(len(clusters)), key=lambda i: -len(clusters[i]))
    vertex_of = {}
    next_internal = m + 1
    edges = []
    top = leaves - {1}
    for idx in order:
        cluster = clusters[idx]
        if len(cluster) == 1:
            below = next(iter(cluster))
        else:
            below = next_internal
            next_internal += 1
        vertex_of[cluster] = below
        if cluster == top:
            edges.append((1, below))
            continue
        parent = None
        for other in clusters:
            if cluster < other and (parent is None or len(other) < len(parent)):
                parent = other
        if parent is None:
            raise TreeFormatError("splits do not form a nested family")
        edges.append((vertex_of[parent], below))
    return edges, order


def reduced_tree_from_json(obj, path="/"):
    try:
        m = int(obj["m"])
        splits = [tuple(int(x) for x in split) for split in obj["shape"]]
        lengths = [float(x) for x in obj["lengths"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise TreeFormatError(f"malformed reduced tree at {path}: {exc}") from exc
    if len(lengths) != len(splits):
        raise TreeFormatError(f"length count does not match split count at {path}")
    edges, order = _shape_from_splits(m, splits)
    try:
        shape = TreeShape(m, edges)
    except ValueError as exc:
        raise TreeFormatError(f"invalid reduced-tree shape at {path}: {exc}") from exc
    rt = ReducedTree(shape, shape.reorder([lengths[i] for i in order]))
    if list(rt.shape.splits) != list(tuple(s) for s in splits):
        raise TreeFormatError(f"splits at {path} are not in canonical form")
    return rt


def serialize_tree(tree):
    """Serialize a tree to versioned JSON bytes."""
    if isinstance(tree, ReducedTree):
        node = reduced_tree_to_json(tree)
    else:
        node = _tree_to_json(tree)
    payload = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "tree": node}
    return json.dumps(payload).encode("utf-8")


def deserialize_tree(data):
    """Parse bytes produced by :func:`serialize_tree`; errors carry a location."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise TreeFormatError(f"invalid JSON at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
        raise TreeFormatError("missing or unknown format marker at /format")
    if payload.get("version") != FORMAT_VERSION:
        raise TreeFormatError(f"unsupported format version at /version: {payload.get('version')!r}")
    if "tree" not in payload:
        raise TreeFormatError("missing /tree")
    return _tree_from_json(payload["tree"], "/tree/")
