"""Reproducible hierarchical random streams and primitive samplers.

Every random quantity in this package is drawn from a :class:`Stream`, which
is addressed by a lineage triple ``(root seed, word, tags)``.  The word is a
path in the ternary recursion tree (letters in {1, 2, 3}); the tags name the
role of the stream ("delta", "floor", ...).  Derivation hashes the lineage
with BLAKE2b and seeds an independent PCG64 generator, so any subtree of a
recursive construction can be re-instantiated in any order, on any thread,
and reproduce bit-identical randomness.

Derivation scheme (version 1): the lineage is encoded as

    b"bcrtsim.stream.v1" || u64be(root) || u32be(len(word)) || word bytes
                         || for each tag: u32be(len(tag)) || utf8(tag)

hashed with BLAKE2b to a 16-byte digest, interpreted as a big-endian integer
and used as the PCG64 seed.  Word bytes are the letters as raw bytes.
"""

from __future__ import annotations

import hashlib
import itertools

import numpy as np

ALPHABET = (1, 2, 3)

# A word is a tuple of letters from {1, 2, 3}; the empty tuple addresses the
# root of a recursive construction.
WordPath = tuple

_SCHEME = b"bcrtsim.stream.v1"


def validate_word(word):
    word = tuple(int(letter) for letter in word)
    for letter in word:
        if letter not in ALPHABET:
            raise ValueError(f"word letter {letter!r} not in {{1, 2, 3}}")
    return word


def _lineage_digest(root, word, tags):
    h = hashlib.blake2b(digest_size=16)
    h.update(_SCHEME)
    h.update(int(root).to_bytes(8, "big"))
    wb = bytes(word)
    h.update(len(wb).to_bytes(4, "big"))
    h.update(wb)
    for tag in tags:
        tb = tag.encode("utf-8")
        h.update(len(tb).to_bytes(4, "big"))
        h.update(tb)
    return h.digest()


class Stream:
    """Single-owner deterministic random stream with a named lineage.

    Two streams with identical lineage produce identical output sequences.
    Streams must never be shared between concurrent tasks; derive disjoint
    lineages instead.
    """

    __slots__ = ("root", "word", "tags", "gen")

    def __init__(self, root, word, tags, gen):
        self.root = root
        self.word = word
        self.tags = tags
        self.gen = gen

    def __repr__(self):
        return f"Stream(root={self.root}, word={self.word}, tags={self.tags})"

    def split(self, tag):
        """Derive a child stream by appending a tag segment to the lineage."""
        return _derive(self.root, self.word, self.tags + (str(tag),))

    # Thin conveniences over the underlying numpy Generator.
    def random(self, size=None):
        return self.gen.random(size)

    def integers(self, high, size=None):
        return self.gen.integers(high, size=size)

    def normals(self, size=None):
        return self.gen.standard_normal(size)


def _derive(root, word, tags):
    seed = int.from_bytes(_lineage_digest(root, word, tags), "big")
    gen = np.random.Generator(np.random.PCG64(seed))
    return Stream(root, word, tags, gen)


def derive_stream(root, word=(), tag="root"):
    """Derive the stream addressed by ``(root, word, tag)``.

    Parameters
    ----------
    root : int
        Root seed, a 64-bit unsigned integer.
    word : sequence of int
        Letters in {1, 2, 3} locating a subtree of the recursion.
    tag : str
        Role of the stream within that subtree.
    """
    root = int(root)
    if not 0 <= root < 2**64:
        raise ValueError("root seed must be a 64-bit unsigned integer")
    return _derive(root, validate_word(word), (str(tag),))


def derive_seed(root, tag):
    """Derive a 64-bit sub-seed, e.g. one root seed per replica."""
    root = int(root)
    if not 0 <= root < 2**64:
        raise ValueError("root seed must be a 64-bit unsigned integer")
    return int.from_bytes(_lineage_digest(root, (), ("seed", str(tag)))[:8], "big")


def normalize_simplex3(raw):
    """Normalize three nonnegative reals so they sum to 1.0 exactly.

    The last coordinate is recomputed as the complement of the first two so
    the floating-point sum is exactly 1; the adjustment is at most one ulp.
    """
    v = np.asarray(raw, dtype=float)
    if v.shape != (3,):
        raise ValueError("expected three components")
    if np.any(v < 0.0):
        raise ValueError("components must be nonnegative")
    s = v.sum()
    if s <= 0.0:
        raise ValueError("components must not all be zero")
    out = v / s
    out[2] = 1.0 - out[0] - out[1]
    if out[2] < 0.0:
        out[2] = 0.0
        out[1] = 1.0 - out[0]
    return out


def sample_dirichlet_half(stream):
    """Draw a Dirichlet(1/2, 1/2, 1/2) triple.

    Uses three independent Gamma(1/2) variables sampled as Z^2/2 with Z a
    standard normal (exact and rejection-free), then normalizes.  Each
    marginal is Beta(1/2, 1).
    """
    while True:
        z = stream.gen.standard_normal(3)
        g = 0.5 * z * z
        if g.sum() > 0.0:
            return normalize_simplex3(g)


def sample_multinomial(stream, n, p):
    """Throw ``n`` balls into three boxes with probabilities ``p``."""
    n = int(n)
    if n < 0:
        raise ValueError("count must be nonnegative")
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError("expected a probability triple")
    if n == 0:
        return (0, 0, 0)
    c = stream.gen.multinomial(n, p)
    return (int(c[0]), int(c[1]), int(c[2]))


def rayleigh_inverse_survival(u):
    """Map a survival probability u in (0, 1] to the Rayleigh quantile.

    Inverts P(X > x) = exp(-x^2/2); u = 1 maps to 0.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u > 1.0):
        raise ValueError("survival probability must lie in (0, 1]")
    return np.sqrt(-2.0 * np.log(u))


def sample_rayleigh(stream):
    """Draw from the Rayleigh distribution (density x * exp(-x^2/2))."""
    # 1 - random() lies in (0, 1]; log1p keeps accuracy near u = 0.
    return float(np.sqrt(-2.0 * np.log1p(-stream.gen.random())))


def sample_rayleigh_many(stream, size):
    u = stream.gen.random(size)
    return np.sqrt(-2.0 * np.log1p(-u))


class TreeShape:
    """Unrooted binary tree-shape with leaves labelled 1..m.

    Vertices are integers; the leaves are exactly 1..m and every internal
    vertex has degree 3.  The canonical encoding identifies each edge with
    the lexicographically smaller of the two sorted leaf-label sets the edge
    separates; two shapes are equal iff their canonical split sets agree.
    Edges are enumerated in sorted canonical-split order.
    """

    __slots__ = ("m", "edges", "_adj", "_splits", "_edge_order")

    def __init__(self, m, edges):
        m = int(m)
        if m < 2:
            raise ValueError("a tree-shape needs at least two leaves")
        edges = [(int(u), int(v)) for (u, v) in edges]
        expected = 1 if m == 2 else 2 * m - 3
        if len(edges) != expected:
            raise ValueError(f"expected {expected} edges for m={m}, got {len(edges)}")
        adj = {}
        for u, v in edges:
            if u == v:
                raise ValueError("self-loop edge")
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
        leaves = set(range(1, m + 1))
        for vertex, nbrs in adj.items():
            if vertex in leaves:
                if len(nbrs) != 1:
                    raise ValueError(f"leaf {vertex} has degree {len(nbrs)}")
            elif len(nbrs) != 3:
                raise ValueError(f"internal vertex {vertex} has degree {len(nbrs)}")
        if not leaves.issubset(adj):
            raise ValueError("leaves 1..m must all be present")
        # Connectivity: edge count matches a tree, so reaching every vertex
        # from leaf 1 rules out cycles as well.
        seen = {1}
        stack = [1]
        while stack:
            for nbr in adj[stack.pop()]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        if len(seen) != len(adj):
            raise ValueError("shape is not connected")
        self.m = m
        self._adj = adj
        splits = []
        for idx, (u, v) in enumerate(edges):
            side = self._leaf_side(v, u)
            other = tuple(sorted(leaves - set(side)))
            splits.append((min(side, other), idx))
        splits.sort()
        self._splits = tuple(key for key, _ in splits)
        if len(set(self._splits)) != len(self._splits):
            raise ValueError("duplicate edge split; shape is malformed")
        self._edge_order = tuple(idx for _, idx in splits)
        self.edges = tuple(edges[idx] for idx in self._edge_order)

    def _leaf_side(self, start, banned):
        """Sorted leaf labels reachable from ``start`` without crossing ``banned``."""
        seen = {banned, start}
        stack = [start]
        side = []
        while stack:
            vertex = stack.pop()
            if vertex <= self.m:
                side.append(vertex)
            for nbr in self._adj[vertex]:
                if nbr not in seen:
                    seen.add(nbr)
                    stack.append(nbr)
        return tuple(sorted(side))

    @property
    def splits(self):
        """Canonical edge splits, one per edge, in canonical order."""
        return self._splits

    @property
    def edge_count(self):
        return len(self.edges)

    def reorder(self, values):
        """Reorder per-edge values given in constructor edge order to canonical order."""
        values = list(values)
        if len(values) != len(self._edge_order):
            raise ValueError("one value per edge required")
        return [values[idx] for idx in self._edge_order]

    def __eq__(self, other):
        return isinstance(other, TreeShape) and self.m == other.m and self._splits == other._splits

    def __hash__(self):
        return hash((self.m, self._splits))

    def __repr__(self):
        return f"TreeShape(m={self.m}, splits={self._splits})"


def sample_uniform_shape(stream, m):
    """Draw a uniform binary tree-shape with m labelled leaves.

    Grows the shape by inserting leaf k into a uniformly chosen edge of the
    shape on k-1 leaves; each of the (2m-5)!! shapes arises from exactly one
    insertion sequence, so the result is uniform.
    """
    m = int(m)
    if m < 2:
        raise ValueError("need at least two leaves")
    edges = [(1, 2)]
    next_internal = m + 1
    for leaf in range(3, m + 1):
        idx = int(stream.gen.integers(len(edges)))
        u, v = edges[idx]
        w = next_internal
        next_internal += 1
        edges[idx] = (u, w)
        edges.append((w, v))
        edges.append((leaf, w))
    return TreeShape(m, edges)


def enumerate_shapes(m):
    """All binary tree-shapes with m labelled leaves, by exhaustive insertion."""
    m = int(m)
    if m < 2:
        raise ValueError("need at least two leaves")
    partial = [[(1, 2)]]
    next_internal = m + 1
    for leaf in range(3, m + 1):
        grown = []
        for edges in partial:
            for idx in range(len(edges)):
                u, v = edges[idx]
                w = next_internal
                new = list(edges)
                new[idx] = (u, w)
                new.append((w, v))
                new.append((leaf, w))
                grown.append(new)
        partial = grown
        next_internal += 1
    return {TreeShape(m, edges) for edges in partial}


def shape_count(m):
    """(2m-5)!!, the number of binary shapes on m labelled leaves (1 for m <= 3)."""
    m = int(m)
    if m < 2:
        raise ValueError("need at least two leaves")
    count = 1
    for k in range(3, 2 * m - 4, 2):
        count *= k
    return count


def all_quadruples(n):
    """Index quadruples used by four-point checks."""
    return itertools.combinations(range(n), 4)
