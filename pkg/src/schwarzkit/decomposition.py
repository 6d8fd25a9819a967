"""Algebraic domain-decomposition structure.

Everything here is derived from the sparsity pattern of the assembled matrix
plus a nonoverlapping node-to-subdomain map: subdomain closures, overlap
growth by graph layers, interface classification into interior/edge/vertex
nodes, and oversampling domains around edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse_core import IndexSet, SparseMatrix, StructuralError

__all__ = [
    "Partition",
    "OverlappingSets",
    "Edge",
    "Interface",
    "OversamplingDomain",
    "structured_partition",
    "classify_interface",
    "grow_overlap",
    "build_oversampling",
    "read_partition",
    "write_partition",
]


@dataclass(frozen=True)
class Partition:
    """Nonoverlapping node -> subdomain map over the free dofs."""

    owner: np.ndarray
    n_subdomains: int

    def __post_init__(self):
        owner = np.asarray(self.owner, dtype=np.int64).ravel()
        if owner.size == 0:
            raise StructuralError("empty partition")
        if owner.min() < 0 or owner.max() >= self.n_subdomains:
            raise StructuralError("subdomain id out of range")
        object.__setattr__(self, "owner", owner)
        owner.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return int(self.owner.size)


@dataclass(frozen=True)
class OverlappingSets:
    """Per-subdomain overlapping index sets and the overlap width used."""

    sets: tuple
    overlap: int
    max_multiplicity: int


@dataclass(frozen=True)
class Edge:
    """A connected interface component shared by exactly two subdomains."""

    edge_id: int
    nodes: IndexSet
    subdomains: tuple
    endpoint_vertices: tuple


@dataclass(frozen=True)
class Interface:
    """Partition of the free dofs into interior, edge and vertex nodes.

    ``closures`` keeps the per-subdomain closure index sets the
    classification was derived from; oversampling domains in subdomain-hull
    mode reuse them.
    """

    interior: IndexSet
    edges: tuple
    vertices: tuple  # (node id, sorted tuple of adjacent subdomains)
    closures: tuple = field(repr=False, default=())

    @property
    def gamma(self) -> IndexSet:
        """All interface dofs (edge interiors plus vertices)."""
        parts = [e.nodes.indices for e in self.edges]
        parts.append(np.asarray([v for v, _ in self.vertices], dtype=np.int64))
        return IndexSet(np.sort(np.concatenate(parts))) if parts else IndexSet(np.zeros(0, np.int64))


@dataclass(frozen=True)
class OversamplingDomain:
    """Node patch around an edge on which the edge eigenproblems are posed."""

    edge_id: int
    all_nodes: IndexSet          # Omega_e
    interior: IndexSet           # interior of Omega_e
    boundary: IndexSet           # boundary of Omega_e inside the domain
    complement: IndexSet         # interior minus the interior edge nodes

    def __post_init__(self):
        if len(self.boundary) and len(self.interior):
            if np.intersect1d(self.boundary.indices, self.interior.indices).size:
                raise StructuralError("oversampling interior and boundary overlap")


def structured_partition(n: int, subdomains_per_side: int) -> Partition:
    """Square-block partition of the free dofs of an n x n element grid.

    Nodes on block boundaries go to the lowest adjacent block id; interface
    classification does not depend on this bookkeeping choice.
    """
    s = subdomains_per_side
    if n % s:
        raise StructuralError("subdomains_per_side must divide n")
    block = n // s
    ix, iy = np.meshgrid(np.arange(1, n), np.arange(1, n))
    ix, iy = ix.ravel(), iy.ravel()

    def block_of(coord):
        b = coord // block
        on_line = (coord % block == 0)
        return np.where(on_line, b - 1, b)

    bx = block_of(ix)
    by = block_of(iy)
    return Partition(by * s + bx, s * s)


def _adjacency(A: SparseMatrix) -> sp.csr_matrix:
    """Symmetrized pattern of A without the diagonal."""
    pattern = A.tocsr().copy()
    pattern.data = np.ones_like(pattern.data)
    pattern = ((pattern + pattern.T) > 0).astype(np.int8)
    pattern.setdiag(0)
    pattern.eliminate_zeros()
    return pattern.tocsr()


def _expand(adj: sp.csr_matrix, members: np.ndarray, layers: int) -> np.ndarray:
    """Grow a node set by graph adjacency layers."""
    current = np.zeros(adj.shape[0], dtype=bool)
    current[members] = True
    for _ in range(layers):
        reached = adj @ current.astype(np.int8)
        current |= reached > 0
    return np.where(current)[0]


def subdomain_closures(A: SparseMatrix, part: Partition):
    """Algebraic surrogate of the geometric subdomain closures.

    Under the lowest-adjacent-owner convention, nodes on the boundary lines
    between subdomains are exactly the owned nodes that have a neighbor
    with a strictly higher owner id.  Peeling them recovers the open
    subdomains; the closure of a subdomain is then the closed graph
    neighborhood of its open set.  On structured grids this reproduces the
    geometric closures exactly.
    """
    if part.n_nodes != A.n_rows:
        raise StructuralError("partition size does not match the matrix")
    adj = _adjacency(A)
    owner = part.owner

    # highest owner id within each node's open neighborhood
    neighbor_max = np.full(A.n_rows, -1, dtype=np.int64)
    indptr, indices = adj.indptr, adj.indices
    for x in range(A.n_rows):
        nb = indices[indptr[x]:indptr[x + 1]]
        if nb.size:
            neighbor_max[x] = owner[nb].max()
    is_open = neighbor_max <= owner

    closures = []
    for i in range(part.n_subdomains):
        members = np.where(is_open & (owner == i))[0]
        if members.size == 0:
            # degenerate tiny subdomain: fall back to the owned set
            members = np.where(owner == i)[0]
        closures.append(IndexSet(_expand(adj, members, 1)))
    return closures, adj


def classify_interface(A: SparseMatrix, part: Partition) -> Interface:
    """Classify free dofs into interior / edge / vertex nodes.

    Node multiplicity is the number of subdomain closures containing the
    node: multiplicity 1 is interior, 2 is an edge node, 3 or more a
    vertex.  Edge nodes are grouped into connected components per adjacent
    subdomain pair; disconnected components of the same pair become
    distinct edges.
    """
    closures, adj = subdomain_closures(A, part)
    n = A.n_rows
    membership = [[] for _ in range(n)]
    for i, cl in enumerate(closures):
        for x in cl.indices:
            membership[x].append(i)
    for x in range(n):
        if not membership[x]:
            membership[x].append(int(part.owner[x]))
    mult = np.array([len(m) for m in membership])

    interior = IndexSet(np.where(mult == 1)[0])
    vertex_nodes = np.where(mult >= 3)[0]
    vertices = tuple((int(v), tuple(membership[v])) for v in vertex_nodes)

    edge_nodes = np.where(mult == 2)[0]
    by_pair = {}
    for x in edge_nodes:
        by_pair.setdefault(tuple(membership[x]), []).append(x)

    vertex_mask = np.zeros(n, dtype=bool)
    vertex_mask[vertex_nodes] = True
    indptr, indices = adj.indptr, adj.indices

    raw_edges = []
    for pair in sorted(by_pair):
        nodes = np.asarray(by_pair[pair], dtype=np.int64)
        for comp in _components(nodes, indptr, indices):
            endpoints = set()
            for x in comp:
                nb = indices[indptr[x]:indptr[x + 1]]
                endpoints.update(int(v) for v in nb[vertex_mask[nb]])
            raw_edges.append((comp, pair, tuple(sorted(endpoints))))
    raw_edges.sort(key=lambda item: int(item[0][0]))
    edges = tuple(
        Edge(k, IndexSet(comp), pair, endpoints)
        for k, (comp, pair, endpoints) in enumerate(raw_edges)
    )
    return Interface(interior, edges, vertices, tuple(closures))


def _components(nodes: np.ndarray, indptr, indices):
    """Connected components of the graph restricted to ``nodes``."""
    member = set(int(x) for x in nodes)
    seen = set()
    comps = []
    for start in nodes:
        start = int(start)
        if start in seen:
            continue
        stack, comp = [start], []
        seen.add(start)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in indices[indptr[x]:indptr[x + 1]]:
                y = int(y)
                if y in member and y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(np.asarray(sorted(comp), dtype=np.int64))
    comps.sort(key=lambda c: int(c[0]))
    return comps


def grow_overlap(A: SparseMatrix, part: Partition, k: int) -> OverlappingSets:
    """Overlapping subdomain sets: k graph-layer expansions of the closures.

    ``k=1`` is the paper-style algebraic overlap of one node layer.
    """
    if k < 0:
        raise StructuralError("overlap width must be nonnegative")
    closures, adj = subdomain_closures(A, part)
    sets = []
    counts = np.zeros(A.n_rows, dtype=np.int64)
    for cl in closures:
        grown = _expand(adj, cl.indices, k)
        counts[grown] += 1
        sets.append(IndexSet(grown))
    return OverlappingSets(tuple(sets), k, int(counts.max()))


def build_oversampling(A: SparseMatrix, interface: Interface, edge_id: int,
                       spec) -> OversamplingDomain:
    """Build the oversampling domain of an edge.

    ``spec`` is either ``("layers", k)`` with k >= 2 (k graph expansions of
    the interior edge) or ``("hull",)`` (union of the closures of all
    subdomains whose closure meets the closed edge).
    """
    edge = _edge_by_id(interface, edge_id)
    adj = _adjacency(A)
    if spec[0] == "layers":
        k = int(spec[1])
        if k < 2:
            raise StructuralError("layer-mode oversampling needs at least 2 layers")
        all_nodes = _expand(adj, edge.nodes.indices, k)
    elif spec[0] == "hull":
        if not interface.closures:
            raise StructuralError("interface carries no closures for hull mode")
        closed_edge = np.union1d(
            edge.nodes.indices, np.asarray(edge.endpoint_vertices, dtype=np.int64))
        pieces = []
        for cl in interface.closures:
            if np.intersect1d(cl.indices, closed_edge, assume_unique=True).size:
                pieces.append(cl.indices)
        all_nodes = np.unique(np.concatenate(pieces))
    else:
        raise StructuralError(f"unknown oversampling spec {spec!r}")

    inside = np.zeros(A.n_rows, dtype=bool)
    inside[all_nodes] = True
    indptr, indices = adj.indptr, adj.indices
    boundary = np.array(
        [x for x in all_nodes
         if np.any(~inside[indices[indptr[x]:indptr[x + 1]]])],
        dtype=np.int64,
    )
    interior = np.setdiff1d(all_nodes, boundary, assume_unique=False)
    if np.intersect1d(edge.nodes.indices, interior).size != len(edge.nodes):
        raise StructuralError(
            f"edge {edge_id}: oversampling domain too small, edge touches its boundary")
    complement = np.setdiff1d(interior, edge.nodes.indices, assume_unique=True)
    return OversamplingDomain(
        edge_id,
        IndexSet(all_nodes),
        IndexSet(interior),
        IndexSet(boundary),
        IndexSet(complement),
    )


def _edge_by_id(interface: Interface, edge_id: int) -> Edge:
    for e in interface.edges:
        if e.edge_id == edge_id:
            return e
    raise StructuralError(f"unknown edge id {edge_id}")


def write_partition(part: Partition, path) -> None:
    """Write 'node_id subdomain_id' lines."""
    with open(path, "w") as fh:
        for node, owner in enumerate(part.owner):
            fh.write(f"{node} {owner}\n")


def read_partition(path, n_nodes=None) -> Partition:
    """Read a 'node_id subdomain_id' partition file."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise StructuralError(
                    f"{path}:{lineno}: expected 'node_id subdomain_id'")
            pairs.append((int(parts[0]), int(parts[1])))
    if not pairs:
        raise StructuralError(f"empty partition file: {path}")
    size = max(node for node, _ in pairs) + 1
    if n_nodes is not None:
        if size > n_nodes:
            raise StructuralError("partition mentions nodes beyond the matrix size")
        size = n_nodes
    owner = np.full(size, -1, dtype=np.int64)
    for node, sub in pairs:
        owner[node] = sub
    if np.any(owner < 0):
        raise StructuralError("partition file does not cover every node")
    return Partition(owner, int(owner.max()) + 1)
