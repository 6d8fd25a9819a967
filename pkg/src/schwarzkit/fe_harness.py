"""Structured Q1 test problems: meshes on [0,1]^2, element-wise constant
heterogeneous coefficients, stiffness/load assembly with Dirichlet
elimination, and local Neumann assembly for the non-algebraic reference
variants.

Only the benchmark generator and the reference eigenvalue problems use this
module; the algebraic solver pipeline never touches it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse_core import IndexSet, SparseMatrix, StructuralError, from_triplets

__all__ = [
    "StructuredMesh",
    "CoefficientField",
    "AssembledSystem",
    "LocalPatch",
    "Q1_REFERENCE_STIFFNESS",
    "make_coefficient",
    "assemble",
    "assemble_neumann_local",
    "structured_element_blocks",
    "elements_of_blocks",
    "elements_within_nodes",
    "read_raster",
    "write_raster",
]

# Q1 element stiffness for the Laplacian on a square; scale invariant in 2D.
# Corner order: (0,0), (1,0), (1,1), (0,1).
Q1_REFERENCE_STIFFNESS = np.array(
    [
        [2.0 / 3.0, -1.0 / 6.0, -1.0 / 3.0, -1.0 / 6.0],
        [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 6.0, -1.0 / 3.0],
        [-1.0 / 3.0, -1.0 / 6.0, 2.0 / 3.0, -1.0 / 6.0],
        [-1.0 / 6.0, -1.0 / 3.0, -1.0 / 6.0, 2.0 / 3.0],
    ]
)


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform n x n grid of square Q1 elements on the unit square.

    Nodes are numbered x-fastest: node (ix, iy) has id iy*(n+1) + ix.
    Elements likewise: element (ex, ey) has id ey*n + ex.  All boundary
    nodes carry homogeneous Dirichlet data.
    """

    n_elems_per_side: int

    def __post_init__(self):
        if self.n_elems_per_side < 2:
            raise StructuralError("mesh needs at least 2 elements per side")

    @property
    def h(self) -> float:
        return 1.0 / self.n_elems_per_side

    @property
    def n_nodes(self) -> int:
        return (self.n_elems_per_side + 1) ** 2

    @property
    def n_elements(self) -> int:
        return self.n_elems_per_side**2

    @property
    def n_free(self) -> int:
        return (self.n_elems_per_side - 1) ** 2

    def node_id(self, ix, iy):
        return iy * (self.n_elems_per_side + 1) + ix

    def element_corners(self) -> np.ndarray:
        """(n_elements, 4) node ids per element, corner order as K_ref."""
        n = self.n_elems_per_side
        ex, ey = np.meshgrid(np.arange(n), np.arange(n))
        ex, ey = ex.ravel(order="C"), ey.ravel(order="C")
        sw = ey * (n + 1) + ex
        return np.column_stack([sw, sw + 1, sw + n + 2, sw + n + 1])

    def free_nodes(self) -> IndexSet:
        """Mesh ids of the non-Dirichlet nodes, ascending."""
        n = self.n_elems_per_side
        ix, iy = np.meshgrid(np.arange(1, n), np.arange(1, n))
        ids = iy.ravel() * (n + 1) + ix.ravel()
        return IndexSet(np.sort(ids))

    def free_index_of(self) -> np.ndarray:
        """Map mesh node id -> free dof index (-1 on the Dirichlet boundary)."""
        lookup = np.full(self.n_nodes, -1, dtype=np.int64)
        free = self.free_nodes().indices
        lookup[free] = np.arange(free.size)
        return lookup


@dataclass(frozen=True)
class CoefficientField:
    """Element-wise constant coefficient, stored flat in element-id order."""

    values: np.ndarray
    alpha_min: float
    alpha_max: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if np.any(vals <= 0):
            raise StructuralError("coefficient values must be positive")
        if self.alpha_min <= 0 or self.alpha_max < self.alpha_min:
            raise StructuralError("need 0 < alpha_min <= alpha_max")
        lo, hi = vals.min(), vals.max()
        if lo < self.alpha_min * (1 - 1e-12) or hi > self.alpha_max * (1 + 1e-12):
            raise StructuralError("coefficient values outside [alpha_min, alpha_max]")
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)

    def grid(self, n: int) -> np.ndarray:
        """View as (ey, ex) array for an n x n element grid."""
        return self.values.reshape(n, n)


@dataclass(frozen=True)
class AssembledSystem:
    """Stiffness and load over the free (non-Dirichlet) dofs."""

    A: SparseMatrix
    rhs: np.ndarray
    free_node_map: IndexSet


@dataclass(frozen=True)
class LocalPatch:
    """Neumann-assembled stiffness over an element patch.

    ``matrix`` is indexed by the patch's free nodes in the order of
    ``nodes`` (global free-dof indices, ascending).
    """

    matrix: SparseMatrix
    nodes: IndexSet


def _blank_field(mesh: StructuredMesh, alpha_min: float) -> np.ndarray:
    return np.full(mesh.n_elements, float(alpha_min))


def _grid_view(mesh: StructuredMesh, flat: np.ndarray) -> np.ndarray:
    return flat.reshape(mesh.n_elems_per_side, mesh.n_elems_per_side)


def _force_boundary_layer(mesh: StructuredMesh, flat: np.ndarray, alpha_min: float):
    g = _grid_view(mesh, flat)
    g[0, :] = alpha_min
    g[-1, :] = alpha_min
    g[:, 0] = alpha_min
    g[:, -1] = alpha_min


def _paint_rect(mesh, flat, ex0, ex1, ey0, ey1, value):
    """Set alpha on element columns [ex0, ex1) x rows [ey0, ey1), clipped to
    the interior (the boundary element layer stays low)."""
    n = mesh.n_elems_per_side
    ex0, ex1 = max(ex0, 1), min(ex1, n - 1)
    ey0, ey1 = max(ey0, 1), min(ey1, n - 1)
    if ex0 < ex1 and ey0 < ey1:
        _grid_view(mesh, flat)[ey0:ey1, ex0:ex1] = value


# Default channel layout, per subdomain column and horizontal cut: three
# one-element-wide vertical strips crossing the edge, with per-strip
# vertical extents (up, down) in elements; "full" runs the strip through
# the whole domain height.  Offsets are element columns within the
# subdomain block.
CHANNEL_OFFSETS = (1, 5, 8)
CHANNEL_EXTENTS = ((4, 4), "full", (4, 4))
CHANNEL_FULL_WIDTH = 2

# Default comb layout: one connected high-coefficient comb per subdomain
# block and horizontal cut, built from three tooth groups that tile the
# interior edge (piecewise constant traces).  A near spine joins the first
# two groups just outside the two-layer oversampling domain, and a high
# spine joins everything just outside the five-layer domain.  Seen from
# the edge this yields three, two and one conduction components at two
# layers, five layers and a subdomain hull, respectively.
COMB_SPINE_NEAR = 2
COMB_SPINE_HIGH = 5


def _channels_field(mesh, subdomains_per_side, alpha_min, alpha_max,
                    offsets=CHANNEL_OFFSETS, extents=CHANNEL_EXTENTS, width=1,
                    full_width=CHANNEL_FULL_WIDTH):
    n = mesh.n_elems_per_side
    s = subdomains_per_side
    if n % s:
        raise StructuralError("subdomains_per_side must divide n")
    block = n // s
    flat = _blank_field(mesh, alpha_min)
    for cut in range(1, s):          # horizontal interface lines
        ey_line = cut * block
        for bx in range(s):          # subdomain columns
            for off, extent in zip(offsets, extents):
                ex = bx * block + off
                if extent == "full":
                    if cut == 1:     # paint domain-spanning strips once
                        _paint_rect(mesh, flat, ex, ex + full_width, 1, n - 1,
                                    alpha_max)
                    continue
                up, down = extent
                _paint_rect(mesh, flat, ex, ex + width,
                            ey_line - down, ey_line + up, alpha_max)
    _force_boundary_layer(mesh, flat, alpha_min)
    return flat


def _comb_field(mesh, subdomains_per_side, alpha_min, alpha_max,
                spine_near=COMB_SPINE_NEAR, spine_high=COMB_SPINE_HIGH):
    n = mesh.n_elems_per_side
    s = subdomains_per_side
    if n % s:
        raise StructuralError("subdomains_per_side must divide n")
    block = n // s
    if block != 10:
        raise StructuralError("the comb layout is designed for H/h = 10 blocks")
    flat = _blank_field(mesh, alpha_min)
    for cut in range(1, s):
        y = cut * block
        for bx in range(s):
            x0 = bx * block
            # three two-element teeth tile the edge; each hangs from a
            # one-element riser, so its trace keeps a single flat shape
            for t, riser_top in ((1, spine_near), (4, spine_high), (7, spine_high)):
                _paint_rect(mesh, flat, x0 + t, x0 + t + 2, y, y + 1, alpha_max)
                _paint_rect(mesh, flat, x0 + t, x0 + t + 1,
                            y + 1, y + riser_top, alpha_max)
            # near spine joins the first two teeth, the high spine joins
            # the last two, closing the comb into one component
            _paint_rect(mesh, flat, x0 + 1, x0 + 5,
                        y + spine_near, y + spine_near + 1, alpha_max)
            _paint_rect(mesh, flat, x0 + 4, x0 + 8,
                        y + spine_high, y + spine_high + 1, alpha_max)
    _force_boundary_layer(mesh, flat, alpha_min)
    return flat


def make_coefficient(kind, mesh: StructuredMesh, alpha_min=1.0, alpha_max=1.0e6,
                     **params) -> CoefficientField:
    """Generate one of the benchmark coefficient fields.

    Parameters
    ----------
    kind : {"constant", "channels", "comb", "random_binary", "raster"}
        * ``constant``: alpha = alpha_min everywhere.
        * ``channels``: vertical high-coefficient strips crossing the
          horizontal subdomain edges (``subdomains_per_side`` required).
        * ``comb``: connected comb-shaped components crossing the
          horizontal subdomain edges (``subdomains_per_side`` required).
        * ``random_binary``: each interior element is high with probability
          ``p`` (``seed`` selects the sample).
        * ``raster``: per-element values from ``grid``; if ``threshold`` is
          given, values above it map to alpha_max and the rest to alpha_min.

    All generators keep one element layer at alpha_min along the domain
    boundary.
    """
    if kind == "constant":
        flat = _blank_field(mesh, alpha_min)
        return CoefficientField(flat, alpha_min, alpha_min)
    if kind == "channels":
        flat = _channels_field(mesh, params.pop("subdomains_per_side"),
                               alpha_min, alpha_max, **params)
        return CoefficientField(flat, alpha_min, alpha_max)
    if kind == "comb":
        flat = _comb_field(mesh, params.pop("subdomains_per_side"),
                           alpha_min, alpha_max, **params)
        return CoefficientField(flat, alpha_min, alpha_max)
    if kind == "random_binary":
        p = float(params["p"])
        if not 0.0 <= p <= 1.0:
            raise StructuralError("p must lie in [0, 1]")
        rng = np.random.default_rng(params.get("seed", 0))
        n = mesh.n_elems_per_side
        high = rng.random((n, n)) < p
        flat = _blank_field(mesh, alpha_min)
        _grid_view(mesh, flat)[high] = alpha_max
        _force_boundary_layer(mesh, flat, alpha_min)
        return CoefficientField(flat, alpha_min, alpha_max)
    if kind == "raster":
        grid = np.asarray(params["grid"], dtype=float)
        n = mesh.n_elems_per_side
        if grid.shape != (n, n):
            raise StructuralError(
                f"raster shape {grid.shape} does not match element grid ({n}, {n})")
        threshold = params.get("threshold")
        if threshold is not None:
            flat = np.where(grid > threshold, alpha_max, alpha_min).ravel()
        else:
            flat = grid.ravel().copy()
            alpha_min = min(alpha_min, flat.min())
            alpha_max = max(alpha_max, flat.max())
        if params.get("boundary_layer", True):
            _force_boundary_layer(mesh, flat, alpha_min)
        return CoefficientField(flat, alpha_min, alpha_max)
    raise StructuralError(f"unknown coefficient kind '{kind}'")


def assemble(mesh: StructuredMesh, alpha: CoefficientField, rhs_kind="ones",
             seed=0) -> AssembledSystem:
    """Assemble the Q1 stiffness matrix and load over the free dofs.

    The stiffness is the sum of alpha_e * K_ref scattered per element, with
    Dirichlet rows and columns eliminated.  ``rhs_kind='ones'`` uses the
    f = 1 load; ``'random'`` draws a standard normal right-hand side.
    """
    n = mesh.n_elems_per_side
    if alpha.values.size != mesh.n_elements:
        raise StructuralError("coefficient length does not match element count")
    corners = mesh.element_corners()
    lookup = mesh.free_index_of()
    free_corners = lookup[corners]                      # (nel, 4), -1 on boundary

    kvals = np.einsum("e,ij->eij", alpha.values, Q1_REFERENCE_STIFFNESS)
    rows = np.repeat(free_corners, 4, axis=1).ravel()
    cols = np.tile(free_corners, (1, 4)).ravel()
    vals = kvals.reshape(alpha.values.size, 16).ravel()
    keep = (rows >= 0) & (cols >= 0)
    A = from_triplets(
        mesh.n_free, mesh.n_free,
        zip(rows[keep], cols[keep], vals[keep]),
        symmetric=True,
    )

    if rhs_kind == "ones":
        load = np.zeros(mesh.n_free)
        w = mesh.h**2 / 4.0
        valid = free_corners.ravel()
        np.add.at(load, valid[valid >= 0], w)
    elif rhs_kind == "random":
        load = np.random.default_rng(seed).standard_normal(mesh.n_free)
    else:
        raise StructuralError(f"unknown rhs kind '{rhs_kind}'")
    return AssembledSystem(A, load, mesh.free_nodes())


def assemble_neumann_local(mesh: StructuredMesh, alpha: CoefficientField,
                           elems) -> LocalPatch:
    """Assemble the stiffness of an element patch with natural boundary
    conditions everywhere except the global Dirichlet boundary.

    ``elems`` holds element ids.  The result is singular (constant
    nullspace) when the patch does not touch the domain boundary.
    """
    elems = np.asarray(sorted(set(int(e) for e in elems)), dtype=np.int64)
    if elems.size == 0:
        raise StructuralError("element patch is empty")
    if elems.min() < 0 or elems.max() >= mesh.n_elements:
        raise StructuralError("element id out of range")
    corners = mesh.element_corners()[elems]
    lookup = mesh.free_index_of()
    free_corners = lookup[corners]
    patch_nodes = np.unique(free_corners[free_corners >= 0])
    local = np.full(mesh.n_free, -1, dtype=np.int64)
    local[patch_nodes] = np.arange(patch_nodes.size)
    loc_corners = np.where(free_corners >= 0, local[np.clip(free_corners, 0, None)], -1)

    kvals = np.einsum("e,ij->eij", alpha.values[elems], Q1_REFERENCE_STIFFNESS)
    rows = np.repeat(loc_corners, 4, axis=1).ravel()
    cols = np.tile(loc_corners, (1, 4)).ravel()
    vals = kvals.reshape(elems.size, 16).ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = from_triplets(patch_nodes.size, patch_nodes.size,
                        zip(rows[keep], cols[keep], vals[keep]), symmetric=True)
    return LocalPatch(mat, IndexSet(patch_nodes))


def structured_element_blocks(mesh: StructuredMesh, subdomains_per_side: int) -> np.ndarray:
    """Element id -> subdomain block id for the structured decomposition."""
    n = mesh.n_elems_per_side
    s = subdomains_per_side
    if n % s:
        raise StructuralError("subdomains_per_side must divide n")
    block = n // s
    ex, ey = np.meshgrid(np.arange(n), np.arange(n))
    return ((ey // block) * s + (ex // block)).ravel(order="C")


def elements_of_blocks(mesh: StructuredMesh, subdomains_per_side: int,
                       blocks) -> np.ndarray:
    """Element ids of a union of structured subdomain blocks."""
    owner = structured_element_blocks(mesh, subdomains_per_side)
    mask = np.isin(owner, np.asarray(list(blocks), dtype=np.int64))
    return np.where(mask)[0]


def elements_within_nodes(mesh: StructuredMesh, free_node_set: IndexSet) -> np.ndarray:
    """Element ids whose free corners all lie inside the given free-dof set.

    Corners on the global Dirichlet boundary never exclude an element.
    """
    corners = mesh.element_corners()
    lookup = mesh.free_index_of()
    free_corners = lookup[corners]
    member = np.zeros(mesh.n_free, dtype=bool)
    member[free_node_set.indices] = True
    inside = member[np.clip(free_corners, 0, mesh.n_free - 1)] | (free_corners < 0)
    return np.where(inside.all(axis=1))[0]


def read_raster(path) -> np.ndarray:
    """Read a plain-text raster: one row of whitespace-separated reals per line."""
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rows.append([float(tok) for tok in line.split()])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise StructuralError(f"ragged or empty raster file: {path}")
    return np.asarray(rows, dtype=float)


def write_raster(path, grid) -> None:
    """Write a coefficient grid in the plain-text raster format."""
    grid = np.asarray(grid, dtype=float)
    with open(path, "w") as fh:
        for row in grid:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
