"""Coarse spaces for two-level overlapping Schwarz preconditioners.

Builds the classical vertex + constant-edge space and its spectral
enrichments from two per-edge eigenvalue problems:

* a Dirichlet eigenvalue problem relating the energy of the zero extension
  of interior-edge values to the energy of their harmonic extension with
  zero boundary data on an oversampling domain around the edge, and
* a transfer eigenvalue problem on the traces of functions that solve the
  PDE on the oversampling domain, whose dominant singular directions are
  transferred onto the edge.

All variants except the Neumann-based references are assembled from the
global stiffness matrix and a node partition alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .decomposition import (
    Interface,
    OversamplingDomain,
    Partition,
    build_oversampling,
    classify_interface,
)
from .sparse_core import (
    CholeskyFactor,
    IndexSet,
    NotSPDError,
    SparseMatrix,
    StructuralError,
    cholesky_factor,
    extract_submatrix,
    generalized_sym_eig,
    truncated_pod,
)

__all__ = [
    "EvpConfig",
    "EdgeFunctions",
    "CoarseSpace",
    "ALGEBRAIC_VARIANTS",
    "REFERENCE_VARIANTS",
    "gdsw_columns",
    "dirichlet_evp",
    "transfer_evp",
    "agdsw_evp",
    "harmonic_extend",
    "build_coarse_space",
    "export_coarse_space",
]

# Variants constructible from (matrix, partition, config) alone.
ALGEBRAIC_VARIANTS = ("gdsw", "vcd", "vct-l2", "vcdt-l2")
# Variants that additionally need Neumann element patches.
REFERENCE_VARIANTS = ("agdsw", "vct-a", "vcdt-a")


@dataclass(frozen=True)
class EvpConfig:
    """Tolerances and scalings for the edge eigenvalue problems.

    ``alpha_min`` scales the right-hand side of the transfer problem; it is
    not algebraically knowable, so it defaults to 1 with the factor absorbed
    into ``tol_tr``.  ``include_h_factor`` switches the transfer scaling
    from alpha_min/N to alpha_min*h/N (both appear in the literature); the
    mesh size ``h`` is only consulted in that case.
    """

    tol_dir: float = 1.0e-3
    tol_tr: float = 1.0e5
    tol_o: float = 1.0e-5
    alpha_min: float = 1.0
    include_h_factor: bool = False
    h: float = 1.0
    omega_e: tuple = ("layers", 5)

    def __post_init__(self):
        if min(self.tol_dir, self.tol_tr, self.tol_o) <= 0:
            raise StructuralError("tolerances must be positive")
        if self.alpha_min <= 0:
            raise StructuralError("alpha_min must be positive")


@dataclass(frozen=True)
class EdgeFunctions:
    """Candidate coarse functions of one edge, as columns over its interior
    nodes, with per-column provenance ``(kind, eigenvalue)``."""

    edge_id: int
    columns: np.ndarray
    provenance: tuple

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2 or cols.shape[1] != len(self.provenance):
            raise StructuralError("column/provenance mismatch")
        if cols.size and not np.all(np.isfinite(cols)):
            raise StructuralError("edge function entries must be finite")
        object.__setattr__(self, "columns", cols)


@dataclass(frozen=True)
class CoarseSpace:
    """Energy-minimizing coarse basis, stored as the columns of E0.

    ``interface_columns`` carries the interface values only; ``e0`` adds the
    harmonic interior extension.  ``labels`` names every column: vertex
    columns as ``("vertex", node)``, edge columns as
    ``("edge", edge_id, rank)``.
    """

    e0: sp.csr_matrix
    interface_columns: sp.csr_matrix
    labels: tuple
    variant: str
    dim_pre_pod: int
    dim_post_pod: int
    per_edge_dims: dict
    edge_candidates: dict = field(repr=False, default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.e0.shape[1])


def gdsw_columns(interface: Interface, n_rows: int):
    """Classical interface columns: indicator of each edge interior plus
    indicator of each vertex.  Their sum is 1 at every interface dof."""
    if not interface.edges and not interface.vertices:
        raise StructuralError("interface is empty")
    cols = []
    labels = []
    for e in interface.edges:
        vec = sp.csc_matrix(
            (np.ones(len(e.nodes)), (e.nodes.indices, np.zeros(len(e.nodes), dtype=int))),
            shape=(n_rows, 1),
        )
        cols.append(vec)
        labels.append(("edge", e.edge_id, 0))
    for v, _ in interface.vertices:
        cols.append(sp.csc_matrix(([1.0], ([v], [0])), shape=(n_rows, 1)))
        labels.append(("vertex", v))
    return sp.hstack(cols, format="csr"), tuple(labels)


def dirichlet_evp(A: SparseMatrix, edge, od: OversamplingDomain,
                  tol_dir: float) -> EdgeFunctions:
    """Edge functions from the Dirichlet eigenvalue problem.

    Solves S_e v = mu A_ee v on the interior edge dofs, where S_e is the
    Schur complement of the oversampling-domain interior onto the edge
    (the energy of the harmonic extension vanishing on the domain's
    boundary) and A_ee the energy of the zero extension.  All eigenvectors
    with mu <= tol_dir are returned, b_e-normalized; the spectrum lies in
    [0, 1] up to round-off.
    """
    e_nodes = edge.nodes
    A_ee = extract_submatrix(A, e_nodes, e_nodes).todense()
    S = _edge_schur(A, e_nodes, od.complement, A_ee)
    pairs = generalized_sym_eig(S, A_ee)
    keep = np.where(pairs.values <= tol_dir)[0]
    cols = pairs.vectors[:, keep]
    prov = tuple(("dirichlet_ev", float(pairs.values[i])) for i in keep)
    return EdgeFunctions(edge.edge_id, cols, prov)


def _edge_schur(A, e_nodes, complement, A_ee):
    """S = A_ee - A_eR A_RR^-1 A_Re, symmetrized against round-off."""
    if len(complement) == 0:
        return 0.5 * (A_ee + A_ee.T)
    A_Re = A.tocsr()[complement.indices][:, e_nodes.indices].toarray()
    A_RR = extract_submatrix(A, complement, complement)
    Y = cholesky_factor(A_RR).solve(A_Re)
    S = A_ee - A_Re.T @ Y
    return 0.5 * (S + S.T)


def transfer_evp(A: SparseMatrix, edge, od: OversamplingDomain, cfg: EvpConfig,
                 mode: str = "l2", patch=None) -> EdgeFunctions:
    """Edge functions from the transfer eigenvalue problem.

    Builds the transfer matrix T mapping boundary values of the
    oversampling domain to the interior-edge trace of their harmonic
    extension, then solves T^T A_ee T v = lambda B v with B the scaled
    identity (mode ``"l2"``, fully algebraic) or the energy of the harmonic
    extension assembled from a Neumann element patch (mode ``"a"``, the
    non-algebraic reference).  Eigenfunctions with lambda > tol_tr are
    transferred onto the edge as T v.
    """
    if mode not in ("l2", "a"):
        raise StructuralError(f"unknown transfer mode '{mode}'")
    e_nodes = edge.nodes
    n_bnd = len(od.boundary)
    if n_bnd == 0:
        return EdgeFunctions(edge.edge_id, np.zeros((len(e_nodes), 0)), ())

    A_csr = A.tocsr()
    A_oo = extract_submatrix(A, od.interior, od.interior)
    A_ob = A_csr[od.interior.indices][:, od.boundary.indices].toarray()
    X = cholesky_factor(A_oo).solve(A_ob)
    T = -X[od.interior.positions_of(e_nodes), :]

    A_ee = extract_submatrix(A, e_nodes, e_nodes).todense()
    G = T.T @ A_ee @ T
    G = 0.5 * (G + G.T)

    if mode == "l2":
        scale = cfg.alpha_min * (cfg.h if cfg.include_h_factor else 1.0) / n_bnd
        pairs = generalized_sym_eig(G, scale * np.eye(n_bnd))
        lam = pairs.values
        keep = np.where(lam > cfg.tol_tr)[0][::-1]        # descending
        cols = T @ pairs.vectors[:, keep]
        prov = tuple(("transfer_ev", float(lam[i])) for i in keep)
        return EdgeFunctions(edge.edge_id, cols, prov)

    # mode "a": right-hand side is the energy of the harmonic extension,
    # assembled from the Neumann matrix of the oversampling domain's
    # element patch; its nullspace (constants on floating patches) carries
    # an infinite Rayleigh quotient and is always selected.
    B = _harmonic_energy_matrix(patch, od, X)
    w_b, V_b = np.linalg.eigh(B)
    cut = max(w_b.max(), 1.0) * 1e-12
    null = V_b[:, w_b <= cut]
    pos = V_b[:, w_b > cut]
    w_pos = w_b[w_b > cut]
    cols = []
    prov = []
    for k in range(null.shape[1]):
        cols.append(T @ null[:, k])
        prov.append(("transfer_ev", np.inf))
    if w_pos.size:
        G_r = pos.T @ G @ pos
        G_r = 0.5 * (G_r + G_r.T)
        pairs = generalized_sym_eig(G_r, np.diag(w_pos))
        keep = np.where(pairs.values > cfg.tol_tr)[0][::-1]
        for i in keep:
            cols.append(T @ (pos @ pairs.vectors[:, i]))
            prov.append(("transfer_ev", float(pairs.values[i])))
    cols = np.column_stack(cols) if cols else np.zeros((len(e_nodes), 0))
    return EdgeFunctions(edge.edge_id, cols, tuple(prov))


def _harmonic_energy_matrix(patch, od: OversamplingDomain, X: np.ndarray):
    if patch is None:
        raise StructuralError("transfer mode 'a' needs a Neumann element patch")
    matrix, nodes = _unpack_patch(patch)
    needed = np.union1d(od.interior.indices, od.boundary.indices)
    missing = np.setdiff1d(needed, nodes.indices)
    if missing.size:
        raise StructuralError(
            f"Neumann patch does not cover the oversampling domain "
            f"({missing.size} nodes missing)")
    perm = np.concatenate([
        nodes.positions_of(od.interior),
        nodes.positions_of(od.boundary),
    ])
    A_N = matrix.tocsr()[perm][:, perm].toarray()
    T_hat = np.vstack([-X, np.eye(len(od.boundary))])
    B = T_hat.T @ A_N @ T_hat
    return 0.5 * (B + B.T)


def _unpack_patch(patch):
    if hasattr(patch, "matrix") and hasattr(patch, "nodes"):
        return patch.matrix, patch.nodes
    matrix, nodes = patch
    return matrix, IndexSet.make(nodes)


def agdsw_evp(patch, edge, tol: float) -> EdgeFunctions:
    """Edge functions of the Neumann-patch reference eigenvalue problem.

    ``patch`` is the Neumann-assembled stiffness over the extension domain
    (classically the two subdomains adjacent to the edge).  The Schur
    complement of the patch onto the interior edge gives the left-hand
    side; eigenvectors with mu <= tol are returned.  On interior patches
    the constant edge function shows up as the zero eigenvalue.
    """
    matrix, nodes = _unpack_patch(patch)
    e_local = nodes.positions_of(edge.nodes)
    mask = np.ones(len(nodes), dtype=bool)
    mask[e_local] = False
    rest = np.where(mask)[0]
    csr = matrix.tocsr()
    A_ee = csr[e_local][:, e_local].toarray()
    A_ee = 0.5 * (A_ee + A_ee.T)
    if rest.size:
        A_Re = csr[rest][:, e_local].toarray()
        A_RR = csr[rest][:, rest]
        Y = cholesky_factor(SparseMatrix.from_scipy(A_RR, symmetric=True)).solve(A_Re)
        S = A_ee - A_Re.T @ Y
        S = 0.5 * (S + S.T)
    else:
        S = A_ee
    pairs = generalized_sym_eig(S, A_ee)
    keep = np.where(pairs.values <= tol)[0]
    prov = tuple(("agdsw_ev", float(pairs.values[i])) for i in keep)
    return EdgeFunctions(edge.edge_id, pairs.vectors[:, keep], prov)


def harmonic_extend(A: SparseMatrix, interface: Interface,
                    interface_columns) -> sp.csr_matrix:
    """Energy-minimizing extension of interface columns into the interiors.

    Solves A_II X = -A_IG C blockwise; the interior block of A is diagonal
    over the subdomain interiors, so each subdomain is solved
    independently.
    """
    C = sp.csr_matrix(interface_columns)
    if C.shape[0] != A.n_rows:
        raise StructuralError("interface columns have the wrong row dimension")
    full = C.tolil(copy=True)
    A_csr = A.tocsr()
    interior = interface.interior
    for closure in interface.closures:
        local = np.intersect1d(closure.indices, interior.indices, assume_unique=True)
        if local.size == 0:
            continue
        rhs = -(A_csr[local] @ C).toarray()
        if not np.any(rhs):
            continue
        block = extract_submatrix(A, IndexSet(local), IndexSet(local))
        sol = cholesky_factor(block).solve(rhs)
        full[local, :] = sol
    return full.tocsr()


def build_coarse_space(A: SparseMatrix, partition, cfg: EvpConfig,
                       variant: str = "vcdt-l2", interface: Interface = None,
                       patches: dict = None) -> CoarseSpace:
    """Assemble a coarse space variant.

    The algebraic variants (``gdsw``, ``vcd``, ``vct-l2``, ``vcdt-l2``)
    consume only the matrix, the partition and the tolerances.  The
    reference variants (``agdsw``, ``vct-a``, ``vcdt-a``) additionally
    require ``patches``, a mapping from edge id to a Neumann element patch
    with ``matrix`` and ``nodes`` attributes.

    Per edge, the candidate columns [constant | Dirichlet picks |
    transfer picks] are orthonormalized by a truncated POD with tolerance
    ``tol_o``; vertex indicator columns are appended afterwards, and the
    whole interface block is extended energy-minimally into the subdomain
    interiors.
    """
    variant = variant.lower()
    if variant not in ALGEBRAIC_VARIANTS + REFERENCE_VARIANTS:
        raise StructuralError(f"unknown coarse space variant '{variant}'")
    if variant in REFERENCE_VARIANTS and patches is None:
        raise StructuralError(f"variant '{variant}' needs Neumann patches")
    if interface is None:
        if not isinstance(partition, Partition):
            raise StructuralError("need a Partition (or a precomputed Interface)")
        interface = classify_interface(A, partition)

    use_dir = variant in ("vcd", "vcdt-l2", "vcdt-a")
    use_tr_l2 = variant in ("vct-l2", "vcdt-l2")
    use_tr_a = variant in ("vct-a", "vcdt-a")
    use_agdsw = variant == "agdsw"
    needs_od = use_dir or use_tr_l2 or use_tr_a

    n = A.n_rows
    col_blocks = []
    labels = []
    per_edge_dims = {}
    edge_candidates = {}
    dim_pre = 0

    for e in interface.edges:
        cand_cols = [np.ones((len(e.nodes), 1))]
        cand_prov = [("constant", 0.0)]
        od = None
        if needs_od:
            od = build_oversampling(A, interface, e.edge_id, cfg.omega_e)
        if use_dir:
            ef = dirichlet_evp(A, e, od, cfg.tol_dir)
            cand_cols.append(ef.columns)
            cand_prov.extend(ef.provenance)
        if use_tr_l2 or use_tr_a:
            patch = patches.get(e.edge_id) if use_tr_a else None
            ef = transfer_evp(A, e, od, cfg, mode="a" if use_tr_a else "l2",
                              patch=patch)
            cand_cols.append(ef.columns)
            cand_prov.extend(ef.provenance)
        if use_agdsw:
            ef = agdsw_evp(patches[e.edge_id], e, cfg.tol_dir)
            cand_cols.append(ef.columns)
            cand_prov.extend(ef.provenance)

        stacked = np.hstack([c.reshape(len(e.nodes), -1) for c in cand_cols])
        edge_candidates[e.edge_id] = EdgeFunctions(e.edge_id, stacked, tuple(cand_prov))
        dim_pre += stacked.shape[1]

        if variant == "gdsw":
            basis = stacked            # plain indicator, keeps partition of unity
        else:
            # two-stage POD: first orthogonalize the eigenmode picks at
            # their natural normalization (near-duplicates and picks whose
            # energy the stronger picks already carry collapse), then merge
            # the constant edge function into the surviving basis
            picks = truncated_pod(stacked[:, 1:], cfg.tol_o)
            const = stacked[:, :1] / np.sqrt(len(e.nodes))
            basis = truncated_pod(np.hstack([const, picks]), cfg.tol_o)
        per_edge_dims[e.edge_id] = (stacked.shape[1], basis.shape[1])
        block = sp.lil_matrix((n, basis.shape[1]))
        block[e.nodes.indices, :] = basis
        col_blocks.append(block.tocsr())
        labels.extend(("edge", e.edge_id, k) for k in range(basis.shape[1]))

    for v, _ in interface.vertices:
        col_blocks.append(sp.csr_matrix(([1.0], ([v], [0])), shape=(n, 1)))
        labels.append(("vertex", v))
        dim_pre += 1

    if not col_blocks:
        raise StructuralError("coarse space is empty (no interface)")
    interface_columns = sp.hstack(col_blocks, format="csr")
    e0 = harmonic_extend(A, interface, interface_columns)

    a0 = (e0.T @ (A.tocsr() @ e0)).toarray()
    a0 = 0.5 * (a0 + a0.T)
    try:
        cholesky_factor(a0)
    except NotSPDError as err:
        raise NotSPDError(
            f"coarse matrix A0 is not SPD after POD (tol_o too small?): {err}",
            pivot=err.pivot,
        ) from err

    return CoarseSpace(
        e0=e0,
        interface_columns=interface_columns,
        labels=tuple(labels),
        variant=variant,
        dim_pre_pod=dim_pre,
        dim_post_pod=int(e0.shape[1]),
        per_edge_dims=per_edge_dims,
        edge_candidates=edge_candidates,
    )


def export_coarse_space(cs: CoarseSpace, mtx_path, labels_path) -> None:
    """Write E0 in Matrix Market form plus a sidecar label file."""
    from .sparse_core import write_matrix_market

    write_matrix_market(SparseMatrix.from_scipy(cs.e0), mtx_path)
    with open(labels_path, "w") as fh:
        fh.write("# column entity detail\n")
        for k, label in enumerate(cs.labels):
            if label[0] == "vertex":
                fh.write(f"{k} vertex node={label[1]}\n")
            else:
                fh.write(f"{k} edge id={label[1]} rank={label[2]}\n")
