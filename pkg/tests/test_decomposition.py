import numpy as np
import pytest

from schwarzkit.decomposition import (
    Partition,
    build_oversampling,
    classify_interface,
    grow_overlap,
    read_partition,
    structured_partition,
    write_partition,
)
from schwarzkit.fe_harness import StructuredMesh, assemble, make_coefficient
from schwarzkit.sparse_core import StructuralError, cholesky_factor, extract_submatrix


def _paper_problem(n=40, s=4):
    mesh = StructuredMesh(n)
    alpha = make_coefficient("constant", mesh, 1.0)
    system = assemble(mesh, alpha)
    part = structured_partition(n, s)
    return system, part


class TestStructuredPartition:
    def test_counts(self):
        part = structured_partition(40, 4)
        assert part.n_subdomains == 16
        assert part.n_nodes == 39**2

    def test_single_subdomain_no_interface(self):
        system, _ = _paper_problem(8, 2)
        part = structured_partition(8, 1)
        iface = classify_interface(system.A, part)
        assert len(iface.edges) == 0 and len(iface.vertices) == 0
        assert len(iface.interior) == system.A.n_rows

    def test_non_divisible_raises(self):
        with pytest.raises(StructuralError):
            structured_partition(10, 3)


class TestClassifyInterface:
    def test_paper_4x4_counts(self):
        system, part = _paper_problem(40, 4)
        iface = classify_interface(system.A, part)
        assert len(iface.edges) == 24
        assert all(len(e.nodes) == 9 for e in iface.edges)
        assert len(iface.vertices) == 9
        # GDSW dimension 24 + 9 = 33 (paper table)
        assert len(iface.edges) + len(iface.vertices) == 33

    def test_paper_6x6_counts(self):
        system, part = _paper_problem(60, 6)
        iface = classify_interface(system.A, part)
        assert len(iface.edges) == 60
        assert len(iface.vertices) == 25
        assert len(iface.edges) + len(iface.vertices) == 85

    def test_two_subdomain_strip(self):
        system, _ = _paper_problem(8, 2)
        part = structured_partition(8, 2)
        # overwrite: 1 x 2 strip decomposition by x-halves
        owner = np.where((np.arange(49) % 7) < 3, 0, 1)
        strip = Partition(owner, 2)
        iface = classify_interface(system.A, strip)
        assert len(iface.edges) == 1
        assert len(iface.vertices) == 0

    def test_small_cross(self):
        system, part = _paper_problem(4, 2)
        iface = classify_interface(system.A, part)
        assert len(iface.vertices) == 1
        assert iface.vertices[0][0] == 4  # center node of the 3x3 free grid
        assert len(iface.edges) == 4

    def test_partition_of_free_dofs(self):
        system, part = _paper_problem(20, 2)
        iface = classify_interface(system.A, part)
        pieces = [iface.interior.indices]
        pieces += [e.nodes.indices for e in iface.edges]
        pieces.append(np.array([v for v, _ in iface.vertices], dtype=np.int64))
        combined = np.concatenate(pieces)
        assert len(combined) == len(set(combined.tolist())) == system.A.n_rows

    def test_edge_multiplicity_semantics(self):
        system, part = _paper_problem(20, 2)
        iface = classify_interface(system.A, part)
        for e in iface.edges:
            assert len(e.subdomains) == 2
        for _, subs in iface.vertices:
            assert len(subs) >= 3


class TestGrowOverlap:
    def test_zero_layers_is_closure(self):
        system, part = _paper_problem(40, 4)
        ov0 = grow_overlap(system.A, part, 0)
        # interior subdomain closure is an 11 x 11 node patch
        sizes = sorted(len(s) for s in ov0.sets)
        assert sizes[-1] == 121

    def test_one_layer_patch(self):
        system, part = _paper_problem(40, 4)
        ov1 = grow_overlap(system.A, part, 1)
        assert max(len(s) for s in ov1.sets) == 169  # 13 x 13
        assert ov1.max_multiplicity == 4

    def test_monotone_nesting(self):
        system, part = _paper_problem(20, 2)
        ov1 = grow_overlap(system.A, part, 1)
        ov2 = grow_overlap(system.A, part, 2)
        for s1, s2 in zip(ov1.sets, ov2.sets):
            assert set(s1.indices).issubset(set(s2.indices))

    def test_coverage(self):
        system, part = _paper_problem(20, 4)
        ov = grow_overlap(system.A, part, 1)
        covered = np.zeros(system.A.n_rows, dtype=bool)
        for s in ov.sets:
            covered[s.indices] = True
        assert covered.all()


class TestOversampling:
    def test_layer_counts_and_structure(self):
        system, part = _paper_problem(40, 4)
        iface = classify_interface(system.A, part)
        edge = iface.edges[0]
        for k in (2, 5):
            od = build_oversampling(system.A, iface, edge.edge_id, ("layers", k))
            assert set(edge.nodes.indices).issubset(set(od.interior.indices))
            assert np.intersect1d(od.interior.indices, od.boundary.indices).size == 0
            # A restricted to the interior stays SPD
            block = extract_submatrix(system.A, od.interior, od.interior)
            cholesky_factor(block)
            # complement = interior minus the edge
            assert len(od.complement) == len(od.interior) - len(edge.nodes)

    def test_hull_is_six_subdomains_interior_edge(self):
        system, part = _paper_problem(40, 4)
        iface = classify_interface(system.A, part)
        # pick an interior edge: both endpoint vertices present
        edge = next(e for e in iface.edges if len(e.endpoint_vertices) == 2)
        od = build_oversampling(system.A, iface, edge.edge_id, ("hull",))
        touching = [
            i for i, cl in enumerate(iface.closures)
            if np.intersect1d(
                cl.indices,
                np.union1d(edge.nodes.indices, np.asarray(edge.endpoint_vertices)),
            ).size
        ]
        assert len(touching) == 6
        union = np.unique(np.concatenate(
            [iface.closures[i].indices for i in touching]))
        np.testing.assert_array_equal(od.all_nodes.indices, union)

    def test_min_layers_enforced(self):
        system, part = _paper_problem(20, 2)
        iface = classify_interface(system.A, part)
        with pytest.raises(StructuralError):
            build_oversampling(system.A, iface, 0, ("layers", 1))

    def test_unknown_edge(self):
        system, part = _paper_problem(20, 2)
        iface = classify_interface(system.A, part)
        with pytest.raises(StructuralError):
            build_oversampling(system.A, iface, 999, ("layers", 2))

    def test_boundary_edge_drops_global_boundary(self):
        # an edge next to the global boundary: its oversampling boundary
        # contains only free dofs, the Dirichlet side is simply absent
        system, part = _paper_problem(20, 2)
        iface = classify_interface(system.A, part)
        for e in iface.edges:
            od = build_oversampling(system.A, iface, e.edge_id, ("layers", 2))
            assert od.boundary.indices.max() < system.A.n_rows
            assert od.boundary.indices.min() >= 0


def test_partition_roundtrip(tmp_path):
    part = structured_partition(12, 3)
    path = tmp_path / "p.part"
    write_partition(part, path)
    back = read_partition(path)
    np.testing.assert_array_equal(back.owner, part.owner)
    assert back.n_subdomains == part.n_subdomains


def test_partition_file_validation(tmp_path):
    path = tmp_path / "bad.part"
    path.write_text("0 0\n2 1\n")  # node 1 missing
    with pytest.raises(StructuralError):
        read_partition(path)
