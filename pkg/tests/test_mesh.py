import numpy as np
import pytest

from ndlod.mesh import MeshHierarchy, build_initial_mesh, build_patch, refine_uniform


def test_initial_mesh_counts():
    m = build_initial_mesh()
    assert m.n_triangles == 2
    assert m.n_vertices == 4
    assert m.n_facets == 5
    assert abs(m.areas.sum() - 1.0) < 1e-12


def test_refine_counts():
    m = build_initial_mesh()
    f, _ = refine_uniform(m)
    assert f.n_triangles == 8
    assert f.n_facets == 16  # enumerated: 10 split halves + 2 x 3 interior edges
    ff, _ = refine_uniform(f)
    assert ff.n_triangles == 32


def test_area_preserved_and_H_halves():
    m = build_initial_mesh()
    for _ in range(4):
        f, _ = refine_uniform(m)
        assert abs(f.areas.sum() - 1.0) < 1e-12
        assert abs(f.H - 0.5 * m.H) < 1e-14
        m = f


def test_six_refinements_reach_paper_coarse_hierarchy():
    h = MeshHierarchy(7)
    side = h.levels[6].H / np.sqrt(2.0)
    assert abs(side - 2.0**-6) < 1e-14


def test_facet_adjacency_and_normals():
    h = MeshHierarchy(4)
    for m in h.levels:
        n_adj = (m.facet_to_elements >= 0).sum(axis=1)
        assert np.all(n_adj[m.boundary_facets] == 1)
        assert np.all(n_adj[~m.boundary_facets] == 2)
        assert np.abs(np.linalg.norm(m.facet_normals, axis=1) - 1.0).max() < 1e-14
        # interior normals point lower -> higher indexed element
        inter = ~m.boundary_facets
        c = m.centroids
        f2e = m.facet_to_elements[inter]
        d = c[f2e[:, 1]] - c[f2e[:, 0]]
        assert np.all(np.einsum("ij,ij->i", m.facet_normals[inter], d) > 0)
        # boundary normals point out of the unit square
        for F in np.flatnonzero(m.boundary_facets):
            mid = m.vertices[m.facets[F]].mean(axis=0)
            out = mid + 1e-3 * m.facet_normals[F]
            assert np.any((out < 0) | (out > 1))


def test_quasi_uniformity():
    h = MeshHierarchy(5)
    for m in h.levels:
        p = m.vertices[m.triangles]
        d = np.maximum(
            np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
            np.maximum(np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                       np.linalg.norm(p[:, 2] - p[:, 0], axis=1)))
        assert d.max() / d.min() < 1.0 + 1e-12  # congruent triangles per level


def test_hierarchy_tiling_lengths():
    h = MeshHierarchy(5)
    for fine_lvl in (2, 3, 4):
        coarse = h.levels[1]
        fine = h.levels[fine_lvl]
        tiles = h.facet_tiling(1, fine_lvl)
        for F in range(coarse.n_facets):
            assert abs(fine.facet_lengths[tiles[F]].sum() - coarse.facet_lengths[F]) < 1e-12


def test_ancestor_partition():
    h = MeshHierarchy(5)
    anc = h.triangle_ancestors(1, 4)
    counts = np.bincount(anc, minlength=h.levels[1].n_triangles)
    assert np.all(counts == 4 ** 3)
    areas = np.zeros(h.levels[1].n_triangles)
    np.add.at(areas, anc, h.levels[4].areas)
    assert np.abs(areas - h.levels[1].areas).max() < 1e-12


def _patch_elements_oracle(mesh, T, order):
    """Brute-force node-sharing closure."""
    elems = {T}
    for _ in range(order):
        nodes = {v for t in elems for v in mesh.triangles[t]}
        elems |= {t for t in range(mesh.n_triangles)
                  if nodes & set(mesh.triangles[t])}
    return np.array(sorted(elems))


def test_patch_order_zero_and_growth():
    h = MeshHierarchy(4)
    m = h.levels[3]
    p0 = build_patch(m, 17, 0)
    assert p0.elements.tolist() == [17]
    prev = p0.elements
    for ell in range(1, 5):
        p = build_patch(m, 17, ell)
        assert set(prev).issubset(set(p.elements))
        prev = p.elements


def test_patch_matches_adjacency_oracle():
    h = MeshHierarchy(4)
    m = h.levels[3]
    for T in (0, 17, 60, 100):
        for ell in (1, 2):
            assert build_patch(m, T, ell).elements.tolist() == \
                _patch_elements_oracle(m, T, ell).tolist()


def test_patch_saturation():
    h = MeshHierarchy(3)
    m = h.levels[2]
    p = build_patch(m, 5, m.n_triangles)
    assert p.saturated
    assert p.elements.size == m.n_triangles
    assert p.active_facets.size == m.n_facets


def test_patch_active_facets_exclude_artificial_boundary():
    h = MeshHierarchy(4)
    m = h.levels[3]
    p = build_patch(m, 40, 1)
    in_patch = np.zeros(m.n_triangles, dtype=bool)
    in_patch[p.elements] = True
    for F in p.active_facets:
        adj = m.facet_to_elements[F]
        adj = adj[adj >= 0]
        assert in_patch[adj].all()
    # every patch facet on the domain boundary stays active
    for F in range(m.n_facets):
        adj = m.facet_to_elements[F]
        if m.boundary_facets[F] and in_patch[adj[0]]:
            assert F in p.active_facets


def test_invalid_element_id():
    m = build_initial_mesh()
    with pytest.raises(ValueError):
        build_patch(m, 7, 1)


def test_text_serialization_roundtrip_fields():
    m = build_initial_mesh()
    text = m.to_text()
    assert text.count("\nv ") == 4
    assert text.count("\nt ") == 2
    assert text.count("\nf ") == 5
