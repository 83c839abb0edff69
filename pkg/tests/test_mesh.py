import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dppsim.mesh import (
    MeshError,
    boundary_edges_on_side,
    boundary_vertices_on_side,
    build_mesh,
    export_mesh,
    generate_unit_square_mesh,
    import_mesh,
)


def test_default_mesh_counts():
    m = generate_unit_square_mesh(20, 20)
    assert (m.n_vertices, m.n_triangles, m.n_edges, len(m.boundary_facets)) == (441, 800, 1240, 80)


def test_single_cell():
    m = generate_unit_square_mesh(1, 1)
    assert m.n_triangles == 2 and m.n_vertices == 4 and m.n_edges == 5
    assert {f.side for f in m.boundary_facets} == {"left", "right", "bottom", "top"}


@pytest.mark.parametrize("nx, ny", [(0, 3), (3, 0), (-1, 1), (1.5, 2)])
def test_rejects_bad_counts(nx, ny):
    with pytest.raises(MeshError):
        generate_unit_square_mesh(nx, ny)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12))
def test_structure(nx, ny):
    m = generate_unit_square_mesh(nx, ny)
    areas = m.signed_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(1.0, abs=1e-13)
    # Euler characteristic of a disk
    assert m.n_vertices - m.n_edges + m.n_triangles == 1
    for side, count in (("left", ny), ("right", ny), ("bottom", nx), ("top", nx)):
        assert len(boundary_edges_on_side(m, side)) == count
        assert len(boundary_vertices_on_side(m, side)) == count + 1
    for f in m.boundary_facets:
        a, b = m.edges[f.edge]
        mid = 0.5 * (m.vertices[a] + m.vertices[b])
        inside = mid - 0.1 * np.array(f.normal) / max(nx, ny)
        assert np.all((inside > 0) & (inside < 1))


def test_validation():
    with pytest.raises(MeshError, match="clockwise"):
        build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    with pytest.raises(MeshError, match="outside"):
        build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])
    with pytest.raises(MeshError, match="unit square"):
        build_mesh([[0, 0], [0.5, 0.1], [0, 1]], [[0, 1, 2]])


def test_export_import_round_trip():
    m = generate_unit_square_mesh(7, 3)
    text = export_mesh(m)
    assert text.startswith("dppmesh 1\n")
    assert import_mesh(text) == m
    assert export_mesh(import_mesh(text)) == text


@pytest.mark.parametrize("text", ["", "mesh\n1 1\n", "dppmesh 1\n3 1\n0 0\n1 0\n", "dppmesh 1\n3 1\n0 0\n1 0\n0 1\n0 1 7\n"])
def test_import_errors(text):
    with pytest.raises(MeshError):
        import_mesh(text)
