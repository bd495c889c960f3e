import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bchandover.topology import hex_grid

TOPO = hex_grid(30, 6, 100.0, 3, 50.0, spacing=200.0)


def test_grid_shape():
    assert len(TOPO.cells) == 30 and len(TOPO.aps) == 90
    assert TOPO.controllers == list(range(30))
    TOPO.validate()
    for c in TOPO.cells.values():
        for n in c.neighbors:
            d = math.dist(c.center, TOPO.cells[n].center)
            assert d == pytest.approx(200.0)
    inner = [c for c in TOPO.cells.values() if len(c.neighbors) == 6]
    assert len(inner) == 12
    assert len(TOPO.cells[0].neighbors) == 2


def test_aps_sit_in_their_cell():
    for ap in TOPO.aps.values():
        assert TOPO.cell_at(ap.position) == ap.cell


def test_single_ap_at_centre():
    t = hex_grid(4, 2, 100.0, 1)
    assert all(t.aps[c].position == t.cells[c].center for c in t.cells)


def test_cells_at_matches_scalar():
    rng = np.random.default_rng(0)
    x0, y0, x1, y1 = TOPO.bounds
    pts = np.column_stack([rng.uniform(x0 - 50, x1 + 50, 400), rng.uniform(y0 - 50, y1 + 50, 400)])
    vec = TOPO.cells_at(pts)
    scalar = [TOPO.cell_at(p) for p in pts]
    assert [(-1 if s is None else s) for s in scalar] == vec.tolist()


def test_bounding_box_is_covered():
    x0, y0, x1, y1 = TOPO.bounds
    g = np.stack(np.meshgrid(np.linspace(x0, x1, 60), np.linspace(y0, y1, 40)), -1).reshape(-1, 2)
    assert (TOPO.cells_at(g) >= 0).all()


def test_known_ray_exit():
    dist, nxt = TOPO.ray_exit(0, (0.0, 0.0), 0.0)
    assert dist == pytest.approx(100.0) and nxt == 1
    dist, nxt = TOPO.ray_exit(0, (0.0, 0.0), math.pi)
    assert nxt is None and dist == pytest.approx(200.0 / math.sqrt(3.0))


@given(cell=st.integers(0, 29), r=st.floats(0.0, 0.9), phi=st.floats(0.0, 2 * math.pi),
       theta=st.floats(0.0, 2 * math.pi))
def test_ray_exit_agrees_with_marching(cell, r, phi, theta):
    """Walk the ray in 0.05 m steps and find where the containing cell changes."""
    c = TOPO.cells[cell]
    p = (c.center[0] + r * 100.0 * math.cos(phi), c.center[1] + r * 100.0 * math.sin(phi))
    dist, nxt = TOPO.ray_exit(cell, p, theta)
    step = 0.05
    s = np.arange(0.0, 260.0, step)
    pts = np.column_stack([p[0] + s * math.cos(theta), p[1] + s * math.sin(theta)])
    owner = TOPO.cells_at(pts)
    change = int(np.argmax(owner != cell))
    assert owner[change] != cell
    assert abs(s[change] - dist) <= step + 1e-6
    if abs(s[change] - dist) < step - 1e-3 and owner[min(change + 1, len(s) - 1)] == owner[change]:
        assert (-1 if nxt is None else nxt) == owner[change]


def test_wall_distance_flags():
    x0, y0, x1, y1 = TOPO.bounds
    t, hx, hy = TOPO.wall_distance((x0 + 10, y0 + 10), math.pi)
    assert t == pytest.approx(10.0) and hx and not hy
    t, hx, hy = TOPO.wall_distance((x0 + 10, y0 + 10), -math.pi / 2)
    assert t == pytest.approx(10.0) and hy and not hx


def test_nearest_ap_hysteresis():
    cell = TOPO.cells[7]
    a, b = cell.aps[0], cell.aps[1]
    pa, pb = np.array(TOPO.aps[a].position), np.array(TOPO.aps[b].position)
    mid = (pa + pb) / 2 + (pb - pa) * 0.02  # slightly closer to b
    assert TOPO.nearest_ap(7, mid) == b
    assert TOPO.nearest_ap(7, mid, current=a, hysteresis=5.0) == a
    assert TOPO.nearest_ap(7, mid, current=a, hysteresis=0.0) == b


def test_links_follow_adjacency():
    for link in TOPO.links.values():
        assert link.b in TOPO.cells[link.a].neighbors
        assert link.other(link.a) == link.b and link.other(link.b) == link.a
    assert sum(len(c.neighbors) for c in TOPO.cells.values()) == 2 * len(TOPO.links)
