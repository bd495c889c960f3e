"""Hexagonal cell layout with its backhaul graph and geometric queries.

Cells are Voronoi regions of their centres, clipped to a coverage disc.
In the hexagonal layout the cell radius is the hexagon inradius, so
neighbouring centres (and their central APs) sit two radii apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS = 1e-9


@dataclass(frozen=True)
class Cell:
    id: int
    center: tuple[float, float]
    radius: float
    controller: int
    aps: tuple[int, ...]
    neighbors: tuple[int, ...]
    coverage: float  # distance from centre beyond which the cell has no signal


@dataclass(frozen=True)
class AccessPoint:
    id: int
    position: tuple[float, float]
    cell: int


@dataclass(frozen=True)
class Link:
    id: str
    a: int
    b: int
    bandwidth: float  # bytes/ms
    latency: float  # ms

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a


@dataclass
class CellTopology:
    cells: dict[int, Cell]
    aps: dict[int, AccessPoint]
    links: dict[str, Link] = field(default_factory=dict)
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        ids = sorted(self.cells)
        self._ids = np.array(ids, dtype=int)
        self._centers = np.array([self.cells[i].center for i in ids], dtype=float).reshape(-1, 2)
        self._coverage = np.array([self.cells[i].coverage for i in ids], dtype=float)
        self._adj: dict[int, list[Link]] = {i: [] for i in ids}
        for link in sorted(self.links.values(), key=lambda l: l.id):
            self._adj[link.a].append(link)
            self._adj[link.b].append(link)
        if self.bounds is None:
            xs, ys = self._centers[:, 0], self._centers[:, 1]
            self.bounds = (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))

    @property
    def controllers(self) -> list[int]:
        return sorted({c.controller for c in self.cells.values()})

    def controller_of(self, cell: int) -> int:
        return self.cells[cell].controller

    def cell_of_controller(self, controller: int) -> int:
        for c in self.cells.values():
            if c.controller == controller:
                return c.id
        raise KeyError(controller)

    def controller_peers(self, controller: int) -> list[int]:
        """Controllers form one fully connected network."""
        return [c for c in self.controllers if c != controller]

    def incident(self, cell: int) -> list[Link]:
        return self._adj[cell]

    def validate(self) -> None:
        seen: dict[int, int] = {}
        for c in self.cells.values():
            for a in c.aps:
                if a in seen or self.aps[a].cell != c.id:
                    raise ValueError(f"AP {a} not owned by exactly one cell")
                seen[a] = c.id
            for n in c.neighbors:
                if c.id not in self.cells[n].neighbors:
                    raise ValueError(f"neighbour relation {c.id}-{n} not symmetric")
        if set(seen) != set(self.aps):
            raise ValueError("AP without a cell")
        ctrls = [c.controller for c in self.cells.values()]
        if len(set(ctrls)) != len(ctrls):
            raise ValueError("a controller serves more than one cell")

    # --- geometry -------------------------------------------------------

    def cell_at(self, p) -> int | None:
        d = np.hypot(self._centers[:, 0] - p[0], self._centers[:, 1] - p[1])
        k = int(np.argmin(d))
        if d[k] > self._coverage[k] + EPS:
            return None
        return int(self._ids[k])

    def cells_at(self, pts: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`cell_at`; -1 marks uncovered points."""
        d = np.hypot(pts[:, None, 0] - self._centers[None, :, 0],
                     pts[:, None, 1] - self._centers[None, :, 1])
        k = np.argmin(d, axis=1)
        out = self._ids[k].copy()
        out[d[np.arange(len(pts)), k] > self._coverage[k] + EPS] = -1
        return out

    def ray_exits(self, cells: np.ndarray, pts: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`ray_exit` over rows; -1 marks leaving coverage."""
        idx = np.searchsorted(self._ids, cells)
        c = self._centers[idx]  # (n, 2)
        d = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        nvec = self._centers[None, :, :] - c[:, None, :]  # (n, C, 2)
        denom = np.einsum("nk,nck->nc", d, nvec)
        half = 0.5 * ((self._centers ** 2).sum(1)[None, :] - (c ** 2).sum(1)[:, None])
        num = half - np.einsum("nk,nck->nc", pts, nvec)
        valid = denom > EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(valid, num / np.where(valid, denom, 1.0), np.inf)
        t = np.maximum(t, 0.0)
        k = np.argmin(t, axis=1)
        rows = np.arange(len(cells))
        best = t[rows, k]
        nxt = np.where(np.isfinite(best), self._ids[k], -1)
        rel = pts - c
        b = (rel * d).sum(1)
        cc = (rel ** 2).sum(1) - self._coverage[idx] ** 2
        disc = b * b - cc
        t_cov = np.where(disc >= 0, -b + np.sqrt(np.maximum(disc, 0.0)), 0.0)
        t_cov = np.maximum(t_cov, 0.0)
        leave = ~np.isfinite(best) | (t_cov < best - EPS)
        return np.where(leave, t_cov, best), np.where(leave, -1, nxt)

    def ray_exit(self, cell: int, p, theta: float) -> tuple[float, int | None]:
        """Distance along heading ``theta`` until ``p`` leaves ``cell`` and the cell entered.

        The entered cell is ``None`` when the ray leaves coverage first. Ties
        between bisectors go to the lowest cell id.
        """
        dist, nxt = self.ray_exits(np.array([cell]), np.asarray(p, dtype=float).reshape(1, 2),
                                   np.array([theta], dtype=float))
        return float(dist[0]), (None if nxt[0] < 0 else int(nxt[0]))

    def wall_distance(self, p, theta: float) -> tuple[float, bool, bool]:
        """Distance to the bounding box along ``theta`` and which walls (x, y) are hit."""
        x0, y0, x1, y1 = self.bounds
        dx, dy = math.cos(theta), math.sin(theta)
        tx = ((x1 - p[0]) / dx if dx > EPS else (x0 - p[0]) / dx if dx < -EPS else math.inf)
        ty = ((y1 - p[1]) / dy if dy > EPS else (y0 - p[1]) / dy if dy < -EPS else math.inf)
        t = max(min(tx, ty), 0.0)
        return t, abs(tx - t) <= 1e-9, abs(ty - t) <= 1e-9

    def nearest_ap(self, cell: int, p, current: int | None = None, hysteresis: float = 0.0) -> int:
        """Closest AP of ``cell``; keeps ``current`` unless another is closer by ``hysteresis``."""
        best, best_d = None, math.inf
        for a in self.cells[cell].aps:
            q = self.aps[a].position
            dd = math.hypot(q[0] - p[0], q[1] - p[1])
            if dd < best_d - EPS:
                best, best_d = a, dd
        if current is not None and current in self.cells[cell].aps and current != best:
            q = self.aps[current].position
            if math.hypot(q[0] - p[0], q[1] - p[1]) <= best_d + hysteresis:
                return current
        return best


def hex_grid(n_cells: int = 30, cols: int = 6, radius: float = 100.0, aps_per_cell: int = 3,
             ap_ring: float = 50.0, link_bandwidth: float = 1250.0,
             link_latency: float = 0.05, spacing: float | None = None) -> CellTopology:
    """Offset-row hexagonal layout with one controller per cell.

    Centres sit ``spacing`` apart (default ``2 * radius``, making ``radius``
    the hexagon inradius). With one AP per cell the AP sits at the centre;
    otherwise APs are spread on a ring of ``ap_ring`` metres around it.
    """
    pitch = 2.0 * radius if spacing is None else spacing
    centers = []
    for i in range(n_cells):
        r, c = divmod(i, cols)
        centers.append((c * pitch + (r % 2) * pitch / 2, r * pitch / 2 * math.sqrt(3.0)))
    cells: dict[int, Cell] = {}
    aps: dict[int, AccessPoint] = {}
    links: dict[str, Link] = {}
    coverage = max(radius, pitch / math.sqrt(3.0))
    for i, (x, y) in enumerate(centers):
        nbrs = tuple(j for j, (u, v) in enumerate(centers)
                     if j != i and math.hypot(u - x, v - y) <= pitch * 1.01)
        ap_ids = []
        for k in range(aps_per_cell):
            aid = i * aps_per_cell + k
            if aps_per_cell == 1:
                pos = (x, y)
            else:
                ang = math.pi / 2 + 2 * math.pi * k / aps_per_cell
                pos = (x + ap_ring * math.cos(ang), y + ap_ring * math.sin(ang))
            aps[aid] = AccessPoint(aid, pos, i)
            ap_ids.append(aid)
        cells[i] = Cell(i, (x, y), radius, i, tuple(ap_ids), nbrs, coverage)
        for j in nbrs:
            if j > i:
                lid = f"L{i:03d}-{j:03d}"
                links[lid] = Link(lid, i, j, link_bandwidth, link_latency)
    return CellTopology(cells, aps, links)
