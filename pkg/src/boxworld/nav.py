"""Walkable-grid construction, A* shortest paths, and line-of-sight queries.

The grid realizes the navigation substrate: a cell is walkable iff its centre
is on a room floor, at least agent_radius from every wall segment (door spans
excluded), and outside every floor-standing object footprint inflated by
agent_radius.  Paths are computed over 8-connected cells (no corner cutting)
and smoothed into sparse waypoints by greedy string pulling.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from . import scene as scene_mod
from .assets import AssetCatalog, default_catalog
from .defaults import AGENT_RADIUS, CELL_SIZE, REACH, SNAP_RADIUS, USER_APPROACH
from .geometry import Vec3, bearing_deg, point_rect_distance, rect_inflate

SQRT2 = math.sqrt(2.0)


class NavError(Exception):
    pass


class NoPathError(NavError):
    pass


class UnsnappableEndpointError(NavError):
    pass


class UnreachableError(NavError):
    pass


@dataclass(eq=False)
class NavGrid:
    origin: Vec3            # world position of cell (0, 0)'s min corner
    cell_size: float
    width: int              # cells along x
    height: int             # cells along z
    walkable: np.ndarray    # flat bool array, index = iz * width + ix

    def __post_init__(self):
        if self.walkable.shape != (self.width * self.height,):
            raise ValueError("walkable length must equal width*height")
        self.walkable.setflags(write=False)

    def cell_of(self, x: float, z: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin.x) / self.cell_size)),
                int(math.floor((z - self.origin.z) / self.cell_size)))

    def center_of(self, ix: int, iz: int) -> Vec3:
        return Vec3(self.origin.x + (ix + 0.5) * self.cell_size, 0.0,
                    self.origin.z + (iz + 0.5) * self.cell_size)

    def in_bounds(self, ix: int, iz: int) -> bool:
        return 0 <= ix < self.width and 0 <= iz < self.height

    def index(self, ix: int, iz: int) -> int:
        return iz * self.width + ix

    def is_walkable(self, ix: int, iz: int) -> bool:
        return self.in_bounds(ix, iz) and bool(self.walkable[iz * self.width + ix])

    def as_2d(self) -> np.ndarray:
        return self.walkable.reshape(self.height, self.width)

    def walkable_components(self) -> np.ndarray:
        """Label map (height, width); -1 for blocked cells, else component id."""
        labels = np.full((self.height, self.width), -1, dtype=np.int32)
        grid2d = self.as_2d()
        next_label = 0
        for iz in range(self.height):
            for ix in range(self.width):
                if not grid2d[iz, ix] or labels[iz, ix] >= 0:
                    continue
                stack = [(ix, iz)]
                labels[iz, ix] = next_label
                while stack:
                    cx, cz = stack.pop()
                    for dx, dz in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        nx, nz = cx + dx, cz + dz
                        if (0 <= nx < self.width and 0 <= nz < self.height
                                and grid2d[nz, nx] and labels[nz, nx] < 0):
                            labels[nz, nx] = next_label
                            stack.append((nx, nz))
                next_label += 1
        return labels


@dataclass
class Path:
    cells: list[tuple[int, int]]
    waypoints: list[Vec3]
    length: float


def build_nav_grid(scene: scene_mod.SceneSpec,
                   agent_radius: float = AGENT_RADIUS,
                   cell_size: float = CELL_SIZE,
                   catalog: AssetCatalog | None = None,
                   exclude_ids: set[int] | None = None) -> NavGrid:
    """Rasterize walkability for a scene.  exclude_ids skips held objects."""
    if not (0 < cell_size <= agent_radius + 1e-9):
        raise ValueError("cell_size must be in (0, agent_radius]")
    catalog = catalog or default_catalog()
    exclude_ids = exclude_ids or set()

    min_x = min(r.bounds[0] for r in scene.rooms)
    min_z = min(r.bounds[1] for r in scene.rooms)
    max_x = max(r.bounds[2] for r in scene.rooms)
    max_z = max(r.bounds[3] for r in scene.rooms)
    width = max(1, int(math.ceil((max_x - min_x) / cell_size - 1e-9)))
    height = max(1, int(math.ceil((max_z - min_z) / cell_size - 1e-9)))
    origin = Vec3(min_x, 0.0, min_z)

    xs = origin.x + (np.arange(width) + 0.5) * cell_size
    zs = origin.z + (np.arange(height) + 0.5) * cell_size
    cx = np.broadcast_to(xs[None, :], (height, width))
    cz = np.broadcast_to(zs[:, None], (height, width))

    on_floor = np.zeros((height, width), dtype=bool)
    for room in scene.rooms:
        x0, z0, x1, z1 = room.bounds
        on_floor |= (cx >= x0) & (cx < x1) & (cz >= z0) & (cz < z1)

    clear = np.ones((height, width), dtype=bool)
    for ax, az, bx, bz in scene_mod.wall_segments(scene):
        vx, vz = bx - ax, bz - az
        seg_len2 = vx * vx + vz * vz
        if seg_len2 <= 0.0:
            continue
        t = ((cx - ax) * vx + (cz - az) * vz) / seg_len2
        np.clip(t, 0.0, 1.0, out=t)
        dx = cx - (ax + t * vx)
        dz = cz - (az + t * vz)
        clear &= dx * dx + dz * dz >= agent_radius * agent_radius

    for obj in scene.objects:
        if obj.parent_receptacle is not None or obj.id in exclude_ids:
            continue
        fx0, fz0, fx1, fz1 = rect_inflate(
            scene_mod.world_aabb(obj, catalog).footprint(), agent_radius)
        clear &= ~((cx > fx0) & (cx < fx1) & (cz > fz0) & (cz < fz1))

    walkable = (on_floor & clear).reshape(-1)
    return NavGrid(origin=origin, cell_size=cell_size, width=width, height=height,
                   walkable=walkable)


# --- supercover line of sight ---------------------------------------------------

def _supercover(grid: NavGrid, ax: float, az: float, bx: float, bz: float):
    """Yield every cell the segment a->b touches; conservative at corners."""
    inv = 1.0 / grid.cell_size
    fx0, fz0 = (ax - grid.origin.x) * inv, (az - grid.origin.z) * inv
    fx1, fz1 = (bx - grid.origin.x) * inv, (bz - grid.origin.z) * inv
    ix, iz = int(math.floor(fx0)), int(math.floor(fz0))
    jx, jz = int(math.floor(fx1)), int(math.floor(fz1))
    yield ix, iz
    dx, dz = fx1 - fx0, fz1 - fz0
    sx = 1 if dx > 0 else -1
    sz = 1 if dz > 0 else -1
    t_dx = abs(1.0 / dx) if dx != 0.0 else math.inf
    t_dz = abs(1.0 / dz) if dz != 0.0 else math.inf
    if dx > 0:
        t_mx = (ix + 1 - fx0) * t_dx
    elif dx < 0:
        t_mx = (fx0 - ix) * t_dx
    else:
        t_mx = math.inf
    if dz > 0:
        t_mz = (iz + 1 - fz0) * t_dz
    elif dz < 0:
        t_mz = (fz0 - iz) * t_dz
    else:
        t_mz = math.inf
    limit = abs(jx - ix) + abs(jz - iz) + 4
    for _ in range(2 * limit):
        if ix == jx and iz == jz:
            return
        if abs(t_mx - t_mz) < 1e-12:
            # exact corner crossing: both adjacent cells are touched
            yield ix + sx, iz
            yield ix, iz + sz
            ix += sx
            iz += sz
            t_mx += t_dx
            t_mz += t_dz
        elif t_mx < t_mz:
            ix += sx
            t_mx += t_dx
        else:
            iz += sz
            t_mz += t_dz
        yield ix, iz


def line_of_sight(grid: NavGrid, a: Vec3, b: Vec3) -> bool:
    """True iff every cell touched by segment a->b is walkable."""
    for ix, iz in _supercover(grid, a.x, a.z, b.x, b.z):
        if not grid.is_walkable(ix, iz):
            return False
    return True


def _corridor_clear(grid: NavGrid, a: Vec3, b: Vec3) -> bool:
    """Line of sight with body width: the centre line plus two parallel lines
    offset just under half a cell must all run through walkable cells.

    Plain cell-centre visibility lets a smoothed segment shave the corner of
    an inflated obstacle (the cells are walkable but the swept circle is not
    clear); the offset lines reject those shaves while still passing through
    one-cell-wide corridors.
    """
    if not line_of_sight(grid, a, b):
        return False
    dx, dz = b.x - a.x, b.z - a.z
    length = math.hypot(dx, dz)
    if length < 1e-9:
        return True
    off = grid.cell_size * 0.496
    ox, oz = -dz / length * off, dx / length * off
    return (line_of_sight(grid, Vec3(a.x + ox, 0.0, a.z + oz),
                          Vec3(b.x + ox, 0.0, b.z + oz))
            and line_of_sight(grid, Vec3(a.x - ox, 0.0, a.z - oz),
                              Vec3(b.x - ox, 0.0, b.z - oz)))


def _cells_los(grid: NavGrid, c0: tuple[int, int], c1: tuple[int, int]) -> bool:
    a = grid.center_of(*c0)
    b = grid.center_of(*c1)
    return _corridor_clear(grid, a, b)


# --- A* --------------------------------------------------------------------------

_NEIGHBORS = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
              (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


def _octile(ax: int, az: int, bx: int, bz: int) -> float:
    dx, dz = abs(ax - bx), abs(az - bz)
    return (dx + dz) + (SQRT2 - 2.0) * min(dx, dz)


def astar_cells(grid: NavGrid, start: tuple[int, int],
                goal: tuple[int, int]) -> tuple[list[tuple[int, int]], float] | None:
    """Optimal route over the grid, or None.  Cost units are cells."""
    if start == goal:
        return [start], 0.0
    width = grid.width
    walk = grid.walkable
    start_idx = grid.index(*start)
    goal_idx = grid.index(*goal)
    n = width * grid.height
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=bool)
    g[start_idx] = 0.0
    h0 = _octile(start[0], start[1], goal[0], goal[1])
    heap: list[tuple[float, float, int]] = [(h0, h0, start_idx)]
    gx, gz = goal
    while heap:
        f, h, idx = heapq.heappop(heap)
        if closed[idx]:
            continue
        if idx == goal_idx:
            route = []
            cur = idx
            while cur >= 0:
                route.append((cur % width, cur // width))
                cur = parent[cur]
            route.reverse()
            return route, float(g[idx])
        closed[idx] = True
        ix, iz = idx % width, idx // width
        base = g[idx]
        for dx, dz, cost in _NEIGHBORS:
            nx, nz = ix + int(dx), iz + int(dz)
            if not (0 <= nx < width and 0 <= nz < grid.height):
                continue
            nidx = nz * width + nx
            if not walk[nidx] or closed[nidx]:
                continue
            if dx != 0 and dz != 0:
                # no corner cutting: both orthogonal neighbours must be open
                if not (walk[iz * width + nx] and walk[nz * width + ix]):
                    continue
            ng = base + cost
            if ng < g[nidx]:
                g[nidx] = ng
                parent[nidx] = idx
                nh = _octile(nx, nz, gx, gz)
                heapq.heappush(heap, (ng + nh, nh, nidx))
    return None


def snap_to_walkable(grid: NavGrid, p: Vec3,
                     radius: float = SNAP_RADIUS) -> tuple[int, int]:
    """Nearest walkable cell within radius of p; ties by cell index."""
    ix, iz = grid.cell_of(p.x, p.z)
    if grid.is_walkable(ix, iz):
        return ix, iz
    span = int(math.ceil(radius / grid.cell_size)) + 1
    best = None
    for cz in range(iz - span, iz + span + 1):
        for cx in range(ix - span, ix + span + 1):
            if not grid.is_walkable(cx, cz):
                continue
            c = grid.center_of(cx, cz)
            d = (c.x - p.x) ** 2 + (c.z - p.z) ** 2
            if d > radius * radius:
                continue
            key = (d, grid.index(cx, cz))
            if best is None or key < best[0]:
                best = (key, (cx, cz))
    if best is None:
        raise UnsnappableEndpointError(
            f"no walkable cell within {radius} m of ({p.x:.2f}, {p.z:.2f})")
    return best[1]


def smooth_path(grid: NavGrid, cells: list[tuple[int, int]]) -> list[Vec3]:
    """Greedy string pulling over the route; returns cell-centre waypoints."""
    if not cells:
        return []
    if len(cells) <= 2:
        return [grid.center_of(*c) for c in cells]
    anchors = [cells[0]]
    i = 0
    while i < len(cells) - 1:
        j = len(cells) - 1
        while j > i + 1 and not _cells_los(grid, cells[i], cells[j]):
            j -= 1
        anchors.append(cells[j])
        i = j
    return [grid.center_of(*c) for c in anchors]


def find_path(grid: NavGrid, start: Vec3, goal: Vec3) -> Path:
    """A* route from start to goal (both snapped), smoothed into waypoints."""
    start_cell = snap_to_walkable(grid, start)
    goal_cell = snap_to_walkable(grid, goal)
    result = astar_cells(grid, start_cell, goal_cell)
    if result is None:
        raise NoPathError(f"no route from cell {start_cell} to {goal_cell}")
    cells, _cost = result
    waypoints = smooth_path(grid, cells)
    length = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        length += math.hypot(b.x - a.x, b.z - a.z)
    return Path(cells=cells, waypoints=waypoints, length=length)


# --- standing spots ----------------------------------------------------------------

def interaction_point(scene: scene_mod.SceneSpec, grid: NavGrid, object_id: int,
                      reach: float = REACH,
                      catalog: AssetCatalog | None = None) -> tuple[Vec3, float]:
    """Walkable standing spot (position, yaw) from which the object is usable.

    Nearest walkable cell whose horizontal distance to the object's AABB is at
    most reach and which has grid line of sight to the point under the object
    centre; the object's own blocking footprint (its floor-standing root) is
    exempt from the sight test.  Ties break on cell index.
    """
    catalog = catalog or default_catalog()
    obj = scene.object_by_id(object_id)
    box = scene_mod.world_aabb(obj, catalog)
    rect = box.footprint()
    target = Vec3(obj.position.x, 0.0, obj.position.z)

    root = obj
    for rid in scene_mod.receptacle_chain(scene, object_id):
        root = scene.object_by_id(rid)
    exempt = None
    if root.parent_receptacle is None:
        exempt = rect_inflate(scene_mod.world_aabb(root, catalog).footprint(),
                              AGENT_RADIUS)

    lo_x, lo_z, hi_x, hi_z = rect_inflate(rect, reach)
    ix0, iz0 = grid.cell_of(lo_x, lo_z)
    ix1, iz1 = grid.cell_of(hi_x, hi_z)
    candidates = []
    for iz in range(max(0, iz0), min(grid.height, iz1 + 1)):
        for ix in range(max(0, ix0), min(grid.width, ix1 + 1)):
            if not grid.is_walkable(ix, iz):
                continue
            c = grid.center_of(ix, iz)
            d = point_rect_distance(c.x, c.z, rect)
            if d <= reach:
                candidates.append((d, grid.index(ix, iz), c))
    candidates.sort(key=lambda t: (t[0], t[1]))
    for _d, _idx, c in candidates:
        if _sight_with_exemption(grid, c, target, exempt):
            yaw = bearing_deg(c.x, c.z, obj.position.x, obj.position.z)
            return c, yaw
    raise UnreachableError(f"object {object_id} has no reachable standing spot")


def _sight_with_exemption(grid: NavGrid, a: Vec3, b: Vec3, exempt) -> bool:
    for ix, iz in _supercover(grid, a.x, a.z, b.x, b.z):
        if grid.is_walkable(ix, iz):
            continue
        if exempt is not None and grid.in_bounds(ix, iz):
            c = grid.center_of(ix, iz)
            if exempt[0] < c.x < exempt[2] and exempt[1] < c.z < exempt[3]:
                continue
        return False
    return True


def user_approach_point(grid: NavGrid, user_pos: Vec3,
                        min_dist: float = 0.6,
                        max_dist: float = USER_APPROACH,
                        from_pos: Vec3 | None = None) -> tuple[Vec3, float]:
    """Walkable cell within (min_dist, max_dist] of the user.

    With from_pos given, candidates on that side are preferred, so the
    approach does not route through the user's own body.
    """
    span = int(math.ceil(max_dist / grid.cell_size)) + 1
    ux, uz = grid.cell_of(user_pos.x, user_pos.z)
    candidates = []
    for iz in range(uz - span, uz + span + 1):
        for ix in range(ux - span, ux + span + 1):
            if not grid.is_walkable(ix, iz):
                continue
            c = grid.center_of(ix, iz)
            d = math.hypot(c.x - user_pos.x, c.z - user_pos.z)
            if min_dist < d <= max_dist:
                rank = c.planar_distance(from_pos) if from_pos is not None else d
                candidates.append((rank, grid.index(ix, iz), c))
    candidates.sort(key=lambda t: (t[0], t[1]))
    for _d, _idx, c in candidates:
        if line_of_sight(grid, c, Vec3(user_pos.x, 0.0, user_pos.z)):
            yaw = bearing_deg(c.x, c.z, user_pos.x, user_pos.z)
            return c, yaw
    raise UnreachableError("no approachable cell near the user")


def with_blocked_circle(grid: NavGrid, x: float, z: float, radius: float) -> NavGrid:
    """Copy of the grid with cells whose centre is inside the circle blocked.

    Used by planners to treat the user avatar as an obstacle; the base grid
    keeps its scene-only contract.
    """
    xs = grid.origin.x + (np.arange(grid.width) + 0.5) * grid.cell_size
    zs = grid.origin.z + (np.arange(grid.height) + 0.5) * grid.cell_size
    dx = np.broadcast_to(xs[None, :], (grid.height, grid.width)) - x
    dz = np.broadcast_to(zs[:, None], (grid.height, grid.width)) - z
    inside = (dx * dx + dz * dz) < radius * radius
    walkable = grid.walkable.copy()
    walkable.setflags(write=True)
    walkable &= ~inside.reshape(-1)
    return NavGrid(origin=grid.origin, cell_size=grid.cell_size,
                   width=grid.width, height=grid.height, walkable=walkable)


def dump_pgm(grid: NavGrid) -> bytes:
    """Debug image of the grid: walkable cells white, blocked black."""
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    img = np.where(grid.as_2d(), 255, 0).astype(np.uint8)
    return header + img.tobytes()
