"""Procedural scene generation.

Layout comes from recursive binary splits of the house square, doors from a
spanning tree over room adjacency, furniture from rejection sampling with a
wall bias for large receptacles, and small objects from receptacle top
surfaces.  Everything draws from a SplitMix64 stream seeded by the caller, so
generate_house is a pure function of (seed, config, constraints).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import nav, taskgen
from .assets import AssetCatalog, AssetSpec, default_catalog
from .clients import ClientError
from .defaults import AGENT_RADIUS
from .geometry import (Rect, Vec3, circle_rect_intersects, rect_inflate,
                       rects_overlap_strict, rotated_footprint_half_extents)
from .rng import SplitMix64
from .scene import (Door, ObjectInstance, Pose, Room, SceneSpec, load_scene,
                    scene_hash)
from .taskgen import TaskInstance, TaskTemplate
from .validate import validate_scene

MIN_ROOM_SIDE = 2.0
DOOR_CORNER_MARGIN = 0.6
DOOR_CLEARANCE = 0.5
SPLIT_LO, SPLIT_HI = 0.35, 0.65
WALL_BIAS = 0.75           # probability a large receptacle goes against a wall
LARGE_FOOTPRINT = 0.5      # m^2 threshold for the wall bias
PLACE_GAP = 0.02           # breathing room between furniture and walls/furniture
SPAWN_SEPARATION = 2.5     # preferred agent/user spawn distance (falls back to 1.0)

ROOM_KINDS = ("livingroom", "bedroom", "kitchen", "study")

KIND_FURNITURE: dict[str, list[str]] = {
    "livingroom": ["sofa_fabric", "sofa_leather", "table_coffee", "tv_stand_wide",
                   "shelf_low", "armchair_green", "lamp_floor", "plant_potted"],
    "bedroom": ["bed_double", "bed_single", "nightstand_small", "wardrobe_tall",
                "desk_office", "chair_office", "lamp_floor"],
    "kitchen": ["fridge_tall", "counter_kitchen", "table_dining", "cabinet_drawer",
                "chair_dining", "plant_potted"],
    "study": ["desk_office", "shelf_low", "chair_office", "table_coffee",
              "lamp_floor", "plant_potted", "armchair_green"],
}

KIND_RECEPTACLES: dict[str, list[str]] = {
    "livingroom": ["sofa_fabric", "table_coffee", "tv_stand_wide", "shelf_low"],
    "bedroom": ["bed_double", "nightstand_small", "desk_office"],
    "kitchen": ["counter_kitchen", "table_dining"],
    "study": ["desk_office", "shelf_low", "table_coffee"],
}


def _q(value: float) -> float:
    """Quantize to the serialization precision so round-trips are lossless."""
    return round(value, 6)


class GenerationFailed(Exception):
    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        super().__init__(f"generation starved at stage '{stage}'"
                         + (f": {detail}" if detail else ""))


class UnsatisfiableConstraint(Exception):
    pass


class _Retry(Exception):
    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        self.detail = detail
        super().__init__(stage)


@dataclass
class ProcGenConfig:
    room_count: int = 1
    house_extent: float = 6.0
    furniture_per_room: tuple[int, int] = (2, 4)
    small_objects_per_room: tuple[int, int] = (1, 3)
    max_placement_attempts: int = 100

    def __post_init__(self):
        if not 1 <= self.room_count <= 4:
            raise ValueError("room_count must be 1..4")
        if not 6.0 <= self.house_extent <= 16.0:
            raise ValueError("house_extent must be within [6, 16] metres")
        if self.house_extent ** 2 < self.room_count * 4.0:
            raise ValueError("house too small for the requested rooms")
        for name in ("furniture_per_room", "small_objects_per_room"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} range is empty")
        if self.max_placement_attempts < 1:
            raise ValueError("max_placement_attempts must be >= 1")


def config_for_rooms(rooms: int) -> ProcGenConfig:
    extent = {1: 6.0, 2: 8.0, 3: 10.0, 4: 12.0}[rooms]
    return ProcGenConfig(room_count=rooms, house_extent=extent)


@dataclass
class PlacementConstraint:
    required_asset: str
    required_receptacle: str | None = None
    room_kind: str | None = None


def _check_constraints(constraints: list[PlacementConstraint],
                       catalog: AssetCatalog) -> None:
    for c in constraints:
        if c.required_asset not in catalog:
            raise UnsatisfiableConstraint(f"unknown asset {c.required_asset!r}")
        if c.required_receptacle is not None:
            if c.required_receptacle not in catalog:
                raise UnsatisfiableConstraint(f"unknown receptacle {c.required_receptacle!r}")
            rspec = catalog.get(c.required_receptacle)
            if not rspec.is_receptacle:
                raise UnsatisfiableConstraint(
                    f"{c.required_receptacle!r} is not a receptacle")
            if rspec.placement != "floor":
                raise UnsatisfiableConstraint(
                    f"{c.required_receptacle!r} cannot stand on the floor")
        spec = catalog.get(c.required_asset)
        if spec.placement == "surface" and c.required_receptacle is None:
            # needs some receptacle; the generator always provides one per room
            pass
        if c.room_kind is not None and c.room_kind not in ROOM_KINDS:
            raise UnsatisfiableConstraint(f"unknown room kind {c.room_kind!r}")


# --- layout -----------------------------------------------------------------------

def _split_rooms(rng: SplitMix64, extent: float, room_count: int) -> list[Rect]:
    rects: list[Rect] = [(0.0, 0.0, extent, extent)]
    while len(rects) < room_count:
        # split the largest rect along its longer side
        idx = max(range(len(rects)), key=lambda i: (
            (rects[i][2] - rects[i][0]) * (rects[i][3] - rects[i][1]), -i))
        x0, z0, x1, z1 = rects.pop(idx)
        w, d = x1 - x0, z1 - z0
        frac = rng.uniform(SPLIT_LO, SPLIT_HI)
        if w >= d:
            cut = _q(x0 + w * frac)
            first, second = (x0, z0, cut, z1), (cut, z0, x1, z1)
        else:
            cut = _q(z0 + d * frac)
            first, second = (x0, z0, x1, cut), (x0, cut, x1, z1)
        rects.insert(idx, second)
        rects.insert(idx, first)
    for r in rects:
        if (r[2] - r[0]) * (r[3] - r[1]) < 4.0 or min(r[2] - r[0], r[3] - r[1]) < MIN_ROOM_SIDE:
            raise _Retry("layout", "undersized room")
    return rects


def _shared_interval(a: Rect, b: Rect):
    """(vertical, fixed, lo, hi) of the shared wall between two rects, or None."""
    eps = 1e-9
    if abs(a[2] - b[0]) <= eps or abs(b[2] - a[0]) <= eps:
        x = a[2] if abs(a[2] - b[0]) <= eps else a[0]
        lo, hi = max(a[1], b[1]), min(a[3], b[3])
        if hi - lo > eps:
            return True, x, lo, hi
    if abs(a[3] - b[1]) <= eps or abs(b[3] - a[1]) <= eps:
        z = a[3] if abs(a[3] - b[1]) <= eps else a[1]
        lo, hi = max(a[0], b[0]), min(a[2], b[2])
        if hi - lo > eps:
            return False, z, lo, hi
    return None


def _spanning_doors(rng: SplitMix64, rooms: list[Room]) -> list[Door]:
    edges = []
    for i, ra in enumerate(rooms):
        for rb in rooms[i + 1:]:
            shared = _shared_interval(ra.bounds, rb.bounds)
            if shared is None:
                continue
            vertical, fixed, lo, hi = shared
            width = _q(rng.uniform(0.9, 1.2))
            usable_lo = lo + DOOR_CORNER_MARGIN + width / 2
            usable_hi = hi - DOOR_CORNER_MARGIN - width / 2
            if usable_hi <= usable_lo:
                continue
            edges.append((ra.id, rb.id, vertical, fixed, usable_lo, usable_hi, width))
    rng.shuffle(edges)
    parent = {r.id: r.id for r in rooms}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    doors = []
    for ra, rb, vertical, fixed, lo, hi, width in edges:
        if find(ra) == find(rb):
            continue
        parent[find(ra)] = find(rb)
        along = _q(rng.uniform(lo, hi))
        center = Vec3(fixed, 0.0, along) if vertical else Vec3(along, 0.0, fixed)
        doors.append(Door(id=len(doors), room_a=ra, room_b=rb, center=center, width=width))
    if len({find(r.id) for r in rooms}) != 1:
        raise _Retry("doors", "adjacency graph could not be spanned")
    return doors


# --- placement --------------------------------------------------------------------

@dataclass
class _Builder:
    catalog: AssetCatalog
    rooms: list[Room]
    doors: list[Door]
    objects: list[ObjectInstance] = field(default_factory=list)
    footprints: list[Rect] = field(default_factory=list)  # floor objects only

    def next_id(self) -> int:
        return len(self.objects)

    def floor_receptacles_in(self, room: Room) -> list[ObjectInstance]:
        out = []
        for o in self.objects:
            if o.parent_receptacle is not None:
                continue
            if not self.catalog.get(o.asset).is_receptacle:
                continue
            b = room.bounds
            if b[0] <= o.position.x <= b[2] and b[1] <= o.position.z <= b[3]:
                out.append(o)
        return out


def _try_place_floor(rng: SplitMix64, builder: _Builder, room: Room, spec: AssetSpec,
                     attempts: int) -> ObjectInstance | None:
    ix0, iz0, ix1, iz1 = room.interior()
    he = spec.half_extents
    is_large = spec.is_receptacle and (4 * he.x * he.z) >= LARGE_FOOTPRINT
    for _ in range(attempts):
        against_wall = is_large and rng.uniform() < WALL_BIAS
        if against_wall:
            side = rng.randint(0, 3)  # 0=N(+z) 1=S(-z) 2=E(+x) 3=W(-x)
            yaw = {0: 180.0, 1: 0.0, 2: 270.0, 3: 90.0}[side]
            hx, hz = rotated_footprint_half_extents(he.x, he.z, yaw)
            if ix1 - ix0 < 2 * hx + 2 * PLACE_GAP or iz1 - iz0 < 2 * hz + 2 * PLACE_GAP:
                continue
            if side == 0:
                z = iz1 - hz - PLACE_GAP
                x = rng.uniform(ix0 + hx + PLACE_GAP, ix1 - hx - PLACE_GAP)
            elif side == 1:
                z = iz0 + hz + PLACE_GAP
                x = rng.uniform(ix0 + hx + PLACE_GAP, ix1 - hx - PLACE_GAP)
            elif side == 2:
                x = ix1 - hx - PLACE_GAP
                z = rng.uniform(iz0 + hz + PLACE_GAP, iz1 - hz - PLACE_GAP)
            else:
                x = ix0 + hx + PLACE_GAP
                z = rng.uniform(iz0 + hz + PLACE_GAP, iz1 - hz - PLACE_GAP)
        else:
            yaw = float(rng.choice([0, 90, 180, 270]))
            hx, hz = rotated_footprint_half_extents(he.x, he.z, yaw)
            if ix1 - ix0 < 2 * hx + 2 * PLACE_GAP or iz1 - iz0 < 2 * hz + 2 * PLACE_GAP:
                return None  # asset cannot fit this room at all
            x = rng.uniform(ix0 + hx + PLACE_GAP, ix1 - hx - PLACE_GAP)
            z = rng.uniform(iz0 + hz + PLACE_GAP, iz1 - hz - PLACE_GAP)

        x, z = _q(x), _q(z)
        fp = (x - hx, z - hz, x + hx, z + hz)
        padded = rect_inflate(fp, PLACE_GAP)
        if any(rects_overlap_strict(padded, other) for other in builder.footprints):
            continue
        if any(circle_rect_intersects(d.center.x, d.center.z,
                                      DOOR_CLEARANCE + AGENT_RADIUS, fp)
               for d in builder.doors):
            continue
        obj = ObjectInstance(
            id=builder.next_id(), asset=spec.name,
            position=Vec3(x, _q(he.y), z), yaw=yaw,
            parent_receptacle=None,
            open_state=False if spec.is_openable else None,
        )
        builder.objects.append(obj)
        builder.footprints.append(fp)
        return obj
    return None


def _try_place_on(rng: SplitMix64, builder: _Builder, receptacle: ObjectInstance,
                  spec: AssetSpec, attempts: int) -> ObjectInstance | None:
    from .scene import world_aabb  # local import: scene also imports geometry helpers

    box = world_aabb(receptacle, builder.catalog)
    top_y = box.max.y
    he = spec.half_extents
    siblings = [o for o in builder.objects if o.parent_receptacle == receptacle.id]
    for _ in range(attempts):
        yaw = float(rng.choice([0, 90, 180, 270]))
        hx, hz = rotated_footprint_half_extents(he.x, he.z, yaw)
        x_lo, x_hi = box.min.x + hx, box.max.x - hx
        z_lo, z_hi = box.min.z + hz, box.max.z - hz
        if x_hi <= x_lo or z_hi <= z_lo:
            return None  # object larger than the surface
        x = _q(rng.uniform(x_lo, x_hi))
        z = _q(rng.uniform(z_lo, z_hi))
        fp = (x - hx, z - hz, x + hx, z + hz)
        clash = False
        for sib in siblings:
            sib_he = builder.catalog.get(sib.asset).half_extents
            sx, sz = rotated_footprint_half_extents(sib_he.x, sib_he.z, sib.yaw)
            sib_fp = (sib.position.x - sx, sib.position.z - sz,
                      sib.position.x + sx, sib.position.z + sz)
            if rects_overlap_strict(rect_inflate(fp, 1e-3), sib_fp):
                clash = True
                break
        if clash:
            continue
        obj = ObjectInstance(
            id=builder.next_id(), asset=spec.name,
            position=Vec3(x, _q(top_y + he.y), z), yaw=yaw,
            parent_receptacle=receptacle.id,
            open_state=False if spec.is_openable else None,
        )
        builder.objects.append(obj)
        siblings.append(obj)
        return obj
    return None


def _room_for_kind(rng: SplitMix64, rooms: list[Room], kind: str | None) -> Room:
    if kind is not None:
        matches = [r for r in rooms if r.kind == kind]
        if matches:
            return rng.choice(matches)
    return rng.choice(rooms)


def _attempt_house(rng: SplitMix64, config: ProcGenConfig,
                   constraints: list[PlacementConstraint],
                   catalog: AssetCatalog, seed: int) -> SceneSpec:
    rects = _split_rooms(rng, config.house_extent, config.room_count)
    kinds = list(ROOM_KINDS)
    rng.shuffle(kinds)
    rooms = [Room(id=i, kind=kinds[i % len(kinds)], bounds=r) for i, r in enumerate(rects)]
    doors = _spanning_doors(rng, rooms) if len(rooms) > 1 else []
    builder = _Builder(catalog=catalog, rooms=rooms, doors=doors)
    attempts = config.max_placement_attempts

    # one receptacle per room first, so surface objects always have a home
    for room in rooms:
        pool = [catalog.get(n) for n in KIND_RECEPTACLES[room.kind]]
        placed = None
        for _ in range(4):
            placed = _try_place_floor(rng, builder, room, rng.choice(pool), attempts)
            if placed is not None:
                break
        if placed is None:
            raise _Retry("furniture", f"no receptacle fits room {room.id}")

    # constraint receptacles, then constraint assets
    constraint_receptacles: list[ObjectInstance | None] = []
    for c in constraints:
        if c.required_receptacle is None:
            constraint_receptacles.append(None)
            continue
        existing = [o for o in builder.objects
                    if o.asset == c.required_receptacle and o.parent_receptacle is None]
        if existing:
            constraint_receptacles.append(existing[0])
            continue
        room = _room_for_kind(rng, rooms, c.room_kind)
        placed = _try_place_floor(rng, builder, room,
                                  catalog.get(c.required_receptacle), attempts)
        if placed is None:
            raise _Retry("constraint", f"cannot place {c.required_receptacle}")
        constraint_receptacles.append(placed)

    for c, receptacle in zip(constraints, constraint_receptacles):
        spec = catalog.get(c.required_asset)
        if spec.placement == "floor":
            room = _room_for_kind(rng, rooms, c.room_kind)
            if _try_place_floor(rng, builder, room, spec, attempts) is None:
                raise _Retry("constraint", f"cannot place {c.required_asset}")
            continue
        if receptacle is None:
            candidates = [o for o in builder.objects if o.parent_receptacle is None
                          and catalog.get(o.asset).is_receptacle]
            receptacle = rng.choice(candidates)
        if _try_place_on(rng, builder, receptacle, spec, attempts) is None:
            raise _Retry("constraint",
                         f"cannot fit {c.required_asset} on {receptacle.asset}")

    # free furniture: receptacles (largest first), then the rest
    for room in rooms:
        lo, hi = config.furniture_per_room
        want = rng.randint(lo, hi)
        already = len(builder.floor_receptacles_in(room))
        names = KIND_FURNITURE[room.kind]
        picks = [catalog.get(rng.choice(names)) for _ in range(max(0, want - already))]
        picks.sort(key=lambda s: (not s.is_receptacle, -(s.half_extents.x * s.half_extents.z),
                                  s.name))
        for spec in picks:
            _try_place_floor(rng, builder, room, spec, attempts)  # optional: ok to drop

    # small objects on receptacle tops
    grabbables = [s for s in catalog.select(grabbable=True, placement="surface")]
    for room in rooms:
        lo, hi = config.small_objects_per_room
        want = rng.randint(lo, hi)
        receptacles = builder.floor_receptacles_in(room)
        if not receptacles:
            continue
        for _ in range(want):
            spec = rng.choice(grabbables)
            target = rng.choice(receptacles)
            _try_place_on(rng, builder, target, spec, attempts)  # optional

    scene = SceneSpec(seed=seed, rooms=rooms, doors=doors, objects=builder.objects,
                      agent_spawn=Pose(Vec3(0, 0, 0), 0.0),
                      user_spawn=Pose(Vec3(0, 0, 0), 0.0))
    _pick_spawns(rng, scene, catalog)

    violations = validate_scene(scene, catalog)
    if violations:
        raise _Retry("validate", "; ".join(str(v) for v in violations[:3]))
    return scene


def _pick_spawns(rng: SplitMix64, scene: SceneSpec, catalog: AssetCatalog) -> None:
    grid = nav.build_nav_grid(scene, catalog=catalog)
    labels = grid.walkable_components()

    # the component every interaction point must share
    main = None
    for obj in scene.objects:
        try:
            point, _yaw = nav.interaction_point(scene, grid, obj.id, catalog=catalog)
        except nav.UnreachableError:
            raise _Retry("connectivity", f"object {obj.id} unreachable")
        ix, iz = grid.cell_of(point.x, point.z)
        label = int(labels[iz, ix])
        if main is None:
            main = label
        elif label != main:
            raise _Retry("connectivity", "interaction points span components")
    if main is None:  # no objects; use the largest component
        counts: dict[int, int] = {}
        for label in labels[labels >= 0].ravel():
            counts[int(label)] = counts.get(int(label), 0) + 1
        main = max(counts, key=lambda k: (counts[k], -k))

    cells = [(ix, iz) for iz in range(grid.height) for ix in range(grid.width)
             if labels[iz, ix] == main]
    if len(cells) < 2:
        raise _Retry("spawns", "walkable component too small")

    agent_cell = rng.choice(cells)
    agent_pos = grid.center_of(*agent_cell)
    user_pos = None
    for min_sep in (SPAWN_SEPARATION, 1.0):
        for _ in range(64):
            cell = rng.choice(cells)
            pos = grid.center_of(*cell)
            if pos.planar_distance(agent_pos) < min_sep:
                continue
            try:
                nav.user_approach_point(grid, pos)
            except nav.UnreachableError:
                continue
            user_pos = pos
            break
        if user_pos is not None:
            break
    if user_pos is None:
        raise _Retry("spawns", "no user spawn with approach room")
    scene.agent_spawn = Pose(Vec3(_q(agent_pos.x), 0.0, _q(agent_pos.z)),
                             round(rng.uniform(-180.0, 180.0), 1))
    scene.user_spawn = Pose(Vec3(_q(user_pos.x), 0.0, _q(user_pos.z)),
                            round(rng.uniform(-180.0, 180.0), 1))


def generate_house(seed: int, config: ProcGenConfig | None = None,
                   constraints: list[PlacementConstraint] | None = None,
                   catalog: AssetCatalog | None = None) -> SceneSpec:
    """Deterministic procedural scene; see module docstring for the recipe."""
    config = config or ProcGenConfig()
    constraints = list(constraints or [])
    catalog = catalog or default_catalog()
    _check_constraints(constraints, catalog)
    rng = SplitMix64(seed).split("generate_house")
    last: _Retry | None = None
    for _ in range(24):
        try:
            return _attempt_house(rng, config, constraints, catalog, seed)
        except _Retry as retry:
            last = retry
    assert last is not None
    raise GenerationFailed(last.stage, last.detail)


# --- scenes bound to tasks -----------------------------------------------------------

_ANSWER_RECEPTACLES = ["sofa_fabric", "table_dining", "table_coffee", "desk_office",
                       "bed_double", "nightstand_small", "counter_kitchen",
                       "shelf_low", "tv_stand_wide"]


def generate_scene_for_task(seed: int, template: TaskTemplate,
                            config: ProcGenConfig | None = None,
                            catalog: AssetCatalog | None = None
                            ) -> tuple[SceneSpec, TaskInstance]:
    """Scene guaranteed to support the template, plus the bound task."""
    config = config or ProcGenConfig()
    catalog = catalog or default_catalog()
    rng = SplitMix64(seed).split("scene_for_task")
    grabbables = sorted(s.name for s in catalog.select(grabbable=True, placement="surface"))

    constraints: list[PlacementConstraint] = []
    a_asset = b_asset = c_asset = None
    if template in (TaskTemplate.WHERE_IS, TaskTemplate.PICK_UP, TaskTemplate.BRING_ME):
        a_asset = rng.choice(grabbables)
        b_asset = rng.choice(_ANSWER_RECEPTACLES)
        constraints.append(PlacementConstraint(a_asset, required_receptacle=b_asset))
    elif template is TaskTemplate.GO_TO:
        floor_assets = sorted(s.name for s in catalog.select(placement="floor"))
        a_asset = rng.choice(floor_assets)
        constraints.append(PlacementConstraint(a_asset))
    elif template is TaskTemplate.PUT_ON:
        a_asset = rng.choice(grabbables)
        c_asset = rng.choice(_ANSWER_RECEPTACLES)
        b_pool = [n for n in _ANSWER_RECEPTACLES if n != c_asset]
        b_asset = rng.choice(b_pool)
        constraints.append(PlacementConstraint(a_asset, required_receptacle=c_asset))
        constraints.append(PlacementConstraint(b_asset))

    scene = generate_house(rng.next_u64(), config, constraints, catalog)

    a_id = b_id = None
    if a_asset is not None:
        a_id = _find_instance(scene, a_asset, on_asset=b_asset
                              if template is not TaskTemplate.PUT_ON else c_asset)
    if template is TaskTemplate.PUT_ON:
        b_id = _find_instance(scene, b_asset, floor_only=True, exclude={a_id})
        parent = scene.object_by_id(a_id).parent_receptacle
        if parent == b_id:  # template requires A not already on B
            raise GenerationFailed("task_binding", "A already on B")

    answer = None
    if template is TaskTemplate.WHERE_IS:
        parent_id = scene.object_by_id(a_id).parent_receptacle
        answer = catalog.get(scene.object_by_id(parent_id).asset).display_name

    a_name = catalog.get(a_asset).display_name if a_asset else None
    b_name = catalog.get(b_asset).display_name if template is TaskTemplate.PUT_ON else None
    task = TaskInstance(
        template=template,
        instruction=taskgen.render_instruction(template, rng.split("phrase"),
                                               a_name, b_name),
        scene_ref=scene_hash(scene),
        object_a=a_id,
        object_b=b_id,
        answer=answer,
    )
    return scene, task


def _find_instance(scene: SceneSpec, asset: str, on_asset: str | None = None,
                   floor_only: bool = False, exclude: set | None = None) -> int:
    exclude = exclude or set()
    for obj in sorted(scene.objects, key=lambda o: o.id):
        if obj.asset != asset or obj.id in exclude:
            continue
        if floor_only and obj.parent_receptacle is not None:
            continue
        if on_asset is not None:
            if obj.parent_receptacle is None:
                continue
            parent = scene.object_by_id(obj.parent_receptacle)
            if parent.asset != on_asset:
                continue
        return obj.id
    raise GenerationFailed("task_binding", f"no instance of {asset} matching constraints")


# --- externally proposed scenes ----------------------------------------------------

MAX_REPAIR_ROUNDS = 3


class StillInvalidAfterRepairs(Exception):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("scene proposal still invalid after "
                         f"{MAX_REPAIR_ROUNDS} repair rounds: {violations[:5]}")


def propose_scene_external(prompt: str, client,
                           catalog: AssetCatalog | None = None) -> SceneSpec:
    """Ask a client for a scene document, validating and reporting back.

    The client gets the original prompt plus the violation list from its
    previous attempt; the first valid scene wins.
    """
    catalog = catalog or default_catalog()
    violations: list[str] = []
    for _ in range(1 + MAX_REPAIR_ROUNDS):
        reply = client.complete({"prompt": prompt, "violations": violations})
        if not isinstance(reply, dict):
            raise ClientError("scene proposal client must return a JSON object")
        try:
            scene = load_scene(json.dumps(reply))
        except Exception as exc:
            violations = [f"format: {exc}"]
            continue
        found = validate_scene(scene, catalog)
        if not found:
            return scene
        violations = [str(v) for v in found]
    raise StillInvalidAfterRepairs(violations)
