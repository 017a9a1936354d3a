"""Scene validation: every rule the generator and editors must satisfy.

Violations are data, not exceptions — callers (generator repair loops, the
CLI `validate` subcommand, external scene proposals) consume the list.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import nav, scene as scene_mod
from .assets import AssetCatalog, default_catalog
from .geometry import rect_contains_rect, rects_overlap_strict
from .scene import MIN_DOOR_WIDTH, MIN_ROOM_AREA, SceneSpec, world_aabb


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    object_id: int | None = None

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def validate_scene(scene: SceneSpec, catalog: AssetCatalog | None = None) -> list[Violation]:
    catalog = catalog or default_catalog()
    out: list[Violation] = []
    out += _check_rooms(scene)
    out += _check_doors(scene)
    out += _check_receptacle_graph(scene, catalog)
    out += _check_assets(scene, catalog)
    out += _check_containment(scene, catalog)
    out += _check_overlaps(scene, catalog)
    out += _check_spawns(scene, catalog)
    return out


def _check_rooms(scene: SceneSpec) -> list[Violation]:
    out = []
    for room in scene.rooms:
        if room.area < MIN_ROOM_AREA - 1e-9:
            out.append(Violation("room_too_small",
                                 f"room {room.id} area {room.area:.2f} m^2 < {MIN_ROOM_AREA}"))
    for i, a in enumerate(scene.rooms):
        for b in scene.rooms[i + 1:]:
            if rects_overlap_strict(a.bounds, b.bounds):
                out.append(Violation("rooms_overlap",
                                     f"rooms {a.id} and {b.id} interiors overlap"))
    return out


def _check_doors(scene: SceneSpec) -> list[Violation]:
    out = []
    for door in scene.doors:
        if door.width < MIN_DOOR_WIDTH - 1e-9:
            out.append(Violation("door_too_narrow",
                                 f"door {door.id} width {door.width:.2f} < {MIN_DOOR_WIDTH}"))
        try:
            ra = scene.room_by_id(door.room_a)
            rb = scene.room_by_id(door.room_b)
        except KeyError:
            out.append(Violation("door_bad_room", f"door {door.id} references unknown room"))
            continue
        if not _door_on_shared_wall(ra.bounds, rb.bounds, door):
            out.append(Violation("door_not_on_shared_wall",
                                 f"door {door.id} is not on a wall shared by rooms "
                                 f"{door.room_a} and {door.room_b}"))
    return out


def _door_on_shared_wall(a, b, door) -> bool:
    eps = 1e-6
    half = door.width / 2
    # vertical shared wall: a's east edge == b's west edge, or vice versa
    for x in (a[2], a[0]):
        if abs(x - (b[0] if x == a[2] else b[2])) <= eps and abs(door.center.x - x) <= eps:
            lo = max(a[1], b[1])
            hi = min(a[3], b[3])
            if door.center.z - half >= lo - eps and door.center.z + half <= hi + eps:
                return True
    for z in (a[3], a[1]):
        if abs(z - (b[1] if z == a[3] else b[3])) <= eps and abs(door.center.z - z) <= eps:
            lo = max(a[0], b[0])
            hi = min(a[2], b[2])
            if door.center.x - half >= lo - eps and door.center.x + half <= hi + eps:
                return True
    return False


def _check_receptacle_graph(scene: SceneSpec, catalog: AssetCatalog) -> list[Violation]:
    out = []
    ids = {o.id for o in scene.objects}
    for obj in scene.objects:
        if obj.parent_receptacle is None:
            continue
        if obj.parent_receptacle not in ids:
            out.append(Violation("dangling_receptacle",
                                 f"object {obj.id} references missing parent "
                                 f"{obj.parent_receptacle}", obj.id))
            continue
        parent = scene.object_by_id(obj.parent_receptacle)
        if parent.asset in catalog and not catalog.get(parent.asset).is_receptacle:
            out.append(Violation("parent_not_receptacle",
                                 f"object {obj.id} is on object {parent.id} "
                                 f"({parent.asset}), which is not a receptacle", obj.id))
    # cycle check by walking parents
    for obj in scene.objects:
        seen = set()
        cur = obj
        while cur.parent_receptacle is not None and cur.parent_receptacle in ids:
            if cur.id in seen:
                out.append(Violation("receptacle_cycle",
                                     f"object {obj.id} is part of a receptacle cycle", obj.id))
                break
            seen.add(cur.id)
            cur = scene.object_by_id(cur.parent_receptacle)
    return out


def _check_assets(scene: SceneSpec, catalog: AssetCatalog) -> list[Violation]:
    out = []
    for obj in scene.objects:
        if obj.asset not in catalog:
            out.append(Violation("unknown_asset",
                                 f"object {obj.id} uses unknown asset {obj.asset!r}", obj.id))
        elif obj.open_state is not None and not catalog.get(obj.asset).is_openable:
            out.append(Violation("open_state_on_non_openable",
                                 f"object {obj.id} ({obj.asset}) carries open_state", obj.id))
    return out


def _check_containment(scene: SceneSpec, catalog: AssetCatalog) -> list[Violation]:
    out = []
    for obj in scene.objects:
        if obj.asset not in catalog:
            continue
        fp = world_aabb(obj, catalog).footprint()
        if not any(rect_contains_rect(room.interior(), fp) for room in scene.rooms):
            out.append(Violation("object_outside_rooms",
                                 f"object {obj.id} ({obj.asset}) is not inside any room",
                                 obj.id))
    return out


def _check_overlaps(scene: SceneSpec, catalog: AssetCatalog) -> list[Violation]:
    """Pairwise AABB overlap among floor objects and among siblings."""
    out = []
    known = [o for o in scene.objects if o.asset in catalog]
    boxes = {o.id: world_aabb(o, catalog) for o in known}
    groups: dict[int | None, list] = {}
    for o in known:
        groups.setdefault(o.parent_receptacle, []).append(o)
    for members in groups.values():
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                if boxes[a.id].intersects(boxes[b.id]):
                    out.append(Violation(
                        "objects_overlap",
                        f"objects {a.id} ({a.asset}) and {b.id} ({b.asset}) overlap", a.id))
    return out


def _check_spawns(scene: SceneSpec, catalog: AssetCatalog) -> list[Violation]:
    out = []
    if not scene.rooms:
        return [Violation("no_rooms", "scene has no rooms")]
    if any(o.asset not in catalog for o in scene.objects):
        return []  # unknown assets already reported; grid would be meaningless
    try:
        grid = nav.build_nav_grid(scene, catalog=catalog)
    except ValueError as exc:
        return [Violation("nav_grid", str(exc))]
    for label, pose in (("agent_spawn", scene.agent_spawn), ("user_spawn", scene.user_spawn)):
        ix, iz = grid.cell_of(pose.position.x, pose.position.z)
        if not grid.is_walkable(ix, iz):
            out.append(Violation("spawn_not_walkable",
                                 f"{label} at ({pose.position.x:.2f}, {pose.position.z:.2f}) "
                                 f"is not on walkable floor"))
    return out
