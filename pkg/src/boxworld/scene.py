"""Scene data model and the on-disk scene format.

A scene is a declarative value: rooms (floor rectangles), doors on shared
walls, box objects (optionally stacked on receptacles), and the two spawn
poses.  Serialization is canonical — fixed key order, floats at six decimal
places — so identical scenes produce identical bytes and scene hashes are
stable across platforms.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

from .assets import AssetCatalog, default_catalog
from .defaults import ROOM_INSET
from .geometry import (AABB, Rect, Vec3, rotated_footprint_half_extents)

MIN_ROOM_AREA = 4.0
MIN_DOOR_WIDTH = 0.8


class SceneFormatError(ValueError):
    """Raised when a scene document cannot be parsed; carries a field path."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class Pose:
    position: Vec3
    yaw: float


@dataclass
class Room:
    id: int
    kind: str
    bounds: Rect  # (min_x, min_z, max_x, max_z)

    @property
    def area(self) -> float:
        return (self.bounds[2] - self.bounds[0]) * (self.bounds[3] - self.bounds[1])

    def interior(self) -> Rect:
        """Bounds inset by the wall slab; objects must stay inside this."""
        x0, z0, x1, z1 = self.bounds
        return (x0 + ROOM_INSET, z0 + ROOM_INSET, x1 - ROOM_INSET, z1 - ROOM_INSET)


@dataclass
class Door:
    id: int
    room_a: int
    room_b: int
    center: Vec3
    width: float


@dataclass
class ObjectInstance:
    id: int
    asset: str
    position: Vec3  # box centre
    yaw: float
    parent_receptacle: int | None = None
    open_state: bool | None = None


@dataclass
class SceneSpec:
    seed: int
    rooms: list[Room]
    doors: list[Door]
    objects: list[ObjectInstance]
    agent_spawn: Pose
    user_spawn: Pose
    _index: dict[int, ObjectInstance] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def object_by_id(self, object_id: int) -> ObjectInstance:
        if self._index is None or len(self._index) != len(self.objects):
            object.__setattr__(self, "_index", {o.id: o for o in self.objects})
        try:
            return self._index[object_id]
        except KeyError:
            raise KeyError(f"no object with id {object_id}") from None

    def room_by_id(self, room_id: int) -> Room:
        for room in self.rooms:
            if room.id == room_id:
                return room
        raise KeyError(f"no room with id {room_id}")


def world_aabb(obj: ObjectInstance, catalog: AssetCatalog) -> AABB:
    """World axis-aligned box of a (possibly yaw-rotated) object.

    Rotation is handled conservatively: the returned box encloses the rotated
    box, which keeps every overlap check strictly conservative.
    """
    spec = catalog.get(obj.asset)
    hx, hz = rotated_footprint_half_extents(spec.half_extents.x, spec.half_extents.z, obj.yaw)
    hy = spec.half_extents.y
    p = obj.position
    return AABB(Vec3(p.x - hx, p.y - hy, p.z - hz), Vec3(p.x + hx, p.y + hy, p.z + hz))


def receptacle_of(scene: SceneSpec, object_id: int) -> int | None:
    """Immediate parent receptacle id, or None for floor-standing objects."""
    return scene.object_by_id(object_id).parent_receptacle


def receptacle_chain(scene: SceneSpec, object_id: int) -> list[int]:
    """Ids from the object's parent up to its floor-standing root (may be empty)."""
    chain = []
    seen = {object_id}
    current = scene.object_by_id(object_id).parent_receptacle
    while current is not None:
        if current in seen:  # cycle; validate_scene reports it
            break
        chain.append(current)
        seen.add(current)
        current = scene.object_by_id(current).parent_receptacle
    return chain


# --- walls ------------------------------------------------------------------

def wall_segments(scene: SceneSpec) -> list[tuple[float, float, float, float]]:
    """Collision wall segments (ax, az, bx, bz) with door spans carved out.

    Every room edge is a wall centred on the room boundary; a door removes the
    interval of its width from every edge collinear with it.  Coincident
    segments from two abutting rooms are deduplicated.
    """
    segments: dict[tuple, tuple[float, float, float, float]] = {}
    for room in scene.rooms:
        x0, z0, x1, z1 = room.bounds
        # (is_vertical, fixed coordinate, lo, hi)
        edges = [
            (True, x0, z0, z1),
            (True, x1, z0, z1),
            (False, z0, x0, x1),
            (False, z1, x0, x1),
        ]
        for vertical, fixed, lo, hi in edges:
            spans = [(lo, hi)]
            for door in scene.doors:
                d_along = door.center.z if vertical else door.center.x
                d_fixed = door.center.x if vertical else door.center.z
                if abs(d_fixed - fixed) > 1e-6:
                    continue
                cut = (d_along - door.width / 2, d_along + door.width / 2)
                spans = _subtract_span(spans, cut)
            for a, b in spans:
                if vertical:
                    seg = (fixed, a, fixed, b)
                else:
                    seg = (a, fixed, b, fixed)
                key = tuple(round(v, 6) for v in seg)
                segments[key] = seg
    return list(segments.values())


def _subtract_span(spans: list[tuple[float, float]],
                   cut: tuple[float, float]) -> list[tuple[float, float]]:
    out = []
    for lo, hi in spans:
        if cut[1] <= lo + 1e-9 or cut[0] >= hi - 1e-9:
            out.append((lo, hi))
            continue
        if cut[0] > lo + 1e-9:
            out.append((lo, cut[0]))
        if cut[1] < hi - 1e-9:
            out.append((cut[1], hi))
    return out


# --- canonical serialization --------------------------------------------------

def _f(value: float) -> str:
    s = f"{value:.6f}"
    if s == "-0.000000":
        s = "0.000000"
    return s


def _vec(v: Vec3) -> str:
    return f"[{_f(v.x)}, {_f(v.y)}, {_f(v.z)}]"


def save_scene(scene: SceneSpec) -> bytes:
    """Canonical UTF-8 JSON bytes: fixed key order, floats at 6 decimals."""
    out = []
    out.append("{\n")
    out.append(f'  "seed": {scene.seed},\n')

    room_lines = []
    for r in scene.rooms:
        b = ", ".join(_f(v) for v in r.bounds)
        room_lines.append(f'    {{"id": {r.id}, "kind": {json.dumps(r.kind)}, "bounds": [{b}]}}')
    out.append('  "rooms": [\n' + ",\n".join(room_lines) + "\n  ],\n" if room_lines
               else '  "rooms": [],\n')

    door_lines = []
    for d in scene.doors:
        door_lines.append(f'    {{"id": {d.id}, "room_a": {d.room_a}, "room_b": {d.room_b}, '
                          f'"center": {_vec(d.center)}, "width": {_f(d.width)}}}')
    out.append('  "doors": [\n' + ",\n".join(door_lines) + "\n  ],\n" if door_lines
               else '  "doors": [],\n')

    object_lines = []
    for o in scene.objects:
        parent = "null" if o.parent_receptacle is None else str(o.parent_receptacle)
        open_state = ("null" if o.open_state is None
                      else ("true" if o.open_state else "false"))
        object_lines.append(
            f'    {{"id": {o.id}, "asset": {json.dumps(o.asset)}, "position": {_vec(o.position)}, '
            f'"yaw": {_f(o.yaw)}, "parent_receptacle": {parent}, "open_state": {open_state}}}')
    out.append('  "objects": [\n' + ",\n".join(object_lines) + "\n  ],\n" if object_lines
               else '  "objects": [],\n')

    out.append(f'  "agent_spawn": {{"position": {_vec(scene.agent_spawn.position)}, '
               f'"yaw": {_f(scene.agent_spawn.yaw)}}},\n')
    out.append(f'  "user_spawn": {{"position": {_vec(scene.user_spawn.position)}, '
               f'"yaw": {_f(scene.user_spawn.yaw)}}}\n')
    out.append("}\n")
    return "".join(out).encode("utf-8")


def scene_hash(scene: SceneSpec) -> str:
    return hashlib.sha256(save_scene(scene)).hexdigest()


_ROOM_KEYS = {"id", "kind", "bounds"}
_DOOR_KEYS = {"id", "room_a", "room_b", "center", "width"}
_OBJECT_KEYS = {"id", "asset", "position", "yaw", "parent_receptacle", "open_state"}
_POSE_KEYS = {"position", "yaw"}
_TOP_KEYS = {"seed", "rooms", "doors", "objects", "agent_spawn", "user_spawn"}


def _require_keys(doc: dict, allowed: set[str], required: set[str], path: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise SceneFormatError(f"unknown field(s) {sorted(unknown)}", path)
    missing = required - set(doc)
    if missing:
        raise SceneFormatError(f"missing field(s) {sorted(missing)}", path)


def _parse_vec3(value, path: str) -> Vec3:
    if (not isinstance(value, list) or len(value) != 3
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value)):
        raise SceneFormatError("expected [x, y, z] numbers", path)
    v = Vec3(float(value[0]), float(value[1]), float(value[2]))
    if not v.is_finite():
        raise SceneFormatError("components must be finite", path)
    return v


def _parse_int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SceneFormatError("expected an integer", path)
    return value


def _parse_float(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SceneFormatError("expected a number", path)
    if not math.isfinite(float(value)):
        raise SceneFormatError("must be finite", path)
    return float(value)


def _parse_pose(doc, path: str) -> Pose:
    if not isinstance(doc, dict):
        raise SceneFormatError("expected an object", path)
    _require_keys(doc, _POSE_KEYS, _POSE_KEYS, path)
    return Pose(position=_parse_vec3(doc["position"], f"{path}.position"),
                yaw=_parse_float(doc["yaw"], f"{path}.yaw"))


def load_scene(data: bytes | str) -> SceneSpec:
    """Parse scene-format bytes; rejects unknown fields and bad references."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: "
                               f"{exc.msg}") from None
    if not isinstance(doc, dict):
        raise SceneFormatError("top level must be an object")
    _require_keys(doc, _TOP_KEYS, _TOP_KEYS, "$")

    seed = _parse_int(doc["seed"], "$.seed")
    if seed < 0 or seed >= 1 << 64:
        raise SceneFormatError("must be an unsigned 64-bit integer", "$.seed")

    rooms = []
    if not isinstance(doc["rooms"], list):
        raise SceneFormatError("expected a list", "$.rooms")
    for i, rec in enumerate(doc["rooms"]):
        path = f"$.rooms[{i}]"
        if not isinstance(rec, dict):
            raise SceneFormatError("expected an object", path)
        _require_keys(rec, _ROOM_KEYS, _ROOM_KEYS, path)
        bounds = rec["bounds"]
        if not isinstance(bounds, list) or len(bounds) != 4:
            raise SceneFormatError("expected [min_x, min_z, max_x, max_z]", f"{path}.bounds")
        b = tuple(_parse_float(v, f"{path}.bounds") for v in bounds)
        if not (b[0] < b[2] and b[1] < b[3]):
            raise SceneFormatError("bounds must have positive extent", f"{path}.bounds")
        if not isinstance(rec["kind"], str):
            raise SceneFormatError("expected a string", f"{path}.kind")
        rooms.append(Room(id=_parse_int(rec["id"], f"{path}.id"), kind=rec["kind"], bounds=b))

    doors = []
    if not isinstance(doc["doors"], list):
        raise SceneFormatError("expected a list", "$.doors")
    for i, rec in enumerate(doc["doors"]):
        path = f"$.doors[{i}]"
        if not isinstance(rec, dict):
            raise SceneFormatError("expected an object", path)
        _require_keys(rec, _DOOR_KEYS, _DOOR_KEYS, path)
        doors.append(Door(
            id=_parse_int(rec["id"], f"{path}.id"),
            room_a=_parse_int(rec["room_a"], f"{path}.room_a"),
            room_b=_parse_int(rec["room_b"], f"{path}.room_b"),
            center=_parse_vec3(rec["center"], f"{path}.center"),
            width=_parse_float(rec["width"], f"{path}.width"),
        ))

    objects = []
    if not isinstance(doc["objects"], list):
        raise SceneFormatError("expected a list", "$.objects")
    for i, rec in enumerate(doc["objects"]):
        path = f"$.objects[{i}]"
        if not isinstance(rec, dict):
            raise SceneFormatError("expected an object", path)
        _require_keys(rec, _OBJECT_KEYS, _OBJECT_KEYS, path)
        parent = rec["parent_receptacle"]
        if parent is not None:
            parent = _parse_int(parent, f"{path}.parent_receptacle")
        open_state = rec["open_state"]
        if open_state is not None and not isinstance(open_state, bool):
            raise SceneFormatError("expected true/false/null", f"{path}.open_state")
        if not isinstance(rec["asset"], str):
            raise SceneFormatError("expected a string", f"{path}.asset")
        objects.append(ObjectInstance(
            id=_parse_int(rec["id"], f"{path}.id"),
            asset=rec["asset"],
            position=_parse_vec3(rec["position"], f"{path}.position"),
            yaw=_parse_float(rec["yaw"], f"{path}.yaw"),
            parent_receptacle=parent,
            open_state=open_state,
        ))

    scene = SceneSpec(
        seed=seed,
        rooms=rooms,
        doors=doors,
        objects=objects,
        agent_spawn=_parse_pose(doc["agent_spawn"], "$.agent_spawn"),
        user_spawn=_parse_pose(doc["user_spawn"], "$.user_spawn"),
    )

    # referential integrity is a parse-time failure, not a validation finding
    ids = [o.id for o in scene.objects]
    id_set = set(ids)
    if len(ids) != len(id_set):
        raise SceneFormatError("duplicate object ids", "$.objects")
    for i, o in enumerate(scene.objects):
        if o.id < 0:
            raise SceneFormatError("object id must be >= 0", f"$.objects[{i}].id")
        if o.parent_receptacle is not None and o.parent_receptacle not in id_set:
            raise SceneFormatError(
                f"dangling receptacle reference {o.parent_receptacle}",
                f"$.objects[{i}].parent_receptacle")
    room_ids = {r.id for r in scene.rooms}
    if len(room_ids) != len(scene.rooms):
        raise SceneFormatError("duplicate room ids", "$.rooms")
    for i, d in enumerate(scene.doors):
        if d.room_a == d.room_b:
            raise SceneFormatError("door must join two distinct rooms", f"$.doors[{i}]")
        if d.room_a not in room_ids or d.room_b not in room_ids:
            raise SceneFormatError("door references unknown room", f"$.doors[{i}]")
    return scene


def copy_scene(scene: SceneSpec) -> SceneSpec:
    """Value copy; object instances are fresh so the copy may be mutated."""
    return SceneSpec(
        seed=scene.seed,
        rooms=[replace(r) for r in scene.rooms],
        doors=[replace(d) for d in scene.doors],
        objects=[replace(o) for o in scene.objects],
        agent_spawn=Pose(scene.agent_spawn.position, scene.agent_spawn.yaw),
        user_spawn=Pose(scene.user_spawn.position, scene.user_spawn.yaw),
    )


# --- textual description -------------------------------------------------------

def describe_scene(scene: SceneSpec, catalog: AssetCatalog | None = None) -> str:
    """Deterministic plain-text scene summary (rooms, objects, placements).

    Intended as prompt context for a language model; the exact layout is this
    package's own convention.
    """
    catalog = catalog or default_catalog()
    lines = []
    lines.append(f"The house has {len(scene.rooms)} room(s) and {len(scene.doors)} door(s).")
    for room in scene.rooms:
        x0, z0, x1, z1 = room.bounds
        lines.append(f"Room {room.id} ({room.kind}): {x1 - x0:.1f} m x {z1 - z0:.1f} m.")
        for obj in scene.objects:
            if _object_room(scene, obj) != room.id:
                continue
            spec = catalog.get(obj.asset)
            if obj.parent_receptacle is not None:
                parent = scene.object_by_id(obj.parent_receptacle)
                parent_name = catalog.get(parent.asset).display_name
                place = f"on the {parent_name} (object {parent.id})"
            else:
                place = f"in the {_quadrant(room.bounds, obj.position)} quadrant"
            state = ""
            if obj.open_state is not None:
                state = ", open" if obj.open_state else ", closed"
            lines.append(f"- object {obj.id}: {spec.display_name} {place}{state}")
    return "\n".join(lines) + "\n"


def _object_room(scene: SceneSpec, obj: ObjectInstance) -> int | None:
    x, z = obj.position.x, obj.position.z
    for room in scene.rooms:
        if room.bounds[0] <= x <= room.bounds[2] and room.bounds[1] <= z <= room.bounds[3]:
            return room.id
    return None


def _quadrant(bounds: Rect, p: Vec3) -> str:
    cx = (bounds[0] + bounds[2]) / 2
    cz = (bounds[1] + bounds[3]) / 2
    ns = "north" if p.z >= cz else "south"
    ew = "east" if p.x >= cx else "west"
    return ns + ew
