"""Mutable environment state and action execution.

Physics is quasi-static: movement is a swept circle on the floor plane that
clamps at first contact (stopping one millimetre short); everything else is
discrete state transition.  Impossible interactions produce interact_failed
events rather than exceptions, so recorded trajectories can contain failed
attempts if a policy makes them.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from . import nav, scene as scene_mod
from .assets import AssetCatalog, default_catalog
from .defaults import (AGENT_RADIUS, BODY_MIN_SEPARATION, CONTACT_GAP, EYE_HEIGHT,
                       HAND_FORWARD, HAND_HEIGHT, PITCH_MAX, PITCH_MIN, PUT_GRID,
                       REACH, TARGET_CONE_DEG)
from .geometry import (Vec3, normalize_yaw, point_rect_distance, rect_inflate,
                       yaw_direction)
from .scene import Pose, SceneSpec, copy_scene, world_aabb
from .validate import validate_scene

INTERACT_KINDS = ("grab", "put", "open", "close")


class SceneInvalidError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("scene fails validation: "
                         + "; ".join(str(v) for v in violations[:5]))


# --- actions ------------------------------------------------------------------------

@dataclass(frozen=True)
class Action:
    """One agent control; exactly one variant, selected by `kind`."""
    kind: str                      # speak | move_forward | rotate_right | rotate_up | interact
    distance: float | None = None  # move_forward
    degrees: float | None = None   # rotate_right / rotate_up
    text: str | None = None        # speak
    interact_kind: str | None = None  # grab | put | open | close

    def __post_init__(self):
        if self.kind == "move_forward":
            if self.distance is None or self.distance < 0:
                raise ValueError("move_forward needs a distance >= 0")
        elif self.kind in ("rotate_right", "rotate_up"):
            if self.degrees is None:
                raise ValueError(f"{self.kind} needs degrees")
        elif self.kind == "speak":
            if self.text is None:
                raise ValueError("speak needs text")
        elif self.kind == "interact":
            if self.interact_kind not in INTERACT_KINDS:
                raise ValueError(f"interact kind must be one of {INTERACT_KINDS}")
        else:
            raise ValueError(f"unknown action kind {self.kind!r}")


def speak(text: str) -> Action:
    return Action("speak", text=text)


def move_forward(distance: float) -> Action:
    return Action("move_forward", distance=distance)


def rotate_right(degrees: float) -> Action:
    return Action("rotate_right", degrees=degrees)


def rotate_up(degrees: float) -> Action:
    return Action("rotate_up", degrees=degrees)


def interact(kind: str) -> Action:
    return Action("interact", interact_kind=kind)


def _num(value: float) -> str:
    # compact float: no trailing zeros, no exponent for our ranges
    s = f"{value:.2f}".rstrip("0").rstrip(".")
    return s if s not in ("", "-") else "0"


def action_code(action: Action) -> str:
    """Canonical code string for one action."""
    if action.kind == "move_forward":
        return f"move_forward({_num(action.distance)})"
    if action.kind == "rotate_right":
        return f"rotate_right({_num(action.degrees)})"
    if action.kind == "rotate_up":
        return f"rotate_up({_num(action.degrees)})"
    if action.kind == "interact":
        return f"interact({action.interact_kind})"
    escaped = action.text.replace("\\", "\\\\").replace('"', '\\"')
    return f'speak("{escaped}")'


def group_code(actions: list[Action]) -> str:
    """A keyframe's action group, comma-joined."""
    return ", ".join(action_code(a) for a in actions)


class ActionParseError(ValueError):
    pass


_CALL_RE = re.compile(r"\s*([a-z_]+)\s*\(")


def parse_action_group(text: str) -> list[Action]:
    """Parse a comma-joined action group (the wire/dataset action format)."""
    actions = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _CALL_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ActionParseError(f"expected action call at column {pos + 1}")
        name = m.group(1)
        pos = m.end()
        args, pos = _parse_args(text, pos)
        actions.append(_action_from_call(name, args))
        # optional separating comma
        while pos < n and text[pos] in " \t":
            pos += 1
        if pos < n:
            if text[pos] != ",":
                raise ActionParseError(f"expected ',' between actions at column {pos + 1}")
            pos += 1
    if not actions:
        raise ActionParseError("empty action group")
    return actions


def _parse_args(text: str, pos: int) -> tuple[list, int]:
    args = []
    n = len(text)
    while True:
        while pos < n and text[pos] in " \t":
            pos += 1
        if pos >= n:
            raise ActionParseError("unterminated call")
        if text[pos] == ")":
            return args, pos + 1
        if text[pos] == '"':
            value, pos = _parse_string(text, pos)
            args.append(value)
        else:
            m = re.match(r"[-+0-9.a-z_]+", text[pos:])
            if not m:
                raise ActionParseError(f"bad argument at column {pos + 1}")
            token = m.group(0)
            pos += len(token)
            try:
                args.append(float(token))
            except ValueError:
                args.append(token)  # bare word (interact kinds)
        while pos < n and text[pos] in " \t":
            pos += 1
        if pos < n and text[pos] == ",":
            pos += 1
        elif pos < n and text[pos] == ")":
            return args, pos + 1
        elif pos >= n:
            raise ActionParseError("unterminated call")


def _parse_string(text: str, pos: int) -> tuple[str, int]:
    assert text[pos] == '"'
    pos += 1
    out = []
    while pos < len(text):
        ch = text[pos]
        if ch == "\\":
            if pos + 1 >= len(text):
                raise ActionParseError("dangling escape")
            nxt = text[pos + 1]
            out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
            pos += 2
        elif ch == '"':
            return "".join(out), pos + 1
        else:
            out.append(ch)
            pos += 1
    raise ActionParseError("unterminated string")


def _action_from_call(name: str, args: list) -> Action:
    def one_float():
        if len(args) != 1 or not isinstance(args[0], float):
            raise ActionParseError(f"{name} expects one numeric argument")
        return args[0]

    if name == "move_forward":
        value = one_float()
        if value < 0:
            raise ActionParseError("move_forward distance must be >= 0")
        return move_forward(value)
    if name == "rotate_right":
        return rotate_right(one_float())
    if name == "rotate_up":
        return rotate_up(one_float())
    if name == "speak":
        if len(args) != 1 or not isinstance(args[0], str):
            raise ActionParseError("speak expects one string argument")
        return speak(args[0])
    if name == "interact":
        if len(args) != 1 or args[0] not in INTERACT_KINDS:
            raise ActionParseError(f"interact expects one of {INTERACT_KINDS}")
        return interact(args[0])
    raise ActionParseError(f"unknown action {name!r}")


# --- environment state ----------------------------------------------------------------

@dataclass
class AgentState:
    position: Vec3
    yaw: float
    pitch: float = 0.0
    held: int | None = None
    pending_target: int | None = None


@dataclass(frozen=True)
class Event:
    kind: str
    distance: float | None = None
    text: str | None = None
    object_id: int | None = None
    receptacle: int | None = None
    reason: str | None = None


@dataclass
class StepResult:
    events: list[Event]


@dataclass(eq=False)
class EnvState:
    scene: SceneSpec
    agent: AgentState
    user: Pose
    grid: nav.NavGrid
    catalog: AssetCatalog
    event_log: list[tuple[int, Event]] = field(default_factory=list)
    step_count: int = 0
    camera: object = None  # render.CameraConfig; late-bound to avoid an import cycle


def reset(scene: SceneSpec, catalog: AssetCatalog | None = None,
          camera=None, validate: bool = True) -> EnvState:
    """Fresh environment at the scene's spawn poses."""
    catalog = catalog or default_catalog()
    if validate:
        violations = validate_scene(scene, catalog)
        if violations:
            raise SceneInvalidError(violations)
    live = copy_scene(scene)
    agent = AgentState(position=Vec3(live.agent_spawn.position.x, 0.0,
                                     live.agent_spawn.position.z),
                       yaw=normalize_yaw(live.agent_spawn.yaw))
    user = Pose(Vec3(live.user_spawn.position.x, 0.0, live.user_spawn.position.z),
                normalize_yaw(live.user_spawn.yaw))
    grid = nav.build_nav_grid(live, catalog=catalog)
    if camera is None:
        from .render import CameraConfig
        camera = CameraConfig()
    return EnvState(scene=live, agent=agent, user=user, grid=grid, catalog=catalog,
                    camera=camera)


def _rebuild_grid(state: EnvState) -> None:
    exclude = {state.agent.held} if state.agent.held is not None else set()
    state.grid = nav.build_nav_grid(state.scene, catalog=state.catalog,
                                    exclude_ids=exclude)


def _blocking_rects(state: EnvState) -> list:
    rects = []
    for obj in state.scene.objects:
        if obj.parent_receptacle is not None or obj.id == state.agent.held:
            continue
        rects.append(rect_inflate(world_aabb(obj, state.catalog).footprint(),
                                  AGENT_RADIUS))
    return rects


def _sweep_limit(state: EnvState, origin: Vec3, direction: tuple[float, float],
                 distance: float, other_body: Vec3) -> float:
    """Earliest contact parameter along the move, or inf."""
    t_hit = math.inf
    dx, dz = direction
    px, pz = origin.x, origin.z

    for ax, az, bx, bz in scene_mod.wall_segments(state.scene):
        t = _ray_capsule(px, pz, dx, dz, ax, az, bx, bz, AGENT_RADIUS)
        if t is not None and t < t_hit:
            t_hit = t

    for rect in _blocking_rects(state):
        t = _ray_rect_entry(px, pz, dx, dz, rect)
        if t is not None and t < t_hit:
            t_hit = t

    t = _ray_circle(px, pz, dx, dz, other_body.x, other_body.z, BODY_MIN_SEPARATION)
    if t is not None and t < t_hit:
        t_hit = t
    return t_hit


def _ray_circle(px, pz, dx, dz, cx, cz, radius):
    ox, oz = px - cx, pz - cz
    b = ox * dx + oz * dz
    c = ox * ox + oz * oz - radius * radius
    if c <= 0.0:
        return 0.0 if b < 0 else None  # already inside: block approach only
    disc = b * b - c
    if disc < 0.0:
        return None
    t = -b - math.sqrt(disc)
    return t if t >= 0.0 else None


def _ray_capsule(px, pz, dx, dz, ax, az, bx, bz, radius):
    """Moving point vs segment inflated by radius."""
    best = None
    vx, vz = bx - ax, bz - az
    seg_len = math.hypot(vx, vz)
    if seg_len > 0.0:
        nx, nz = -vz / seg_len, vx / seg_len  # unit normal
        denom = dx * nx + dz * nz
        if abs(denom) > 1e-12:
            for side in (radius, -radius):
                t = (side - ((px - ax) * nx + (pz - az) * nz)) / denom
                if t < 0.0:
                    continue
                hx, hz = px + t * dx - ax, pz + t * dz - az
                proj = (hx * vx + hz * vz) / (seg_len * seg_len)
                if 0.0 <= proj <= 1.0 and (best is None or t < best):
                    best = t
    for cx, cz in ((ax, az), (bx, bz)):
        t = _ray_circle(px, pz, dx, dz, cx, cz, radius)
        if t is not None and (best is None or t < best):
            best = t
    return best


def _ray_rect_entry(px, pz, dx, dz, rect):
    """Slab entry parameter into an axis-aligned rect, or None."""
    t0, t1 = 0.0, math.inf
    for p, d, lo, hi in ((px, dx, rect[0], rect[2]), (pz, dz, rect[1], rect[3])):
        if abs(d) < 1e-15:
            if not (lo < p < hi):
                return None
            continue
        ta = (lo - p) / d
        tb = (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    # t0 == 0 means we start inside; block immediately
    return t0


def _update_held_position(state: EnvState) -> None:
    held = state.agent.held
    if held is None:
        return
    dx, dz = yaw_direction(state.agent.yaw)
    obj = state.scene.object_by_id(held)
    obj.position = Vec3(state.agent.position.x + dx * HAND_FORWARD, HAND_HEIGHT,
                        state.agent.position.z + dz * HAND_FORWARD)
    obj.yaw = state.agent.yaw


def _move_body(state: EnvState, pos: Vec3, yaw: float, distance: float,
               other_body: Vec3) -> tuple[Vec3, list[Event]]:
    direction = yaw_direction(yaw)
    t_hit = _sweep_limit(state, pos, direction, distance, other_body)
    actual = distance if t_hit > distance else max(0.0, t_hit - CONTACT_GAP)
    new_pos = Vec3(pos.x + direction[0] * actual, 0.0, pos.z + direction[1] * actual)
    events = [Event("moved", distance=actual)]
    if actual < distance - CONTACT_GAP:
        events.append(Event("blocked"))
    return new_pos, events


def step(state: EnvState, action: Action) -> StepResult:
    """Execute one action; mutates state and returns the caused events."""
    events: list[Event] = []
    agent = state.agent

    if action.kind == "move_forward":
        agent.position, events = _move_body(state, agent.position, agent.yaw,
                                            action.distance, state.user.position)
        _update_held_position(state)
    elif action.kind == "rotate_right":
        agent.yaw = normalize_yaw(agent.yaw + action.degrees)
        _update_held_position(state)
    elif action.kind == "rotate_up":
        agent.pitch = min(PITCH_MAX, max(PITCH_MIN, agent.pitch + action.degrees))
    elif action.kind == "speak":
        events = [Event("spoke", text=action.text)]
    elif action.kind == "interact":
        events = _do_interact(state, action.interact_kind)
    state.step_count += 1
    for event in events:
        state.event_log.append((state.step_count, event))
    return StepResult(events=events)


def _do_interact(state: EnvState, kind: str) -> list[Event]:
    agent = state.agent
    target_id = resolve_target(state)
    if target_id is None:
        return [Event("interact_failed", reason="no target")]
    obj = state.scene.object_by_id(target_id)
    spec = state.catalog.get(obj.asset)

    if kind == "grab":
        if agent.held is not None:
            return [Event("interact_failed", reason="hands full")]
        if not spec.is_grabbable:
            return [Event("interact_failed", reason="not grabbable")]
        was_floor = obj.parent_receptacle is None
        obj.parent_receptacle = None
        agent.held = target_id
        agent.pending_target = None
        _update_held_position(state)
        if was_floor:
            _rebuild_grid(state)
        return [Event("grabbed", object_id=target_id)]

    if kind == "put":
        if agent.held is None:
            return [Event("interact_failed", reason="empty hand")]
        if not spec.is_receptacle:
            return [Event("interact_failed", reason="not a receptacle")]
        if spec.is_openable and obj.open_state is not True:
            return [Event("interact_failed", reason="closed")]
        held_obj = state.scene.object_by_id(agent.held)
        spot = _find_put_spot(state, obj, held_obj)
        if spot is None:
            return [Event("interact_failed", reason="no free spot")]
        held_obj.position = spot
        held_obj.parent_receptacle = obj.id
        placed_id = agent.held
        agent.held = None
        _rebuild_grid(state)
        return [Event("placed", object_id=placed_id, receptacle=obj.id)]

    if kind in ("open", "close"):
        if not spec.is_openable:
            return [Event("interact_failed", reason="not openable")]
        want_open = kind == "open"
        if bool(obj.open_state) == want_open:
            return [Event("interact_failed",
                          reason="already open" if want_open else "already closed")]
        obj.open_state = want_open
        return [Event("opened" if want_open else "closed", object_id=obj.id)]

    return [Event("interact_failed", reason=f"unknown kind {kind}")]


def _find_put_spot(state: EnvState, receptacle, held_obj) -> Vec3 | None:
    """Deterministic outward spiral over the receptacle top at 5 cm steps."""
    from .geometry import rotated_footprint_half_extents, rects_overlap_strict

    box = world_aabb(receptacle, state.catalog)
    top_y = box.max.y
    spec = state.catalog.get(held_obj.asset)
    hx, hz = rotated_footprint_half_extents(spec.half_extents.x, spec.half_extents.z,
                                            held_obj.yaw)
    x_lo, x_hi = box.min.x + hx, box.max.x - hx
    z_lo, z_hi = box.min.z + hz, box.max.z - hz
    if x_hi < x_lo or z_hi < z_lo:
        return None
    cx = (box.min.x + box.max.x) / 2
    cz = (box.min.z + box.max.z) / 2
    siblings = []
    for o in state.scene.objects:
        if o.parent_receptacle == receptacle.id and o.id != held_obj.id:
            sb = world_aabb(o, state.catalog)
            siblings.append(sb.footprint())
    max_ring = int(math.ceil(max(box.max.x - box.min.x, box.max.z - box.min.z)
                             / (2 * PUT_GRID))) + 1
    for ring in range(max_ring):
        for dx, dz in _ring_offsets(ring):
            x = cx + dx * PUT_GRID
            z = cz + dz * PUT_GRID
            if not (x_lo <= x <= x_hi and z_lo <= z <= z_hi):
                continue
            fp = (x - hx, z - hz, x + hx, z + hz)
            if any(rects_overlap_strict(rect_inflate(fp, 1e-4), s) for s in siblings):
                continue
            return Vec3(x, top_y + spec.half_extents.y, z)
    return None


def _ring_offsets(ring: int):
    if ring == 0:
        yield 0, 0
        return
    for dx in range(-ring, ring + 1):  # bottom and top rows
        yield dx, -ring
    for dx in range(-ring, ring + 1):
        yield dx, ring
    for dz in range(-ring + 1, ring):  # side columns, corners already done
        yield -ring, dz
    for dz in range(-ring + 1, ring):
        yield ring, dz


def resolve_target(state: EnvState, ignore_pending: bool = False) -> int | None:
    """The object an interact() would apply to, if any.

    A still-valid pending target wins; otherwise the nearest in-reach object
    whose centre is inside the gaze cone and which is visible on screen.
    """
    agent = state.agent
    if not ignore_pending and agent.pending_target is not None:
        try:
            obj = state.scene.object_by_id(agent.pending_target)
        except KeyError:
            agent.pending_target = None
        else:
            if (_within_reach(state, obj) and _within_cone(state, obj)
                    and obj.id != agent.held):
                return obj.id

    eye = Vec3(agent.position.x, EYE_HEIGHT, agent.position.z)
    candidates = []
    for obj in state.scene.objects:
        if obj.id == agent.held:
            continue
        if not _within_reach(state, obj):
            continue
        angle = _gaze_angle(state, obj)
        if angle > TARGET_CONE_DEG:
            continue
        # centred-on beats nearby: angle first, then distance, then id
        candidates.append((angle, (obj.position - eye).length(), obj.id))
    candidates.sort()
    from .render import visible
    for _angle, _d, object_id in candidates:
        if visible(state, object_id, state.camera):
            return object_id
    return None


def _within_reach(state: EnvState, obj) -> bool:
    d = point_rect_distance(state.agent.position.x, state.agent.position.z,
                            world_aabb(obj, state.catalog).footprint())
    return d <= REACH


def _gaze_angle(state: EnvState, obj) -> float:
    """Angle in degrees between the gaze ray and the eye-to-centre direction."""
    agent = state.agent
    eye = Vec3(agent.position.x, EYE_HEIGHT, agent.position.z)
    to = obj.position - eye
    norm = to.length()
    if norm < 1e-9:
        return 0.0
    yaw_r = math.radians(agent.yaw)
    pitch_r = math.radians(agent.pitch)
    gaze = Vec3(math.sin(yaw_r) * math.cos(pitch_r), math.sin(pitch_r),
                math.cos(yaw_r) * math.cos(pitch_r))
    cos_angle = (to.x * gaze.x + to.y * gaze.y + to.z * gaze.z) / norm
    cos_angle = min(1.0, max(-1.0, cos_angle))
    return math.degrees(math.acos(cos_angle))


def _within_cone(state: EnvState, obj) -> bool:
    return _gaze_angle(state, obj) <= TARGET_CONE_DEG


def move_user(state: EnvState, dx: float, dz: float, dyaw: float = 0.0) -> list[Event]:
    """Displace the user avatar with the same collision rules as the agent.

    User motion is not part of the agent's trajectory, so it does not enter
    the event log.
    """
    events: list[Event] = []
    length = math.hypot(dx, dz)
    state.user.yaw = normalize_yaw(state.user.yaw + dyaw)
    if length > 0.0:
        direction = (dx / length, dz / length)
        t_hit = _sweep_limit(state, state.user.position, direction, length,
                             state.agent.position)
        actual = length if t_hit > length else max(0.0, t_hit - CONTACT_GAP)
        p = state.user.position
        state.user.position = Vec3(p.x + direction[0] * actual, 0.0,
                                   p.z + direction[1] * actual)
        events.append(Event("moved", distance=actual))
        if actual < length - CONTACT_GAP:
            events.append(Event("blocked"))
    return events


def last_spoken(state: EnvState) -> str | None:
    for _step, event in reversed(state.event_log):
        if event.kind == "spoke":
            return event.text
    return None


def total_path_meters(state: EnvState) -> float:
    return sum(e.distance or 0.0 for _s, e in state.event_log if e.kind == "moved")
