"""Intermediate code: parsing, task compilation, and motion-planned execution.

A program is a short list of primitives (goto, goto_user, target, interact,
find, speak).  Execution expands each primitive into keyframed control
actions using full internal state: paths come from the nav grid, rotations
are the signed shortest angle rounded to the degree, moves round to a
centimetre.  The keyframe convention is: a rotation-only first keyframe, then
one keyframe per path segment of the form [move_forward(d), rotate_right(r)],
the last one also centring the target vertically with rotate_up.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from . import nav, render, sim
from .clients import ClientError
from .defaults import (BODY_MIN_SEPARATION, EYE_HEIGHT, MOVE_ROUND, REACH,
                       ROTATE_ROUND)
from .geometry import Vec3, bearing_deg, signed_yaw_delta
from .taskgen import TaskInstance, TaskTemplate

PRIMITIVES = {
    "goto": ("id",),
    "goto_user": (),
    "target": ("id",),
    "interact": (),
    "find": ("id",),
    "speak": ("text",),
}


class ProgramSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ExecutionError(Exception):
    """Planner-level failure; aborts the episode as unsuccessful."""


class UnparseableAfterRetry(Exception):
    pass


@dataclass(frozen=True)
class Primitive:
    name: str
    object_id: int | None = None
    text: str | None = None

    def __str__(self) -> str:
        if self.object_id is not None:
            return f"{self.name}({self.object_id})"
        if self.text is not None:
            escaped = self.text.replace("\\", "\\\\").replace('"', '\\"')
            return f'{self.name}("{escaped}")'
        return f"{self.name}()"


@dataclass
class CodeProgram:
    primitives: list[Primitive]
    source: str = "parsed"  # template | llm | parsed

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("program must contain at least one primitive")
        if self.primitives[0].name == "interact":
            raise ValueError("interact() cannot be the first primitive")

    def __str__(self) -> str:
        return "\n".join(str(p) for p in self.primitives)


@dataclass
class Keyframe:
    actions: list[sim.Action]
    frame: render.Frame

    @property
    def code(self) -> str:
        return sim.group_code(self.actions)


GRAMMAR_HELP = """\
program := line*
line    := call (";" call)* comment?
call    := name "(" args? ")"
name    := one of goto, goto_user, target, interact, find, speak
args    := integer | double-quoted string (backslash escapes)
comment := "#" to end of line
"""


# --- parsing -------------------------------------------------------------------

_NAME_RE = re.compile(r"[a-z_]+")


def parse_program(text: str, source: str = "parsed") -> CodeProgram:
    primitives: list[Primitive] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line)
        pos = 0
        n = len(line)
        while True:
            while pos < n and line[pos] in " \t;":
                pos += 1
            if pos >= n:
                break
            primitives.append(_parse_call(line, line_no, pos))
            pos = _skip_call(line, pos)
    if not primitives:
        raise ProgramSyntaxError("empty program", 1, 1)
    try:
        return CodeProgram(primitives, source=source)
    except ValueError as exc:
        raise ProgramSyntaxError(str(exc), 1, 1) from None


def _strip_comment(line: str) -> str:
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_string = not in_string
        elif ch == "#" and not in_string:
            return line[:i]
        i += 1
    return line


def _skip_call(line: str, pos: int) -> int:
    """Advance past one call (assumes it parsed)."""
    depth = 0
    in_string = False
    while pos < len(line):
        ch = line[pos]
        if in_string:
            if ch == "\\":
                pos += 1
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return pos + 1
        pos += 1
    return pos


def _parse_call(line: str, line_no: int, pos: int) -> Primitive:
    m = _NAME_RE.match(line, pos)
    if not m:
        raise ProgramSyntaxError(f"expected a primitive name, found {line[pos]!r}",
                                 line_no, pos + 1)
    name = m.group(0)
    if name not in PRIMITIVES:
        raise ProgramSyntaxError(f"unknown primitive {name!r}", line_no, pos + 1)
    cursor = m.end()
    while cursor < len(line) and line[cursor] in " \t":
        cursor += 1
    if cursor >= len(line) or line[cursor] != "(":
        raise ProgramSyntaxError(f"expected '(' after {name}", line_no, cursor + 1)
    cursor += 1
    args = []
    while True:
        while cursor < len(line) and line[cursor] in " \t":
            cursor += 1
        if cursor >= len(line):
            raise ProgramSyntaxError("unterminated call", line_no, cursor + 1)
        if line[cursor] == ")":
            cursor += 1
            break
        if line[cursor] == '"':
            try:
                value, cursor = sim._parse_string(line, cursor)
            except sim.ActionParseError as exc:
                raise ProgramSyntaxError(str(exc), line_no, cursor + 1) from None
            args.append(value)
        else:
            am = re.match(r"-?\d+", line[cursor:])
            if not am:
                raise ProgramSyntaxError("arguments must be integers or strings",
                                         line_no, cursor + 1)
            args.append(int(am.group(0)))
            cursor += am.end()
        while cursor < len(line) and line[cursor] in " \t":
            cursor += 1
        if cursor < len(line) and line[cursor] == ",":
            cursor += 1

    arity = PRIMITIVES[name]
    if len(args) != len(arity):
        raise ProgramSyntaxError(f"{name} takes {len(arity)} argument(s), got {len(args)}",
                                 line_no, pos + 1)
    if not arity:
        return Primitive(name)
    if arity[0] == "id":
        if not isinstance(args[0], int):
            raise ProgramSyntaxError(f"{name} takes an object id", line_no, pos + 1)
        return Primitive(name, object_id=args[0])
    if not isinstance(args[0], str):
        raise ProgramSyntaxError(f"{name} takes a string", line_no, pos + 1)
    return Primitive(name, text=args[0])


# --- task compilation -------------------------------------------------------------

def compile_task(task: TaskInstance) -> CodeProgram:
    """The fixed template-to-code expansion (one row per task template)."""
    t = task.template
    a = task.object_a
    if t is TaskTemplate.COME_HERE:
        prims = [Primitive("goto_user")]
    elif t is TaskTemplate.GO_TO:
        prims = [Primitive("goto", object_id=a)]
    elif t is TaskTemplate.PICK_UP:
        prims = [Primitive("goto", object_id=a), Primitive("target", object_id=a),
                 Primitive("interact")]
    elif t is TaskTemplate.BRING_ME:
        prims = [Primitive("goto", object_id=a), Primitive("target", object_id=a),
                 Primitive("interact"), Primitive("goto_user")]
    elif t is TaskTemplate.WHERE_IS:
        prims = [Primitive("find", object_id=a),
                 Primitive("speak", text=f"It's on the {task.answer}.")]
    elif t is TaskTemplate.PUT_ON:
        b = task.object_b
        prims = [Primitive("goto", object_id=a), Primitive("target", object_id=a),
                 Primitive("interact"),
                 Primitive("goto", object_id=b), Primitive("target", object_id=b),
                 Primitive("interact")]
    else:
        raise ValueError(f"unknown template {t}")
    return CodeProgram(prims, source="template")


def write_code_external(scene_description: str, instruction: str, client) -> CodeProgram:
    """Have a client write the program; one retry with the parse error appended."""
    payload = {"description": scene_description, "instruction": instruction,
               "grammar": GRAMMAR_HELP}
    reply = client.complete(payload)
    code = reply.get("code") if isinstance(reply, dict) else None
    if not isinstance(code, str):
        raise ClientError("code client must reply with {'code': str}")
    try:
        return parse_program(code, source="llm")
    except ProgramSyntaxError as exc:
        retry_payload = dict(payload)
        retry_payload["error"] = str(exc)
        reply = client.complete(retry_payload)
        code = reply.get("code") if isinstance(reply, dict) else None
        if not isinstance(code, str):
            raise ClientError("code client must reply with {'code': str}") from None
        try:
            return parse_program(code, source="llm")
        except ProgramSyntaxError as exc2:
            raise UnparseableAfterRetry(str(exc2)) from None


# --- execution ---------------------------------------------------------------------

def _round_rotation(degrees: float) -> float:
    return float(round(degrees / ROTATE_ROUND) * ROTATE_ROUND)


def _round_move(distance: float) -> float:
    return round(distance / MOVE_ROUND) * MOVE_ROUND


def _pitch_toward(from_pos: Vec3, target: Vec3) -> float:
    horizontal = math.hypot(target.x - from_pos.x, target.z - from_pos.z)
    return math.degrees(math.atan2(target.y - EYE_HEIGHT, max(horizontal, 1e-9)))


def _emit(env: sim.EnvState, actions: list[sim.Action], cam) -> Keyframe | None:
    actions = [a for a in actions if a is not None]
    if not actions:
        return None
    for action in actions:
        result = sim.step(env, action)
        for event in result.events:
            if event.kind == "interact_failed":
                raise ExecutionError(f"interaction failed: {event.reason}")
    frame = render.render_egocentric(env, cam)
    return Keyframe(actions=actions, frame=frame)


def _rotation_action(current_yaw: float, target_yaw: float) -> sim.Action | None:
    delta = _round_rotation(signed_yaw_delta(current_yaw, target_yaw))
    if delta == 0.0:
        return None
    return sim.rotate_right(delta)


def _pitch_action(current_pitch: float, target_pitch: float) -> sim.Action | None:
    delta = _round_rotation(target_pitch - current_pitch)
    if delta == 0.0:
        return None
    return sim.rotate_up(delta)


def follow_route(env: sim.EnvState, points: list[Vec3], cam,
                 face_point: Vec3 | None = None,
                 pitch_point: Vec3 | None = None,
                 stop_when=None):
    """Yield keyframes that walk the agent through `points` (Fig-style groups).

    Rotations are re-derived from live state at each keyframe, so clamped or
    rounded motion self-corrects instead of accumulating drift.
    """
    agent = env.agent

    def done() -> bool:
        return stop_when is not None and stop_when()

    if points:
        kf = _emit(env, [_rotation_action(
            agent.yaw, bearing_deg(agent.position.x, agent.position.z,
                                   points[0].x, points[0].z))], cam)
        if kf is not None:
            yield kf
            if done():
                return

    ARRIVE_TOL = 0.06  # metres; beyond this the move was clamped and we re-aim
    i = 0
    retries = 0
    while i < len(points):
        point = points[i]
        actions: list[sim.Action | None] = []
        distance = _round_move(agent.position.planar_distance(point))
        if distance > 0.0:
            actions.append(sim.move_forward(distance))
        is_last = i == len(points) - 1
        if not is_last:
            nxt = points[i + 1]
            actions.append(_rotation_action(agent.yaw,
                                            bearing_deg(point.x, point.z, nxt.x, nxt.z)))
        else:
            if face_point is not None:
                actions.append(_rotation_action(
                    agent.yaw, bearing_deg(point.x, point.z, face_point.x, face_point.z)))
            if pitch_point is not None:
                actions.append(_pitch_action(agent.pitch,
                                             _pitch_toward(point, pitch_point)))
        kf = _emit(env, [a for a in actions if a is not None], cam)
        if kf is not None:
            yield kf
            if done():
                return

        if agent.position.planar_distance(point) > ARRIVE_TOL:
            # clamped against something: first re-aim straight at the
            # waypoint, then detour to the side of the grazed obstacle
            retries += 1
            if retries > 3:
                raise ExecutionError(f"route blocked near ({point.x:.2f}, {point.z:.2f})")
            if retries == 1:
                aim = bearing_deg(agent.position.x, agent.position.z,
                                  point.x, point.z)
            else:
                detour = _sidestep_point(env, agent.position, point,
                                         left=(retries == 2))
                points.insert(i, detour)
                aim = bearing_deg(agent.position.x, agent.position.z,
                                  detour.x, detour.z)
            kf = _emit(env, [_rotation_action(agent.yaw, aim)], cam)
            if kf is not None:
                yield kf
                if done():
                    return
            continue
        retries = 0
        i += 1

    if not points and (face_point is not None or pitch_point is not None):
        actions = []
        if face_point is not None:
            actions.append(_rotation_action(
                agent.yaw, bearing_deg(agent.position.x, agent.position.z,
                                       face_point.x, face_point.z)))
        if pitch_point is not None:
            actions.append(_pitch_action(agent.pitch,
                                         _pitch_toward(agent.position, pitch_point)))
        kf = _emit(env, [a for a in actions if a is not None], cam)
        if kf is not None:
            yield kf


def _route_grid(env: sim.EnvState) -> nav.NavGrid:
    # the user avatar is a physical obstacle but not part of the scene grid;
    # a margin over the contact distance keeps routes from grazing the body
    return nav.with_blocked_circle(env.grid, env.user.position.x,
                                   env.user.position.z,
                                   BODY_MIN_SEPARATION + 0.1)


def _sidestep_point(env: sim.EnvState, pos: Vec3, target: Vec3, left: bool) -> Vec3:
    """A short detour point beside the line to the target."""
    base = bearing_deg(pos.x, pos.z, target.x, target.z)
    offset = -50.0 if left else 50.0
    r = math.radians(base + offset)
    step = env.grid.cell_size * 1.5
    return Vec3(pos.x + math.sin(r) * step, 0.0, pos.z + math.cos(r) * step)


def _route_points(env: sim.EnvState, grid: nav.NavGrid, goal: Vec3) -> list[Vec3]:
    try:
        path = nav.find_path(grid, env.agent.position, goal)
    except nav.NoPathError:
        # the user's body can split a corridor the scene itself keeps open;
        # fall back to the scene grid and let contact recovery handle passing
        path = nav.find_path(env.grid, env.agent.position, goal)
    points = list(path.waypoints[1:])  # start from live position, not snapped cell
    if not points:
        # same cell: walk to the goal point directly if it is not trivial
        if env.agent.position.planar_distance(goal) >= MOVE_ROUND:
            points = [goal]
    return points


def _iter_goto(env: sim.EnvState, object_id: int, cam, stop_when=None):
    grid = _route_grid(env)
    point, _yaw = nav.interaction_point(env.scene, grid, object_id,
                                        catalog=env.catalog)
    obj = env.scene.object_by_id(object_id)
    yield from follow_route(env, _route_points(env, grid, point), cam,
                            face_point=obj.position, pitch_point=obj.position,
                            stop_when=stop_when)


def _iter_goto_user(env: sim.EnvState, cam):
    # candidates come from the scene grid (the user's own cell must stay
    # sighted-through); the route itself avoids the user's body
    point, _yaw = nav.user_approach_point(env.grid, env.user.position,
                                          from_pos=env.agent.position)
    yield from follow_route(env, _route_points(env, _route_grid(env), point), cam,
                            face_point=env.user.position)


def _iter_find(env: sim.EnvState, object_id: int, cam):
    if render.visible(env, object_id, cam):
        return

    def seen() -> bool:
        return render.visible(env, object_id, cam)

    yield from _iter_goto(env, object_id, cam, stop_when=seen)
    if not seen():
        raise ExecutionError(f"find({object_id}): target never became visible")


def _iter_target(env: sim.EnvState, object_id: int, cam):
    obj = env.scene.object_by_id(object_id)
    actions = []
    yaw_to = bearing_deg(env.agent.position.x, env.agent.position.z,
                         obj.position.x, obj.position.z)
    actions.append(_rotation_action(env.agent.yaw, yaw_to))
    actions.append(_pitch_action(env.agent.pitch,
                                 _pitch_toward(env.agent.position, obj.position)))
    kf = _emit(env, [a for a in actions if a is not None], cam)
    env.agent.pending_target = object_id
    # recorded action strings carry no ids, so a replay must re-derive the same
    # target from pose alone; refuse ambiguous geometry now rather than record it
    resolved = sim.resolve_target(env, ignore_pending=True)
    if resolved != object_id:
        raise ExecutionError(
            f"target({object_id}): pose resolves to {resolved}, trace would not replay")
    if kf is not None:
        yield kf


def _infer_interact_kind(env: sim.EnvState) -> str:
    target_id = sim.resolve_target(env)
    if target_id is None:
        raise ExecutionError("interact(): no resolved target")
    spec = env.catalog.get(env.scene.object_by_id(target_id).asset)
    if env.agent.held is None and spec.is_grabbable:
        return "grab"
    if env.agent.held is not None and spec.is_receptacle:
        return "put"
    if spec.is_openable:
        target = env.scene.object_by_id(target_id)
        return "close" if target.open_state else "open"
    raise ExecutionError(f"interact(): cannot infer intent for {spec.name} "
                         f"(held={env.agent.held})")


def iter_program(env: sim.EnvState, program: CodeProgram, cam=None):
    """Execute primitive by primitive, yielding keyframes as they happen."""
    cam = cam or env.camera or render.CameraConfig()
    for prim in program.primitives:
        if prim.name == "goto":
            yield from _iter_goto(env, prim.object_id, cam)
            obj = env.scene.object_by_id(prim.object_id)
            from .scene import world_aabb
            from .geometry import point_rect_distance
            d = point_rect_distance(env.agent.position.x, env.agent.position.z,
                                    world_aabb(obj, env.catalog).footprint())
            if d > REACH:
                raise ExecutionError(f"goto({prim.object_id}): arrived out of reach "
                                     f"({d:.2f} m)")
        elif prim.name == "goto_user":
            yield from _iter_goto_user(env, cam)
        elif prim.name == "find":
            yield from _iter_find(env, prim.object_id, cam)
        elif prim.name == "target":
            yield from _iter_target(env, prim.object_id, cam)
        elif prim.name == "interact":
            kind = _infer_interact_kind(env)
            kf = _emit(env, [sim.interact(kind)], cam)
            if kf is not None:
                yield kf
        elif prim.name == "speak":
            kf = _emit(env, [sim.speak(prim.text)], cam)
            if kf is not None:
                yield kf
        else:
            raise ExecutionError(f"unknown primitive {prim.name}")


def execute_program(env: sim.EnvState, program: CodeProgram, cam=None) -> list[Keyframe]:
    return list(iter_program(env, program, cam))
