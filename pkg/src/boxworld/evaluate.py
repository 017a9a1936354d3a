"""Task success criteria and the policy evaluation harness.

Success thresholds are declared here (1.5 m proximity, case-insensitive
substring answer match); the harness drives an arbitrary policy through
render-act loops and aggregates success rates per (template, room count).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from . import planner, procgen, render, sim
from .defaults import REACH, STEP_CAP
from .geometry import point_rect_distance
from .rng import SplitMix64
from .scene import world_aabb
from .taskgen import TaskInstance, TaskTemplate

PROXIMITY = 1.5  # metres, for come_here / bring_me


@dataclass
class EvalOutcome:
    success: bool
    steps: int
    path_meters: float
    reason: str
    spoke_without_sight: bool = False

    def __post_init__(self):
        if not self.success and not self.reason:
            raise ValueError("failed outcomes must carry a reason")


def _user_distance(env: sim.EnvState) -> float:
    return env.agent.position.planar_distance(env.user.position)


def evaluate(final: sim.EnvState, task: TaskInstance, steps: int = 0,
             spoke_without_sight: bool = False) -> EvalOutcome:
    """Judge a finished episode against its task's success rule."""
    path_meters = sim.total_path_meters(final)

    def outcome(success: bool, reason: str = "") -> EvalOutcome:
        return EvalOutcome(success=success, steps=steps, path_meters=path_meters,
                           reason=reason if (reason or success) else "failed",
                           spoke_without_sight=spoke_without_sight)

    t = task.template
    if t is TaskTemplate.COME_HERE:
        d = _user_distance(final)
        if d <= PROXIMITY:
            return outcome(True)
        return outcome(False, f"agent ended {d:.2f} m from user (> {PROXIMITY})")

    if t is TaskTemplate.GO_TO:
        obj = final.scene.object_by_id(task.object_a)
        d = point_rect_distance(final.agent.position.x, final.agent.position.z,
                                world_aabb(obj, final.catalog).footprint())
        if d > REACH:
            return outcome(False, f"agent ended {d:.2f} m from target (> {REACH})")
        if not render.visible(final, task.object_a, final.camera):
            return outcome(False, "target not visible at the end")
        return outcome(True)

    if t is TaskTemplate.PICK_UP:
        if final.agent.held == task.object_a:
            return outcome(True)
        return outcome(False, "not holding target")

    if t is TaskTemplate.BRING_ME:
        if final.agent.held != task.object_a:
            return outcome(False, "not holding target")
        d = _user_distance(final)
        if d > PROXIMITY:
            return outcome(False, f"holding target but {d:.2f} m from user")
        return outcome(True)

    if t is TaskTemplate.WHERE_IS:
        spoken = sim.last_spoken(final)
        if spoken is None:
            return outcome(False, "nothing was spoken")
        if task.answer.lower() in spoken.lower():
            return outcome(True)
        return outcome(False, f"answer {spoken!r} does not name {task.answer!r}")

    if t is TaskTemplate.PUT_ON:
        obj = final.scene.object_by_id(task.object_a)
        if obj.parent_receptacle != task.object_b:
            return outcome(False, f"object ended on {obj.parent_receptacle}, "
                                  f"not {task.object_b}")
        if final.agent.held is not None:
            return outcome(False, "hand not empty")
        return outcome(True)

    return outcome(False, f"unknown template {t}")


# --- policies -----------------------------------------------------------------------

class OraclePolicy:
    """Replays the planner's keyframes; the upper bound the harness can reach."""

    name = "oracle"

    def __init__(self):
        self._queue: list[str] = []

    def bind_episode(self, env: sim.EnvState, task: TaskInstance) -> None:
        self._queue = []
        try:
            shadow = copy.deepcopy(env)
            program = planner.compile_task(task)
            for kf in planner.iter_program(shadow, program):
                self._queue.append(kf.code)
        except Exception:
            self._queue = []  # fail the episode by immediate done()

    def __call__(self, task_text: str, history) -> str:
        if not self._queue:
            return "done()"
        return self._queue.pop(0)


class RandomPolicy:
    """Uniform random small controls; the sanity lower bound."""

    name = "random"

    _CHOICES = ["move_forward(0.25)", "move_forward(0.5)", "move_forward(1)",
                "rotate_right(30)", "rotate_right(-30)", "rotate_right(90)",
                "rotate_right(-90)", "rotate_up(15)", "rotate_up(-15)"]

    def __init__(self, seed: int = 0):
        self._rng = SplitMix64(seed).split("random_policy")

    def bind_episode(self, env, task) -> None:
        pass

    def __call__(self, task_text: str, history) -> str:
        return self._rng.choice(self._CHOICES)


# --- harness ------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    seed: int
    template: str
    rooms: int
    outcome: EvalOutcome


def run_episode(policy, seed: int, template: TaskTemplate, rooms: int,
                step_cap: int = STEP_CAP, catalog=None, cam=None) -> EpisodeRecord:
    config = procgen.config_for_rooms(rooms)
    scene, task = procgen.generate_scene_for_task(seed, template, config, catalog)
    env = sim.reset(scene, catalog=catalog, camera=cam)
    if hasattr(policy, "bind_episode"):
        policy.bind_episode(env, task)

    history: list[tuple[render.Frame, str | None]] = []
    steps = 0
    ever_visible = False
    protocol_failure: str | None = None
    while steps < step_cap:
        frame = render.render_egocentric(env, cam)
        history.append((frame, None))
        if (template is TaskTemplate.WHERE_IS and not ever_visible
                and render.visible(env, task.object_a, cam or env.camera)):
            ever_visible = True
        text = policy(task.instruction, history)
        if not isinstance(text, str):
            protocol_failure = "policy returned a non-string"
            break
        if text.strip() == "done()":
            break
        try:
            actions = sim.parse_action_group(text)
        except sim.ActionParseError as exc:
            protocol_failure = f"unparseable action group: {exc}"
            break
        for action in actions:
            sim.step(env, action)
        history[-1] = (frame, text)
        steps += 1

    spoke_blind = False
    if template is TaskTemplate.WHERE_IS:
        spoke_blind = (sim.last_spoken(env) is not None) and not ever_visible

    outcome = evaluate(env, task, steps=steps, spoke_without_sight=spoke_blind)
    if protocol_failure is not None:
        outcome = EvalOutcome(False, steps, outcome.path_meters, protocol_failure,
                              outcome.spoke_without_sight)
    elif steps >= step_cap and not outcome.success:
        outcome = EvalOutcome(False, steps, outcome.path_meters,
                              f"step cap ({step_cap}) reached: {outcome.reason}",
                              outcome.spoke_without_sight)
    return EpisodeRecord(seed=seed, template=template.value, rooms=rooms,
                         outcome=outcome)


def run_policy_eval(policy, episodes: list[tuple[int, TaskTemplate, int]],
                    step_cap: int = STEP_CAP, catalog=None, cam=None,
                    out_path: str | Path | None = None) -> dict:
    """Run the policy across episodes and build the success-rate grid."""
    records = [run_episode(policy, seed, template, rooms, step_cap, catalog, cam)
               for seed, template, rooms in episodes]

    grid: dict[str, dict[str, dict]] = {}
    for record in records:
        row = grid.setdefault(record.template, {})
        label = {1: "one_room", 2: "two_room", 3: "three_room", 4: "four_room"}[record.rooms]
        cell = row.setdefault(label, {"episodes": 0, "successes": 0})
        cell["episodes"] += 1
        cell["successes"] += int(record.outcome.success)
    for row in grid.values():
        for cell in row.values():
            cell["success_rate"] = round(cell["successes"] / cell["episodes"], 4)

    report = {
        "policy": getattr(policy, "name", type(policy).__name__),
        "step_cap": step_cap,
        "episodes": len(records),
        "grid": grid,
        "failures": [
            {"seed": r.seed, "template": r.template, "rooms": r.rooms,
             "reason": r.outcome.reason}
            for r in records if not r.outcome.success
        ][:50],
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return report
