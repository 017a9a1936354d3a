"""End-to-end episode generation and dataset production.

An episode is scene -> task -> program -> execution -> evaluation, a pure
function of (seed, template, config).  Datasets shard episodes across a
process pool; because each episode depends only on its own seed, output bytes
are identical regardless of parallelism.  Episodes whose planner failed are
"rejected" (written aside with a machine-readable reason) as opposed to
episodes that executed but failed evaluation.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import evaluate as eval_mod, nav, planner, procgen, render, sim
from .assets import AssetCatalog, default_catalog
from .scene import SceneSpec, load_scene, save_scene, scene_hash
from .taskgen import TaskInstance, TaskTemplate

SCENE_STORE = "scenes"
EPISODE_DIR = "episodes"
REJECTED_DIR = "rejected"


@dataclass
class TrajStep:
    frame: render.Frame
    code: str


@dataclass
class Trajectory:
    task_text: str
    scene_hash: str
    steps: list[TrajStep]
    success: bool
    seed: int
    template: str
    rejected: bool = False          # planner could not produce a clean episode
    failure_reason: str | None = None
    answer: str | None = None
    scene: SceneSpec | None = None
    task: TaskInstance | None = None
    final_env: sim.EnvState | None = None

    @property
    def keyframe_count(self) -> int:
        return len(self.steps)


def generate_episode(seed: int, template: TaskTemplate,
                     config: procgen.ProcGenConfig | None = None,
                     catalog: AssetCatalog | None = None,
                     cam: render.CameraConfig | None = None) -> Trajectory:
    """One full oracle episode; deterministic in (seed, template, config)."""
    catalog = catalog or default_catalog()
    cam = cam or render.CameraConfig()
    scene, task = procgen.generate_scene_for_task(seed, template, config, catalog)
    env = sim.reset(scene, catalog=catalog, camera=cam)
    program = planner.compile_task(task)

    steps: list[TrajStep] = []
    rejected = False
    failure_reason: str | None = None
    try:
        for kf in planner.iter_program(env, program, cam):
            steps.append(TrajStep(frame=kf.frame, code=kf.code))
    except (nav.NavError, planner.ExecutionError) as exc:
        rejected = True
        failure_reason = f"{type(exc).__name__}: {exc}"

    if rejected:
        success = False
    else:
        outcome = eval_mod.evaluate(env, task, steps=len(steps))
        success = outcome.success
        if not success:
            failure_reason = outcome.reason

    return Trajectory(
        task_text=task.instruction,
        scene_hash=task.scene_ref,
        steps=steps,
        success=success,
        seed=seed,
        template=template.value,
        rejected=rejected,
        failure_reason=failure_reason,
        answer=task.answer,
        scene=scene,
        task=task,
        final_env=env,
    )


# --- export -------------------------------------------------------------------------

def export_interleaved(traj: Trajectory, directory: str | Path) -> None:
    """Write frames/NNNN.png, trajectory.jsonl, and meta.json into `directory`."""
    directory = Path(directory)
    if directory.exists() and any(directory.iterdir()):
        raise FileExistsError(f"refusing to write into non-empty {directory}")
    frames_dir = directory / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    jsonl_lines = []
    for i, step in enumerate(traj.steps):
        frame_name = f"frames/{i:04d}.png"
        (directory / frame_name).write_bytes(render.encode_png(step.frame))
        jsonl_lines.append(json.dumps({"step": i, "frame": frame_name,
                                       "action": step.code}))
    (directory / "trajectory.jsonl").write_text("\n".join(jsonl_lines) + "\n"
                                                if jsonl_lines else "",
                                                encoding="utf-8")

    meta = {
        "task": traj.task_text,
        "scene_hash": traj.scene_hash,
        "success": traj.success,
        "seed": traj.seed,
        "answer": traj.answer,
        "template": traj.template,
        "object_a": traj.task.object_a if traj.task else None,
        "object_b": traj.task.object_b if traj.task else None,
        "failure_reason": traj.failure_reason,
        "camera": None,
        "final": None,
    }
    if traj.final_env is not None:
        cam = traj.final_env.camera
        meta["camera"] = {"width": cam.width, "height": cam.height,
                          "horizontal_fov": cam.horizontal_fov}
        meta["final"] = {
            "agent": [traj.final_env.agent.position.x, traj.final_env.agent.position.y,
                      traj.final_env.agent.position.z],
            "agent_yaw": traj.final_env.agent.yaw,
            "held": traj.final_env.agent.held,
            "objects": {str(o.id): [o.position.x, o.position.y, o.position.z]
                        for o in traj.final_env.scene.objects},
        }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True)
                                         + "\n", encoding="utf-8")


def write_scene_store(scene: SceneSpec, dataset_root: str | Path) -> str:
    root = Path(dataset_root) / SCENE_STORE
    root.mkdir(parents=True, exist_ok=True)
    digest = scene_hash(scene)
    path = root / f"{digest}.scene.json"
    if not path.exists():
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(save_scene(scene))
        tmp.replace(path)
    return digest


# --- dataset -------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    seed_start: int
    count: int
    templates: list[str]
    config: dict
    episodes: list[dict] = field(default_factory=list)
    totals: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "seed_start": self.seed_start,
            "count": self.count,
            "templates": self.templates,
            "config": self.config,
            "episodes": self.episodes,
            "totals": self.totals,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _episode_name(seed: int, template: TaskTemplate) -> str:
    return f"{seed:010d}_{template.value}"


def _generate_and_export(args) -> dict:
    seed, template_value, config_kwargs, out_dir, cam_kwargs = args
    template = TaskTemplate(template_value)
    config = procgen.ProcGenConfig(**config_kwargs)
    cam = render.CameraConfig(**cam_kwargs)
    out_root = Path(out_dir)
    try:
        traj = generate_episode(seed, template, config, cam=cam)
    except procgen.GenerationFailed as exc:
        name = _episode_name(seed, template)
        directory = out_root / REJECTED_DIR / name
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "meta.json").write_text(json.dumps({
            "seed": seed, "template": template.value, "success": False,
            "failure_reason": f"GenerationFailed: {exc}",
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return {"seed": seed, "template": template.value, "success": False,
                "rejected": True, "keyframes": 0,
                "path": f"{REJECTED_DIR}/{name}"}

    write_scene_store(traj.scene, out_root)
    name = _episode_name(seed, template)
    subdir = REJECTED_DIR if traj.rejected else EPISODE_DIR
    directory = out_root / subdir / name
    export_interleaved(traj, directory)
    return {"seed": seed, "template": template.value, "success": traj.success,
            "rejected": traj.rejected, "keyframes": traj.keyframe_count,
            "path": f"{subdir}/{name}"}


def generate_dataset(seed_start: int, count: int, templates: list[TaskTemplate],
                     parallelism: int = 1, out_dir: str | Path = "dataset",
                     config: procgen.ProcGenConfig | None = None,
                     cam: render.CameraConfig | None = None) -> DatasetManifest:
    """Episodes for seeds [seed_start, seed_start+count), round-robin templates."""
    if not templates:
        raise ValueError("need at least one template")
    config = config or procgen.ProcGenConfig()
    cam = cam or render.CameraConfig()
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    config_kwargs = {
        "room_count": config.room_count,
        "house_extent": config.house_extent,
        "furniture_per_room": tuple(config.furniture_per_room),
        "small_objects_per_room": tuple(config.small_objects_per_room),
        "max_placement_attempts": config.max_placement_attempts,
    }
    cam_kwargs = {"width": cam.width, "height": cam.height,
                  "horizontal_fov": cam.horizontal_fov}
    jobs = [(seed_start + i, templates[i % len(templates)].value,
             config_kwargs, str(out_root), cam_kwargs)
            for i in range(count)]

    if parallelism <= 1:
        rows = [_generate_and_export(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_generate_and_export, jobs, chunksize=1))

    rows.sort(key=lambda r: r["seed"])
    manifest = DatasetManifest(
        seed_start=seed_start,
        count=count,
        templates=[t.value for t in templates],
        config={"room_count": config.room_count, "house_extent": config.house_extent,
                "furniture_per_room": list(config.furniture_per_room),
                "small_objects_per_room": list(config.small_objects_per_room),
                "camera": cam_kwargs},
        episodes=rows,
        totals={
            "episodes": len(rows),
            "successes": sum(r["success"] for r in rows),
            "rejected": sum(r["rejected"] for r in rows),
            "keyframes": sum(r["keyframes"] for r in rows),
        },
    )
    (out_root / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


# --- replay --------------------------------------------------------------------------

class ReplayError(Exception):
    pass


def _find_scene_store(directory: Path) -> Path:
    for candidate in (directory.parent.parent / SCENE_STORE,
                      directory.parent / SCENE_STORE,
                      directory / SCENE_STORE):
        if candidate.is_dir():
            return candidate
    raise ReplayError(f"no scene store next to {directory}")


def replay_episode(directory: str | Path,
                   catalog: AssetCatalog | None = None) -> sim.EnvState:
    """Re-step an exported episode from its scene; returns the final state."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text("utf-8"))
    store = _find_scene_store(directory)
    scene_path = store / f"{meta['scene_hash']}.scene.json"
    if not scene_path.exists():
        raise ReplayError(f"scene {meta['scene_hash']} missing from store")
    data = scene_path.read_bytes()
    scene = load_scene(data)
    if scene_hash(scene) != meta["scene_hash"]:
        raise ReplayError("scene store content does not match its hash")

    cam_meta = meta.get("camera") or {}
    cam = render.CameraConfig(**cam_meta) if cam_meta else render.CameraConfig()
    env = sim.reset(scene, catalog=catalog, camera=cam)
    jsonl = (directory / "trajectory.jsonl").read_text("utf-8")
    for line in jsonl.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        try:
            actions = sim.parse_action_group(record["action"])
        except sim.ActionParseError as exc:
            raise ReplayError(f"step {record.get('step')}: {exc}") from None
        for action in actions:
            sim.step(env, action)
    return env


def replay_check(directory: str | Path, catalog: AssetCatalog | None = None,
                 frames: bool = True, tolerance: float = 1e-6) -> dict:
    """Replay and verify final positions (and optionally frame bytes)."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text("utf-8"))
    env = replay_episode(directory, catalog)
    report = {"position_ok": True, "frames_ok": True, "max_error": 0.0}

    final = meta.get("final")
    if final:
        ax, ay, az = final["agent"]
        err = max(abs(env.agent.position.x - ax), abs(env.agent.position.z - az))
        for obj in env.scene.objects:
            rx, ry, rz = final["objects"][str(obj.id)]
            err = max(err, abs(obj.position.x - rx), abs(obj.position.y - ry),
                      abs(obj.position.z - rz))
        report["max_error"] = err
        report["position_ok"] = err <= tolerance
        if final.get("held") != env.agent.held:
            report["position_ok"] = False

    if frames:
        # re-render by re-stepping a fresh env keyframe by keyframe
        env2 = sim.reset(load_scene((_find_scene_store(directory)
                                     / f"{meta['scene_hash']}.scene.json").read_bytes()),
                         catalog=catalog,
                         camera=render.CameraConfig(**(meta.get("camera") or {})))
        jsonl = (directory / "trajectory.jsonl").read_text("utf-8")
        for line in jsonl.splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            for action in sim.parse_action_group(record["action"]):
                sim.step(env2, action)
            rendered = render.encode_png(render.render_egocentric(env2, env2.camera))
            stored = (directory / record["frame"]).read_bytes()
            if rendered != stored:
                report["frames_ok"] = False
                report["first_bad_frame"] = record["step"]
                break
    return report
