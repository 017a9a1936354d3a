"""Task templates: instantiation against scenes and natural-language phrasing.

The six templates form a closed set.  Each carries three phrase variants so
large datasets are not single-phrasing; the variant is chosen by seed.  The
rule-based instruction mapper is the inverse direction: free text to a bound
task, used by the chat server and for grounding externally proposed tasks.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .assets import AssetCatalog, default_catalog
from .clients import ClientError
from .rng import SplitMix64
from .scene import SceneSpec, receptacle_of, scene_hash, describe_scene


class TaskTemplate(enum.Enum):
    COME_HERE = "come_here"
    GO_TO = "go_to"
    PICK_UP = "pick_up"
    BRING_ME = "bring_me"
    WHERE_IS = "where_is"
    PUT_ON = "put_on"


@dataclass
class TaskInstance:
    template: TaskTemplate
    instruction: str
    scene_ref: str
    object_a: int | None = None
    object_b: int | None = None
    answer: str | None = None

    def __post_init__(self):
        if (self.answer is not None) != (self.template is TaskTemplate.WHERE_IS):
            raise ValueError("answer is present iff the task is where_is")


class NoEligibleObjects(Exception):
    pass


PHRASES: dict[TaskTemplate, list[str]] = {
    TaskTemplate.COME_HERE: ["Come here.", "Come over to me.", "Walk to me, please."],
    TaskTemplate.GO_TO: ["Go to the {a}.", "Walk to the {a}.", "Head over to the {a}."],
    TaskTemplate.PICK_UP: ["Pick up the {a}.", "Grab the {a}.", "Take the {a}."],
    TaskTemplate.BRING_ME: ["Bring me the {a}.", "Fetch me the {a}.",
                            "Can you bring the {a} to me?"],
    TaskTemplate.WHERE_IS: ["Where is the {a}?", "Find the {a}.",
                            "Can you tell me where the {a} is?"],
    TaskTemplate.PUT_ON: ["Put the {a} on the {b}.", "Place the {a} on the {b}.",
                          "Move the {a} onto the {b}."],
}


def render_instruction(template: TaskTemplate, rng: SplitMix64,
                       a_name: str | None = None, b_name: str | None = None) -> str:
    phrase = rng.choice(PHRASES[template])
    return phrase.format(a=a_name, b=b_name)


def _display(scene: SceneSpec, catalog: AssetCatalog, object_id: int) -> str:
    return catalog.get(scene.object_by_id(object_id).asset).display_name


def eligible_bindings(template: TaskTemplate, scene: SceneSpec,
                      catalog: AssetCatalog) -> list[tuple[int | None, int | None]]:
    """(object_a, object_b) pairs the template can bind to in this scene."""
    if template is TaskTemplate.COME_HERE:
        return [(None, None)]

    def spec(o):
        return catalog.get(o.asset)

    grabbables = [o for o in scene.objects if o.asset in catalog and spec(o).is_grabbable]
    if template is TaskTemplate.GO_TO:
        return [(o.id, None) for o in scene.objects if o.asset in catalog]
    if template in (TaskTemplate.PICK_UP, TaskTemplate.BRING_ME):
        return [(o.id, None) for o in grabbables]
    if template is TaskTemplate.WHERE_IS:
        return [(o.id, None) for o in grabbables if o.parent_receptacle is not None]
    if template is TaskTemplate.PUT_ON:
        receptacles = [o for o in scene.objects if o.asset in catalog
                       and spec(o).is_receptacle
                       and not (spec(o).is_openable and o.open_state is not True)]
        pairs = []
        for a in grabbables:
            for b in receptacles:
                if a.id != b.id and a.parent_receptacle != b.id:
                    pairs.append((a.id, b.id))
        return pairs
    raise ValueError(f"unknown template {template}")


def instantiate_template(template: TaskTemplate, scene: SceneSpec, rng_seed: int,
                         catalog: AssetCatalog | None = None) -> TaskInstance:
    """Uniformly sample a binding and phrase the instruction; seeded."""
    catalog = catalog or default_catalog()
    bindings = eligible_bindings(template, scene, catalog)
    if not bindings:
        raise NoEligibleObjects(f"scene has no eligible objects for {template.value}")
    rng = SplitMix64(rng_seed).split("taskgen")
    a_id, b_id = rng.choice(bindings)
    a_name = _display(scene, catalog, a_id) if a_id is not None else None
    b_name = _display(scene, catalog, b_id) if b_id is not None else None
    answer = None
    if template is TaskTemplate.WHERE_IS:
        parent = receptacle_of(scene, a_id)
        answer = _display(scene, catalog, parent)
    return TaskInstance(
        template=template,
        instruction=render_instruction(template, rng, a_name, b_name),
        scene_ref=scene_hash(scene),
        object_a=a_id,
        object_b=b_id,
        answer=answer,
    )


# --- free-text mapping ------------------------------------------------------------

_PATTERNS = [
    (TaskTemplate.COME_HERE, re.compile(r"\b(come (here|over|to me)|walk to me)\b")),
    (TaskTemplate.PUT_ON, re.compile(r"\b(?:put|place|move)\s+(?:the\s+)?(?P<a>[\w ]+?)\s+"
                                     r"on(?:to)?\s+(?:the\s+)?(?P<b>[\w ]+)")),
    (TaskTemplate.BRING_ME, re.compile(r"\b(?:bring me|bring|fetch me|fetch)\s+"
                                       r"(?:the\s+)?(?P<a>[\w ]+)")),
    (TaskTemplate.PICK_UP, re.compile(r"\b(?:pick up|grab|take)\s+(?:the\s+)?(?P<a>[\w ]+)")),
    (TaskTemplate.WHERE_IS, re.compile(r"\b(?:where(?: is|'s)|find)\s+(?:the\s+)?(?P<a>[\w ]+)")),
    (TaskTemplate.GO_TO, re.compile(r"\b(?:go to|walk to|head (?:over )?to)\s+"
                                    r"(?:the\s+)?(?P<a>[\w ]+)")),
]


def _find_named(scene: SceneSpec, catalog: AssetCatalog, text: str,
                want_parented: bool = False) -> int | None:
    """Lowest-id object whose display name appears in the text fragment."""
    text = text.strip().rstrip(".?!").strip()
    best = None
    for obj in sorted(scene.objects, key=lambda o: o.id):
        if obj.asset not in catalog:
            continue
        name = catalog.get(obj.asset).display_name
        if name in text:
            if want_parented and obj.parent_receptacle is None:
                continue
            if best is None or len(name) > best[1]:
                best = (obj.id, len(name))
    return best[0] if best else None


def map_instruction(text: str, scene: SceneSpec,
                    catalog: AssetCatalog | None = None) -> TaskInstance | None:
    """Match free text to a bound TaskInstance, or None if unmappable."""
    catalog = catalog or default_catalog()
    lowered = text.lower()
    for template, pattern in _PATTERNS:
        m = pattern.search(lowered)
        if not m:
            continue
        if template is TaskTemplate.COME_HERE:
            return TaskInstance(template, text, scene_hash(scene))
        a_id = _find_named(scene, catalog, m.group("a"),
                           want_parented=template is TaskTemplate.WHERE_IS)
        if a_id is None:
            continue
        if template is TaskTemplate.PUT_ON:
            # the object must be grabbable and the target a receptacle
            b_id = _find_named(scene, catalog, m.group("b"))
            if b_id is None or b_id == a_id:
                continue
            if not catalog.get(scene.object_by_id(a_id).asset).is_grabbable:
                continue
            if not catalog.get(scene.object_by_id(b_id).asset).is_receptacle:
                continue
            return TaskInstance(template, text, scene_hash(scene),
                                object_a=a_id, object_b=b_id)
        if template in (TaskTemplate.PICK_UP, TaskTemplate.BRING_ME):
            if not catalog.get(scene.object_by_id(a_id).asset).is_grabbable:
                continue
        answer = None
        if template is TaskTemplate.WHERE_IS:
            answer = _display(scene, catalog, receptacle_of(scene, a_id))
        return TaskInstance(template, text, scene_hash(scene), object_a=a_id, answer=answer)
    return None


@dataclass
class TaskBatch:
    instances: list[TaskInstance]
    dropped: int


def tasks_for_scene_external(scene: SceneSpec, client,
                             catalog: AssetCatalog | None = None) -> TaskBatch:
    """Ask a client to play the user: one task per returned line.

    Unmappable lines are dropped and counted rather than failing the batch.
    """
    catalog = catalog or default_catalog()
    reply = client.complete({
        "description": describe_scene(scene, catalog),
        "instructions": "Suggest tasks for an assistant in this house, one per line.",
    })
    lines = reply.get("tasks")
    if not isinstance(lines, list) or not all(isinstance(t, str) for t in lines):
        raise ClientError("client reply must contain a 'tasks' list of strings")
    instances = []
    dropped = 0
    for line in lines:
        task = map_instruction(line, scene, catalog)
        if task is None:
            dropped += 1
        else:
            instances.append(task)
    return TaskBatch(instances=instances, dropped=dropped)
