"""Tokenized conversation format: serialization and response parsing.

Gaze ground truth is exchanged as plain text with paired marker tokens.
A box is ``<box_start>(x1,y1),(x2,y2)<box_end>`` on the 1000-bin grid, an
object reference is ``<ref_start>class<ref_end>`` followed by its box, and
out-of-frame samples are a fixed phrase with no boxes at all.  Serialization
is deterministic; parsing is total, returning either a Prediction or a
structured error with the byte offset of the offending token.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .core import (
    NORM_BINS,
    AnnotatedSample,
    GazePoint,
    NormBox,
    Prediction,
    Task,
    norm_box,
    norm_coord,
)
from .errors import InvalidInputError, MalformedResponseError

DEFAULT_TASK_PROMPTS: dict[Task, str] = {
    Task.PERSON_DETECTION: (
        "Detect every person in the image and output one bounding box per person."
    ),
    Task.GAZE_TARGET: (
        "The person with head at {head} is looking at a target in the scene. "
        "Output the bounding box of the gaze target."
    ),
    Task.GAZE_OBJECT: (
        "The person with head at {head} is looking at a target in the scene. "
        "Output the gaze target box followed by the class and box of the gazed object."
    ),
    Task.GAZE_INOUT: (
        "State whether the person with head at {head} is looking inside the image "
        "or looking out of the image."
    ),
}

_BOX_PAYLOAD = re.compile(r"\((-?\d+),(-?\d+)\),\((-?\d+),(-?\d+)\)\Z")


@dataclass(frozen=True)
class PromptConfig:
    """Grammar constants: marker tokens, gaze-box margin, task templates."""

    lambda_margin: int = 20
    im_start: str = "<im_start>"
    im_end: str = "<im_end>"
    vision_start: str = "<vision_start>"
    vision_end: str = "<vision_end>"
    box_start: str = "<box_start>"
    box_end: str = "<box_end>"
    ref_start: str = "<ref_start>"
    ref_end: str = "<ref_end>"
    out_of_frame_phrase: str = "looking out of the image"
    in_frame_phrase: str = "looking inside the image"
    system_prompt: str = "You are a helpful assistant."
    task_prompt_templates: Mapping[Task, str] = field(default_factory=dict)

    def __post_init__(self):
        try:
            object.__setattr__(self, "lambda_margin", operator.index(self.lambda_margin))
        except TypeError:
            raise InvalidInputError("lambda_margin must be an integer") from None
        if not 1 <= self.lambda_margin <= 499:
            raise InvalidInputError(f"lambda_margin must be in [1, 499], got {self.lambda_margin}")
        tokens = self.token_strings()
        if any(not t for t in tokens):
            raise InvalidInputError("all marker tokens must be non-empty")
        if len(set(tokens)) != len(tokens):
            raise InvalidInputError("marker tokens must be pairwise distinct")
        if not self.out_of_frame_phrase or not self.in_frame_phrase:
            raise InvalidInputError("frame phrases must be non-empty")
        merged = dict(DEFAULT_TASK_PROMPTS)
        merged.update({Task(k): str(v) for k, v in dict(self.task_prompt_templates).items()})
        object.__setattr__(self, "task_prompt_templates", merged)

    def token_strings(self) -> tuple[str, ...]:
        return (
            self.im_start,
            self.im_end,
            self.vision_start,
            self.vision_end,
            self.box_start,
            self.box_end,
            self.ref_start,
            self.ref_end,
        )

    def template_for(self, task: Task) -> str:
        return self.task_prompt_templates[task]


@dataclass(frozen=True)
class Message:
    """One conversation turn."""

    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise InvalidInputError(f"unknown message role {self.role!r}")


@dataclass(frozen=True)
class GazeRecord:
    """A full conversation for one sample and one task."""

    sample_id: str
    task: Task
    messages: tuple[Message, ...]
    image_refs: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.sample_id:
            raise InvalidInputError("record sample_id must be non-empty")
        if not self.messages:
            raise InvalidInputError("record requires at least one message")
        body = self.messages[1:] if self.messages[0].role == "system" else self.messages
        for i, msg in enumerate(body):
            expected = "user" if i % 2 == 0 else "assistant"
            if msg.role != expected:
                raise InvalidInputError(
                    f"messages must alternate user/assistant, found {msg.role!r} at turn {i}"
                )

    def assistant_text(self) -> str:
        """Content of the final assistant turn."""
        for msg in reversed(self.messages):
            if msg.role == "assistant":
                return msg.content
        raise InvalidInputError("record has no assistant turn")


def serialize_box(b: NormBox, cfg: PromptConfig) -> str:
    """Render a bin-grid box as its token string, no whitespace."""
    return f"{cfg.box_start}({b.x1},{b.y1}),({b.x2},{b.y2}){cfg.box_end}"


def gaze_point_to_box(g: GazePoint, cfg: PromptConfig) -> NormBox:
    """Surround a gaze point with a box of half-width lambda_margin bins."""
    cx = norm_coord(g.x, 1.0)
    cy = norm_coord(g.y, 1.0)
    lam = cfg.lambda_margin
    hi = NORM_BINS - 1
    return NormBox(
        min(max(cx - lam, 0), hi),
        min(max(cy - lam, 0), hi),
        min(max(cx + lam, 0), hi),
        min(max(cy + lam, 0), hi),
    )


def serialize_object_ref(class_label: str, b: NormBox, cfg: PromptConfig) -> str:
    """Render ``<ref_start>class<ref_end>`` followed by the object box."""
    if not class_label:
        raise InvalidInputError("class label must be non-empty")
    for token in cfg.token_strings():
        if token in class_label:
            raise InvalidInputError(f"class label may not contain marker token {token!r}")
    return f"{cfg.ref_start}{class_label}{cfg.ref_end}{serialize_box(b, cfg)}"


def serialize_gaze_statement(
    gaze_box: Optional[NormBox],
    obj: Optional[tuple[str, NormBox]],
    cfg: PromptConfig,
    out_of_frame: bool = False,
) -> str:
    """Render the full gaze answer: gaze box, optional object reference.

    Out-of-frame samples serialize to the fixed phrase with no boxes.
    """
    if out_of_frame:
        return cfg.out_of_frame_phrase
    if gaze_box is None:
        raise InvalidInputError("in-frame gaze statement requires a gaze box")
    text = serialize_box(gaze_box, cfg)
    if obj is not None:
        text += serialize_object_ref(obj[0], obj[1], cfg)
    return text


def build_record(sample: AnnotatedSample, task: Task, cfg: PromptConfig) -> GazeRecord:
    """Assemble the conversation for one sample and task.

    The user turn carries the vision placeholder, the task instruction, and
    the serialized head box; the assistant turn carries the ground truth.
    """
    head = serialize_box(norm_box(sample.head_box, sample.image_size), cfg)
    instruction = cfg.template_for(task).replace("{head}", head)
    user = f"{cfg.vision_start}{cfg.vision_end}\n{instruction}"
    answer = _ground_truth_text(sample, task, cfg)

    messages = []
    if cfg.system_prompt:
        messages.append(Message("system", cfg.system_prompt))
    messages.append(Message("user", user))
    messages.append(Message("assistant", answer))

    refs = (sample.image_path,) if sample.depth_path is None else (sample.image_path, sample.depth_path)
    return GazeRecord(
        sample_id=sample.sample_id, task=task, messages=tuple(messages), image_refs=refs
    )


def _ground_truth_text(sample: AnnotatedSample, task: Task, cfg: PromptConfig) -> str:
    if task is Task.PERSON_DETECTION:
        return serialize_box(norm_box(sample.head_box, sample.image_size), cfg)
    if task is Task.GAZE_INOUT:
        return cfg.in_frame_phrase if sample.in_frame else cfg.out_of_frame_phrase
    if not sample.in_frame:
        return cfg.out_of_frame_phrase

    centroid = sample.gaze_centroid()
    gaze_box = gaze_point_to_box(centroid, cfg)
    if task is Task.GAZE_TARGET:
        return serialize_gaze_statement(gaze_box, None, cfg)
    if task is Task.GAZE_OBJECT:
        if sample.gazed_object is None:
            raise InvalidInputError(
                f"{sample.sample_id}: gaze-object record requires a gazed object"
            )
        obj_box = norm_box(sample.gazed_object.bbox, sample.image_size)
        return serialize_gaze_statement(gaze_box, (sample.gazed_object.class_label, obj_box), cfg)
    raise InvalidInputError(f"unsupported task {task!r}")


def _next_token(text: str, pos: int, tokens: dict[str, str]) -> Optional[tuple[int, str]]:
    best: Optional[tuple[int, str]] = None
    for kind, token in tokens.items():
        i = text.find(token, pos)
        if i != -1 and (best is None or i < best[0]):
            best = (i, kind)
    return best


def parse_response(
    text: str,
    cfg: PromptConfig,
    sample_id: str = "",
    task: Task = Task.GAZE_TARGET,
) -> Prediction:
    """Parse response text back into a structured Prediction.

    Collects every box and object reference in textual order and checks for
    the out-of-frame phrase.  Unbalanced or garbled token pairs raise a
    malformed-response error carrying the byte offset; coordinates outside
    the bin range are clamped and flagged on the result.
    """
    tokens = {
        "box_start": cfg.box_start,
        "box_end": cfg.box_end,
        "ref_start": cfg.ref_start,
        "ref_end": cfg.ref_end,
    }
    boxes: list[NormBox] = []
    classes: list[str] = []
    clamped = False

    pos = 0
    while True:
        hit = _next_token(text, pos, tokens)
        if hit is None:
            break
        i, kind = hit
        if kind in ("box_end", "ref_end"):
            raise MalformedResponseError(f"unmatched {tokens[kind]!r}", offset=i)
        closer = tokens["box_end" if kind == "box_start" else "ref_end"]
        start = i + len(tokens[kind])
        j = text.find(closer, start)
        if j == -1:
            raise MalformedResponseError(f"unterminated {tokens[kind]!r}", offset=i)
        inner = text[start:j]
        if kind == "box_start":
            box, was_clamped = _parse_box_payload(inner, i)
            boxes.append(box)
            clamped = clamped or was_clamped
        else:
            if not inner.strip():
                raise MalformedResponseError("empty object reference", offset=i)
            if _next_token(inner, 0, tokens) is not None:
                raise MalformedResponseError("marker token inside object reference", offset=i)
            classes.append(inner)
        pos = j + len(closer)

    out = cfg.out_of_frame_phrase in text
    return Prediction(
        sample_id=sample_id,
        task=task,
        boxes=tuple(boxes),
        class_label=classes[0] if classes else None,
        out_of_frame=out,
        out_score=1.0 if out else 0.0,
        raw_text=text,
        clamped=clamped,
    )


def _parse_box_payload(inner: str, offset: int) -> tuple[NormBox, bool]:
    m = _BOX_PAYLOAD.match(inner)
    if m is None:
        raise MalformedResponseError(f"bad box payload {inner!r}", offset=offset)
    raw = [int(g) for g in m.groups()]
    coords = [min(max(v, 0), NORM_BINS - 1) for v in raw]
    try:
        box = NormBox(*coords)
    except InvalidInputError as exc:
        raise MalformedResponseError(str(exc), offset=offset) from None
    return box, coords != raw
