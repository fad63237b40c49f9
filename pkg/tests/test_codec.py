"""Token grammar: serialization, parsing, record building."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazekit import (
    GazePoint,
    GazeRecord,
    GazekitError,
    InvalidInputError,
    MalformedResponseError,
    Message,
    NormBox,
    PromptConfig,
    Task,
    build_record,
    gaze_point_to_box,
    parse_response,
    serialize_box,
    serialize_gaze_statement,
    serialize_object_ref,
)
from _helpers import make_sample

CFG = PromptConfig()

norm_boxes = st.tuples(
    st.integers(0, 999), st.integers(0, 999), st.integers(0, 999), st.integers(0, 999)
).map(lambda t: NormBox(min(t[0], t[2]), min(t[1], t[3]), max(t[0], t[2]), max(t[1], t[3])))


class TestPromptConfig:
    def test_defaults(self):
        assert CFG.lambda_margin == 20
        assert CFG.box_start == "<box_start>"
        assert CFG.out_of_frame_phrase == "looking out of the image"

    def test_lambda_bounds(self):
        PromptConfig(lambda_margin=1)
        PromptConfig(lambda_margin=499)
        with pytest.raises(InvalidInputError):
            PromptConfig(lambda_margin=0)
        with pytest.raises(InvalidInputError):
            PromptConfig(lambda_margin=500)

    def test_tokens_distinct_and_non_empty(self):
        with pytest.raises(InvalidInputError):
            PromptConfig(box_start="<box_end>")
        with pytest.raises(InvalidInputError):
            PromptConfig(ref_start="")

    def test_template_override_merges(self):
        cfg = PromptConfig(task_prompt_templates={"gaze_target": "Find it near {head}."})
        assert cfg.template_for(Task.GAZE_TARGET) == "Find it near {head}."
        assert "person" in cfg.template_for(Task.PERSON_DETECTION)


class TestSerializeBox:
    def test_example(self):
        assert (
            serialize_box(NormBox(125, 250, 500, 750), CFG)
            == "<box_start>(125,250),(500,750)<box_end>"
        )

    def test_degenerate(self):
        assert serialize_box(NormBox(0, 0, 0, 0), CFG) == "<box_start>(0,0),(0,0)<box_end>"

    @given(norm_boxes)
    def test_round_trip(self, box):
        pred = parse_response(serialize_box(box, CFG), CFG)
        assert pred.boxes == (box,)
        assert not pred.out_of_frame


class TestGazePointToBox:
    def test_center(self):
        assert gaze_point_to_box(GazePoint(0.5, 0.5), CFG) == NormBox(480, 480, 520, 520)

    def test_clamped_low(self):
        assert gaze_point_to_box(GazePoint(0.0, 0.0), CFG) == NormBox(0, 0, 20, 20)

    def test_clamped_high(self):
        assert gaze_point_to_box(GazePoint(1.0, 1.0), CFG) == NormBox(979, 979, 999, 999)

    @given(
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.0, 1.0, allow_nan=False),
        st.integers(1, 499),
    )
    def test_always_valid_and_square_when_unclamped(self, x, y, lam):
        cfg = PromptConfig(lambda_margin=lam)
        box = gaze_point_to_box(GazePoint(x, y), cfg)
        assert 0 <= box.x1 <= box.x2 <= 999
        assert 0 <= box.y1 <= box.y2 <= 999
        cx = min(int(x * 1000), 999)
        cy = min(int(y * 1000), 999)
        if lam <= cx <= 999 - lam and lam <= cy <= 999 - lam:
            assert box.x2 - box.x1 == 2 * lam
            assert box.y2 - box.y1 == 2 * lam


class TestObjectRef:
    def test_example(self):
        text = serialize_object_ref("cup", NormBox(100, 100, 200, 200), CFG)
        assert text == "<ref_start>cup<ref_end><box_start>(100,100),(200,200)<box_end>"

    def test_injection_guard(self):
        with pytest.raises(InvalidInputError):
            serialize_object_ref("cup<box_start>", NormBox(0, 0, 1, 1), CFG)
        with pytest.raises(InvalidInputError):
            serialize_object_ref("", NormBox(0, 0, 1, 1), CFG)

    def test_round_trip(self):
        text = serialize_object_ref("remote control", NormBox(10, 20, 30, 40), CFG)
        pred = parse_response(text, CFG, task=Task.GAZE_OBJECT)
        assert pred.class_label == "remote control"
        assert pred.object_box() == NormBox(10, 20, 30, 40)


class TestGazeStatement:
    def test_out_of_frame(self):
        assert serialize_gaze_statement(None, None, CFG, out_of_frame=True) == (
            "looking out of the image"
        )

    def test_box_only(self):
        box = NormBox(480, 480, 520, 520)
        assert serialize_gaze_statement(box, None, CFG) == serialize_box(box, CFG)

    def test_box_with_object(self):
        gaze = NormBox(480, 480, 520, 520)
        obj = NormBox(450, 430, 600, 620)
        text = serialize_gaze_statement(gaze, ("cup", obj), CFG)
        assert text == serialize_box(gaze, CFG) + serialize_object_ref("cup", obj, CFG)

    def test_requires_box_when_in_frame(self):
        with pytest.raises(InvalidInputError):
            serialize_gaze_statement(None, None, CFG)

    @given(norm_boxes, norm_boxes, st.sampled_from(["cup", "tv", "remote control", "potted plant"]))
    def test_round_trip(self, gaze, obj, label):
        text = serialize_gaze_statement(gaze, (label, obj), CFG)
        pred = parse_response(text, CFG, task=Task.GAZE_OBJECT)
        assert pred.boxes == (gaze, obj)
        assert pred.class_label == label
        assert pred.gaze_point() == GazePoint(*gaze.center_norm())
        assert pred.object_box() == obj


class TestParseResponse:
    def test_single_box(self):
        pred = parse_response("<box_start>(480,480),(520,520)<box_end>", CFG)
        assert pred.boxes == (NormBox(480, 480, 520, 520),)
        assert not pred.out_of_frame
        assert pred.out_score == 0.0

    def test_out_of_frame_phrase(self):
        pred = parse_response("looking out of the image", CFG)
        assert pred.boxes == ()
        assert pred.out_of_frame
        assert pred.out_score == 1.0

    def test_surrounding_text_ignored(self):
        pred = parse_response(
            "The target is <box_start>(5,6),(7,8)<box_end>, thanks.", CFG
        )
        assert pred.boxes == (NormBox(5, 6, 7, 8),)

    def test_unterminated_box(self):
        with pytest.raises(MalformedResponseError) as exc_info:
            parse_response("<box_start>(1,2),(3", CFG)
        assert exc_info.value.offset == 0

    def test_offset_points_at_failure(self):
        text = "<box_start>(1,2),(3,4)<box_end> and <box_start>junk"
        with pytest.raises(MalformedResponseError) as exc_info:
            parse_response(text, CFG)
        assert exc_info.value.offset == text.index("<box_start>", 1)

    def test_stray_closer(self):
        with pytest.raises(MalformedResponseError):
            parse_response("text <box_end> more", CFG)
        with pytest.raises(MalformedResponseError):
            parse_response("<ref_end>", CFG)

    def test_bad_payload(self):
        with pytest.raises(MalformedResponseError):
            parse_response("<box_start>(1,2),(3,x)<box_end>", CFG)
        with pytest.raises(MalformedResponseError):
            parse_response("<box_start>(1, 2),(3,4)<box_end>", CFG)

    def test_reversed_corners_rejected(self):
        with pytest.raises(MalformedResponseError):
            parse_response("<box_start>(500,500),(100,100)<box_end>", CFG)

    def test_out_of_range_clamped_and_flagged(self):
        pred = parse_response("<box_start>(100,100),(1200,300)<box_end>", CFG)
        assert pred.boxes == (NormBox(100, 100, 999, 300),)
        assert pred.clamped

    def test_negative_clamped(self):
        pred = parse_response("<box_start>(-5,0),(10,10)<box_end>", CFG)
        assert pred.boxes == (NormBox(0, 0, 10, 10),)
        assert pred.clamped

    def test_empty_ref_rejected(self):
        with pytest.raises(MalformedResponseError):
            parse_response("<ref_start><ref_end><box_start>(0,0),(1,1)<box_end>", CFG, task=Task.GAZE_OBJECT)

    def test_token_inside_ref_rejected(self):
        with pytest.raises(MalformedResponseError):
            parse_response(
                "<ref_start>a<box_start>b<ref_end>", CFG, task=Task.GAZE_OBJECT
            )

    def test_raw_text_preserved(self):
        text = "prefix <box_start>(1,1),(2,2)<box_end> suffix"
        assert parse_response(text, CFG).raw_text == text

    def test_boxless_text_is_structured_error(self):
        with pytest.raises(GazekitError):
            parse_response("no tokens at all", CFG)

    @settings(max_examples=200)
    @given(st.text(alphabet="<>box_startend(),0123456789ref ", max_size=80))
    def test_total_no_crashes(self, text):
        try:
            parse_response(text, CFG, task=Task.PERSON_DETECTION)
        except GazekitError:
            pass


class TestBuildRecord:
    def test_gaze_target_structure(self):
        record = build_record(make_sample(0), Task.GAZE_TARGET, CFG)
        roles = [m.role for m in record.messages]
        assert roles == ["system", "user", "assistant"]
        user = record.messages[1].content
        assert CFG.vision_start in user and CFG.vision_end in user
        assert "<box_start>" in user
        assert "{head}" not in user
        answer = record.messages[2].content
        assert answer.count("<box_start>") == 1
        assert record.image_refs == ("img/0.jpg",)

    def test_head_box_in_user_turn(self):
        sample = make_sample(0, width=1000, height=1000, head=(100, 200, 300, 400))
        record = build_record(sample, Task.GAZE_TARGET, CFG)
        assert "<box_start>(100,200),(300,400)<box_end>" in record.messages[1].content

    def test_gaze_target_uses_centroid(self):
        sample = make_sample(0, gaze=((0.2, 0.2), (0.4, 0.4)))
        record = build_record(sample, Task.GAZE_TARGET, CFG)
        pred = parse_response(record.assistant_text(), CFG)
        expected = gaze_point_to_box(GazePoint(0.3, 0.3), CFG)
        assert pred.boxes == (expected,)

    def test_gaze_object_statement(self):
        sample = make_sample(0, obj=((320, 120, 480, 240), "remote control"))
        record = build_record(sample, Task.GAZE_OBJECT, CFG)
        pred = parse_response(record.assistant_text(), CFG, task=Task.GAZE_OBJECT)
        assert pred.class_label == "remote control"
        assert len(pred.boxes) == 2
        assert pred.object_box() == NormBox(500, 250, 750, 500)

    def test_gaze_object_requires_object(self):
        with pytest.raises(InvalidInputError):
            build_record(make_sample(0), Task.GAZE_OBJECT, CFG)

    def test_out_of_frame_records(self):
        sample = make_sample(0, gaze=(), in_frame=False)
        assert build_record(sample, Task.GAZE_INOUT, CFG).assistant_text() == (
            "looking out of the image"
        )
        assert build_record(sample, Task.GAZE_TARGET, CFG).assistant_text() == (
            "looking out of the image"
        )
        assert build_record(sample, Task.GAZE_OBJECT, CFG).assistant_text() == (
            "looking out of the image"
        )

    def test_in_frame_inout_record(self):
        record = build_record(make_sample(0), Task.GAZE_INOUT, CFG)
        assert record.assistant_text() == CFG.in_frame_phrase

    def test_person_detection_record(self):
        sample = make_sample(0, width=1000, height=1000, head=(100, 200, 300, 400))
        record = build_record(sample, Task.PERSON_DETECTION, CFG)
        assert record.assistant_text() == "<box_start>(100,200),(300,400)<box_end>"

    def test_depth_ref_included(self):
        sample = make_sample(0, depth="depth/0.png")
        record = build_record(sample, Task.GAZE_TARGET, CFG)
        assert record.image_refs == ("img/0.jpg", "depth/0.png")

    def test_no_system_turn_when_empty(self):
        cfg = PromptConfig(system_prompt="")
        record = build_record(make_sample(0), Task.GAZE_TARGET, cfg)
        assert [m.role for m in record.messages] == ["user", "assistant"]

    def test_determinism(self):
        a = build_record(make_sample(0), Task.GAZE_TARGET, CFG)
        b = build_record(make_sample(0), Task.GAZE_TARGET, CFG)
        assert a == b


class TestGazeRecord:
    def test_role_alternation_enforced(self):
        with pytest.raises(InvalidInputError):
            GazeRecord(
                sample_id="a", task=Task.GAZE_TARGET,
                messages=(Message("user", "hi"), Message("user", "again")),
            )
        with pytest.raises(InvalidInputError):
            GazeRecord(
                sample_id="a", task=Task.GAZE_TARGET,
                messages=(Message("assistant", "hi"),),
            )

    def test_bad_role_rejected(self):
        with pytest.raises(InvalidInputError):
            Message("narrator", "hello")

    def test_assistant_text(self):
        record = GazeRecord(
            sample_id="a", task=Task.GAZE_TARGET,
            messages=(Message("user", "q"), Message("assistant", "answer")),
        )
        assert record.assistant_text() == "answer"
