"""Action filtering, voting, object association, event aggregation."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventgraph.events import (
    FrameAction,
    aggregate_events,
    associate_objects,
    attach_objects,
    filter_actions,
    unify_events,
    window_vote,
)
from eventgraph.ingest import BoundingBox

from conftest import action, box, frame, mask, obj, simple_event


def fa(frame_index, person=0, label="walk", conf=0.9, objects=frozenset()):
    return FrameAction(frame_index, person, label, conf, box(),
                       frozenset(objects), track_id=person)


class TestFilterActions:
    def test_low_confidence_dropped(self):
        records = [frame(0, actions=[action(conf=0.74)])]
        assert filter_actions(records) == []

    def test_boundary_confidence_kept(self):
        records = [frame(0, actions=[action(conf=0.75)])]
        assert len(filter_actions(records)) == 1
        records = [frame(0, actions=[action(conf=0.7499)])]
        assert filter_actions(records) == []

    def test_top_two_per_frame(self):
        records = [frame(0, actions=[
            action("a", 0.9, track=0),
            action("b", 0.8, track=1),
            action("c", 0.76, track=2),
        ])]
        kept = filter_actions(records)
        assert sorted(a.action_label for a in kept) == ["a", "b"]

    def test_tie_broken_by_label(self):
        records = [frame(0, actions=[
            action("b", 0.8, track=0),
            action("c", 0.8, track=1),
            action("a", 0.8, track=2),
        ])]
        kept = filter_actions(records)
        assert sorted(a.action_label for a in kept) == ["a", "b"]

    def test_empty(self):
        assert filter_actions([frame(0)]) == []

    def test_person_mapping_applied(self):
        records = [frame(0, actions=[action(track=7)])]
        kept = filter_actions(records, person_ids={7: 0})
        assert kept[0].person_id == 0 and kept[0].track_id == 7

    @given(st.lists(st.tuples(st.sampled_from("abcde"),
                              st.floats(0, 1),
                              st.integers(0, 4)), max_size=8))
    def test_invariants(self, raw):
        records = [frame(0, actions=[action(lbl, conf, track=t)
                                     for lbl, conf, t in raw])]
        kept = filter_actions(records)
        assert all(a.confidence >= 0.75 for a in kept)
        assert len(kept) <= 2


class TestWindowVote:
    def test_four_of_eleven_dropped(self):
        # (person, label) appears at 4 frames near f=10 -> below 5.
        actions = [fa(f) for f in (8, 10, 12, 14)]
        voted = window_vote(actions)
        assert voted == []

    def test_continuous_run_kept_everywhere(self):
        actions = [fa(f) for f in range(30)]
        assert window_vote(actions) == actions

    def test_isolated_action_dropped(self):
        assert window_vote([fa(5)]) == []

    def test_boundary_count_five(self):
        actions = [fa(f) for f in (10, 11, 12, 13, 14)]
        voted = window_vote(actions)
        # each instance sees all 5 within its window
        assert voted == actions

    def test_no_cascade(self):
        # Frames 0..4 plus stragglers at 9, 11: the stragglers see
        # counts from the pre-vote snapshot even though sparse.
        actions = [fa(f) for f in (0, 1, 2, 3, 4, 9, 11)]
        voted = window_vote(actions)
        frames = [a.frame_index for a in voted]
        # f=4 window [..9]: count 6 -> kept; f=9 window [4..14]: {4,9,11}=3 -> drop
        assert 4 in frames and 9 not in frames

    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 2),
                              st.sampled_from("ab")), max_size=40))
    def test_output_subset_of_input(self, raw):
        actions = [fa(f, person=p, label=lbl) for f, p, lbl in raw]
        voted = window_vote(actions)
        assert all(v in actions for v in voted)


class TestAssociateObjects:
    def test_same_box_same_depth_kept(self):
        person = action(b=box(0, 0, 10, 10), track=0)
        record = frame(0,
                       actions=[person],
                       objects=[obj("cup", box(0, 0, 10, 10), depth=5.0)],
                       masks=[mask(track=0, depth=5.0)])
        act = filter_actions([record])[0]
        assert associate_objects(act, record) == {"cup"}

    def test_low_iou_dropped(self):
        # Enlarged person box is [0,0,11,11]; the object overlaps only a
        # sliver of it, IoU ~ 0.002 < 0.1.
        person = action(b=box(0, 0, 10, 10), track=0)
        record = frame(0,
                       actions=[person],
                       objects=[obj("cup", box(10.5, 10.5, 80, 80), depth=5.0)],
                       masks=[mask(track=0, depth=5.0)])
        act = filter_actions([record])[0]
        assert associate_objects(act, record) == frozenset()

    def test_iou_boundary_at_point_one(self):
        # Object inside the enlarged box with IoU exactly ~0.1 passes;
        # enlarged person box [0,0,11,11] area 121, object area 12.1.
        person = action(b=box(0, 0, 10, 10), track=0)
        inside = obj("cup", box(0, 0, 11, 1.1), depth=5.0)
        record = frame(0, actions=[person], objects=[inside],
                       masks=[mask(track=0, depth=5.0)])
        act = filter_actions([record])[0]
        assert associate_objects(act, record) == {"cup"}

    def test_depth_ratio_boundary(self):
        # person depth 4.0, object 5.2 -> |1.2|/4.0 = 0.30 > 0.25: dropped.
        person = action(b=box(0, 0, 10, 10), track=0)
        record = frame(0,
                       actions=[person],
                       objects=[obj("cup", box(0, 0, 10, 10), depth=5.2)],
                       masks=[mask(track=0, depth=4.0)])
        act = filter_actions([record])[0]
        assert associate_objects(act, record) == frozenset()
        # exactly 25% passes (<= threshold)
        record = frame(0,
                       actions=[person],
                       objects=[obj("cup", box(0, 0, 10, 10), depth=5.0)],
                       masks=[mask(track=0, depth=4.0)])
        act = filter_actions([record])[0]
        assert associate_objects(act, record) == {"cup"}

    def test_missing_person_depth_passes(self):
        person = action(b=box(0, 0, 10, 10), track=0)
        record = frame(0,
                       actions=[person],
                       objects=[obj("cup", box(0, 0, 10, 10), depth=99.0)])
        act = filter_actions([record])[0]
        assert associate_objects(act, record) == {"cup"}

    def test_attach_objects_fills_candidates(self):
        person = action(b=box(0, 0, 10, 10), track=0)
        record = frame(0,
                       actions=[person],
                       objects=[obj("cup", box(0, 0, 10, 10), depth=5.0)],
                       masks=[mask(track=0, depth=5.0)])
        actions = attach_objects(filter_actions([record]), [record])
        assert actions[0].candidate_objects == {"cup"}


class TestAggregateEvents:
    def test_single_run(self):
        actions = [fa(f) for f in range(10, 51)]
        events = aggregate_events(actions)
        assert len(events) == 1
        assert (events[0].start_frame, events[0].end_frame) == (10, 50)

    def test_object_presence_below_ten_percent_excluded(self):
        actions = []
        for f in range(10, 51):  # 41 frames
            objs = {"cup"} if f < 13 else set()  # 3 of 41 ~ 7.3%
            actions.append(fa(f, objects=objs))
        events = aggregate_events(actions)
        assert events[0].objects == frozenset()

    def test_object_presence_above_ten_percent_included(self):
        actions = []
        for f in range(10, 51):  # 41 frames
            objs = {"cup"} if f < 15 else set()  # 5 of 41 ~ 12.2%
            actions.append(fa(f, objects=objs))
        events = aggregate_events(actions)
        assert events[0].objects == {"cup"}

    def test_exactly_ten_percent_included(self):
        actions = []
        for f in range(0, 20):  # 20 frames, 2 present = 10%
            objs = {"cup"} if f < 2 else set()
            actions.append(fa(f, objects=objs))
        events = aggregate_events(actions)
        assert events[0].objects == {"cup"}

    def test_gap_splits_runs(self):
        actions = [fa(f) for f in list(range(0, 10)) + list(range(20, 30))]
        events = aggregate_events(actions)
        assert len(events) == 2

    def test_span_covered_by_actions(self):
        actions = [fa(f) for f in range(5, 12)]
        events = aggregate_events(actions)
        event = events[0]
        assert set(event.per_frame_boxes) == set(range(5, 12))


class TestUnifyEvents:
    def test_gap_within_ten_percent_merges(self):
        events = [
            simple_event(0, start=10, end=120),
            simple_event(1, start=130, end=250),
        ]
        unified = unify_events(events, video_length=1500)
        assert len(unified) == 1
        assert (unified[0].start_frame, unified[0].end_frame) == (10, 250)

    def test_gap_beyond_ten_percent_kept_apart(self):
        events = [
            simple_event(0, start=10, end=120),
            simple_event(1, start=321, end=400),
        ]
        assert len(unify_events(events, video_length=1500)) == 2

    def test_exact_boundary_merges(self):
        events = [
            simple_event(0, start=0, end=100),
            simple_event(1, start=250, end=300),
        ]
        # gap 150 == 10% of 1500 -> merge (<=)
        assert len(unify_events(events, video_length=1500)) == 1

    def test_different_labels_never_merge(self):
        events = [
            simple_event(0, label="walk", start=0, end=10),
            simple_event(1, label="sit", start=10, end=20),
        ]
        assert len(unify_events(events, video_length=100)) == 2

    def test_different_persons_never_merge(self):
        events = [
            simple_event(0, person=0, start=0, end=10),
            simple_event(1, person=1, start=11, end=20),
        ]
        assert len(unify_events(events, video_length=100)) == 2

    def test_objects_refiltered_over_merged_span(self):
        # Object present in all 11 frames of a short event but absent in
        # the long one; over the merged span it falls under 10%.
        short = simple_event(0, start=0, end=10, objects={"cup"})
        long_ = simple_event(1, start=20, end=200)
        unified = unify_events([short, long_], video_length=300)
        assert len(unified) == 1
        assert unified[0].objects == frozenset()  # 11/201 ~ 5.5%

    def test_fixpoint_chain(self):
        events = [
            simple_event(0, start=0, end=10),
            simple_event(1, start=15, end=25),
            simple_event(2, start=30, end=40),
        ]
        unified = unify_events(events, video_length=100)
        assert len(unified) == 1

    def test_monotone_and_idempotent(self):
        events = [simple_event(i, start=30 * i, end=30 * i + 10) for i in range(4)]
        once = unify_events(events, video_length=200)
        assert len(once) <= len(events)
        twice = unify_events(once, video_length=200)
        assert [(e.start_frame, e.end_frame) for e in twice] == \
               [(e.start_frame, e.end_frame) for e in once]
