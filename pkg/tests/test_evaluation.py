import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indoor_lidar.annotate import LabeledBox
from indoor_lidar.errors import InvalidArgumentError
from indoor_lidar.evaluation import (
    bev_corners,
    clip_polygon,
    compute_report,
    iou_3d,
    iou_bev,
    match_frame,
    polygon_area,
)


def box(x=0.0, y=0.0, z=0.0, l=1.0, w=1.0, h=1.0, yaw=0.0, cls="A"):
    return LabeledBox(cls, (x, y, z), (l, w, h), yaw)


boxes = st.builds(
    box,
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1),
    st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-4, 4),
)


class TestPolygons:
    def test_shoelace(self):
        sq = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
        assert polygon_area(sq) == 4.0
        assert polygon_area(sq[::-1]) == -4.0

    def test_clip_square_by_shifted_square(self):
        a = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
        b = a + 1
        assert polygon_area(clip_polygon(a, b)) == pytest.approx(1.0)

    def test_corners_are_ccw(self):
        assert polygon_area(bev_corners(box(l=3, w=2, yaw=0.7))) == pytest.approx(6.0)


class TestIou:
    def test_rotated_square_in_square(self):
        # unit square rotated 45 deg inside a 2x2 square: inter 1, union 4
        assert iou_bev(box(l=2, w=2), box(yaw=math.pi / 4)) == pytest.approx(0.25)

    def test_rotation_by_pi_is_identity(self):
        a = box(l=2, w=1, yaw=0.3)
        assert iou_3d(a, box(l=2, w=1, yaw=0.3 + math.pi)) == pytest.approx(1.0)

    def test_disjoint_and_vertical_separation(self):
        assert iou_bev(box(), box(x=5)) == 0.0
        assert iou_3d(box(), box(z=1.0)) == 0.0

    def test_stacked_half(self):
        assert iou_3d(box(), box(z=0.5)) == pytest.approx(1 / 3)

    def test_degenerate(self):
        with pytest.raises(InvalidArgumentError):
            bev_corners(type("B", (), {"dimensions": (0, 1, 1), "yaw": 0.0, "center": (0, 0, 0)})())

    @settings(max_examples=300)
    @given(boxes, boxes)
    def test_bounds_and_symmetry(self, a, b):
        for f in (iou_bev, iou_3d):
            v = f(a, b)
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(f(b, a), abs=1e-9)

    @settings(max_examples=200)
    @given(boxes, st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi))
    def test_rigid_motion_invariance(self, a, dx, dy, rot):
        b = box(a.center[0] + 0.3, a.center[1], a.center[2], 1.0, 2.0, 1.0, 0.4)

        def move(q):
            c, s = math.cos(rot), math.sin(rot)
            x, y, z = q.center
            return LabeledBox(q.class_label, (c * x - s * y + dx, s * x + c * y + dy, z), q.dimensions, q.yaw + rot)

        assert iou_3d(move(a), move(b)) == pytest.approx(iou_3d(a, b), abs=1e-9)


class TestMatching:
    def test_greedy_prefers_highest_iou(self):
        gts = [box(0), box(0.6)]
        dets = [box(0.5), box(0.05)]
        m = match_frame(gts, dets)
        assert sorted((g, d) for g, d, _ in m.pairs) == [(0, 1), (1, 0)]

    def test_class_aware(self):
        m = match_frame([box(cls="A")], [box(cls="B")])
        assert m.pairs == [] and m.unmatched_gt == [0] and m.unmatched_det == [0]
        assert len(match_frame([box(cls="A")], [box(cls="B")], class_aware=False).pairs) == 1

    def test_threshold(self):
        assert match_frame([box()], [box(0.7)], 0.25).pairs == []
        assert len(match_frame([box()], [box(0.6)], 0.25).pairs) == 1  # exactly 0.25 counts
        with pytest.raises(InvalidArgumentError):
            match_frame([], [], 0.0)

    def test_one_to_one(self):
        m = match_frame([box()], [box(), box(0.01)])
        assert len(m.pairs) == 1 and m.unmatched_det == [1]


class TestReport:
    def test_empty_input(self):
        with pytest.raises(InvalidArgumentError):
            compute_report([])

    def test_no_matches(self):
        r = compute_report([([box()], [box(10)])])
        assert r.mean_iou == 0.0 and r.acc_at[0.25] == 0.0 and r.precision == {"A": 0.0}

    def test_named_classes_without_predictions(self):
        r = compute_report([([box()], [box()])], classes=["A", "B"])
        assert r.precision == {"A": 1.0, "B": 0.0}

    def test_outputs(self):
        r = compute_report([([box(), box(3, cls="B")], [box(0.2), box(3, cls="B")])])
        table = r.render_table("Sim")
        for row in ("Classification Precision (P)", "Mean IoU", "Acc@IoU0.25", "Acc@IoU0.50", "Acc@IoU0.75", "L1", "L2"):
            assert row in table
        d = json.loads(r.to_json())
        assert d["num_matches"] == 2 and set(d["acc_at"]) == {"0.25", "0.50", "0.75"}

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.lists(boxes, max_size=4), st.lists(boxes, max_size=4)), min_size=1, max_size=4))
    def test_invariants(self, frames):
        r = compute_report(frames)
        assert r.check_consistency() == []
        assert 0.0 <= r.mean_iou <= 1.0
        assert r.l2_error >= 0 and r.l1_error >= 0
        if r.num_matches:  # every pooled pair cleared the match threshold
            assert r.mean_iou >= 0.25 - 1e-12
