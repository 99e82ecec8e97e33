"""Detection benchmarking: rotated-box IoU, greedy matching and the metric suite."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

ACC_THRESHOLDS = (0.25, 0.50, 0.75)
DEFAULT_MATCH_THRESHOLD = 0.25


def bev_corners(box) -> np.ndarray:
    """Counter-clockwise ground-plane rectangle ``(4, 2)`` of a yawed box."""
    l, w = box.dimensions[0], box.dimensions[1]
    if not (l > 0 and w > 0):
        raise InvalidArgumentError(f"box footprint must have positive area, got {box.dimensions}")
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    local = np.array([[l, w], [-l, w], [-l, -w], [l, -w]]) / 2
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(box.center[:2])


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace formula; positive for counter-clockwise vertex order."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: part of ``subject`` inside the convex CCW ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= 0:
                if sp < 0:
                    out.append(_cross_point(prev, cur, sp, sc))
                out.append(cur)
            elif sp >= 0:
                out.append(_cross_point(prev, cur, sp, sc))
            prev, sp = cur, sc
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def _cross_point(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _same_box(a, b) -> bool:
    return tuple(a.center) == tuple(b.center) and tuple(a.dimensions) == tuple(b.dimensions) and a.yaw == b.yaw


def bev_intersection_area(a, b) -> float:
    return max(0.0, polygon_area(clip_polygon(bev_corners(a), bev_corners(b))))


def iou_bev(a, b) -> float:
    """IoU of the two boxes' yawed footprints on the ground plane."""
    ca, cb = bev_corners(a), bev_corners(b)
    area_a = a.dimensions[0] * a.dimensions[1]
    area_b = b.dimensions[0] * b.dimensions[1]
    if _same_box(a, b):
        return 1.0
    inter = max(0.0, polygon_area(clip_polygon(ca, cb)))
    union = area_a + area_b - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a, b) -> float:
    """Volume IoU of two boxes that rotate only about the vertical axis."""
    if min(a.dimensions) <= 0 or min(b.dimensions) <= 0:
        raise InvalidArgumentError("boxes must have positive volume")
    if _same_box(a, b):
        return 1.0
    za0, za1 = a.center[2] - a.dimensions[2] / 2, a.center[2] + a.dimensions[2] / 2
    zb0, zb1 = b.center[2] - b.dimensions[2] / 2, b.center[2] + b.dimensions[2] / 2
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0:
        return 0.0
    inter = bev_intersection_area(a, b) * dz
    union = float(np.prod(a.dimensions)) + float(np.prod(b.dimensions)) - inter
    return min(1.0, max(0.0, inter / union))


# ----------------------------------------------------------------- matching


@dataclass(frozen=True)
class MatchSet:
    pairs: list                 # (gt index, det index, iou)
    unmatched_gt: list
    unmatched_det: list


def match_frame(gts: Sequence, dets: Sequence, iou_threshold: float = DEFAULT_MATCH_THRESHOLD,
                class_aware: bool = True) -> MatchSet:
    """Greedy one-to-one matching by descending 3D IoU.

    Ties are broken by ``(gt index, det index)``; a pair is accepted when both
    members are still free and its IoU reaches ``iou_threshold``.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise InvalidArgumentError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    cands = []
    for gi, g in enumerate(gts):
        for di, d in enumerate(dets):
            if class_aware and g.class_label != d.class_label:
                continue
            v = iou_3d(g, d)
            if v >= iou_threshold:
                cands.append((-v, gi, di))
    cands.sort()
    used_g, used_d, pairs = set(), set(), []
    for neg, gi, di in cands:
        if gi in used_g or di in used_d:
            continue
        used_g.add(gi)
        used_d.add(di)
        pairs.append((gi, di, -neg))
    return MatchSet(
        pairs,
        [i for i in range(len(gts)) if i not in used_g],
        [i for i in range(len(dets)) if i not in used_d],
    )


# ------------------------------------------------------------------- report


@dataclass
class EvalReport:
    precision: dict                     # class -> TP / (TP + FP)
    mean_iou: float
    acc_at: dict                        # threshold -> fraction of matched pairs
    l1_error: float                     # metres
    l2_error: float                     # square metres
    counts: dict                        # class -> {"tp", "fp", "fn"}
    num_matches: int = 0
    num_frames: int = 0
    match_threshold: float = DEFAULT_MATCH_THRESHOLD
    pair_ious: list = field(default_factory=list, repr=False)

    def check_consistency(self) -> list:
        problems = []
        accs = [self.acc_at[t] for t in sorted(self.acc_at)]
        if any(x < y for x, y in zip(accs, accs[1:])):
            problems.append(f"acc_at is not non-increasing: {self.acc_at}")
        if self.num_matches:
            ts = sorted(self.acc_at)
            bound = sum(t * (self.acc_at[t] - (self.acc_at[ts[k + 1]] if k + 1 < len(ts) else 0.0))
                        for k, t in enumerate(ts))
            if self.mean_iou < bound - 1e-12:
                problems.append(f"mean_iou {self.mean_iou} below the bound {bound} implied by acc_at")
        for c, p in self.precision.items():
            if not 0.0 <= p <= 1.0:
                problems.append(f"precision of {c} outside [0, 1]")
        return problems

    def to_dict(self) -> dict:
        return {
            "num_frames": self.num_frames,
            "match_threshold": self.match_threshold,
            "num_matches": self.num_matches,
            "precision": dict(self.precision),
            "mean_iou": self.mean_iou,
            "acc_at": {f"{t:.2f}": v for t, v in sorted(self.acc_at.items())},
            "l1_error": self.l1_error,
            "l2_error": self.l2_error,
            "counts": {c: dict(v) for c, v in self.counts.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    def render_table(self, name: str = "Value") -> str:
        """Plain-text table with the row layout of the benchmark's result tables."""
        rows = [("Metric", name), ("Classification Precision (P)", "")]
        rows += [(c, f"{p:.2f}") for c, p in self.precision.items()]
        rows.append(("Bounding Box", ""))
        rows.append(("Mean IoU", f"{self.mean_iou:.2f}"))
        rows += [(f"Acc@IoU{t:.2f}", f"{self.acc_at[t]:.2f}") for t in sorted(self.acc_at)]
        rows.append(("L1", f"{self.l1_error:.2f}"))
        rows.append(("L2", f"{self.l2_error:.2f}"))
        width = max(len(r[0]) for r in rows) + 2
        return "".join(f"{a:<{width}}{b}".rstrip() + "\n" for a, b in rows)


def compute_report(frames: Sequence, match_threshold: float = DEFAULT_MATCH_THRESHOLD,
                   class_aware: bool = True, classes: Optional[Sequence[str]] = None) -> EvalReport:
    """Pool matches over ``frames`` (a sequence of ``(gts, dets)``) into one report.

    Precision is micro-averaged per class over all frames. Box-quality
    metrics average over every matched pair: L1 is the Manhattan distance and
    L2 the squared Euclidean distance between matched centres.
    """
    frames = list(frames)
    if not frames:
        raise InvalidArgumentError("compute_report needs at least one frame")
    if classes is None:
        seen = {b.class_label for gts, dets in frames for b in [*gts, *dets]}
        classes = sorted(seen)
    counts = {c: {"tp": 0, "fp": 0, "fn": 0} for c in classes}
    ious, l1, l2 = [], [], []
    for gts, dets in frames:
        m = match_frame(gts, dets, match_threshold, class_aware)
        for gi, di, v in m.pairs:
            d = dets[di]
            counts.setdefault(d.class_label, {"tp": 0, "fp": 0, "fn": 0})["tp"] += 1
            ious.append(v)
            diff = np.subtract(gts[gi].center, d.center)
            l1.append(float(np.sum(np.abs(diff))))
            l2.append(float(np.dot(diff, diff)))
        for di in m.unmatched_det:
            counts.setdefault(dets[di].class_label, {"tp": 0, "fp": 0, "fn": 0})["fp"] += 1
        for gi in m.unmatched_gt:
            counts.setdefault(gts[gi].class_label, {"tp": 0, "fp": 0, "fn": 0})["fn"] += 1
    precision = {}
    for c, k in counts.items():
        predicted = k["tp"] + k["fp"]
        precision[c] = k["tp"] / predicted if predicted else 0.0
    n = len(ious)
    arr = np.asarray(ious)
    return EvalReport(
        precision=precision,
        mean_iou=float(arr.mean()) if n else 0.0,
        acc_at={t: (float(np.count_nonzero(arr >= t)) / n if n else 0.0) for t in ACC_THRESHOLDS},
        l1_error=float(np.mean(l1)) if n else 0.0,
        l2_error=float(np.mean(l2)) if n else 0.0,
        counts=counts,
        num_matches=n,
        num_frames=len(frames),
        match_threshold=match_threshold,
        pair_ious=ious,
    )
