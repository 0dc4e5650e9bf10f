"""Frame-level ROC AUC and event-level detection counts."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .scoring import ScoreSeries, normalize_scores

DETECTORS = ("combined", "generator", "discriminator")


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), via the Mann-Whitney rank sum."""
    scores = np.asarray(scores, float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if not set(np.unique(labels)) <= {0, 1}:
        raise ValueError("labels must be binary")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def optimal_threshold(scores, labels) -> float:
    """Threshold maximising TPR - FPR, placed midway below the chosen score.

    A frame is flagged when ``score >= threshold``.
    """
    scores = np.asarray(scores, float)
    labels = np.asarray(labels)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    uniq = np.unique(scores)[::-1]
    best, best_j = 0, -np.inf
    for i, thr in enumerate(uniq):
        flagged = scores >= thr
        j = (flagged & (labels == 1)).sum() / n_pos - (flagged & (labels == 0)).sum() / n_neg
        if j > best_j:
            best, best_j = i, j
    below = uniq[best + 1] if best + 1 < len(uniq) else 0.0
    return float((uniq[best] + below) / 2.0)


def detect_events(scores, threshold: float, merge_gap: int = 50) -> list[tuple[int, int]]:
    """Inclusive runs with ``score >= threshold``; runs fewer than ``merge_gap`` frames apart are joined."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    above = np.asarray(scores) >= threshold
    runs: list[list[int]] = []
    for i, v in enumerate(above):
        if not v:
            continue
        if runs and runs[-1][1] == i - 1:
            runs[-1][1] = i
        elif runs and i - runs[-1][1] - 1 < merge_gap:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    return [(s, e) for s, e in runs]


@dataclass
class EventResult:
    correct_detections: int
    false_alarms: int
    ground_truth: int = 0

    @property
    def precision(self) -> float | None:
        denom = self.correct_detections + self.false_alarms
        return self.correct_detections / denom if denom else None

    @property
    def recall(self) -> float | None:
        return self.correct_detections / self.ground_truth if self.ground_truth else None

    def __add__(self, other: "EventResult") -> "EventResult":
        return EventResult(self.correct_detections + other.correct_detections,
                           self.false_alarms + other.false_alarms,
                           self.ground_truth + other.ground_truth)


def _overlaps(a, b) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def event_metrics(detected, ground_truth) -> EventResult:
    """Overlap matching: each GT event is credited at most once.

    A detection touching no GT event is a false alarm. A detection that only
    touches already-credited GT events counts as neither.
    """
    credited = [False] * len(ground_truth)
    correct = false_alarms = 0
    for det in detected:
        hits = [i for i, gt in enumerate(ground_truth) if _overlaps(det, gt)]
        if not hits:
            false_alarms += 1
            continue
        free = [i for i in hits if not credited[i]]
        if free:
            credited[free[0]] = True
            correct += 1
    return EventResult(correct, false_alarms, len(ground_truth))


def detector_scores(series: list[ScoreSeries], detector: str = "combined", norm_scope: str = "clip") -> list[np.ndarray]:
    """Per-clip scores for the combined, generator-only or discriminator-only detector."""
    if detector == "combined":
        return [s.score for s in series]
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector {detector!r}")
    raw = [s.pixel_term if detector == "generator" else s.disc_term for s in series]
    if norm_scope == "clip":
        return [normalize_scores(r) for r in raw]
    joint = normalize_scores(np.concatenate(raw))
    return np.split(joint, np.cumsum([len(r) for r in raw])[:-1])


def evaluate(series: list[ScoreSeries], labels: dict[str, np.ndarray],
             events: dict[str, list[tuple[int, int]]] | None = None, mode: str = "frame",
             threshold: float | None = None, merge_gap: int = 50, norm_scope: str = "clip") -> dict:
    """Build the evaluation report as a plain dict."""
    if mode not in ("frame", "event"):
        raise ValueError(f"mode must be 'frame' or 'event', got {mode!r}")
    missing = [s.clip_id for s in series if s.clip_id not in labels]
    if missing:
        raise KeyError(f"no labels for clips {missing}")
    for s in series:
        if len(labels[s.clip_id]) != len(s):
            raise ValueError(f"clip {s.clip_id}: {len(s)} scores vs {len(labels[s.clip_id])} labels")
    all_labels = np.concatenate([labels[s.clip_id] for s in series])
    report: dict = {"frames": int(all_labels.size), "abnormal_frames": int(all_labels.sum()),
                    "norm_scope": norm_scope}
    per_detector = {d: detector_scores(series, d, norm_scope) for d in DETECTORS}
    report["auc"] = {d: roc_auc(np.concatenate(v), all_labels) for d, v in per_detector.items()}
    per_clip = {}
    for s, sc in zip(series, per_detector["combined"]):
        lab = labels[s.clip_id]
        per_clip[s.clip_id] = roc_auc(sc, lab) if 0 < lab.sum() < lab.size else None
    report["per_clip_auc"] = per_clip
    report["lambda_s"] = {s.clip_id: s.lambda_s for s in series}

    if mode == "event":
        combined = per_detector["combined"]
        if threshold is None:
            threshold = optimal_threshold(np.concatenate(combined), all_labels)
        if events is None:
            from .data import labels_to_events
            events = {s.clip_id: labels_to_events(labels[s.clip_id]) for s in series}
        total = EventResult(0, 0, 0)
        table = []
        for s, sc in zip(series, combined):
            det = detect_events(sc, threshold, merge_gap)
            gt = events.get(s.clip_id, [])
            res = event_metrics(det, gt)
            total = total + res
            table.append({"clip_id": s.clip_id, "detected": [list(d) for d in det], "ground_truth": [list(g) for g in gt],
                          "correct": res.correct_detections, "false_alarms": res.false_alarms})
        report["event"] = {"threshold": threshold, "merge_gap": merge_gap,
                           "correct_detections": total.correct_detections, "false_alarms": total.false_alarms,
                           "ground_truth_events": total.ground_truth,
                           "precision": total.precision, "recall": total.recall, "clips": table}
    return report


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def format_event_row(result: EventResult) -> str:
    """``correct/false_alarms,precision%`` with an empty precision when undefined."""
    p = result.precision
    return f"{result.correct_detections}/{result.false_alarms},{'' if p is None else f'{100 * p:.1f}'}"

