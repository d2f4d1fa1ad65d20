"""Evaluation metrics over labeled detection outputs.

All threshold-based metrics sweep the midpoints between adjacent distinct
scores (plus the two infinities), predicting "expansion" for scores
strictly above the threshold.  The random-search cost model uses the
negative-hypergeometric expectation for sampling without replacement.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import baseline_record  # noqa: F401  (re-exported for symmetry)


@dataclass(frozen=True)
class LabeledScore:
    """One location's confidence, label, and (optional) expansion size."""

    location_id: str
    score: float
    label: bool
    size: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")


@dataclass(frozen=True)
class EvalReport:
    """All §-style performance metrics for one method."""

    roc_points: tuple[tuple[float, float], ...]
    auc: float
    best_balanced_accuracy: tuple[float, float]  # (threshold, value)
    best_f1: tuple[float, float]
    size_correlation: tuple[float, float] | None  # (r, permutation p)
    cost_curve: tuple[int, ...]


def _split(scores) -> tuple[np.ndarray, np.ndarray]:
    s = np.array([x.score for x in scores], dtype=np.float64)
    y = np.array([x.label for x in scores], dtype=bool)
    return s, y


def roc_auc(scores) -> tuple[list[tuple[float, float]], float]:
    """ROC over all distinct score thresholds plus trapezoidal AUC.

    Tied scores collapse into a single threshold step, so constant scores
    produce the chance diagonal and AUC 0.5.
    """
    s, y = _split(scores)
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        tp += int(y[i:j].sum())
        fp += (j - i) - int(y[i:j].sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.trapezoid(ys, xs))
    return points, auc


def _threshold_candidates(s: np.ndarray) -> np.ndarray:
    distinct = np.unique(s)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def best_balanced_accuracy(scores) -> tuple[float, float]:
    """Maximum (TPR + TNR) / 2 over thresholds; lowest threshold on ties."""
    s, y = _split(scores)
    if y.all() or not y.any():
        raise ValueError("balanced accuracy needs both classes")
    n_pos = y.sum()
    n_neg = (~y).sum()
    best_thr, best_val = -np.inf, -1.0
    for thr in _threshold_candidates(s):
        pred = s > thr
        tpr = (pred & y).sum() / n_pos
        tnr = (~pred & ~y).sum() / n_neg
        val = (tpr + tnr) / 2.0
        if val > best_val:
            best_thr, best_val = thr, val
    return float(best_thr), float(best_val)


def best_f1(scores) -> tuple[float, float]:
    """Maximum F1 over thresholds; F1 is 0 when nothing is predicted positive."""
    s, y = _split(scores)
    if not y.any():
        raise ValueError("F1 needs at least one positive label")
    best_thr, best_val = -np.inf, -1.0
    for thr in _threshold_candidates(s):
        pred = s > thr
        tp = (pred & y).sum()
        denom = pred.sum() + y.sum()
        val = 2.0 * tp / denom if denom > 0 else 0.0
        if val > best_val:
            best_thr, best_val = thr, val
    return float(best_thr), float(best_val)


def size_correlation(scores, n_permutations: int = 10_000,
                     seed: int = 0) -> tuple[float, float]:
    """Pearson r between score and size over the true expansions.

    The two-sided p-value comes from a seeded permutation test with the
    add-one correction ``(1 + #{|r_perm| >= |r|}) / (1 + n_permutations)``.
    """
    pairs = [(x.score, x.size) for x in scores if x.label and x.size is not None]
    if len(pairs) < 3:
        raise ValueError("size correlation needs at least 3 sized expansions")
    s = np.array([p[0] for p in pairs])
    z = np.array([p[1] for p in pairs])
    if np.var(s) == 0 or np.var(z) == 0:
        raise ValueError("size correlation is undefined for zero variance")
    r = float(np.corrcoef(s, z)[0, 1])
    rng = np.random.default_rng(seed)
    s_c = s - s.mean()
    z_c = z - z.mean()
    denom = np.sqrt((s_c @ s_c) * (z_c @ z_c))
    hits = 0
    for _ in range(n_permutations):
        r_perm = (s_c @ rng.permutation(z_c)) / denom
        if abs(r_perm) >= abs(r) - 1e-12:
            hits += 1
    return r, (1 + hits) / (1 + n_permutations)


def expected_random_cost(n_total: int, n_expansions: int, n_target: int) -> float:
    """Expected trials to find ``n_target`` expansions by random search.

    Sampling without replacement makes the trial count for the n-th success
    negative-hypergeometric, with expectation ``n * (N + 1) / (M + 1)``.
    """
    if not 0 < n_target <= n_expansions < n_total:
        raise ValueError("need 0 < n <= M < N")
    return n_target * (n_total + 1) / (n_expansions + 1)


def expected_random_false_positives(n_total: int, n_expansions: int,
                                    n_target: int) -> float:
    """Expected non-expansions examined before the n-th expansion is found."""
    return expected_random_cost(n_total, n_expansions, n_target) - n_target


def monte_carlo_random_cost(n_total: int, n_expansions: int, n_target: int,
                            n_shuffles: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo oracle for :func:`expected_random_cost`."""
    if not 0 < n_target <= n_expansions < n_total:
        raise ValueError("need 0 < n <= M < N")
    rng = np.random.default_rng(seed)
    total = 0
    for _ in range(n_shuffles):
        positions = rng.choice(n_total, size=n_expansions, replace=False)
        positions.sort()
        total += int(positions[n_target - 1]) + 1
    return total / n_shuffles


def cost_curve(ranked_labels) -> list[int]:
    """Cumulative false positives before each true positive, in rank order."""
    out = []
    false_seen = 0
    for label in ranked_labels:
        if label:
            out.append(false_seen)
        else:
            false_seen += 1
    return out


def evaluate_scores(scores, correlation_seed: int = 0) -> EvalReport:
    """Full metric bundle for one method's labeled scores."""
    points, auc = roc_auc(scores)
    ranked = sorted(scores, key=lambda x: (-x.score, x.location_id))
    try:
        corr = size_correlation(ranked, seed=correlation_seed)
    except ValueError:
        corr = None
    return EvalReport(
        roc_points=tuple(points),
        auc=auc,
        best_balanced_accuracy=best_balanced_accuracy(scores),
        best_f1=best_f1(scores),
        size_correlation=corr,
        cost_curve=tuple(cost_curve([x.label for x in ranked])),
    )


# --------------------------------------------------------------------------
# report-stream plumbing
# --------------------------------------------------------------------------

def read_labels_csv(path) -> dict[str, tuple[bool, float | None]]:
    """Map location_id -> (expanded, true_area_m2 or None)."""
    labels: dict[str, tuple[bool, float | None]] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            area = row.get("true_area_m2", "")
            labels[row["location_id"]] = (
                bool(int(row["expanded"])),
                float(area) if area not in ("", None) else None,
            )
    return labels


def record_score(record: dict) -> float:
    """Scalar confidence from a unified report-stream record."""
    if record["method"] == "MLE":
        return float(record["test_statistic"])
    return float(record["confidence"])


def scores_from_records(records, labels) -> dict[str, list[LabeledScore]]:
    """Group report-stream records by method into labeled scores."""
    grouped: dict[str, list[LabeledScore]] = {}
    for record in records:
        loc = record["location_id"]
        if loc not in labels:
            raise ValueError(f"no label for location {loc!r}")
        expanded, area = labels[loc]
        grouped.setdefault(record["method"], []).append(
            LabeledScore(location_id=loc, score=record_score(record),
                         label=expanded, size=area))
    return grouped


def eval_report_dict(report: EvalReport) -> dict:
    return {
        "auc": report.auc,
        "best_balanced_accuracy": {
            "threshold": report.best_balanced_accuracy[0],
            "value": report.best_balanced_accuracy[1],
        },
        "best_f1": {"threshold": report.best_f1[0], "value": report.best_f1[1]},
        "size_correlation": None if report.size_correlation is None else {
            "r": report.size_correlation[0], "p": report.size_correlation[1]},
        "cost_curve": list(report.cost_curve),
        "roc_points": [list(p) for p in report.roc_points],
    }


def write_eval_outputs(reports: dict[str, EvalReport], out_dir) -> None:
    """Emit evaluation.json, per-method roc.csv / cost_curve.csv, and the
    method-comparison table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {method: eval_report_dict(rep) for method, rep in sorted(reports.items())}
    with open(out_dir / "evaluation.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    for method, rep in sorted(reports.items()):
        mdir = out_dir / method
        mdir.mkdir(parents=True, exist_ok=True)
        with open(mdir / "roc.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            writer.writerows(rep.roc_points)
        with open(mdir / "cost_curve.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_found", "false_positives"])
            writer.writerows(enumerate(rep.cost_curve, start=1))
    with open(out_dir / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "auc", "best_balanced_accuracy", "best_f1",
                         "size_correlation_r", "size_correlation_p"])
        for method, rep in sorted(reports.items(), key=lambda kv: -kv[1].auc):
            corr = rep.size_correlation
            writer.writerow([
                method, f"{rep.auc:.6f}",
                f"{rep.best_balanced_accuracy[1]:.6f}", f"{rep.best_f1[1]:.6f}",
                "" if corr is None else f"{corr[0]:.6f}",
                "" if corr is None else f"{corr[1]:.6g}",
            ])
