"""Classification F1 at two label levels and a greedy-match embedding score.

The generation score matches each word of one text to its most similar word
in the other (cosine of word embeddings). It has no IDF weighting, baseline
rescaling or contextual token embeddings.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import GoldAnnotation, infer_domain, language_from_name
from .embedding import Embedder

LEVELS = (("Narrative", "main"), ("Sub Narrative", "sub"))
DOMAIN_ROWS = ("CC", "URW", "Overall")
AVERAGES = ("samples", "micro", "macro")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    n: int


@dataclass(frozen=True)
class GenScore:
    precision: float
    recall: float
    f1: float


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def sample_prf(pred, gold) -> tuple[float, float, float]:
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0, 1.0, 1.0
    if not pred or not gold:
        return 0.0, 0.0, 0.0
    hit = len(pred & gold)
    p, r = hit / len(pred), hit / len(gold)
    return p, r, _harmonic(p, r)


def f1_samples(preds: Sequence, golds: Sequence, average: str = "samples") -> PRF:
    """Precision/recall/F1 of predicted vs gold label sets.

    ``samples`` averages per-article scores; ``micro`` pools counts;
    ``macro`` averages per-label F1 over labels seen in either side.
    """
    if len(preds) != len(golds):
        raise EvaluationError(f"length mismatch: {len(preds)} predictions vs {len(golds)} gold")
    n = len(preds)
    if n == 0:
        return PRF(math.nan, math.nan, math.nan, 0)
    if average == "samples":
        rows = np.array([sample_prf(p, g) for p, g in zip(preds, golds)])
        p, r, f = rows.mean(axis=0)
        return PRF(float(p), float(r), float(f), n)
    if average == "micro":
        tp = sum(len(set(p) & set(g)) for p, g in zip(preds, golds))
        n_pred = sum(len(set(p)) for p in preds)
        n_gold = sum(len(set(g)) for g in golds)
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        return PRF(p, r, _harmonic(p, r), n)
    if average == "macro":
        labels = sorted({lab for s in list(preds) + list(golds) for lab in s})
        per = []
        for lab in labels:
            tp = sum(lab in p and lab in g for p, g in zip(preds, golds))
            fp = sum(lab in p and lab not in g for p, g in zip(preds, golds))
            fn = sum(lab not in p and lab in g for p, g in zip(preds, golds))
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            per.append((p, r, _harmonic(p, r)))
        if not per:
            return PRF(1.0, 1.0, 1.0, n)
        p, r, f = np.mean(per, axis=0)
        return PRF(float(p), float(r), float(f), n)
    raise ValueError(f"unknown averaging {average!r}; expected one of {AVERAGES}")


def classification_report(preds: Mapping[str, tuple], golds: Mapping[str, GoldAnnotation],
                          average: str = "samples") -> dict[str, PRF]:
    """Per level and domain: {"Narrative CC": PRF, ..., "Sub Narrative Overall": PRF}.

    ``preds`` maps article id to ``(narratives, subs)``. Articles whose gold
    labels carry no single domain prefix only count towards Overall.
    """
    if set(preds) != set(golds):
        missing = sorted(set(golds) ^ set(preds))
        raise EvaluationError(f"prediction/gold id mismatch: {missing[:5]}")
    ids = list(golds)
    domain = {i: infer_domain(golds[i].narratives + golds[i].sub_narratives) for i in ids}
    report = {}
    for level_name, level in LEVELS:
        for row in DOMAIN_ROWS:
            sel = [i for i in ids if row == "Overall" or domain[i] == row]
            pred_sets = [preds[i][0 if level == "main" else 1] for i in sel]
            gold_sets = [golds[i].labels(level) for i in sel]
            report[f"{level_name} {row}"] = f1_samples(pred_sets, gold_sets, average)
    return report


def compare_runs(runs: Mapping[str, Mapping[str, tuple]], golds: Mapping[str, GoldAnnotation],
                 average: str = "samples") -> tuple[list[str], list[list]]:
    """One row per metric, one F1 column per run (insertion order)."""
    if not runs:
        raise EvaluationError("no runs to compare")
    ids = set(golds)
    for name, preds in runs.items():
        if set(preds) != ids:
            raise EvaluationError(f"run {name!r} covers different article ids than the gold set")
    reports = {name: classification_report(p, golds, average) for name, p in runs.items()}
    header = ["Task", *runs]
    metrics = [f"{lvl} {row}" for lvl, _ in LEVELS for row in DOMAIN_ROWS]
    rows = [[m, *(reports[name][m].f1 for name in runs)] for m in metrics]
    return header, rows


def greedy_match_score(candidate: str, reference: str, embedder: Embedder) -> GenScore:
    cand, ref = candidate.split(), reference.split()
    if not cand or not ref:
        raise EvaluationError("greedy match needs two non-empty texts")
    C = np.vstack(embedder.embed(cand))
    R = np.vstack(embedder.embed(ref))
    sim = C @ R.T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    f1 = _harmonic(precision, recall) if precision > 0 and recall > 0 else 0.0
    return GenScore(precision, recall, f1)


def generation_report(pairs: Mapping[str, tuple[str, str]], embedder: Embedder) -> dict[str, GenScore]:
    """Mean P/R/F1 per language plus Overall.

    ``pairs`` maps a filename to ``(candidate, reference)``; the language is
    read from the filename prefix.
    """
    by_lang: dict[str, list[GenScore]] = {}
    everything = []
    for fname, (cand, ref) in pairs.items():
        score = greedy_match_score(cand, ref, embedder)
        by_lang.setdefault(language_from_name(fname), []).append(score)
        everything.append(score)
    if not everything:
        raise EvaluationError("no explanation/reference pairs")

    def mean(scores):
        arr = np.array([[s.precision, s.recall, s.f1] for s in scores])
        p, r, f = arr.mean(axis=0)
        return GenScore(float(p), float(r), float(f))

    out = {lang: mean(by_lang[lang]) for lang in sorted(by_lang)}
    out["Overall"] = mean(everything)
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def write_table(path: str | Path, header: Sequence[str], rows: Sequence[Sequence],
                fmt: str = "tsv") -> Path:
    path = Path(path)
    if fmt == "tsv":
        lines = ["\t".join(header)] + ["\t".join(_fmt(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "json":
        records = [{h: _jsonable(v) for h, v in zip(header, row)} for row in rows]
        path.write_text(json.dumps(records, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def format_console(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(header)] + [[_fmt(v) or "-" for v in row] for row in rows]
    widths = [max(len(r[c]) for r in cells) for c in range(len(header))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) if c == 0 else v.rjust(w)
                               for c, (v, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def detail_rows(reports: Mapping[str, Mapping[str, PRF]]) -> tuple[list[str], list[list]]:
    header = ["Task", "run", "precision", "recall", "f1", "n"]
    rows = []
    for run, report in reports.items():
        for metric, prf in report.items():
            rows.append([metric, run, prf.precision, prf.recall, prf.f1, prf.n])
    return header, rows


def generation_rows(report: Mapping[str, GenScore]) -> tuple[list[str], list[list]]:
    header = ["language", "precision", "recall", "f1"]
    return header, [[lang, *asdict(s).values()] for lang, s in report.items()]
