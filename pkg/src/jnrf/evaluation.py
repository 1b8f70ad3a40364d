"""Lenient micro-averaged scoring for NER and end-to-end NER+RE.

A predicted entity matches a gold entity when their character spans overlap
by at least one character and the types agree; a predicted relation matches
when its type agrees and both arguments match leniently. Matching is greedy
one-to-one in document order. Undefined precision/recall (zero denominators)
is reported as 0.

Three stratified views mirror the analysis tables: per entity/relation
type, per document-length bin (Freedman-Diaconis widths anchored at 0),
and per signed sentence distance (negative when the drug comes first).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    Document,
    ENTITY_TYPES,
    EntitySpan,
    Relation,
    RELATION_TYPES,
)
from .tokenizer import sentence_index_of_char


class EvaluationError(ValueError):
    pass


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def add(self, other: "MatchCounts"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    def prf(self) -> tuple[float, float, float]:
        return self.precision, self.recall, self.f1


def _overlap(a: EntitySpan, b: EntitySpan) -> bool:
    return a.start < b.end and b.start < a.end


def _entity_matches(p: EntitySpan, g: EntitySpan) -> bool:
    return p.etype == g.etype and _overlap(p, g)


def _entity_order(e: EntitySpan):
    return (e.start, e.end, e.etype)


def match_entities(pred, gold) -> MatchCounts:
    pred = sorted(pred, key=_entity_order)
    gold = sorted(gold, key=_entity_order)
    taken = [False] * len(gold)
    counts = MatchCounts()
    for p in pred:
        for i, g in enumerate(gold):
            if not taken[i] and _entity_matches(p, g):
                taken[i] = True
                counts.tp += 1
                break
        else:
            counts.fp += 1
    counts.fn = taken.count(False)
    return counts


def _relation_order(r: Relation):
    return (r.arg1.start, r.arg1.end, r.arg2.start, r.arg2.end, r.rtype)


def _relation_matches(p: Relation, g: Relation) -> bool:
    return (
        p.rtype == g.rtype
        and _entity_matches(p.arg1, g.arg1)
        and _entity_matches(p.arg2, g.arg2)
    )


def match_relations(pred, gold) -> MatchCounts:
    pred = sorted(pred, key=_relation_order)
    gold = sorted(gold, key=_relation_order)
    taken = [False] * len(gold)
    counts = MatchCounts()
    for p in pred:
        for i, g in enumerate(gold):
            if not taken[i] and _relation_matches(p, g):
                taken[i] = True
                counts.tp += 1
                break
        else:
            counts.fp += 1
    counts.fn = taken.count(False)
    return counts


def fd_length_bins(lengths) -> list[tuple[int, int]]:
    """Histogram edges anchored at 0 with the Freedman-Diaconis width
    2 * IQR * N^(-1/3), rounded to the nearest whole token count."""
    lengths = sorted(lengths)
    if len(lengths) < 2:
        raise EvaluationError("length binning needs at least 2 documents")
    iqr = float(np.quantile(lengths, 0.75) - np.quantile(lengths, 0.25))
    width = int(round(2.0 * iqr * len(lengths) ** (-1.0 / 3.0)))
    if width < 1:
        return [(0, lengths[-1] + 1)]
    top = lengths[-1] // width + 1
    return [(k * width, (k + 1) * width) for k in range(top)]


def sentence_distance(rel: Relation, doc: Document) -> int:
    """Signed sentence count from attribute to drug: negative when the drug
    is mentioned before the related attribute."""
    drug = sentence_index_of_char(doc, rel.arg2.start)
    attr = sentence_index_of_char(doc, rel.arg1.start)
    return drug - attr


@dataclass
class EvalReport:
    ner: MatchCounts = field(default_factory=MatchCounts)
    ner_by_type: dict = field(default_factory=dict)
    e2e: MatchCounts = field(default_factory=MatchCounts)
    e2e_by_type: dict = field(default_factory=dict)
    by_length_bin: list = field(default_factory=list)  # (lo, hi, doc count, MatchCounts)
    by_sentence_distance: dict = field(default_factory=dict)
    distance_gold_counts: dict = field(default_factory=dict)


@dataclass
class PredictedDoc:
    doc_id: str
    entities: list
    relations: list


def build_report(pred_docs: list[PredictedDoc], gold_docs: list[Document]) -> EvalReport:
    preds = {p.doc_id: p for p in pred_docs}
    golds = {d.doc_id: d for d in gold_docs}
    missing = sorted(set(golds) ^ set(preds))
    if missing:
        raise EvaluationError(f"pred/gold document ids disagree: {missing}")

    report = EvalReport()
    report.ner_by_type = {t: MatchCounts() for t in ENTITY_TYPES}
    report.e2e_by_type = {t: MatchCounts() for t in RELATION_TYPES}
    per_doc_e2e: dict[str, MatchCounts] = {}
    dist_pred: dict[int, dict[str, list]] = {}
    dist_gold: dict[int, dict[str, list]] = {}

    for doc_id, gold in sorted(golds.items()):
        pred = preds[doc_id]
        report.ner.add(match_entities(pred.entities, gold.gold_entities))
        for t in ENTITY_TYPES:
            report.ner_by_type[t].add(
                match_entities(
                    [e for e in pred.entities if e.etype == t],
                    [e for e in gold.gold_entities if e.etype == t],
                )
            )
        doc_counts = match_relations(pred.relations, gold.gold_relations)
        per_doc_e2e[doc_id] = doc_counts
        report.e2e.add(doc_counts)
        for t in RELATION_TYPES:
            report.e2e_by_type[t].add(
                match_relations(
                    [r for r in pred.relations if r.rtype == t],
                    [r for r in gold.gold_relations if r.rtype == t],
                )
            )
        # distance strata: gold relations keyed by gold distance, predictions
        # by their own distance, matched within the stratum
        for r in gold.gold_relations:
            d = sentence_distance(r, gold)
            dist_gold.setdefault(d, {}).setdefault(doc_id, []).append(r)
            report.distance_gold_counts[d] = report.distance_gold_counts.get(d, 0) + 1
        for r in pred.relations:
            d = sentence_distance(r, gold)
            dist_pred.setdefault(d, {}).setdefault(doc_id, []).append(r)

    for d in sorted(set(dist_gold) | set(dist_pred)):
        counts = MatchCounts()
        doc_ids = set(dist_gold.get(d, {})) | set(dist_pred.get(d, {}))
        for doc_id in sorted(doc_ids):
            counts.add(
                match_relations(
                    dist_pred.get(d, {}).get(doc_id, []),
                    dist_gold.get(d, {}).get(doc_id, []),
                )
            )
        report.by_sentence_distance[d] = counts

    lengths = {doc_id: len(golds[doc_id].tokens) for doc_id in golds}
    if len(golds) >= 2:
        for lo, hi in fd_length_bins(list(lengths.values())):
            in_bin = [doc_id for doc_id, n in lengths.items() if lo <= n < hi]
            if not in_bin:
                continue
            counts = MatchCounts()
            for doc_id in sorted(in_bin):
                counts.add(per_doc_e2e[doc_id])
            report.by_length_bin.append((lo, hi, len(in_bin), counts))
    return report


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def render_report_text(report: EvalReport) -> str:
    lines = []

    def table(title, rows):
        lines.append(title)
        lines.append(f"{'':<18}{'P(%)':>9}{'R(%)':>9}{'F1(%)':>9}")
        for key, counts, extra in rows:
            p, r, f = counts.prf()
            suffix = f"  {extra}" if extra else ""
            lines.append(f"{key:<18}{_pct(p):>9}{_pct(r):>9}{_pct(f):>9}{suffix}")
        lines.append("")

    table(
        "NER (lenient micro)",
        [(t, c, "") for t, c in report.ner_by_type.items()] + [("Overall", report.ner, "")],
    )
    table(
        "E2E NER+RE (lenient micro)",
        [(t, c, "") for t, c in report.e2e_by_type.items()] + [("Overall", report.e2e, "")],
    )
    table(
        "By document length",
        [
            (f"[{lo}, {hi}]", c, f"docs={n}")
            for lo, hi, n, c in report.by_length_bin
        ],
    )
    table(
        "By sentence distance",
        [
            (str(d), c, f"gold={report.distance_gold_counts.get(d, 0)}")
            for d, c in sorted(report.by_sentence_distance.items())
        ],
    )
    return "\n".join(lines)


def render_report_machine(report: EvalReport) -> str:
    rows = []

    def emit(section, key, counts):
        p, r, f = counts.prf()
        rows.append(f"{section}\t{key}\t{_pct(p)}\t{_pct(r)}\t{_pct(f)}")

    emit("ner", "overall", report.ner)
    for t, c in report.ner_by_type.items():
        emit("ner_type", t, c)
    emit("e2e", "overall", report.e2e)
    for t, c in report.e2e_by_type.items():
        emit("e2e_type", t, c)
    for lo, hi, _, c in report.by_length_bin:
        emit("length_bin", f"[{lo},{hi}]", c)
    for d, c in sorted(report.by_sentence_distance.items()):
        emit("sentence_distance", str(d), c)
    return "\n".join(rows) + "\n"
