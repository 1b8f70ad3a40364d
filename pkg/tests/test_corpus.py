import pytest

from jnrf.corpus import (
    BratParseError,
    ENTITY_TYPES,
    NUM_LABELS,
    RELATION_TYPES,
    bio_label,
    label_parts,
    parse_brat,
    render_ann,
)


def test_schema_sizes():
    assert len(ENTITY_TYPES) == 9
    assert len(RELATION_TYPES) == 8
    assert NUM_LABELS == 19


def test_label_round_trip():
    seen = set()
    for etype in ENTITY_TYPES:
        for first in (True, False):
            lab = bio_label(etype, first)
            assert 1 <= lab < NUM_LABELS
            assert label_parts(lab) == (etype, first)
            seen.add(lab)
    assert len(seen) == 18 and label_parts(0) is None


def test_entity_line():
    doc = parse_brat("aspirin daily", "T1\tDrug 0 7\taspirin\n")
    (ent,) = doc.gold_entities
    assert (ent.etype, ent.start, ent.end, ent.surface) == ("Drug", 0, 7, "aspirin")


def test_relation_line():
    text = "aspirin 50 mg"
    ann = "T1\tDrug 0 7\taspirin\nT2\tStrength 8 13\t50 mg\nR1\tStrength-Drug Arg1:T2 Arg2:T1\n"
    doc = parse_brat(text, ann)
    (rel,) = doc.gold_relations
    assert rel.rtype == "Strength-Drug"
    assert rel.arg1.etype == "Strength" and rel.arg2.etype == "Drug"


def test_dangling_reference_reports_line():
    text = "aspirin 50 mg"
    ann = "R1\tStrength-Drug Arg1:T9 Arg2:T1\nT1\tDrug 0 7\taspirin\n"
    with pytest.raises(BratParseError, match="line 1.*T9"):
        parse_brat(text, ann)


def test_unknown_types_rejected():
    with pytest.raises(BratParseError, match="line 1"):
        parse_brat("x", "T1\tGadget 0 1\tx\n")
    ann = "T1\tDrug 0 1\tx\nT2\tStrength 0 1\tx\nR1\tMade-Up Arg1:T2 Arg2:T1\n"
    with pytest.raises(BratParseError, match="line 3"):
        parse_brat("x", ann)


def test_offsets_outside_text_rejected():
    with pytest.raises(BratParseError, match="line 1"):
        parse_brat("ab", "T1\tDrug 0 7\tlonger\n")


def test_discontinuous_span_collapsed_to_envelope():
    doc = parse_brat("aspirin and more", "T1\tDrug 0 7;12 16\taspirin more\n")
    (ent,) = doc.gold_entities
    assert (ent.start, ent.end) == (0, 16)


def test_schema_violations_fail_parsing():
    text = "drug strength"
    base = "T1\tDrug 0 4\tdrug\nT2\tStrength 5 13\tstrength\n"
    with pytest.raises(BratParseError, match="must be a Drug"):
        parse_brat(text, base + "R1\tStrength-Drug Arg1:T1 Arg2:T2\n")
    with pytest.raises(BratParseError, match="does not match"):
        parse_brat(text, base + "R1\tDosage-Drug Arg1:T2 Arg2:T1\n")


def test_render_ann_round_trip():
    text = "aspirin 50 mg tablet"
    ann = (
        "T1\tDrug 0 7\taspirin\n"
        "T2\tStrength 8 13\t50 mg\n"
        "T3\tForm 14 20\ttablet\n"
        "R1\tStrength-Drug Arg1:T2 Arg2:T1\n"
        "R2\tForm-Drug Arg1:T3 Arg2:T1\n"
    )
    doc = parse_brat(text, ann)
    rendered = render_ann(doc.gold_entities, doc.gold_relations)
    again = parse_brat(text, rendered)
    assert [(e.etype, e.start, e.end) for e in again.gold_entities] == [
        (e.etype, e.start, e.end) for e in doc.gold_entities
    ]
    assert [(r.rtype, r.arg1.start, r.arg2.start) for r in again.gold_relations] == [
        (r.rtype, r.arg1.start, r.arg2.start) for r in doc.gold_relations
    ]


def test_blank_and_comment_like_lines_ignored():
    doc = parse_brat("aspirin", "\nT1\tDrug 0 7\taspirin\n#1\tAnnotatorNotes T1\tnote\n")
    assert len(doc.gold_entities) == 1
