import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vstp.codec import (
    REGION_LEN,
    PromptSpec,
    TextInstance,
    build_content_sequence,
    build_hier_sequence,
    build_kie_sequence,
    build_region_sequence,
    build_spotting_stage1,
    build_stage1,
    entity_groups,
    hierarchy,
    parse_stage1,
)
from vstp.errors import LabelError, SchemaError, TruncationError
from vstp.geometry import Polygon16, QuantizedPoint, Window, quantize_point
from vstp.synth import SynthConfig, generate_corpus
from vstp.vocab import PrefixWindow, build_vocab

V = build_vocab()
KV = build_vocab(task="kie", entities=("company", "total"))
HV = build_vocab(task="hiertext")


def inst(x0, y0, x1, y1, text="ab", **kw):
    return TextInstance(Polygon16.from_box(x0, y0, x1, y1), text, **kw)


def test_spotting_layout_and_raster_order():
    a = inst(0.5, 0.5, 0.7, 0.6)   # center (0.6, 0.55)
    b = inst(0.1, 0.1, 0.3, 0.2)   # center (0.2, 0.15)
    seq = build_spotting_stage1([a, b], PromptSpec(), V)
    assert seq.k == 6
    assert list(seq.ids) == [0, 0, 999, 999, V.char_id("!"), V.char_id("~"), 200, 150, 600, 550, V.eos_id]


def test_prompt_ids_use_window_and_prefix():
    p = PromptSpec(Window(0, 0, 500, 500), PrefixWindow("A", "Z"))
    assert p.ids(V) == [0, 0, 500, 500, V.char_id("A"), V.char_id("Z")]


def test_truncation_reports_fit():
    many = [inst(0.01 * i, 0.0, 0.01 * i + 0.005, 0.01) for i in range(10)]
    with pytest.raises(TruncationError) as err:
        build_spotting_stage1(many, PromptSpec(), V, max_len=15)
    assert err.value.fit == (15 - 7) // 2


def test_region_sequence_shape():
    seq = build_region_sequence(inst(0.2, 0.2, 0.4, 0.6), V)
    assert len(seq) == REGION_LEN and seq.k == 2
    assert list(seq.ids[:4]) == [300, 400, 200, 200]
    assert seq.ids[-1] == V.eos_id


def test_content_sequence():
    seq = build_content_sequence(inst(0.2, 0.2, 0.4, 0.6, "Hi"), V)
    assert list(seq.ids) == [300, 400, V.char_id("H"), V.char_id("i"), V.eos_id]
    with pytest.raises(ValueError):
        build_content_sequence(inst(0.2, 0.2, 0.4, 0.6, ""), V)
    with pytest.raises(TruncationError):
        build_content_sequence(inst(0.2, 0.2, 0.4, 0.6, "x" * 300), V)


def test_kie_groups_and_layout():
    words = [
        inst(0.1, 0.1, 0.2, 0.2, "ACME", entity="company", entity_id=1),
        inst(0.3, 0.1, 0.4, 0.2, "Inc", entity="company", entity_id=1),
        inst(0.1, 0.5, 0.2, 0.6, "noise"),
        inst(0.1, 0.8, 0.2, 0.9, "9.99", entity="total"),
    ]
    groups = entity_groups(words, KV)
    assert [(g, [w.text for w in m]) for g, m in groups] == [("company", ["ACME", "Inc"]), ("total", ["9.99"])]
    seq = build_kie_sequence(words, PromptSpec(), KV)
    toks = KV.detokenize(seq.ids[6:])
    assert toks == ["<company>", "150", "150", "350", "150", "</company>", "<total>", "150", "850", "</total>", "</S>"]


def test_kie_unknown_entity():
    with pytest.raises(SchemaError):
        build_kie_sequence([inst(0.1, 0.1, 0.2, 0.2, entity="price")], PromptSpec(), KV)


def test_hierarchy_errors():
    with pytest.raises(LabelError):
        hierarchy([inst(0.1, 0.1, 0.2, 0.2)], HV)
    bad = [inst(0.1, 0.1, 0.2, 0.2, line_id=0, para_id=0), inst(0.3, 0.1, 0.4, 0.2, line_id=0, para_id=1)]
    with pytest.raises(LabelError):
        hierarchy(bad, HV)


def test_hier_layout():
    words = [inst(0.1, 0.1, 0.2, 0.2, line_id=0, para_id=0), inst(0.3, 0.1, 0.4, 0.2, line_id=0, para_id=0),
             inst(0.1, 0.5, 0.2, 0.6, line_id=1, para_id=1)]
    seq = build_hier_sequence(words, HV)
    assert seq.k == 1
    assert HV.detokenize(seq.ids) == [
        "<S>", "<PARA>", "<LINE>", "150", "150", "350", "150", "</LINE>", "</PARA>",
        "<PARA>", "<LINE>", "150", "550", "</LINE>", "</PARA>", "</S>"]


def _q(insts, vocab):
    return [quantize_point(i.center, vocab.quantizer) for i in insts]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["spotting", "kie", "hiertext"]))
def test_build_parse_roundtrip(seed, task):
    vocab = {"spotting": V, "kie": build_vocab(task="kie", entities=SynthConfig().entities), "hiertext": HV}[task]
    for sample in generate_corpus(SynthConfig(seed=seed), 5, task):
        seq = build_stage1(sample.instances, task, vocab)
        parsed = parse_stage1(seq, task, vocab)
        assert parsed.diagnostics == [] and parsed.terminated
        if task == "kie":
            want = [(g, _q(m, vocab)) for g, m in entity_groups(sample.instances, vocab)]
            assert [(g, list(p)) for g, p in parsed.entities] == want
        elif task == "hiertext":
            assert parsed.paragraphs == [[_q(line, vocab) for line in para]
                                         for para in hierarchy(sample.instances, vocab)]
        else:
            assert sorted(parsed.points) == sorted(_q(sample.instances, vocab))


@given(st.lists(st.integers(0, len(KV) - 1), max_size=60), st.sampled_from(["spotting", "kie", "hiertext"]))
def test_parser_is_total(ids, task):
    vocab = {"spotting": V, "kie": KV, "hiertext": HV}[task]
    ids = [i % len(vocab) for i in ids]
    parsed = parse_stage1(ids, task, vocab)
    assert all(isinstance(p, QuantizedPoint) for p in parsed.points)


def test_parser_recovery_diagnostics():
    ids = [0, 0, 999, 999, V.char_id("!"), V.char_id("~"), 10, 20, 30]
    parsed = parse_stage1(ids, "spotting", V)
    assert parsed.points == [QuantizedPoint(10, 20)]
    assert not parsed.terminated
    assert any("no EOS" in d for d in parsed.diagnostics)
    assert any("unpaired" in d for d in parsed.diagnostics)

    kie = KV.structure_ids(["<company>", 1, 2]) + [KV.eos_id]
    parsed = parse_stage1([0, 0, 999, 999, KV.char_id("!"), KV.char_id("~")] + kie, "kie", KV)
    assert parsed.entities == [("company", [QuantizedPoint(1, 2)])]
    assert any("auto-closed" in d for d in parsed.diagnostics)

    hier = HV.structure_ids(["<PARA>", "<LINE>", 1, 2]) + [HV.eos_id]
    parsed = parse_stage1([HV.bos_id] + hier, "hiertext", HV)
    assert parsed.paragraphs == [[[QuantizedPoint(1, 2)]]]
    assert len(parsed.diagnostics) == 2
