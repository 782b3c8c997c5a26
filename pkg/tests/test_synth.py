import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import box_iou
from vstp.errors import ConfigError, GenerationError, SchemaError
from vstp.geometry import quantize_point
from vstp.metrics import teds
from vstp.synth import (
    CHAR_FEATURES,
    N_CHANNELS,
    Sample,
    SynthConfig,
    generate_corpus,
    generate_sample,
    positional_channels,
    read_jsonl,
    render_feature_grid,
    samples_equal,
    write_jsonl,
)
from vstp.table import assemble_html, grid_to_structure_tokens, html_to_grid, structure_tokens_to_grid
from vstp.vocab import CHARS

TASKS = ["spotting", "kie", "hiertext", "table"]


def corpus_hash(cfg, n, task, path):
    write_jsonl(path, generate_corpus(cfg, n, task))
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.mark.parametrize("task", TASKS)
def test_generation_is_deterministic(task, tmp_path):
    cfg = SynthConfig(seed=11)
    a = corpus_hash(cfg, 20, task, tmp_path / "a.jsonl")
    b = corpus_hash(cfg, 20, task, tmp_path / "b.jsonl")
    assert a == b
    assert a != corpus_hash(SynthConfig(seed=12), 20, task, tmp_path / "c.jsonl")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["spotting", "kie", "hiertext"]))
def test_instances_are_valid_and_disjoint(seed, task):
    cfg = SynthConfig(seed=seed)
    for s in generate_corpus(cfg, 4, task):
        if task == "spotting":
            assert cfg.n_instances[0] <= len(s.instances) <= cfg.n_instances[1]
        for inst in s.instances:
            assert inst.text and all(c in CHARS for c in inst.text)
            assert len(inst.polygon.points) == 16
            assert all(0.0 <= p.x <= 1.0 and 0.0 <= p.y <= 1.0 for p in inst.polygon.points)
        boxes = [i.polygon.bbox() for i in s.instances]
        for a in range(len(boxes)):
            for b in range(a + 1, len(boxes)):
                assert box_iou(boxes[a], boxes[b]) == 0.0
        # distinct centers keep stage-1 sequences unambiguous
        centers = [quantize_point(i.center) for i in s.instances]
        assert len(set(centers)) == len(centers)


def test_kie_and_hiertext_labels():
    cfg = SynthConfig(seed=3)
    for s in generate_corpus(cfg, 10, "kie"):
        assert all(i.entity is None or i.entity in cfg.entities for i in s.instances)
    for s in generate_corpus(cfg, 10, "hiertext"):
        assert all(i.line_id is not None and i.para_id is not None for i in s.instances)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_tables_roundtrip_with_steds_one(seed):
    for s in generate_corpus(SynthConfig(seed=seed), 3, "table"):
        s.table.validate()
        html = assemble_html(s.table)
        back, diags = structure_tokens_to_grid(grid_to_structure_tokens(html_to_grid(html)))
        assert not diags
        assert teds(html, assemble_html(back, [c.text for c in s.table.filled_cells()]), structure_only=True) == 1.0


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(grid_size=4)
    with pytest.raises(ConfigError):
        SynthConfig(n_instances=(5, 2))
    with pytest.raises(ConfigError):
        SynthConfig(task_mix=("ocr",))
    with pytest.raises(ConfigError):
        generate_sample(np.random.default_rng(0), SynthConfig(), "ocr")


def test_placement_failure_is_reported():
    cfg = SynthConfig(grid_size=8, n_instances=(40, 40), word_len=(4, 4))
    with pytest.raises(GenerationError):
        generate_corpus(cfg, 1, "spotting")


def test_task_mix_cycles():
    cfg = SynthConfig(task_mix=("spotting", "table"))
    assert [s.task for s in generate_corpus(cfg, 4)] == ["spotting", "table", "spotting", "table"]


@pytest.mark.parametrize("task", TASKS)
def test_jsonl_roundtrip(task, tmp_path):
    corpus = generate_corpus(SynthConfig(seed=5), 15, task)
    path = tmp_path / "c.jsonl"
    assert write_jsonl(path, corpus) == 15
    back = read_jsonl(path)
    assert samples_equal(corpus, back)
    # floats survive exactly, so quantized tokens are preserved
    for a, b in zip(corpus, back):
        for ia, ib in zip(a.instances, b.instances):
            assert quantize_point(ia.center) == quantize_point(ib.center)
            assert ia.polygon == ib.polygon


def test_jsonl_schema_shape(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, generate_corpus(SynthConfig(), 2, "table"))
    row = json.loads(path.read_text().splitlines()[0])
    assert set(row) == {"id", "task", "width", "height", "instances", "table"}
    assert set(row["table"]) == {"n_rows", "n_cols", "header_rows", "cells"}


def test_missing_key_and_bad_line_are_named(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, generate_corpus(SynthConfig(), 3, "spotting"))
    lines = path.read_text().splitlines()
    row = json.loads(lines[1])
    del row["instances"][0]["text"]
    lines[1] = json.dumps(row)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError) as err:
        read_jsonl(path)
    assert ":2:" in str(err.value) and "'text'" in str(err.value)

    lines[1] = "{not json"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match=":2:"):
        read_jsonl(path)


def test_render_empty_sample_is_positional_only():
    cfg = SynthConfig()
    grid = render_feature_grid(Sample("e", "spotting", 512, 512), cfg).values
    assert grid.shape == (32, 32, N_CHANNELS)
    assert not grid[:, :, :CHAR_FEATURES].any()
    np.testing.assert_array_equal(grid[:, :, CHAR_FEATURES:], positional_channels(32))


def _support(sample, cfg):
    return render_feature_grid(sample, cfg).values[:, :, :CHAR_FEATURES].any(axis=-1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_render_supports_are_disjoint_and_order_free(seed):
    cfg = SynthConfig(seed=seed)
    (s,) = generate_corpus(cfg, 1, "spotting")
    supports = [_support(Sample("x", "spotting", 512, 512, [i]), cfg) for i in s.instances]
    for a in range(len(supports)):
        assert supports[a].sum() == len(s.instances[a].text)
        for b in range(a + 1, len(supports)):
            assert not (supports[a] & supports[b]).any()
    shuffled = Sample(s.id, s.task, s.width, s.height, s.instances[::-1])
    np.testing.assert_array_equal(render_feature_grid(s, cfg).values, render_feature_grid(shuffled, cfg).values)


def test_render_encodes_characters():
    cfg = SynthConfig(seed=2)
    (s,) = generate_corpus(cfg, 1, "spotting")
    values = render_feature_grid(s, cfg).values
    inst = s.instances[0]
    x0, y0, _, _ = inst.polygon.bbox()
    row, col = round(y0 * 32), round(x0 * 32)
    for i, ch in enumerate(inst.text):
        assert values[row, col + i, CHARS.index(ch)] == 1.0


def test_table_render_is_nonempty_when_cells_have_text():
    cfg = SynthConfig(seed=1)
    for s in generate_corpus(cfg, 5, "table"):
        has_text = any(c.text for c in s.table.cells)
        assert _support(s, cfg).any() == has_text
