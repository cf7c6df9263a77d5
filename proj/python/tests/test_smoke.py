import json

import numpy as np
import pytest

import relunlearn as ru


def test_graph_round_trip():
    graph = ru.build_graph(ru.hamburger_spec())
    assert ru.validate_graph(graph) == []
    roles = ru.assign_roles(graph)
    assert roles["l3_edge"] == "kid-eating-hamburger"
    assert ru.parse_graph(graph.to_json()) == graph


def test_bad_graph_raises_with_code():
    spec = ru.hamburger_spec()
    spec.forget = ru.Triple("kid", "eating", "kid")
    with pytest.raises(ru.Error) as info:
        ru.build_graph(spec)
    assert info.value.code == "duplicate-label"


def test_paraphrases_differ_from_input():
    out = ru.paraphrase_variants("kid eating a hamburger", 3, 7)
    assert len(out) == 3
    assert "kid eating a hamburger" not in out


def test_fresh_adapters_leave_embeddings_unchanged(small_encoder):
    x = small_encoder.featurize_text("a kid eating a hamburger")
    np.testing.assert_array_equal(
        small_encoder.embed(x, "text", adapted=True), small_encoder.embed(x, "text", adapted=False)
    )


def test_embedding_is_unit_norm(small_encoder):
    x = small_encoder.featurize_text("an adult drinking coffee")
    assert np.linalg.norm(small_encoder.embed(x, "text")) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ru.Error):
        small_encoder.embed(x, "audio")


def test_checkpoint_round_trip(tmp_path, small_encoder):
    state = ru.with_random_adapters(small_encoder, 3)
    path = str(tmp_path / "sub" / "a.ckpt")
    ru.save_checkpoint(state, path)
    back = ru.load_checkpoint(path)
    for k, v in state.adapters().items():
        np.testing.assert_array_equal(back.adapters()[k], v)
    (tmp_path / "bad.ckpt").write_bytes(b"nope")
    with pytest.raises(ru.Error) as info:
        ru.load_checkpoint(str(tmp_path / "bad.ckpt"))
    assert info.value.code == "corrupt-file"


def test_small_end_to_end_run():
    run = ru.default_run_config()
    run.corpus.set_all_counts(64)
    run.encoder.d_in = 128
    run.train.epochs = 2
    graph = run.graph()
    corpus = run.build_corpus()
    base = ru.make_encoder(run.encoder)
    state, log = ru.train(base, corpus, run.weights, run.train)
    assert len(log) == 2 * (64 // run.train.batch_size)
    assert log[-1]["l3"] < log[0]["l3"]

    report = json.loads(ru.evaluate(base, state, corpus, threads=2))
    entry = report["entries"][0]
    assert entry["name"] == "evaluation"
    assert graph.node_ids == ["kid", "hamburger", "adult", "salad"]

    ablation = json.loads(ru.ablation(base, corpus, ["baseline", "full"], run.weights, run.train, threads=2))
    names = [e["name"] for e in ablation["entries"]]
    assert names == ["baseline", "full"]


def test_run_config_parse_errors_carry_code():
    with pytest.raises(ru.Error) as info:
        ru.parse_run_config('{"train": {"epochs": "x"}}')
    assert info.value.code == "parse-error"
    run = ru.parse_run_config('{"seed": 11}')
    assert run.train.seed == 11 and run.encoder.seed == 11
