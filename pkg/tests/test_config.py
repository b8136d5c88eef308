from __future__ import annotations

import pytest

from icr.config import load_config, parse_config_text, resolve_config
from icr.errors import TypeMismatch, UnknownKey
from icr.manifest import RunManifest, load_manifest, verify_outputs
from icr.sparse_index import Bm25Params


def test_empty_config_gives_all_defaults():
    cfg = load_config(None)
    assert cfg.crdg.early_stop == 3
    assert cfg.crdg.max_iters == 10
    assert cfg.fusion.k == 60.0
    assert cfg.fusion.depth == 100
    assert cfg.bm25 == Bm25Params(k1=0.9, b=0.4)
    assert cfg.inference.retrieval_k == 100


def test_unknown_key_rejected():
    with pytest.raises(UnknownKey) as err:
        parse_config_text("foo = 1")
    assert err.value.key == "foo"


def test_fusion_k_range_error():
    with pytest.raises(TypeMismatch):
        resolve_config(parse_config_text("fusion.k = -1"))


def test_type_errors():
    with pytest.raises(TypeMismatch):
        parse_config_text("crdg.early_stop = soon")
    with pytest.raises(TypeMismatch):
        parse_config_text("crdg.max_iters = 0")
    with pytest.raises(TypeMismatch):
        parse_config_text("fusion.mode = median")
    with pytest.raises(TypeMismatch):
        parse_config_text("just some words")


def test_qrecc_profile():
    cfg = resolve_config(parse_config_text("bm25.profile = qrecc"))
    assert cfg.bm25 == Bm25Params(k1=0.82, b=0.68)


def test_explicit_bm25_overrides_profile():
    cfg = resolve_config(parse_config_text("bm25.profile = qrecc\nbm25.k1 = 1.2"))
    assert cfg.bm25.k1 == 1.2
    assert cfg.bm25.b == 0.68


def test_b_out_of_range():
    with pytest.raises(TypeMismatch):
        resolve_config(parse_config_text("bm25.b = 1.5"))


def test_full_config_file(tmp_path):
    path = tmp_path / "icr.conf"
    path.write_text(
        "\n".join(
            [
                "# comment",
                "dataset.collection = coll.tsv",
                "crdg.early_stop = 2",
                "crdg.f_mode = sparse_only",
                "fusion.mode = rrf",
                "fusion.depth = 10",
                "inference.retriever = both-report",
                "dense.dim = 32",
                "gen.temperature = 0.2",
                "",
            ]
        ),
        encoding="utf-8",
    )
    cfg = load_config(str(path))
    assert cfg.collection == "coll.tsv"
    assert cfg.crdg.early_stop == 2
    assert cfg.crdg.f_mode == "sparse_only"
    assert cfg.fusion.mode == "rrf"
    assert cfg.inference.retriever == "both-report"
    assert cfg.inference.fusion is cfg.fusion
    assert cfg.dense_dim == 32
    assert cfg.raw["gen.temperature"] == 0.2


def test_manifest_digests_and_tamper_detection(tmp_path):
    inp = tmp_path / "in.txt"
    out = tmp_path / "out.txt"
    inp.write_text("input data", encoding="utf-8")
    out.write_text("output data", encoding="utf-8")
    manifest = RunManifest("test-cmd", {"fusion.k": 60.0}, seed=7)
    manifest.add_input(str(inp))
    manifest.add_output(str(out))
    path = manifest.write()
    assert path == str(out) + ".manifest.json"
    loaded = load_manifest(path)
    assert loaded["command"] == "test-cmd"
    assert loaded["seed"] == 7
    assert set(loaded["inputs"]) == {str(inp)}
    assert verify_outputs(loaded) == {str(out): True}
    out.write_text("tampered", encoding="utf-8")
    assert verify_outputs(loaded) == {str(out): False}


def test_manifest_digest_stable_across_reruns(tmp_path):
    out = tmp_path / "out.txt"
    out.write_text("same bytes", encoding="utf-8")
    m1 = RunManifest("c", {}, seed=1)
    m1.add_output(str(out))
    d1 = load_manifest(m1.write())["outputs"]
    m2 = RunManifest("c", {}, seed=1)
    m2.add_output(str(out))
    d2 = load_manifest(m2.write())["outputs"]
    assert d1 == d2
