from __future__ import annotations

import json
from pathlib import Path

import pytest

from icr.cli import main
from icr.errors import ProviderUnavailable
from icr.manifest import load_manifest, verify_outputs

from .conftest import build_cli_workspace


@pytest.fixture()
def ws(tmp_path):
    paths = build_cli_workspace(tmp_path / "data")
    out = tmp_path / "out"
    out.mkdir()
    paths["out"] = out
    return paths


def _build_indexes(ws) -> tuple[str, str]:
    sparse = str(ws["out"] / "sparse.idx.gz")
    dense = str(ws["out"] / "dense.idx")
    assert main(["build-index", "--collection", ws["collection"], "--out", sparse,
                 "--config", ws["config"]]) == 0
    assert main(["embed-index", "--collection", ws["collection"], "--out", dense,
                 "--config", ws["config"]]) == 0
    return sparse, dense


def test_full_cli_workflow(ws, capsys):
    sparse, dense = _build_indexes(ws)
    assert Path(sparse).exists()
    assert Path(sparse + ".manifest.json").exists()
    assert Path(dense, "meta.json").exists()

    dcr = str(ws["out"] / "dcr.jsonl")
    code = main([
        "crdg", "--dataset", ws["dataset"], "--sparse-index", sparse, "--dense-index", dense,
        "--mock-script", ws["script"], "--out", dcr, "--config", ws["config"], "--seed", "0",
    ])
    assert code == 0
    records = [json.loads(l) for l in Path(dcr).read_text().splitlines()]
    assert [r["sample_id"] for r in records] == ["s1", "s2", "s3"]
    assert "error" in records[2]  # gold id missing from the collection
    manifest = load_manifest(dcr + ".manifest.json")
    assert manifest["command"] == "crdg"
    assert manifest["seed"] == 0
    assert all(verify_outputs(manifest).values())

    pref = str(ws["out"] / "pref.jsonl")
    code = main([
        "prefdata", "--crdg", dcr, "--dataset", ws["dataset"], "--sparse-index", sparse,
        "--dense-index", dense, "--mock-script", ws["script"], "--out", pref,
        "--config", ws["config"], "--seed", "0",
    ])
    assert code == 0
    dims = [json.loads(l)["dimension"] for l in Path(pref).read_text().splitlines()]
    assert dims.count("ot") == 1 and dims.count("ut") == 1 and dims.count("id") == 1

    sft = str(ws["out"] / "sft.jsonl")
    assert main(["sftdata", "--crdg", dcr, "--dataset", ws["dataset"], "--out", sft,
                 "--config", ws["config"]]) == 0
    sft_records = [json.loads(l) for l in Path(sft).read_text().splitlines()]
    assert len(sft_records) == 1  # s2 empty, s3 error

    run = str(ws["out"] / "run.trec")
    iters = str(ws["out"] / "iters")
    code = main([
        "infer", "--dataset", ws["dataset"], "--sparse-index", sparse,
        "--mock-script", ws["script"], "--out", run, "--per-query-dir", iters,
        "--config", ws["config"], "--seed", "0",
    ])
    assert code == 0
    run_lines = Path(run).read_text().splitlines()
    assert run_lines and run_lines[0].endswith("ICR")

    fused = str(ws["out"] / "fused.trec")
    iter_files = sorted(str(p) for p in Path(iters).glob("iter_*.trec"))
    assert main(["fuse", *iter_files, "--out", fused, "--config", ws["config"]]) == 0
    assert Path(fused).read_bytes() == Path(run).read_bytes()

    report_path = str(ws["out"] / "eval.json")
    assert main(["evaluate", "--run", run, "--qrels", ws["qrels"], "--out", report_path]) == 0
    report = json.loads(Path(report_path).read_text())
    assert report["num_samples"] == 3
    assert report["aggregate"]["mrr"] > 0

    analysis_path = str(ws["out"] / "analysis.json")
    assert main(["analyze", "--crdg", dcr, "--out", analysis_path]) == 0
    analysis = json.loads(Path(analysis_path).read_text())
    assert analysis["num_trajectories"] == 2
    assert 0.0 <= analysis["gsr"] <= analysis["lsr"] <= 1.0

    latency_path = str(ws["out"] / "latency.json")
    assert main(["latency", "--dataset", ws["dataset"], "--mock-script", ws["script"],
                 "--out", latency_path]) == 0
    latency = json.loads(Path(latency_path).read_text())
    assert set(latency["per_sample"]) == {"s1", "s2", "s3"}
    capsys.readouterr()


def test_usage_error_exit_code(capsys):
    assert main(["crdg"]) == 1  # --out is required
    assert "usage error" in capsys.readouterr().err


def test_unknown_subcommand_exit_code(capsys):
    assert main(["frobnicate"]) == 1
    capsys.readouterr()


def test_data_error_exit_code(ws, capsys):
    out = str(ws["out"] / "report.json")
    assert main(["evaluate", "--run", "/nonexistent/run.trec", "--qrels", ws["qrels"],
                 "--out", out]) == 2
    assert "data error" in capsys.readouterr().err


def test_missing_required_setting_exit_code(ws, tmp_path, capsys):
    # f_mode "both" needs a sparse index; leaving the flag off is a data error
    code = main(["crdg", "--dataset", ws["dataset"], "--mock-script", ws["script"],
                 "--out", str(tmp_path / "x.jsonl")])
    assert code == 2
    assert "--sparse-index" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, ws, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("fusion.k = -1\n", encoding="utf-8")
    sparse, dense = _build_indexes(ws)
    code = main(["crdg", "--dataset", ws["dataset"], "--sparse-index", sparse,
                 "--dense-index", dense, "--mock-script", ws["script"],
                 "--out", str(tmp_path / "x.jsonl"), "--config", str(bad)])
    assert code == 2
    capsys.readouterr()


def test_provider_error_exit_code(ws, monkeypatch, capsys):
    class DownClient:
        def generate(self, kind, fingerprint, prompt, attempt=0):
            raise ProviderUnavailable("endpoint down")

    monkeypatch.setattr("icr.cli._make_client", lambda args, config: DownClient())
    code = main(["latency", "--dataset", ws["dataset"], "--out", str(ws["out"] / "l.json")])
    assert code == 3
    assert "provider error" in capsys.readouterr().err


def test_infer_both_report_writes_two_runs(ws, capsys):
    sparse, dense = _build_indexes(ws)
    run = str(ws["out"] / "run.trec")
    code = main([
        "infer", "--dataset", ws["dataset"], "--sparse-index", sparse, "--dense-index", dense,
        "--mock-script", ws["script"], "--out", run, "--retriever", "both-report",
        "--config", ws["config"],
    ])
    assert code == 0
    assert Path(run + ".sparse").exists()
    assert Path(run + ".dense").exists()
    manifest = load_manifest(run + ".manifest.json")
    assert set(manifest["outputs"]) == {run + ".sparse", run + ".dense"}
    capsys.readouterr()
