"""End-to-end CLI workflow over the shipped offline demo fixture."""

import json

import pytest

from conftest import SHIM_PATH
from toolforge.cli import main
from toolforge.demo import EXPECTED_FUNNEL, SAMPLER, write_fixture
from toolforge.model import load_toolset
from toolforge.sandbox import SandboxConfig


@pytest.fixture(scope="module")
def demo_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    write_fixture(out, sandbox=SandboxConfig(shim_path=str(SHIM_PATH)))
    return out


class TestDemoArtifacts:
    def test_files_written(self, demo_dir):
        for name in ("corpus.jsonl", "replay_script.json", "toolset.jsonl",
                     "audit.jsonl", "manifest.json"):
            assert (demo_dir / name).exists(), name

    def test_manifest_funnel(self, demo_dir):
        manifest = json.loads((demo_dir / "manifest.json").read_text())
        assert manifest["funnel"] == EXPECTED_FUNNEL
        assert manifest["n_tools"] == EXPECTED_FUNNEL["deduped"]

    def test_toolset_loads_with_epochs(self, demo_dir):
        ts = load_toolset(demo_dir / "toolset.jsonl")
        assert len(ts) == EXPECTED_FUNNEL["deduped"]
        assert set(ts.meta["tool_epochs"]) == set(ts.ids())

    def test_audit_covers_every_sampled_problem(self, demo_dir):
        rows = [json.loads(l) for l in (demo_dir / "audit.jsonl").read_text().splitlines()]
        generated = {r["problem_id"] for r in rows if r["stage"] == "generate"}
        assert len(generated) == EXPECTED_FUNNEL["sampled"]
        # funnel monotonicity across stages
        kept = {
            stage: sum(1 for r in rows if r["stage"] == stage and r["outcome"] == "kept")
            for stage in ("generate", "abstract", "validate")
        }
        assert kept["generate"] >= kept["abstract"] >= kept["validate"]


class TestCliWorkflow:
    def test_create_from_replay_script(self, demo_dir, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("FORGE_SHIM", str(SHIM_PATH))
        out = tmp_path / "cli-toolset.jsonl"
        rc = main([
            "create",
            "--corpus", str(demo_dir / "corpus.jsonl"),
            "--task-family", "math",
            "--out", str(out),
            "--provider", f"replay:{demo_dir / 'replay_script.json'}",
            "--n-init", str(SAMPLER.n_init),
            "--k", str(SAMPLER.k_per_epoch),
            "--epochs", str(SAMPLER.epochs),
            "--seed", str(SAMPLER.seed),
        ])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["funnel"] == EXPECTED_FUNNEL
        assert out.read_bytes() == (demo_dir / "toolset.jsonl").read_bytes()

    def test_eval_none_method(self, demo_dir, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv("FORGE_SHIM", str(SHIM_PATH))
        report = tmp_path / "report.json"
        rc = main([
            "eval",
            "--corpus", str(demo_dir / "corpus.jsonl"),
            "--toolset", str(demo_dir / "toolset.jsonl"),
            "--method", "none",
            "--provider", f"replay:{demo_dir / 'replay_script.json'}",
            "--report", str(report),
        ])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["em"] == 0.5
        saved = json.loads(report.read_text())
        assert len(saved["records"]) == 20

    def test_eval_craft_method(self, demo_dir, capsys, monkeypatch):
        monkeypatch.setenv("FORGE_SHIM", str(SHIM_PATH))
        rc = main([
            "eval",
            "--corpus", str(demo_dir / "corpus.jsonl"),
            "--toolset", str(demo_dir / "toolset.jsonl"),
            "--method", "craft",
            "--provider", f"replay:{demo_dir / 'replay_script.json'}",
        ])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["em"] == 1.0

    def test_analyze_with_scaling_slices(self, demo_dir, capsys):
        rc = main([
            "analyze",
            "--toolset", str(demo_dir / "toolset.jsonl"),
            "--epoch-marks", "0,1,2",
        ])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        sizes = [out["scaling_slices"][m] for m in ("0", "1", "2")]
        assert sizes == sorted(sizes)
        assert sizes[-1] == EXPECTED_FUNNEL["deduped"]
        assert out["avg_complexity"] >= 1.0

    def test_retrieve_craft_over_demo_toolset(self, demo_dir, capsys):
        rc = main([
            "retrieve",
            "--toolset", str(demo_dir / "toolset.jsonl"),
            "--query", "What is 2 + 3?",
            "--method", "craft",
            "--task-family", "math",
            "--provider", f"replay:{demo_dir / 'replay_script.json'}",
        ])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["selected"], "craft retrieval should find arithmetic tools"
        assert any("add_two_numbers" in code for code in out["codes"])
