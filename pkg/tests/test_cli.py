import hashlib
import json
from pathlib import Path

import pytest

from emogesture.cli import main

TINY = {"epochs": 1, "batch_size": 8,
        "model": {"d_model": 16, "heads": 2, "depth": 1, "ff_width": 32, "audio_channels": [4, 4, 4],
                  "disc_channels": 8},
        "vae": {"latent": 4, "hidden": 16, "epochs": 2}}


def digest_tree(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def run(capsys, *args):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.json").write_text(json.dumps(TINY))
    assert main(["prepare", "--out", str(root / "corpus"), "--takes", "8", "--seed", "7"]) == 0
    assert main(["train", "--corpus", str(root / "corpus"), "--out", str(root / "runs"), "--name", "r",
                 "--config", str(root / "tiny.json"), "--seed", "1", "--quiet"]) == 0
    assert main(["train-vae", "--run", str(root / "runs/r"), "--corpus", str(root / "corpus")]) == 0
    return root


def test_prepare_summary_and_hash(tmp_path, capsys):
    code, out, _ = run(capsys, "prepare", "--out", tmp_path / "a", "--takes", 100, "--seed", 7)
    assert code == 0
    lines = {line.split()[0]: line for line in out.splitlines() if line.startswith("  ")}
    assert "takes=  70" in lines["train"] and "takes=  10" in lines["val"] and "takes=  20" in lines["test"]
    code, out2, _ = run(capsys, "prepare", "--out", tmp_path / "b", "--takes", 100, "--seed", 7)
    assert out.splitlines()[-1] == out2.splitlines()[-1]


def test_prepare_refuses_non_empty(tmp_path, capsys):
    (tmp_path / "x").mkdir()
    (tmp_path / "x" / "keep.txt").write_text("data")
    code, _, err = run(capsys, "prepare", "--out", tmp_path / "x", "--takes", 4)
    assert code == 3 and err.startswith("error: ValidationError:")
    assert (tmp_path / "x" / "keep.txt").read_text() == "data"
    code, _, _ = run(capsys, "prepare", "--out", tmp_path / "x", "--takes", 4, "--force")
    assert code == 0


def test_prepare_paper_skew(tmp_path, capsys):
    code, out, _ = run(capsys, "prepare", "--out", tmp_path / "c", "--takes", 100, "--emotion-skew", "paper")
    assert code == 0
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    counts = {e: sum(1 for t in manifest["takes"] if t["emotion"] == e) for e in manifest["emotions"]}
    assert counts["neutral"] == 51 and sorted(counts.values())[:3] == [16, 16, 17]


def test_unknown_config_key(workspace, tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"epochz": 3}))
    code, _, err = run(capsys, "train", "--corpus", workspace / "corpus", "--out", tmp_path,
                       "--config", tmp_path / "bad.json")
    assert code == 2 and "ConfigError" in err and "epochz" in err
    assert len(err.strip().splitlines()) == 1


def test_missing_prerequisites(workspace, tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--run", tmp_path / "nope", "--corpus", workspace / "corpus",
                       "--out", tmp_path / "g")
    assert code == 4 and err.startswith("error: MissingArtifactError:") and "checkpoint.npz" in err
    code, _, err = run(capsys, "train", "--corpus", tmp_path / "missing", "--out", tmp_path)
    assert code == 4 and "manifest.json" in err


def test_generate_encoded_is_repeatable_and_pure(workspace, capsys):
    before = digest_tree(workspace / "corpus"), digest_tree(workspace / "runs")
    for name in ("e1", "e2"):
        code, _, _ = run(capsys, "generate", "--run", workspace / "runs/r", "--corpus", workspace / "corpus",
                         "--out", workspace / name)
        assert code == 0
    files = sorted(p.relative_to(workspace / "e1") for p in (workspace / "e1").rglob("*.f32"))
    assert files
    for f in files:
        assert (workspace / "e1" / f).read_bytes() == (workspace / "e2" / f).read_bytes()
    assert (digest_tree(workspace / "corpus"), digest_tree(workspace / "runs")) == before


def test_generate_rejects_samples_in_encoded_mode(workspace, tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--run", workspace / "runs/r", "--corpus", workspace / "corpus",
                       "--out", tmp_path, "--samples", 3)
    assert code == 3 and "sampled" in err


def test_sampled_generation_and_evaluation(workspace, capsys):
    code, _, _ = run(capsys, "generate", "--run", workspace / "runs/r", "--corpus", workspace / "corpus",
                     "--out", workspace / "s", "--emotion-mode", "sampled", "--samples", 20, "--render",
                     "--render-every", 20)
    assert code == 0
    index = json.loads((workspace / "s/generation.json").read_text())
    assert index["samples"] == 20 and all(len(c["files"]) == 20 for c in index["clips"])
    assert list((workspace / "s" / index["clips"][0]["clip_id"] / "frames").glob("*.png"))
    before = digest_tree(workspace / "s")
    code, out, _ = run(capsys, "evaluate", "--corpus", workspace / "corpus", "--generated", workspace / "s",
                       "--out", workspace / "ev")
    assert code == 0 and "Diversity" in out
    report = json.loads((workspace / "ev/metrics.json").read_text())
    assert report["diversity_mean"] > 0 and report["n_samples"] == 20
    assert digest_tree(workspace / "s") == before
    assert (workspace / "ev/evaluators.npz").exists()


def test_evaluate_ground_truth_against_itself(workspace, capsys):
    code, _, _ = run(capsys, "evaluate", "--corpus", workspace / "corpus", "--ground-truth",
                     "--out", workspace / "gt")
    assert code == 0
    report = json.loads((workspace / "gt/metrics.json").read_text())
    assert report["l2"] == 0.0 and report["mpjre_deg"] < 1e-3 and report["fgd"] < 1e-4


def test_plot(workspace, capsys):
    run(capsys, "generate", "--run", workspace / "runs/r", "--corpus", workspace / "corpus",
        "--out", workspace / "p_gen")
    code, out, _ = run(capsys, "plot", "--out", workspace / "plots", "--run", workspace / "runs/r",
                       "--generated", workspace / "p_gen")
    assert code == 0
    assert (workspace / "plots/loss_curves.png").stat().st_size > 0
    assert list((workspace / "plots").glob("keyframes_*.png"))


def test_evaluate_needs_exactly_one_source(workspace, tmp_path, capsys):
    code, _, err = run(capsys, "evaluate", "--corpus", workspace / "corpus", "--out", tmp_path)
    assert code == 2 and "ConfigError" in err
