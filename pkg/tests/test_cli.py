"""End-to-end command-line tests at toy scale."""
import json

import numpy as np
import pytest

from hypercut.cli import main
from hypercut.datastore import read_b2v, write_b2v
from hypercut.pipeline import synth_fake_blur


def run(argv):
    return main([str(a) for a in argv])


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--help"])
    assert exc.value.code == 0
    assert "gen-data" in capsys.readouterr().out


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run([])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run(["gen-data", "--out", "/tmp/x", "--no-such-flag"])
    assert exc.value.code == 2


def test_missing_model_is_runtime_error(tmp_path, capsys):
    assert run(["gen-data", "--out", tmp_path / "d", "--count", 4,
                "--size", 16, "--frames", 5]) == 0
    code = run(["eval-hypercut", "--data", tmp_path / "d",
                "--model", tmp_path / "nonexistent"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_gen_data_deterministic_bytes(tmp_path):
    for d in ("a", "b"):
        assert run(["gen-data", "--out", tmp_path / d, "--count", 6,
                    "--size", 16, "--frames", 5, "--seed", 3]) == 0
    for name in ["manifest.json"] + [f"sample_{i:06d}.b2v" for i in range(6)]:
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes(), name


def test_gen_data_split_and_shapes(tmp_path):
    assert run(["gen-data", "--out", tmp_path / "d", "--count", 10,
                "--size", 16, "--frames", 5, "--channels", 3,
                "--split", 0.3]) == 0
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["count"] == 10
    assert len(manifest["split"]["test"]) == 3
    blurry, frames = read_b2v(tmp_path / "d" / "sample_000000.b2v")
    assert blurry.shape == (16, 16, 3)
    assert frames.shape == (5, 16, 16, 3)


@pytest.fixture(scope="module")
def toy_workspace(tmp_path_factory):
    """One tiny dataset plus trained order and deblur models, shared by the
    chain tests below."""
    root = tmp_path_factory.mktemp("cli")
    assert run(["gen-data", "--out", root / "data", "--count", 10,
                "--size", 16, "--frames", 5, "--seed", 1]) == 0
    assert run(["train-hypercut", "--data", root / "data",
                "--out", root / "enc", "--epochs", 1, "--batch", 4,
                "--dim", 16]) == 0
    assert run(["train-deblur", "--data", root / "data",
                "--out", root / "model", "--regime", "oi+hypercut",
                "--encoder", root / "enc", "--epochs", 1, "--batch", 4]) == 0
    return root


def test_train_hypercut_outputs(toy_workspace):
    enc = toy_workspace / "enc"
    for name in ("encoder.ckpt", "hyperplane.bin", "encoder.json",
                 "metrics.json", "report.txt", "train_log.txt", "config.json"):
        assert (enc / name).exists(), name
    report = json.loads((enc / "metrics.json").read_text())
    assert 0.0 <= report["hit"] <= 1.0
    assert report["degenerate"] is False


def test_eval_hypercut_matches_training_report(toy_workspace, capsys):
    assert run(["eval-hypercut", "--data", toy_workspace / "data",
                "--model", toy_workspace / "enc",
                "--out", toy_workspace / "enc_eval"]) == 0
    capsys.readouterr()
    trained = json.loads((toy_workspace / "enc" / "metrics.json").read_text())
    evaled = json.loads((toy_workspace / "enc_eval" / "metrics.json").read_text())
    del trained["degenerate"]
    assert evaled == trained


def test_train_deblur_requires_encoder(toy_workspace, tmp_path):
    code = run(["train-deblur", "--data", toy_workspace / "data",
                "--out", tmp_path / "m", "--regime", "oi+hypercut",
                "--epochs", 1])
    assert code == 1


def test_eval_deblur_report(toy_workspace, capsys):
    assert run(["eval-deblur", "--data", toy_workspace / "data",
                "--model", toy_workspace / "model",
                "--encoder", toy_workspace / "enc",
                "--out", toy_workspace / "eval"]) == 0
    out = capsys.readouterr().out
    assert "mean_ppsnr=" in out
    assert "order_agreement=" in out
    report = json.loads((toy_workspace / "eval" / "metrics.json").read_text())
    assert len(report["ppsnr_per_k"]) == 5


def test_dump_embeddings(toy_workspace):
    assert run(["dump-embeddings", "--data", toy_workspace / "data",
                "--model", toy_workspace / "enc",
                "--out", toy_workspace / "emb"]) == 0
    data = json.loads((toy_workspace / "emb" / "embeddings_2d.json").read_text())
    # test split: 2 sequences x 2 symmetric pairs x 2 orientations
    assert len(data["points"]) == len(data["sides"]) == 8
    assert set(data["sides"]) <= {-1, 1}


def test_align_command(toy_workspace, tmp_path):
    rng = np.random.default_rng(7)
    stream = rng.random((20, 16, 16, 3)).astype(np.float32)
    offset = 5
    blurry = synth_fake_blur(stream[offset:offset + 7])
    write_b2v(tmp_path / "stream.b2v", stream[0], stream)
    write_b2v(tmp_path / "blurry.b2v", blurry.astype(np.float32), stream[:1])
    assert run(["align", "--stream", tmp_path / "stream.b2v",
                "--blurry", tmp_path / "blurry.b2v",
                "--out", tmp_path / "aligned"]) == 0
    result = json.loads((tmp_path / "aligned" / "alignment.json").read_text())
    assert result["offset"] == offset
    aligned_blur, aligned = read_b2v(tmp_path / "aligned" / "aligned.b2v")
    assert aligned.shape == (7, 16, 16, 3)


def test_ablate_alpha_table(toy_workspace, capsys):
    assert run(["ablate-alpha", "--data", toy_workspace / "data",
                "--encoder", toy_workspace / "enc",
                "--out", toy_workspace / "abl",
                "--alphas", "0,0.2", "--epochs", 1, "--batch", 4]) == 0
    rows = json.loads((toy_workspace / "abl" / "ablate_alpha.json").read_text())
    assert [r["alpha"] for r in rows] == [0.0, 0.2]
    assert "alpha" in capsys.readouterr().out
