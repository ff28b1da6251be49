import json
import os

import numpy as np
import pytest

from advmod import exceptions, trainer, util
from advmod.cli import (
    EXIT_BAD_CHECKPOINT,
    EXIT_GRADCHECK_FAILED,
    EXIT_INVALID_CONFIG,
    EXIT_NON_FINITE_LOSS,
    EXIT_OK,
    main,
    read_manifest,
)
from advmod.config import parse_config
from advmod.nn import layers
from advmod.nn.layers import ActivationKind
from advmod.nn.networks import Network
from advmod.trainer import build_participants

TRAIN_FILES = ["alice.json", "bob.json", "eve.json", "loss_history.csv"]
EVAL_FILES = ["ber_sweep.csv", "constellation.csv", "hist_bob.csv", "hist_eve.csv", "hist_cipher.csv"]


@pytest.fixture
def trained_model(tmp_path, write_config, tiny_document):
    """Directory of a finished training run on the AWGN channel"""
    out = str(tmp_path / "model")
    assert main(["train", "--config", write_config(dict(tiny_document, channel="awgn")), "--out", out]) == EXIT_OK
    return out


def assert_manifest_matches(directory, expected_files):
    manifest = read_manifest(directory)
    assert sorted(manifest.files) == sorted(expected_files)
    for name, digest in manifest.files.items():
        assert util.file_digest(os.path.join(directory, name)) == digest
    return manifest


###########################################################################################
#       TRAIN
###########################################################################################
def test_train_writes_outputs(trained_model, tiny_document):
    manifest = assert_manifest_matches(trained_model, TRAIN_FILES)
    assert manifest.command == "train"
    assert manifest.config["channel"] == "awgn"
    assert manifest.seeds["init_seed"] == parse_config(tiny_document).init_seed
    _, rows = util.read_csv(os.path.join(trained_model, "loss_history.csv"))
    assert len(rows) == tiny_document["epochs"]


def test_train_is_reproducible(tmp_path, write_config, tiny_document):
    config_path = write_config(tiny_document)
    outputs = []
    for name in ("first", "second"):
        assert main(["train", "--config", config_path, "--out", str(tmp_path / name)]) == EXIT_OK
        outputs.append((tmp_path / name / "loss_history.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_zero_epochs_saves_initialisation(tmp_path, write_config, tiny_document):
    document = dict(tiny_document, epochs=0)
    out = str(tmp_path / "out")
    assert main(["train", "--config", write_config(document), "--out", out]) == EXIT_OK
    for initial in build_participants(parse_config(document)):
        assert Network.load(os.path.join(out, initial.role + ".json")).matches_snapshot(initial.snapshot())


def test_train_invalid_config(tmp_path, write_config, tiny_document):
    assert main(["train", "--config", write_config(dict(tiny_document, n=3)), "--out", str(tmp_path)]) == (
        EXIT_INVALID_CONFIG
    )
    assert main(["train", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == EXIT_INVALID_CONFIG
    empty_pool = write_config({"n": 16, "train_symbols": 50, "batch_size": 16}, name="empty_pool.json")
    assert main(["train", "--config", empty_pool, "--out", str(tmp_path)]) == EXIT_INVALID_CONFIG


def test_train_non_finite_loss(tmp_path, write_config, tiny_document, monkeypatch):
    monkeypatch.setattr(trainer, "loss_eve", lambda p, p_eve: float("inf"))
    assert main(["train", "--config", write_config(tiny_document), "--out", str(tmp_path)]) == EXIT_NON_FINITE_LOSS


def test_channel_failure_exits_non_finite(tmp_path, write_config, tiny_document, monkeypatch):
    def failing_draw(kind, *args, **kwargs):
        raise exceptions.ChannelError("{} channel cannot be drawn".format(kind))

    monkeypatch.setattr(trainer, "draw_channel", failing_draw)
    config_path = write_config(dict(tiny_document, channel="awgn"))
    assert main(["train", "--config", config_path, "--out", str(tmp_path / "train")]) == EXIT_NON_FINITE_LOSS
    sweep = ["sweep-levels", "--config", config_path, "--levels", "3", "--out", str(tmp_path / "sweep")]
    assert main(sweep) == EXIT_NON_FINITE_LOSS


###########################################################################################
#       EVAL
###########################################################################################
def test_eval_sweep(trained_model, tmp_path):
    out = str(tmp_path / "eval")
    assert main(["eval", "--model", trained_model, "--snr", "0:40:5", "--out", out]) == EXIT_OK
    assert_manifest_matches(out, EVAL_FILES)
    _, rows = util.read_csv(os.path.join(out, "ber_sweep.csv"))
    assert [float(row[0]) for row in rows] == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
    for name in ("hist_bob.csv", "hist_eve.csv", "hist_cipher.csv"):
        _, rows = util.read_csv(os.path.join(out, name))
        assert sum(int(row[2]) + int(row[3]) for row in rows) == 32 * 4
    _, rows = util.read_csv(os.path.join(out, "constellation.csv"))
    assert len(rows) == 32 * 2


def test_eval_clear_channel_single_row(trained_model, tmp_path):
    out = str(tmp_path / "eval")
    assert main(["eval", "--model", trained_model, "--channel", "clear", "--out", out]) == EXIT_OK
    _, rows = util.read_csv(os.path.join(out, "ber_sweep.csv"))
    assert len(rows) == 1
    assert rows[0][0] == "inf"


def test_eval_uses_recorded_test_set(trained_model, tmp_path, write_config, tiny_document):
    recorded = str(tmp_path / "recorded")
    explicit = str(tmp_path / "explicit")
    config_path = write_config(dict(tiny_document, channel="awgn"), name="eval.json")
    assert main(["eval", "--model", trained_model, "--snr", "10", "--out", recorded]) == EXIT_OK
    assert main(["eval", "--model", trained_model, "--snr", "10", "--out", explicit, "--config", config_path]) == (
        EXIT_OK
    )
    _, recorded_rows = util.read_csv(os.path.join(recorded, "ber_sweep.csv"))
    _, explicit_rows = util.read_csv(os.path.join(explicit, "ber_sweep.csv"))
    assert recorded_rows == explicit_rows


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--model", str(tmp_path), "--out", str(tmp_path / "eval")]) == EXIT_BAD_CHECKPOINT


def test_eval_corrupt_checkpoint(trained_model, tmp_path):
    with open(os.path.join(trained_model, "eve.json"), "w") as f:
        f.write('{"role": "eve"')
    assert main(["eval", "--model", trained_model, "--out", str(tmp_path / "eval")]) == EXIT_BAD_CHECKPOINT


def test_eval_mismatched_block_length(trained_model, tmp_path, tiny_document):
    other = str(tmp_path / "other")
    os.makedirs(other)
    bob = build_participants(parse_config(dict(tiny_document, n=6)))[1]
    bob.save(os.path.join(other, "bob.json"))
    for role in ("alice", "eve"):
        Network.load(os.path.join(trained_model, role + ".json")).save(os.path.join(other, role + ".json"))
    assert main(["eval", "--model", other, "--out", str(tmp_path / "eval")]) == EXIT_BAD_CHECKPOINT


def test_eval_bad_snr_spec(trained_model, tmp_path):
    assert main(["eval", "--model", trained_model, "--snr", "40:0:5", "--out", str(tmp_path)]) == EXIT_INVALID_CONFIG


###########################################################################################
#       GRADCHECK
###########################################################################################
def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == EXIT_OK
    printed = capsys.readouterr().out
    for kind in ActivationKind:
        assert kind.value in printed


def test_gradcheck_fails_on_corrupted_backward(monkeypatch):
    monkeypatch.setitem(layers.ACTIVATION_DERIVATIVES, ActivationKind.TANH, lambda x: np.zeros_like(x))
    assert main(["gradcheck"]) == EXIT_GRADCHECK_FAILED


###########################################################################################
#       SWEEP LEVELS
###########################################################################################
def test_sweep_levels(tmp_path, write_config, tiny_document):
    document = dict(tiny_document, channel="awgn")
    out = str(tmp_path / "sweep")
    assert main(["sweep-levels", "--config", write_config(document), "--levels", "3,13", "--out", out]) == EXIT_OK
    header, rows = util.read_csv(os.path.join(out, "levels_sweep.csv"))
    assert header == util.LEVELS_SWEEP_HEADER
    assert [int(row[0]) for row in rows] == [3, 13]
    leg_files = [os.path.join("L_{}".format(levels), name) for levels in (3, 13) for name in TRAIN_FILES]
    assert_manifest_matches(out, leg_files + ["levels_sweep.csv"])

    standalone = str(tmp_path / "standalone")
    standalone_document = dict(document, levels=13, alice_activation="tanh_discrete")
    assert main(["train", "--config", write_config(standalone_document), "--out", standalone]) == EXIT_OK
    for name in TRAIN_FILES:
        with open(os.path.join(out, "L_13", name)) as leg, open(os.path.join(standalone, name)) as alone:
            assert leg.read() == alone.read()


def test_sweep_levels_rejects_single_level(tmp_path, write_config, tiny_document):
    args = ["sweep-levels", "--config", write_config(tiny_document), "--levels", "1,13", "--out", str(tmp_path)]
    assert main(args) == EXIT_INVALID_CONFIG


def test_manifest_is_json(trained_model):
    with open(os.path.join(trained_model, "manifest.json")) as f:
        document = json.load(f)
    assert set(document) == {"command", "tool_version", "config", "seeds", "started_at", "finished_at", "files"}
