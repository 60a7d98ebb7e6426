import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adwsod.cli import main
from adwsod.config import TrainConfig, format_config, load_config, parse_config
from adwsod.synth import SyntheticConfig


def test_parse_config_types_and_comments():
    cfg = parse_config("# run\nepochs = 3\nlearn_mu = false  # fixed\nprior_variant = grid\nlr=0.5\n", TrainConfig)
    assert (cfg.epochs, cfg.learn_mu, cfg.prior_variant, cfg.lr) == (3, False, "grid", 0.5)
    syn = parse_config("offset_means = 0.1, 0.2; -0.3, 0.0\nanchor_keypoints = 1, 2\n", SyntheticConfig)
    assert syn.offset_means == ((0.1, 0.2), (-0.3, 0.0)) and syn.anchor_keypoints == (1, 2)


@pytest.mark.parametrize("text,needle", [("epoch = 3", "unknown key"), ("epochs 3", "key = value"), ("learn_mu = maybe", "learn_mu")])
def test_parse_config_errors_name_the_line(text, needle):
    with pytest.raises(ValueError, match=needle):
        parse_config("\n" + text, TrainConfig)


@given(
    st.integers(1, 100),
    st.floats(1e-6, 1.0),
    st.booleans(),
    st.sampled_from(["normal", "grid", "center"]),
    st.floats(0.0, 1.0),
)
def test_format_parse_round_trip(epochs, lr, learn, variant, rho):
    cfg = TrainConfig(epochs=epochs, lr=lr, learn_sigma=learn, prior_variant=variant, supervised_fraction=rho)
    assert parse_config(format_config(cfg), TrainConfig) == cfg
    assert parse_config(format_config(cfg), TrainConfig).hash() == cfg.hash()


def test_synthetic_config_round_trip():
    cfg = SyntheticConfig()
    assert parse_config(format_config(cfg), SyntheticConfig) == cfg


def test_invalid_train_config():
    for kw in ({"epochs": 0}, {"supervised_fraction": 1.5}, {"alpha_o": -1.0}, {"loss_style": "focal"}):
        with pytest.raises(ValueError):
            TrainConfig(**kw).validate()


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.cfg"))
    assert files
    for f in files:
        cls = SyntheticConfig if f.name.startswith("synth") else TrainConfig
        load_config(f, cls).validate()


def test_cli_end_to_end(tmp_path, capsys):
    synth_cfg = tmp_path / "synth.cfg"
    synth_cfg.write_text("train_per_action = 4\nval_per_action = 1\ntest_per_action = 2\n")
    train_cfg = tmp_path / "train.cfg"
    train_cfg.write_text("epochs = 2\nhidden = 4\n")
    data_dir, ckpt, dets, rep = tmp_path / "data", tmp_path / "ck.json", tmp_path / "dets.json", tmp_path / "rep.json"
    assert main(["synth", "--config", str(synth_cfg), "--out", str(data_dir)]) == 0
    assert main(["train", "--config", str(train_cfg), "--data", str(data_dir), "--out", str(ckpt)]) == 0
    assert main(["infer", "--ckpt", str(ckpt), "--data", str(data_dir), "--out", str(dets)]) == 0
    assert main(["eval", "--data", str(data_dir), "--dets", str(dets), "--report", str(rep)]) == 0
    report = json.loads(rep.read_text())
    assert set(report) >= {"per_class_ap", "map", "per_class_corloc", "corloc_mean"}
    first = ckpt.read_bytes()
    assert main(["train", "--config", str(train_cfg), "--data", str(data_dir), "--out", str(ckpt)]) == 0
    assert ckpt.read_bytes() == first


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--seed", "3"]) == 0
    assert "key_logits" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--data", "/nonexistent/dir", "--out", "/tmp/x.json"],
        ["eval", "--data", "/nonexistent.json", "--dets", "/nonexistent.json"],
    ],
)
def test_cli_errors_exit_nonzero_with_one_line(argv, capsys):
    assert main(argv) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error:")


def test_cli_bad_config_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1
    assert "unknown key" in capsys.readouterr().err
