"""Config resolution and end-to-end command behavior."""

import json
import subprocess
import sys

import numpy as np
import pytest

from maln import cli
from maln.config import (RunConfig, available_presets, format_kv,
                         parse_kv_file, preset_path)
from maln.data import load_binary
from maln.errors import ConfigError
from maln.model import SensorAutoencoder

TINY_CFG = """\
# fast settings for tests
synth_classes = 3
synth_samples_per_class = 20
synth_truth_dim = 3
synth_sensor_ids = A,B,C
synth_sensor_dims = 6,5,4
synth_view_depths = 1,1,1
train_fraction = 0.5
data_seed = 3
latent_dim = 4
enc_hidden = 8
checkpoints = 1
epochs_per_checkpoint = 3
triplets_per_checkpoint = 120
batch_size = 64
learning_rate = 0.005
classifier_hidden = 8
classifier_epochs = 10
classifier_batch = 32
ensemble_members = 2
knn_k = 3
knn_sweep = 1,3,5
regressor_hidden = 8
regressor_folds = 2
regressor_epochs = 5
regressor_lr = 0.01
regressor_batch = 16
map_epochs = 10
map_batch = 64
map_lr = 0.005
latent_gap_threshold = 1.0
figures = false
seed = 5
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def tiny_cfg(workdir):
    path = workdir / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


@pytest.fixture(scope="module")
def train_run(workdir, tiny_cfg):
    out = workdir / "run_train"
    assert cli.main(["train", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    return out


# -- key-value parsing -----------------------------------------------------------


def test_parse_kv_file(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("# header comment\nალpha = 1.5\n\nname = hello world # trailing\n")
    got = parse_kv_file(path)
    assert got == {"ალpha": "1.5", "name": "hello world"}


def test_parse_kv_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("alpha 1.5\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        parse_kv_file(path)
    path.write_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_kv_file(path)
    with pytest.raises(ConfigError, match="not found"):
        parse_kv_file(tmp_path / "absent.cfg")


def test_format_kv_round_trip(tmp_path):
    pairs = {"alpha": "0.4", "sensors": "HSI,LIDAR"}
    path = tmp_path / "rt.cfg"
    path.write_text(format_kv(pairs))
    assert parse_kv_file(path) == pairs


# -- run config ----------------------------------------------------------------


def test_config_coercion_by_field_type():
    cfg = RunConfig.from_dict({"alpha": "0.4", "checkpoints": "10",
                               "hinge": "false", "enc_hidden": "128,64",
                               "sensors": "HSI,SAR"})
    assert cfg.alpha == 0.4
    assert cfg.checkpoints == 10
    assert cfg.hinge is False
    assert cfg.enc_hidden == (128, 64)
    assert cfg.sensors == ("HSI", "SAR")


def test_config_rejects_unknown_and_malformed_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"alhpa": "0.4"})
    with pytest.raises(ConfigError, match="checkpoints"):
        RunConfig.from_dict({"checkpoints": "many"})
    with pytest.raises(ConfigError, match="hinge"):
        RunConfig.from_dict({"hinge": "maybe"})


def test_config_to_dict_round_trip():
    cfg = RunConfig(alpha=0.4, enc_hidden=(9, 3), hinge=False, sensors=("X", "Y"))
    back = RunConfig.from_dict(cfg.to_dict())
    assert back == cfg


def test_config_validate():
    with pytest.raises(ConfigError, match="strategy"):
        RunConfig(strategy="soft").validate()
    with pytest.raises(ConfigError, match="triplet_sensor"):
        RunConfig(triplet_sensor="C").validate()
    with pytest.raises(ConfigError, match="two ids"):
        RunConfig(sensors=("A",)).validate()
    with pytest.raises(ConfigError, match="equal length"):
        RunConfig(synth_sensor_ids=("A", "B"), synth_sensor_dims=(4,),
                  synth_view_depths=(1, 1)).validate()


def test_presets_ship_with_package():
    names = available_presets()
    assert {"synth", "neon", "muufl-classify", "muufl-translate", "berlin"} <= set(names)
    for name in names:
        cfg = RunConfig.from_sources(preset=name)
        cfg.validate()


def test_preset_resolution_and_override_layering():
    cfg = RunConfig.from_sources(preset="muufl-classify")
    assert cfg.alpha == 0.4
    assert cfg.gamma == 0.0
    assert cfg.latent_dim == 32
    assert cfg.knn_k == 35
    # command-line layer wins over the preset
    over = RunConfig.from_sources(preset="muufl-classify",
                                  overrides={"gamma": "0.3", "seed": None})
    assert over.gamma == 0.3
    assert over.seed == cfg.seed  # None overrides are dropped


def test_unknown_preset_lists_available():
    with pytest.raises(ConfigError, match="synth"):
        preset_path("nonexistent")


def test_config_file_layers_over_preset(tmp_path):
    path = tmp_path / "patch.cfg"
    path.write_text("knn_k = 7\n")
    cfg = RunConfig.from_sources(preset="muufl-classify", config_path=path)
    assert cfg.knn_k == 7
    assert cfg.alpha == 0.4  # untouched preset value


# -- staging ---------------------------------------------------------------------


def test_staged_output_commits_only_on_success(tmp_path):
    final = tmp_path / "out"
    with cli._staged_output(final) as staging:
        (staging / "f.txt").write_text("x")
        assert not final.exists()
    assert (final / "f.txt").read_text() == "x"
    assert not (tmp_path / "out.partial").exists()

    with pytest.raises(RuntimeError):
        with cli._staged_output(tmp_path / "fail") as staging:
            (staging / "f.txt").write_text("x")
            raise RuntimeError("boom")
    assert not (tmp_path / "fail").exists()
    assert not (tmp_path / "fail.partial").exists()

    with pytest.raises(ConfigError, match="already exists"):
        with cli._staged_output(final):
            pass


# -- train ------------------------------------------------------------------------


def test_train_writes_manifest_and_artifacts(train_run):
    manifest = json.loads((train_run / "manifest.json").read_text())
    assert manifest["tool"] == "maln"
    assert manifest["command"] == "train"
    assert manifest["seed"] == 5
    assert 0 < manifest["final_silhouette"] <= 1.0
    assert manifest["wall_clock_seconds"] > 0
    for rel in manifest["artifacts"].values():
        assert (train_run / rel).exists(), rel
    resolved = parse_kv_file(train_run / "resolved.cfg")
    assert resolved["checkpoints"] == "1"
    assert (train_run / "checkpoints" / "checkpoint_01_a.maln").exists()


def test_train_log_format(train_run):
    lines = (train_run / "training_log.tsv").read_text().splitlines()
    assert lines[0] == "checkpoint\tepoch\tl_t\tl_e\tl_se\ttotal\tsilhouette"
    assert len(lines) == 1 + 3  # one checkpoint, three epochs
    rows = [line.split("\t") for line in lines[1:]]
    assert all(len(r) == 7 for r in rows)
    assert rows[0][6] == "" and rows[1][6] == ""
    assert float(rows[2][6]) > -1.0  # silhouette only on the last epoch


def test_train_refuses_existing_out(tiny_cfg, train_run, capsys):
    code = cli.main(["train", "--config", str(tiny_cfg), "--out", str(train_run)])
    assert code == 1
    assert "already exists" in capsys.readouterr().err
    assert (train_run / "manifest.json").exists()  # untouched
    assert not train_run.with_name(train_run.name + ".partial").exists()


def test_train_missing_dataset_exits_2(tiny_cfg, workdir, capsys):
    code = cli.main(["train", "--config", str(tiny_cfg),
                     "--dataset", "no/such/file.mmds",
                     "--out", str(workdir / "never")])
    assert code == 2
    assert "no/such/file.mmds" in capsys.readouterr().err
    assert not (workdir / "never").exists()
    assert not (workdir / "never.partial").exists()


def test_unknown_preset_exits_1(workdir, capsys):
    code = cli.main(["train", "--preset", "bogus", "--out", str(workdir / "x")])
    assert code == 1
    assert "bogus" in capsys.readouterr().err


def test_train_is_bit_identical_on_rerun(tiny_cfg, train_run, workdir):
    out = workdir / "run_train_again"
    assert cli.main(["train", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    for name in ("model_a.maln", "model_b.maln", "model_a.cfg",
                 "training_log.tsv", "resolved.cfg"):
        assert (out / name).read_bytes() == (train_run / name).read_bytes(), name


def test_train_dump_triplets(tiny_cfg, workdir):
    out = workdir / "run_dump"
    assert cli.main(["train", "--config", str(tiny_cfg), "--dump-triplets",
                     "--out", str(out)]) == 0
    lines = (out / "triplets.tsv").read_text().splitlines()
    assert len(lines) == 120
    assert all(len(line.split(" ")) == 6 for line in lines)


def test_train_figures(tiny_cfg, workdir, tmp_path):
    cfg = tmp_path / "figs.cfg"
    cfg.write_text(TINY_CFG.replace("figures = false", "figures = true"))
    out = workdir / "run_figs"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("loss_curves.png", "silhouette.png", "embeddings.png"):
        assert (out / name).stat().st_size > 0


def test_flag_overrides_reach_the_plan(tiny_cfg, workdir):
    out = workdir / "run_flags"
    assert cli.main(["train", "--config", str(tiny_cfg), "--gamma", "0.0",
                     "--strategy", "hard", "--triplet-sensor", "alt",
                     "--seed", "9", "--out", str(out)]) == 0
    resolved = parse_kv_file(out / "resolved.cfg")
    assert resolved["gamma"] == "0.0"
    assert resolved["strategy"] == "hard"
    assert resolved["triplet_sensor"] == "alternating"
    assert resolved["seed"] == "9"
    log = (out / "training_log.tsv").read_text().splitlines()
    l_se = [line.split("\t")[4] for line in log[1:]]
    assert all(v == "0" for v in l_se)  # gamma 0 kills the SE term


# -- downstream commands -------------------------------------------------------------


def test_classify_outputs(train_run, workdir):
    out = workdir / "run_classify"
    assert cli.main(["classify", "--run", str(train_run), "--out", str(out),
                     "--unified", "--knn-sweep"]) == 0
    metrics = (out / "metrics.tsv").read_text().splitlines()
    assert metrics[0] == "model\tmetric\tvalue"
    models = {line.split("\t")[0] for line in metrics[1:]}
    assert models == {"fused_knn", "fused_classifier", "fused_ensemble"}
    for name in models:
        pred_lines = (out / f"predictions_{name}.tsv").read_text().splitlines()
        assert pred_lines[0] == "sample_id\ttrue\tpred"
        assert len(pred_lines) == 1 + 30  # test split: half of 60

    unified = (out / "unified.tsv").read_text().splitlines()
    assert unified[0] == "train_sensor\ttest_sensor\toa\taa\tkappa"
    pairs = [tuple(line.split("\t")[:2]) for line in unified[1:]]
    assert pairs == [("A", "A"), ("A", "B"), ("B", "A"), ("B", "B")]

    sweep = (out / "knn_sweep.tsv").read_text().splitlines()
    assert sweep[0] == "mode\tk\toa\taa\tkappa"
    assert len(sweep) == 1 + 3 * 3  # modes fused, A, B at k in {1, 3, 5}

    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["overall_accuracy"]) == models


def test_classify_rerun_and_k_override(train_run, workdir):
    first = workdir / "run_classify"
    again = workdir / "run_classify_again"
    assert cli.main(["classify", "--run", str(train_run), "--out", str(again),
                     "--unified", "--knn-sweep"]) == 0
    for name in ("metrics.tsv", "unified.tsv", "knn_sweep.tsv",
                 "predictions_fused_knn.tsv"):
        assert (again / name).read_bytes() == (first / name).read_bytes(), name

    k1 = workdir / "run_classify_k1"
    assert cli.main(["classify", "--run", str(train_run), "--out", str(k1),
                     "--k", "1"]) == 0
    assert parse_kv_file(k1 / "resolved.cfg")["knn_k"] == "1"


def test_classify_requires_manifest(workdir, tmp_path, capsys):
    code = cli.main(["classify", "--run", str(tmp_path), "--out",
                     str(workdir / "nope")])
    assert code == 2
    assert "manifest.json" in capsys.readouterr().err


def test_map_sensor_outputs(train_run, workdir):
    out = workdir / "run_map"
    assert cli.main(["map-sensor", "--run", str(train_run), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["frozen_sensor"] == "A"
    frozen = SensorAutoencoder.load(train_run / "model_a")
    assert manifest["frozen_digest"] == frozen.params_digest()
    assert manifest["threshold_met"] is True  # threshold 1.0 is generous
    assert manifest["final_latent_gap"] < 1.0
    assert (out / "model_c.maln").exists()
    log_lines = (out / "mapping_log.tsv").read_text().splitlines()
    assert log_lines[0] == "epoch\tlatent\trecon\ttotal"
    assert len(log_lines) == 1 + 10
    mapped = SensorAutoencoder.load(out / "model_c")
    assert mapped.sensor_id == "C"
    assert mapped.latent_dim == frozen.latent_dim


def test_translate_outputs(train_run, workdir):
    out = workdir / "run_translate"
    assert cli.main(["translate", "--run", str(train_run), "--out", str(out)]) == 0
    synth = load_binary(out / "translated.mmds")
    assert synth.sensor_ids == ["B"]
    assert synth.n_samples == 30
    assert synth.dim("B") == 5
    rows = dict(line.split("\t") for line in
                (out / "translation_metrics.tsv").read_text().splitlines()[1:])
    assert set(rows) == {"fold_latent_mse_mean", "fold_latent_mse_std",
                         "test_latent_mse", "baseline_latent_mse", "decoded_mse"}
    assert float(rows["decoded_mse"]) > 0.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["from_sensor"] == "A" and manifest["to_sensor"] == "B"


def test_translate_direction_flags(train_run, workdir):
    out = workdir / "run_translate_rev"
    assert cli.main(["translate", "--run", str(train_run), "--out", str(out),
                     "--from", "B", "--to", "A"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["from_sensor"] == "B" and manifest["to_sensor"] == "A"
    assert load_binary(out / "translated.mmds").sensor_ids == ["A"]


def test_ablate_grid(tiny_cfg, workdir):
    out = workdir / "run_ablate"
    assert cli.main(["ablate", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    lines = (out / "ablation.tsv").read_text().splitlines()
    assert lines[0] == "se_weight\tstrategy\ttriplet_sensor\tsilhouette\tfinal_total_loss"
    assert len(lines) == 1 + 12
    cells = {tuple(line.split("\t")[:3]) for line in lines[1:]}
    want = {(g, s, t) for g in ("0.2", "0") for s in ("hard", "semi_hard")
            for t in ("A", "B", "alternating")}
    assert cells == want


def test_gen_data_and_train_on_it(tiny_cfg, workdir, capsys):
    data = workdir / "synth.mmds"
    assert cli.main(["gen-data", "--config", str(tiny_cfg), "--out", str(data)]) == 0
    assert "60 samples" in capsys.readouterr().out
    ds = load_binary(data)
    assert ds.sensor_ids == ["A", "B", "C"]
    assert ds.n_samples == 60

    assert cli.main(["gen-data", "--config", str(tiny_cfg), "--out", str(data)]) == 1
    assert "already exists" in capsys.readouterr().err

    out = workdir / "run_on_file"
    assert cli.main(["train", "--config", str(tiny_cfg), "--dataset", str(data),
                     "--out", str(out)]) == 0
    assert parse_kv_file(out / "resolved.cfg")["dataset"] == str(data)


def test_console_script_reports_version():
    proc = subprocess.run(["maln", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "maln" in proc.stdout
