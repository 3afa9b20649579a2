import csv
import json

import pytest
import yaml

from hfd.errors import ConfigError, UnsupportedTable
from hfd.experiments import (
    TABLE3,
    ExperimentConfig,
    ExperimentData,
    load_model,
    load_rows,
    predictions_for,
    reproduce_table,
    run_experiment,
    save_row,
    score_checkpoint,
    score_predictions,
    table_configs,
)

FAST = dict(epochs=2, layers=3, channels=16, clip_len=8, video_width=4, flow_method="farneback", seeds=(0, 1))


@pytest.fixture(scope="module")
def data(suite_dir):
    return ExperimentData(suite_dir)


def test_config_invariants():
    with pytest.raises(ConfigError):
        ExperimentConfig("mstcn-a", heads=("seg_h",))
    with pytest.raises(ConfigError):
        ExperimentConfig("mstcn-a", heads=("cls", "seg_r"))
    with pytest.raises(ConfigError):
        ExperimentConfig("i3d-d", heads=("cls", "seg_h"))
    with pytest.raises(ConfigError):
        ExperimentConfig("mstcn-b", modalities=())
    with pytest.raises(ConfigError):
        ExperimentConfig("svm")
    with pytest.raises(ConfigError):
        ExperimentConfig("i3d-a", cls_weight=0.0)
    cfg = ExperimentConfig("MSTCN-B", modalities=("gripper", "rgb"), heads=("seg_r", "seg_h", "cls"),
                           train_platform="T", task="h2r")
    assert cfg.modalities == ("V", "G") and cfg.heads == ("cls", "seg_h", "seg_r")
    assert cfg.train_platform == "HSR" and cfg.task == "H2R"
    assert cfg.streams == ("rgb", "flow", "gripper")


def test_yaml_round_trip_and_overrides(tmp_path):
    cfg = ExperimentConfig("mstcn-a", ("V", "FT"), ("cls", "seg_h"), seeds=(3, 4), name="x")
    path = cfg.save(tmp_path / "c.yaml")
    assert all(not isinstance(v, dict) for v in yaml.safe_load(path.read_text()).values())
    loaded = ExperimentConfig.load(path)
    assert loaded == cfg and loaded.fingerprint == cfg.fingerprint
    assert ExperimentConfig.load(path, epochs=3).epochs == 3
    path.write_text("model: mstcn-a\nbogus: 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_fingerprint_depends_on_identity_only():
    a = ExperimentConfig("mstcn-b", out_dir="x", name="one")
    b = ExperimentConfig("mstcn-b", out_dir="y", name="two")
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != ExperimentConfig("mstcn-b", epochs=49).fingerprint


def test_table3_fingerprints_injective():
    pairs = table_configs(3)
    assert len(pairs) == len(TABLE3) == 23
    assert [k["ID"] for k, _ in pairs] == [i for i in range(1, 25) if i != 11]
    by_config = {}
    for keys, cfg in pairs:
        by_config.setdefault(json.dumps(cfg.to_dict(), sort_keys=True), set()).add(cfg.fingerprint)
    assert all(len(fps) == 1 for fps in by_config.values())
    assert len({cfg.fingerprint for _, cfg in pairs}) == len(by_config) == 22
    ids = {k["ID"]: cfg.fingerprint for k, cfg in pairs}
    # the published grid lists the same I3D-D configuration twice
    assert ids[7] == ids[12]


def test_table_grids():
    t5 = table_configs(5)
    assert len(t5) == 12
    assert {(c.train_platform, c.test_platform) for _, c in t5} == {
        ("HSR", "HSR"), ("HSR", "KINOVA_GEN3"), ("KINOVA_GEN3", "HSR"), ("KINOVA_GEN3", "KINOVA_GEN3")}
    assert len({c.model for _, c in t5}) == 3
    t6 = table_configs(6)
    assert len(t6) == 6 and {c.task for _, c in t6} == {"R2H", "H2R"}
    t4 = table_configs(4)
    assert t4[0][1].model == "correlation" and len(t4) == 7
    with pytest.raises(UnsupportedTable):
        table_configs(2)


def test_correlation_row_has_zero_std(data, tmp_path):
    cfg = ExperimentConfig("correlation", seeds=(0, 1, 2), out_dir=str(tmp_path))
    row = run_experiment(cfg, data)
    assert row.complete and row.report.n_runs == 3
    assert all(v == 0.0 for v in row.report.std.values())
    assert row.provenance["dataset"] == data.digest()
    assert "+" in row.provenance["code_version"]


def test_mstcn_rerun_is_identical(data, tmp_path):
    cfg = ExperimentConfig("mstcn-a", ("V", "FT", "G"), ("cls", "seg_h"), out_dir=str(tmp_path), **FAST)
    first = run_experiment(cfg, data, checkpoint_dir=tmp_path / "ckpt")
    second = run_experiment(cfg, data)
    assert first.report.values() == second.report.values()
    assert first.report.std == second.report.std
    assert [r.values() for r in first.runs] == [r.values() for r in second.runs]
    assert first.histories == second.histories
    # append-only: two rows with the same fingerprint
    rows = load_rows(tmp_path)
    assert len(rows) == 2 and {r.fingerprint for r in rows} == {cfg.fingerprint}

    ckpt = tmp_path / "ckpt" / f"{cfg.fingerprint}_seed0.pt"
    model, loaded_cfg = load_model(ckpt)
    assert loaded_cfg == cfg
    assert score_checkpoint(ckpt, data).values() == first.runs[0].values()
    predictions = predictions_for(ckpt, data)
    annotations = {s.trial_id: s for s in data.select(cfg)[2]}
    assert score_predictions(predictions, annotations).values() == first.runs[0].values()


def test_i3d_experiment_runs(data, tmp_path):
    cfg = ExperimentConfig("i3d-d", ("V", "FT", "G"), out_dir=str(tmp_path), **{**FAST, "seeds": (0,)})
    row = run_experiment(cfg, data)
    assert row.complete and set(row.report.values()) == {"outcome_accuracy"}


def test_failed_seeds_recorded(data, tmp_path, monkeypatch):
    import hfd.experiments as ex

    real = ex.RUNNERS["correlation"]

    def flaky(config, data, seed):
        if seed == 1:
            raise RuntimeError("boom")
        return real(config, data, seed)

    monkeypatch.setitem(ex.RUNNERS, "correlation", flaky)
    row = run_experiment(ExperimentConfig("correlation", seeds=(0, 1, 2), out_dir=str(tmp_path)), data)
    assert not row.complete and set(row.failures) == {"1"} and row.report.n_runs == 2

    monkeypatch.setitem(ex.RUNNERS, "correlation", lambda *a: flaky(a[0], a[1], 1))
    with pytest.raises(RuntimeError):
        run_experiment(ExperimentConfig("correlation", seeds=(0, 1), out_dir=str(tmp_path)), data)
    failed = [r for r in load_rows(tmp_path) if r.report is None]
    assert len(failed) == 1 and set(failed[0].failures) == {"0", "1"}


def test_save_row_never_overwrites(data, tmp_path):
    cfg = ExperimentConfig("correlation", seeds=(0,), out_dir=str(tmp_path))
    row = run_experiment(cfg, data, persist=False)
    paths = {save_row(row, tmp_path) for _ in range(3)}
    assert len(paths) == 3 and len(load_rows(tmp_path)) == 3


def test_reproduce_table4(data, tmp_path):
    path = reproduce_table(4, data, tmp_path, **FAST)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 7
    assert rows[0]["Model"] == "Correlation"
    for row in rows:
        for key in ("F1@10", "F1@25", "F1@50", "Frame-wise acc"):
            mean = row[key].split(" ± ")[0]
            assert len(mean.split(".")[1]) == 1
    assert " ± " in rows[1]["F1@10"]
    assert len(load_rows(tmp_path)) == 7
