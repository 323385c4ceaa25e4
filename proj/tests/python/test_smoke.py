import json

import numpy as np
import pytest

import ptrack


def test_correlation_self_similarity_is_one():
    rng = np.random.default_rng(0)
    frame = rng.normal(size=(8, 5, 6))
    query = ptrack.bilinear_sample(frame, 2.0, 3.0)
    c = ptrack.correlation_map(frame, np.asarray(query))
    assert c.shape == (5, 6)
    assert c[3, 2] == 1.0
    assert np.all(np.abs(c) <= 1.0)


def test_argmax_and_soft_argmax():
    m = np.zeros((3, 3))
    m[2, 1] = 5.0
    assert ptrack.argmax2d(m) == (1.0, 2.0)
    x, y = ptrack.soft_argmax2d(np.full((4, 7), 0.3))
    assert x == pytest.approx(3.0)
    assert y == pytest.approx(1.5)


def test_zero_shot_follows_a_moving_feature():
    t, d, h, w = 4, 3, 6, 6
    vol = np.zeros((t, d, h, w))
    vol[:, 1, :, :] = 0.1
    for i in range(t):
        vol[i, 0, 1, i] = 1.0
    pts = ptrack.zero_shot_track(vol, 0, 0.0, 1.0)
    assert pts.shape == (t, 2)
    assert [tuple(p) for p in pts] == [(float(i), 1.0) for i in range(t)]


def test_feature_file_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(2, 3, 4, 5)).astype(np.float32).astype(np.float64)
    path = tmp_path / "v.fvid"
    ptrack.write_features(path, feats, stride=8, source_h=32, source_w=40)
    back, stride, sh, sw = ptrack.read_features(path)
    assert np.array_equal(back, feats)
    assert (stride, sh, sw) == (8, 32, 40)
    with pytest.raises(ptrack.FileNotFound):
        ptrack.read_features(tmp_path / "missing.fvid")
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ptrack.CorruptFile):
        ptrack.read_features(path)


def test_probe_parameter_count():
    assert ptrack.probe_parameter_count() == 5378
    assert len(ptrack.probe_init(0)) == 5378


def test_zero_shot_pipeline(tmp_path):
    cfg = {"features": {"num_videos": 3, "num_frames": 6, "num_tracks": 4,
                        "grid_h": 8, "grid_w": 8, "feature_dim": 8, "stride": 4}}
    ptrack.gen_synth(cfg, tmp_path / "data")
    report = ptrack.eval_zeroshot(tmp_path / "data" / "features",
                                  tmp_path / "data" / "annotations.json", tmp_path / "zs")
    assert report["delta_avg"] == 1.0
    assert "aj" not in report or report["aj"] is None
    preds = tmp_path / "zs" / "predictions.json"
    again = ptrack.evaluate(tmp_path / "data" / "annotations.json", preds)
    assert again["delta_avg"] == 1.0


def test_train_probe_writes_checkpoint(tmp_path):
    cfg = {"features": {"num_videos": 2, "num_frames": 4, "num_tracks": 3, "grid_h": 6,
                        "grid_w": 6, "feature_dim": 8, "stride": 4, "subcell": True,
                        "noise": 0.2, "occlusion_rate": 0.2}}
    ptrack.gen_synth(cfg, tmp_path / "data")
    conf = tmp_path / "probe.json"
    conf.write_text(json.dumps({"optim": {"epochs": 2, "batch_size": 2}}))
    report = ptrack.train_probe(tmp_path / "data" / "features",
                                tmp_path / "data" / "annotations.json", tmp_path / "run",
                                config=conf, seed=1)
    assert 0.0 <= report["delta_avg"] <= 1.0
    version, kind, config, count = ptrack.checkpoint_info(tmp_path / "run" / "probe.ptck")
    assert (version, kind, count) == (1, "probe", 5378)
    assert json.loads(config)["parameter_count"] == 5378


def test_bad_config_raises():
    with pytest.raises(ptrack.InvalidConfig):
        ptrack.evaluate("a.json", "b.json", pooling="nope")
