import math

import numpy as np
import pytest
import torch

import mlgsl.train as train_mod
from mlgsl.config import ExperimentConfig
from mlgsl.data import Sample, Transform, apply_transform
from mlgsl.maps import extract_grasps
from mlgsl.model import forward, load
from mlgsl.train import DivergenceError, build_datasets, train, validate

TINY = dict(image_size=64, n_train=24, n_val=8, channel_widths=(4, 8, 8, 8, 8, 8, 8, 4), batch_size=8)


@pytest.fixture(autouse=True)
def _single_thread():
    n = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(n)


def test_config_text_roundtrip(tmp_path):
    cfg = ExperimentConfig(seed=3, loss="img_mse", channel_widths=(4, 8, 8, 8, 8, 8, 8, 4), augment=False,
                           learning_rate=5e-4, footprint_ratio=1 / 3)
    cfg.save(tmp_path / "c.ini")
    back = ExperimentConfig.load(tmp_path / "c.ini")
    assert back == cfg
    assert "[train]" in cfg.to_text() and "loss = img_mse" in cfg.to_text()
    assert cfg.digest() == cfg.replace(output_dir="elsewhere").digest()
    assert cfg.digest() != cfg.replace(seed=4).digest()


def test_config_rejects_bad_values(tmp_path):
    for kw in ({"labels_per_image": 0}, {"epochs": 0}, {"loss": "l1"}, {"sam_placement": "middle"},
               {"dataset": "jacquard_dir", "data_dir": str(tmp_path / "missing")}, {"clutter_min_objects": 0},
               {"learning_rate": 0.0}):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw).validate()
    with pytest.raises(ValueError, match="unknown config key"):
        ExperimentConfig.from_text("[train]\nmomentum = 0.9\n")
    with pytest.raises(ValueError):
        ExperimentConfig.from_text("[data]\naugment = maybe\n")


def test_width_unit_follows_image_size():
    assert ExperimentConfig(image_size=300).criteria().max_width == 150.0
    assert ExperimentConfig(image_size=96).criteria().max_width == pytest.approx(48.0)


def test_datasets_subsample_train_labels_only():
    cfg = ExperimentConfig(labels_per_image=2, **TINY)
    tr, val = build_datasets(cfg)
    assert len(tr) == 24 and len(val) == 8
    assert all(len(s.labels) <= 2 for s in tr)
    assert any(len(s.labels) > 2 for s in val)
    # the validation split does not move with the training-set size
    _, val2 = build_datasets(cfg.replace(n_train=12))
    assert [s.id for s in val] == [s.id for s in val2]
    assert all(np.array_equal(a.depth, b.depth) for a, b in zip(val, val2))


def test_five_epoch_run_logs_curve(tmp_path):
    cfg = ExperimentConfig(epochs=5, labels_per_image=4, **TINY)
    res = train(cfg, tmp_path)
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_top1,val_top5"
    assert len(lines) == 6
    losses = [r["train_loss"] for r in res.curve]
    assert losses[-1] < losses[0]
    assert all(r["val_top5"] >= r["val_top1"] for r in res.curve)
    for name in ("best.pt", "last.pt", "config.ini"):
        assert (tmp_path / name).exists()
    assert ExperimentConfig.load(tmp_path / "config.ini") == cfg


def test_same_config_same_curve(tmp_path):
    cfg = ExperimentConfig(epochs=2, seed=5, **TINY)
    a = train(cfg, tmp_path / "a")
    b = train(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "curve.csv").read_bytes() == (tmp_path / "b" / "curve.csv").read_bytes()
    assert a.curve == b.curve
    c = train(cfg.replace(seed=6), tmp_path / "c")
    assert c.curve != a.curve


def test_best_checkpoint_reproduces_logged_top1(tmp_path):
    cfg = ExperimentConfig(epochs=3, **TINY)
    res = train(cfg, tmp_path)
    model = load(tmp_path / "best.pt", cfg.model_spec())
    _, val = build_datasets(cfg)
    top1, _ = validate(model, val, cfg)
    assert top1 == res.best_top1 == max(r["val_top1"] for r in res.curve)


@pytest.mark.parametrize("loss", ["img_mse", "mlgsl_log", "pix_mse"])
def test_every_loss_trains(loss):
    res = train(ExperimentConfig(epochs=1, loss=loss, **TINY))
    assert math.isfinite(res.curve[0]["train_loss"])


def test_divergence_aborts_with_diagnostic(monkeypatch):
    monkeypatch.setattr(train_mod, "batch_loss", lambda *a, **k: torch.tensor(float("nan"), requires_grad=True))
    with pytest.raises(DivergenceError, match="non-finite mlgsl loss .* epoch 1, step 0; batch: toy"):
        train(ExperimentConfig(epochs=1, **TINY))


def test_trained_model_is_translation_equivariant():
    """A shift of the input by a multiple of the network stride moves the quality peak with it.

    Exact only with wrap-around padding; the zero-padded default leaks the
    frame border into the maps.
    """
    cfg = ExperimentConfig(image_size=96, n_train=120, n_val=20, epochs=4, channel_widths=(8, 16, 16, 32, 32, 32, 16, 8),
                           padding="circular")
    res = train(cfg)
    _, val = build_datasets(cfg)
    checked = 0
    for s in val:
        fg = np.argwhere(s.depth < 0.95)
        if fg[:, 0].max() + 8 > 95 or fg[:, 1].max() + 8 > 95:
            continue  # the object would leave the frame
        moved = apply_transform(s, Transform(shift=(8.0, 8.0)), require_foreground=False)
        g0 = extract_grasps(forward(res.model, s.depth), 1)[0]
        g1 = extract_grasps(forward(res.model, moved.depth), 1)[0]
        assert abs(g1.center_row - g0.center_row - 8) <= 1 and abs(g1.center_col - g0.center_col - 8) <= 1
        checked += 1
    assert checked >= 5


def test_training_on_disk_dataset(tmp_path):
    from mlgsl.data import save_sample, write_manifest
    from mlgsl.data.toy import gen_toy_dataset

    samples = gen_toy_dataset(10, seed=2, image_size=64)
    for s in samples:
        save_sample(tmp_path, s)
    write_manifest(tmp_path, [(s.id, "val" if i >= 8 else "train") for i, s in enumerate(samples)])
    cfg = ExperimentConfig(dataset="jacquard_dir", data_dir=str(tmp_path), epochs=1,
                           **{k: v for k, v in TINY.items() if k not in ("n_train", "n_val")})
    tr, val = build_datasets(cfg)
    assert len(tr) == 8 and len(val) == 2
    assert isinstance(tr[0], Sample)
    train(cfg)
