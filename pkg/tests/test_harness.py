import hashlib
import json

import numpy as np
import pytest

from reca import weightfile
from reca.cli import main
from reca.config import ExperimentConfig
from reca.data import DATA_ENV, find_files, load_split, split_training
from reca.experiments import (
    ExperimentError,
    SweepRow,
    read_pbm,
    render_spacetime,
    rule_rank,
    run_eval,
    run_hw,
    run_train,
    spacetime,
    sweep_rules,
)
from reca.idx import load_idx, write_idx
from reca.readout import ReadoutModel, quantize_weights


def test_config_defaults_match_quantized_setup():
    c = ExperimentConfig()
    assert (c.rule, c.M, c.learning_rate, c.reg, c.batch_size) == (90, 16, 0.008, 0.00012, 17000)
    assert (c.beta1, c.beta2) == (0.9, 0.999)
    assert (c.distortion_copies, c.alpha_d, c.sigma_d, c.quantize) == (3, 30.0, 5.0, True)
    data = json.loads(c.to_json())
    assert data["learning_rate"] == 0.008 and data["reg"] == 0.00012
    assert ExperimentConfig.from_json(c.to_json()) == c


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(rule=256)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_train_params_mapping():
    p = ExperimentConfig(learning_rate=0.01, quantize=False).train_params()
    assert p.learning_rate == 0.01 and not p.quantize and p.reg == 0.00012


def _fake_mnist(root, n_train=120, n_test=40, size=8, gz=False):
    """Two-class images: a bright block on the left or on the right."""
    rng = np.random.default_rng(0)

    def make(n):
        labels = rng.integers(0, 2, n).astype(np.uint8)
        imgs = rng.integers(0, 40, (n, size, size)).astype(np.uint8)
        for img, y in zip(imgs, labels):
            cols = slice(0, size // 2) if y == 0 else slice(size // 2, size)
            img[2:-2, cols] = 220
        return imgs, labels

    sfx = ".gz" if gz else ""
    x, y = make(n_train)
    write_idx(root / f"train-images-idx3-ubyte{sfx}", x)
    write_idx(root / f"train-labels-idx1-ubyte{sfx}", y)
    x, y = make(n_test)
    write_idx(root / f"t10k-images-idx3-ubyte{sfx}", x)
    write_idx(root / f"t10k-labels-idx1-ubyte{sfx}", y)
    return root


@pytest.fixture
def fake_root(tmp_path):
    return _fake_mnist(tmp_path)


def test_split_tail_and_disjoint(fake_root):
    s = load_split(fake_root, validation=20)
    assert s.sizes() == {"train": 100, "validation": 20, "test": 40}
    full = load_idx(fake_root / "train-images-idx3-ubyte")
    assert np.array_equal(s.val_images, full[100:])


def test_shuffle_split_is_seeded_and_disjoint():
    idx = np.arange(50)
    a = split_training(idx, idx, 10, shuffle_seed=3)
    b = split_training(idx, idx, 10, shuffle_seed=3)
    assert np.array_equal(a[2], b[2])
    assert not set(a[0]) & set(a[2]) and len(set(a[0]) | set(a[2])) == 50


def test_env_var_and_gz(tmp_path, monkeypatch):
    _fake_mnist(tmp_path, gz=True)
    monkeypatch.setenv(DATA_ENV, str(tmp_path))
    assert find_files()["test_labels"].name.endswith(".gz")
    assert load_split(validation=20).sizes()["test"] == 40
    monkeypatch.setenv(DATA_ENV, str(tmp_path / "nope"))
    with pytest.raises(FileNotFoundError):
        find_files()


def test_sweep_excludes_trivial_and_is_deterministic(fake_root, tmp_path):
    s = load_split(fake_root, validation=20)
    kw = dict(iterations=3, train_count=100, val_count=20, rules=[0, 204, 90, 30, 110])
    rows = sweep_rules(s, out_csv=tmp_path / "sweep.csv", **kw)
    rules = {r.rule for r in rows}
    assert 0 not in rules and 204 not in rules
    assert rules == {90, 30, 110}
    assert [r.val_error for r in rows] == sorted(r.val_error for r in rows)
    assert rows == sweep_rules(s, **kw)
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "rank,rule,val_error,dynamics" and len(lines) == 4


def test_sweep_adam_method(fake_root):
    s = load_split(fake_root, validation=20)
    rows = sweep_rules(s, iterations=2, train_count=100, val_count=20, rules=[90], method="adam", adam_steps=30)
    assert rows[0].rule == 90 and rows[0].val_error <= 0.2


def test_rule_rank_ties():
    rows = [SweepRow(1, 0.1, "x"), SweepRow(90, 0.1, "x"), SweepRow(3, 0.2, "x")]
    assert rule_rank(rows, 90) == 1 and rule_rank(rows, 3) == 3
    with pytest.raises(KeyError):
        rule_rank(rows, 5)


def test_train_eval_hw_pipeline(fake_root, tmp_path):
    s = load_split(fake_root, validation=20)
    cfg = ExperimentConfig(
        M=3, batch_size=64, max_steps=60, eval_every=10, distortion_copies=1,
        alpha_d=8, target_val_error=0.0, out_dir=str(tmp_path / "run"),
    )
    summary = run_train(s, cfg)
    assert summary["train_samples"] == 200
    assert summary["test_error"] <= 0.1
    out = tmp_path / "run"
    for name in ("weights.rcw", "train_log.csv", "summary.json", "train_log.png"):
        assert (out / name).exists()
    assert len((out / "train_log.csv").read_text().splitlines()) == summary["steps"] + 1
    again = run_eval(s, out / "weights.rcw", cfg.rule, cfg.M)
    assert again["val_error"] == summary["val_error"]
    assert again["test_error"] == summary["test_error"]

    hw = run_hw(s.test_images, s.test_labels, out / "weights.rcw", iterations=cfg.M)
    assert hw["agreement"] == 1.0 and hw["hw_error"] == hw["sw_error"] == summary["test_error"]
    assert hw["cycles_per_classification"] == 1 + 3 * 4 + 2 + 1


def test_hw_rejects_float_weights(tmp_path):
    model = ReadoutModel(np.zeros((16 * 3, 2)), np.zeros(2))
    weightfile.save(tmp_path / "f.rcw", model)
    with pytest.raises(ExperimentError, match="quantized"):
        run_hw(np.zeros((1, 8, 8), np.uint8), [0], tmp_path / "f.rcw", iterations=3)


def test_spacetime_rule90_sierpinski(tmp_path):
    width, steps = 65, 31
    raster = render_spacetime(tmp_path / "s.pbm", 90, width, steps, seed=None)
    assert np.array_equal(read_pbm(tmp_path / "s.pbm"), raster)
    c = width // 2
    from math import comb

    for t in range(steps + 1):
        for x in range(width):
            d = x - c
            expected = abs(d) <= t and (t + d) % 2 == 0 and comb(t, (t + d) // 2) % 2 == 1
            assert raster[t, x] == expected


def test_spacetime_rule0():
    raster = spacetime(0, 30, 10, seed=4)
    assert raster[0].any() and not raster[1:].any()


def test_spacetime_rule30_pinned(tmp_path):
    raster = spacetime(30, 64, 32, seed=0)
    assert 0.3 < raster[1:].mean() < 0.7
    digest = hashlib.sha256(np.packbits(raster).tobytes()).hexdigest()
    # golden value from the first run; changes mean the PRNG draw or rule engine moved
    assert digest == "a812a4f14e5f48d298d2294dd078ac58b158e411a335ac9e67d5f8e47e9a6f5c"


def test_spacetime_png(tmp_path):
    from PIL import Image

    render_spacetime(tmp_path / "s.png", 90, 21, 10, seed=None, scale=3)
    img = np.asarray(Image.open(tmp_path / "s.png"))
    assert img.shape == (33, 63)
    assert img[0, 30] == 0 and img[0, 0] == 255


def test_cli_end_to_end(fake_root, tmp_path, capsys):
    base = ["--data-dir", str(fake_root), "--validation-size", "20", "--M", "3", "--out-dir", str(tmp_path / "cli")]
    assert main(["train", *base, "--batch-size", "64", "--max-steps", "40", "--distortion-copies", "0", "--no-plot"]) == 0
    summary = json.loads(capsys.readouterr().out)
    weights = tmp_path / "cli" / "weights.rcw"
    assert main(["eval", *base, str(weights)]) == 0
    assert json.loads(capsys.readouterr().out)["test_error"] == summary["test_error"]
    assert main(["hw-sim", *base, str(weights), "--limit", "10", "--trace", str(tmp_path / "t.txt")]) == 0
    assert json.loads(capsys.readouterr().out)["agreement"] == 1.0
    assert (tmp_path / "t.txt").read_text().startswith("#0 bias")


def test_cli_quantize_extract_distort(fake_root, tmp_path, capsys):
    model = ReadoutModel(np.random.default_rng(0).normal(size=(48, 2)), np.zeros(2))
    weightfile.save(tmp_path / "f.rcw", model)
    assert main(["quantize", str(tmp_path / "f.rcw"), str(tmp_path / "q.rcw")]) == 0
    assert weightfile.load(tmp_path / "q.rcw").quantized is not None
    assert main(["quantize", str(tmp_path / "q.rcw"), str(tmp_path / "q2.rcw")]) == 1
    images = fake_root / "t10k-images-idx3-ubyte"
    assert main(["extract", str(images), str(tmp_path / "f.npy"), "--M", "3"]) == 0
    assert np.load(tmp_path / "f.npy").shape == (40, 48)
    assert main(["distort", str(images), str(tmp_path / "d.idx"), "--distortion-copies", "2"]) == 0
    assert load_idx(tmp_path / "d.idx").shape == (120, 8, 8)
    capsys.readouterr()


def test_cli_errors_are_json(tmp_path, capsys):
    assert main(["hw-sim", "--data-dir", str(tmp_path), str(tmp_path / "missing.rcw")]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["command"] == "hw-sim" and err["error"] == "FileNotFoundError"
    with pytest.raises(SystemExit) as info:
        main(["nope"])
    assert info.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"
