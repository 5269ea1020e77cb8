import numpy as np
import pytest

import garamost


def test_untrained_model_returns_the_frame_average():
    rng = np.random.default_rng(0)
    i0 = rng.random((64, 64), dtype=np.float32)
    i1 = rng.random((64, 64), dtype=np.float32)
    model = garamost.Model({"granularity": (7, 7)}, seed=1)
    frames = model.interpolate(i0, i1, [0.25, 0.5, 0.75])
    assert len(frames) == 3
    assert model.encoder_calls == 1
    expected = np.clip((i0 + i1) * np.float32(0.5), 0, 1)
    for f in frames:
        assert f.shape == (64, 64)
        np.testing.assert_array_equal(f, expected)


def test_batched_frames_keep_their_layout():
    rng = np.random.default_rng(1)
    i0 = rng.random((2, 1, 48, 80), dtype=np.float32)
    model = garamost.Model({"granularity": (7, 7), "deep_structs": True})
    (out,) = model.interpolate(i0, i0, [0.5])
    assert out.shape == (2, 1, 48, 80)


def test_bad_input_raises():
    model = garamost.Model({"granularity": (7, 7)})
    with pytest.raises(ValueError):
        model.interpolate(np.zeros((3, 32, 32), np.float32), np.zeros((3, 32, 32), np.float32))
    with pytest.raises(ValueError):
        model.interpolate(np.zeros((64, 64), np.float32), np.zeros((64, 64), np.float32), [1.5])
    with pytest.raises(garamost.ConfigError):
        garamost.Model({"no_such_key": 1})


def test_metrics():
    a = np.linspace(0, 1, 256, dtype=np.float32).reshape(16, 16)
    assert garamost.ssim(a, a) == pytest.approx(100.0)
    assert garamost.psnr(a, a) == 99.0
    assert garamost.psnr(a, np.clip(a + 0.1, 0, 2).astype(np.float32)) == pytest.approx(20.0, abs=1e-4)


def test_pgm_round_trip(tmp_path):
    img = (np.arange(20, dtype=np.float32).reshape(4, 5)) / 255
    path = tmp_path / "f.pgm"
    garamost.write_pgm(path, img)
    back, maxval = garamost.read_pgm(path)
    assert maxval == 255
    np.testing.assert_array_equal(back, img)
    path.write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(garamost.ParseError):
        garamost.read_pgm(path)


def test_synthetic_sequence_is_seeded():
    a = garamost.synth_sequence(3, 4, 64)
    b = garamost.synth_sequence(3, 4, 64)
    assert a.shape == (4, 64, 64)
    np.testing.assert_array_equal(a, b)
    assert 0.0 <= a.min() and a.max() <= 1.0


def test_schedule_endpoints():
    assert garamost.lr_schedule(1000, 5000) == pytest.approx(6e-5, abs=1e-12)
    assert garamost.lr_schedule(5000, 5000) == pytest.approx(6e-6, abs=1e-12)


def test_short_training_run_and_reload(tmp_path):
    seen = []
    result = garamost.train(
        {
            "image_size": 64,
            "batch_size": 1,
            "total_steps": 2,
            "warmup_steps": 1,
            "train_sequences": 1,
            "eval_sequences": 1,
            "sequence_length": 3,
            "base_channels": 2,
            "model_dim": 4,
            "key_dim": 2,
            "value_dim": 4,
            "fme_width": 4,
            "fme_blocks": 1,
            "refiner_widths": (4, 4, 8, 8),
            "out_dir": str(tmp_path),
        },
        callback=seen.append,
    )
    assert len(result["log"]) == 2
    assert seen and seen[0]["step"] == 1
    model = garamost.Model.load(result["final_checkpoint"])
    assert model.config["base_channels"] == "2"
    frame = garamost.synth_sequence(0, 3, 64)[0]
    assert model.interpolate(frame, frame)[0].shape == (64, 64)
