import numpy as np
import pytest

from chunkrec.errors import ConfigError, ContractError
from chunkrec.training import (Adam, SyntheticTaskSpec, TrainConfig, batch_loss,
                               clip_grad_norm, gen_synthetic, load_features,
                               load_manifest, nats_per_symbol, noam_lr,
                               save_features, train, train_step)

from conftest import make_tiny_model


def spec_for_tiny():
    return SyntheticTaskSpec(vocab_size=8, d_in=4, min_len=2, max_len=3,
                             frames_per_symbol=8, noise_std=0.05, seed=5)


# -- synthetic data ---------------------------------------------------------


def test_gen_synthetic_deterministic():
    spec = spec_for_tiny()
    a = gen_synthetic(spec, 2)
    b = gen_synthetic(spec, 2)
    for (xa, ya), (xb, yb) in zip(a, b):
        assert np.array_equal(xa, xb) and ya == yb


def test_gen_synthetic_shapes():
    spec = SyntheticTaskSpec(vocab_size=8, d_in=4, min_len=3, max_len=3,
                             frames_per_symbol=8, seed=1)
    x, y = gen_synthetic(spec, 1)[0]
    assert len(y) == 3
    assert x.shape == (24, 4)
    m = make_tiny_model()
    assert m.encoded_len(x.shape[0]) == 6


def test_gen_synthetic_label_histogram_uniform():
    from scipy.stats import chisquare
    spec = spec_for_tiny()
    labels = [s for _, y in gen_synthetic(spec, 5000) for s in y]
    counts = np.bincount(labels, minlength=8)[2:]
    assert chisquare(counts).pvalue > 0.001


def test_gen_synthetic_front_end_guard():
    with pytest.raises(ConfigError):
        SyntheticTaskSpec(frames_per_symbol=3)


# -- schedule ---------------------------------------------------------------


def test_noam_peak_at_warmup():
    assert noam_lr(1000, 256, 1000) == pytest.approx(256 ** -0.5 * 1000 ** -0.5)


def test_noam_first_step():
    assert noam_lr(1, 256, 1000) == pytest.approx(1.0 / (16 * 1000 ** 1.5))


def test_noam_monotone_around_warmup():
    lrs = [noam_lr(s, 64, 100) for s in range(1, 300)]
    for s in range(1, 99):
        assert lrs[s] >= lrs[s - 1]
    for s in range(100, 298):
        assert lrs[s + 1] <= lrs[s]


def test_noam_step_zero_rejected():
    with pytest.raises(ContractError):
        noam_lr(0, 64, 100)


# -- optimization -----------------------------------------------------------


def test_two_steps_reduce_loss_on_same_batch():
    m = make_tiny_model(seed=2)
    batch = gen_synthetic(spec_for_tiny(), 4)
    opt = Adam(m.params)
    cfg = TrainConfig(batch_size=4, warmup_steps=10, lr_scale=0.5, eval_interval=0)
    l1 = train_step(m, batch, opt, 1, cfg)
    train_step(m, batch, opt, 2, cfg)
    l3 = batch_loss(m, batch).item()
    assert l3 < l1


def test_zero_lr_leaves_params_bitwise():
    m = make_tiny_model(seed=2)
    batch = gen_synthetic(spec_for_tiny(), 2)
    before = {n: p.data.copy() for n, p in m.params.items()}
    opt = Adam(m.params)
    cfg = TrainConfig(batch_size=2, warmup_steps=10, lr_scale=0.0, eval_interval=0)
    train_step(m, batch, opt, 1, cfg)
    assert all(np.array_equal(before[n], m.params[n].data) for n in before)


def test_zero_clip_threshold_zeroes_gradients():
    m = make_tiny_model(seed=2)
    batch = gen_synthetic(spec_for_tiny(), 2)
    before = {n: p.data.copy() for n, p in m.params.items()}
    opt = Adam(m.params)
    cfg = TrainConfig(batch_size=2, warmup_steps=10, grad_clip=0.0, eval_interval=0)
    train_step(m, batch, opt, 1, cfg)
    assert all(np.array_equal(before[n], m.params[n].data) for n in before)
    assert opt.step_count == 1


def test_clip_grad_norm_scales_to_threshold():
    m = make_tiny_model(seed=2)
    for p in m.params.values():
        p.grad = np.ones_like(p.data)
    clip_grad_norm(m.params, 1.0)
    total = sum(float((p.grad ** 2).sum()) for p in m.params.values())
    assert np.sqrt(total) == pytest.approx(1.0)


def test_training_deterministic_across_runs():
    batch_cfg = TrainConfig(batch_size=4, total_steps=8, warmup_steps=20, eval_interval=0, seed=9)
    data = gen_synthetic(spec_for_tiny(), 32)
    hists = []
    for _ in range(2):
        m = make_tiny_model(seed=7)
        _, hist = train(m, data, batch_cfg)
        hists.append(hist)
    assert hists[0] == hists[1]


def test_single_batch_overfit_below_threshold():
    m = make_tiny_model(seed=8)
    batch = gen_synthetic(spec_for_tiny(), 4)
    opt = Adam(m.params)
    cfg = TrainConfig(batch_size=4, warmup_steps=50, lr_scale=1.0, eval_interval=0)
    for step in range(1, 501):
        train_step(m, batch, opt, step, cfg)
        if step % 50 == 0 and nats_per_symbol(m, batch) < 0.1:
            break
    assert nats_per_symbol(m, batch) < 0.1


# -- data files -------------------------------------------------------------


def test_feature_file_roundtrip(tmp_path):
    x = np.random.default_rng(0).normal(size=(13, 4))
    p = tmp_path / "utt0.feat"
    save_features(p, x)
    assert np.array_equal(load_features(p), x)


def test_manifest_loading(tmp_path):
    m = make_tiny_model()
    x = np.random.default_rng(1).normal(size=(9, 4))
    fp = tmp_path / "utt0.feat"
    save_features(fp, x)
    man = tmp_path / "manifest.tsv"
    man.write_text(f"{fp}\ts0s1\n", encoding="utf-8")
    data = load_manifest(man, m.vocab)
    assert len(data) == 1
    assert np.array_equal(data[0][0], x)
    # "s0s1" falls back to unk for chars not in the vocab ("s", "0", "1")
    assert all(0 <= i < len(m.vocab) for i in data[0][1])
