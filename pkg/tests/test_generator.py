import numpy as np
import pytest

from captalk import autodiff as ad
from captalk.autodiff import Tensor
from captalk.codec import CodecConfig, MotionCodec
from captalk.conditioning import AudioFeatureSequence, CaptionTimeline, feature_frame_times
from captalk.errors import ConfigError, ShapeError, StateError
from captalk.generator import (
    ARSample,
    CaptionedMotionGenerator,
    GeneratorConfig,
    ar_loss,
    bit_accuracy,
    block_causal_mask,
    build_ar_dataset,
    check_compatible,
    embed_scale_inputs,
    forward_window,
    generate,
    layout_for,
    perturb_for_training,
    sample_code_block,
    train_ar,
    upsum_codes,
    window_audio,
)
from captalk.quantizer import MultiScaleCode, quantize_multiscale


def tiny_cfg(**kw):
    args = dict(scale_lengths=(1, 3, 6), code_dim=4, dim=16, layers=1, heads=2,
                context_tokens=4, audio_dim=5, text_dim=8)
    args.update(kw)
    return GeneratorConfig(**args)


def rand_code(rng, cfg):
    return quantize_multiscale(
        rng.normal(size=(cfg.window, cfg.code_dim)), cfg.scale_lengths
    )


def rand_audio(rng, cfg, count=12):
    return rng.normal(size=(count, cfg.audio_dim)), np.linspace(0.2, cfg.window - 0.2, count)


# --- layout and mask ---------------------------------------------------------


def test_default_layout_has_182_current_slots():
    layout = layout_for(GeneratorConfig())
    assert layout.n_current == 182
    assert layout.total == 182 + 25


def test_block_token_times():
    cfg = tiny_cfg()
    layout = layout_for(cfg)
    times = layout.times()
    w = cfg.window
    (b1, _), (b2, _), (b3, _) = layout.block_bounds()
    assert times[b1] == pytest.approx(0.5 * w / 1)
    assert times[b2] == pytest.approx(0.5 * w / 3)
    assert times[b3 + 2] == pytest.approx(2.5 * w / 6)
    assert np.all(times[:cfg.context_tokens] < 0)  # context spans the previous window
    assert times[layout.start_index] == 0.0


def test_mask_block_visibility():
    layout = layout_for(tiny_cfg())
    allowed = block_causal_mask(layout)
    bounds = layout.block_bounds()
    b2_tok = bounds[1][0]
    b1_tok = bounds[0][0]
    b3_tok = bounds[2][0]
    assert allowed[b2_tok, b1_tok]          # block 2 sees block 1
    assert not allowed[b2_tok, b3_tok]      # block 2 never sees block 3
    assert allowed[b2_tok, layout.start_index]
    assert allowed[b2_tok, 0]               # context visible
    assert not allowed[0, b1_tok]           # prefix never sees blocks
    assert allowed[b2_tok, b2_tok + 1]      # full intra-block attention


# --- scale input embeddings --------------------------------------------------


def test_block1_input_is_start_embedding():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 0)
    emb = embed_scale_inputs(model, cfg, [], 1)
    np.testing.assert_array_equal(emb.values, model.start_embed.values[None])


def test_block2_constant_code_gives_identical_rows():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 0)
    c1 = np.tile(np.array([1.0, 1.0, -1.0, 1.0]) / 2.0, (1, 1))
    emb = embed_scale_inputs(model, cfg, [c1], 2).values
    assert emb.shape == (3, cfg.dim)
    for row in emb[1:]:
        np.testing.assert_allclose(row, emb[0], atol=1e-12)


def test_missing_prior_scale_raises():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 0)
    with pytest.raises(StateError):
        embed_scale_inputs(model, cfg, [], 3)


def test_block_shapes_contract():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 0)
    rng = np.random.default_rng(0)
    code = rand_code(rng, cfg)
    for i, length in enumerate(cfg.scale_lengths, start=1):
        emb = embed_scale_inputs(model, cfg, list(code.blocks), i)
        assert emb.shape == (length, cfg.dim)


# --- forward -----------------------------------------------------------------


def test_forward_logit_shapes():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 1)
    rng = np.random.default_rng(1)
    code = rand_code(rng, cfg)
    feats, times = rand_audio(rng, cfg)
    style = rng.normal(size=(2, cfg.text_dim))
    emotion = rng.normal(size=(1, cfg.text_dim))
    logits = forward_window(model, cfg, list(code.blocks), None, feats, times,
                            style, emotion)
    assert [l.shape for l in logits] == [(1, 4), (3, 4), (6, 4)]


def test_forward_null_captions_finite():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 1)
    rng = np.random.default_rng(2)
    code = rand_code(rng, cfg)
    feats, times = rand_audio(rng, cfg)
    logits = forward_window(model, cfg, list(code.blocks), None, feats, times,
                            None, None)
    for l in logits:
        assert np.isfinite(l.values).all()


def test_causality_bit_exact():
    """Perturbing a finer scale's codes never changes coarser-scale logits."""
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 3)
    rng = np.random.default_rng(3)
    code = rand_code(rng, cfg)
    feats, times = rand_audio(rng, cfg)
    style = rng.normal(size=(2, cfg.text_dim))
    emotion = rng.normal(size=(1, cfg.text_dim))

    base = forward_window(model, cfg, list(code.blocks), None, feats, times,
                          style, emotion)
    # flip every bit of the finest block's input
    perturbed_blocks = list(code.blocks)
    perturbed_blocks[2] = -perturbed_blocks[2]
    pert = forward_window(model, cfg, perturbed_blocks, None, feats, times,
                          style, emotion)
    for i in range(2):  # scales 1 and 2 must be bit-identical
        assert np.array_equal(base[i].values, pert[i].values)
    # then the middle block
    perturbed_blocks = list(code.blocks)
    perturbed_blocks[1] = -perturbed_blocks[1]
    pert = forward_window(model, cfg, perturbed_blocks, None, feats, times,
                          style, emotion)
    assert np.array_equal(base[0].values, pert[0].values)
    assert not np.array_equal(base[2].values, pert[2].values)


def test_audio_attention_relative_invariance():
    from captalk import nn
    rng = np.random.default_rng(5)
    attn = nn.MultiHeadAttention(rng, 16, 2)
    x = Tensor(rng.normal(size=(6, 16)))
    kv = Tensor(rng.normal(size=(9, 16)))
    tq = rng.uniform(0, 50, size=6)
    tk = rng.uniform(0, 50, size=9)
    out1 = attn(x, kv, q_times=tq, k_times=tk).values
    out2 = attn(x, kv, q_times=tq + 400.0, k_times=tk + 400.0).values
    np.testing.assert_allclose(out1, out2, atol=1e-6)


def test_single_key_attention_ignores_rotation():
    from captalk import nn
    rng = np.random.default_rng(6)
    attn = nn.MultiHeadAttention(rng, 8, 2)
    x = Tensor(rng.normal(size=(3, 8)))
    kv = Tensor(rng.normal(size=(1, 8)))
    out_rot = attn(x, kv, q_times=np.array([1.0, 2.0, 3.0]), k_times=np.array([9.0]))
    out_plain = attn(x, kv)
    # softmax over a single key gives weight 1 regardless of rotation
    np.testing.assert_allclose(out_rot.values, out_plain.values, atol=1e-12)


def test_text_token_permutation_invariance():
    cfg = tiny_cfg()
    model = CaptionedMotionGenerator(cfg, 7)
    rng = np.random.default_rng(7)
    code = rand_code(rng, cfg)
    feats, times = rand_audio(rng, cfg)
    style = rng.normal(size=(4, cfg.text_dim))
    base = forward_window(model, cfg, list(code.blocks), None, feats, times,
                          style, None)
    perm = style[[2, 0, 3, 1]]
    swapped = forward_window(model, cfg, list(code.blocks), None, feats, times,
                             perm, None)
    for a, b in zip(base, swapped):
        np.testing.assert_allclose(a.values, b.values, atol=1e-9)


# --- loss --------------------------------------------------------------------


def test_ar_loss_zero_logits_ln2():
    cfg = tiny_cfg()
    rng = np.random.default_rng(8)
    code = rand_code(rng, cfg)
    logits = [Tensor(np.zeros_like(b)) for b in code.blocks]
    assert ar_loss(logits, code).item() == pytest.approx(np.log(2.0))


def test_ar_loss_saturated_logit_near_zero():
    code = MultiScaleCode([np.full((1, 2), 1.0 / np.sqrt(2))])
    logits = [Tensor(np.full((1, 2), 20.0))]
    assert ar_loss(logits, code).item() < 1e-8


def test_ar_loss_mixed_two_bit_hand_case():
    code = MultiScaleCode([np.full((1, 2), 1.0 / np.sqrt(2))])
    logits = [Tensor(np.array([[0.0, 20.0]]))]
    expected = (np.log(2.0) + np.log1p(np.exp(-20.0))) / 2.0
    assert ar_loss(logits, code).item() == pytest.approx(expected, rel=1e-9)


def test_ar_loss_shape_mismatch():
    code = MultiScaleCode([np.full((2, 2), 1.0 / np.sqrt(2))])
    with pytest.raises(ShapeError):
        ar_loss([Tensor(np.zeros((3, 2)))], code)


def test_bit_accuracy_counts():
    code = MultiScaleCode([np.array([[1.0, -1.0]]) / np.sqrt(2)])
    logits = [Tensor(np.array([[5.0, 5.0]]))]  # second bit wrong
    assert bit_accuracy(logits, code) == 0.5


# --- perturbation & sampling -------------------------------------------------


def test_perturb_zero_probs_identity():
    cfg = tiny_cfg(flip_prob=0.0, cond_drop_prob=0.0)
    rng0 = np.random.default_rng(9)
    code = rand_code(rng0, cfg)
    prev = rand_code(rng0, cfg)
    blocks, prev_sum, ds, de = perturb_for_training(code, prev, cfg, np.random.default_rng(0))
    for a, b in zip(blocks, code.blocks):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(prev_sum, upsum_codes(prev.blocks, cfg.window))
    assert not ds and not de


def test_perturb_flip_rate_statistics():
    cfg = tiny_cfg(flip_prob=0.5, cond_drop_prob=0.0)
    rng = np.random.default_rng(10)
    code = MultiScaleCode([np.full((6, 4), 1.0 / 2.0)])
    cfg2 = GeneratorConfig(scale_lengths=(6,), code_dim=4, context_tokens=2,
                           flip_prob=0.5, cond_drop_prob=0.0)
    flips = 0
    for _ in range(200):
        blocks, _, _, _ = perturb_for_training(code, None, cfg2, rng)
        flips += int((blocks[0] < 0).sum())
    rate = flips / (200 * 24)
    assert 0.4 < rate < 0.6


def test_sampling_temperature_zero_is_argmax():
    rng = np.random.default_rng(11)
    logits = rng.normal(size=(5, 4))
    block = sample_code_block(logits, 0.0, 4, rng)
    np.testing.assert_array_equal(block, np.where(logits >= 0, 1.0, -1.0) / 2.0)


def test_sampling_deterministic_per_seed():
    logits = np.zeros((4, 4))
    a = sample_code_block(logits, 1.0, 4, np.random.default_rng(5))
    b = sample_code_block(logits, 1.0, 4, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


# --- window audio ------------------------------------------------------------


def test_window_audio_slicing_and_padding():
    feats = np.arange(20, dtype=float).reshape(10, 2)
    audio = AudioFeatureSequence(feats, rate=50.0, frame_times=feature_frame_times(10, 50.0))
    # 10 features cover 5 frames; pad to 8 frames
    w_feats, w_times = window_audio(audio, 0, 8, lookback_s=0.0, pad_to_frame=8)
    assert w_feats.shape[0] == 16
    assert np.all(w_times < 8)
    assert np.all(w_feats[10:] == np.log(1e-10))


def test_window_audio_lookback():
    feats = np.arange(40, dtype=float).reshape(20, 2)
    audio = AudioFeatureSequence(feats, rate=50.0, frame_times=feature_frame_times(20, 50.0))
    w_feats, w_times = window_audio(audio, 5, 5, lookback_s=0.04)  # 1 frame lookback
    assert w_times[0] < 0  # includes pre-window tail
    assert w_feats.shape[0] > 10


# --- config / compat ---------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        GeneratorConfig(flip_prob=1.0)
    with pytest.raises(ConfigError):
        GeneratorConfig(scale_lengths=(5, 5, 10))


def test_checkpoint_compat():
    codec_cfg = CodecConfig(n_expr=5, n_pose=6, window=20, scale_lengths=(1, 5, 20),
                            code_dim=8, dim=16, layers=1, heads=2)
    with pytest.raises(ConfigError):
        check_compatible(codec_cfg, tiny_cfg())  # different scales
    ok_cfg = tiny_cfg(scale_lengths=(1, 5, 20), code_dim=8)
    check_compatible(codec_cfg, ok_cfg)


# --- generation --------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_pipeline():
    """Untrained but wired codec + generator at toy dims."""
    codec_cfg = CodecConfig(n_expr=5, n_pose=6, window=6, scale_lengths=(1, 3, 6),
                            code_dim=4, dim=16, layers=1, heads=2)
    codec = MotionCodec(codec_cfg, 0)
    gcfg = tiny_cfg()
    gen = CaptionedMotionGenerator(gcfg, 0)
    return gen, gcfg, codec, codec_cfg


def _audio_for_frames(n_frames, dim=5, rate=50.0, seed=0):
    count = int(n_frames * rate / 25.0)
    rng = np.random.default_rng(seed)
    return AudioFeatureSequence(
        rng.normal(size=(count, dim)), rate, feature_frame_times(count, rate)
    )


def test_generate_window_and_frame_arithmetic(tiny_pipeline):
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    audio = _audio_for_frames(12)  # 2 windows of 6 frames
    tl = CaptionTimeline.constant("style words", "happy")
    result = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=0)
    assert result.motion.n_frames == 12
    assert len(result.window_captions) == 2
    # partial trailing window: 8 frames -> 2 windows, truncated to 8
    audio = _audio_for_frames(8)
    result = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=0)
    assert result.motion.n_frames == 8
    assert len(result.codes) == 2


def test_generate_single_window_null_context(tiny_pipeline):
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    audio = _audio_for_frames(6)
    tl = CaptionTimeline.constant("s", "e")
    result = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=1)
    assert result.motion.n_frames == 6
    assert len(result.window_captions) == 1


def test_generate_deterministic(tiny_pipeline):
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    audio = _audio_for_frames(12)
    tl = CaptionTimeline.constant("s", "e")
    r1 = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=7, temperature=1.0)
    r2 = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=7, temperature=1.0)
    np.testing.assert_array_equal(r1.motion.features(), r2.motion.features())
    r3 = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=8, temperature=1.0)
    assert not np.array_equal(r1.motion.features(), r3.motion.features())


def test_generate_truncation_equivalence(tiny_pipeline):
    """Window 1 regenerated alone (same seed, same window-1 audio) matches
    window 1 of the two-window run bit for bit."""
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    audio = _audio_for_frames(12, seed=3)
    tl = CaptionTimeline.constant("s", "e")
    full = generate(gen, gcfg, codec, codec_cfg, audio, tl, seed=9, temperature=1.0)
    w = gcfg.window
    keep = audio.frame_times < w
    audio1 = AudioFeatureSequence(audio.features[keep], audio.rate,
                                  audio.frame_times[keep])
    alone = generate(gen, gcfg, codec, codec_cfg, audio1, tl, seed=9, temperature=1.0)
    for a, b in zip(full.codes[0].blocks, alone.codes[0].blocks):
        np.testing.assert_array_equal(a, b)


def test_generate_incompatible_checkpoints(tiny_pipeline):
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    bad_cfg = tiny_cfg(scale_lengths=(1, 2, 6))
    audio = _audio_for_frames(6)
    with pytest.raises(ConfigError):
        generate(gen, bad_cfg, codec, codec_cfg, audio,
                 CaptionTimeline.constant("s", "e"), seed=0)


# --- training ----------------------------------------------------------------


def test_train_ar_zero_iters_is_init(tiny_pipeline):
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    rng = np.random.default_rng(12)
    code = rand_code(rng, gcfg)
    feats, times = rand_audio(rng, gcfg)
    ds = [ARSample(code, None, feats, times,
                   rng.normal(size=(2, gcfg.text_dim)),
                   rng.normal(size=(1, gcfg.text_dim)))]
    model, log = train_ar(ds, gcfg, seed=5, iters=0)
    init = CaptionedMotionGenerator(gcfg, 5)
    for (_, a), (_, b) in zip(model.named_parameters(), init.named_parameters()):
        assert np.array_equal(a.values, b.values)
    assert log == []


def test_train_ar_deterministic(tiny_pipeline):
    gen, gcfg, codec, codec_cfg = tiny_pipeline
    rng = np.random.default_rng(13)
    ds = []
    for _ in range(3):
        code = rand_code(rng, gcfg)
        feats, times = rand_audio(rng, gcfg)
        ds.append(ARSample(code, None, feats, times,
                           rng.normal(size=(2, gcfg.text_dim)),
                           rng.normal(size=(1, gcfg.text_dim))))
    m1, log1 = train_ar(ds, gcfg, seed=6, iters=5, lr=1e-3)
    m2, log2 = train_ar(ds, gcfg, seed=6, iters=5, lr=1e-3)
    assert log1 == log2
    for (_, a), (_, b) in zip(m1.named_parameters(), m2.named_parameters()):
        assert np.array_equal(a.values, b.values)
