import numpy as np
import pytest

from deeplas import ElabConfig, InputSpec, LAS, Vocabulary
from deeplas.tensor import Tensor, backward, no_grad

from conftest import make_micro


def test_vocabulary_layout_and_round_trip():
    v = Vocabulary("abcdefghij")
    assert len(v) == 13
    assert v.tokens[:3] == ["<sos>", "<eos>", " "]
    ids = v.encode("ab c")
    assert ids[-1] == v.eos
    assert v.decode(ids) == "ab c"
    assert v.decode([v.sos, v.index["a"], v.eos, v.index["b"]]) == "a"
    with pytest.raises(ValueError, match="'z'"):
        v.encode("z")


def test_vocabulary_drops_duplicates_and_space():
    assert Vocabulary("aa b").tokens == ["<sos>", "<eos>", " ", "a", "b"]


def test_encoder_output_shape_and_reduction():
    m = LAS("L + P/2 + L", Vocabulary("ab"), InputSpec(4, 1), ElabConfig(hidden=3), dec_hidden=5)
    enc = m.listen(np.zeros((2, 9, 4), np.float32), [9, 5])
    assert enc.h.shape == (2, 4, 6)
    assert enc.lengths.tolist() == [4, 2]


def test_grid_input_reshapes_frames_into_channels():
    m = LAS("C(3x3)/2 + NiN", Vocabulary("ab"), InputSpec(12, 3), ElabConfig(hidden=3, channels=2), dec_hidden=3)
    enc = m.listen(np.random.default_rng(0).normal(size=(1, 8, 12)), [8])
    assert enc.h.shape[:2] == (1, 4)


def test_too_short_utterance_is_rejected():
    m = LAS("L + P/2 + L + P/2 + L", Vocabulary("a"), InputSpec(4, 1), ElabConfig(hidden=2), dec_hidden=2)
    with pytest.raises(ValueError, match="time-reduction"):
        m.listen(np.zeros((1, 3, 4)), [3])


def test_attention_masks_padding_and_normalises():
    m = make_micro(0)
    x = np.random.default_rng(1).normal(size=(2, 8, 4))
    with no_grad():
        enc = m.listen(x, [8, 4])
        state = m.initial_state(enc)
        _, logp, alpha = m.decode_step([m.vocab.sos] * 2, state, enc)
    np.testing.assert_allclose(alpha.data.sum(1), 1.0)
    assert np.all(alpha.data[1, 2:] == 0)
    np.testing.assert_allclose(np.exp(logp.data).sum(1), 1.0)


def test_teacher_forcing_matches_stepwise_decoding():
    m = make_micro(2, chars="ab")
    x = np.random.default_rng(2).normal(size=(6, 4))
    ids = m.vocab.encode("ab a")
    with no_grad():
        total = m.sequence_log_prob(x, ids)
        enc = m.listen(x[None], [6])
        state, prev, acc = m.initial_state(enc), m.vocab.sos, 0.0
        for t in ids:
            state, logp, _ = m.decode_step([prev], state, enc)
            acc += logp.data[0, t]
            prev = t
    assert total == pytest.approx(acc, abs=1e-10)


def test_batch_loss_is_independent_of_padding_and_batch_mates():
    m = make_micro(3, chars="ab")
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(8, 4)), rng.normal(size=(4, 4))
    xa = np.zeros((2, 8, 4))
    xa[0], xa[1, :4] = a, b
    xa[1, 4:] = 9.0  # garbage in padding
    ta, tb = m.vocab.encode("ab"), m.vocab.encode("b")
    targets = np.array([ta, tb + [0]])
    with no_grad():
        both = m.token_log_probs(xa, [8, 4], targets, [3, 2]).data
    assert both[0] == pytest.approx(m.sequence_log_prob(a, ta), abs=1e-10)
    assert both[1] == pytest.approx(m.sequence_log_prob(b, tb), abs=1e-10)


def test_loss_is_mean_token_nll_and_backprops_to_every_param():
    m = make_micro(4, chars="ab", scale=0.3)
    m.train()
    x = np.random.default_rng(4).normal(size=(2, 6, 4))
    targets = np.array([m.vocab.encode("ab"), m.vocab.encode("a") + [0]])
    loss = m.loss(x, [6, 6], targets, [3, 2])
    with no_grad():
        lp = m.token_log_probs(x, [6, 6], targets, [3, 2]).data
    assert float(loss.data) == pytest.approx(-lp.sum() / 5)
    backward(loss)
    for name, p in m.named_parameters():
        assert p.grad is not None and np.isfinite(p.grad).all(), name


def test_target_must_end_with_eos_and_ids_in_range():
    m = make_micro(5)
    with pytest.raises(ValueError, match="eos"):
        m.sequence_log_prob(np.zeros((4, 4)), [2])
    with pytest.raises(ValueError, match="vocabulary"):
        m.decode_step([7], m.initial_state(m.listen(np.zeros((1, 4, 4)), [4])), m.listen(np.zeros((1, 4, 4)), [4]))


def test_same_seed_same_weights():
    a = LAS("L", Vocabulary("ab"), InputSpec(4, 1), ElabConfig(hidden=3), dec_hidden=3, seed=9)
    b = LAS("L", Vocabulary("ab"), InputSpec(4, 1), ElabConfig(hidden=3), dec_hidden=3, seed=9)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and np.array_equal(pa.data, pb.data)
    assert a.num_params() == sum(p.data.size for _, p in a.named_parameters())


def test_float32_by_default():
    m = LAS("L", Vocabulary("a"), InputSpec(4, 1), ElabConfig(hidden=2), dec_hidden=2)
    assert m.embed.dtype == np.float32
    assert m.listen(Tensor(np.zeros((1, 2, 4), np.float32)), [2]).h.dtype == np.float32


def test_zero_attention_params_average_valid_positions():
    from deeplas.model import attention_context
    from deeplas.model.las import EncoderOutput

    rng = np.random.default_rng(6)
    h = rng.normal(size=(2, 5, 3))
    enc = EncoderOutput(Tensor(h), np.array([5, 1]), Tensor(np.zeros((2, 5, 4))))
    ctx, alpha = attention_context(Tensor(rng.normal(size=(2, 2))), enc, Tensor(np.zeros((2, 4))),
                                   Tensor(np.zeros(4)), Tensor(rng.normal(size=4)))
    np.testing.assert_allclose(alpha.data[0], 0.2)
    np.testing.assert_allclose(ctx.data[0], h[0].mean(0))
    assert alpha.data[1].tolist() == [1.0, 0, 0, 0, 0]
    np.testing.assert_allclose(ctx.data[1], h[1, 0])
    with pytest.raises(ValueError, match="no valid"):
        attention_context(Tensor(np.zeros((1, 2))), EncoderOutput(Tensor(h[:1]), np.array([0]), Tensor(np.zeros((1, 5, 4)))),
                          Tensor(np.zeros((2, 4))), Tensor(np.zeros(4)), Tensor(np.zeros(4)))


def test_zeroed_output_projection_is_uniform():
    m = make_micro(7, chars="a")
    assert len(m.vocab) == 4
    m.out_w.data[:] = 0
    m.out_b.data[:] = 0
    x = np.random.default_rng(7).normal(size=(6, 4))
    with no_grad():
        enc = m.listen(x[None], [6])
        _, logp, _ = m.decode_step([m.vocab.sos], m.initial_state(enc), enc)
    np.testing.assert_allclose(np.exp(logp.data), 0.25)
    assert m.sequence_log_prob(x, "a ") == pytest.approx(3 * np.log(0.25))


def test_identity_graph_keeps_length():
    m = LAS("L x 2", Vocabulary("a"), InputSpec(4, 1), ElabConfig(hidden=2), dec_hidden=2)
    assert m.listen(np.zeros((1, 7, 4)), [7]).h.shape[1] == 7


def test_sequence_log_prob_is_order_sensitive_and_non_positive():
    changed = 0
    for seed in range(20):
        m = make_micro(seed, chars="ab")
        x = np.random.default_rng(seed).normal(size=(6, 4))
        a, b = m.sequence_log_prob(x, "ab"), m.sequence_log_prob(x, "ba")
        assert a <= 0 and b <= 0
        changed += a != b
    assert changed == 20


def test_batch_invariance_in_inference_mode():
    m = LAS("(L + P/2 + B + R) x 2 + L", Vocabulary("ab"), InputSpec(4, 1), ElabConfig(hidden=4), dec_hidden=4, seed=1)
    m.eval()
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(12, 4)).astype(np.float32), rng.normal(size=(8, 4)).astype(np.float32)
    xb = np.zeros((2, 12, 4), np.float32)
    xb[0], xb[1, :8] = a, b
    ta = m.vocab.encode("ab")
    with no_grad():
        both = m.token_log_probs(xb, [12, 8], np.array([ta, m.vocab.encode("b") + [0]]), [3, 2]).data
        alone = m.token_log_probs(a[None], [12], np.array([ta]), [3]).data
    assert abs(both[0] - alone[0]) < 1e-5
