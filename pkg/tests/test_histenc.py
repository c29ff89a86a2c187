"""History tokenizer and cross-hand encoder tests."""
import numpy as np
import pytest

from exploitlab import autodiff as ad
from exploitlab import engine, histenc, net
from exploitlab.engine import BET, CALL, PASS
from exploitlab.histenc import (AGENT_ACTION, COMMUNITY_CARD, OPP_ACTION,
                                OPP_CARD, PRIVATE_CARD, EncoderConfig,
                                FastEncoder, HistEncError, Token,
                                TokenSequence, encode_history,
                                init_encoder_params, pack_hands,
                                tag_vocab_sizes, tokenize_hand)


def kuhn_hand(deal=(2, 0), dealer=0, actions=(BET, BET)):
    spec = engine.kuhn_spec()
    state = engine.new_hand(spec, deal, dealer)
    for a in actions:
        state = engine.apply_action(state, a)
    return engine.completed_hand(state)


def leduc_hand():
    spec = engine.leduc_spec()
    state = engine.new_hand(spec, (0, 4), 0)
    for a in (CALL, CALL):
        state = engine.apply_action(state, a)
    state = engine.deal_community(state, 1)
    for a in (CALL, CALL):
        state = engine.apply_action(state, a)
    return engine.completed_hand(state)


def test_tokenize_showdown_hand_order():
    seq = tokenize_hand(kuhn_hand(), hero_seat=0)
    tags = [t.type_tag for t in seq.tokens]
    assert tags == [PRIVATE_CARD, AGENT_ACTION, OPP_ACTION, OPP_CARD]
    assert seq.tokens[0].symbol == 2  # hero's king
    assert seq.tokens[-1].symbol == 0  # revealed jack
    assert [t.position for t in seq.tokens] == [0, 1, 2, 3]


def test_tokenize_fold_hides_opponent_card():
    seq = tokenize_hand(kuhn_hand(actions=(BET, PASS)), hero_seat=0)
    assert all(t.type_tag != OPP_CARD for t in seq.tokens)


def test_tokenize_hero_relative_tags():
    hand = kuhn_hand()
    a = tokenize_hand(hand, 0)
    b = tokenize_hand(hand, 1)
    assert a.tokens[1].type_tag == AGENT_ACTION
    assert b.tokens[1].type_tag == OPP_ACTION
    assert a.tokens[0].symbol == 2 and b.tokens[0].symbol == 0


def test_tokenize_leduc_community_between_rounds():
    seq = tokenize_hand(leduc_hand(), hero_seat=0)
    tags = [t.type_tag for t in seq.tokens]
    # private, two round-1 actions, community, two round-2 actions, opp card
    assert tags == [PRIVATE_CARD, AGENT_ACTION, OPP_ACTION, COMMUNITY_CARD,
                    AGENT_ACTION, OPP_ACTION, OPP_CARD]
    assert seq.tokens[3].symbol == 0  # community jack (position 1 -> rank 0)


def test_tokenize_validates_hero_seat():
    with pytest.raises(HistEncError):
        tokenize_hand(kuhn_hand(), 2)


def test_tag_vocab_sizes():
    assert tag_vocab_sizes(engine.kuhn_spec()) == (2, 2, 3, 3, 3)
    assert tag_vocab_sizes(engine.leduc_spec()) == (3, 3, 3, 3, 3)


def test_pack_hands_symbols_and_mask():
    spec = engine.kuhn_spec()
    cfg = net.net_config("kuhn").encoder
    seq = tokenize_hand(kuhn_hand(), 0)
    syms, mask = pack_hands(cfg, spec, [seq])
    assert syms.shape == (1, cfg.max_tokens)
    assert mask[0].tolist() == [1.0, 1.0, 1.0, 1.0, 0.0]
    # offsets: agent 0, opp 2, priv 4, comm 7, oppcard 10
    assert syms[0, :4].tolist() == [4 + 2, 0 + 1, 2 + 1, 10 + 0]


def test_pack_hands_rejects_cross_game_and_bad_symbol():
    cfg = net.net_config("kuhn").encoder
    with pytest.raises(HistEncError):
        pack_hands(cfg, engine.kuhn_spec(), [tokenize_hand(leduc_hand(), 0)])
    bad = TokenSequence("kuhn", (Token(AGENT_ACTION, 2, 0),))
    with pytest.raises(HistEncError):
        pack_hands(cfg, engine.kuhn_spec(), [bad])


def test_encoder_config_head_divisibility():
    with pytest.raises(HistEncError):
        EncoderConfig("kuhn", emb_dim=8, heads=3, ffn_width=16,
                      dropout=0.0, max_hands=4)


def test_encode_history_masked_and_empty_are_zero():
    cfg = net.net_config("kuhn")
    spec = engine.kuhn_spec()
    params = net.init_params(cfg, 0)["enc"]
    seq = tokenize_hand(kuhn_hand(), 0)
    masked = encode_history([seq], params, cfg.encoder, spec, mask=True)
    empty = encode_history([], params, cfg.encoder, spec)
    assert not masked.z.any() and masked.hand_count == 1
    assert not empty.z.any() and empty.hand_count == 0
    live = encode_history([seq], params, cfg.encoder, spec)
    assert live.z.any()


def test_encode_history_session_cap():
    cfg = net.net_config("kuhn")
    spec = engine.kuhn_spec()
    params = net.init_params(cfg, 0)["enc"]
    seqs = [tokenize_hand(kuhn_hand(), 0)] * (cfg.max_hands + 1)
    with pytest.raises(HistEncError):
        encode_history(seqs, params, cfg.encoder, spec)


def test_history_order_changes_context():
    cfg = net.net_config("kuhn")
    spec = engine.kuhn_spec()
    params = net.init_params(cfg, 0)["enc"]
    a = tokenize_hand(kuhn_hand(deal=(2, 0)), 0)
    b = tokenize_hand(kuhn_hand(deal=(0, 1), actions=(PASS, PASS)), 0)
    z_ab = encode_history([a, b], params, cfg.encoder, spec).z
    z_ba = encode_history([b, a], params, cfg.encoder, spec).z
    # hand-position embeddings make the context order-sensitive
    assert not np.allclose(z_ab, z_ba)


@pytest.mark.parametrize("game", ["kuhn", "leduc"])
def test_fast_encoder_matches_tape(game):
    cfg = net.net_config(game)
    spec = engine.game_spec(game)
    params = net.init_params(cfg, 3)["enc"]
    fast = FastEncoder(params, cfg.encoder)
    rng = np.random.default_rng(0)
    deals = engine.enumerate_deals(spec)
    hands = []
    for _ in range(6):
        deal, _ = deals[rng.integers(len(deals))]
        state = engine.new_hand(spec, deal, int(rng.integers(2)))
        while not state.terminal:
            if state.awaiting_community:
                rem = engine.remaining_positions(state)
                state = engine.deal_community(state,
                                              rem[rng.integers(len(rem))])
                continue
            legal = engine.legal_actions(state)
            state = engine.apply_action(state, legal[rng.integers(len(legal))])
        hands.append(tokenize_hand(engine.completed_hand(state), 0))
    ref = encode_history(hands, params, cfg.encoder, spec).z
    syms, tok_mask = pack_hands(cfg.encoder, spec, hands)
    got = fast.context(fast.hand_summary(syms, tok_mask))
    assert np.allclose(got, ref, atol=1e-6)


def test_dump_tokens_format():
    text = histenc.dump_tokens([tokenize_hand(kuhn_hand(), 0)])
    lines = text.split("\n")
    assert lines[0] == "priv:2@0"
    assert lines[-1] == "oppcard:0@3"
