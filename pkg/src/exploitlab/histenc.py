"""Cross-hand history stream: tokenization of completed hands and the
hierarchical (within-hand / across-hand) transformer producing the session
context vector z.

A within-hand encoder embeds each completed hand's tokens through
type-specific tables, runs one self-attention + feed-forward block, and
mean-pools to a per-hand summary h_i. An across-hand encoder then attends
over {h_i} (plus a learned hand-index embedding) and mean-pools to z.
Masked mode and the empty history both yield the all-zero z, so hand 1 of a
session is mask-invariant by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .engine import CompletedHand, GameSpec

# token type tags
AGENT_ACTION, OPP_ACTION, PRIVATE_CARD, COMMUNITY_CARD, OPP_CARD = range(5)
TAG_NAMES = ("agent", "opp", "priv", "comm", "oppcard")
N_CARD_RANKS = 3

# per-game caps: Kuhn = card + 3 actions + showdown card;
# Leduc = card + 4 actions + community + 4 actions + showdown card
MAX_TOKENS = {"kuhn": 5, "leduc": 11}


class HistEncError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    type_tag: int
    symbol: int
    position: int


@dataclass(frozen=True)
class TokenSequence:
    game_id: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class HistoryContext:
    z: np.ndarray
    hand_count: int


def tag_vocab_sizes(spec: GameSpec) -> tuple[int, ...]:
    """Vocabulary size per type tag, in tag order."""
    a = spec.action_arity
    return (a, a, N_CARD_RANKS, N_CARD_RANKS, N_CARD_RANKS)


def tokenize_hand(hand: CompletedHand, hero_seat: int) -> TokenSequence:
    """Chronological token record of one completed hand, hero-relative.

    Order: hero private card, actions in play order (tagged agent/opponent),
    the community card at its deal point, and the opponent's card iff the
    hand reached showdown. No reward tokens.
    """
    if hero_seat not in (0, 1):
        raise HistEncError(f"hero_seat must be 0 or 1, got {hero_seat}")
    if not isinstance(hand, CompletedHand):
        raise HistEncError("tokenize_hand requires a completed (terminal) hand")
    tokens = [Token(PRIVATE_CARD, hand.ranks[hero_seat], 0)]
    for i, (seat, action) in enumerate(hand.actions):
        if hand.community_rank is not None and i == hand.round1_actions:
            tokens.append(Token(COMMUNITY_CARD, hand.community_rank, len(tokens)))
        tag = AGENT_ACTION if seat == hero_seat else OPP_ACTION
        tokens.append(Token(tag, action, len(tokens)))
    if hand.showdown:
        tokens.append(Token(OPP_CARD, hand.ranks[1 - hero_seat], len(tokens)))
    cap = MAX_TOKENS[hand.game_id]
    if len(tokens) > cap:
        raise HistEncError(f"{len(tokens)} tokens exceeds the {hand.game_id} "
                           f"cap of {cap}")
    return TokenSequence(hand.game_id, tuple(tokens))


def dump_tokens(hands: list[TokenSequence]) -> str:
    """Debug dump: one token per line `tag:symbol@pos`, hands joined by `|`."""
    return "|".join(
        "\n".join(f"{TAG_NAMES[t.type_tag]}:{t.symbol}@{t.position}"
                  for t in seq.tokens)
        for seq in hands)


@dataclass(frozen=True)
class EncoderConfig:
    game_id: str
    emb_dim: int
    heads: int
    ffn_width: int
    dropout: float
    max_hands: int

    def __post_init__(self):
        if self.emb_dim % self.heads:
            raise HistEncError(
                f"heads {self.heads} must divide embedding dim {self.emb_dim}")

    @property
    def max_tokens(self) -> int:
        return MAX_TOKENS[self.game_id]


def init_encoder_params(cfg: EncoderConfig, spec: GameSpec,
                        rng: np.random.Generator) -> dict:
    """Embedding tables, positional tables, and both transformer blocks."""
    d = cfg.emb_dim

    def w(n_in, n_out):
        return ad.Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_in),
                                    size=(n_in, n_out)).astype(np.float32),
                         requires_grad=True)

    def zeros(*shape):
        return ad.Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

    def ones(*shape):
        return ad.Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)

    def block():
        return {"wq": w(d, d), "wk": w(d, d), "wv": w(d, d), "wo": w(d, d),
                "bq": zeros(d), "bk": zeros(d), "bv": zeros(d), "bo": zeros(d),
                "ln1_g": ones(d), "ln1_b": zeros(d),
                "ffn_w1": w(d, cfg.ffn_width), "ffn_b1": zeros(cfg.ffn_width),
                "ffn_w2": w(cfg.ffn_width, d), "ffn_b2": zeros(d),
                "ln2_g": ones(d), "ln2_b": zeros(d)}

    params = {"within": block(), "across": block(),
              "pos": w(cfg.max_tokens, d), "hand_pos": w(cfg.max_hands, d)}
    for name, vocab in zip(TAG_NAMES, tag_vocab_sizes(spec)):
        params[f"emb_{name}"] = w(vocab, d)
    return params


def _attention_block(block: dict, x, key_mask: np.ndarray, heads: int,
                     drop: float, train_mode: bool, rng) -> ad.Tensor:
    """Pre-norm-free transformer block: residual attention + residual FFN,
    each followed by layer norm. key_mask is (..., T) with 1 = real token."""
    *batch, t, d = x.data.shape
    dh = d // heads

    def split(h):  # (..., T, D) -> (..., H, T, dh)
        return ad.swapaxes(ad.reshape(h, (*batch, t, heads, dh)), -2, -3)

    q = split(ad.add(ad.matmul(x, block["wq"]), block["bq"]))
    k = split(ad.add(ad.matmul(x, block["wk"]), block["bk"]))
    v = split(ad.add(ad.matmul(x, block["wv"]), block["bv"]))
    scores = ad.mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / np.sqrt(dh))
    neg = (1.0 - key_mask) * -1e9  # constant additive mask
    scores = ad.add(scores, neg.reshape(*batch, 1, 1, t))
    att = ad.softmax(scores, axis=-1)
    mixed = ad.matmul(att, v)  # (..., H, T, dh)
    mixed = ad.reshape(ad.swapaxes(mixed, -2, -3), (*batch, t, d))
    mixed = ad.dropout(ad.add(ad.matmul(mixed, block["wo"]), block["bo"]),
                       drop, rng, train_mode)
    x = ad.layer_norm(ad.add(x, mixed), block["ln1_g"], block["ln1_b"])
    hidden = ad.relu(ad.add(ad.matmul(x, block["ffn_w1"]), block["ffn_b1"]))
    ffn = ad.dropout(ad.add(ad.matmul(hidden, block["ffn_w2"]),
                            block["ffn_b2"]), drop, rng, train_mode)
    return ad.layer_norm(ad.add(x, ffn), block["ln2_g"], block["ln2_b"])


def _masked_mean(x, mask: np.ndarray) -> ad.Tensor:
    """Mean over axis -2 restricted to mask==1; all-masked rows give zero."""
    count = np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)
    weighted = ad.mul(x, mask[..., None])
    return ad.mul(ad.tsum(weighted, axis=-2), 1.0 / count)


def pack_hands(cfg: EncoderConfig, spec: GameSpec,
               hands: list[TokenSequence]) -> tuple[np.ndarray, np.ndarray]:
    """Pad token sequences into (N, T) global-symbol and mask arrays.

    Global symbol index = per-tag offset + within-tag symbol, matching the
    concatenation order of the type-specific embedding tables.
    """
    vocabs = tag_vocab_sizes(spec)
    offsets = np.concatenate(([0], np.cumsum(vocabs)[:-1]))
    t_cap = cfg.max_tokens
    syms = np.zeros((len(hands), t_cap), dtype=np.int64)
    mask = np.zeros((len(hands), t_cap), dtype=np.float32)
    for i, seq in enumerate(hands):
        if seq.game_id != cfg.game_id:
            raise HistEncError(f"{seq.game_id} hand fed to a {cfg.game_id} encoder")
        for tok in seq.tokens:
            if not 0 <= tok.symbol < vocabs[tok.type_tag]:
                raise HistEncError(
                    f"symbol {tok.symbol} outside the {TAG_NAMES[tok.type_tag]} "
                    f"vocabulary of size {vocabs[tok.type_tag]}")
            syms[i, tok.position] = offsets[tok.type_tag] + tok.symbol
            mask[i, tok.position] = 1.0
    return syms, mask


def encode_hands_batch(params: dict, cfg: EncoderConfig, syms: np.ndarray,
                       tok_mask: np.ndarray, train_mode: bool = False,
                       rng: np.random.Generator | None = None) -> ad.Tensor:
    """Within-hand encoder over a packed batch; returns summaries (N, D)."""
    table = ad.concat([params[f"emb_{name}"] for name in TAG_NAMES], axis=0)
    x = ad.gather(table, syms)
    pos = ad.gather(params["pos"], np.broadcast_to(
        np.arange(syms.shape[1]), syms.shape))
    x = ad.add(x, pos)
    x = _attention_block(params["within"], x, tok_mask, cfg.heads,
                         cfg.dropout, train_mode, rng)
    return _masked_mean(x, tok_mask)


def encode_across_batch(params: dict, cfg: EncoderConfig, summaries,
                        refs: np.ndarray, ref_mask: np.ndarray,
                        train_mode: bool = False,
                        rng: np.random.Generator | None = None) -> ad.Tensor:
    """Across-hand encoder: gather each sample's past-hand summaries by index
    and pool to z. refs is (B, M) into `summaries` rows (0 for padding, which
    ref_mask excludes); rows with no valid refs yield the zero vector."""
    x = ad.gather(summaries, refs)
    order = np.broadcast_to(np.arange(refs.shape[1]), refs.shape)
    x = ad.add(x, ad.gather(params["hand_pos"], order))
    x = _attention_block(params["across"], x, ref_mask, cfg.heads,
                         cfg.dropout, train_mode, rng)
    z = _masked_mean(x, ref_mask)
    # all-pad rows: the attention over a fully-masked row is uniform garbage,
    # but the masked mean already zeroes it; multiply keeps that exact.
    any_valid = (ref_mask.sum(axis=-1, keepdims=True) > 0).astype(ref_mask.dtype)
    return ad.mul(z, any_valid)


def _np_block(block: dict, x: np.ndarray, key_mask: np.ndarray,
              heads: int) -> np.ndarray:
    """Plain-numpy mirror of _attention_block (eval mode, no dropout).

    Keeps the exact arithmetic of the tape version so rollout-time
    log-probabilities agree with the training-time recompute.
    """
    *batch, t, d = x.shape
    dh = d // heads

    def split(h):
        return np.swapaxes(h.reshape(*batch, t, heads, dh), -2, -3)

    if "wqkv" in block:  # fused projection precomputed by FastEncoder
        qkv = x @ block["wqkv"] + block["bqkv"]
        q, k, v = (split(qkv[..., i * d:(i + 1) * d]) for i in range(3))
    else:
        q = split(x @ block["wq"] + block["bq"])
        k = split(x @ block["wk"] + block["bk"])
        v = split(x @ block["wv"] + block["bv"])
    scores = (q @ np.swapaxes(k, -1, -2)) * x.dtype.type(1.0 / np.sqrt(dh))
    scores = scores + ((1.0 - key_mask) * -1e9).reshape(*batch, 1, 1, t)
    shift = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - shift)
    att = e / e.sum(axis=-1, keepdims=True)
    mixed = np.swapaxes(att @ v, -2, -3).reshape(*batch, t, d)
    x = _np_layer_norm(x + (mixed @ block["wo"] + block["bo"]),
                       block["ln1_g"], block["ln1_b"])
    hidden = np.maximum(x @ block["ffn_w1"] + block["ffn_b1"], 0.0)
    ffn = hidden @ block["ffn_w2"] + block["ffn_b2"]
    return _np_layer_norm(x + ffn, block["ln2_g"], block["ln2_b"])


def _np_layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                   eps: float = 1e-5) -> np.ndarray:
    n = x.shape[-1]
    mu = x.sum(axis=-1, keepdims=True) * (1.0 / n)
    centered = x - mu
    var = (centered * centered).sum(axis=-1, keepdims=True) * (1.0 / n)
    return centered * np.power(var + eps, -0.5) * gain + bias


class FastEncoder:
    """No-grad numpy view of the encoder params for rollout/evaluation."""

    def __init__(self, params: dict, cfg: EncoderConfig):
        self.cfg = cfg
        self.table = np.concatenate(
            [params[f"emb_{name}"].data for name in TAG_NAMES], axis=0)
        self.pos = params["pos"].data
        self.hand_pos = params["hand_pos"].data
        self.within = self._fuse({k: t.data for k, t in params["within"].items()})
        self.across = self._fuse({k: t.data for k, t in params["across"].items()})

    @staticmethod
    def _fuse(block: dict) -> dict:
        block["wqkv"] = np.concatenate([block["wq"], block["wk"],
                                        block["wv"]], axis=1)
        block["bqkv"] = np.concatenate([block["bq"], block["bk"], block["bv"]])
        return block

    def hand_summary(self, syms: np.ndarray, tok_mask: np.ndarray) -> np.ndarray:
        x = self.table[syms] + self.pos[np.arange(syms.shape[1])]
        x = _np_block(self.within, x, tok_mask, self.cfg.heads)
        count = np.maximum(tok_mask.sum(axis=-1, keepdims=True), 1.0)
        return (x * tok_mask[..., None]).sum(axis=-2) * (1.0 / count)

    def context(self, summaries: np.ndarray) -> np.ndarray:
        """z over one session's (M, D) summaries; zero vector when M == 0."""
        m = summaries.shape[0]
        if m == 0:
            return np.zeros(self.cfg.emb_dim, dtype=self.table.dtype)
        x = (summaries + self.hand_pos[np.arange(m)])[None, :, :]
        mask = np.ones((1, m), dtype=x.dtype)
        x = _np_block(self.across, x, mask, self.cfg.heads)
        return x[0].sum(axis=0) * (1.0 / m)


def encode_history(hands: list[TokenSequence], params: dict,
                   cfg: EncoderConfig, spec: GameSpec, mask: bool = False,
                   train_mode: bool = False,
                   rng: np.random.Generator | None = None) -> HistoryContext:
    """Session context z for one history; zero vector when masked or empty."""
    if mask or not hands:
        return HistoryContext(np.zeros(cfg.emb_dim, dtype=np.float32),
                              hand_count=len(hands))
    if len(hands) > cfg.max_hands:
        raise HistEncError(f"{len(hands)} hands exceeds the session cap "
                           f"of {cfg.max_hands}")
    syms, tok_mask = pack_hands(cfg, spec, hands)
    with ad.no_grad():
        h = encode_hands_batch(params, cfg, syms, tok_mask, train_mode, rng)
        refs = np.arange(len(hands))[None, :]
        z = encode_across_batch(params, cfg, h, refs,
                                np.ones_like(refs, dtype=np.float32),
                                train_mode, rng)
    return HistoryContext(z.data[0].copy(), hand_count=len(hands))
