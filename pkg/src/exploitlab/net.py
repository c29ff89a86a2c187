"""Policy/value network: card encoder, current-hand action encoder, the
hierarchical history encoder, a layer-normalized fusion MLP trunk, and
softmax policy / scalar value heads.

All gradients come from the reverse-mode tape in `autodiff`; `grad_check`
validates them against central finite differences in double precision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import engine, histenc
from .engine import GameSpec, HandState
from .histenc import EncoderConfig, TokenSequence

CHECKPOINT_VERSION = 1


class NetError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    game_id: str
    emb_dim: int
    heads: int
    ffn_width: int
    dropout: float
    cards_out: int
    actions_out: int
    mlp_width: int
    mlp_layers: int
    max_hands: int = 128

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.game_id, self.emb_dim, self.heads,
                             self.ffn_width, self.dropout, self.max_hands)


def net_config(game_id: str) -> NetConfig:
    """Default architecture per game."""
    if game_id == engine.KUHN:
        return NetConfig(game_id, emb_dim=8, heads=4, ffn_width=64,
                         dropout=0.1, cards_out=8, actions_out=8,
                         mlp_width=128, mlp_layers=2)
    if game_id == engine.LEDUC:
        return NetConfig(game_id, emb_dim=16, heads=2, ffn_width=1024,
                         dropout=0.1, cards_out=64, actions_out=128,
                         mlp_width=128, mlp_layers=2)
    raise NetError(f"unknown game {game_id!r}")


def card_input_width(spec: GameSpec) -> int:
    # hero rank one-hot; Leduc adds community rank one-hot + no-community flag
    return 3 if spec.rounds == 1 else 7


def action_input_width(spec: GameSpec) -> int:
    steps = spec.raise_cap + 2
    return spec.rounds * 2 * steps * (1 + spec.action_arity)


@dataclass(frozen=True)
class Observation:
    """Network inputs for one decision point."""
    card: np.ndarray
    action: np.ndarray
    history: tuple[TokenSequence, ...]
    legal_mask: np.ndarray  # bool, full action arity


def observation_from_state(spec: GameSpec, state: HandState, hero_seat: int,
                           history: tuple[TokenSequence, ...]) -> Observation:
    if state.to_act != hero_seat:
        raise NetError(f"seat {hero_seat} is not to act")
    card = np.zeros(card_input_width(spec), dtype=np.float32)
    card[state.private_rank(hero_seat)] = 1.0
    if spec.rounds > 1:
        if state.community_rank is not None:
            card[3 + state.community_rank] = 1.0
        else:
            card[6] = 1.0
    steps = spec.raise_cap + 2
    slot_w = 1 + spec.action_arity
    act = np.zeros(spec.rounds * 2 * steps * slot_w, dtype=np.float32)
    # every slot starts in its "no action yet" state
    act[::slot_w] = 1.0
    for rnd_idx, rnd in enumerate(state.history):
        per_seat = [0, 0]
        for i, ch in enumerate(rnd):
            seat = (state.dealer_seat + i) % 2
            a = engine._char_action(spec, rnd, i)
            slot = (rnd_idx * 2 + seat) * steps + per_seat[seat]
            act[slot * slot_w] = 0.0
            act[slot * slot_w + 1 + a] = 1.0
            per_seat[seat] += 1
    legal = np.zeros(spec.action_arity, dtype=bool)
    for a in engine.legal_actions(state):
        legal[a] = True
    return Observation(card, act, tuple(history), legal)


def init_params(cfg: NetConfig, seed: int) -> dict:
    """Deterministic fan-in-scaled initialization; zero biases, unit gains."""
    spec = engine.game_spec(cfg.game_id)
    rng = np.random.default_rng(seed)

    def w(n_in, n_out):
        return ad.Tensor(rng.normal(0.0, 1.0 / np.sqrt(n_in),
                                    size=(n_in, n_out)).astype(np.float32),
                         requires_grad=True)

    def zeros(n):
        return ad.Tensor(np.zeros(n, dtype=np.float32), requires_grad=True)

    def ones(n):
        return ad.Tensor(np.ones(n, dtype=np.float32), requires_grad=True)

    params = {"enc": histenc.init_encoder_params(cfg.encoder, spec, rng)}
    params["card_w"] = w(card_input_width(spec), cfg.cards_out)
    params["card_b"] = zeros(cfg.cards_out)
    params["act_w"] = w(action_input_width(spec), cfg.actions_out)
    params["act_b"] = zeros(cfg.actions_out)
    fused = cfg.cards_out + cfg.actions_out + cfg.emb_dim
    params["ln_g"] = ones(fused)
    params["ln_b"] = zeros(fused)
    width = fused
    for i in range(cfg.mlp_layers):
        params[f"mlp{i}_w"] = w(width, cfg.mlp_width)
        params[f"mlp{i}_b"] = zeros(cfg.mlp_width)
        width = cfg.mlp_width
    params["pi_w"] = w(width, spec.action_arity)
    params["pi_b"] = zeros(spec.action_arity)
    params["v_w"] = w(width, 1)
    params["v_b"] = zeros(1)
    return params


def _trunk(params: dict, cfg: NetConfig, card, act, z,
           legal: np.ndarray) -> tuple[ad.Tensor, ad.Tensor]:
    """Fusion trunk; returns (log-probs (B, arity), value (B,))."""
    c = ad.relu(ad.add(ad.matmul(card, params["card_w"]), params["card_b"]))
    a = ad.relu(ad.add(ad.matmul(act, params["act_w"]), params["act_b"]))
    x = ad.concat([c, a, z], axis=-1)
    x = ad.layer_norm(x, params["ln_g"], params["ln_b"])
    for i in range(cfg.mlp_layers):
        x = ad.relu(ad.add(ad.matmul(x, params[f"mlp{i}_w"]),
                           params[f"mlp{i}_b"]))
    logits = ad.add(ad.matmul(x, params["pi_w"]), params["pi_b"])
    logits = ad.add(logits, np.where(legal, 0.0, -1e9))
    log_probs = ad.log_softmax(logits, axis=-1)
    value = ad.reshape(ad.add(ad.matmul(x, params["v_w"]), params["v_b"]),
                       (x.data.shape[0],))
    return log_probs, value


class FastTrunk:
    """No-grad numpy mirror of _trunk for rollout/evaluation.

    Reproduces the tape arithmetic exactly (eval mode) so behavior
    log-probabilities match the training-time recompute.
    """

    def __init__(self, params: dict, cfg: NetConfig):
        self.cfg = cfg
        self.w = {k: t.data for k, t in params.items() if k != "enc"}

    def __call__(self, card: np.ndarray, act: np.ndarray, z: np.ndarray,
                 legal: np.ndarray) -> tuple[np.ndarray, float]:
        w = self.w
        c = np.maximum(card @ w["card_w"] + w["card_b"], 0.0)
        a = np.maximum(act @ w["act_w"] + w["act_b"], 0.0)
        x = np.concatenate([c, a, z])
        x = histenc._np_layer_norm(x, w["ln_g"], w["ln_b"])
        for i in range(self.cfg.mlp_layers):
            x = np.maximum(x @ w[f"mlp{i}_w"] + w[f"mlp{i}_b"], 0.0)
        logits = (x @ w["pi_w"] + w["pi_b"]
                  + np.where(legal, 0.0, -1e9).astype(x.dtype))
        shift = logits.max()
        log_probs = (logits - shift) - np.log(np.exp(logits - shift).sum())
        value = float((x @ w["v_w"] + w["v_b"])[0])
        return log_probs, value


def forward(params: dict, cfg: NetConfig, obs: Observation,
            mask_history: bool = False, train_mode: bool = False,
            rng: np.random.Generator | None = None
            ) -> tuple[np.ndarray, float]:
    """Action distribution (full arity; illegal actions get exactly 0) and
    value estimate for one observation."""
    spec = engine.game_spec(cfg.game_id)
    ctx = histenc.encode_history(list(obs.history), params["enc"], cfg.encoder,
                                 spec, mask=mask_history,
                                 train_mode=train_mode, rng=rng)
    with ad.no_grad():
        log_probs, value = _trunk(
            params, cfg, ad.Tensor(obs.card[None, :]),
            ad.Tensor(obs.action[None, :]), ad.Tensor(ctx.z[None, :]),
            obs.legal_mask[None, :])
    probs = np.exp(log_probs.data[0])
    probs[~obs.legal_mask] = 0.0
    probs /= probs.sum()
    return probs, float(value.data[0])


@dataclass
class Minibatch:
    """Packed arrays for one gradient step.

    Histories are deduplicated: `hand_syms`/`hand_mask` pack every distinct
    completed hand once; `refs`/`ref_mask` point each sample at its own
    past-hand rows (masked samples reference nothing).
    """
    card: np.ndarray
    action: np.ndarray
    legal: np.ndarray
    hand_syms: np.ndarray
    hand_mask: np.ndarray
    refs: np.ndarray
    ref_mask: np.ndarray
    chosen: np.ndarray
    old_logp: np.ndarray
    advantage: np.ndarray
    value_target: np.ndarray

    @property
    def size(self) -> int:
        return len(self.chosen)


def pack_minibatch(cfg: NetConfig, observations: list[Observation],
                   chosen, old_logp, advantage, value_target,
                   mask_history: bool = False) -> Minibatch:
    spec = engine.game_spec(cfg.game_id)
    distinct: dict[tuple, int] = {}
    by_id: dict[int, int] = {}  # object-identity fast path over seq.tokens
    hands: list[TokenSequence] = []
    refs_lists: list[list[int]] = []
    for obs in observations:
        row = []
        if not mask_history:
            for seq in obs.history:
                idx = by_id.get(id(seq))
                if idx is None:
                    idx = distinct.setdefault(seq.tokens, len(hands))
                    if idx == len(hands):
                        hands.append(seq)
                    by_id[id(seq)] = idx
                row.append(idx)
        refs_lists.append(row)
    if hands:
        hand_syms, hand_mask = histenc.pack_hands(cfg.encoder, spec, hands)
    else:  # single zero row keeps the gather well-formed
        hand_syms = np.zeros((1, cfg.encoder.max_tokens), dtype=np.int64)
        hand_mask = np.zeros((1, cfg.encoder.max_tokens), dtype=np.float32)
    m = max(1, max((len(r) for r in refs_lists), default=1))
    refs = np.zeros((len(observations), m), dtype=np.int64)
    ref_mask = np.zeros((len(observations), m), dtype=np.float32)
    for i, row in enumerate(refs_lists):
        refs[i, :len(row)] = row
        ref_mask[i, :len(row)] = 1.0
    return Minibatch(
        card=np.stack([o.card for o in observations]),
        action=np.stack([o.action for o in observations]),
        legal=np.stack([o.legal_mask for o in observations]),
        hand_syms=hand_syms, hand_mask=hand_mask, refs=refs, ref_mask=ref_mask,
        chosen=np.asarray(chosen, dtype=np.int64),
        old_logp=np.asarray(old_logp, dtype=np.float64),
        advantage=np.asarray(advantage, dtype=np.float64),
        value_target=np.asarray(value_target, dtype=np.float64))


@dataclass(frozen=True)
class LossSpec:
    clip_eps: float = 0.1
    value_coef: float = 0.01
    entropy_coef: float = 0.025


def _loss(params: dict, cfg: NetConfig, mb: Minibatch, loss_spec: LossSpec,
          train_mode: bool = False,
          rng: np.random.Generator | None = None) -> tuple[ad.Tensor, dict]:
    summaries = histenc.encode_hands_batch(params["enc"], cfg.encoder,
                                           mb.hand_syms, mb.hand_mask,
                                           train_mode, rng)
    z = histenc.encode_across_batch(params["enc"], cfg.encoder, summaries,
                                    mb.refs, mb.ref_mask, train_mode, rng)
    log_probs, value = _trunk(params, cfg, ad.Tensor(mb.card),
                              ad.Tensor(mb.action), z, mb.legal)
    b = mb.size
    logp = ad.take(log_probs, (np.arange(b), mb.chosen))
    ratio = ad.exp(ad.add(logp, -mb.old_logp))
    surr1 = ad.mul(ratio, mb.advantage)
    surr2 = ad.mul(ad.clip(ratio, 1.0 - loss_spec.clip_eps,
                           1.0 + loss_spec.clip_eps), mb.advantage)
    policy_loss = -ad.mean(ad.minimum(surr1, surr2))
    err = ad.add(value, -mb.value_target)
    value_loss = ad.mean(ad.mul(err, err))
    p = ad.exp(log_probs)
    entropy = -ad.mean(ad.tsum(ad.mul(ad.mul(p, log_probs),
                                      mb.legal.astype(float)), axis=-1))
    loss = ad.add(ad.add(policy_loss, ad.mul(value_loss, loss_spec.value_coef)),
                  ad.mul(entropy, -loss_spec.entropy_coef))
    with np.errstate(over="ignore"):
        r = ratio.data
    stats = {"policy_loss": float(policy_loss.data),
             "value_loss": float(value_loss.data),
             "entropy": float(entropy.data),
             "approx_kl": float(np.mean(mb.old_logp - logp.data)),
             "clip_frac": float(np.mean(np.abs(r - 1.0) > loss_spec.clip_eps))}
    return loss, stats


def gradients(params: dict, cfg: NetConfig, mb: Minibatch,
              loss_spec: LossSpec, train_mode: bool = False,
              rng: np.random.Generator | None = None) -> tuple[float, dict]:
    """Exact reverse-mode gradients of the PPO composite loss.

    Gradients accumulate on each parameter tensor's `.grad`; returns the
    scalar loss and the per-term stats.
    """
    if mb.size == 0:
        raise NetError("empty minibatch")
    ad.zero_grads(params)
    loss, stats = _loss(params, cfg, mb, loss_spec, train_mode, rng)
    if not np.isfinite(loss.data):
        raise NetError(f"non-finite loss {loss.data}")
    loss.backward()
    return float(loss.data), stats


def _cast_params(params: dict, dtype) -> dict:
    out = {}
    for key, val in params.items():
        if isinstance(val, dict):
            out[key] = _cast_params(val, dtype)
        else:
            out[key] = ad.Tensor(val.data.astype(dtype), requires_grad=True)
    return out


def grad_check(params: dict, cfg: NetConfig, mb: Minibatch,
               loss_spec: LossSpec, epsilon: float = 1e-5,
               sample_count: int = 200, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central finite
    differences on randomly chosen coordinates, in double precision."""
    if not 1e-6 <= epsilon <= 1e-3:
        raise NetError(f"epsilon {epsilon} outside [1e-6, 1e-3]")
    p64 = _cast_params(params, np.float64)
    mb = replace(mb, card=mb.card.astype(np.float64),
                 action=mb.action.astype(np.float64),
                 hand_mask=mb.hand_mask.astype(np.float64),
                 ref_mask=mb.ref_mask.astype(np.float64))
    gradients(p64, cfg, mb, loss_spec)
    tensors = ad.parameters(p64)
    sizes = np.array([t.data.size for t in tensors])
    bounds = np.cumsum(sizes)
    rng = np.random.default_rng(seed)
    coords = rng.choice(int(bounds[-1]), size=min(sample_count, int(bounds[-1])),
                        replace=False)
    worst = 0.0
    for c in coords:
        ti = int(np.searchsorted(bounds, c, side="right"))
        offset = int(c - (bounds[ti - 1] if ti else 0))
        flat = tensors[ti].data.reshape(-1)
        grad = tensors[ti].grad.reshape(-1)[offset] \
            if tensors[ti].grad is not None else 0.0
        orig = flat[offset]
        with ad.no_grad():
            flat[offset] = orig + epsilon
            hi, _ = _loss(p64, cfg, mb, loss_spec)
            flat[offset] = orig - epsilon
            lo, _ = _loss(p64, cfg, mb, loss_spec)
            flat[offset] = orig
        fd = (float(hi.data) - float(lo.data)) / (2.0 * epsilon)
        err = abs(fd - grad) / max(1.0, abs(fd), abs(grad))
        worst = max(worst, err)
    return worst


def _flatten(params: dict, prefix: str = "") -> dict:
    flat = {}
    for key, val in params.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            flat.update(_flatten(val, name + "."))
        else:
            flat[name] = val
    return flat


def save_checkpoint(path, params: dict, cfg: NetConfig) -> None:
    arrays = {k: t.data for k, t in _flatten(params).items()}
    meta = json.dumps({"version": CHECKPOINT_VERSION, "config": cfg.__dict__})
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path) -> tuple[dict, NetConfig]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise NetError(f"unsupported checkpoint version {meta['version']}")
        cfg = NetConfig(**meta["config"])
        params = init_params(cfg, seed=0)
        for key, tensor in _flatten(params).items():
            if key not in data:
                raise NetError(f"checkpoint missing parameter {key}")
            arr = data[key]
            if arr.shape != tensor.data.shape:
                raise NetError(f"shape mismatch for {key}: checkpoint "
                               f"{arr.shape} vs config {tensor.data.shape}")
            tensor.data = arr
    return params, cfg
