"""Waveform encoder: conv frontend, transformer stack, weighted pooling.

The structure mirrors the standard self-supervised speech encoder it is
scaled down from: strided convolutions turn raw samples into frames, a
single positional convolution injects order information, a stack of
pre-norm transformer layers refines the frames, and a learned softmax over
all per-layer representations (input embedding included) produces the mix
that is mean-pooled into the clip embedding.  Three small heads hang off
that embedding: emotion logits, augmentation-pipeline logits, and the
projection used by the contrastive loss.

Both members of an augmented pair run through the same parameter set, so
gradients from the two views accumulate into shared weights.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import NUM_PIPELINES, AugmentedPair, Waveform
from .errors import ConfigError, FormatError, InputLengthError
from .rng import derive_rng

_CKPT_MAGIC = b"serda-checkpoint-v1\n"


@dataclass(frozen=True)
class EncoderConfig:
    """Structural hyperparameters; defaults are desk-scale."""

    conv_layers: tuple[tuple[int, int, int], ...] = (
        (32, 10, 5),
        (32, 8, 4),
        (64, 8, 4),
        (64, 4, 2),
        (64, 4, 2),
    )  # (channels, kernel, stride)
    model_dim: int = 64
    num_transformer_layers: int = 2
    num_heads: int = 2
    ffn_dim: int = 128
    pos_conv_kernel: int = 9
    proj_hidden: int = 32
    proj_out: int = 16
    num_emotion_classes: int = 2
    num_aug_classes: int = NUM_PIPELINES

    def validate(self) -> None:
        dims = (
            self.model_dim,
            self.num_transformer_layers,
            self.num_heads,
            self.ffn_dim,
            self.pos_conv_kernel,
            self.proj_hidden,
            self.proj_out,
            self.num_emotion_classes,
        )
        if any(d <= 0 for d in dims):
            raise ConfigError("all encoder dimensions must be positive")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )
        if not self.conv_layers:
            raise ConfigError("conv_layers must not be empty")
        for ch, k, s in self.conv_layers:
            if ch <= 0 or k <= 0 or s <= 0:
                raise ConfigError(f"bad conv layer ({ch}, {k}, {s})")
        if self.num_aug_classes != NUM_PIPELINES:
            raise ConfigError(f"num_aug_classes is fixed at {NUM_PIPELINES}")

    def to_dict(self) -> dict:
        return {
            "conv_layers": [list(l) for l in self.conv_layers],
            "model_dim": self.model_dim,
            "num_transformer_layers": self.num_transformer_layers,
            "num_heads": self.num_heads,
            "ffn_dim": self.ffn_dim,
            "pos_conv_kernel": self.pos_conv_kernel,
            "proj_hidden": self.proj_hidden,
            "proj_out": self.proj_out,
            "num_emotion_classes": self.num_emotion_classes,
            "num_aug_classes": self.num_aug_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        d["conv_layers"] = tuple(tuple(l) for l in d.get("conv_layers", cls.conv_layers))
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class EncoderOutput:
    """Everything one forward pass produces for one waveform.

    ``layer_states`` are plain value arrays; the remaining fields are graph
    tensors so losses built on them backpropagate into the encoder.
    """

    layer_states: list[np.ndarray]
    pooled: ad.Tensor  # weighted-sum-then-mean embedding, [model_dim]
    projection: ad.Tensor  # contrastive-space vector, [proj_out]
    emo_logits: ad.Tensor  # [num_emotion_classes]
    aug_logits: ad.Tensor  # [num_aug_classes]


def min_input_length(config: EncoderConfig) -> int:
    """Receptive field of the conv stack: the shortest legal waveform."""
    rf = 1
    for _, k, s in reversed(config.conv_layers):
        rf = (rf - 1) * s + k
    return rf


def _param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d = config.model_dim
    shapes: dict[str, tuple[int, ...]] = {}
    in_ch = 1
    for i, (ch, k, _) in enumerate(config.conv_layers):
        shapes[f"conv{i}_w"] = (k * in_ch, ch)
        shapes[f"conv{i}_b"] = (ch,)
        in_ch = ch
    shapes["feat_proj_w"] = (in_ch, d)
    shapes["feat_proj_b"] = (d,)
    shapes["pos_conv_w"] = (config.pos_conv_kernel * d, d)
    shapes["pos_conv_b"] = (d,)
    for l in range(config.num_transformer_layers):
        p = f"layer{l}_"
        shapes[p + "ln1_g"] = (d,)
        shapes[p + "ln1_b"] = (d,)
        for name in ("q", "k", "v", "o"):
            shapes[p + f"attn_{name}_w"] = (d, d)
            shapes[p + f"attn_{name}_b"] = (d,)
        shapes[p + "ln2_g"] = (d,)
        shapes[p + "ln2_b"] = (d,)
        shapes[p + "ffn1_w"] = (d, config.ffn_dim)
        shapes[p + "ffn1_b"] = (config.ffn_dim,)
        shapes[p + "ffn2_w"] = (config.ffn_dim, d)
        shapes[p + "ffn2_b"] = (d,)
    shapes["layer_mix_logits"] = (config.num_transformer_layers + 1,)
    shapes["emo_head_w"] = (d, config.num_emotion_classes)
    shapes["emo_head_b"] = (config.num_emotion_classes,)
    shapes["aug_head_w"] = (d, config.num_aug_classes)
    shapes["aug_head_b"] = (config.num_aug_classes,)
    shapes["proj_hidden_w"] = (d, config.proj_hidden)
    shapes["proj_out_w"] = (config.proj_hidden, config.proj_out)
    return shapes


def parameter_count(config: EncoderConfig) -> int:
    """Total scalar parameters, straight from the shape table."""
    return sum(int(np.prod(s)) for s in _param_shapes(config).values())


def init_params(config: EncoderConfig, seed: int) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in)) weights, zero biases, zero layer-mix logits.

    Layer-norm gains start at one.  Deterministic per seed.
    """
    config.validate()
    params: dict[str, np.ndarray] = {}
    for idx, (name, shape) in enumerate(_param_shapes(config).items()):
        if name.endswith("_b") or name == "layer_mix_logits":
            params[name] = np.zeros(shape)
        elif name.endswith("ln1_g") or name.endswith("ln2_g"):
            params[name] = np.ones(shape)
        else:
            rng = derive_rng(seed, 0x1417, idx)
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def make_leaves(params: dict[str, np.ndarray]) -> dict[str, ad.Tensor]:
    """Wrap parameter arrays as graph leaves (shared across a whole step)."""
    return {name: ad.Tensor(arr, name=name) for name, arr in params.items()}


def _attention(x: ad.Tensor, leaves, prefix: str, config: EncoderConfig) -> ad.Tensor:
    frames = x.shape[0]
    d, h = config.model_dim, config.num_heads
    dh = d // h

    def heads(name: str) -> ad.Tensor:
        proj = ad.add(x @ leaves[prefix + f"attn_{name}_w"], leaves[prefix + f"attn_{name}_b"])
        return proj.reshape((frames, h, dh)).transpose((1, 0, 2))  # [h, frames, dh]

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = ad.scale(q @ k.transpose((0, 2, 1)), 1.0 / np.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    ctx = (attn @ v).transpose((1, 0, 2)).reshape((frames, d))
    return ad.add(ctx @ leaves[prefix + "attn_o_w"], leaves[prefix + "attn_o_b"])


def _transformer_layer(x: ad.Tensor, leaves, l: int, config: EncoderConfig) -> ad.Tensor:
    p = f"layer{l}_"
    normed = ad.layer_norm(x, leaves[p + "ln1_g"], leaves[p + "ln1_b"])
    x = ad.add(x, _attention(normed, leaves, p, config))
    normed = ad.layer_norm(x, leaves[p + "ln2_g"], leaves[p + "ln2_b"])
    hidden = ad.gelu(ad.add(normed @ leaves[p + "ffn1_w"], leaves[p + "ffn1_b"]))
    return ad.add(x, ad.add(hidden @ leaves[p + "ffn2_w"], leaves[p + "ffn2_b"]))


def forward_with_leaves(
    w: Waveform, leaves: dict[str, ad.Tensor], config: EncoderConfig
) -> EncoderOutput:
    """Encode one waveform against an existing set of parameter leaves."""
    min_len = min_input_length(config)
    if len(w) < min_len:
        raise InputLengthError(
            f"waveform of {len(w)} samples is shorter than the encoder minimum {min_len}"
        )
    x = ad.Tensor(w.samples[:, None])  # [time, 1]
    for i, (_, k, s) in enumerate(config.conv_layers):
        x = ad.gelu(ad.add(ad.unfold1d(x, k, s) @ leaves[f"conv{i}_w"], leaves[f"conv{i}_b"]))
    x = ad.add(x @ leaves["feat_proj_w"], leaves["feat_proj_b"])
    kp = config.pos_conv_kernel
    pos = ad.gelu(
        ad.add(
            ad.unfold1d(x, kp, 1, pad_left=(kp - 1) // 2, pad_right=kp // 2)
            @ leaves["pos_conv_w"],
            leaves["pos_conv_b"],
        )
    )
    x = ad.add(x, pos)

    states = [x]
    for l in range(config.num_transformer_layers):
        x = _transformer_layer(x, leaves, l, config)
        states.append(x)

    mix_weights = ad.softmax(leaves["layer_mix_logits"], axis=-1)
    mixed = None
    for idx, state in enumerate(states):
        sel = np.zeros(len(states))
        sel[idx] = 1.0
        weight = ad.sum_(ad.mul(mix_weights, ad.Tensor(sel)))
        term = ad.scale_by(state, weight)
        mixed = term if mixed is None else ad.add(mixed, term)
    pooled = mixed.mean(axis=0)  # [model_dim]

    row = pooled.reshape((1, config.model_dim))
    emo = ad.add(row @ leaves["emo_head_w"], leaves["emo_head_b"]).reshape(
        (config.num_emotion_classes,)
    )
    aug = ad.add(row @ leaves["aug_head_w"], leaves["aug_head_b"]).reshape(
        (config.num_aug_classes,)
    )
    projection = (ad.relu(row @ leaves["proj_hidden_w"]) @ leaves["proj_out_w"]).reshape(
        (config.proj_out,)
    )
    return EncoderOutput(
        layer_states=[s.data for s in states],
        pooled=pooled,
        projection=projection,
        emo_logits=emo,
        aug_logits=aug,
    )


def forward(w: Waveform, params: dict[str, np.ndarray], config: EncoderConfig) -> EncoderOutput:
    """Encode one waveform with a fresh leaf set."""
    return forward_with_leaves(w, make_leaves(params), config)


def forward_pair(
    pair: AugmentedPair, params: dict[str, np.ndarray], config: EncoderConfig
) -> tuple[EncoderOutput, EncoderOutput]:
    """Encode both views with one shared leaf set; gradients accumulate."""
    leaves = make_leaves(params)
    return (
        forward_with_leaves(pair.view_a, leaves, config),
        forward_with_leaves(pair.view_b, leaves, config),
    )


# ---------------------------------------------------------------------------
# checkpoints: deterministic binary container, bit-exact round trip


def save_checkpoint(
    path: str,
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    extra: dict | None = None,
) -> None:
    names = sorted(params)
    header = {
        "config": config.to_dict(),
        "extra": extra or {},
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], EncoderConfig, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise FormatError(f"{path}: not a serda checkpoint (bad magic)")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise FormatError(f"{path}: truncated tensor {entry['name']}")
            params[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    config = EncoderConfig.from_dict(header["config"])
    return params, config, header.get("extra", {})
