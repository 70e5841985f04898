"""Hierarchical k-space transformer for undersampled MRI reconstruction.

Sampled k-space points are tokenised (value MLP + sine/cosine positional
encoding), contextualised by a self-attention encoder, then decoded onto
coordinate-queried grids: a low-resolution decoder with self- and
cross-attention reconstructs the coarse spectrogram, and a high-resolution
decoder (cross-attention only) fills in detail while alternating with
image-domain convolutional refinement through the centered FFT pair.

All layers are Pre-LN residual blocks. Every attention call can feed an
optional AttentionRecord (post-softmax weights) and CostMeter (score-matrix
sizes), which the benchmarking and visualisation code rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .fourier import fft2_op, ifft2_op
from .sampling import SampledPointSet, grid_coords
from .tensor import DimensionError, Tensor


@dataclass
class ModelConfig:
    d: int = 64
    n_heads: int = 4
    n_enc: int = 2
    n_lr: int = 2
    n_hr: int = 3
    ffn_width: int = 0           # 0 -> 4 * d
    hr_grid: tuple = (64, 64)
    lr_grid: tuple = (16, 16)
    refine_channels: int = 64
    refine_depth: int = 5
    leaky_slope: float = 0.01
    use_lr_decoder: bool = True
    use_refinement: bool = True
    data_consistency: bool = False

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} must divide by n_heads={self.n_heads}")
        if self.d % 4 != 0:
            raise ValueError(f"d={self.d} must divide by 4 for 2-axis sin/cos encoding")
        if self.ffn_width == 0:
            self.ffn_width = 4 * self.d
        if self.refine_depth < 2:
            raise ValueError("refinement stack needs at least input and output convs")
        for hr, lr in zip(self.hr_grid, self.lr_grid):
            if hr % lr != 0:
                raise ValueError(
                    f"lr grid {self.lr_grid} must divide hr grid {self.hr_grid} per axis")

    @property
    def m(self) -> int:
        return self.hr_grid[0] * self.hr_grid[1]

    @property
    def l(self) -> int:
        return self.lr_grid[0] * self.lr_grid[1]


PARAM_GROUPS = ("tokenizer", "attention", "norm", "ffn", "head", "refine", "reembed")


def param_group(name: str) -> str:
    """Classify a parameter name into one of the seven trainable groups."""
    if name.startswith("tokenizer."):
        return "tokenizer"
    if "attn" in name or ".qproj" in name:
        return "attention"
    if ".ln" in name:
        return "norm"
    if ".ffn." in name:
        return "ffn"
    if ".head." in name:
        return "head"
    if ".refine." in name:
        return "refine"
    if ".reembed." in name:
        return "reembed"
    raise KeyError(f"parameter {name!r} matches no group")


# ---------------------------------------------------------------------------
# Parameters

def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> dict:
    """Create every learnable tensor, keyed by a stable hierarchical name.

    Linear and conv weights are uniform with 1/sqrt(fan_in) bounds, biases
    zero, layer-norm affine at identity. Creation order is fixed so the same
    seed always produces identical parameters.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    d, ffn = config.d, config.ffn_width
    params: dict[str, Tensor] = {}

    def add(name, shape, fan_in):
        params[name] = Tensor(_uniform(rng, shape, fan_in, dtype), requires_grad=True)

    def add_zeros(name, shape):
        params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def add_ones(name, shape):
        params[name] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    def add_ln(prefix):
        add_ones(prefix + ".gain", (d,))
        add_zeros(prefix + ".bias", (d,))

    def add_attn(prefix):
        for w in ("wq", "wk", "wv", "wo"):
            add(f"{prefix}.{w}", (d, d), d)
        add_zeros(prefix + ".bo", (d,))

    def add_ffn(prefix):
        add(prefix + ".w1", (d, ffn), d)
        add_zeros(prefix + ".b1", (ffn,))
        add(prefix + ".w2", (ffn, d), ffn)
        add_zeros(prefix + ".b2", (d,))

    def add_mlp2(prefix, d_in, d_hidden, d_out):
        add(prefix + ".w1", (d_in, d_hidden), d_in)
        add_zeros(prefix + ".b1", (d_hidden,))
        add(prefix + ".w2", (d_hidden, d_out), d_hidden)
        add_zeros(prefix + ".b2", (d_out,))

    add_mlp2("tokenizer", 2, d, d)

    for i in range(config.n_enc):
        p = f"enc.{i}"
        add_ln(p + ".ln1")
        add_attn(p + ".attn")
        add_ln(p + ".ln2")
        add_ffn(p + ".ffn")

    if config.use_lr_decoder:
        add("lr.qproj.w", (d, d), d)
        for i in range(config.n_lr):
            p = f"lr.{i}"
            add_ln(p + ".ln1")
            add_attn(p + ".sattn")
            add_ln(p + ".ln2")
            add_attn(p + ".xattn")
            add_ln(p + ".ln3")
            add_ffn(p + ".ffn")
            add(p + ".head.w", (d, 2), d)
            add_zeros(p + ".head.b", (2,))

    add("hr.qproj.w", (d, d), d)
    ch = config.refine_channels
    for i in range(config.n_hr):
        p = f"hr.{i}"
        add_ln(p + ".ln1")
        add_attn(p + ".xattn")
        add_ln(p + ".ln2")
        add_ffn(p + ".ffn")
        add(p + ".head.w", (d, 2), d)
        add_zeros(p + ".head.b", (2,))
        if config.use_refinement:
            chans = [2] + [ch] * (config.refine_depth - 1) + [2]
            for j in range(config.refine_depth):
                c_in, c_out = chans[j], chans[j + 1]
                add(f"{p}.refine.conv{j}.k", (c_out, c_in, 3, 3), c_in * 9)
                add_zeros(f"{p}.refine.conv{j}.b", (c_out,))
        if i < config.n_hr - 1:  # re-embedding only feeds the next layer
            add_mlp2(p + ".reembed", 2, d, d)

    return params


# ---------------------------------------------------------------------------
# Instrumentation

@dataclass
class AttentionRecord:
    """Post-softmax attention weights captured during one forward pass."""

    entries: list = field(default_factory=list)

    def add(self, stage, layer, weights):
        self.entries.append({"stage": stage, "layer": layer, "weights": weights})

    def select(self, stage):
        return [e for e in self.entries if e["stage"] == stage]


@dataclass
class CostMeter:
    """Counts attention score-matrix elements (one head's matrix per call)."""

    totals: dict = field(default_factory=dict)
    peak_elements: int = 0

    def note(self, stage, n_q, n_k):
        self.totals[stage] = self.totals.get(stage, 0) + n_q * n_k
        self.peak_elements = max(self.peak_elements, n_q * n_k)

    def total(self, stages=None) -> int:
        if stages is None:
            return sum(self.totals.values())
        return sum(self.totals.get(s, 0) for s in stages)


# ---------------------------------------------------------------------------
# Building blocks

def positional_encoding_2d(positions, d: int, dtype=np.float32) -> np.ndarray:
    """Sine/cosine encoding of normalised 2D coordinates, (L, 2) -> (L, d).

    The first d/2 dims encode the first coordinate, the rest the second;
    each half interleaves sin/cos at geometric frequencies 2*pi*2^j,
    j = 0 .. d/4 - 1. Parameter-free and deterministic.
    """
    if d % 4 != 0:
        raise DimensionError(f"encoding width {d} must divide by 4")
    p = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n_freq = d // 4
    omegas = 2.0 * np.pi * (2.0 ** np.arange(n_freq))
    out = np.empty((p.shape[0], d), dtype=dtype)
    for axis in (0, 1):
        phase = p[:, axis:axis + 1] * omegas[None, :]
        half = np.empty((p.shape[0], d // 2))
        half[:, 0::2] = np.sin(phase)
        half[:, 1::2] = np.cos(phase)
        out[:, axis * (d // 2):(axis + 1) * (d // 2)] = half
    return out


def tokenize(points: SampledPointSet, params: dict, config: ModelConfig) -> Tensor:
    """Per-point feature = value MLP + positional encoding, (n, d)."""
    if points.n == 0:
        raise ValueError("cannot tokenize an empty point set")
    dtype = params["tokenizer.w1"].data.dtype
    values = T.constant(points.values, dtype=dtype)
    pe = T.constant(positional_encoding_2d(points.positions, config.d, dtype))
    feat = T.mlp2(values, params["tokenizer.w1"], params["tokenizer.b1"],
                  params["tokenizer.w2"], params["tokenizer.b2"])
    return T.add(feat, pe)


def _heads_split(x: Tensor, n_heads: int) -> Tensor:
    L, d = x.data.shape
    return T.transpose(T.reshape(x, (L, n_heads, d // n_heads)), (1, 0, 2))


def _heads_join(x: Tensor) -> Tensor:
    h, L, dh = x.data.shape
    return T.reshape(T.transpose(x, (1, 0, 2)), (L, h * dh))


def attention(q_src: Tensor, kv_src: Tensor, params: dict, prefix: str,
              n_heads: int, stage: str, layer: int,
              record: AttentionRecord | None = None,
              meter: CostMeter | None = None) -> Tensor:
    """Multi-head scaled dot-product attention; self-attention when
    q_src is kv_src."""
    dh = q_src.data.shape[-1] // n_heads
    # fold the 1/sqrt(dh) score scaling into q: same math, tiny array
    q = _heads_split(T.scale(T.matmul(q_src, params[prefix + ".wq"]),
                             1.0 / np.sqrt(dh)), n_heads)
    k = _heads_split(T.matmul(kv_src, params[prefix + ".wk"]), n_heads)
    v = _heads_split(T.matmul(kv_src, params[prefix + ".wv"]), n_heads)
    if meter is not None:
        meter.note(stage, q.data.shape[1], k.data.shape[1])
    scores = T.matmul(q, T.transpose(k, (0, 2, 1)))
    attn = T.softmax_lastdim(scores)
    if record is not None:
        record.add(stage, layer, attn.data.copy())
    out = _heads_join(T.matmul(attn, v))
    return T.add(T.matmul(out, params[prefix + ".wo"]), params[prefix + ".bo"])


def _prenorm(x: Tensor, params: dict, prefix: str) -> Tensor:
    return T.layer_norm(x, params[prefix + ".gain"], params[prefix + ".bias"])


def _ffn(x: Tensor, params: dict, prefix: str) -> Tensor:
    return T.mlp2(x, params[prefix + ".w1"], params[prefix + ".b1"],
                  params[prefix + ".w2"], params[prefix + ".b2"])


def encode(tokens: Tensor, params: dict, config: ModelConfig,
           record=None, meter=None) -> Tensor:
    """Self-attention encoder; output keeps the (n, d) token shape."""
    if tokens.data.shape[-1] != config.d:
        raise DimensionError(
            f"token width {tokens.data.shape[-1]} != model width {config.d}")
    x = tokens
    for i in range(config.n_enc):
        p = f"enc.{i}"
        h = _prenorm(x, params, p + ".ln1")
        x = T.add(x, attention(h, h, params, p + ".attn", config.n_heads,
                               "encoder", i, record, meter))
        x = T.add(x, _ffn(_prenorm(x, params, p + ".ln2"), params, p + ".ffn"))
    return x


def _query_tokens(qproj: Tensor, grid_hw, d: int, dtype) -> Tensor:
    coords = grid_coords(*grid_hw)
    pe = T.constant(positional_encoding_2d(coords, d, dtype))
    return T.matmul(pe, qproj)


def lr_decode(memory: Tensor, params: dict, config: ModelConfig,
              record=None, meter=None):
    """Low-resolution decoder: self-attn, cross-attn into the encoder
    memory, FFN per layer, with a linear spectrogram head after each layer.

    Returns (lr_tokens, per_layer_spectrograms); spectrograms are (h, w, 2)
    tensors on the LR grid.
    """
    dtype = memory.data.dtype
    h_lr, w_lr = config.lr_grid
    x = _query_tokens(params["lr.qproj.w"], (h_lr, w_lr), config.d, dtype)
    spectrograms = []
    for i in range(config.n_lr):
        p = f"lr.{i}"
        hsa = _prenorm(x, params, p + ".ln1")
        x = T.add(x, attention(hsa, hsa, params, p + ".sattn", config.n_heads,
                               "lr_self", i, record, meter))
        hca = _prenorm(x, params, p + ".ln2")
        x = T.add(x, attention(hca, memory, params, p + ".xattn", config.n_heads,
                               "lr_cross", i, record, meter))
        x = T.add(x, _ffn(_prenorm(x, params, p + ".ln3"), params, p + ".ffn"))
        s = T.add(T.matmul(x, params[p + ".head.w"]), params[p + ".head.b"])
        spectrograms.append(T.reshape(s, (h_lr, w_lr, 2)))
    return x, spectrograms


def _refine(image: Tensor, params: dict, prefix: str, config: ModelConfig) -> Tensor:
    """Conv stack with residual skip: (H, W, 2) image -> refined image."""
    x = T.transpose(image, (2, 0, 1))
    for j in range(config.refine_depth):
        x = T.conv2d(x, params[f"{prefix}.conv{j}.k"], params[f"{prefix}.conv{j}.b"])
        if j < config.refine_depth - 1:
            x = T.leaky_relu(x, config.leaky_slope)
    return T.add(image, T.transpose(x, (1, 2, 0)))


def hr_decode(memory: Tensor, params: dict, config: ModelConfig,
              record=None, meter=None):
    """High-resolution decoder: cross-attention only, alternating with
    image-domain refinement.

    Per layer: cross-attend into ``memory`` (LR tokens, or encoder output in
    the ablated model), FFN, predict spectrogram S, refine its image through
    the conv stack, transform back, and re-embed the refined values into the
    token stream. Returns a list of per-layer dicts with keys
    ``spectrogram`` (S), ``image`` (refined), ``refined_spectrogram``.
    """
    dtype = memory.data.dtype
    H, W = config.hr_grid
    m = H * W
    x = _query_tokens(params["hr.qproj.w"], (H, W), config.d, dtype)
    layers = []
    for i in range(config.n_hr):
        p = f"hr.{i}"
        hca = _prenorm(x, params, p + ".ln1")
        x = T.add(x, attention(hca, memory, params, p + ".xattn", config.n_heads,
                               "hr_cross", i, record, meter))
        x = T.add(x, _ffn(_prenorm(x, params, p + ".ln2"), params, p + ".ffn"))
        s_flat = T.add(T.matmul(x, params[p + ".head.w"]), params[p + ".head.b"])
        spectrogram = T.reshape(s_flat, (H, W, 2))
        image = ifft2_op(spectrogram)
        if config.use_refinement:
            refined = _refine(image, params, p + ".refine", config)
        else:
            refined = image
        refined_spectrogram = fft2_op(refined)
        if i < config.n_hr - 1:
            re = T.mlp2(T.reshape(refined_spectrogram, (m, 2)),
                        params[p + ".reembed.w1"], params[p + ".reembed.b1"],
                        params[p + ".reembed.w2"], params[p + ".reembed.b2"])
            x = T.add(x, re)
        layers.append({"spectrogram": spectrogram, "image": refined,
                       "refined_spectrogram": refined_spectrogram})
    return layers


@dataclass
class ReconstructionOutputs:
    """Per-layer predictions for deep supervision plus the final image."""

    lr_spectrograms: list          # n_lr tensors (h_lr, w_lr, 2)
    hr_spectrograms: list          # n_hr tensors (H, W, 2), pre-refinement
    hr_images: list                # n_hr refined images (H, W, 2)
    hr_refined_spectrograms: list  # n_hr tensors (H, W, 2)
    final_image: Tensor
    record: AttentionRecord | None = None


def forward(points: SampledPointSet, params: dict, config: ModelConfig,
            record_attention: bool = False, meter: CostMeter | None = None,
            stop_hr_grad: bool = False) -> ReconstructionOutputs:
    """Full reconstruction pass: tokenize, encode, LR decode, HR decode.

    ``stop_hr_grad`` detaches the LR-to-HR token handoff so HR loss terms
    cannot reach the encoder or LR decoder (early-epoch training mode).
    """
    if points.grid_shape != tuple(config.hr_grid):
        raise DimensionError(
            f"points from grid {points.grid_shape} but model expects {config.hr_grid}")
    record = AttentionRecord() if record_attention else None
    tokens = tokenize(points, params, config)
    memory = encode(tokens, params, config, record, meter)
    if config.use_lr_decoder:
        lr_tokens, lr_specs = lr_decode(memory, params, config, record, meter)
        hr_memory = lr_tokens
    else:
        lr_specs = []
        hr_memory = memory
    if stop_hr_grad:
        hr_memory = T.stop_gradient(hr_memory)
    layers = hr_decode(hr_memory, params, config, record, meter)

    final = layers[-1]["image"]
    if config.data_consistency:
        final_spec = _overwrite_sampled(layers[-1]["refined_spectrogram"], points)
        final = ifft2_op(final_spec)
    return ReconstructionOutputs(
        lr_spectrograms=lr_specs,
        hr_spectrograms=[L["spectrogram"] for L in layers],
        hr_images=[L["image"] for L in layers],
        hr_refined_spectrograms=[L["refined_spectrogram"] for L in layers],
        final_image=final,
        record=record,
    )


def _overwrite_sampled(spectrogram: Tensor, points: SampledPointSet) -> Tensor:
    """Data consistency: replace predicted values at sampled bins with the
    measured ones (differentiable w.r.t. the unsampled bins)."""
    h, w = points.grid_shape
    dtype = spectrogram.data.dtype
    keep = np.ones((h, w, 1), dtype=dtype)
    measured = np.zeros((h, w, 2), dtype=dtype)
    keep[points.indices[:, 0], points.indices[:, 1], 0] = 0.0
    measured[points.indices[:, 0], points.indices[:, 1], :] = points.values
    return T.add(T.mul(spectrogram, T.constant(keep, dtype)),
                 T.constant(measured, dtype))


# ---------------------------------------------------------------------------
# Attention-map extraction

def encoder_point_map(record: AttentionRecord, points: SampledPointSet,
                      point_index: int, layer: int = -1) -> np.ndarray:
    """Self-attention row of one sampled point scattered onto the k-space
    grid: (heads, H, W), zero at unsampled bins."""
    entries = record.select("encoder")
    if not entries:
        raise ValueError("no encoder attention was recorded")
    weights = entries[layer]["weights"]
    if not 0 <= point_index < weights.shape[1]:
        raise IndexError(f"point index {point_index} out of range ({weights.shape[1]} points)")
    h, w = points.grid_shape
    heads = weights.shape[0]
    maps = np.zeros((heads, h, w), dtype=weights.dtype)
    rows = weights[:, point_index, :]
    maps[:, points.indices[:, 0], points.indices[:, 1]] = rows
    return maps


def hr_coord_map(record: AttentionRecord, config: ModelConfig,
                 coord_index: int, layer: int = -1) -> np.ndarray:
    """Cross-attention row of one HR coordinate reshaped onto the LR grid:
    (heads, h_lr, w_lr)."""
    entries = record.select("hr_cross")
    if not entries:
        raise ValueError("no HR attention was recorded")
    weights = entries[layer]["weights"]
    if not 0 <= coord_index < weights.shape[1]:
        raise IndexError(f"coordinate index {coord_index} out of range "
                         f"({weights.shape[1]} coordinates)")
    h_lr, w_lr = config.lr_grid
    if weights.shape[2] != h_lr * w_lr:
        raise ValueError(
            f"HR memory length {weights.shape[2]} is not the LR grid size "
            f"{h_lr * w_lr}; was the LR decoder disabled?")
    return weights[:, coord_index, :].reshape(-1, h_lr, w_lr)
