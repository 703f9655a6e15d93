"""Sliding-window transformer for two-class motor imagery decoding.

The network is a convolutional feature extractor (temporal filters, then a
spatial filter across electrodes, then batch normalization) followed by
transformer blocks that attend within fixed-size temporal windows.  Each
block runs two stages: windowed attention over aligned windows, then the
same computation with the sequence cyclically shifted by half a window so
information crosses window boundaries.  A square / average-pool / log head
turns the sequence into a band-power style embedding that a two-layer
classifier maps to class probabilities.

``forward`` returns both the probabilities and the flattened embedding; the
embedding is what the contrastive loss operates on.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError, DimensionError
from .tensor import (
    DTYPE,
    BatchNormState,
    Tensor,
    avg_pool_time,
    batch_norm,
    conv2d_valid,
    gelu,
    layer_norm,
    linear,
    log,
    matmul,
    no_grad,
    reshape,
    roll,
    scale,
    softmax_lastdim,
    square,
    transpose,
)

CHECKPOINT_TAG = "mclswt-ckpt-v1"
LOG_EPS = 1e-6


@dataclass(frozen=True)
class SwtConfig:
    """Architecture hyperparameters; defaults give the reference network."""

    n_samples: int = 1120
    n_channels: int = 3
    temporal_kernel: int = 25
    spatial_kernel: int = 3
    n_filters: int = 40
    window_size: int = 8
    n_heads: int = 8
    n_blocks: int = 1
    mlp_hidden: int = 160
    pool_kernel: int = 75
    pool_stride: int = 15
    n_classes: int = 2

    def __post_init__(self):
        if not 1 <= self.temporal_kernel <= self.n_samples:
            raise ConfigurationError(
                f"temporal_kernel {self.temporal_kernel} must lie in "
                f"[1, n_samples={self.n_samples}]"
            )
        if self.spatial_kernel != self.n_channels:
            raise ConfigurationError(
                f"spatial_kernel {self.spatial_kernel} must equal n_channels "
                f"{self.n_channels} so the spatial filter collapses the "
                f"electrode axis to width 1"
            )
        if self.n_filters % self.n_heads != 0:
            raise ConfigurationError(
                f"n_filters {self.n_filters} not divisible by n_heads {self.n_heads}"
            )
        if self.window_size % 2 != 0:
            raise ConfigurationError(
                f"window_size {self.window_size} must be even (the shifted stage "
                f"rolls by half a window)"
            )
        if self.seq_len % self.window_size != 0:
            raise ConfigurationError(
                f"sequence length {self.seq_len} (n_samples - temporal_kernel + 1) "
                f"not divisible by window_size {self.window_size}"
            )
        if self.pool_kernel > self.seq_len:
            raise ConfigurationError(
                f"pool_kernel {self.pool_kernel} exceeds sequence length {self.seq_len}"
            )
        if self.n_blocks < 1:
            raise ConfigurationError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.n_classes != 2:
            raise ConfigurationError(
                f"only two-class decoding is supported, got n_classes={self.n_classes}"
            )

    @property
    def seq_len(self) -> int:
        return self.n_samples - self.temporal_kernel + 1

    @property
    def head_dim(self) -> int:
        return self.n_filters // self.n_heads

    @property
    def n_windows(self) -> int:
        return self.seq_len // self.window_size

    @property
    def pooled_len(self) -> int:
        return (self.seq_len - self.pool_kernel) // self.pool_stride + 1

    @property
    def embedding_dim(self) -> int:
        return self.n_filters * self.pooled_len


@dataclass
class ModelParams:
    """Named parameter tensors plus the batch-norm running state."""

    cfg: SwtConfig
    params: dict[str, Tensor]
    bn: BatchNormState

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if v.requires_grad}

    def total_params(self) -> int:
        return sum(v.size for v in self.params.values())


@dataclass
class TraceRow:
    """One line of the layer-by-layer shape/parameter report."""

    block: str
    layer: str
    shape: tuple[int, ...]
    params: int


def _stage_names(block: int, stage: str) -> str:
    return f"block{block}.{stage}"


def init_model(cfg: SwtConfig, seed: int = 0) -> ModelParams:
    """Deterministic initialization: uniform(+-1/sqrt(fan_in)) per layer,
    ones/zeros for normalization affines."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def uniform(name: str, shape: tuple[int, ...], fan_in: int) -> None:
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    def affine(name: str, width: int) -> None:
        params[name + ".gamma"] = Tensor(np.ones(width, dtype=DTYPE), requires_grad=True)
        params[name + ".beta"] = Tensor(np.zeros(width, dtype=DTYPE), requires_grad=True)

    d = cfg.n_filters
    uniform("feature.temporal.kernel", (d, 1, cfg.temporal_kernel, 1), cfg.temporal_kernel)
    uniform("feature.temporal.bias", (d,), cfg.temporal_kernel)
    fan_sp = d * cfg.spatial_kernel
    uniform("feature.spatial.kernel", (d, d, 1, cfg.spatial_kernel), fan_sp)
    uniform("feature.spatial.bias", (d,), fan_sp)
    affine("feature.norm", d)
    for b in range(cfg.n_blocks):
        for stage in ("tw", "stw"):
            prefix = _stage_names(b, stage)
            affine(prefix + ".attn_norm", d)
            for proj in ("query", "key", "value", "proj"):
                uniform(f"{prefix}.{proj}.weight", (d, d), d)
                uniform(f"{prefix}.{proj}.bias", (d,), d)
            affine(prefix + ".mlp_norm", d)
            uniform(f"{prefix}.mlp.fc1.weight", (d, cfg.mlp_hidden), d)
            uniform(f"{prefix}.mlp.fc1.bias", (cfg.mlp_hidden,), d)
            uniform(f"{prefix}.mlp.fc2.weight", (cfg.mlp_hidden, d), cfg.mlp_hidden)
            uniform(f"{prefix}.mlp.fc2.bias", (d,), cfg.mlp_hidden)
    e = cfg.embedding_dim
    uniform("classifier.fc1.weight", (e, d), e)
    uniform("classifier.fc1.bias", (d,), e)
    uniform("classifier.fc2.weight", (d, cfg.n_classes), d)
    uniform("classifier.fc2.bias", (cfg.n_classes,), d)
    return ModelParams(cfg=cfg, params=params, bn=BatchNormState.create(d))


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------


def feature_extract(x: Tensor, p: ModelParams, mode: str = "train",
                    trace: list[TraceRow] | None = None) -> Tensor:
    """[B,1,T,C] -> temporal conv -> spatial filter -> batch norm -> [B,L,D]."""
    cfg = p.cfg
    x = Tensor.lift(x)
    if x.ndim != 4 or x.shape[1] != 1:
        raise DimensionError(f"feature_extract expects [B,1,T,C], got {x.shape}")
    h = conv2d_valid(x, p["feature.temporal.kernel"], p["feature.temporal.bias"])
    if trace is not None:
        trace.append(TraceRow("Feature Extraction Block", "Temporal Conv", h.shape,
                              p["feature.temporal.kernel"].size
                              + p["feature.temporal.bias"].size))
    h = conv2d_valid(h, p["feature.spatial.kernel"], p["feature.spatial.bias"])
    if trace is not None:
        trace.append(TraceRow("Feature Extraction Block", "Spatial Filter", h.shape,
                              p["feature.spatial.kernel"].size
                              + p["feature.spatial.bias"].size))
    h = batch_norm(h, p["feature.norm.gamma"], p["feature.norm.beta"], p.bn, mode=mode)
    if trace is not None:
        trace.append(TraceRow("Feature Extraction Block", "Feature Normalization",
                              h.shape, 2 * cfg.n_filters))
    f = reshape(transpose(h, (0, 2, 3, 1)), (x.shape[0], cfg.seq_len, cfg.n_filters))
    if trace is not None:
        trace.append(TraceRow("Feature Extraction Block", "Rearrange", f.shape, 0))
    return f


def windowed_attention(q: Tensor, k: Tensor, v: Tensor, window_size: int,
                       n_heads: int) -> Tensor:
    """Multi-head attention computed independently inside each temporal window.

    Inputs are [B,L,D]; the sequence is cut into L/window_size windows and
    scaled dot-product attention (scale 1/sqrt(d_head)) runs per window and
    head.  Output is the head concatenation, [B,L,D], before any projection.
    """
    b, length, d = q.shape
    if length % window_size != 0:
        raise DimensionError(
            f"sequence length {length} not divisible by window size {window_size}"
        )
    if d % n_heads != 0:
        raise DimensionError(f"width {d} not divisible by head count {n_heads}")
    n_win = length // window_size
    d_head = d // n_heads

    def split(t: Tensor) -> Tensor:
        t = reshape(t, (b, n_win, window_size, n_heads, d_head))
        return transpose(t, (0, 3, 1, 2, 4))  # [B,H,nW,M,dh]

    qh, kh, vh = split(q), split(k), split(v)
    scores = scale(matmul(qh, transpose(kh, (0, 1, 2, 4, 3))), 1.0 / np.sqrt(d_head))
    attn = matmul(softmax_lastdim(scores), vh)  # [B,H,nW,M,dh]
    out = transpose(attn, (0, 2, 3, 1, 4))  # [B,nW,M,H,dh]
    return reshape(out, (b, length, d))


def _attention_sublayer(f: Tensor, p: ModelParams, prefix: str, shift: int,
                        trace: list[TraceRow] | None) -> Tensor:
    cfg = p.cfg
    b, length, d = f.shape
    y = layer_norm(f, p[prefix + ".attn_norm.gamma"], p[prefix + ".attn_norm.beta"])
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Layer Norm", y.shape, 2 * d))
    if shift:
        y = roll(y, -shift, axis=1)
    qt = linear(y, p[prefix + ".query.weight"], p[prefix + ".query.bias"])
    kt = linear(y, p[prefix + ".key.weight"], p[prefix + ".key.bias"])
    vt = linear(y, p[prefix + ".value.weight"], p[prefix + ".value.bias"])
    if trace is not None:
        n_proj = d * d + d
        trace.append(TraceRow("(S)TW-MSA", "Query Projection", (b, length, d), n_proj))
        trace.append(TraceRow("(S)TW-MSA", "Key Projection", (b, length, d), n_proj))
        trace.append(TraceRow("(S)TW-MSA", "Value Projection", (b, length, d), n_proj))
    heads = windowed_attention(qt, kt, vt, cfg.window_size, cfg.n_heads)
    if trace is not None:
        score_shape = (b, cfg.n_heads, length // cfg.window_size,
                       cfg.window_size, cfg.window_size)
        trace.append(TraceRow("(S)TW-MSA", "Attention Score", score_shape, 0))
    out = linear(heads, p[prefix + ".proj.weight"], p[prefix + ".proj.bias"])
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Projection", out.shape, d * d + d))
        trace.append(TraceRow("(S)TW-MSA", "Concatenate", out.shape, 0))
    if shift:
        out = roll(out, shift, axis=1)
    res = f + out
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Residual Add", res.shape, 0))
    return res


def tw_msa(f: Tensor, p: ModelParams, prefix: str,
           trace: list[TraceRow] | None = None) -> Tensor:
    """Window attention over aligned windows, with residual."""
    return _attention_sublayer(f, p, prefix, shift=0, trace=trace)


def stw_msa(f: Tensor, p: ModelParams, prefix: str,
            trace: list[TraceRow] | None = None) -> Tensor:
    """Window attention on the half-window-rolled sequence, rolled back.

    The cyclic roll lets positions near window edges attend across the
    boundary; no mask is applied at the wrap-around seam.
    """
    return _attention_sublayer(f, p, prefix, shift=p.cfg.window_size // 2, trace=trace)


def mlp_block(f: Tensor, p: ModelParams, prefix: str,
              trace: list[TraceRow] | None = None) -> Tensor:
    """LN -> linear to mlp_hidden -> GELU -> linear back, with residual."""
    d = f.shape[-1]
    y = layer_norm(f, p[prefix + ".mlp_norm.gamma"], p[prefix + ".mlp_norm.beta"])
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Layer Norm", y.shape, 2 * d))
    h = linear(y, p[prefix + ".mlp.fc1.weight"], p[prefix + ".mlp.fc1.bias"])
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Linear", h.shape,
                              p[prefix + ".mlp.fc1.weight"].size
                              + p[prefix + ".mlp.fc1.bias"].size))
    h = gelu(h)
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "GELU", h.shape, 0))
    h = linear(h, p[prefix + ".mlp.fc2.weight"], p[prefix + ".mlp.fc2.bias"])
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Linear", h.shape,
                              p[prefix + ".mlp.fc2.weight"].size
                              + p[prefix + ".mlp.fc2.bias"].size))
    res = f + h
    if trace is not None:
        trace.append(TraceRow("(S)TW-MSA", "Residual Add", res.shape, 0))
    return res


def forward(x, p: ModelParams, mode: str = "train",
            trace: list[TraceRow] | None = None) -> tuple[Tensor, Tensor]:
    """Full network: returns (class probabilities [B,2], embedding [B,E]).

    The embedding is the flattened log band-power map that feeds the
    classifier; the contrastive loss measures distances on it.
    """
    cfg = p.cfg
    x = Tensor.lift(x)
    if trace is not None:
        trace.append(TraceRow("Input", "Input", x.shape, 0))
    f = feature_extract(x, p, mode=mode, trace=trace)
    for blk in range(cfg.n_blocks):
        f = tw_msa(f, p, _stage_names(blk, "tw"), trace=trace)
        f = mlp_block(f, p, _stage_names(blk, "tw"), trace=trace)
        f = stw_msa(f, p, _stage_names(blk, "stw"), trace=trace)
        f = mlp_block(f, p, _stage_names(blk, "stw"), trace=trace)
    h = transpose(f, (0, 2, 1))  # [B,D,L]
    h = square(h)
    h = avg_pool_time(h, cfg.pool_kernel, cfg.pool_stride)
    if trace is not None:
        trace.append(TraceRow("Classification Block", "Average Pool", h.shape, 0))
    h = log(h + LOG_EPS)
    if trace is not None:
        trace.append(TraceRow("Classification Block", "Log", h.shape, 0))
    embedding = reshape(h, (x.shape[0], cfg.embedding_dim))
    z = linear(embedding, p["classifier.fc1.weight"], p["classifier.fc1.bias"])
    if trace is not None:
        trace.append(TraceRow("Classification Block", "Linear1", z.shape,
                              p["classifier.fc1.weight"].size
                              + p["classifier.fc1.bias"].size))
    z = gelu(z)
    if trace is not None:
        trace.append(TraceRow("Classification Block", "Gelu", z.shape, 0))
    z = linear(z, p["classifier.fc2.weight"], p["classifier.fc2.bias"])
    if trace is not None:
        trace.append(TraceRow("Classification Block", "Linear2", z.shape,
                              p["classifier.fc2.weight"].size
                              + p["classifier.fc2.bias"].size))
    probs = softmax_lastdim(z)
    return probs, embedding


def fuse_mirror_predictions(p_orig: np.ndarray, p_mirror: np.ndarray) -> np.ndarray:
    """Average original predictions with class-swapped mirror predictions.

    The mirror of a trial carries the opposite label, so its left/right
    probabilities are interchanged before averaging:
    fused_left = (orig_left + mirror_right) / 2, and symmetrically for right.
    """
    p_orig = np.asarray(p_orig, dtype=DTYPE)
    p_mirror = np.asarray(p_mirror, dtype=DTYPE)
    if p_orig.shape != p_mirror.shape:
        raise DimensionError(
            f"prediction shapes differ: {p_orig.shape} vs {p_mirror.shape}"
        )
    if p_orig.ndim != 2 or p_orig.shape[1] != 2:
        raise DimensionError(f"expected [B,2] probabilities, got {p_orig.shape}")
    return (p_orig + p_mirror[:, ::-1]) / 2.0


# ---------------------------------------------------------------------------
# reference layer table and conformance
# ---------------------------------------------------------------------------

# Published layer-by-layer reference for the default architecture at batch
# size 100.  One row is a known discrepancy: the reference lists Linear1 with
# 109640 parameters, but its own flatten width (40 channels x 69 pooled
# steps = 2760) forces 2760*40 + 40 = 110440; the flatten arithmetic wins
# and the conformance report marks that single row KNOWN-DEVIATION.
REFERENCE_BATCH = 100
REFERENCE_LAYER_TABLE: list[tuple[str, str, tuple[int, ...], int]] = [
    ("Input", "Input", (100, 1, 1120, 3), 0),
    ("Feature Extraction Block", "Temporal Conv", (100, 40, 1096, 3), 1040),
    ("Feature Extraction Block", "Spatial Filter", (100, 40, 1096, 1), 4840),
    ("Feature Extraction Block", "Feature Normalization", (100, 40, 1096, 1), 80),
    ("Feature Extraction Block", "Rearrange", (100, 1096, 40), 0),
    ("(S)TW-MSA", "Layer Norm", (100, 1096, 40), 80),
    ("(S)TW-MSA", "Query Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Key Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Value Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Attention Score", (100, 8, 137, 8, 8), 0),
    ("(S)TW-MSA", "Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Concatenate", (100, 1096, 40), 0),
    ("(S)TW-MSA", "Residual Add", (100, 1096, 40), 0),
    ("(S)TW-MSA", "Layer Norm", (100, 1096, 40), 80),
    ("(S)TW-MSA", "Linear", (100, 1096, 160), 6560),
    ("(S)TW-MSA", "GELU", (100, 1096, 160), 0),
    ("(S)TW-MSA", "Linear", (100, 1096, 40), 6440),
    ("(S)TW-MSA", "Residual Add", (100, 1096, 40), 0),
    ("(S)TW-MSA", "Layer Norm", (100, 1096, 40), 80),
    ("(S)TW-MSA", "Query Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Key Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Value Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Attention Score", (100, 8, 137, 8, 8), 0),
    ("(S)TW-MSA", "Projection", (100, 1096, 40), 1640),
    ("(S)TW-MSA", "Concatenate", (100, 1096, 40), 0),
    ("(S)TW-MSA", "Residual Add", (100, 1096, 40), 0),
    ("(S)TW-MSA", "Layer Norm", (100, 1096, 40), 80),
    ("(S)TW-MSA", "Linear", (100, 1096, 160), 6560),
    ("(S)TW-MSA", "GELU", (100, 1096, 160), 0),
    ("(S)TW-MSA", "Linear", (100, 1096, 40), 6440),
    ("(S)TW-MSA", "Residual Add", (100, 1096, 40), 0),
    ("Classification Block", "Average Pool", (100, 40, 69), 0),
    ("Classification Block", "Log", (100, 40, 69), 0),
    ("Classification Block", "Linear1", (100, 40), 109640),
    ("Classification Block", "Gelu", (100, 40), 0),
    ("Classification Block", "Linear2", (100, 2), 82),
]

# (layer name, implemented count, reference count) triples that are accepted
# as documented deviations rather than failures.
KNOWN_DEVIATIONS: set[tuple[str, int, int]] = {("Linear1", 110440, 109640)}


@dataclass
class ConformanceRow:
    block: str
    layer: str
    shape: tuple[int, ...]
    params: int
    expected_shape: tuple[int, ...]
    expected_params: int
    status: str  # PASS | KNOWN-DEVIATION | FAIL


def trace_shapes(p: ModelParams, batch: int = 2) -> list[TraceRow]:
    """Run one inference-mode forward pass and collect the layer table."""
    cfg = p.cfg
    x = Tensor(np.zeros((batch, 1, cfg.n_samples, cfg.n_channels)))
    rows: list[TraceRow] = []
    with no_grad():
        forward(x, p, mode="eval", trace=rows)
    return rows


def conformance_report(p: ModelParams, batch: int = 2) -> list[ConformanceRow]:
    """Compare the traced layer table against the embedded reference.

    The trace runs at a small batch; batch axes are rescaled to the
    reference batch before comparison, so conformance is batch-independent.
    """
    rows = trace_shapes(p, batch=batch)
    if len(rows) != len(REFERENCE_LAYER_TABLE):
        raise ConfigurationError(
            f"reference table applies to the default architecture "
            f"({len(REFERENCE_LAYER_TABLE)} rows), model produced {len(rows)} rows"
        )
    report = []
    for got, (blk, layer, exp_shape, exp_params) in zip(rows, REFERENCE_LAYER_TABLE):
        shape = (REFERENCE_BATCH,) + tuple(got.shape[1:])
        if shape == exp_shape and got.params == exp_params:
            status = "PASS"
        elif shape == exp_shape and (layer, got.params, exp_params) in KNOWN_DEVIATIONS:
            status = "KNOWN-DEVIATION"
        else:
            status = "FAIL"
        report.append(ConformanceRow(blk, layer, shape, got.params,
                                     exp_shape, exp_params, status))
    return report


def param_report(p: ModelParams, batch: int = REFERENCE_BATCH) -> list[TraceRow]:
    """Layer table with shapes relabeled to the requested batch size."""
    rows = trace_shapes(p, batch=2)
    return [TraceRow(r.block, r.layer, (batch,) + tuple(r.shape[1:]), r.params)
            for r in rows]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(p: ModelParams, path) -> None:
    """Write a JSON manifest at ``path`` and the raw payload at ``path.bin``.

    The payload is every parameter plus the batch-norm running statistics,
    little-endian float64, concatenated; the manifest records name, shape,
    byte offset, and trainability for each entry.
    """
    path = Path(path)
    entries = []
    chunks = []
    offset = 0
    stored = dict(p.params)
    stored["feature.norm.running_mean"] = Tensor(p.bn.running_mean)
    stored["feature.norm.running_var"] = Tensor(p.bn.running_var)
    for name, t in stored.items():
        raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        entries.append({
            "name": name,
            "shape": list(t.shape),
            "offset": offset,
            "trainable": bool(t.requires_grad),
        })
        chunks.append(raw)
        offset += len(raw)
    payload_path = path.with_name(path.name + ".bin")
    manifest = {
        "format": CHECKPOINT_TAG,
        "dtype": "<f8",
        "payload": payload_path.name,
        "config": asdict(p.cfg),
        "batch_norm": {"momentum": p.bn.momentum, "eps": p.bn.eps},
        "params": entries,
    }
    path.write_text(json.dumps(manifest, indent=1))
    payload_path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"unreadable checkpoint manifest: {exc}") from None
    tag = manifest.get("format")
    if tag != CHECKPOINT_TAG:
        raise DataFormatError(f"unknown checkpoint format {tag!r}, expected {CHECKPOINT_TAG!r}")
    if manifest.get("dtype") != "<f8":
        raise DataFormatError(f"unsupported dtype {manifest.get('dtype')!r}")
    try:
        cfg = SwtConfig(**manifest["config"])
    except TypeError as exc:
        raise DataFormatError(f"checkpoint config does not match SwtConfig: {exc}") from None
    payload = path.with_name(manifest["payload"]).read_bytes()
    tensors: dict[str, Tensor] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start, end = entry["offset"], entry["offset"] + 8 * count
        if end > len(payload):
            raise DataFormatError(
                f"payload truncated: {entry['name']} needs bytes [{start},{end}) "
                f"but payload holds {len(payload)}"
            )
        data = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape)
        tensors[entry["name"]] = Tensor(data.copy(), requires_grad=entry["trainable"])
    bn_meta = manifest.get("batch_norm", {})
    bn = BatchNormState(
        running_mean=tensors.pop("feature.norm.running_mean").data,
        running_var=tensors.pop("feature.norm.running_var").data,
        momentum=float(bn_meta.get("momentum", 0.1)),
        eps=float(bn_meta.get("eps", 1e-5)),
    )
    params = ModelParams(cfg=cfg, params=tensors, bn=bn)
    missing = set(init_model(cfg, seed=0).params) - set(tensors)
    if missing:
        raise DataFormatError(f"checkpoint is missing parameters: {sorted(missing)}")
    return params
