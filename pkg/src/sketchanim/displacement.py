"""Per-group displacement prediction.

One independent model instance per semantic group. The forward pass embeds
the group's coarse control points, adds coordinate-frequency spatial encoding
and frame-index temporal encoding, fuses in rendered-frame context through
stacked attention blocks, and feeds two heads:

- a local head producing per-point offsets, and
- a global head producing one affine transform per frame (scale, shear,
  rotation, translation applied sequentially about the coarse frame
  centroid), each component modulated by a user-tunable gain.

Both heads' final layers are zero-initialized, so at step 0 the refined
animation equals the coarse animation bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ValidationError
from .geometry import normalize_array
from .motion import GroupTensor

_LN_EPS = 1e-5


@dataclass(frozen=True)
class DisplacementConfig:
    hidden_dim: int = 128
    attn_layers: int = 6
    attn_heads: int = 4
    spatial_bands: int = 8
    patch_grid: int = 16
    scale_gain: float = 5e-2
    shear_gain: float = 1e-1
    rotate_gain: float = 1e-2
    translate_gain: float = 1e-2

    def __post_init__(self):
        if self.hidden_dim % (2 * self.attn_heads) != 0:
            raise ValidationError(
                f"hidden_dim {self.hidden_dim} must be divisible by "
                f"2 * attn_heads ({2 * self.attn_heads})")
        for name in ("scale_gain", "shear_gain", "rotate_gain", "translate_gain"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if min(self.attn_layers, self.attn_heads, self.spatial_bands,
               self.patch_grid) < 1:
            raise ValidationError("network sizes must be positive")


@dataclass
class AffineParams:
    """Per-frame transform parameters, raw and after gain modulation."""

    raw: np.ndarray  # (K, 6): scale_x, scale_y, shear, angle, tx, ty
    scale_x: np.ndarray
    scale_y: np.ndarray
    shear: np.ndarray
    angle: np.ndarray
    translate: np.ndarray  # (K, 2)


@dataclass
class GroupForward:
    """Everything a refinement step needs from one group's forward pass."""

    refined: Tensor  # (N, K, 2) canvas units
    local_delta: Tensor
    global_delta: Tensor
    affine: AffineParams
    parts: dict[str, Tensor] = field(default_factory=dict)


def temporal_encoding_vector(k: int, d: int) -> np.ndarray:
    """Frame-index encoding: even dims sin(k / 10000^(2j/d)), odd dims cos."""
    j = np.arange(d // 2)
    rates = 1.0 / np.power(10000.0, 2.0 * j / d)
    out = np.empty(d)
    out[0::2] = np.sin(k * rates)
    out[1::2] = np.cos(k * rates)
    return out


def temporal_encoding_table(frame_count: int, d: int) -> np.ndarray:
    return np.stack([temporal_encoding_vector(k, d)
                     for k in range(1, frame_count + 1)], axis=0)


def spatial_encoding(norm_points: np.ndarray, bands: int) -> np.ndarray:
    """Coordinate frequency features (sin/cos of 2^l pi x and y), (..., 4L)."""
    x = norm_points[..., 0:1]
    y = norm_points[..., 1:2]
    freqs = (2.0 ** np.arange(bands)) * np.pi
    parts = []
    for f in freqs:
        parts.extend([np.sin(f * x), np.cos(f * x), np.sin(f * y), np.cos(f * y)])
    return np.concatenate(parts, axis=-1)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return x @ w + b


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.mean(centered * centered, axis=-1, keepdims=True)
    return centered / ad.sqrt(var + _LN_EPS) * gain + bias


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., T, d) -> (..., heads, T, d/heads)."""
    *batch, t, d = x.shape
    x = ad.reshape(x, (*batch, t, heads, d // heads))
    axes = tuple(range(len(batch))) + (len(batch) + 1, len(batch), len(batch) + 2)
    return ad.transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    *batch, heads, t, dh = x.shape
    axes = tuple(range(len(batch))) + (len(batch) + 1, len(batch), len(batch) + 2)
    return ad.reshape(ad.transpose(x, axes), (*batch, t, heads * dh))


def _attention(q: Tensor, k: Tensor, v: Tensor, heads: int,
               probs_sink: list | None = None) -> Tensor:
    """Scaled dot-product attention over the second-to-last axis."""
    qh, kh, vh = (_split_heads(t, heads) for t in (q, k, v))
    dh = qh.shape[-1]
    scores = (qh @ ad.transpose(kh, tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2)))
    probs = ad.softmax(scores * (1.0 / np.sqrt(dh)), axis=-1)
    if probs_sink is not None:
        probs_sink.append(probs)
    return _merge_heads(probs @ vh)


class GroupDisplacementModel:
    """Displacement predictor owned by a single semantic group."""

    def __init__(self, cfg: DisplacementConfig, canvas_w: float, canvas_h: float,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.canvas_w = canvas_w
        self.canvas_h = canvas_h
        self.params: dict[str, Tensor] = {}
        d = cfg.hidden_dim

        def param(name: str, shape: tuple[int, ...], fan_in: int | None = None,
                  ones: bool = False) -> Tensor:
            if fan_in:
                bound = np.sqrt(1.0 / fan_in)
                values = rng.uniform(-bound, bound, size=shape)
            else:
                values = np.ones(shape) if ones else np.zeros(shape)
            t = Tensor(values, requires_grad=True)
            self.params[name] = t
            return t

        param("embed.w0", (2, d), fan_in=2)
        param("embed.b0", (d,))
        param("embed.w1", (d, d), fan_in=d)
        param("embed.b1", (d,))
        param("spatial.w", (4 * cfg.spatial_bands, d), fan_in=4 * cfg.spatial_bands)
        param("spatial.b", (d,))
        param("context.w", (3, d), fan_in=3)
        param("context.b", (d,))
        for i in range(cfg.attn_layers):
            p = f"block{i}."
            for ln in ("tnorm", "qnorm", "kvnorm", "fnorm"):
                param(p + ln + ".g", (d,), ones=True)
                param(p + ln + ".b", (d,))
            for proj in ("t", "x"):
                for mat in ("wq", "wk", "wv", "wo"):
                    param(p + proj + mat, (d, d), fan_in=d)
                for bias in ("bq", "bk", "bv", "bo"):
                    param(p + proj + bias, (d,))
            param(p + "ff.w0", (d, 2 * d), fan_in=d)
            param(p + "ff.b0", (2 * d,))
            param(p + "ff.w1", (2 * d, d), fan_in=2 * d)
            param(p + "ff.b1", (d,))
        param("local.w0", (d, d), fan_in=d)
        param("local.b0", (d,))
        param("local.w1", (d, 2))  # zero-init output heads: step-0 identity
        param("local.b1", (2,))
        param("global.w0", (d, d), fan_in=d)
        param("global.b0", (d,))
        param("global.w1", (d, 6))
        param("global.b1", (6,))

    # parameter bookkeeping -------------------------------------------------

    def local_param_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("local.")]

    def global_param_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("global.")]

    def shared_param_names(self) -> list[str]:
        return [n for n in self.params
                if not n.startswith(("local.", "global."))]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise CheckpointError(f"parameter name mismatch: {sorted(missing)[:4]}")
        for name, values in state.items():
            current = self.params[name]
            if current.values.shape != values.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: "
                    f"{values.shape} vs {current.values.shape}")
            current.values = np.asarray(values, dtype=np.float64).copy()

    # forward pieces --------------------------------------------------------

    def embed(self, norm_points: np.ndarray) -> Tensor:
        """Two-layer perceptron lifting 2D coordinates to hidden_dim."""
        x = Tensor(norm_points)
        p = self.params
        h = ad.leaky_relu(_linear(x, p["embed.w0"], p["embed.b0"]))
        return _linear(h, p["embed.w1"], p["embed.b1"])

    def frame_positional_encoding(self, embedded: Tensor,
                                  norm_points: np.ndarray) -> Tensor:
        """Add projected coordinate-frequency terms and the frame-index term."""
        p = self.params
        spatial = Tensor(spatial_encoding(norm_points, self.cfg.spatial_bands))
        temporal = temporal_encoding_table(norm_points.shape[1], self.cfg.hidden_dim)
        return embedded + _linear(spatial, p["spatial.w"], p["spatial.b"]) + temporal

    def motion_context(self, encoded: Tensor, context_feats: np.ndarray,
                       probs_sink: list | None = None) -> Tensor:
        """Fuse rendered-frame context into the point tokens.

        ``context_feats`` is (K, G, 3) patch features from the merged coarse
        animation, fixed for the whole optimization. Per block: temporal
        self-attention over each patch's K feature rows, cross-attention with
        the frame's point tokens as queries, then a feedforward, all
        pre-normalized with residual connections.
        """
        n, k, d = encoded.shape
        if context_feats.ndim != 3 or context_feats.shape[0] != k \
                or context_feats.shape[2] != 3:
            raise ValidationError(
                f"context features must be ({k}, G, 3), got {context_feats.shape}")
        if context_feats.shape[1] != self.cfg.patch_grid ** 2:
            raise ValidationError(
                f"context grid mismatch: expected {self.cfg.patch_grid ** 2} "
                f"tokens, got {context_feats.shape[1]}")
        p = self.params
        heads = self.cfg.attn_heads
        ctx = _linear(Tensor(context_feats), p["context.w"], p["context.b"])  # (K,G,d)
        vec = ad.transpose(encoded, (1, 0, 2))  # (K,N,d)

        for i in range(self.cfg.attn_layers):
            b = f"block{i}."
            # temporal self-attention over frames, batched per patch token
            ctx_t = ad.transpose(ctx, (1, 0, 2))  # (G,K,d)
            normed = _layer_norm(ctx_t, p[b + "tnorm.g"], p[b + "tnorm.b"])
            attended = _attention(
                _linear(normed, p[b + "twq"], p[b + "tbq"]),
                _linear(normed, p[b + "twk"], p[b + "tbk"]),
                _linear(normed, p[b + "twv"], p[b + "tbv"]),
                heads, probs_sink)
            ctx_t = ctx_t + _linear(attended, p[b + "two"], p[b + "tbo"])
            ctx = ad.transpose(ctx_t, (1, 0, 2))

            # per-frame cross-attention: point tokens query context tokens
            q_in = _layer_norm(vec, p[b + "qnorm.g"], p[b + "qnorm.b"])
            kv_in = _layer_norm(ctx, p[b + "kvnorm.g"], p[b + "kvnorm.b"])
            attended = _attention(
                _linear(q_in, p[b + "xwq"], p[b + "xbq"]),
                _linear(kv_in, p[b + "xwk"], p[b + "xbk"]),
                _linear(kv_in, p[b + "xwv"], p[b + "xbv"]),
                heads, probs_sink)
            vec = vec + _linear(attended, p[b + "xwo"], p[b + "xbo"])

            f_in = _layer_norm(vec, p[b + "fnorm.g"], p[b + "fnorm.b"])
            hidden = ad.leaky_relu(_linear(f_in, p[b + "ff.w0"], p[b + "ff.b0"]))
            vec = vec + _linear(hidden, p[b + "ff.w1"], p[b + "ff.b1"])

        return ad.transpose(vec, (1, 0, 2))  # (N,K,d)

    def local_offsets(self, fused: Tensor) -> Tensor:
        """Per-token offsets in canvas units; exactly zero at initialization."""
        p = self.params
        h = ad.leaky_relu(_linear(fused, p["local.w0"], p["local.b0"]))
        normalized = _linear(h, p["local.w1"], p["local.b1"])
        return normalized * np.array([self.canvas_w / 2.0, self.canvas_h / 2.0])

    def frame_affine(self, fused: Tensor, coarse_points: np.ndarray
                     ) -> tuple[Tensor, AffineParams, dict[str, Tensor]]:
        """Per-frame affine displacement about the coarse frame centroid.

        Scale, shear, rotation, translation are applied in that order; each
        component is modulated by its gain, so a zero gain forces that
        component to the identity exactly.
        """
        cfg = self.cfg
        p = self.params
        pooled = ad.mean(fused, axis=0)  # (K, d)
        h = ad.leaky_relu(_linear(pooled, p["global.w0"], p["global.b0"]))
        raw = _linear(h, p["global.w1"], p["global.b1"])  # (K, 6)

        sx = raw[:, 0] * cfg.scale_gain + 1.0
        sy = raw[:, 1] * cfg.scale_gain + 1.0
        shear = raw[:, 2] * cfg.shear_gain
        angle = raw[:, 3] * cfg.rotate_gain
        tx = raw[:, 4] * cfg.translate_gain
        ty = raw[:, 5] * cfg.translate_gain
        c = ad.cos(angle)
        s = ad.sin(angle)

        # linear part of Rotate(angle) Shear(shear) Scale(sx, sy), minus I
        l00m1 = c * sx - 1.0
        l01 = sy * (c * shear - s)
        l10 = s * sx
        l11m1 = sy * (s * shear + c) - 1.0

        centroid = coarse_points.mean(axis=0)  # (K, 2)
        dx = coarse_points[:, :, 0] - centroid[:, 0]  # (N, K)
        dy = coarse_points[:, :, 1] - centroid[:, 1]
        delta_x = l00m1 * dx + l01 * dy + tx
        delta_y = l10 * dx + l11m1 * dy + ty
        delta = ad.stack([delta_x, delta_y], axis=2)

        affine = AffineParams(raw=raw.values.copy(), scale_x=sx.values.copy(),
                              scale_y=sy.values.copy(), shear=shear.values.copy(),
                              angle=angle.values.copy(),
                              translate=np.stack([tx.values, ty.values], axis=1))
        parts = {"translate_x": tx, "translate_y": ty, "angle": angle,
                 "scale_x": sx, "scale_y": sy, "shear": shear}
        return delta, affine, parts

    def predict(self, group: GroupTensor, context_feats: np.ndarray) -> GroupForward:
        """Full forward pass: refined points = coarse + local + global."""
        coarse = np.asarray(group.points)
        norm = normalize_array(coarse, self.canvas_w, self.canvas_h)
        fused = self.motion_context(
            self.frame_positional_encoding(self.embed(norm), norm), context_feats)
        local_delta = self.local_offsets(fused)
        global_delta, affine, parts = self.frame_affine(fused, coarse)
        refined = local_delta + global_delta + coarse
        return GroupForward(refined=refined, local_delta=local_delta,
                            global_delta=global_delta, affine=affine, parts=parts)


# ---------------------------------------------------------------------------
# checkpoint container: magic, version, then name/shape/little-endian doubles

_MAGIC = b"SKCP"
_VERSION = 1


def save_params(params: dict[str, np.ndarray]) -> bytes:
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(params))]
    for name in sorted(params):
        values = np.ascontiguousarray(params[name], dtype=np.float64)
        encoded = name.encode()
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.astype("<f8").tobytes())
    return b"".join(chunks)


def load_params(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != _MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version, count = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    pos = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode()
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            n_bytes = 8 * int(np.prod(shape)) if ndim else 8
            values = np.frombuffer(data[pos:pos + n_bytes], dtype="<f8")
            if values.size != int(np.prod(shape)):
                raise CheckpointError("truncated checkpoint data")
            pos += n_bytes
            out[name] = values.reshape(shape).astype(np.float64)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e
    return out
