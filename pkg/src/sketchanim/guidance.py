"""Loss assembly: built-in surrogate priors and the remote gradient bridge.

The surrogate losses run fully locally and are exactly invariant where they
should be: trajectory adherence ignores per-point detail (centroids only),
shape preservation is zero under rigid motions, smoothness is zero for
motion affine in time.

Richer motion priors live behind an HTTP wire contract: the engine POSTs
rendered frames and receives d(loss)/d(pixel) grids, which it injects as
upstream gradients at the rasterizer outputs; the chain rule to control
points and network parameters is automatic. A reference stub server ships in
:mod:`sketchanim.stub_prior`.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import httpx
import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import RemotePriorError, ValidationError
from .motion import GroupTensor

logger = logging.getLogger(__name__)

_DIST_EPS = 1e-12  # keeps sqrt differentiable if control points coincide

ENDPOINT_ENV = "SKETCHANIM_REMOTE_PRIOR"
TIMEOUT_ENV = "SKETCHANIM_REMOTE_TIMEOUT"
DEFAULT_TIMEOUT = 120.0


@dataclass(frozen=True)
class GuidanceConfig:
    """Loss weights plus the optional remote scorer endpoint."""

    w_traj: float = 1.0
    w_shape: float = 0.5
    w_smooth: float = 0.1
    w_remote: float = 1.0
    prompt: str = ""
    remote_endpoint: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    pixel_target: np.ndarray | None = None  # native pixel-MSE prior (K, H, W)

    def __post_init__(self):
        weights = (self.w_traj, self.w_shape, self.w_smooth, self.w_remote)
        if any(w < 0 for w in weights):
            raise ValidationError("loss weights must be >= 0")
        if not any(w > 0 for w in weights):
            raise ValidationError("at least one loss weight must be positive")


def resolve_endpoint(cfg: GuidanceConfig) -> str | None:
    return cfg.remote_endpoint or os.environ.get(ENDPOINT_ENV) or None


def resolve_timeout(cfg: GuidanceConfig) -> float:
    raw = os.environ.get(TIMEOUT_ENV)
    return float(raw) if raw else cfg.timeout


def trajectory_loss(refined: list[Tensor], targets: list[np.ndarray]) -> Tensor:
    """Mean squared distance between refined and target group centroids."""
    if len(refined) != len(targets):
        raise ValidationError("trajectory loss needs one target per group")
    terms = []
    for tensor, target in zip(refined, targets):
        diff = ad.mean(tensor, axis=0) - np.asarray(target).mean(axis=0)  # (K, 2)
        terms.append(ad.tensor_sum(diff * diff, axis=1))
    return ad.mean(ad.concat(terms, axis=0))


def _stroke_pair_slices(group: GroupTensor) -> list[tuple[slice, slice]]:
    pairs = []
    for sl in group.member_slices():
        pairs.append((slice(sl.start, sl.stop - 1), slice(sl.start + 1, sl.stop)))
    return pairs


def shape_loss(refined: Tensor, group: GroupTensor) -> Tensor:
    """Deviation of consecutive-point distances from the initial frame.

    Exactly zero under rigid motion of the whole group (translations and
    rotations preserve distances).
    """
    if group.point_count < 2:
        raise ValidationError("shape loss needs at least 2 points")
    initial = np.asarray(group.points)[:, 0, :]
    terms = []
    for a, b in _stroke_pair_slices(group):
        ref_diff = initial[a] - initial[b]
        ref = np.sqrt((ref_diff * ref_diff).sum(axis=-1) + _DIST_EPS)  # (P-1,)
        seg = refined[a, :, :] - refined[b, :, :]  # (P-1, K, 2)
        dist = ad.sqrt(ad.tensor_sum(seg * seg, axis=2) + _DIST_EPS)
        dev = dist - ref[:, None]
        terms.append(ad.reshape(dev * dev, (-1,)))
    return ad.mean(ad.concat(terms, axis=0))


def smoothness_loss(refined: list[Tensor]) -> Tensor:
    """Mean squared second difference along the frame axis."""
    frame_count = refined[0].shape[1]
    if frame_count < 3:
        logger.warning("smoothness loss needs K >= 3; returning zero")
        return Tensor(0.0)
    terms = []
    for tensor in refined:
        second = tensor[:, 2:, :] - tensor[:, 1:-1, :] * 2.0 + tensor[:, :-2, :]
        terms.append(ad.reshape(ad.tensor_sum(second * second, axis=2), (-1,)))
    return ad.mean(ad.concat(terms, axis=0))


def pixel_mse_loss(frames: list[Tensor], target: np.ndarray) -> Tensor:
    """Mean squared pixel error over the whole sequence (native prior)."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape[0] != len(frames) or (len(frames) and
                                          target.shape[1:] != frames[0].shape):
        raise ValidationError(
            f"pixel target shape {target.shape} does not match frames")
    terms = []
    for k, frame in enumerate(frames):
        diff = frame - target[k]
        terms.append(ad.reshape(diff * diff, (-1,)))
    return ad.mean(ad.concat(terms, axis=0))


def total_loss(terms: dict[str, Tensor], cfg: GuidanceConfig
               ) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the differentiable terms plus a per-term report."""
    weights = {"traj": cfg.w_traj, "shape": cfg.w_shape, "smooth": cfg.w_smooth,
               "pixel": cfg.w_remote}
    total: Tensor | None = None
    report: dict[str, float] = {}
    for name, term in terms.items():
        w = weights.get(name)
        if w is None:
            raise ValidationError(f"unknown loss term {name!r}")
        contribution = term * w
        report[name] = float(contribution.item())
        total = contribution if total is None else total + contribution
    if total is None:
        total = Tensor(0.0)
    report["total"] = float(total.item())
    return total, report


# ---------------------------------------------------------------------------
# remote prior wire format: JSON header line, then frame-major row-major
# little-endian float32 pixels

def encode_payload(header: dict, frames: np.ndarray) -> bytes:
    body = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    return json.dumps(header).encode() + b"\n" + body


def decode_payload(data: bytes) -> tuple[dict, np.ndarray]:
    newline = data.find(b"\n")
    if newline < 0:
        raise RemotePriorError("malformed payload: missing header delimiter")
    try:
        header = json.loads(data[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise RemotePriorError(f"malformed payload header: {e}") from e
    try:
        k, h, w = int(header["k_frames"]), int(header["h"]), int(header["w"])
    except KeyError as e:
        raise RemotePriorError(f"payload header missing field {e}") from e
    raw = data[newline + 1:]
    expected = k * h * w * 4
    if len(raw) != expected:
        raise RemotePriorError(
            f"payload size mismatch: expected {expected} bytes, got {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(k, h, w)
    return header, values


class RemotePriorClient:
    """Synchronous client for the gradient endpoint (one request per step)."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def gradients(self, frames: np.ndarray, prompt: str, step: int) -> np.ndarray:
        """POST rendered frames, return d(loss)/d(pixel) with the same shape."""
        frames = np.asarray(frames, dtype=np.float64)
        k, h, w = frames.shape
        header = {"k_frames": k, "h": h, "w": w, "prompt": prompt, "step": step}
        try:
            response = self._client.post(f"{self.endpoint}/v1/gradient",
                                         content=encode_payload(header, frames))
            response.raise_for_status()
        except httpx.HTTPError as e:
            raise RemotePriorError(f"remote prior request failed: {e}") from e
        reply_header, grads = decode_payload(response.content)
        if (reply_header.get("k_frames"), reply_header.get("h"),
                reply_header.get("w")) != (k, h, w):
            raise RemotePriorError(
                f"remote prior returned mismatched shape {reply_header}")
        if not np.all(np.isfinite(grads)):
            raise RemotePriorError("remote prior returned non-finite gradients")
        return grads
