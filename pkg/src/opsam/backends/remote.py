"""HTTP client backends speaking wire protocol 1.

The client owns all geometry: images are letterboxed client-side to the
server's declared square input size (nearest-neighbor, anchored at the
top-left, zero padding right/bottom), prompt coordinates are mapped
into that frame, and returned masks are cropped and mapped back to the
original resolution. The server only ever sees fixed-size images.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from ..exceptions import (
    BackendError,
    PayloadShapeError,
    ProtocolError,
    ProtocolMismatchError,
    TransportError,
)
from ..grids import FeatureMap, ImageRGB, MaskGrid, Prior, resize_mask_to_patches, upsample_nearest
from ..prompting import PromptPoint
from .base import EncoderBackend, EncoderInfo, SegmenterBackend, SegmenterResult, SegmenterSession
from .wire import (
    PROTOCOL_VERSION,
    b64_to_floats,
    decode_b64,
    image_to_png_b64,
    png_b64_to_mask,
)

__all__ = ["Letterbox", "RemoteEncoder", "RemoteSegmenter", "echo_roundtrip"]


@dataclass(frozen=True)
class Letterbox:
    """Geometry of fitting a (src_h, src_w) image into a square of side
    `size`: the content is scaled to (content_h, content_w) preserving
    aspect ratio, pasted at the top-left, and padded with zeros."""

    src_h: int
    src_w: int
    size: int
    content_h: int
    content_w: int

    @classmethod
    def fit(cls, src_h: int, src_w: int, size: int) -> "Letterbox":
        if src_h < 1 or src_w < 1 or size < 1:
            raise ValueError("letterbox dimensions must be >= 1")
        scale = float(size) / float(max(src_h, src_w))
        content_h = min(size, max(1, int(np.floor(src_h * scale + 0.5))))
        content_w = min(size, max(1, int(np.floor(src_w * scale + 0.5))))
        return cls(src_h, src_w, size, content_h, content_w)

    def _rows(self) -> np.ndarray:
        return (np.arange(self.content_h) * self.src_h) // self.content_h

    def _cols(self) -> np.ndarray:
        return (np.arange(self.content_w) * self.src_w) // self.content_w

    def apply_image(self, image: ImageRGB) -> ImageRGB:
        if image.height != self.src_h or image.width != self.src_w:
            raise ValueError("image does not match letterbox source size")
        out = np.zeros((self.size, self.size, 3), dtype=np.uint8)
        out[: self.content_h, : self.content_w] = image.data[np.ix_(self._rows(), self._cols())]
        return ImageRGB(out)

    def apply_mask(self, mask: MaskGrid) -> MaskGrid:
        if mask.height != self.src_h or mask.width != self.src_w:
            raise ValueError("mask does not match letterbox source size")
        out = np.zeros((self.size, self.size), dtype=np.uint8)
        out[: self.content_h, : self.content_w] = mask.data[np.ix_(self._rows(), self._cols())]
        return MaskGrid(out)

    def map_point(self, x: int, y: int) -> tuple[int, int]:
        """Source pixel -> letterbox pixel (center of its scaled cell)."""
        if not (0 <= x < self.src_w and 0 <= y < self.src_h):
            raise ValueError(f"point ({x}, {y}) outside source frame")
        mx = min(self.content_w - 1, int(np.floor((x + 0.5) * self.content_w / self.src_w)))
        my = min(self.content_h - 1, int(np.floor((y + 0.5) * self.content_h / self.src_h)))
        return mx, my

    def unmap_grid(self, grid: np.ndarray) -> np.ndarray:
        """Letterbox-sized grid -> source-sized grid (nearest-neighbor on
        the content region; padding is discarded)."""
        a = np.asarray(grid)
        if a.shape[:2] != (self.size, self.size):
            raise ValueError(f"grid shape {a.shape} does not match letterbox size {self.size}")
        content = a[: self.content_h, : self.content_w]
        r = (np.arange(self.src_h) * self.content_h) // self.src_h
        c = (np.arange(self.src_w) * self.content_w) // self.src_w
        return content[np.ix_(r, c)]

    def unmap_mask(self, mask: MaskGrid) -> MaskGrid:
        return MaskGrid(self.unmap_grid(mask.data))


def _check_protocol(payload: dict) -> None:
    version = payload.get("protocol", PROTOCOL_VERSION)
    if version != PROTOCOL_VERSION:
        raise ProtocolMismatchError(
            f"server speaks protocol {version}, client speaks {PROTOCOL_VERSION}"
        )


class _HttpJson:
    """Tiny shared transport wrapper mapping failures to error classes."""

    def __init__(self, base_url: str, timeout: float, http: requests.Session | None) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = float(timeout)
        self.http = http or requests.Session()

    def request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.base_url + path
        try:
            resp = self.http.request(method, url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{method} {url} failed: {exc}") from exc
        if resp.status_code != 200:
            snippet = resp.text[:300]
            if resp.status_code == 400 and "protocol" in snippet.lower():
                raise ProtocolMismatchError(f"server rejected protocol version: {snippet}")
            raise ProtocolError(f"{method} {path} -> HTTP {resp.status_code}: {snippet}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{method} {path} returned non-JSON body") from exc
        if not isinstance(payload, dict):
            raise ProtocolError(f"{method} {path} returned a non-object JSON body")
        _check_protocol(payload)
        return payload


def echo_roundtrip(base_url: str, data: bytes, timeout: float = 30.0) -> bool:
    """Loopback health check: send bytes to /v1/echo, compare the digest
    of what comes back."""
    import base64

    transport = _HttpJson(base_url, timeout, None)
    sent = base64.b64encode(data).decode("ascii")
    resp = transport.request("POST", "/v1/echo", {"protocol": PROTOCOL_VERSION, "payload_b64": sent})
    returned = decode_b64(resp.get("payload_b64", ""), "echo payload")
    return hashlib.blake2b(returned).digest() == hashlib.blake2b(data).digest()


class RemoteEncoder(EncoderBackend):
    """Feature encoder behind POST /v1/encode.

    verify_repeat=True re-sends every encode request and insists on an
    identical payload, guarding against a nondeterministic server.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        http: requests.Session | None = None,
        verify_repeat: bool = False,
    ) -> None:
        self._t = _HttpJson(base_url, timeout, http)
        self._verify_repeat = verify_repeat
        caps = self._t.request("GET", "/v1/capabilities")
        try:
            self._patch = int(caps["patch"])
            self._input = int(caps["input_size"])
            self._dim = int(caps["d"])
            self._kinds = tuple(str(k) for k in caps["kinds"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed capabilities payload: {caps}") from exc
        if self._patch < 1 or self._input < self._patch or self._dim < 1 or not self._kinds:
            raise ProtocolError(f"implausible capabilities: {caps}")
        if self._input % self._patch:
            raise ProtocolError(
                f"input_size {self._input} not divisible by patch {self._patch}"
            )
        self._meta = {k: str(v) for k, v in caps.items() if isinstance(v, (str, int, float))}

    def info(self) -> EncoderInfo:
        return EncoderInfo(
            name=f"remote:{self._t.base_url}",
            patch=self._patch,
            input_size=self._input,
            dim=self._dim,
            kinds=self._kinds,
            meta=self._meta,
        )

    def grid_for(self, height: int, width: int) -> tuple[int, int]:
        side = self._input // self._patch
        return side, side

    def _encode_once(self, image: ImageRGB, kinds: Sequence[str]) -> dict:
        letterbox = Letterbox.fit(image.height, image.width, self._input)
        return self._t.request(
            "POST",
            "/v1/encode",
            {
                "protocol": PROTOCOL_VERSION,
                "image_png_b64": image_to_png_b64(letterbox.apply_image(image)),
                "embedding_kinds": list(kinds),
            },
        )

    def encode(
        self, image: ImageRGB, kinds: Sequence[str] | None = None
    ) -> dict[str, FeatureMap]:
        wanted = tuple(kinds) if kinds is not None else self._kinds
        unknown = [k for k in wanted if k not in self._kinds]
        if unknown:
            raise ProtocolError(f"server does not offer embedding kinds {unknown}")
        resp = self._encode_once(image, wanted)
        if self._verify_repeat:
            again = self._encode_once(image, wanted)
            if again != resp:
                raise BackendError("server returned different payloads for a repeated encode")
        try:
            h, w, d = int(resp["h"]), int(resp["w"]), int(resp["d"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"encode response missing h/w/d: {sorted(resp)}") from exc
        side = self._input // self._patch
        if (h, w, d) != (side, side, self._dim):
            raise PayloadShapeError(
                f"encode returned grid {h}x{w}x{d}, capabilities promised {side}x{side}x{self._dim}"
            )
        out: dict[str, FeatureMap] = {}
        for kind in wanted:
            key = f"{kind}_f32le_b64"
            if key not in resp:
                raise ProtocolError(f"encode response missing {key}")
            values = b64_to_floats(resp[key], h * w * d, what=key)
            out[kind] = FeatureMap(h, w, values.reshape(h * w, d))
        return out

    def pool_mask(self, mask: MaskGrid) -> Prior:
        letterbox = Letterbox.fit(mask.height, mask.width, self._input)
        side = self._input // self._patch
        return resize_mask_to_patches(letterbox.apply_mask(mask), side, side)

    def prior_to_pixels(self, prior: Prior, height: int, width: int) -> np.ndarray:
        letterbox = Letterbox.fit(height, width, self._input)
        return letterbox.unmap_grid(upsample_nearest(prior, self._input, self._input))


class _RemoteSession(SegmenterSession):
    def __init__(self, transport: _HttpJson, session_id: str, image: ImageRGB, size: int) -> None:
        self._t = transport
        self._id = session_id
        self._letterbox = Letterbox.fit(image.height, image.width, size)
        self._image_b64 = image_to_png_b64(self._letterbox.apply_image(image))
        self._sent_image = False
        self._size = size

    def segment(self, prompts: Sequence[PromptPoint]) -> SegmenterResult:
        mapped = []
        for p in prompts:
            mx, my = self._letterbox.map_point(p.x, p.y)
            mapped.append({"x": mx, "y": my, "label": p.label})
        body = {"protocol": PROTOCOL_VERSION, "session_id": self._id, "prompts": mapped}
        if not self._sent_image:
            body["image_png_b64"] = self._image_b64
        resp = self._t.request("POST", "/v1/segment", body)
        self._sent_image = True
        if "mask_png_b64" not in resp or "predicted_iou" not in resp:
            raise ProtocolError(f"segment response missing fields: {sorted(resp)}")
        mask = png_b64_to_mask(resp["mask_png_b64"], expect_shape=(self._size, self._size))
        iou = float(resp["predicted_iou"])
        if not (0.0 <= iou <= 1.0) or not np.isfinite(iou):
            raise PayloadShapeError(f"predicted_iou out of range: {iou}")
        return SegmenterResult(mask=self._letterbox.unmap_mask(mask), predicted_iou=iou)


class RemoteSegmenter(SegmenterBackend):
    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        http: requests.Session | None = None,
    ) -> None:
        self._t = _HttpJson(base_url, timeout, http)
        caps = self._t.request("GET", "/v1/capabilities")
        try:
            self._size = int(caps["segmenter_input"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"capabilities missing segmenter_input: {caps}") from exc
        if self._size < 1:
            raise ProtocolError(f"implausible segmenter_input {self._size}")
        self._counter = itertools.count()

    def open(self, image: ImageRGB) -> _RemoteSession:
        digest = hashlib.blake2b(digest_size=8)
        digest.update(np.asarray(image.data.shape, dtype=np.int64).tobytes())
        digest.update(image.data.tobytes())
        session_id = f"{digest.hexdigest()}-{next(self._counter)}"
        return _RemoteSession(self._t, session_id, image, self._size)
