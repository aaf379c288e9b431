"""Foundation-model backends, loaded lazily on first use.

Nothing here imports torch at module import time, so the package stays
usable (stub models, protocol tools) on hosts without the ML stack.
Models run in eval mode under no_grad, which keeps repeated requests
byte-identical.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from typing import Sequence

import numpy as np

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class Dinov2Encoder:
    """DINOv2 patch embeddings plus Q/K/V taps on the last attention
    block. "value" is the output of the value projection, taken before
    attention mixing and before the output projection; "feats" is the
    final hidden state. Patch size is 14 for every DINOv2 variant."""

    patch = 14
    kinds = ("value", "query", "key", "feats")
    value_embedding = "pre-projection"

    def __init__(self, model_id: str, device: str, input_size: int) -> None:
        if input_size % self.patch != 0:
            raise ValueError(
                f"encoder input {input_size} is not a multiple of patch {self.patch}"
            )
        self.name = model_id
        self.input_size = input_size
        self._device = device
        self._model = None
        self._taps: dict[str, object] = {}
        self.dim = 0

    def _load(self) -> None:
        if self._model is not None:
            return
        import torch
        from transformers import AutoModel

        model = AutoModel.from_pretrained(self.name)
        model.eval().to(self._device)
        attention = model.encoder.layer[-1].attention.attention
        for kind in ("query", "key", "value"):
            layer = getattr(attention, kind)
            layer.register_forward_hook(self._make_tap(kind))
        self.dim = int(model.config.hidden_size)
        self._torch = torch
        self._model = model

    def _make_tap(self, kind: str):
        def hook(_module, _inputs, output):
            self._taps[kind] = output.detach()

        return hook

    def embed(self, image: np.ndarray, kinds: Sequence[str]) -> dict[str, np.ndarray]:
        self._load()
        torch = self._torch
        pixels = image.astype(np.float32) / 255.0
        pixels = (pixels - np.array(IMAGENET_MEAN, np.float32)) / np.array(
            IMAGENET_STD, np.float32
        )
        batch = torch.from_numpy(pixels).permute(2, 0, 1)[None].to(self._device)
        self._taps.clear()
        with torch.no_grad():
            outputs = self._model(pixel_values=batch)
        grabbed: dict[str, np.ndarray] = {}
        for kind in kinds:
            if kind == "feats":
                tensor = outputs.last_hidden_state
            else:
                tensor = self._taps[kind]
            # drop the CLS token; remaining rows are the patch grid
            grabbed[kind] = tensor[0, 1:].float().cpu().numpy()
        return grabbed


class Sam2Segmenter:
    """Point-prompted segmentation with the model's own IoU estimate.

    The image embedding is cached by image hash so one interactive
    session costs a single backbone pass. Of the candidate masks the one
    with the highest self-predicted IoU is returned, and its index is
    reported back in the response."""

    def __init__(self, model_id: str, device: str, input_size: int, cache_size: int = 4) -> None:
        self.name = model_id
        self.input_size = input_size
        self._device = device
        self._model = None
        self._cache: OrderedDict[bytes, object] = OrderedDict()
        self._cache_size = cache_size

    def _load(self) -> None:
        if self._model is not None:
            return
        import torch

        try:
            from transformers import Sam2Model, Sam2Processor
        except ImportError as exc:
            raise RuntimeError(
                "this transformers build has no SAM2 support; install a "
                "release that provides Sam2Model or serve --segmenter stub"
            ) from exc
        self._processor = Sam2Processor.from_pretrained(self.name)
        model = Sam2Model.from_pretrained(self.name)
        model.eval().to(self._device)
        self._torch = torch
        self._model = model

    def _image_features(self, image: np.ndarray):
        key = hashlib.blake2b(image.tobytes(), digest_size=16).digest()
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        with self._torch.no_grad():
            inputs = self._processor(images=image, return_tensors="pt").to(self._device)
            features = self._model.get_image_embeddings(inputs["pixel_values"])
        self._cache[key] = (inputs, features)
        while len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return self._cache[key]

    def predict(
        self, image: np.ndarray, points: Sequence[tuple[int, int]], labels: Sequence[int]
    ) -> tuple[np.ndarray, float, int]:
        self._load()
        torch = self._torch
        inputs, features = self._image_features(image)
        prompt = self._processor(
            images=image,
            input_points=[[list(p) for p in points]],
            input_labels=[list(labels)],
            return_tensors="pt",
        ).to(self._device)
        with torch.no_grad():
            outputs = self._model(
                image_embeddings=features,
                input_points=prompt["input_points"],
                input_labels=prompt["input_labels"],
                multimask_output=True,
            )
        scores = outputs.iou_scores[0, 0]
        choice = int(torch.argmax(scores).item())
        masks = self._processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"],
            binarize=True,
        )[0][0]
        mask = masks[choice].numpy().astype(bool)
        return mask, float(scores[choice].item()), choice
