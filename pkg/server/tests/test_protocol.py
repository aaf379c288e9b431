"""Schema validation and payload codecs."""
import numpy as np
import pytest
from pydantic import ValidationError

from conftest import b64_png_to_array, b64_to_f32, png_b64
from opsam_server.protocol import (
    EchoRequest,
    EncodeRequest,
    PromptModel,
    SegmentRequest,
    b64_to_image,
    floats_to_b64,
    mask_to_b64,
)


class TestSchemas:
    def test_prompt_labels_are_binary(self):
        PromptModel(x=3, y=4, label=1)
        PromptModel(x=0, y=0, label=0)
        with pytest.raises(ValidationError):
            PromptModel(x=1, y=1, label=2)

    def test_negative_coordinates_rejected(self):
        with pytest.raises(ValidationError):
            PromptModel(x=-1, y=0, label=1)

    def test_protocol_number_is_pinned(self):
        with pytest.raises(ValidationError):
            EncodeRequest(protocol=2, image_png_b64="aGk=", embedding_kinds=["value"])
        with pytest.raises(ValidationError):
            EchoRequest(protocol=0, payload_b64="aGk=")

    def test_encode_needs_at_least_one_kind(self):
        with pytest.raises(ValidationError):
            EncodeRequest(protocol=1, image_png_b64="aGk=", embedding_kinds=[])

    def test_segment_needs_prompts_and_session(self):
        with pytest.raises(ValidationError):
            SegmentRequest(protocol=1, session_id="s", prompts=[])
        with pytest.raises(ValidationError):
            SegmentRequest(protocol=1, session_id="", prompts=[{"x": 0, "y": 0, "label": 1}])

    def test_segment_image_is_optional(self):
        req = SegmentRequest(
            protocol=1, session_id="s", prompts=[{"x": 1, "y": 2, "label": 1}]
        )
        assert req.image_png_b64 is None


class TestCodecs:
    def test_image_roundtrip(self):
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)
        assert np.array_equal(b64_to_image(png_b64(image)), image)

    def test_image_rejects_bad_base64(self):
        with pytest.raises(ValueError, match="base64"):
            b64_to_image("!!!not base64!!!")

    def test_image_rejects_non_png_bytes(self):
        import base64

        junk = base64.b64encode(b"definitely not a png").decode()
        with pytest.raises(ValueError, match="PNG"):
            b64_to_image(junk)

    def test_mask_roundtrip_is_binary(self):
        mask = np.zeros((5, 8), bool)
        mask[1:3, 2:6] = True
        back = b64_png_to_array(mask_to_b64(mask))
        assert back.shape == (5, 8)
        assert set(np.unique(back)) <= {0, 255}
        assert np.array_equal(back > 0, mask)

    def test_floats_are_little_endian_f32(self):
        values = np.array([0.0, 1.5, -2.25, 3e-5])
        back = b64_to_f32(floats_to_b64(values))
        assert back.dtype == np.dtype("<f4")
        assert np.array_equal(back, values.astype("<f4"))
