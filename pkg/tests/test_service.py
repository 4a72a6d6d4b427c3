"""HTTP service: request validation, generation round trip, caching."""

from __future__ import annotations

import base64
import json

import pytest
from fastapi.testclient import TestClient

from boxguide.service import create_app


@pytest.fixture(scope="module")
def client() -> TestClient:
    return TestClient(create_app())


def generate_request(**overrides) -> dict:
    payload = {
        "prompt_tokens": ["background", "dog"],
        "objects": [{"concept": "dog", "bbox": [0.0, 0.0, 0.5, 1.0]}],
        "steps": 6,
        "seed": 0,
    }
    payload.update(overrides)
    return payload


def error_field(response) -> str | None:
    return response.json()["error"]["field"]


def test_healthz(client):
    response = client.get("/healthz")
    assert response.status_code == 200
    assert response.text == "ok"


def test_concepts_inventory(client):
    response = client.get("/api/concepts")
    assert response.status_code == 200
    concepts = response.json()["concepts"]
    assert len(concepts) == 9
    names = [c["name"] for c in concepts]
    assert "background" in names
    for concept in concepts:
        assert len(concept["color"]) == 3
        assert all(0 <= v <= 255 for v in concept["color"])
    assert len({tuple(c["color"]) for c in concepts}) == 9


def test_generate_round_trip(client):
    response = client.post("/api/generate", json=generate_request())
    assert response.status_code == 200
    payload = response.json()
    image = base64.b64decode(payload["image"])
    assert image.startswith(b"P6\n512 512\n255\n")
    assert isinstance(payload["timing"], int)
    assert payload["detections"]
    for detection in payload["detections"]:
        assert set(detection) == {"class_name", "bbox", "score"}
        assert all(0.0 <= v <= 1.0 for v in detection["bbox"])
    (record,) = payload["consistency"]
    assert record["concept"] == "dog"
    assert record["bbox"] == [0.0, 0.0, 0.5, 1.0]
    assert record["success"] == (record["recorded_iou"] > 0.5)
    assert record["size_class"] in {"S", "M", "L"}
    assert record["distance_class"] in {"near", "mid", "far"}


def test_generate_identical_requests_return_identical_bytes(client):
    first = client.post("/api/generate", json=generate_request(seed=11))
    second = client.post("/api/generate", json=generate_request(seed=11))
    assert first.status_code == second.status_code == 200
    assert first.content == second.content


def test_generate_defaults_are_filled(client):
    response = client.post(
        "/api/generate", json={"prompt_tokens": ["background", "cat"]}
    )
    assert response.status_code == 200
    assert response.json()["consistency"] == []


def test_generate_rejects_non_json_bodies(client):
    response = client.post(
        "/api/generate", content=b"...", headers={"content-type": "application/json"}
    )
    assert response.status_code == 400
    assert error_field(response) == "body"


def test_generate_rejects_non_object_bodies(client):
    response = client.post("/api/generate", json=[1, 2, 3])
    assert response.status_code == 400
    assert error_field(response) == "body"


def test_generate_requires_prompt_tokens(client):
    response = client.post("/api/generate", json={"objects": []})
    assert response.status_code == 400
    assert error_field(response) == "prompt_tokens"


def test_generate_rejects_unknown_prompt_tokens(client):
    response = client.post(
        "/api/generate", json=generate_request(prompt_tokens=["background", "zebra"])
    )
    assert response.status_code == 400
    assert error_field(response) == "prompt_tokens[1]"
    assert "/api/concepts" in response.json()["error"]["message"]


def test_generate_rejects_empty_prompt_token(client):
    response = client.post(
        "/api/generate", json=generate_request(prompt_tokens=["background", ""])
    )
    assert response.status_code == 400
    assert error_field(response) == "prompt_tokens[1]"


def test_generate_rejects_non_list_objects(client):
    response = client.post("/api/generate", json=generate_request(objects="dog"))
    assert response.status_code == 400
    assert error_field(response) == "objects"


def test_generate_rejects_concept_outside_prompt(client):
    response = client.post(
        "/api/generate",
        json=generate_request(
            objects=[{"concept": "cat", "bbox": [0.0, 0.0, 0.5, 1.0]}]
        ),
    )
    assert response.status_code == 400
    assert error_field(response) == "objects[0].concept"


def test_generate_rejects_malformed_bboxes(client):
    bad_boxes = [
        [0.0, 0.0, 0.5],  # wrong arity
        [0.0, 0.0, "x", 1.0],  # wrong type
        [0.5, 0.0, 0.5, 1.0],  # zero width
        [0.0, 0.0, 1.5, 1.0],  # out of range
    ]
    for bbox in bad_boxes:
        response = client.post(
            "/api/generate",
            json=generate_request(objects=[{"concept": "dog", "bbox": bbox}]),
        )
        assert response.status_code == 400
        assert error_field(response) == "objects[0].bbox"


def test_generate_rejects_second_bad_object(client):
    response = client.post(
        "/api/generate",
        json=generate_request(
            objects=[
                {"concept": "dog", "bbox": [0.0, 0.0, 0.5, 1.0]},
                {"concept": "dog", "bbox": [0.9, 0.0, 0.1, 1.0]},
            ]
        ),
    )
    assert response.status_code == 400
    assert error_field(response) == "objects[1].bbox"


def test_generate_parameter_validation(client):
    cases = [
        ({"w_prime": -0.5}, "w_prime"),
        ({"w_prime": "heavy"}, "w_prime"),
        ({"mask_mode": "blurry"}, "mask_mode"),
        ({"seed": -1}, "seed"),
        ({"seed": True}, "seed"),
        ({"seed": 1.5}, "seed"),
        ({"steps": 0}, "steps"),
        ({"steps": 201}, "steps"),
    ]
    for overrides, field in cases:
        response = client.post("/api/generate", json=generate_request(**overrides))
        assert response.status_code == 400, field
        assert error_field(response) == field


def test_generate_contradictory_guidance_is_unprocessable(client):
    # A box too small to cover any cell center suppresses the only prompt
    # token everywhere; the pipeline rejects it rather than normalizing
    # an empty row.
    with pytest.warns(UserWarning):
        response = client.post(
            "/api/generate",
            json={
                "prompt_tokens": ["dog"],
                "objects": [{"concept": "dog", "bbox": [0.0, 0.0, 0.01, 0.01]}],
                "steps": 4,
            },
        )
    assert response.status_code == 422
    assert "contradictory" in response.json()["error"]["message"]


def test_static_mount_serves_a_bundle(tmp_path):
    (tmp_path / "index.html").write_text("<!doctype html><p>console</p>")
    app = create_app(static_dir=tmp_path)
    client = TestClient(app)
    response = client.get("/")
    assert response.status_code == 200
    assert "console" in response.text
    # API routes keep priority over the static mount.
    assert client.get("/healthz").text == "ok"


def test_mask_modes_round_trip_differently(client):
    none = client.post(
        "/api/generate", json=generate_request(mask_mode="none", seed=2)
    ).json()
    gaussian = client.post(
        "/api/generate", json=generate_request(mask_mode="gaussian", seed=2)
    ).json()
    assert none["image"] != gaussian["image"]
