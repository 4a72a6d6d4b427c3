"""Toy generator: vocabulary, determinism, rendering, the color oracle."""

from __future__ import annotations

import numpy as np
import pytest

from boxguide.generator import (
    MASK_MODES,
    ConceptToken,
    ConceptVocabulary,
    GenerationConfig,
    RenderedImage,
    concept_fractions,
    default_vocabulary,
    generate,
    oracle_detect,
)
from boxguide.geometry import BoundingBox
from boxguide.masks import GuidanceEntry, GuidanceSet

VOCAB = default_vocabulary()


def dog_guidance(box: BoundingBox | None = None) -> GuidanceSet:
    entries = ()
    if box is not None:
        entries = (GuidanceEntry(box=box, concept=1),)
    return GuidanceSet(prompt=("background", "dog"), entries=entries)


def small_config(**overrides) -> GenerationConfig:
    params = {"steps": 8, "resolutions": ((8, 8), (16, 16))}
    params.update(overrides)
    return GenerationConfig(**params)


def image_from_cells(cells: np.ndarray) -> RenderedImage:
    return RenderedImage(cells=cells, vocab=VOCAB)


def test_default_vocabulary_shape():
    assert len(VOCAB) == 9
    assert "background" in VOCAB.names
    assert VOCAB.index("background") == VOCAB.background_index
    assert len(set(VOCAB.names)) == 9
    assert len({t.color for t in VOCAB.tokens}) == 9


def test_default_vocabulary_values_are_independent():
    assert np.linalg.matrix_rank(VOCAB.value_matrix) == 9


def test_vocabulary_rejects_missing_background():
    token = ConceptToken(
        name="dog", key=np.array([1.0, 0.0]), value=np.array([1.0]), color=(1, 2, 3)
    )
    with pytest.raises(ValueError, match="background"):
        ConceptVocabulary((token,))


def test_vocabulary_rejects_duplicate_colors():
    tokens = tuple(
        ConceptToken(
            name=name,
            key=np.eye(2)[i],
            value=np.eye(2)[i],
            color=(9, 9, 9),
        )
        for i, name in enumerate(("background", "dog"))
    )
    with pytest.raises(ValueError, match="colors"):
        ConceptVocabulary(tokens)


def test_vocabulary_rejects_coinciding_keys():
    tokens = tuple(
        ConceptToken(
            name=name,
            key=np.array([1.0, 0.0]),
            value=np.eye(2)[i],
            color=(i, 0, 0),
        )
        for i, name in enumerate(("background", "dog"))
    )
    with pytest.raises(ValueError, match="keys"):
        ConceptVocabulary(tokens)


def test_vocabulary_rejects_dependent_values():
    tokens = tuple(
        ConceptToken(
            name=name,
            key=np.eye(2)[i],
            value=np.array([1.0, 1.0]) * (i + 1),
            color=(i, 0, 0),
        )
        for i, name in enumerate(("background", "dog"))
    )
    with pytest.raises(ValueError, match="independent"):
        ConceptVocabulary(tokens)


def test_unknown_concept_lookup():
    with pytest.raises(KeyError, match="zebra"):
        VOCAB.index("zebra")


def test_config_finest_picks_the_largest_grid():
    config = GenerationConfig(resolutions=((8, 8), (16, 16)))
    assert config.finest == (16, 16)


def test_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(steps=0)
    with pytest.raises(ValueError):
        GenerationConfig(resolutions=())
    with pytest.raises(ValueError):
        GenerationConfig(w_prime=-0.1)
    with pytest.raises(ValueError):
        GenerationConfig(softness=0.0)
    with pytest.raises(ValueError):
        GenerationConfig(mask_mode="blurry")
    with pytest.raises(ValueError):
        GenerationConfig(seed=-1)
    with pytest.raises(ValueError, match="integer multiple"):
        GenerationConfig(resolutions=((12, 12), (16, 16)))


def test_mask_modes_inventory():
    assert MASK_MODES == ("none", "flat", "gaussian")


def test_generate_is_deterministic():
    guidance = dog_guidance(BoundingBox(0.0, 0.0, 0.5, 1.0))
    config = small_config(seed=3)
    first = generate(guidance, VOCAB, config)
    second = generate(guidance, VOCAB, config)
    assert first.image.to_ppm() == second.image.to_ppm()
    assert np.array_equal(first.latent.state, second.latent.state)


def test_generate_seeds_change_the_layout():
    guidance = dog_guidance()
    images = {
        generate(guidance, VOCAB, small_config(seed=seed, mask_mode="none")).image
        .to_ppm()
        for seed in range(4)
    }
    assert len(images) > 1


def test_generate_flat_mode_at_zero_weight_matches_unguided():
    # The flat mask never suppresses, so with w' = 0 every attention call
    # reduces to the baseline and the runs coincide byte for byte.
    guidance = dog_guidance(BoundingBox(0.25, 0.25, 0.75, 0.75))
    flat = generate(guidance, VOCAB, small_config(mask_mode="flat", w_prime=0.0))
    none = generate(guidance, VOCAB, small_config(mask_mode="none", w_prime=0.0))
    assert flat.image.to_ppm() == none.image.to_ppm()


def test_generate_gaussian_mode_places_the_object():
    guidance = dog_guidance(BoundingBox(0.0, 0.0, 0.5, 1.0))
    result = generate(guidance, VOCAB, GenerationConfig(seed=3))
    detections = oracle_detect(result.image)
    dogs = [d for d in detections if d.class_name == "dog"]
    assert dogs
    best = max(dogs, key=lambda d: d.score)
    assert best.box.x_max <= 0.5  # confined to the guided half


def test_generate_rejects_unknown_prompt_tokens():
    guidance = GuidanceSet(prompt=("background", "zebra", "yak"))
    with pytest.raises(ValueError, match="yak, zebra"):
        generate(guidance, VOCAB, small_config())


def test_generate_renders_only_prompt_concepts():
    guidance = dog_guidance()
    result = generate(guidance, VOCAB, small_config(seed=5, mask_mode="none"))
    present = set(np.unique(result.image.cells).tolist())
    allowed = {VOCAB.background_index, VOCAB.index("dog")}
    assert present <= allowed


def test_generate_attention_trace_covers_every_step_and_grid():
    guidance = dog_guidance(BoundingBox(0.2, 0.2, 0.8, 0.8))
    config = small_config(steps=4)
    result = generate(guidance, VOCAB, config, record_attention=True)
    assert len(result.attention_trace) == 4 * len(config.resolutions)
    snap = result.attention_trace[0]
    assert snap.step == 4
    assert snap.map.shape == (snap.grid_w * snap.grid_h, 2)
    assert np.allclose(snap.map.sum(axis=1), 1.0)
    assert result.attention_trace[-1].step == 1


def test_generate_without_recording_keeps_no_trace():
    result = generate(dog_guidance(), VOCAB, small_config())
    assert result.attention_trace == ()


def test_rendered_image_ppm_layout():
    cells = np.full((16, 16), VOCAB.background_index, dtype=np.int64)
    data = image_from_cells(cells).to_ppm(scale=4)
    assert data.startswith(b"P6\n64 64\n255\n")
    body = data[len(b"P6\n64 64\n255\n") :]
    assert len(body) == 64 * 64 * 3
    color = bytes(VOCAB.tokens[VOCAB.background_index].color)
    assert body[:3] == color
    assert body == color * (64 * 64)


def test_rendered_image_ppm_rejects_bad_scale():
    cells = np.zeros((4, 4), dtype=np.int64)
    with pytest.raises(ValueError):
        image_from_cells(cells).to_ppm(scale=0)


def test_rendered_image_pixel_round_trip():
    rng = np.random.default_rng(2)
    cells = rng.integers(0, len(VOCAB), size=(8, 8))
    image = image_from_cells(cells)
    recovered = RenderedImage.from_pixels(image.to_pixels(), VOCAB)
    assert np.array_equal(recovered.cells, cells)


def test_rendered_image_unknown_colors_map_to_minus_one():
    pixels = np.zeros((2, 2, 3), dtype=np.uint8)
    pixels[:] = (1, 2, 3)  # not a vocabulary color
    recovered = RenderedImage.from_pixels(pixels, VOCAB)
    assert (recovered.cells == -1).all()


def test_oracle_detect_single_block():
    cells = np.full((16, 16), VOCAB.background_index, dtype=np.int64)
    cells[5:8, 2:5] = VOCAB.index("dog")
    (detection,) = oracle_detect(image_from_cells(cells))
    assert detection.class_name == "dog"
    assert detection.box == BoundingBox(2 / 16, 5 / 16, 5 / 16, 8 / 16)
    assert detection.score == pytest.approx(9 / 256)


def test_oracle_detect_separate_components():
    cells = np.full((16, 16), VOCAB.background_index, dtype=np.int64)
    cells[0:2, 0:2] = VOCAB.index("cat")
    cells[10:14, 10:14] = VOCAB.index("cat")
    detections = oracle_detect(image_from_cells(cells))
    assert len(detections) == 2
    assert {d.class_name for d in detections} == {"cat"}
    assert sorted(d.score for d in detections) == [
        pytest.approx(4 / 256),
        pytest.approx(16 / 256),
    ]


def test_oracle_detect_diagonal_cells_are_separate_components():
    cells = np.full((8, 8), VOCAB.background_index, dtype=np.int64)
    cells[0:2, 0:2] = VOCAB.index("dog")
    cells[2:4, 2:4] = VOCAB.index("dog")  # touches only at a corner
    detections = oracle_detect(image_from_cells(cells))
    assert len(detections) == 2


def test_oracle_detect_respects_min_area():
    cells = np.full((16, 16), VOCAB.background_index, dtype=np.int64)
    cells[3, 3] = VOCAB.index("ball")
    assert oracle_detect(image_from_cells(cells)) == []
    assert len(oracle_detect(image_from_cells(cells), min_area=1)) == 1


def test_oracle_detect_ignores_background_and_unknown_cells():
    cells = np.full((8, 8), VOCAB.background_index, dtype=np.int64)
    cells[0:4, 0:4] = -1
    assert oracle_detect(image_from_cells(cells)) == []


def test_concept_fractions_sum_to_one():
    guidance = dog_guidance(BoundingBox(0.0, 0.0, 0.5, 1.0))
    result = generate(guidance, VOCAB, small_config(seed=1))
    fractions = concept_fractions(result.image)
    assert fractions.shape == (9,)
    assert fractions.sum() == pytest.approx(1.0)
    assert fractions[VOCAB.index("dog")] > 0.0


def test_concept_fractions_hand_grid():
    cells = np.full((4, 4), VOCAB.background_index, dtype=np.int64)
    cells[0, 0] = VOCAB.index("dog")
    fractions = concept_fractions(image_from_cells(cells))
    assert fractions[VOCAB.index("dog")] == pytest.approx(1 / 16)
    assert fractions[VOCAB.background_index] == pytest.approx(15 / 16)
