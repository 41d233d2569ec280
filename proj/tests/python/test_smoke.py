"""Smoke tests for the python bindings: build a gallery, cache it, match
and detect against it, and round-trip the persistence layer."""

import numpy as np
import pytest

try:
    import _galdet as g  # build tree, PYTHONPATH points at the module dir
except ImportError:
    from galdet import _galdet as g  # installed package


def solid(color, size=16):
    pixels = np.zeros((size, size, 3), np.uint8)
    pixels[:, :] = color
    return g.ImagePatch(pixels)


@pytest.fixture
def gallery():
    return g.GallerySet(
        {
            "1": [solid((0, 0, 200)), solid((0, 0, 180))],
            "2": [solid((0, 200, 0)), solid((0, 180, 0))],
        }
    )


def test_module_constants():
    assert g.UNKNOWN == "UNKNOWN"
    assert g.AUGMENTATIONS == 8
    box = g.Box(1, 2, 3, 4)
    assert (box.x, box.y, box.w, box.h) == (1, 2, 3, 4)
    assert box.area() == 12
    assert box == g.Box(1, 2, 3, 4)
    assert "Box(" in repr(box)


def test_gallery_basics(gallery):
    assert len(gallery) == 2
    assert "1" in gallery and "3" not in gallery
    assert gallery.ids == ["1", "2"]
    assert len(gallery.content_hash) == 64
    assert gallery.total_images() == 4

    smaller = gallery.remove_object("2")
    assert smaller.ids == ["1"]
    assert smaller.content_hash != gallery.content_hash
    assert gallery.subset(["2"]).ids == ["2"]


def test_augment_identity():
    patch = solid((10, 120, 240))
    rotations = g.augment(patch)
    assert len(rotations) == g.AUGMENTATIONS
    assert np.array_equal(rotations[0].pixels, patch.pixels)
    # diagonal rotations need a bigger canvas
    assert rotations[1].pixels.shape[0] > patch.pixels.shape[0]


def test_embedder_and_cache(gallery):
    embedder = g.make_embedder()
    assert embedder.dim == 192
    assert embedder.version == "grid-mean-v1"

    cache = g.build_cache(gallery, embedder)
    assert len(cache.entries) == g.AUGMENTATIONS * gallery.total_images()
    assert cache.built_from_hash == gallery.content_hash
    assert sorted(cache.centroids) == ["1", "2"]
    norms = [np.linalg.norm(e.embedding) for e in cache.entries]
    assert np.allclose(norms, 1.0, atol=1e-5)

    _, rebuilt = g.ensure_cache(gallery, cache, embedder)
    assert not rebuilt
    _, rebuilt = g.ensure_cache(gallery.remove_object("2"), cache, embedder)
    assert rebuilt


def test_matching(gallery):
    embedder = g.make_embedder()
    cache = g.build_cache(gallery, embedder)

    red = embedder.embed(solid((0, 0, 200)))
    assert g.similarity(red, red) == pytest.approx(1.0, abs=1e-9)

    object_id, sim = g.match_patch(red, cache)
    assert object_id == "1"
    assert sim > 0.99

    # a color orthogonal to everything in the gallery stays unknown
    blue = embedder.embed(solid((200, 0, 0)))
    object_id, sim = g.match_patch(blue, cache)
    assert object_id == g.UNKNOWN
    assert sim < 0.5

    object_id, _ = g.match_patch(blue, cache, closed_set=True)
    assert object_id in ("1", "2")


def test_detect_scene(gallery):
    pixels = np.full((120, 160, 3), 40, np.uint8)
    mask1 = np.zeros((120, 160), np.uint8)
    mask1[10:40, 10:50] = 255
    pixels[10:40, 10:50] = (0, 0, 200)
    mask2 = np.zeros((120, 160), np.uint8)
    mask2[60:100, 80:140] = 255
    pixels[60:100, 80:140] = (0, 200, 0)
    scene = g.SceneImage(
        "s/0",
        pixels,
        [g.InstanceAnnotation("1", mask1), g.InstanceAnnotation("2", mask2)],
    )

    embedder = g.make_embedder()
    cache = g.build_cache(gallery, embedder)
    detections = g.detect(scene, gallery, cache, embedder)

    assert sorted(d.matched_object_id for d in detections) == ["1", "2"]
    for d in detections:
        assert 0.0 < d.score <= 1.0
        assert d.proposal.bbox.area() > 0
        assert d.proposal.mask.shape == (120, 160)

    patch = g.extract_patch(scene, scene.annotations[0])
    assert patch.pixels.shape == (30, 40, 3)


def test_evaluate_cmc(gallery):
    embedder = g.make_embedder()
    cache = g.build_cache(gallery, embedder)
    queries = [
        ("q0", "1", embedder.embed(solid((0, 0, 190)))),
        ("q1", "2", embedder.embed(solid((0, 190, 0)))),
    ]
    report = g.evaluate_cmc(queries, cache)
    assert report["mAP"] == pytest.approx(1.0)
    assert report["R1"] == 1.0
    assert report["num_queries"] == 2
    assert report["num_excluded"] == 0


def test_errors_and_persistence(tmp_path, gallery):
    with pytest.raises(g.GaldetError):
        g.load_gallery(tmp_path / "missing.bin")
    with pytest.raises(g.GaldetError):
        g.GallerySet({"1": []})

    gpath = tmp_path / "gallery.bin"
    g.save_gallery(gallery, gpath)
    assert g.load_gallery(gpath).content_hash == gallery.content_hash

    embedder = g.make_embedder()
    cache = g.build_cache(gallery, embedder)
    cpath = tmp_path / "cache.bin"
    g.save_cache(cache, cpath)
    loaded = g.load_cache(cpath)
    assert loaded.embedder_version == cache.embedder_version
    assert len(loaded.entries) == len(cache.entries)
    assert np.allclose(loaded.entries[0].embedding, cache.entries[0].embedding)
