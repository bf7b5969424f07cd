import json

import numpy as np
import pytest

from splatalign.errors import FormatError, ManifestError, ValidationError
from splatalign.io import (
    CorrespondenceSet,
    DepthMap,
    FeatureMap,
    bilinear_depth,
    load_correspondences,
    load_depth,
    load_features,
    load_image,
    load_manifest,
    load_pfm,
    load_scene,
    save_correspondences,
    save_depth,
    save_depth_png,
    save_features,
    save_image,
    save_pfm,
    save_scene,
)
from splatalign.scene import GaussianScene


def make_manifest(tmp_path, n_views=2, pairs=((0, 1),), near=0.5, far=10.0, extra=None):
    for k in range(n_views):
        save_image(np.full((8, 8, 3), 0.5), tmp_path / f"img_{k}.png")
        save_depth(DepthMap.from_values(np.full((8, 8), 2.0)), tmp_path / f"depth_{k}.pfm")
    for i, j in pairs:
        c = CorrespondenceSet(i, j, [[1.0, 1.0]], [[2.0, 2.0]], [1.0])
        save_correspondences(c, tmp_path / f"pair_{i}_{j}.txt")
    doc = {
        "near": near,
        "far": far,
        "views": [
            {
                "image": f"img_{k}.png",
                "depth": f"depth_{k}.pfm",
                "intrinsics": {"fx": 10.0, "fy": 10.0, "cx": 4.0, "cy": 4.0, "width": 8, "height": 8},
            }
            for k in range(n_views)
        ],
        "pairs": [{"i": i, "j": j, "correspondences": f"pair_{i}_{j}.txt"} for i, j in pairs],
    }
    if extra:
        doc.update(extra)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


class TestDepthFormats:
    def test_pfm_roundtrip_exact(self, tmp_path):
        d = DepthMap.from_values(np.array([[1.0, 2.0], [3.0, 4.0]]))
        save_depth(d, tmp_path / "d.pfm")
        back = load_depth(tmp_path / "d.pfm")
        assert np.array_equal(back.values, d.values)
        assert np.array_equal(back.valid, d.valid)

    def test_pfm_invalid_pixels_masked(self, tmp_path):
        vals = np.array([[1.0, 0.0], [3.0, 4.0]])
        d = DepthMap.from_values(vals)
        save_depth(d, tmp_path / "d.pfm")
        back = load_depth(tmp_path / "d.pfm")
        assert not back.valid[0, 1]
        assert back.valid.sum() == 3

    def test_png_scale_definition(self, tmp_path):
        # raw value 1500 at scale 0.001 is 1.5 m
        d = DepthMap.from_values(np.full((4, 4), 1.5))
        save_depth_png(d, tmp_path / "d.png", scale=0.001)
        back = load_depth(tmp_path / "d.png")
        assert np.allclose(back.values, 1.5)

    def test_png_zero_is_invalid(self, tmp_path):
        vals = np.full((4, 4), 2.0)
        vals[1, 2] = 0.0
        save_depth_png(DepthMap.from_values(vals), tmp_path / "d.png", scale=0.001)
        back = load_depth(tmp_path / "d.png")
        assert not back.valid[1, 2]
        assert back.valid.sum() == 15

    def test_malformed_header_rejected(self, tmp_path):
        (tmp_path / "bad.pfm").write_bytes(b"Px\n2 2\n-1.0\n" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_depth(tmp_path / "bad.pfm")

    def test_pfm_float_image_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.random((5, 7)).astype(np.float32).astype(np.float64)
        save_pfm(data, tmp_path / "x.pfm")
        assert np.array_equal(load_pfm(tmp_path / "x.pfm"), data)


class TestBilinearDepth:
    def test_exact_at_integer_coords_touches_one_cell(self):
        vals = np.arange(9, dtype=np.float64).reshape(3, 3) + 1
        valid = np.ones((3, 3), dtype=bool)
        valid[1, 1] = False
        d = DepthMap(np.where(valid, vals, 0.0), valid)
        v, ok = bilinear_depth(d, np.array([[2.0, 2.0], [1.0, 1.0]]))
        assert ok[0] and v[0] == 9.0
        assert not ok[1]  # lands exactly on the invalid cell

    def test_interpolates(self):
        d = DepthMap.from_values(np.array([[1.0, 3.0], [1.0, 3.0]]))
        v, ok = bilinear_depth(d, np.array([[0.5, 0.5]]))
        assert ok[0] and abs(v[0] - 2.0) < 1e-12

    def test_any_invalid_neighbor_drops(self):
        vals = np.array([[1.0, 3.0], [1.0, 0.0]])
        d = DepthMap.from_values(vals)
        v, ok = bilinear_depth(d, np.array([[0.5, 0.5], [0.5, 0.0]]))
        assert not ok[0]  # touches the invalid corner
        assert ok[1]  # top edge interpolation avoids it

    def test_out_of_bounds(self):
        d = DepthMap.from_values(np.ones((4, 4)))
        _, ok = bilinear_depth(d, np.array([[-0.5, 1.0], [3.5, 1.0]]))
        assert not ok.any()


class TestCorrespondences:
    def test_three_match_file_order(self, tmp_path):
        c = CorrespondenceSet(0, 1, [[1, 2], [3, 4], [5, 6]], [[7, 8], [9, 10], [11, 12]], [0.5, 0.75, 1.0])
        save_correspondences(c, tmp_path / "c.txt")
        back = load_correspondences(tmp_path / "c.txt")
        assert (back.i, back.j, len(back)) == (0, 1, 3)
        assert np.array_equal(back.p, c.p)
        assert np.array_equal(back.q, c.q)
        assert np.array_equal(back.confidence, c.confidence)

    def test_confidence_above_one_rejected(self):
        with pytest.raises(ValidationError):
            CorrespondenceSet(0, 1, [[1, 1]], [[2, 2]], [1.5])

    def test_duplicate_source_pixels_rejected(self):
        with pytest.raises(ValidationError):
            CorrespondenceSet(0, 1, [[1, 1], [1, 1]], [[2, 2], [3, 3]], [0.5, 0.5])

    def test_bounds_validation(self):
        c = CorrespondenceSet(0, 1, [[20, 2]], [[2, 2]], [1.0])
        with pytest.raises(ValidationError):
            c.validate_bounds((8, 8), (8, 8))


class TestFeatures:
    def test_roundtrip_normalized(self, tmp_path):
        rng = np.random.default_rng(1)
        raw = rng.normal(size=(4, 5, 8))
        fm = FeatureMap(raw)
        save_features(fm, tmp_path / "f.bin")
        back = load_features(tmp_path / "f.bin")
        assert back.shape == (4, 5, 8)
        assert np.abs(np.linalg.norm(back.values, axis=-1) - 1).max() < 1e-6

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "junk.bin").write_bytes(b"XXXX" + bytes([1]) + b"\x00" * 12)
        with pytest.raises(FormatError):
            load_features(tmp_path / "junk.bin")

    def test_unknown_version_rejected(self, tmp_path):
        fm = FeatureMap(np.ones((2, 2, 3)))
        save_features(fm, tmp_path / "f.bin")
        raw = bytearray((tmp_path / "f.bin").read_bytes())
        raw[4] = 99
        (tmp_path / "f.bin").write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_features(tmp_path / "f.bin")


class TestSceneFormat:
    def test_random_scene_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        n = 100
        a = rng.normal(size=(n, 3, 3))
        cov = a @ np.transpose(a, (0, 2, 1)) + np.eye(3) * 0.1
        scene = GaussianScene(
            centers=rng.normal(size=(n, 3)),
            opacities=rng.uniform(0, 0.999, size=n),
            covariances=cov,
            colors=rng.uniform(0, 1, size=(n, 3)),
            view_ids=rng.integers(0, 3, size=n).astype(np.int64),
            pixels=rng.integers(0, 64, size=(n, 2)).astype(np.int64),
            n_views=3,
        )
        save_scene(scene, tmp_path / "s.bin")
        back = load_scene(tmp_path / "s.bin")
        assert np.array_equal(back.centers, scene.centers)
        assert np.array_equal(back.opacities, scene.opacities)
        assert np.array_equal(back.covariances, scene.covariances)
        assert np.array_equal(back.colors, scene.colors)
        assert np.array_equal(back.view_ids, scene.view_ids)
        assert np.array_equal(back.pixels, scene.pixels)
        assert back.n_views == 3

    def test_bad_magic(self, tmp_path):
        (tmp_path / "s.bin").write_bytes(b"NOPE" + bytes([1]))
        with pytest.raises(FormatError):
            load_scene(tmp_path / "s.bin")


class TestManifest:
    def test_minimal_two_view(self, tmp_path):
        m = load_manifest(make_manifest(tmp_path))
        assert m.n_views == 2
        assert len(m.pairs) == 1
        assert m.views[0].intrinsics.fx == 10.0

    def test_pair_out_of_range(self, tmp_path):
        path = make_manifest(tmp_path, n_views=3, pairs=((0, 1),))
        doc = json.loads(path.read_text())
        doc["pairs"].append({"i": 0, "j": 5, "correspondences": "pair_0_1.txt"})
        path.write_text(json.dumps(doc))
        with pytest.raises(ManifestError) as e:
            load_manifest(path)
        assert e.value.code == "pair-index"

    def test_near_equals_far_rejected(self, tmp_path):
        path = make_manifest(tmp_path, near=2.0, far=2.0)
        with pytest.raises(ManifestError) as e:
            load_manifest(path)
        assert e.value.code == "bounds"

    def test_missing_file(self, tmp_path):
        path = make_manifest(tmp_path)
        (tmp_path / "depth_1.pfm").unlink()
        with pytest.raises(ManifestError) as e:
            load_manifest(path)
        assert e.value.code == "missing-file"

    def test_parse_error_has_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(ManifestError) as e:
            load_manifest(path)
        assert e.value.code == "parse"

    def test_pair_order_enforced(self, tmp_path):
        path = make_manifest(tmp_path)
        doc = json.loads(path.read_text())
        doc["pairs"] = [{"i": 1, "j": 0, "correspondences": "pair_0_1.txt"}]
        path.write_text(json.dumps(doc))
        with pytest.raises(ManifestError) as e:
            load_manifest(path)
        assert e.value.code == "pair-order"


class TestImages:
    def test_roundtrip_quantized(self, tmp_path):
        rng = np.random.default_rng(3)
        img = rng.random((6, 6, 3))
        save_image(img, tmp_path / "i.png")
        back = load_image(tmp_path / "i.png")
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12
