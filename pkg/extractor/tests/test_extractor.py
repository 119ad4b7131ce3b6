"""Extractor behavior on tiny synthetic image trees.

Uses seeded random initialization so no weights are downloaded; the
contract under test is shape, ordering, determinism, and the file format,
none of which depend on what the backbone learned.
"""

import json

import numpy as np
import pytest
from PIL import Image

from extractor import ExtractError, ExtractSpec, extract
from extractor.images import decode, enumerate_files, list_classes


def make_tree(root, per_class=3, classes=("alpha", "beta"), side=32):
    rng = np.random.default_rng(7)
    for cls in classes:
        (root / cls).mkdir(parents=True)
        for i in range(per_class):
            arr = rng.integers(0, 255, size=(side, side, 3), dtype=np.uint8)
            Image.fromarray(arr).save(root / cls / f"img{i}.png")


@pytest.fixture(scope="module")
def image_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    make_tree(root)
    return root


def spec_for(root, out, **kw):
    defaults = dict(backbone_size="base", batch_size=4,
                    weights="seeded-init", seed=3)
    defaults.update(kw)
    return ExtractSpec(image_root=str(root), output_path=str(out),
                       **defaults)


def test_class_listing_is_sorted(image_root):
    assert list_classes(image_root) == ["alpha", "beta"]


def test_enumeration_order_is_class_then_filename(image_root):
    files = enumerate_files(image_root, ["alpha", "beta"])
    names = [f for f, _ in files]
    assert names == sorted(names)
    assert [lab for _, lab in files] == [0, 0, 0, 1, 1, 1]


def test_decode_returns_normalized_chw(image_root):
    arr = decode(str(image_root / "alpha" / "img0.png"))
    assert arr.shape == (3, 224, 224)
    assert arr.dtype == np.float32


def test_decode_rejects_garbage(tmp_path):
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"this is not an image")
    assert decode(str(junk)) is None


def test_extract_shapes_and_manifest(image_root, tmp_path):
    out = tmp_path / "feats.eudf"
    manifest = extract(spec_for(image_root, out))
    assert manifest["embed_dim"] == 768
    assert manifest["classes"] == ["alpha", "beta"]
    assert [r["row"] for r in manifest["rows"]] == list(range(6))
    assert [r["label"] for r in manifest["rows"]] == [0, 0, 0, 1, 1, 1]
    assert manifest["skipped"] == []
    assert out.exists()
    sidecar = json.loads((tmp_path / "feats.eudf.manifest.json").read_text())
    assert sidecar["checkpoint"] == "seeded-init:base:seed=3"


def test_extract_deterministic_bytes(image_root, tmp_path):
    out_a = tmp_path / "a.eudf"
    out_b = tmp_path / "b.eudf"
    extract(spec_for(image_root, out_a))
    extract(spec_for(image_root, out_b))
    assert out_a.read_bytes() == out_b.read_bytes()


def test_batch_size_does_not_change_rows(image_root, tmp_path):
    out_a = tmp_path / "a.eudf"
    out_b = tmp_path / "b.eudf"
    extract(spec_for(image_root, out_a, batch_size=2))
    extract(spec_for(image_root, out_b, batch_size=5))
    assert out_a.read_bytes() == out_b.read_bytes()


def test_output_loads_through_training_engine(image_root, tmp_path):
    euda_fs = pytest.importorskip("euda.feature_store")
    out = tmp_path / "feats.eudf"
    extract(spec_for(image_root, out))
    ds = euda_fs.load_dataset(str(out), format="binary")
    assert (ds.n, ds.d, ds.num_classes) == (6, 768, 2)
    assert list(ds.eval_labels()) == [0, 0, 0, 1, 1, 1]
    assert np.all(np.isfinite(ds.features))


def test_undecodable_file_is_skipped_with_manifest_entry(tmp_path):
    root = tmp_path / "images"
    make_tree(root, per_class=2)
    (root / "alpha" / "broken.png").write_bytes(b"junk bytes")
    out = tmp_path / "feats.eudf"
    manifest = extract(spec_for(root, out))
    assert manifest["skipped"] == [
        {"file": "alpha/broken.png", "reason": "undecodable"}
    ]
    assert len(manifest["rows"]) == 4


def test_empty_root_is_an_error(tmp_path):
    root = tmp_path / "images"
    root.mkdir()
    with pytest.raises(ExtractError):
        extract(spec_for(root, tmp_path / "feats.eudf"))


def test_all_undecodable_is_an_error(tmp_path):
    root = tmp_path / "images"
    (root / "alpha").mkdir(parents=True)
    (root / "alpha" / "a.png").write_bytes(b"junk")
    with pytest.raises(ExtractError):
        extract(spec_for(root, tmp_path / "feats.eudf"))


def test_bad_backbone_size_is_an_error(image_root, tmp_path):
    with pytest.raises(ExtractError):
        extract(spec_for(image_root, tmp_path / "x.eudf",
                         backbone_size="giant"))
