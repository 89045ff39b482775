import numpy as np
import pytest
import torch

from wrn_export.data import RandomImages, resolve_split
from wrn_export.export import export_features, extract_features
from wrn_export.ipff import read_ipff, write_ipff
from wrn_export.jobfile import ExportJob
from wrn_export.wrn import WideResNet

# the scoring package's reader is the normative consumer of exported files
from ipfield.featfile import read_features


class TestIpffWriter:
    def test_self_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        feats = rng.normal(size=(12, 7)).astype(np.float32)
        labels = rng.integers(0, 10, size=12).astype(np.int32)
        path = tmp_path / "t.ipff"
        write_ipff(path, feats, labels)
        back_feats, back_labels = read_ipff(path)
        np.testing.assert_array_equal(back_feats, feats)
        np.testing.assert_array_equal(back_labels, labels)

    def test_rejects_bad_input(self, tmp_path):
        with pytest.raises(ValueError):
            write_ipff(tmp_path / "x.ipff", np.empty((0, 4), np.float32))
        with pytest.raises(ValueError):
            write_ipff(tmp_path / "x.ipff",
                       np.array([[np.nan]], dtype=np.float32))
        with pytest.raises(ValueError):
            write_ipff(tmp_path / "x.ipff", np.ones((3, 2), np.float32),
                       labels=np.zeros(2, np.int32))

    def test_checksum_detects_corruption(self, tmp_path):
        path = tmp_path / "c.ipff"
        write_ipff(path, np.ones((2, 2), np.float32))
        raw = bytearray(path.read_bytes())
        raw[30] ^= 1
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError):
            read_ipff(path)


class TestSplits:
    def test_random_split_is_seeded(self):
        a = RandomImages(8, seed=3)
        b = RandomImages(8, seed=3)
        assert torch.equal(a.images, b.images)
        assert torch.equal(a.labels, b.labels)
        image, label = a[0]
        assert image.shape == (3, 32, 32)
        assert 0 <= label < 10

    def test_resolve_random(self):
        ds, has_labels = resolve_split("random:5", data_root="unused")
        assert len(ds) == 5 and has_labels

    def test_unknown_split_rejected(self):
        with pytest.raises(ValueError):
            resolve_split("mnist-test", data_root="unused")


class TestExport:
    def test_features_shape_and_validation(self, wrn_checkpoint, tmp_path):
        job = ExportJob(checkpoint=str(wrn_checkpoint["path"]),
                        output_dir=str(tmp_path / "out"),
                        splits=["random:24"], batch_size=16)
        written = export_features(job, model=wrn_checkpoint["model"])
        ipff_path = tmp_path / "out" / "random_24.ipff"
        assert ipff_path in written
        # the primary package's reader validates magic/checksum/finiteness
        matrix = read_features(ipff_path)
        assert matrix.data.shape == (24, 640)
        assert matrix.labels is not None and matrix.labels.shape == (24,)
        # both readers agree bitwise
        own_feats, own_labels = read_ipff(ipff_path)
        np.testing.assert_array_equal(matrix.data, own_feats)
        np.testing.assert_array_equal(matrix.labels, own_labels)

    def test_reexport_is_bitwise_identical(self, wrn_checkpoint, tmp_path):
        blobs = []
        for sub in ("a", "b"):
            job = ExportJob(checkpoint=str(wrn_checkpoint["path"]),
                            output_dir=str(tmp_path / sub),
                            splits=["random:16"], batch_size=8)
            export_features(job, model=wrn_checkpoint["model"])
            blobs.append((tmp_path / sub / "random_16.ipff").read_bytes())
        assert blobs[0] == blobs[1]

    def test_unlabeled_split_omits_labels(self, wrn_checkpoint, tmp_path):
        ds = RandomImages(6, seed=1)
        job = ExportJob(checkpoint=str(wrn_checkpoint["path"]),
                        output_dir=str(tmp_path / "out"),
                        splits=["svhn-test"], batch_size=4)
        export_features(job, model=wrn_checkpoint["model"],
                        datasets={"svhn-test": (ds, False)})
        matrix = read_features(tmp_path / "out" / "svhn-test.ipff")
        assert matrix.labels is None
        assert matrix.data.shape == (6, 640)

    def test_manifest_records_run(self, wrn_checkpoint, tmp_path):
        job = ExportJob(checkpoint=str(wrn_checkpoint["path"]),
                        output_dir=str(tmp_path / "out"),
                        splits=["random:8"], batch_size=8)
        export_features(job, model=wrn_checkpoint["model"])
        manifest = (tmp_path / "out" / "export.manifest.txt").read_text()
        assert "model=wrn-28-10" in manifest
        assert "spectral_normalization=True" in manifest
        assert "split=random:8 rows=8 dim=640" in manifest

    def test_non_640_model_rejected(self, tmp_path):
        small = WideResNet(depth=10, widen=1, sn=False)
        job = ExportJob(checkpoint="unused", output_dir=str(tmp_path),
                        splits=["random:4"])
        with pytest.raises(ValueError):
            export_features(job, model=small)

    def test_extract_features_batch_invariance(self, wrn_checkpoint):
        ds = RandomImages(10, seed=5)
        f1, _ = extract_features(wrn_checkpoint["model"], ds, batch_size=10)
        f2, _ = extract_features(wrn_checkpoint["model"], ds, batch_size=3)
        np.testing.assert_allclose(f1, f2, atol=1e-5)
