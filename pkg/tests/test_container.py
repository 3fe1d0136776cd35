import numpy as np
import pytest

from binsed.container import export_csv, read_features, write_features
from binsed.errors import DataError
from binsed.layout import FeatureLayout, FeatureMatrix


def _matrix(frames=7, seed=3):
    rng = np.random.default_rng(seed)
    layout = FeatureLayout((("mel_1", 4), ("tdoa", 2)))
    return FeatureMatrix(values=rng.standard_normal((frames, 6)),
                         layout=layout)


class TestRoundTrip:
    def test_values_survive_float32_round_trip(self, tmp_path):
        fm = _matrix()
        path = tmp_path / "clip.feat"
        write_features(path, fm)
        back = read_features(path)
        assert back.layout.blocks == fm.layout.blocks
        assert back.values.dtype == np.float64
        assert np.array_equal(back.values,
                              fm.values.astype(np.float32).astype(np.float64))

    def test_float32_values_are_exact(self, tmp_path):
        layout = FeatureLayout((("a", 3),))
        vals = np.array([[0.5, -1.25, 3.0], [2.0, 0.0, -0.125]])
        fm = FeatureMatrix(values=vals, layout=layout)
        path = tmp_path / "x.feat"
        write_features(path, fm)
        assert np.array_equal(read_features(path).values, vals)

    def test_target_roll_round_trip(self, tmp_path):
        layout = FeatureLayout((("class:dog", 1), ("class:car horn", 1)))
        roll = np.array([[1, 0], [1, 1], [0, 0]], dtype=np.uint8)
        fm = FeatureMatrix(values=roll.astype(np.float64), layout=layout)
        path = tmp_path / "clip.targets"
        write_features(path, fm)
        back = read_features(path)
        assert back.layout.block_names == ("class:dog", "class:car horn")
        assert np.array_equal(back.values.astype(np.uint8), roll)

    def test_zero_frames(self, tmp_path):
        layout = FeatureLayout((("a", 2),))
        fm = FeatureMatrix(values=np.zeros((0, 2)), layout=layout)
        path = tmp_path / "empty.feat"
        write_features(path, fm)
        back = read_features(path)
        assert back.frame_count == 0
        assert back.width == 2

    def test_writes_are_byte_deterministic(self, tmp_path):
        fm = _matrix()
        a, b = tmp_path / "a.feat", tmp_path / "b.feat"
        write_features(a, fm)
        write_features(b, fm)
        assert a.read_bytes() == b.read_bytes()


class TestCorruption:
    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.feat"
        path.write_bytes(b"RIFF" + b"\x00" * 64)
        with pytest.raises(DataError, match="not a feature container"):
            read_features(path)

    def test_truncated_payload(self, tmp_path):
        fm = _matrix()
        path = tmp_path / "clip.feat"
        write_features(path, fm)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 10])
        with pytest.raises(DataError, match="truncated"):
            read_features(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "tiny.feat"
        path.write_bytes(b"BS")
        with pytest.raises(DataError):
            read_features(path)

    def test_unsupported_version(self, tmp_path):
        fm = _matrix()
        path = tmp_path / "clip.feat"
        write_features(path, fm)
        blob = bytearray(path.read_bytes())
        blob[3] = ord("9")
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="version"):
            read_features(path)


class TestCsvExport:
    def test_header_and_cells(self, tmp_path):
        layout = FeatureLayout((("mel_1", 2), ("tdoa", 1)))
        vals = np.array([[1.5, -2.0, 3.25], [0.0, 4.0, -0.5]])
        fm = FeatureMatrix(values=vals, layout=layout)
        path = tmp_path / "clip.csv"
        export_csv(path, fm)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "mel_1[0],mel_1[1],tdoa[0]"
        assert lines[1] == "1.5,-2,3.25"
        assert lines[2] == "0,4,-0.5"
