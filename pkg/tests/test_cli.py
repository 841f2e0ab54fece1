import struct
import threading

import numpy as np
import pytest

from elevmap.cli import main
from elevmap.dataset import ShardReader, read_heightfield

from test_protocol import StubServer


@pytest.fixture(scope="module")
def terrain_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("terrain") / "field.ndhf"
    rc = main(["generate", "--out", str(path), "--seed", "3"])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def small_shard(tmp_path_factory, terrain_file):
    path = tmp_path_factory.mktemp("shard") / "data.ndem"
    rc = main([
        "collect", "--terrain", str(terrain_file), "--frames", "40",
        "--seed", "2", "--out", str(path),
    ])
    assert rc == 0
    return path


class TestGenerate:
    def test_valid_spec_exit_zero_and_file(self, tmp_path):
        out = tmp_path / "t.ndhf"
        assert main(["generate", "--out", str(out), "--seed", "1"]) == 0
        assert out.is_file()
        field = read_heightfield(out)
        assert field.heights.shape == (500, 500)

    def test_same_seed_identical_files(self, tmp_path):
        a, b = tmp_path / "a.ndhf", tmp_path / "b.ndhf"
        main(["generate", "--out", str(a), "--seed", "9"])
        main(["generate", "--out", str(b), "--seed", "9"])
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_spec_exit_2(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("staircases = banana\n")
        assert main(["generate", "--spec", str(bad), "--out", str(tmp_path / "x.ndhf")]) == 2

    def test_spec_file_drives_generation(self, tmp_path):
        cfg = tmp_path / "spec.cfg"
        cfg.write_text("extent = 8 8\nflat_regions = 1\nstaircases = 0\nslopes = 0\n"
                       "corridors = 0\nobstacles = 0\nseed = 4\n")
        out = tmp_path / "flat.ndhf"
        assert main(["generate", "--spec", str(cfg), "--out", str(out)]) == 0
        field = read_heightfield(out)
        assert field.heights.shape == (200, 200)
        assert np.all(field.heights == 0.0)

    def test_pgm_render(self, tmp_path):
        out = tmp_path / "t.ndhf"
        pgm = tmp_path / "t.pgm"
        assert main(["generate", "--out", str(out), "--pgm", str(pgm), "--seed", "1"]) == 0
        header = pgm.read_bytes()[:15]
        assert header.startswith(b"P5\n500 500\n255")


class TestCollect:
    def test_zero_frames_header_only(self, tmp_path, terrain_file):
        out = tmp_path / "empty.ndem"
        rc = main(["collect", "--terrain", str(terrain_file), "--frames", "0",
                   "--out", str(out)])
        assert rc == 0
        assert out.stat().st_size == 24

    def test_impossible_threshold_keeps_nothing(self, tmp_path, terrain_file):
        out = tmp_path / "none.ndem"
        rc = main(["collect", "--terrain", str(terrain_file), "--frames", "5",
                   "--min-obs-rate", "1.01", "--out", str(out)])
        assert rc == 0
        with ShardReader(out) as reader:
            assert len(reader) == 0

    def test_missing_terrain_exit_2(self, tmp_path):
        rc = main(["collect", "--terrain", str(tmp_path / "nope.ndhf"),
                   "--frames", "1", "--out", str(tmp_path / "x.ndem")])
        assert rc == 2

    def test_records_filtered_and_shaped(self, small_shard):
        with ShardReader(small_shard) as reader:
            assert (reader.h, reader.w) == (125, 125)
            assert len(reader) > 0
            for rec in reader:
                assert rec.rate >= np.float32(0.25)
                assert rec.x.shape == (7, 125, 125)
                assert set(np.unique(rec.edge)) <= {0, 1}

    def test_deterministic_given_seed(self, tmp_path, terrain_file):
        a, b = tmp_path / "a.ndem", tmp_path / "b.ndem"
        for out in (a, b):
            rc = main(["collect", "--terrain", str(terrain_file), "--frames", "6",
                       "--seed", "5", "--out", str(out)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()


class TestEval:
    def test_missing_shard_exit_2(self, tmp_path):
        rc = main(["eval", "--shard", str(tmp_path / "nope.ndem"), "--pred", "baseline"])
        assert rc == 2

    def test_baseline_eval_writes_report(self, small_shard, tmp_path):
        report = tmp_path / "report.txt"
        rc = main(["eval", "--shard", str(small_shard), "--pred", "baseline",
                   "--report", str(report)])
        assert rc == 0
        text = report.read_text()
        assert "mmae_cm" in text and "ssim" in text

    def test_endpoint_eval_against_stub(self, small_shard, tmp_path):
        server = StubServer()
        server.start()
        try:
            report = tmp_path / "ep.txt"
            rc = main(["eval", "--shard", str(small_shard), "--pred", "endpoint",
                       "--endpoint", f"127.0.0.1:{server.port}", "--report", str(report)])
            assert rc == 0
            assert report.is_file()
        finally:
            server.stop()

    def test_unreachable_endpoint_exit_3(self, small_shard):
        rc = main(["eval", "--shard", str(small_shard), "--pred", "endpoint",
                   "--endpoint", "127.0.0.1:1"])
        assert rc == 3


class TestRun:
    def test_zero_steps_no_output(self, tmp_path, terrain_file):
        out = tmp_path / "run0"
        server = StubServer()
        server.start()
        try:
            rc = main(["run", "--terrain", str(terrain_file), "--steps", "0",
                       "--endpoint", f"127.0.0.1:{server.port}", "--out", str(out)])
        finally:
            server.stop()
        assert rc == 0
        assert not list(out.glob("*.ndis"))

    def test_stub_endpoint_produces_frames(self, tmp_path, terrain_file):
        out = tmp_path / "run"
        server = StubServer()
        server.start()
        try:
            rc = main(["run", "--terrain", str(terrain_file), "--steps", "5",
                       "--endpoint", f"127.0.0.1:{server.port}", "--out", str(out),
                       "--seed", "1"])
        finally:
            server.stop()
        assert rc == 0
        frames = sorted(out.glob("*.ndis"))
        assert len(frames) == 5
        buf = frames[0].read_bytes()
        magic, h, w = struct.unpack("<4sII", buf[:12])
        assert magic == b"NDIS" and (h, w) == (125, 125)
        assert len(list(out.glob("*_height.pgm"))) == 5
        assert len(list(out.glob("*_sigma.pgm"))) == 5

    def test_endpoint_dies_midway_graceful(self, tmp_path, terrain_file):
        out = tmp_path / "run_fail"
        calls = {"n": 0}
        server = StubServer(handler=self._die_after(calls, 2))
        server.start()
        try:
            rc = main(["run", "--terrain", str(terrain_file), "--steps", "6",
                       "--endpoint", f"127.0.0.1:{server.port}", "--out", str(out),
                       "--seed", "1"])
        finally:
            server.stop()
        assert rc == 3
        # partial output preserved
        assert len(list(out.glob("*.ndis"))) == 2

    @staticmethod
    def _die_after(calls, n):
        from elevmap.protocol import RESPONSE_MAGIC

        def handler(h, w, payload):
            calls["n"] += 1
            if calls["n"] > n:
                raise ConnectionError("simulated crash")
            body = np.zeros((2, h, w), dtype="<f4").tobytes()
            return struct.pack("<4sII", RESPONSE_MAGIC, h, w) + body

        return handler
