import json

import numpy as np
import pytest

from voxrefine.cli import build_parser, main
from voxrefine.fusion.camera import ring_rig
from voxrefine.generation.classes import RES_DIR
from voxrefine.io.rig import save_rig
from voxrefine.io.volumes import read_volume, write_volume
from voxrefine.voxel.grid import GridGeometry

GEOM = GridGeometry((0.0, 0.0, 0.0), 1.0, (4, 4, 4))


@pytest.fixture
def volumes(tmp_path):
    gt = np.zeros((4, 4, 4), dtype=np.uint16)
    gt[0, 0, 0:2] = 5
    pred = np.zeros((4, 4, 4), dtype=np.uint16)
    pred[0, 0, 1:3] = 5
    write_volume(tmp_path / "gt.semantic", gt, GEOM, "semantic")
    write_volume(tmp_path / "pred.semantic", pred, GEOM, "semantic")
    return tmp_path


class TestEval:
    def test_identical_volumes(self, volumes, capsys):
        gt = str(volumes / "gt.semantic")
        assert main(["eval", "--pred", gt, "--gt", gt]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["miou"] == 1.0
        assert report["iou"] == 1.0
        assert report["per_class_iou"]["car"] == 1.0

    def test_report_file(self, volumes):
        out = volumes / "metrics.json"
        assert main(["eval", "--pred", str(volumes / "pred.semantic"),
                     "--gt", str(volumes / "gt.semantic"), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["iou"] == pytest.approx(1 / 3)

    def test_occupancy_npy_ground_truth(self, volumes, capsys):
        # flat (index, class) rows, x slowest: cells (0, 0, 0) and (0, 0, 1)
        np.save(volumes / "gt.npy", np.array([[0, 5], [1, 5]]))
        assert main(["eval", "--pred", str(volumes / "pred.semantic"),
                     "--gt", str(volumes / "gt.npy")]) == 0
        assert json.loads(capsys.readouterr().out)["iou"] == pytest.approx(1 / 3)

    def test_dimension_mismatch(self, volumes):
        write_volume(volumes / "big.semantic", np.zeros((8, 8, 8), dtype=np.uint16),
                     GridGeometry((0.0, 0.0, 0.0), 1.0, (8, 8, 8)), "semantic")
        assert main(["eval", "--pred", str(volumes / "big.semantic"),
                     "--gt", str(volumes / "gt.semantic")]) == 4

    def test_truncated(self, volumes):
        path = volumes / "pred.semantic"
        path.write_bytes(path.read_bytes()[:-1])
        assert main(["eval", "--pred", str(path), "--gt", str(volumes / "gt.semantic")]) == 3

    def test_missing(self, volumes):
        assert main(["eval", "--pred", str(volumes / "none.semantic"),
                     "--gt", str(volumes / "gt.semantic")]) == 2


class TestLabelGen:
    def test_synthetic(self, tmp_path, capsys):
        out = tmp_path / "labels"
        assert main(["-q", "label-gen", "--dataset", "synthetic", "--sequence", "empty,wall",
                     "--out", str(out), "--stride", "8"]) == 0
        histogram = json.loads(capsys.readouterr().out)
        assert histogram["occluded"] > 0
        summary = json.loads((out / "summary.json").read_text())
        assert [f["frame"] for f in summary["frames"]] == ["empty", "wall"]
        occ, geom, fields = read_volume(out / "wall.occlusion")
        assert fields["kind"] == "occlusion"
        assert occ.shape == geom.dims == (64, 64, 16)

    def test_unknown_scene(self, tmp_path):
        assert main(["label-gen", "--dataset", "synthetic", "--sequence", "forest",
                     "--out", str(tmp_path)]) == 1

    def test_missing_dataset(self, tmp_path):
        assert main(["label-gen", "--dataset", str(tmp_path / "kitti"), "--sequence", "00",
                     "--out", str(tmp_path / "out")]) == 2

    def test_bad_config(self, tmp_path):
        assert main(["label-gen", "--dataset", "synthetic", "--sequence", "empty",
                     "--out", str(tmp_path), "--config", str(tmp_path / "none.json")]) == 1


class TestForward:
    def test_wall_scene(self, tmp_path, capsys):
        assert main(["-q", "forward", "--scene", "wall", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "stage,seconds,voxels,shape"
        assert "x21 at scale 4" in out and "x21 at scale 1" in out
        report = json.loads((tmp_path / "forward.json").read_text())
        assert report["gt_self_eval"]["miou"] == 1.0
        assert report["tau1"] == 0.4
        sem, geom, _ = read_volume(tmp_path / "pred1.semantic")
        assert sem.shape == (64, 64, 16)
        assert geom.scale == 1
        assert (tmp_path / "pred4.occlusion").is_file()

    def test_bad_scene(self):
        assert main(["forward", "--scene", "random:abc"]) == 1

    @pytest.mark.parametrize("section", [{"refine": {"tau1": "high"}},
                                         {"decoder": {"hidden": ["wide"]}}])
    def test_mistyped_config(self, tmp_path, section):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(section))
        assert main(["forward", "--scene", "empty", "--config", str(path)]) == 1

    def test_rig_file(self, tmp_path):
        # a single camera far off the grid sees none of the wall
        rig = tmp_path / "rig.json"
        save_rig(ring_rig(1, position=(1000.0, 1000.0, 1000.0)), rig)
        assert main(["-q", "forward", "--scene", "wall", "--rig", str(rig),
                     "--out", str(tmp_path)]) == 0
        stats = json.loads((tmp_path / "forward.json").read_text())["stats"]
        assert stats["voxels"] > 0
        assert stats["misses"] == stats["voxels"]

    def test_sweeps_concatenated(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"geometry": {"preset": "custom", "origin": [0, -8, -4],
                                                   "voxel_size": 0.5, "dims": [32, 32, 16]}}))
        sweep = np.array([[5.0, 0.0, 0.0, 0.1], [6.0, 1.0, 0.5, 0.2],
                          [7.0, -1.0, 0.2, 0.3], [8.0, 0.5, -0.5, 0.4]], dtype="<f4")
        sweep.tofile(tmp_path / "a.bin")
        (sweep + np.array([4.0, 0.0, 0.0, 0.0], dtype="<f4")).tofile(tmp_path / "b.bin")
        rig = str(RES_DIR / "nuscenes_ring_rig.json")

        voxels = []
        for sweeps in (["a.bin"], ["a.bin", "b.bin"]):
            out = tmp_path / str(len(sweeps))
            assert main(["-q", "forward", "--config", str(config), "--rig", rig, "--out", str(out),
                         "--velodyne", *[str(tmp_path / s) for s in sweeps]]) == 0
            stages = json.loads((out / "forward.json").read_text())["stages"]
            voxels.append(stages[0]["voxels"])
        assert voxels == [4, 8]

    def test_missing_rig(self, tmp_path):
        assert main(["forward", "--scene", "empty", "--rig", str(tmp_path / "none.json")]) == 2

    def test_velodyne_needs_calib(self, tmp_path):
        assert main(["forward", "--velodyne", str(tmp_path / "x.bin")]) == 1


class TestBench:
    def test_csv(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert main(["-q", "bench", "--sizes", "1", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "size,dims,stage,seconds,voxels,semi_fine,fine,peak_mb"
        assert [line.split(",")[2] for line in lines[1:]] == \
            ["lidar", "densify", "fuse", "refine", "head", "decoder"]
        assert lines[1].startswith("1,64x64x16,")

    def test_bad_sizes(self):
        assert main(["bench", "--sizes", "one"]) == 1


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
