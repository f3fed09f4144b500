import math

import numpy as np
import pytest

from nucleitk.cli import main, version_and_provenance
from nucleitk.mask_core import load_gray, load_labelmap, load_mask, save_gray, save_labelmap, save_mask


def blob_scene():
    """Dark blob on a bright background; thresholding finds exactly the blob."""
    img = np.full((32, 32), 200, np.uint8)
    mask = np.zeros((32, 32), bool)
    mask[10:16, 8:14] = True
    img[mask] = 60
    return img, mask


def labeled_source(rng, h=64, w=64, k=8):
    labels = np.zeros((h, w), np.int32)
    for i in range(1, k + 1):
        y = int(rng.integers(0, h - 4))
        x = int(rng.integers(0, w - 4))
        labels[y : y + 4, x : x + 4] = i
    img = rng.integers(0, 256, (h, w)).astype(np.uint8)
    return img, labels


class TestVersion:
    def test_defaults_table(self, capsys):
        text = version_and_provenance()
        assert "beta = 2" in text
        assert "min_objects = 3" in text
        assert "radius = 3" in text
        assert "iou_threshold = 0.5" in text

    def test_stable_and_exit_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        first = capsys.readouterr().out
        with pytest.raises(SystemExit):
            main(["--version"])
        assert capsys.readouterr().out == first


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        assert main(["netspec", "--bogus-flag"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_subcommand_is_one(self):
        assert main([]) == 1

    def test_data_error_is_two(self, tmp_path, capsys):
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        save_labelmap(np.ones((2, 2), np.int32), pred / "orphan.png")
        rc = main(["eval", "--pred", str(pred), "--gt", str(gt)])
        assert rc == 2
        assert "orphan.png" in capsys.readouterr().err


class TestNetspecCommand:
    def test_check_all_passes(self, capsys):
        assert main(["netspec", "--check", "all"]) == 0
        out = capsys.readouterr().out
        assert "DIMG: all rows pass" in out
        assert "DSEM: all rows pass" in out

    def test_custom_chain(self, tmp_path, capsys):
        chain = tmp_path / "chain.csv"
        chain.write_text(
            "kind,k,s,p,out_channels,target\n"
            "conv,7,2,3,64,\n"
            "adaptive_avg_pool,,,,,8x8\n"
            "flatten,,,,,\n"
        )
        assert main(["netspec", "--custom", str(chain), "--input", "2x256x256"]) == 0
        out = capsys.readouterr().out
        assert "64x128x128" in out
        assert "4096x1x1" in out

    def test_custom_needs_input(self, tmp_path):
        chain = tmp_path / "chain.csv"
        chain.write_text("conv,3,1,1,8,\n")
        assert main(["netspec", "--custom", str(chain)]) == 1


class TestInpaintCommand:
    def test_identity_fixture_bit_equal(self, tmp_path):
        img, mask = blob_scene()
        a = tmp_path / "a.png"
        m = tmp_path / "m.png"
        o = tmp_path / "o.png"
        save_gray(img, a)
        save_mask(mask, m)
        rc = main(["inpaint", "--image", str(a), "--mask", str(m), "--out", str(o)])
        assert rc == 0
        assert o.read_bytes() == a.read_bytes()

    def test_unannotated_blob_removed(self, tmp_path):
        img, mask = blob_scene()
        img[24:28, 24:28] = 60  # second blob, not annotated
        a = tmp_path / "a.png"
        m = tmp_path / "m.png"
        o = tmp_path / "o.png"
        aux = tmp_path / "aux.png"
        save_gray(img, a)
        save_mask(mask, m)
        rc = main(
            ["inpaint", "--image", str(a), "--mask", str(m), "--out", str(o), "--aux-out", str(aux)]
        )
        assert rc == 0
        cleaned = load_gray(o)
        aux_mask = load_mask(aux)
        assert aux_mask.sum() == 16
        assert (cleaned[aux_mask] == 200).all()
        assert (cleaned[~aux_mask] == img[~aux_mask]).all()

    def test_missing_image_is_data_error(self, tmp_path):
        m = tmp_path / "m.png"
        save_mask(np.zeros((4, 4), bool), m)
        rc = main(
            ["inpaint", "--image", str(tmp_path / "nope.png"), "--mask", str(m), "--out", "x.png"]
        )
        assert rc == 2


class TestConfigFile:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("radius = 5\nwibble = 1\n")
        img, mask = blob_scene()
        save_gray(img, tmp_path / "a.png")
        save_mask(mask, tmp_path / "m.png")
        rc = main(
            ["inpaint", "--image", str(tmp_path / "a.png"), "--mask", str(tmp_path / "m.png"),
             "--out", str(tmp_path / "o.png"), "--config", str(cfg)]
        )
        assert rc == 1
        assert "wibble" in capsys.readouterr().err

    def test_config_supplies_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("total_steps = 8\nbeta = 3\n")
        out = tmp_path / "sched.csv"
        rc = main(["schedule", "--total-steps", "4", "--out", str(out), "--config", str(cfg)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 4  # header + explicit --total-steps rows, not the file's 8


class TestScheduleCommand:
    def test_csv_layout_and_determinism(self, tmp_path):
        out1 = tmp_path / "s1.csv"
        out2 = tmp_path / "s2.csv"
        assert main(["schedule", "--total-steps", "8", "--out", str(out1)]) == 0
        assert main(["schedule", "--total-steps", "8", "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().splitlines()
        assert lines[0] == "step,alpha_img,alpha_ins,alpha_sem,alpha_da,lr"
        assert len(lines) == 9
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[4]) == 0.0  # ramp starts at zero

    def test_trace_row_error_is_data_error(self, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        trace.write_text("0.5,0.5,0.5\n0,0.5,0.5\n")
        rc = main(
            ["schedule", "--total-steps", "2", "--trace", str(trace),
             "--out", str(tmp_path / "s.csv")]
        )
        assert rc == 2
        assert "line 2" in capsys.readouterr().err


class TestEntropyCommand:
    def test_png_channels_to_csv(self, tmp_path):
        a = np.full((4, 4), 127, np.uint8)
        b = np.full((4, 4), 128, np.uint8)
        save_gray(a, tmp_path / "c0.png")
        save_gray(b, tmp_path / "c1.png")
        out = tmp_path / "e.csv"
        rc = main(
            ["entropy", "--prob", f"{tmp_path}/c0.png,{tmp_path}/c1.png", "--out", str(out)]
        )
        assert rc == 0
        rows = [list(map(float, line.split(","))) for line in out.read_text().splitlines()]
        assert len(rows) == 4 and len(rows[0]) == 4
        assert abs(rows[0][0] - math.log(2)) < 1e-4

    def test_npy_input_to_png(self, tmp_path):
        prob = np.full((5, 6, 2), 0.5)
        np.save(tmp_path / "p.npy", prob)
        out = tmp_path / "e.png"
        rc = main(["entropy", "--prob", str(tmp_path / "p.npy"), "--out", str(out)])
        assert rc == 0
        ent = load_gray(out)
        assert (ent == 255).all()  # ln2 / ln2 -> full scale

    def test_unnormalized_channels_rejected(self, tmp_path):
        a = np.full((4, 4), 128, np.uint8)
        save_gray(a, tmp_path / "c0.png")
        save_gray(a, tmp_path / "c1.png")
        rc = main(
            ["entropy", "--prob", f"{tmp_path}/c0.png,{tmp_path}/c1.png",
             "--out", str(tmp_path / "e.csv")]
        )
        assert rc == 2


class TestEvalCommand:
    def _fixture(self, tmp_path):
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        lm = np.zeros((8, 8), np.int32)
        lm[1:4, 1:4] = 1
        save_labelmap(lm, pred / "a.png")
        save_labelmap(lm, gt / "a.png")
        return pred, gt

    def test_report_written(self, tmp_path, capsys):
        pred, gt = self._fixture(tmp_path)
        out = tmp_path / "report.csv"
        rc = main(["eval", "--pred", str(pred), "--gt", str(gt), "--out", str(out)])
        assert rc == 0
        assert out.read_text().splitlines()[1] == "a.png,1.000000,1.000000,1.000000"
        stdout = capsys.readouterr().out
        assert "aji mean=1.000000" in stdout

    def test_manifest_pairing(self, tmp_path):
        pred, gt = self._fixture(tmp_path)
        manifest = tmp_path / "pairs.csv"
        manifest.write_text(f"{pred / 'a.png'},{gt / 'a.png'}\n")
        rc = main(["eval", "--manifest", str(manifest), "--out", str(tmp_path / "r.csv")])
        assert rc == 0

    def test_metric_token_validated(self, tmp_path):
        pred, gt = self._fixture(tmp_path)
        assert main(["eval", "--pred", str(pred), "--gt", str(gt), "--metrics", "dice"]) == 1


class TestPreprocessCommand:
    def _sources(self, tmp_path):
        rng = np.random.default_rng(71)
        src = tmp_path / "src"
        (src / "images").mkdir(parents=True)
        (src / "labels").mkdir(parents=True)
        for name in ("s0.png", "s1.png"):
            img, labels = labeled_source(rng)
            save_gray(img, src / "images" / name)
            save_labelmap(labels, src / "labels" / name)
        return src

    def _run(self, src, out, jobs="1"):
        return main(
            ["preprocess", "--src-dir", str(src), "--out-dir", str(out),
             "--patch-size", "32", "--count", "14", "--min-objects", "2",
             "--seed", "9", "--rotations", "0,90,180,270", "--flips", "none,horizontal",
             "--scale-range", "0.8,1.2", "--jobs", jobs]
        )

    def test_outputs_and_manifest(self, tmp_path):
        src = self._sources(tmp_path)
        out = tmp_path / "out"
        assert self._run(src, out) == 0
        manifest = (out / "manifest.csv").read_text().splitlines()
        assert manifest[0] == "patch_id,source,offset_y,offset_x,augmentation,object_count"
        assert len(manifest) > 1
        for line in manifest[1:]:
            fields = line.split(",")
            assert int(fields[-1]) >= 2
            pid = int(fields[0])
            img = load_gray(out / "images" / f"patch_{pid:05d}.png")
            labels = load_labelmap(out / "labels" / f"patch_{pid:05d}.png")
            assert img.shape == (32, 32)
            assert labels.shape == (32, 32)

    def test_reruns_are_byte_identical(self, tmp_path):
        src = self._sources(tmp_path)
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        assert self._run(src, out1) == 0
        assert self._run(src, out2, jobs="4") == 0
        files1 = sorted(p.relative_to(out1) for p in out1.rglob("*.png"))
        files2 = sorted(p.relative_to(out2) for p in out2.rglob("*.png"))
        assert files1 == files2 and files1
        for rel in files1:
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()
        assert (out1 / "manifest.csv").read_bytes() == (out2 / "manifest.csv").read_bytes()

    def test_unpaired_sources_rejected(self, tmp_path):
        src = tmp_path / "src"
        (src / "images").mkdir(parents=True)
        (src / "labels").mkdir(parents=True)
        save_gray(np.zeros((8, 8), np.uint8), src / "images" / "only.png")
        rc = main(["preprocess", "--src-dir", str(src), "--out-dir", str(tmp_path / "o")])
        assert rc == 2
