"""Black-box tests of the command line interface via subprocess."""

import json
import subprocess
import sys

import numpy as np
import pytest

from lesionkit import (
    Grid3,
    Mask,
    aggregate,
    evaluate_case,
    label_components,
    read_mask,
    read_volume,
    report_to_json,
    write_volume,
)

from conftest import make_mask


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "lesionkit", *map(str, args)],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="session")
def phantom_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("phantom")
    r = run_cli(
        "phantom", "--out", root, "--cases", 3, "--seed", 42,
        "--lesions", 3, "--size", 32, "--spacing", "2,2,2",
    )
    assert r.returncode == 0, r.stderr
    return root


@pytest.fixture(scope="session")
def perfect_pair_root(tmp_path_factory, phantom_root):
    """pred == gt for every phantom case."""
    root = tmp_path_factory.mktemp("perfect")
    for case_dir in sorted(phantom_root.iterdir()):
        gt = read_mask(case_dir / "gt.nii.gz")
        out = root / case_dir.name
        out.mkdir()
        write_volume(gt, out / "gt.nii.gz")
        write_volume(gt, out / "pred.nii.gz")
    return root


@pytest.fixture(scope="session")
def corrupted_pair_root(tmp_path_factory, phantom_root):
    """gt plus predictions with small spurious blobs (2x2x2 corners)."""
    root = tmp_path_factory.mktemp("corrupted")
    rng = np.random.Generator(np.random.PCG64(99))
    for case_dir in sorted(phantom_root.iterdir()):
        gt = read_mask(case_dir / "gt.nii.gz")
        bits = gt.bits.copy(order="F")
        for _ in range(3):
            c = rng.integers(1, np.array(gt.grid.dims) - 3)
            n = int(rng.integers(1, 9))  # blob of 1..8 voxels inside a 2x2x2 box
            cells = rng.choice(8, size=n, replace=False)
            for cell in cells:
                bits[c[0] + (cell & 1), c[1] + ((cell >> 1) & 1), c[2] + ((cell >> 2) & 1)] = True
        out = root / case_dir.name
        out.mkdir()
        write_volume(gt, out / "gt.nii.gz")
        write_volume(Mask(gt.grid, bits), out / "pred.nii.gz")
    return root


class TestPhantomCmd:
    def test_outputs_exist(self, phantom_root):
        cases = sorted(p.name for p in phantom_root.iterdir())
        assert len(cases) == 3
        for name in cases:
            d = phantom_root / name
            for f in ("pet.nii.gz", "ct.nii.gz", "gt.nii.gz", "lesions.json"):
                assert (d / f).is_file()

    def test_lesion_manifest(self, phantom_root):
        d = sorted(phantom_root.iterdir())[0]
        payload = json.loads((d / "lesions.json").read_text())
        assert payload["n_lesions"] == 3
        assert len(payload["lesions"]) == 3
        gt = read_mask(d / "gt.nii.gz")
        assert label_components(gt).count == 3
        assert sum(l["voxels"] for l in payload["lesions"]) == gt.foreground_count

    def test_deterministic_bytes(self, tmp_path):
        args = ["--cases", 2, "--seed", 7, "--lesions", 2, "--size", 24]
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("phantom", "--out", a, *args).returncode == 0
        assert run_cli("phantom", "--out", b, *args).returncode == 0
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b and files_a
        for rel in files_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()


class TestEvalCmd:
    def test_perfect_prediction(self, perfect_pair_root, tmp_path):
        out = tmp_path / "report.json"
        r = run_cli("eval", "--pred", perfect_pair_root, "--gt", perfect_pair_root,
                    "--out", out, "--jobs", 1)
        assert r.returncode == 0, r.stderr
        payload = json.loads(out.read_text())
        assert payload["mean_dice"] == 1.0
        assert payload["mean_fp_volume_ml"] == 0.0
        assert payload["mean_fn_volume_ml"] == 0.0
        assert payload["n_cases"] == 3

    def test_jobs_byte_identical_and_match_library(self, corrupted_pair_root, tmp_path):
        reports = {}
        for jobs in (1, 2):
            out = tmp_path / f"report_{jobs}.json"
            r = run_cli("eval", "--pred", corrupted_pair_root, "--gt", corrupted_pair_root,
                        "--out", out, "--jobs", jobs)
            assert r.returncode == 0, r.stderr
            reports[jobs] = out.read_bytes()
        assert reports[1] == reports[2]

        case_ids = sorted(p.name for p in corrupted_pair_root.iterdir())
        cases = []
        for cid in case_ids:
            pred = read_mask(corrupted_pair_root / cid / "pred.nii.gz")
            gt = read_mask(corrupted_pair_root / cid / "gt.nii.gz")
            cases.append(evaluate_case(cid, pred, gt, connectivity=26))
        report = aggregate(cases)
        assert reports[1].decode() == report_to_json(report, connectivity=26, min_size_applied=0)

    def test_empty_pred_root(self, perfect_pair_root, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        r = run_cli("eval", "--pred", empty, "--gt", perfect_pair_root,
                    "--out", tmp_path / "r.json")
        assert r.returncode == 2
        assert "no cases found" in r.stderr

    def test_unpaired_cases(self, tmp_path, grid8):
        pred_root = tmp_path / "pred"
        gt_root = tmp_path / "gt"
        m = make_mask(grid8, [(0, 0, 0)])
        for cid in ("case_a", "case_b"):
            (pred_root / cid).mkdir(parents=True)
            write_volume(m, pred_root / cid / "pred.nii.gz")
        (gt_root / "case_a").mkdir(parents=True)
        write_volume(m, gt_root / "case_a" / "gt.nii.gz")
        r = run_cli("eval", "--pred", pred_root, "--gt", gt_root,
                    "--out", tmp_path / "r.json")
        assert r.returncode == 2
        assert "unpaired" in r.stderr
        assert "case_b" in r.stderr

    def test_geometry_mismatch_is_usage_error(self, tmp_path):
        pred_root = tmp_path / "pred"
        gt_root = tmp_path / "gt"
        (pred_root / "c1").mkdir(parents=True)
        (gt_root / "c1").mkdir(parents=True)
        small = make_mask(Grid3(dims=(4, 4, 4)), [(0, 0, 0)])
        big = make_mask(Grid3(dims=(8, 8, 8)), [(0, 0, 0)])
        write_volume(small, pred_root / "c1" / "pred.nii.gz")
        write_volume(big, gt_root / "c1" / "gt.nii.gz")
        r = run_cli("eval", "--pred", pred_root, "--gt", gt_root,
                    "--out", tmp_path / "r.json")
        assert r.returncode == 2


class TestSweepCmd:
    def test_single_threshold_matches_eval(self, corrupted_pair_root, tmp_path):
        csv_out = tmp_path / "sweep.csv"
        json_out = tmp_path / "report.json"
        r = run_cli("sweep", "--pred", corrupted_pair_root, "--gt", corrupted_pair_root,
                    "--out", csv_out, "--thresholds", "0", "--jobs", 1)
        assert r.returncode == 0, r.stderr
        r = run_cli("eval", "--pred", corrupted_pair_root, "--gt", corrupted_pair_root,
                    "--out", json_out, "--jobs", 1)
        assert r.returncode == 0, r.stderr
        lines = csv_out.read_text().splitlines()
        assert lines[0] == "threshold_voxels,mean_dice,mean_fp_volume_ml,mean_fn_volume_ml"
        assert len(lines) == 2
        t, dice, fp, fn = lines[1].split(",")
        payload = json.loads(json_out.read_text())
        assert int(t) == 0
        assert float(dice) == pytest.approx(payload["mean_dice"], rel=1e-12)
        assert float(fp) == pytest.approx(payload["mean_fp_volume_ml"], rel=1e-12)
        assert float(fn) == pytest.approx(payload["mean_fn_volume_ml"], rel=1e-12)

    def test_default_thresholds_fp_monotone(self, corrupted_pair_root, tmp_path):
        out = tmp_path / "sweep.csv"
        r = run_cli("sweep", "--pred", corrupted_pair_root, "--gt", corrupted_pair_root,
                    "--out", out, "--jobs", 2)
        assert r.returncode == 0, r.stderr
        lines = out.read_text().splitlines()
        rows = [line.split(",") for line in lines[1:]]
        assert [int(row[0]) for row in rows] == [0, 5, 10, 20, 40, 80]
        fps = [float(row[2]) for row in rows]
        assert all(a >= b for a, b in zip(fps, fps[1:]))
        # the injected blobs are at most 8 voxels, so threshold 10 removes them all
        assert fps[2] < fps[0]
        assert fps[2] == 0.0


class TestPostprocCmd:
    def test_zero_threshold_identity(self, phantom_root, tmp_path):
        src = sorted(phantom_root.iterdir())[0] / "gt.nii.gz"
        out = tmp_path / "same.nii.gz"
        r = run_cli("postproc", "--in", src, "--out", out, "--min-size", 0)
        assert r.returncode == 0, r.stderr
        assert np.array_equal(read_mask(out).bits, read_mask(src).bits)

    def test_worked_example(self, tmp_path):
        g = Grid3(dims=(20, 8, 8), spacing=(2.0, 2.0, 2.0))
        coords = []
        for i, size in enumerate((3, 10, 40)):
            x = 6 * i
            coords += [(x, y % 8, y // 8) for y in range(size)]
        m = make_mask(g, coords)
        src = tmp_path / "in.nii.gz"
        out = tmp_path / "out.nii.gz"
        write_volume(m, src)
        r = run_cli("postproc", "--in", src, "--out", out, "--min-size", 10)
        assert r.returncode == 0, r.stderr
        result = label_components(read_mask(out))
        assert sorted(result.sizes.values()) == [10, 40]

    def test_min_size_ml(self, tmp_path):
        # 0.08 mL at 8 mm^3 voxels -> ceil(10.0) = 10 voxels
        g = Grid3(dims=(20, 8, 8), spacing=(2.0, 2.0, 2.0))
        coords = [(0, y % 8, y // 8) for y in range(9)]
        coords += [(10, y % 8, y // 8) for y in range(10)]
        m = make_mask(g, coords)
        src = tmp_path / "in.nii.gz"
        out = tmp_path / "out.nii.gz"
        write_volume(m, src)
        r = run_cli("postproc", "--in", src, "--out", out, "--min-size-ml", 0.08)
        assert r.returncode == 0, r.stderr
        result = label_components(read_mask(out))
        assert sorted(result.sizes.values()) == [10]

    def test_both_size_flags_rejected(self, tmp_path):
        r = run_cli("postproc", "--in", "x.nii.gz", "--out", "y.nii.gz",
                    "--min-size", 5, "--min-size-ml", 0.1)
        assert r.returncode == 2

    def test_missing_input(self, tmp_path):
        r = run_cli("postproc", "--in", tmp_path / "nope.nii.gz",
                    "--out", tmp_path / "out.nii.gz", "--min-size", 0)
        assert r.returncode == 1


class TestStatsCmd:
    def test_component_rows(self, phantom_root, tmp_path):
        src = sorted(phantom_root.iterdir())[0] / "gt.nii.gz"
        hist = tmp_path / "hist.csv"
        comp = tmp_path / "components.csv"
        r = run_cli("stats", "--mask", src, "--out", hist, "--components-out", comp)
        assert r.returncode == 0, r.stderr
        comp_lines = comp.read_text().splitlines()
        assert comp_lines[0] == "id,voxels,volume_ml,cx,cy,cz"
        assert len(comp_lines) == 4  # header + 3 lesions
        hist_lines = hist.read_text().splitlines()
        assert hist_lines[0] == "bin_lo,bin_hi,count"
        counts = [int(line.split(",")[2]) for line in hist_lines[1:]]
        assert sum(counts) == 3

    def test_custom_bins(self, phantom_root, tmp_path):
        src = sorted(phantom_root.iterdir())[0] / "gt.nii.gz"
        hist = tmp_path / "hist.csv"
        r = run_cli("stats", "--mask", src, "--out", hist,
                    "--components-out", tmp_path / "c.csv", "--bins", "1,1000000")
        assert r.returncode == 0, r.stderr
        lines = hist.read_text().splitlines()
        assert len(lines) == 2
        assert lines[1].split(",")[2] == "3"

    def test_empty_mask(self, tmp_path, grid8):
        src = tmp_path / "empty.nii.gz"
        write_volume(make_mask(grid8, []), src)
        hist = tmp_path / "hist.csv"
        comp = tmp_path / "comp.csv"
        r = run_cli("stats", "--mask", src, "--out", hist, "--components-out", comp)
        assert r.returncode == 0, r.stderr
        assert comp.read_text().splitlines() == ["id,voxels,volume_ml,cx,cy,cz"]
        counts = [int(line.split(",")[2]) for line in hist.read_text().splitlines()[1:]]
        assert sum(counts) == 0


class TestPreprocessCmd:
    def test_outputs_on_pet_grid(self, phantom_root, tmp_path):
        out_root = tmp_path / "prep"
        stats = tmp_path / "stats.json"
        r = run_cli("preprocess", "--cases", phantom_root, "--stats", stats,
                    "--out", out_root, "--compute-stats", "--jobs", 1)
        assert r.returncode == 0, r.stderr
        assert stats.is_file()
        for case_dir in sorted(phantom_root.iterdir()):
            pet = read_volume(out_root / case_dir.name / "pet_norm.nii.gz")
            ct = read_volume(out_root / case_dir.name / "ct_norm.nii.gz")
            src_pet = read_volume(case_dir / "pet.nii.gz")
            assert pet.grid.approx_equal(src_pet.grid)
            assert ct.grid.approx_equal(src_pet.grid)
            assert np.all(np.isfinite(pet.values))
            assert np.all(np.isfinite(ct.values))

    def test_missing_stats_hint(self, phantom_root, tmp_path):
        r = run_cli("preprocess", "--cases", phantom_root,
                    "--stats", tmp_path / "absent.json", "--out", tmp_path / "o")
        assert r.returncode == 2
        assert "--compute-stats" in r.stderr

    def test_rerun_byte_identical(self, phantom_root, tmp_path):
        stats = tmp_path / "stats.json"
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        r = run_cli("preprocess", "--cases", phantom_root, "--stats", stats,
                    "--out", out_a, "--compute-stats", "--jobs", 1)
        assert r.returncode == 0, r.stderr
        r = run_cli("preprocess", "--cases", phantom_root, "--stats", stats,
                    "--out", out_b, "--jobs", 2)
        assert r.returncode == 0, r.stderr
        for case_dir in sorted(phantom_root.iterdir()):
            for name in ("pet_norm.nii.gz", "ct_norm.nii.gz"):
                assert (out_a / case_dir.name / name).read_bytes() == \
                    (out_b / case_dir.name / name).read_bytes()


class TestSampleCmd:
    def test_manifest_and_foreground(self, phantom_root, tmp_path):
        case = sorted(phantom_root.iterdir())[0]
        out = tmp_path / "patches"
        r = run_cli("sample", "--image", case / "pet.nii.gz", "--label", case / "gt.nii.gz",
                    "--out", out, "--patch-size", 16, "--batch", 4,
                    "--oversample", 0.5, "--seed", 3)
        assert r.returncode == 0, r.stderr
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["batch_size"] == 4
        assert len(manifest["patches"]) == 4
        fg = [p["contains_foreground"] for p in manifest["patches"]]
        assert sum(fg) >= 2  # ceil(0.5 * 4) forced foreground patches
        for entry in manifest["patches"]:
            assert (out / entry["label"]).is_file()
            for img in entry["images"]:
                assert (out / img).is_file()

    def test_empty_label_warns_but_succeeds(self, tmp_path, grid8, rng):
        from lesionkit import Volume

        img = Volume(grid8, rng.normal(size=grid8.dims))
        img_path = tmp_path / "img.nii.gz"
        lbl_path = tmp_path / "lbl.nii.gz"
        write_volume(img, img_path)
        write_volume(make_mask(grid8, []), lbl_path)
        out = tmp_path / "patches"
        r = run_cli("sample", "--image", img_path, "--label", lbl_path,
                    "--out", out, "--patch-size", 4, "--batch", 2,
                    "--oversample", 0.5, "--seed", 0)
        assert r.returncode == 0, r.stderr
        assert "foreground" in r.stderr.lower()
        assert (out / "manifest.json").is_file()


class TestUsageErrors:
    def test_no_subcommand(self):
        assert run_cli().returncode == 2

    def test_unknown_subcommand(self):
        assert run_cli("frobnicate").returncode == 2

    def test_bad_connectivity(self, tmp_path):
        r = run_cli("postproc", "--in", "x", "--out", "y", "--connectivity", 7)
        assert r.returncode == 2
