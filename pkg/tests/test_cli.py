import json

import numpy as np
import pytest

from pmf.cli import main
from pmf.evaluation import read_permutation
from pmf.geometry import read_ply_colors, write_mesh
from pmf.sampling import farthest_point_sampling, read_hierarchy
from pmf.metric import MeshGeodesicSpace
from pmf.synthetic import bumpy, icosphere


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def circle_fixture(tmp_path):
    n, r = 256, 7
    (tmp_path / "m.txt").write_text("0 7\n96 103\n")
    (tmp_path / "truth.txt").write_text("".join(f"{i} {(i + r) % n}\n" for i in range(n)))
    return tmp_path


def test_fps_two_levels(tmp_path, capsys):
    code, out, _ = run(capsys, "fps", "circle:8", "--sizes", "2,4", "-o", tmp_path / "h.txt")
    assert code == 0
    h = read_hierarchy(tmp_path / "h.txt")
    assert h.sizes == [2, 4] and h[1].indices.tolist() == [0, 4, 2, 6]


def test_fps_non_monotone_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "fps", "circle:8", "--sizes", "4,2", "-o", tmp_path / "h.txt")
    assert code == 2 and "[args]" in err


def test_fps_default_schedule_clipped(tmp_path, capsys):
    code, out, _ = run(capsys, "fps", "circle:20000", "-o", tmp_path / "h.txt")
    assert code == 0
    assert read_hierarchy(tmp_path / "h.txt").sizes == [1000, 2000, 4000, 8000, 16000, 20000]


def test_match_recovers_rotation(circle_fixture, capsys):
    d = circle_fixture
    code, _, err = run(capsys, "match", "circle:256", "circle:256", d / "m.txt", "-o", d / "run")
    assert code == 0, err
    assert (d / "run.perm.txt").read_bytes() == (d / "truth.txt").read_bytes()
    man = json.loads((d / "run.manifest.json").read_text())
    assert man["config"]["sigma_sq_rel"] == 0.02
    assert man["config"]["sigma_sq"] == pytest.approx(0.02 * 256**2 / np.pi)
    assert set(man["outputs"]) == {str(d / "run.perm.txt"), str(d / "run.manifest.json")}
    assert man["result"]["objective_trace"]


def test_match_multiscale(circle_fixture, capsys):
    d = circle_fixture
    code, _, err = run(capsys, "match", "circle:256", "circle:256", d / "m.txt", "-o", d / "ms",
                       "--multiscale", "--schedule", "16,64,256")
    assert code == 0, err
    assert (d / "ms.perm.txt").read_bytes() == (d / "truth.txt").read_bytes()
    man = json.loads((d / "ms.manifest.json").read_text())
    assert man["config"]["schedule"] == [16, 64, 256]
    assert (man["config"]["seed_x"], man["config"]["seed_y"]) == (0, 7)


def test_match_missing_file_is_usage(tmp_path, capsys):
    code, _, err = run(capsys, "match", "circle:8", "circle:8", tmp_path / "none.txt", "-o", tmp_path / "x")
    assert code == 2 and "[load]" in err and "none.txt" in err


def test_match_size_mismatch_points_to_resample(circle_fixture, capsys):
    d = circle_fixture
    code, _, err = run(capsys, "match", "circle:256", "circle:300", d / "m.txt", "-o", d / "x")
    assert code == 3 and "resample" in err


def test_match_bad_mesh_is_validation_error(tmp_path, capsys):
    (tmp_path / "bad.off").write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n")
    (tmp_path / "m.txt").write_text("0 0\n")
    code, _, err = run(capsys, "match", tmp_path / "bad.off", tmp_path / "bad.off", tmp_path / "m.txt",
                       "-o", tmp_path / "x")
    assert code == 3 and "[load]" in err and "face 0" in err


def test_match_infeasible_exit_code(tmp_path, capsys):
    m = bumpy(icosphere(4))
    write_mesh(m, tmp_path / "s.off")
    h = farthest_point_sampling(MeshGeodesicSpace(m), [30], seed=0)
    c = h[0].indices
    scr = c[np.random.default_rng(1).permutation(c.size)]
    (tmp_path / "m.txt").write_text("".join(f"{a} {b}\n" for a, b in zip(c, scr)))
    code, _, err = run(capsys, "match", tmp_path / "s.off", tmp_path / "s.off", tmp_path / "m.txt",
                       "-o", tmp_path / "x", "--multiscale", "--schedule", f"30,{m.n_vertices}",
                       "--sigma-rel", "1e-5", "--iters", "1", "--widen", "fail", "--seed-y", "0")
    assert code == 4 and "[match]" in err


def test_eval_examples(circle_fixture, capsys):
    d = circle_fixture
    code, out, _ = run(capsys, "eval", d / "truth.txt", d / "truth.txt", "circle:256", "-o", d / "c.csv")
    assert code == 0 and out.strip() == "mean 0.0, ≤0.05: 100%"
    (d / "ident8.txt").write_text("".join(f"{i} {i}\n" for i in range(8)))
    (d / "shift8.txt").write_text("".join(f"{i} {(i + 1) % 8}\n" for i in range(8)))
    code, out, _ = run(capsys, "eval", d / "shift8.txt", d / "ident8.txt", "circle:8", "-o", d / "s.csv")
    assert code == 0 and out.startswith("mean 0.25,")
    assert (d / "s.csv").read_text().startswith("threshold,fraction\n")


def test_eval_length_mismatch(circle_fixture, capsys):
    d = circle_fixture
    (d / "ident8.txt").write_text("".join(f"{i} {i}\n" for i in range(8)))
    code, _, err = run(capsys, "eval", d / "ident8.txt", d / "truth.txt", "circle:256")
    assert code == 3 and "8" in err and "256" in err


def test_resample(tmp_path, capsys):
    m = icosphere(8)
    write_mesh(m, tmp_path / "ico.off")
    code, out, _ = run(capsys, "resample", tmp_path / "ico.off", 100, "-o", tmp_path / "r")
    assert code == 0
    desc = json.loads((tmp_path / "r.json").read_text())
    assert desc["count"] == 100 and desc["covering_radius"] > 0
    idx = np.loadtxt(tmp_path / "r.index.txt", dtype=int)
    assert idx.size == 100 and (np.diff(idx) > 0).all()
    code, _, _ = run(capsys, "resample", tmp_path / "ico.off", 642, "-o", tmp_path / "full")
    assert code == 0
    assert np.loadtxt(tmp_path / "full.index.txt", dtype=int).tolist() == list(range(642))
    code, _, err = run(capsys, "resample", tmp_path / "ico.off", 643, "-o", tmp_path / "x")
    assert code == 2 and "[args]" in err


def test_resampled_descriptor_is_a_space(tmp_path, capsys):
    code, _, _ = run(capsys, "resample", "circle:64", 64, "-o", tmp_path / "r")
    assert code == 0
    (tmp_path / "m.txt").write_text("0 5\n20 25\n")
    code, _, err = run(capsys, "match", tmp_path / "r.json", "circle:64", tmp_path / "m.txt", "-o", tmp_path / "o")
    assert code == 0, err
    assert read_permutation(tmp_path / "o.perm.txt").forward.tolist() == [(i + 5) % 64 for i in range(64)]


def test_transfer(tmp_path, capsys):
    m = icosphere(3)
    write_mesh(m, tmp_path / "a.ply")
    (tmp_path / "p.txt").write_text("".join(f"{i} {i}\n" for i in range(m.n_vertices)))
    code, _, _ = run(capsys, "transfer", tmp_path / "a.ply", tmp_path / "a.ply", tmp_path / "p.txt", tmp_path / "o.ply")
    assert code == 0
    c = read_ply_colors(tmp_path / "o.ply")
    assert c.shape == (m.n_vertices, 3) and c.min() >= 0 and c.max() <= 255


def test_byte_identical_reruns_and_threads(circle_fixture, capsys):
    d = circle_fixture
    outs = []
    for tag, threads in (("a", 1), ("b", 1), ("c", 3)):
        assert run(capsys, "match", "circle:256", "circle:256", d / "m.txt", "-o", d / tag,
                   "--multiscale", "--schedule", "16,64,256", "--threads", threads)[0] == 0
        assert run(capsys, "eval", d / f"{tag}.perm.txt", d / "truth.txt", "circle:256")[0] == 0
        outs.append(((d / f"{tag}.perm.txt").read_bytes(), (d / f"{tag}.curve.csv").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_usage_errors_from_argparse(capsys):
    assert main([]) == 2
    assert main(["match", "circle:8"]) == 2
    code, _, err = run(capsys, "fps", "circle:x", "-o", "h.txt")
    assert code == 2 and "[load]" in err
