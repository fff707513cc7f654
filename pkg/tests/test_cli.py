import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from texcamo.cli import RunConfig, main
from texcamo.imageio import write_mask
from texcamo.optim import initial_texture

SMALL = """\
# tiny grid so each run takes well under a second
elevations = 10, 30
azimuth_step_deg = 90
distances = 6
image_w = 48
image_h = 48
texture_w = 32
texture_h = 32
k = 4
epochs = 2
tau = 2
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_roundtrip():
    cfg = RunConfig(elevations=(0.0, 12.5), tau=0.1 + 0.2, enable_lpgd=False, mesh="m.obj",
                    sweep_values=(1.0, 5.0), lpgd_eps=3e-13)
    assert RunConfig.from_text(cfg.to_text()) == cfg
    assert RunConfig.from_text(RunConfig().to_text()) == RunConfig()


@settings(max_examples=50, deadline=None)
@given(tau=st.floats(0, 1e6), lr=st.floats(1e-9, 10), seed=st.integers(0, 2**31),
       dists=st.lists(st.floats(0.1, 100), min_size=1, max_size=4), flag=st.booleans())
def test_config_roundtrip_property(tau, lr, seed, dists, flag):
    cfg = RunConfig(tau=tau, lr=lr, seed=seed, distances=tuple(dists), png=flag)
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_attack_outputs(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    code = main(["attack", "--config", str(cfg_path), "--out", str(out),
                 "--set", "checkpoint_every=2", "--set", "diagnostics=true",
                 "--set", "coverage_dump=true"])
    assert code == 0
    for name in ("texture.npy", "texture.ppm", "metrics.csv", "timing.log", "summary.txt",
                 "config.txt", "run.log", "overhead.txt", "lpgd_diagnostics.csv",
                 "coverage/coverage.csv", "coverage/d6_pre.ppm", "coverage/d6_post.ppm",
                 "checkpoints/step_000002.ppm", "checkpoints/step_000004.ppm"):
        assert (out / name).exists(), name
    summary = (out / "summary.txt").read_text()
    assert "surrogate suppression score" in summary
    assert "surrogate suppression score" in capsys.readouterr().out
    echoed = RunConfig.from_text((out / "config.txt").read_text())
    assert echoed.checkpoint_every == 2 and echoed.k == 4
    sidecar = (out / "checkpoints/step_000002.txt").read_text()
    assert "step = 2" in sidecar and f"config_hash = {echoed.config_hash()}" in sidecar
    rows = _rows(out / "metrics.csv")
    assert len(rows) == 4
    assert list(rows[0]) == ["step", "epoch", "mean_loss", "losses", "grad_norm",
                             "coverage_pre", "coverage_post"]
    assert len(rows[0]["losses"].split(";")) == 4
    assert list(_rows(out / "timing.log")[0]) == ["step", "t_forward_backward", "t_ngc", "t_lpgd"]
    assert (out / "metrics.csv").read_bytes().count(b"\r") == 0


def test_attack_deterministic(tmp_path, cfg_path):
    for name in ("a", "b"):
        assert main(["attack", "--config", str(cfg_path), "--seed", "7",
                     "--out", str(tmp_path / name)]) == 0
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert csvs == ["metrics.csv"]
    for f in ("texture.npy", "texture.ppm", "metrics.csv", "summary.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    assert main(["attack", "--config", str(cfg_path), "--seed", "8",
                 "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a/texture.npy").read_bytes() != (tmp_path / "c/texture.npy").read_bytes()


def test_flags_override_config(tmp_path, cfg_path):
    out = tmp_path / "o"
    main(["attack", "--config", str(cfg_path), "--out", str(out), "--seed", "3",
          "--threads", "2", "--set", "epochs=1"])
    cfg = RunConfig.from_text((out / "config.txt").read_text())
    assert (cfg.seed, cfg.threads, cfg.epochs) == (3, 2, 1)


def test_missing_mesh_names_field(tmp_path, cfg_path, capsys):
    code = main(["attack", "--config", str(cfg_path), "--out", str(tmp_path / "x"),
                 "--set", f"mesh={tmp_path / 'absent.obj'}"])
    assert code == 1
    assert "mesh" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


@pytest.mark.parametrize("argv", [
    ["attack", "--bogus"],
    ["attack", "--set", "nonsense=1"],
    ["attack", "--set", "epochs=0"],
    ["attack", "--set", "k=three"],
    ["ablate", "--sweep", "tau"],
    ["frobnicate"],
    [],
])
def test_usage_and_config_errors_exit_1(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "o")] if argv[:1] in (["attack"], ["ablate"])
                else argv) == 1


def test_corrupt_texture_is_runtime_failure(tmp_path, cfg_path, capsys):
    bad = tmp_path / "bad.npy"
    bad.write_bytes(b"not a numpy file")
    code = main(["eval", "--config", str(cfg_path), "--texture", str(bad),
                 "--out", str(tmp_path / "e")])
    assert code == 2
    assert "runtime error" in capsys.readouterr().err


def test_ablate_quartet(tmp_path, cfg_path):
    out = tmp_path / "ab"
    assert main(["ablate", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = _rows(out / "ablation.csv")
    assert [r["config_id"] for r in rows] == ["baseline", "ngc", "lpgd", "ngc+lpgd"]
    assert len({r["initial_score"] for r in rows}) == 1
    strip = out / "strip.ppm"
    assert strip.exists() and b"\n192 48\n" in strip.read_bytes()[:20]


def test_ablate_tau_sweep(tmp_path, cfg_path):
    out = tmp_path / "tau"
    assert main(["ablate", "--config", str(cfg_path), "--out", str(out), "--sweep", "tau",
                 "--values", "0,1,2,4,8,16", "--set", "epochs=1"]) == 0
    rows = _rows(out / "ablation.csv")
    assert [float(r["tau"]) for r in rows] == [0, 1, 2, 4, 8, 16]


def test_ablate_k_sweep(tmp_path, cfg_path):
    out = tmp_path / "k"
    assert main(["ablate", "--config", str(cfg_path), "--out", str(out), "--sweep", "k",
                 "--values", "1,5,10,20,40", "--set", "azimuth_step_deg=18",
                 "--set", "epochs=1", "--set", "image_w=24", "--set", "image_h=24"]) == 0
    assert [int(r["k"]) for r in _rows(out / "ablation.csv")] == [1, 5, 10, 20, 40]


def test_ablate_k_exceeding_grid(tmp_path, cfg_path):
    assert main(["ablate", "--config", str(cfg_path), "--out", str(tmp_path / "k"),
                 "--sweep", "k", "--values", "1,40"]) == 1


def _texture_file(tmp_path, value=0.5):
    path = tmp_path / "tex.npy"
    np.save(path, np.full((32, 32, 3), value))
    return path


def test_render_one_pose(tmp_path, cfg_path):
    out = tmp_path / "r"
    assert main(["render", "--config", str(cfg_path), "--texture", str(_texture_file(tmp_path)),
                 "--out", str(out), "--azimuth", "30", "--elevation", "7.5",
                 "--distance", "12"]) == 0
    assert sorted(p.name for p in out.glob("*.ppm")) == ["az30_el7.5_d12.ppm"]


def test_render_grid_names(tmp_path, cfg_path):
    out = tmp_path / "r"
    assert main(["render", "--config", str(cfg_path), "--texture", str(_texture_file(tmp_path)),
                 "--out", str(out), "--grid"]) == 0
    names = {p.name for p in out.glob("*.ppm")}
    assert names == {f"az{a}_el{e}_d6.ppm" for a in (0, 90, 180, 270) for e in (10, 30)}


def test_render_missing_texture(tmp_path, cfg_path):
    assert main(["render", "--config", str(cfg_path), "--texture", str(tmp_path / "no.npy"),
                 "--out", str(tmp_path / "r")]) == 1
    assert main(["render", "--config", str(cfg_path), "--out", str(tmp_path / "r")]) == 1


def test_eval_full_elevation_grid_shape(tmp_path):
    out = tmp_path / "e"
    tex = _texture_file(tmp_path)
    assert main(["eval", "--texture", str(tex), "--out", str(out), "--set", "image_w=24",
                 "--set", "image_h=24"]) == 0
    assert len(_rows(out / "scores.csv")) == 1440
    by_el = _rows(out / "by_elevation.csv")
    assert len(by_el) == 8 and all(r["n_poses"] == "180" for r in by_el)
    assert len(_rows(out / "by_distance.csv")) == 1


def test_eval_empty_grid(tmp_path, cfg_path):
    assert main(["eval", "--config", str(cfg_path), "--texture", str(_texture_file(tmp_path)),
                 "--out", str(tmp_path / "e"), "--set", "elevations="]) == 1


def test_trained_beats_gray_per_distance(tmp_path, cfg_path):
    two = ["--set", "distances=5,12", "--set", "azimuth_step_deg=45"]
    assert main(["attack", "--config", str(cfg_path), "--out", str(tmp_path / "a")] + two) == 0
    gray = _texture_file(tmp_path)
    for name, tex in (("gray", gray), ("trained", tmp_path / "a/texture.npy")):
        assert main(["eval", "--config", str(cfg_path), "--texture", str(tex),
                     "--out", str(tmp_path / name)] + two) == 0
    g = _rows(tmp_path / "gray/by_distance.csv")
    t = _rows(tmp_path / "trained/by_distance.csv")
    assert len(g) == 2
    for rg, rt in zip(g, t):
        assert float(rt["mean_score"]) < float(rg["mean_score"])


def test_mask_image(tmp_path, cfg_path):
    mask = np.zeros((32, 32), bool)
    mask[:16] = True
    write_mask(tmp_path / "mask.ppm", mask)
    out = tmp_path / "m"
    assert main(["attack", "--config", str(cfg_path), "--out", str(out),
                 "--set", f"mask={tmp_path / 'mask.ppm'}"]) == 0
    tex = np.load(out / "texture.npy")
    start = initial_texture(32, 32, 0, mask).rgb
    assert np.array_equal(tex[16:], start[16:])
    assert np.any(tex[:16] != start[:16])
    assert main(["attack", "--config", str(cfg_path), "--out", str(out),
                 "--set", f"mask={tmp_path / 'mask.ppm'}", "--set", "texture_w=16"]) == 1
