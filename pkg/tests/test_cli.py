import numpy as np
import pytest

from ndlod.cli import (RunConfig, build_config, main, read_config_file,
                       write_convergence_csv)


def run(args):
    return main(args)


def test_generate_and_check_cordes(tmp_path, capsys):
    coeff = tmp_path / "c.bin"
    rc = run(["generate-coeff", "--eps-exp", "4", "--seed", "5",
              "--coeff-file", str(coeff), "--out-dir", str(tmp_path)])
    assert rc == 0
    assert coeff.exists()
    rc = run(["check-cordes", "--coeff-file", str(coeff), "--out-dir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "delta_max" in out and "satisfied" in out


def test_generate_coeff_identity_delta_max(capsys, tmp_path, monkeypatch):
    # identity coefficients: reported delta_max = 1
    from ndlod import CoeffSet, check_cordes

    rep = check_cordes(CoeffSet.identity(), 1.0)
    assert rep.delta_max == 1.0


def test_widened_range_fails_with_nonzero_exit(tmp_path):
    # widening the off-diagonal range breaks the bound; the CLI must refuse
    import ndlod.cli as cli
    from ndlod import CoeffSet, check_cordes

    cs = CoeffSet.multiscale(seed=5, eps_exp=4, a12_range=(-1.2, -0.9))
    assert not check_cordes(cs, 0.1).satisfied
    cfg = RunConfig(eps_exp=4, seed=5, out_dir=str(tmp_path))
    orig = CoeffSet.multiscale
    try:
        CoeffSet.multiscale = staticmethod(
            lambda **kw: orig(a12_range=(-1.2, -0.9), **kw))
        assert cli.cmd_generate_coeff(cfg) == 1
    finally:
        CoeffSet.multiscale = orig


def test_solve_lod_deterministic_bytes(tmp_path):
    args = ["solve-lod", "--fine-exp", "4", "--eps-exp", "3", "--coarse-exps", "1",
            "--ell", "2", "--p", "1", "--seed", "9", "--out-dir", str(tmp_path / "a")]
    assert run(args) == 0
    args[-1] = str(tmp_path / "b")
    assert run(args) == 0
    a = (tmp_path / "a" / "errors.csv").read_bytes()
    b = (tmp_path / "b" / "errors.csv").read_bytes()
    assert a == b
    assert (tmp_path / "a" / "z_hat_p1.csv").read_bytes() == \
        (tmp_path / "b" / "z_hat_p1.csv").read_bytes()


def test_solve_lod_zero_load_zero_errors(tmp_path):
    assert run(["solve-lod", "--fine-exp", "4", "--eps-exp", "3", "--coarse-exps", "1",
                "--ell", "2", "--p", "1", "--seed", "9", "--f", "zero",
                "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "errors.csv").read_text().splitlines()
    for row in rows[2:]:
        _, ee, el = row.split(",")
        assert float(ee) < 1e-12 and (el == "nan" or float(el) < 1e-12)


def test_convergence_csv_schema(tmp_path):
    assert run(["convergence", "--fine-exp", "4", "--eps-exp", "3",
                "--coarse-exps", "0,1,2", "--ell", "1,2", "--p", "1",
                "--seed", "3", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ")
    assert "seed=3" in lines[0]
    assert lines[1] == "H,ell,p,err_energy,err_L2,eoc_energy,eoc_L2,wall_time_s"
    # 3 H-levels x 2 ells x (p=0 baseline + p=1)
    assert len(lines) == 2 + 3 * 2 * 2
    for row in lines[2:]:
        assert len(row.split(",")) == 8
        assert "," in row and " " not in row


def test_convergence_eoc_columns(tmp_path):
    run(["convergence", "--fine-exp", "4", "--eps-exp", "3",
         "--coarse-exps", "0,1,2", "--ell", "2", "--p", "1",
         "--seed", "3", "--out-dir", str(tmp_path)])
    lines = (tmp_path / "convergence.csv").read_text().splitlines()[2:]
    rows = [r.split(",") for r in lines]
    series = [r for r in rows if r[2] == "1"]
    series.sort(key=lambda r: -float(r[0]))
    assert series[0][5] == "nan"
    e0, e1 = float(series[0][3]), float(series[1][3])
    expected = np.log(e0 / e1) / np.log(2.0)
    assert abs(float(series[1][5]) - expected) < 1e-12


def test_recover_u_roundtrip(tmp_path):
    from ndlod import CoeffSet, write_coeff_file

    coeff = tmp_path / "identity.bin"
    write_coeff_file(coeff, CoeffSet.identity())
    out = tmp_path / "fine"
    assert run(["solve-fine", "--fine-exp", "4", "--eps-exp", "3", "--seed", "2",
                "--f", "sine-laplacian", "--coeff-file", str(coeff),
                "--out-dir", str(out)]) == 0
    assert run(["recover-u", str(out / "z_fine.csv"), "--fine-exp", "4",
                "--eps-exp", "3", "--recovery-exp", "3",
                "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "u_recovered.csv").read_text().splitlines()
    assert rows[1] == "vertex,x,y,u"
    mesh_rows = rows[2:]
    vals = np.array([float(r.split(",")[3]) for r in mesh_rows])
    xs = np.array([float(r.split(",")[1]) for r in mesh_rows])
    ys = np.array([float(r.split(",")[2]) for r in mesh_rows])
    exact = -np.sin(np.pi * xs) * np.sin(np.pi * ys) / (2 * np.pi**2) * (2 * np.pi**2)
    # u solves Lap u = f with f = -2 pi^2 sin sin, so u = sin sin
    exact = np.sin(np.pi * xs) * np.sin(np.pi * ys)
    assert np.abs(vals - exact).max() < 0.05


def test_config_file_with_flag_override(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("fine_exp = 4\nseed = 11\ncoarse-exps = 0,1\n# comment\n")
    import argparse

    ns = argparse.Namespace(config=str(cfgfile), seed=12, sigma=None, delta=None,
                            eps_exp=3, fine_exp=None, coarse_exps=None, ells=None,
                            ps=None, f=None, coeff_file=None, out_dir=None,
                            recovery_exp=None)
    cfg = build_config(ns)
    assert cfg.fine_exp == 4       # from file
    assert cfg.seed == 12          # flag wins
    assert cfg.coarse_exps == (0, 1)


def test_config_validation_errors():
    import argparse

    ns = argparse.Namespace(config=None, seed=None, sigma=None, delta=None,
                            eps_exp=5, fine_exp=4, coarse_exps=None, ells=None,
                            ps=None, f=None, coeff_file=None, out_dir=None,
                            recovery_exp=None)
    with pytest.raises(SystemExit):
        build_config(ns)   # fine mesh cannot resolve the coefficient grid
