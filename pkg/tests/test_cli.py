import numpy as np
import pytest

from defaultable_hjb.cli import main, parse_config


PAPER_INI = """\
[model]
kind = cir
kappa = 0.25
theta = 0.06
xi = {xi}
mu1 = 0.0
mu2 = 1.3608
sigma = 1.2247
gamma1 = 0.0
gamma2 = 0.4145
rho = -0.53

[claim]
phi = {phi}
q = {q}

[preferences]
alpha = 3.0
horizon = 1.0

[grid]
nx = {nx}
nt = {nt}

[mc]
paths = {paths}
steps = {steps}
seed = {seed}
"""


def _write(tmp_path, **kw):
    defaults = dict(xi=0.1, phi="zero", q="1", nx=64, nt=64, paths=4000,
                    steps=100, seed=0)
    defaults.update(kw)
    p = tmp_path / "run.ini"
    p.write_text(PAPER_INI.format(**defaults))
    return str(p)


def test_solve_writes_outputs(tmp_path):
    cfgp = _write(tmp_path)
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfgp, "--out", str(out)])
    assert rc == 0
    for name in ("surface.csv", "residual_summary.txt", "convergence.csv"):
        assert (out / name).exists()
    lines = (out / "surface.csv").read_text().splitlines()
    assert lines[0].startswith("# model.kind = cir")
    # the config echo includes every resolved model value
    echo = [ln for ln in lines if ln.startswith("#")]
    assert any("model.xi = 0.1" in ln for ln in echo)
    assert any("mc.seed = 0" in ln for ln in echo)
    txt = (out / "residual_summary.txt").read_text()
    max_res = float(txt.split("max_abs_residual = ")[1].splitlines()[0])
    assert max_res < 1e-8
    conv = (out / "convergence.csv").read_text().splitlines()
    assert conv[-3].split(",")[0] == "16"  # nx/4
    assert conv[-1].split(",")[0] == "64"


def test_solve_local_and_protected_modes(tmp_path):
    cfgp = _write(tmp_path, nx=48, nt=32)
    out1 = tmp_path / "loc"
    assert main(["solve", "--config", cfgp, "--out", str(out1),
                 "--mode", "local:4"]) == 0
    lines = [ln for ln in (out1 / "surface.csv").read_text().splitlines()
             if not ln.startswith("#")]
    # cutoff boundary: the time-zero row vanishes at both edges
    row0 = [float(v) for v in lines[1].split(",")]
    assert row0[1] == 0.0 and row0[-1] == 0.0
    out2 = tmp_path / "prot"
    assert main(["solve", "--config", cfgp, "--out", str(out2),
                 "--mode", "protected"]) == 0
    assert (out2 / "surface.csv").exists()


def test_price_bond_outputs_and_monotonicity(tmp_path):
    cfgp = _write(tmp_path, phi="one", q="1 5 10", nx=100, nt=100)
    out = tmp_path / "out"
    assert main(["price-bond", "--config", cfgp, "--out", str(out)]) == 0
    lines = [ln for ln in (out / "price_bond.csv").read_text().splitlines()
             if not ln.startswith("#")]
    assert lines[0] == "x,p_q1,p_q5,p_q10"
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.all((data[:, 1:] > 0) & (data[:, 1:] < 1))
    # per-unit price decreases with the notional at every state
    assert np.all(data[:, 1] > data[:, 2])
    assert np.all(data[:, 2] > data[:, 3])


def test_price_insurance_outputs(tmp_path):
    cfgp = _write(tmp_path, nx=100, nt=100)
    out = tmp_path / "out"
    assert main(["price-insurance", "--config", cfgp, "--out", str(out)]) == 0
    ins = [ln for ln in (out / "insurance.csv").read_text().splitlines()
           if not ln.startswith("#")]
    assert ins[0] == "x,rate,upper_bound,physical_intensity"
    data = np.array([[float(v) for v in ln.split(",")] for ln in ins[1:]])
    assert np.all(data[:, 1] <= data[:, 2] + 1e-12)   # rate <= upper bound
    assert np.all(data[:, 1] >= data[:, 3] - 1e-12)   # rate >= intensity
    assert np.all(np.diff(data[:, 1]) > 0)            # increasing in x
    sh = [ln for ln in
          (out / "short_horizon_rate.csv").read_text().splitlines()
          if not ln.startswith("#")]
    assert sh[0] == "alpha_pi,rate_over_sigma2,upper_bound_over_sigma2"
    assert len(sh) == 402


def test_verify_passes_and_is_reproducible(tmp_path):
    cfgp = _write(tmp_path, nx=100, nt=100, paths=4000, steps=100, seed=3)
    out1, out2 = tmp_path / "v1", tmp_path / "v2"
    assert main(["verify", "--config", cfgp, "--out", str(out1)]) == 0
    assert main(["verify", "--config", cfgp, "--out", str(out2)]) == 0
    assert (out1 / "verify.csv").read_bytes() == \
        (out2 / "verify.csv").read_bytes()
    out3 = tmp_path / "v3"
    assert main(["verify", "--config", cfgp, "--out", str(out3),
                 "--seed", "4"]) == 1 or \
        (out3 / "verify.csv").read_bytes() != \
        (out1 / "verify.csv").read_bytes()


def test_verify_debug_fails(tmp_path, capsys):
    cfgp = _write(tmp_path, nx=64, nt=64, paths=2000, steps=50)
    out = tmp_path / "out"
    rc = main(["verify", "--config", cfgp, "--out", str(out), "--debug"])
    assert rc == 1
    captured = capsys.readouterr()
    assert "FAIL" in captured.out
    assert "check failure" in captured.err
    assert (out / "verify.csv").exists()  # artifacts written even on failure


def test_check_assumptions_pass_and_fail(tmp_path):
    out = tmp_path / "ok"
    assert main(["check-assumptions", "--config", _write(tmp_path),
                 "--out", str(out)]) == 0
    txt = (out / "assumptions.txt").read_text()
    assert "[Holds] factor-sde" in txt
    # xi = 0.2 violates the Feller condition: reported as Fails, exit 1
    bad = _write(tmp_path, xi=0.2)
    out2 = tmp_path / "bad"
    assert main(["check-assumptions", "--config", bad,
                 "--out", str(out2)]) == 1
    txt2 = (out2 / "assumptions.txt").read_text()
    assert "[Fails] factor-sde" in txt2
    assert "[Fails] feller-strict" in txt2
    rows = (out2 / "assumptions.csv").read_text().splitlines()
    assert any(r.startswith("feller-strict,Fails") for r in rows)


def test_config_errors_exit_2(tmp_path, capsys):
    # unknown key
    p = tmp_path / "bad1.ini"
    p.write_text("[model]\nkind = cir\nfoo = 1\n")
    assert main(["solve", "--config", str(p)]) == 2
    assert "unknown key" in capsys.readouterr().err
    # unknown section
    p.write_text("[model]\nkind = cir\n[extras]\na = 1\n")
    assert main(["solve", "--config", str(p)]) == 2
    # missing model section
    p.write_text("[grid]\nnx = 32\n")
    assert main(["solve", "--config", str(p)]) == 2
    # unknown model kind
    p.write_text("[model]\nkind = heston\n")
    assert main(["solve", "--config", str(p)]) == 2
    # unreadable path
    assert main(["solve", "--config", str(tmp_path / "missing.ini")]) == 2
    # bad CLI overrides
    good = _write(tmp_path)
    assert main(["solve", "--config", good, "--grid", "64"]) == 2
    assert main(["solve", "--config", good, "--mode", "bogus"]) == 2
    assert main(["solve", "--config", good, "--mode", "local:x"]) == 2


def test_parse_config_defaults_without_file():
    class Args:
        out = None
        seed = 7
        paths = 123
        grid = "40,20"
        mode = "full"
        debug = False

    cfg = parse_config(None, Args())
    assert cfg.kind == "cir"
    assert cfg.model_values["kappa"] == 0.25
    assert cfg.seed == 7 and cfg.paths == 123
    assert cfg.nx == 40 and cfg.nt == 20


def test_ou_model_config(tmp_path):
    p = tmp_path / "ou.ini"
    p.write_text("[model]\nkind = ou\nb = 1.0\nmu1 = 0.1\nmu2 = 0.5\n"
                 "sigma = 1.0\ngamma = 0.3\nrho = 0.2\n"
                 "[grid]\nnx = 48\nnt = 32\n")
    out = tmp_path / "out"
    assert main(["solve", "--config", str(p), "--out", str(out)]) == 0
    assert main(["check-assumptions", "--config", str(p),
                 "--out", str(out)]) == 0
