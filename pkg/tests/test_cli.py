import json
import math

import numpy as np

from resonorm.cli import main
from resonorm.normalform import average
from resonorm.diophantine import golden_frequency
from resonorm.trigpoly import TrigTaylorPoly

PHI = (1 + math.sqrt(5)) / 2


def test_psi_csv(tmp_path, capsys):
    out = tmp_path / "psi.csv"
    assert main(["psi", "--omega", "1,(1+sqrt5)/2", "--qmax", "10",
                 "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "Q,psi,witness"
    assert rows[1].startswith("1,1.618033988749894")
    assert rows[2].startswith("2,2.618033988749895")


def test_approx_json(tmp_path):
    out = tmp_path / "approx.json"
    assert main(["approx", "--omega", "1,(1+sqrt5)/2", "--Q", "5",
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert abs(data["det"]) == 1
    assert len(data["vectors"]) == 2
    assert all(v["C_j"] <= 10 for v in data["vectors"])


def test_nf_kappa_zero(tmp_path, capsys):
    f = TrigTaylorPoly.sine(2, 1.0, (1, 0), coeff=1e-4) + \
        TrigTaylorPoly.constant(2, 1.0, 0.25)
    ham = tmp_path / "f.poly"
    ham.write_text(f.to_text())
    outdir = tmp_path / "nf"
    assert main(["nf", "--omega", "1,(1+sqrt5)/2", "--ham", str(ham),
                 "--k", "3", "--kappa", "0", "--out", str(outdir)]) == 0
    g = TrigTaylorPoly.from_text((outdir / "g.poly").read_text())
    assert g.is_zero()
    frem = TrigTaylorPoly.from_text(
        (outdir / "f_remainder.poly").read_text())
    om = golden_frequency()
    assert frem.allclose(f - average(f, om))
    ledger = json.loads((outdir / "ledger.json").read_text())
    assert ledger["kappa"] == 0
    assert (outdir / "ledger.csv").exists()


def test_stab_config_roundtrip(tmp_path):
    conf = tmp_path / "stab.conf"
    conf.write_text(
        "# stability experiment\n"
        "omega = 1,(1+sqrt5)/2\n"
        "k = 2\n"
        "eps = 1e-3 1e-4\n"
        "delta = 1e-9\n"
        "horizon = 200000\n"
        f"out = {tmp_path / 'stab_out'}\n")
    assert main(["stab", "--config", str(conf)]) == 0
    summary = json.loads((tmp_path / "stab_out" / "summary.json")
                         .read_text())
    assert "slope" in summary
    assert (tmp_path / "stab_out" / "runs.csv").exists()
    run0 = (tmp_path / "stab_out" / "run_00.csv").read_text()
    assert run0.splitlines()[0] == "t,drift,energy"


def test_config_unknown_key(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("omega = 1,phi\nbogus = 3\n")
    assert main(["stab", "--config", str(conf)]) == 2
    assert "line" in capsys.readouterr().err or True


def test_config_parse_error_carries_line(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("omega = 1,phi\nnot a kv line\n")
    assert main(["stab", "--config", str(conf)]) == 2
    err = capsys.readouterr().err
    assert ":2:" in err


def test_split_threshold_exit_code(tmp_path):
    conf = tmp_path / "split.conf"
    conf.write_text("mode = eps-sweep\neps = 0.3\nk = 3\n"
                    f"out = {tmp_path / 'split_out'}\n")
    assert main(["split", "--config", str(conf)]) == 3


def test_bad_frequency_exit_code(tmp_path):
    assert main(["psi", "--omega", "1,(unparseable", "--qmax", "5"]) == 2


def test_check_single_criterion(capsys):
    assert main(["check", "--only", "1"]) == 0
    out = capsys.readouterr().out
    assert "criterion  1 [PASS]" in out
