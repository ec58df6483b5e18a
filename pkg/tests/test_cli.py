import csv
import json

import pytest

from coulombgas import cli


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_unknown_command(tmp_path, capsys):
    assert cli.main(["bogus", "--out", str(tmp_path)]) == 64
    assert "unknown command" in capsys.readouterr().err


def test_droplet_command(tmp_path):
    cfg = _write(tmp_path, "[potential]\nfamily = even_polynomial\ncoeffs = -2, 1\n")
    assert cli.main(["droplet", "--config", cfg, "--out", str(tmp_path)]) == 0
    geo = json.loads((tmp_path / "geometry.json").read_text())
    assert geo["euler_char"] == 0 and geo["components"][0][0] == pytest.approx(1.0)


def test_functionals_command(tmp_path):
    cfg = _write(tmp_path, "[potential]\nfamily = two_component\n[test_function]\nname = const\n")
    assert cli.main(["functionals", "--config", cfg, "--out", str(tmp_path), "--n", "101"]) == 0
    rows = list(csv.reader((tmp_path / "functionals.csv").open()))
    assert rows[0] == ["schema=1"] and rows[1] == ["quantity", "value"]
    names = [r[0] for r in rows[2:]]
    assert {"I_Q", "E_Q", "F_Q", "rho_0", "theta_0"} <= set(names)


@pytest.mark.parametrize("text, fragment", [
    ("[potential]\nfamily = nope\n", "run.ini:2"),
    ("[run]\nn = 100, abc\n", "run.ini:2"),
    ("[potential]\nfamily = ginibre\n[run]\nn = 1\n", "run.ini:4"),
    ("[run]\nmystery = 3\n", "run.ini:2"),
    ("family = ginibre\n", "run.ini:1"),
    ("[sampler]\nworkers = 0\n", "run.ini:2"),
])
def test_malformed_config_is_line_anchored(tmp_path, capsys, text, fragment):
    cfg = _write(tmp_path, text)
    assert cli.main(["droplet", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert fragment in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["droplet", "--config", str(tmp_path / "absent.ini")]) == 2


def test_bad_flag_value(tmp_path):
    assert cli.main(["droplet", "--n", "ten", "--out", str(tmp_path)]) == 2


def test_free_energy_refuses_outpost_family(tmp_path, capsys):
    cfg = _write(tmp_path, "[potential]\nfamily = ginibre_with_outpost\n")
    assert cli.main(["free-energy", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "outpost" in capsys.readouterr().err


def test_free_energy_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, "[run]\nn = 20, 30\n[perturbation]\ns = 0, 0.5\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["free-energy", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["free-energy", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "free_energy.csv").read_bytes() == (b / "free_energy.csv").read_bytes()
    rows = list(csv.DictReader((a / "free_energy.csv").open().readlines()[1:]))
    assert len(rows) == 4 and {r["n"] for r in rows} == {"20", "30"}
    assert len(json.loads((a / "breakdowns.json").read_text())) == 4


def test_fluct_rerun_is_byte_identical(tmp_path):
    args = ["fluct", "--n", "30", "--s=-0.5,0.5", "--samples", "4000", "--seed", "3"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    a = (tmp_path / "a" / "cgf.csv").read_bytes()
    assert a == (tmp_path / "b" / "cgf.csv").read_bytes()
    assert a.decode().splitlines()[1] == "n,mode,s,F_hat,se,F_pred,z,band,pass"


def test_outpost_command(tmp_path):
    cfg = _write(tmp_path, "[potential]\nfamily = ginibre_with_outpost\n[run]\nn = 40\n[sampler]\nn_samples = 2000\n")
    assert cli.main(["outpost", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "outpost.csv").read_text().startswith("schema=1\n")
    law = list(csv.reader((tmp_path / "count_law.csv").open()))
    assert law[1] == ["n", "k", "empirical_pmf", "heine_pmf", "tv"]


def test_outpost_command_needs_outpost(tmp_path):
    assert cli.main(["outpost", "--out", str(tmp_path)]) == 3


def test_identities_command(tmp_path, capsys):
    cfg = _write(tmp_path, "[run]\ndraws = 10\n")
    assert cli.main(["identities", "--config", cfg, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "identities.csv").read_text().splitlines()
    assert text[0] == "schema=1" and len(text) == 12
    assert "FAIL" not in capsys.readouterr().out
