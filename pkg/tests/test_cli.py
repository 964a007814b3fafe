import numpy as np
import pytest

from cascade_rd.cli import ConfigError, load_config, main
from cascade_rd.discrete import (
    AuxiliarySystem,
    SourceSpec,
    save_aux,
    save_source_spec,
)
from cascade_rd.probability import CondPMF, DeterministicMap, JointPMF


@pytest.fixture
def ident_files(tmp_path):
    ham = np.array([[0.0, 1.0], [1.0, 0.0]])
    pxyz = np.zeros((2, 2, 1))
    pxyz[0, 0, 0] = 0.5
    pxyz[1, 1, 0] = 0.5
    src = SourceSpec(JointPMF(pxyz), ham, ham)
    q = 0.25
    pu = np.zeros((2, 2, 2))
    pu[0, :, :] = [1 - q, q]
    pu[1, :, :] = [q, 1 - q]
    pxh = np.zeros((2, 2, 2, 2))
    pxh[:, :, 0, 0] = 1.0
    pxh[:, :, 1, 1] = 1.0
    aux = AuxiliarySystem(
        p_u=CondPMF(pu), p_xhat1=CondPMF(pxh),
        g2=DeterministicMap(np.array([[0], [1]]), 2),
    )
    src_path = tmp_path / "src.txt"
    aux_path = tmp_path / "aux.txt"
    src_path.write_text(save_source_spec(src))
    aux_path.write_text(save_aux(aux))
    return str(src_path), str(aux_path)


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def test_gaussian_cascade_happy_path(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main([
        "gaussian-cascade", "--var-a", "1", "--var-b", "1", "--var-z", "1",
        "--d1", "0.25", "--d2", "2.5", "--r2", "1.0", "--out", str(out),
    ])
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 1
    assert rows[0]["status"] == "ok"
    assert float(rows[0]["r1"]) == pytest.approx(1.0, abs=1e-9)


def test_missing_required_flag_names_it(capsys):
    code = main([
        "gaussian-cascade", "--var-a", "1", "--var-b", "1", "--var-z", "1",
        "--d1", "0.25", "--r2", "1.0",
    ])
    assert code == 2
    assert "d2" in capsys.readouterr().err


def test_sweep_parses_and_is_monotone(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main([
        "gaussian-cascade", "--var-a", "1", "--var-b", "1", "--var-z", "1",
        "--d1", "0.02", "--d2", "0.5", "--sweep", "r2:log:1.0:4.0:8",
        "--out", str(out),
    ])
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 8
    r1s = [float(r["r1"]) for r in rows]
    assert all(a >= b - 1e-9 for a, b in zip(r1s, r1s[1:]))


def test_infeasible_row_marked_not_dropped(tmp_path):
    out = tmp_path / "r.csv"
    code = main([
        "gaussian-cascade", "--var-a", "1", "--var-b", "1", "--var-z", "1",
        "--d1", "0.25", "--d2", "0.5", "--r2", "0.2", "--out", str(out),
    ])
    assert code == 0  # infeasible is not an error
    rows = read_rows(out)
    assert rows[0]["status"] == "infeasible"
    assert rows[0]["r1"] == ""


def test_error_row_gives_nonzero_exit(tmp_path):
    out = tmp_path / "r.csv"
    code = main([
        "discrete-eval", "--source", "/nonexistent/path.txt",
        "--aux", "/nonexistent/aux.txt", "--setting", "cascade",
        "--out", str(out),
    ])
    assert code == 1
    rows = read_rows(out)
    assert rows[0]["status"] == "error"


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "var-a = 1.0\nvar-b = 1.0\nvar-z = 1.0\nd1 = 0.25\nd2 = 2.5\nr2 = 1.0\n"
    )
    out = tmp_path / "r.csv"
    code = main(["gaussian-cascade", "--config", str(cfg), "--out", str(out),
                 "--d1", "4.0"])
    assert code == 0
    rows = read_rows(out)
    # flag overrides the config value, and R1 = 0 once both terms are slack
    assert float(rows[0]["d1"]) == 4.0
    assert float(rows[0]["r1"]) == 0.0


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("var-a = 1.0\nbogus-key = 3\n")
    code = main(["gaussian-cascade", "--config", str(cfg)])
    assert code == 2
    err = capsys.readouterr().err
    assert "bogus-key" in err and ":2" in err


def test_round_trip_of_numeric_cells(tmp_path):
    out = tmp_path / "r.csv"
    main([
        "gaussian-cascade", "--var-a", "1.7", "--var-b", "0.3", "--var-z", "2.2",
        "--d1", "0.11", "--d2", "0.77", "--r2", "1.9", "--out", str(out),
    ])
    rows = read_rows(out)
    # 12 significant digits survive the parse back
    assert float(rows[0]["var_a"]) == 1.7
    assert float(rows[0]["d2"]) == 0.77


def test_provenance_hash_changes_with_config(tmp_path):
    outs = []
    for d1 in ("0.25", "0.26"):
        out = tmp_path / f"r{d1}.csv"
        main([
            "gaussian-cascade", "--var-a", "1", "--var-b", "1", "--var-z", "1",
            "--d1", d1, "--d2", "2.5", "--r2", "1.0", "--out", str(out),
        ])
        line = [ln for ln in out.read_text().splitlines()
                if ln.startswith("# config-hash")][0]
        outs.append(line)
    assert outs[0] != outs[1]


def test_simulate_deterministic_given_seed(tmp_path, ident_files):
    src, aux = ident_files
    texts = []
    for run in range(2):
        out = tmp_path / f"sim{run}.csv"
        code = main([
            "simulate", "--source", src, "--aux", aux, "--n", "8",
            "--epsilon", "0.4", "--trials", "40", "--seed", "7",
            "--out", str(out),
        ])
        assert code == 0
        texts.append(out.read_text())
    assert texts[0] == texts[1]


def test_discrete_eval_command(tmp_path, ident_files):
    src, aux = ident_files
    out = tmp_path / "eval.csv"
    code = main([
        "discrete-eval", "--source", src, "--aux", aux,
        "--setting", "cascade", "--out", str(out),
    ])
    assert code == 0
    rows = read_rows(out)
    assert rows[0]["status"] == "ok"
    assert float(rows[0]["r1"]) == pytest.approx(0.0, abs=1e-9)
    assert float(rows[0]["d2"]) == pytest.approx(0.25, abs=1e-9)


def test_kaspi_check_command(tmp_path):
    out = tmp_path / "k.csv"
    code = main(["kaspi-check", "--instances", "10", "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert float(rows[0]["max_i1"]) <= 1e-10


def test_load_config_reports_malformed_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("var-a\n")
    with pytest.raises(ConfigError) as err:
        load_config(str(cfg))
    assert ":1" in str(err.value)
