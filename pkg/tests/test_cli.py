import io
import subprocess
import sys
from pathlib import Path

import pytest

from ggr_lab.cli import EXIT_GUARD, EXIT_INPUT, EXIT_OK, EXIT_VERIFY, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("name,cmd", [("scatter_hardcore.ini", "scatter"), ("thermo.ini", "thermo"),
                                      ("diagrams.ini", "diagrams"), ("bound.ini", "bound")])
def test_shipped_configs_verify(name, cmd):
    code, out, err = invoke(cmd, "--config", str(CONFIGS / name), "--verify")
    assert code == EXIT_OK, err
    assert out.startswith("# ggr-lab ")


@pytest.mark.slow
def test_oracle_config_verify():
    code, out, err = invoke("oracle", "--config", str(CONFIGS / "oracle.ini"), "--verify", "--seed", "3")
    assert code == EXIT_OK, err
    assert "entropy_margin" in out


def test_header_and_csv_shape():
    code, out, _ = invoke("thermo", "--config", str(CONFIGS / "thermo.ini"), "--seed", "7")
    lines = out.splitlines()
    assert lines[0].startswith("# ggr-lab ") and "seed=7" in lines[0] and "config-hash=" in lines[0]
    table = [ln for ln in lines if not ln.startswith("#")]
    width = len(table[0].split(","))
    assert all(len(ln.split(",")) == width for ln in table[1:])


def test_config_hash_ignores_ordering(tmp_path):
    a = write(tmp_path, "[thermo]\nd = 3\nbeta = 1\nlog_z = 0\n", "a.ini")
    b = write(tmp_path, "[thermo]\nlog_z = 0\nd = 3\nbeta = 1\n", "b.ini")
    ha = invoke("thermo", "--config", a)[1].splitlines()[0]
    hb = invoke("thermo", "--config", b)[1].splitlines()[0]
    assert ha == hb


def test_selftest():
    code, out, err = invoke("thermo", "--selftest")
    assert code == EXIT_OK, err


def test_determinism_across_threads(tmp_path):
    cfg = str(CONFIGS / "oracle.ini")
    outs = []
    for threads in ("1", "1", "3"):
        path = tmp_path / f"o{len(outs)}.csv"
        assert invoke("oracle", "--config", cfg, "--seed", "11", "--threads", threads, "--out", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_seed_changes_oracle_output(tmp_path):
    cfg = str(CONFIGS / "oracle.ini")
    a = invoke("oracle", "--config", cfg, "--seed", "1")[1]
    b = invoke("oracle", "--config", cfg, "--seed", "2")[1]
    assert a != b


def test_bound_plot_companion(tmp_path):
    out = tmp_path / "bound.csv"
    code, _, err = invoke("bound", "--config", str(CONFIGS / "bound.ini"), "--out", str(out))
    assert code == EXIT_OK, err
    assert out.exists() and Path(str(out) + ".plot.dat").exists()


def test_diagram_dump_parses(tmp_path):
    from ggr_lab.diagrams import enumerate_diagrams, parse_dump_line
    code, out, _ = invoke("diagrams", "--config", str(CONFIGS / "diagrams.ini"))
    assert code == EXIT_OK
    body = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert len(body) == len(enumerate_diagrams(1, 2, "linked"))
    for ln in body:
        dg, val = parse_dump_line(ln)
        assert dg.linked


class TestExitCodes:
    def test_missing_config_file(self):
        code, _, err = invoke("thermo", "--config", "/nonexistent/x.ini")
        assert code == EXIT_INPUT and "input error" in err

    def test_malformed_config(self, tmp_path):
        assert invoke("thermo", "--config", write(tmp_path, "no section header\n"))[0] == EXIT_INPUT

    def test_bad_value(self, tmp_path):
        code, _, err = invoke("thermo", "--config", write(tmp_path, "[thermo]\nd = three\n"))
        assert code == EXIT_INPUT and "key: d" in err

    def test_domain_error_is_input_error(self, tmp_path):
        assert invoke("thermo", "--config", write(tmp_path, "[thermo]\nd = 5\n"))[0] == EXIT_INPUT

    def test_size_guard(self, tmp_path):
        cfg = write(tmp_path, "[diagrams]\nq = 0\np = 9\n")
        assert invoke("diagrams", "--config", cfg)[0] == EXIT_GUARD

    def test_oracle_size_guard(self, tmp_path):
        cfg = write(tmp_path, "[oracle]\nM = 20\nn_models = 1\n")
        assert invoke("oracle", "--config", cfg)[0] == EXIT_GUARD

    def test_verification_failure(self, tmp_path):
        # an impossible tail constant makes the oracle verification fail
        cfg = write(tmp_path, "[oracle]\nM = 8\nn_models = 2\ninclude_free = no\n"
                              "[constants]\ntail.outer.0 = 1e-30\n")
        code, _, err = invoke("oracle", "--config", cfg, "--verify")
        assert code == EXIT_VERIFY and "verification failed" in err

    def test_bad_threads_env(self, monkeypatch):
        monkeypatch.setenv("GGR_LAB_THREADS", "many")
        assert invoke("thermo")[0] == EXIT_INPUT


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ggr_lab.cli", "thermo", "--selftest"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
