import subprocess
import sys

from evtwalk.cli import main

ARGS = ["torus-evt", "--n", "32", "--trajectories", "200"]


def test_success_and_files(tmp_path):
    out = tmp_path / "o"
    assert main(ARGS + ["--output_dir", str(out)]) == 0
    assert (out / "evt_cdf.csv").read_text().startswith("r,u_n,F_hat,stderr,F_limit")
    assert "seed=1" in (out / "meta.txt").read_text().splitlines()


def test_config_file_and_equals_syntax(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("n = 32\ntrajectories = 100\nseed = 5\n")
    out = tmp_path / "o"
    assert main(["torus-evt", "--config", str(f), "--seed=6", f"--output-dir={out}"]) == 0
    meta = (out / "meta.txt").read_text()
    assert "seed=6" in meta and "trajectories=100" in meta


def test_exit_codes(tmp_path, capsys):
    assert main(ARGS + ["--bogus", "1"]) == 1
    assert main(ARGS + ["--n"]) == 1
    assert main(["torus-evt", "--config", str(tmp_path / "nope.cfg")]) == 1
    # a tail grid beyond the resolvable range is a runtime error
    assert main(["tail", "--samples", "20000", "--z_grid", "5,6,7,8,9", "--output_dir", str(tmp_path / "t")]) == 2
    out = tmp_path / "o"
    assert main(ARGS + ["--output_dir", str(out)]) == 0
    assert main(ARGS + ["--output_dir", str(out)]) == 3
    assert main(ARGS + ["--output_dir", str(out), "--force"]) == 0
    (tmp_path / "file").write_text("x")
    assert main(ARGS + ["--output_dir", str(tmp_path / "file" / "sub")]) == 3
    err = capsys.readouterr().err
    assert "config error" in err and "I/O error" in err


def test_env_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("EVTWALK_SEED", "99")
    out = tmp_path / "o"
    assert main(ARGS + ["--output_dir", str(out)]) == 0
    assert "seed=99" in (out / "meta.txt").read_text()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "evtwalk.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "torus-evt" in r.stdout
