import os
import subprocess
import sys

from fraclab import Ball, build_domain
from fraclab.cli import ExperimentConfig, cache_kernel, run


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


SOLVE_CFG = """
[domain]
shape = ball
dimension = 1
nodes_per_axis = 40
margin_cells = 4
radius = 1.0

[problem]
s = 0.6

[run]
levels = 40,80,160
"""


def test_solve_csv_schema_and_exit0(tmp_path):
    cfg = _write(tmp_path, "solve.ini", SOLVE_CFG)
    out = tmp_path / "out"
    assert run("solve", cfg, out) == 0
    lines = (out / "solve.csv").read_text().splitlines()
    assert lines[0].startswith("# config_sha256=")
    assert lines[1] == "level,h,l2_error_vs_finest,ratio"
    assert len(lines) == 2 + 3


def test_rerun_bit_reproducible(tmp_path):
    cfg = _write(tmp_path, "solve.ini", SOLVE_CFG)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert run("solve", cfg, out1) == 0
    assert run("solve", cfg, out2) == 0
    assert (out1 / "solve.csv").read_bytes() == (out2 / "solve.csv").read_bytes()


def test_invalid_s_exit2(tmp_path, capsys):
    cfg = _write(
        tmp_path,
        "bad.ini",
        SOLVE_CFG.replace("s = 0.6", "s = 1.2"),
    )
    code = run("solve", cfg, tmp_path / "out")
    assert code == 2
    err = capsys.readouterr().err
    assert "(0,1)" in err


def test_unknown_key_exit2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.ini", SOLVE_CFG + "\nwhatever = 3\n")
    assert run("solve", cfg, tmp_path / "out") == 2
    assert "unknown key" in capsys.readouterr().err


def test_missing_config_exit2(tmp_path):
    assert run("solve", tmp_path / "nope.ini", tmp_path / "out") == 2


SWEEP_CFG = """
[domain]
dimension = 1
nodes_per_axis = 80
margin_cells = 8

[problem]
s = 0.6
rhs_kind = D_s2
mu = const:1.0
f = bump:0.9

[run]
tolerance = 1e-8
max_iter = 80
lambda_sweep = 0.05,0.1
"""


def test_sweep_schema(tmp_path):
    cfg = _write(tmp_path, "sweep.ini", SWEEP_CFG)
    out = tmp_path / "out"
    assert run("sweep", cfg, out) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[1] == "lambda,verdict,iterations,final_residual"
    assert len(lines) == 2 + 2
    assert "converged" in lines[2]


EXP_CFG = """
[run]
propositions = P3.1,L-LPPS
dimension = 2
s = 3/4
t_values = 1/2
m_values = 1,2
"""


def test_exponents_exact_rows(tmp_path):
    cfg = _write(tmp_path, "exp.ini", EXP_CFG)
    out = tmp_path / "out"
    assert run("exponents", cfg, out) == 0
    text = (out / "exponents.csv").read_text()
    assert "P3.1,1,2,3/4,1/2,1,1,2,false,ok" in text
    assert "P3.1,3,2,3/4,1/2,2,1,8,false,ok" in text
    assert "L-LPPS,1,2,3/4,,1,1,4,false,ok" in text


def test_iterate_zero_forcing(tmp_path):
    cfg = _write(
        tmp_path,
        "it.ini",
        SWEEP_CFG.replace("lambda_sweep = 0.05,0.1", "").replace(
            "f = bump:0.9", "f = const:0.0"
        ),
    )
    # strip the now-invalid sweep-only key from the run section
    text = cfg.read_text().replace("max_iter = 80", "max_iter = 10")
    cfg.write_text(text)
    out = tmp_path / "out"
    assert run("iterate", cfg, out) == 0
    lines = (out / "iterate.csv").read_text().splitlines()
    assert "converged" in lines[-1]


def test_probe_cli(tmp_path):
    cfg = _write(
        tmp_path,
        "probe.ini",
        """
[domain]
dimension = 1

[run]
beta = 0.0
s = 0.6
t = 0.5
p = 2.6
m = 1.0
levels = 32,128,512
""",
    )
    out = tmp_path / "out"
    assert run("probe", cfg, out) == 0
    text = (out / "probe.csv").read_text()
    assert text.splitlines()[1] == "level,measured,growth_factor,route,classification"
    assert "bounded" in text


def test_cache_kernel_roundtrip_and_rebuild(tmp_path, capsys):
    dom = build_domain(Ball(center=(0.0,), radius=1.0), 40, margin_cells=4)
    path = tmp_path / "k.flkt"
    cache_kernel(dom, 1.2, None, path)
    assert path.exists()
    # corrupted file: the cached-run path rebuilds with a warning and succeeds
    cachedir = tmp_path / "cache"
    cachedir.mkdir()
    cfg = _write(tmp_path, "solve.ini", SOLVE_CFG)
    env_before = os.environ.get("FRACLAB_CACHE_DIR")
    os.environ["FRACLAB_CACHE_DIR"] = str(cachedir)
    try:
        assert run("solve", cfg, tmp_path / "o1") == 0
        cached = sorted(cachedir.glob("*.flkt"))
        assert cached
        blob = bytearray(cached[0].read_bytes())
        blob[:4] = b"ZZZZ"
        cached[0].write_bytes(bytes(blob))
        assert run("solve", cfg, tmp_path / "o2") == 0
        assert "rebuilding kernel cache" in capsys.readouterr().err
        assert (tmp_path / "o1" / "solve.csv").read_bytes() == (
            tmp_path / "o2" / "solve.csv"
        ).read_bytes()
    finally:
        if env_before is None:
            os.environ.pop("FRACLAB_CACHE_DIR", None)
        else:
            os.environ["FRACLAB_CACHE_DIR"] = env_before


def test_console_entry_point(tmp_path):
    cfg = _write(tmp_path, "exp.ini", EXP_CFG)
    proc = subprocess.run(
        [sys.executable, "-m", "fraclab.cli", "exponents", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0


def test_config_hash_changes_with_values(tmp_path):
    c1 = ExperimentConfig.load("exponents", _write(tmp_path, "a.ini", EXP_CFG))
    c2 = ExperimentConfig.load(
        "exponents", _write(tmp_path, "b.ini", EXP_CFG.replace("m_values = 1,2", "m_values = 1,3"))
    )
    assert c1.resolved_hash() != c2.resolved_hash()
