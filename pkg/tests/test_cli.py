import numpy as np
import pytest

from qflow import cli, models
from qflow.config import ConfigError, load_config

JC_CONFIG = """\
[model]
kind = jc

[solver]
dt = 0.01
t_max = 1.0
record_stride = 10

[stochastic]
n = 200
seed = 7

[run]
methods = det-euler, nmqj
out_prefix = demo
"""

CUSTOM_CONFIG = """\
[model]
kind = custom
dim = 2
hamiltonian = 0,0 0,0 0,0 0,0
channel1_op = 0,0 0,0 1,0 0,0
channel1_rate = const 2.0

[initial]
state1 = 0.8,0 0.6,0
prob1 = 1.0

[solver]
dt = 0.01
t_max = 1.0
"""


def write(tmp_path, text, name="run.config"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_jc_defaults(tmp_path):
    rc = load_config(write(tmp_path, JC_CONFIG))
    assert rc.kind == "jc" and not rc.is_generalized
    assert rc.methods == ["det-euler", "nmqj"]
    assert rc.n_particles == 200 and rc.seed == 7
    assert rc.solver.dt == 0.01 and rc.solver.record_stride == 10
    assert rc.precision == 15
    (b, psi, p), = rc.initial
    assert b == 0 and p == 1.0
    assert np.allclose(psi, [0.8, 0.6])


def test_overrides_fold_into_parser(tmp_path):
    rc = load_config(write(tmp_path, JC_CONFIG), seed=99, dt=0.02,
                     methods=["det-rk4"])
    assert rc.seed == 99 and rc.solver.dt == 0.02
    assert rc.methods == ["det-rk4"]
    assert rc.parser["stochastic"]["seed"] == "99"
    assert float(rc.parser["solver"]["dt"]) == 0.02
    assert rc.parser["run"]["methods"] == "det-rk4"


def test_load_custom_model(tmp_path):
    rc = load_config(write(tmp_path, CUSTOM_CONFIG))
    assert rc.kind == "custom"
    (op, rate), = rc.model.channels
    assert np.allclose(op, models.SIGMA_MINUS)
    assert rate(0.3) == 2.0


def test_inline_and_file_rates(tmp_path):
    (tmp_path / "rate.csv").write_text("t,value\n0,0\n1,1\n2,0\n")
    text = CUSTOM_CONFIG.replace(
        "channel1_rate = const 2.0",
        "channel1_rate = file rate.csv\nchannel2_op = 0,0 0,0 1,0 0,0\n"
        "channel2_rate = inline 0:0 1:2 2:0")
    rc = load_config(write(tmp_path, text))
    (op1, r1), (op2, r2) = rc.model.channels
    assert r1(0.5) == 0.5 and r2(0.5) == 1.0


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.config")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[solver]\ndt = 0.1\n"))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, JC_CONFIG.replace("nmqj", "magic")))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, CUSTOM_CONFIG.replace(
            "channel1_rate = const 2.0", "channel1_rate = file missing.csv")))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, CUSTOM_CONFIG.replace(
            "prob1 = 1.0", "prob1 = 0.5")))
    # method / model-kind mismatches
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, JC_CONFIG.replace("nmqj", "mc-unravel")))


def test_run_writes_expected_files(tmp_path):
    cfg = write(tmp_path, JC_CONFIG)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "demo_det-euler.csv").exists()
    assert (out / "demo_nmqj.csv").exists()
    assert (out / "demo_meta.config").exists()
    header = (out / "demo_det-euler.csv").read_text().splitlines()[0]
    assert header == "t,p_1,p_2,rho_ee,abs_rho_eg,rate_gamma"


def test_sidecar_reproduces_run(tmp_path):
    cfg = write(tmp_path, JC_CONFIG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli.main(["run", "--config", str(out1 / "demo_meta.config"),
                     "--out", str(out2)]) == 0
    for name in ("demo_det-euler.csv", "demo_nmqj.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_compare_produces_deviation_columns(tmp_path):
    cfg = write(tmp_path, JC_CONFIG)
    out = tmp_path / "out"
    assert cli.main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "demo_compare.csv").read_text().splitlines()
    assert lines[0] == "t,det-euler,nmqj,oracle,dev_det-euler,dev_nmqj"
    dev = float(lines[-1].split(",")[4])
    assert dev < 0.05


def test_compare_single_method_fails(tmp_path):
    text = JC_CONFIG.replace("det-euler, nmqj", "det-euler")
    cfg = write(tmp_path, text)
    assert cli.main(["compare", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 1


def test_bench_skips_stochastic_without_particles(tmp_path, capsys):
    text = JC_CONFIG.replace("n = 200", "n = 0")
    cfg = write(tmp_path, text)
    assert cli.main(["bench", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 0
    captured = capsys.readouterr().out
    assert "nmqj: skipped" in captured
    assert (tmp_path / "demo_bench.csv").exists()


def test_run_rejects_stochastic_without_particles(tmp_path):
    text = JC_CONFIG.replace("n = 200", "n = 0")
    cfg = write(tmp_path, text)
    assert cli.main(["run", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 1


def test_exit_code_numeric_failure(tmp_path):
    # constant negative rate immediately drives the derived state's
    # probability negative, which is a step-size (numeric) failure
    text = CUSTOM_CONFIG.replace("const 2.0", "const -2.0")
    cfg = write(tmp_path, text)
    assert cli.main(["run", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 2


def test_exit_code_io_failure(tmp_path):
    cfg = write(tmp_path, JC_CONFIG)
    assert cli.main(["run", "--config", str(cfg),
                     "--out", "/proc/definitely/not/writable"]) == 3


def test_exit_code_bad_flags():
    assert cli.main(["run"]) == 1
    assert cli.main(["frobnicate", "--config", "x"]) == 1


def test_precision_controls_csv_width(tmp_path):
    text = JC_CONFIG + "\n[output]\nprecision = 3\n"
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    row = (out / "demo_det-euler.csv").read_text().splitlines()[-1]
    for field in row.split(","):
        digits = field.split("e")[0].replace("-", "").replace(".", "")
        assert len(digits.lstrip("0")) <= 3


def test_two_band_csv_schema(tmp_path):
    text = """\
[model]
kind = two-band

[solver]
dt = 0.01
t_max = 2.0
record_stride = 20

[run]
methods = det-euler
out_prefix = band
"""
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    header = (out / "band_det-euler.csv").read_text().splitlines()[0]
    assert header == "t,P1,P2,trace_rho1,trace_rho2"
