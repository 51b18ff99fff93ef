"""End-to-end acceptance gate.

Each test is one numbered criterion, pinned to its stated tolerance; the
pytest -v PASSED/FAILED line per test is the per-criterion verdict.
"""
import time

import numpy as np

from qflow import cli, detsolver, models, oracle, stochastic
from qflow.detsolver import SolverConfig
from qflow.stochastic import StochasticConfig

JCP = models.JCParams(gamma0=4.0, lam=1.0, delta=12.0)
JC = models.make_jc_model(JCP)
PSI1 = np.array([0.8, 0.6], dtype=complex)
INIT = [(0, PSI1, 1.0)]
RHO0 = np.outer(PSI1, PSI1.conj())


def _warm_up():
    cfg = SolverConfig(dt=0.01, t_max=0.1)
    detsolver.run(JC, INIT, cfg)
    detsolver.run(JC, INIT, SolverConfig(dt=0.01, t_max=0.1, method="rk4"))


def _jc_run(dt, t_max, method, stride=1):
    cfg = SolverConfig(dt=dt, t_max=t_max, method=method,
                       record_stride=stride)
    t0 = time.perf_counter()
    tr = detsolver.run(JC, INIT, cfg)
    return tr, time.perf_counter() - t0


def test_criterion_1_jc_deterministic_accuracy():
    _warm_up()
    tr_e, wall_e = _jc_run(0.005, 5.0, "euler")
    ree, _ = oracle.jc_closed_form(tr_e.times, JCP, RHO0)
    err_e = np.max(np.abs(tr_e.density[:, 0, 0].real - ree))
    assert err_e <= 5e-3
    tr_r, wall_r = _jc_run(0.001, 5.0, "rk4")
    ree_r, _ = oracle.jc_closed_form(tr_r.times, JCP, RHO0)
    err_r = np.max(np.abs(tr_r.density[:, 0, 0].real - ree_r))
    assert err_r <= 1e-6
    assert wall_e < 1.0 and wall_r < 1.0


def test_criterion_2_probability_conservation_1e6_steps():
    cfg = SolverConfig(dt=5e-6, t_max=5.0, method="euler",
                       record_stride=10000)
    tr = detsolver.run(JC, INIT, cfg)
    assert tr.metadata["n_steps"] == 10**6
    assert abs(tr.probabilities[-1].sum() - 1.0) <= 1e-10


def test_criterion_3_flow_reversal_intervals():
    tr, _ = _jc_run(0.005, 1.0, "euler")
    gamma = models.jc_decay_rate(tr.times, JCP)
    neg = gamma < 0.0
    starts = np.flatnonzero(neg & ~np.roll(neg, 1))
    if neg[0]:
        starts = np.union1d(starts, [0])
    intervals = []
    for s in starts:
        e = s
        while e + 1 < neg.size and neg[e + 1]:
            e += 1
        intervals.append((s, e))
    for s, e in intervals:
        p1 = tr.probabilities[s:e + 1, 0]
        p2 = tr.probabilities[s:e + 1, 1]
        assert np.all(np.diff(p1) >= -1e-12), "p_1 must not decrease"
        assert np.all(np.diff(p2) <= 1e-12), "p_2 must not increase"
    assert len(intervals) >= 3, \
        f"found {len(intervals)} negative-rate intervals in [0, 1]"


def test_criterion_4_nmqj_statistical_agreement():
    det, _ = _jc_run(0.005, 3.0, "euler", stride=40)
    idx = [int(np.argmin(np.abs(det.times - tq))) for tq in (1.0, 2.0, 3.0)]
    n = 10**4
    good_seeds = 0
    for seed in range(10):
        cfg = StochasticConfig(n_particles=n, seed=seed, dt=0.005, t_max=3.0,
                               record_stride=40)
        st = stochastic.nmqj_run(JC, INIT, cfg)
        ok = True
        for i in idx:
            rd = det.density[i, 0, 0].real
            bound = 4.0 * np.sqrt(rd * (1.0 - rd) / n)
            ok = ok and abs(st.density[i, 0, 0].real - rd) <= bound
        good_seeds += ok
    assert good_seeds >= 9

    errs = []
    for n_part in (100, 1000, 10000):
        per_seed = []
        for seed in range(5):
            cfg = StochasticConfig(n_particles=n_part, seed=100 + seed,
                                   dt=0.005, t_max=3.0, record_stride=40)
            st = stochastic.nmqj_run(JC, INIT, cfg)
            per_seed.append(np.sqrt(np.mean(
                (st.density[:, 0, 0].real - det.density[:, 0, 0].real) ** 2)))
        errs.append(np.mean(per_seed))
    slope = np.polyfit(np.log10([100, 1000, 10000]), np.log10(errs), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_criterion_5_two_band_accuracy():
    p = models.TwoBandParams(delta_eps=0.31, gamma1=1.0, gamma2=1.0)
    m = models.make_two_band_model(p)
    cfg = SolverConfig(dt=0.01, t_max=20.0, method="euler")
    tr = detsolver.run(m, [(0, models.EXCITED, 1.0)], cfg)
    p1 = tr.probabilities[:, tr.state_blocks == 0].sum(axis=1)
    exact = oracle.two_band_closed_form(tr.times, p)
    assert np.max(np.abs(p1 - exact)) <= 1e-3
    assert np.max(np.abs(tr.block_traces.sum(axis=1) - 1.0)) <= 1e-10


def test_criterion_6_generalized_degenerates_to_standard():
    p_res = models.JCParams(gamma0=4.0, lam=1.0, delta=0.0)
    rate = lambda t: models.jc_decay_rate(t, p_res)
    assert models.jc_decay_rate(
        np.linspace(0, 5, 5001), p_res).min() >= 0.0
    std = models.TimeLocalModel(np.zeros((2, 2)),
                                ((models.SIGMA_MINUS, rate),))
    gen = models.GeneralizedModel(
        1, (np.zeros((2, 2)),),
        (models.Coupling(0, 0, models.SIGMA_MINUS, rate),))
    cfg = SolverConfig(dt=0.005, t_max=5.0, method="euler")
    a = detsolver.run(std, INIT, cfg)
    b = detsolver.run(gen, INIT, cfg)
    assert np.max(np.abs(a.probabilities - b.probabilities)) <= 1e-12
    assert np.max(np.abs(a.density - b.density)) <= 1e-12


def test_criterion_7_oracle_equivalence_random_model():
    model, initial = models.make_cascade_model(seed=7)
    rho0 = sum(p * np.outer(v, v.conj()) for _, v, p in initial)
    ref = oracle.dense_integrate(model, rho0, 1e-4, 3.0, record_stride=500)

    def dev(dt):
        stride = int(round(0.05 / dt))
        cfg = SolverConfig(dt=dt, t_max=3.0, method="euler",
                           record_stride=stride)
        tr = detsolver.run(model, initial, cfg)
        assert np.allclose(tr.times, ref.times)
        return float(np.max(np.abs(tr.density - ref.total)))

    d_coarse = dev(1e-3)
    d_fine = dev(5e-4)
    assert d_coarse <= 1e-3
    ratio = d_coarse / d_fine
    assert 2.0 * 0.8 <= ratio <= 2.0 * 1.2


def test_criterion_8_deterministic_vs_nmqj_speed():
    _warm_up()
    _, det_wall = _jc_run(0.005, 5.0, "euler")
    cfg = StochasticConfig(n_particles=10**4, seed=0, dt=0.005, t_max=5.0)
    t0 = time.perf_counter()
    stochastic.nmqj_run(JC, INIT, cfg)
    nmqj_wall = time.perf_counter() - t0
    assert nmqj_wall / det_wall >= 50.0


def test_criterion_9_byte_identical_reruns(tmp_path):
    cfg = tmp_path / "run.config"
    cfg.write_text("""\
[model]
kind = jc

[solver]
dt = 0.005
t_max = 2.0
record_stride = 10

[stochastic]
n = 2000
seed = 31

[run]
methods = det-euler, det-rk4, nmqj
out_prefix = repro
""")
    out1, out2 = tmp_path / "first", tmp_path / "second"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
    names = sorted(f.name for f in out1.iterdir() if f.suffix == ".csv")
    assert names
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
