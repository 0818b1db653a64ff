import numpy as np
import pytest

from revmatch.blind import BlindEstimate
from revmatch.metrics import (SISDR_CAP_DB, MetricReport, evaluate,
                              param_errors, sisdr)
from revmatch.rir import AcousticParams, EdcAnalysis


def test_sisdr_perfect_and_cap():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1000)
    value, perfect = sisdr(x, x)
    assert perfect
    assert value == SISDR_CAP_DB


def test_sisdr_scale_invariance():
    rng = np.random.default_rng(1)
    ref = rng.standard_normal(500)
    est = ref + 0.1 * rng.standard_normal(500)
    base, _ = sisdr(est, ref)
    for a in [0.5, 2.0, 1e3]:
        scaled, _ = sisdr(a * est, ref)
        assert scaled == pytest.approx(base, rel=1e-10)
    # exact positive scaling of the reference itself is perfect
    value, perfect = sisdr(2.0 * ref, ref)
    assert perfect and value == SISDR_CAP_DB


def test_sisdr_hand_computed_case():
    # ref = [1, 0], est = [1, 1]: projection scale 1, target energy 1,
    # residual energy 1 -> 0 dB
    value, perfect = sisdr(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    assert not perfect
    assert value == pytest.approx(0.0, abs=1e-12)


def test_sisdr_errors():
    with pytest.raises(ValueError, match="equal lengths"):
        sisdr(np.ones(3), np.ones(4))
    with pytest.raises(ValueError, match="zero reference"):
        sisdr(np.ones(3), np.zeros(3))


def test_param_errors_blind_and_nonblind():
    truth = AcousticParams(rt60=0.5, drr_db=2.0)
    blind = BlindEstimate(rt60=0.6, drr_db=-1.0, raw_median_decay=0.2,
                          rm_loss_at_estimate=1.0)
    rep = param_errors(blind, truth)
    assert rep.rt60_abs_err_s == pytest.approx(0.1)
    assert rep.drr_abs_err_db == pytest.approx(3.0)
    nonblind = EdcAnalysis(edc=np.array([1.0]), t5=1, t25=2, e_5_25=0.5,
                           rt60_est=0.5, sigma_est=0.1, drr_est_db=2.0)
    rep2 = param_errors(nonblind, truth)
    assert rep2.rt60_abs_err_s == 0.0
    assert rep2.drr_abs_err_db == 0.0


def test_param_errors_batch_mean_consistency():
    truth = AcousticParams(rt60=0.5, drr_db=0.0)
    ests = [BlindEstimate(rt60=0.5 + d, drr_db=d, raw_median_decay=0.1,
                          rm_loss_at_estimate=0.0)
            for d in (-0.2, 0.1, 0.3)]
    errs = [param_errors(e, truth).rt60_abs_err_s for e in ests]
    assert np.mean(errs) == pytest.approx(np.mean([0.2, 0.1, 0.3]))


def test_evaluate_report_lines():
    rng = np.random.default_rng(2)
    ref = rng.standard_normal(100)
    report = evaluate(ref, ref)
    text = report.to_lines()
    assert "sisdr_db=100" in text
    assert "sisdr_perfect=1" in text
    partial = MetricReport(rt60_abs_err_s=0.25)
    assert partial.to_lines() == "rt60_abs_err_s=0.25\n"
