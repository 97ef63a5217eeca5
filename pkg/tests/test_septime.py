import math

import pytest

from pnesdec.criteria import NdptConfig, NonGaussianStateError
from pnesdec.gaussian import twb_separation_time
from pnesdec.septime import (
    NotEntangledError,
    SeparationConfig,
    ba_threshold,
    bisect_separation,
    entanglement_predicate,
    fig1a_sweep,
    matched_pair,
    parallel_map,
    phi1_matched_twb,
    separation_time,
    survival_gap,
    worker_count,
)
from pnesdec.states import family_coeffs, phi1_from_c1sq, pssv_coeffs, twb_coeffs
from pnesdec.thermal_channel import ChannelParams


def _square(x):
    return x * x


def test_bisection_on_a_known_step():
    res = bisect_separation(lambda s: s < math.pi / 7, SeparationConfig())
    assert res.t_sep == pytest.approx(math.pi / 7, abs=1e-9)
    lo, hi = res.bracket
    assert lo < math.pi / 7 <= hi and hi - lo <= 1e-9
    assert res.converged


def test_bisection_infinity_verdict():
    res = bisect_separation(lambda s: True, SeparationConfig(t_max=10))
    assert res.t_sep == math.inf and res.converged and not res.finite


def test_bisection_iteration_cap():
    res = bisect_separation(lambda s: s < 0.3, SeparationConfig(max_iter=5))
    assert not res.converged


def test_not_entangled_at_start():
    with pytest.raises(NotEntangledError):
        bisect_separation(lambda s: False)
    with pytest.raises(NotEntangledError):
        separation_time(phi1_from_c1sq(0.0), ChannelParams.thermal(1.0), "ndpt")


def test_twb_simon_matches_closed_form():
    p = ChannelParams.thermal(1.0)
    res = separation_time(twb_coeffs(0.5), p, "simon")
    assert res.t_sep == pytest.approx(twb_separation_time(0.5, p), rel=1e-9)


def test_twb_simon_pure_loss_is_infinite():
    assert separation_time(twb_coeffs(0.5), ChannelParams.thermal(0.0), "simon").t_sep == math.inf


def test_simon_criterion_refuses_pssv():
    with pytest.raises(NonGaussianStateError):
        separation_time(pssv_coeffs(0.5), ChannelParams.thermal(1.0), "simon")


def test_unknown_criterion():
    with pytest.raises(ValueError):
        separation_time(twb_coeffs(0.5), ChannelParams.thermal(1.0), "concurrence")


def test_phi1_block_matches_closed_form():
    state = phi1_from_c1sq(0.3)
    p = ChannelParams.thermal(1.0)
    numeric = separation_time(state, p, "phi1-block").t_sep
    assert numeric == pytest.approx(separation_time(state, p, "phi1-analytic").t_sep, abs=1e-8)


def test_bracket_has_opposite_verdicts():
    state = pssv_coeffs(0.3)
    p = ChannelParams.thermal(0.8)
    cfg = SeparationConfig()
    res = separation_time(state, p, "ndpt", cfg)
    pred = entanglement_predicate(state, p, "ndpt", cfg)
    lo, hi = res.bracket
    assert pred(lo).entangled and not pred(hi).entangled


def test_time_scales_with_gamma():
    a = separation_time(pssv_coeffs(0.3), ChannelParams.thermal(1.0, gamma=1.0), "ndpt").t_sep
    b = separation_time(pssv_coeffs(0.3), ChannelParams.thermal(1.0, gamma=3.0), "ndpt").t_sep
    assert a == pytest.approx(b, abs=2e-9)


@pytest.mark.parametrize("family,criterion", [("twb", "simon"), ("phi1", "phi1-analytic"),
                                              ("pssv", "ndpt")])
def test_monotone_in_temperature(family, criterion):
    state = family_coeffs(family, 0.4)
    times = [separation_time(state, ChannelParams.thermal(n), criterion).t_sep
             for n in (0.2, 0.5, 1.0, 2.0, 3.0)]
    assert all(b <= a for a, b in zip(times, times[1:]))


def test_ndpt_is_weaker_than_simon_for_twin_beam():
    p = ChannelParams.thermal(0.5)
    state = twb_coeffs(0.5)
    ndpt = [separation_time(state, p, "ndpt", SeparationConfig(ndpt=NdptConfig(n))).t_sep
            for n in (2, 3, 4)]
    simon = separation_time(state, p, "simon").t_sep
    assert ndpt[0] <= ndpt[1] + 1e-9 <= ndpt[2] + 2e-9
    assert ndpt[-1] <= simon + 1e-9


def test_matched_pair():
    r_twb, r_pssv = matched_pair(1.0, "entanglement")
    assert r_twb == pytest.approx(0.5, abs=1e-10)
    assert r_pssv == pytest.approx(0.28984352, abs=1e-7)
    with pytest.raises(ValueError):
        matched_pair(1.0, "volume")


def test_fig1a_row_order_and_ranking():
    rows = fig1a_sweep((0.1, 1.0), ("entanglement", "energy"), (0.5, 2.0), workers=1)
    keys = [(r.eps0, r.matching, r.n_thermal) for r in rows]
    assert keys == [(e, m, n) for e in (0.1, 1.0) for m in ("entanglement", "energy") for n in (0.5, 2.0)]
    for r in rows:
        assert r.tsep_pssv_ndpt > r.tsep_twb_simon
        assert r.ratio == pytest.approx(r.n_thermal / (r.n_thermal + 1))


def test_threshold_flips_the_comparison():
    res = ba_threshold(0.3, "energy")
    assert res.converged and 0 < res.threshold < 1
    assert survival_gap(0.3, res.r_twb, res.threshold + 0.05) > 0
    assert survival_gap(0.3, res.r_twb, res.threshold - 0.05) < 0


def test_threshold_invariant_under_gamma():
    a = ba_threshold(0.2, "entanglement").threshold
    b = ba_threshold(0.2, "entanglement", gamma=2.5).threshold
    assert a == pytest.approx(b, abs=1e-6)


def test_threshold_reports_boundary_without_crossing():
    # matched by log-negativity, phi1 wins at every B/A for small |c1|^2
    res = ba_threshold(0.05, "entanglement", measure="log_negativity")
    assert res.threshold is None and not res.converged
    assert "phi1" in res.verdict


def test_threshold_domain():
    with pytest.raises(ValueError):
        ba_threshold(0.6, "energy")


def test_phi1_matched_twb_energy():
    r = phi1_matched_twb(0.25, "energy")
    assert 2 * math.sinh(r) ** 2 == pytest.approx(0.5, rel=1e-9)


def test_parallel_map_keeps_order():
    items = list(range(7))
    assert parallel_map(_square, items, workers=2) == [x * x for x in items]
    assert parallel_map(_square, items, workers=1) == [x * x for x in items]


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("PNESDEC_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("PNESDEC_THREADS", "zero")
    with pytest.raises(ValueError):
        worker_count()
