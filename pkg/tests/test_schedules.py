import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoremem.errors import DomainError
from scoremem.schedules import (CATALOG, Kind, Schedule, custom_diffusion, diffusion,
                                singular_integral)


def test_ve_two_t_closed_form():
    s = Schedule.ve("two_t")
    t = np.linspace(0, 1, 11)
    assert np.allclose(s.variance(t), t ** 2, rtol=0, atol=1e-15)
    assert np.all(s.mean_coeff(t) == 1.0)
    assert np.all(s.beta(t) == 0.0)


def test_exp10_cumulative_matches_quadrature():
    s = Schedule.ve("exp10")
    quad = Schedule.ve(custom_diffusion(lambda t: 10.0 ** t))
    for t in (0.0, 1e-4, 0.3, 1.0):
        assert s.variance(t) == pytest.approx(quad.variance(t), rel=1e-9, abs=1e-15)
    assert s.variance(1.0) == pytest.approx(9 / math.log(10), rel=1e-14)


def test_vp_linear_closed_form(vp):
    t = 0.7
    G = 0.001 * t + 0.5 * t * t * (3 - 0.001)
    assert vp.cumulative(t) == pytest.approx(G, rel=1e-14)
    assert vp.mean_coeff(t) == pytest.approx(math.exp(-G / 2), rel=1e-14)
    assert vp.variance(t) == pytest.approx(1 - math.exp(-G), rel=1e-14)
    assert vp.beta(t) == pytest.approx(0.001 + t * (3 - 0.001))


@given(st.floats(0, 1))
def test_vp_mass_identity(t):
    s = Schedule.vp("linear")
    assert abs(s.mean_coeff(t) ** 2 + s.variance(t) - 1.0) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["two_t", "exp10", "constant", "linear"]), st.sampled_from(["VE", "VP"]),
       st.floats(1e-3, 1.0))
def test_variance_round_trip(g, kind, t):
    s = Schedule(Kind(kind), diffusion(g))
    assert s.invert_variance(s.variance(t)) == pytest.approx(t, rel=1e-9)


def test_round_trip_custom_g_uses_root_finding():
    s = Schedule.vp(custom_diffusion(lambda t: 1.0 + np.sin(3 * t) ** 2))
    for t in (0.05, 0.5, 0.95):
        assert s.invert_variance(s.variance(t)) == pytest.approx(t, rel=1e-9)


def test_time_domain_enforced(ve):
    with pytest.raises(DomainError):
        ve.variance(-0.1)
    with pytest.raises(DomainError):
        ve.variance(1.5)
    with pytest.raises(DomainError):
        ve.invert_variance(0.0)
    with pytest.raises(DomainError):
        ve.invert_variance(ve.variance_T() * 2)


def test_unknown_diffusion_rejected():
    with pytest.raises(DomainError):
        diffusion("nope")


def test_serialization_round_trip():
    for sch in (Schedule.ve("exp10"), Schedule.vp("linear", beta_min=0.1, beta_max=5.0, T=2.0)):
        again = Schedule.from_dict(sch.to_dict())
        assert again.label == sch.label
        assert again.variance(0.37) == sch.variance(0.37)


def test_kind_is_case_insensitive():
    assert Kind("ve") is Kind.VE


def test_reference_std(ve, vp):
    assert ve.reference_std() == pytest.approx(math.sqrt(9 / math.log(10)))
    assert vp.reference_std() == 1.0


def test_forward_marginal_sampling_statistics(vp):
    rng = np.random.default_rng(0)
    x0 = np.full((200000, 1), 2.0)
    x = vp.sample_forward_marginal(x0, 0.5, rng)
    mg = vp.marginal(0.5)
    assert x.mean() == pytest.approx(2.0 * mg.mean_coeff, abs=0.01)
    assert x.std() == pytest.approx(mg.std, rel=0.01)


@pytest.mark.parametrize("kind", ["VE", "VP"])
def test_singular_integral_grows_like_log(kind):
    # g / sigma^2 ~ 1/t near 0, so the integral grows linearly in log(1/eps)
    s = Schedule(Kind(kind), diffusion("exp10"))
    eps = np.logspace(-8, -3, 12)
    vals = np.array([singular_integral(s, e, 0.1) for e in eps])
    slope, icpt = np.polyfit(np.log(1 / eps), vals, 1)
    pred = slope * np.log(1 / eps) + icpt
    r2 = 1 - ((vals - pred) ** 2).sum() / ((vals - vals.mean()) ** 2).sum()
    assert r2 >= 0.999
    assert slope == pytest.approx(1.0, rel=1e-2)


def test_catalog_names():
    assert set(CATALOG) >= {"two_t", "exp10", "constant", "linear"}
