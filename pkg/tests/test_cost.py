import pytest
from hypothesis import given
from hypothesis import strategies as st

from xqml.cost import CostParams, cost_report, extrapolate_cost, qpu_cost


def test_direct_cost():
    assert qpu_cost(851, 96) == 81696
    assert round(qpu_cost(14 * 60 + 11, 96), 2) == 81696.00
    assert qpu_cost(0, 96) == 0
    assert qpu_cost(1, 96) == 96
    with pytest.raises(ValueError):
        qpu_cost(-1, 96)
    with pytest.raises(ValueError):
        qpu_cost(1, -96)


def test_extrapolation():
    out = extrapolate_cost(1, CostParams(96, 60))
    assert out["usd"] == pytest.approx(96)
    frac = extrapolate_cost(1815, CostParams(96, 133), total_samples=31256)["fraction"]
    assert int(frac * 1e5) / 1e3 == 5.806
    big = extrapolate_cost(31256, CostParams(96, 133))
    assert big["usd"] == pytest.approx(31256 * 133 / 60 * 96)
    assert 6.6e6 < big["usd"] < 6.7e6
    with pytest.raises(ValueError):
        CostParams(96, 0)
    with pytest.raises(ValueError):
        extrapolate_cost(0, CostParams(96, 1))


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.floats(0.1, 1e3), st.floats(0.1, 1e3))
def test_linearity(a, b, rate, secs):
    p = CostParams(rate, secs)
    total = extrapolate_cost(a + b, p)["usd"]
    parts = extrapolate_cost(a, p)["usd"] + extrapolate_cost(b, p)["usd"]
    assert total == pytest.approx(parts, rel=1e-12)


def test_report_flags_inconsistent_inputs():
    rep = cost_report(96, minutes=851, samples=1815, per_sample_seconds=133, total_samples=31256)
    assert rep["usd"] == 81696.0
    assert rep["implied_per_sample_seconds"] == pytest.approx(851 * 60 / 1815)
    assert "disagree" in rep["note"]
    rep = cost_report(96, samples=31256, per_sample_seconds=133, quoted_usd=6.4e6)
    assert "differs" in rep["note"]
    assert cost_report(96, minutes=1)["note"] is None
    with pytest.raises(ValueError):
        cost_report(96)
