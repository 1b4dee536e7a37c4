from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from spdc_lab.dispersion import (
    SellmeierSet,
    angle_dependent_index,
    ellipsoid_index,
    refractive_index,
    wavevector,
)
from spdc_lab.errors import RangeError

STUB = SellmeierSet(
    "stub",
    {"ordinary": {"form": "constant", "n": 2.0}, "extraordinary": {"form": "constant", "n": 2.0}},
    (0.1, 10.0),
    (-100.0, 500.0),
)

lam_st = st.floats(0.4, 3.0)
temp_st = st.floats(20.0, 250.0)


def test_matches_literature_at_1064(sset):
    assert refractive_index(1.064, 24.5, "extraordinary", sset) == pytest.approx(oracles.N_E_1064, abs=1e-6)
    assert refractive_index(1.064, 24.5, "ordinary", sset) == pytest.approx(oracles.N_O_1064, abs=1e-6)


def test_extraordinary_at_25c_within_1e4_of_hand_evaluation(sset):
    assert abs(refractive_index(1.064, 25.0, "extraordinary", sset) - oracles.n_e(1.064, 25.0)) < 1e-4


@settings(max_examples=200, deadline=None)
@given(lam_st, temp_st)
def test_agrees_with_independent_evaluation(sset, lam, T):
    assert refractive_index(lam, T, "extraordinary", sset) == pytest.approx(oracles.n_e(lam, T), rel=1e-13)
    assert refractive_index(lam, T, "ordinary", sset) == pytest.approx(oracles.n_o(lam, T), rel=1e-13)


def test_index_bounds_and_monotonicity_on_dense_grid(sset):
    lam = np.arange(0.5, 1.7 + 1e-9, 0.001)
    temps = np.arange(20.0, 250.0 + 1e-9, 1.0)
    L, T = np.meshgrid(lam, temps)
    ne = refractive_index(L, T, "extraordinary", sset)
    no = refractive_index(L, T, "ordinary", sset)
    assert np.all((ne > 1) & (ne < 3) & (no > 1) & (no < 3))
    assert np.all(np.diff(ne, axis=1) < 0)  # normal dispersion
    assert np.all(np.diff(ne, axis=0) > 0)  # positive thermo-optic response


def test_ordering_examples(sset):
    for T in (25.0, 100.0, 183.6):
        assert refractive_index(0.795, T, "extraordinary", sset) > refractive_index(1.609, T, "extraordinary", sset)
    assert refractive_index(0.795, 180, "extraordinary", sset) - refractive_index(0.795, 170, "extraordinary", sset) > 0


@pytest.mark.parametrize(
    "lam,T,bound",
    [(0.3, 100, "lower bound 0.4"), (3.5, 100, "upper bound 3.0"), (1.0, 10, "lower bound 20"), (1.0, 300, "upper bound 250")],
)
def test_out_of_range_names_bound(sset, lam, T, bound):
    with pytest.raises(RangeError, match=bound):
        refractive_index(lam, T, "extraordinary", sset)


def test_angle_dependent_endpoints(sset):
    ne = refractive_index(0.795, 183.6, "extraordinary", sset)
    no = refractive_index(0.795, 183.6, "ordinary", sset)
    assert angle_dependent_index(0.795, 183.6, math.pi / 2, sset) == ne
    assert angle_dependent_index(0.795, 183.6, 0.0, sset) == no
    t = math.pi / 2 - 0.01
    hand = 1.0 / math.sqrt(math.sin(t) ** 2 / ne**2 + math.cos(t) ** 2 / no**2)
    val = angle_dependent_index(0.795, 183.6, t, sset)
    assert min(ne, no) < val < max(ne, no)
    assert abs(val - hand) < 1e-5


def test_angle_dependent_monotone_between_endpoints(sset):
    th = np.linspace(0, math.pi / 2, 2001)
    n = angle_dependent_index(1.609, 183.6, th, sset)
    assert np.all(np.diff(n) < 0)  # n_o > n_e for LiNbO3
    assert np.max(np.abs(np.diff(n))) < 1e-4


def test_angle_outside_quadrant_rejected(sset):
    with pytest.raises(ValueError):
        angle_dependent_index(0.8, 100, -0.1, sset)


def test_ellipsoid_symmetric_inputs():
    assert ellipsoid_index(2.2, 2.2, 0.3) == pytest.approx(2.2, rel=1e-15)


def test_wavevector_stub_and_ordering(sset):
    assert wavevector(1.0, 25.0, "extraordinary", STUB) == pytest.approx(4 * math.pi, rel=1e-15)
    k = [wavevector(l, 183.6, "extraordinary", sset) for l in (0.532, 0.795, 1.609)]
    assert k[0] > k[1] > k[2]


@settings(max_examples=1000, deadline=None)
@given(lam_st, temp_st, st.sampled_from(["ordinary", "extraordinary"]))
def test_wavevector_round_trip(sset, lam, T, pol):
    k = wavevector(lam, T, pol, sset)
    assert k * lam / (2 * math.pi) == pytest.approx(refractive_index(lam, T, pol, sset), rel=1e-15)


def test_json_round_trip(tmp_path, sset):
    import json

    p = tmp_path / "set.json"
    p.write_text(json.dumps(sset.to_dict()))
    again = SellmeierSet.from_json(p)
    assert again == sset
    assert refractive_index(0.8, 150, "ordinary", again) == refractive_index(0.8, 150, "ordinary", sset)


def test_unknown_form_rejected():
    with pytest.raises(ValueError):
        SellmeierSet("bad", {"ordinary": {"form": "nope"}, "extraordinary": {"form": "constant", "n": 2}}, (0, 1), (0, 1))
