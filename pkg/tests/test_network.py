import random

import pytest

from sftbft.sim.network import (Jitter, Network, Regions, Stragglers, Uniform, model_from_dict,
                                symmetric_regions)


def test_models_round_trip_through_dicts():
    models = [Uniform(3.0), symmetric_regions(7, 3, 1.0, 5.0), symmetric_regions(7, 3, 1.0, 5.0, 2.0),
              Stragglers(Uniform(2.0), (5, 6), 10.0)]
    for m in models:
        assert model_from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        model_from_dict({"kind": "bogus"})


def test_regions_and_stragglers_base_delays():
    m = symmetric_regions(6, 3, 1.0, 5.0)
    assert isinstance(m, Regions)
    assert m.base(0, 3) == 1.0 and m.base(0, 1) == 5.0
    s = Stragglers(m, (1,), 7.0)
    assert s.base(1, 0) == 12.0 and s.base(0, 1) == 5.0
    assert s.bound() == 12.0


def test_jitter_stays_in_range():
    rng = random.Random(1)
    j = Jitter(Uniform(2.0), 3.0)
    draws = [j.sample(0, 1, rng) for _ in range(500)]
    assert min(draws) >= 2.0 and max(draws) <= 5.0
    assert j.bound() == 5.0


def test_network_is_seeded_and_self_delivery_is_instant():
    a = Network(Jitter(Uniform(1.0), 4.0), seed=7)
    b = Network(Jitter(Uniform(1.0), 4.0), seed=7)
    seq = [(i % 4, (i + 1) % 4, float(i)) for i in range(50)]
    assert [a.delay(*x) for x in seq] == [b.delay(*x) for x in seq]
    assert a.delay(2, 2, 0.0) == 0.0


def test_pre_gst_delays_are_capped_extra():
    net = Network(Uniform(1.0), gst=100.0, pre_gst_cap=50.0, seed=3)
    before = [net.delay(0, 1, 10.0) for _ in range(200)]
    after = [net.delay(0, 1, 150.0) for _ in range(20)]
    assert all(1.0 <= d <= 51.0 for d in before) and max(before) > 10.0
    assert after == [1.0] * 20
