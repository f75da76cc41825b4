import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twlab.grid import GridSpec
from twlab.measures import (AtomicMeasure, HalfSpaceAtomicMeasure, auto_grid,
                            bounding_cube, dual_halfspace_poisson,
                            halfspace_poisson, no_common_point_masses, poisson,
                            poisson_tilde, separating_level)

G1 = GridSpec(n=1, level_window=(-14, 2))
G2 = GridSpec(n=2, level_window=(-14, 2))
UNIT = G1.cube(0, (0,))


def delta(x, w=1.0, n=1):
    return AtomicMeasure.from_atoms([(x, w)], n=n)


def test_mass_containment_and_halfopen_boundary():
    assert delta(0.0).mass(UNIT) == 1.0
    assert delta(1.0).mass(UNIT) == 0.0  # right endpoint excluded
    assert delta(0.0).mass(G1.cube(-1, (0,))) == 1.0


def test_mass_random_child_oracle():
    rng = np.random.default_rng(0)
    mu = AtomicMeasure(rng.random((5, 1)), rng.random(5) + 0.1)
    child = UNIT.children()[0]
    want = sum(w for p, w in zip(mu.points, mu.weights) if p[0] < 0.5)
    assert mu.mass(child) == pytest.approx(want, abs=0)


def test_no_common_point_masses():
    assert no_common_point_masses(delta(0.0), delta(1.0))
    both = AtomicMeasure.from_atoms([(0.0, 1.0), (1.0, 1.0)])
    assert not no_common_point_masses(both, delta(1.0))
    rng = np.random.default_rng(1)
    a = AtomicMeasure(rng.random((6, 1)), np.ones(6))
    b = AtomicMeasure(rng.random((6, 1)) + 2.0, np.ones(6))
    assert no_common_point_masses(a, b)


def test_poisson_center_and_unit_distance():
    center = delta(0.5)
    assert poisson(UNIT, center, 0.0, "P") == pytest.approx(1.0, rel=1e-15)
    assert poisson(UNIT, center, 0.0, "calP") == pytest.approx(1.0, rel=1e-15)
    far = delta(1.5)  # |y - c| = 1, so (1 + 1)^(-2) both kinds at n=1, alpha=0
    assert poisson(UNIT, far, 0.0, "P") == pytest.approx(0.25, rel=1e-15)
    assert poisson(UNIT, far, 0.0, "calP") == pytest.approx(0.25, rel=1e-15)


def test_poisson_multiatom_oracle_2d():
    rng = np.random.default_rng(2)
    mu = AtomicMeasure(rng.random((7, 2)) * 3 - 1, rng.random(7) + 0.2)
    Q = G2.cube(-1, (0, 1))
    s = Q.side_float
    c = np.asarray(Q.center_float())
    alpha = 1.0
    want_p = sum(w * s / (s + np.linalg.norm(p - c)) ** (2 + 1 - alpha)
                 for p, w in zip(mu.points, mu.weights))
    want_cp = sum(w * (s / (s + np.linalg.norm(p - c)) ** 2) ** (2 - alpha)
                  for p, w in zip(mu.points, mu.weights))
    assert poisson(Q, mu, alpha, "P") == pytest.approx(want_p, rel=1e-14)
    assert poisson(Q, mu, alpha, "calP") == pytest.approx(want_cp, rel=1e-14)
    with pytest.raises(ValueError):
        poisson(Q, mu, 2.0)


@given(st.floats(0.01, 0.99), st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_poisson_monotone_and_homogeneous(x, w):
    base = delta(0.25, 1.0)
    more = AtomicMeasure.from_atoms([(0.25, 1.0), (x + 1.0, w)])
    for kind in ("P", "calP"):
        assert poisson(UNIT, more, 0.0, kind) >= poisson(UNIT, base, 0.0, kind)
        assert poisson(UNIT, base.scaled(w), 0.0, kind) == pytest.approx(
            w * poisson(UNIT, base, 0.0, kind), rel=1e-12)


def test_poisson_tilde_values():
    K = UNIT
    assert poisson_tilde(K, delta(0.5)) == pytest.approx(1.0, rel=1e-15)
    assert poisson_tilde(K, delta(1.5)) == pytest.approx(1.0 / 8.0, rel=1e-15)
    rng = np.random.default_rng(3)
    mu = AtomicMeasure(rng.random((6, 1)) * 4 - 2, rng.random(6) + 0.1)
    want = sum(w / (1 + abs(p[0] - 0.5)) ** 3 for p, w in zip(mu.points, mu.weights))
    assert poisson_tilde(K, mu) == pytest.approx(want, rel=1e-14)
    with pytest.raises(ValueError):
        poisson_tilde(G2.cube(0, (0, 0)), AtomicMeasure.from_atoms([((0.1, 0.1), 1.0)]))


def test_halfspace_poisson_values():
    nu = delta(0.3)
    assert halfspace_poisson(nu, 0.3, 1.0, 0.0) == pytest.approx(1.0, rel=1e-15)
    assert halfspace_poisson(delta(1.3), 0.3, 1.0, 0.0) == pytest.approx(0.5, rel=1e-15)
    rng = np.random.default_rng(4)
    mu = AtomicMeasure(rng.random((5, 1)), rng.random(5) + 0.1)
    t, x, alpha = 0.7, 0.2, 0.25
    want = sum(w * t / (t * t + (p[0] - x) ** 2) ** ((1 + 1 - alpha) / 2)
               for p, w in zip(mu.points, mu.weights))
    assert halfspace_poisson(mu, x, t, alpha) == pytest.approx(want, rel=1e-14)
    with pytest.raises(ValueError):
        halfspace_poisson(mu, x, 0.0, 0.0)


def test_dual_halfspace_poisson_box_restriction():
    inside = HalfSpaceAtomicMeasure(np.array([[0.4]]), np.array([1.0]), np.array([1.0]))
    # at distance 0 with n+1-alpha = 2 the integrand is t^2/t^2 = 1
    assert dual_halfspace_poisson(inside, 0.4, 0.0, UNIT) == pytest.approx(1.0)
    outside = HalfSpaceAtomicMeasure(np.array([[1.4]]), np.array([0.5]), np.array([1.0]))
    assert dual_halfspace_poisson(outside, 0.4, 0.0, UNIT) == 0.0
    tall = HalfSpaceAtomicMeasure(np.array([[0.4]]), np.array([2.0]), np.array([1.0]))
    assert dual_halfspace_poisson(tall, 0.4, 0.0, UNIT) == 0.0  # above the box
    rng = np.random.default_rng(5)
    mh = HalfSpaceAtomicMeasure(rng.random((6, 1)), rng.random(6) * 0.9 + 0.05,
                                rng.random(6))
    x, alpha = 0.3, 0.5
    want = 0.0
    for p, t, w in zip(mh.points, mh.heights, mh.weights):
        if 0 <= p[0] < 1 and t <= 1:
            want += w * t * t / (t * t + (p[0] - x) ** 2) ** ((2 - alpha) / 2)
    assert dual_halfspace_poisson(mh, x, alpha, UNIT) == pytest.approx(want, rel=1e-14)


def test_json_roundtrip(tmp_path):
    mu = AtomicMeasure.from_atoms([((0.125, 0.5), 1.0), ((0.75, 0.25), 2.5)])
    path = tmp_path / "m.json"
    mu.save(path)
    loaded = AtomicMeasure.load(path)
    assert np.array_equal(loaded.points, mu.points)
    assert np.array_equal(loaded.weights, mu.weights)
    doc = json.loads(path.read_text())
    assert doc["n"] == 2 and doc["atoms"][0]["x"] == [0.125, 0.5]


def test_measure_validation():
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([[0.1], [0.1]]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([[0.1]]), np.array([0.0]))


def test_bounding_and_separating():
    mu = AtomicMeasure.from_atoms([(0.1, 1.0), (0.6, 1.0)])
    root = bounding_cube(G1, mu)
    assert root.contains_point((0.1,)) and root.contains_point((0.6,))
    lvl = separating_level(G1, root, mu)
    assert lvl <= -1
    grid = auto_grid(mu.points, 1)
    assert grid.k_min < lvl
