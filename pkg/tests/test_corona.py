import numpy as np
import pytest

from twlab.conditions import energy_constant
from twlab.corona import (StoppingData, bounded_fluctuation_split,
                          cz_stopping_times, double_corona, energy_corona,
                          gbf_check, iterate_coronas, m_partition,
                          parallel_split, quasiorthogonality_constant,
                          stopping_energy_sq, verify_stopping_data)
from twlab.generate import clustered_measure_on_good_cubes, good_cubes, rng_for
from twlab.grid import GridSpec
from twlab.haar import corona_projection, expectation
from twlab.measures import AtomicMeasure

G = GridSpec(n=1, level_window=(-14, 2), r=4, eps=0.45)
ROOT = G.cube(0, (0,))


def rand_measure(rng, m, n=1):
    return AtomicMeasure(rng.random((m, n)), np.exp(rng.uniform(-2, 2, m)))


def spiky(rng, m):
    return rng.normal(size=m) * np.exp(rng.uniform(0, 4, m))


def test_constant_function_trivial_tree():
    rng = np.random.default_rng(0)
    sigma = rand_measure(rng, 12)
    sd = cz_stopping_times(np.ones(12), sigma, G, ROOT)
    assert sd.cubes == (ROOT,)


def test_huge_average_child_stops():
    # the large value carries little mass, so the root average stays small
    sigma = AtomicMeasure.from_atoms([(0.1, 10.0), (0.6, 0.1)])
    f = np.array([0.001, 100.0])
    # root average ~ 0.1; the cube around the second atom averages 100
    sd = cz_stopping_times(f, sigma, G, ROOT, ratio=4.0)
    stops = [F for F in sd.cubes if F != ROOT]
    assert stops and all(F.contains_point((0.6,)) for F in stops)


def test_stopping_data_properties_random():
    for i in range(12):
        rng = rng_for(100, i)
        sigma = rand_measure(rng, 18)
        f = spiky(rng, 18)
        sd = cz_stopping_times(f, sigma, G, ROOT, ratio=2.0 + 2 * rng.random())
        chk = verify_stopping_data(sd, f, sigma)
        assert chk["ok"], chk["failures"]
        assert chk["quasi_ratio"] <= quasiorthogonality_constant(sd.C0)


def test_iterate_coronas_trivial_inner():
    rng = np.random.default_rng(1)
    sigma = rand_measure(rng, 15)
    f = spiky(rng, 15)
    outer = cz_stopping_times(f, sigma, G, ROOT, ratio=2.5)
    inner = {F: StoppingData(root=F, cubes=(F,), alpha={F: 0.0}, C0=4.0)
             for F in outer.cubes}
    merged = iterate_coronas(outer, inner)
    assert set(merged.cubes) == set(outer.cubes)
    for F in outer.cubes:
        assert merged.alpha[F] == max(outer.alpha[F], inner[F].alpha[F])
    # inner cubes below the outer value are discarded; outside the corona too
    deep = outer.cubes[0]
    inner2 = dict(inner)
    child = [c for c in deep.children()][0]
    inner2[deep] = StoppingData(root=deep, cubes=(deep, child),
                                alpha={deep: 0.0, child: 0.0}, C0=4.0)
    merged2 = iterate_coronas(outer, inner2)
    assert child not in merged2.cubes  # alpha 0 < outer alpha


def test_m_partition_members_are_good_and_disjoint():
    rng = np.random.default_rng(2)
    pool = good_cubes(G, range(-9, -4), within=ROOT)
    omega = clustered_measure_on_good_cubes(rng, G, pool, 6, 3)
    mp = m_partition(ROOT, omega)
    assert mp
    for a in mp:
        for b in mp:
            if a != b:
                assert not a.contains_cube(b)


def test_energy_corona_single_atom_omega_no_stops():
    rng = np.random.default_rng(3)
    sigma = rand_measure(rng, 10)
    omega = AtomicMeasure.from_atoms([(0.5078125, 1.0)])
    E = energy_constant(sigma, omega, 0.0, G, mode="corona").value
    et = energy_corona(sigma, omega, 0.0, ROOT, E, G)
    assert et.cubes == (ROOT,)


def test_energy_corona_guarantees():
    for i in range(8):
        rng = rng_for(200, i)
        sigma = rand_measure(rng, 14)
        pool = good_cubes(G, range(-9, -4), within=ROOT)
        omega = clustered_measure_on_good_cubes(rng, G, pool, 5, 3)
        E = energy_constant(sigma, omega, 0.0, G, mode="corona").value
        et = energy_corona(sigma, omega, 0.0, ROOT, E, G)
        # sigma-Carleson with constant 2 against every member
        for I in et.cubes:
            mi = sigma.mass(I)
            if mi <= 0:
                continue
            tot = sum(sigma.mass(S) for S in et.cubes
                      if I.contains_cube(S) and S != et.root)
            assert tot <= 2.0 * mi * (1 + 1e-9)
        # stopping energy below sqrt(10) E per corona
        for S in et.cubes:
            x2 = stopping_energy_sq(et, S, sigma, omega, 0.0)
            assert x2 <= 10.0 * E ** 2 * (1 + 1e-9)
        # degenerate guard: zero threshold stops every positive-trigger cube
        et0 = energy_corona(sigma, omega, 0.0, ROOT, 0.0, G)
        assert len(et0.cubes) >= len(et.cubes)


def test_bounded_fluctuation_split_and_gbf():
    rng = np.random.default_rng(4)
    sigma = rand_measure(rng, 20)
    f = spiky(rng, 20)
    sd = cz_stopping_times(f, sigma, G, ROOT, ratio=2.0)
    gamma = 2.0
    for F in sd.cubes:
        bf = bounded_fluctuation_split(f, sigma, sd, F, gamma)
        assert np.abs(bf["part1"] + bf["part2"] - bf["projection"]).max() == 0.0
        idx = sigma.indices_in(F)
        if idx.size:
            assert np.abs(bf["part1"][idx]).max() <= bf["bound"] * (1 + 1e-9)
        if bf["big_children"]:
            rep = gbf_check(bf["part2"] / bf["scale"], sigma, F, gamma)
            assert rep.ok, rep.violations
            assert set(rep.family) == set(bf["big_children"])
    # no big children means part2 vanishes
    calm = cz_stopping_times(np.ones(20), sigma, G, ROOT)
    bf = bounded_fluctuation_split(np.ones(20), sigma, calm, ROOT, gamma)
    assert np.abs(bf["part2"]).max() == 0.0


def test_gbf_check_direct_cases():
    # heavier weights away from the bump keep the ambient averages small
    sigma = AtomicMeasure.from_atoms([(0.1, 1.0), (0.3, 5.0), (0.6, 5.0), (0.9, 5.0)])
    zero = np.zeros(4)
    assert gbf_check(zero, sigma, ROOT, 2.0).ok
    h = np.array([3.0, 0.0, 0.0, 0.0])
    rep = gbf_check(h, sigma, ROOT, 2.0)
    assert rep.ok
    assert len(rep.family) == 1 and rep.family[0].contains_point((0.1,))
    # support outside the recovered family (or an ambient average above 1)
    bad = np.array([3.0, 1.9, 0.0, 0.0])
    rep2 = gbf_check(bad, sigma, ROOT, 2.0)
    assert not rep2.ok
    # values below gamma everywhere cannot form a family
    low = np.array([1.5, 0.0, 0.0, 0.0])
    rep3 = gbf_check(low, sigma, ROOT, 2.0)
    assert not rep3.ok and rep3.family == []


def test_parallel_split_cases_and_bruteforce():
    rng = np.random.default_rng(5)
    triv = StoppingData(root=ROOT, cubes=(ROOT,), alpha={ROOT: 1.0}, C0=4.0)
    ps = parallel_split(triv, triv)
    assert ps.near == [(ROOT, ROOT)] and not ps.disjoint and not ps.far

    sigma = rand_measure(rng, 20)
    omega = rand_measure(rng, 16)
    tf = cz_stopping_times(spiky(rng, 20), sigma, G, ROOT, ratio=2.0)
    tg = cz_stopping_times(spiky(rng, 16), omega, G, ROOT, ratio=2.0)
    ps = parallel_split(tf, tg)
    nn, nd, nf = ps.sizes()
    assert nn + nd + nf == len(tf.cubes) * len(tg.cubes)
    near_set = set(map(tuple, ps.near))
    for F in tf.cubes:
        for Gc in tg.cubes:
            if not (F.contains_cube(Gc) or Gc.contains_cube(F)):
                assert (F, Gc) in set(map(tuple, ps.disjoint))
                continue
            # brute-force minimality
            want_near = False
            if Gc.contains_cube(F):
                others = [G2 for G2 in tg.cubes
                          if G2 != Gc and G2.contains_cube(F) and Gc.contains_cube(G2)]
                want_near = want_near or not others
            if F.contains_cube(Gc):
                others = [F2 for F2 in tf.cubes
                          if F2 != F and F2.contains_cube(Gc) and F.contains_cube(F2)]
                want_near = want_near or not others
            assert ((F, Gc) in near_set) == want_near


def test_double_corona_reconstruction_and_properties():
    for i in range(6):
        rng = rng_for(300, i)
        sigma = rand_measure(rng, 16)
        omega = rand_measure(rng, 12)
        f = spiky(rng, 16)
        dc = double_corona(f, sigma, omega, 0.0, G, ROOT, ratio=3.0)
        merged = dc["merged"]
        recon = np.zeros(16)
        for S in merged.cubes:
            recon += corona_projection(f, sigma, merged.corona_support_cubes(S, sigma))
        recon += expectation(sigma, f, ROOT)
        assert np.abs(recon - f).max() <= 1e-12 * max(1.0, np.abs(f).max())
        chk = verify_stopping_data(merged, f, sigma)
        assert chk["ok"], chk["failures"]
