import math

import numpy as np
import pytest

from toruskam.atlas import (ParameterAtlas, ParameterBox, diophantine_ok,
                            k_modes, measure_fraction, melnikov1_ok,
                            monte_carlo_excluded, nominal_half_width,
                            nonresonance_predicate, pave_and_filter)

PHI = (1.0 + math.sqrt(5.0)) / 2.0


# ----------------------------------------------------------------------
# non-resonance scans
# ----------------------------------------------------------------------

def test_diophantine_resonant_vector():
    rep = diophantine_ok((1.0, 1.0), N=5, gamma=0.01, tau=2)
    assert not rep.ok
    assert tuple(abs(c) for c in rep.worst) == (1, 1)
    assert rep.margin < 0


def test_diophantine_golden_passes():
    rep = diophantine_ok((1.0, PHI), N=20, gamma=0.05, tau=3)
    assert rep.ok and rep.margin > 0


def test_diophantine_rational_ratio():
    rep = diophantine_ok((1.0, 0.5), N=5, gamma=0.01, tau=2)
    assert not rep.ok
    assert tuple(abs(c) for c in rep.worst) == (1, 2)


def test_melnikov_k_zero_divisor():
    rep = melnikov1_ok((1.2, PHI), (1.0,), N=3, gamma=0.01, tau=2)
    assert rep.ok


def test_melnikov_planted_resonance():
    k0 = (-2, -1)
    Om = -(k0[0] * 1.0 + k0[1] * PHI)
    assert Om > 0
    rep = melnikov1_ok((1.0, PHI), (Om,), N=3, gamma=0.01, tau=2)
    assert not rep.ok
    j, k = rep.worst
    assert j == 0 and k == k0


def test_melnikov_doubled_reduces_for_n1():
    a = melnikov1_ok((1.0, PHI), (0.7,), N=4, gamma=0.02, tau=2,
                     doubled=True)
    b = melnikov1_ok((1.0, PHI), (1.4,), N=4, gamma=0.02, tau=2)
    assert a.ok == b.ok
    assert a.margin == pytest.approx(b.margin)


def test_diophantine_scale_propagation():
    # passing at gamma (1 + 2^{1-l}) and moving omega by less than
    # gamma 2^{-l} / max|k|_1^{tau+1} keeps it passing at gamma (1 + 2^{-l})
    gamma, tau, N, l = 0.05, 3.0, 20, 4
    omega = np.array([1.0, PHI])
    assert diophantine_ok(omega, N, gamma * (1 + 2 ** -(l - 1)), tau).ok
    kmax = 2 * N          # max |k|_1 over the scan box
    radius = gamma * 2 ** -l * kmax ** -(tau + 1) / 2
    rng = np.random.default_rng(0)
    for _ in range(20):
        delta = rng.uniform(-radius, radius, size=2)
        rep = diophantine_ok(omega + delta, N, gamma * (1 + 2 ** -l), tau)
        assert rep.ok


def test_predicate_matches_scalar_scans():
    rng = np.random.default_rng(1)
    pts = rng.uniform(1.0, 2.0, size=(10, 2))
    Om = (1.1, 1.4)
    pred = nonresonance_predicate(Om, N=4, gamma=0.01, tau=2)
    got = pred(pts)
    for i, xi in enumerate(pts):
        want = diophantine_ok(xi, 4, 0.01, 2).ok \
            and melnikov1_ok(xi, Om, 4, 0.01, 2).ok \
            and melnikov1_ok(xi, Om, 4, 0.01, 2, doubled=True).ok
        assert bool(got[i]) == want


# ----------------------------------------------------------------------
# atlases
# ----------------------------------------------------------------------

def test_pave_trivial_predicate_tiles_exactly():
    atlas = ParameterAtlas.root((1.5, 1.5), 0.5, A=10.0, size_exponent=1)
    out, removed = pave_and_filter(atlas, 1,
                                   lambda pts: np.ones(len(pts), bool))
    assert removed == 0.0
    assert len(out.boxes) == 100
    assert out.total_volume() == pytest.approx(atlas.total_volume())
    out.validate()
    rows = out.serialize_rows()
    assert len(rows) == 100 and rows[0][0] == 1


def test_pave_slab_measure_oracle():
    # exclude the slab |xi_1 - xi_2| < delta; exact removed volume in the
    # box is 2 delta * side - delta^2
    delta = 0.02
    atlas = ParameterAtlas.root((1.25, 1.25), 0.25, A=10.0, size_exponent=1)

    def pred(pts):
        return np.abs(pts[:, 0] - pts[:, 1]) >= delta

    out, removed = pave_and_filter(atlas, 3, pred)
    exact = 2 * delta * 0.5 - delta ** 2
    assert removed == pytest.approx(exact, rel=0.2)
    assert out.total_volume() + removed == pytest.approx(
        atlas.total_volume())


def test_nesting_parent_links():
    atlas = ParameterAtlas.root((0.0,), 0.5, A=4.0, size_exponent=1)
    rng = np.random.default_rng(2)
    out, _ = pave_and_filter(atlas, 1,
                             lambda pts: rng.random(len(pts)) < 0.8)
    for box, parent in zip(out.boxes, out.parents):
        assert parent is atlas.boxes[0]
        assert parent.contains(box.center)


def test_measure_fraction_trivial_cases():
    atlas = ParameterAtlas.root((0.0, 0.0), 0.5)
    assert measure_fraction(atlas, atlas) == 1.0
    half = ParameterAtlas(level=1, A=10.0, size_exponent=4,
                          boxes=atlas.boxes[:1], parents=[None])
    half.boxes = [ParameterBox((0.25, 0.0), 0.25, 1),
                  ParameterBox((-0.25, 0.0), 0.25, 1)]
    assert measure_fraction(half, atlas) == pytest.approx(0.5)


def test_validate_detects_overlap():
    bad = ParameterAtlas(level=0, A=10.0, size_exponent=4,
                         boxes=[ParameterBox((0.0,), 0.5, 0),
                                ParameterBox((0.5, ), 0.5, 0)],
                         parents=[None, None])
    with pytest.raises(ValueError):
        bad.validate()


def test_monte_carlo_half_space():
    box = ParameterBox((1.5, 1.5), 0.5, 0)
    rng = np.random.default_rng(3)
    frac, err = monte_carlo_excluded(lambda p: p[:, 0] <= 1.5, box,
                                     200_000, rng)
    assert frac == pytest.approx(0.5, abs=5 * err + 1e-3)


def test_k_modes_and_nominal_width():
    ks = k_modes(2, 2)
    assert len(ks) == 24 and not (np.abs(ks).max(axis=1) == 0).any()
    assert nominal_half_width(10.0, 1, 0) == 0.5
    assert nominal_half_width(10.0, 1, 2) == pytest.approx(0.005)


def test_excluded_fraction_scales_like_sqrt_eps():
    # gamma proportional to sqrt(eps): measured excluded fraction should
    # follow, slope ~ 1/2 on log-log
    box = ParameterBox((1.5, 1.5), 0.5, 0)
    fracs = []
    epss = [1e-4, 1e-5, 1e-6]
    for i, eps in enumerate(epss):
        pred = nonresonance_predicate((1.17,), N=6, gamma=3 * math.sqrt(eps),
                                      tau=2)
        rng = np.random.default_rng(10 + i)
        frac, _ = monte_carlo_excluded(pred, box, 120_000, rng)
        fracs.append(frac)
    slope = np.polyfit(np.log(epss), np.log(fracs), 1)[0]
    assert 0.5 / 1.8 <= slope <= 0.5 * 1.8
    for eps, frac in zip(epss, fracs):
        ratio = frac / math.sqrt(eps)
        assert fracs[0] / math.sqrt(epss[0]) / 3 <= ratio \
            <= fracs[0] / math.sqrt(epss[0]) * 3
