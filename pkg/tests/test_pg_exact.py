import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fsolve

from laplab.conformal import PolyMap, area, harmonic_moments, min_abs_derivative
from laplab.errors import DomainError, SingularityError
from laplab.pg_exact import (INJECTION, SUCTION, PGState, cusp_time, pg_evolve,
                             pg_step, verify_pg_identity)


def test_disk_injection_closed_form():
    s = PGState.initial(PolyMap.interior([1.0, 0.0]), INJECTION)
    for t in (0.1, 0.5, 2.0):
        out = pg_step(s, t)
        assert out.coeffs[0] == pytest.approx(math.sqrt(1 + 2 * t), rel=1e-12)


def test_suction_conserves_first_moment():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), SUCTION)
    assert s.conserved.C[0].real == pytest.approx(0.1, rel=1e-14)
    traj = pg_evolve(s, 0.01, 0.2)
    for t, f in zip(traj.times, traj.maps):
        assert area(f) == pytest.approx(1.02 * np.pi - 2 * np.pi * t, rel=1e-10)
        # moments through the independent quadrature route
        assert harmonic_moments(f, 1).C[0].real == pytest.approx(0.1, rel=1e-8)


def test_zero_step_is_identity():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), SUCTION)
    assert pg_step(s, 0.0) is s


def test_rejects_unsupported_input():
    with pytest.raises(DomainError):
        PGState.initial(PolyMap.interior([1, 0.1j]))
    with pytest.raises(DomainError):
        PGState.initial(PolyMap.interior([1, 0, 0, 0.01]))
    with pytest.raises(DomainError):
        PGState.initial(PolyMap.exterior([1.0]))
    with pytest.raises(DomainError):
        PGState.initial(PolyMap.interior([1.0]), rate=1.0)


def _cusp_oracle(a0, b0):
    C1 = a0 * a0 * b0
    A0 = np.pi * (a0 * a0 + 2 * b0 * b0)

    def eqs(x):
        a, b, t = x
        return [a - 2 * b, a * a * b - C1, np.pi * (a * a + 2 * b * b) - (A0 - 2 * np.pi * t)]

    return fsolve(eqs, [0.6, 0.3, 0.2], xtol=1e-14)[2]


def test_cusp_time_matches_root_find():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), SUCTION)
    est = cusp_time(s)
    assert est.kind == "cusp"
    assert est.time == pytest.approx(_cusp_oracle(1.0, 0.1), abs=1e-10)
    assert est.time == pytest.approx(0.2535, abs=1e-4)


def test_cusp_time_special_cases():
    s = PGState.initial(PolyMap.interior([1.0, 0.0]), SUCTION)
    est = cusp_time(s)
    assert est.kind == "exhaustion" and est.time == pytest.approx(0.5)
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), INJECTION)
    assert cusp_time(s).time == math.inf


def test_trajectory_reaches_cusp():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), SUCTION)
    traj = pg_evolve(s, 1e-3, 0.3, stop_fprime=1e-3)
    assert traj.stop_reason == "singularity"
    assert min_abs_derivative(traj.maps[-1]) < 1e-3
    assert traj.times[-1] == pytest.approx(cusp_time(s).time, abs=2e-3)


def test_step_past_cusp_raises():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), SUCTION)
    traj = pg_evolve(s, 1e-3, 0.3, stop_fprime=1e-7)
    last = PGState(traj.maps[-1], traj.times[-1], s.rate, s.conserved, s.area0, s.degree)
    with pytest.raises(SingularityError):
        pg_step(last, 0.01)


def test_pg_identity_disk():
    s = PGState.initial(PolyMap.interior([1.0]), INJECTION)
    s = pg_step(s, 0.3)
    assert verify_pg_identity(s, 1e-3, 64) <= 1e-5


def test_pg_identity_second_order():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), SUCTION)
    s = pg_step(s, 0.05)
    r1 = verify_pg_identity(s, 1e-2)
    r2 = verify_pg_identity(s, 5e-3)
    assert 3.0 < r1 / r2 < 5.0


def test_pg_identity_frozen():
    s = PGState.initial(PolyMap.interior([1.0, 0.1]), INJECTION)
    assert verify_pg_identity(s, 0.0) == 1.0


@settings(max_examples=15, deadline=None)
@given(b=st.floats(-0.2, 0.2), c=st.floats(-0.08, 0.08),
       rate=st.sampled_from([INJECTION, SUCTION]))
def test_conservation_and_area_linearity(b, c, rate):
    f = PolyMap.interior([1.0, b, c])
    s = PGState.initial(f, rate)
    traj = pg_evolve(s, 0.02, 0.1)
    m = max(s.degree - 1, 1)
    C0 = s.conserved.C[:m].real
    for t, g in zip(traj.times, traj.maps):
        assert abs(area(g) - s.area0 - rate * t) <= 1e-10 * s.area0
        C = harmonic_moments(g, m).C.real
        scale = np.array([max(abs(C0[k]), (s.area0 / np.pi) ** (1 + (k + 1) / 2)) for k in range(m)])
        assert np.all(np.abs(C - C0) <= 1e-8 * scale)


@settings(max_examples=15, deadline=None)
@given(b=st.floats(0.01, 0.3))
def test_ratio_monotone(b):
    inj = pg_evolve(PGState.initial(PolyMap.interior([1.0, b]), INJECTION), 0.02, 0.2)
    ratio = [m.coeffs[1].real / m.coeffs[0].real for m in inj.maps]
    assert np.all(np.diff(ratio) < 0)
    s = PGState.initial(PolyMap.interior([1.0, b]), SUCTION)
    suc = pg_evolve(s, 0.01, min(0.2, 0.9 * cusp_time(s).time))
    ratio = [m.coeffs[1].real / m.coeffs[0].real for m in suc.maps]
    assert np.all(np.diff(ratio) > 0) and ratio[-1] < 0.5
