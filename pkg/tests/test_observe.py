import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatsource.errors import DomainError, ParseError
from heatsource.observe import FluxTrace, SensorSet, add_noise, load_trace, relative_l2, restrict, save_trace, uniform_times


def make_trace(Nt=600, L=2, seed=1):
    t = uniform_times(1.0, Nt)
    rng = np.random.default_rng(seed)
    v = -np.abs(rng.standard_normal((Nt + 1, L))) - 0.1
    return FluxTrace(t, SensorSet(tuple(np.linspace(0.3, 2.0, L))), v, "fem")


def test_sensor_set_wraps_and_rejects_duplicates():
    s = SensorSet((-math.pi / 2, 7.0))
    assert 0 <= min(s.angles) and max(s.angles) < 2 * math.pi
    assert s.angles[0] == pytest.approx(1.5 * math.pi)
    with pytest.raises(DomainError):
        SensorSet((0.1, 0.1 + 2 * math.pi))
    with pytest.raises(DomainError):
        SensorSet(())


def test_sensor_set_integer_pi_record():
    assert SensorSet((1.7, 2.0)).avoids_integer_pi()
    assert not SensorSet((0.0, math.pi)).avoids_integer_pi()
    assert not SensorSet((0.5, 1.0, 0.5 + 2 * math.pi - 1e-13 + math.pi)).avoids_integer_pi()


def test_sensor_points_on_ellipse():
    p = SensorSet((0.0, math.pi / 2)).points(1.2, 0.8)
    assert np.allclose(p, [[1.2, 0.0], [0.0, 0.8]], atol=1e-15)


def test_trace_shape_checked_and_read_only():
    t = uniform_times(1.0, 4)
    with pytest.raises(DomainError):
        FluxTrace(t, SensorSet((1.0, 2.0)), np.zeros((5, 3)))
    tr = FluxTrace(t, SensorSet((1.0, 2.0)), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        tr.values[0, 0] = 1.0


def test_noise_zero_is_identity_and_deterministic():
    tr = make_trace()
    assert np.array_equal(add_noise(tr, 0.0, 3).values, tr.values)
    a, b = add_noise(tr, 0.05, 7), add_noise(tr, 0.05, 7)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, add_noise(tr, 0.05, 8).values)
    assert not np.array_equal(a.values, add_noise(tr, 0.03, 7).values)
    assert a.seed == 7 and a.delta == 0.05
    with pytest.raises(DomainError):
        add_noise(tr, -0.1, 0)


def test_noise_statistics_monte_carlo():
    # 10^5 relative perturbations: standardized mean ~ 0, std ~ 1
    t = uniform_times(1.0, 49_999)
    tr = FluxTrace(t, SensorSet((1.0, 2.0)), np.full((t.size, 2), -0.7))
    d = 0.05
    xi = (add_noise(tr, d, 11).values - tr.values) / (d * tr.values)
    assert xi.size == 100_000
    assert abs(xi.mean()) < 0.02 and abs(xi.std() - 1) < 0.02
    # mean absolute relative error is delta * sqrt(2 / pi)
    rel = np.abs(add_noise(tr, d, 12).values - tr.values) / np.abs(tr.values)
    assert rel.mean() == pytest.approx(d * math.sqrt(2 / math.pi), rel=0.02)


def test_noise_stream_order_is_time_major():
    tr = make_trace(Nt=10, L=3)
    d = 0.1
    xi = np.random.default_rng([5, round(d * 1e9)]).standard_normal(33)
    expected = tr.values * (1 + d * xi.reshape(11, 3))
    assert np.array_equal(add_noise(tr, d, 5).values, expected)


def test_restrict_identity_subsample_and_composition():
    tr = make_trace()
    same = restrict(tr, tr.times)
    assert np.array_equal(same.values, tr.values)
    half = restrict(tr, 300)
    assert half.Nt == 300 and np.array_equal(half.values, tr.values[::2])
    assert np.array_equal(restrict(half, 150).values, restrict(tr, 150).values)
    with pytest.raises(DomainError):
        restrict(tr, 7)


def test_relative_l2_window():
    t = uniform_times(1.0, 100)
    a = np.ones((101, 1))
    assert relative_l2(a, a, t)[0] == 0.0
    assert relative_l2(1.1 * a, a, t)[0] == pytest.approx(0.1, rel=1e-12)
    b = a.copy()
    b[:5] = 100.0  # outside (0.05, 1) only
    assert relative_l2(b, a, t)[0] == 0.0


def test_trace_round_trip_bitwise(tmp_path):
    tr = add_noise(make_trace(Nt=40, L=3), 0.03, 2)
    path = tmp_path / "t.csv"
    save_trace(tr, path, ["config {}"])
    back = load_trace(path)
    assert np.array_equal(back.values, tr.values) and np.array_equal(back.times, tr.times)
    assert back.sensors == tr.sensors and back.seed == 2 and back.delta == 0.03
    assert back.provenance == "fem" and back.meta["comments"] == ["config {}"]


@pytest.mark.parametrize(
    "mutate, line",
    [
        (lambda L: ["# flux-trace-v2" + L[0][15:]] + L[1:], 1),
        (lambda L: L[:3] + ["0.1,nan,2"] + L[4:], 4),
        (lambda L: L[:3] + ["0.1,1.0"] + L[4:], 4),
        (lambda L: L[:3] + ["0.1,x,2"] + L[4:], 4),
    ],
)
def test_trace_parse_errors_report_line(tmp_path, mutate, line):
    tr = make_trace(Nt=5, L=2)
    path = tmp_path / "t.csv"
    save_trace(tr, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(mutate(lines)) + "\n")
    with pytest.raises(ParseError) as info:
        load_trace(path)
    assert info.value.line == line and str(info.value).startswith(f"line {line}:")


def test_trace_row_count_mismatch(tmp_path):
    tr = make_trace(Nt=5, L=2)
    path = tmp_path / "t.csv"
    save_trace(tr, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError):
        load_trace(path)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.001, 0.2))
def test_noise_scale_invariance(seed, delta):
    # the perturbation is relative: scaling the trace scales the noisy trace
    tr = make_trace(Nt=8, L=2)
    a = add_noise(tr, delta, seed).values
    b = add_noise(tr.with_values(3.0 * tr.values), delta, seed).values
    assert np.allclose(b, 3.0 * a, rtol=1e-14, atol=0)
