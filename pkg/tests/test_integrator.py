import numpy as np
import pytest

from spmlattice.integrator import BlowUpError, IntegrationError, StepSizeUnderflow, dopri5


def test_linear_decay_exact():
    stops = np.linspace(0.1, 2.0, 20)
    times, states, log = dopri5(lambda t, y: -y, 0.0, np.array([1.0, 2.0]), stops, 1e-11, checkpoints=stops)
    assert np.allclose(states[:, 0, 0], np.exp(-times), rtol=1e-10, atol=0)
    assert np.allclose(states[:, 0, 1], 2 * np.exp(-times), rtol=1e-10, atol=0)
    assert log.accepted == len(log.steps) >= len(stops)


def test_checkpoint_at_start_is_recorded():
    times, states, _ = dopri5(lambda t, y: -y, 0.0, np.ones(3), np.array([1.0]), 1e-8, checkpoints=[0.0, 1.0])
    assert times.tolist() == [0.0, 1.0]
    assert np.all(states[0] == 1.0)


def test_steps_do_not_cross_stops():
    stops = np.array([0.3, 0.7, 1.0])
    seen = []

    def f(t, y):
        seen.append(t)
        return np.cos(t) * np.ones_like(y)

    _, _, log = dopri5(f, 0.0, np.zeros(1), stops, 1e-6)
    ends = np.cumsum(log.steps)
    assert np.any(np.isclose(ends, 0.3)) and np.any(np.isclose(ends, 0.7))
    for a, b in zip(stops[:-1], stops[1:]):
        inside = [t for t in seen if a < t < b]
        assert inside  # evaluated in every panel


def test_staggered_start_matches_separate_run():
    f = lambda t, y: -y * (1 + np.sin(t))  # noqa: E731
    stops = np.array([0.5, 1.0, 1.5, 2.0])
    y0 = np.array([[1.0], [3.0]])
    _, late, _ = dopri5(f, 0.0, y0, stops, 1e-10, starts=np.array([0.0, 0.5]))
    _, alone, _ = dopri5(f, 0.5, y0[1:], stops[1:], 1e-10)
    assert late[-1, 1, 0] == pytest.approx(alone[-1, 0, 0], rel=1e-9)


def test_blowup_is_reported():
    with pytest.raises((BlowUpError, StepSizeUnderflow)) as info:
        dopri5(lambda t, y: y * y, 0.0, np.ones(1), np.array([2.0]), 1e-8)
    assert isinstance(info.value, IntegrationError)
    assert 0.9 < info.value.t <= 1.0


def test_rejects_bad_stops():
    with pytest.raises(ValueError):
        dopri5(lambda t, y: y, 0.0, np.ones(1), np.array([1.0, 0.5]), 1e-8)
