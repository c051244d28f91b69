import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critlab.config import ConfigError, EnvConfig, SenseParams
from critlab.guidance import (
    GuidanceKind,
    GuidanceSchedule,
    HelperCoefficients,
    effective_reward,
    helper_reward,
    is_potential_based,
    mentor_action,
)
from critlab.senses import EyesightStatus, eyesight_status
from critlab.world import Action, EpisodeState, ObjectInstance, Pose, Reach, reset, step

OUT, LEFT, RIGHT = EyesightStatus.OUT, EyesightStatus.LEFT, EyesightStatus.RIGHT


def test_helper_examples():
    assert helper_reward(OUT, Action(1, 0.7)) == pytest.approx(-0.03)
    assert helper_reward(LEFT, Action(1, 1)) == pytest.approx(0.08)
    assert helper_reward(RIGHT, Action(0, 0)) == 0


# Frozen table: status x a_f x a_r, computed by hand from the three branches.
HELPER_TABLE = {
    (OUT, 0.0, -1.0): 0.0, (OUT, 0.0, 0.0): 0.0, (OUT, 0.0, 1.0): 0.0,
    (OUT, 0.5, -1.0): -0.015, (OUT, 0.5, 0.0): -0.015, (OUT, 0.5, 1.0): -0.015,
    (OUT, 1.0, -1.0): -0.03, (OUT, 1.0, 0.0): -0.03, (OUT, 1.0, 1.0): -0.03,
    (LEFT, 0.0, -1.0): -0.05, (LEFT, 0.0, 0.0): 0.0, (LEFT, 0.0, 1.0): 0.05,
    (LEFT, 0.5, -1.0): -0.035, (LEFT, 0.5, 0.0): 0.015, (LEFT, 0.5, 1.0): 0.065,
    (LEFT, 1.0, -1.0): -0.02, (LEFT, 1.0, 0.0): 0.03, (LEFT, 1.0, 1.0): 0.08,
    (RIGHT, 0.0, -1.0): 0.05, (RIGHT, 0.0, 0.0): 0.0, (RIGHT, 0.0, 1.0): -0.05,
    (RIGHT, 0.5, -1.0): 0.065, (RIGHT, 0.5, 0.0): 0.015, (RIGHT, 0.5, 1.0): -0.035,
    (RIGHT, 1.0, -1.0): 0.08, (RIGHT, 1.0, 0.0): 0.03, (RIGHT, 1.0, 1.0): -0.02,
}


@pytest.mark.parametrize("status,a_f,a_r", list(HELPER_TABLE))
def test_helper_table(status, a_f, a_r):
    assert helper_reward(status, Action(a_f, a_r)) == pytest.approx(HELPER_TABLE[status, a_f, a_r], abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(a_f=st.floats(0, 1), a_r=st.floats(-1, 1), b_f=st.floats(0, 1), b_r=st.floats(-1, 1),
       lam=st.floats(0, 1))
def test_helper_linear_within_branch(a_f, a_r, b_f, b_r, lam):
    for s in EyesightStatus:
        mix = Action(lam * a_f + (1 - lam) * b_f, lam * a_r + (1 - lam) * b_r)
        expect = lam * helper_reward(s, Action(a_f, a_r)) + (1 - lam) * helper_reward(s, Action(b_f, b_r))
        assert helper_reward(s, mix) == pytest.approx(expect, abs=1e-12)


def test_custom_coefficients():
    c = HelperCoefficients.from_dict({"blind": -1.0, "turn": 2.0, "forward": 3.0})
    assert helper_reward(LEFT, Action(1, 1), c) == 5.0
    assert helper_reward(OUT, Action(1, 1), c) == -1.0


def test_effective_reward_window():
    sch = GuidanceSchedule(GuidanceKind.HELPER, 10_000, 20_000)
    a = Action(1, 1)
    assert effective_reward(sch, 9_999, 0.0, LEFT, a) == 0.0
    assert effective_reward(sch, 10_000, 0.0, LEFT, a) == pytest.approx(0.08)
    assert effective_reward(sch, 29_999, 1.0, LEFT, a) == pytest.approx(1.08)
    assert effective_reward(sch, 30_000, 1.0, LEFT, a) == 1.0
    for kind in (GuidanceKind.SPARSE, GuidanceKind.BEHAVIOR_CLONE):
        s2 = GuidanceSchedule(kind, 0, 10 ** 9)
        assert effective_reward(s2, 5, -1.0, RIGHT, Action(1, -1)) == -1.0


def test_zero_duration_never_active():
    sch = GuidanceSchedule(GuidanceKind.HELPER, 100, 0)
    assert not any(sch.active(f) for f in range(0, 300))


def test_schedule_parsing():
    s = GuidanceSchedule.from_dict({"kind": "bc", "t_g_frames": 5, "duration_frames": 7})
    assert s.kind is GuidanceKind.BEHAVIOR_CLONE and s.to_dict()["kind"] == "behavior_clone"
    assert GuidanceSchedule.from_dict(s.to_dict()) == s
    with pytest.raises(ConfigError):
        GuidanceKind.parse("dagger")
    with pytest.raises(ConfigError):
        GuidanceSchedule(GuidanceKind.HELPER, -1, 5)
    assert [k.order for k in GuidanceKind] == [0, 1, 2]


def _at(bearing, d=6.0):
    return EpisodeState(Pose(9, 9, 0), (ObjectInstance(0, "red", (9 + d * math.cos(bearing), 9 + d * math.sin(bearing))),), 0)


def test_mentor_examples(sp):
    assert mentor_action(_at(math.pi), sp) == Action(0.0, 1.0)
    a = mentor_action(_at(0.0), sp)
    assert a.a_f == 1.0 and a.a_r == pytest.approx(0.0, abs=1e-12)
    a = mentor_action(_at(math.radians(22.5)), sp)
    assert a.a_f == 1.0 and a.a_r == pytest.approx(0.125)
    a = mentor_action(_at(math.radians(-22.5)), sp)
    assert a.a_r == pytest.approx(-0.125)


def test_mentor_reaches_target_from_view(sp):
    env = EnvConfig(n_objects=1)
    rng = np.random.default_rng(0)
    n = 0
    while n < 200:
        s = reset(env, rng)
        if eyesight_status(s, sp) is OUT:
            continue
        n += 1
        while not s.done:
            a = mentor_action(s, sp)
            assert 0 <= a.a_f <= 1 and -1 <= a.a_r <= 1
            if eyesight_status(s, sp) is not OUT:
                # tracking turns toward the target
                assert a.a_r * (1 if eyesight_status(s, sp) is LEFT else -1) >= 0
            s, out = step(s, a, env)
        assert out.reach is Reach.TARGET


def test_potential_detection():
    rng = np.random.default_rng(0)
    phi = rng.normal(size=6)
    F = np.broadcast_to(0.9 * phi[None, None, :] - phi[:, None, None], (6, 3, 6))
    fit = is_potential_based(F, 0.9)
    assert fit.representable and fit.residual < 1e-20
    assert not is_potential_based(np.full((4, 2, 4), 0.5), 1.0).representable
    zero = is_potential_based(np.zeros((3, 2, 3)), 0.9)
    assert zero.representable and np.allclose(zero.phi, 0)
    with pytest.raises(ValueError):
        is_potential_based(np.zeros((0, 1, 0)), 0.9)


def test_window_boundary_sweep():
    """Around both window edges, Helper differs from base exactly inside."""
    for t_g, dur in itertools.product((0, 1, 256, 10_000), (1, 255, 20_000)):
        sch = GuidanceSchedule(GuidanceKind.HELPER, t_g, dur)
        for f in range(max(0, t_g - 3), t_g + 4):
            for g in (f, f + dur):
                inside = t_g <= g < t_g + dur
                r = effective_reward(sch, g, 0.0, LEFT, Action(1, 1))
                assert (r != 0.0) == inside
