import numpy as np
import pytest

from patchplan.geometry import Wrench
from patchplan.limit_surface import (FrictionLimitSurface, PatchLimitSurface, SpineLimitSurface,
                                     couple_paired_fingers, decompose_patch_wrench, friction_contains,
                                     linearized_friction_constraints, patch_contains, spine_contains, split_torsion)


def _patch(mu=0.6, torsion=0.02, f_max=50.0, spine=(4.0, 4.0, 0.2)):
    return PatchLimitSurface(FrictionLimitSurface(mu, torsion, f_max), SpineLimitSurface(*spine))


def _point(fx, fy, fz, mz):
    mz_plus, mz_minus, gamma = split_torsion(mz)
    return [fx, fy, fz, mz, mz_plus, mz_minus, gamma]


def test_friction_ellipsoid_boundary():
    s = FrictionLimitSurface(mu=0.5, torsion=0.1, f_max=20.0)
    assert friction_contains(s, Wrench([5.0, 0.0, 10.0], [0, 0, 0]))
    assert not friction_contains(s, Wrench([5.1, 0.0, 10.0], [0, 0, 0]))
    # shear at 60 % and torsion at 80 % of their caps: 0.36 + 0.64 = 1
    assert friction_contains(s, Wrench([3.0, 0.0, 10.0], [0, 0, 0.4]))
    assert not friction_contains(s, Wrench([3.0, 0.0, 10.0], [0, 0, 0.45]))


def test_friction_needs_normal_force():
    s = FrictionLimitSurface(mu=0.5, torsion=0.1, f_max=20.0)
    assert friction_contains(s, Wrench.zero())
    assert not friction_contains(s, Wrench([0.1, 0.0, 0.0], [0, 0, 0]))
    assert not friction_contains(s, Wrench([0.0, 0.0, -1.0], [0, 0, 0]))
    assert not friction_contains(s, Wrench([0.0, 0.0, 21.0], [0, 0, 0]))


def test_point_contact_carries_no_torsion():
    s = FrictionLimitSurface.point(mu=0.6, f_max=60.0)
    assert s.point_contact
    assert friction_contains(s, Wrench([3.0, 0.0, 10.0], [0, 0, 0]))
    assert not friction_contains(s, Wrench([3.0, 0.0, 10.0], [0, 0, 0.01]))


def test_frictionless_face_takes_only_normal_force():
    s = FrictionLimitSurface(mu=0.0, torsion=0.02, f_max=60.0)
    assert friction_contains(s, Wrench([0.0, 0.0, 10.0], [0, 0, 0]))
    assert not friction_contains(s, Wrench([0.01, 0.0, 10.0], [0, 0, 0]))


def test_ellipsoid_value_matches_membership():
    s = FrictionLimitSurface(mu=0.5, torsion=0.1, f_max=20.0)
    assert s.ellipsoid_value(3.0, 0.0, 10.0, 0.4) == pytest.approx(1.0)
    assert s.ellipsoid_value(0.0, 0.0, 0.0, 0.0) == 0.0
    assert s.ellipsoid_value(0.1, 0.0, 0.0, 0.0) == np.inf
    assert FrictionLimitSurface.point(0.5, 20.0).ellipsoid_value(0.0, 0.0, 10.0, 0.1) == np.inf
    for fx, mz in [(3.0, 0.4), (3.0, 0.45), (4.9, 0.05), (5.2, 0.0)]:
        inside = s.ellipsoid_value(fx, 0.0, 10.0, mz) <= 1.0
        assert friction_contains(s, Wrench([fx, 0.0, 10.0], [0, 0, mz]), tol=0.0) == inside


def test_spine_box():
    s = SpineLimitSurface(4.0, 4.0, 0.2)
    assert spine_contains(s, Wrench([4.0, -4.0, 0.0], [0, 0, 0.2]))
    assert not spine_contains(s, Wrench([4.1, 0.0, 0.0], [0, 0, 0]))
    assert not spine_contains(s, Wrench([0.0, 0.0, 1.0], [0, 0, 0]))


def test_limit_surfaces_reject_bad_parameters():
    with pytest.raises(ValueError, match="mu"):
        FrictionLimitSurface(-0.1, 0.0, 1.0)
    with pytest.raises(ValueError, match="f_max"):
        FrictionLimitSurface(0.5, 0.0, 0.0)
    with pytest.raises(ValueError, match="only for a point contact"):
        FrictionLimitSurface(0.5, -0.01, 1.0)
    with pytest.raises(ValueError, match="tau_max"):
        SpineLimitSurface(1.0, 1.0, -1.0)


def test_patch_carries_shear_at_zero_normal_force():
    s = _patch()
    assert patch_contains(s, Wrench([3.0, 0.0, 0.0], [0, 0, 0.1]))
    assert not patch_contains(s, Wrench([5.0, 0.0, 0.0], [0, 0, 0]))


def test_patch_is_minkowski_sum():
    s = _patch(mu=0.5, torsion=0.02, spine=(4.0, 4.0, 0.0))
    # friction alone allows 5 N of shear at 10 N normal; spines add 4 N
    assert patch_contains(s, Wrench([9.0, 0.0, 10.0], [0, 0, 0]))
    assert not patch_contains(s, Wrench([9.2, 0.0, 10.0], [0, 0, 0]))


def test_decomposition_sums_to_wrench():
    s = _patch()
    w = Wrench([7.0, -2.0, 10.0], [0, 0, 0.3])
    friction, spine = decompose_patch_wrench(s, w)
    np.testing.assert_allclose(friction.force + spine.force, w.force)
    np.testing.assert_allclose(friction.moment + spine.moment, w.moment)
    assert spine.force[0] == pytest.approx(4.0)
    assert spine.moment[2] == pytest.approx(0.2)
    assert spine_contains(s.spine, spine)


def test_split_torsion():
    assert split_torsion(0.3) == (0.3, 0.0, 1)
    assert split_torsion(-0.3) == (0.0, 0.3, 0)
    assert split_torsion(0.0) == (0.0, 0.0, 1)


def test_linearized_family_accepts_split_points():
    s = FrictionLimitSurface(mu=1.0, torsion=0.1, f_max=30.0)
    family = linearized_friction_constraints(s)
    assert family.satisfied(_point(4.0, 0.0, 10.0, 0.5))
    assert family.satisfied(_point(-4.0, 0.0, 10.0, -0.5))
    # |fx| + |mz| / k must stay below mu fz
    assert not family.satisfied(_point(6.0, 0.0, 10.0, 0.5))


def test_linearized_family_indicator_rows_fix_split_sign():
    s = FrictionLimitSurface(mu=1.0, torsion=0.1, f_max=30.0)
    family = linearized_friction_constraints(s)
    assert len(family.indicator_rows) == 2
    # both split parts positive contradicts either gamma
    assert not family.satisfied([0.0, 0.0, 10.0, 0.0, 0.2, 0.2, 1])
    assert not family.satisfied([0.0, 0.0, 10.0, 0.0, 0.2, 0.2, 0])


def test_uncoupled_family_ignores_torsion_in_shear():
    s = FrictionLimitSurface(mu=1.0, torsion=0.1, f_max=30.0)
    coupled = linearized_friction_constraints(s, patch_coupling=True)
    free = linearized_friction_constraints(s, patch_coupling=False)
    point = _point(9.0, 0.0, 10.0, 0.5)
    assert free.satisfied(point)
    assert not coupled.satisfied(point)
    assert free.matrix.shape[0] < coupled.matrix.shape[0]


def test_linearized_family_is_inside_ellipsoid():
    rng = np.random.default_rng(7)
    s = FrictionLimitSurface(mu=0.8, torsion=0.05, f_max=40.0)
    family = linearized_friction_constraints(s)
    inside = 0
    for _ in range(10000):
        fz = rng.uniform(0.0, s.f_max)
        fx = rng.uniform(-s.mu * fz, s.mu * fz)
        mz = rng.uniform(-s.torsion * s.mu * fz, s.torsion * s.mu * fz)
        point = _point(fx, 0.0, fz, mz)
        if not family.satisfied(point):
            continue
        inside += 1
        assert friction_contains(s, Wrench([fx, 0.0, fz], [0.0, 0.0, mz]))
    assert inside > 1000


def test_couple_paired_fingers():
    residual = couple_paired_fingers(Wrench([1, 2, 3], [0, 0, 0.5]), Wrench([1, 1, -3], [0, 0, 0.25]))
    np.testing.assert_allclose(residual, [0.0, 1.0, 0.25])
