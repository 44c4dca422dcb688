import sys

import numpy as np
import pytest

from orcasim.orca import (AgentClass, AgentState, ResponsibilityMatrix, VoExit,
                          build_orca_halfplane, compute_vo_exit,
                          gather_constraints)

from oracles import vo_boundary_samples


def ped(agent_id, pos, vel, goal=(0.0, 0.0), radius=0.25):
    return AgentState(agent_id, pos, vel, radius, 1.4, 2.0, goal,
                      AgentClass.PEDESTRIAN)


def veh(agent_id, pos, vel, goal=(0.0, 0.0), radius=1.0):
    return AgentState(agent_id, pos, vel, radius, 3.0, 5.0, goal,
                      AgentClass.VEHICLE)


# --- compute_vo_exit ----------------------------------------------------------

def test_exit_outside_vo_via_cutoff_arc():
    # Stationary relative motion far from the obstacle: nearest boundary point
    # is the near pole of the cutoff disc; the exit points into the obstacle.
    e = compute_vo_exit((10, 0), (0, 0), 0.5, 2.0, 0.1)
    np.testing.assert_allclose(e.u, [10 / 2 - 0.5 / 2, 0], atol=1e-12)
    np.testing.assert_allclose(e.normal, [-1, 0], atol=1e-12)
    assert float(e.u @ e.normal) < 0
    boundary = vo_boundary_samples((10, 0), 0.5, 2.0)
    dists = np.linalg.norm(boundary - np.zeros(2), axis=1)
    assert abs(dists.min() - np.linalg.norm(e.u)) < 1e-6


def test_exit_at_cutoff_disc_center_is_radial_toward_origin():
    e = compute_vo_exit((2, 0), (2, 0), 1.0, 1.0, 0.1)
    np.testing.assert_allclose(e.u, [-1, 0], atol=1e-12)
    np.testing.assert_allclose(e.normal, [-1, 0], atol=1e-12)
    assert float(e.u @ e.normal) > 0
    boundary = vo_boundary_samples((2, 0), 1.0, 1.0)
    dists = np.linalg.norm(boundary - np.array([2.0, 0.0]), axis=1)
    assert abs(dists.min() - 1.0) < 1e-6


def test_exit_for_overlapping_agents_uses_dt_disc():
    e = compute_vo_exit((0.4, 0), (0, 0), 0.5, 2.0, 0.1)
    np.testing.assert_allclose(e.u, [-1, 0], atol=1e-12)
    np.testing.assert_allclose(e.normal, [-1, 0], atol=1e-12)


def test_exit_matches_boundary_sampling_on_random_cases():
    rng = np.random.default_rng(31)
    for _ in range(60):
        d = 1.0 + 9.0 * rng.random()
        ang = 2 * np.pi * rng.random()
        rel_pos = d * np.array([np.cos(ang), np.sin(ang)])
        comb = 0.2 + 0.6 * rng.random()
        tau = 0.5 + 3.0 * rng.random()
        rel_vel = rng.normal(size=2) * 2.0
        e = compute_vo_exit(rel_pos, rel_vel, comb, tau, 0.1)
        boundary = vo_boundary_samples(rel_pos, comb, tau, n=200_000)
        d_oracle = np.linalg.norm(boundary - rel_vel, axis=1).min()
        assert np.linalg.norm(e.u) <= d_oracle + 2e-3
        assert abs(np.linalg.norm(e.normal) - 1.0) < 1e-9


def test_exit_sign_convention_inside_vs_outside():
    # Walking straight at a nearby neighbor is a collision course.
    inside = compute_vo_exit((2, 0), (2.0, 0.001), 0.5, 2.0, 0.1)
    assert float(inside.u @ inside.normal) > 0
    outside = compute_vo_exit((10, 0), (0.0, 1.0), 0.5, 2.0, 0.1)
    assert float(outside.u @ outside.normal) < 0


def test_exit_mirror_oddness():
    rng = np.random.default_rng(37)
    for _ in range(100):
        rel_pos = rng.normal(size=2) * 4
        if np.linalg.norm(rel_pos) < 0.9:
            continue
        rel_vel = rng.normal(size=2) * 2
        a = compute_vo_exit(rel_pos, rel_vel, 0.5, 2.0, 0.1)
        b = compute_vo_exit(-rel_pos, -rel_vel, 0.5, 2.0, 0.1)
        np.testing.assert_array_equal(a.u, -b.u)
        np.testing.assert_array_equal(a.normal, -b.normal)


def test_exit_rejects_bad_inputs():
    with pytest.raises(ValueError, match="coincident"):
        compute_vo_exit((0, 0), (1, 0), 0.5, 2.0, 0.1)
    with pytest.raises(ValueError, match="non-finite"):
        compute_vo_exit((np.nan, 1), (0, 0), 0.5, 2.0, 0.1)
    with pytest.raises(ValueError, match="positive"):
        compute_vo_exit((1, 0), (0, 0), -0.5, 2.0, 0.1)


# --- build_orca_halfplane ------------------------------------------------------

def test_halfplane_responsibility_shift():
    a = ped(0, (0, 0), (1.0, 0.2))
    b = ped(1, (3, 1), (-0.8, 0.1))
    exit_ = compute_vo_exit(b.position - a.position, a.velocity - b.velocity,
                            a.radius + b.radius, 2.0, 0.1)
    c0 = build_orca_halfplane(a, b, 0.0, 2.0, 0.1)
    c1 = build_orca_halfplane(a, b, 1.0, 2.0, 0.1)
    chalf = build_orca_halfplane(a, b, 0.5, 2.0, 0.1)
    np.testing.assert_array_equal(c0.point, a.velocity)
    # affine in f, up to one rounding of (v + u) - v
    np.testing.assert_allclose(c1.point - c0.point, exit_.u, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(chalf.point, a.velocity + 0.5 * exit_.u,
                               rtol=1e-15, atol=1e-15)
    for c in (c0, c1, chalf):
        np.testing.assert_array_equal(c.normal, exit_.normal)


def test_halfplane_mirror_for_equal_agents():
    rng = np.random.default_rng(41)
    for _ in range(50):
        pa, pb = rng.normal(size=2) * 5, rng.normal(size=2) * 5
        if np.linalg.norm(pa - pb) < 0.8:
            continue
        va, vb = rng.normal(size=2), rng.normal(size=2)
        a = ped(0, pa, va)
        b = ped(1, pb, vb)
        ca = build_orca_halfplane(a, b, 0.5, 2.0, 0.1)
        cb = build_orca_halfplane(b, a, 0.5, 2.0, 0.1)
        # Swapping the agents flips the exit vector, so the two boundary points
        # are point reflections through the midpoint of the two velocities.
        np.testing.assert_allclose(ca.point + cb.point, va + vb, atol=1e-12)
        np.testing.assert_array_equal(ca.normal, -cb.normal)


def test_outside_vo_keeps_current_velocity_permitted():
    rng = np.random.default_rng(43)
    checked = 0
    while checked < 60:
        pa, pb = rng.normal(size=2) * 6, rng.normal(size=2) * 6
        if np.linalg.norm(pa - pb) < 0.8:
            continue
        a = ped(0, pa, rng.normal(size=2) * 1.5)
        b = ped(1, pb, rng.normal(size=2) * 1.5)
        exit_ = compute_vo_exit(b.position - a.position, a.velocity - b.velocity,
                                a.radius + b.radius, 2.0, 0.1)
        if float(exit_.u @ exit_.normal) >= 0:
            continue  # inside the obstacle; current velocity must change
        c = build_orca_halfplane(a, b, 0.5, 2.0, 0.1)
        assert c.satisfies(a.velocity)
        checked += 1


def test_collision_exclusion_soundness():
    # For responsibility sums of one, any pair of velocities satisfying the two
    # constraints keeps the agents at least their summed radii apart for tau.
    rng = np.random.default_rng(47)
    tau, dt = 2.0, 0.1
    checked = 0
    while checked < 200:
        pa, pb = rng.normal(size=2) * 4, rng.normal(size=2) * 4
        comb = 0.5
        if np.linalg.norm(pa - pb) <= comb + 1e-6:
            continue
        a = ped(0, pa, rng.normal(size=2) * 1.5)
        b = ped(1, pb, rng.normal(size=2) * 1.5)
        fa = rng.random()
        fb = 1.0 - fa
        ca = build_orca_halfplane(a, b, fa, tau, dt)
        cb = build_orca_halfplane(b, a, fb, tau, dt)
        # Sample velocities in each permitted half-plane.
        for _ in range(5):
            va = _sample_satisfying(rng, ca)
            vb = _sample_satisfying(rng, cb)
            dp = pb - pa
            dv = vb - va
            t_star = 0.0
            dv2 = float(dv @ dv)
            if dv2 > 0:
                t_star = min(tau, max(0.0, -float(dp @ dv) / dv2))
            closest = min(np.linalg.norm(dp + t * dv)
                          for t in (0.0, t_star, tau))
            assert closest >= comb - 1e-6
        checked += 1


def _sample_satisfying(rng, constraint):
    d = np.array([-constraint.normal[1], constraint.normal[0]])
    along = rng.normal() * 2.0
    out = abs(rng.normal()) * 2.0
    return constraint.point + along * d + out * constraint.normal


# --- gather_constraints ---------------------------------------------------------

def test_gather_empty():
    a = ped(0, (0, 0), (1, 0))
    assert gather_constraints(a, [], ResponsibilityMatrix.default(), 2.0, 0.1) == []


def test_gather_applies_class_pair_fractions():
    m = ResponsibilityMatrix.default()
    a = ped(0, (0, 0), (1.0, 0.0))
    b = ped(1, (4, 0), (-1.0, 0.0))
    c = veh(2, (0, 5), (0.0, -2.0))
    cons = gather_constraints(a, [b, c], m, 2.0, 0.1)
    assert len(cons) == 2
    expected_bp = build_orca_halfplane(a, b, 0.5, 2.0, 0.1)
    np.testing.assert_array_equal(cons[0].point, expected_bp.point)
    expected_cv = build_orca_halfplane(a, c, 1.0, 2.0, 0.1)
    np.testing.assert_array_equal(cons[1].point, expected_cv.point)

    # A vehicle avoiding a pedestrian concedes nothing: plane through v_opt.
    v = veh(3, (10, 0), (2.0, 0.0))
    vcons = gather_constraints(v, [a], m, 2.0, 0.1)
    np.testing.assert_array_equal(vcons[0].point, v.velocity)


def test_gather_errors_name_the_neighbor():
    a = ped(0, (1, 1), (1, 0))
    b = ped(7, (1, 1), (0, 1))
    with pytest.raises(ValueError, match="neighbor 7"):
        gather_constraints(a, [b], ResponsibilityMatrix.default(), 2.0, 0.1)


def test_same_operation_sequence_for_all_class_pairs():
    # Identical geometry, different class labels: the executed line sequence in
    # this module must be identical; only the scalar fraction differs.
    m = ResponsibilityMatrix.default()
    here = sys.modules[gather_constraints.__module__].__file__

    def trace_lines(self_agent, other):
        lines = []

        def tracer(frame, event, arg):
            if event == "line" and frame.f_code.co_filename == here:
                lines.append((frame.f_code.co_name, frame.f_lineno))
            return tracer

        sys.settrace(tracer)
        try:
            gather_constraints(self_agent, [other], m, 2.0, 0.1)
        finally:
            sys.settrace(None)
        return lines

    geom = dict(radius=0.6)
    pp = trace_lines(ped(0, (0, 0), (1, 0), **geom), ped(1, (5, 1), (-1, 0), **geom))
    pv = trace_lines(ped(0, (0, 0), (1, 0), **geom), veh(1, (5, 1), (-1, 0), **geom))
    vp = trace_lines(veh(0, (0, 0), (1, 0), **geom), ped(1, (5, 1), (-1, 0), **geom))
    vv = trace_lines(veh(0, (0, 0), (1, 0), **geom), veh(1, (5, 1), (-1, 0), **geom))
    assert pp == pv == vp == vv

    # Same fraction and geometry across different labels: identical constraint.
    sym = ResponsibilityMatrix({(a, b): 0.5 for a in AgentClass for b in AgentClass})
    c1 = gather_constraints(ped(0, (0, 0), (1, 0), **geom),
                            [ped(1, (5, 1), (-1, 0), **geom)], sym, 2.0, 0.1)[0]
    c2 = gather_constraints(veh(0, (0, 0), (1, 0), **geom),
                            [veh(1, (5, 1), (-1, 0), **geom)], sym, 2.0, 0.1)[0]
    assert np.array_equal(c1.point, c2.point)
    assert np.array_equal(c1.normal, c2.normal)


# --- ResponsibilityMatrix -------------------------------------------------------

def test_matrix_guarantee_flags():
    m = ResponsibilityMatrix.default()
    P, V = AgentClass.PEDESTRIAN, AgentClass.VEHICLE
    assert m.get(P, V) == 1.0 and m.get(V, P) == 0.0
    assert m.guarantee_holds(P, V) and m.guarantee_holds(V, P)
    assert m.unguaranteed_pairs() == []

    soft = ResponsibilityMatrix({(P, P): 0.4, (P, V): 0.3, (V, P): 0.3, (V, V): 0.5})
    assert not soft.guarantee_holds(P, P)
    assert set(soft.unguaranteed_pairs()) == {(P, P), (P, V)}


def test_matrix_rejects_out_of_range():
    P = AgentClass.PEDESTRIAN
    with pytest.raises(ValueError, match="outside"):
        ResponsibilityMatrix({(P, P): 1.5})


def test_matrix_dense_array_lookup():
    m = ResponsibilityMatrix.default()
    arr = m.as_array()
    P, V = AgentClass.PEDESTRIAN, AgentClass.VEHICLE
    assert arr[int(P), int(V)] == 1.0
    assert arr[int(V), int(P)] == 0.0
    assert arr[int(P), int(P)] == 0.5


def test_agent_state_validation():
    with pytest.raises(ValueError, match="radius"):
        AgentState(0, (0, 0), (0, 0), -1.0, 1.0, 2.0, (1, 1))
    with pytest.raises(ValueError, match="pref_speed"):
        AgentState(0, (0, 0), (0, 0), 0.3, 3.0, 2.0, (1, 1))
    with pytest.raises(ValueError):
        build_orca_halfplane(ped(0, (0, 0), (0, 0)), ped(0, (1, 0), (0, 0)), 0.5, 2.0, 0.1)
    with pytest.raises(ValueError, match="fraction"):
        build_orca_halfplane(ped(0, (0, 0), (0, 0)), ped(1, (1, 0), (0, 0)), 1.5, 2.0, 0.1)


def test_vo_exit_dataclass_coerces():
    e = VoExit([1, 2], [0, 1])
    assert e.u.dtype == float and e.normal.dtype == float
