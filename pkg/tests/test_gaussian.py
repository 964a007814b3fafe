import math

import numpy as np
import pytest

from cascade_rd.gaussian import (
    GaussianAux,
    GaussianCascadeSource,
    InfeasibleError,
    NumericDomainError,
    aux_stats,
    cascade_min_r1,
    conditional_variance,
    extended_backward_achievability,
    extended_backward_region_check,
    equivalent_observation_transform,
    q_map,
    triangular_min_r1,
    two_way_triangular_min_r1,
)

UNIT = GaussianCascadeSource(1.0, 1.0, 1.0)


# --------------------------------------------------------- conditional variance


def test_conditional_variance_self_conditioning():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert conditional_variance(cov, 0, [0]) == pytest.approx(0.0, abs=1e-12)


def test_conditional_variance_independent():
    cov = np.diag([3.0, 2.0])
    assert conditional_variance(cov, 0, [1]) == pytest.approx(3.0, abs=1e-12)


def test_conditional_variance_two_by_two_mmse():
    # Z given Y = B + Z with var_b = var_z = 1
    cov = np.array([[1.0, 1.0], [1.0, 2.0]])
    assert conditional_variance(cov, 0, [1]) == pytest.approx(0.5, abs=1e-12)


def test_conditional_variance_rejects_non_psd():
    cov = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NumericDomainError):
        conditional_variance(cov, 0, [1])


def test_conditional_variance_singular_observed_block():
    # duplicated observation; pseudo-inverse must cope
    cov = np.array([[2.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
    assert conditional_variance(cov, 0, [1, 2]) == pytest.approx(1.0, abs=1e-10)


# -------------------------------------------------------------- cascade solver


def test_cascade_constant_u_when_d2_slack():
    sol = cascade_min_r1(UNIT, d1=0.25, d2=2.5, r2=0.7)
    assert sol.r1 == pytest.approx(1.0, abs=1e-12)
    assert sol.aux.alpha == 0.0 and sol.aux.beta == 0.0


def test_cascade_zero_rate_when_both_terms_slack():
    sol = cascade_min_r1(UNIT, d1=1.5, d2=2.5, r2=0.1)
    assert sol.r1 == 0.0


def test_cascade_worked_instance():
    # At r2 equal to the feasibility threshold the only admissible auxiliary
    # is the distortion-tight diagonal alpha = beta = sqrt(1.5), hence
    # Var(A|U,B) = 0.4 and the D1 term dominates: R1 = 1 bit.
    sol = cascade_min_r1(UNIT, d1=0.25, d2=0.5, r2=1.0)
    assert sol.r1 == pytest.approx(1.0, abs=2e-3)
    assert sol.aux.alpha == pytest.approx(math.sqrt(1.5), rel=1e-3)


def test_cascade_worked_instance_d1_slack():
    # same auxiliary, D1 loose enough that the description term binds
    sol = cascade_min_r1(UNIT, d1=0.6, d2=0.5, r2=1.0)
    assert sol.r1 == pytest.approx(0.5 * math.log2(2.5), abs=2e-3)


def test_cascade_infeasible_r2_reports_threshold():
    with pytest.raises(InfeasibleError) as err:
        cascade_min_r1(UNIT, d1=0.25, d2=0.5, r2=0.9)
    assert err.value.threshold == pytest.approx(1.0, abs=1e-12)


def test_cascade_feasibility_edge_returns_finite_r1():
    # r2 exactly at the threshold: the feasible set is the single tight point
    thr = 0.5 * math.log2(2.0 / 0.5)
    sol = cascade_min_r1(UNIT, d1=0.25, d2=0.5, r2=thr)
    assert math.isfinite(sol.r1)
    stats = aux_stats(UNIT, sol.aux)
    assert stats.rate_u <= thr + 1e-9
    assert stats.var_s_given_u <= 0.5 + 1e-9


def test_cascade_solution_is_always_feasible():
    rng = np.random.default_rng(5)
    for _ in range(25):
        va, vb, vz = 10.0 ** rng.uniform(-1, 1, size=3)
        src = GaussianCascadeSource(va, vb, vz)
        s = va + vb
        d2 = s * 10.0 ** rng.uniform(-1.2, -0.05)
        r2 = max(0.5 * math.log2(s / d2), 0.0) + rng.uniform(0.02, 2.0)
        sol = cascade_min_r1(src, d1=0.3 * va, d2=d2, r2=r2)
        stats = aux_stats(src, sol.aux)
        assert stats.var_s_given_u <= d2 * (1 + 1e-6)
        if sol.aux.alpha != 0 or sol.aux.beta != 0:
            assert stats.rate_u <= r2 + 1e-9


def test_cascade_monotone_in_r2_d1_d2():
    r1_r2 = [cascade_min_r1(UNIT, 0.25, 0.5, r2).r1 for r2 in (1.0, 1.3, 1.8, 2.5)]
    assert all(a >= b - 1e-9 for a, b in zip(r1_r2, r1_r2[1:]))
    r1_d1 = [cascade_min_r1(UNIT, d1, 0.5, 1.5).r1 for d1 in (0.1, 0.3, 0.6, 1.2)]
    assert all(a >= b - 1e-9 for a, b in zip(r1_d1, r1_d1[1:]))
    r1_d2 = [cascade_min_r1(UNIT, 0.25, d2, 1.5).r1 for d2 in (0.45, 0.7, 1.2, 2.5)]
    assert all(a >= b - 1e-9 for a, b in zip(r1_d2, r1_d2[1:]))


def test_aux_stats_scale_invariance():
    rng = np.random.default_rng(11)
    for _ in range(30):
        aux = GaussianAux(rng.uniform(0, 3), rng.uniform(-3, 3), rng.uniform(0.1, 2))
        c = rng.uniform(0.2, 5.0) * rng.choice([-1.0, 1.0])
        scaled = GaussianAux(c * aux.alpha, c * aux.beta, c * c * aux.var_zstar)
        s1 = aux_stats(UNIT, aux)
        s2 = aux_stats(UNIT, scaled)
        assert s1.rate_u == pytest.approx(s2.rate_u, abs=1e-10)
        assert s1.var_a_given_ub == pytest.approx(s2.var_a_given_ub, abs=1e-10)
        assert s1.var_s_given_u == pytest.approx(s2.var_s_given_u, abs=1e-10)


# ------------------------------------------------------------------ triangular


def test_triangular_reduces_to_cascade_at_r3_zero():
    rng = np.random.default_rng(3)
    for _ in range(10):
        va, vb, vz = 10.0 ** rng.uniform(-1, 1, size=3)
        src = GaussianCascadeSource(va, vb, vz)
        s = va + vb
        d1 = 0.4 * va
        d2 = 0.4 * s
        r2 = 0.5 * math.log2(s / d2) + 0.3
        tri = triangular_min_r1(src, d1, d2, r2, 0.0)
        cas = cascade_min_r1(src, d1, d2, r2)
        assert abs(tri.r1 - cas.r1) <= 1e-9


def test_triangular_relaxed_constraint_vacuous():
    # r3 large enough to absorb the whole D2 requirement at r2 = 0
    s = 2.0
    d2 = 0.5
    r3 = 0.5 * math.log2(s / d2)
    sol = triangular_min_r1(UNIT, d1=0.25, d2=d2, r2=0.0, r3=r3)
    assert sol.r1 == pytest.approx(1.0, abs=1e-12)
    assert sol.aux.alpha == 0.0


def test_triangular_infeasible_budget():
    with pytest.raises(InfeasibleError):
        triangular_min_r1(UNIT, d1=0.25, d2=0.5, r2=0.4, r3=0.4)


def test_triangular_worked_instance():
    # r2 + r3 at the joint threshold forces the tight diagonal with
    # alpha = beta = sqrt(0.5) under the relaxed distortion 2^(2 r3) d2 = 1,
    # so Var(A|U,B) = 2/3; d1 = 0.8 keeps the description term dominant
    sol = triangular_min_r1(UNIT, d1=0.8, d2=0.5, r2=0.5, r3=0.5)
    assert sol.r1 == pytest.approx(0.5 * math.log2(1.5), abs=2e-3)
    assert sol.aux.alpha == pytest.approx(math.sqrt(0.5), rel=1e-3)


# --------------------------------------------------------------------- two-way


def test_two_way_threshold_and_decoupling():
    src = GaussianCascadeSource(1.0, 1.0, 1.0)  # var_z_given_y = 0.5
    sol = two_way_triangular_min_r1(src, 0.25, 0.5, 0.125, r2=1.2, r3=0.0, r4=1.0)
    assert sol.r4_threshold == pytest.approx(1.0, abs=1e-12)
    tri = triangular_min_r1(src, 0.25, 0.5, 1.2, 0.0)
    assert sol.r1 == tri.r1


def test_two_way_threshold_zero_when_d3_slack():
    sol = two_way_triangular_min_r1(UNIT, 0.25, 0.5, 0.7, r2=1.2, r3=0.0, r4=0.0)
    assert sol.r4_threshold == 0.0


def test_two_way_infeasible_r4():
    with pytest.raises(InfeasibleError) as err:
        two_way_triangular_min_r1(UNIT, 0.25, 0.5, 0.125, r2=1.2, r3=0.0, r4=0.5)
    assert err.value.threshold == pytest.approx(1.0, abs=1e-12)


# ------------------------------------------------------------- backward region


def test_q_map_algebraic_identity():
    assert q_map(0.25, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert q_map(0.125, 0.5) == pytest.approx(1.0 / 6.0, abs=1e-12)
    assert q_map(1e-9, 0.5) < 2e-9


def test_q_map_domain_error():
    with pytest.raises(NumericDomainError):
        q_map(0.5, 0.5)
    with pytest.raises(NumericDomainError):
        q_map(0.7, 0.5)


def test_q_map_round_trip_mmse():
    rng = np.random.default_rng(17)
    for _ in range(50):
        vb, vz = 10.0 ** rng.uniform(-1, 1, size=2)
        src = GaussianCascadeSource(1.0, vb, vz)
        s = src.var_z_given_y
        x = s * rng.uniform(0.05, 0.95)
        q = q_map(x, s)
        cov = np.array(
            [
                [vz, vz, vz],
                [vz, vb + vz, vz],
                [vz, vz, vz + q],
            ]
        )
        assert conditional_variance(cov, 0, [1, 2]) == pytest.approx(x, abs=1e-10)


def test_region_check_worked_points():
    chk = extended_backward_region_check(UNIT, (1.0, 1.0, 0.0), (0.25, 0.125))
    assert chk.member
    assert chk.slacks == pytest.approx((0.5, 0.0, 0.0), abs=1e-12)

    chk2 = extended_backward_region_check(UNIT, (0.5, 0.0, 0.5), (0.25, 0.125))
    assert not chk2.member
    assert chk2.slacks[2] == pytest.approx(-0.5, abs=1e-12)


def test_region_check_all_thresholds_zero():
    s = UNIT.var_z_given_y
    chk = extended_backward_region_check(UNIT, (0.0, 0.0, 0.0), (s, s))
    assert chk.member
    assert chk.slacks == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)


def test_region_check_rejects_bad_targets():
    with pytest.raises(ValueError):
        extended_backward_region_check(UNIT, (1, 1, 1), (0.7, 0.1))


def test_backward_case1_worked_example():
    # s = 0.5, dz1 = 0.125, dz2 = 0.25, r4 at the dz2 line: the corner has
    # r3 = 1/2 log2(s/dz1) = 1 and r4 + r5 = 1/2 log2(s/dz2) = 0.5
    s = UNIT.var_z_given_y
    r4 = 0.5 * math.log2(s / 0.25)
    con = extended_backward_achievability(UNIT, 0.125, 0.25, r3=1.0, r4=r4)
    assert con.case_id == 1
    assert con.r3 == pytest.approx(1.0, abs=1e-12)
    assert con.r4 + con.r5 == pytest.approx(0.5, abs=1e-12)
    assert con.dist_z1 == pytest.approx(0.125, abs=1e-9)
    assert con.dist_z2 == pytest.approx(0.25, abs=1e-9)


def test_backward_degenerate_targets_all_zero_rates():
    s = UNIT.var_z_given_y
    con = extended_backward_achievability(UNIT, s, s, r3=0.0, r4=0.0)
    assert (con.r3, con.r4, con.r5) == (0.0, 0.0, 0.0)
    assert con.dist_z1 == pytest.approx(s, abs=1e-9)
    assert con.dist_z2 == pytest.approx(s, abs=1e-9)


def test_backward_case3_reuses_forward_description():
    # dz1 > dz2 and r3 < r4: the construction sets U2 = U1, so r4' = r3'
    con = extended_backward_achievability(UNIT, 0.25, 0.125, r3=1.0, r4=1.5)
    assert con.case_id == 3
    assert con.r4 == con.r3
    assert con.w2 == 0.0


def test_backward_constructions_pass_region_check():
    rng = np.random.default_rng(23)
    for case in (1, 2, 3):
        for _ in range(20):
            vb, vz = 10.0 ** rng.uniform(-1, 1, size=2)
            src = GaussianCascadeSource(1.0, vb, vz)
            s = src.var_z_given_y
            lo, hi = np.sort(rng.uniform(0.05, 0.95, size=2) * s)
            if case == 1:
                dz1, dz2 = lo, hi
            else:
                dz1, dz2 = hi, lo
            r3 = 0.5 * math.log2(s / dz1)
            r4 = r3 - rng.uniform(0, r3) if case == 2 else r3 + rng.uniform(0.01, 1.0)
            con = extended_backward_achievability(src, dz1, dz2, r3, r4)
            assert con.case_id == case
            chk = extended_backward_region_check(
                src, (con.r3, con.r4, con.r5), (dz1, dz2)
            )
            assert min(chk.slacks) >= -1e-9
            assert con.dist_z1 <= dz1 + 1e-9
            assert con.dist_z2 <= dz2 + 1e-9


def test_backward_infeasible_r3_names_inequality():
    with pytest.raises(InfeasibleError) as err:
        extended_backward_achievability(UNIT, 0.125, 0.25, r3=0.5, r4=1.0)
    assert "R3" in str(err.value)


# --------------------------------------------------------- covariance transform


def test_transform_worked_case():
    alpha, var_z = equivalent_observation_transform(UNIT)
    assert alpha == 0.5
    assert var_z == 2.0


def test_transform_degenerate_y_equals_x():
    alpha, var_z = equivalent_observation_transform(GaussianCascadeSource(0.0, 1.0, 1.0))
    assert alpha == 1.0
    assert var_z == 0.0


def test_transform_requires_var_b():
    with pytest.raises(NumericDomainError):
        equivalent_observation_transform(GaussianCascadeSource(1.0, 0.0, 1.0))


def test_transform_matches_covariance():
    rng = np.random.default_rng(29)
    for _ in range(100):
        va, vb = 10.0 ** rng.uniform(-1, 1, size=2)
        src = GaussianCascadeSource(va, vb, rng.uniform(0.1, 10))
        alpha, var_z = equivalent_observation_transform(src)
        var_x = va + vb
        built = np.array(
            [
                [var_x, alpha * var_x],
                [alpha * var_x, alpha * alpha * (var_x + var_z)],
            ]
        )
        target = np.array([[va + vb, vb], [vb, vb]])
        assert np.abs(built - target).max() <= 1e-12 * max(1.0, var_x)
