"""Quadratic Gaussian rate-distortion programs for the cascade family.

Source model: X = A + B + Z, Y = B + Z, with A, B, Z independent zero-mean
Gaussians. All rates are in bits/sample, distortions in squared-error units
of the source. The forward-link programs reduce to a two-parameter search
over the auxiliary description U = alpha*A + beta*B + Z*, with the noise
variance pinned to 1 by scale invariance; the backward (side-information
feedback) region has closed-form corner constructions built from additive
Gaussian test channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NumericDomainError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# feasibility slack treated as zero, relative to the constraint scale
_FEAS_REL_TOL = 1e-9


@dataclass(frozen=True)
class GaussianCascadeSource:
    """Variances of the independent components A, B, Z."""

    var_a: float
    var_b: float
    var_z: float

    def __post_init__(self):
        if min(self.var_a, self.var_b, self.var_z) < 0:
            raise ValueError("variances must be nonnegative")
        if self.var_a == self.var_b == self.var_z == 0:
            raise ValueError("at least one variance must be positive")

    @property
    def var_z_given_y(self) -> float:
        denom = self.var_b + self.var_z
        if denom <= 0:
            return 0.0
        return self.var_z * self.var_b / denom


@dataclass(frozen=True)
class GaussianAux:
    """Description channel U = alpha*A + beta*B + Z*, Z* ~ N(0, var_zstar).

    (c*alpha, c*beta, c^2*var_zstar) describes the same channel for any
    c != 0; solvers report the canonical scale var_zstar = 1.
    """

    alpha: float
    beta: float
    var_zstar: float = 1.0

    def __post_init__(self):
        if self.var_zstar <= 0:
            raise ValueError("var_zstar must be positive")


@dataclass(frozen=True)
class AuxStats:
    """Quantities of the auxiliary channel entering the optimization."""

    var_u: float
    rate_u: float  # 1/2 log2(var_u / var_zstar), the R2 cost
    var_a_given_ub: float  # objective
    var_s_given_u: float  # Var(A+B | U), the D2 side


def aux_stats(src: GaussianCascadeSource, aux: GaussianAux) -> AuxStats:
    va, vb = src.var_a, src.var_b
    a, b, w = aux.alpha, aux.beta, aux.var_zstar
    var_u = a * a * va + b * b * vb + w
    rate_u = 0.5 * math.log2(var_u / w)
    var_a_given_ub = va * w / (a * a * va + w)
    var_s_given_u = va + vb - (a * va + b * vb) ** 2 / var_u
    return AuxStats(var_u, rate_u, var_a_given_ub, var_s_given_u)


# --------------------------------------------------------------------- MMSE


def conditional_variance(cov: np.ndarray, target: int, observed) -> float:
    """Var(target | observed) for a jointly Gaussian vector via Schur complement.

    The observed block is pseudo-inverted, so exactly collinear observations
    are handled without regularization knobs.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("cov must be a square matrix")
    n = cov.shape[0]
    scale = max(1.0, float(np.abs(cov).max()))
    if np.abs(cov - cov.T).max() > 1e-10 * scale:
        raise NumericDomainError("cov is not symmetric")
    if np.linalg.eigvalsh(cov).min() < -1e-10 * scale:
        raise NumericDomainError("cov is not positive semidefinite")
    observed = list(observed)
    if target < 0 or target >= n or any(i < 0 or i >= n for i in observed):
        raise ValueError("index out of range")
    if not observed:
        return float(cov[target, target])
    sigma_oo = cov[np.ix_(observed, observed)]
    sigma_to = cov[target, observed]
    resid = cov[target, target] - sigma_to @ np.linalg.pinv(sigma_oo) @ sigma_to
    return float(max(0.0, resid))


# -------------------------------------------------------- forward-link solver


def _d2_slack(va: float, vb: float, k: float, t: float, alpha: float):
    """Best achievable margin of the distortion constraint at fixed alpha.

    Maximizes g(beta) = (alpha*va + beta*vb)^2 - k * var_u over the beta
    interval allowed by the rate budget t = 2^(2 R2); g >= 0 iff
    Var(A+B | U) <= d2. Returns (g_max, argmax beta), or (-inf, 0) when
    alpha alone already busts the rate budget.
    """
    rem = t - 1.0 - alpha * alpha * va
    if rem < 0:
        return -math.inf, 0.0
    if vb == 0.0:
        g0 = (alpha * va) ** 2 - k * (alpha * alpha * va + 1.0)
        return g0, 0.0
    bmax = math.sqrt(rem / vb)

    def g(beta):
        return (alpha * va + beta * vb) ** 2 - k * (
            alpha * alpha * va + beta * beta * vb + 1.0
        )

    cands = [-bmax, 0.0, bmax]
    curv = vb - k
    if curv < 0:
        bv = alpha * va / (-curv)  # stationary point, only a max when concave
        if -bmax <= bv <= bmax:
            cands.append(bv)
    best = max(cands, key=g)
    return g(best), best


def _feasible(va, vb, k, t, alpha):
    gmax, beta = _d2_slack(va, vb, k, t, alpha)
    tol = _FEAS_REL_TOL * max(1.0, abs(k) * t)
    return gmax >= -tol, beta


def _solver_grid(va, vb, k, t, n_alpha=400, n_beta=400):
    """Coarse log-spaced scan; returns the lexicographically first optimal cell."""
    alphas = np.concatenate([[0.0], np.logspace(-4, 4, n_alpha)])
    half = n_beta // 2
    betas = np.concatenate([-np.logspace(4, -4, half), [0.0], np.logspace(-4, 4, half)])
    a2 = alphas[:, None] ** 2
    var_u = a2 * va + betas[None, :] ** 2 * vb + 1.0
    g = (alphas[:, None] * va + betas[None, :] * vb) ** 2 - k * var_u
    tol = _FEAS_REL_TOL * max(1.0, abs(k) * t)
    mask = (var_u <= t * (1.0 + 1e-12)) & (g >= -tol)
    if not mask.any():
        return None
    i, j = np.argwhere(mask)[0]  # row-major argwhere = lexicographic order
    return float(alphas[i]), float(betas[j]), (int(i), alphas)


def _refine_alpha(va, vb, k, t, lo, hi, max_iter=200):
    """Golden-ratio shrink of the feasibility boundary along the alpha axis.

    lo is infeasible, hi feasible; only hi (a verified feasible point) is ever
    returned, so the answer is always achievable.
    """
    for _ in range(max_iter):
        gap_bits = 0.5 * math.log2((1.0 + hi * hi * va) / (1.0 + lo * lo * va))
        if gap_bits < 5e-5:
            break
        mid = hi - GOLDEN * (hi - lo)
        ok, _ = _feasible(va, vb, k, t, mid)
        if ok:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ForwardSolution:
    r1: float
    aux: GaussianAux
    r4_threshold: float | None = None


def _min_r1(src: GaussianCascadeSource, d1: float, d2_eff: float, r2: float):
    va, vb = src.var_a, src.var_b
    if va == 0.0:
        return ForwardSolution(0.0, GaussianAux(0.0, 0.0, 1.0))
    k = va + vb - d2_eff
    if k <= 0:
        # distortion constraint slack: constant U is optimal
        r1 = max(0.5 * math.log2(va / d1), 0.0)
        return ForwardSolution(r1, GaussianAux(0.0, 0.0, 1.0))
    t = 2.0 ** (2.0 * r2)
    ok0, beta0 = _feasible(va, vb, k, t, 0.0)
    if ok0:
        r1 = max(0.5 * math.log2(va / d1), 0.0)
        return ForwardSolution(r1, GaussianAux(0.0, beta0, 1.0))

    cell = _solver_grid(va, vb, k, t)
    # the distortion-tight diagonal auxiliary is feasible whenever the query
    # meets the rate precondition; it seeds the bracket when the grid misses
    s = va + vb
    hi_cands = []
    gamma2 = (s / d2_eff - 1.0) / s
    if gamma2 >= 0:
        gamma = math.sqrt(gamma2)
        if _feasible(va, vb, k, t, gamma)[0]:
            hi_cands.append(gamma)
    if cell is not None:
        hi_cands.append(cell[0])
    if not hi_cands:
        raise InfeasibleError(
            "no feasible auxiliary found for (d2, r2)",
            threshold=max(0.5 * math.log2(s / d2_eff), 0.0),
        )
    hi = min(hi_cands)
    alpha = _refine_alpha(va, vb, k, t, 0.0, hi)
    _, beta = _d2_slack(va, vb, k, t, alpha)
    r1 = max(0.5 * math.log2(va / d1), 0.5 * math.log2(1.0 + alpha * alpha * va))
    return ForwardSolution(r1, GaussianAux(alpha, beta, 1.0))


def cascade_min_r1(src: GaussianCascadeSource, d1: float, d2: float,
                   r2: float) -> ForwardSolution:
    """Smallest forward rate R1 at fixed (D1, D2, R2) for the cascade setting.

    Maximizes Var(A | U, B) over auxiliaries U = alpha*A + beta*B + Z*
    subject to the R2 rate budget and the D2 distortion bound, then
    R1 = max(1/2 log2(var_a / D1), 1/2 log2(var_a / Var(A|U,B))).
    """
    _check_query(d1, d2, r2)
    s = src.var_a + src.var_b
    thr = max(0.5 * math.log2(s / d2), 0.0) if s > 0 else 0.0
    if r2 < thr - 1e-12:
        raise InfeasibleError(
            f"r2={r2:g} below the feasibility threshold {thr:g} bits",
            threshold=thr,
        )
    return _min_r1(src, d1, d2, r2)


def triangular_min_r1(src: GaussianCascadeSource, d1: float, d2: float,
                      r2: float, r3: float) -> ForwardSolution:
    """Cascade program with the D2 bound relaxed to 2^(2 R3) * D2."""
    _check_query(d1, d2, r2)
    if r3 < 0:
        raise ValueError("r3 must be nonnegative")
    s = src.var_a + src.var_b
    thr = max(0.5 * math.log2(s / d2), 0.0) if s > 0 else 0.0
    if r2 + r3 < thr - 1e-12:
        raise InfeasibleError(
            f"r2+r3={r2 + r3:g} below the feasibility threshold {thr:g} bits",
            threshold=thr,
        )
    return _min_r1(src, d1, d2 * 2.0 ** (2.0 * r3), r2)


def two_way_triangular_min_r1(src: GaussianCascadeSource, d1: float, d2: float,
                              d3: float, r2: float, r3: float,
                              r4: float) -> ForwardSolution:
    """Two-way variant: the backward link decouples, so R1 matches the
    triangular program; also reports the R4 feasibility threshold."""
    if d3 <= 0:
        raise ValueError("d3 must be positive")
    if r4 < 0:
        raise ValueError("r4 must be nonnegative")
    s = src.var_z_given_y
    thr4 = max(0.5 * math.log2(s / d3), 0.0) if s > 0 else 0.0
    if r4 < thr4 - 1e-12:
        raise InfeasibleError(
            f"r4={r4:g} below the backward threshold {thr4:g} bits",
            threshold=thr4,
        )
    fwd = triangular_min_r1(src, d1, d2, r2, r3)
    return ForwardSolution(fwd.r1, fwd.aux, r4_threshold=thr4)


def _check_query(d1, d2, r2):
    if d1 <= 0 or d2 <= 0:
        raise ValueError("distortions must be positive")
    if r2 < 0:
        raise ValueError("r2 must be nonnegative")


# ----------------------------------------------------------- backward region


def q_map(x: float, s: float) -> float:
    """Noise variance Q(x) = x*s/(s-x) of the additive test channel.

    Observing Z + W with Var(W) = Q(x) alongside Y drives Var(Z | Y, Z+W)
    down to exactly x; requires 0 < x < s where s = Var(Z|Y).
    """
    if not (0.0 < x < s):
        raise NumericDomainError(f"need 0 < x < s, got x={x:g}, s={s:g}")
    return x * s / (s - x)


def _q_cumulative(x: float, s: float) -> float:
    # closure of q_map at x = s: an uninformative (infinite-noise) layer
    if x >= s:
        return math.inf
    return q_map(x, s)


@dataclass(frozen=True)
class RegionCheck:
    member: bool
    slacks: tuple[float, float, float]


def extended_backward_region_check(src: GaussianCascadeSource,
                                   point, targets,
                                   tol: float = 1e-9) -> RegionCheck:
    """Slack of the three backward-rate inequalities at (R3, R4, R5)."""
    r3, r4, r5 = point
    dz1, dz2 = targets
    s = src.var_z_given_y
    _check_dz(dz1, dz2, s)
    t1 = 0.5 * math.log2(s / dz1)
    t2 = 0.5 * math.log2(s / min(dz1, dz2))
    t3 = 0.5 * math.log2(s / dz2)
    slacks = (r3 - t1, r3 + r5 - t2, r4 + r5 - t3)
    return RegionCheck(member=min(slacks) >= -tol, slacks=slacks)


def _check_dz(dz1, dz2, s):
    if s <= 0:
        raise ValueError("source has Var(Z|Y) = 0; backward region is degenerate")
    if not (0.0 < dz1 <= s * (1 + 1e-12)) or not (0.0 < dz2 <= s * (1 + 1e-12)):
        raise ValueError(f"distortion targets must lie in (0, {s:g}]")


@dataclass(frozen=True)
class BackwardConstruction:
    """Concrete noise-chain achieving a backward-region corner.

    w1, w2, w3 are the incremental noise variances of the layered test
    channels (math.inf marks an uninformative layer); achieved rates are the
    exact mutual-information costs of the chain and the distortions are MMSE
    evaluations of its covariance.
    """

    case_id: int
    w1: float
    w2: float
    w3: float
    r3: float
    r4: float
    r5: float
    dist_z1: float
    dist_z2: float


def _chain_distortion(src: GaussianCascadeSource, cum_noise: float) -> float:
    """Var(Z | Y, Z + W) with Var(W) = cum_noise, via the Schur complement."""
    vz, vb = src.var_z, src.var_b
    if math.isinf(cum_noise):
        cov = np.array([[vz, vz], [vz, vb + vz]])
        return conditional_variance(cov, 0, [1])
    cov = np.array(
        [
            [vz, vz, vz],
            [vz, vb + vz, vz],
            [vz, vz, vz + cum_noise],
        ]
    )
    return conditional_variance(cov, 0, [1, 2])


def _w_diff(outer: float, inner: float) -> float:
    # incremental noise between consecutive layers; inf-noise layers add nothing
    if math.isinf(inner):
        return 0.0
    if math.isinf(outer):
        return math.inf
    return max(0.0, outer - inner)


def _rate(s: float, d: float) -> float:
    return 0.5 * math.log2(s / d)


def extended_backward_achievability(src: GaussianCascadeSource,
                                    dz1: float, dz2: float,
                                    r3: float, r4: float) -> BackwardConstruction:
    """Layered test-channel construction meeting (D_Z1, D_Z2) within (R3, R4).

    Picks the case from the target ordering and the R3/R4 split, saturates the
    binding inequality, and returns the chain with its exact rates and MMSE
    distortions. The R5 rate is an output: the refinement cost left over after
    R4 (cases 1-2) or R3 (case 3).
    """
    s = src.var_z_given_y
    _check_dz(dz1, dz2, s)
    if r3 < 0 or r4 < 0:
        raise ValueError("rates must be nonnegative")
    if r3 < _rate(s, dz1) - 1e-9:
        raise InfeasibleError(
            f"violated: R3 >= 1/2 log2(s/D_Z1) = {_rate(s, dz1):g} bits",
            threshold=_rate(s, dz1),
        )

    if dz1 <= dz2:
        case = 1
        d_prime = min(max(s * 2.0 ** (-2.0 * r4), dz2), s)
        q1 = _q_cumulative(dz1, s)  # U1, decoded from the R3 link
        q3 = _q_cumulative(dz2, s)  # U3 = U1 + W3
        q2 = _q_cumulative(d_prime, s)  # U2 = U3 + W2
        w1, w3, w2 = q1, _w_diff(q3, q1), _w_diff(q2, q3)
        ach_r3 = _rate(s, dz1)
        ach_r4 = _rate(s, d_prime)
        ach_r5 = _rate(s, dz2) - ach_r4
        dist1, dist2 = _chain_distortion(src, q1), _chain_distortion(src, q3)
    else:
        case = 2 if r3 >= r4 else 3
        d_prime = min(max(s * 2.0 ** (-2.0 * r3), dz2), dz1)
        q3 = _q_cumulative(dz2, s)  # U3, finest layer
        q1 = _q_cumulative(d_prime, s)  # U1 = U3 + W1
        w3, w1 = q3, _w_diff(q1, q3)
        if case == 2:
            d_dprime = min(max(s * 2.0 ** (-2.0 * r4), d_prime), s)
            q2 = _q_cumulative(d_dprime, s)  # U2 = U1 + W2
            w2 = _w_diff(q2, q1)
            ach_r4 = _rate(s, d_dprime)
        else:
            w2 = 0.0  # U2 = U1, so the R4 link reuses the R3 description
            ach_r4 = _rate(s, d_prime)
        ach_r3 = _rate(s, d_prime)
        ach_r5 = _rate(s, dz2) - ach_r4
        dist1, dist2 = _chain_distortion(src, q1), _chain_distortion(src, q3)

    return BackwardConstruction(
        case_id=case, w1=w1, w2=w2, w3=w3,
        r3=ach_r3, r4=ach_r4, r5=ach_r5,
        dist_z1=dist1, dist_z2=dist2,
    )


# ------------------------------------------------------- covariance transform


def equivalent_observation_transform(src: GaussianCascadeSource) -> tuple[float, float]:
    """(alpha, var_z) such that (X, alpha*(X+Z')) matches Cov(A+B, B) entrywise.

    Maps the two-observation cascade source onto the equivalent
    independent-noise form; requires var_b > 0.
    """
    va, vb = src.var_a, src.var_b
    if vb <= 0:
        raise NumericDomainError("var_b must be positive for the transform")
    var_x = va + vb
    alpha = vb / var_x
    var_z = (vb - alpha * alpha * var_x) / (alpha * alpha)
    return alpha, var_z
