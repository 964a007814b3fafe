"""Single-letter region evaluation and search on finite alphabets.

Evaluators compute the exact rate lower bounds and expected distortions of a
fixed auxiliary system for the cascade, triangular, two-way and helper
settings; the search optimizes the cascade bound over auxiliaries by
alternating exponentiated-gradient / Blahut-Arimoto / best-response rounds,
validated against a quantized-simplex enumeration oracle.

Joint arrays follow a fixed axis discipline: source variables (X, Y, Z)
first, then the auxiliaries in generation order, reconstruction last. Keeping
the relative order identical across settings makes the degenerate reductions
(constant V, constant U2, constant helper) exact down to the last bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import FactorizationError, InfeasibleError, ResourceLimitError
from .probability import CondPMF, DeterministicMap, JointPMF, check_markov_chain

MARKOV_TOL = 1e-8


@dataclass(frozen=True)
class SourceSpec:
    """Markov source p(x,y,z) with its distortion tables.

    d1[x, xhat1] scores the relay reconstruction, d2[x, xhat2] the terminal
    one, d3[z, zhat] (optional) the backward reconstruction of Z.
    """

    pmf: JointPMF
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray | None = None

    def __post_init__(self):
        if self.pmf.arity != 3:
            raise ValueError("source pmf must have exactly the variables (X, Y, Z)")
        dev = check_markov_chain(self.pmf, ([0], [1], [2]))
        if dev > 1e-10:
            raise FactorizationError(
                f"source is not Markov X-Y-Z (deviation {dev:g} bits)"
            )
        for name, table, rows in (("d1", self.d1, self.nx), ("d2", self.d2, self.nx)):
            t = np.asarray(table, dtype=np.float64)
            if t.ndim != 2 or t.shape[0] != rows:
                raise ValueError(f"{name} must be a ({rows}, n_hat) table")
            if not np.isfinite(t).all() or (t < 0).any():
                raise ValueError(f"{name} entries must be finite and nonnegative")
            object.__setattr__(self, name, t)
        if self.d3 is not None:
            t = np.asarray(self.d3, dtype=np.float64)
            if t.ndim != 2 or t.shape[0] != self.nz:
                raise ValueError(f"d3 must be a ({self.nz}, n_hat) table")
            if not np.isfinite(t).all() or (t < 0).any():
                raise ValueError("d3 entries must be finite and nonnegative")
            object.__setattr__(self, "d3", t)

    @property
    def nx(self) -> int:
        return self.pmf.sizes[0]

    @property
    def ny(self) -> int:
        return self.pmf.sizes[1]

    @property
    def nz(self) -> int:
        return self.pmf.sizes[2]


@dataclass(frozen=True)
class AuxiliarySystem:
    """Container for the conditional channels and reconstruction maps.

    Which fields are read, and the conditioning each table must carry, depends
    on the setting; every evaluator documents its expectation. Conditioning
    inputs are always ordered like the joint axes (X, Y, Z, then auxiliaries).
    """

    p_u: CondPMF | None = None
    p_xhat1: CondPMF | None = None
    p_v: CondPMF | None = None
    p_u2: CondPMF | None = None
    p_uh: CondPMF | None = None
    g2: DeterministicMap | None = None
    g3: DeterministicMap | None = None


@dataclass(frozen=True)
class RegionPoint:
    """Rate lower bounds (bits) and expected distortions of one auxiliary."""

    r1: float
    r2: float
    r3: float | None = None
    r4: float | None = None
    rh: float | None = None
    d1: float | None = None
    d2: float | None = None
    d3: float | None = None


# ----------------------------------------------------------- raw-array helpers


def _table_entropy(t: np.ndarray) -> float:
    p = t.ravel()
    nz = p > 0.0
    return float(-(p[nz] * np.log2(p[nz])).sum())


def _marg(joint: np.ndarray, keep) -> np.ndarray:
    drop = tuple(i for i in range(joint.ndim) if i not in set(keep))
    return joint.sum(axis=drop) if drop else joint


def _cmi(joint: np.ndarray, a, b, c=()) -> float:
    a, b, c = tuple(a), tuple(b), tuple(c)
    # a constant variable carries no information, identically
    if all(joint.shape[i] == 1 for i in a) or all(joint.shape[i] == 1 for i in b):
        return 0.0
    h_ac = _table_entropy(_marg(joint, a + c))
    h_bc = _table_entropy(_marg(joint, b + c))
    h_abc = _table_entropy(_marg(joint, a + b + c))
    h_c = _table_entropy(_marg(joint, c)) if c else 0.0
    return max(0.0, h_ac + h_bc - h_abc - h_c)


def _require(aux: AuxiliarySystem, names) -> None:
    missing = [n for n in names if getattr(aux, n) is None]
    if missing:
        raise ValueError(f"auxiliary system is missing {missing} for this setting")


def _check_shape(cond: CondPMF, in_sizes, what: str) -> None:
    if cond.input_sizes != tuple(in_sizes):
        raise ValueError(
            f"{what} conditioning has shape {cond.input_sizes}, expected {tuple(in_sizes)}"
        )


def _check_map(gmap: DeterministicMap, in_sizes, out_size: int, what: str) -> None:
    if gmap.input_sizes != tuple(in_sizes) or gmap.output_size != out_size:
        raise ValueError(
            f"{what} must map {tuple(in_sizes)} onto {out_size} symbols, "
            f"got {gmap.input_sizes} -> {gmap.output_size}"
        )


def _check_source(src: SourceSpec) -> None:
    dev = check_markov_chain(src.pmf, ([0], [1], [2]))
    if dev > MARKOV_TOL:
        raise FactorizationError(f"source Markov deviation {dev:g} exceeds {MARKOV_TOL:g}")


def _budget(limit: int, size: int, what: str) -> None:
    if size > limit:
        raise ValueError(f"|{what}| = {size} exceeds the cardinality budget {limit}")


# -------------------------------------------------------------- point evaluators


def eval_cascade_point(src: SourceSpec, aux: AuxiliarySystem) -> RegionPoint:
    """Rates and distortions of a fixed cascade auxiliary.

    Needs p_u = p(u|x,y), p_xhat1 = p(xhat1|x,y,u), g2 on (U, Z). Returns
    R1 = I(X; Xhat1, U | Y), R2 = I(U; X, Y | Z) and both expected
    distortions with xhat2 = g2(u, z).
    """
    _check_source(src)
    _require(aux, ("p_u", "p_xhat1", "g2"))
    nx, ny, nz = src.pmf.sizes
    nu = aux.p_u.output_size
    _budget(nx * ny + 3, nu, "U")
    _check_shape(aux.p_u, (nx, ny), "p_u")
    _check_shape(aux.p_xhat1, (nx, ny, nu), "p_xhat1")
    _check_map(aux.g2, (nu, nz), src.d2.shape[1], "g2")

    # axes (X, Y, Z, U, Xhat1)
    joint = (
        src.pmf.probs[:, :, :, None, None]
        * aux.p_u.table[:, :, None, :, None]
        * aux.p_xhat1.table[:, :, None, :, :]
    )
    r1 = _cmi(joint, (0,), (4, 3), (1,))
    r2 = _cmi(joint, (3,), (0, 1), (2,))
    d1v = float((_marg(joint, (0, 4)) * src.d1[:, : aux.p_xhat1.output_size]).sum())
    m_xzu = _marg(joint, (0, 2, 3))  # (X, Z, U)
    d2v = float((m_xzu * src.d2[:, aux.g2.table.T]).sum())
    return RegionPoint(r1=r1, r2=r2, d1=d1v, d2=d2v)


def eval_triangular_point(src: SourceSpec, aux: AuxiliarySystem) -> RegionPoint:
    """Adds the refinement description V: p_v = p(v|x,y,u), g2 on (U, V, Z)."""
    _check_source(src)
    _require(aux, ("p_u", "p_xhat1", "p_v", "g2"))
    nx, ny, nz = src.pmf.sizes
    nu = aux.p_u.output_size
    nv = aux.p_v.output_size
    _budget(nx * ny + 4, nu, "U")
    _budget((nx * ny + 4) * (nx * ny + 1), nv, "V")
    _check_shape(aux.p_u, (nx, ny), "p_u")
    _check_shape(aux.p_v, (nx, ny, nu), "p_v")
    _check_shape(aux.p_xhat1, (nx, ny, nu), "p_xhat1")
    _check_map(aux.g2, (nu, nv, nz), src.d2.shape[1], "g2")

    # axes (X, Y, Z, U, V, Xhat1)
    joint = (
        src.pmf.probs[:, :, :, None, None, None]
        * aux.p_u.table[:, :, None, :, None, None]
        * aux.p_v.table[:, :, None, :, :, None]
        * aux.p_xhat1.table[:, :, None, :, None, :]
    )
    r1 = _cmi(joint, (0,), (5, 3), (1,))
    r2 = _cmi(joint, (3,), (0, 1), (2,))
    r3 = _cmi(joint, (4,), (0, 1), (3, 2))
    d1v = float((_marg(joint, (0, 5)) * src.d1[:, : aux.p_xhat1.output_size]).sum())
    m = _marg(joint, (0, 2, 3, 4))  # (X, Z, U, V)
    d2v = float((m * src.d2[:, aux.g2.table.transpose(2, 0, 1)]).sum())
    return RegionPoint(r1=r1, r2=r2, r3=r3, d1=d1v, d2=d2v)


def eval_two_way_cascade_point(src: SourceSpec, aux: AuxiliarySystem) -> RegionPoint:
    """Adds the backward description: p_u2 = p(u2|z,u1), g3 on (U1, U2, X, Y).

    The returned r3 is the backward-rate bound I(U2; Z | U1, X, Y); d3 is the
    expected backward distortion with zhat = g3(u1, u2, x, y).
    """
    _check_source(src)
    _require(aux, ("p_u", "p_xhat1", "p_u2", "g2", "g3"))
    if src.d3 is None:
        raise ValueError("two-way settings need the d3 distortion table")
    nx, ny, nz = src.pmf.sizes
    nu = aux.p_u.output_size
    nu2 = aux.p_u2.output_size
    _budget(nx * ny + 5, nu, "U1")
    _budget(nu * (nz + 1), nu2, "U2")
    _check_shape(aux.p_u, (nx, ny), "p_u")
    _check_shape(aux.p_xhat1, (nx, ny, nu), "p_xhat1")
    _check_shape(aux.p_u2, (nz, nu), "p_u2")
    _check_map(aux.g2, (nu, nz), src.d2.shape[1], "g2")
    _check_map(aux.g3, (nu, nu2, nx, ny), src.d3.shape[1], "g3")

    # axes (X, Y, Z, U1, U2, Xhat1)
    joint = (
        src.pmf.probs[:, :, :, None, None, None]
        * aux.p_u.table[:, :, None, :, None, None]
        * aux.p_u2.table[None, None, :, :, :, None]
        * aux.p_xhat1.table[:, :, None, :, None, :]
    )
    r1 = _cmi(joint, (0,), (5, 3), (1,))
    r2 = _cmi(joint, (3,), (0, 1), (2,))
    r3 = _cmi(joint, (4,), (2,), (3, 0, 1))
    d1v = float((_marg(joint, (0, 5)) * src.d1[:, : aux.p_xhat1.output_size]).sum())
    m_xzu = _marg(joint, (0, 2, 3))
    d2v = float((m_xzu * src.d2[:, aux.g2.table.T]).sum())
    m = _marg(joint, (0, 1, 2, 3, 4))  # (X, Y, Z, U1, U2)
    zhat = aux.g3.table.transpose(2, 3, 0, 1)  # (X, Y, U1, U2)
    d3sel = src.d3[:, zhat]  # (Z, X, Y, U1, U2)
    d3v = float((m * d3sel.transpose(1, 2, 0, 3, 4)).sum())
    return RegionPoint(r1=r1, r2=r2, r3=r3, d1=d1v, d2=d2v, d3=d3v)


def eval_two_way_triangular_point(src: SourceSpec, aux: AuxiliarySystem) -> RegionPoint:
    """Union of the triangular and two-way requirements.

    p_u2 = p(u2|z,u1,v); g2 on (U1, V, Z); g3 on (U1, U2, V, X, Y).
    """
    _check_source(src)
    _require(aux, ("p_u", "p_xhat1", "p_v", "p_u2", "g2", "g3"))
    if src.d3 is None:
        raise ValueError("two-way settings need the d3 distortion table")
    nx, ny, nz = src.pmf.sizes
    nu = aux.p_u.output_size
    nv = aux.p_v.output_size
    nu2 = aux.p_u2.output_size
    _budget(nx * ny + 6, nu, "U1")
    _budget(nu * (nx * ny + 3), nv, "V")
    _budget(nu * nv * (nz + 1), nu2, "U2")
    _check_shape(aux.p_u, (nx, ny), "p_u")
    _check_shape(aux.p_v, (nx, ny, nu), "p_v")
    _check_shape(aux.p_xhat1, (nx, ny, nu), "p_xhat1")
    _check_shape(aux.p_u2, (nz, nu, nv), "p_u2")
    _check_map(aux.g2, (nu, nv, nz), src.d2.shape[1], "g2")
    _check_map(aux.g3, (nu, nu2, nv, nx, ny), src.d3.shape[1], "g3")

    # axes (X, Y, Z, U1, V, U2, Xhat1)
    joint = (
        src.pmf.probs[:, :, :, None, None, None, None]
        * aux.p_u.table[:, :, None, :, None, None, None]
        * aux.p_v.table[:, :, None, :, :, None, None]
        * aux.p_u2.table[None, None, :, :, :, :, None]
        * aux.p_xhat1.table[:, :, None, :, None, None, :]
    )
    r1 = _cmi(joint, (0,), (6, 3), (1,))
    r2 = _cmi(joint, (3,), (0, 1), (2,))
    r3 = _cmi(joint, (4,), (0, 1), (2, 3))
    r4 = _cmi(joint, (5,), (2,), (3, 4, 0, 1))
    d1v = float((_marg(joint, (0, 6)) * src.d1[:, : aux.p_xhat1.output_size]).sum())
    m2 = _marg(joint, (0, 2, 3, 4))  # (X, Z, U1, V)
    d2v = float((m2 * src.d2[:, aux.g2.table.transpose(2, 0, 1)]).sum())
    m3 = _marg(joint, (0, 1, 2, 3, 4, 5))  # (X, Y, Z, U1, V, U2)
    zhat = aux.g3.table.transpose(3, 4, 0, 2, 1)  # (X, Y, U1, V, U2)
    d3sel = src.d3[:, zhat]  # (Z, X, Y, U1, V, U2)
    d3v = float((m3 * d3sel.transpose(1, 2, 0, 3, 4, 5)).sum())
    return RegionPoint(r1=r1, r2=r2, r3=r3, r4=r4, d1=d1v, d2=d2v, d3=d3v)


def eval_helper_triangular_point(src: SourceSpec, aux: AuxiliarySystem) -> RegionPoint:
    """Triangular setting with a rate-limited observer of Y.

    p_uh = p(uh|y); p_u = p(u1|x,y,uh); p_xhat1 = p(xhat1|x,y,uh,u1); the
    forward refinement intended for the terminal node rides in p_v as
    p(u2|x,y,uh,u1); g2 on (U1, U2, Uh, Z). Returns (r1, r2, r3, rh).
    """
    _check_source(src)
    _require(aux, ("p_uh", "p_u", "p_xhat1", "p_v", "g2"))
    nx, ny, nz = src.pmf.sizes
    nuh = aux.p_uh.output_size
    _check_shape(aux.p_uh, (ny,), "p_uh")
    nu = aux.p_u.output_size
    _check_shape(aux.p_u, (nx, ny, nuh), "p_u")
    nu2 = aux.p_v.output_size
    _check_shape(aux.p_v, (nx, ny, nuh, nu), "p_v")
    _check_shape(aux.p_xhat1, (nx, ny, nuh, nu), "p_xhat1")
    _check_map(aux.g2, (nu, nu2, nuh, nz), src.d2.shape[1], "g2")

    # axes (X, Y, Z, Uh, U1, U2, Xhat1)
    joint = (
        src.pmf.probs[:, :, :, None, None, None, None]
        * aux.p_uh.table[None, :, None, :, None, None, None]
        * aux.p_u.table[:, :, None, :, :, None, None]
        * aux.p_v.table[:, :, None, :, :, :, None]
        * aux.p_xhat1.table[:, :, None, :, :, None, :]
    )
    r1 = _cmi(joint, (0,), (6, 4), (1, 3))
    r2 = _cmi(joint, (4,), (0, 1), (2, 3))
    r3 = _cmi(joint, (5,), (0, 1), (4, 3, 2))
    rh = _cmi(joint, (3,), (1,), (2,))
    d1v = float((_marg(joint, (0, 6)) * src.d1[:, : aux.p_xhat1.output_size]).sum())
    m = _marg(joint, (0, 2, 3, 4, 5))  # (X, Z, Uh, U1, U2)
    xhat2 = aux.g2.table.transpose(2, 3, 0, 1)  # (Uh, Z, U1, U2)
    d2sel = src.d2[:, xhat2]  # (X, Uh, Z, U1, U2)
    d2v = float((m * d2sel.transpose(0, 2, 1, 3, 4)).sum())
    return RegionPoint(r1=r1, r2=r2, r3=r3, rh=rh, d1=d1v, d2=d2v)


# ------------------------------------------------------------- cascade search


def _cascade_quantities(pxyz, p_u, p_xhat1, g2_table, d1, d2):
    """(r1, r2, d1, d2) of a raw cascade parameterization, no validation."""
    joint = (
        pxyz[:, :, :, None, None]
        * p_u[:, :, None, :, None]
        * p_xhat1[:, :, None, :, :]
    )
    r1 = _cmi(joint, (0,), (4, 3), (1,))
    r2 = _cmi(joint, (3,), (0, 1), (2,))
    d1v = float((_marg(joint, (0, 4)) * d1[:, : p_xhat1.shape[-1]]).sum())
    m_xzu = _marg(joint, (0, 2, 3))
    d2v = float((m_xzu * d2[:, g2_table.T]).sum())
    return r1, r2, d1v, d2v


def _g2_best_response(pxyz, p_u, d2):
    """Distortion-minimizing terminal map; ties go to the lowest index."""
    m_xzu = (pxyz[:, :, :, None] * p_u[:, :, None, :]).sum(axis=1)  # (X, Z, U)
    cost = np.einsum("xzu,xh->uzh", m_xzu, d2)
    return np.argmin(cost, axis=-1)  # (U, Z)


def _xhat1_zero_rate(pxyu, d1, n_hat):
    """Best reconstruction f(y,u): zero rate cost, deterministic rows."""
    cost = np.einsum("xyu,xh->yuh", pxyu, d1[:, :n_hat])
    pick = np.argmin(cost, axis=-1)  # (Y, U)
    nx, ny, nu = pxyu.shape
    t = np.zeros((nx, ny, nu, n_hat))
    for y in range(ny):
        for u in range(nu):
            t[:, y, u, pick[y, u]] = 1.0
    return t


def _xhat1_rd_solve(pxyz, p_u, d1, n_hat, d1_target, ba_iters=80, bisect_iters=40):
    """Conditional rate-distortion channel for the relay reconstruction.

    Minimizes I(X; Xhat1 | U, Y) subject to E d1 <= d1_target for fixed p_u,
    by Blahut-Arimoto iterations with a bisected distortion multiplier.
    Returns the channel table p(xhat1|x,y,u).
    """
    pxy = pxyz.sum(axis=2)
    pxyu = pxy[:, :, None] * p_u  # (X, Y, U)
    d1t = d1[:, :n_hat]

    # full-information floor and zero-rate ceiling
    d_floor = float((pxy.sum(axis=1) * d1t.min(axis=1)).sum())
    zero = _xhat1_zero_rate(pxyu, d1, n_hat)
    d_zero = float(np.einsum("xyu,xyuh,xh->", pxyu, zero, d1t))
    if d1_target >= d_zero - 1e-12:
        return zero
    if d1_target <= d_floor + 1e-12:
        pick = np.argmin(d1t, axis=1)  # (X,)
        t = np.zeros((pxy.shape[0], pxy.shape[1], p_u.shape[-1], n_hat))
        for x, h in enumerate(pick):
            t[x, :, :, h] = 1.0
        return t

    def renorm(t):
        s = t.sum(axis=-1, keepdims=True)
        # zero-probability conditioning cells get an arbitrary (uniform) row
        return np.where(s > 1e-200, t / np.maximum(s, 1e-300), 1.0 / t.shape[-1])

    def ba(lam):
        phi = np.full(pxyu.shape + (n_hat,), 1.0 / n_hat)
        w = np.exp(-lam * np.log(2.0) * d1t)  # (X, H)
        for _ in range(ba_iters):
            q = renorm(np.einsum("xyu,xyuh->yuh", pxyu, phi))
            new = renorm(q[None, :, :, :] * w[:, None, None, :])
            if np.abs(new - phi).max() < 1e-12:
                phi = new
                break
            phi = new
        dist = float(np.einsum("xyu,xyuh,xh->", pxyu, phi, d1t))
        return phi, dist

    lam_lo, lam_hi = 0.0, 4.0 / max(d1t.max(), 1e-12)
    phi_hi, dist_hi = ba(lam_hi)
    for _ in range(60):
        if dist_hi <= d1_target:
            break
        lam_hi *= 4.0
        phi_hi, dist_hi = ba(lam_hi)
    best = phi_hi
    for _ in range(bisect_iters):
        lam = 0.5 * (lam_lo + lam_hi)
        phi, dist = ba(lam)
        if dist <= d1_target:
            lam_hi, best = lam, phi
        else:
            lam_lo = lam
    return best


def _search_objective(pxyz, p_u_raw, p_xhat1, g2_table, d1, d2, r2_cap, d2_cap, weight):
    p_u = p_u_raw / p_u_raw.sum(axis=-1, keepdims=True)
    r1, r2, _, d2v = _cascade_quantities(pxyz, p_u, p_xhat1, g2_table, d1, d2)
    d2scale = max(float(d2.max()), 1e-12)
    pen = max(0.0, r2 - r2_cap) ** 2 + (max(0.0, d2v - d2_cap) / d2scale) ** 2
    return r1 + weight * pen


def _blend_to_rate(pxyz, p_u, cap):
    """Garble U toward its marginal until the rate bound fits the cap."""
    pxy = pxyz.sum(axis=2)
    marg = np.einsum("xy,xyu->u", pxy, p_u)

    def rate(t):
        mixed = (1.0 - t) * p_u + t * marg[None, None, :]
        joint = pxyz[:, :, :, None] * mixed[:, :, None, :]
        return _cmi(joint, (3,), (0, 1), (2,)), mixed

    r0, _ = rate(0.0)
    if r0 <= cap + 1e-9:
        return p_u
    lo, hi = 0.0, 1.0
    mixed = marg[None, None, :] * np.ones_like(p_u)
    for _ in range(40):
        t = 0.5 * (lo + hi)
        r, cand = rate(t)
        if r <= cap + 1e-12:
            hi, mixed = t, cand
        else:
            lo = t
    return mixed


@dataclass(frozen=True)
class SearchResult:
    r1: float
    aux: AuxiliarySystem
    point: RegionPoint


def min_r1_cascade_search(src: SourceSpec, d1_target: float, d2_target: float,
                          r2_budget: float, u_size: int,
                          restarts: int = 16, seed: int = 0,
                          rounds: int = 5, inner_iters: int = 12) -> SearchResult:
    """Smallest cascade forward rate found by alternating optimization.

    Alternates exponentiated-gradient steps on p(u|x,y) (finite-difference
    gradient of the penalized objective), an exact Blahut-Arimoto solve for
    the relay channel at the d1 target, and a best-response terminal map,
    under a x10-per-round penalty schedule; multi-start with per-restart
    seeds, best feasible restart wins (lowest index on ties).
    """
    _check_source(src)
    nx, ny, nz = src.pmf.sizes
    _budget(nx * ny + 3, u_size, "U")
    if d2_target <= 0 or d1_target < 0 or r2_budget < 0:
        raise ValueError("need d2 > 0, d1 >= 0, r2 >= 0")
    pxyz = src.pmf.probs
    px = pxyz.sum(axis=(1, 2))
    d1_floor = float((px * src.d1.min(axis=1)).sum())
    d2_floor = float((px * src.d2.min(axis=1)).sum())
    if d1_target < d1_floor - 1e-12 or d2_target < d2_floor - 1e-12:
        raise InfeasibleError(
            f"distortion below the full-information floor "
            f"(d1 >= {d1_floor:g}, d2 >= {d2_floor:g})"
        )
    n_hat1 = src.d1.shape[1]
    d2scale = max(float(src.d2.max()), 1e-12)

    def finalize(p_u, p_xhat1, g2_table):
        r1, r2, d1v, d2v = _cascade_quantities(
            pxyz, p_u, p_xhat1, g2_table, src.d1, src.d2
        )
        ok = (
            r2 <= r2_budget + 1e-9
            and d2v <= d2_target + 1e-9 * d2scale
            and d1v <= d1_target + 1e-9 * max(float(src.d1.max()), 1e-12)
        )
        return ok, (r1, r2, d1v, d2v)

    candidates = []

    def consider(p_u, p_xhat1, g2_table):
        ok, vals = finalize(p_u, p_xhat1, g2_table)
        if ok:
            candidates.append((vals[0], len(candidates), p_u, p_xhat1, g2_table, vals))

    # constant-U anchor: exact for the d2-slack regime
    p_u_const = np.zeros((nx, ny, u_size))
    p_u_const[:, :, 0] = 1.0
    g2_const = _g2_best_response(pxyz, p_u_const, src.d2)
    xhat1_const = _xhat1_rd_solve(pxyz, p_u_const, src.d1, n_hat1, d1_target)
    consider(p_u_const, xhat1_const, g2_const)

    rng = np.random.default_rng(seed)
    for restart in range(restarts):
        rng_r = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                             spawn_key=(restart,)))
        p_u = rng_r.dirichlet(np.ones(u_size), size=(nx, ny))
        p_xhat1 = rng_r.dirichlet(np.ones(n_hat1), size=(nx, ny, u_size))
        g2_table = _g2_best_response(pxyz, p_u, src.d2)
        prev_r1 = np.inf
        for rnd in range(rounds):
            weight = 10.0 ** rnd
            for _ in range(inner_iters):
                p_u = _eg_steps(
                    pxyz, p_u, p_xhat1, g2_table, src.d1, src.d2,
                    r2_budget, d2_target, weight,
                )
                p_xhat1 = _xhat1_rd_solve(pxyz, p_u, src.d1, n_hat1, d1_target)
                g2_table = _g2_best_response(pxyz, p_u, src.d2)
                r1 = _search_objective(
                    pxyz, p_u, p_xhat1, g2_table, src.d1, src.d2,
                    r2_budget, d2_target, weight,
                )
                if abs(prev_r1 - r1) < 1e-6:
                    prev_r1 = r1
                    break
                prev_r1 = r1
        # exact rate repair, then refresh the downstream responses
        p_u = _blend_to_rate(pxyz, p_u, r2_budget)
        p_xhat1 = _xhat1_rd_solve(pxyz, p_u, src.d1, n_hat1, d1_target)
        g2_table = _g2_best_response(pxyz, p_u, src.d2)
        consider(p_u, p_xhat1, g2_table)

    if not candidates:
        raise InfeasibleError(
            "search found no auxiliary satisfying (d1, d2, r2); the query may "
            "be infeasible at this u_size"
        )
    candidates.sort(key=lambda c: (c[0], c[1]))
    r1, _, p_u, p_xhat1, g2_table, vals = candidates[0]
    aux = AuxiliarySystem(
        p_u=CondPMF(p_u),
        p_xhat1=CondPMF(p_xhat1),
        g2=DeterministicMap(g2_table, src.d2.shape[1]),
    )
    point = RegionPoint(r1=vals[0], r2=vals[1], d1=vals[2], d2=vals[3])
    return SearchResult(r1=r1, aux=aux, point=point)


def _eg_steps(pxyz, p_u, p_xhat1, g2_table, d1, d2, r2_cap, d2_cap, weight,
              steps: int = 8, eta: float = 0.5):
    """Exponentiated-gradient pass on p(u|x,y) with finite-difference gradients."""
    h = 1e-6

    def f(raw):
        return _search_objective(pxyz, raw, p_xhat1, g2_table, d1, d2,
                                 r2_cap, d2_cap, weight)

    cur = p_u.copy()
    f_cur = f(cur)
    step = eta
    for _ in range(steps):
        grad = np.zeros_like(cur)
        it = np.nditer(cur, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            up = cur.copy()
            up[idx] += h
            dn = cur.copy()
            dn[idx] = max(dn[idx] - h, 1e-12)
            grad[idx] = (f(up) - f(dn)) / (up[idx] - dn[idx])
            it.iternext()
        scale = max(np.abs(grad).max(), 1e-12)
        improved = False
        for _ in range(8):
            trial = cur * np.exp(-step * grad / scale)
            trial /= trial.sum(axis=-1, keepdims=True)
            f_trial = f(trial)
            if f_trial < f_cur - 1e-12:
                cur, f_cur = trial, f_trial
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        step = min(step * 1.5, 2.0)
    return cur / cur.sum(axis=-1, keepdims=True)


# ------------------------------------------------------------- region oracle

# engineering allowances (bits) for how far below the quantized frontier the
# continuous optimum can sit, measured on binary desk-scale instances
ORACLE_SLACK_BITS = {1: 1.0, 2: 0.25, 3: 0.12, 4: 0.08, 5: 0.06, 6: 0.05,
                     7: 0.04, 8: 0.035, 9: 0.03}

_MAX_ORACLE_CHANNELS = 2_000_000


def _simplex_grid(m: int, resolution: int) -> np.ndarray:
    """All pmf vectors on m atoms with entries that are multiples of 1/resolution."""
    out = []
    for comp in itertools.combinations_with_replacement(range(m), resolution):
        v = np.zeros(m)
        for c in comp:
            v[c] += 1.0
        out.append(v / resolution)
    return np.array(out)


def _det_xhat1_options(nx: int, n_hat: int):
    """Deterministic per-symbol reconstructions f: X -> Xhat1."""
    return list(itertools.product(range(n_hat), repeat=nx))


def brute_force_region_oracle(src: SourceSpec, u_size: int, resolution: int):
    """Pareto frontier of (r1, r2, d1, d2) over quantized cascade auxiliaries.

    Enumerates p(u|x,y) with rows on the 1/resolution simplex lattice;
    the relay reconstruction ranges over the zero-rate best response f(y,u)
    and all deterministic per-symbol maps f(x); the terminal map is always
    the best response. resolution=1 is the uninformative anchor (constant U,
    best-constant reconstructions) only. Deterministic enumeration order.
    """
    _check_source(src)
    nx, ny, nz = src.pmf.sizes
    if nx > 2 or ny > 2 or nz > 2:
        raise ResourceLimitError("oracle is limited to binary source alphabets")
    if u_size > 3:
        raise ResourceLimitError("oracle is limited to |U| <= 3")
    if resolution > 9:
        raise ResourceLimitError("oracle is limited to 9 probability levels")
    pts = [tuple(p) for p in _enumerate_oracle_points(src, u_size, resolution)]
    return _pareto_min(np.array(sorted(set(pts))))


def oracle_min_r1(src: SourceSpec, u_size: int, resolution: int,
                  d1_target: float, d2_target: float, r2_budget: float):
    """Least r1 among enumerated points meeting the query; None if none do."""
    best = None
    for r1, r2, d1v, d2v in _enumerate_oracle_points(src, u_size, resolution):
        if r2 <= r2_budget + 1e-9 and d1v <= d1_target + 1e-9 and d2v <= d2_target + 1e-9:
            if best is None or r1 < best:
                best = r1
    return best


def _enumerate_oracle_points(src: SourceSpec, u_size: int, resolution: int):
    pxyz = src.pmf.probs
    nx, ny, nz = src.pmf.sizes
    px = pxyz.sum(axis=(1, 2))
    n_hat1 = src.d1.shape[1]

    if resolution == 1:
        p_u = np.zeros((nx, ny, u_size))
        p_u[:, :, 0] = 1.0
        g2 = _g2_best_response(pxyz, p_u, src.d2)
        xhat1 = np.zeros((nx, ny, u_size, n_hat1))
        best_const = int(np.argmin(px @ src.d1))
        xhat1[:, :, :, best_const] = 1.0
        yield _cascade_quantities(pxyz, p_u, xhat1, g2, src.d1, src.d2)
        return

    rows = _simplex_grid(u_size, resolution)
    n_rows = nx * ny
    total = len(rows) ** n_rows
    if total > _MAX_ORACLE_CHANNELS:
        raise ResourceLimitError(
            f"{total} channels exceed the oracle cap {_MAX_ORACLE_CHANNELS}; "
            "reduce the resolution or u_size"
        )
    fmaps = _det_xhat1_options(nx, n_hat1)
    pxy = pxyz.sum(axis=2)
    d1t = src.d1

    for combo in itertools.product(range(len(rows)), repeat=n_rows):
        p_u = rows[list(combo)].reshape(nx, ny, u_size)
        joint_u = pxyz[:, :, :, None] * p_u[:, :, None, :]  # (X, Y, Z, U)
        r1_base = _cmi(joint_u, (0,), (3,), (1,))
        r2 = _cmi(joint_u, (3,), (0, 1), (2,))
        g2 = _g2_best_response(pxyz, p_u, src.d2)
        m_xzu = joint_u.sum(axis=1)
        d2v = float((m_xzu * src.d2[:, g2.T]).sum())
        # zero-rate relay reconstruction f(y, u)
        pxyu = pxy[:, :, None] * p_u
        cost = np.einsum("xyu,xh->yuh", pxyu, d1t)
        d1_zero = float(cost.min(axis=-1).sum())
        yield (r1_base, r2, d1_zero, d2v)
        # per-symbol deterministic reconstructions f(x)
        for fmap in fmaps:
            sel = np.array(fmap)
            d1v = float((px * d1t[np.arange(nx), sel]).sum())
            extra = _cmi_fx(joint_u, sel, n_hat1)
            yield (r1_base + extra, r2, d1v, d2v)


def _cmi_fx(joint_u, sel, n_hat1):
    """I(X; f(X) | U, Y) for a deterministic per-symbol map f."""
    nx = joint_u.shape[0]
    m_xyu = joint_u.sum(axis=2)  # (X, Y, U)
    m_cyu = np.zeros((n_hat1,) + m_xyu.shape[1:])
    for x in range(nx):
        m_cyu[sel[x]] += m_xyu[x]
    h_c_uy = _table_entropy(m_cyu) - _table_entropy(m_xyu.sum(axis=0))
    return max(0.0, h_c_uy)


def _pareto_min(points: np.ndarray):
    """Non-dominated subset under componentwise minimization."""
    if points.size == 0:
        return []
    keep = []
    for p in points:
        dominated = False
        for q in keep:
            if np.all(q <= p + 1e-12) and np.any(q < p - 1e-12):
                dominated = True
                break
        if not dominated:
            keep = [q for q in keep if not (np.all(p <= q + 1e-12) and np.any(p < q - 1e-12))]
            keep.append(p)
    return [RegionPoint(r1=float(p[0]), r2=float(p[1]), d1=float(p[2]), d2=float(p[3]))
            for p in keep]


# --------------------------------------------------------------- serialization


def _blocks(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    i = 0
    while i < len(lines):
        head = lines[i].split()
        name, kind = head[0], head[1]
        if kind == "jointpmf":
            arity = int(head[2])
            count = int(np.prod([int(s) for s in head[3 : 3 + arity]]))
        elif kind == "condpmf":
            arity = int(head[2])
            count = int(np.prod([int(s) for s in head[3 : 3 + arity]])) * int(head[3 + arity])
        elif kind == "detmap":
            arity = int(head[2])
            count = int(np.prod([int(s) for s in head[3 : 3 + arity]]))
        elif kind == "dtable":
            count = int(head[2]) * int(head[3])
        else:
            raise ValueError(f"unknown block kind {kind!r}")
        body = " ".join(head[1:]) + "\n" + "\n".join(lines[i + 1 : i + 1 + count])
        yield name, kind, body
        i += 1 + count


def _dtable_to_text(name: str, table: np.ndarray) -> str:
    r, c = table.shape
    lines = [f"{name} dtable {r} {c}"]
    for i in range(r):
        for j in range(c):
            lines.append("%d %d %.17g" % (i, j, table[i, j]))
    return "\n".join(lines) + "\n"


def _dtable_from_body(body: str) -> np.ndarray:
    lines = body.splitlines()
    head = lines[0].split()
    r, c = int(head[1]), int(head[2])
    out = np.zeros((r, c))
    for ln in lines[1:]:
        i, j, v = ln.split()
        out[int(i), int(j)] = float(v)
    return out


def save_source_spec(src: SourceSpec) -> str:
    parts = ["pmf " + src.pmf.to_text(), _dtable_to_text("d1", src.d1),
             _dtable_to_text("d2", src.d2)]
    if src.d3 is not None:
        parts.append(_dtable_to_text("d3", src.d3))
    return "".join(parts)


def load_source_spec(text: str) -> SourceSpec:
    fields = {}
    for name, kind, body in _blocks(text):
        if kind == "jointpmf":
            fields[name] = JointPMF.from_text(body)
        elif kind == "dtable":
            fields[name] = _dtable_from_body(body)
        else:
            raise ValueError(f"unexpected block {name!r} of kind {kind!r} in source spec")
    if "pmf" not in fields or "d1" not in fields or "d2" not in fields:
        raise ValueError("source spec needs pmf, d1 and d2 blocks")
    return SourceSpec(pmf=fields["pmf"], d1=fields["d1"], d2=fields["d2"],
                      d3=fields.get("d3"))


_AUX_FIELDS = ("p_u", "p_xhat1", "p_v", "p_u2", "p_uh", "g2", "g3")


def save_aux(aux: AuxiliarySystem) -> str:
    parts = []
    for name in _AUX_FIELDS:
        val = getattr(aux, name)
        if val is not None:
            parts.append(f"{name} " + val.to_text())
    return "".join(parts)


def load_aux(text: str) -> AuxiliarySystem:
    fields = {}
    for name, kind, body in _blocks(text):
        if name not in _AUX_FIELDS:
            raise ValueError(f"unknown auxiliary field {name!r}")
        if kind == "condpmf":
            fields[name] = CondPMF.from_text(body)
        elif kind == "detmap":
            fields[name] = DeterministicMap.from_text(body)
        else:
            raise ValueError(f"auxiliary field {name!r} has unsupported kind {kind!r}")
    return AuxiliarySystem(**fields)
