"""Monte Carlo simulation of the random-binning cascade coding scheme.

Builds the random codebook and the two independent bin partitions, then runs
the full encode / decode-and-rebin / terminal-decode pipeline on i.i.d.
source triples, tallying the six error events and the empirical distortions.
Typicality is the robust flavor: every joint-symbol count must stay within a
multiplicative epsilon band of its expectation. Everything is a deterministic
function of the seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .discrete import AuxiliarySystem, SourceSpec, _cmi
from .errors import ResourceLimitError
from .probability import DeterministicMap

CODEWORD_CAP = 2**20


@dataclass(frozen=True)
class TypicalityParams:
    """Robust-typicality slack and blocklength."""

    epsilon: float
    n: int

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("blocklength must be at least 1")


def _typicality_bounds(pmf_flat: np.ndarray, n: int, eps: float):
    lo = n * pmf_flat * (1.0 - eps)
    hi = n * pmf_flat * (1.0 + eps)
    return lo, hi


def _ceil_pow2(n: int, rate: float) -> int:
    return 2 ** max(0, math.ceil(n * rate))


@dataclass
class CascadeCode:
    """Random codebook, bin partitions and typicality tables for one run."""

    n: int
    epsilon: float
    seed: int
    rate_l: float
    rate_10: float
    rate_11: float
    rate_2: float
    sizes: tuple[int, int, int, int, int]  # (|X|, |Y|, |Z|, |U|, |Xhat1|)
    codebook: np.ndarray  # (L, n) symbols of U
    bins1: np.ndarray  # (L,) bin of each codeword in the relay partition
    bins2: np.ndarray  # (L,) bin in the terminal partition, independent
    n_bins1: int
    n_bins2: int
    n_xhat1: int  # codewords per lazy reconstruction book
    p_xhat1_given_uy: np.ndarray  # (|U|, |Y|, |Xhat1|)
    bounds: dict = field(repr=False)

    @property
    def n_codewords(self) -> int:
        return self.codebook.shape[0]

    def xhat1_book(self, l: int, y_seq: np.ndarray) -> np.ndarray:
        """Reconstruction codebook for codeword l and this y-sequence.

        Generated lazily from p(xhat1|u,y); the sub-seed is a stable hash of
        (seed, l, y), so every node regenerates the identical book.
        """
        digest = hashlib.sha256(
            b"xhat1" + self.seed.to_bytes(8, "little", signed=True)
            + int(l).to_bytes(8, "little")
            + np.asarray(y_seq, dtype=np.int64).tobytes()
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        u_seq = self.codebook[l]
        n_hat = self.p_xhat1_given_uy.shape[-1]
        probs = self.p_xhat1_given_uy[u_seq, np.asarray(y_seq, dtype=np.int64)]
        cum = probs.cumsum(axis=-1)
        draws = rng.random((self.n_xhat1, self.n))
        return (draws[:, :, None] < cum[None, :, :]).argmax(axis=-1).astype(np.int64)


def _aux_joint(src: SourceSpec, aux: AuxiliarySystem) -> np.ndarray:
    # axes (X, Y, Z, U, Xhat1)
    return (
        src.pmf.probs[:, :, :, None, None]
        * aux.p_u.table[:, :, None, :, None]
        * aux.p_xhat1.table[:, :, None, :, :]
    )


def build_cascade_code(src: SourceSpec, aux: AuxiliarySystem,
                       tp: TypicalityParams, delta: float,
                       seed: int) -> CascadeCode:
    """Draw the codebook and both bin partitions for the fixed auxiliary.

    Rates come from the auxiliary's mutual informations plus the slack:
    R_l = I(U;X,Y)+delta, R_10 = I(U;X|Y)+2 delta, R_11 = I(Xhat1;X|U,Y)+delta,
    R_2 = I(U;X,Y|Z)+2 delta. Every 2^ceil(nR) is capped at 2^20.
    """
    if delta < 0:
        raise ValueError("rate slack delta must be nonnegative")
    for name in ("p_u", "p_xhat1", "g2"):
        if getattr(aux, name) is None:
            raise ValueError(f"auxiliary system is missing {name}")
    joint = _aux_joint(src, aux)
    nx, ny, nz, nu, nh = joint.shape
    rate_l = _cmi(joint, (3,), (0, 1)) + delta
    rate_10 = _cmi(joint, (3,), (0,), (1,)) + 2 * delta
    rate_11 = _cmi(joint, (4,), (0,), (3, 1)) + delta
    rate_2 = _cmi(joint, (3,), (0, 1), (2,)) + 2 * delta

    n = tp.n
    for label, rate in (("2^(n R_l)", rate_l), ("2^(n R_10)", rate_10),
                        ("2^(n R_11)", rate_11), ("2^(n R_2)", rate_2)):
        if _ceil_pow2(n, rate) > CODEWORD_CAP:
            raise ResourceLimitError(
                f"{label} = 2^{math.ceil(n * rate)} exceeds the cap 2^20"
            )
    n_codewords = _ceil_pow2(n, rate_l)
    n_bins1 = _ceil_pow2(n, rate_10)
    n_bins2 = _ceil_pow2(n, rate_2)
    n_xhat1 = _ceil_pow2(n, rate_11)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    p_u = joint.sum(axis=(0, 1, 2, 4))
    codebook = rng.choice(nu, size=(n_codewords, n), p=p_u).astype(np.int64)
    bins1 = rng.integers(0, n_bins1, size=n_codewords, dtype=np.int64)
    bins2 = rng.integers(0, n_bins2, size=n_codewords, dtype=np.int64)

    # p(xhat1 | u, y) induced by the auxiliary: marginalize x out of the joint
    m_yuh = joint.sum(axis=(0, 2))  # (Y, U, Xhat1)
    denom = np.maximum(m_yuh.sum(axis=-1, keepdims=True), 1e-300)
    p_xhat1_given_uy = (m_yuh / denom).transpose(1, 0, 2)  # (U, Y, Xhat1)

    eps = tp.epsilon
    bounds = {
        "xy": _typicality_bounds(joint.sum(axis=(2, 3, 4)).ravel(), n, eps),
        "uxy": _typicality_bounds(
            joint.sum(axis=(2, 4)).transpose(2, 0, 1).ravel(), n, eps
        ),
        "uxyz": _typicality_bounds(
            joint.sum(axis=4).transpose(3, 0, 1, 2).ravel(), n, eps
        ),
        "huxy": _typicality_bounds(
            joint.sum(axis=2).transpose(3, 2, 0, 1).ravel(), n, eps
        ),
        "uy": _typicality_bounds(
            joint.sum(axis=(0, 2, 4)).transpose(1, 0).ravel(), n, eps
        ),
        "uz": _typicality_bounds(
            joint.sum(axis=(0, 1, 4)).transpose(1, 0).ravel(), n, eps
        ),
    }
    return CascadeCode(
        n=n, epsilon=eps, seed=seed,
        rate_l=rate_l, rate_10=rate_10, rate_11=rate_11, rate_2=rate_2,
        sizes=(nx, ny, nz, nu, nh),
        codebook=codebook, bins1=bins1, bins2=bins2,
        n_bins1=n_bins1, n_bins2=n_bins2, n_xhat1=n_xhat1,
        p_xhat1_given_uy=p_xhat1_given_uy, bounds=bounds,
    )


def _mask(ids: np.ndarray, n_symbols: int, bounds) -> np.ndarray:
    lo, hi = bounds
    return _kernels.typical_mask(ids, n_symbols, lo, hi)


@dataclass(frozen=True)
class EncodeOutput:
    m10: int
    m11: int
    l_true: int
    e1: bool
    e3: bool


def encode_node0(code: CascadeCode, x_seq: np.ndarray, y_seq: np.ndarray,
                 rng: np.random.Generator) -> EncodeOutput:
    """Source-node encoding: cover (x,y) with a codeword, then a reconstruction.

    Picks uniformly among jointly typical candidates; when none exists the
    index is drawn uniformly at random and the corresponding covering-failure
    flag (E1 for the codeword, E3 for the reconstruction) is set.
    """
    nx, ny, nz, nu, nh = code.sizes
    xy = x_seq * ny + y_seq
    ids = code.codebook * (nx * ny) + xy[None, :]
    cand = np.flatnonzero(_mask(ids, nu * nx * ny, code.bounds["uxy"]))
    if cand.size == 0:
        l = int(rng.integers(code.n_codewords))
        e1 = True
    else:
        l = int(cand[rng.integers(cand.size)])
        e1 = False
    book = code.xhat1_book(l, y_seq)
    base = (code.codebook[l] * nx + x_seq) * ny + y_seq
    ids4 = book * (nu * nx * ny) + base[None, :]
    cand4 = np.flatnonzero(_mask(ids4, nh * nu * nx * ny, code.bounds["huxy"]))
    if cand4.size == 0:
        m11 = int(rng.integers(code.n_xhat1))
        e3 = True
    else:
        m11 = int(cand4[rng.integers(cand4.size)])
        e3 = False
    return EncodeOutput(m10=int(code.bins1[l]), m11=m11, l_true=l, e1=e1, e3=e3)


@dataclass(frozen=True)
class RelayOutput:
    m2: int
    l_hat: int
    xhat1_seq: np.ndarray
    e4: bool


def relay_node1(code: CascadeCode, m10: int, m11: int,
                y_seq: np.ndarray) -> RelayOutput:
    """Decode-and-rebin at the relay.

    Looks for the unique codeword in bin m10 jointly typical with y; on
    ambiguity or absence falls back to the first codeword. Emits the terminal
    bin index of the decoded codeword plus the relay reconstruction.
    """
    nx, ny, nz, nu, nh = code.sizes
    members = np.flatnonzero(code.bins1 == m10)
    ids = code.codebook[members] * ny + y_seq[None, :]
    hits = members[_mask(ids, nu * ny, code.bounds["uy"])]
    if hits.size == 1:
        l_hat = int(hits[0])
        e4 = False
    else:
        l_hat = 0
        e4 = True
    xhat1 = code.xhat1_book(l_hat, y_seq)[m11]
    return RelayOutput(m2=int(code.bins2[l_hat]), l_hat=l_hat,
                       xhat1_seq=xhat1, e4=e4)


@dataclass(frozen=True)
class TerminalOutput:
    l_tilde: int
    xhat2_seq: np.ndarray
    e5: bool


def decode_node2(code: CascadeCode, m2: int, z_seq: np.ndarray,
                 g2: DeterministicMap) -> TerminalOutput:
    """Terminal decode against the degraded side information.

    Unique-typical decode within bin m2 of the terminal partition; fallback
    to the first codeword. Symbolwise reconstruction xhat2_i = g2(u_i, z_i).
    """
    nx, ny, nz, nu, nh = code.sizes
    members = np.flatnonzero(code.bins2 == m2)
    ids = code.codebook[members] * nz + z_seq[None, :]
    hits = members[_mask(ids, nu * nz, code.bounds["uz"])]
    if hits.size == 1:
        l_tilde = int(hits[0])
        e5 = False
    else:
        l_tilde = 0
        e5 = True
    xhat2 = g2.table[code.codebook[l_tilde], z_seq]
    return TerminalOutput(l_tilde=l_tilde, xhat2_seq=xhat2, e5=e5)


@dataclass(frozen=True)
class SimResult:
    """Per-event counts and empirical distortions of one simulation run."""

    trials: int
    n: int
    epsilon: float
    delta: float
    seed: int
    event_counts: tuple[int, int, int, int, int, int]  # E0..E5
    d1_mean: float
    d2_mean: float
    d1_ci: float
    d2_ci: float
    clean_trials: int  # trials with no event flagged
    d1_mean_clean: float
    d2_mean_clean: float
    d1_ci_clean: float
    d2_ci_clean: float
    rates: tuple[float, float, float, float]  # (R_l, R_10, R_11, R_2)

    def event_rates(self) -> tuple[float, ...]:
        return tuple(c / self.trials for c in self.event_counts)

    def summary(self) -> str:
        lines = [
            f"binning simulation: n={self.n} trials={self.trials} "
            f"epsilon={self.epsilon:g} delta={self.delta:g} seed={self.seed}",
            "rates (bits/sample): R_l=%.4f R_10=%.4f R_11=%.4f R_2=%.4f"
            % self.rates,
            "event rates: " + "  ".join(
                f"E{i}={c / self.trials:.4f}" for i, c in enumerate(self.event_counts)
            ),
            f"distortion d1: {self.d1_mean:.5f} +- {self.d1_ci:.5f}",
            f"distortion d2: {self.d2_mean:.5f} +- {self.d2_ci:.5f}",
            f"clean trials: {self.clean_trials} "
            f"(d1={self.d1_mean_clean:.5f} +- {self.d1_ci_clean:.5f}, "
            f"d2={self.d2_mean_clean:.5f} +- {self.d2_ci_clean:.5f})",
        ]
        return "\n".join(lines)


def _ci95(values: np.ndarray) -> float:
    if values.size < 2:
        return float("nan") if values.size == 0 else 0.0
    return 1.96 * float(values.std(ddof=1)) / math.sqrt(values.size)


def run_simulation(src: SourceSpec, aux: AuxiliarySystem, tp: TypicalityParams,
                   delta: float, trials: int, seed: int) -> SimResult:
    """Full pipeline over i.i.d. source triples; deterministic given seed."""
    if trials < 1:
        raise ValueError("need at least one trial")
    code = build_cascade_code(src, aux, tp, delta, seed)
    nx, ny, nz, nu, nh = code.sizes
    n = code.n
    pxyz_flat = src.pmf.probs.ravel()
    counts = np.zeros(6, dtype=np.int64)
    d1_vals = np.zeros(trials)
    d2_vals = np.zeros(trials)
    clean = np.zeros(trials, dtype=bool)

    for t in range(trials):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(1, t))
        )
        flat = rng.choice(pxyz_flat.size, size=n, p=pxyz_flat)
        x_seq, y_seq, z_seq = np.unravel_index(flat, src.pmf.probs.shape)
        x_seq = x_seq.astype(np.int64)
        y_seq = y_seq.astype(np.int64)
        z_seq = z_seq.astype(np.int64)

        xy = x_seq * ny + y_seq
        e0 = not bool(_mask(xy[None, :], nx * ny, code.bounds["xy"])[0])
        enc = encode_node0(code, x_seq, y_seq, rng)
        l = enc.l_true
        uxyz = ((code.codebook[l] * nx + x_seq) * ny + y_seq) * nz + z_seq
        e2 = not bool(_mask(uxyz[None, :], nu * nx * ny * nz, code.bounds["uxyz"])[0])
        rel = relay_node1(code, enc.m10, enc.m11, y_seq)
        # E4 per its event definition: another typical codeword shares the bin
        members = np.flatnonzero(code.bins1 == enc.m10)
        ids = code.codebook[members] * ny + y_seq[None, :]
        hits = members[_mask(ids, nu * ny, code.bounds["uy"])]
        e4 = bool(np.any(hits != l))
        dec = decode_node2(code, rel.m2, z_seq, aux.g2)
        members2 = np.flatnonzero(code.bins2 == rel.m2)
        ids2 = code.codebook[members2] * nz + z_seq[None, :]
        hits2 = members2[_mask(ids2, nu * nz, code.bounds["uz"])]
        e5 = bool(np.any(hits2 != l))

        flags = (e0, enc.e1, e2, enc.e3, e4, e5)
        counts += np.array(flags, dtype=np.int64)
        clean[t] = not any(flags)
        d1_vals[t] = float(src.d1[x_seq, rel.xhat1_seq].mean())
        d2_vals[t] = float(src.d2[x_seq, dec.xhat2_seq].mean())

    clean_d1 = d1_vals[clean]
    clean_d2 = d2_vals[clean]
    return SimResult(
        trials=trials, n=n, epsilon=tp.epsilon, delta=delta, seed=seed,
        event_counts=tuple(int(c) for c in counts),
        d1_mean=float(d1_vals.mean()), d2_mean=float(d2_vals.mean()),
        d1_ci=_ci95(d1_vals), d2_ci=_ci95(d2_vals),
        clean_trials=int(clean.sum()),
        d1_mean_clean=float(clean_d1.mean()) if clean_d1.size else float("nan"),
        d2_mean_clean=float(clean_d2.mean()) if clean_d2.size else float("nan"),
        d1_ci_clean=_ci95(clean_d1),
        d2_ci_clean=_ci95(clean_d2),
        rates=(code.rate_l, code.rate_10, code.rate_11, code.rate_2),
    )
