"""Exact information measures over dense finite joint distributions.

Everything here works on explicit probability tables (numpy arrays), in bits
(base-2 logs). These primitives back all the discrete region evaluators:
entropy, conditional mutual information, Markov-chain deviation, and the
product-coupling identity checker used by the two-way converses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_TABLE_ENTRIES = 10**7
NORMALIZATION_TOL = 1e-12


class TableSizeError(ValueError):
    """Dense table would exceed the desk-scale entry cap."""


def _check_sizes(sizes) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) == 0:
        raise ValueError("need at least one variable")
    if any(s < 1 for s in sizes):
        raise ValueError(f"alphabet sizes must be positive, got {sizes}")
    n = 1
    for s in sizes:
        n *= s
    if n > MAX_TABLE_ENTRIES:
        raise TableSizeError(
            f"dense table with {n} entries exceeds cap of {MAX_TABLE_ENTRIES}"
        )
    return sizes


@dataclass(frozen=True)
class JointPMF:
    """Dense joint pmf over a tuple of finite-alphabet variables.

    probs[i1, ..., ik] = P(X1=i1, ..., Xk=ik). Entries must be nonnegative
    and sum to 1 within 1e-12; arity and sizes are fixed at construction.
    """

    probs: np.ndarray
    sizes: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        sizes = _check_sizes(probs.shape)
        if np.any(probs < 0):
            raise ValueError("pmf entries must be nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"pmf entries sum to {total!r}, not 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "sizes", sizes)

    @property
    def arity(self) -> int:
        return len(self.sizes)

    def marginal(self, subset) -> np.ndarray:
        """Marginal table over `subset`, axes kept in ascending index order."""
        subset = _validate_subset(subset, self.arity, "subset")
        drop = tuple(i for i in range(self.arity) if i not in set(subset))
        return self.probs.sum(axis=drop) if drop else self.probs

    def to_text(self) -> str:
        lines = ["jointpmf %d %s" % (self.arity, " ".join(map(str, self.sizes)))]
        for idx in np.ndindex(*self.sizes):
            lines.append(
                "%s %.17g" % (" ".join(map(str, idx)), self.probs[idx])
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "JointPMF":
        tokens = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not tokens or tokens[0][0] != "jointpmf":
            raise ValueError("missing 'jointpmf' header line")
        head = tokens[0]
        arity = int(head[1])
        sizes = tuple(int(s) for s in head[2 : 2 + arity])
        probs = np.zeros(sizes, dtype=np.float64)
        for row in tokens[1:]:
            idx = tuple(int(t) for t in row[:arity])
            probs[idx] = float(row[arity])
        return cls(probs)


@dataclass(frozen=True)
class CondPMF:
    """Conditional pmf table: one output distribution per input tuple.

    table[i1, ..., ik, j] = P(out=j | in=(i1, ..., ik)); every row sums to 1
    within 1e-12.
    """

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim < 2:
            raise ValueError("conditional table needs input axes plus an output axis")
        _check_sizes(table.shape)
        if np.any(table < 0):
            raise ValueError("conditional entries must be nonnegative")
        rows = table.sum(axis=-1)
        if np.any(np.abs(rows - 1.0) > NORMALIZATION_TOL):
            worst = float(np.abs(rows - 1.0).max())
            raise ValueError(f"conditional rows must sum to 1 (max deviation {worst:g})")
        object.__setattr__(self, "table", table)

    @property
    def input_sizes(self) -> tuple[int, ...]:
        return self.table.shape[:-1]

    @property
    def output_size(self) -> int:
        return self.table.shape[-1]

    def to_text(self) -> str:
        ins = self.input_sizes
        lines = [
            "condpmf %d %s %d"
            % (len(ins), " ".join(map(str, ins)), self.output_size)
        ]
        for idx in np.ndindex(*self.table.shape):
            lines.append("%s %.17g" % (" ".join(map(str, idx)), self.table[idx]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CondPMF":
        tokens = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not tokens or tokens[0][0] != "condpmf":
            raise ValueError("missing 'condpmf' header line")
        head = tokens[0]
        in_arity = int(head[1])
        in_sizes = tuple(int(s) for s in head[2 : 2 + in_arity])
        out_size = int(head[2 + in_arity])
        table = np.zeros(in_sizes + (out_size,), dtype=np.float64)
        for row in tokens[1:]:
            idx = tuple(int(t) for t in row[: in_arity + 1])
            table[idx] = float(row[in_arity + 1])
        return cls(table)


@dataclass(frozen=True)
class DeterministicMap:
    """Total function from an input grid to an output index."""

    table: np.ndarray
    output_size: int

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.int64)
        _check_sizes(table.shape)
        if self.output_size < 1:
            raise ValueError("output size must be positive")
        if np.any(table < 0) or np.any(table >= self.output_size):
            raise ValueError("map values must lie in [0, output_size)")
        object.__setattr__(self, "table", table)

    @property
    def input_sizes(self) -> tuple[int, ...]:
        return self.table.shape

    def to_text(self) -> str:
        ins = self.input_sizes
        lines = [
            "detmap %d %s %d" % (len(ins), " ".join(map(str, ins)), self.output_size)
        ]
        for idx in np.ndindex(*ins):
            lines.append("%s %d" % (" ".join(map(str, idx)), self.table[idx]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DeterministicMap":
        tokens = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not tokens or tokens[0][0] != "detmap":
            raise ValueError("missing 'detmap' header line")
        head = tokens[0]
        in_arity = int(head[1])
        in_sizes = tuple(int(s) for s in head[2 : 2 + in_arity])
        out_size = int(head[2 + in_arity])
        table = np.zeros(in_sizes, dtype=np.int64)
        for row in tokens[1:]:
            idx = tuple(int(t) for t in row[:in_arity])
            table[idx] = int(row[in_arity])
        return cls(table, out_size)


def _validate_subset(subset, arity: int, name: str) -> tuple[int, ...]:
    subset = tuple(int(i) for i in subset)
    if any(i < 0 or i >= arity for i in subset):
        raise ValueError(f"{name} contains indices outside [0, {arity})")
    if len(set(subset)) != len(subset):
        raise ValueError(f"{name} contains repeated indices")
    return tuple(sorted(subset))


def _entropy_of_table(table: np.ndarray) -> float:
    p = table.ravel()
    # 0 log 0 := 0 by continuity
    nz = p > 0.0
    return float(-(p[nz] * np.log2(p[nz])).sum())


def entropy(pmf: JointPMF, subset) -> float:
    """Joint entropy H(subset) in bits."""
    subset = _validate_subset(subset, pmf.arity, "subset")
    if not subset:
        raise ValueError("subset must be nonempty")
    return _entropy_of_table(pmf.marginal(subset))


def conditional_mutual_information(pmf: JointPMF, set_a, set_b, set_c=()) -> float:
    """I(A;B|C) in bits; with empty C this is plain mutual information.

    Computed as H(A,C) + H(B,C) - H(A,B,C) - H(C); tiny negative rounding
    residue is clipped to 0.
    """
    a = _validate_subset(set_a, pmf.arity, "set_a")
    b = _validate_subset(set_b, pmf.arity, "set_b")
    c = _validate_subset(set_c, pmf.arity, "set_c")
    if not a or not b:
        raise ValueError("set_a and set_b must be nonempty")
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise ValueError("set_a, set_b, set_c must be pairwise disjoint")
    h_ac = _entropy_of_table(pmf.marginal(a + c))
    h_bc = _entropy_of_table(pmf.marginal(b + c))
    h_abc = _entropy_of_table(pmf.marginal(a + b + c))
    h_c = _entropy_of_table(pmf.marginal(c)) if c else 0.0
    return max(0.0, h_ac + h_bc - h_abc - h_c)


def check_markov_chain(pmf: JointPMF, order) -> float:
    """Deviation from the Markov chain A - B - C, i.e. I(A;C|B) in bits.

    Zero iff the chain holds; the caller picks the tolerance.
    """
    set_a, set_b, set_c = order
    return conditional_mutual_information(pmf, set_a, set_c, set_b)


def compose_markov_chain(p_x: np.ndarray, p_y_given_x: CondPMF,
                         p_z_given_y: CondPMF) -> JointPMF:
    """Build p(x,y,z) = p(x) p(y|x) p(z|y) as a JointPMF."""
    p_x = np.asarray(p_x, dtype=np.float64)
    if p_x.ndim != 1:
        raise ValueError("p_x must be one-dimensional")
    if abs(float(p_x.sum()) - 1.0) > NORMALIZATION_TOL or np.any(p_x < 0):
        raise ValueError("p_x must be a probability vector")
    if p_y_given_x.input_sizes != (p_x.shape[0],):
        raise ValueError("p_y_given_x input alphabet does not match p_x")
    if p_z_given_y.input_sizes != (p_y_given_x.output_size,):
        raise ValueError("p_z_given_y input alphabet does not match p_y_given_x")
    joint = (
        p_x[:, None, None]
        * p_y_given_x.table[:, :, None]
        * p_z_given_y.table[None, :, :]
    )
    return JointPMF(joint)


def kaspi_lemma_check(
    p_a1b1: JointPMF,
    p_a2b2: JointPMF,
    m1: DeterministicMap,
    m2: DeterministicMap,
) -> tuple[float, float, float]:
    """Evaluate the three product-coupling identities on a concrete instance.

    The four base variables follow p(a1,a2,b1,b2) = p(a1,b1) p(a2,b2); M1 is
    a function of (A1,A2) and M2 a function of (B1,B2,M1). Returns

        ( I(A2;B1|M1,M2,A1,B2), I(B1;M1|A1,B2), I(A2;M2|M1,A1,B2) )

    all of which are identically zero whenever the premises hold, so nonzero
    values flag a broken coupling or an M2 that peeks outside (B1,B2,M1).
    """
    if p_a1b1.arity != 2 or p_a2b2.arity != 2:
        raise ValueError("pair distributions must each have two variables")
    na1, nb1 = p_a1b1.sizes
    na2, nb2 = p_a2b2.sizes
    if m1.input_sizes != (na1, na2):
        raise ValueError(f"m1 domain {m1.input_sizes} != (A1,A2) sizes {(na1, na2)}")
    nm1 = m1.output_size
    if m2.input_sizes != (nb1, nb2, nm1):
        raise ValueError(
            f"m2 domain {m2.input_sizes} != (B1,B2,M1) sizes {(nb1, nb2, nm1)}"
        )
    nm2 = m2.output_size

    # axes: (A1, A2, B1, B2, M1, M2)
    joint = np.zeros((na1, na2, nb1, nb2, nm1, nm2), dtype=np.float64)
    base = p_a1b1.probs[:, None, :, None] * p_a2b2.probs[None, :, None, :]
    for a1 in range(na1):
        for a2 in range(na2):
            k1 = m1.table[a1, a2]
            for b1 in range(nb1):
                for b2 in range(nb2):
                    k2 = m2.table[b1, b2, k1]
                    joint[a1, a2, b1, b2, k1, k2] += base[a1, a2, b1, b2]
    pmf = JointPMF(joint)
    v1 = conditional_mutual_information(pmf, [1], [2], [4, 5, 0, 3])
    v2 = conditional_mutual_information(pmf, [2], [4], [0, 3])
    v3 = conditional_mutual_information(pmf, [1], [5], [4, 0, 3])
    return v1, v2, v3
