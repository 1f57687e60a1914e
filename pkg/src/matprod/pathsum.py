"""Exact moments of the masked matrix product via layerwise path counting.

The k-th moment of the normalized squared norm is a sum over sequences of
k-tuples of vertices, one tuple per layer, of a per-layer collision factor.
The factor for a pair of adjacent tuples depends only on

  * the multiplicity matrix of the edges the tuples trace out, through a
    ratio of multinomial path counts and a product of entry-law moments, and
  * the number of distinct vertices in the next tuple, through a power of
    the mask probability.

Two independent evaluation routes are provided:

``exact_moment``
    Collapses each layer's tuple space to equivalence classes (set partitions
    of the k tuple slots) and runs a transfer-matrix contraction over
    partitions.  Exact rational arithmetic whenever the entry-law moments,
    the mask probability and the squared input coordinates are rational.

``brute_force_moment``
    Never uses the k-tuple collapse.  Either sums over 2k-tuples of raw paths
    layer by layer (the direct expansion of the 2k-th power of the norm), or,
    for discrete laws on tiny instances, enumerates every weight/mask
    assignment outright and averages the resulting norm powers.

Both routes fail fast with ``BudgetExceeded`` when their documented cost
model exceeds the evaluation budget.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .distributions import DistributionSpec
from .ensemble import BetaParams, EnsembleConfig, UnitVector
from .errors import BudgetExceeded, DimensionMismatch

DEFAULT_BUDGET = 10**8
DEFAULT_K_CAP = 8


class CollisionRegimeWarning(UserWarning):
    """The requested k is outside the regime where the log-normal moment
    prediction is accurate (k-choose-2 reaching the smallest layer width).
    The exact computation itself remains valid for every k."""


# ---------------------------------------------------------------------------
# combinatorial primitives
# ---------------------------------------------------------------------------


def multinomial(parts) -> int:
    """Multinomial coefficient (sum parts)! / prod(part!) as an exact int."""
    total = 0
    out = 1
    for part in parts:
        if part < 0:
            raise ValueError("multinomial parts must be nonnegative")
        total += part
        out *= math.comb(total, part)
    return out


def falling_factorial(n: int, r: int) -> int:
    """n (n-1) ... (n-r+1); zero when r > n."""
    out = 1
    for j in range(r):
        out *= n - j
        if out == 0:
            return 0
    return out


Partition = tuple[tuple[int, ...], ...]


@lru_cache(maxsize=None)
def set_partitions(k: int) -> tuple[Partition, ...]:
    """All set partitions of range(k) in canonical form.

    Canonical form: blocks sorted internally, then by first element.  Built by
    inserting element k-1 into every partition of range(k-1).
    """
    if k == 0:
        return ((),)
    out: list[Partition] = []
    for smaller in set_partitions(k - 1):
        for j in range(len(smaller)):
            blocks = list(smaller)
            blocks[j] = blocks[j] + (k - 1,)
            out.append(_canonical(blocks))
        out.append(_canonical(list(smaller) + [(k - 1,)]))
    return tuple(out)


def _canonical(blocks) -> Partition:
    return tuple(sorted(tuple(sorted(b)) for b in blocks))


def partition_meet(sigma: Partition, tau: Partition) -> Partition:
    """Common refinement: elements together iff together in both partitions."""
    label_s = {}
    for idx, block in enumerate(sigma):
        for el in block:
            label_s[el] = idx
    label_t = {}
    for idx, block in enumerate(tau):
        for el in block:
            label_t[el] = idx
    groups: dict[tuple[int, int], list[int]] = {}
    for el in label_s:
        groups.setdefault((label_s[el], label_t[el]), []).append(el)
    return _canonical(groups.values())


def partition_of(values) -> Partition:
    """Set partition of the index set induced by equal values."""
    groups: dict[object, list[int]] = {}
    for idx, val in enumerate(values):
        groups.setdefault(val, []).append(idx)
    return _canonical(groups.values())


# ---------------------------------------------------------------------------
# edge multiplicities and vertex tuples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeMultiplicity:
    """Dense nonnegative edge-use counts over a bipartite layer.

    ``counts[a][b]`` is how many times the directed edge (a, b) is used, with
    a over the left vertex set and b over the right.  Vertices are 0-based.
    """

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.counts or not self.counts[0]:
            raise ValueError("multiplicity matrix must be nonempty")
        width = len(self.counts[0])
        for row in self.counts:
            if len(row) != width:
                raise ValueError("ragged multiplicity matrix")
            if any(c < 0 for c in row):
                raise ValueError("multiplicities must be nonnegative")

    @classmethod
    def from_tuples(cls, left, right, n_left: int | None = None, n_right: int | None = None):
        left = tuple(left)
        right = tuple(right)
        if len(left) != len(right):
            raise ValueError("endpoint tuples must have equal length")
        n_left = (max(left) + 1) if n_left is None else n_left
        n_right = (max(right) + 1) if n_right is None else n_right
        counts = [[0] * n_right for _ in range(n_left)]
        for a, b in zip(left, right):
            counts[a][b] += 1
        return cls(tuple(tuple(row) for row in counts))

    @property
    def n_left(self) -> int:
        return len(self.counts)

    @property
    def n_right(self) -> int:
        return len(self.counts[0])

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def row_sums(self) -> tuple[int, ...]:
        """Left-endpoint use counts m(a, *)."""
        return tuple(sum(row) for row in self.counts)

    @property
    def col_sums(self) -> tuple[int, ...]:
        """Right-endpoint use counts m(*, b)."""
        return tuple(sum(row[b] for row in self.counts) for b in range(self.n_right))

    def doubled(self) -> "EdgeMultiplicity":
        return EdgeMultiplicity(tuple(tuple(2 * c for c in row) for row in self.counts))

    def left_multiset(self) -> tuple[int, ...]:
        out = []
        for a, s in enumerate(self.row_sums):
            out.extend([a] * s)
        return tuple(out)

    def right_multiset(self) -> tuple[int, ...]:
        out = []
        for b, s in enumerate(self.col_sums):
            out.extend([b] * s)
        return tuple(out)


def multiplicity_count(m: EdgeMultiplicity, ell: int) -> int:
    """Number of ordered left-endpoint tuples compatible with the edge counts.

    Product over right vertices of the multinomial coefficient distributing
    that vertex's incoming uses among the left vertices.  Exact integer.
    """
    if m.total != ell:
        raise ValueError(f"multiplicities sum to {m.total}, expected {ell}")
    out = 1
    for b in range(m.n_right):
        out *= multinomial(m.counts[a][b] for a in range(m.n_left))
    return out


def edge_weight(m: EdgeMultiplicity, law: DistributionSpec) -> Fraction:
    """Product of entry-law moments over the edge counts.

    Zero as soon as any count is odd (symmetric laws have no odd moments).
    """
    out = Fraction(1)
    for row in m.counts:
        for c in row:
            if c == 0:
                continue
            if c % 2 == 1:
                return Fraction(0)
            out *= law.moment(c)
    return out


@dataclass(frozen=True)
class VertexTuple:
    """An ordered tuple of vertices in one layer, with collision bookkeeping.

    ``classification`` is "U" for all-distinct tuples, "P" for exactly one
    coincident pair (``pair`` gives its positions), and "B" otherwise.
    """

    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("vertex tuple must be nonempty")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def unique_count(self) -> int:
        return len(set(self.values))

    @property
    def classification(self) -> str:
        k = len(self.values)
        if self.unique_count == k:
            return "U"
        if self.unique_count == k - 1:
            return "P"
        return "B"

    @property
    def pair(self) -> tuple[int, int] | None:
        """Positions of the single coincident pair, when classification is P."""
        if self.classification != "P":
            return None
        seen: dict[int, int] = {}
        for idx, val in enumerate(self.values):
            if val in seen:
                return (seen[val], idx)
            seen[val] = idx
        return None


@dataclass(frozen=True)
class PathEnsemble:
    """A layerwise sequence of vertex tuples tracing k paths through the graph."""

    tuples: tuple[VertexTuple, ...]

    def __post_init__(self):
        object.__setattr__(self, "tuples", tuple(self.tuples))
        if len(self.tuples) < 2:
            raise ValueError("a path ensemble spans at least two layers")
        k = len(self.tuples[0])
        if any(len(t) != k for t in self.tuples):
            raise ValueError("every layer tuple must have the same length")

    @property
    def tuple_length(self) -> int:
        return len(self.tuples[0])

    @property
    def depth(self) -> int:
        return len(self.tuples) - 1

    def layer_multiplicities(self) -> tuple[EdgeMultiplicity, ...]:
        return tuple(
            EdgeMultiplicity.from_tuples(a.values, b.values)
            for a, b in zip(self.tuples, self.tuples[1:])
        )

    def collision_weight(self, law: DistributionSpec, p) -> Fraction | float:
        """Product of the per-layer collision factors along the sequence."""
        out = Fraction(1) if isinstance(p, Fraction) else 1.0
        for a, b in zip(self.tuples, self.tuples[1:]):
            out *= layer_factor(a, b, law, p)
        return out


def layer_factor(
    v_prev: VertexTuple, v_next: VertexTuple, law: DistributionSpec, p
) -> Fraction | float:
    """Per-layer collision factor for a pair of adjacent vertex tuples.

    weight(2m) * count_{2k}(2m) / count_k(m) * p**(distinct(next) - k) with m
    the edge multiplicity traced by the tuple pair.  Exact when p is rational.
    """
    if len(v_prev) != len(v_next):
        raise ValueError("tuples must have equal length")
    k = len(v_next)
    m = EdgeMultiplicity.from_tuples(v_prev.values, v_next.values)
    ratio = Fraction(multiplicity_count(m.doubled(), 2 * k), multiplicity_count(m, k))
    value = edge_weight(m.doubled(), law) * ratio
    exponent = v_next.unique_count - k
    if isinstance(p, Fraction):
        return value * p**exponent
    return float(value) * float(p) ** exponent


# ---------------------------------------------------------------------------
# partition-class transfer engine (exact_moment)
# ---------------------------------------------------------------------------


def _class_factor(meet: Partition, tau: Partition, law: DistributionSpec, p: Fraction, k: int) -> Fraction:
    """Collision factor as a function of equivalence classes only.

    The layer factor is invariant under separate relabelings of the two
    vertex sets, so it only depends on the partition of the slots by the next
    tuple's values (tau) and on the common refinement with the previous
    tuple's partition (meet).
    """
    containing: dict[int, int] = {}
    for idx, block in enumerate(tau):
        for el in block:
            containing[el] = idx
    sub_sizes: dict[int, list[int]] = {idx: [] for idx in range(len(tau))}
    for block in meet:
        sub_sizes[containing[block[0]]].append(len(block))
    out = Fraction(1)
    for idx, block in enumerate(tau):
        sizes = sub_sizes[idx]
        out *= Fraction(multinomial(2 * s for s in sizes), multinomial(sizes))
        for s in sizes:
            out *= law.moment(2 * s)
    return out * p ** (len(tau) - k)


@lru_cache(maxsize=None)
def _partition_transfer(law: DistributionSpec, p: Fraction, k: int):
    """Transfer matrix over partitions, without the width-dependent counts."""
    parts = set_partitions(k)
    return tuple(
        tuple(_class_factor(partition_meet(sigma, tau), tau, law, p, k) for tau in parts)
        for sigma in parts
    )


def _initial_masses(k: int, power_sums) -> list:
    """Total squared-input mass carried by each slot partition.

    ``power_sums[m]`` is the sum over coordinates of squares**m.  For a
    partition with block sizes (s_1..s_r) the mass is the sum over tuples of
    r distinct coordinates of the matching product of powers, computed by
    Moebius inversion over partitions of the blocks.
    """
    masses = []
    for sigma in set_partitions(k):
        sizes = [len(b) for b in sigma]
        r = len(sizes)
        total = 0
        for rho in set_partitions(r):
            term = 1
            for merged in rho:
                weight = sum(sizes[i] for i in merged)
                sign = -1 if (len(merged) % 2 == 0) else 1
                term *= sign * math.factorial(len(merged) - 1) * power_sums[weight]
            total = total + term
        masses.append(total)
    return masses


def _exact_power_sums(u: UnitVector, k: int):
    if u.squares is not None:
        return [None] + [
            sum((s**m for s in u.squares), Fraction(0)) for m in range(1, k + 1)
        ]
    sq = u.coords * u.coords
    return [None] + [float(np.sum(sq**m)) for m in range(1, k + 1)]


def _moment_preflight(config: EnsembleConfig, u: UnitVector, k: int, k_cap: int):
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    if u.dim != config.widths[0]:
        raise DimensionMismatch(
            f"u has dim {u.dim}, architecture starts at {config.widths[0]}"
        )
    if k > k_cap:
        raise BudgetExceeded(k, k_cap, what=f"moment order k={k} (cap {k_cap})")
    if math.comb(k, 2) >= min(config.architecture.inner_widths):
        warnings.warn(
            f"k={k} has comb(k,2)={math.comb(k, 2)} >= min width "
            f"{min(config.architecture.inner_widths)}; the log-normal moment "
            "prediction is unreliable here (the exact value is still exact)",
            CollisionRegimeWarning,
            stacklevel=3,
        )


def exact_moment(
    config: EnsembleConfig,
    u: UnitVector,
    k: int,
    method: str = "auto",
    budget: int = DEFAULT_BUDGET,
    k_cap: int = DEFAULT_K_CAP,
) -> Fraction | float:
    """k-th moment of the normalized squared norm of the product applied to u.

    Returns an exact Fraction when the squared coordinates of u are known
    exactly (entry-law moments and the mask probability always are); a float
    otherwise.

    method "partitions" (default) contracts over slot partitions per layer,
    cost ~ depth * Bell(k)^2.  method "enumerate" sums the raw tuple formula,
    cost ~ prod n_i^k; it exists as the directly-faithful reference route.
    """
    _moment_preflight(config, u, k, k_cap)
    if method == "auto":
        method = "partitions"
    if method == "partitions":
        cost = config.architecture.depth * len(set_partitions(k)) ** 2
        if cost > budget:
            raise BudgetExceeded(cost, budget, what="partition contraction")
        return _partition_moment(config, u, k)
    if method == "enumerate":
        cost = math.prod(n**k for n in config.widths)
        if cost > budget:
            raise BudgetExceeded(cost, budget, what="tuple enumeration")
        return _enumerate_moment(config, u, k)
    raise ValueError(f"unknown method {method!r}")


def _partition_moment(config: EnsembleConfig, u: UnitVector, k: int):
    parts = set_partitions(k)
    transfer = _partition_transfer(config.entry_law, config.p, k)
    exact = u.squares is not None
    power_sums = _exact_power_sums(u, k)
    vec = _initial_masses(k, power_sums)
    if not exact:
        transfer = tuple(tuple(float(x) for x in row) for row in transfer)
    for n in config.architecture.inner_widths:
        counts = [falling_factorial(n, len(tau)) for tau in parts]
        if exact:
            vec = [
                counts[t] * sum(vec[s] * transfer[s][t] for s in range(len(parts)))
                for t in range(len(parts))
            ]
        else:
            vec = [
                counts[t]
                * math.fsum(vec[s] * transfer[s][t] for s in range(len(parts)))
                for t in range(len(parts))
            ]
    total = sum(vec) if exact else math.fsum(vec)
    norm = math.prod(n**k for n in config.architecture.inner_widths)
    if exact:
        return total / norm
    return total / float(norm)


def _enumerate_moment(config: EnsembleConfig, u: UnitVector, k: int):
    widths = config.widths
    exact = u.squares is not None
    p = config.p if exact else config.p_float
    squares = (
        list(u.squares) if exact else [float(c) * float(c) for c in u.coords]
    )
    spaces = [
        [VertexTuple(v) for v in itertools.product(range(n), repeat=k)]
        for n in widths
    ]
    depth = config.architecture.depth
    total = Fraction(0)
    # Kahan compensation for the float route
    fsum = 0.0
    comp = 0.0
    stack = []
    for v0 in spaces[0]:
        mass = math.prod(squares[a] for a in v0.values)
        if mass != 0:
            stack.append((1, v0, mass))
    while stack:
        i, prev, weight = stack.pop()
        if i > depth:
            if exact:
                total += weight
            else:
                y = weight - comp
                t = fsum + y
                comp = (t - fsum) - y
                fsum = t
            continue
        for vnext in spaces[i]:
            f = layer_factor(prev, vnext, config.entry_law, p)
            if f != 0:
                stack.append((i + 1, vnext, weight * f))
    norm = math.prod(n**k for n in config.architecture.inner_widths)
    return total / norm if exact else fsum / float(norm)


def theory_moment(beta, k: int) -> float:
    """Leading-order log-normal prediction exp(comb(k,2) * beta)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    value = beta.beta if isinstance(beta, BetaParams) else float(beta)
    return math.exp(math.comb(k, 2) * value)


# ---------------------------------------------------------------------------
# brute-force oracles (no k-tuple collapse)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _tuple_space(n: int, ell: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.product(range(n), repeat=ell))


@lru_cache(maxsize=None)
def _bf_transfer(n_prev: int, n_next: int, law: DistributionSpec, p: Fraction, k: int):
    """Layer transfer over raw 2k-tuples, scaled to integers when possible.

    Entry for (x, y): weight(m_{x,y}) * a^{#y} * b^{2k-#y} with p = a/b; the
    true factor is recovered dividing by (a*b)^k per layer.  Returns the
    matrix and the flag saying whether entries are exact ints.
    """
    a, b = p.numerator, p.denominator
    xs = _tuple_space(n_prev, 2 * k)
    ys = _tuple_space(n_next, 2 * k)
    uniq = [len(set(y)) for y in ys]
    law_moments = {}
    rows = []
    integral = True
    for x in xs:
        row = []
        for j, y in enumerate(ys):
            counts: dict[tuple[int, int], int] = {}
            for e in zip(x, y):
                counts[e] = counts.get(e, 0) + 1
            wt = Fraction(1)
            for c in counts.values():
                if c % 2 == 1:
                    wt = Fraction(0)
                    break
                if c not in law_moments:
                    law_moments[c] = law.moment(c)
                wt *= law_moments[c]
            val = wt * a ** uniq[j] * b ** (2 * k - uniq[j])
            if val.denominator != 1:
                integral = False
            row.append(val)
        rows.append(row)
    if integral:
        rows = [[int(v) for v in row] for row in rows]
    return tuple(tuple(row) for row in rows), integral


def _bf_initial_masses(u: UnitVector, k: int):
    """Signed input mass of each raw 2k-tuple of starting vertices.

    In exact mode, tuples visiting any coordinate an odd number of times are
    dropped outright: every even-multiplicity continuation forces even visit
    counts at the start, so such tuples contribute nothing.  That keeps the
    masses inside the field generated by the squared coordinates.
    """
    n0 = u.dim
    tuples = _tuple_space(n0, 2 * k)
    if u.squares is not None:
        masses = []
        for t in tuples:
            counts: dict[int, int] = {}
            for el in t:
                counts[el] = counts.get(el, 0) + 1
            if any(c % 2 for c in counts.values()):
                masses.append(Fraction(0))
                continue
            mass = Fraction(1)
            for el, c in counts.items():
                mass *= u.squares[el] ** (c // 2)
            masses.append(mass)
        return masses, True
    coords = [float(c) for c in u.coords]
    return [math.prod(coords[el] for el in t) for t in tuples], False


def brute_force_moment(
    config: EnsembleConfig,
    u: UnitVector,
    k: int,
    method: str = "paths",
    budget: int = DEFAULT_BUDGET,
    k_cap: int = DEFAULT_K_CAP,
) -> Fraction | float:
    """k-th normalized moment without the k-tuple path collapse.

    method "paths": layerwise sum over raw 2k-tuples with entry-law moment
    weights and mask-probability powers (cost ~ sum (n_{i-1} n_i)^{2k}).
    method "assignments": full enumeration of weight/mask realizations,
    available for discrete laws on tiny instances.
    """
    _moment_preflight(config, u, k, k_cap)
    if method == "paths":
        cost = sum(
            (config.widths[i - 1] * config.widths[i]) ** (2 * k)
            for i in range(1, config.architecture.depth + 1)
        )
        if cost > budget:
            raise BudgetExceeded(cost, budget, what="raw path summation")
        return _bf_paths_moment(config, u, k)
    if method == "assignments":
        return _assignment_moment(config, u, k, budget)
    raise ValueError(f"unknown method {method!r}")


def _bf_paths_moment(config: EnsembleConfig, u: UnitVector, k: int):
    widths = config.widths
    d = config.architecture.depth
    masses, exact = _bf_initial_masses(u, k)
    scale = Fraction(1)
    if exact:
        denom = math.lcm(*(m.denominator for m in masses)) if masses else 1
        vec = [int(m * denom) for m in masses]
        scale /= denom
    else:
        vec = list(masses)
    for i in range(1, d + 1):
        transfer, integral = _bf_transfer(widths[i - 1], widths[i], config.entry_law, config.p, k)
        if exact and not integral:
            vec = [Fraction(v) for v in vec]
        nxt_len = len(transfer[0])
        if exact:
            nxt = [0] * nxt_len
            for xi, vx in enumerate(vec):
                if vx == 0:
                    continue
                row = transfer[xi]
                for yi in range(nxt_len):
                    if row[yi]:
                        nxt[yi] += vx * row[yi]
            vec = nxt
        else:
            tf = [[float(v) for v in row] for row in transfer]
            vec = [
                math.fsum(vec[xi] * tf[xi][yi] for xi in range(len(vec)))
                for yi in range(nxt_len)
            ]
        scale /= (config.p.numerator * config.p.denominator) ** k
    # pair the path endpoints: only tuples of the form (v1,v1,...,vk,vk) count
    nd = widths[d]
    ys = _tuple_space(nd, 2 * k)
    index = {y: i for i, y in enumerate(ys)}
    paired_indices = [
        index[tuple(itertools.chain.from_iterable((v, v) for v in vtuple))]
        for vtuple in itertools.product(range(nd), repeat=k)
    ]
    norm = math.prod(n**k for n in config.architecture.inner_widths)
    if exact:
        total = sum(vec[i] for i in paired_indices)
        return Fraction(total) * scale / norm
    total = math.fsum(vec[i] for i in paired_indices)
    return total * float(scale) / float(norm)


def _assignment_moment(config: EnsembleConfig, u: UnitVector, k: int, budget: int):
    """Average the norm power over every weight and mask realization.

    Exact for discrete entry laws when the input is a basis or uniform
    vector (the norm of the unnormalized integer product is then rational).
    """
    law = config.entry_law
    if law.atomless:
        raise ValueError("assignment enumeration needs a discrete entry law")
    pairs = law.support_pairs()
    widths = config.widths
    d = config.architecture.depth
    n_entries = sum(widths[i] * widths[i - 1] for i in range(1, d + 1))
    n_mask = sum(widths[1:]) if config.p != 1 else 0
    cost = len(pairs) ** n_entries * 2**n_mask
    if cost > budget:
        raise BudgetExceeded(cost, budget, what="assignment enumeration")

    exact = (
        u.squares is not None
        and bool(np.all(u.coords >= 0.0))
        and len({s for s in u.squares if s != 0}) == 1
    )
    if exact:
        # uniform: work with the all-ones vector and divide by n0^k later;
        # basis: indicator vector.  Both keep the product integer-valued
        # (up to the law's denominators).
        nonzero = [i for i, s in enumerate(u.squares) if s != 0]
        base_vec = [Fraction(1) if i in set(nonzero) else Fraction(0) for i in range(widths[0])]
        u_scale = u.squares[nonzero[0]]  # squared coordinate value
    else:
        base_vec = [float(c) for c in u.coords]
        u_scale = 1.0

    probs = dict(pairs)
    support = [v for v, _ in pairs]
    p = config.p

    mask_patterns: list[tuple[tuple[int, ...], Fraction]] = []
    if config.p == 1:
        mask_patterns.append((tuple([1] * sum(widths[1:])), Fraction(1)))
    else:
        for bits in itertools.product((0, 1), repeat=sum(widths[1:])):
            ones = sum(bits)
            prob = p**ones * (1 - p) ** (len(bits) - ones)
            mask_patterns.append((bits, prob))

    if exact:
        norm_factors = math.prod(
            (p * widths[i - 1] for i in range(1, d + 1)), start=Fraction(1)
        )
        z_scale = Fraction(widths[0], widths[d]) * u_scale / norm_factors
    else:
        norm_factors = math.prod(float(p) * widths[i - 1] for i in range(1, d + 1))
        z_scale = widths[0] / widths[d] * u_scale / norm_factors

    total = Fraction(0) if exact else 0.0
    for entries in itertools.product(support, repeat=n_entries):
        w_prob = math.prod(probs[e] for e in entries)
        mats = []
        pos = 0
        for i in range(1, d + 1):
            rows = []
            for _ in range(widths[i]):
                rows.append(entries[pos : pos + widths[i - 1]])
                pos += widths[i - 1]
            mats.append(rows)
        for bits, m_prob in mask_patterns:
            vec = base_vec
            off = 0
            for i in range(1, d + 1):
                rows = mats[i - 1]
                nxt = []
                for r in range(widths[i]):
                    if bits[off + r]:
                        nxt.append(sum(rows[r][c] * vec[c] for c in range(widths[i - 1])))
                    else:
                        nxt.append(0 * vec[0])
                vec = nxt
                off += widths[i]
            sqnorm = sum(x * x for x in vec)
            if exact:
                total += w_prob * m_prob * (z_scale * sqnorm) ** k
            else:
                total += float(w_prob) * float(m_prob) * (z_scale * float(sqnorm)) ** k
    return total


# ---------------------------------------------------------------------------
# path-count verification
# ---------------------------------------------------------------------------


def verify_path_count(
    edge_sequence, v_end, ell: int, budget: int = 10**7
) -> tuple[int, int]:
    """Count ordered paths with a given edge sequence and endpoint, two ways.

    Returns (enumerated, formula) where the formula side is the product of
    per-layer multinomial counts; callers assert equality.  The enumeration
    walks right-to-left over candidate tuples and never uses the formula.
    """
    edges = list(edge_sequence)
    if not edges:
        raise ValueError("edge sequence must be nonempty")
    v_end = tuple(v_end)
    for m in edges:
        if m.total != ell:
            raise ValueError("each layer must carry exactly ell edges")
    for prev, nxt in zip(edges, edges[1:]):
        if sorted(prev.right_multiset()) != sorted(nxt.left_multiset()):
            raise ValueError("adjacent layers have incompatible endpoints")
    if sorted(edges[-1].right_multiset()) != sorted(v_end):
        raise ValueError("endpoint tuple does not match the last layer")

    cost = math.prod(m.n_left**ell for m in edges)
    if cost > budget:
        raise BudgetExceeded(cost, budget, what="path enumeration")

    formula = math.prod(multiplicity_count(m, ell) for m in edges)

    def count_left(layer: int, right: tuple[int, ...]) -> int:
        if layer < 0:
            return 1
        m = edges[layer]
        total = 0
        for cand in itertools.product(range(m.n_left), repeat=ell):
            if EdgeMultiplicity.from_tuples(cand, right, m.n_left, m.n_right) == m:
                total += count_left(layer - 1, cand)
        return total

    enumerated = count_left(len(edges) - 1, v_end)
    return enumerated, formula
