"""Masked random-matrix ensembles and layer-by-layer propagation.

The model: a product of depth-many random matrices, each the composition of a
diagonal Bernoulli(p) mask and an i.i.d. matrix with entries from a symmetric
mean-0 variance-1 law, normalized so the squared norm of the propagated vector
has expectation one at every layer.

Propagation keeps a unit vector plus a log accumulator instead of the raw
product, so arbitrarily deep products never overflow or underflow.  A layer
whose output vanishes (an all-zero mask, or exact cancellation for discrete
laws) sets a ``dead`` flag; the log of zero is never taken.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .distributions import DistributionSpec
from .errors import DimensionMismatch

_UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Architecture:
    """Layer widths (n_0, ..., n_d); depth is the number of matrix factors."""

    widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(n) for n in self.widths))
        if len(self.widths) < 2:
            raise ValueError("architecture needs at least widths (n_0, n_1)")
        if any(n < 1 for n in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def inner_widths(self) -> tuple[int, ...]:
        """Widths n_1..n_d of the layer outputs."""
        return self.widths[1:]


@dataclass(frozen=True)
class EnsembleConfig:
    """Architecture plus mask probability and entry law.

    ``p`` is kept as an exact Fraction so the moment engine can stay rational;
    use :meth:`p_float` for numerics.  ``atomless`` mirrors the entry law.
    """

    architecture: Architecture
    p: Fraction
    entry_law: DistributionSpec

    def __post_init__(self):
        object.__setattr__(self, "p", Fraction(self.p))
        if not 0 < self.p <= 1:
            raise ValueError(f"mask probability must be in (0, 1], got {self.p}")

    @property
    def p_float(self) -> float:
        return float(self.p)

    @property
    def atomless(self) -> bool:
        return self.entry_law.atomless

    @property
    def widths(self) -> tuple[int, ...]:
        return self.architecture.widths

    def fingerprint(self) -> str:
        text = f"widths={self.widths};p={self.p};law={self.entry_law.label}"
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def make_config(widths, p, entry_law: DistributionSpec) -> EnsembleConfig:
    return EnsembleConfig(Architecture(tuple(widths)), Fraction(p), entry_law)


@dataclass(frozen=True)
class UnitVector:
    """A unit vector with cached norms and, when known, exact squared coords.

    ``squares`` holds exact squared coordinates (used by the rational moment
    engine); it is populated by the ``basis``/``uniform`` constructors and by
    ``from_squares``, and left None for arbitrary float input.
    """

    coords: np.ndarray
    squares: tuple[Fraction, ...] | None = None
    label: str = "custom"

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 1 or coords.size == 0:
            raise ValueError("unit vector must be a nonempty 1-d array")
        nrm = float(np.sqrt(coords @ coords))
        if abs(nrm - 1.0) > _UNIT_NORM_TOL:
            raise ValueError(f"vector norm is {nrm}, expected 1 within {_UNIT_NORM_TOL}")
        if self.squares is not None:
            if len(self.squares) != coords.size:
                raise ValueError("squares length does not match coordinates")
            if sum(self.squares) != 1:
                raise ValueError("exact squared coordinates must sum to 1")

    @property
    def dim(self) -> int:
        return int(self.coords.size)

    @property
    def norm_l2(self) -> float:
        return float(np.sqrt(self.coords @ self.coords))

    @property
    def l4_norm_4(self) -> float:
        """Fourth power of the l4 norm, sum of coords**4."""
        sq = self.coords * self.coords
        return float(sq @ sq)

    @classmethod
    def basis(cls, dim: int, index: int = 0) -> "UnitVector":
        coords = np.zeros(dim)
        coords[index] = 1.0
        squares = tuple(
            Fraction(1) if i == index else Fraction(0) for i in range(dim)
        )
        return cls(coords, squares, label=f"e{index + 1}")

    @classmethod
    def uniform(cls, dim: int) -> "UnitVector":
        coords = np.full(dim, dim**-0.5)
        squares = (Fraction(1, dim),) * dim
        return cls(coords, squares, label="uniform")

    @classmethod
    def from_coords(cls, coords) -> "UnitVector":
        return cls(np.asarray(coords, dtype=np.float64))

    @classmethod
    def from_squares(cls, squares) -> "UnitVector":
        """Build a nonnegative unit vector from exact squared coordinates."""
        sq = tuple(Fraction(s) for s in squares)
        coords = np.sqrt(np.array([float(s) for s in sq]))
        return cls(coords, sq)


@dataclass(frozen=True)
class BetaParams:
    """Variance parameter of the limiting normal law for the log squared norm.

    ``beta = term_width + term_fourth`` exactly; the limiting law for the log
    of the normalized squared norm is Normal(-beta/2, beta).
    """

    beta: float
    term_width: float
    term_fourth: float

    @property
    def predicted_mean(self) -> float:
        return -0.5 * self.beta

    @property
    def predicted_variance(self) -> float:
        return self.beta


@dataclass(frozen=True)
class LayerState:
    """Propagation state: current unit direction plus accumulated log norm."""

    unit: np.ndarray
    log_sq_norm: float
    index: int
    dead: bool = False

    def __post_init__(self):
        unit = np.array(self.unit, dtype=np.float64)
        unit.setflags(write=False)
        object.__setattr__(self, "unit", unit)


def initial_state(u: UnitVector) -> LayerState:
    return LayerState(unit=u.coords.copy(), log_sq_norm=0.0, index=0)


def compute_beta(config: EnsembleConfig, u: UnitVector) -> BetaParams:
    """Closed-form variance parameter for a config and starting vector."""
    widths = config.widths
    if u.dim != widths[0]:
        raise DimensionMismatch(f"u has dim {u.dim}, architecture starts at {widths[0]}")
    p = config.p_float
    term_width = (3.0 / p - 1.0) * sum(1.0 / n for n in widths[1:])
    mu4 = config.entry_law.mu4
    term_fourth = (mu4 - 3.0) / (p * widths[1]) * u.l4_norm_4
    return BetaParams(term_width + term_fourth, term_width, term_fourth)


def draw_layer(config: EnsembleConfig, i: int, rng: np.random.Generator):
    """Sample one layer's mask vector and weight matrix.

    Fixed draw order: the mask uniforms first, then the full weight matrix in
    row-major order.  The full matrix is drawn even for masked rows, so stream
    consumption never depends on the mask outcome.
    """
    widths = config.widths
    n, m = widths[i], widths[i - 1]
    mask = rng.random(n) < config.p_float
    weights = config.entry_law.sample(rng, (n, m))
    return mask, weights


def propagate_layer(
    state: LayerState, i: int, config: EnsembleConfig, rng: np.random.Generator
) -> LayerState:
    """Apply layer i: mask, multiply, renormalize, accumulate the log norm."""
    if state.dead:
        raise ValueError("cannot propagate a dead state")
    if not 1 <= i <= config.architecture.depth:
        raise ValueError(f"layer index {i} out of range")
    mask, weights = draw_layer(config, i, rng)
    n = config.widths[i]
    v = weights @ state.unit
    v *= mask
    # dividing the squared norm (not the vector) by p*n keeps exactly
    # representable norms exact, e.g. the unit-increment ensembles
    raw_sq = float(v @ v)
    if raw_sq == 0.0:
        return LayerState(unit=v, log_sq_norm=state.log_sq_norm, index=i, dead=True)
    return LayerState(
        unit=v / math.sqrt(raw_sq),
        log_sq_norm=state.log_sq_norm + math.log(raw_sq / (config.p_float * n)),
        index=i,
    )


def sample_log_norm(
    config: EnsembleConfig, u: UnitVector, rng: np.random.Generator
) -> float | None:
    """One realization of the log normalized squared norm of the product.

    Returns None when some layer annihilates the vector (the zero event);
    otherwise the accumulated log, which equals the log of
    (n_0/n_d) * squared norm of the full product applied to u.
    """
    state = initial_state(u)
    for i in range(1, config.architecture.depth + 1):
        state = propagate_layer(state, i, config, rng)
        if state.dead:
            return None
    return state.log_sq_norm


def predict_layer_variance(u_current, n_next: int, p: float, mu4: float) -> float:
    """Variance of the one-layer normalized squared-norm ratio at a fixed input.

    Matches the closed form (3/p - 1)/n + (mu4 - 3)/(p n) * ||u||_4^4/||u||_2^4.
    """
    coords = u_current.coords if isinstance(u_current, UnitVector) else np.asarray(u_current, dtype=np.float64)
    sq = coords @ coords
    if sq == 0.0:
        raise ValueError("current vector must be nonzero")
    quart = float((coords * coords) @ (coords * coords)) / float(sq) ** 2
    p = float(p)
    return (3.0 / p - 1.0) / n_next + (mu4 - 3.0) / (p * n_next) * quart


@dataclass(frozen=True)
class ZeroEventEstimate:
    """Probability that some layer's output vanishes.

    For atom-bearing entry laws exact cancellation can also kill the vector,
    so the all-zero-mask computation is only a lower bound; ``lower_bound_only``
    flags that case.
    """

    probability: float
    lower_bound_only: bool


def zero_event_probability(config: EnsembleConfig) -> ZeroEventEstimate:
    """Probability of the zero event: 1 - prod_j(1 - (1-p)^{n_j}).

    Each layer mask is all-zero with probability (1-p)^{n_j}; for atomless
    entry laws this is the only way the propagated vector can vanish.
    """
    q = 1.0 - config.p_float
    surviving = 1.0
    for n in config.widths[1:]:
        surviving *= 1.0 - q**n
    return ZeroEventEstimate(1.0 - surviving, lower_bound_only=not config.atomless)


@dataclass(frozen=True)
class ErrorBudget:
    """Raw magnitudes of the normal-approximation error terms.

    The unknown absolute constants are deliberately not applied; beta-dependent
    terms are +inf when beta is 0.  ``mask_term`` uses the all-zero-mask
    probability (1-p)^{n_i} per layer.
    """

    sum_inv_sq_widths: float
    linear_term: float
    fifth_root_term: float
    sqrt_term: float
    mask_term: float
    beta: float


def error_budget(config: EnsembleConfig, u: UnitVector) -> ErrorBudget:
    beta = compute_beta(config, u).beta
    s = sum(1.0 / n**2 for n in config.widths[1:])
    q = 1.0 - config.p_float
    mask_term = sum(q**n for n in config.widths[1:])
    if beta <= 0.0:
        linear = fifth = root = math.inf
    else:
        linear = s / beta
        fifth = (s / beta**2) ** 0.2
        root = math.sqrt(s / math.sqrt(beta))
    return ErrorBudget(
        sum_inv_sq_widths=s,
        linear_term=linear,
        fifth_root_term=fifth,
        sqrt_term=root,
        mask_term=mask_term,
        beta=beta,
    )
