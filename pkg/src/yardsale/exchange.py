"""Two-party exchange rules and the model variants that mix them.

The stake computations are compiled with numba so the same code runs inside
the simulation loop (see :mod:`yardsale.engine`) and behind the validated
Python wrappers below.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

# Integer codes shared with the compiled loop.
CODE_PURE_YS = 0
CODE_PURE_TF = 1
CODE_MIXED = 2
CODE_SPLIT = 3
CODE_CHOICE = 4

RULE_SKIP = -1


class Rule(enum.IntEnum):
    YS = 0
    TF = 1


class InvariantViolation(RuntimeError):
    """A kernel produced a stake larger than the loser's wealth."""


# ---------------------------------------------------------------------------
# Model definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PureYS:
    name = "pure_ys"


@dataclass(frozen=True)
class PureTF:
    name = "pure_tf"


@dataclass(frozen=True)
class MixedAgents:
    """YS economy in which the listed agents trade by TF (model A)."""

    tf_agents: tuple = (0,)
    name = "mixed_agents"

    def __post_init__(self):
        object.__setattr__(self, "tf_agents", tuple(sorted({int(k) for k in self.tf_agents})))
        if not self.tf_agents:
            raise ValueError("tf_agents must be non-empty")
        if self.tf_agents[0] < 0:
            raise ValueError("tf_agents must be non-negative indices")


@dataclass(frozen=True)
class SplitWealth:
    """Each agent stakes ``lambda_i`` of its wealth YS-style, the rest TF-style.

    ``lambdas`` is a scalar (homogeneous agents), an explicit per-agent
    sequence, or ``None`` for quenched uniform draws made once per replica.
    """

    lambdas: Union[float, tuple, None] = None
    split_mode: str = "coupled"
    name = "split_wealth"

    def __post_init__(self):
        if self.split_mode not in ("coupled", "independent"):
            raise ValueError(f"split_mode must be 'coupled' or 'independent', got {self.split_mode!r}")
        lam = self.lambdas
        if lam is None:
            return
        if np.ndim(lam) == 0:
            lam = float(lam)
            _check_unit("lambdas", np.array([lam]))
        else:
            lam = tuple(float(x) for x in lam)
            _check_unit("lambdas", np.array(lam))
        object.__setattr__(self, "lambdas", lam)


@dataclass(frozen=True)
class ProbabilisticChoice:
    """Each agent picks YS with probability ``p_i`` per trade (model C).

    ``ps=None`` means quenched uniform draws, one set per replica. On
    disagreement the trade falls back to YS or, with ``"skip"``, does not
    happen at all.
    """

    ps: Union[float, tuple, None] = None
    disagreement: str = "fallback_ys"
    name = "probabilistic_choice"

    def __post_init__(self):
        if self.disagreement not in ("fallback_ys", "skip"):
            raise ValueError(f"disagreement must be 'fallback_ys' or 'skip', got {self.disagreement!r}")
        ps = self.ps
        if ps is None:
            return
        if np.ndim(ps) == 0:
            ps = float(ps)
            _check_unit("ps", np.array([ps]))
        else:
            ps = tuple(float(x) for x in ps)
            _check_unit("ps", np.array(ps))
        object.__setattr__(self, "ps", ps)


ModelSpec = Union[PureYS, PureTF, MixedAgents, SplitWealth, ProbabilisticChoice]


def _check_unit(name, arr):
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class RealizedModel:
    """Flat arrays the compiled loop consumes; quenched values are fixed here."""

    code: int
    is_tf: np.ndarray
    lambdas: np.ndarray
    ps: np.ndarray
    skip_disagreement: bool = False
    independent_split: bool = False


def _per_agent(value, n, rng, label):
    if value is None:
        if rng is None:
            raise ValueError(f"quenched {label} need a random generator to be drawn")
        return rng.random(n)
    if np.ndim(value) == 0:
        return np.full(n, float(value))
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{label} has length {arr.shape[0]}, expected {n}")
    return arr.copy()


def realize(model: ModelSpec, n: int, rng: Optional[np.random.Generator] = None) -> RealizedModel:
    """Resolve a model definition into per-agent arrays for ``n`` agents.

    Quenched parameters left as ``None`` are drawn uniformly on [0, 1) from
    ``rng``.
    """
    empty = np.zeros(0)
    no_tf = np.zeros(0, dtype=np.bool_)
    if isinstance(model, PureYS):
        return RealizedModel(CODE_PURE_YS, no_tf, empty, empty)
    if isinstance(model, PureTF):
        return RealizedModel(CODE_PURE_TF, no_tf, empty, empty)
    if isinstance(model, MixedAgents):
        if model.tf_agents[-1] >= n:
            raise ValueError(f"tf_agents index {model.tf_agents[-1]} out of range for {n} agents")
        is_tf = np.zeros(n, dtype=np.bool_)
        is_tf[list(model.tf_agents)] = True
        return RealizedModel(CODE_MIXED, is_tf, empty, empty)
    if isinstance(model, SplitWealth):
        lam = _per_agent(model.lambdas, n, rng, "lambdas")
        return RealizedModel(CODE_SPLIT, no_tf, lam, empty,
                             independent_split=model.split_mode == "independent")
    if isinstance(model, ProbabilisticChoice):
        ps = _per_agent(model.ps, n, rng, "ps")
        return RealizedModel(CODE_CHOICE, no_tf, empty, ps,
                             skip_disagreement=model.disagreement == "skip")
    raise TypeError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# State and transactions
# ---------------------------------------------------------------------------


@dataclass
class WealthVector:
    """Agent wealths plus the conserved total they must sum to."""

    wealths: np.ndarray
    total: float = field(default=None)

    def __post_init__(self):
        self.wealths = np.asarray(self.wealths, dtype=np.float64)
        if self.total is None:
            self.total = float(self.wealths.sum())

    def __len__(self):
        return self.wealths.shape[0]

    def check(self, rtol: float = 1e-9):
        if np.any(self.wealths < 0.0):
            raise InvariantViolation(f"negative wealth {self.wealths.min()!r}")
        drift = abs(self.wealths.sum() - self.total)
        if drift > rtol * abs(self.total):
            raise InvariantViolation(f"total drifted by {drift!r} from {self.total!r}")


@dataclass(frozen=True)
class Transaction:
    i: int
    j: int
    alpha: float
    winner: int
    rule_draws: Optional[tuple] = None

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("a transaction needs two distinct agents")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if self.winner not in (self.i, self.j):
            raise ValueError("winner must be one of the two parties")

    @property
    def loser(self) -> int:
        return self.j if self.winner == self.i else self.i


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True, inline="always")
def _ys_stake(mi, mj, alpha):
    return alpha * min(mi, mj)


@njit(cache=True, nogil=True, inline="always")
def _tf_stake(m_loser, alpha):
    return alpha * m_loser


@njit(cache=True, nogil=True, inline="always")
def _split_stake(mi, mj, li, lj, alpha, loser_is_i):
    # (m - l*m) rather than (1 - l)*m keeps the l=0 and l=1 limits bit-exact.
    if loser_is_i:
        ml, ll = mi, li
    else:
        ml, ll = mj, lj
    return alpha * min(li * mi, lj * mj) + alpha * (ml - ll * ml)


@njit(cache=True, nogil=True, inline="always")
def _choose_rule(code, is_tf, ps, skip_disagreement, i, j, ui, uj):
    if code == CODE_PURE_YS:
        return 0
    if code == CODE_PURE_TF:
        return 1
    if code == CODE_MIXED:
        if is_tf[i] or is_tf[j]:
            return 1
        return 0
    # probabilistic choice: a draw below p selects YS
    ys_i = ui < ps[i]
    ys_j = uj < ps[j]
    if ys_i and ys_j:
        return 0
    if not ys_i and not ys_j:
        return 1
    if skip_disagreement:
        return RULE_SKIP
    return 0


@njit(cache=True, nogil=True, inline="always")
def _transfer(w, winner, loser, stake):
    if stake > w[loser]:
        raise RuntimeError("stake exceeds the loser's wealth")
    w[winner] += stake
    w[loser] -= stake


# ---------------------------------------------------------------------------
# Validated Python entry points
# ---------------------------------------------------------------------------


def _check_money(**kw):
    for k, v in kw.items():
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"{k} must be a non-negative amount, got {v!r}")


def _check_fraction(**kw):
    for k, v in kw.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{k} must lie in [0, 1], got {v!r}")


def ys_stake(m_i: float, m_j: float, alpha: float) -> float:
    """Yard-sale stake: a fraction ``alpha`` of the poorer party's wealth."""
    _check_money(m_i=m_i, m_j=m_j)
    _check_fraction(alpha=alpha)
    return float(_ys_stake(float(m_i), float(m_j), float(alpha)))


def tf_stake(m_loser: float, alpha: float) -> float:
    """Theft-and-fraud stake: a fraction ``alpha`` of the loser's wealth."""
    _check_money(m_loser=m_loser)
    _check_fraction(alpha=alpha)
    return float(_tf_stake(float(m_loser), float(alpha)))


def split_stake(m_i: float, m_j: float, lambda_i: float, lambda_j: float,
                alpha: float, loser: str) -> float:
    """Stake of a split transaction with one shared ``alpha`` and winner.

    YS on the parts ``lambda * m`` plus TF on the loser's remaining
    ``(1 - lambda) * m``. ``loser`` is ``"i"`` or ``"j"``.
    """
    _check_money(m_i=m_i, m_j=m_j)
    _check_fraction(lambda_i=lambda_i, lambda_j=lambda_j, alpha=alpha)
    if loser not in ("i", "j"):
        raise ValueError(f"loser must be 'i' or 'j', got {loser!r}")
    return float(_split_stake(float(m_i), float(m_j), float(lambda_i), float(lambda_j),
                              float(alpha), loser == "i"))


def choose_rule(model: ModelSpec, i: int, j: int, strategy_draws=(0.0, 0.0),
                n_agents: Optional[int] = None) -> Optional[Rule]:
    """Rule governing a trade between ``i`` and ``j``; ``None`` means skip.

    ``strategy_draws`` are the two uniform variates used by the
    probabilistic-choice model and ignored otherwise. Quenched ``ps`` must be
    given explicitly here.
    """
    if i == j:
        raise ValueError("a transaction needs two distinct agents")
    if isinstance(model, SplitWealth):
        raise TypeError("split-wealth trades are not routed through a single rule")
    ui, uj = strategy_draws
    if not (0.0 <= ui < 1.0 and 0.0 <= uj < 1.0):
        raise ValueError("strategy draws must lie in [0, 1)")
    n = n_agents if n_agents is not None else max(i, j) + 1
    if isinstance(model, MixedAgents):
        n = max(n, model.tf_agents[-1] + 1)
    if isinstance(model, ProbabilisticChoice) and model.ps is None:
        raise ValueError("choose_rule needs explicit ps")
    rm = realize(model, n)
    code = _choose_rule(rm.code, rm.is_tf, rm.ps, rm.skip_disagreement, i, j, ui, uj)
    return None if code == RULE_SKIP else Rule(code)


def apply_transaction(state: WealthVector, txn: Transaction, rule: Union[Rule, str] = None,
                      lambdas: Optional[Sequence[float]] = None) -> WealthVector:
    """Return a new state with ``txn`` applied under ``rule``.

    Pass ``lambdas`` instead of ``rule`` for a split-wealth transaction.
    """
    if (rule is None) == (lambdas is None):
        raise ValueError("give exactly one of rule or lambdas")
    w = state.wealths.copy()
    n = w.shape[0]
    if not (0 <= txn.i < n and 0 <= txn.j < n):
        raise ValueError("transaction indices out of range")
    loser = txn.loser
    if lambdas is not None:
        lam = np.asarray(lambdas, dtype=np.float64)
        stake = _split_stake(w[txn.i], w[txn.j], lam[txn.i], lam[txn.j], txn.alpha, loser == txn.i)
    elif Rule(rule) is Rule.YS:
        stake = _ys_stake(w[txn.i], w[txn.j], txn.alpha)
    else:
        stake = _tf_stake(w[loser], txn.alpha)
    if stake > w[loser]:
        raise InvariantViolation(f"stake {stake!r} exceeds loser wealth {w[loser]!r}")
    w[txn.winner] += stake
    w[loser] -= stake
    return WealthVector(w, state.total)
