"""Simulation of the turn-selling tug-of-war game with guide-field strategies."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dpp import GameSpec, Variant
from .grid import ConfigurationError, GridDomain, ball


class Rule(enum.Enum):
    GREEDY_MAX = "greedy-max"
    GREEDY_MIN = "greedy-min"
    PULL = "pull"


@dataclass(frozen=True, eq=False)
class Strategy:
    """Markov strategy on lattice nodes.

    ``GREEDY_MAX``/``GREEDY_MIN`` move to the ball node with the largest /
    smallest guide value (ties to the lowest node index); ``PULL`` moves to
    the ball node closest to ``target``. ``sells`` enables the selling
    decision for Player II (only used at D-nodes of a selling variant).
    """

    rule: Rule
    guide: np.ndarray | None = None
    target: tuple | None = None
    sells: bool = False


def greedy_pair(guide: np.ndarray) -> tuple[Strategy, Strategy]:
    return Strategy(Rule.GREEDY_MAX, guide=guide), Strategy(Rule.GREEDY_MIN, guide=guide, sells=True)


@dataclass
class GameTrace:
    states: list
    sells: int
    payoff: float
    steps: int
    capped: bool = False
    terminal_value: float = float("nan")


class _Tables:
    """Per-node move and sell tables for Markov strategies."""

    def __init__(self, grid: GridDomain, spec: GameSpec, s1: Strategy, s2: Strategy):
        self.grid = grid
        self.spec = spec
        self.nodes = np.flatnonzero(grid.interior_mask.reshape(-1))
        self.balls = {int(x): sorted(ball(grid, int(x), spec.eps)) for x in self.nodes}
        self.move1 = {x: self._choose(s1, x) for x in self.balls}
        self.move2 = {x: self._choose(s2, x) for x in self.balls}
        self.sell = {x: self._sells(s2, x) for x in self.balls}

    def _choose(self, s: Strategy, x: int) -> int:
        cand = self.balls[x]
        if s.rule is Rule.PULL:
            pts = self.grid.coords.reshape(-1, self.grid.dim)[cand]
            d = np.linalg.norm(pts - np.atleast_1d(np.asarray(s.target, float)), axis=1)
            return cand[int(np.argmin(d))]
        vals = np.asarray(s.guide, float).reshape(-1)[cand]
        pick = np.argmax(vals) if s.rule is Rule.GREEDY_MAX else np.argmin(vals)
        return cand[int(pick)]

    def _sells(self, s: Strategy, x: int) -> bool:
        if not s.sells or self.spec.variant is Variant.TUG_OF_WAR:
            return False
        if self.spec.variant is Variant.D_GAME and not self.grid.d_mask.reshape(-1)[x]:
            return False
        if s.guide is None:
            return False
        vals = np.asarray(s.guide, float).reshape(-1)[self.balls[x]]
        hi, lo = float(vals.max()), float(vals.min())
        return hi - self.spec.sell_price < 0.5 * (hi + lo)


def _play(tables: _Tables, x0: int, rng: np.random.Generator, step_cap: int, floor: np.ndarray | None):
    grid = tables.grid
    interior = grid.interior_mask.reshape(-1)
    payoff = np.asarray(tables.spec.payoff, float).reshape(-1)
    x = int(x0)
    states = [x]
    sells = 0
    steps = 0
    while interior[x]:
        if steps >= step_cap:
            surrogate = float(floor.reshape(-1)[x]) if floor is not None else float("nan")
            return GameTrace(states, sells, surrogate - tables.spec.sell_price * sells, steps, True, surrogate)
        if tables.sell[x]:
            sells += 1
            x = tables.move1[x]
        elif rng.random() < 0.5:
            x = tables.move1[x]
        else:
            x = tables.move2[x]
        states.append(x)
        steps += 1
    final = float(payoff[x])
    return GameTrace(states, sells, final - tables.spec.sell_price * sells, steps, False, final)


def play(
    grid: GridDomain,
    spec: GameSpec,
    s1: Strategy,
    s2: Strategy,
    x0: int,
    seed: int,
    step_cap: int = 10**5,
) -> GameTrace:
    """Simulate one game from ``x0``.

    At a D-node Player II first decides whether to sell (then Player I
    moves and the price is deducted); otherwise a fair coin picks the mover.
    A trace reaching ``step_cap`` is flagged ``capped`` and scored with the
    guide value at the cap state.
    """
    if not grid.interior_mask.reshape(-1)[x0]:
        raise ConfigurationError("starting node must be interior")
    if step_cap <= 0:
        raise ConfigurationError("step_cap must be positive")
    tables = _Tables(grid, spec, s1, s2)
    return _play(tables, x0, np.random.default_rng([seed, 0]), step_cap, s1.guide)


@dataclass
class Estimate:
    mean: float
    half_width_95: float
    n: int
    n_capped: int
    reliable: bool
    details: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.mean, self.half_width_95))


def estimate_value(
    grid: GridDomain,
    spec: GameSpec,
    guide: np.ndarray,
    x0: int,
    n: int,
    seed: int,
    step_cap: int = 10**5,
) -> Estimate:
    """Mean payoff of ``n`` greedy-vs-greedy plays with a 95% normal half-width.

    Trace ``i`` uses the generator seeded with ``(seed, i)``; sums use
    ``math.fsum`` so the result does not depend on the order of traces.
    """
    if n < 100:
        raise ConfigurationError("estimate_value needs n >= 100")
    s1, s2 = greedy_pair(guide)
    tables = _Tables(grid, spec, s1, s2)
    payoffs = []
    capped = 0
    sells = 0
    for i in range(n):
        tr = _play(tables, x0, np.random.default_rng([seed, i]), step_cap, guide)
        payoffs.append(tr.payoff)
        capped += tr.capped
        sells += tr.sells
    mean = math.fsum(payoffs) / n
    var = math.fsum((p - mean) ** 2 for p in payoffs) / (n - 1)
    hw = 1.959963984540054 * math.sqrt(var / n)
    return Estimate(
        mean=mean,
        half_width_95=hw,
        n=n,
        n_capped=capped,
        reliable=capped <= 0.01 * n,
        details={"mean_sells": sells / n},
    )
