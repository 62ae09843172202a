"""Evolutionary search for compact classifier expressions.

Populations of expression trees evolve by tournament selection with
subtree crossover and five mutation kinds, split across independent
islands that exchange their best individuals on a ring. Every improvement
at a complexity level is recorded in a hall of fame (the Pareto front of
loss against complexity), and model selection picks the lowest-loss entry
within the complexity budget, breaking ties toward the simpler model.

The per-sample loss for tagger training is the squared margin
(1 - y_hat*y)^2 with labels in {+1, -1}; a plain squared-error mode is
available for continuous targets. Losses are averaged over samples so runs
on different dataset sizes stay comparable.

Determinism contract: a fixed (seed, config, data) triple reproduces the
hall of fame exactly. Each island derives its own RNG stream from
(seed, island index) and islands are stepped in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SearchError
from .expr import (
    Binary,
    BinaryOp,
    ComplexityMap,
    Const,
    Expr,
    OperatorSet,
    Unary,
    UnaryOp,
    Var,
    check_constraints,
    complexity,
    count_nodes,
    eval_f64_batch,
    format_expr,
    get_node,
    iter_nodes,
    parse,
    replace_node,
)

__all__ = [
    "SearchConfig", "Candidate", "HallOfFame",
    "l2_margin_loss", "tagger_objective", "expression_loss",
    "mutate", "crossover", "optimize_constants", "random_expr",
    "evolve", "evolve_tagger", "select_model", "train_multiclass",
    "score_matrix",
]


def l2_margin_loss(y_hat: float, y: float) -> float:
    """Squared margin loss (1 - y_hat*y)^2 for labels y in {+1, -1}."""
    r = 1.0 - y_hat * y
    return r * r


@dataclass
class SearchConfig:
    operators: OperatorSet
    complexity_map: ComplexityMap = field(default_factory=ComplexityMap)
    c_max: int = 20
    population_size: int = 400
    generations: int = 100
    tournament_size: int = 5
    crossover_prob: float = 0.4
    # relative weights of the five mutation kinds
    w_node_replace: float = 2.0
    w_const_perturb: float = 2.0
    w_insert: float = 1.5
    w_delete: float = 1.0
    w_append_leaf: float = 1.0
    parsimony_tol: float = 0.0
    rng_seed: int = 0
    islands: int = 4
    elite_count: int = 2
    migration_count: int = 3
    migration_interval: int | None = None  # defaults to generations // 10
    const_opt_iters: int = 24
    loss: str = "l2_margin"  # or "mse"

    def __post_init__(self):
        if self.c_max < 3:
            raise ValueError("c_max must be at least 3")
        if not (self.population_size >= self.tournament_size >= 2):
            raise ValueError("need population_size >= tournament_size >= 2")
        if self.islands < 1:
            raise ValueError("need at least one island")


@dataclass(frozen=True)
class Candidate:
    expr: Expr
    loss: float
    complexity: int


class HallOfFame:
    """Best candidate seen at each complexity level."""

    def __init__(self):
        self.best: dict[int, Candidate] = {}

    def consider(self, cand: Candidate) -> bool:
        """Record the candidate if it beats the stored loss at its level."""
        if not math.isfinite(cand.loss):
            return False
        held = self.best.get(cand.complexity)
        if held is None or cand.loss < held.loss:
            self.best[cand.complexity] = cand
            return True
        return False

    def levels(self) -> list[int]:
        return sorted(self.best)

    def front(self) -> list[Candidate]:
        """Dominance-filtered entries in increasing complexity order."""
        out = []
        best_loss = math.inf
        for level in self.levels():
            cand = self.best[level]
            if cand.loss < best_loss:
                out.append(cand)
                best_loss = cand.loss
        return out

    def serialize(self) -> str:
        lines = [
            f"{c.complexity}\t{c.loss!r}\t{format_expr(c.expr)}"
            for c in (self.best[l] for l in self.levels())
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def deserialize(cls, text: str, n_features: int) -> "HallOfFame":
        hof = cls()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            level, loss, expression = line.split("\t")
            hof.best[int(level)] = Candidate(
                expr=parse(expression, n_features),
                loss=float(loss),
                complexity=int(level),
            )
        return hof


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def expression_loss(e: Expr, X: np.ndarray, y: np.ndarray, loss: str = "l2_margin") -> float:
    """Mean per-sample loss; non-finite predictions score infinitely bad."""
    preds = eval_f64_batch(e, X)
    if not np.all(np.isfinite(preds)):
        return math.inf
    if loss == "l2_margin":
        r = 1.0 - preds * y
        return float(np.mean(r * r))
    if loss == "mse":
        d = preds - y
        return float(np.mean(d * d))
    raise ValueError(f"unknown loss {loss!r}")


def tagger_objective(e: Expr, X: np.ndarray, y_f: np.ndarray) -> float:
    """Mean squared margin loss of a single tagger against +-1 labels."""
    return expression_loss(e, X, y_f, "l2_margin")


# ---------------------------------------------------------------------------
# Random trees and variation operators
# ---------------------------------------------------------------------------

def _random_leaf(n_features: int, rng: np.random.Generator) -> Expr:
    if rng.random() < 0.5:
        return Var(int(rng.integers(n_features)))
    return Const(float(rng.normal()))


def _random_tree(ops: OperatorSet, n_features: int, rng: np.random.Generator,
                 budget: int) -> Expr:
    """Grow a random tree whose node count stays within `budget`."""
    unary = sorted(ops.unary, key=lambda o: o.value)
    binary = sorted(ops.binary, key=lambda o: o.value)
    if budget <= 1 or rng.random() < 0.3:
        return _random_leaf(n_features, rng)
    if unary and rng.random() < 0.25:
        op = unary[int(rng.integers(len(unary)))]
        return Unary(op, _random_tree(ops, n_features, rng, budget - 1))
    op = binary[int(rng.integers(len(binary)))]
    left_budget = 1 + int(rng.integers(max(1, budget - 2)))
    return Binary(
        op,
        _random_tree(ops, n_features, rng, left_budget),
        _random_tree(ops, n_features, rng, budget - 1 - left_budget),
    )


def random_expr(cfg: SearchConfig, n_features: int, rng: np.random.Generator,
                max_tries: int = 32) -> Expr:
    """Random valid tree with complexity at most min(8, c_max)."""
    budget = min(8, cfg.c_max)
    for _ in range(max_tries):
        e = _random_tree(cfg.operators, n_features, rng, budget)
        if complexity(e, cfg.complexity_map) <= cfg.c_max and check_constraints(
            e, cfg.operators, cfg.complexity_map
        ):
            return e
    return _random_leaf(n_features, rng)


def _paths(e: Expr) -> list[tuple]:
    return [p for p, _ in iter_nodes(e)]


def _choose_path(e: Expr, rng: np.random.Generator) -> tuple:
    paths = _paths(e)
    return paths[int(rng.integers(len(paths)))]


def _mutate_node_replace(e: Expr, ops: OperatorSet, n_features: int,
                         rng: np.random.Generator) -> Expr | None:
    path = _choose_path(e, rng)
    node = get_node(e, path)
    if isinstance(node, Unary):
        choices = sorted(ops.unary - {node.op}, key=lambda o: o.value)
        if not choices:
            return None
        return replace_node(e, path, Unary(choices[int(rng.integers(len(choices)))], node.child))
    if isinstance(node, Binary):
        choices = sorted(ops.binary - {node.op}, key=lambda o: o.value)
        if not choices:
            return None
        return replace_node(
            e, path, Binary(choices[int(rng.integers(len(choices)))], node.left, node.right)
        )
    if isinstance(node, Var) and n_features > 1:
        idx = int(rng.integers(n_features - 1))
        if idx >= node.index:
            idx += 1
        return replace_node(e, path, Var(idx))
    return replace_node(e, path, Const(float(rng.normal())))


def _mutate_const_perturb(e: Expr, rng: np.random.Generator) -> Expr | None:
    const_paths = [p for p, n in iter_nodes(e) if isinstance(n, Const)]
    if not const_paths:
        return None
    path = const_paths[int(rng.integers(len(const_paths)))]
    value = get_node(e, path).value
    for _ in range(8):
        factor = math.exp(rng.normal(0.0, 0.5))
        if value == 0.0:
            new = float(rng.normal())
        else:
            new = value * factor
        if math.isfinite(new) and new != value:
            return replace_node(e, path, Const(new))
    return None


def _mutate_insert(e: Expr, ops: OperatorSet, n_features: int,
                   rng: np.random.Generator) -> Expr | None:
    path = _choose_path(e, rng)
    node = get_node(e, path)
    unary = sorted(ops.unary, key=lambda o: o.value)
    binary = sorted(ops.binary, key=lambda o: o.value)
    if unary and rng.random() < 0.4:
        op = unary[int(rng.integers(len(unary)))]
        return replace_node(e, path, Unary(op, node))
    op = binary[int(rng.integers(len(binary)))]
    leaf = _random_leaf(n_features, rng)
    if rng.random() < 0.5:
        return replace_node(e, path, Binary(op, node, leaf))
    return replace_node(e, path, Binary(op, leaf, node))


def _mutate_delete(e: Expr, rng: np.random.Generator) -> Expr | None:
    internal = [p for p, n in iter_nodes(e) if isinstance(n, (Unary, Binary))]
    if not internal:
        return None
    path = internal[int(rng.integers(len(internal)))]
    node = get_node(e, path)
    if isinstance(node, Unary):
        child = node.child
    else:
        child = node.left if rng.random() < 0.5 else node.right
    return replace_node(e, path, child)


def _mutate_append_leaf(e: Expr, ops: OperatorSet, n_features: int,
                        rng: np.random.Generator) -> Expr | None:
    leaves = [p for p, n in iter_nodes(e) if isinstance(n, (Const, Var))]
    if not leaves:
        return None
    path = leaves[int(rng.integers(len(leaves)))]
    subtree = _random_tree(ops, n_features, rng, budget=3)
    return replace_node(e, path, subtree)


def mutate(e: Expr, cfg: SearchConfig, n_features: int, rng: np.random.Generator,
           max_tries: int = 16) -> Expr:
    """Apply one weighted-random mutation; resample until the offspring is
    valid (constraints and complexity cap), else return the parent."""
    weights = np.array([
        cfg.w_node_replace,
        cfg.w_const_perturb,
        cfg.w_insert,
        cfg.w_delete,
        cfg.w_append_leaf,
    ])
    total = weights.sum()
    if total <= 0:
        return e
    probs = weights / total
    for _ in range(max_tries):
        kind = int(rng.choice(5, p=probs))
        if kind == 0:
            out = _mutate_node_replace(e, cfg.operators, n_features, rng)
        elif kind == 1:
            out = _mutate_const_perturb(e, rng)
        elif kind == 2:
            out = _mutate_insert(e, cfg.operators, n_features, rng)
        elif kind == 3:
            out = _mutate_delete(e, rng)
        else:
            out = _mutate_append_leaf(e, cfg.operators, n_features, rng)
        if out is None or out == e:
            continue
        if complexity(out, cfg.complexity_map) <= cfg.c_max and check_constraints(
            out, cfg.operators, cfg.complexity_map
        ):
            return out
    return e


def crossover(a: Expr, b: Expr, cfg: SearchConfig, rng: np.random.Generator,
              max_tries: int = 16) -> tuple[Expr, Expr]:
    """Swap uniformly chosen subtrees; invalid offspring are resampled and
    the parents are returned unchanged after the retry budget."""
    for _ in range(max_tries):
        pa = _choose_path(a, rng)
        pb = _choose_path(b, rng)
        sa = get_node(a, pa)
        sb = get_node(b, pb)
        child_a = replace_node(a, pa, sb)
        child_b = replace_node(b, pb, sa)
        ok_a = complexity(child_a, cfg.complexity_map) <= cfg.c_max and check_constraints(
            child_a, cfg.operators, cfg.complexity_map
        )
        ok_b = complexity(child_b, cfg.complexity_map) <= cfg.c_max and check_constraints(
            child_b, cfg.operators, cfg.complexity_map
        )
        if ok_a and ok_b:
            return child_a, child_b
    return a, b


# ---------------------------------------------------------------------------
# Constant optimization
# ---------------------------------------------------------------------------

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, iters: int) -> tuple[float, float]:
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def optimize_constants(e: Expr, X: np.ndarray, y: np.ndarray,
                       iterations: int = 24, loss: str = "l2_margin") -> Expr:
    """Coordinate-wise golden-section tuning of the tree's constants.

    The returned tree never scores worse than the input; trees without
    constants are returned unchanged.
    """
    const_paths = [p for p, n in iter_nodes(e) if isinstance(n, Const)]
    if not const_paths:
        return e
    best = e
    best_loss = expression_loss(e, X, y, loss)
    for _sweep in range(2):
        for path in const_paths:
            current = get_node(best, path).value

            def probe(c: float, path=path) -> float:
                if not math.isfinite(c):
                    return math.inf
                return expression_loss(replace_node(best, path, Const(c)), X, y, loss)

            span = 4.0 * (1.0 + abs(current))
            c_star, l_star = _golden_section(
                probe, current - span, current + span, iterations
            )
            if l_star < best_loss:
                best = replace_node(best, path, Const(c_star))
                best_loss = l_star
    return best


# ---------------------------------------------------------------------------
# Evolution loop
# ---------------------------------------------------------------------------

def _tournament(pop: list[Candidate], k: int, rng: np.random.Generator) -> Candidate:
    picks = rng.integers(len(pop), size=k)
    best = pop[int(picks[0])]
    for i in picks[1:]:
        if pop[int(i)].loss < best.loss:
            best = pop[int(i)]
    return best


def _evaluate(e: Expr, X, y, cfg: SearchConfig) -> Candidate:
    return Candidate(
        expr=e,
        loss=expression_loss(e, X, y, cfg.loss),
        complexity=complexity(e, cfg.complexity_map),
    )


def evolve(X: np.ndarray, y: np.ndarray, cfg: SearchConfig) -> HallOfFame:
    """Run the island-model search and return the hall of fame."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_features = X.shape[1]
    hof = HallOfFame()

    island_size = max(cfg.tournament_size, cfg.population_size // cfg.islands)
    rngs = [np.random.default_rng([cfg.rng_seed, i]) for i in range(cfg.islands)]
    islands: list[list[Candidate]] = []
    for i in range(cfg.islands):
        pop = [
            _evaluate(random_expr(cfg, n_features, rngs[i]), X, y, cfg)
            for _ in range(island_size)
        ]
        islands.append(pop)
        for cand in pop:
            _consider_with_polish(hof, cand, X, y, cfg)

    interval = cfg.migration_interval or max(1, cfg.generations // 10)
    for gen in range(cfg.generations):
        for i in range(cfg.islands):
            rng = rngs[i]
            pop = islands[i]
            pop.sort(key=lambda c: (c.loss, c.complexity))
            new_pop = pop[: cfg.elite_count]
            while len(new_pop) < island_size:
                if rng.random() < cfg.crossover_prob:
                    p1 = _tournament(pop, cfg.tournament_size, rng)
                    p2 = _tournament(pop, cfg.tournament_size, rng)
                    c1, c2 = crossover(p1.expr, p2.expr, cfg, rng)
                    new_pop.append(_evaluate(c1, X, y, cfg))
                    if len(new_pop) < island_size:
                        new_pop.append(_evaluate(c2, X, y, cfg))
                else:
                    parent = _tournament(pop, cfg.tournament_size, rng)
                    child = mutate(parent.expr, cfg, n_features, rng)
                    new_pop.append(_evaluate(child, X, y, cfg))
            islands[i] = new_pop
            for idx, cand in enumerate(new_pop):
                polished = _consider_with_polish(hof, cand, X, y, cfg)
                if polished is not None:
                    new_pop[idx] = polished
        if cfg.islands > 1 and (gen + 1) % interval == 0:
            _migrate(islands, cfg)
    return hof


def _consider_with_polish(hof: HallOfFame, cand: Candidate, X, y,
                          cfg: SearchConfig) -> Candidate | None:
    """On a hall-of-fame improvement, tune constants and store the result.

    Returns the polished candidate when it replaced the raw one, else None.
    """
    held = hof.best.get(cand.complexity)
    if not math.isfinite(cand.loss) or (held is not None and cand.loss >= held.loss):
        return None
    tuned_expr = optimize_constants(cand.expr, X, y, cfg.const_opt_iters, cfg.loss)
    if tuned_expr is not cand.expr:
        tuned = _evaluate(tuned_expr, X, y, cfg)
        if tuned.loss <= cand.loss:
            cand = tuned
    hof.consider(cand)
    return cand


def _migrate(islands: list[list[Candidate]], cfg: SearchConfig):
    """Ring migration: each island's best replace the next island's worst."""
    k = min(cfg.migration_count, min(len(p) for p in islands))
    emigrants = []
    for pop in islands:
        pop.sort(key=lambda c: (c.loss, c.complexity))
        emigrants.append(pop[:k])
    n = len(islands)
    for i in range(n):
        dest = islands[(i + 1) % n]
        dest[-k:] = emigrants[i]


def evolve_tagger(X: np.ndarray, y_f: np.ndarray, cfg: SearchConfig) -> HallOfFame:
    """Margin-loss evolution for one class tagger; labels must be +-1."""
    y_f = np.asarray(y_f, dtype=np.float64)
    if not np.all(np.isin(y_f, (-1.0, 1.0))):
        raise ValueError("tagger labels must be +1 or -1")
    if cfg.loss != "l2_margin":
        cfg = replace(cfg, loss="l2_margin")
    return evolve(X, y_f, cfg)


def select_model(hof: HallOfFame, c_max: int, parsimony_tol: float = 0.0) -> Candidate:
    """Lowest loss at complexity <= c_max; near-ties go to the simpler model."""
    eligible = [hof.best[l] for l in hof.levels() if l <= c_max]
    if not eligible:
        raise SearchError(f"hall of fame has no entry with complexity <= {c_max}")
    best_loss = min(c.loss for c in eligible)
    for cand in sorted(eligible, key=lambda c: c.complexity):
        if cand.loss <= best_loss + parsimony_tol:
            return cand
    raise AssertionError("unreachable")  # pragma: no cover


def train_multiclass(X: np.ndarray, y: np.ndarray, cfg: SearchConfig,
                     n_classes: int = 5) -> tuple[list[Candidate], list[HallOfFame]]:
    """Train one tagger per class on +1/-1 one-vs-rest labels.

    The joint objective decouples over classes, so taggers are trained
    independently and never see the other classes' labels.
    """
    y = np.asarray(y)
    selected, hofs = [], []
    for cls in range(n_classes):
        labels = np.where(y == cls, 1.0, -1.0)
        hof = evolve_tagger(X, labels, cfg)
        selected.append(select_model(hof, cfg.c_max, cfg.parsimony_tol))
        hofs.append(hof)
    return selected, hofs


def score_matrix(exprs: list[Expr], X: np.ndarray) -> np.ndarray:
    """Stack per-class tagger outputs into an (n, n_classes) score matrix."""
    return np.column_stack([eval_f64_batch(e, X) for e in exprs])
