"""
Regular-vine structures and models.

Variables are indexed ``0 .. K-1``. Tree ``T_i`` (1-based, as usual for
vines) holds ``K - i`` edges; an edge of ``T_i`` carries a conditioned pair
``(a, b)`` and a conditioning set ``D`` with ``|D| = i - 1``.

Conditional CDFs are memoised per evaluation under the key
``(variable, conditioning set)``: the edge ``(a, b | D)`` reads
``F(a | D)`` and ``F(b | D)`` and writes ``F(a | D + b)`` and
``F(b | D + a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bicop
from .bicop import PairCopula
from .errors import InvalidInputError

FORMAT_VERSION = 1
LOG_FLOOR = math.log(1e-300)


@dataclass(frozen=True)
class VineEdge:
    """One vine edge ``conditioned[0], conditioned[1] | conditioning``."""

    conditioned: tuple[int, int]
    conditioning: frozenset = frozenset()
    copula: PairCopula | None = None

    def __post_init__(self):
        object.__setattr__(self, "conditioned", tuple(int(i) for i in self.conditioned))
        object.__setattr__(self, "conditioning", frozenset(int(i) for i in self.conditioning))

    @property
    def tree(self) -> int:
        return len(self.conditioning) + 1

    @property
    def variables(self) -> frozenset:
        return self.conditioning.union(self.conditioned)

    @property
    def key(self) -> tuple:
        return frozenset(self.conditioned), self.conditioning

    def label(self, names=None) -> str:
        def nm(i):
            return str(names[i]) if names is not None else str(i)
        s = f"{nm(self.conditioned[0])},{nm(self.conditioned[1])}"
        if self.conditioning:
            s += "|" + ",".join(nm(i) for i in sorted(self.conditioning))
        return s

    def with_copula(self, copula: PairCopula) -> "VineEdge":
        return VineEdge(self.conditioned, self.conditioning, copula)

    def to_dict(self) -> dict:
        d = {
            "tree": self.tree,
            "conditioned": list(self.conditioned),
            "conditioning": sorted(self.conditioning),
        }
        if self.copula is not None:
            d.update(self.copula.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VineEdge":
        cop = PairCopula.from_dict(d) if "family" in d else None
        edge = cls(tuple(d["conditioned"]), frozenset(d.get("conditioning", ())), cop)
        if "tree" in d and int(d["tree"]) != edge.tree:
            raise InvalidInputError(
                f"edge {edge.label()} declares tree {d['tree']} but has "
                f"{len(edge.conditioning)} conditioning variables"
            )
        return edge


@dataclass(frozen=True)
class Violation:
    """First structural defect found by :func:`validate_structure`."""

    tree: int
    edge: int | None
    reason: str

    def __str__(self):
        where = f"T{self.tree}" if self.edge is None else f"T{self.tree} edge #{self.edge}"
        return f"{where}: {self.reason}"


@dataclass(frozen=True)
class VineStructure:
    """Nested trees ``T_1 .. T_{K-1}``; copulas on the edges are optional."""

    dimension: int
    trees: tuple

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(tuple(t) for t in self.trees))

    @classmethod
    def from_edges(cls, dimension: int, edges) -> "VineStructure":
        """Group a flat edge list into trees by conditioning-set size."""
        edges = list(edges)
        depth = max([dimension - 1] + [e.tree for e in edges])
        trees = [[] for _ in range(depth)]
        for e in edges:
            trees[e.tree - 1].append(e)
        return cls(dimension, tuple(tuple(t) for t in trees))

    @property
    def edges(self):
        for tree in self.trees:
            yield from tree

    def relabel(self, perm) -> "VineStructure":
        """Rename variable ``i`` to ``perm[i]``."""
        def mv(e):
            return VineEdge((perm[e.conditioned[0]], perm[e.conditioned[1]]),
                            frozenset(perm[i] for i in e.conditioning), e.copula)
        return VineStructure(self.dimension, tuple(tuple(mv(e) for e in t) for t in self.trees))

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "dimension": self.dimension,
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VineStructure":
        version = d.get("version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise InvalidInputError(f"unsupported vine format version {version}")
        return cls.from_edges(int(d["dimension"]), [VineEdge.from_dict(e) for e in d["edges"]])


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return False
        self.parent[ri] = rj
        return True


def _parents(structure: VineStructure):
    """Per tree, per edge: indices of the two parent edges in the tree below.

    Returns ``(parents, violation)``; ``parents`` is only complete if
    ``violation`` is None.
    """
    K = structure.dimension
    parents = [[None] * len(structure.trees[0])] if structure.trees else []
    if K < 2:
        return parents, Violation(1, None, f"dimension must be >= 2, got {K}")
    if len(structure.trees) != K - 1:
        return parents, Violation(
            min(len(structure.trees), K - 1) + 1, None,
            f"expected {K - 1} trees, found {len(structure.trees)}",
        )
    for ti, tree in enumerate(structure.trees, start=1):
        if len(tree) != K - ti:
            return parents, Violation(ti, None, f"expected {K - ti} edges, found {len(tree)}")
        for ei, e in enumerate(tree):
            a, b = e.conditioned
            if a == b:
                return parents, Violation(ti, ei, f"conditioned pair {e.label()} repeats a variable")
            if not all(0 <= i < K for i in e.variables):
                return parents, Violation(ti, ei, f"edge {e.label()} references a variable outside 0..{K - 1}")
            if a in e.conditioning or b in e.conditioning:
                return parents, Violation(ti, ei, f"edge {e.label()} conditions on its own variable")
            if len(e.conditioning) != ti - 1:
                return parents, Violation(ti, ei, f"edge {e.label()} needs {ti - 1} conditioning variables")
        if ti == 1:
            uf = _UnionFind(K)
            for ei, e in enumerate(tree):
                if not uf.union(*e.conditioned):
                    return parents, Violation(1, ei, f"edge {e.label()} closes a cycle; T1 is not a tree")
            continue
        below = structure.trees[ti - 2]
        index = {}
        for j, pe in enumerate(below):
            index.setdefault(pe.variables, j)
        uf = _UnionFind(len(below))
        links = []
        for ei, e in enumerate(tree):
            a, b = e.conditioned
            pa = index.get(e.conditioning | {a})
            pb = index.get(e.conditioning | {b})
            if pa is None or pb is None:
                return parents, Violation(
                    ti, ei, f"edge {e.label()} does not join two edges of T{ti - 1}")
            if ti > 2 and not set(parents[ti - 2][pa]) & set(parents[ti - 2][pb]):
                return parents, Violation(
                    ti, ei, f"edge {e.label()} violates the proximity condition")
            if not uf.union(pa, pb):
                return parents, Violation(ti, ei, f"edge {e.label()} closes a cycle; T{ti} is not a tree")
            links.append((pa, pb))
        parents.append(links)
    return parents, None


def validate_structure(structure: VineStructure) -> Violation | None:
    """Check the R-vine conditions; return the first violation or None."""
    return _parents(structure)[1]


class VineModel:
    """A vine structure with a pair copula on every edge.

    Parameters
    ----------
    structure : VineStructure
        Must pass :func:`validate_structure` and carry a copula per edge.
    """

    def __init__(self, structure: VineStructure):
        violation = validate_structure(structure)
        if violation is not None:
            raise InvalidInputError(f"invalid vine structure: {violation}")
        for e in structure.edges:
            if e.copula is None:
                raise InvalidInputError(f"edge {e.label()} has no pair copula")
        self.structure = structure
        self._edge_index = {e.key: (ti, ei)
                            for ti, t in enumerate(structure.trees)
                            for ei, e in enumerate(t)}
        self._plan = _sampling_plan(structure)

    @property
    def dimension(self) -> int:
        return self.structure.dimension

    @property
    def trees(self):
        return self.structure.trees

    @property
    def edges(self):
        return self.structure.edges

    def __eq__(self, other):
        return isinstance(other, VineModel) and self.structure == other.structure

    def __repr__(self):
        return f"VineModel(dimension={self.dimension}, edges={[e.label() for e in self.edges]})"

    def to_dict(self) -> dict:
        return self.structure.to_dict()

    @classmethod
    def from_dict(cls, d: dict) -> "VineModel":
        return cls(VineStructure.from_dict(d))

    @classmethod
    def independence(cls, structure: VineStructure) -> "VineModel":
        """Same trees, every pair copula replaced by independence."""
        return cls(VineStructure(structure.dimension, tuple(
            tuple(e.with_copula(bicop.INDEPENDENCE) for e in t) for t in structure.trees)))

    def relabel(self, perm) -> "VineModel":
        return VineModel(self.structure.relabel(perm))

    def log_density(self, u):
        return log_density(self, u)

    def sample(self, n, seed):
        return sample(self, n, seed)


def _as_rows(model: VineModel, u):
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    rows = np.atleast_2d(u)
    if rows.ndim != 2 or rows.shape[1] != model.dimension:
        raise InvalidInputError(
            f"expected {model.dimension} pseudo-observations per row, got shape {u.shape}")
    return rows, single


def _recurse(model: VineModel, rows, upto=None, with_density=True):
    """Walk the trees; return (cache of conditional CDFs, summed log density)."""
    cache = {(k, frozenset()): rows[:, k] for k in range(model.dimension)}
    total = np.zeros(rows.shape[0])
    for ti, tree in enumerate(model.trees):
        if upto is not None and ti >= upto:
            break
        for e in tree:
            a, b = e.conditioned
            ua = cache[(a, e.conditioning)]
            ub = cache[(b, e.conditioning)]
            if with_density:
                total += np.maximum(bicop.log_density(e.copula, ua, ub), LOG_FLOOR)
            cache[(a, e.conditioning | {b})] = np.atleast_1d(bicop.hfunc(e.copula, ua, ub))
            cache[(b, e.conditioning | {a})] = np.atleast_1d(bicop.hfunc(e.copula, ub, ua))
    return cache, total


def log_density(model: VineModel, u):
    """Log copula density of the vine at one point (K,) or many (N, K).

    Each pair-copula factor is floored at 1e-300 so the result stays finite.
    """
    rows, single = _as_rows(model, u)
    _, total = _recurse(model, rows)
    return float(total[0]) if single else total


def conditional_cdf(model: VineModel, edge: VineEdge, u, side: str = "a"):
    """``F(conditioned[side] | conditioning)`` for an edge of ``model``.

    ``side`` is ``"a"`` for ``edge.conditioned[0]`` and ``"b"`` for
    ``edge.conditioned[1]``.
    """
    if side not in ("a", "b"):
        raise InvalidInputError("side must be 'a' or 'b'")
    pos = model._edge_index.get(edge.key)
    if pos is None:
        raise InvalidInputError(f"edge {edge.label()} is not part of the model")
    rows, single = _as_rows(model, u)
    cache, _ = _recurse(model, rows, upto=pos[0], with_density=False)
    var = edge.conditioned[0 if side == "a" else 1]
    out = cache[(var, edge.conditioning)]
    return float(out[0]) if single else out


@dataclass
class _Step:
    variable: int
    # (copula, partner variable, conditioning set), tree 1 first
    chain: list = field(default_factory=list)


def _sampling_plan(structure: VineStructure):
    """Order variables for the inverse Rosenblatt transform.

    Peels one conditioned variable of the top edge at a time. The peeled
    variable must appear in exactly one edge per remaining tree and in no
    other edge; it is then sampled after all remaining variables.
    """
    K = structure.dimension
    remaining = [list(t) for t in structure.trees]
    alive = set(range(K))
    steps = []
    for m in range(K, 1, -1):
        top = remaining[m - 2][0]
        for x in top.conditioned:
            chain = []
            for t in range(m - 1):
                hits = [e for e in remaining[t] if x in e.conditioned]
                if len(hits) != 1:
                    break
                chain.append(hits[0])
            else:
                others = (e for t in remaining[:m - 1] for e in t if e not in chain)
                if not any(x in e.variables for e in others):
                    break
        else:
            raise InvalidInputError("vine structure admits no sampling order")
        for t, e in enumerate(chain):
            remaining[t].remove(e)
        alive.discard(x)
        step = _Step(x)
        for e in chain:
            partner = e.conditioned[1] if e.conditioned[0] == x else e.conditioned[0]
            step.chain.append((e.copula, partner, e.conditioning))
        steps.append(step)
    (first,) = alive
    steps.append(_Step(first))
    steps.reverse()
    return steps


def sample(model: VineModel, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` rows from the vine copula by inverse Rosenblatt transform.

    Column ``j`` of the underlying uniform draw feeds the ``j``-th variable of
    the sampling order, so the output is a deterministic function of ``seed``.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    w = rng.random((n, model.dimension))
    empty = frozenset()
    cache = {}
    for j, step in enumerate(model._plan):
        x = step.variable
        val = bicop._clamp(w[:, j])
        levels = [val]
        for cop, partner, cond in reversed(step.chain):
            val = np.atleast_1d(bicop.hinv(cop, val, cache[(partner, cond)]))
            levels.append(val)
        levels.reverse()
        # levels[t] = F(x | D_t), with D_t the conditioning set of chain[t]
        cache[(x, empty)] = levels[0]
        for t, (cop, partner, cond) in enumerate(step.chain):
            cache[(x, cond)] = levels[t]
            cache[(x, cond | {partner})] = levels[t + 1]
            cache[(partner, cond | {x})] = np.atleast_1d(
                bicop.hfunc(cop, cache[(partner, cond)], levels[t]))
    return np.column_stack([cache[(k, empty)] for k in range(model.dimension)])
