"""
Vine learning: sequential maximum spanning trees on |Kendall's tau| with
per-edge AIC family selection.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bicop
from .bicop import CopulaFamily, PairCopula
from .errors import DegenerateDataError, InsufficientDataError, InvalidInputError
from .vine import VineEdge, VineModel, VineStructure

MIN_ROWS = 30
AIC_MODES = ("compact", "standard")


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs of the structure/family search.

    Parameters
    ----------
    candidate_families : tuple of CopulaFamily
        Must include independence.
    aic : {"compact", "standard"}
        ``"compact"`` scores ``-loglik + 2q``; ``"standard"`` scores
        ``-2 loglik + 2q``.
    tie_break : {"lexicographic"}
        Equal-weight edges are taken in order of their sorted label.
    """

    candidate_families: tuple = tuple(CopulaFamily)
    aic: str = "compact"
    tie_break: str = "lexicographic"

    def __post_init__(self):
        fams = tuple(CopulaFamily(f) for f in self.candidate_families)
        if CopulaFamily.INDEPENDENCE not in fams:
            raise InvalidInputError("candidate families must include independence")
        # enumeration order drives AIC tie-breaks
        object.__setattr__(self, "candidate_families",
                           tuple(f for f in CopulaFamily if f in fams))
        if self.aic not in AIC_MODES:
            raise InvalidInputError(f"aic must be one of {AIC_MODES}")
        if self.tie_break != "lexicographic":
            raise InvalidInputError("only lexicographic tie-breaking is supported")

    def to_dict(self) -> dict:
        return {
            "candidate_families": [f.value for f in self.candidate_families],
            "aic": self.aic,
            "tie_break": self.tie_break,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionConfig":
        return cls(tuple(CopulaFamily.parse(f) for f in d["candidate_families"]),
                   d.get("aic", "compact"), d.get("tie_break", "lexicographic"))


INDEPENDENCE_ONLY = SelectionConfig((CopulaFamily.INDEPENDENCE,))


def aic(loglik: float, n_params: int, mode: str = "compact") -> float:
    if mode == "compact":
        return -loglik + 2.0 * n_params
    return -2.0 * loglik + 2.0 * n_params


@dataclass(frozen=True)
class EdgeRecord:
    tree: int
    conditioned: tuple
    conditioning: tuple
    tau: float
    family: CopulaFamily
    parameter: float | None
    loglik: float
    aic: dict = field(default_factory=dict)

    def label(self, names=None) -> str:
        return VineEdge(self.conditioned, frozenset(self.conditioning)).label(names)

    def to_dict(self) -> dict:
        return {
            "tree": self.tree,
            "conditioned": list(self.conditioned),
            "conditioning": list(self.conditioning),
            "tau": self.tau,
            "family": self.family.value,
            "parameter": self.parameter,
            "loglik": self.loglik,
            "aic": {f.value: a for f, a in self.aic.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EdgeRecord":
        return cls(int(d["tree"]), tuple(d["conditioned"]), tuple(d["conditioning"]),
                   float(d["tau"]), CopulaFamily.parse(d["family"]), d["parameter"],
                   float(d["loglik"]),
                   {CopulaFamily.parse(k): float(v) for k, v in d["aic"].items()})


@dataclass(frozen=True)
class FitReport:
    edges: tuple

    @property
    def total_loglik(self) -> float:
        return float(sum(r.loglik for r in self.edges))

    def tree(self, t: int):
        return [r for r in self.edges if r.tree == t]

    def to_dict(self) -> dict:
        return {"edges": [r.to_dict() for r in self.edges], "total_loglik": self.total_loglik}

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(tuple(EdgeRecord.from_dict(r) for r in d["edges"]))

    def to_text(self, names=None) -> str:
        fams = [f for f in CopulaFamily if any(f in r.aic for r in self.edges)]
        head = f"{'tree':>4}  {'edge':<20} {'tau':>8}  {'family':<12} {'parameter':>12} {'loglik':>11}"
        head += "".join(f" {'AIC:' + f.value[:5]:>11}" for f in fams)
        lines = [head]
        for r in self.edges:
            par = "-" if r.parameter is None else f"{r.parameter:.6g}"
            line = (f"{r.tree:>4}  {r.label(names):<20} {r.tau:>8.4f}  {r.family.value:<12} "
                    f"{par:>12} {r.loglik:>11.3f}")
            line += "".join(f" {r.aic[f]:>11.3f}" if f in r.aic else f" {'-':>11}" for f in fams)
            lines.append(line)
        lines.append(f"total loglik {self.total_loglik:.4f} over {len(self.edges)} edges")
        return "\n".join(lines)


def select_family(u, v, cfg: SelectionConfig | None = None, tau: float | None = None):
    """Pick the AIC-best family for one pair of pseudo-observation columns.

    Clayton and Gumbel are skipped when the sample tau is negative.

    Returns
    -------
    (PairCopula, dict, float)
        Chosen copula, AIC per fitted family, and the chosen log-likelihood.
    """
    cfg = cfg or SelectionConfig()
    u, v = bicop._check_pairs(u, v)
    if tau is None:
        tau = bicop.kendall_tau(u, v)
    table, fits = {}, {}
    for fam in cfg.candidate_families:
        if tau < 0 and not fam.allows_negative and fam is not CopulaFamily.INDEPENDENCE:
            continue
        cop, ll = bicop.fit_mle(fam, u, v, tau=tau)
        table[fam] = aic(ll, fam.n_params, cfg.aic)
        fits[fam] = (cop, ll)
    best = min(table, key=lambda f: (table[f], list(CopulaFamily).index(f)))
    return fits[best][0], table, fits[best][1]


def _max_spanning_tree(n_nodes, weights, labels):
    """Prim's algorithm; ties go to the lexicographically smallest label."""
    in_tree = {0}
    chosen = []
    while len(in_tree) < n_nodes:
        best = None
        for pair, w in weights.items():
            i, j = pair
            if (i in in_tree) == (j in in_tree):
                continue
            key = (-w, labels[pair])
            if best is None or key < best[0]:
                best = (key, pair)
        if best is None:
            raise InvalidInputError("candidate graph is disconnected")
        chosen.append(best[1])
        in_tree.update(best[1])
    return chosen


def _check_matrix(u):
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise InvalidInputError("pseudo-observations must be an N x K matrix")
    n, k = u.shape
    if k < 2:
        raise InvalidInputError("need at least two variables")
    if n < MIN_ROWS:
        raise InsufficientDataError(f"need at least {MIN_ROWS} rows, got {n}")
    if not np.all((u > 0) & (u < 1)):
        raise InvalidInputError("pseudo-observations must lie in the open unit interval")
    for j in range(k):
        if np.all(u[:, j] == u[0, j]):
            raise DegenerateDataError(f"column {j} is constant")
    return u


def select_structure_and_fit(u, cfg: SelectionConfig | None = None):
    """Learn a vine from pseudo-observations, tree by tree.

    Each tree is the maximum spanning tree, weighted by |tau|, over the
    pairs allowed by the proximity condition. Every chosen edge gets its
    AIC-best family. The conditional pseudo-observations for the next tree
    come from that edge's h-functions.

    Returns
    -------
    (VineModel, FitReport)
    """
    cfg = cfg or SelectionConfig()
    u = _check_matrix(u)
    K = u.shape[1]
    empty = frozenset()
    cache = {(k, empty): u[:, k] for k in range(K)}

    # candidate edges for T1: every pair of variables
    nodes = [frozenset([k]) for k in range(K)]
    candidates = {}
    for i in range(K):
        for j in range(i + 1, K):
            candidates[(i, j)] = ((i, j), empty)

    trees, records = [], []
    for t in range(1, K):
        taus, weights, labels = {}, {}, {}
        for pair, (cond, D) in candidates.items():
            tau = bicop.kendall_tau(cache[(cond[0], D)], cache[(cond[1], D)])
            taus[pair] = tau
            weights[pair] = abs(tau)
            labels[pair] = (cond, tuple(sorted(D)))
        chosen = _max_spanning_tree(len(nodes), weights, labels)
        chosen.sort(key=lambda p: labels[p])

        tree = []
        for pair in chosen:
            (a, b), D = candidates[pair]
            ua, ub = cache[(a, D)], cache[(b, D)]
            cop, table, ll = select_family(ua, ub, cfg, tau=taus[pair])
            tree.append(VineEdge((a, b), D, cop))
            records.append(EdgeRecord(t, (a, b), tuple(sorted(D)), taus[pair], cop.family,
                                      cop.theta, ll, table))
            cache[(a, D | {b})] = np.atleast_1d(bicop.hfunc(cop, ua, ub))
            cache[(b, D | {a})] = np.atleast_1d(bicop.hfunc(cop, ub, ua))
        trees.append(tuple(tree))

        # next level: nodes are this tree's edges, joined when they share a node
        parents = [frozenset(pair) for pair in chosen]
        nodes = [e.variables for e in tree]
        candidates = {}
        for i in range(len(tree)):
            for j in range(i + 1, len(tree)):
                if not parents[i] & parents[j]:
                    continue
                A, B = nodes[i], nodes[j]
                D = A & B
                sym = sorted(A ^ B)
                if len(sym) != 2:
                    continue
                candidates[(i, j)] = ((sym[0], sym[1]), D)

    model = VineModel(VineStructure(K, tuple(trees)))
    return model, FitReport(tuple(records))
