"""
Bayes fusion classifier: one generative model per class (KDE marginals plus
a vine copula), combined through class priors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidInputError
from .margins import MarginalModel, fit_marginal
from .select import MIN_ROWS, FitReport, SelectionConfig, select_structure_and_fit
from .vine import VineModel

PRIOR_MODES = ("uniform", "empirical")


def source_of(name: str) -> str:
    """Source tag of a feature named ``"source.feature"`` (empty if untagged)."""
    return name.split(".", 1)[0] if "." in name else ""


@dataclass(frozen=True, eq=False)
class ClassModel:
    label: str
    marginals: tuple
    vine: VineModel
    prior: float
    report: FitReport | None = None

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) != self.vine.dimension:
            raise InvalidInputError("marginal count differs from vine dimension")
        if not 0.0 < self.prior <= 1.0:
            raise InvalidInputError(f"prior {self.prior!r} outside (0, 1]")

    def pseudo_observations(self, x: np.ndarray) -> np.ndarray:
        return np.column_stack([m.cdf(x[:, k]) for k, m in enumerate(self.marginals)])

    def log_likelihood(self, x: np.ndarray) -> np.ndarray:
        """``sum_k log f_k(x_k) + log c(F_1(x_1), ..., F_K(x_K))`` per row."""
        marg = sum(m.logpdf(x[:, k]) for k, m in enumerate(self.marginals))
        return marg + self.vine.log_density(self.pseudo_observations(x))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "prior": self.prior,
            "marginals": [m.to_dict() for m in self.marginals],
            "vine": self.vine.to_dict(),
            "report": None if self.report is None else self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassModel":
        report = d.get("report")
        return cls(
            d["label"],
            tuple(MarginalModel.from_dict(m) for m in d["marginals"]),
            VineModel.from_dict(d["vine"]),
            float(d["prior"]),
            None if report is None else FitReport.from_dict(report),
        )


@dataclass(frozen=True, eq=False)
class ClassifierBundle:
    """Per-class models over a shared feature layout."""

    classes: tuple
    feature_names: tuple
    config: SelectionConfig = SelectionConfig()

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        K = len(self.feature_names)
        if any(len(c.marginals) != K for c in self.classes):
            raise InvalidInputError("class models disagree on the feature count")
        if len(set(self.feature_names)) != K:
            raise InvalidInputError("feature names must be unique")
        total = sum(c.prior for c in self.classes)
        if abs(total - 1.0) > 1e-12:
            raise InvalidInputError(f"priors sum to {total!r}, not 1")

    @property
    def labels(self) -> tuple:
        return tuple(c.label for c in self.classes)

    @property
    def feature_sources(self) -> tuple:
        return tuple(source_of(n) for n in self.feature_names)

    @property
    def dimension(self) -> int:
        return len(self.feature_names)

    def class_model(self, label) -> ClassModel:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "config": self.config.to_dict(),
            "classes": [c.to_dict() for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierBundle":
        return cls(
            tuple(ClassModel.from_dict(c) for c in d["classes"]),
            tuple(d["feature_names"]),
            SelectionConfig.from_dict(d["config"]),
        )


def _priors(counts, mode):
    if mode == "uniform":
        return [1.0 / len(counts)] * len(counts)
    if mode == "empirical":
        total = sum(counts)
        return [c / total for c in counts]
    raise InvalidInputError(f"prior mode must be one of {PRIOR_MODES}")


def train(features, labels, cfg: SelectionConfig | None = None, prior_mode: str = "uniform",
          feature_names=None, classes=None) -> ClassifierBundle:
    """Fit one marginal-plus-vine model per class.

    Parameters
    ----------
    features : array_like, shape (N, K)
    labels : sequence of length N
    cfg : SelectionConfig, optional
        Use :data:`vinefuse.select.INDEPENDENCE_ONLY` for the
        dependence-blind ablation.
    prior_mode : {"uniform", "empirical"}
    feature_names : sequence of str, optional
        Defaults to ``x0 .. x{K-1}``.
    classes : sequence, optional
        Class enumeration order; defaults to order of first appearance.
    """
    cfg = cfg or SelectionConfig()
    x = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=object)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise InvalidInputError("features must be N x K with one label per row")
    if x.shape[1] < 2:
        raise InvalidInputError("need at least two features")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features contain non-finite values")
    names = tuple(feature_names) if feature_names is not None else \
        tuple(f"x{k}" for k in range(x.shape[1]))
    if len(names) != x.shape[1]:
        raise InvalidInputError("feature_names length differs from feature count")
    if classes is None:
        classes = list(dict.fromkeys(labels.tolist()))
    rows = {c: np.flatnonzero(labels == c) for c in classes}
    for c, idx in rows.items():
        if idx.size < MIN_ROWS:
            raise InsufficientDataError(
                f"class {c!r} has {idx.size} rows, need at least {MIN_ROWS}", label=c)
    priors = _priors([rows[c].size for c in classes], prior_mode)

    models = []
    for c, prior in zip(classes, priors):
        xc = x[rows[c]]
        margs = tuple(fit_marginal(xc[:, k]) for k in range(x.shape[1]))
        u = np.column_stack([m.cdf(xc[:, k]) for k, m in enumerate(margs)])
        vine, report = select_structure_and_fit(u, cfg)
        models.append(ClassModel(c, margs, vine, prior, report))
    return ClassifierBundle(tuple(models), names, cfg)


def _rows(bundle, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != bundle.dimension:
        raise InvalidInputError(f"expected {bundle.dimension} features per row, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features contain non-finite values")
    return x, single


def log_posterior(bundle: ClassifierBundle, x):
    """Unnormalised log posteriors, shape (G,) for one row or (M, G)."""
    x, single = _rows(bundle, x)
    out = np.column_stack([np.log(c.prior) + c.log_likelihood(x) for c in bundle.classes])
    return out[0] if single else out


def predict(bundle: ClassifierBundle, x):
    """Most probable class; ties go to the earliest class."""
    lp = log_posterior(bundle, x)
    idx = np.argmax(lp, axis=-1)
    labels = bundle.labels
    if np.ndim(idx) == 0:
        return labels[int(idx)]
    return [labels[i] for i in idx]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    labels: tuple
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (len(self.labels), len(self.labels)) or np.any(c < 0):
            raise InvalidInputError("confusion counts must be a non-negative G x G matrix")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "counts", c)

    @property
    def precision(self) -> np.ndarray:
        tp = np.diag(self.counts).astype(float)
        col = self.counts.sum(axis=0)
        return np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)

    @property
    def recall(self) -> np.ndarray:
        tp = np.diag(self.counts).astype(float)
        row = self.counts.sum(axis=1)
        return np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)

    @property
    def macro_f1(self) -> float:
        """``(2/G) sum_w p_w r_w / (p_w + r_w)``; zero-denominator terms add 0."""
        p, r = self.precision, self.recall
        s = p + r
        terms = np.divide(p * r, s, out=np.zeros_like(s), where=s > 0)
        return float(2.0 / len(self.labels) * terms.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / max(self.counts.sum(), 1))

    def to_table(self) -> str:
        """Rows true, columns predicted, recall column, precision row, F1 corner."""
        names = [str(l) for l in self.labels]
        w0 = max([9] + [len(n) for n in names])
        w = max([8] + [len(n) for n in names])
        lines = [" " * w0 + "".join(f" {n:>{w}}" for n in names) + f" {'Recall':>{w}}"]
        for name, row, rec in zip(names, self.counts, self.recall):
            lines.append(f"{name:<{w0}}" + "".join(f" {c:>{w}d}" for c in row)
                         + f" {_pct(rec):>{w}}")
        lines.append(f"{'Precision':<{w0}}" + "".join(f" {_pct(p):>{w}}" for p in self.precision)
                     + f" {_pct(self.macro_f1):>{w}}")
        return "\n".join(lines)


def _pct(x: float) -> str:
    return f"{100.0 * x:.1f}%"


def confusion_matrix(true, pred, labels) -> ConfusionMatrix:
    index = {l: i for i, l in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(true, pred):
        if t not in index:
            raise InvalidInputError(f"label {t!r} is not a trained class")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(tuple(labels), counts)


def evaluate(bundle: ClassifierBundle, features, labels) -> ConfusionMatrix:
    """Confusion matrix of ``predict`` against ``labels``.

    Per-class precision/recall and macro F1 are properties of the result.
    """
    x, _ = _rows(bundle, features)
    labels = list(labels)
    if len(labels) != x.shape[0] or not labels:
        raise InvalidInputError("need one label per feature row, at least one row")
    unknown = set(labels) - set(bundle.labels)
    if unknown:
        raise InvalidInputError(f"labels outside the trained classes: {sorted(map(str, unknown))}")
    return confusion_matrix(labels, predict(bundle, x), bundle.labels)
