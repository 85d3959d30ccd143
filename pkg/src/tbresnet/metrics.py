"""Predictive metrics, aggregate elasticities and a Rademacher complexity estimate."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from tbresnet._rng import substream

LOSS_FLOOR = 1e-300


def predicted_choices(P) -> np.ndarray:
    """Argmax per row; ``np.argmax`` already breaks ties toward the lowest index."""
    return np.argmax(np.asarray(P), axis=1)


def accuracy(predicted, true) -> float:
    predicted, true = np.asarray(predicted), np.asarray(true)
    if predicted.size == 0:
        raise ValueError("accuracy of an empty sample is undefined")
    if predicted.shape != true.shape:
        raise ValueError("predicted and true choices differ in length")
    # count / N equals 1 - mean(mismatch) and matches trace(C) / N bit for bit
    return float(np.count_nonzero(predicted == true) / predicted.size)


def cross_entropy(P, Y) -> float:
    P, Y = np.asarray(P, dtype=float), np.asarray(Y, dtype=float)
    if P.shape != Y.shape or P.size == 0:
        raise ValueError("probabilities and labels must have the same non-empty shape")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("probability rows must sum to 1")
    chosen = np.sum(P * Y, axis=1)
    return float(-np.mean(np.log(np.maximum(chosen, LOSS_FLOOR))))


def confusion_matrix(predicted, true, K: int) -> np.ndarray:
    """Counts with true labels on rows and predictions on columns."""
    C = np.zeros((K, K), dtype=int)
    np.add.at(C, (np.asarray(true, dtype=int), np.asarray(predicted, dtype=int)), 1)
    return C


def _precision_recall(C):
    tp = np.diag(C).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(C.sum(axis=0) > 0, tp / C.sum(axis=0), 0.0)
        rec = np.where(C.sum(axis=1) > 0, tp / C.sum(axis=1), 0.0)
    return prec, rec


def f1_weighted(predicted, true, K: int) -> float:
    """Class-share weighted F1; a class with ``precision + recall == 0`` scores 0."""
    true = np.asarray(true, dtype=int)
    if true.size == 0:
        raise ValueError("F1 of an empty sample is undefined")
    predicted = np.asarray(predicted, dtype=int)
    if np.any((true < 0) | (true >= K)) or np.any((predicted < 0) | (predicted >= K)):
        raise ValueError("choices must lie in [0, K-1]")
    C = confusion_matrix(predicted, true, K)
    prec, rec = _precision_recall(C)
    denom = prec + rec
    f1 = np.where(denom > 0, 2 * prec * rec / np.where(denom > 0, denom, 1.0), 0.0)
    weights = C.sum(axis=1) / true.size
    return float(np.sum(weights * f1))


@dataclass
class MetricReport:
    accuracy: float
    cross_entropy: float
    f1: float
    precision: np.ndarray
    recall: np.ndarray
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "cross_entropy": self.cross_entropy,
            "f1": self.f1,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "confusion": self.confusion.tolist(),
        }


def report(P, Y) -> MetricReport:
    P, Y = np.asarray(P, dtype=float), np.asarray(Y, dtype=float)
    K = Y.shape[1]
    pred, true = predicted_choices(P), np.argmax(Y, axis=1)
    C = confusion_matrix(pred, true, K)
    prec, rec = _precision_recall(C)
    return MetricReport(accuracy(pred, true), cross_entropy(P, Y), f1_weighted(pred, true, K), prec, rec, C)


def evaluate(model, data) -> MetricReport:
    return report(model.probabilities(data), data.y)


# ---------------------------------------------------------------------------
# elasticities


@dataclass
class Elasticity:
    """Aggregate elasticity of alternative ``k1``'s probability to ``column``."""

    column: str
    k1: int
    total: float
    mean: float
    n_used: int
    n_skipped: int


def probability_input_derivatives(model, data) -> tuple[np.ndarray, np.ndarray]:
    """``P`` (N, K) and ``dP/dx`` (N, K, D) with respect to raw input columns."""
    S = model.standardized(data)
    J = model.utility_jacobian_std(S)
    scale = np.concatenate([model.stats.x_std, model.stats.z_std])
    J = J / scale
    P = model.probabilities_std(S)
    dP = P[:, :, None] * (J - np.einsum("nj,njd->nd", P, J)[:, None, :])
    return P, dP


def _column_index(model, column: str) -> int:
    cols = model.input_columns
    if column not in cols:
        raise KeyError(f"unknown attribute {column!r}")
    return cols.index(column)


def elasticity(model, data, k1: int, column: str) -> Elasticity:
    """Sum over rows of ``dP[k1]/dx * x / P[k1]``; rows with ``x == 0`` are skipped."""
    c = _column_index(model, column)
    P, dP = probability_input_derivatives(model, data)
    x = np.hstack([data.x, data.z])[:, c]
    use = x != 0
    terms = dP[use, k1, c] * x[use] / P[use, k1]
    n_used = int(use.sum())
    return Elasticity(column, int(k1), float(terms.sum()), float(terms.mean()) if n_used else 0.0,
                      n_used, int((~use).sum()))


@dataclass
class ElasticityTable:
    columns: list
    total: np.ndarray   # (len(columns), K)
    mean: np.ndarray
    skipped: np.ndarray  # rows skipped per column

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attribute", "alternative", "elasticity_mean", "elasticity_sum", "rows_skipped"])
        for i, col in enumerate(self.columns):
            for k in range(self.total.shape[1]):
                w.writerow([col, k, repr(float(self.mean[i, k])), repr(float(self.total[i, k])), int(self.skipped[i])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "sum": self.total.tolist(),
                "rows_skipped": self.skipped.tolist()}


def elasticity_table(model, data, columns=None) -> ElasticityTable:
    """Elasticities of every alternative's probability to each of ``columns`` (default: all x columns)."""
    columns = list(columns) if columns is not None else list(model.x_columns)
    P, dP = probability_input_derivatives(model, data)
    X = np.hstack([data.x, data.z])
    K = P.shape[1]
    total = np.zeros((len(columns), K))
    mean = np.zeros((len(columns), K))
    skipped = np.zeros(len(columns), dtype=int)
    for i, col in enumerate(columns):
        c = _column_index(model, col)
        use = X[:, c] != 0
        skipped[i] = int((~use).sum())
        terms = dP[use, :, c] * X[use, c][:, None] / P[use]
        total[i] = terms.sum(axis=0)
        mean[i] = terms.mean(axis=0) if use.any() else 0.0
    return ElasticityTable(columns, total, mean, skipped)


# ---------------------------------------------------------------------------
# Rademacher complexity


def empirical_rademacher(function_values, n_draws: int = 10000, seed: int = 0, chunk: int = 4096) -> float:
    """Monte-Carlo estimate of ``E_eps sup_f (1/N) sum_i eps_i f(x_i)`` over a finite class.

    ``function_values`` is ``(M, N)``: row m holds ``f_m`` evaluated on the sample.
    """
    F = np.atleast_2d(np.asarray(function_values, dtype=float))
    M, N = F.shape
    if M < 1 or N < 1 or n_draws < 1:
        raise ValueError("need at least one function, one sample point and one draw")
    rng = substream(seed, "rademacher")
    total, done = 0.0, 0
    while done < n_draws:
        b = min(chunk, n_draws - done)
        eps = rng.integers(0, 2, size=(b, N)) * 2.0 - 1.0
        total += float(np.max(eps @ F.T, axis=1).sum())
        done += b
    return total / (n_draws * N)
