"""Input perturbations (FGSM, TGSM, Gaussian noise) and accuracy-vs-epsilon curves.

All perturbations act on standardized inputs ``[x, z]`` of a fitted model and
never touch labels or parameters.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from tbresnet import metrics
from tbresnet._rng import substream

ATTACKS = ("fgsm", "tgsm", "gaussian")
DEFAULT_EPSILONS = (0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2)


def _mask(model, include_z: bool) -> np.ndarray:
    m = np.ones(len(model.input_columns))
    if not include_z:
        m[len(model.x_columns):] = 0.0
    return m


def fgsm(model, data, epsilon: float, include_z: bool = True) -> np.ndarray:
    """``x + eps * sign(grad_x loss(y))`` in standardized space."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    S = model.standardized(data)
    if epsilon == 0:
        return S
    g = model.loss_input_gradient(S, data.y)
    return S + epsilon * np.sign(g) * _mask(model, include_z)


def target_classes(P: np.ndarray, rule="least_likely") -> np.ndarray:
    if rule == "least_likely":
        return np.argmin(P, axis=1)
    k = int(rule)
    if not 0 <= k < P.shape[1]:
        raise ValueError(f"target class {k} out of range")
    return np.full(P.shape[0], k)


def tgsm(model, data, epsilon: float, target_rule="least_likely", include_z: bool = True) -> np.ndarray:
    """``x - eps * sign(grad_x loss(y_target))``; by default the least likely class per row."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    S = model.standardized(data)
    if epsilon == 0:
        return S
    target = target_classes(model.probabilities_std(S), target_rule)
    Yt = np.eye(model.n_alternatives)[target]
    g = model.loss_input_gradient(S, Yt)
    return S - epsilon * np.sign(g) * _mask(model, include_z)


def gaussian_noise(inputs, epsilon: float, seed: int, mask=None) -> np.ndarray:
    """``x + eps * N(0, 1)`` on already standardized inputs; the draw depends only on ``seed``."""
    S = np.asarray(inputs, dtype=float)
    if epsilon == 0:
        return S.copy()
    noise = substream(seed, "attack:gaussian").standard_normal(S.shape)
    if mask is not None:
        noise = noise * mask
    return S + epsilon * noise


@dataclass
class PerturbationReport:
    attack: str
    epsilons: list
    accuracy: list = field(default_factory=list)
    cross_entropy: list = field(default_factory=list)
    f1: list = field(default_factory=list)
    target_rule: str = ""

    def rows(self):
        for e, a, c, f in zip(self.epsilons, self.accuracy, self.cross_entropy, self.f1):
            yield {"attack": self.attack, "epsilon": e, "accuracy": a, "cross_entropy": c, "f1": f}

    def drop(self, epsilon: float) -> float:
        """Accuracy lost between the clean inputs and ``epsilon``."""
        return self.accuracy[0] - self.accuracy[self.epsilons.index(epsilon)]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["attack", "epsilon", "accuracy", "cross_entropy", "f1"])
    for rep in reports:
        for r in rep.rows():
            w.writerow([r["attack"], repr(float(r["epsilon"])), repr(r["accuracy"]), repr(r["cross_entropy"]),
                        repr(r["f1"])])
    return buf.getvalue()


def robustness_curve(model, test, attack: str, epsilon_grid=DEFAULT_EPSILONS, seed: int = 0,
                     include_z: bool = True, target_rule="least_likely") -> PerturbationReport:
    """Score the fixed ``model`` on ``test`` perturbed at every epsilon of the grid."""
    if attack not in ATTACKS:
        raise ValueError(f"unknown attack {attack!r}")
    eps = [float(e) for e in epsilon_grid]
    if 0.0 not in eps:
        raise ValueError("epsilon grid must contain 0")
    if any(b <= a for a, b in zip(eps, eps[1:])) or eps[0] < 0:
        raise ValueError("epsilon grid must be sorted, unique and non-negative")
    rep = PerturbationReport(attack, eps, target_rule=str(target_rule) if attack == "tgsm" else "")
    S = model.standardized(test)
    for e in eps:
        if attack == "fgsm":
            S_adv = fgsm(model, test, e, include_z)
        elif attack == "tgsm":
            S_adv = tgsm(model, test, e, target_rule, include_z)
        else:
            S_adv = gaussian_noise(S, e, seed, _mask(model, include_z))
        m = metrics.report(model.probabilities_std(S_adv), test.y)
        rep.accuracy.append(m.accuracy)
        rep.cross_entropy.append(m.cross_entropy)
        rep.f1.append(m.f1)
    return rep
