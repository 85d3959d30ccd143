"""Theory-based residual network: ``v = (1 - delta) * V_theory + delta * V_dnn``.

Inputs are handled in two spaces. The network always sees standardized
``[x, z]``; the theory sees standardized covariates and either standardized
(MNL) or raw (PT, HD) attributes. A fitted :class:`TbResNetModel` carries the
training-split statistics so callers pass raw datasets.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize

from tbresnet import metrics
from tbresnet._rng import substream
from tbresnet.dataset import ChoiceDataset, StandardizationStats
from tbresnet.dcm import POSITIVE_FLOOR, DcmSpec, make_theory
from tbresnet.nn import MlpParams, architecture, backward_pass, forward_pass, input_jacobian, minibatches, sgd_step

log = logging.getLogger(__name__)

LOSS_FLOOR = 1e-300

DEFAULT_DELTA_GRID = (1e-10, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 0.001, 0.002, 0.004, 0.005, 0.006, 0.007,
                      0.008, 0.009, 0.01, 0.03, 0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95, 0.99, 0.999,
                      0.9999, 1.0)
REDUCED_DELTA_GRID = (1e-10, 1e-4, 0.01, 0.05, 0.1, 0.3, 0.5, 0.9, 1.0)


class TrainingError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


def check_delta_grid(grid) -> tuple:
    grid = tuple(float(d) for d in grid)
    if not grid:
        raise ValueError("delta grid is empty")
    if any(not 0.0 <= d <= 1.0 for d in grid):
        raise ValueError("delta values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("delta grid must be sorted and unique")
    return grid


def choice_probabilities(v) -> np.ndarray:
    """Softmax over the last axis, shifted by the row maximum."""
    v = np.asarray(v, dtype=float)
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class DnnConfig:
    """Network architecture plus the optimizer settings of both components.

    ``dcm_learning_rate`` applies to theory parameters under simultaneous
    training (defaults to ``learning_rate``). The sequential first stage is a
    full-batch quasi-Newton fit bounded by ``dcm_max_iter`` / ``dcm_gtol``.
    """

    depth: int = 3
    width: int = 100
    learning_rate: float = 0.01
    iterations: int = 5000
    batch_size: int = 100
    dcm_learning_rate: float | None = None
    dcm_max_iter: int = 5000
    dcm_gtol: float = 1e-6

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be positive")
        if not self.learning_rate > 0 or self.iterations < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, iterations and batch_size must be positive")
        if self.dcm_learning_rate is not None and not self.dcm_learning_rate > 0:
            raise ValueError("dcm_learning_rate must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TbResNetModel:
    delta: float
    spec: DcmSpec
    dcm_theta: np.ndarray
    mlp: MlpParams
    stats: StandardizationStats
    alt_attr_names: tuple
    indiv_attr_names: tuple
    training: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        self.dcm_theta = np.asarray(self.dcm_theta, dtype=float)
        self.alt_attr_names = tuple((int(k), str(a)) for k, a in self.alt_attr_names)
        self.indiv_attr_names = tuple(self.indiv_attr_names)

    @property
    def n_alternatives(self) -> int:
        return self.spec.n_alternatives

    @property
    def x_columns(self) -> list:
        return [f"alt{k}__{a}" for k, a in self.alt_attr_names]

    @property
    def z_columns(self) -> list:
        return [f"z__{a}" for a in self.indiv_attr_names]

    @property
    def input_columns(self) -> list:
        return self.x_columns + self.z_columns

    @cached_property
    def theory(self):
        return make_theory(self.spec, self.x_columns, list(self.indiv_attr_names))

    # -- input spaces -------------------------------------------------------

    def check_schema(self, data: ChoiceDataset) -> None:
        if (data.n_alternatives != self.n_alternatives or data.alt_attr_names != self.alt_attr_names
                or data.indiv_attr_names != self.indiv_attr_names):
            raise ValueError("dataset columns do not match the model")

    def standardized(self, data: ChoiceDataset) -> np.ndarray:
        """``(N, Dx + Dz)`` standardized inputs for ``data``."""
        self.check_schema(data)
        return np.hstack([self.stats.transform_x(data.x), self.stats.transform_z(data.z)])

    def _split(self, S):
        Dx = len(self.alt_attr_names)
        return S[:, :Dx], S[:, Dx:]

    def dcm_inputs(self, S):
        xs, zs = self._split(S)
        return (xs if self.theory.standardized_x else self.stats.inverse_x(xs)), zs

    # -- utilities ------------------------------------------------------------

    def components_std(self, S):
        """Theory and network utilities at standardized inputs ``S``."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        Xd, Zd = self.dcm_inputs(S)
        v_t = self.theory.utility(self.dcm_theta, Xd, Zd)
        v_n, _ = forward_pass(self.mlp, S)
        return v_t, v_n

    def utility_std(self, S) -> np.ndarray:
        v_t, v_n = self.components_std(S)
        return (1.0 - self.delta) * v_t + self.delta * v_n

    def combined_utility(self, data: ChoiceDataset) -> np.ndarray:
        return self.utility_std(self.standardized(data))

    def probabilities_std(self, S) -> np.ndarray:
        return choice_probabilities(self.utility_std(S))

    def probabilities(self, data: ChoiceDataset) -> np.ndarray:
        return choice_probabilities(self.combined_utility(data))

    def predict(self, data: ChoiceDataset) -> np.ndarray:
        return np.argmax(self.probabilities(data), axis=1)

    def utility_jacobian_std(self, S) -> np.ndarray:
        """``(N, K, Dx + Dz)`` derivatives of combined utilities w.r.t. standardized inputs."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        Xd, Zd = self.dcm_inputs(S)
        g = self.theory.gradients(self.dcm_theta, Xd, Zd)
        gx = g.x if self.theory.standardized_x else g.x * self.stats.x_std
        jac_t = np.concatenate([gx, g.z], axis=2)
        jac = (1.0 - self.delta) * jac_t
        if self.delta > 0:
            jac = jac + self.delta * input_jacobian(self.mlp, S)
        return jac

    def loss_input_gradient(self, S, Y) -> np.ndarray:
        """Per-row gradient of ``-log P[target]`` w.r.t. standardized inputs; ``Y`` one-hot targets."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        Xd, Zd = self.dcm_inputs(S)
        v_t = self.theory.utility(self.dcm_theta, Xd, Zd)
        out, acts = forward_pass(self.mlp, S)
        G = choice_probabilities((1.0 - self.delta) * v_t + self.delta * out) - Y
        g = self.theory.gradients(self.dcm_theta, Xd, Zd)
        gx = g.x if self.theory.standardized_x else g.x * self.stats.x_std
        grad = (1.0 - self.delta) * np.einsum("nk,nkd->nd", G, np.concatenate([gx, g.z], axis=2))
        if self.delta > 0:
            grad = grad + backward_pass(self.mlp, acts, self.delta * G)[2]
        return grad

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "tbresnet-model/1",
            "delta": self.delta,
            "dcm_spec": self.spec.to_dict(),
            "dcm_param_names": self.theory.param_names(),
            "dcm_params": self.dcm_theta.tolist(),
            "mlp": self.mlp.to_dict(),
            "standardization": self.stats.to_dict(),
            "schema": {
                "n_alternatives": self.n_alternatives,
                "alt_attr_names": [list(p) for p in self.alt_attr_names],
                "indiv_attr_names": list(self.indiv_attr_names),
            },
            "training": self.training,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TbResNetModel":
        if d.get("format") != "tbresnet-model/1":
            raise ValueError("not a tbresnet model document")
        schema = d["schema"]
        return cls(
            delta=float(d["delta"]),
            spec=DcmSpec.from_dict(d["dcm_spec"]),
            dcm_theta=np.asarray(d["dcm_params"], dtype=float),
            mlp=MlpParams.from_dict(d["mlp"]),
            stats=StandardizationStats.from_dict(d["standardization"]),
            alt_attr_names=tuple(tuple(p) for p in schema["alt_attr_names"]),
            indiv_attr_names=tuple(schema["indiv_attr_names"]),
            training=d.get("training", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TbResNetModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def nll(model: TbResNetModel, data: ChoiceDataset) -> float:
    """Mean negative log-probability of the chosen alternatives."""
    P = model.probabilities(data)
    chosen = np.sum(P * data.y, axis=1)
    return float(-np.mean(np.log(np.maximum(chosen, LOSS_FLOOR))))


def loss_gradients(model: TbResNetModel, S, Y):
    """Mean NLL at standardized inputs ``S`` and its gradients.

    Returns ``(loss, d_theory_params, d_mlp as MlpParams, d_inputs (N, D))``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    Y = np.asarray(Y, dtype=float)
    n = len(Y)
    Xd, Zd = model.dcm_inputs(S)
    theory, d = model.theory, model.delta
    out, acts = forward_pass(model.mlp, S)
    P = choice_probabilities((1.0 - d) * theory.utility(model.dcm_theta, Xd, Zd) + d * out)
    loss = _batch_loss(P, Y)
    G = (P - Y) / n
    g = theory.gradients(model.dcm_theta, Xd, Zd)
    d_theta = (1.0 - d) * np.einsum("nk,nkp->p", G, g.params)
    gx = g.x if theory.standardized_x else g.x * model.stats.x_std
    d_in = (1.0 - d) * np.einsum("nk,nkd->nd", G, np.concatenate([gx, g.z], axis=2))
    dWs, dbs, dS = backward_pass(model.mlp, acts, d * G)
    return loss, d_theta, MlpParams(model.mlp.layer_dims, dWs, dbs), d_in + dS


# ---------------------------------------------------------------------------
# training


def _batch_loss(P, Y):
    return float(-np.mean(np.log(np.maximum(np.sum(P * Y, axis=1), LOSS_FLOOR))))


def _manifold_newton(objective, theta, M, floor, active, max_iter: int = 50):
    """Newton iterations for the loss restricted to ``M[active] @ theta = floor``.

    A step that would carry a free row across its kink stops there and pins it.
    """
    eps = np.finfo(float).eps
    steps = 0
    while steps < max_iter:
        A = M[active]
        if A.shape[0]:
            theta = theta - np.linalg.lstsq(A, A @ theta - floor, rcond=1e-10)[0]
            basis = null_space(A, rcond=1e-10)
        else:
            basis = np.eye(theta.size)
        loss, grad = objective(theta)
        reduced = basis.T @ grad
        if basis.shape[1] == 0:
            break
        H = np.empty((basis.shape[1], basis.shape[1]))
        h = 1e-8 * max(1.0, np.linalg.norm(theta))
        for j, d in enumerate(basis.T):
            H[:, j] = basis.T @ (objective(theta + h * d)[1] - objective(theta - h * d)[1]) / (2 * h)
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        if w[0] < -1e-8 * np.abs(w).max():
            # the nonconvex loss has a saddle here: follow negative curvature
            step = basis @ V[:, 0]
            if step @ grad > 0:
                step = -step
        elif np.linalg.norm(reduced) < 1e-13:
            break
        else:
            inv = np.where(w > 1e-12 * w[-1], 1.0 / w, 0.0)
            step = -basis @ (V @ (inv * (V.T @ reduced)))
        steps += 1
        gap, rate = M @ theta - floor, M @ step
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cross = np.where(~active & (gap * rate < 0), -gap / rate, np.inf)
        hit = int(np.argmin(t_cross)) if t_cross.size else -1
        t = min(1.0, t_cross[hit]) if hit >= 0 else 1.0
        for _ in range(30):
            cand_loss = objective(theta + t * step)[0]
            if cand_loss <= loss + 8 * eps * abs(loss):
                break
            t /= 2
        else:
            break
        if hit >= 0 and t == t_cross[hit]:
            active[hit] = True
        theta = theta + t * step
        if np.linalg.norm(t * step) <= 4 * eps * max(1.0, np.linalg.norm(theta)):
            break
    return theta, basis, steps


def _newton_polish(objective, slopes, theta, M, floor, tol: float = 1e-5, max_release: int = 20):
    """Refine a quasi-Newton solution with Newton steps on the kink set it rests on.

    ``M @ theta`` lists the floored indices and ``slopes(theta)`` the loss
    slope of each one taken from above the floor. Rows within ``tol`` of the
    floor start pinned. On the pinned set the loss is smooth and the gradient
    jump at each kink is orthogonal to it, so Newton converges there. A pinned
    row is released when its multiplier shows that the loss falls on leaving
    the kink. Near the optimum of raw-unit theories the loss is flat to
    rounding, so steps are accepted up to rounding.
    """
    active = np.abs(M @ theta - floor) < tol
    total = 0
    for _ in range(max_release):
        theta, basis, steps = _manifold_newton(objective, theta, M, floor, active)
        total += steps
        if not active.any():
            break
        A = M[active]
        D = slopes(theta)[active]
        above = (A @ theta) > floor
        grad = objective(theta)[1]
        # gradient with every pinned row taken on its floored side
        g0 = grad - A.T @ (D * above)
        c = np.linalg.lstsq(A.T, -g0, rcond=1e-10)[0]
        slack = 1e-6 * max(np.abs(D).max(), 1e-300)
        violation = np.maximum(-c, c - D)
        worst = int(np.argmax(violation))
        if violation[worst] <= slack:
            break
        idx = np.flatnonzero(active)[worst]
        active[idx] = False
        # step off the kink toward the side the multiplier favours
        u = M[idx]
        if active.any():
            free = null_space(M[active], rcond=1e-10)
            u = free @ (free.T @ u)
        theta = theta + (1e-6 if c[worst] > D[worst] else -1e-6) * u / (M[idx] @ u)
    loss, grad = objective(theta)
    return theta, loss, basis @ (basis.T @ grad), int(active.sum()), total


def fit_dcm(theory, Xd, Zd, Y, scale: float = 1.0, theta0=None, max_iter: int = 5000, gtol: float = 1e-6):
    """Maximum-likelihood fit of the theory with utilities multiplied by ``scale``.

    L-BFGS-B followed by Newton steps that respect the positivity kinks (see
    ``_newton_polish``). Returns ``(theta, info)`` where
    ``info`` has the per-iteration loss trace, the final gradient norm and the
    optimizer status.
    """
    theta0 = theory.init_vector() if theta0 is None else np.asarray(theta0, dtype=float)
    N = Y.shape[0]
    cache = {}

    def objective(theta):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            v = scale * theory.utility(theta, Xd, Zd)
            P = choice_probabilities(v)
            loss = _batch_loss(P, Y)
            g = theory.gradients(theta, Xd, Zd).params
            grad = scale * np.einsum("nk,nkp->p", P - Y, g) / N
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            # steer the line search back from overflow
            return 1e10, np.zeros_like(theta)
        cache[theta.tobytes()] = loss
        return loss, grad

    trace = [objective(theta0)[0]]

    def record(xk):
        trace.append(cache.get(xk.tobytes(), np.nan))

    res = minimize(objective, theta0, jac=True, method="L-BFGS-B", callback=record,
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0, "maxcor": 20})
    final_loss, final_grad = objective(res.x)
    if not np.isfinite(final_loss) or final_loss >= 1e10:
        raise TrainingError("theory fit diverged")

    def slopes(theta):
        P = choice_probabilities(scale * theory.utility(theta, Xd, Zd))
        F = theory.floor_slopes(theta, Xd, Zd)
        return (scale / N * np.einsum("nk,nkb->bn", P - Y, F)).ravel()

    theta, polished_loss, polished_grad, pinned, polished = _newton_polish(
        objective, slopes, res.x, theory.floor_rows(Zd), POSITIVE_FLOOR)
    if polished_loss <= final_loss + 1e-12 * abs(final_loss):
        final_loss, final_grad = polished_loss, polished_grad
    else:
        # the pinned kink set was wrong; keep the quasi-Newton answer
        theta, pinned, polished = res.x, 0, 0
    info = {
        "loss_trace": [float(v) for v in trace],
        "final_loss": float(final_loss),
        "grad_norm": float(np.linalg.norm(final_grad)),
        "iterations": int(res.nit),
        "newton_steps": int(polished),
        "kink_constraints": pinned,
        "converged": bool(np.linalg.norm(final_grad) < gtol or res.success),
        "message": str(res.message),
    }
    return theta, info


@dataclass
class _Prepared:
    stats: StandardizationStats
    S: np.ndarray
    Xd: np.ndarray
    Zd: np.ndarray
    Y: np.ndarray
    theory: object
    dims: list


def _prepare(spec: DcmSpec, train: ChoiceDataset, config: DnnConfig) -> _Prepared:
    spec.check_data(train)
    stats = StandardizationStats.fit(train)
    xs, zs = stats.transform_x(train.x), stats.transform_z(train.z)
    theory = make_theory(spec, train.x_columns, list(train.indiv_attr_names))
    Xd = xs if theory.standardized_x else np.asarray(train.x)
    S = np.hstack([xs, zs])
    dims = architecture(S.shape[1], train.n_alternatives, config.depth, config.width)
    return _Prepared(stats, S, Xd, zs, np.asarray(train.y), theory, dims)


def _model(delta, spec, theta, mlp, prep, train, training) -> TbResNetModel:
    return TbResNetModel(delta, spec, theta, mlp, prep.stats, train.alt_attr_names,
                         train.indiv_attr_names, training)


def _update_mlp(mlp: MlpParams, dWs, dbs, lr, t):
    # one reduction per step instead of a finiteness scan per array; any inf or nan poisons the sum
    if not np.isfinite(sum(float(g.sum()) for g in dWs) + sum(float(g.sum()) for g in dbs)):
        raise TrainingError(f"non-finite gradient at iteration {t}")
    for l in range(len(mlp.weights)):
        mlp.weights[l] = mlp.weights[l] - lr * dWs[l]
        mlp.biases[l] = mlp.biases[l] - lr * dbs[l]


def train_dnn(train: ChoiceDataset, config: DnnConfig = DnnConfig(), seed: int = 0) -> tuple[MlpParams, StandardizationStats, list]:
    """Fit a standalone softmax network on standardized ``[x, z]``."""
    stats = StandardizationStats.fit(train)
    S = np.hstack([stats.transform_x(train.x), stats.transform_z(train.z)])
    Y = np.asarray(train.y)
    dims = architecture(S.shape[1], train.n_alternatives, config.depth, config.width)
    mlp = MlpParams.init(dims, substream(seed, "init"))
    losses = []
    for t, idx in enumerate(minibatches(len(Y), config.batch_size, config.iterations, substream(seed, "batching"))):
        out, acts = forward_pass(mlp, S[idx])
        P = choice_probabilities(out)
        loss = _batch_loss(P, Y[idx])
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at iteration {t}")
        losses.append(loss)
        G = (P - Y[idx]) / len(idx)
        dWs, dbs, _ = backward_pass(mlp, acts, G, need_input=False)
        _update_mlp(mlp, dWs, dbs, config.learning_rate, t)
    return mlp, stats, losses


def train_sequential(spec: DcmSpec, delta: float, train: ChoiceDataset, config: DnnConfig = DnnConfig(),
                     seed: int = 0) -> TbResNetModel:
    """Fit the theory on ``(1 - delta)``-scaled utilities, then the network on top of it.

    At ``delta == 1`` the first stage is skipped and the theory parameters are
    zeros; at ``delta == 0`` the network stays at its initialization.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    prep = _prepare(spec, train, config)
    theory = prep.theory
    training = {"trainer": "sequential", "seed": int(seed), "config": config.to_dict()}
    if delta < 1.0:
        theta, info = fit_dcm(theory, prep.Xd, prep.Zd, prep.Y, scale=1.0 - delta,
                              max_iter=config.dcm_max_iter, gtol=config.dcm_gtol)
        training["stage1"] = info
    else:
        theta = np.zeros(theory.n_params)
        training["stage1"] = {"skipped": True}
    clamp = theory.gradients(theta, prep.Xd, prep.Zd).clamped
    training["clamped_rows"] = clamp
    if any(clamp.values()) and delta < 1.0:
        log.info("theory parameters clamped on %s rows", clamp)

    offset = (1.0 - delta) * theory.utility(theta, prep.Xd, prep.Zd)
    mlp = MlpParams.init(prep.dims, substream(seed, "init"))
    losses = []
    if delta > 0.0:
        Y, S = prep.Y, prep.S
        for t, idx in enumerate(minibatches(len(Y), config.batch_size, config.iterations,
                                            substream(seed, "batching"))):
            out, acts = forward_pass(mlp, S[idx])
            P = choice_probabilities(offset[idx] + delta * out)
            loss = _batch_loss(P, Y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at iteration {t}")
            losses.append(loss)
            G = (P - Y[idx]) / len(idx)
            dWs, dbs, _ = backward_pass(mlp, acts, delta * G, need_input=False)
            _update_mlp(mlp, dWs, dbs, config.learning_rate, t)
    training["stage2_loss"] = losses
    return _model(delta, spec, theta, mlp, prep, train, training)


def train_simultaneous(spec: DcmSpec, delta: float, train: ChoiceDataset, config: DnnConfig = DnnConfig(),
                       seed: int = 0) -> TbResNetModel:
    """Update theory and network parameters together in every SGD step."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    prep = _prepare(spec, train, config)
    theory = prep.theory
    theta = theory.init_vector()
    dcm_lr = config.dcm_learning_rate or config.learning_rate
    mlp = MlpParams.init(prep.dims, substream(seed, "init"))
    Y, S, Xd, Zd = prep.Y, prep.S, prep.Xd, prep.Zd
    losses = []
    for t, idx in enumerate(minibatches(len(Y), config.batch_size, config.iterations,
                                        substream(seed, "batching"))):
        out, acts = forward_pass(mlp, S[idx])
        v_t = theory.utility(theta, Xd[idx], Zd[idx])
        P = choice_probabilities((1.0 - delta) * v_t + delta * out)
        loss = _batch_loss(P, Y[idx])
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at iteration {t}")
        losses.append(loss)
        G = (P - Y[idx]) / len(idx)
        if delta < 1.0:
            gp = theory.gradients(theta, Xd[idx], Zd[idx]).params
            theta = sgd_step(theta, (1.0 - delta) * np.einsum("nk,nkp->p", G, gp), dcm_lr, t)
        if delta > 0.0:
            dWs, dbs, _ = backward_pass(mlp, acts, delta * G, need_input=False)
            _update_mlp(mlp, dWs, dbs, config.learning_rate, t)
    if delta == 1.0:
        theta = np.zeros(theory.n_params)
    training = {"trainer": "simultaneous", "seed": int(seed), "config": config.to_dict(),
                "loss": losses, "clamped_rows": theory.gradients(theta, Xd, Zd).clamped}
    return _model(delta, spec, theta, mlp, prep, train, training)


TRAINERS = {"sequential": train_sequential, "simultaneous": train_simultaneous}


# ---------------------------------------------------------------------------
# delta sweep


@dataclass
class SweepResult:
    rows: list
    baseline: float
    trainer: str
    models: dict = field(default_factory=dict, repr=False)

    def _ok(self):
        return [r for r in self.rows if r["status"] == "ok"]

    @property
    def best_accuracy_delta(self) -> float | None:
        ok = self._ok()
        # max() keeps the first maximum, i.e. the smallest delta on ties
        return max(ok, key=lambda r: r["accuracy"])["delta"] if ok else None

    @property
    def best_loss_delta(self) -> float | None:
        ok = self._ok()
        return min(ok, key=lambda r: r["cross_entropy"])["delta"] if ok else None

    def accuracy(self, delta: float) -> float:
        return next(r["accuracy"] for r in self.rows if r["delta"] == delta)


def _sweep_job(args):
    spec, delta, train, test, config, trainer, seed = args
    try:
        model = TRAINERS[trainer](spec, delta, train, config, seed)
        rep = metrics.evaluate(model, test)
        row = {"delta": delta, "accuracy": rep.accuracy, "cross_entropy": rep.cross_entropy,
               "f1": rep.f1, "seed": seed, "status": "ok", "error": ""}
        return row, model
    except Exception as exc:  # one failing delta must not stop the sweep
        log.warning("delta=%g failed: %s", delta, exc)
        return {"delta": delta, "accuracy": float("nan"), "cross_entropy": float("nan"), "f1": float("nan"),
                "seed": seed, "status": "failed", "error": str(exc)}, None


def sweep(spec: DcmSpec, grid, train: ChoiceDataset, test: ChoiceDataset, config: DnnConfig = DnnConfig(),
          trainer: str = "sequential", seed: int = 0, workers: int = 1, keep_models: bool = False) -> SweepResult:
    """Fit one model per delta from scratch and score each on ``test``."""
    grid = check_delta_grid(grid)
    if trainer not in TRAINERS:
        raise ValueError(f"unknown trainer {trainer!r}")
    jobs = [(spec, d, train, test, config, trainer, seed) for d in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    baseline = float(np.bincount(test.choices, minlength=test.n_alternatives).max() / test.n)
    out = SweepResult([r for r, _ in results], baseline, trainer)
    if keep_models:
        out.models = {r["delta"]: m for r, m in results}
    return out
