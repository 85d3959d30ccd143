"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from tbresnet.dataset import ChoiceDataset, StandardizationStats, SyntheticTruth, generate_synthetic
from tbresnet.dcm import DcmSpec, default_truth, make_theory
from tbresnet.model import DnnConfig, TbResNetModel, loss_gradients
from tbresnet.nn import MlpParams, architecture, mlp_forward

KINK = 1e-6


# Central differences with h = 1e-6 on an O(1) loss resolve about eps / h ~ 1e-10,
# so magnitudes below GRAD_FLOOR are effectively compared with an absolute tolerance.
GRAD_FLOOR = 1e-5
# Full-model checks: the raw-unit theories are steep near p = 1 and small payoffs, and a
# ReLU kink just outside the excluded band can sit inside a wide stencil, so no single
# step is both truncation- and roundoff-safe for every entry.
FULL_STEPS = (1e-4, 1e-5, 1e-6)


def rel_err(a, b, floor=GRAD_FLOOR):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / (np.maximum(np.abs(a), np.abs(b)) + floor)


def central_diff(f, v, h):
    v = np.asarray(v, dtype=float)
    out = np.empty(v.size)
    for j in range(v.size):
        e = np.zeros_like(v)
        e.flat[j] = h
        out[j] = (f(v + e) - f(v - e)) / (2 * h)
    return out.reshape(v.shape)


def five_point_diff(f, v, h):
    """Fourth-order central difference."""
    v = np.asarray(v, dtype=float)
    out = np.empty(v.size)
    for j in range(v.size):
        e = np.zeros_like(v)
        e.flat[j] = h
        out[j] = (f(v - 2 * e) - 8 * f(v - e) + 8 * f(v + e) - f(v + 2 * e)) / (12 * h)
    return out.reshape(v.shape)


def _best_rel_err(f, v, analytic):
    errs = [rel_err(analytic, five_point_diff(f, v, h)) for h in FULL_STEPS]
    return float(np.min(errs, axis=0).max())


def row_losses(v, Y):
    """Per-row ``-log P[chosen]`` evaluated without cancellation near P = 1.

    With ``d = v - v_chosen`` and ``m = max(d) >= 0`` the row loss is
    ``m + log1p(sum_{k != argmax} exp(d_k - m))``.
    """
    d = v - np.sum(v * Y, axis=1, keepdims=True)
    rows = np.arange(len(d))
    top = np.argmax(d, axis=1)
    m = d[rows, top]
    e = np.exp(d - m[:, None])
    e[rows, top] = 0.0
    return m + np.log1p(e.sum(axis=1))


def nll_at(model, S, Y):
    """Mean of :func:`row_losses` for ``model`` at standardized inputs ``S``."""
    return float(np.mean(row_losses(model.utility_std(S), Y)))


def small_model(scenario, seed, n=12, width=8, depth=3):
    """Random model plus the raw dataset it is evaluated on."""
    rng = np.random.default_rng(seed)
    data = generate_synthetic(scenario, n, SyntheticTruth(residual=1.0), seed=seed)
    stats = StandardizationStats.fit(generate_synthetic(scenario, 200, seed=seed + 1))
    spec = DcmSpec.for_dataset(scenario, data)
    theory = make_theory(spec, data.x_columns, list(data.indiv_attr_names))
    if scenario == "mnl":
        theta = rng.normal(0, 0.5, theory.n_params)
    else:
        theta = theory.pack(default_truth(scenario)) + rng.normal(0, 0.01, theory.n_params)
    n_in = data.x.shape[1] + data.z.shape[1]
    mlp = MlpParams.init(architecture(n_in, data.n_alternatives, depth, width), rng)
    mlp = mlp.with_flat(mlp.flat() + rng.normal(0, 0.1, mlp.flat().size))
    delta = float(rng.uniform(0.05, 0.95))
    model = TbResNetModel(delta, spec, theta, mlp, stats, data.alt_attr_names, data.indiv_attr_names)
    return model, data


def small_instance(scenario, seed, n=12, width=8, depth=3):
    """Random model, standardized inputs and one-hot choices for gradient checks."""
    model, data = small_model(scenario, seed, n, width, depth)
    return model, model.standardized(data), np.asarray(data.y, dtype=float)


def near_kink(model, S, margin=KINK):
    """True when a ReLU pre-activation, a clamp threshold or a payoff/probability boundary is within ``margin``."""
    h = S
    for W, b in zip(model.mlp.weights[:-1], model.mlp.biases[:-1]):
        pre = h @ W + b
        if np.any(np.abs(pre) < margin):
            return True
        h = np.maximum(pre, 0)
    th = model.theory
    Xd, Zd = model.dcm_inputs(S)
    if model.spec.scenario == "pt":
        p = th.unpack(model.dcm_theta)
        Zc = th.covariates(Zd)
        for base, w in ((p.r0, p.w_r), (p.alpha0, p.w_alpha), (p.lambda0, p.w_lambda)):
            if np.any(np.abs(base + Zc @ w - 1e-4) < margin):
                return True
        for _, xi, pi in th.pairs:
            if np.any(np.abs(Xd[:, xi]) < margin) or np.any(np.abs(Xd[:, pi] - 1.0) < margin):
                return True
    if model.spec.scenario == "hd":
        p = th.unpack(model.dcm_theta)
        if np.any(np.abs(p.beta0 + th.covariates(Zd) @ p.w_beta - 1e-4) < margin):
            return True
    return False


def full_gradient_errors(model, S, Y):
    """Max relative error of analytic vs finite-difference gradients (theory params, network params, inputs).

    Each entry is compared with the best of the fourth-order estimates at steps ``FULL_STEPS``.
    """
    _, d_theta, d_mlp, d_in = loss_gradients(model, S, Y)
    theory, delta, n = model.theory, model.delta, len(S)
    Xd, Zd = model.dcm_inputs(S)
    v_net = delta * model.components_std(S)[1]
    v_theory = (1.0 - delta) * theory.utility(model.dcm_theta, Xd, Zd)
    theta_err = _best_rel_err(lambda t: np.mean(row_losses((1.0 - delta) * theory.utility(t, Xd, Zd) + v_net, Y)),
                              model.dcm_theta, d_theta)
    mlp_err = _best_rel_err(lambda w: np.mean(row_losses(v_theory + delta * mlp_forward(model.mlp.with_flat(w), S), Y)),
                            model.mlp.flat(), d_mlp.flat())
    # an input entry only moves its own row's loss, so a whole column is stepped at once
    errs = []
    for h in FULL_STEPS:
        num = np.empty_like(S)
        for j in range(S.shape[1]):
            e = np.zeros(S.shape[1])
            e[j] = h
            f = [row_losses(model.utility_std(S + k * e), Y) for k in (-2, -1, 1, 2)]
            num[:, j] = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h) / n
        errs.append(rel_err(d_in, num))
    return theta_err, mlp_err, float(np.min(errs, axis=0).max())


def pure_mnl(beta, K=2, n=40, seed=0, asc=None):
    """Pure-MNL model with per-alternative attribute ``cost`` and coefficients set by hand."""
    rng = np.random.default_rng(seed)
    names = tuple((k, "cost") for k in range(K))
    data = ChoiceDataset.from_choices(K, names, (), rng.uniform(0.5, 3.0, (n, K)), np.zeros((n, 0)),
                                      rng.integers(0, K, n))
    spec = DcmSpec.for_dataset("mnl", data)
    theory = make_theory(spec, data.x_columns, [])
    stats = StandardizationStats.fit(data)
    # the theory sees standardized attributes; choose std-space coefficients giving raw-space beta
    b_std = np.asarray(beta, dtype=float) * stats.x_std
    asc_free = np.zeros(K - 1) if asc is None else np.asarray(asc, dtype=float)[:K - 1]
    shift = b_std * stats.x_mean / stats.x_std
    asc_free = asc_free + shift[:K - 1] - shift[K - 1]
    theta = np.concatenate([asc_free, b_std])
    assert theta.size == theory.n_params
    mlp = MlpParams.zeros([K, 3, K])
    model = TbResNetModel(0.0, spec, theta, mlp, stats, names, ())
    return model, data


def tiny_config(**kw):
    base = dict(depth=3, width=8, iterations=200, batch_size=32)
    base.update(kw)
    return DnnConfig(**base)


def fd_probability_derivatives(model, data, h=1e-5):
    """Central differences of ``P`` (N, K, D) w.r.t. raw columns, stepping the standardized inputs."""
    S = model.standardized(data)
    scale = np.concatenate([model.stats.x_std, model.stats.z_std])
    out = np.empty(S.shape[:1] + (model.n_alternatives,) + S.shape[1:])
    for j in range(S.shape[1]):
        e = np.zeros(S.shape[1])
        e[j] = h
        out[:, :, j] = (model.probabilities_std(S + e) - model.probabilities_std(S - e)) / (2 * h) / scale[j]
    return out


def fd_elasticity_totals(model, data, columns, h=1e-5):
    """``sum_i dP_k/dx * x / P_k`` per (column, alternative) from finite differences, zero rows skipped."""
    dP = fd_probability_derivatives(model, data, h)
    P = model.probabilities(data)
    X = np.hstack([data.x, data.z])
    cols = model.input_columns
    total = np.zeros((len(columns), model.n_alternatives))
    for i, col in enumerate(columns):
        c = cols.index(col)
        use = X[:, c] != 0
        total[i] = np.sum(dP[use, :, c] * X[use, c][:, None] / P[use], axis=0)
    return total
