"""Theory-driven utility specifications: MNL, prospect theory, hyperbolic discounting.

Each theory maps a flat parameter vector plus attribute matrices to an
``(N, K)`` utility matrix and provides exact derivatives of every utility
with respect to the parameters and to every input column.

PT and HD read monetary payoffs, probabilities and delays in their natural
units. Individual covariates always enter through affine parameter
functions, e.g. ``r(z) = r0 + z @ w_r``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

PROB_FLOOR = 1e-6
POSITIVE_FLOOR = 1e-4
ROLES = ("generic", "payoff", "probability", "delay")


class SpecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scalar building blocks


def pt_value(x, r, lam):
    """Power value function: ``x**r`` for gains, ``-lam * (-x)**r`` for losses."""
    x = np.asarray(x, dtype=float)
    gain = np.power(np.abs(x), r)
    return np.where(x >= 0, gain, -lam * gain)


def pt_weight(p, alpha):
    """Prelec weighting ``exp(-(-ln p)**alpha)`` with ``p`` clamped to ``[1e-6, 1]``."""
    p = np.clip(np.asarray(p, dtype=float), PROB_FLOOR, 1.0)
    return np.exp(-np.power(-np.log(p), alpha))


def hd_value(x, beta, r, t):
    """Discounted payoff ``x * beta * exp(-r t)``."""
    return np.asarray(x, dtype=float) * beta * np.exp(-r * np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class MnlParams:
    """``asc`` (K,) and ``wz`` (K, |z|) have the last alternative fixed at zero."""

    asc: np.ndarray
    beta: np.ndarray
    wz: np.ndarray


@dataclass
class PtParams:
    r0: float
    alpha0: float
    lambda0: float
    w_r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w_alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w_lambda: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class HdParams:
    beta0: float
    r0: float
    w_beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w_r: np.ndarray = field(default_factory=lambda: np.zeros(0))


def validate_params(scenario: str, params) -> None:
    expected = {"mnl": MnlParams, "pt": PtParams, "hd": HdParams}[scenario]
    if not isinstance(params, expected):
        raise SpecError(f"{scenario} scenario needs {expected.__name__}, got {type(params).__name__}")
    if scenario == "pt" and not (params.r0 > 0 and params.alpha0 > 0 and params.lambda0 > 0):
        raise SpecError("prospect theory needs r > 0, alpha > 0, lambda > 0")
    if scenario == "hd" and not params.beta0 > 0:
        raise SpecError("hyperbolic discounting needs beta > 0")


def default_truth(scenario: str):
    """Data-generating parameters used by the synthetic scenarios."""
    if scenario == "mnl":
        beta = np.array([-0.04, -0.3, -0.06, -0.06, -0.04, -0.1, -0.06, -0.04,
                         -0.1, -0.06, -0.04, -0.1, -0.06, -0.04])
        asc = np.array([-0.35, 1.05, 0.05, 1.2, 0.0])
        wz = np.zeros((5, 8))
        wz[3, 0] = 0.3     # male -> drive
        wz[3, 6] = 0.4     # high income -> drive
        wz[0, 1] = 0.2     # young -> walk
        wz[1, 5] = 0.3     # low income -> bus
        wz[2, 7] = -0.2    # full job -> less ridesharing
        return MnlParams(asc, beta, wz)
    if scenario == "pt":
        return PtParams(0.6, 0.7, 2.25,
                        w_r=np.array([0.0, -0.03, 0.02, 0.03, 0.0, 0.0, 0.0]),
                        w_alpha=np.array([0.0, 0.0, 0.03, 0.0, 0.0, 0.0, -0.03]),
                        w_lambda=np.array([-0.2, 0.1, 0.0, -0.1, 0.0, 0.0, 0.0]))
    if scenario == "hd":
        return HdParams(0.5, 0.02,
                        w_beta=np.array([0.0, 0.02, 0.03, 0.05, 0.0, 0.0, 0.0, 0.0, 0.0]),
                        w_r=np.array([0.0, 0.002, -0.002, -0.003, 0.0, 0.0, 0.0, 0.0, 0.0]))
    raise SpecError(f"unknown scenario {scenario!r}")


# ---------------------------------------------------------------------------
# declarative spec


@dataclass(frozen=True)
class DcmSpec:
    """Which theory to use and the role every attribute column plays in it.

    ``roles`` maps an ``alt<k>__<attr>`` column to ``(role, branch)``; PT pairs
    ``payoff``/``probability`` columns sharing a branch within an alternative,
    HD pairs ``payoff``/``delay``. MNL treats every column as ``generic``.
    ``covariates`` names the individual attributes the theory may use.
    """

    scenario: str
    n_alternatives: int
    roles: tuple[tuple[str, str, int], ...]
    covariates: tuple[str, ...] = ()

    def __post_init__(self):
        if self.scenario not in ("mnl", "pt", "hd"):
            raise SpecError(f"unknown scenario {self.scenario!r}")
        # roles are a lookup table; a canonical order makes equality survive serialization
        roles = tuple(sorted((str(c), str(r), int(b)) for c, r, b in self.roles))
        if len({c for c, _, _ in roles}) != len(roles):
            raise SpecError("duplicate column in DCM spec roles")
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "covariates", tuple(self.covariates))
        for col, role, _ in self.roles:
            if role not in ROLES:
                raise SpecError(f"unknown role {role!r} for column {col}")

    @classmethod
    def for_layout(cls, scenario: str, n_alternatives: int, x_columns: Sequence[str],
                   covariates: Sequence[str]) -> "DcmSpec":
        """Infer roles from attribute names ``payoff<j>``, ``prob<j>``, ``delay<j>``."""
        roles = []
        for col in x_columns:
            attr = col.partition("__")[2]
            role, branch = "generic", 0
            if scenario != "mnl":
                for prefix, r in (("payoff", "payoff"), ("prob", "probability"), ("delay", "delay")):
                    if attr.startswith(prefix) and attr[len(prefix):].isdigit():
                        role, branch = r, int(attr[len(prefix):])
            roles.append((col, role, branch))
        return cls(scenario, int(n_alternatives), tuple(roles), tuple(covariates))

    @classmethod
    def for_dataset(cls, scenario: str, data) -> "DcmSpec":
        return cls.for_layout(scenario, data.n_alternatives, data.x_columns, data.indiv_attr_names)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_alternatives": self.n_alternatives,
            "roles": {c: {"role": r, "branch": b} for c, r, b in self.roles},
            "covariates": list(self.covariates),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DcmSpec":
        unknown = set(d) - {"scenario", "n_alternatives", "roles", "covariates"}
        if unknown:
            raise SpecError(f"unknown keys in DCM spec: {sorted(unknown)}")
        roles = tuple((c, v["role"], int(v.get("branch", 0))) for c, v in d["roles"].items())
        return cls(d["scenario"], int(d["n_alternatives"]), roles, tuple(d.get("covariates", ())))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def check_data(self, data) -> None:
        """Raise if ``data`` lacks a spec column or violates a role's domain."""
        cols = data.x_columns
        for col, role, _ in self.roles:
            if col not in cols:
                raise SpecError(f"spec column {col!r} missing from data")
            if role == "probability":
                p = data.x[:, cols.index(col)]
                if np.any(p <= 0) or np.any(p > 1):
                    raise SpecError(f"probability column {col!r} outside (0, 1]")
        for c in self.covariates:
            if c not in data.indiv_attr_names:
                raise SpecError(f"covariate {c!r} missing from data")


class DcmGradients(NamedTuple):
    """Derivatives of each utility ``v[i, k]``; ``clamped`` counts rows hitting a positivity clamp."""

    params: np.ndarray  # (N, K, P)
    x: np.ndarray       # (N, K, Dx)
    z: np.ndarray       # (N, K, Dz)
    clamped: dict


def _clamp(raw):
    ok = raw > POSITIVE_FLOOR
    return np.where(ok, raw, POSITIVE_FLOOR), ok


class _Theory:
    """Shared plumbing: column bookkeeping and covariate selection."""

    scenario = ""
    standardized_x = False

    def __init__(self, spec: DcmSpec, x_columns: Sequence[str], z_names: Sequence[str]):
        self.spec = spec
        self.K = spec.n_alternatives
        self.x_columns = list(x_columns)
        self.z_names = list(z_names)
        self.Dx = len(self.x_columns)
        self.Dz = len(self.z_names)
        missing = [c for c in spec.covariates if c not in self.z_names]
        if missing:
            raise SpecError(f"covariates not in data: {missing}")
        self.cov_idx = np.array([self.z_names.index(c) for c in spec.covariates], dtype=int)
        self.C = len(self.cov_idx)
        role_of = {c: (r, b) for c, r, b in spec.roles}
        self.columns = []  # (x index, alternative, role, branch)
        for i, col in enumerate(self.x_columns):
            if col not in role_of:
                continue
            k = int(col.partition("__")[0][3:])
            if not 0 <= k < self.K:
                raise SpecError(f"column {col} refers to alternative {k} outside K={self.K}")
            r, b = role_of[col]
            self.columns.append((i, k, r, b))

    def covariates(self, Z):
        Z = np.asarray(Z, dtype=float)
        Z = Z.reshape(Z.shape[0] if Z.ndim == 2 else 1, self.Dz)
        return Z[:, self.cov_idx]

    def _floored(self):
        """(intercept index, covariate-weight offset) of each floored linear index."""
        return []

    def floor_rows(self, Z) -> np.ndarray:
        """Matrix ``M`` with ``M @ theta`` listing every floored index of every row.

        The loss has a kink wherever one of these crosses ``POSITIVE_FLOOR``,
        so a minimizer may rest on such a crossing.
        """
        Zc = self.covariates(Z)
        blocks = []
        for i0, off in self._floored():
            M = np.zeros((Zc.shape[0], self.n_params))
            M[:, i0] = 1.0
            M[:, off:off + self.C] = Zc
            blocks.append(M)
        return np.vstack(blocks) if blocks else np.zeros((0, self.n_params))

    def floor_slopes(self, theta, X, Z) -> np.ndarray:
        """``dv/d(index)`` for every floored index as if it were above the floor, shape (N, K, blocks)."""
        lead = [i0 for i0, _ in self._floored()]
        if not lead:
            return np.zeros((np.asarray(X).shape[0], self.K, 0))
        return self.gradients(theta, X, Z, mask_floor=False).params[:, :, lead]

    def _branches(self, first: str, second: str):
        """Group (first, second) role columns into aligned per-branch pairs."""
        table: dict[tuple[int, int], dict[str, int]] = {}
        for i, k, r, b in self.columns:
            if r in (first, second):
                slot = table.setdefault((k, b), {})
                if r in slot:
                    raise SpecError(f"duplicate {r} for alternative {k} branch {b}")
                slot[r] = i
        pairs = []
        for (k, b), slot in sorted(table.items()):
            if first not in slot:
                raise SpecError(f"alternative {k} branch {b} lacks a {first} column")
            pairs.append((k, slot[first], slot.get(second)))
        if not pairs:
            raise SpecError(f"{self.scenario} spec has no {first} columns")
        return pairs

    def init_vector(self) -> np.ndarray:
        return self.pack(self.initial_params())

    def param_names(self) -> list[str]:
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return len(self.param_names())


class MnlTheory(_Theory):
    """``v_k = asc_k + sum_c beta_c x_c + wz_k . z`` with the last alternative as reference."""

    scenario = "mnl"
    standardized_x = True

    def __init__(self, spec, x_columns, z_names):
        super().__init__(spec, x_columns, z_names)
        self.coef_cols = [(i, k) for i, k, _, _ in self.columns]

    def param_names(self):
        names = [f"asc_{k}" for k in range(self.K - 1)]
        names += [f"beta[{self.x_columns[i]}]" for i, _ in self.coef_cols]
        names += [f"wz_{k}[{self.z_names[j]}]" for k in range(self.K - 1) for j in self.cov_idx]
        return names

    def initial_params(self):
        return MnlParams(np.zeros(self.K), np.zeros(len(self.coef_cols)), np.zeros((self.K, self.C)))

    def pack(self, p: MnlParams) -> np.ndarray:
        asc = np.asarray(p.asc, dtype=float)
        wz = np.asarray(p.wz, dtype=float).reshape(self.K, self.C)
        # only differences to the reference alternative are identified
        asc = asc[: self.K - 1] - asc[self.K - 1]
        wz = wz[: self.K - 1] - wz[self.K - 1]
        return np.concatenate([asc, np.asarray(p.beta, dtype=float), wz.ravel()])

    def unpack(self, theta) -> MnlParams:
        K, B, C = self.K, len(self.coef_cols), self.C
        asc = np.append(theta[: K - 1], 0.0)
        beta = np.array(theta[K - 1: K - 1 + B])
        wz = np.vstack([np.reshape(theta[K - 1 + B:], (K - 1, C)), np.zeros((1, C))])
        return MnlParams(asc, beta, wz)

    def utility(self, theta, X, Z):
        p = self.unpack(np.asarray(theta, dtype=float))
        X = np.asarray(X, dtype=float).reshape(-1, self.Dx)
        Zc = self.covariates(Z)
        v = np.tile(p.asc, (X.shape[0], 1)) + Zc @ p.wz.T
        for (i, k), b in zip(self.coef_cols, p.beta):
            v[:, k] += b * X[:, i]
        return v

    def gradients(self, theta, X, Z) -> DcmGradients:
        p = self.unpack(np.asarray(theta, dtype=float))
        X = np.asarray(X, dtype=float).reshape(-1, self.Dx)
        Zc = self.covariates(Z)
        N, K, B, C = X.shape[0], self.K, len(self.coef_cols), self.C
        gp = np.zeros((N, K, self.n_params))
        gx = np.zeros((N, K, self.Dx))
        gz = np.zeros((N, K, self.Dz))
        for k in range(K - 1):
            gp[:, k, k] = 1.0
            start = K - 1 + B + k * C
            gp[:, k, start:start + C] = Zc
        for m, ((i, k), b) in enumerate(zip(self.coef_cols, p.beta)):
            gp[:, k, K - 1 + m] = X[:, i]
            gx[:, k, i] += b
        gz[:, :, self.cov_idx] = p.wz[None, :, :]
        return DcmGradients(gp, gx, gz, {})


class PtTheory(_Theory):
    """``v_k = sum_j c(x_kj; r, lambda) * pi(p_kj; alpha)`` with covariate-dependent r, alpha, lambda."""

    scenario = "pt"

    def __init__(self, spec, x_columns, z_names):
        super().__init__(spec, x_columns, z_names)
        self.pairs = self._branches("payoff", "probability")
        for k, _, pi in self.pairs:
            if pi is None:
                raise SpecError(f"alternative {k} has a payoff without a probability")

    def param_names(self):
        cov = [self.z_names[j] for j in self.cov_idx]
        return (["r0", "alpha0", "lambda0"] + [f"w_r[{c}]" for c in cov]
                + [f"w_alpha[{c}]" for c in cov] + [f"w_lambda[{c}]" for c in cov])

    def initial_params(self):
        # linear value, undistorted probabilities, no loss aversion: expected value
        z = np.zeros(self.C)
        return PtParams(1.0, 1.0, 1.0, z.copy(), z.copy(), z.copy())

    def pack(self, p: PtParams):
        def vec(w):
            w = np.asarray(w, dtype=float)
            return w if w.size else np.zeros(self.C)
        return np.concatenate([[p.r0, p.alpha0, p.lambda0], vec(p.w_r), vec(p.w_alpha), vec(p.w_lambda)])

    def unpack(self, theta) -> PtParams:
        C = self.C
        t = np.asarray(theta, dtype=float)
        return PtParams(t[0], t[1], t[2], t[3:3 + C], t[3 + C:3 + 2 * C], t[3 + 2 * C:3 + 3 * C])

    def _floored(self):
        C = self.C
        return [(0, 3), (1, 3 + C), (2, 3 + 2 * C)]

    def _scalars(self, p: PtParams, Zc):
        r, r_ok = _clamp(p.r0 + Zc @ p.w_r)
        a, a_ok = _clamp(p.alpha0 + Zc @ p.w_alpha)
        lam, l_ok = _clamp(p.lambda0 + Zc @ p.w_lambda)
        return (r, r_ok), (a, a_ok), (lam, l_ok)

    def utility(self, theta, X, Z):
        p = self.unpack(theta)
        X = np.asarray(X, dtype=float).reshape(-1, self.Dx)
        (r, _), (a, _), (lam, _) = self._scalars(p, self.covariates(Z))
        v = np.zeros((X.shape[0], self.K))
        for k, xi, pi in self.pairs:
            v[:, k] += pt_value(X[:, xi], r, lam) * pt_weight(X[:, pi], a)
        return v

    def gradients(self, theta, X, Z, mask_floor: bool = True) -> DcmGradients:
        p = self.unpack(theta)
        X = np.asarray(X, dtype=float).reshape(-1, self.Dx)
        Zc = self.covariates(Z)
        N, K, C = X.shape[0], self.K, self.C
        (r, r_ok), (a, a_ok), (lam, l_ok) = self._scalars(p, Zc)
        dv_dr = np.zeros((N, K))
        dv_da = np.zeros((N, K))
        dv_dl = np.zeros((N, K))
        gx = np.zeros((N, K, self.Dx))
        for k, xi, pi in self.pairs:
            x = X[:, xi]
            prob = X[:, pi]
            ax = np.abs(x)
            neg = x < 0
            safe = np.where(ax > 0, ax, 1.0)
            powr = np.power(ax, r)
            loss_side = np.where(neg, -lam, 1.0)
            c = loss_side * powr
            dc_dr = c * np.log(safe)
            dc_dl = np.where(neg, -powr, 0.0)
            # derivative of |x|^r is unbounded at 0; defined as 0 there
            dc_dx = np.where(ax > 0, np.abs(loss_side) * r * powr / safe, 0.0)

            inside = (prob > PROB_FLOOR) & (prob < 1.0)
            pc = np.clip(prob, PROB_FLOOR, 1.0)
            L = -np.log(pc)
            Ls = np.where(L > 0, L, 1.0)
            La = np.where(L > 0, np.power(Ls, a), 0.0)
            w = np.exp(-La)
            dw_dp = np.where(inside, w * a * La / (Ls * pc), 0.0)
            dw_da = -w * La * np.log(Ls)

            dv_dr[:, k] += dc_dr * w
            dv_dl[:, k] += dc_dl * w
            dv_da[:, k] += c * dw_da
            gx[:, k, xi] += dc_dx * w
            gx[:, k, pi] += c * dw_dp

        if mask_floor:
            dv_dr *= r_ok[:, None]
            dv_da *= a_ok[:, None]
            dv_dl *= l_ok[:, None]
        gp = np.zeros((N, K, self.n_params))
        gp[:, :, 0] = dv_dr
        gp[:, :, 1] = dv_da
        gp[:, :, 2] = dv_dl
        gp[:, :, 3:3 + C] = dv_dr[:, :, None] * Zc[:, None, :]
        gp[:, :, 3 + C:3 + 2 * C] = dv_da[:, :, None] * Zc[:, None, :]
        gp[:, :, 3 + 2 * C:] = dv_dl[:, :, None] * Zc[:, None, :]
        gz = np.zeros((N, K, self.Dz))
        gz[:, :, self.cov_idx] = (dv_dr[:, :, None] * p.w_r + dv_da[:, :, None] * p.w_alpha
                                  + dv_dl[:, :, None] * p.w_lambda)
        clamped = {"r": int(N - r_ok.sum()), "alpha": int(N - a_ok.sum()), "lambda": int(N - l_ok.sum())}
        return DcmGradients(gp, gx, gz, clamped)


class HdTheory(_Theory):
    """``v_k = sum_j x_kj * beta * exp(-r t_kj)`` with covariate-dependent beta and r.

    Only beta is floored; the discount rate is left free so that ``r = 0``
    means no discounting.
    """

    scenario = "hd"

    def __init__(self, spec, x_columns, z_names):
        super().__init__(spec, x_columns, z_names)
        # a payoff without a delay column is paid immediately
        self.pairs = self._branches("payoff", "delay")

    def param_names(self):
        cov = [self.z_names[j] for j in self.cov_idx]
        return ["beta0", "r0"] + [f"w_beta[{c}]" for c in cov] + [f"w_r[{c}]" for c in cov]

    def initial_params(self):
        z = np.zeros(self.C)
        return HdParams(1.0, 0.0, z.copy(), z.copy())

    def pack(self, p: HdParams):
        def vec(w):
            w = np.asarray(w, dtype=float)
            return w if w.size else np.zeros(self.C)
        return np.concatenate([[p.beta0, p.r0], vec(p.w_beta), vec(p.w_r)])

    def _floored(self):
        return [(0, 2)]

    def unpack(self, theta) -> HdParams:
        t = np.asarray(theta, dtype=float)
        C = self.C
        return HdParams(t[0], t[1], t[2:2 + C], t[2 + C:2 + 2 * C])

    def utility(self, theta, X, Z):
        p = self.unpack(theta)
        X = np.asarray(X, dtype=float).reshape(-1, self.Dx)
        Zc = self.covariates(Z)
        beta, _ = _clamp(p.beta0 + Zc @ p.w_beta)
        r = p.r0 + Zc @ p.w_r
        v = np.zeros((X.shape[0], self.K))
        for k, xi, ti in self.pairs:
            t = X[:, ti] if ti is not None else 0.0
            v[:, k] += hd_value(X[:, xi], beta, r, t)
        return v

    def gradients(self, theta, X, Z, mask_floor: bool = True) -> DcmGradients:
        p = self.unpack(theta)
        X = np.asarray(X, dtype=float).reshape(-1, self.Dx)
        Zc = self.covariates(Z)
        N, K, C = X.shape[0], self.K, self.C
        beta, b_ok = _clamp(p.beta0 + Zc @ p.w_beta)
        r = p.r0 + Zc @ p.w_r
        dv_db = np.zeros((N, K))
        dv_dr = np.zeros((N, K))
        gx = np.zeros((N, K, self.Dx))
        for k, xi, ti in self.pairs:
            x = X[:, xi]
            t = X[:, ti] if ti is not None else np.zeros(N)
            disc = np.exp(-r * t)
            dv_db[:, k] += x * disc
            dv_dr[:, k] += -t * x * beta * disc
            gx[:, k, xi] += beta * disc
            if ti is not None:
                gx[:, k, ti] += -r * x * beta * disc
        if mask_floor:
            dv_db *= b_ok[:, None]
        gp = np.zeros((N, K, self.n_params))
        gp[:, :, 0] = dv_db
        gp[:, :, 1] = dv_dr
        gp[:, :, 2:2 + C] = dv_db[:, :, None] * Zc[:, None, :]
        gp[:, :, 2 + C:] = dv_dr[:, :, None] * Zc[:, None, :]
        gz = np.zeros((N, K, self.Dz))
        gz[:, :, self.cov_idx] = dv_db[:, :, None] * p.w_beta + dv_dr[:, :, None] * p.w_r
        clamped = {"beta": int(N - b_ok.sum())}
        return DcmGradients(gp, gx, gz, clamped)


THEORIES = {"mnl": MnlTheory, "pt": PtTheory, "hd": HdTheory}


def make_theory(spec: DcmSpec, x_columns: Sequence[str], z_names: Sequence[str]) -> _Theory:
    return THEORIES[spec.scenario](spec, x_columns, z_names)


# ---------------------------------------------------------------------------
# per-observation conveniences


def mnl_utility(params: MnlParams, x_by_alt: Sequence[Sequence[float]], z) -> np.ndarray:
    """Utilities for one observation; ``x_by_alt[k]`` lists alternative k's attributes.

    ``params.beta`` is laid out alternative by alternative in the same order.
    """
    z = np.asarray(z, dtype=float)
    wz = np.asarray(params.wz, dtype=float).reshape(len(params.asc), z.size)
    beta = np.asarray(params.beta, dtype=float)
    out, pos = [], 0
    for k, xk in enumerate(x_by_alt):
        xk = np.asarray(xk, dtype=float)
        out.append(params.asc[k] + beta[pos:pos + xk.size] @ xk + wz[k] @ z)
        pos += xk.size
    if pos != beta.size:
        raise SpecError("attribute count does not match coefficient count")
    return np.array(out)


def pt_utility(params: PtParams, payoffs, probabilities, z=()) -> np.ndarray:
    """Utilities for one observation; ``payoffs[k]`` and ``probabilities[k]`` are aligned lists."""
    z = np.asarray(z, dtype=float)

    def affine(base, w):
        w = np.asarray(w, dtype=float)
        return max(base + (w @ z if w.size else 0.0), POSITIVE_FLOOR)

    r = affine(params.r0, params.w_r)
    a = affine(params.alpha0, params.w_alpha)
    lam = affine(params.lambda0, params.w_lambda)
    out = []
    for xs, ps in zip(payoffs, probabilities):
        if len(xs) != len(ps):
            raise SpecError("payoff and probability lists differ in length")
        out.append(float(np.sum(pt_value(xs, r, lam) * pt_weight(ps, a))))
    return np.array(out)


def hd_utility(params: HdParams, payoffs, delays, z=()) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    wb = np.asarray(params.w_beta, dtype=float)
    wr = np.asarray(params.w_r, dtype=float)
    beta = max(params.beta0 + (wb @ z if wb.size else 0.0), POSITIVE_FLOOR)
    r = params.r0 + (wr @ z if wr.size else 0.0)
    out = []
    for xs, ts in zip(payoffs, delays):
        if len(xs) != len(ts):
            raise SpecError("payoff and delay lists differ in length")
        out.append(float(np.sum(hd_value(xs, beta, r, ts))))
    return np.array(out)
