"""Choice data: container, CSV I/O, splitting, standardization, simulation.

Column naming follows the on-disk layout: alternative-specific attributes
are ``alt<k>__<attr>``, individual covariates are ``z__<attr>`` and the
chosen alternative is an integer ``choice`` column in ``[0, K-1]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from tbresnet._rng import substream

SCENARIOS = ("mnl", "pt", "hd")


class DataError(ValueError):
    """Raised for malformed or inconsistent choice data."""


def alt_column(k: int, attr: str) -> str:
    return f"alt{k}__{attr}"


def z_column(attr: str) -> str:
    return f"z__{attr}"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout of a choice data file."""

    n_alternatives: int
    alt_attr_names: tuple[tuple[int, str], ...]
    indiv_attr_names: tuple[str, ...] = ()

    @property
    def x_columns(self) -> list[str]:
        return [alt_column(k, a) for k, a in self.alt_attr_names]

    @property
    def z_columns(self) -> list[str]:
        return [z_column(a) for a in self.indiv_attr_names]

    @property
    def header(self) -> list[str]:
        return ["choice"] + self.x_columns + self.z_columns

    @classmethod
    def from_header(cls, header: Sequence[str], n_alternatives: int | None = None) -> "DatasetSchema":
        """Infer a schema from column names; K defaults to 1 + the largest alt index."""
        alt, indiv = [], []
        for col in header:
            if col == "choice":
                continue
            if col.startswith("z__") and len(col) > 3:
                indiv.append(col[3:])
                continue
            head, sep, attr = col.partition("__")
            if sep and head.startswith("alt") and head[3:].isdigit() and attr:
                alt.append((int(head[3:]), attr))
                continue
            raise DataError(f"unknown column {col!r}")
        if "choice" not in header:
            raise DataError("missing 'choice' column")
        if n_alternatives is None:
            n_alternatives = max((k for k, _ in alt), default=1) + 1
        return cls(int(n_alternatives), tuple(alt), tuple(indiv))


@dataclass(frozen=True)
class ChoiceDataset:
    """Observations of alternative-specific attributes, covariates and choices.

    ``x`` has one column per ``(alternative, attribute)`` pair in
    ``alt_attr_names`` order; ``z`` one column per covariate; ``y`` is one-hot
    with ``n_alternatives`` columns. Arrays are stored read-only.
    """

    n_alternatives: int
    alt_attr_names: tuple[tuple[int, str], ...]
    indiv_attr_names: tuple[str, ...]
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        K = int(self.n_alternatives)
        if K < 2:
            raise DataError("need at least two alternatives")
        object.__setattr__(self, "alt_attr_names", tuple((int(k), str(a)) for k, a in self.alt_attr_names))
        object.__setattr__(self, "indiv_attr_names", tuple(str(a) for a in self.indiv_attr_names))
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        n = y.shape[0] if y.ndim == 2 else 0
        if n == 0:
            raise DataError("dataset must contain at least one observation")
        x = x.reshape(n, len(self.alt_attr_names))
        z = z.reshape(n, len(self.indiv_attr_names))
        if y.shape != (n, K):
            raise DataError(f"y must have shape ({n}, {K}), got {y.shape}")
        if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
            raise DataError("every row of y must be one-hot")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DataError("attribute values must be finite")
        for k, _ in self.alt_attr_names:
            if not 0 <= k < K:
                raise DataError(f"alternative index {k} out of range for K={K}")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "z", _freeze(z))
        object.__setattr__(self, "y", _freeze(y))

    @classmethod
    def from_choices(cls, n_alternatives, alt_attr_names, indiv_attr_names, x, z, choices):
        choices = np.asarray(choices, dtype=int)
        y = np.zeros((choices.size, n_alternatives))
        y[np.arange(choices.size), choices] = 1.0
        return cls(n_alternatives, tuple(alt_attr_names), tuple(indiv_attr_names), x, z, y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def choices(self) -> np.ndarray:
        return np.argmax(self.y, axis=1)

    @property
    def schema(self) -> DatasetSchema:
        return DatasetSchema(self.n_alternatives, self.alt_attr_names, self.indiv_attr_names)

    @property
    def x_columns(self) -> list[str]:
        return self.schema.x_columns

    @property
    def z_columns(self) -> list[str]:
        return self.schema.z_columns

    def column(self, name: str) -> np.ndarray:
        if name in self.x_columns:
            return self.x[:, self.x_columns.index(name)]
        if name in self.z_columns:
            return self.z[:, self.z_columns.index(name)]
        raise KeyError(f"unknown attribute {name!r}")

    def subset(self, index) -> "ChoiceDataset":
        index = np.asarray(index)
        return ChoiceDataset(self.n_alternatives, self.alt_attr_names, self.indiv_attr_names,
                             self.x[index], self.z[index], self.y[index])

    def with_inputs(self, x: np.ndarray, z: np.ndarray) -> "ChoiceDataset":
        return ChoiceDataset(self.n_alternatives, self.alt_attr_names, self.indiv_attr_names, x, z, self.y)


def load_csv(path, schema: DatasetSchema | None = None) -> ChoiceDataset:
    """Read a choice CSV. Errors name the offending (1-based, header = 1) row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if schema is None:
            schema = DatasetSchema.from_header(header)
        else:
            expected = set(schema.header)
            for col in header:
                if col not in expected:
                    raise DataError(f"unknown column {col!r}")
            missing = expected.difference(header)
            if missing:
                raise DataError(f"missing columns {sorted(missing)}")
        pos = {c: i for i, c in enumerate(header)}
        x_idx = [pos[c] for c in schema.x_columns]
        z_idx = [pos[c] for c in schema.z_columns]
        c_idx = pos["choice"]
        K = schema.n_alternatives
        xs, zs, ch = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {lineno}: malformed row, expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"row {lineno}: malformed row ({exc})") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"row {lineno}: non-finite value")
            c = values[c_idx]
            if c != int(c) or not 0 <= c < K:
                raise DataError(f"row {lineno}: choice id out of range ({row[c_idx]!r} with K={K})")
            xs.append([values[i] for i in x_idx])
            zs.append([values[i] for i in z_idx])
            ch.append(int(c))
    if not ch:
        raise DataError(f"{path}: no observations")
    return ChoiceDataset.from_choices(K, schema.alt_attr_names, schema.indiv_attr_names,
                                      np.array(xs, dtype=float), np.array(zs, dtype=float), ch)


def save_csv(data: ChoiceDataset, path) -> None:
    """Write ``data`` with shortest round-trip float formatting (byte-stable)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.schema.header)
        for c, xr, zr in zip(data.choices, data.x, data.z):
            w.writerow([int(c)] + [repr(float(v)) for v in xr] + [repr(float(v)) for v in zr])


def split(data: ChoiceDataset, train_fraction: float, seed: int) -> tuple[ChoiceDataset, ChoiceDataset]:
    """Random train/test partition; within each part rows keep their input order."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * data.n))
    if n_train == 0 or n_train == data.n:
        raise DataError(f"train_fraction {train_fraction} leaves an empty split for N={data.n}")
    perm = substream(seed, "split").permutation(data.n)
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


@dataclass(frozen=True)
class StandardizationStats:
    """Training-split column means and standard deviations (std 1 for constant columns)."""

    x_mean: np.ndarray
    x_std: np.ndarray
    z_mean: np.ndarray
    z_std: np.ndarray

    @classmethod
    def fit(cls, data: ChoiceDataset) -> "StandardizationStats":
        def moments(a):
            mean = a.mean(axis=0)
            std = a.std(axis=0)
            # exact-constant columns; tiny relative spread is float noise
            std = np.where(std <= 1e-12 * np.maximum(1.0, np.abs(mean)), 1.0, std)
            return mean, std

        xm, xs = moments(data.x)
        zm, zs = moments(data.z)
        return cls(_freeze(xm), _freeze(xs), _freeze(zm), _freeze(zs))

    def transform_x(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_std

    def transform_z(self, z):
        return (np.asarray(z, dtype=float) - self.z_mean) / self.z_std

    def inverse_x(self, xs):
        return np.asarray(xs, dtype=float) * self.x_std + self.x_mean

    def inverse_z(self, zs):
        return np.asarray(zs, dtype=float) * self.z_std + self.z_mean

    def apply(self, data: ChoiceDataset) -> ChoiceDataset:
        return data.with_inputs(self.transform_x(data.x), self.transform_z(data.z))

    def invert(self, data: ChoiceDataset) -> ChoiceDataset:
        return data.with_inputs(self.inverse_x(data.x), self.inverse_z(data.z))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("x_mean", "x_std", "z_mean", "z_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(*(_freeze(np.asarray(d[k], dtype=float)) for k in ("x_mean", "x_std", "z_mean", "z_std")))


def standardize(train: ChoiceDataset, test: ChoiceDataset):
    stats = StandardizationStats.fit(train)
    return stats.apply(train), stats.apply(test), stats


# --------------------------------------------------------------------------
# Synthetic generation
#
# Marginals are moment-matched to published survey summary statistics and drawn
# independently: Bernoulli for dummies, gamma for positive skewed quantities,
# beta for probabilities, normal (clipped) for the rest.
# Monetary payoffs in the PT/HD scenarios are expressed in units of 10,000 dong.


@dataclass(frozen=True)
class Marginal:
    name: str
    kind: str  # bernoulli | gamma | beta | normal | complement | zero
    mean: float = 0.0
    std: float = 0.0
    low: float = -np.inf
    of: str = ""

    def draw(self, rng: np.random.Generator, n: int, drawn: dict) -> np.ndarray:
        if self.kind == "bernoulli":
            return (rng.random(n) < self.mean).astype(float)
        if self.kind == "gamma":
            shape = (self.mean / self.std) ** 2
            return rng.gamma(shape, self.std**2 / self.mean, size=n)
        if self.kind == "beta":
            m, v = self.mean, self.std**2
            s = m * (1 - m) / v - 1
            return np.clip(rng.beta(m * s, (1 - m) * s, size=n), 1e-6, 1 - 1e-6)
        if self.kind == "normal":
            return np.maximum(rng.normal(self.mean, self.std, size=n), self.low)
        if self.kind == "complement":
            return 1.0 - drawn[self.of]
        if self.kind == "zero":
            return np.zeros(n)
        raise ValueError(self.kind)


# (alternative, attribute) marginals; order defines the column layout
SG_ALTERNATIVES = ("walk", "bus", "ridesharing", "drive", "av")
SG_X = (
    (0, Marginal("walk_time", "gamma", 60.50, 54.88)),
    (1, Marginal("cost", "gamma", 2.070, 1.266)),
    (1, Marginal("walk_time", "gamma", 11.96, 10.78)),
    (1, Marginal("wait_time", "gamma", 7.732, 5.033)),
    (1, Marginal("ivt", "gamma", 25.06, 18.91)),
    (2, Marginal("cost", "gamma", 14.48, 11.64)),
    (2, Marginal("wait_time", "gamma", 7.108, 4.803)),
    (2, Marginal("ivt", "gamma", 18.28, 13.39)),
    (3, Marginal("cost", "gamma", 10.49, 10.57)),
    (3, Marginal("walk_time", "gamma", 3.968, 4.176)),
    (3, Marginal("ivt", "gamma", 17.43, 14.10)),
    (4, Marginal("cost", "gamma", 16.08, 14.60)),
    (4, Marginal("wait_time", "gamma", 7.249, 5.674)),
    (4, Marginal("ivt", "gamma", 20.11, 16.99)),
)
SG_Z = (
    Marginal("male", "bernoulli", 0.383),
    Marginal("age_lt_35", "bernoulli", 0.329),
    Marginal("age_gt_60", "bernoulli", 0.075),
    Marginal("low_education", "bernoulli", 0.331),
    Marginal("high_education", "bernoulli", 0.480),
    Marginal("low_income", "bernoulli", 0.035),
    Marginal("high_income", "bernoulli", 0.606),
    Marginal("full_job", "bernoulli", 0.602),
)

PT_X = (
    (0, Marginal("payoff1", "gamma", 3.2, 1.6)),
    (0, Marginal("prob1", "beta", 0.638, 0.263)),
    (0, Marginal("payoff2", "gamma", 1.6, 1.5)),
    (0, Marginal("prob2", "complement", of="alt0__prob1")),
    (1, Marginal("payoff1", "gamma", 7.6, 3.8)),
    (1, Marginal("prob1", "beta", 0.486, 0.252)),
    (1, Marginal("payoff2", "normal", -0.034, 0.964)),
    (1, Marginal("prob2", "complement", of="alt1__prob1")),
)
PT_Z = (
    Marginal("male", "bernoulli", 0.619),
    Marginal("age", "normal", 47.46, 12.89, low=18.0),
    Marginal("school_years", "normal", 6.746, 3.821, low=0.0),
    Marginal("income", "gamma", 20.27, 21.15),
    Marginal("chinese", "bernoulli", 0.055),
    Marginal("market_distance", "gamma", 1.482, 1.840),
    Marginal("south", "bernoulli", 0.541),
)

HD_X = (
    (0, Marginal("payoff1", "gamma", 7.5, 7.8)),
    (0, Marginal("delay1", "zero")),
    (1, Marginal("payoff1", "gamma", 15.0, 10.4)),
    (1, Marginal("delay1", "gamma", 35.67, 32.33)),
)
HD_Z = (
    Marginal("male", "bernoulli", 0.618),
    Marginal("age", "normal", 47.51, 12.94, low=18.0),
    Marginal("school_years", "normal", 6.764, 3.843, low=0.0),
    Marginal("income", "gamma", 20.71, 21.23),
    Marginal("chinese", "bernoulli", 0.055),
    Marginal("market_distance", "gamma", 1.506, 1.846),
    Marginal("south", "bernoulli", 0.534),
    Marginal("trusted_agent", "bernoulli", 0.028),
    Marginal("risk_payment", "gamma", 20.97, 21.17),
)

LAYOUTS = {
    "mnl": (5, SG_X, SG_Z),
    "pt": (2, PT_X, PT_Z),
    "hd": (2, HD_X, HD_Z),
}


def _population_z(marginals) -> tuple[np.ndarray, np.ndarray]:
    mean = np.array([m.mean for m in marginals])
    std = np.array([m.std if m.kind != "bernoulli" else math.sqrt(m.mean * (1 - m.mean)) for m in marginals])
    return mean, std


def gumbel(rng: np.random.Generator, size) -> np.ndarray:
    """Standard Gumbel draws by inverse CDF."""
    u = rng.random(size)
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return -np.log(-np.log(u))


RESIDUAL_FORMS = ("interaction", "linear")


def residual_utility(z_std: np.ndarray, n_alternatives: int, form: str = "interaction") -> np.ndarray:
    """Covariate effect on alternative 0 that the PT and HD theories cannot express.

    ``z_std`` is standardized with population moments. ``"interaction"`` is
    ``(2*dummy - 1) * tanh(2 * z1)`` where column 0 is a dummy; ``"linear"`` is
    ``z1 + z3`` (as many of the two as exist).
    """
    v = np.zeros((z_std.shape[0], n_alternatives))
    if form == "interaction":
        sign = np.where(z_std[:, 0] > 0, 1.0, -1.0)
        v[:, 0] = sign * np.tanh(2.0 * z_std[:, 1])
    elif form == "linear":
        v[:, 0] = z_std[:, 1:4:2].sum(axis=1)
    else:
        raise DataError(f"unknown residual form {form!r}; expected one of {RESIDUAL_FORMS}")
    return v


@dataclass(frozen=True)
class SyntheticTruth:
    """True data-generating parameters for :func:`generate_synthetic`.

    ``params`` is the scenario parameter object (``MnlParams`` / ``PtParams`` /
    ``HdParams``) acting on raw attributes and population-standardized
    covariates. ``residual`` scales :func:`residual_utility` of the given
    ``residual_form``; ``scale`` multiplies the theory utility.
    """

    params: object = None
    residual: float = 0.0
    scale: float = 1.0
    residual_form: str = "interaction"


def true_utility(scenario: str, x: np.ndarray, z: np.ndarray, truth: SyntheticTruth | None = None) -> np.ndarray:
    """Noise-free ``(N, K)`` utilities of the synthetic generator for given raw attributes."""
    from tbresnet import dcm

    truth = truth or SyntheticTruth()
    params = truth.params if truth.params is not None else dcm.default_truth(scenario)
    K, x_marg, z_marg = LAYOUTS[scenario]
    x_cols = [alt_column(k, m.name) for k, m in x_marg]
    z_names = [m.name for m in z_marg]
    zm, zs = _population_z(z_marg)
    z_std = (np.asarray(z, dtype=float) - zm) / zs
    theory = dcm.make_theory(dcm.DcmSpec.for_layout(scenario, K, x_cols, z_names), x_cols, z_names)
    v = truth.scale * theory.utility(theory.pack(params), x, z_std)
    if truth.residual:
        v = v + truth.residual * residual_utility(z_std, K, truth.residual_form)
    return v


def generate_synthetic(scenario: str, n: int, true_params: SyntheticTruth | None = None,
                       noise: str = "gumbel", seed: int = 0) -> ChoiceDataset:
    """Simulate ``n`` choices for the ``mnl`` (SG-style), ``pt`` or ``hd`` scenario."""
    from tbresnet import dcm

    if scenario not in SCENARIOS:
        raise DataError(f"unknown scenario {scenario!r}")
    if n < 1:
        raise DataError("n must be at least 1")
    if noise not in ("gumbel", "none"):
        raise DataError(f"unknown noise {noise!r}")
    truth = true_params or SyntheticTruth()
    params = truth.params if truth.params is not None else dcm.default_truth(scenario)
    dcm.validate_params(scenario, params)
    if truth.residual_form not in RESIDUAL_FORMS:
        raise DataError(f"unknown residual form {truth.residual_form!r}; expected one of {RESIDUAL_FORMS}")

    K, x_marg, z_marg = LAYOUTS[scenario]
    rng = substream(seed, "generate")
    drawn: dict[str, np.ndarray] = {}
    for k, m in x_marg:
        drawn[alt_column(k, m.name)] = m.draw(rng, n, drawn)
    x = np.column_stack([drawn[alt_column(k, m.name)] for k, m in x_marg])
    z = np.column_stack([m.draw(rng, n, drawn) for m in z_marg])
    alt_names = tuple((k, m.name) for k, m in x_marg)
    z_names = tuple(m.name for m in z_marg)

    v = true_utility(scenario, x, z, truth)
    if noise == "gumbel":
        v = v + gumbel(substream(seed, "gumbel"), v.shape)
    choices = np.argmax(v, axis=1)
    return ChoiceDataset.from_choices(K, alt_names, z_names, x, z, choices)


def summary_table(data: ChoiceDataset, alternative_names: Sequence[str] | None = None) -> str:
    """Two-column Name/Mean/Std table followed by sample size and choice shares."""
    names = data.x_columns + data.z_columns
    cols = np.column_stack([data.x, data.z]) if data.z.size else data.x
    rows = [(nm, f"{cols[:, i].mean():.4g}", f"{cols[:, i].std(ddof=1) if data.n > 1 else 0.0:.4g}")
            for i, nm in enumerate(names)]
    width = max([len(r[0]) for r in rows] + [4])
    lines = [f"{'Name':<{width}}  {'Mean':>10}  {'Std.':>10} | {'Name':<{width}}  {'Mean':>10}  {'Std.':>10}"]
    for i in range(0, len(rows), 2):
        left = f"{rows[i][0]:<{width}}  {rows[i][1]:>10}  {rows[i][2]:>10}"
        right = ""
        if i + 1 < len(rows):
            r = rows[i + 1]
            right = f"{r[0]:<{width}}  {r[1]:>10}  {r[2]:>10}"
        lines.append(f"{left} | {right}".rstrip(" |"))
    counts = np.bincount(data.choices, minlength=data.n_alternatives)
    labels = alternative_names or [f"alt{k}" for k in range(data.n_alternatives)]
    shares = "; ".join(f"{labels[k]}: {counts[k]} ({100 * counts[k] / data.n:.2f}%)" for k in range(data.n_alternatives))
    lines.append(f"Number of samples: {data.n}")
    lines.append(f"Number of choices: {shares}")
    return "\n".join(lines)
