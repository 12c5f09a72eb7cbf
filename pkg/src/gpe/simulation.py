"""Monte Carlo designs, replication runner, metrics and power curves.

Covariates are Gaussian with Toeplitz correlation 0.5^|j-j'| (built by an
AR(1) recursion across columns) and errors are heteroskedastic,
``eps = U sqrt((1 + x_1^2) / 2)``, with U either standard normal or a
standardized chi-square(1).

Replication r uses a Philox stream keyed by ``splitmix64(base_seed, r)``, so
results do not depend on how replications are spread over workers. The
extra 2n rows used by the 3n-sample oracle OLS come from a jumped substream
of the same key.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .comparators import InfeasibleError, ols_fit, oracle_gpe, oracle_ols, plasso_fit
from .dataset import Dataset, prepare
from .distributions import chi2_1_ppf, norm_ppf
from .inference import t_test, theta_functional, z_test
from .selection import select_k

logger = logging.getLogger(__name__)

DGP_NAMES = ("CnS", "CaS1", "CaS2", "DS1", "MnS", "MS", "DnS", "DS2", "DaS2")
ESTIMATORS = ("gpe", "plasso", "ols", "oracle_ols", "oracle_gpe")
GENERATOR_NAME = "numpy Philox4x64-10, key = splitmix64(base_seed, rep); normals by inverse CDF"

# designs paired with a common OLS benchmark share one error family
_CHISQ_ERRORS = {"CnS", "CaS1", "MnS", "MS"}

_ALIASES = {name.lower(): name for name in DGP_NAMES}


def normalize_dgp_name(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown DGP {name!r}; valid names: {', '.join(DGP_NAMES)}") from None


@dataclass(frozen=True)
class DgpSpec:
    name: str
    n: int
    p: int
    cns_literal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "name", normalize_dgp_name(self.name))
        if self.n < 3 or self.p < 2:
            raise ValueError("need n >= 3 and p >= 2")

    @property
    def error_family(self) -> str:
        return "chisq" if self.name in _CHISQ_ERRORS else "normal"


def _tau_grid(p):
    j = np.arange(1, p + 1)
    return 0.9 * (j - 1) / (p - 1) + 0.05


def make_beta(spec: DgpSpec) -> np.ndarray:
    """True coefficient vector of the named design."""
    p, n = spec.p, spec.n
    j = np.arange(1, p + 1)
    first5 = (j <= 5).astype(float)
    tau = _tau_grid(p)
    name = spec.name
    if name == "CnS":
        # the printed slope 4 contradicts the printed range [2, 4]; the range wins by default
        slope = 4.0 if spec.cns_literal else 2.0
        return 2.0 + slope * (j - 1) / (p - 1)
    if name == "CaS1":
        return norm_ppf(tau)
    if name == "CaS2":
        return 0.7 ** (j - 1)
    if name == "DS1":
        return first5
    if name == "MnS":
        return first5 * np.abs(norm_ppf(tau)) + 0.1
    if name == "MS":
        return first5 * norm_ppf(tau)
    if name == "DnS":
        return first5 + 0.1
    if name == "DS2":
        return (j <= math.ceil(p / 2)).astype(float)
    if name == "DaS2":
        return first5 + chi2_1_ppf(tau) / np.sqrt(2.0 * n)
    raise ValueError(f"unknown DGP {name!r}")


_MASK64 = (1 << 64) - 1


def splitmix64(base_seed: int, index: int) -> int:
    """64-bit key for replication `index` (one splitmix64 output step)."""
    z = (int(base_seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _generator(seed: int, substream: int = 0) -> np.random.Generator:
    bitgen = np.random.Philox(key=seed)
    if substream:
        bitgen = bitgen.jumped(substream)
    return np.random.Generator(bitgen)


def _normals(rng, size):
    # 53-bit uniforms offset by half a step, so never exactly 0 or 1
    u = (rng.integers(0, 1 << 53, size=size, dtype=np.uint64).astype(float) + 0.5) / float(1 << 53)
    return norm_ppf(u)


def _draw(rng, n, p, family):
    z = _normals(rng, (n, p))
    X = np.empty((n, p))
    X[:, 0] = z[:, 0]
    rho, s = 0.5, math.sqrt(0.75)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + s * z[:, j]
    w = _normals(rng, n)
    U = (w * w - 1.0) / math.sqrt(2.0) if family == "chisq" else w
    eps = U * np.sqrt((1.0 + X[:, 0] ** 2) / 2.0)
    return X, eps


@dataclass(frozen=True)
class Replication:
    X: np.ndarray
    y: np.ndarray
    beta_true: np.ndarray
    theta_true: float
    seed: int

    def dataset(self) -> Dataset:
        return Dataset(self.y, self.X)


def sample_replication(spec: DgpSpec, seed: int) -> Replication:
    beta = make_beta(spec)
    X, eps = _draw(_generator(seed), spec.n, spec.p, spec.error_family)
    y = X @ beta + eps
    theta = float(theta_functional(spec.p) @ beta)
    return Replication(X, y, beta, theta, seed)


def oracle_sampler(spec: DgpSpec, seed: int):
    """Sampler for the 3n-row oracle: the replication's own rows plus 2n fresh
    rows from a substream of the same key."""
    def sample(m: int) -> Dataset:
        rep = sample_replication(spec, seed)
        extra = m - spec.n
        if extra < 0:
            raise ValueError("oracle sample cannot be smaller than n")
        if extra == 0:
            return rep.dataset()
        X2, eps2 = _draw(_generator(seed, substream=1), extra, spec.p, spec.error_family)
        X = np.vstack([rep.X, X2])
        y = np.concatenate([rep.y, X2 @ rep.beta_true + eps2])
        return Dataset(y, X)
    return sample


@dataclass
class EstimatorResult:
    estimator: str
    theta_hat: float = math.nan
    se: float = math.nan
    mnb: float = math.nan
    model_size: float = math.nan
    clamped: int = 0
    status: str = "ok"


def _fit_one(name, spec, rep, frame, C, template=None):
    tau = theta_functional(spec.p)
    if name == "gpe":
        fit, trace = select_k(frame, C=C, options=template)
        s = t_test(frame, fit, tau)
        return fit.beta_hat, s, trace.chosen_k, trace.clamped
    if name == "oracle_gpe":
        fit, trace = oracle_gpe(frame, rep.beta_true, C=C)
        s = t_test(frame, fit, tau)
        return fit.beta_hat, s, trace.chosen_k, trace.clamped
    if name == "plasso":
        cf = plasso_fit(frame)
        return cf.beta_hat, cf.t_test(frame, tau), cf.model_size, 0
    if name == "ols":
        cf = ols_fit(frame)
        return cf.beta_hat, cf.t_test(frame, tau), cf.model_size, 0
    if name == "oracle_ols":
        cf, big = oracle_ols(oracle_sampler(spec, rep.seed), spec.n)
        return cf.beta_hat, cf.t_test(big, tau), cf.model_size, 0
    raise ValueError(f"unknown estimator {name!r}")


def run_replication(spec: DgpSpec, r: int, base_seed: int, estimators, C: float, template=None):
    """Fit every estimator on replication `r`; returns a list of EstimatorResult."""
    seed = splitmix64(base_seed, r)
    rep = sample_replication(spec, seed)
    frame = prepare(rep.dataset(), intercept=True)
    out = []
    for name in estimators:
        res = EstimatorResult(name)
        try:
            beta_hat, summary, size, clamped = _fit_one(name, spec, rep, frame, C, template)
        except InfeasibleError:
            res.status = "infeasible"
        except Exception as exc:  # recorded and counted, never silently dropped
            logger.warning("replication %d, %s failed: %s", r, name, exc)
            res.status = f"failed: {type(exc).__name__}: {exc}"
        else:
            res.theta_hat = summary.theta_hat
            res.se = summary.se_theta
            res.mnb = float(np.linalg.norm(beta_hat - rep.beta_true) / math.sqrt(spec.p))
            res.model_size = float(size)
            res.clamped = clamped
        out.append(res)
    return out


def _task(args):
    return run_replication(*args)


def run_replications(spec, estimators, reps, base_seed, C, jobs=1, template=None):
    """All replications in index order (a list of per-estimator result lists)."""
    tasks = [(spec, r, base_seed, tuple(estimators), C, template) for r in range(reps)]
    if jobs <= 1 or reps == 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_task, tasks, chunksize=max(1, reps // (4 * jobs))))


def reject_at(res: EstimatorResult, theta_0: float, level: float = 0.05) -> bool:
    return z_test(res.theta_hat, res.se ** 2, None, theta_0, level).reject


@dataclass
class EstimatorSummary:
    estimator: str
    MnB: float
    MAD: float
    RMSE: float
    Rej: float
    med_model_size: float
    n_ok: int
    n_failed: int
    n_infeasible: int
    clamped: int


def summarize(results, theta_true: float, estimator: str, theta_0: float | None = None) -> EstimatorSummary:
    """Aggregate per-replication results of one estimator into the five metrics."""
    theta_0 = theta_true if theta_0 is None else theta_0
    ok = [r for r in results if r.status == "ok"]
    failed = sum(r.status.startswith("failed") for r in results)
    infeasible = sum(r.status == "infeasible" for r in results)
    if not ok:
        nan = math.nan
        return EstimatorSummary(estimator, nan, nan, nan, nan, nan, 0, failed, infeasible, 0)
    err = np.array([r.theta_hat - theta_true for r in ok])
    return EstimatorSummary(
        estimator=estimator,
        MnB=float(np.mean([r.mnb for r in ok])),
        MAD=float(np.median(np.abs(err))),
        RMSE=float(np.sqrt(np.mean(err ** 2))),
        Rej=float(np.mean([reject_at(r, theta_0) for r in ok])),
        med_model_size=float(np.median([r.model_size for r in ok])),
        n_ok=len(ok),
        n_failed=failed,
        n_infeasible=infeasible,
        clamped=int(sum(r.clamped for r in ok)),
    )


@dataclass
class SimulationReport:
    dgp: DgpSpec
    reps: int
    base_seed: int
    C: float
    rows: list
    replication_records: list | None = field(default=None, repr=False)

    def row(self, estimator: str) -> EstimatorSummary:
        for r in self.rows:
            if r.estimator == estimator:
                return r
        raise KeyError(estimator)

    @property
    def n_failed(self) -> int:
        return sum(r.n_failed for r in self.rows)

    def to_dict(self):
        d = {
            "dgp": {**asdict(self.dgp), "error_family": self.dgp.error_family},
            "reps": self.reps,
            "base_seed": self.base_seed,
            "C": self.C,
            "generator": GENERATOR_NAME,
            "theta_true": float(theta_functional(self.dgp.p) @ make_beta(self.dgp)),
            "rows": [asdict(r) for r in self.rows],
        }
        if self.replication_records is not None:
            d["replications"] = self.replication_records
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "MnB", "MAD", "RMSE", "Rej", "med_model_size",
                    "n_ok", "n_failed", "n_infeasible"])
        for r in self.rows:
            w.writerow([r.estimator, *(repr(float(v)) for v in (r.MnB, r.MAD, r.RMSE, r.Rej,
                                                             r.med_model_size)),
                        r.n_ok, r.n_failed, r.n_infeasible])
        return buf.getvalue()

    def format_table(self) -> str:
        head = f"{'':<11}{'MnB':>8}{'MAD':>8}{'RMSE':>8}{'Rej.':>8}{'med(k)':>8}"
        lines = [f"DGP {self.dgp.name}  n={self.dgp.n}  p={self.dgp.p}  reps={self.reps}", head]
        for r in self.rows:
            if r.n_ok == 0:
                lines.append(f"{r.estimator:<11}{'--':>8}{'--':>8}{'--':>8}{'--':>8}{'--':>8}")
                continue
            lines.append(f"{r.estimator:<11}{r.MnB:8.3f}{r.MAD:8.3f}{r.RMSE:8.3f}"
                         f"{r.Rej:8.3f}{r.med_model_size:8g}")
        return "\n".join(lines)


def _check_estimators(estimators):
    estimators = list(estimators)
    if not estimators:
        raise ValueError("at least one estimator is required")
    bad = [e for e in estimators if e not in ESTIMATORS]
    if bad:
        raise ValueError(f"unknown estimator(s) {bad}; valid: {', '.join(ESTIMATORS)}")
    return estimators


def run_mc(spec: DgpSpec, estimators=("gpe",), reps: int = 1000, base_seed: int = 0,
           C: float = 2.7, *, jobs: int = 1, keep_records: bool = False,
           gpe_options=None) -> SimulationReport:
    """Run `reps` replications and aggregate MnB, MAD, RMSE, Rej and median model size."""
    estimators = _check_estimators(estimators)
    if reps < 1:
        raise ValueError("reps must be positive")
    results = run_replications(spec, estimators, reps, base_seed, C, jobs, gpe_options)
    theta_true = float(theta_functional(spec.p) @ make_beta(spec))
    rows = [summarize([res[i] for res in results], theta_true, e) for i, e in enumerate(estimators)]
    records = None
    if keep_records:
        records = [{"rep": r, "seed": splitmix64(base_seed, r), **asdict(x)}
                   for r, res in enumerate(results) for x in res]
    return SimulationReport(spec, reps, base_seed, C, rows, records)


H_MAX = 0.4


def power_curve(spec: DgpSpec, h_grid, reps: int = 1000, base_seed: int = 0, C: float = 2.7,
                estimators=("gpe",), *, jobs: int = 1, gpe_options=None):
    """Rejection rates of H0: theta = theta_true - h sqrt(p) for each h.

    Each replication is fitted once and tested against every shifted null.
    Returns rows of ``(estimator, h, rejection_rate)``.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    if h_grid.size == 0 or np.any(h_grid < 0) or np.any(h_grid > H_MAX + 1e-12):
        raise ValueError(f"h grid must lie in [0, {H_MAX}]")
    estimators = _check_estimators(estimators)
    results = run_replications(spec, estimators, reps, base_seed, C, jobs, gpe_options)
    theta_true = float(theta_functional(spec.p) @ make_beta(spec))
    rows = []
    for i, e in enumerate(estimators):
        ok = [res[i] for res in results if res[i].status == "ok"]
        for h in h_grid:
            theta_0 = theta_true - h * math.sqrt(spec.p)
            rate = float(np.mean([reject_at(r, theta_0) for r in ok])) if ok else math.nan
            rows.append((e, float(h), rate))
    return rows
