"""Superior-predictive-ability testing over hedge-model loss series.

Implements the studentized max statistic with a stationary bootstrap
(circular blocks, geometric lengths), the automatic block-length rule from
flat-top lag-window autocovariances, lower/consistent/upper recentering
variants, ADF/KPSS stationarity advisories, and the two-condition scan for a
universally superior model across universes.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .backtest import BacktestResult

log = logging.getLogger(__name__)

LOSS_KINDS = ("absolute", "squared")
MIN_SERIES_LENGTH = 30
ZERO_VARIANCE_EPS = 1e-12
KPSS_CRIT_5PCT = 0.463


@dataclass
class LossMatrix:
    """Losses L[t, m]; column 0 is the benchmark model."""

    L: np.ndarray
    loss_kind: str
    labels: list[str]

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.L.ndim != 2 or self.L.shape[1] != len(self.labels):
            raise ValueError(f"loss matrix {self.L.shape} does not match labels {self.labels}")
        if not np.isfinite(self.L).all():
            raise ValueError("loss matrix contains non-finite entries")
        if self.L.shape[0] < MIN_SERIES_LENGTH:
            log.warning("loss series has only %d observations", self.L.shape[0])


@dataclass
class StationarityVerdict:
    adf_rejects_unit_root: bool | None
    kpss_rejects_stationarity: bool | None
    degenerate: bool = False


@dataclass
class SpaResult:
    p_lower: float
    p_consistent: float
    p_upper: float
    statistic: float
    block_p: float
    n_boot: int
    seed: int
    stationarity: list[StationarityVerdict] = field(default_factory=list)
    excluded: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.p_lower <= self.p_consistent <= self.p_upper <= 1.0:
            raise ValueError(
                f"p-value ordering violated: {self.p_lower} / {self.p_consistent} / {self.p_upper}"
            )


def losses_from_backtest(result: BacktestResult, loss_kind: str, model_order: list[str]) -> LossMatrix:
    """Loss matrix from hedge errors; model_order[0] is the benchmark."""
    cols = []
    for model_id in model_order:
        err = result.hedge_errors(model_id)
        cols.append(np.abs(err) if loss_kind == "absolute" else err**2)
    return LossMatrix(L=np.column_stack(cols), loss_kind=loss_kind, labels=list(model_order))


def relative_performance(losses: LossMatrix) -> np.ndarray:
    """R[t, m] = benchmark loss minus loss of alternative m (positive means
    the alternative beat the benchmark at time t)."""
    if losses.L.shape[1] < 2:
        raise ValueError("need at least one alternative model")
    return losses.L[:, :1] - losses.L[:, 1:]


def _flat_top_window(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    ax = np.abs(x)
    out[ax <= 0.5] = 1.0
    mid = (ax > 0.5) & (ax <= 1.0)
    out[mid] = 2.0 * (1.0 - ax[mid])
    return out


def _autocovariances(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = len(x)
    xc = x - x.mean()
    return np.array([np.dot(xc[: n - k], xc[k:]) / n for k in range(max_lag + 1)])


def auto_block_length(series: np.ndarray) -> float:
    """Geometric-block probability p = 1/b* from the automatic rule: find the
    lag beyond which autocorrelations are negligible, form flat-top-weighted
    autocovariance sums, and balance bias against variance at rate n^(1/3).
    Clamped to [1/n, 1]."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    var = float(np.var(x))
    if var <= ZERO_VARIANCE_EPS:
        log.warning("zero-variance series; block length clamped to 1")
        return 1.0
    max_lag = min(n - 1, int(math.ceil(math.sqrt(n))) + 20)
    acov = _autocovariances(x, max_lag)
    rho = acov / acov[0]
    k_n = max(5, int(math.ceil(math.sqrt(math.log10(n)))))
    threshold = 2.0 * math.sqrt(math.log10(n) / n)
    m_hat = None
    for m in range(1, len(rho) - k_n):
        if np.all(np.abs(rho[m + 1 : m + k_n + 1]) < threshold):
            m_hat = m
            break
    if m_hat is None:
        m_hat = max(1, len(rho) - k_n - 1)
    big_m = min(2 * m_hat, n - 1)
    lags = np.arange(1, big_m + 1)
    lam = _flat_top_window(lags / big_m)
    g_hat = 2.0 * float(np.sum(lam * lags * acov[1 : big_m + 1]))
    d_hat = 2.0 * float(acov[0] + 2.0 * np.sum(lam * acov[1 : big_m + 1])) ** 2
    if d_hat <= 0:
        return 1.0
    b_star = (2.0 * g_hat * g_hat / d_hat) ** (1.0 / 3.0) * n ** (1.0 / 3.0)
    b_star = min(max(b_star, 1.0), float(n))
    return 1.0 / b_star


def stationary_bootstrap(
    data, p_geo: float, n_boot: int, seed: int
) -> np.ndarray:
    """Index streams (n_boot x n) for circular block resampling with
    geometric block lengths of mean 1/p_geo. The same stream applies to all
    columns of a row-sampled matrix, preserving cross-model dependence."""
    if not 0.0 < p_geo <= 1.0:
        raise ValueError(f"p_geo must be in (0, 1], got {p_geo}")
    if np.ndim(data) == 0:
        n = int(data)
    else:
        n = np.asarray(data).shape[0]
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    fresh = gen.random((n_boot, n)) < p_geo
    fresh[:, 0] = True
    starts = gen.integers(0, n, size=(n_boot, n))
    pos = np.arange(n)
    start_pos = np.maximum.accumulate(np.where(fresh, pos[None, :], 0), axis=1)
    anchors = np.where(fresh, starts, 0)
    anchor_at_start = np.take_along_axis(anchors, start_pos, axis=1)
    return (anchor_at_start + (pos[None, :] - start_pos)) % n


def stationarity_checks(series: np.ndarray) -> StationarityVerdict:
    """ADF (constant, fixed lag 12*(n/100)^(1/4)) and KPSS (level, automatic
    Newey-West bandwidth) verdicts at the 5% level. Advisory only."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < MIN_SERIES_LENGTH or float(np.var(x)) <= ZERO_VARIANCE_EPS:
        return StationarityVerdict(None, None, degenerate=True)
    from statsmodels.tsa.stattools import adfuller, kpss

    max_lag = int(12 * (n / 100.0) ** 0.25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        adf = adfuller(x, maxlag=min(max_lag, n // 2 - 2), regression="c", autolag=None)
        kp = kpss(x, regression="c", nlags="auto")
    return StationarityVerdict(
        adf_rejects_unit_root=bool(adf[0] < adf[4]["5%"]),
        kpss_rejects_stationarity=bool(kp[0] > KPSS_CRIT_5PCT),
    )


def _bootstrap_variances(R: np.ndarray, p_geo: float) -> np.ndarray:
    """Closed-form asymptotic variance of sqrt(n) * column means under the
    stationary bootstrap (kernel weights implied by geometric blocks)."""
    n, m = R.shape
    omega = np.empty(m)
    lags = np.arange(1, n)
    kappa = ((n - lags) / n) * (1.0 - p_geo) ** lags + (lags / n) * (1.0 - p_geo) ** (n - lags)
    for j in range(m):
        acov = _autocovariances(R[:, j], n - 1)
        om2 = float(acov[0] + 2.0 * np.sum(kappa * acov[1:]))
        omega[j] = math.sqrt(max(om2, 0.0))
    return omega


def spa_test(
    R: np.ndarray,
    n_boot: int = 1000,
    seed: int = 0,
    p_geo: float | None = None,
) -> SpaResult:
    """Test that the benchmark is not inferior to any alternative.

    R holds relative performance (benchmark loss minus alternative loss);
    positive column means favor the alternatives. Studentized max statistic
    with three bootstrap recentering rules giving lower / consistent / upper
    p-values; a large p-value means no evidence against the benchmark.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    n, n_models = R.shape
    stationarity = [stationarity_checks(R[:, j]) for j in range(n_models)]

    if p_geo is None:
        block_lengths = []
        for j in range(n_models):
            p_j = auto_block_length(R[:, j])
            block_lengths.append(1.0 / p_j)
        p_geo = 1.0 / min(max(float(np.mean(block_lengths)), 1.0), float(n))

    means = R.mean(axis=0)
    omega = _bootstrap_variances(R, p_geo)
    alive = omega > ZERO_VARIANCE_EPS
    excluded = [j for j in range(n_models) if not alive[j]]
    for j in excluded:
        log.warning("model column %d has zero variance; excluded from the test", j)
    if not alive.any():
        return SpaResult(
            p_lower=1.0, p_consistent=1.0, p_upper=1.0, statistic=0.0,
            block_p=p_geo, n_boot=n_boot, seed=seed,
            stationarity=stationarity, excluded=excluded,
        )

    Ra, mu, om = R[:, alive], means[alive], omega[alive]
    root_n = math.sqrt(n)
    statistic = max(float(np.max(root_n * mu / om)), 0.0)

    idx = stationary_bootstrap(n, p_geo, n_boot, seed)
    boot_means = Ra[idx, :].mean(axis=1)  # n_boot x n_alive

    # recentering thresholds from the law of the iterated logarithm
    a_n = om * math.sqrt(2.0 * math.log(math.log(n))) / root_n if n > 2 else om * 0.0
    centers = {
        "lower": np.maximum(mu, 0.0),
        "consistent": np.where(mu >= -a_n, mu, 0.0),
        "upper": mu,
    }
    pvals = {}
    for name, center in centers.items():
        t_boot = np.maximum((root_n * (boot_means - center) / om).max(axis=1), 0.0)
        pvals[name] = float(np.mean(t_boot >= statistic))
    return SpaResult(
        p_lower=pvals["lower"], p_consistent=pvals["consistent"], p_upper=pvals["upper"],
        statistic=statistic, block_p=p_geo, n_boot=n_boot, seed=seed,
        stationarity=stationarity, excluded=excluded,
    )


@dataclass
class UniverseComparison:
    universe: str
    losses: LossMatrix


def best_model_scan(
    universes: list[UniverseComparison],
    n_boot: int = 1000,
    seed: int = 0,
) -> dict:
    """Run the test with every model as benchmark in every universe.

    A model is universally superior when (a) it is never rejected as the
    benchmark in any universe and (b) every other model is rejected as the
    benchmark somewhere, both at the 5% level on the consistent p-value.
    """
    if not universes:
        raise ValueError("need at least one universe")
    labels = universes[0].losses.labels
    for u in universes:
        if u.losses.labels != labels:
            raise ValueError("all universes must share the same model labels")
    rejections: dict[str, list[tuple[str, float]]] = {m: [] for m in labels}
    detail = {}
    for u in universes:
        for b, benchmark in enumerate(labels):
            order = [b] + [j for j in range(len(labels)) if j != b]
            L = u.losses.L[:, order]
            R = L[:, :1] - L[:, 1:]
            res = spa_test(R, n_boot=n_boot, seed=seed)
            detail[f"{u.universe}|{benchmark}"] = {
                "p_lower": res.p_lower, "p_consistent": res.p_consistent, "p_upper": res.p_upper,
            }
            if res.p_consistent < 0.05:
                rejections[benchmark].append((u.universe, res.p_consistent))
    never_rejected = {m for m in labels if not rejections[m]}
    superior = [
        m for m in never_rejected
        if all(rejections[other] for other in labels if other != m)
    ]
    return {
        "labels": labels,
        "rejections": {m: rejections[m] for m in labels},
        "universally_superior": superior,
        "detail": detail,
    }
