"""Streaming statistics and scaling fits.

Every Monte Carlo estimate here carries a batch-means error bar: the sample
stream is cut into 32 contiguous batches whose averages are treated as
independent.  Functions of several moments (kurtosis ratio, cumulants) get
their error bar from a jackknife over the same batches.

Most estimators come in two flavours: a per-sample statistic that an
observer can compute while a chain runs, and an aggregate that turns the
resulting vector into an :class:`Estimate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.special import logsumexp

from .clusters import ClusterLabels, box_reaches_boundary
from .field import RenormScheme
from .lattice import LatticeSpec

N_BATCHES = 32
MIN_BATCHES = 30


def _as_float_array(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    return arr


def batch_slices(n: int, n_batches: int = N_BATCHES) -> list[slice]:
    """Contiguous, nearly equal slices covering ``range(n)``."""
    nb = max(1, min(n_batches, n))
    edges = np.linspace(0, n, nb + 1).round().astype(int)
    return [slice(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def batch_means(x, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean of ``x`` and its batch-means standard error."""
    arr = _as_float_array(x)
    if arr.size == 0:
        raise ValueError("batch_means of an empty sample")
    mean = float(arr.mean())
    slices = batch_slices(arr.size, n_batches)
    if len(slices) < 2:
        return mean, math.inf
    bm = np.array([arr[s].mean() for s in slices])
    w = np.array([s.stop - s.start for s in slices], dtype=float)
    # weighted spread of batch means around the grand mean
    var = float(np.sum(w * (bm - mean) ** 2) / (w.sum() * (len(slices) - 1)))
    return mean, math.sqrt(var)


def jackknife(func: Callable[..., float], *columns, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Leave-one-batch-out jackknife for a smooth function of sample means.

    ``func`` receives one mean per column and returns a scalar.
    """
    cols = [_as_float_array(c) for c in columns]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise ValueError("columns differ in length")
    full = func(*(c.mean() for c in cols))
    slices = batch_slices(n, n_batches)
    nb = len(slices)
    if nb < 2:
        return float(full), math.inf
    sums = np.array([[c[s].sum() for c in cols] for s in slices])
    counts = np.array([s.stop - s.start for s in slices], dtype=float)
    tot = sums.sum(axis=0)
    loo = np.array([func(*((tot - sums[b]) / (n - counts[b]))) for b in range(nb)])
    var = (nb - 1) / nb * float(np.sum((loo - loo.mean()) ** 2))
    return float(full), math.sqrt(var)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_samples: int
    flagged: bool = False

    @classmethod
    def from_samples(cls, x, n_batches: int = N_BATCHES) -> Estimate:
        arr = _as_float_array(x)
        mean, se = batch_means(arr, n_batches)
        return cls(mean, se, arr.size, len(batch_slices(arr.size, n_batches)) < MIN_BATCHES)

    def scaled(self, factor: float) -> Estimate:
        return Estimate(self.value * factor, self.stderr * abs(factor), self.n_samples, self.flagged)


MAX_ORDER = 8


@dataclass
class MomentAccumulator:
    """Power sums ``sum x^k`` for ``k <= 8``, kept both globally and per batch.

    Values are grouped into batches of ``batch_size`` consecutive samples.
    Merging concatenates batch lists (left operand first), so a fixed merge
    order gives a fixed result.
    """

    batch_size: int = 1000
    count: int = 0
    sums: np.ndarray = field(default_factory=lambda: np.zeros(MAX_ORDER + 1))
    batches: list[np.ndarray] = field(default_factory=list)
    _open: np.ndarray = field(default_factory=lambda: np.zeros(MAX_ORDER + 1))

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @staticmethod
    def _powers(x: np.ndarray) -> np.ndarray:
        return np.vander(x, MAX_ORDER + 1, increasing=True).sum(axis=0)

    def add(self, x) -> MomentAccumulator:
        arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        pos = 0
        while pos < arr.size:
            room = self.batch_size - int(self._open[0])
            chunk = arr[pos:pos + room]
            pw = self._powers(chunk)
            self._open = self._open + pw
            self.sums = self.sums + pw
            self.count += chunk.size
            pos += chunk.size
            if int(self._open[0]) == self.batch_size:
                self.batches.append(self._open)
                self._open = np.zeros(MAX_ORDER + 1)
        return self

    def _all_batches(self) -> list[np.ndarray]:
        out = list(self.batches)
        if self._open[0] > 0:
            out.append(self._open)
        return out

    def merge(self, other: MomentAccumulator) -> MomentAccumulator:
        out = MomentAccumulator(self.batch_size)
        out.count = self.count + other.count
        out.sums = self.sums + other.sums
        out.batches = self._all_batches() + other._all_batches()
        return out

    @property
    def n_batches(self) -> int:
        return len(self._all_batches())

    def raw_moment(self, k: int) -> float:
        if not 0 <= k <= MAX_ORDER:
            raise ValueError(f"order must be in [0, {MAX_ORDER}]")
        if self.count == 0:
            raise ValueError("empty accumulator")
        return float(self.sums[k] / self.count)

    def raw_moment_stderr(self, k: int) -> float:
        """Batch-means error of the ``k``-th raw moment; NaN with fewer than 30 batches."""
        bs = self._all_batches()
        if len(bs) < MIN_BATCHES:
            return math.nan
        w = np.array([b[0] for b in bs])
        bm = np.array([b[k] / b[0] for b in bs])
        mean = self.raw_moment(k)
        return math.sqrt(float(np.sum(w * (bm - mean) ** 2) / (w.sum() * (len(bs) - 1))))

    def central_moment(self, k: int) -> float:
        mu = self.raw_moment(1)
        raw = [self.raw_moment(i) for i in range(k + 1)]
        return float(sum(math.comb(k, i) * raw[i] * (-mu) ** (k - i) for i in range(k + 1)))


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_stderr: float
    residual_norm: float
    n_points: int


def loglog_fit(x: Sequence[float], y: Sequence[float],
               weights: Sequence[float] | None = None) -> FitResult:
    """Least squares line through ``(log x, log y)``.

    With ``weights`` the fit is weighted and the slope error is scaled by the
    reduced chi-square, so it reflects the actual scatter.
    """
    lx = np.asarray(x, dtype=float)
    ly = np.asarray(y, dtype=float)
    if lx.shape != ly.shape or lx.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if lx.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(lx <= 0) or np.any(ly <= 0):
        raise ValueError("log-log fit needs positive x and y")
    lx, ly = np.log(lx), np.log(ly)
    w = np.ones_like(lx) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != lx.shape or np.any(w <= 0):
        raise ValueError("weights must be positive and match x")
    sw = np.sqrt(w)
    design = np.column_stack([lx, np.ones_like(lx)]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, ly * sw, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = ly - (slope * lx + intercept)
    rss = float(np.sum(w * resid ** 2))
    dof = lx.size - 2
    xbar = np.sum(w * lx) / np.sum(w)
    sxx = float(np.sum(w * (lx - xbar) ** 2))
    se = math.sqrt(rss / dof / sxx) if sxx > 0 else math.inf
    return FitResult(slope, intercept, se, math.sqrt(float(np.sum(resid ** 2))), lx.size)


def slope_error_from_points(x: Sequence[float], y: Sequence[float], y_err: Sequence[float]) -> float:
    """Propagate independent errors on ``y`` into the unweighted log-log slope."""
    lx = np.log(np.asarray(x, dtype=float))
    rel = np.asarray(y_err, dtype=float) / np.asarray(y, dtype=float)
    d = lx - lx.mean()
    return math.sqrt(float(np.sum((d / np.sum(d * d)) ** 2 * rel ** 2)))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    n1: int
    n2: int
    flagged: bool = False

    @property
    def noise_band(self) -> float:
        """Asymptotic 95% critical value of D for these sample sizes."""
        return ks_noise_band(self.n1, self.n2)


def ks_noise_band(n1: int, n2: int, c_alpha: float = 1.358) -> float:
    return c_alpha * math.sqrt((n1 + n2) / (n1 * n2))


def scale_covariance_ks(samples_n, samples_2n, min_size: int = 1000) -> KSResult:
    a = _as_float_array(samples_n)
    b = _as_float_array(samples_2n)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS needs two non-empty samples")
    d = float(stats.ks_2samp(a, b).statistic)
    return KSResult(d, a.size, b.size, min(a.size, b.size) < min_size)


def rescaled_magnetization(total_spin: np.ndarray | float, n_side: int) -> np.ndarray:
    """``M_N / N^(15/8)``."""
    return np.asarray(total_spin, dtype=float) / n_side ** (15 / 8)


# two-point function and its relatives

def pair_sites(grid_side: int, sep: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Centred diagonal pair at separation ``(sep, sep)`` on a ``grid_side`` grid."""
    u = (grid_side - sep) // 2
    return (u, u), (u + sep, u + sep)


def pair_product(spins: np.ndarray, sep: int) -> int:
    grid = np.asarray(getattr(spins, "spins", spins))
    (r0, c0), (r1, c1) = pair_sites(grid.shape[0], sep)
    return int(grid[r0, c0]) * int(grid[r1, c1])


def pair_connected(labels: ClusterLabels, sep: int) -> bool:
    n = labels.spec.n_side
    (r0, c0), (r1, c1) = pair_sites(n, sep)
    return labels.connected(r0 * n + c0, r1 * n + c1)


def check_two_point_grid(grid_side: int, sep: int) -> None:
    if sep < 0:
        raise ValueError("separation must be >= 0")
    if grid_side < 4 * sep:
        raise ValueError(f"grid side {grid_side} is below 4 x separation {sep}")


def two_point_rho(sep: int, samples: Iterable, n_batches: int = N_BATCHES) -> Estimate:
    """Mean of ``sigma_u sigma_v`` for the centred pair at separation ``(sep, sep)``.

    ``samples`` yields spin grids (arrays or :class:`SpinConfig`).
    """
    vals = []
    for s in samples:
        grid = np.asarray(getattr(s, "spins", s))
        check_two_point_grid(grid.shape[0], sep)
        vals.append(pair_product(grid, sep))
    if not vals:
        raise ValueError("no samples")
    return Estimate.from_samples(vals, n_batches)


def theta_empirical(a: float, rho_hat: float) -> float:
    if not rho_hat > 0:
        raise ValueError(f"rho_hat must be positive, got {rho_hat}")
    return float(a) ** 2 / math.sqrt(rho_hat)


def inner_box(grid_side: int, eps_inv: int) -> tuple[int, int]:
    """``(corner, side)`` of the inner square of the one-arm annulus.

    The grid stands for ``[-1, 1]^2`` so the inner square ``[-eps/2, eps/2]^2``
    has ``grid_side / (2 * eps_inv)`` cells per side.
    """
    if eps_inv < 1:
        raise ValueError("eps_inv must be >= 1")
    if grid_side % (2 * eps_inv) != 0:
        raise ValueError(f"grid side {grid_side} is not a multiple of 2 * eps_inv = {2 * eps_inv}")
    side = grid_side // (2 * eps_inv)
    return (grid_side - side) // 2, side


def one_arm_indicator(labels: ClusterLabels, eps_inv: int) -> bool:
    """Inner square connected to the outer boundary.

    When the inner square already meets the boundary the annulus is empty and
    the event holds by convention.
    """
    n = labels.spec.n_side
    corner, side = inner_box(n, eps_inv)
    if corner == 0:
        return True
    return box_reaches_boundary(labels, corner, corner, side)


def one_arm_alpha1(eps_inv: int, samples: Iterable, n_batches: int = N_BATCHES) -> Estimate:
    """Empirical probability of the one-arm event on wired grids.

    ``samples`` yields :class:`ClusterLabels` or objects with a ``labels``
    attribute (such as :class:`ColoredBonds`).
    """
    vals = []
    for s in samples:
        labels = getattr(s, "labels", s)
        if not labels.spec.boundary.wired:
            raise ValueError("one-arm estimates need a wired outer boundary")
        vals.append(one_arm_indicator(labels, eps_inv))
    if not vals:
        raise ValueError("no samples")
    return Estimate.from_samples(vals, n_batches)


def kpoint_normalizer(spec: LatticeSpec, k: int, scheme: RenormScheme | None = None) -> float:
    scheme = scheme or RenormScheme.wu()
    a = float(spec.mesh)
    if scheme.rho_hat is None:
        return a ** (-k / 8)
    return scheme.rho_hat ** (-k / 2)


def check_points(spec: LatticeSpec, points: Sequence[tuple[int, int]]) -> list[int]:
    if not 1 <= len(points) <= 6:
        raise ValueError("between 1 and 6 points are supported")
    idx = [spec.index(r, c) for r, c in points]
    if len(set(idx)) != len(idx):
        raise ValueError("points must be pairwise distinct")
    return idx


def kpoint_scaled(spec: LatticeSpec, samples: Iterable, points: Sequence[tuple[int, int]],
                  scheme: RenormScheme | None = None, n_batches: int = N_BATCHES) -> Estimate:
    """Normalized ``E[sigma_z1 ... sigma_zk]``."""
    idx = check_points(spec, points)
    vals = []
    for s in samples:
        flat = np.asarray(getattr(s, "spins", s)).ravel()
        vals.append(int(np.prod(flat[idx].astype(np.int64))))
    if not vals:
        raise ValueError("no samples")
    return Estimate.from_samples(vals, n_batches).scaled(kpoint_normalizer(spec, len(idx), scheme))


# moments of the magnetization

@dataclass(frozen=True)
class Moments:
    mean: Estimate
    variance: Estimate
    skewness: Estimate
    kurtosis_ratio: Estimate
    central: tuple[float, ...]
    n_batches: int
    flagged: bool


def _central_from_raw(raw: Sequence[float], k: int) -> float:
    mu = raw[1]
    return sum(math.comb(k, i) * raw[i] * (-mu) ** (k - i) for i in range(k + 1))


def moments(samples, n_batches: int = N_BATCHES) -> Moments:
    """Mean, variance, skewness and ``E(m - mean)^4 / (3 Var^2)`` with jackknife errors.

    ``central`` holds central moments of orders 2 through 8.  Too few batches
    and a vanishing variance both raise the ``flagged`` bit; quantities that
    divide by the variance are NaN in the latter case.
    """
    x = _as_float_array(samples)
    if x.size == 0:
        raise ValueError("no samples")
    nb = len(batch_slices(x.size, n_batches))
    n = x.size
    # shift by the mean to keep the power sums well conditioned
    shift = float(x.mean())
    y = x - shift
    cols = [y ** k for k in range(1, MAX_ORDER + 1)]
    raw = [1.0] + [float(c.mean()) for c in cols]
    central = tuple(_central_from_raw(raw, k) for k in range(2, MAX_ORDER + 1))
    flagged = nb < MIN_BATCHES
    mean = Estimate(shift + raw[1], batch_means(x, n_batches)[1], n, flagged)

    def var(m1, m2):
        return m2 - m1 ** 2

    v, v_se = jackknife(var, cols[0], cols[1], n_batches=n_batches)
    variance = Estimate(v, v_se, n, flagged)
    if not v > 1e-300 * max(1.0, shift * shift):
        nan = Estimate(math.nan, math.nan, n, True)
        return Moments(mean, Estimate(0.0, 0.0, n, flagged), nan, nan, central, nb, True)

    def skew(m1, m2, m3):
        c2 = m2 - m1 ** 2
        return (m3 - 3 * m1 * m2 + 2 * m1 ** 3) / c2 ** 1.5

    def kurt(m1, m2, m3, m4):
        c2 = m2 - m1 ** 2
        c4 = m4 - 4 * m1 * m3 + 6 * m1 ** 2 * m2 - 3 * m1 ** 4
        return c4 / (3 * c2 * c2)

    sk = Estimate(*jackknife(skew, *cols[:3], n_batches=n_batches), n, flagged)
    ku = Estimate(*jackknife(kurt, *cols[:4], n_batches=n_batches), n, flagged)
    return Moments(mean, variance, sk, ku, central, nb, flagged)


def log_mgf(samples, t: float | np.ndarray) -> np.ndarray:
    """``log mean exp(t m)`` evaluated stably for each ``t``."""
    x = _as_float_array(samples)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return logsumexp(np.outer(t, x), axis=1) - math.log(x.size)


def third_differences(values: np.ndarray, h: float) -> np.ndarray:
    """``(L(t+h) - 3L(t) + 3L(t-h) - L(t-2h)) / h^3`` for every admissible ``t``."""
    v = np.asarray(values, dtype=float)
    return (v[3:] - 3 * v[2:-1] + 3 * v[1:-2] - v[:-3]) / h ** 3


@dataclass(frozen=True)
class MgfCheck:
    t: np.ndarray
    third: np.ndarray
    stderr: np.ndarray

    @property
    def ok(self) -> bool:
        """No value sits above zero by more than three error bars."""
        return bool(np.all(self.third <= 3 * self.stderr))


def _uniform_step(t_grid) -> tuple[np.ndarray, float]:
    t = np.asarray(t_grid, dtype=float)
    if t.size < 4:
        raise ValueError("the t grid needs at least 4 points")
    steps = np.diff(t)
    h = float(steps.mean())
    if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=1e-12):
        raise ValueError("the t grid must be uniform and increasing")
    return t, h


def mgf_concavity_check(samples, t_grid, n_boot: int = 200, seed: int = 0) -> MgfCheck:
    """Third finite differences of the empirical log-MGF with bootstrap errors."""
    x = _as_float_array(samples)
    if x.size == 0:
        raise ValueError("no samples")
    t, h = _uniform_step(t_grid)
    third = third_differences(log_mgf(x, t), h)
    rng = np.random.default_rng(seed)
    boot = np.empty((n_boot, third.size))
    for b in range(n_boot):
        xb = x[rng.integers(0, x.size, x.size)]
        boot[b] = third_differences(log_mgf(xb, t), h)
    # the difference at t uses L on t-2h .. t+h; report it at t
    return MgfCheck(t[2:-1], third, boot.std(axis=0, ddof=1))


@dataclass(frozen=True)
class CharFunctionCheck:
    t: np.ndarray
    discrepancy: np.ndarray
    truncation_bound: np.ndarray
    stat_error: np.ndarray

    @property
    def max_discrepancy(self) -> float:
        return float(self.discrepancy.max())

    @property
    def ok(self) -> bool:
        return bool(np.all(self.discrepancy <= self.truncation_bound + 3 * self.stat_error))


def char_function_check(samples, t_grid, k_max: int = 8, n_batches: int = N_BATCHES) -> CharFunctionCheck:
    """Empirical ``E exp(itm)`` against its moment series truncated at order ``k_max``."""
    x = _as_float_array(samples)
    if x.size == 0:
        raise ValueError("no samples")
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    raw = np.array([np.mean(x ** k) for k in range(k_max + 1)])
    abs_next = float(np.mean(np.abs(x) ** (k_max + 1)))
    disc = np.empty(t.size)
    bound = np.empty(t.size)
    err = np.empty(t.size)
    for i, ti in enumerate(t):
        phase = np.exp(1j * ti * x)
        series = sum((1j * ti) ** k * raw[k] / math.factorial(k) for k in range(k_max + 1))
        d = phase.mean() - series
        disc[i] = abs(d)
        bound[i] = abs_next * abs(ti) ** (k_max + 1) / math.factorial(k_max + 1)
        # per-sample remainder of the Taylor expansion; its mean is d
        rem = phase - sum((1j * ti * x) ** k / math.factorial(k) for k in range(k_max + 1))
        err[i] = math.hypot(batch_means(rem.real, n_batches)[1], batch_means(rem.imag, n_batches)[1])
    return CharFunctionCheck(t, disc, bound, err)


# variance integral with the |x - y|^(-s) kernel

def riesz_variance_integral(exponent: float = 0.25) -> float:
    """``int_{[0,1]^4} |x - y|^(-exponent) dx dy`` by one-dimensional quadrature.

    With ``w = x - y`` the integral becomes ``4 int_{[0,1]^2} (1-u)(1-v)
    |w|^(-s) du dv``; polar coordinates on the half triangle ``v <= u`` make
    the radial part elementary, leaving a smooth integral over the angle.
    """
    s = float(exponent)
    if not s < 2:
        raise ValueError("the kernel is not integrable for exponent >= 2")

    def radial(theta):
        c, sn = math.cos(theta), math.sin(theta)
        r = 1.0 / c
        return (r ** (2 - s) / (2 - s) - (c + sn) * r ** (3 - s) / (3 - s)
                + c * sn * r ** (4 - s) / (4 - s))

    val, _ = integrate.quad(radial, 0.0, math.pi / 4, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 8.0 * val


def riesz_variance_qmc(exponent: float = 0.25, log2_points: int = 24, seed: int = 0,
                       chunk_log2: int = 20) -> float:
    """Quasi-random estimate of the same integral from a scrambled Sobol' set in 4D."""
    from scipy.stats import qmc

    s = float(exponent)
    sampler = qmc.Sobol(d=4, scramble=True, seed=seed)
    total = 0.0
    n_chunks = 1 << max(0, log2_points - chunk_log2)
    per = 1 << min(log2_points, chunk_log2)
    for _ in range(n_chunks):
        pts = sampler.random(per)
        dx = pts[:, 0] - pts[:, 2]
        dy = pts[:, 1] - pts[:, 3]
        total += float(np.sum((dx * dx + dy * dy) ** (-s / 2)))
    return total / (n_chunks * per)
