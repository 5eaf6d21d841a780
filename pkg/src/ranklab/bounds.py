"""Closed-form probability bound evaluators and exact parameter extraction.

Every bound here is evaluated in log domain and returned as a BoundReport
that carries the formula label and the full input map, because the raw
values underflow any native float long before the interesting regime.
Absolute constants that the underlying estimates leave unnamed are plain
arguments defaulting to 1.0; nothing in this module tries to hide that
they are free.

extract_params and levy_concentration are exact for finite-support
distributions: the psi_2 parameter comes from bisection on a monotone
function and the concentration value from enumerating atom-anchored
windows.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .matrix_core import DistributionSpec

__all__ = [
    "RegimeParams",
    "BoundReport",
    "ParamExtraction",
    "extract_params",
    "levy_concentration",
    "sbp_lcd_bound",
    "sbp_proj_bound",
    "tensorization_bound",
    "lattice_ball_count",
    "LatticeCountResult",
    "net_cardinality_bound",
    "compressible_event_bound",
    "matrixV_event_bound",
]


@dataclass(frozen=True)
class RegimeParams:
    """Coupled parameter set for the deficiency-probability machinery.

    k, tau, rho, delta, p, n are free (within their constraints); L, alpha,
    r, R are defined from them and exposed as properties, so replacing any
    primary field recomputes the derived ones automatically. delta may not
    exceed rho.
    """

    k: int
    tau: float
    rho: float
    delta: float
    p: float
    n: int

    def __post_init__(self) -> None:
        if not (1 <= self.k <= self.n):
            raise ValueError("need 1 <= k <= n")
        if not (0.0 < self.tau < 1.0):
            raise ValueError("need 0 < tau < 1")
        if not (self.rho > 0):
            raise ValueError("need rho > 0")
        if not (0.0 < self.p <= 1.0):
            raise ValueError("need 0 < p <= 1")
        if not (0.0 < self.delta <= self.rho):
            raise ValueError("need 0 < delta <= rho")

    @property
    def L(self) -> float:
        return math.sqrt(self.k / self.p)

    @property
    def alpha(self) -> float:
        return self.tau**4 / 4.0

    @property
    def r(self) -> float:
        return self.tau / 16.0

    @property
    def R(self) -> float:
        x = self.rho**2 * self.n / (4.0 * self.L**2)
        return math.inf if x > 709.0 else math.exp(x)

    @property
    def log_R(self) -> float:
        """log of R; R itself overflows once rho^2 n / (4 L^2) passes ~709."""
        return self.rho**2 * self.n / (4.0 * self.L**2)

    def replace(self, **changes) -> "RegimeParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BoundReport:
    """A bound in log domain: natural log of the value, label, input echo."""

    formula_id: str
    log_value: float
    inputs: dict

    @property
    def infinite(self) -> str | None:
        if self.log_value == math.inf:
            return "+inf"
        if self.log_value == -math.inf:
            return "-inf"
        return None

    def to_record(self) -> dict:
        lv: float | str = self.log_value
        if self.infinite is not None:
            lv = self.infinite
        return {"formula_id": self.formula_id, "log_value": lv, "inputs": dict(self.inputs)}


# --- parameter extraction ----------------------------------------------------


def _exp_moment(dist: DistributionSpec, K: float) -> float:
    # E exp(xi^2 / K^2), +inf once any exponent would overflow
    pts = [(v, p) for v, p in dist.atoms if p > 0]
    top = max(v * v for v, _ in pts) / (K * K)
    if top > 700.0:
        return math.inf
    return math.fsum(p * math.exp(v * v / (K * K)) for v, p in pts)


def levy_concentration(dist: DistributionSpec, t: float) -> float:
    """sup over centers y of P(|xi - y| <= t), exactly, for finite support.

    A maximizing closed window can always be slid until its left edge sits
    on an atom, so it suffices to scan windows [a, a + 2t] over atoms a.
    """
    if t < 0:
        raise ValueError("need t >= 0")
    atoms = dist.merged_atoms()
    best = 0.0
    for a, _ in atoms:
        mass = math.fsum(p for v, p in atoms if a <= v <= a + 2.0 * t)
        best = max(best, mass)
    return best


@dataclass(frozen=True)
class ParamExtraction:
    """Distribution parameters: psi_2 bound K and anti-concentration p.

    When the raw distribution has p = 0 (a single unit window swallows the
    whole support), rescale_sigma is the smallest scale factor sigma > 1 at
    which sigma * xi reaches p >= the requested floor, with p_rescaled the
    value there; both are None when no rescale was needed. If no scale can
    reach the floor (it can never exceed 1 minus the heaviest atom), the
    report falls back to the scale attaining the best achievable p, so
    p_rescaled may come back below the floor. Unpacks as the pair (K, p).
    """

    K: float
    p: float
    rescale_sigma: float | None = None
    p_rescaled: float | None = None

    def __iter__(self):
        return iter((self.K, self.p))


def extract_params(dist: DistributionSpec, rescale_floor: float = 0.5) -> ParamExtraction:
    """Solve E exp(xi^2/K^2) = 2 for K and compute p = 1 - levy(xi, 1).

    Bisection runs to an absolute bracket width of 1e-12; the moment
    function is strictly decreasing in K so the root is unique. If p = 0,
    scan the critical scales 2/gap (where windows stop covering atom pairs)
    for the smallest sigma achieving p >= rescale_floor.
    """
    # root bracketing: moment is +inf near 0 and tends to 1 as K grows
    hi = dist.max_abs()
    while _exp_moment(dist, hi) >= 2.0:
        hi *= 2.0
    lo = hi / 2.0
    while _exp_moment(dist, lo) < 2.0:
        lo /= 2.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if _exp_moment(dist, mid) >= 2.0:
            lo = mid
        else:
            hi = mid
    K = 0.5 * (lo + hi)

    p = 1.0 - levy_concentration(dist, 1.0)
    if p > 0.0:
        return ParamExtraction(K=K, p=p)

    values = sorted({v for v, q in dist.merged_atoms()})
    gaps = sorted({b - a for a, b in zip(values, values[1:])})
    nudge = 1.0 + 1e-9
    best: tuple[float, float] | None = None
    for gap in reversed(gaps):  # largest gap gives the smallest critical scale
        sigma = (2.0 / gap) * nudge
        if sigma <= 1.0:
            continue
        scaled = DistributionSpec([(sigma * v, q) for v, q in dist.atoms])
        p_s = 1.0 - levy_concentration(scaled, 1.0)
        if best is None or p_s > best[1]:
            best = (sigma, p_s)
        if p_s >= rescale_floor:
            break
    assert best is not None  # p = 0 forces support range <= 2, so some sigma > 1 exists
    return ParamExtraction(K=K, p=0.0, rescale_sigma=best[0], p_rescaled=best[1])


# --- small-ball bounds -------------------------------------------------------


def _log(x: float) -> float:
    if x < 0:
        raise ValueError("log of negative quantity in bound arithmetic")
    return -math.inf if x == 0.0 else math.log(x)


def sbp_lcd_bound(
    m: int,
    L: float,
    alpha: float,
    det_sqrt: float,
    D: float,
    t: float,
    C: float = 1.0,
    p: float | None = None,
) -> BoundReport:
    """Small-ball bound (CL/(alpha sqrt(m)))^m / det_sqrt * (t + sqrt(m)/D)^m.

    Log-domain. D = +inf is allowed (no lattice structure term). When the
    caller supplies p and L < sqrt(m/p), the hypothesis of the underlying
    estimate fails; that is a warning, not an error, since the bound is
    still a number.
    """
    if det_sqrt <= 0:
        raise ValueError("need det_sqrt > 0")
    if D <= 0:
        raise ValueError("need D > 0")
    if m < 1 or L <= 0 or not (0 < alpha <= 1) or t < 0 or C <= 0:
        raise ValueError("bad small-ball inputs")
    if p is not None and L < math.sqrt(m / p):
        warnings.warn(f"L={L} below sqrt(m/p)={math.sqrt(m / p)}; hypothesis violated")
    tail = t + math.sqrt(m) / D
    log_value = m * _log(C * L / (alpha * math.sqrt(m))) - math.log(det_sqrt) + m * _log(tail)
    if math.isnan(log_value):
        log_value = -math.inf  # 0 * inf style collisions resolve to the zero bound
    return BoundReport(
        "sbp_lcd",
        log_value,
        {"m": m, "L": L, "alpha": alpha, "det_sqrt": det_sqrt, "D": D, "t": t, "C": C},
    )


def sbp_proj_bound(
    m: int, L: float, alpha: float, D: float, t: float, C: float = 1.0, p: float | None = None
) -> BoundReport:
    """Projection variant: (CL/(alpha sqrt(m)))^m (t + sqrt(m)/D)^m, log-domain."""
    rep = sbp_lcd_bound(m, L, alpha, 1.0, D, t, C, p)
    inputs = dict(rep.inputs)
    del inputs["det_sqrt"]
    return BoundReport("sbp_proj", rep.log_value, inputs)


def tensorization_bound(m: float, M: float, t: float, n: int, C: float = 1.0) -> BoundReport:
    """Product small-ball lift: m*n*log(C*M*t) in log domain."""
    if m <= 0 or M <= 0 or t < 0 or n < 1 or C <= 0:
        raise ValueError("bad tensorization inputs")
    return BoundReport(
        "tensorization", m * n * _log(C * M * t), {"m": m, "M": M, "t": t, "n": n, "C": C}
    )


@dataclass(frozen=True)
class LatticeCountResult:
    count: int
    bound: BoundReport

    @property
    def bound_value(self) -> float:
        return math.exp(self.bound.log_value)


def lattice_ball_count(n: int, R: float, C: float = 2.0) -> LatticeCountResult:
    """Exact number of integer points in the n-ball of radius R, n <= 4.

    Enumeration is a repeated integer convolution of the one-dimensional
    squared-coordinate histogram, so the count is exact however tight the
    ball. The companion report evaluates the covering bound
    (2 + C*R/sqrt(n))^n for the caller's C.
    """
    if n < 1 or n > 4:
        raise ValueError("exact enumeration capped at n = 4")
    if R <= 0:
        raise ValueError("need R > 0")
    if R > 10_000:
        raise ValueError("radius too large for direct enumeration")
    r2 = int(math.floor(R * R + 1e-9))
    reach = int(math.isqrt(r2))
    one = np.zeros(r2 + 1, dtype=np.int64)
    for k in range(-reach, reach + 1):
        if k * k <= r2:
            one[k * k] += 1
    acc = one.copy()
    for _ in range(n - 1):
        acc = np.convolve(acc, one)[: r2 + 1]
    count = int(acc.sum())
    bound = BoundReport(
        "lattice_ball", n * _log(2.0 + C * R / math.sqrt(n)), {"n": n, "R": R, "C": C}
    )
    return LatticeCountResult(count=count, bound=bound)


def net_cardinality_bound(
    d,
    n: int,
    l: int,
    rho: float,
    r: float,
    delta: float,
    C: float = 1.0,
    R: float | None = None,
) -> BoundReport:
    """Cardinality bound l*n*log(C*rho/(r*delta)) + n*sum log(d_j/sqrt(n)).

    The scale list d must sit inside [r*sqrt(n), R]; pass R = None to skip
    the upper check when the cap is astronomically large. Strictly log
    domain, the plain value overflows immediately.
    """
    if n < 1 or l < 1 or rho <= 0 or r <= 0 or delta <= 0 or C <= 0:
        raise ValueError("bad net-cardinality inputs")
    d = [float(x) for x in d]
    lo = r * math.sqrt(n)
    for j, dj in enumerate(d):
        if dj < lo - 1e-12:
            raise ValueError(f"d[{j}] = {dj} below r*sqrt(n) = {lo}")
        if R is not None and dj > R + 1e-12:
            raise ValueError(f"d[{j}] = {dj} above R = {R}")
    log_value = l * n * _log(C * rho / (r * delta)) + n * math.fsum(
        _log(dj / math.sqrt(n)) for dj in d
    )
    return BoundReport(
        "net_cardinality",
        log_value,
        {"d": d, "n": n, "l": l, "rho": rho, "r": r, "delta": delta, "C": C, "R": R},
    )


def compressible_event_bound(l: int, n: int, c_individual: float = 1.0) -> BoundReport:
    """exp(-c*l*n) event bound, reported as -c*l*n."""
    if l < 0 or n < 1 or l > n:
        raise ValueError("need 0 <= l <= n")
    if c_individual <= 0:
        raise ValueError("need c > 0")
    return BoundReport(
        "compressible_event", -c_individual * l * n, {"l": l, "n": n, "c": c_individual}
    )


def matrixV_event_bound(l: int, n: int) -> BoundReport:
    """exp(-l*n) event bound, reported as -l*n."""
    if l < 0 or n < 1 or l > n:
        raise ValueError("need 0 <= l <= n")
    return BoundReport("matrixV_event", float(-l * n), {"l": l, "n": n})
