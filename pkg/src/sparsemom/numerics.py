"""Shared numerical kernels.

Counter-based reproducible RNG streams, inverse-CDF samplers
(Gaussian / geometric / zero-truncated binomial), Gauss-Hermite
quadrature, closed-form 3x3 eigensolvers and matrix exponentials,
an adaptive embedded Runge-Kutta driver, and scalar root finders.

Everything here is stateless apart from the RngStream objects, which
are never shared between tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.random import Generator, Philox
from scipy.integrate import solve_ivp
from scipy.linalg import expm as _scipy_expm
from scipy.special import gammaln, ndtri

__all__ = [
    "RngStream",
    "QuadratureRule",
    "gauss_hermite",
    "cubic_roots",
    "eig3",
    "expm3",
    "evolve_lti",
    "rk_adaptive",
    "RkResult",
    "newton_1d",
    "bisect_1d",
    "BinomialTable",
    "TruncatedBinomial",
]

_INV_2_53 = 2.0 ** -53


def _splitmix64(x: int) -> int:
    """SplitMix64 finalizer; decorrelates nearby (seed, stream) keys."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


class RngStream:
    """Counter-based random stream keyed by (master_seed, stream_id).

    Backed by Philox, so distinct (master, stream) pairs give
    statistically independent sequences and the same pair always
    replays the identical sequence, independent of how other streams
    are scheduled.  Gaussians use the inverse CDF on uniforms built
    from raw 64-bit counter output, so the draw count per variate is
    fixed (no rejection state).
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        k0 = _splitmix64(self.master_seed & 0xFFFFFFFFFFFFFFFF)
        k1 = _splitmix64(k0 ^ _splitmix64(self.stream_id & 0xFFFFFFFFFFFFFFFF))
        self._gen = Generator(Philox(key=(k0 << 64) | k1))

    def child(self, stream_id: int) -> "RngStream":
        """Derived stream; independent of self for distinct ids."""
        return RngStream(self.master_seed, _splitmix64(self.stream_id) ^ stream_id)

    def uniforms(self, n: int) -> np.ndarray:
        """n uniforms strictly inside (0, 1)."""
        raw = self._gen.integers(0, 2 ** 64, size=n, dtype=np.uint64)
        return (raw >> np.uint64(11)) * _INV_2_53 + (_INV_2_53 / 2.0)

    def gaussians(self, n: int) -> np.ndarray:
        return ndtri(self.uniforms(n))

    def geometric(self, n: int, p_success: float) -> np.ndarray:
        """K ~ Geom(p) on {1, 2, ...} by inversion."""
        if not 0.0 < p_success <= 1.0:
            raise ValueError(f"geometric success probability must be in (0,1], got {p_success}")
        if p_success == 1.0:
            return np.ones(n, dtype=np.int64)
        u = self.uniforms(n)
        k = np.floor(np.log(u) / np.log1p(-p_success)).astype(np.int64) + 1
        return np.maximum(k, 1)

    def sphere(self, d: int) -> np.ndarray:
        """A uniform point on the unit sphere in R^d."""
        v = self.gaussians(d)
        return v / np.linalg.norm(v)


class BinomialTable:
    """Inversion sampler for N ~ Binomial(B, p), optionally zero-truncated.

    The CDF table is built once from log-domain pmf terms on a support
    window around the mean (covering all mass above ~1e-17 plus the
    boundary bins), so the sampler is exact to double precision for any
    (B, p), including pB >> 1 where naive (1-p)^B underflows.
    """

    def __init__(self, B: int, p: float, min_k: int = 0):
        if not 0.0 < p <= 1.0:
            raise ValueError(f"p must be in (0,1], got {p}")
        if B < 1:
            raise ValueError(f"B must be >= 1, got {B}")
        if min_k not in (0, 1):
            raise ValueError("min_k must be 0 (full) or 1 (zero-truncated)")
        self.B = int(B)
        self.p = float(p)
        self.min_k = min_k
        mean = B * p
        sd = np.sqrt(max(B * p * (1.0 - p), 1.0))
        lo = max(min_k, int(np.floor(mean - 12.0 * sd)))
        hi = min(B, int(np.ceil(mean + 12.0 * sd)) + 1)
        ks = np.arange(lo, hi + 1, dtype=np.int64)
        if p < 1.0:
            logpmf = (
                gammaln(B + 1.0)
                - gammaln(ks + 1.0)
                - gammaln(B - ks + 1.0)
                + np.where(ks > 0, ks * np.log(p), 0.0)
                + (B - ks) * np.log1p(-p)
            )
        else:
            logpmf = np.where(ks == B, 0.0, -np.inf)
        w = np.exp(logpmf - logpmf.max())
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        self._support = ks
        self._cdf = cdf

    def ppf(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cdf, u, side="left")
        return self._support[np.minimum(idx, len(self._support) - 1)]

    def sample(self, stream: RngStream, n: int) -> np.ndarray:
        return self.ppf(stream.uniforms(n))


def TruncatedBinomial(B: int, p: float) -> BinomialTable:
    """N ~ Binomial(B, p) | N >= 1 (active-batch sample count)."""
    return BinomialTable(B, p, min_k=1)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights for weight exp(-x^2) on R."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, fn, mean: float, variance: float) -> float:
        """E[fn(G)] for G ~ N(mean, variance) via z = mean + sqrt(2 var) x."""
        z = mean + np.sqrt(2.0 * variance) * self.nodes
        return float(self.weights @ fn(z)) / np.sqrt(np.pi)


@lru_cache(maxsize=32)
def gauss_hermite(order: int) -> QuadratureRule:
    if not 2 <= order <= 256:
        raise ValueError(f"order must be in [2, 256], got {order}")
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return QuadratureRule(order=order, nodes=nodes, weights=weights)


def cubic_roots(c1: float, c2: float, c3: float) -> np.ndarray:
    """Roots of z^3 + c1 z^2 + c2 z + c3.

    Trigonometric form when all roots are real, Cardano otherwise,
    followed by quadratic deflation and a Newton polish. Avoids general
    eigensolvers so results are bitwise reproducible across platforms.
    """
    a, b, c = float(c1), float(c2), float(c3)
    # depressed cubic t^3 + P t + Q, z = t - a/3
    P = b - a * a / 3.0
    Q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    shift = -a / 3.0
    if P == 0.0 and Q == 0.0:
        roots = np.array([shift, shift, shift], dtype=complex)
        return roots
    disc = -4.0 * P ** 3 - 27.0 * Q ** 2
    if disc >= 0.0 and P < 0.0:
        # three real roots
        m = 2.0 * np.sqrt(-P / 3.0)
        arg = np.clip(3.0 * Q / (P * m), -1.0, 1.0)
        theta = np.arccos(arg)
        t = m * np.cos((theta - 2.0 * np.pi * np.arange(3)) / 3.0)
        roots = t + shift
        roots = roots.astype(complex)
    else:
        # one real root via Cardano, then deflate; in this branch the
        # radicand is >= 0 (up to roundoff), so u^3 is real and we must
        # take the REAL cube root, not the principal complex branch
        rad = Q * Q / 4.0 + P ** 3 / 27.0
        s = np.sqrt(max(rad, 0.0))
        u3 = -Q / 2.0 + s
        if abs(u3) < abs(-Q / 2.0 - s):
            u3 = -Q / 2.0 - s
        u = np.cbrt(u3)
        t1 = u - P / (3.0 * u) if u != 0.0 else 0.0
        z1 = t1 + shift
        # deflate: z^2 + (a + z1) z + (b + (a + z1) z1)
        qa = a + z1
        qb = b + qa * z1
        disc2 = qa * qa - 4.0 * qb + 0j
        sq = np.sqrt(disc2)
        roots = np.array([z1, (-qa + sq) / 2.0, (-qa - sq) / 2.0], dtype=complex)
    # Newton polish (also repairs the clip above near triple roots)
    for _ in range(2):
        f = ((roots + a) * roots + b) * roots + c
        df = (3.0 * roots + 2.0 * a) * roots + b
        step = np.where(np.abs(df) > 0, f / np.where(df == 0, 1.0, df), 0.0)
        roots = roots - step
    # enforce conjugate symmetry
    imag_mass = np.abs(roots.imag)
    if np.count_nonzero(imag_mass > 1e-12 * (1.0 + np.abs(roots.real))) == 2:
        cplx = np.argsort(-imag_mass)[:2]
        mean = (roots[cplx[0]] + np.conj(roots[cplx[1]])) / 2.0
        roots[cplx[0]] = mean
        roots[cplx[1]] = np.conj(mean)
        real_idx = np.argmin(imag_mass)
        roots[real_idx] = roots[real_idx].real
    return roots


def eig3(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of a real 3x3 matrix.

    Eigenvalues from the characteristic cubic; eigenvectors as the
    largest cross product of rows of (A - lambda I). Degenerate spectra
    yield an ill-conditioned vector matrix, which callers detect via
    cond and route to expm3.
    """
    A = np.asarray(A, dtype=float)
    c1 = -np.trace(A)
    c2 = (
        A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
        + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    )
    c3 = -np.linalg.det(A)
    lam = cubic_roots(c1, c2, c3)
    vecs = np.empty((3, 3), dtype=complex)
    eye = np.eye(3)
    for j, l in enumerate(lam):
        M = A - l * eye
        cands = [
            np.cross(M[0], M[1]),
            np.cross(M[0], M[2]),
            np.cross(M[1], M[2]),
        ]
        norms = [np.linalg.norm(v) for v in cands]
        v = cands[int(np.argmax(norms))]
        n = np.linalg.norm(v)
        if n == 0.0:  # repeated eigenvalue with rank(M) < 2
            v = np.array([1.0, 0.0, 0.0], dtype=complex)
            n = 1.0
        vecs[:, j] = v / n
    return lam, vecs


_COND_LIMIT = 1e8


def expm3(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(A t) for a 3x3 matrix, via eigendecomposition.

    Falls back to scaling-and-squaring when the eigenvector matrix has
    condition number above 1e8.
    """
    A = np.asarray(A, dtype=float)
    lam, V = eig3(A)
    cond = np.linalg.cond(V)
    if np.isfinite(cond) and cond < _COND_LIMIT:
        out = (V * np.exp(lam * t)) @ np.linalg.inv(V)
        return out.real
    return _scipy_expm(A * t)


def evolve_lti(A: np.ndarray, x0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Exact solution x(t) = exp(A t) x0 on a grid, shape (len(times), n).

    Eigendecomposition path for speed; per-interval matrix exponential
    stepping when the eigenvectors are ill-conditioned.
    """
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    times = np.asarray(times, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        if A.shape == (3, 3):
            lam, V = eig3(A)
            cond = np.linalg.cond(V)
            if np.isfinite(cond) and cond < _COND_LIMIT:
                coef = np.linalg.solve(V, x0.astype(complex))
                modes = np.exp(np.outer(times, lam))  # (T, 3)
                return ((modes * coef) @ V.T).real
        else:
            lam, V = np.linalg.eig(A)
            cond = np.linalg.cond(V)
            if np.isfinite(cond) and cond < _COND_LIMIT:
                coef = np.linalg.solve(V, x0.astype(complex))
                modes = np.exp(np.outer(times, lam))
                return ((modes * coef) @ V.T).real
    # stepping fallback
    out = np.empty((len(times), len(x0)))
    x = x0.copy()
    prev = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for i, t in enumerate(times):
            dt = t - prev
            if dt != 0.0:
                x = _scipy_expm(A * dt) @ x
            out[i] = x
            prev = t
    return out


@dataclass
class RkResult:
    times: np.ndarray
    states: np.ndarray  # (T, n)
    success: bool
    message: str
    stiff_fallback: bool = False
    n_rhs_evals: int = 0


def rk_adaptive(
    rhs,
    y0: np.ndarray,
    t_eval: np.ndarray,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    max_step: float = np.inf,
) -> RkResult:
    """Adaptive embedded RK 4(5) integration to a fixed output grid.

    On step-size failure (stiffness) the same problem is retried with an
    L-stable implicit scheme; the result records that the fallback ran.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    t0, t1 = float(t_eval[0]), float(t_eval[-1])
    sol = solve_ivp(
        rhs, (t0, t1), np.asarray(y0, dtype=float),
        method="RK45", t_eval=t_eval, rtol=rtol, atol=atol, max_step=max_step,
    )
    if sol.success:
        return RkResult(sol.t, sol.y.T, True, sol.message, False, sol.nfev)
    stiff = solve_ivp(
        rhs, (t0, t1), np.asarray(y0, dtype=float),
        method="Radau", t_eval=t_eval, rtol=rtol, atol=atol,
    )
    return RkResult(
        stiff.t, stiff.y.T, stiff.success,
        f"RK45 failed ({sol.message}); implicit fallback: {stiff.message}",
        True, sol.nfev + stiff.nfev,
    )


def newton_1d(fn, dfn, x0: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Scalar Newton iteration; raises on non-convergence."""
    x = float(x0)
    for _ in range(max_iter):
        f = fn(x)
        if abs(f) < tol:
            return x
        d = dfn(x)
        if d == 0.0:
            break
        x = x - f / d
    raise RuntimeError(f"newton_1d did not converge from x0={x0} (last x={x}, f={fn(x)})")


def bisect_1d(fn, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Scalar bisection on a sign change; returns the midpoint estimate."""
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"bisect_1d: no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid == 0.0 or (hi - lo) < tol * max(1.0, abs(mid)):
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return 0.5 * (lo + hi)
