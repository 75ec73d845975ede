"""Deterministic numerical kernels and seeded random streams.

All densities are computed in the log domain; probabilities are only
exponentiated at the final normalization step.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import betaln
from scipy.stats import invwishart

from .errors import NumericalError

__all__ = [
    "RngStream",
    "MatrixNormalParams",
    "InverseWishartParams",
    "draw",
    "log_beta_bernoulli_marginal",
    "beta_logpdf",
    "matrix_normal_logpdf",
    "sample_matrix_normal",
    "sample_inverse_wishart",
]

# Arguments to exp() beyond this are treated as overflow in model code.
MAX_LOG = 500.0


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


class RngStream:
    """Counter-based random stream addressed by (root seed, key path, counter).

    Each call to :meth:`generator` derives a fresh generator from the triple,
    then bumps the counter, so the draw sequence of a stream depends only on
    its address and how many times it has been used -- never on which worker
    consumed it. Child streams extend the key path and are independent of the
    parent and of each other.
    """

    __slots__ = ("root", "key", "counter")

    def __init__(self, root: int, key: tuple = (), counter: int = 0):
        self.root = int(root)
        self.key = tuple(_key_part(p) for p in key)
        self.counter = int(counter)

    def child(self, *key) -> "RngStream":
        return RngStream(self.root, self.key + tuple(_key_part(p) for p in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root, spawn_key=self.key + (self.counter,))
        self.counter += 1
        return np.random.Generator(np.random.Philox(ss))

    def __getstate__(self):
        return (self.root, self.key, self.counter)

    def __setstate__(self, state):
        self.root, self.key, self.counter = state

    def __repr__(self):
        return f"RngStream(root={self.root}, key={self.key}, counter={self.counter})"


@dataclass
class MatrixNormalParams:
    """Matrix-normal with separable covariance: rows covary by `row_cov`,
    columns by `col_cov`; the row-major vectorization has covariance
    kron(row_cov, col_cov)."""

    mean: np.ndarray      # (n, p)
    row_cov: np.ndarray   # (n, n) SPD
    col_cov: np.ndarray   # (p, p) SPD

    def __post_init__(self):
        self.mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        self.row_cov = np.atleast_2d(np.asarray(self.row_cov, dtype=float))
        self.col_cov = np.atleast_2d(np.asarray(self.col_cov, dtype=float))
        n, p = self.mean.shape
        if self.row_cov.shape != (n, n) or self.col_cov.shape != (p, p):
            raise NumericalError(
                f"matrix-normal dimension mismatch: mean {self.mean.shape}, "
                f"row_cov {self.row_cov.shape}, col_cov {self.col_cov.shape}"
            )


@dataclass
class InverseWishartParams:
    df: float
    scale: np.ndarray

    def __post_init__(self):
        self.scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        dim = self.scale.shape[0]
        if self.scale.shape != (dim, dim):
            raise NumericalError("inverse-Wishart scale must be square")
        if not self.df > dim - 1:
            raise NumericalError(
                f"inverse-Wishart df must exceed dim-1 ({self.df} <= {dim - 1})"
            )


def draw(dist, rng: RngStream) -> float:
    """Seeded draw from a named distribution.

    `dist` is a tuple: ("beta", a, b) | ("bernoulli", p) | ("normal", m, s)
    | ("uniform", lo, hi).
    """
    name, *params = dist
    g = rng.generator()
    if name == "beta":
        a, b = params
        if a <= 0 or b <= 0:
            raise NumericalError(f"beta parameters must be positive, got ({a}, {b})")
        return float(g.beta(a, b))
    if name == "bernoulli":
        (p,) = params
        if not 0.0 <= p <= 1.0:
            raise NumericalError(f"bernoulli probability out of [0,1]: {p}")
        return float(g.random() < p)
    if name == "normal":
        m, s = params
        if s < 0:
            raise NumericalError(f"normal scale must be non-negative: {s}")
        return float(g.normal(m, s))
    if name == "uniform":
        lo, hi = params
        if hi < lo:
            raise NumericalError(f"uniform bounds reversed: ({lo}, {hi})")
        return float(g.uniform(lo, hi))
    raise NumericalError(f"unknown distribution: {name!r}")


def log_beta_bernoulli_marginal(successes, failures, nu1, nu2):
    """log of the Beta-Bernoulli marginal B(nu1+s, nu2+f) / B(nu1, nu2).

    Vectorizes over `successes`/`failures`.
    """
    nu1 = np.asarray(nu1, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    if np.any(nu1 <= 0) or np.any(nu2 <= 0):
        raise NumericalError("Beta shape parameters must be positive")
    s = np.asarray(successes, dtype=float)
    f = np.asarray(failures, dtype=float)
    if np.any(s < 0) or np.any(f < 0):
        raise NumericalError("counts must be non-negative")
    out = betaln(nu1 + s, nu2 + f) - betaln(nu1, nu2)
    return float(out) if out.ndim == 0 else out


def beta_logpdf(p, a, b):
    """Beta log-density including the normalizing constant; vectorized."""
    p = np.asarray(p, dtype=float)
    return (a - 1.0) * np.log(p) + (b - 1.0) * np.log1p(-p) - betaln(a, b)


def matrix_normal_logpdf(x: np.ndarray, params: MatrixNormalParams) -> float:
    """Log-density of a matrix-normal evaluated via the separable (trace)
    form; equals the dense multivariate normal on the row-major vectorization
    with covariance kron(row_cov, col_cov)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = params.mean.shape
    if x.shape != (n, p):
        raise NumericalError(f"argument shape {x.shape} != mean shape {(n, p)}")
    try:
        la = np.linalg.cholesky(params.row_cov)
        ls = np.linalg.cholesky(params.col_cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance not SPD: {exc}") from exc
    diff = x - params.mean
    y = solve_triangular(la, diff, lower=True)          # row whitening
    w = solve_triangular(ls, y.T, lower=True)           # column whitening
    quad = float(np.sum(w * w))
    logdet_row = 2.0 * float(np.sum(np.log(np.diag(la))))
    logdet_col = 2.0 * float(np.sum(np.log(np.diag(ls))))
    return -0.5 * (n * p * np.log(2.0 * np.pi) + p * logdet_row + n * logdet_col + quad)


def sample_matrix_normal(params: MatrixNormalParams, rng: RngStream) -> np.ndarray:
    """Draw one matrix from the matrix-normal."""
    n, p = params.mean.shape
    la = np.linalg.cholesky(params.row_cov)
    ls = np.linalg.cholesky(params.col_cov)
    z = rng.generator().standard_normal((n, p))
    return params.mean + la @ z @ ls.T


def sample_inverse_wishart(params: InverseWishartParams, rng: RngStream) -> np.ndarray:
    """One inverse-Wishart draw; output is SPD."""
    g = rng.generator()
    out = invwishart.rvs(df=params.df, scale=params.scale, random_state=g)
    return np.atleast_2d(out)


def solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve mat @ x = rhs for SPD `mat` via Cholesky."""
    try:
        c = cho_factor(mat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"matrix not SPD: {exc}") from exc
    return cho_solve(c, rhs)
