"""Decomposable losses for multiplicative updates.

Every loss exposes the entrywise pieces the update needs: ``a(x, y)``,
``b(x, y)`` and the inverse link ``g_inverse``, so that a factor is rescaled
by ``g_inverse(A / B)`` where ``A``/``B`` are the chain-rule sums of ``a``/``b``.
Here ``x`` is the observed value and ``y`` the model prediction; ``y`` is
clamped below by ``epsilon_y`` wherever it enters a formula.

All methods are vectorised over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import LossDomainError

EPSILON_Y = 1e-30


def _arr(v):
    return np.asarray(v, dtype=np.float64)


def _pow(x, p):
    """``x ** p`` with shortcuts for the exponents that dominate in practice."""
    if p == 1:
        return x
    if p == 0:
        return np.ones_like(x)
    if p == 2:
        return x * x
    if p == -1:
        with np.errstate(divide="ignore"):
            return 1.0 / x
    if p == 0.5:
        return np.sqrt(x)
    with np.errstate(divide="ignore"):
        return x**p


class Loss:
    """Base class. Subclasses set ``epsilon_y`` and implement the hooks."""

    epsilon_y: float = EPSILON_Y
    #: True when ``g`` is ``log`` (so ``g_inverse`` is ``exp``), else a power
    log_link: bool = False

    def clamp(self, y):
        return np.maximum(_arr(y), self.epsilon_y)

    def check_data(self, x, where=None) -> None:
        """Raise :class:`LossDomainError` if ``x`` (restricted to ``where``) is
        outside the data domain."""
        x = _arr(x) if where is None else _arr(x)[where]
        if x.size and x.min() < 0:
            raise LossDomainError(f"{self.describe()}: data must be nonnegative")

    # hooks -----------------------------------------------------------------
    def loss(self, x, y):
        raise NotImplementedError

    def ab(self, x, y):
        raise NotImplementedError

    def g(self, lam):
        raise NotImplementedError

    def g_inverse(self, t):
        raise NotImplementedError

    def dloss_dy(self, x, y):
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    def params(self) -> dict:
        """Flat parameter dict (for manifests)."""
        return {}


@dataclass(frozen=True)
class AlphaBeta(Loss):
    """The (alpha, beta)-divergence.

    Special cases include least squares (1, 1), KL (1, 0), reverse KL
    (0, 1), Itakura-Saito (1, -1), squared Hellinger (0.5, 0.5), Pearson
    chi^2 (2, -1) and Neyman chi^2 (-1, 2).  ``alpha == 0`` is accepted only
    together with ``beta == 1``; no multiplicative update is known otherwise.
    """

    alpha: float
    beta: float
    epsilon_y: float = EPSILON_Y

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if self.alpha == 0 and self.beta != 1:
            raise LossDomainError(
                f"no multiplicative update for α=0, β≠1 (got alpha={self.alpha}, beta={self.beta})"
            )
        object.__setattr__(self, "log_link", self.alpha == 0)

    @property
    def case(self) -> str:
        return _ab_case(self.alpha, self.beta)

    @property
    def link_exponent(self) -> float | None:
        """Exponent ``p`` of ``g(lam) = lam**p``; ``None`` for the log link."""
        al, be = self.alpha, self.beta
        if al == 0:
            return None
        q = (1.0 - be) / al
        if q > 1:
            return 1.0 - be
        if q < 0:
            return al + be - 1.0
        return al

    def check_data(self, x, where=None) -> None:
        super().check_data(x, where)
        x = _arr(x) if where is None else _arr(x)[where]
        if x.size and x.min() == 0 and _needs_positive(self.alpha, self.beta):
            raise LossDomainError(
                f"{self.describe()}: loss requires positive data (zero entries present)"
            )

    def loss(self, x, y):
        return alpha_beta_divergence(x, self.clamp(y), self.alpha, self.beta)

    def ab(self, x, y):
        x, y = _arr(x), self.clamp(y)
        al, be = self.alpha, self.beta
        if al == 0:
            return np.log(x / y), np.ones_like(y)
        return _pow(x, al) * _pow(y, be - 1.0), _pow(y, al + be - 1.0)

    def g(self, lam):
        p = self.link_exponent
        return np.log(lam) if p is None else _arr(lam) ** p

    def g_inverse(self, t):
        p = self.link_exponent
        t = _arr(t)
        if p is None:
            return np.exp(t)
        if t.size and t.min() < 0:
            raise LossDomainError("ratio outside Range(g)")
        with np.errstate(divide="ignore"):
            return t ** (1.0 / p)

    def dloss_dy(self, x, y):
        a, b = self.ab(x, y)
        if self.alpha == 0:
            return -a
        return (b - a) / self.alpha

    def describe(self) -> str:
        return f"ab(alpha={self.alpha!r}, beta={self.beta!r})"

    def params(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True, eq=False)
class NegBinomial(Loss):
    """Negative binomial NLL (terms depending on the mean) with dispersion ``phi``.

    ``phi`` is a positive scalar or an array broadcastable to the data.
    """

    phi: float | np.ndarray = 1.0
    epsilon_y: float = EPSILON_Y

    def __post_init__(self):
        phi = _arr(self.phi)
        if phi.size == 0 or phi.min() <= 0:
            raise LossDomainError("negative binomial dispersion phi must be positive")
        object.__setattr__(self, "phi", float(phi) if phi.ndim == 0 else phi)

    def loss(self, x, y):
        x, y = _arr(x), self.clamp(y)
        return (self.phi + x) * np.log(self.phi + y) - xlogy(x, y)

    def ab(self, x, y):
        x, y = _arr(x), self.clamp(y)
        return x / y, (self.phi + x) / (self.phi + y)

    def g(self, lam):
        return _arr(lam)

    def g_inverse(self, t):
        t = _arr(t)
        if t.size and t.min() < 0:
            raise LossDomainError("ratio outside Range(g)")
        return t

    def dloss_dy(self, x, y):
        a, b = self.ab(x, y)
        return b - a

    def describe(self) -> str:
        phi = self.phi if np.ndim(self.phi) == 0 else "<tensor>"
        return f"negbin(phi={phi!r})"

    def params(self) -> dict:
        return {"phi": self.phi} if np.ndim(self.phi) == 0 else {}


@dataclass(frozen=True, eq=False)
class BinomialOdds(Loss):
    """Binomial NLL in the odds parameterisation with ``trials`` per entry.

    The prediction ``y`` is the odds ``p / (1 - p)``.
    """

    trials: float | np.ndarray = 1.0
    epsilon_y: float = EPSILON_Y

    def __post_init__(self):
        n = _arr(self.trials)
        if n.size == 0 or n.min() <= 0:
            raise LossDomainError("binomial trials must be positive")
        object.__setattr__(self, "trials", float(n) if n.ndim == 0 else n)

    def check_data(self, x, where=None) -> None:
        super().check_data(x, where)
        x = _arr(x)
        n = np.broadcast_to(self.trials, x.shape)
        if where is not None:
            x, n = x[where], n[where]
        if np.any(x > n):
            raise LossDomainError(f"{self.describe()}: successes exceed trials")

    def loss(self, x, y):
        x, y = _arr(x), self.clamp(y)
        return self.trials * np.log1p(y) - xlogy(x, y)

    def ab(self, x, y):
        x, y = _arr(x), self.clamp(y)
        return x / y, self.trials / (1.0 + y)

    g = NegBinomial.g
    g_inverse = NegBinomial.g_inverse
    dloss_dy = NegBinomial.dloss_dy

    def describe(self) -> str:
        n = self.trials if np.ndim(self.trials) == 0 else "<tensor>"
        return f"binomial(trials={n!r})"

    def params(self) -> dict:
        return {"trials": self.trials} if np.ndim(self.trials) == 0 else {}


@dataclass(frozen=True, eq=False)
class BernoulliOdds(BinomialOdds):
    """Bernoulli NLL in the odds parameterisation (one trial per entry)."""

    trials: float = field(default=1.0, init=False)

    def describe(self) -> str:
        return "bernoulli()"

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class JensenShannon(Loss):
    """Jensen-Shannon divergence; log link, so ``g_inverse`` is ``exp``."""

    epsilon_y: float = EPSILON_Y
    log_link = True

    def loss(self, x, y):
        x, y = _arr(x), self.clamp(y)
        m = 0.5 * (x + y)
        return 0.5 * (xlogy(x, x) + xlogy(y, y)) - xlogy(m, m)

    def ab(self, x, y):
        x, y = _arr(x), self.clamp(y)
        return np.log((x + y) / (2.0 * y)), np.ones_like(y)

    def g(self, lam):
        return np.log(lam)

    def g_inverse(self, t):
        return np.exp(_arr(t))

    def dloss_dy(self, x, y):
        a, _ = self.ab(x, y)
        return -0.5 * a

    def describe(self) -> str:
        return "js()"


# ---------------------------------------------------------------------------


def _ab_case(alpha: float, beta: float) -> str:
    if alpha == 0 and beta == 0:
        return "log"
    if alpha == 0:
        return "alpha0"
    if beta == 0:
        return "beta0"
    if alpha + beta == 0:
        return "anti"
    return "generic"


def _needs_positive(alpha: float, beta: float) -> bool:
    case = _ab_case(alpha, beta)
    if case in ("log", "alpha0", "anti"):
        return True
    if alpha < 0:
        return True
    return case == "generic" and alpha + beta < 0


def alpha_beta_divergence(x, y, alpha: float, beta: float):
    """Entrywise (alpha, beta)-divergence for any real ``alpha``, ``beta``.

    Unlike :class:`AlphaBeta` this also evaluates the ``alpha == 0``,
    ``beta != 1`` cases (useful as an evaluation metric). Zero data entries
    are handled through the ``x log x -> 0`` limit where the formula allows
    it; otherwise :class:`LossDomainError` is raised.
    """
    x, y = _arr(x), _arr(y)
    al, be = float(alpha), float(beta)
    if x.size and x.min() < 0:
        raise LossDomainError("data must be nonnegative")
    if x.size and x.min() == 0 and _needs_positive(al, be):
        raise LossDomainError(
            f"loss undefined at x=0 for alpha={al}, beta={be}"
        )
    case = _ab_case(al, be)
    if case == "generic":
        s = al + be
        plain = (al / s * _pow(x, s) + be / s * _pow(y, s) - _pow(x, al) * _pow(y, be)) / (al * be)
        if abs(be) >= 1e-3:
            return plain
        # near beta = 0 the 1/beta factor amplifies cancellation; regroup around expm1:
        # L = y^b [x^a expm1(b log(x/y)) / b + (y^a - x^a) / a] / (a + b)
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        xa, yb = _pow(xs, al), _pow(y, be)
        stable = yb * (xa * np.expm1(be * np.log(xs / y)) / be + (_pow(y, al) - xa) / al) / s
        return np.where(pos, stable, plain)
    if case == "beta0":
        xa = _pow(x, al)
        cross = xa * (np.log(np.where(x > 0, x, 1.0)) - np.log(y))
        return (_pow(y, al) - xa + al * cross) / al**2
    if case == "anti":
        return ((x / y) ** al - 1.0 + al * np.log(y / x)) / al**2
    if case == "alpha0":
        return (be * y**be * np.log(y / x) - y**be + x**be) / be**2
    return 0.5 * (np.log(x) - np.log(y)) ** 2


LOSS_NAMES = ("ab", "negbin", "bernoulli", "binomial", "js")


def make_loss(name: str, alpha=None, beta=None, phi=None, trials=None) -> Loss:
    """Build a loss from its CLI name and numeric parameters."""
    if name == "ab":
        if alpha is None or beta is None:
            raise ValueError("loss 'ab' needs both alpha and beta")
        return AlphaBeta(alpha, beta)
    if name == "negbin":
        return NegBinomial(1.0 if phi is None else phi)
    if name == "bernoulli":
        return BernoulliOdds()
    if name == "binomial":
        return BinomialOdds(1.0 if trials is None else trials)
    if name == "js":
        return JensenShannon()
    raise ValueError(f"unknown loss {name!r}; choose from {', '.join(LOSS_NAMES)}")
