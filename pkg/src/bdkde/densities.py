"""Test densities with exact derivatives, samplers, and smoothness witnesses.

Every model carries analytic derivatives up to ``s_max`` and an exact sampler
(inverse CDF, exact mixture, or rejection; never grid-based approximation),
so experiment error curves are limited by quadrature and Monte Carlo noise
only, not by model error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e, polynomial as npoly
from scipy import special

from .errors import CapabilityError, InputError, WitnessError
from .quadrature import QuadratureSpec, geometric_edges, integrate_line

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class DensityModel:
    """A density with analytic derivatives and an exact sampler."""

    name: str
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[int, np.ndarray], np.ndarray]  # j-th derivative, j <= s_max
    s_max: int
    support: float | None  # exact half-width, None for the whole line
    radius: float  # truncation half-width for quadrature
    _sample: Callable = field(repr=False)
    _norm_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def sampler(self, seed, n: int) -> np.ndarray:
        """Draw ``n`` points; identical seed gives identical output."""
        if n < 1:
            raise InputError("sample count must be >= 1")
        return self._sample(np.random.default_rng(seed), int(n))

    def deriv_l1(self, j: int, spec: QuadratureSpec | None = None) -> float:
        """``‖f^{(j)}‖_1``, cached after the first quadrature."""
        key = ("l1", j)
        if key not in self._norm_cache:
            self._check_order(j)
            spec = spec or QuadratureSpec(abs_tol=1e-10, rel_tol=1e-10)
            self._norm_cache[key] = integrate_line(
                lambda x: np.abs(self.deriv(j, x)), spec, (-self.radius, self.radius)
            ).value
        return self._norm_cache[key]

    def deriv_sup(self, j: int) -> float:
        """``‖f^{(j)}‖_C`` by dense-grid scan (documented accuracy ~1e-6)."""
        key = ("sup", j)
        if key not in self._norm_cache:
            self._check_order(j)
            xs = np.linspace(-self.radius, self.radius, 400001)
            self._norm_cache[key] = float(np.max(np.abs(self.deriv(j, xs))))
        return self._norm_cache[key]

    def _check_order(self, j: int):
        if not 0 <= j <= self.s_max:
            raise CapabilityError(
                f"{self.name} provides derivatives up to order {self.s_max}, not {j}"
            )


# --- gaussian and mixtures -------------------------------------------------


def _hermite_basis(j: int) -> np.ndarray:
    e = np.zeros(j + 1)
    e[j] = 1.0
    return e


def _normal_deriv(j: int, z: np.ndarray) -> np.ndarray:
    # φ^{(j)}(z) = (-1)^j He_j(z) φ(z), probabilists' Hermite.
    phi = np.exp(-0.5 * np.square(z)) / _SQRT_2PI
    return (-1.0) ** j * hermite_e.hermeval(z, _hermite_basis(j)) * phi


def gaussian_model() -> DensityModel:
    def pdf(x):
        return np.exp(-0.5 * np.square(np.asarray(x, dtype=float))) / _SQRT_2PI

    def cdf(x):
        return special.ndtr(np.asarray(x, dtype=float))

    def deriv(j, x):
        return _normal_deriv(j, np.asarray(x, dtype=float))

    def sample(rng, n):
        return rng.standard_normal(n)

    return DensityModel("gaussian", pdf, cdf, deriv, 6, None, 12.0, sample)


def gaussian_mixture_model(
    weights=(0.6, 0.4), means=(-1.0, 1.5), sigmas=(1.0, 0.7), name="gauss_mix"
) -> DensityModel:
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if not (weights.shape == means.shape == sigmas.shape):
        raise InputError("mixture parameter arrays must share a shape")
    if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights <= 0) or np.any(sigmas <= 0):
        raise InputError("weights must be positive and sum to 1; sigmas positive")

    def pdf(x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - means) / sigmas
        return np.sum(weights / sigmas * np.exp(-0.5 * z * z) / _SQRT_2PI, axis=-1)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - means) / sigmas
        return np.sum(weights * special.ndtr(z), axis=-1)

    def deriv(j, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - means) / sigmas
        terms = weights * sigmas ** -(j + 1) * _normal_deriv(j, z)
        return np.sum(terms, axis=-1)

    def sample(rng, n):
        comp = rng.choice(len(weights), size=n, p=weights)
        return means[comp] + sigmas[comp] * rng.standard_normal(n)

    radius = float(np.max(np.abs(means) + 12.0 * sigmas))
    return DensityModel(name, pdf, cdf, deriv, 6, None, radius, sample)


# --- compactly supported polynomial bump ------------------------------------


def bump_model() -> DensityModel:
    # f(x) = (315/256)(1-x²)^4 on [-1, 1]: C³ on the line, smooth inside.
    norm = 315.0 / 256.0
    base = norm * np.array([1.0, 0.0, -4.0, 0.0, 6.0, 0.0, -4.0, 0.0, 1.0])
    derivs = [base]
    for _ in range(4):
        derivs.append(npoly.polyder(derivs[-1]))
    anti = npoly.polyint(base)
    anti_left = npoly.polyval(-1.0, anti)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, npoly.polyval(x, base), 0.0)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        inner = npoly.polyval(np.clip(x, -1.0, 1.0), anti) - anti_left
        return np.where(x < -1.0, 0.0, np.where(x > 1.0, 1.0, inner))

    def deriv(j, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, npoly.polyval(x, derivs[j]), 0.0)

    def sample(rng, n):
        # Rejection from the uniform envelope; exact for the polynomial pdf.
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = 2 * (n - filled) + 16
            xs = rng.uniform(-1.0, 1.0, m)
            us = rng.uniform(0.0, norm, m)
            good = xs[us <= npoly.polyval(xs, base)]
            take = min(good.size, n - filled)
            out[filled : filled + take] = good[:take]
            filled += take
        return out

    return DensityModel("bump", pdf, cdf, deriv, 3, 1.0, 1.0, sample)


# --- logistic density --------------------------------------------------------


def _logistic_q_polys(count: int) -> list[np.ndarray]:
    """Coefficients of Q_j with f^{(j)}(x) = u(1-u) · Q_j(u), u = sigmoid(x).

    Factoring out u(1-u) avoids the catastrophic cancellation that evaluating
    the raw degree-(j+2) polynomial at u ≈ 1 would cause for |x| ≳ 25.
    """
    w = np.array([0.0, 1.0, -1.0])  # u - u²
    lin = np.array([1.0, -2.0])  # 1 - 2u
    qs = [np.array([1.0])]
    for _ in range(count):
        q = qs[-1]
        qs.append(npoly.polyadd(npoly.polymul(npoly.polyder(q), w), npoly.polymul(q, lin)))
    return qs


def logistic_model() -> DensityModel:
    qs = _logistic_q_polys(8)

    def _weight_u(x):
        # u(1-u) and u evaluated without cancellation, via e^{-|x|}.
        ax = np.abs(x)
        em = np.exp(-ax)
        w = em / np.square(1.0 + em)
        u_pos = 1.0 / (1.0 + em)
        return w, np.where(x >= 0, u_pos, 1.0 - u_pos)

    def pdf(x):
        w, _ = _weight_u(np.asarray(x, dtype=float))
        return w

    def cdf(x):
        return special.expit(np.asarray(x, dtype=float))

    def deriv(j, x):
        w, u = _weight_u(np.asarray(x, dtype=float))
        return w * npoly.polyval(u, qs[j])

    def sample(rng, n):
        # Inverse CDF on an exact dyadic lattice inside (0, 1).
        u = rng.integers(1, 2**53, size=n) / float(2**53)
        return np.log(u / (1.0 - u))

    return DensityModel("logistic", pdf, cdf, deriv, 6, None, 45.0, sample)


_CATALOG_BUILDERS = (gaussian_model, gaussian_mixture_model, bump_model, logistic_model)


def catalog() -> list[DensityModel]:
    """The built-in density models."""
    return [make() for make in _CATALOG_BUILDERS]


def by_name(name: str) -> DensityModel:
    for make in _CATALOG_BUILDERS:
        model = make()
        if model.name == name:
            return model
    names = [make().name for make in _CATALOG_BUILDERS]
    raise InputError(f"unknown density {name!r}; available: {names}")


# --- continuity modulus ------------------------------------------------------


def continuity_modulus(
    d: DensityModel,
    s: int,
    delta: float,
    grid_size: int = 8,
    spec: QuadratureSpec | None = None,
) -> float:
    """``sup_{|t| <= delta} ∫ |f^{(s)}(x-t) - f^{(s)}(x)| dx`` on a shift grid.

    The grid is ``t = delta·k/grid_size`` for k = 1..grid_size, so the
    endpoint ``t = delta`` is always included.  The shift distance is even in
    t, so negative shifts are not evaluated separately.
    """
    if delta < 0:
        raise InputError("delta must be nonnegative")
    if grid_size < 1:
        raise InputError("grid_size must be >= 1")
    d._check_order(s)
    if delta == 0.0:
        return 0.0
    spec = spec or QuadratureSpec(abs_tol=1e-9, rel_tol=1e-8)
    r = d.radius + delta
    best = 0.0
    for k in range(1, grid_size + 1):
        t = delta * k / grid_size

        def integrand(x, t=t):
            return np.abs(d.deriv(s, x - t) - d.deriv(s, x))

        best = max(best, integrate_line(integrand, spec, (-r, r)).value)
    return best


# --- Lipschitz witnesses -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class LipschitzWitness:
    """Pointwise Lipschitz data (l, r) certifying membership in Lip(a, delta)."""

    a: float
    delta: float
    l: Callable[[np.ndarray], np.ndarray]
    r: Callable[[np.ndarray], np.ndarray]
    integral_value: float  # ∫ (l + r^{-delta})
    target: str  # which derivative the witness certifies, e.g. "bump f^(1)"


def _spot_check_witness(g, l_fn, r_fn, a: float, rng, trials: int, x_lo: float, x_hi: float):
    xs = rng.uniform(x_lo, x_hi, trials)
    hs = rng.uniform(-1.0, 1.0, trials) * r_fn(xs)
    lhs = np.abs(g(xs - hs) - g(xs))
    rhs = l_fn(xs) * np.abs(hs) ** a
    bad = lhs > rhs + 1e-12
    if np.any(bad):
        i = int(np.argmax(bad))
        raise WitnessError(
            f"witness violated at x={xs[i]!r}, h={hs[i]!r}: {lhs[i]!r} > {rhs[i]!r}"
        )


def _witness_integral(l_fn, r_fn, delta: float, finite_r: float, tail_edges) -> float:
    spec = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-9, max_subdivisions=8000)

    def integrand(x):
        return l_fn(x) + r_fn(x) ** -delta

    edges = [-e for e in tail_edges] + list(tail_edges)
    return integrate_line(integrand, spec, (-finite_r, finite_r), edges).value


def make_witness_compact(
    d: DensityModel,
    s: int,
    a: float,
    c: float,
    delta: float,
    spot_trials: int = 10_000,
    seed: int = 20161107,
) -> LipschitzWitness:
    """Witness for a compactly supported density whose f^(s) is (a, c)-Lipschitz.

    The constant branch is kept for one extra unit past the support edge:
    with the radius function r(x) = |x| - N right at the edge, r^{-delta}
    would not be integrable for delta > 1, so the crossover sits at N + 1.
    """
    if d.support is None:
        raise InputError("compact-support witness requires a compactly supported density")
    if not (0.0 < a <= 1.0):
        raise InputError("exponent a must lie in (0, 1]")
    if not delta > 1.0:
        raise InputError("delta must exceed 1")
    if not c > 0:
        raise InputError("Lipschitz constant c must be positive")
    d._check_order(s)
    n_edge = d.support
    rng = np.random.default_rng(seed)

    def g(x):
        return d.deriv(s, x)

    # The caller supplies c; verify the plain Lipschitz bound before trusting it.
    xs = rng.uniform(-(n_edge + 3.0), n_edge + 3.0, spot_trials)
    hs = rng.uniform(-2.0, 2.0, spot_trials)
    if np.any(np.abs(g(xs - hs) - g(xs)) > c * np.abs(hs) ** a + 1e-12):
        raise WitnessError(f"|g(x-h)-g(x)| exceeds {c}|h|^{a}; constant too small")

    cross = n_edge + 1.0

    def l_fn(x):
        return np.where(np.abs(np.asarray(x, dtype=float)) < cross, c, 0.0)

    def r_fn(x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.where(ax < cross, 1.0, ax - n_edge)

    _spot_check_witness(g, l_fn, r_fn, a, rng, spot_trials, -(cross + 4.0), cross + 4.0)

    # r^{-delta} decays algebraically: truncate where the analytic tail
    # remainder (R - N)^{1-delta}/(delta-1) drops below 1e-8.
    tail_r = n_edge + (1e8 / (delta - 1.0)) ** (1.0 / (delta - 1.0))
    integral = _witness_integral(
        l_fn, r_fn, delta, tail_r, [cross] + geometric_edges(cross + 1.0, tail_r)
    )
    return LipschitzWitness(a, delta, l_fn, r_fn, integral, f"{d.name} f^({s})")


def make_witness_exponential(
    d: DensityModel,
    s: int,
    c: float,
    delta: float,
    spot_trials: int = 10_000,
    seed: int = 20161107,
) -> LipschitzWitness:
    """Witness with l(x) = c·e^{1/2 - |x|/2}, r(x) = (1+|x|)/2, exponent 1.

    Requires ``|f^{(s+1)}(t)| <= c e^{-|t|}`` everywhere; checked on a wide
    grid before the witness is issued.
    """
    if not delta > 1.0:
        raise InputError("delta must exceed 1")
    if not c > 0:
        raise InputError("bound constant c must be positive")
    d._check_order(s + 1)
    ts = np.linspace(-(d.radius + 5.0), d.radius + 5.0, 200_001)
    if np.any(np.abs(d.deriv(s + 1, ts)) > c * np.exp(-np.abs(ts)) + 1e-12):
        raise WitnessError(f"|f^({s + 1})| exceeds {c}·e^(-|t|); constant too small")

    def g(x):
        return d.deriv(s, x)

    def l_fn(x):
        return c * np.exp(0.5 - 0.5 * np.abs(np.asarray(x, dtype=float)))

    def r_fn(x):
        return 0.5 * (1.0 + np.abs(np.asarray(x, dtype=float)))

    rng = np.random.default_rng(seed)
    _spot_check_witness(g, l_fn, r_fn, 1.0, rng, spot_trials, -40.0, 40.0)

    # l decays exponentially, r^{-delta} algebraically; the larger radius wins.
    tail_l = 2.0 * math.log(max(4.0 * c * math.exp(0.5), 10.0) * 1e9)
    tail_r = (2.0**delta * 2.0 / ((delta - 1.0) * 1e-8)) ** (1.0 / (delta - 1.0))
    finite_r = max(tail_l, tail_r)
    integral = _witness_integral(l_fn, r_fn, delta, finite_r, geometric_edges(1.0, finite_r))
    return LipschitzWitness(1.0, delta, l_fn, r_fn, integral, f"{d.name} f^({s})")
