"""Kernel representation and moment computation.

A kernel is a polynomial times a named base profile, optionally cut to a
finite support.  That form is closed under the polynomial transforms used to
build bias-reducing kernels, and it keeps signed moments in closed form for
the gaussian and compact profiles.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DivergenceError, InputError
from .quadrature import QuadratureSpec, integrate_line

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _gaussian_raw_moment(m: int) -> float:
    # E[Z^m] for standard normal: (m-1)!! for even m, 0 for odd.
    return 0.0 if m % 2 else float(_double_factorial(m - 1))


def _epanechnikov_raw_moment(m: int) -> float:
    # ∫ t^m (3/4)(1-t²) dt on [-1, 1].
    return 0.0 if m % 2 else 3.0 / ((m + 1) * (m + 3))


def _uniform_raw_moment(m: int) -> float:
    # ∫ t^m / 2 dt on [-1, 1].
    return 0.0 if m % 2 else 1.0 / (m + 1)


@dataclass(frozen=True)
class Profile:
    """A named base shape, prior to any polynomial modification."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    support: float | None  # exact half-width, or None for the whole line
    tail_radius: float  # truncation radius for quadrature when support is None
    symmetric: bool
    raw_moment: Callable[[int], float] | None  # closed-form ∫ t^m · profile(t) dt


def _gaussian_fn(t):
    return np.exp(-0.5 * np.square(t)) / _SQRT_2PI


def _epanechnikov_fn(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - np.square(t)), 0.0)


def _uniform_fn(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, 0.5, 0.0)


GAUSSIAN = Profile("gaussian", _gaussian_fn, None, 12.0, True, _gaussian_raw_moment)
EPANECHNIKOV = Profile("epanechnikov", _epanechnikov_fn, 1.0, 1.0, True, _epanechnikov_raw_moment)
UNIFORM = Profile("uniform", _uniform_fn, 1.0, 1.0, True, _uniform_raw_moment)

PROFILES: dict[str, Profile] = {p.name: p for p in (GAUSSIAN, EPANECHNIKOV, UNIFORM)}


def tabulated_profile(ts, ys, name: str = "custom") -> Profile:
    """Linearly interpolated profile from a table; support must be finite.

    Values outside the tabulated range are exactly zero, which keeps every
    moment finite and the quadrature contracts honest.
    """
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ts.ndim != 1 or ts.size < 2 or ts.shape != ys.shape:
        raise InputError("need matching 1-d arrays with at least two points")
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(ys))):
        raise InputError("tabulated profile contains non-finite entries")
    if np.any(np.diff(ts) <= 0):
        raise InputError("abscissae must be strictly increasing")
    support = float(max(abs(ts[0]), abs(ts[-1])))
    symmetric = bool(
        np.allclose(ts, -ts[::-1], atol=1e-12) and np.allclose(ys, ys[::-1], atol=1e-12)
    )

    def fn(t):
        return np.interp(np.asarray(t, dtype=float), ts, ys, left=0.0, right=0.0)

    return Profile(name, fn, support, support, symmetric, None)


@dataclass(frozen=True)
class Kernel:
    """Polynomial-times-profile kernel, immutable after construction."""

    profile: Profile
    coeffs: tuple[float, ...]  # a_0..a_d multiplying the profile as Σ a_i t^i
    support_radius: float | None = None

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise InputError("poly_coeffs must be non-empty")
        if not all(np.isfinite(c) for c in self.coeffs):
            raise InputError("poly_coeffs must be finite")
        if self.support_radius is not None and not self.support_radius > 0:
            raise InputError("support_radius must be positive")
        if self.profile.support is None and self.profile.raw_moment is None:
            if self.support_radius is None:
                raise InputError("profiles without closed-form moments need finite support")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def cutoff(self) -> float | None:
        """Exact support half-width, if any; evaluation beyond it is 0."""
        widths = [w for w in (self.support_radius, self.profile.support) if w is not None]
        return min(widths) if widths else None

    @property
    def radius(self) -> float:
        """Truncation half-width for quadrature over this kernel."""
        if self.cutoff is not None:
            return self.cutoff
        # Polynomial growth pushes the useful tail out a little.
        return self.profile.tail_radius + self.degree

    @property
    def symmetric(self) -> bool:
        return self.profile.symmetric and all(c == 0.0 for c in self.coeffs[1::2])

    def poly_real_roots(self) -> tuple[float, ...]:
        return _poly_real_roots(self.coeffs, self.radius)


@functools.lru_cache(maxsize=512)
def _poly_real_roots(coeffs: tuple[float, ...], radius: float) -> tuple[float, ...]:
    arr = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if arr.size <= 1:
        return ()
    found = []
    lead = int(np.argmax(arr != 0.0))
    if lead > 0:  # monomial factor t^lead
        found.append(0.0)
        arr = arr[lead:]
    if arr.size > 1:
        roots = npoly.polyroots(arr)
        found.extend(roots[np.abs(roots.imag) < 1e-9].real.tolist())
    return tuple(sorted(float(r) for r in set(found) if abs(r) < radius))


def kernel(profile_name: str, coeffs=(1.0,), support_radius: float | None = None) -> Kernel:
    """Build a kernel over a registered profile name."""
    if profile_name not in PROFILES:
        raise InputError(
            f"unknown profile {profile_name!r}; available: {sorted(PROFILES)}"
        )
    return Kernel(PROFILES[profile_name], tuple(float(c) for c in coeffs), support_radius)


def eval_kernel(k: Kernel, t) -> np.ndarray | float:
    """Evaluate ``(Σ a_i t^i) · profile(t)``; exactly 0 outside finite support."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise InputError("evaluation points must be finite")
    vals = npoly.polyval(t_arr, np.asarray(k.coeffs)) * k.profile.fn(t_arr)
    if k.cutoff is not None:
        vals = np.where(np.abs(t_arr) <= k.cutoff, vals, 0.0)
    return vals if t_arr.ndim else float(vals)


def eval_scaled(k: Kernel, h: float, x) -> np.ndarray | float:
    """``(S_h K)(x) = K(x / h) / h``."""
    if not (np.isfinite(h) and h > 0):
        raise InputError("bandwidth must be positive and finite")
    return eval_kernel(k, np.asarray(x, dtype=float) / h) / h


def _has_closed_form(k: Kernel) -> bool:
    if k.profile.raw_moment is None:
        return False
    if k.support_radius is None:
        return True
    # A support cut narrower than the profile invalidates the closed form.
    return k.profile.support is not None and k.support_radius >= k.profile.support


def _quad_spec(tol: float) -> QuadratureSpec:
    return QuadratureSpec(abs_tol=tol, rel_tol=tol, max_subdivisions=8000)


def _tail_shells(integrand, radius: float, tol: float) -> float:
    """Integrate two dyadic tail shells; growth between them means divergence."""
    spec = _quad_spec(max(tol, 1e-12))
    shells = []
    for lo, hi in ((radius, 2 * radius), (2 * radius, 4 * radius)):
        part = integrate_line(integrand, spec, (lo, hi)).value
        part += integrate_line(integrand, spec, (-hi, -lo)).value
        shells.append(part)
    if shells[1] > shells[0] and shells[1] > tol:
        raise DivergenceError(
            f"tail shells grow ({shells[0]:.3e} -> {shells[1]:.3e}); moment diverges"
        )
    return shells[0] + shells[1]


def moment(k: Kernel, j: int, tol: float = 1e-10) -> float:
    """Signed moment ``α_j = ∫ t^j K(t) dt``.

    Uses the profile's closed form when the support permits, otherwise
    adaptive quadrature to ``tol``.
    """
    if j < 0 or j != int(j):
        raise InputError("moment index must be a nonnegative integer")
    j = int(j)
    if _has_closed_form(k):
        rm = k.profile.raw_moment
        return float(sum(c * rm(i + j) for i, c in enumerate(k.coeffs) if c != 0.0))

    def integrand(t):
        return np.power(t, j) * eval_kernel(k, t)

    r = k.radius
    value = integrate_line(integrand, _quad_spec(tol), (-r, r), k.poly_real_roots()).value
    if k.cutoff is None:
        value += _tail_shells(integrand, r, tol)
    return value


def abs_moment(k: Kernel, s: float, tol: float = 1e-10) -> float:
    """Absolute moment ``β_s = ∫ |t|^s |K(t)| dt``; supports non-integer s."""
    if not (np.isfinite(s) and s >= 0):
        raise InputError("absolute-moment exponent must be a nonnegative real")
    s = float(s)

    def integrand(t):
        return np.abs(t) ** s * np.abs(eval_kernel(k, t))

    r = k.radius
    breaks = set(k.poly_real_roots())
    breaks.add(0.0)  # |t|^s has a kink (or unbounded derivative) at 0
    value = integrate_line(integrand, _quad_spec(tol), (-r, r), breaks).value
    if k.cutoff is None:
        value += _tail_shells(integrand, r, tol)
    return value


@dataclass(frozen=True, eq=False)
class MomentProfile:
    """Signed moments of a kernel, with the detected order.

    ``status`` is ``"ok"`` when the kernel has unit mass and an order within
    the scanned range, ``"not-a-kernel"`` when its mass differs from 1, and
    ``"no-order"`` when every scanned moment past 0 vanishes.
    """

    signed: np.ndarray
    order: int | None
    status: str
    quadrature_tol: float
    kernel: Kernel
    absolute_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def absolute(self, s: float) -> float:
        key = float(s)
        if key not in self.absolute_cache:
            self.absolute_cache[key] = abs_moment(self.kernel, key, self.quadrature_tol)
        return self.absolute_cache[key]


def detect_order(k: Kernel, j_max: int, tol: float = 1e-7) -> MomentProfile:
    """Scan moments 0..j_max and report the kernel order.

    The order is the smallest ``j >= 1`` with ``|α_j| > tol``, defined only
    when ``α_0 = 1`` within the same tolerance.  Exact zeros never happen in
    finite arithmetic, so the tolerance is an explicit parameter.
    """
    if j_max < 1:
        raise InputError("j_max must be >= 1")
    if not tol > 0:
        raise InputError("tolerance must be positive")
    quad_tol = min(1e-10, 1e-3 * tol)
    signed = np.array([moment(k, j, quad_tol) for j in range(j_max + 1)])
    if abs(signed[0] - 1.0) > tol:
        return MomentProfile(signed, None, "not-a-kernel", quad_tol, k)
    for j in range(1, j_max + 1):
        if abs(signed[j]) > tol:
            return MomentProfile(signed, j, "ok", quad_tol, k)
    return MomentProfile(signed, None, "no-order", quad_tol, k)
