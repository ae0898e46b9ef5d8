"""Canonical kernel pairs and the bandwidth-dependent kernel family.

Given a nonnegative base kernel, the Hankel matrix of its moments yields two
polynomial modifications: one with unit mass and vanishing moments through
order s, one with vanishing moments below s and unit s-th moment.  Their
h-weighted combination is an order-s kernel whose s-th moment shrinks with
the bandwidth, which is what removes the leading bias term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg

from .errors import ConsistencyError, InputError, SingularMatrixError
from .kernels import Kernel, MomentProfile, abs_moment, detect_order, eval_kernel, moment

_RCOND_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Hankel matrix of base-kernel moments, entries[i][j] = α_{i+j}."""

    s: int
    entries: np.ndarray
    base: Kernel
    condition_estimate: float  # 1-norm condition number


@dataclass(frozen=True, eq=False)
class KernelPair:
    """The canonical (k0, ks) pair over a shared base profile.

    ``verification`` holds the measured moments of both kernels through
    order s; ``residuals`` the deviations from the defining conditions.
    """

    k0: Kernel
    ks: Kernel
    s: int
    base: Kernel
    verification: tuple[MomentProfile, MomentProfile]
    residuals: np.ndarray  # 2(s+1) deviations, k0 block then ks block

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))


def _base_nonnegative(base: Kernel) -> bool:
    r = base.radius
    ts = np.linspace(-r, r, 4001)
    vals = eval_kernel(base, ts)
    return bool(np.all(vals >= -1e-12))


def moment_matrix(base: Kernel, s: int) -> MomentMatrix:
    """Moments α_0..α_{2s} of the base, arranged as a Hankel matrix.

    Refuses numerically singular matrices: invertibility holds in exact
    arithmetic for nonnegative bases, but finite precision needs a guard.
    """
    if s < 1:
        raise InputError("order s must be >= 1")
    if not _base_nonnegative(base):
        raise InputError("base kernel must be nonnegative")
    alphas = [moment(base, m) for m in range(2 * s + 1)]
    if abs(alphas[0] - 1.0) > 1e-8:
        raise InputError(f"base has mass {alphas[0]!r}; expected a unit-mass kernel")
    entries = np.array([[alphas[i + j] for j in range(s + 1)] for i in range(s + 1)])
    cond = float(np.linalg.cond(entries, 1))
    if not np.isfinite(cond) or 1.0 / cond < _RCOND_FLOOR:
        raise SingularMatrixError(
            f"moment matrix for s={s} is numerically singular "
            f"(reciprocal condition {1.0 / cond:.2e} < {_RCOND_FLOOR:.0e})"
        )
    return MomentMatrix(s, entries, base, cond)


def _transform(base: Kernel, poly: np.ndarray) -> Kernel:
    coeffs = npoly.polymul(np.asarray(base.coeffs), poly)
    return Kernel(base.profile, tuple(float(c) for c in coeffs), base.support_radius)


def construct_pair(base: Kernel, s: int, tol: float = 1e-8) -> KernelPair:
    """Solve the two moment systems and verify the result.

    The polynomial coefficient vectors are the solutions of ``A a = e_1`` and
    ``A a = e_{s+1}``; verification recomputes all 2(s+1) moment conditions
    and refuses results that miss them beyond ``tol``.
    """
    mm = moment_matrix(base, s)
    rhs = np.zeros((s + 1, 2))
    rhs[0, 0] = 1.0
    rhs[s, 1] = 1.0
    sol = linalg.solve(mm.entries, rhs, assume_a="sym")
    k0 = _transform(base, sol[:, 0])
    ks = _transform(base, sol[:, 1])

    mp0 = detect_order(k0, max(s + 1, 2))
    mps = detect_order(ks, max(s + 1, 2))
    target0 = np.zeros(s + 1)
    target0[0] = 1.0
    targets = np.zeros(s + 1)
    targets[s] = 1.0
    residuals = np.concatenate(
        [mp0.signed[: s + 1] - target0, mps.signed[: s + 1] - targets]
    )
    worst = float(np.max(np.abs(residuals)))
    if worst > tol:
        raise ConsistencyError(
            f"constructed pair misses its moment conditions by {worst:.3e} (tol {tol:.0e})"
        )
    return KernelPair(k0, ks, s, base, (mp0, mps), residuals)


@dataclass(frozen=True, eq=False)
class BandwidthKernelFamily:
    """The map h ↦ k0 + h^a · ks on a shared base profile."""

    pair: KernelPair
    a_exponent: float
    h_cap: float = 1.0

    def at(self, h: float) -> Kernel:
        """Materialize the combined kernel at bandwidth h."""
        if not (np.isfinite(h) and 0.0 < h <= self.h_cap):
            raise InputError(f"h={h!r} outside (0, {self.h_cap}]")
        k0, ks = self.pair.k0, self.pair.ks
        weight = h**self.a_exponent
        n = max(len(k0.coeffs), len(ks.coeffs))
        c0 = np.zeros(n)
        c0[: len(k0.coeffs)] = k0.coeffs
        cs = np.zeros(n)
        cs[: len(ks.coeffs)] = ks.coeffs
        return Kernel(k0.profile, tuple(c0 + weight * cs), k0.support_radius)


def family(pair: KernelPair, a_exponent: float, h_cap: float = 1.0) -> BandwidthKernelFamily:
    """Validated constructor for the bandwidth-dependent family."""
    if not (0.0 < a_exponent <= 1.0):
        raise InputError("a_exponent must lie in (0, 1]")
    if not h_cap > 0:
        raise InputError("h_cap must be positive")
    if pair.k0.profile is not pair.ks.profile or pair.k0.support_radius != pair.ks.support_radius:
        raise InputError("pair kernels must share the base profile")
    return BandwidthKernelFamily(pair, float(a_exponent), float(h_cap))


def variation_norm(k: Kernel, tol: float = 1e-10) -> float:
    """``∫|K|``; the β_0 factor in the variation bound."""
    return abs_moment(k, 0.0, tol)


# --- JSON round-tripping -------------------------------------------------


def _profile_to_dict(k: Kernel) -> dict:
    if k.profile.name in ("gaussian", "epanechnikov", "uniform"):
        return {"name": k.profile.name}
    raise InputError("only registered profiles are serializable")


def pair_to_dict(pair: KernelPair) -> dict:
    return {
        "profile": _profile_to_dict(pair.k0),
        "s": pair.s,
        "base_coeffs": list(pair.base.coeffs),
        "k0_coeffs": list(pair.k0.coeffs),
        "ks_coeffs": list(pair.ks.coeffs),
        "residuals": [float(r) for r in pair.residuals],
        "max_residual": pair.max_residual,
    }


def pair_from_dict(doc: dict) -> KernelPair:
    from .kernels import PROFILES

    try:
        profile = PROFILES[doc["profile"]["name"]]
        s = int(doc["s"])
        base = Kernel(profile, tuple(doc["base_coeffs"]))
    except KeyError as exc:
        raise InputError(f"malformed kernel-pair document: missing {exc}") from None
    pair = construct_pair(base, s)
    # The document is a record of a construction, not an alternative source
    # of truth: rebuild and confirm it matches.
    if not np.allclose(pair.k0.coeffs, doc["k0_coeffs"], atol=1e-10) or not np.allclose(
        pair.ks.coeffs, doc["ks_coeffs"], atol=1e-10
    ):
        raise ConsistencyError("stored pair coefficients disagree with reconstruction")
    return pair


def family_to_dict(fam: BandwidthKernelFamily) -> dict:
    doc = pair_to_dict(fam.pair)
    doc["a_exponent"] = fam.a_exponent
    doc["h_cap"] = fam.h_cap
    return doc


def family_from_dict(doc: dict) -> BandwidthKernelFamily:
    pair = pair_from_dict(doc)
    try:
        return family(pair, float(doc["a_exponent"]), float(doc.get("h_cap", 1.0)))
    except KeyError as exc:
        raise InputError(f"malformed family document: missing {exc}") from None
