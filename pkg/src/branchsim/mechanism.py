"""Branching and competition mechanisms and the analytic quantities they induce.

A branching mechanism is the Laplace exponent of a spectrally positive Levy
process in compensated form,

    psi(lam) = alpha*lam + 0.5*sigma^2*lam^2 + sum_i w_i*(exp(-lam*r_i) - 1 + lam*r_i),

restricted here to finite atomic jump measures (atoms of size r_i at rate w_i),
which keeps every compensator integral a finite sum and makes the extinction
criterion equivalent to sigma > 0.  alpha >= 0 means (sub)critical: the mean of
the associated branching process started from x is x*exp(-alpha*t).

A competition mechanism is a nondecreasing, nonnegative, piecewise-linear rate
g with primitive G(z) = int_0^z g(u) du.  G(Z) is the aggregate downward drift
a population of size Z experiences; piecewise-linear g gives a closed-form
piecewise-quadratic G and exact per-interval Lipschitz constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

__all__ = [
    "BranchingMechanism",
    "CompetitionMechanism",
    "psi_eval",
    "psi_theta",
    "grey_holds",
    "grey_integral",
    "solve_u",
    "csbp_mean",
    "g_eval",
    "G_eval",
    "constant_competition",
    "linear_competition",
]


@dataclass(frozen=True)
class BranchingMechanism:
    """Immutable triple (alpha, sigma, jump atoms) defining psi."""

    alpha: float
    sigma: float
    jump_atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not (self.alpha >= 0.0) or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (self.sigma >= 0.0) or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        atoms = tuple((float(r), float(w)) for r, w in self.jump_atoms)
        for r, w in atoms:
            if not (r > 0.0 and w > 0.0):
                raise ValueError(f"jump atoms need size > 0 and rate > 0, got ({r}, {w})")
        object.__setattr__(self, "jump_atoms", atoms)

    @property
    def jump_rate_mass(self) -> float:
        """sum_i w_i * r_i, the compensator coefficient per unit population."""
        return sum(w * r for r, w in self.jump_atoms)

    def psi(self, lam: float) -> float:
        return psi_eval(self, lam)

    def shifted(self, theta: float) -> "BranchingMechanism":
        return psi_theta(self, theta)

    def mean(self, x: float, t: float) -> float:
        return csbp_mean(self, x, t)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "sigma": self.sigma,
            "jumps": [[r, w] for r, w in self.jump_atoms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BranchingMechanism":
        return cls(
            alpha=float(d["alpha"]),
            sigma=float(d["sigma"]),
            jump_atoms=tuple((float(r), float(w)) for r, w in d.get("jumps", [])),
        )


def psi_eval(mech: BranchingMechanism, lam) -> float:
    """Evaluate psi(lam).  lam may be a scalar or an array; lam >= 0 required."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0.0):
        raise ValueError("psi is defined for lam >= 0 only")
    out = mech.alpha * lam_arr + 0.5 * mech.sigma**2 * lam_arr**2
    for r, w in mech.jump_atoms:
        out = out + w * (np.exp(-lam_arr * r) - 1.0 + lam_arr * r)
    return float(out) if np.isscalar(lam) or lam_arr.ndim == 0 else out


def psi_theta(mech: BranchingMechanism, theta: float) -> BranchingMechanism:
    """Mechanism with an extra linear term theta*lam, i.e. alpha -> alpha + theta."""
    if theta < 0.0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if theta == 0.0:
        return mech
    return replace(mech, alpha=mech.alpha + theta)


def grey_holds(mech: BranchingMechanism) -> bool:
    """Whether int_1^inf dlam/psi(lam) converges.

    With a finite atomic jump measure, psi(lam) ~ 0.5*sigma^2*lam^2 as
    lam -> inf (the jump sum grows linearly), so the integral converges
    exactly when sigma > 0.  ``grey_integral`` exposes the quadrature
    cross-check of the partial integral.
    """
    return mech.sigma > 0.0


def grey_integral(mech: BranchingMechanism, upper: float = 1e6) -> float:
    """Numerical int_1^upper dlam/psi(lam), a divergence diagnostic.

    Grows without bound in ``upper`` when ``grey_holds`` is false, and
    saturates when it is true.
    """
    if upper <= 1.0:
        raise ValueError("upper must exceed 1")
    if mech.psi(1.0) <= 0.0:
        return math.inf
    val, _ = quad(lambda l: 1.0 / psi_eval(mech, l), 1.0, upper, limit=200)
    return val


def solve_u(mech: BranchingMechanism, theta: float, t: float, dt: float | None = None) -> float:
    """Integrate du/ds = -psi(u), u(0) = theta, up to s = t with classical RK4.

    Default step is 1e-4 * t.  psi >= 0 keeps u nonincreasing, so the result
    lies in (0, theta].
    """
    if theta <= 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return theta
    if dt is None:
        dt = 1e-4 * t
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = max(1, int(math.ceil(t / dt - 1e-12)))
    h = t / n
    u = theta
    for k in range(n):
        k1 = -psi_eval(mech, u)
        k2 = -psi_eval(mech, max(u + 0.5 * h * k1, 0.0))
        k3 = -psi_eval(mech, max(u + 0.5 * h * k2, 0.0))
        k4 = -psi_eval(mech, max(u + h * k3, 0.0))
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(u):
            from .errors import NumericalError

            raise NumericalError("non-finite value in the Laplace-exponent flow", step=k)
        u = max(u, 0.0)
    return u


def csbp_mean(mech: BranchingMechanism, x: float, t: float) -> float:
    """First moment x*exp(-alpha*t); psi'(0+) = alpha in the compensated form."""
    if x < 0.0 or t < 0.0:
        raise ValueError("x and t must be >= 0")
    return x * math.exp(-mech.alpha * t)


@dataclass(frozen=True)
class CompetitionMechanism:
    """Nondecreasing piecewise-linear rate g given by knots (x_k, g(x_k)).

    The first knot must sit at x = 0; beyond the last knot g continues with the
    final segment's slope (a single knot means a constant rate).
    """

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(x), float(y)) for x, y in self.knots)
        if len(knots) == 0:
            raise ValueError("at least one knot is required")
        xs = [x for x, _ in knots]
        ys = [y for _, y in knots]
        if xs[0] != 0.0:
            raise ValueError("the first knot must be at x = 0")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knot positions must be strictly increasing")
        if any(y < 0.0 for y in ys):
            raise ValueError("competition rates must be >= 0")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValueError("competition rate must be nondecreasing")
        object.__setattr__(self, "knots", knots)
        xs_a = np.array(xs)
        ys_a = np.array(ys)
        slopes = np.zeros(len(knots))
        if len(knots) > 1:
            slopes[:-1] = np.diff(ys_a) / np.diff(xs_a)
            slopes[-1] = slopes[-2]
        # primitive values at the knots
        prim = np.zeros(len(knots))
        if len(knots) > 1:
            seg = ys_a[:-1] * np.diff(xs_a) + 0.5 * slopes[:-1] * np.diff(xs_a) ** 2
            prim[1:] = np.cumsum(seg)
        object.__setattr__(self, "_xs", xs_a)
        object.__setattr__(self, "_ys", ys_a)
        object.__setattr__(self, "_slopes", slopes)
        object.__setattr__(self, "_prim", prim)

    def _segment(self, x: float) -> int:
        """Index of the segment whose left knot is <= x."""
        return min(int(np.searchsorted(self._xs, x, side="right")) - 1, len(self.knots) - 1)

    def rate(self, x) -> float:
        return g_eval(self, x)

    def primitive(self, z) -> float:
        return G_eval(self, z)

    def mean_rate(self, lo: float, width: float) -> float:
        """Average of g over [lo, lo + width]; equals G-increment / width.

        For a width that stays inside one linear segment this is evaluated in
        closed form; a zero-slope segment returns the segment rate itself.
        """
        if width == 0.0:
            return g_eval(self, lo)
        j = self._segment(lo)
        hi = lo + width
        if j == len(self.knots) - 1 or hi <= self._xs[j + 1]:
            return self._ys[j] + self._slopes[j] * ((lo - self._xs[j]) + 0.5 * width)
        return (G_eval(self, hi) - G_eval(self, lo)) / width

    def lipschitz_bound(self, m: float) -> float:
        """Largest slope among segments meeting [0, m] (finite for every m)."""
        if m < 0.0:
            raise ValueError("m must be >= 0")
        j = self._segment(m)
        return float(np.max(self._slopes[: j + 1]))

    def activation_threshold(self, nu) -> np.ndarray:
        """Largest L with g(L) <= nu (or -1 / inf at the boundary cases).

        Used for mark activation: a mark of level nu is triggered once the
        pruned local time passes this threshold.  Returns -1.0 when g(0) > nu
        (always triggered) and inf when g never exceeds nu.
        """
        nu_arr = np.asarray(nu, dtype=float)
        out = np.full(nu_arr.shape, np.inf)
        xs, ys, slopes = self._xs, self._ys, self._slopes
        below0 = ys[0] > nu_arr
        out = np.where(below0, -1.0, out)
        # last knot index with g(knot) <= nu
        j = np.searchsorted(ys, nu_arr, side="right") - 1
        inside = (~below0) & (j < len(xs) - 1)
        if np.any(inside):
            ji = j[inside]
            rising = slopes[ji] > 0
            cross = np.where(
                rising,
                xs[ji] + (nu_arr[inside] - ys[ji]) / np.where(rising, slopes[ji], 1.0),
                xs[np.minimum(ji + 1, len(xs) - 1)],
            )
            out[inside] = cross
        at_end = (~below0) & (j == len(xs) - 1)
        if np.any(at_end):
            if slopes[-1] > 0:
                out[at_end] = xs[-1] + (nu_arr[at_end] - ys[-1]) / slopes[-1]
            # zero final slope: g(L) <= nu for all L, threshold stays inf
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"g_knots": [[x, y] for x, y in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "CompetitionMechanism":
        return cls(knots=tuple((float(x), float(y)) for x, y in d["g_knots"]))


def g_eval(comp: CompetitionMechanism, x) -> float:
    """Evaluate g with the final slope extended past the last knot."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0.0):
        raise ValueError("g is defined for x >= 0 only")
    j = np.minimum(np.searchsorted(comp._xs, x_arr, side="right") - 1, len(comp.knots) - 1)
    out = comp._ys[j] + comp._slopes[j] * (x_arr - comp._xs[j])
    return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out


def G_eval(comp: CompetitionMechanism, z) -> float:
    """Exact primitive G(z) = int_0^z g; convex, nondecreasing, G(0) = 0."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0.0):
        raise ValueError("G is defined for z >= 0 only")
    j = np.minimum(np.searchsorted(comp._xs, z_arr, side="right") - 1, len(comp.knots) - 1)
    d = z_arr - comp._xs[j]
    out = comp._prim[j] + comp._ys[j] * d + 0.5 * comp._slopes[j] * d * d
    return float(out) if np.isscalar(z) or z_arr.ndim == 0 else out


def constant_competition(theta: float) -> CompetitionMechanism:
    """g identically theta."""
    return CompetitionMechanism(knots=((0.0, float(theta)),))


def linear_competition(twice_c: float) -> CompetitionMechanism:
    """g(x) = twice_c * x, the logistic case (drift -0.5*twice_c*Z^2)."""
    return CompetitionMechanism(knots=((0.0, 0.0), (1.0, float(twice_c))))
