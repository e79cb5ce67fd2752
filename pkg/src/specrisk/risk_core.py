"""Exact spectral risk measure computations on finite discrete distributions.

Everything here is closed-form arithmetic on step functions: quantiles,
Expected Shortfall, spectral risk as a quantile integral, the Expected
Shortfall mixture representation and the two infimum representations
(Rockafellar-Uryasev for a single level, the convex-function form for a
general spectrum).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12
DROP_TOL = 1e-15
SLOPE_TOL = 1e-9


class DomainError(ValueError):
    """An argument lies outside its mathematical domain."""


def _as_float_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError("expected a one-dimensional sequence")
    return arr


@dataclass(frozen=True)
class DiscreteDistribution:
    """A finite distribution with sorted, strictly increasing atoms.

    Duplicate atoms are merged and probabilities below ``DROP_TOL`` are
    dropped at construction; probabilities are renormalized afterwards.
    """

    atoms: np.ndarray
    probs: np.ndarray

    def __init__(self, atoms, probs):
        atoms = _as_float_array(atoms)
        probs = _as_float_array(probs)
        if atoms.shape != probs.shape or atoms.size == 0:
            raise DomainError("atoms and probs must be non-empty and of equal length")
        if np.any(probs < -PROB_TOL):
            raise DomainError("probabilities must be non-negative")
        keep = probs > DROP_TOL
        if not np.any(keep):
            raise DomainError("all probabilities vanish")
        atoms, probs = atoms[keep], probs[keep]
        order = np.argsort(atoms, kind="stable")
        atoms, probs = atoms[order], probs[order]
        # merge atoms that coincide up to rounding noise
        merged_a, merged_p = [atoms[0]], [probs[0]]
        for a, p in zip(atoms[1:], probs[1:]):
            if a - merged_a[-1] <= 1e-12 * max(1.0, abs(a)):
                w = merged_p[-1] + p
                merged_a[-1] = (merged_a[-1] * merged_p[-1] + a * p) / w
                merged_p[-1] = w
            else:
                merged_a.append(a)
                merged_p.append(p)
        atoms = np.array(merged_a)
        probs = np.array(merged_p)
        total = probs.sum()
        if abs(total - 1.0) > 1e-6:
            raise DomainError(f"probabilities sum to {total}, not 1")
        probs = probs / total
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "DiscreteDistribution":
        atoms, probs = zip(*pairs)
        return cls(atoms, probs)

    @property
    def cum(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.probs))

    def shift(self, m: float) -> "DiscreteDistribution":
        return DiscreteDistribution(self.atoms + m, self.probs)

    def scale(self, lam: float) -> "DiscreteDistribution":
        if lam < 0:
            raise DomainError("scale factor must be non-negative")
        if lam == 0:
            return DiscreteDistribution([0.0], [1.0])
        return DiscreteDistribution(self.atoms * lam, self.probs)

    def convolve(self, other: "DiscreteDistribution") -> "DiscreteDistribution":
        """Distribution of the independent sum."""
        sums = np.add.outer(self.atoms, other.atoms).ravel()
        ps = np.multiply.outer(self.probs, other.probs).ravel()
        return DiscreteDistribution(sums, ps)

    def stop_loss(self, d: float) -> float:
        """E[(X - d)^+], the stop-loss transform at retention d."""
        return float(np.dot(np.maximum(self.atoms - d, 0.0), self.probs))


@dataclass(frozen=True)
class StepSpectrum:
    """Right-continuous step spectrum phi on [0, 1].

    ``values[j]`` is the weight on ``[breakpoints[j], breakpoints[j+1])``;
    phi(1) equals the last value.  Values must be increasing, non-negative
    and integrate to one.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __init__(self, breakpoints, values):
        bp = _as_float_array(breakpoints)
        vals = _as_float_array(values)
        if bp.size != vals.size + 1:
            raise DomainError("need one more breakpoint than values")
        if abs(bp[0]) > 0 or abs(bp[-1] - 1.0) > PROB_TOL:
            raise DomainError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(vals < -PROB_TOL):
            raise DomainError("spectrum values must be non-negative")
        if np.any(np.diff(vals) < -PROB_TOL):
            raise DomainError("spectrum values must be increasing")
        mass = float(np.dot(vals, np.diff(bp)))
        if abs(mass - 1.0) > 1e-9:
            raise DomainError(f"spectrum integrates to {mass}, not 1")
        bp = bp.copy()
        bp[-1] = 1.0
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", np.maximum(vals, 0.0))

    @property
    def phi_one(self) -> float:
        return float(self.values[-1])

    def at(self, u: float) -> float:
        """phi(u), right-continuous; phi(1) is the last step value."""
        if u < 0 or u > 1 + PROB_TOL:
            raise DomainError("u must lie in [0, 1]")
        if u >= 1.0:
            return self.phi_one
        j = int(np.searchsorted(self.breakpoints, u, side="right")) - 1
        return float(self.values[min(max(j, 0), self.values.size - 1)])

    @classmethod
    def expectation(cls) -> "StepSpectrum":
        return cls([0.0, 1.0], [1.0])

    @classmethod
    def expected_shortfall(cls, alpha: float) -> "StepSpectrum":
        if not 0 <= alpha < 1:
            raise DomainError("alpha must lie in [0, 1)")
        if alpha == 0:
            return cls.expectation()
        return cls([0.0, alpha, 1.0], [0.0, 1.0 / (1.0 - alpha)])

    @classmethod
    def es_mixture(cls, pairs: Sequence[tuple[float, float]]) -> "StepSpectrum":
        """Spectrum of sum_j w_j * ES_{alpha_j}; pairs are (alpha, weight)."""
        pairs = sorted(pairs)
        levels = [a for a, _ in pairs]
        weights = [w for _, w in pairs]
        if any(not 0 <= a < 1 for a in levels) or any(w <= 0 for w in weights):
            raise DomainError("levels must lie in [0,1) and weights be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise DomainError("mixture weights must sum to 1")
        bps = sorted(set([0.0, 1.0] + levels))
        vals = []
        for lo in bps[:-1]:
            vals.append(sum(w / (1 - a) for a, w in pairs if a <= lo))
        return cls(bps, vals)


@dataclass(frozen=True)
class MixtureMeasure:
    """Atomic mixing measure over Expected Shortfall levels."""

    levels: np.ndarray
    weights: np.ndarray

    def __init__(self, levels, weights):
        levels = _as_float_array(levels)
        weights = _as_float_array(weights)
        if levels.shape != weights.shape or levels.size == 0:
            raise DomainError("levels and weights must be non-empty and equal length")
        if np.any(weights <= 0):
            raise DomainError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise DomainError("mixture weights must sum to 1")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class GPoly:
    """Increasing convex piecewise-linear function on [0, cap].

    Constant at ``values[0]`` left of zero and continued linearly with slope
    ``max_slope`` beyond ``cap``.  With ``strict=True`` the knot values must
    satisfy the monotone-slope polytope constraints (slopes increasing within
    [0, max_slope], first value in [0, cap]); ``strict=False`` only requires
    sorted knots and is used for analytically constructed minimizers.
    """

    cap: float
    knots: np.ndarray
    values: np.ndarray
    max_slope: float
    strict: bool = True

    def __init__(self, cap, knots, values, max_slope, strict=True):
        knots = _as_float_array(knots)
        values = _as_float_array(values)
        if cap <= 0:
            raise DomainError("cap must be positive")
        if knots.size < 2 or knots.shape != values.shape:
            raise DomainError("need at least two knots with matching values")
        if abs(knots[0]) > 0 or abs(knots[-1] - cap) > 1e-9 * max(1.0, cap):
            raise DomainError("knots must span [0, cap]")
        if np.any(np.diff(knots) <= 0):
            raise DomainError("knots must be strictly increasing")
        slopes = np.diff(values) / np.diff(knots)
        if strict:
            tol = SLOPE_TOL * max(1.0, max_slope, cap)
            if not (-tol <= values[0] <= cap + tol):
                raise DomainError("first knot value must lie in [0, cap]")
            if np.any(slopes < -tol):
                raise DomainError("slopes must be non-negative")
            if np.any(np.diff(slopes) < -tol):
                raise DomainError("slopes must be increasing")
            if np.any(slopes > max_slope + tol):
                raise DomainError("slopes must not exceed max_slope")
        object.__setattr__(self, "cap", float(cap))
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "max_slope", float(max_slope))
        object.__setattr__(self, "strict", strict)

    @classmethod
    def from_gamma(cls, y, c_hat: float, phi1: float, strict: bool = True) -> "GPoly":
        """Build from a knot-value vector on the equidistant grid over [0, c_hat]."""
        y = _as_float_array(y)
        knots = np.linspace(0.0, c_hat, y.size)
        return cls(c_hat, knots, y, phi1, strict=strict)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = np.interp(s_arr, self.knots, self.values)
        over = s_arr > self.cap
        if np.any(over):
            ext = self.values[-1] + self.max_slope * (s_arr - self.cap)
            out = np.where(over, ext, out)
        if out.ndim == 0:
            return float(out)
        return out


def quantile(dist: DiscreteDistribution, u: float) -> float:
    """Lower quantile inf{x : F(x) >= u} for u in (0, 1]."""
    if not 0 < u <= 1 + PROB_TOL:
        raise DomainError("u must lie in (0, 1]")
    cum = dist.cum
    idx = int(np.searchsorted(cum, min(u, 1.0) - PROB_TOL, side="left"))
    return float(dist.atoms[min(idx, dist.atoms.size - 1)])


def expected_shortfall(dist: DiscreteDistribution, alpha: float) -> float:
    """ES_alpha(X) = (1-alpha)^{-1} int_alpha^1 F^{-1}(u) du, exact."""
    if not 0 <= alpha < 1:
        raise DomainError("alpha must lie in [0, 1)")
    cum = dist.cum
    total = 0.0
    prev = 0.0
    for atom, c in zip(dist.atoms, cum):
        lo = max(prev, alpha)
        hi = min(c, 1.0)
        if hi > lo:
            total += atom * (hi - lo)
        prev = c
    # the top plateau must reach u = 1 even if cum[-1] rounds just under it
    if 1.0 > prev and 1.0 > alpha:
        total += dist.atoms[-1] * (1.0 - max(prev, alpha))
    return total / (1.0 - alpha)


def spectral_risk(dist: DiscreteDistribution, spec: StepSpectrum) -> float:
    """int_0^1 F^{-1}(u) phi(u) du over the merged breakpoint partition."""
    edges = np.unique(np.concatenate([[0.0, 1.0], np.clip(dist.cum, 0.0, 1.0),
                                      spec.breakpoints]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0:
            continue
        total += quantile(dist, hi) * spec.at(lo) * (hi - lo)
    return total


def mixture_measure(spec: StepSpectrum) -> MixtureMeasure:
    """Jump decomposition of phi as a mixture over Expected Shortfall levels."""
    levels, weights = [], []
    prev = 0.0
    for j, u in enumerate(spec.breakpoints[:-1]):
        dphi = spec.values[j] - prev
        if dphi > PROB_TOL:
            levels.append(float(u))
            weights.append((1.0 - u) * dphi)
        prev = spec.values[j]
    return MixtureMeasure(levels, weights)


def spectral_risk_via_mixture(dist: DiscreteDistribution, spec: StepSpectrum) -> float:
    mix = mixture_measure(spec)
    return float(sum(w * expected_shortfall(dist, a)
                     for a, w in zip(mix.levels, mix.weights)))


def ru_objective(dist: DiscreteDistribution, alpha: float, q: float) -> float:
    """Rockafellar-Uryasev objective q + (1-alpha)^{-1} E[(X-q)^+]."""
    if not 0 <= alpha < 1:
        raise DomainError("alpha must lie in [0, 1)")
    return q + dist.stop_loss(q) / (1.0 - alpha)


def distortion(spec: StepSpectrum, u: float) -> float:
    """Convex distortion int_0^u phi(s) ds."""
    if not -PROB_TOL <= u <= 1 + PROB_TOL:
        raise DomainError("u must lie in [0, 1]")
    u = min(max(u, 0.0), 1.0)
    total = 0.0
    for lo, hi, v in zip(spec.breakpoints[:-1], spec.breakpoints[1:], spec.values):
        if u <= lo:
            break
        total += v * (min(u, hi) - lo)
    return total


def minimizer_g(spec: StepSpectrum, dist: DiscreteDistribution,
                grid_points: int = 17) -> GPoly:
    """Optimal convex function for a fixed distribution.

    Builds g(x) = sum_j w_j [q_j + (x - q_j)^+ / (1 - a_j)] with atoms
    (a_j, w_j) of the mixing measure and q_j the a_j-quantile (the smallest
    atom at level zero).  Returned on the union of an equidistant grid and
    the quantile kinks, so the piecewise-linear representation is exact.
    """
    if np.any(dist.atoms < 0):
        raise DomainError("distribution atoms must be non-negative")
    mix = mixture_measure(spec)
    qs = np.array([quantile(dist, a) if a > 0 else float(dist.atoms[0])
                   for a in mix.levels])
    cap = float(dist.atoms[-1])
    if cap <= 0:
        cap = 1.0
    knots = np.unique(np.concatenate([np.linspace(0.0, cap, grid_points),
                                      np.clip(qs, 0.0, cap)]))
    if knots[0] > 0:
        knots = np.concatenate([[0.0], knots])

    def g_exact(x):
        x = np.asarray(x, dtype=float)[..., None]
        terms = qs + np.maximum(x - qs, 0.0) / (1.0 - mix.levels)
        return terms @ mix.weights

    values = g_exact(knots)
    return GPoly(cap, knots, values, spec.phi_one, strict=False)
