"""Adaptive Simpson quadrature over a finite window.

The integrand is called with a 1-D array of nodes and must return an array
whose first axis matches the nodes. Extra trailing axes are integrated
component-wise, and an interval is accepted only when every component meets
its share of the tolerance. This lets one refinement pass serve a whole batch
of related integrands (e.g. bootstrap replicates).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

MAX_ACTIVE_VALUES = 1 << 23


@dataclass(frozen=True)
class QuadratureSpec:
    lower: float = 0.0
    upper: float = 600.0
    rule: str = "adaptive_simpson"
    abs_tol: float = 1e-10
    max_depth: int = 40
    initial_panels: int = 64

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise DomainError("quadrature bounds must be finite")
        if not self.lower < self.upper:
            raise DomainError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")
        if self.max_depth < 1 or self.initial_panels < 1:
            raise DomainError("max_depth and initial_panels must be positive")
        if self.rule != "adaptive_simpson":
            raise DomainError(f"unknown quadrature rule {self.rule!r}")

    def with_window(self, lower, upper):
        return QuadratureSpec(lower, upper, self.rule, self.abs_tol,
                              self.max_depth, self.initial_panels)


def _initial_panels(spec, segments):
    a, b = float(spec.lower), float(spec.upper)
    edges = np.linspace(a, b, spec.initial_panels + 1)
    if segments is None:
        return edges[:-1], edges[1:]
    seg = np.asarray(segments, dtype=float).reshape(-1, 2)
    seg = np.clip(seg, a, b)
    seg = seg[seg[:, 1] > seg[:, 0]]
    edges = np.unique(np.concatenate([edges, seg.ravel()]))
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    inside = np.zeros(mid.size, dtype=bool)
    for s0, s1 in seg:
        inside |= (mid > s0) & (mid < s1)
    return lo[inside], hi[inside]


def adaptive_simpson(func, spec, segments=None):
    """Integrate ``func`` over ``[spec.lower, spec.upper]``.

    ``segments``, if given, is a sequence of ``(start, end)`` pairs and
    restricts integration to their union (clipped to the window). Placing
    segment ends at discontinuities of the integrand keeps every panel
    smooth, which the error test needs in order to terminate.

    Returns a float for scalar-valued integrands, otherwise an array with the
    trailing shape of ``func``'s output.

    Raises
    ------
    ConvergenceError
        If intervals still failing the error test at ``spec.max_depth``
        bisections hold more than ``abs_tol`` between them. The exception's
        ``partial`` attribute carries the estimate assembled from accepted
        intervals plus the unconverged remainder.
    """
    lo, hi = _initial_panels(spec, segments)
    span = float(spec.upper) - float(spec.lower)
    p = lo.size
    if p == 0:
        # empty domain: probe once for the output shape
        probe = np.zeros_like(np.asarray(func(np.array([float(spec.lower)])), dtype=float)[0])
        return float(probe) if probe.ndim == 0 else probe
    mid = 0.5 * (lo + hi)
    fx = np.asarray(func(np.concatenate([lo, mid, hi])), dtype=float)
    scalar = fx.ndim == 1
    trailing = fx.shape[1:]
    fx = fx.reshape(fx.shape[0], -1)

    flo, fmid, fhi = fx[:p], fx[p:2 * p], fx[2 * p:]
    width = hi - lo
    whole = (width / 6.0)[:, None] * (flo + 4.0 * fmid + fhi)
    tol = spec.abs_tol * width / span
    total = np.zeros(fx.shape[1:])

    depth = 0
    while lo.size:
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        fnew = np.asarray(func(np.concatenate([lm, rm])), dtype=float)
        fnew = fnew.reshape(fnew.shape[0], -1)
        k = lo.size
        flm, frm = fnew[:k], fnew[k:]
        half = (0.5 * width / 6.0)[:, None]
        left = half * (flo + 4.0 * flm + fmid)
        right = half * (fmid + 4.0 * frm + fhi)
        delta = left + right - whole
        ok = np.max(np.abs(delta), axis=1) <= 15.0 * tol
        total = total + np.sum((left + right + delta / 15.0)[ok], axis=0)

        bad = ~ok
        depth += 1
        # breadth-first refinement doubles the unresolved set per level; an
        # integrand that cannot meet abs_tol in floating point would
        # otherwise exhaust memory long before max_depth
        overflow = 2 * np.count_nonzero(bad) * fx.shape[1] > MAX_ACTIVE_VALUES
        if overflow and depth < spec.max_depth:
            partial = total + np.sum((left + right)[bad], axis=0)
            err = ConvergenceError(
                f"adaptive Simpson gave up at depth {depth}: too many unresolved intervals",
                partial=float(partial[0]) if scalar else partial.reshape(trailing),
            )
            err.unresolved = np.column_stack([lo[bad], hi[bad]])
            raise err
        if np.any(bad) and depth >= spec.max_depth:
            rest = np.sum((left + right)[bad], axis=0)
            if np.max(np.abs(rest)) + np.max(np.abs(delta[bad]).sum(axis=0)) <= spec.abs_tol:
                # the unresolved slivers cannot move the result by more than
                # abs_tol: typically an isolated jump at a single node
                total = total + rest
                break
            partial = total + rest
            err = ConvergenceError(
                f"adaptive Simpson did not converge within depth {spec.max_depth}",
                partial=float(partial[0]) if scalar else partial.reshape(trailing),
            )
            err.unresolved = np.column_stack([lo[bad], hi[bad]])
            raise err
        lo = np.concatenate([lo[bad], mid[bad]])
        hi_new = np.concatenate([mid[bad], hi[bad]])
        mid = np.concatenate([lm[bad], rm[bad]])
        flo, fmid, fhi = (
            np.concatenate([flo[bad], fmid[bad]]),
            np.concatenate([flm[bad], frm[bad]]),
            np.concatenate([fmid[bad], fhi[bad]]),
        )
        whole = np.concatenate([left[bad], right[bad]])
        tol = np.concatenate([tol[bad], tol[bad]]) * 0.5
        hi = hi_new
        width = hi - lo

    return float(total[0]) if scalar else total.reshape(trailing)
