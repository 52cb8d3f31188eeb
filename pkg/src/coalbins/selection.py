"""Construction of the intra-bin droplet-selection interval.

When a collision removes a droplet from a source bin, the drawn mass x
must leave the post-removal mean (L - x) / (N - 1) between the bin
boundaries.  The interval is built in three stages:

  1. d bounds: the widest interval symmetric about the mean that fits in
     the bin, with half-width min(x_hi - mean, mean - x_lo).
  2. e bounds: removing x <= e_hi keeps the new mean at or above x_lo and
     x >= e_lo keeps it at or below x_hi, where
         e_lo = L - x_hi * (N - 1),    e_hi = L - x_lo * (N - 1).
  3. The intersection of the two is re-centred on the mean (half-width
     w = min over both sides) so draws stay unbiased.

The resulting chain [s_lo, s_hi] within [r_lo, r_hi] within [d_lo, d_hi]
within the bin holds for every populated source bin with N > 1.  The
'legacy' construction stops after stage 1; it admits draws that push the
mean out of the bin whenever 1 < N < 2, which is exactly the failure the
refined interval removes.
"""

from typing import NamedTuple

__all__ = [
    "SelectionInterval",
    "base_interval",
    "constraint_bounds",
    "refined_interval",
    "legacy_interval",
    "draw_source_mass",
]

# Means within this relative distance outside a boundary are treated as
# sitting on it (round-off from an endpoint draw), anything further is a
# genuinely unphysical state and is rejected.
_MEAN_RTOL = 1e-12

# The post-removal mean (L - x)/(N - 1) amplifies round-off in x by
# 1/(N - 1), so the containment caps are pulled in by a few ulps of the
# bin mass before use; without this, an endpoint draw at N close to 1
# can land the mean outside the bin by more than the accepted slack.
_FLOAT_GUARD = 8.0 * 2.220446049250313e-16


class SelectionInterval(NamedTuple):
    """Nested selection bounds for one source bin.

    d: stage-1 symmetric bounds; e: mean-containment bounds; r: their
    intersection; s: the final re-symmetrized interval draws come from.
    half_width is the half-width of [s_lo, s_hi].
    """

    d_lo: float
    d_hi: float
    e_lo: float
    e_hi: float
    r_lo: float
    r_hi: float
    s_lo: float
    s_hi: float
    half_width: float

    @property
    def width(self) -> float:
        return self.s_hi - self.s_lo


def _checked_mean(mass: float, number: float, x_lo: float, x_hi: float) -> float:
    mean = mass / number
    if mean < x_lo:
        if mean < x_lo * (1.0 - _MEAN_RTOL):
            raise ValueError(
                f"mean mass {mean!r} g below bin boundary {x_lo!r} g; "
                "state is already unphysical")
        return x_lo
    if mean > x_hi:
        if mean > x_hi * (1.0 + _MEAN_RTOL):
            raise ValueError(
                f"mean mass {mean!r} g above bin boundary {x_hi!r} g; "
                "state is already unphysical")
        return x_hi
    return mean


def base_interval(x_lo: float, x_hi: float, mean: float):
    """Widest interval in [x_lo, x_hi] symmetric about the mean.

    Returns (mean - dm, mean + dm) with dm = min(x_hi - mean, mean - x_lo),
    clipped to the bin so round-off cannot push an endpoint outside.
    Degenerates to a point when the mean sits on a boundary.
    """
    if not x_lo <= mean <= x_hi:
        raise ValueError(
            f"mean {mean!r} outside bin [{x_lo!r}, {x_hi!r}]")
    dm = min(x_hi - mean, mean - x_lo)
    return max(mean - dm, x_lo), min(mean + dm, x_hi)


def constraint_bounds(mass: float, number: float, x_lo: float, x_hi: float):
    """Removal bounds that keep the post-removal mean inside the bin.

    e_lo = mass - x_hi * (number - 1): removing at least this much keeps
    the new mean at or below x_hi.  e_hi = mass - x_lo * (number - 1):
    removing at most this much keeps it at or above x_lo.  Only defined
    for more than one droplet; with exactly one the whole bin is removed
    instead.
    """
    if not number > 1.0:
        raise ValueError(
            f"constraint bounds need N > 1, got N={number!r}")
    rem = number - 1.0
    return mass - x_hi * rem, mass - x_lo * rem


def refined_interval(mass: float, number: float, x_lo: float,
                     x_hi: float) -> SelectionInterval:
    """Selection interval whose every draw leaves the bin physical.

    Intersects the symmetric base interval with the mean-containment
    bounds, then re-centres on the mean with half-width
    w = min(mean - r_lo, r_hi - mean), the containment side shrunk by a
    few ulps (see _FLOAT_GUARD).  w >= 0 always: both e bounds straddle
    the mean for N > 1, so the interval never vanishes below a point.
    For N >= 2 the containment bounds are provably slack (e_lo <= d_lo
    and e_hi >= d_hi) and the base interval is returned unchanged.
    """
    if not number > 1.0:
        raise ValueError(f"refined interval needs N > 1, got N={number!r}")
    mean = _checked_mean(mass, number, x_lo, x_hi)
    d_lo, d_hi = base_interval(x_lo, x_hi, mean)
    e_lo, e_hi = constraint_bounds(mass, number, x_lo, x_hi)

    if number >= 2.0:
        return SelectionInterval(d_lo, d_hi, e_lo, e_hi,
                                 d_lo, d_hi, d_lo, d_hi,
                                 half_width=d_hi - mean)

    r_lo = max(d_lo, e_lo)
    r_hi = min(d_hi, e_hi)
    guard = _FLOAT_GUARD * mass
    w = max(min(mean - d_lo, d_hi - mean,
                (mean - e_lo) - guard, (e_hi - mean) - guard), 0.0)
    # Clip against r so 1-ulp round-off cannot break the nesting chain.
    s_lo = max(mean - w, r_lo)
    s_hi = min(mean + w, r_hi)
    if s_lo > s_hi:
        # Degenerate corner: the interval is a point at the mean.
        s_lo = s_hi = min(max(mean, r_lo), r_hi)
    return SelectionInterval(d_lo, d_hi, e_lo, e_hi, r_lo, r_hi, s_lo, s_hi,
                             half_width=w)


def legacy_interval(mass: float, number: float, x_lo: float,
                    x_hi: float) -> SelectionInterval:
    """Stage-1 interval only, kept for demonstrating its failure mode.

    The containment bounds are computed for diagnostics but not applied;
    draws come from the full base interval.  For sources with 1 < N < 2
    this admits removals that strand the remaining mean outside the bin
    (and can even exceed the mass present).
    """
    if not number > 1.0:
        raise ValueError(f"legacy interval needs N > 1, got N={number!r}")
    mean = _checked_mean(mass, number, x_lo, x_hi)
    d_lo, d_hi = base_interval(x_lo, x_hi, mean)
    e_lo, e_hi = constraint_bounds(mass, number, x_lo, x_hi)
    return SelectionInterval(d_lo, d_hi, e_lo, e_hi,
                             d_lo, d_hi, d_lo, d_hi,
                             half_width=d_hi - mean)


def draw_source_mass(interval: SelectionInterval, u: float) -> float:
    """Map a uniform variate u in [0, 1) onto the selection interval."""
    return interval.s_lo + u * (interval.s_hi - interval.s_lo)
