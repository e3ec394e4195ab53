"""Log-log exponent fits for asymptotic scaling ladders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveValue, ValidationError

VALUE_FLOOR = 1e-9  # machine-precision plateau guard for exponent fits


@dataclass(frozen=True)
class ScalingReport:
    """Fitted power law ``value ~ C * eps**exponent`` over a ladder."""

    ladder: tuple  # ((eps, value), ...) strictly decreasing in eps
    exponent: float
    intercept: float
    r_squared: float
    excluded: tuple = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "ladder": [[float(e), float(v)] for e, v in self.ladder],
            "exponent": float(self.exponent),
            "intercept": float(self.intercept),
            "r_squared": float(self.r_squared),
            "excluded": [[float(e), float(v)] for e, v in self.excluded],
            "note": self.note,
        }


def fit_scaling(points) -> ScalingReport:
    """Least-squares fit of log(value) against log(eps).

    Requires at least three points with strictly positive values; raises
    :class:`NonPositiveValue` otherwise.  Points are sorted into a strictly
    decreasing eps ladder.
    """
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValidationError(f"need >= 3 ladder points for a fit, got {len(pts)}")
    for e, v in pts:
        if not v > 0:
            raise NonPositiveValue(f"value {v} at eps={e} is not positive")
        if not e > 0:
            raise NonPositiveValue(f"eps {e} is not positive")
    pts.sort(key=lambda p: -p[0])
    eps_values = [p[0] for p in pts]
    if len(set(eps_values)) != len(eps_values):
        raise ValidationError("ladder contains repeated eps values")

    log_e = np.log([p[0] for p in pts])
    log_v = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(log_e, log_v, 1)
    fitted = slope * log_e + intercept
    ss_res = float(np.sum((log_v - fitted) ** 2))
    ss_tot = float(np.sum((log_v - log_v.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return ScalingReport(
        ladder=tuple(pts), exponent=float(slope), intercept=float(intercept), r_squared=r2
    )


def fit_scaling_floored(points, floor: float = VALUE_FLOOR):
    """Floor-aware fit: drops values below ``floor`` and flags the result.

    Returns a :class:`ScalingReport`; when fewer than three points survive the
    floor, the report carries exponent NaN and a 'degenerate' note instead of
    raising, so that scans over trivially-zero models stay well-defined.
    """
    kept = [(e, v) for e, v in points if v >= floor]
    dropped = tuple((float(e), float(v)) for e, v in points if v < floor)
    if len(kept) < 3:
        ladder = tuple(sorted(((float(e), float(v)) for e, v in points), key=lambda p: -p[0]))
        return ScalingReport(
            ladder=ladder,
            exponent=float("nan"),
            intercept=float("nan"),
            r_squared=0.0,
            excluded=dropped,
            note=f"degenerate (values below floor {floor:g})",
        )
    report = fit_scaling(kept)
    note = report.note
    if dropped:
        note = f"{len(dropped)} value(s) below floor {floor:g} excluded"
    return ScalingReport(
        ladder=report.ladder,
        exponent=report.exponent,
        intercept=report.intercept,
        r_squared=report.r_squared,
        excluded=dropped,
        note=note,
    )
