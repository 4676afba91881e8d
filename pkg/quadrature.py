import logging
import warnings
from typing import Callable, Optional, Sequence

from scipy import integrate

import settings
from errors import QuadratureError

logger = logging.getLogger(__name__)


def integrate_checked(
        f: Callable[[float], float],
        lo: float,
        hi: float,
        *,
        label: str,
        epsabs: Optional[float] = None,
        epsrel: float = 1e-12,
        points: Optional[Sequence[float]] = None,
        limit: int = 200,
) -> float:
    """
    Adaptive Gauss-Kronrod (QUADPACK) integral of f over [lo, hi].
    Raises QuadratureError when the reported error estimate misses the tolerance.
    """
    if hi == lo:
        return 0.0
    epsabs = settings.QUAD_EPSABS if epsabs is None else epsabs

    # quad only accepts break points strictly inside a finite interval
    inner = None
    if points is not None:
        inner = sorted(p for p in points if lo < p < hi)
        inner = inner or None

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(f, lo, hi, epsabs = epsabs, epsrel = epsrel, points = inner, limit = limit)

    allowed = 10.0 * max(epsabs, epsrel * abs(value))
    if not abserr <= allowed:
        raise QuadratureError(f"{label}: quadrature error {abserr:.3e} above tolerance {allowed:.3e} on [{lo}, {hi}]")
    logger.debug("%s: integral %.17g (err %.2e) on [%s, %s]", label, value, abserr, lo, hi)
    return value
