"""
Numerical Bromwich inversion of Laplace transforms.

Euler summation (Abate and Whitt's unified framework) is the workhorse; Gaver-Stehfest
from mpmath is only used as an independent cross-check. Both run in a private mpmath
context so the working precision never leaks into, or depends on, the global one.
"""
import logging
from typing import Any, Callable, Optional

import mpmath

import settings

logger = logging.getLogger(__name__)

Transform = Callable[[Any], Any]


class EulerInverter:
    """
    f(t) ~ 10^(M/3)/t * sum_{k=0}^{2M} eta_k Re F(beta_k/t),  beta_k = M ln(10)/3 + i pi k.
    Needs about M significant digits of working precision and returns about 0.6 M.
    """

    def __init__(self, terms: Optional[int] = None, dps: Optional[int] = None):
        self.terms = settings.EULER_TERMS if terms is None else int(terms)
        self.ctx = mpmath.MPContext()
        self.ctx.dps = max(settings.INVERSION_DPS if dps is None else int(dps), self.terms + 10)

        ctx, m = self.ctx, self.terms
        shift = ctx.mpf(m) * ctx.ln(10) / 3

        # binomial tail weights of the Euler sum
        xi = [ctx.mpf(1) / 2] + [ctx.mpf(1)] * m + [ctx.mpf(0)] * m
        xi[2 * m] = ctx.mpf(2) ** (-m)
        for j in range(1, m):
            xi[2 * m - j] = xi[2 * m - j + 1] + ctx.mpf(2) ** (-m) * ctx.binomial(m, j)

        self._nodes = [ctx.mpc(shift, ctx.pi * k) for k in range(2 * m + 1)]
        self._weights = [(-1) ** k * xi[k] for k in range(2 * m + 1)]
        self._scale = ctx.power(10, ctx.mpf(m) / 3)

    def __call__(self, transform: Transform, t: float) -> float:
        ctx = self.ctx
        t = ctx.mpf(t)
        total = ctx.fsum(w * ctx.re(transform(node / t)) for node, w in zip(self._nodes, self._weights))
        return float(self._scale / t * total)


def gaver_stehfest(transform: Transform, t: float, ctx: mpmath.MPContext) -> float:
    return float(ctx.invertlaplace(transform, ctx.mpf(t), method = "stehfest"))
