"""Asymptotic lower bounds on the end-to-end distortion.

With total rate R, sparsity K and a = R - log2 C(N, K), the quantization
floor is

    sqrt( (1 - r^2) 2^(-2a/K) + r^2 2^(-4a/K) ),   r^2 = rho^2 / (1+rho)^2,

strictly decreasing in both rho and R.  The end-to-end bound is the max of
this and the CS reconstruction distortion.  Both are total functions; the
bound is only asymptotically (in R) valid, and a < 0 rows are flagged by the
experiment runner since the value then exceeds the zero-rate distortion.
"""

import math


def rate_offset(r_total, n, k):
    """a = R - log2 C(N, K) (negative means the bound is pre-asymptotic)."""
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return r_total - math.log2(math.comb(n, k))


def dq_lower_bound(r_total, n, k, rho):
    """Quantization-distortion lower bound; rho may be 0 or +inf (limits)."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    a = rate_offset(r_total, n, k)
    t = 2.0 ** (-2.0 * a / k)
    if math.isinf(rho):
        r_sq, one_minus = 1.0, 0.0
    else:
        r_sq = (rho / (1.0 + rho)) ** 2
        # exact complement, stable for rho anywhere in (0, inf)
        one_minus = (1.0 + 2.0 * rho) / (1.0 + rho) ** 2
    return math.sqrt(one_minus * t + r_sq * t * t)


def end_to_end_lower_bound(dq_lb, dcs):
    """D >= max(D_q lower bound, D_cs)."""
    if dq_lb < 0 or dcs < 0:
        raise ValueError("bound inputs must be non-negative")
    return max(dq_lb, dcs)
