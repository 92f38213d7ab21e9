"""Reference computations that share no code with the package.

Each oracle uses a different route to the same quantity (direct
quadrature, dense linear algebra, brute-force search, scalar loops).
"""

import mpmath
import numpy as np


def bg_posterior_quadrature(q, tau, rate, mean=0.0, var=1.0):
    """Posterior mean/variance of x under rate*N(mean,var) + (1-rate)*delta,
    observed through q = x + N(0, tau), by adaptive quadrature of the slab."""
    mpmath.mp.dps = 40
    q, tau, rate, mean, var = (mpmath.mpf(v) for v in (q, tau, rate, mean, var))

    def lik(x):
        return mpmath.exp(-(q - x) ** 2 / (2 * tau)) / mpmath.sqrt(2 * mpmath.pi * tau)

    def slab(x):
        return mpmath.exp(-(x - mean) ** 2 / (2 * var)) / mpmath.sqrt(2 * mpmath.pi * var)

    z_slab = mpmath.quad(lambda x: slab(x) * lik(x), [-mpmath.inf, q, mpmath.inf])
    m1 = mpmath.quad(lambda x: x * slab(x) * lik(x), [-mpmath.inf, q, mpmath.inf])
    m2 = mpmath.quad(lambda x: x * x * slab(x) * lik(x), [-mpmath.inf, q, mpmath.inf])
    z = (1 - rate) * lik(0) + rate * z_slab
    post_mean = rate * m1 / z
    post_m2 = rate * m2 / z
    return float(post_mean), float(post_m2 - post_mean**2)


def bg_mse_quadrature(tau, rate):
    """E|E[x|q] - x|^2 for BG(rate, 0, 1) as a nested 2-D integral.

    The outer integral runs over q against its mixture density (QUADPACK),
    the inner one computes the posterior variance at q (mpmath quadrature
    over x).  The expected squared error of the posterior mean equals the
    expected posterior variance.
    """

    from scipy import integrate

    def post_var(q):
        mpmath.mp.dps = 30
        return bg_posterior_quadrature(q, tau, rate)[1]

    def dens(q):
        s0 = np.sqrt(tau)
        s1 = np.sqrt(1 + tau)
        return ((1 - rate) * np.exp(-q * q / (2 * tau)) / (np.sqrt(2 * np.pi) * s0)
                + rate * np.exp(-q * q / (2 * (1 + tau))) / (np.sqrt(2 * np.pi) * s1))

    val, _ = integrate.quad(lambda q: post_var(q) * dens(q), -15, 15, points=[0.0], limit=200,
                            epsabs=1e-12)
    return val


def linear_mmse(A, y, prior_var, noise_var):
    """x_hat = (A^T A + noise_var/prior_var I)^{-1} A^T y (dense solve)."""
    n = A.shape[1]
    return np.linalg.solve(A.T @ A + (noise_var / prior_var) * np.eye(n), A.T @ y)


def se_tau_loop(v_x, lam, beta_inv, N):
    total = 0.0
    for l in lam:
        total += l / (v_x * l + beta_inv)
    return N / total


def ambiguity_grid(est, truth, lo=-10.0, hi=10.0, step=1e-4):
    """Brute-force min over d on a grid, refined around the best point."""
    est = np.ravel(est)
    truth = np.ravel(truth)
    ee, et, tt = est @ est, est @ truth, truth @ truth
    d = np.arange(lo, hi + step / 2, step)
    vals = (tt - 2 * d * et + d * d * ee) / tt
    i = int(np.argmin(vals))
    # golden-section refinement inside the bracketing grid cell
    a, b = d[max(i - 1, 0)], d[min(i + 1, d.size - 1)]
    f = lambda x: (tt - 2 * x * et + x * x * ee) / tt  # noqa: E731
    g = (np.sqrt(5) - 1) / 2
    for _ in range(80):
        c1, c2 = b - g * (b - a), a + g * (b - a)
        if f(c1) < f(c2):
            b = c2
        else:
            a = c1
    x = 0.5 * (a + b)
    return f(x), x
