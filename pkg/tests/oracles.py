"""Independent numeric oracles shared by the test modules.

Everything here is deliberately implemented from first principles (high
precision arithmetic, quadrature, generic optimizers) so it never shares a
code path with the package routines it checks.
"""

import math

import mpmath as mp
import numpy as np
from scipy.optimize import minimize


def frank_cdf_mp(theta, u):
    """Standard n-dimensional Frank copula in 60-digit arithmetic."""
    theta = mp.mpf(theta)
    em = mp.e ** (-theta) - 1
    prod = mp.mpf(1)
    for x in u:
        prod *= mp.e ** (-theta * x) - 1
    return -mp.log(1 + prod / em ** (len(u) - 1)) / theta


def frank_mixed_partial_fd(theta, u, h="1e-3"):
    """d-th mixed partial of the Frank cdf by nested central differences.

    High-precision evaluation keeps the 2^d-term alternating sum exact far
    beyond the h^2 truncation error of the stencil.
    """
    with mp.workdps(60):
        h = mp.mpf(h)
        d = len(u)
        total = mp.mpf(0)
        for mask in range(2**d):
            signs = [1 if (mask >> k) & 1 else -1 for k in range(d)]
            shifted = [mp.mpf(u[k]) + h * signs[k] for k in range(d)]
            parity = 1
            for s in signs:
                parity *= s
            total += parity * frank_cdf_mp(theta, shifted)
        return float(total / (2 * h) ** d)


def frank_bivariate_density_direct(theta, u, v):
    """Textbook closed form of the bivariate Frank density."""
    et = math.exp(-theta)
    eu = math.exp(-theta * u)
    ev = math.exp(-theta * v)
    num = theta * (1.0 - et) * eu * ev
    den = ((1.0 - et) - (1.0 - eu) * (1.0 - ev)) ** 2
    return num / den


def frank_sample_conditional_inversion(theta, n, rng):
    """Bivariate Frank sample via the conditional-quantile transform."""
    u = rng.uniform(size=n)
    w = rng.uniform(size=n)
    a = w * np.expm1(-theta) / (np.exp(-theta * u) - w * np.expm1(-theta * u))
    v = -np.log1p(a) / theta
    return np.column_stack([u, v])


def bayes_schur_route(x0, data, spec, mu, phi, covariance_eval):
    """Reference constant-trend Bayes kriging: augmented covariance with the
    prior variance added to every entry; sd from the inverse's leading
    entry, prediction from the first row."""
    from scipy.spatial.distance import cdist

    pts = np.vstack([np.atleast_2d(x0), data.locations])
    M = covariance_eval(spec, cdist(pts, pts)) + phi
    Minv = np.linalg.inv(M)
    sd = math.sqrt(1.0 / Minv[0, 0])
    pred = mu + M[0, 1:] @ np.linalg.solve(M[1:, 1:], data.values - mu)
    return pred, sd


def penalty_ordinary_weights(K, c0, n_stage1=1e7, n_stage2=1e9):
    """Sum-to-one kriging weights by penalized unconstrained minimization."""
    n = K.shape[0]

    def obj(w, P):
        return float(w @ K @ w - 2.0 * c0 @ w + P * (w.sum() - 1.0) ** 2)

    first = minimize(lambda w: obj(w, n_stage1), np.full(n, 1.0 / n), method="BFGS",
                     options={"gtol": 1e-14, "maxiter": 5000})
    second = minimize(lambda w: obj(w, n_stage2), first.x, method="BFGS",
                      options={"gtol": 1e-14, "maxiter": 5000})
    return second.x
