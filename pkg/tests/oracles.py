"""Independent reference computations the tests check the package against.

Everything here is deliberately written from first principles (dense linear
algebra, adaptive quadrature, textbook formulas) and never calls back into
the code paths it is used to verify.
"""

import numpy as np


def dense_gaussian_kl(mean, cov, prior_cov):
    """KL(N(mean, cov) || N(0, prior_cov)) via the dense formula."""
    m = mean.size
    prior_inv = np.linalg.inv(prior_cov)
    return 0.5 * (
        np.trace(prior_inv @ cov)
        + mean @ prior_inv @ mean
        - m
        + np.linalg.slogdet(prior_cov)[1]
        - np.linalg.slogdet(cov)[1]
    )


def dense_log_marginal(y, gram, noise_variance):
    """log N(y; 0, gram + noise * I) by dense solve."""
    n = y.size
    sigma = gram + noise_variance * np.eye(n)
    alpha = np.linalg.solve(sigma, y)
    return -0.5 * (y @ alpha + np.linalg.slogdet(sigma)[1] + n * np.log(2.0 * np.pi))


def degenerate_feature_gram(features, lam):
    """Prior covariance of f at the feature rows: F diag(lam) F^T."""
    return (features * lam) @ features.T


def conjugate_posterior(features, lam, y, noise_variance):
    """Exact Gaussian posterior over feature weights for the degenerate GP."""
    prec = np.diag(1.0 / lam) + features.T @ features / noise_variance
    cov = np.linalg.inv(prec)
    mean = cov @ (features.T @ y) / noise_variance
    return mean, cov


def inducing_optimum(features, lam, y, noise_variance):
    """Optimal q(u) moments in the inducing parameterization (u = w / lam).

    These are the stationary points of the Gaussian-likelihood bound when the
    prior over u has the diagonal covariance diag(1/lam) and the predictive
    mean reads (lam * phi)^T m.
    """
    a = features * lam
    cov = np.linalg.inv(np.diag(lam) + a.T @ a / noise_variance)
    mean = cov @ (a.T @ y) / noise_variance
    return mean, cov


def gp_posterior_predictive(features_train, features_test, lam, y, noise_variance):
    """Exact predictive mean/variance of the degenerate GP at test rows."""
    mean_w, cov_w = conjugate_posterior(features_train, lam, y, noise_variance)
    mu = features_test @ mean_w
    var = np.einsum("ij,jk,ik->i", features_test, cov_w, features_test)
    return mu, var


def legendre_value(degree, t):
    """Legendre polynomials from an independent library implementation."""
    from scipy.special import eval_legendre

    return eval_legendre(degree, t)


def adaptive_shape_eigenvalue(shape, dim, ell, gegenbauer_fn, c_at_one, c_dim):
    """Kernel eigenvalue by scipy adaptive quadrature on the t-axis."""
    from scipy.integrate import quad

    def integrand(t):
        return (
            float(shape(np.array([t]))[0])
            * float(gegenbauer_fn(np.array([t]))[0])
            * (1.0 - t * t) ** ((dim - 3) / 2.0)
        )

    value, _ = quad(integrand, -1.0, 1.0, limit=200)
    return c_dim * value / c_at_one


def harmonic_count_by_homogeneous(ell, dim):
    """N(l, d) as a difference of homogeneous-polynomial dimensions."""
    from math import comb

    if ell == 0:
        return 1
    if ell == 1:
        return dim
    return comb(ell + dim - 1, ell) - comb(ell + dim - 3, ell - 2)
