#pragma once

namespace nsde {

/// Standard normal density. Absolute error below 1e-14 on finite input.
double std_normal_pdf(double x);

/// Standard normal CDF via erfc; absolute error below 1e-12, monotone.
double std_normal_cdf(double x);

/// SR(eps) = phi(eps) + eps * Phi(eps): mean of relu applied to N(eps, 1).
/// Nonnegative; SR(eps) -> eps as eps -> +inf, -> 0 as eps -> -inf.
double sr(double eps);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Chi-squared CDF with dof degrees of freedom.
double chi2_cdf(double x, int dof);

/// Inverse chi-squared CDF by bisection on gamma_p, |P(r) - p| <= 1e-10.
/// Throws std::domain_error for p outside (0,1) or dof < 1.
double chi2_inverse_cdf(double p, int dof);

}  // namespace nsde
