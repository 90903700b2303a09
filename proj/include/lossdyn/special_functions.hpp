#pragma once

namespace lossdyn::special {

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Regularized upper incomplete gamma Q(a, x).
double incomplete_gamma_q(double a, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student-t with `df` degrees of freedom.
double student_t_two_sided(double t, double df);

/// Upper tail P(X >= x) for chi-square with `df` degrees of freedom.
double chi_square_upper(double x, double df);

/// Two-sided standard normal tail P(|Z| >= |z|).
double normal_two_sided(double z);

double normal_cdf(double z);

}  // namespace lossdyn::special
