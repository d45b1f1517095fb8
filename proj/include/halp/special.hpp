#pragma once

namespace halp {

double log_beta(double a, double b);

/// Beta(a, b) density at x in (0, 1). Returns 0 outside the open interval;
/// callers that may hit the endpoints are expected to clamp first.
double beta_pdf(double x, double a, double b);

/// Regularized incomplete beta function I_x(a, b), evaluated with the
/// continued-fraction expansion (modified Lentz). Absolute accuracy ~1e-13.
double reg_inc_beta(double x, double a, double b);

/// E[X^m] for X ~ Beta(a, b), integer m >= 0, via the log-gamma ratio
/// Gamma(a+b)Gamma(a+m) / (Gamma(a+b+m)Gamma(a)).
double beta_moment(double a, double b, int m);

/// P(lo <= X <= hi) for X ~ Beta(a, b).
double beta_segment_prob(double a, double b, double lo, double hi);

/// Restricted first moment: integral of x * pdf(x; a, b) over [lo, hi].
double beta_segment_mean(double a, double b, double lo, double hi);

/// weight * N(x | mean, var) with N the normal density.
double gauss_bump(double x, double weight, double mean, double var);

}  // namespace halp
