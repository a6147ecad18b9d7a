#pragma once

namespace dqa::stats {

// Regularized incomplete beta I_x(a, b), evaluated with the Lentz continued
// fraction on whichever of x, 1-x converges faster.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with `dof` degrees of freedom. Infinite t is allowed.
double student_t_cdf(double t, double dof);

}  // namespace dqa::stats
