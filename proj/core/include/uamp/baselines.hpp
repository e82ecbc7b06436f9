#pragma once

#include <vector>

#include "uamp/amp.hpp"

namespace uamp {

/// Proximal gradient descent for the lasso: x+ = soft(x + step A^T (y - A x);
/// lambda_s * step). step <= 0 selects the safe 1/rho with rho the largest
/// squared singular value of A; step = 1 is the classical iteration that
/// assumes row-normalized A (the form unrolling baselines use), which
/// diverges when |A|^2 > 2. The trace latches a diverged flag on blowup.
std::vector<TraceRow> ista(const CsProblem& p, double lambda_s, int steps,
                           const Vector& x_true, double step = 0.0);

/// Picks lambda_s from a 10-point logarithmic grid by final NMSE on one
/// validation instance.
double ista_select_lambda(const CsProblem& p, const Vector& x_true, int steps);

/// AMP with the soft-threshold denoiser f(r) = sign(r) max(|r| - lambda tau, 0);
/// the Onsager average is the fraction of surviving coordinates.
std::vector<TraceRow> soft_threshold_amp(const CsProblem& p, double lambda,
                                         int steps, const Vector& x_true);

double soft_threshold_select_lambda(const CsProblem& p, const Vector& x_true,
                                    int steps);

}  // namespace uamp
