#pragma once

#include "hofar/tensor.hpp"

// Trajectory coefficient functions alpha(t), beta(t) and their first and
// second time derivatives. They define the interpolation between data
// (coefficient alpha, reached at t=1) and noise (coefficient beta), plus the
// velocity and acceleration ground truths for head supervision.

namespace hofar {

enum class ScheduleKind { linear, vp };

struct Schedule {
    ScheduleKind kind = ScheduleKind::linear;
    // Variance-preserving parameters: alpha = exp(-a(1-t)^2/4 - b(1-t)/2).
    double a = 19.9;
    double b = 0.1;

    static Schedule linear() { return {ScheduleKind::linear, 0.0, 0.0}; }
    static Schedule vp(double a = 19.9, double b = 0.1) { return {ScheduleKind::vp, a, b}; }
};

struct Coeffs {
    double alpha = 0.0, beta = 0.0;
    double alpha_d = 0.0, beta_d = 0.0;
    double alpha_dd = 0.0, beta_dd = 0.0;
};

struct TrajectoryPoint {
    Tensor noisy;   // alpha*x + beta*noise
    Tensor first;   // alpha'*x + beta'*noise
    Tensor second;  // alpha''*x + beta''*noise
};

// Closed-form coefficients at time t in [0, 1] (throws outside). For the VP
// kind, beta' and beta'' are singular where beta = 0 (t = 1); there this
// returns 0 for both by convention — callers that need derivatives stay away
// from the endpoint (training clamps t <= 1 - 1e-4).
Coeffs coeffs(const Schedule& s, double t);

// Interpolation point and both supervision targets. Shapes must match.
TrajectoryPoint make_point(const Schedule& s, const Tensor& x_img, const Tensor& noise,
                           double t);

// d/dt of the linear interpolation: target - noise, independent of t.
Tensor velocity_linear(const Tensor& target, const Tensor& noise);

}  // namespace hofar
