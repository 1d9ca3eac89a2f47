#include "hofar/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace hofar {

Coeffs coeffs(const Schedule& s, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::runtime_error("coeffs: t outside [0, 1]");
    Coeffs c;
    if (s.kind == ScheduleKind::linear) {
        c.alpha = t;
        c.beta = 1.0 - t;
        c.alpha_d = 1.0;
        c.beta_d = -1.0;
        c.alpha_dd = 0.0;
        c.beta_dd = 0.0;
        return c;
    }
    // alpha = exp(g), g = -a(1-t)^2/4 - b(1-t)/2, so g' = a(1-t)/2 + b/2 and
    // g'' = -a/2. beta = sqrt(1 - alpha^2) gives beta' = -alpha*alpha'/beta
    // and beta'' = -(alpha'^2 + alpha*alpha'')/beta - (alpha*alpha')^2/beta^3.
    const double u = 1.0 - t;
    const double g = -0.25 * s.a * u * u - 0.5 * s.b * u;
    const double gd = 0.5 * s.a * u + 0.5 * s.b;
    c.alpha = std::exp(g);
    c.alpha_d = c.alpha * gd;
    c.alpha_dd = c.alpha * (gd * gd - 0.5 * s.a);
    c.beta = std::sqrt(std::max(0.0, 1.0 - c.alpha * c.alpha));
    if (c.beta == 0.0) {
        // Singular endpoint: leave derivative slots at the documented limit
        // convention of 0.
        c.beta_d = 0.0;
        c.beta_dd = 0.0;
        return c;
    }
    const double aad = c.alpha * c.alpha_d;
    c.beta_d = -aad / c.beta;
    c.beta_dd = -(c.alpha_d * c.alpha_d + c.alpha * c.alpha_dd) / c.beta -
                aad * aad / (c.beta * c.beta * c.beta);
    return c;
}

namespace {

Tensor combine(const Tensor& x, const Tensor& n, double cx, double cn) {
    Tensor out = Tensor::zeros(x.h, x.w, x.c);
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*out.data)[i] = cx * (*x.data)[i] + cn * (*n.data)[i];
    }
    return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.h != b.h || a.w != b.w || a.c != b.c) {
        throw std::runtime_error(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

TrajectoryPoint make_point(const Schedule& s, const Tensor& x_img, const Tensor& noise,
                           double t) {
    check_same_shape(x_img, noise, "make_point");
    const Coeffs c = coeffs(s, t);
    TrajectoryPoint p;
    p.noisy = combine(x_img, noise, c.alpha, c.beta);
    p.first = combine(x_img, noise, c.alpha_d, c.beta_d);
    p.second = combine(x_img, noise, c.alpha_dd, c.beta_dd);
    return p;
}

Tensor velocity_linear(const Tensor& target, const Tensor& noise) {
    check_same_shape(target, noise, "velocity_linear");
    return combine(target, noise, 1.0, -1.0);
}

}  // namespace hofar
