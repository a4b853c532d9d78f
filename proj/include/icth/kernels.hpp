#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace icth::models {

enum class KernelKind { Exponential, PowerLaw };

// Decay function of the self-exciting process:
//   Exponential: phi(tau) = kappa * theta * exp(-theta * tau)
//   PowerLaw:    phi(tau) = kappa * (tau + c)^-(1 + theta)
struct Kernel {
    KernelKind kind = KernelKind::Exponential;
    double kappa = 0.0;
    double theta = 1.0;
    double c = 1.0;  // PowerLaw shift; ignored by Exponential

    void check() const {
        if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kernel: kappa must be >= 0");
        if (!(theta > 0.0) || !std::isfinite(theta)) throw std::invalid_argument("kernel: theta must be > 0");
        if (kind == KernelKind::PowerLaw && (!(c > 0.0) || !std::isfinite(c)))
            throw std::invalid_argument("kernel: power-law c must be > 0");
    }
};

inline double kernel_value(const Kernel& k, double tau) {
    if (tau < 0.0) throw std::invalid_argument("kernel_value: tau must be >= 0");
    if (k.kind == KernelKind::Exponential) return k.kappa * k.theta * std::exp(-k.theta * tau);
    return k.kappa * std::pow(tau + k.c, -(1.0 + k.theta));
}

// Closed-form integral of phi over [a, b]; b may be +infinity.
inline double kernel_mass(const Kernel& k, double a, double b) {
    if (!(a >= 0.0) || a > b) throw std::invalid_argument("kernel_mass: need 0 <= a <= b");
    if (k.kind == KernelKind::Exponential) {
        double eb = std::isinf(b) ? 0.0 : std::exp(-k.theta * b);
        return k.kappa * (std::exp(-k.theta * a) - eb);
    }
    double pb = std::isinf(b) ? 0.0 : std::pow(b + k.c, -k.theta);
    return (k.kappa / k.theta) * (std::pow(a + k.c, -k.theta) - pb);
}

// Expected direct offspring per event.
inline double branching_factor(const Kernel& k) {
    return kernel_mass(k, 0.0, std::numeric_limits<double>::infinity());
}

struct KernelGrad {
    double d_kappa = 0.0;
    double d_theta = 0.0;
    double d_c = 0.0;
};

inline KernelGrad kernel_value_grad(const Kernel& k, double tau) {
    KernelGrad g;
    if (k.kind == KernelKind::Exponential) {
        double e = std::exp(-k.theta * tau);
        g.d_kappa = k.theta * e;
        g.d_theta = k.kappa * e * (1.0 - k.theta * tau);
    } else {
        double base = tau + k.c;
        double p = std::pow(base, -(1.0 + k.theta));
        g.d_kappa = p;
        g.d_theta = -k.kappa * p * std::log(base);
        g.d_c = -k.kappa * (1.0 + k.theta) * std::pow(base, -(2.0 + k.theta));
    }
    return g;
}

inline KernelGrad kernel_mass_grad(const Kernel& k, double a, double b) {
    KernelGrad g;
    if (k.kind == KernelKind::Exponential) {
        double ea = std::exp(-k.theta * a);
        double eb = std::isinf(b) ? 0.0 : std::exp(-k.theta * b);
        g.d_kappa = ea - eb;
        double ta = a * ea;
        double tb = std::isinf(b) ? 0.0 : b * eb;
        g.d_theta = k.kappa * (tb - ta);
    } else {
        double pa = std::pow(a + k.c, -k.theta);
        double pb = std::isinf(b) ? 0.0 : std::pow(b + k.c, -k.theta);
        double mass = (k.kappa / k.theta) * (pa - pb);
        g.d_kappa = (pa - pb) / k.theta;
        double la = std::log(a + k.c) * pa;
        double lb = std::isinf(b) ? 0.0 : std::log(b + k.c) * pb;
        g.d_theta = -mass / k.theta - (k.kappa / k.theta) * (la - lb);
        double qa = std::pow(a + k.c, -k.theta - 1.0);
        double qb = std::isinf(b) ? 0.0 : std::pow(b + k.c, -k.theta - 1.0);
        g.d_c = k.kappa * (qb - qa);
    }
    return g;
}

} // namespace icth::models
