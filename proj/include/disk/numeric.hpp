#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "disk/kernels.hpp"

namespace disk {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

// max-shifted softmax; returns the log normalizer (max + log sum exp)
inline double softmax(std::span<const double> logits, std::span<double> out) {
    if (logits.empty() || logits.size() != out.size())
        throw std::invalid_argument("softmax: bad sizes");
    double m = kernels::max(logits.data(), logits.size());
    for (std::size_t i = 0; i < logits.size(); i++) out[i] = std::exp(logits[i] - m);
    double s = kernels::sum(out.data(), out.size());
    double inv = 1.0 / s;
    kernels::scale(inv, out.data(), out.size());
    return m + std::log(s);
}

inline double log_softmax_at(std::span<const double> logits, std::size_t idx) {
    double m = kernels::max(logits.data(), logits.size());
    double s = 0.0;
    for (double x : logits) s += std::exp(x - m);
    return logits[idx] - m - std::log(s);
}

// pass iff relative error under tol, with an absolute floor for values
// that are numerically zero on both sides
inline bool close_rel(double a, double b, double tol, double abs_floor = 1e-8) {
    double diff = std::abs(a - b);
    if (diff <= abs_floor) return true;
    double scale = std::max(std::abs(a), std::abs(b));
    return diff / scale < tol;
}

inline double rel_err(double a, double b, double abs_floor = 1e-8) {
    double diff = std::abs(a - b);
    if (diff <= abs_floor) return 0.0;
    return diff / std::max(std::abs(a), std::abs(b));
}

}  // namespace disk
