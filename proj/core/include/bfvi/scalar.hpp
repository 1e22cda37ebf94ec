#pragma once

// Overload set that lets density code be written once and instantiated for
// plain double (sampling, MCMC, quadrature) and ad::Var (gradient training).

#include <cmath>

#include "bfvi/math.hpp"
#include "bfvi/tape.hpp"

namespace bfvi::sm {

inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double sigmoid(double x) { return num::sigmoid(x); }
inline double softplus(double x) { return num::softplus(x); }
inline double value_of(double x) { return x; }
inline double value_of(ad::Var x) { return x.value(); }

// Traced scalars forward to the tape primitives; the non-template double
// overloads above win for plain doubles.
template <class T>
auto exp(const T& x) {
  return ad::exp(x);
}
template <class T>
auto log(const T& x) {
  return ad::log(x);
}
template <class T>
auto tanh(const T& x) {
  return ad::tanh(x);
}
template <class T>
auto sigmoid(const T& x) {
  return ad::sigmoid(x);
}
template <class T>
auto softplus(const T& x) {
  return ad::softplus(x);
}

template <class T>
auto square(const T& x) {
  return x * x;
}

// log N(x | mu, sd); any argument may be traced.
template <class X, class M, class S>
auto normal_lpdf(const X& x, const M& mu, const S& sd) {
  auto z = (x - mu) / sd;
  return -0.5 * num::log_two_pi - log(sd) - 0.5 * square(z);
}

template <class Y, class L>
auto cauchy_lpdf(const Y& y, const L& loc, double scale) {
  auto z = (y - loc) / scale;
  return -std::log(num::pi * scale) - log(1.0 + square(z));
}

// Density of |X| for X ~ Cauchy(0, scale); support x > 0.
template <class T>
auto half_cauchy_lpdf(const T& x, double scale) {
  auto z = x / scale;
  return std::log(2.0) - std::log(num::pi * scale) - log(1.0 + square(z));
}

template <class T>
auto student_t_lpdf(const T& x, double nu, double mu, double sd) {
  auto z = (x - mu) / sd;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * num::pi) - std::log(sd) -
         0.5 * (nu + 1.0) * log(1.0 + square(z) / nu);
}

template <class T>
auto beta_lpdf_unit(const T& x, double a, double b) {
  return (a - 1.0) * log(x) + (b - 1.0) * log(1.0 - x) -
         num::log_beta_fn(a, b);
}

// log d sigmoid(x)/dx, stable at both tails.
template <class T>
auto log_sigmoid_jacobian(const T& x) {
  return -softplus(x) - softplus(-x);
}

}  // namespace bfvi::sm
