#pragma once

// Scalar reverse-mode differentiation on an append-only tape.
//
// Nodes are stored in topological order (parents always precede children);
// local partial derivatives are computed at forward time, so the backward
// sweep is a single reverse pass of fused multiply-adds. The tape is
// single-threaded; parallel users run one tape per worker.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bfvi/math.hpp"

namespace bfvi::ad {

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  pow_int,
  sigmoid,
  softplus,
  tanh,
  sum,
  dot,
  custom,
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tape {
 public:
  Tape() { pbeg_.push_back(0); }

  int size() const { return static_cast<int>(val_.size()); }

  void clear() {
    val_.clear();
    kind_.clear();
    parent_.clear();
    partial_.clear();
    pbeg_.assign(1, 0);
  }

  void reserve(std::size_t nodes, std::size_t parent_slots) {
    val_.reserve(nodes);
    kind_.reserve(nodes);
    pbeg_.reserve(nodes + 1);
    parent_.reserve(parent_slots);
    partial_.reserve(parent_slots);
  }

  int leaf(double v) { return push0(OpKind::leaf, v); }
  int constant(double v) { return push0(OpKind::constant, v); }

  int unary(OpKind k, double v, int a, double da) {
    parent_.push_back(a);
    partial_.push_back(da);
    return finish(k, v);
  }

  int binary(OpKind k, double v, int a, double da, int b, double db) {
    parent_.push_back(a);
    partial_.push_back(da);
    parent_.push_back(b);
    partial_.push_back(db);
    return finish(k, v);
  }

  // Begin an n-ary node: append (parent, partial) pairs, then seal it.
  void push_parent(int p, double partial) {
    parent_.push_back(p);
    partial_.push_back(partial);
  }
  int seal(OpKind k, double v) { return finish(k, v); }

  double value(int id) const { return val_[static_cast<std::size_t>(id)]; }
  OpKind kind(int id) const { return kind_[static_cast<std::size_t>(id)]; }

  // Accumulates d(output)/d(node) into the adjoint buffer for every node with
  // index <= output. The adjoint of the output itself is exactly 1.
  void backward(int output) {
    adj_.assign(val_.size(), 0.0);
    adj_[static_cast<std::size_t>(output)] = 1.0;
    for (int i = output; i >= 0; --i) {
      const double a = adj_[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const std::uint32_t lo = pbeg_[static_cast<std::size_t>(i)];
      const std::uint32_t hi = pbeg_[static_cast<std::size_t>(i) + 1];
      for (std::uint32_t s = lo; s < hi; ++s) {
        adj_[static_cast<std::size_t>(parent_[s])] += a * partial_[s];
      }
    }
  }

  double adjoint(int id) const { return adj_[static_cast<std::size_t>(id)]; }

 private:
  int push0(OpKind k, double v) { return finish(k, v); }

  int finish(OpKind k, double v) {
    val_.push_back(v);
    kind_.push_back(k);
    pbeg_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return static_cast<int>(val_.size()) - 1;
  }

  std::vector<double> val_;
  std::vector<OpKind> kind_;
  std::vector<std::uint32_t> pbeg_;  // CSR offsets, size()+1 entries
  std::vector<std::int32_t> parent_;
  std::vector<double> partial_;
  std::vector<double> adj_;
};

// Lightweight traced-scalar handle. Copies are cheap; the value is cached so
// mixed double/Var expressions never re-read the tape.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  double v = 0.0;

  double value() const { return v; }
};

inline Var make_leaf(Tape& t, double v) { return {&t, t.leaf(v), v}; }
inline Var make_const(Tape& t, double v) { return {&t, t.constant(v), v}; }

// --- arithmetic primitives --------------------------------------------------

inline Var operator+(Var a, Var b) {
  const double v = a.v + b.v;
  return {a.tape, a.tape->binary(OpKind::add, v, a.id, 1.0, b.id, 1.0), v};
}
inline Var operator+(Var a, double c) {
  const double v = a.v + c;
  return {a.tape, a.tape->unary(OpKind::add, v, a.id, 1.0), v};
}
inline Var operator+(double c, Var a) { return a + c; }

inline Var operator-(Var a, Var b) {
  const double v = a.v - b.v;
  return {a.tape, a.tape->binary(OpKind::sub, v, a.id, 1.0, b.id, -1.0), v};
}
inline Var operator-(Var a, double c) {
  const double v = a.v - c;
  return {a.tape, a.tape->unary(OpKind::sub, v, a.id, 1.0), v};
}
inline Var operator-(double c, Var a) {
  const double v = c - a.v;
  return {a.tape, a.tape->unary(OpKind::sub, v, a.id, -1.0), v};
}

inline Var operator-(Var a) {
  return {a.tape, a.tape->unary(OpKind::neg, -a.v, a.id, -1.0), -a.v};
}

inline Var operator*(Var a, Var b) {
  const double v = a.v * b.v;
  return {a.tape, a.tape->binary(OpKind::mul, v, a.id, b.v, b.id, a.v), v};
}
inline Var operator*(Var a, double c) {
  const double v = a.v * c;
  return {a.tape, a.tape->unary(OpKind::mul, v, a.id, c), v};
}
inline Var operator*(double c, Var a) { return a * c; }

inline Var operator/(Var a, Var b) {
  const double v = a.v / b.v;
  return {a.tape,
          a.tape->binary(OpKind::div, v, a.id, 1.0 / b.v, b.id, -v / b.v), v};
}
inline Var operator/(Var a, double c) {
  const double v = a.v / c;
  return {a.tape, a.tape->unary(OpKind::div, v, a.id, 1.0 / c), v};
}
inline Var operator/(double c, Var a) {
  const double v = c / a.v;
  return {a.tape, a.tape->unary(OpKind::div, v, a.id, -v / a.v), v};
}

// --- elementary functions ----------------------------------------------------

inline Var exp(Var a) {
  const double v = std::exp(a.v);
  return {a.tape, a.tape->unary(OpKind::exp, v, a.id, v), v};
}

inline Var log(Var a) {
  if (!(a.v > 0.0)) {
    throw EvalError("log of non-positive traced value: " + std::to_string(a.v));
  }
  const double v = std::log(a.v);
  return {a.tape, a.tape->unary(OpKind::log, v, a.id, 1.0 / a.v), v};
}

inline Var pow_int(Var a, int n) {
  double v = 1.0;
  for (int i = 0; i < n; ++i) v *= a.v;
  double dv = static_cast<double>(n);
  for (int i = 0; i + 1 < n; ++i) dv *= a.v;
  if (n == 0) dv = 0.0;
  return {a.tape, a.tape->unary(OpKind::pow_int, v, a.id, dv), v};
}

inline Var sigmoid(Var a) {
  const double v = num::sigmoid(a.v);
  return {a.tape, a.tape->unary(OpKind::sigmoid, v, a.id, v * (1.0 - v)), v};
}

inline Var softplus(Var a) {
  const double v = num::softplus(a.v);
  return {a.tape, a.tape->unary(OpKind::softplus, v, a.id, num::sigmoid(a.v)), v};
}

inline Var tanh(Var a) {
  const double v = std::tanh(a.v);
  return {a.tape, a.tape->unary(OpKind::tanh, v, a.id, 1.0 - v * v), v};
}

// --- n-ary primitives ---------------------------------------------------------

inline Var sum(std::span<const Var> xs) {
  Tape& t = *xs.front().tape;
  double v = 0.0;
  for (const Var& x : xs) {
    v += x.v;
    t.push_parent(x.id, 1.0);
  }
  return {&t, t.seal(OpKind::sum, v), v};
}

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
  Tape& t = *a.front().tape;
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) v += a[i].v * b[i].v;
  for (std::size_t i = 0; i < a.size(); ++i) t.push_parent(a[i].id, b[i].v);
  for (std::size_t i = 0; i < a.size(); ++i) t.push_parent(b[i].id, a[i].v);
  return {&t, t.seal(OpKind::dot, v), v};
}

inline Var dot(std::span<const Var> a, std::span<const double> b) {
  Tape& t = *a.front().tape;
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    v += a[i].v * b[i];
    t.push_parent(a[i].id, b[i]);
  }
  return {&t, t.seal(OpKind::dot, v), v};
}

// Saturating clamp; the partial is zero outside [lo, hi].
inline Var clamp(Var a, double lo, double hi) {
  if (a.v >= lo && a.v <= hi) return a;
  const double v = a.v < lo ? lo : hi;
  return {a.tape, a.tape->unary(OpKind::custom, v, a.id, 0.0), v};
}

// --- parameter plumbing -------------------------------------------------------

// Flat parameter vector with a name -> slice index. Flatten/unflatten is the
// identity on the underlying storage, so round trips are exact.
class ParamVector {
 public:
  std::span<double> add_slice(const std::string& name, std::size_t len,
                              double init = 0.0) {
    const std::size_t off = flat_.size();
    flat_.resize(off + len, init);
    slices_.emplace_back(name, off, len);
    index_[name] = slices_.size() - 1;
    return slice(name);
  }

  std::span<double> slice(std::string_view name) {
    const auto& s = slices_[index_.at(std::string(name))];
    return {flat_.data() + s.offset, s.len};
  }
  std::span<const double> slice(std::string_view name) const {
    const auto& s = slices_[index_.at(std::string(name))];
    return {flat_.data() + s.offset, s.len};
  }
  std::size_t offset_of(std::string_view name) const {
    return slices_[index_.at(std::string(name))].offset;
  }

  std::vector<double>& flat() { return flat_; }
  const std::vector<double>& flat() const { return flat_; }
  std::size_t size() const { return flat_.size(); }

  // Bind every parameter as a tape leaf, in storage order.
  std::vector<Var> bind(Tape& t) const {
    std::vector<Var> out;
    out.reserve(flat_.size());
    for (double v : flat_) out.push_back(make_leaf(t, v));
    return out;
  }

 private:
  struct Slice {
    Slice(std::string n, std::size_t o, std::size_t l)
        : name(std::move(n)), offset(o), len(l) {}
    std::string name;
    std::size_t offset;
    std::size_t len;
  };
  std::vector<double> flat_;
  std::vector<Slice> slices_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Gradient of `objective` with respect to the given leaves. Leaves that do not
// feed the objective get gradient 0.
inline std::vector<double> grad(Tape& t, Var objective,
                                std::span<const Var> leaves) {
  t.backward(objective.id);
  std::vector<double> g;
  g.reserve(leaves.size());
  for (const Var& l : leaves) g.push_back(t.adjoint(l.id));
  return g;
}

}  // namespace bfvi::ad
