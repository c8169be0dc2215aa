#pragma once

#include <array>
#include <map>
#include <memory>
#include <vector>

#include "blochwkb/core_types.hpp"

namespace blochwkb {

// Monomials delta^alpha in `nvars` variables with |alpha| <= order, graded
// lexicographic; a jet stores Taylor coefficients f = sum c_alpha delta^alpha.
class JetLayout {
 public:
  using Index = std::vector<int>;

  JetLayout(int nvars, int order) : nvars_(nvars), order_(order) {
    Index a(nvars, 0);
    for (int d = 0; d <= order; ++d) enumerate(a, 0, d);
    for (int i = 0; i < size(); ++i) lookup_[monomials_[i]] = i;
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j) {
        if (degree(i) + degree(j) > order) continue;
        Index s(nvars);
        for (int v = 0; v < nvars; ++v) s[v] = monomials_[i][v] + monomials_[j][v];
        products_.push_back({i, j, lookup_.at(s)});
      }
  }

  static std::shared_ptr<const JetLayout> make(int nvars, int order) {
    return std::make_shared<const JetLayout>(nvars, order);
  }

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(monomials_.size()); }
  const Index& monomial(int i) const { return monomials_[i]; }
  int degree(int i) const {
    int s = 0;
    for (int e : monomials_[i]) s += e;
    return s;
  }
  int find(const Index& a) const {
    auto it = lookup_.find(a);
    return it == lookup_.end() ? -1 : it->second;
  }
  struct Product {
    int a, b, out;
  };
  const std::vector<Product>& products() const { return products_; }

 private:
  void enumerate(Index& a, int var, int remaining) {
    if (var == nvars_ - 1) {
      a[var] = remaining;
      monomials_.push_back(a);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      a[var] = e;
      enumerate(a, var + 1, remaining - e);
    }
    a[var] = 0;
  }

  int nvars_;
  int order_;
  std::vector<Index> monomials_;
  std::map<Index, int> lookup_;
  std::vector<Product> products_;
};

// Vector-valued truncated Taylor series: column k holds the coefficient of monomial k.
struct Jet {
  std::shared_ptr<const JetLayout> layout;
  MatX c;

  static Jet zero(std::shared_ptr<const JetLayout> l, int rows) {
    const int n = l->size();
    return {std::move(l), MatX::Zero(rows, n)};
  }
  static Jet constant(std::shared_ptr<const JetLayout> l, const VecX& v) {
    Jet j = zero(std::move(l), static_cast<int>(v.size()));
    j.c.col(0) = v;
    return j;
  }
  // Scalar jet of exp(i k.delta) times `scale`.
  static Jet plane_wave(std::shared_ptr<const JetLayout> l, const Eigen::VectorXd& k, cplx scale) {
    Jet j = zero(l, 1);
    for (int i = 0; i < l->size(); ++i) {
      cplx v = scale;
      for (int var = 0; var < l->nvars(); ++var) {
        const int e = l->monomial(i)[var];
        for (int p = 1; p <= e; ++p) v *= I_unit * k(var) / double(p);
      }
      j.c(0, i) = v;
    }
    return j;
  }

  int rows() const { return static_cast<int>(c.rows()); }
  VecX value() const { return c.col(0); }

  // d/d delta_var, one order lower (top coefficients become zero).
  Jet derivative(int var) const {
    Jet out = zero(layout, rows());
    for (int i = 0; i < layout->size(); ++i) {
      auto a = layout->monomial(i);
      a[var] += 1;
      const int j = layout->find(a);
      if (j >= 0) out.c.col(i) = double(a[var]) * c.col(j);
    }
    return out;
  }

  Jet& operator+=(const Jet& o) {
    c += o.c;
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    c -= o.c;
    return *this;
  }
  Jet& operator*=(cplx s) {
    c *= s;
    return *this;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(cplx s, Jet a) { return a *= s; }

  // Applies a linear map to every coefficient.
  template <class Map>
  Jet map(Map&& f) const {
    MatX m = f(c);
    return {layout, std::move(m)};
  }
};

// Product of a scalar jet (1 row) with a vector jet.
inline Jet scalar_times(const Jet& s, const Jet& v) {
  require(s.rows() == 1 && s.layout == v.layout, "scalar_times: incompatible jets");
  Jet out = Jet::zero(v.layout, v.rows());
  for (const auto& p : v.layout->products()) out.c.col(p.out) += s.c(0, p.a) * v.c.col(p.b);
  return out;
}

// Product of a matrix-valued jet (one matrix per monomial) with a vector jet.
inline Jet matrix_times(const std::vector<MatX>& m, const Jet& v) {
  require(static_cast<int>(m.size()) == v.layout->size(), "matrix_times: incompatible jets");
  Jet out = Jet::zero(v.layout, static_cast<int>(m[0].rows()));
  for (const auto& p : v.layout->products())
    if (m[p.a].size() && m[p.a].norm() > 0) out.c.col(p.out) += m[p.a] * v.c.col(p.b);
  return out;
}

// Copies coefficients into a layout over the same variables with a different order.
inline Jet reorder(const Jet& j, std::shared_ptr<const JetLayout> target) {
  require(target->nvars() == j.layout->nvars(), "reorder: variable count differs");
  Jet out = Jet::zero(target, j.rows());
  for (int i = 0; i < target->size(); ++i) {
    const int s = j.layout->find(target->monomial(i));
    if (s >= 0) out.c.col(i) = j.c.col(s);
  }
  return out;
}

}  // namespace blochwkb
