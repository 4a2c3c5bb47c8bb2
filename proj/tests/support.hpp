#pragma once

// Shared test helpers: finite-difference gradient checks and scratch directories.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "lipadapt/core/autograd.hpp"
#include "lipadapt/core/rng.hpp"

namespace lipadapt::testing {

using VarD = ag::Var<double>;

inline Tensor<double> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

// |a - n| / max(1e-3, |a|, |n|); the floor keeps near-zero entries from dominating.
inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({1e-3, std::abs(a), std::abs(n)}); }

// Worst relative error between backprop and central differences over every
// element of `params`. `f` rebuilds the scalar loss from the current values.
inline double gradcheck(std::vector<VarD> params, const std::function<VarD()>& f, double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  auto loss = f();
  ag::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());
  double worst = 0;
  ag::NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& data = params[k].mutable_value().data;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x0 = data[i];
      data[i] = x0 + h;
      const double up = f().item();
      data[i] = x0 - h;
      const double down = f().item();
      data[i] = x0;
      worst = std::max(worst, rel_err(analytic[k][i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Turns any tensor into a scalar that depends non-trivially on each element.
inline VarD scalarize(const VarD& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto flat = ag::reshape(x, {static_cast<int>(x.size()), 1});
  return ag::sum(ag::silu(ag::add_const(flat, random_tensor(flat.shape(), rng))));
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("lipadapt_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace lipadapt::testing
