#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lipadapt/core/autograd.hpp"
#include "lipadapt/core/rng.hpp"

namespace lipadapt::nn {

enum class Init { Zeros, Ones, Uniform, Normal };

// Named, ordered parameter collection. Every tensor draws its initial values
// from its own RNG substream keyed by (seed, name), so the registration order
// never affects initialization. In layout mode nothing is allocated; the
// store only records names and shapes.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    ag::Var<T> var;
  };

  explicit ParamStore(std::uint64_t seed = 0, bool layout_only = false) : seed_(seed), layout_only_(layout_only) {}

  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  bool layout_only() const { return layout_only_; }

  // `scale` is the uniform bound or the normal standard deviation.
  ag::Var<T> add(const std::string& name, Shape shape, Init init, double scale = 0.0) {
    if (index_.count(name)) throw Error("duplicate parameter name " + name);
    index_[name] = entries_.size();
    if (layout_only_) {
      entries_.push_back({name, std::move(shape), {}});
      return {};
    }
    Tensor<T> value(shape);
    Rng rng(derive_seed(seed_, name));
    for (auto& v : value.data) {
      switch (init) {
        case Init::Zeros:
          v = T(0);
          break;
        case Init::Ones:
          v = T(1);
          break;
        case Init::Uniform:
          v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * scale);
          break;
        case Init::Normal:
          v = static_cast<T>(rng.normal() * scale);
          break;
      }
    }
    auto var = ag::parameter(std::move(value));
    entries_.push_back({name, std::move(shape), var});
    return var;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  const Entry* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += shape_numel(e.shape);
    return n;
  }

  // Drops all gradients; a parameter that takes no part in the next backward
  // pass keeps an empty gradient and is skipped by the optimizer.
  void zero_grad() {
    for (auto& e : entries_) e.var.node()->grad.clear();
  }

 private:
  std::uint64_t seed_;
  bool layout_only_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace lipadapt::nn
