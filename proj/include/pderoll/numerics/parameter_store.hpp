#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pderoll/numerics/autodiff.hpp"

namespace pderoll {

/// Named trainable tensors in insertion order.
///
/// A store owns one leaf per entry. `clone()` yields an independent store with
/// fresh leaves over copied values, so concurrent graphs never share gradient
/// buffers; `frozen()` yields constants for gradient-free evaluation.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
  };

  ParameterStore() = default;
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw std::invalid_argument("ParameterStore: duplicate name " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), Var<T>::leaf(std::move(value))});
  }

  const Var<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter named " + name);
    return entries_[it->second].var;
  }
  Var<T>& at(const std::string& name) {
    return const_cast<Var<T>&>(static_cast<const ParameterStore&>(*this).at(name));
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  /// Total scalar count; complex weights stored as trailing [..., 2] count twice.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  ParameterStore clone() const { return copy(true); }
  ParameterStore frozen() const { return copy(false); }

  /// Elementwise equality of names, shapes and values.
  bool identical(const ParameterStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name) return false;
      if (entries_[i].var.value() != other.entries_[i].var.value()) return false;
    }
    return true;
  }

 private:
  ParameterStore copy(bool trainable) const {
    ParameterStore out(seed_);
    for (const auto& e : entries_) {
      out.index_.emplace(e.name, out.entries_.size());
      out.entries_.push_back(
          {e.name, trainable ? Var<T>::leaf(e.var.value()) : Var<T>::constant(e.var.value())});
    }
    return out;
  }

  std::uint64_t seed_ = 0;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace pderoll
