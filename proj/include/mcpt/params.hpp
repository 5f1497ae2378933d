// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mcpt/container.hpp"
#include "mcpt/rng.hpp"
#include "mcpt/tape.hpp"
#include "mcpt/tensor.hpp"

namespace mcpt {

// Named parameter set with stable ordering (registration order). The order
// fixes checkpoint layout and optimizer iteration, keeping runs reproducible.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
  };

  Tensor<T>& add(const std::string& name, Tensor<T> value, bool trainable = true) {
    require(index_.find(name) == index_.end(), "duplicate parameter: " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(value), trainable});
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return entries_[it->second].value;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return entries_[it->second].value;
  }

  void set_trainable(const std::string& name, bool trainable) {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    entries_[it->second].trainable = trainable;
  }

  bool trainable(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: " + name);
    return entries_[it->second].trainable;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (e.trainable) out.push_back(e.name);
    return out;
  }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  void remove_prefix(const std::string& prefix) {
    std::vector<Entry> kept;
    for (auto& e : entries_)
      if (e.name.rfind(prefix, 0) != 0) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    reindex();
  }

  Container to_container() const {
    Container c;
    for (const auto& e : entries_) c.add(e.name, e.value);
    return c;
  }

  // Loads values for matching names; every entry must be present.
  void load_from(const Container& c) {
    for (auto& e : entries_) e.value = c.get<T>(e.name);
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Vars for every parameter on a tape; frozen entries become constants so
// their gradients are never materialized.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, ParamStore<T>& store) : store_(&store) {
    for (auto& e : store.entries()) vars_[e.name] = tape.leaf(e.value, e.trainable);
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    require(it != vars_.end(), "unbound parameter: " + name);
    return it->second;
  }

  const std::map<std::string, Var>& vars() const { return vars_; }
  ParamStore<T>& store() const { return *store_; }

 private:
  ParamStore<T>* store_;
  std::map<std::string, Var> vars_;
};

// Truncated normal init (resample outside two sigmas), zeros for biases.
template <typename T>
Tensor<T> trunc_normal(Shape shape, double sigma, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.vec()) {
    double x;
    do {
      x = rng.normal();
    } while (std::abs(x) > 2.0);
    v = static_cast<T>(x * sigma);
  }
  return t;
}

}  // namespace mcpt
