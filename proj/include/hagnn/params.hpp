#pragma once

// Named, ordered parameter storage shared by the models: registration with
// stable names, binding onto a tape as leaves for one forward/backward, and a
// JSON checkpoint format (name -> shape + row-major values) that round-trips
// exactly.

#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hagnn/errors.hpp"
#include "hagnn/rng.hpp"
#include "hagnn/tape.hpp"
#include "hagnn/tensor.hpp"

namespace hagnn {

class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init) {
    if (index_.count(name))
      throw StateError("ParamStore: duplicate parameter '" + name + "'");
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(init));
    return items_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor& get(const std::string& name) {
    return items_[find(name)].second;
  }

  const Tensor& get(const std::string& name) const {
    return items_[find(name)].second;
  }

  std::size_t size() const { return items_.size(); }

  const std::pair<std::string, Tensor>& at(std::size_t i) const {
    return items_[i];
  }

  Tensor& tensor_at(std::size_t i) { return items_[i].second; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [name, t] : items_) out.push_back(name);
    return out;
  }

 private:
  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw StateError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

// One tape binding of a store: every parameter becomes a tracked leaf, in
// store order, so gradients can be read back by name after backward().
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store)
      : tape_(&tape), store_(&store) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i)
      vars_.push_back(tape.leaf(store.at(i).second, true));
  }

  // Wraps externally created leaves (one per store entry, in store order);
  // used by gradient checks that own the leaf creation.
  BoundParams(Tape& tape, const ParamStore& store, std::vector<Var> leaves)
      : tape_(&tape), store_(&store), vars_(std::move(leaves)) {
    if (vars_.size() != store.size())
      throw DimensionError("BoundParams: leaf count " +
                           std::to_string(vars_.size()) +
                           " != parameter count " +
                           std::to_string(store.size()));
  }

  Var operator[](const std::string& name) const {
    for (std::size_t i = 0; i < store_->size(); ++i)
      if (store_->at(i).first == name) return vars_[i];
    throw StateError("BoundParams: unknown parameter '" + name + "'");
  }

  Var var_at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

  const Tensor& grad(const std::string& name) const {
    return tape_->grad((*this)[name]);
  }

  const Tensor& grad_at(std::size_t i) const { return tape_->grad(vars_[i]); }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::vector<Var> vars_;
};

inline nlohmann::ordered_json params_to_json(const ParamStore& store) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& [name, t] = store.at(i);
    nlohmann::ordered_json entry;
    entry["shape"] = {t.rows(), t.cols()};
    std::vector<double> values(t.data(), t.data() + t.size());
    entry["values"] = values;
    j[name] = std::move(entry);
  }
  return j;
}

inline ParamStore params_from_json(const nlohmann::ordered_json& j) {
  ParamStore store;
  for (const auto& [name, entry] : j.items()) {
    if (!entry.contains("shape") || !entry.contains("values"))
      throw IoError("checkpoint entry '" + name + "' lacks shape or values");
    std::size_t rows = entry["shape"][0].get<std::size_t>();
    std::size_t cols = entry["shape"][1].get<std::size_t>();
    const auto& values = entry["values"];
    if (values.size() != rows * cols)
      throw IoError("checkpoint entry '" + name + "' has " +
                    std::to_string(values.size()) + " values for shape " +
                    std::to_string(rows) + "x" + std::to_string(cols));
    Tensor t(rows, cols);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = values[k].get<double>();
    store.add(name, std::move(t));
  }
  return store;
}

inline void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << params_to_json(store).dump(1) << "\n";
  if (!out) throw IoError("write failed for " + path);
}

inline ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return params_from_json(j);
}

// Glorot-uniform initialization for a weight matrix.
inline Tensor glorot_init(RngStream& rng, std::size_t fan_in,
                          std::size_t fan_out) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (std::size_t k = 0; k < t.size(); ++k)
    t[k] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace hagnn
