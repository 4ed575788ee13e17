#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dualfusion/tensor.hpp"

namespace dualfusion {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered collection of uniquely named tensors. Insertion order is the
// iteration order, which fixes checkpoint layout and optimizer traversal.
class ParameterSet {
 public:
  // Throws on duplicate names.
  Tensor& add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Untracked deep copy.
  ParameterSet clone() const;
  // Copy with every value rounded through single precision.
  ParameterSet rounded_to_float() const;
  // Appends every entry of `other` with `prefix` prepended to its name.
  void merge(const ParameterSet& other, const std::string& prefix = "");
  // Entries whose name starts with `prefix`, with the prefix stripped.
  ParameterSet with_prefix(const std::string& prefix) const;
  void zero_grad();
  void set_requires_grad(bool on);

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dualfusion
