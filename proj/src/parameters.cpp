#include "dualfusion/parameters.hpp"

#include "dualfusion/errors.hpp"

namespace dualfusion {

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
  if (index_.contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

bool ParameterSet::contains(const std::string& name) const { return index_.contains(name); }

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("missing parameter '" + name + "'");
  return entries_[it->second].tensor;
}

Tensor& ParameterSet::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParameterSet&>(*this).get(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.detach());
  return out;
}

ParameterSet ParameterSet::rounded_to_float() const {
  ParameterSet out;
  for (const auto& e : entries_) {
    Tensor t = e.tensor.detach();
    for (auto& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
    out.add(e.name, std::move(t));
  }
  return out;
}

void ParameterSet::merge(const ParameterSet& other, const std::string& prefix) {
  for (const auto& e : other.entries_) add(prefix + e.name, e.tensor);
}

ParameterSet ParameterSet::with_prefix(const std::string& prefix) const {
  ParameterSet out;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) out.add(e.name.substr(prefix.size()), e.tensor);
  }
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterSet::set_requires_grad(bool on) {
  for (auto& e : entries_) e.tensor.set_requires_grad(on);
}

}  // namespace dualfusion
