#pragma once

#include <string>

#include "dualfusion/ops.hpp"
#include "dualfusion/parameters.hpp"
#include "dualfusion/rng.hpp"

namespace dualfusion {

enum class Init { fan_in_normal, zeros };

// Creates parameters (with a seeded initializer) or binds existing ones by
// name. Modules walk their layout once through this interface, so init and
// checkpoint binding cannot drift apart. Binding checks every shape.
class ParamBuilder {
 public:
  static ParamBuilder creating(ParameterSet& set, Rng& rng) { return ParamBuilder(&set, nullptr, &rng); }
  static ParamBuilder binding(const ParameterSet& set) { return ParamBuilder(nullptr, &set, nullptr); }

  Tensor param(const std::string& name, const Shape& shape, Init init, std::size_t fan_in = 1);

 private:
  ParamBuilder(ParameterSet* out, const ParameterSet* in, Rng* rng) : out_(out), in_(in), rng_(rng) {}
  ParameterSet* out_;
  const ParameterSet* in_;
  Rng* rng_;
};

struct LinearLayer {
  Tensor weight, bias;
  static LinearLayer make(ParamBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                          Init init = Init::fan_in_normal);
  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }
};

struct ConvLayer {
  Tensor weight, bias;
  static ConvLayer make(ParamBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, Init init = Init::fan_in_normal);
  Tensor operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias); }
  std::size_t out_channels() const { return weight.dim(0); }
};

}  // namespace dualfusion
