#include "dualfusion/layers.hpp"

#include <cmath>

#include "dualfusion/errors.hpp"

namespace dualfusion {

Tensor ParamBuilder::param(const std::string& name, const Shape& shape, Init init, std::size_t fan_in) {
  if (in_) {
    const Tensor& t = in_->get(name);
    if (t.shape() != shape) {
      throw InvalidArgument("parameter '" + name + "' has shape " + shape_str(t.shape()) + ", layout expects " +
                            shape_str(shape));
    }
    return t;
  }
  Tensor t(shape);
  if (init == Init::fan_in_normal) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.mutable_data()) v = stddev * rng_->normal();
  }
  t.set_requires_grad(true);
  return out_->add(name, t);
}

LinearLayer LinearLayer::make(ParamBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                              Init init) {
  return {b.param(name + ".weight", {out, in}, init, in), b.param(name + ".bias", {out}, Init::zeros)};
}

ConvLayer ConvLayer::make(ParamBuilder& b, const std::string& name, std::size_t in, std::size_t out,
                          std::size_t kernel, Init init) {
  return {b.param(name + ".weight", {out, in, kernel, kernel}, init, in * kernel * kernel),
          b.param(name + ".bias", {out}, Init::zeros)};
}

}  // namespace dualfusion
