#pragma once

#include "dualfusion/conditioning.hpp"
#include "dualfusion/image.hpp"

namespace dualfusion {

// Sum over extractor levels of ||mu_A - mu_B||^2 + ||var_A - var_B||^2,
// i.e. the squared distance between the two style-feature vectors.
double style_stat_distance(const StyleExtractor& extractor, const Tensor& image_a, const Tensor& image_b);
double style_stat_distance(const StyleExtractor& extractor, const ImageBuffer& a, const ImageBuffer& b);
double feature_distance(std::span<const double> a, std::span<const double> b);

}  // namespace dualfusion
