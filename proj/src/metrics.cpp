#include "dualfusion/metrics.hpp"

#include "dualfusion/errors.hpp"

namespace dualfusion {

double feature_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("feature_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double style_stat_distance(const StyleExtractor& extractor, const Tensor& image_a, const Tensor& image_b) {
  if (image_a.shape() != image_b.shape()) {
    throw InvalidArgument("style_stat_distance: size mismatch " + shape_str(image_a.shape()) + " vs " +
                          shape_str(image_b.shape()));
  }
  const auto fa = extractor.extract(image_a);
  const auto fb = extractor.extract(image_b);
  return feature_distance(fa.values.data(), fb.values.data());
}

double style_stat_distance(const StyleExtractor& extractor, const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidArgument("style_stat_distance: image sizes differ");
  return style_stat_distance(extractor, image_to_tensor(a), image_to_tensor(b));
}

}  // namespace dualfusion
