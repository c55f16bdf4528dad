#include "tar/backbone.hpp"

#include "tar/errors.hpp"

namespace tar {

namespace {

void add_conv(ParamStore& p, const std::string& name, std::size_t cout, std::size_t cin,
              std::size_t k, Rng& rng) {
  Tensor w = p.add(name + ".w", {cout, cin, k, k});
  kaiming_uniform(w, cin * k * k, rng);
  p.add(name + ".b", {cout});
}

Tensor conv(const Tensor& x, const ParamStore& p, const std::string& name, std::size_t stride) {
  const Tensor& w = p.get(name + ".w");
  return conv2d(x, w, p.get(name + ".b"), stride, w.dim(2) / 2);
}

void add_block(ParamStore& p, const std::string& name, std::size_t cin, std::size_t cout,
               Rng& rng) {
  add_conv(p, name + ".conv1", cout, cin, 3, rng);
  add_conv(p, name + ".conv2", cout, cout, 3, rng);
  add_conv(p, name + ".skip", cout, cin, 1, rng);
}

Tensor block(const Tensor& x, const ParamStore& p, const std::string& name) {
  const Tensor a = relu(instance_norm(conv(x, p, name + ".conv1", 2)));
  const Tensor b = instance_norm(conv(a, p, name + ".conv2", 1));
  return relu(add(b, conv(x, p, name + ".skip", 2)));
}

}  // namespace

void init_backbone(ParamStore& params, const std::string& prefix, const ModelConfig& cfg,
                   Rng& rng) {
  add_conv(params, prefix + ".stem", cfg.stem_width, 1, 3, rng);
  add_block(params, prefix + ".block1", cfg.stem_width, cfg.mid_width, rng);
  add_block(params, prefix + ".block2", cfg.mid_width, cfg.d_c, rng);
  add_conv(params, prefix + ".lateral2", cfg.d_f, cfg.stem_width, 1, rng);
  add_conv(params, prefix + ".lateral4", cfg.d_f, cfg.mid_width, 1, rng);
}

FeaturePyramid extract(const Tensor& image, const ParamStore& params, const std::string& prefix) {
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw DimensionError("backbone expects a [1 x H x W] image, got " + shape_str(image.shape()));
  }
  if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw GeometryError("image size " + std::to_string(image.dim(2)) + "x" +
                        std::to_string(image.dim(1)) + " is not a positive multiple of 8");
  }
  const Tensor s2 = relu(instance_norm(conv(image, params, prefix + ".stem", 2)));
  const Tensor s4 = block(s2, params, prefix + ".block1");
  FeaturePyramid out;
  out.coarse = block(s4, params, prefix + ".block2");
  // Normalized like every other stage so window similarities stay in a
  // trainable range once the shared layers grow.
  out.fine = instance_norm(add(conv(s2, params, prefix + ".lateral2", 1),
                               upsample_nearest2x(conv(s4, params, prefix + ".lateral4", 1))));
  return out;
}

}  // namespace tar
