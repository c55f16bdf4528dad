#include "tar/tafe.hpp"

#include "tar/errors.hpp"

namespace tar {

void init_attention(ParamStore& params, const std::string& prefix, std::size_t d,
                    std::size_t ffn_mult, Rng& rng) {
  for (const char* name : {".wq", ".wk", ".wv"}) {
    Tensor w = params.add(prefix + name, {d, d});
    lecun_uniform(w, d, rng);
  }
  Tensor w1 = params.add(prefix + ".ffn1.w", {d, ffn_mult * d});
  kaiming_uniform(w1, d, rng);
  params.add(prefix + ".ffn1.b", {ffn_mult * d});
  Tensor w2 = params.add(prefix + ".ffn2.w", {ffn_mult * d, d});
  lecun_uniform(w2, ffn_mult * d, rng);
  params.add(prefix + ".ffn2.b", {d});
}

AttentionOutput attention(const Tensor& f_q, const Tensor& f_k, const ParamStore& params,
                          const std::string& prefix, std::size_t heads) {
  const Tensor& wq = params.get(prefix + ".wq");
  if (f_q.shape().back() != wq.dim(0) || f_k.shape().back() != wq.dim(0)) {
    throw DimensionError("attention '" + prefix + "' has width " + std::to_string(wq.dim(0)) +
                         ", inputs " + shape_str(f_q.shape()) + " and " + shape_str(f_k.shape()));
  }
  AttentionOutput r;
  r.attended = attention_core(linear(f_q, wq), linear(f_k, params.get(prefix + ".wk")),
                              linear(f_k, params.get(prefix + ".wv")), heads);
  const Tensor h = add(f_q, r.attended);
  const Tensor hidden =
      relu(linear(h, params.get(prefix + ".ffn1.w"), params.get(prefix + ".ffn1.b")));
  r.out = add(h, linear(hidden, params.get(prefix + ".ffn2.w"), params.get(prefix + ".ffn2.b")));
  return r;
}

void init_text_projection(ParamStore& params, const std::string& prefix, std::size_t d_text,
                          std::size_t d, Rng& rng) {
  Tensor w = params.add(prefix + ".w", {d_text, d});
  lecun_uniform(w, 1, rng);  // library rows are unit vectors
}

Tensor project_text(const Tensor& text, const ParamStore& params, const std::string& prefix) {
  return matmul(text, params.get(prefix + ".w"));
}

Tensor text_enhance(const Tensor& coarse, const Tensor& projected_text, const ParamStore& params,
                    const std::string& prefix, std::size_t heads) {
  if (!projected_text.defined() || projected_text.dim(0) == 0) {
    throw ValidationError("text enhancement needs a non-empty library");
  }
  return attention_block(coarse, projected_text, params, prefix, heads);
}

void init_visual_interaction(ParamStore& params, const std::string& prefix, std::size_t d,
                             std::size_t ffn_mult, std::size_t rounds, Rng& rng) {
  for (std::size_t r = 0; r < rounds; ++r) {
    init_attention(params, prefix + ".self" + std::to_string(r), d, ffn_mult, rng);
    init_attention(params, prefix + ".cross" + std::to_string(r), d, ffn_mult, rng);
  }
}

VisualInteraction visual_interact(const Tensor& optical, const Tensor& sar,
                                  const ParamStore& params, const std::string& prefix,
                                  std::size_t rounds, std::size_t heads) {
  if (optical.shape().back() != sar.shape().back()) {
    throw DimensionError("visual interaction widths differ: " + shape_str(optical.shape()) +
                         " vs " + shape_str(sar.shape()));
  }
  VisualInteraction v;
  Tensor o = optical, s = sar;
  for (std::size_t r = 0; r < rounds; ++r) {
    const std::string self = prefix + ".self" + std::to_string(r);
    const std::string cross = prefix + ".cross" + std::to_string(r);
    const Tensor so = attention_block(o, o, params, self, heads);
    const Tensor ss = attention_block(s, s, params, self, heads);
    v.self_attended.emplace_back(so, ss);
    o = attention_block(so, ss, params, cross, heads);
    s = attention_block(ss, so, params, cross, heads);
  }
  v.optical = o;
  v.sar = s;
  return v;
}

void init_fusion(ParamStore& params, const std::string& prefix, std::size_t d, Rng& rng) {
  Tensor w1 = params.add(prefix + ".fc1.w", {2 * d, d});
  kaiming_uniform(w1, 2 * d, rng);
  params.add(prefix + ".fc1.b", {d});
  Tensor w2 = params.add(prefix + ".fc2.w", {d, d});
  kaiming_uniform(w2, d, rng);
  params.add(prefix + ".fc2.b", {d});
  Tensor w3 = params.add(prefix + ".fc3.w", {d, d});
  lecun_uniform(w3, d, rng);
  params.add(prefix + ".fc3.b", {d});
}

Tensor fuse(const Tensor& visual, const Tensor& text, const ParamStore& params,
            const std::string& prefix) {
  if (visual.shape() != text.shape()) {
    throw DimensionError("fusion inputs differ: " + shape_str(visual.shape()) + " vs " +
                         shape_str(text.shape()));
  }
  const Tensor x = concat_channels(visual, text);
  const Tensor h1 = relu(linear(x, params.get(prefix + ".fc1.w"), params.get(prefix + ".fc1.b")));
  const Tensor h2 = relu(linear(h1, params.get(prefix + ".fc2.w"), params.get(prefix + ".fc2.b")));
  return linear(h2, params.get(prefix + ".fc3.w"), params.get(prefix + ".fc3.b"));
}

}  // namespace tar
