#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tar/params.hpp"

namespace tar {

// Q/K/V projections (d x d each) plus the feed-forward sublayer
// d -> ffn_mult*d -> d used by attention_block.
void init_attention(ParamStore& params, const std::string& prefix, std::size_t d,
                    std::size_t ffn_mult, Rng& rng);

struct AttentionOutput {
  Tensor attended;  // softmax(Q K^T / sqrt(d_head)) V, before the residual
  Tensor out;       // h = f_q + attended; out = h + FFN(h)
};

// f_q[(B x) n_q x d] attends to f_k[(B x) n_k x d].
AttentionOutput attention(const Tensor& f_q, const Tensor& f_k, const ParamStore& params,
                          const std::string& prefix, std::size_t heads);

inline Tensor attention_block(const Tensor& f_q, const Tensor& f_k, const ParamStore& params,
                              const std::string& prefix, std::size_t heads) {
  return attention(f_q, f_k, params, prefix, heads).out;
}

// text [K x d_text] -> [K x d] via the learned bridge prefix.w.
void init_text_projection(ParamStore& params, const std::string& prefix, std::size_t d_text,
                          std::size_t d, Rng& rng);
Tensor project_text(const Tensor& text, const ParamStore& params, const std::string& prefix);

// Visual-text branch: one cross-attention of the flattened coarse map [n x d]
// onto projected text features. Throws ValidationError for an empty library.
Tensor text_enhance(const Tensor& coarse, const Tensor& projected_text, const ParamStore& params,
                    const std::string& prefix, std::size_t heads);

struct VisualInteraction {
  Tensor optical;
  Tensor sar;
  // Self-attended maps of every round, optical then SAR.
  std::vector<std::pair<Tensor, Tensor>> self_attended;
};

// `rounds` repetitions of shared self-attention followed by cross-attention
// in both directions.
void init_visual_interaction(ParamStore& params, const std::string& prefix, std::size_t d,
                             std::size_t ffn_mult, std::size_t rounds, Rng& rng);
VisualInteraction visual_interact(const Tensor& optical, const Tensor& sar,
                                  const ParamStore& params, const std::string& prefix,
                                  std::size_t rounds, std::size_t heads);

// Per-position MLP on [visual | text]: 2d -> d -> d -> d, ReLU after the
// first two layers.
void init_fusion(ParamStore& params, const std::string& prefix, std::size_t d, Rng& rng);
Tensor fuse(const Tensor& visual, const Tensor& text, const ParamStore& params,
            const std::string& prefix);

}  // namespace tar
