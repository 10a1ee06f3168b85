// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gear/data.hpp"
#include "gear/rng.hpp"
#include "gear/tensor.hpp"

namespace gear::model {

enum class EncoderKind { Pooling, Recurrent };

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_a = 0;
  std::size_t d_v = 0;
  std::size_t d_t = 16;        // text embedding width
  std::size_t d_a_hidden = 16; // audio backbone width
  std::size_t d_v_hidden = 16; // video backbone width
  std::size_t d_s = 32;        // latent/feature width
  std::size_t heads = 4;       // attention heads; must divide d_s
  EncoderKind encoder = EncoderKind::Pooling;
  std::uint64_t init_seed = 7;

  void validate() const;  // throws ConfigError
};

std::uint64_t config_hash(const ModelConfig& cfg);

struct Param {
  std::string name;
  Tensor value;
  bool robust_path;  // true: robust extractor/linear/fusion/classifier side
};

/// One full forward pass over a batch, with every intermediate the losses
/// and the routing tests need. Tensors are tape nodes when a tape was given,
/// plain constants otherwise.
struct Forward {
  std::size_t batch = 0;
  std::vector<double> labels;

  // one swap permutation per modality; all equal unless independent perms
  // were requested. labels_hat[m][i] == labels[perm[m][i]].
  std::array<std::vector<std::size_t>, 3> swap_perm;
  std::array<std::vector<double>, 3> labels_hat;

  std::array<Tensor, 3> v_r, v_b, v_b_hat;         // latents, batch x d_s
  std::array<Tensor, 3> f_r, f_b, f_r_hat, f_b_hat;  // features, batch x d_s
  Tensor f_o, f_o_hat;                             // fused, batch x 3*d_s
  Tensor y, y_hat;                                 // sentiment, batch x 1
  std::array<Tensor, 3> y_b, y_b_hat;              // bias heads, batch x 1

  // leaf handles parallel to GearModel::params(), empty without a tape
  std::vector<Tensor> param_leaves;
};

/// Uniformly random permutation of n indices (self-maps allowed); identity
/// when disabled or n == 1.
std::vector<std::size_t> swap_permutation(std::size_t n, Rng& rng, bool enabled);

class GearModel {
 public:
  explicit GearModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params_mut() { return params_; }

  /// Full training-time pass: encode, swap by the given permutations,
  /// disentangle with cross-path gradient stops, fuse, predict. Perms must
  /// be permutations of the batch indices.
  Forward forward(Tape* tape,
                  const std::vector<const data::MultimodalRecord*>& batch,
                  const std::array<std::vector<std::size_t>, 3>& perms) const;

  /// Shared-permutation convenience used by the training loop.
  Forward forward(Tape* tape,
                  const std::vector<const data::MultimodalRecord*>& batch,
                  const std::vector<std::size_t>& perm) const;

  /// Tape-free robust-path prediction for evaluation.
  std::vector<double> predict(
      const std::vector<const data::MultimodalRecord*>& batch) const;

 private:
  ModelConfig cfg_;
  std::vector<Param> params_;

  // parameter slot indices into params_, fixed at construction;
  // two-element arrays index the robust (0) and biased (1) path
  struct Slots {
    std::size_t text_emb[2], text_w[2], text_b[2];
    std::size_t a_w1[2], a_b1[2], a_wh[2], a_w2[2], a_b2[2];
    std::size_t v_w1[2], v_b1[2], v_wh[2], v_w2[2], v_b2[2];
    std::size_t lin_w[3][2], lin_b[3][2];
    std::vector<std::size_t> head_q, head_k, head_v;
    std::size_t wo, cls_w, cls_b;
    std::size_t bias_w[3], bias_b[3];
  };
  Slots slots_{};

  std::size_t add_param(const std::string& name, Tensor value, bool robust);
};

/// Binary container of all named parameters plus the config hash; load
/// refuses a file whose hash disagrees with cfg.
void save_checkpoint(const std::string& path, const GearModel& model);
void load_checkpoint(const std::string& path, GearModel& model);

}  // namespace gear::model
