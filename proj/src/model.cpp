// SPDX-License-Identifier: Apache-2.0
#include "gear/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gear/errors.hpp"

namespace gear::model {

namespace {

constexpr const char* kModalityName[3] = {"text", "audio", "video"};
constexpr const char* kPathName[2] = {"R", "B"};
constexpr char kCheckpointMagic[9] = "GEARCK01";

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("model: vocab_size must be > 0");
  if (d_a == 0 || d_v == 0) throw ConfigError("model: d_a and d_v must be > 0");
  if (d_t == 0 || d_a_hidden == 0 || d_v_hidden == 0 || d_s == 0)
    throw ConfigError("model: internal widths must be > 0");
  if (heads == 0) throw ConfigError("model: need at least one attention head");
  if (d_s % heads != 0)
    throw ConfigError("model: heads (" + std::to_string(heads) +
                      ") must divide d_s (" + std::to_string(d_s) + ")");
}

std::uint64_t config_hash(const ModelConfig& cfg) {
  std::string canon =
      "vocab=" + std::to_string(cfg.vocab_size) + ";da=" + std::to_string(cfg.d_a) +
      ";dv=" + std::to_string(cfg.d_v) + ";dt=" + std::to_string(cfg.d_t) +
      ";dah=" + std::to_string(cfg.d_a_hidden) +
      ";dvh=" + std::to_string(cfg.d_v_hidden) + ";ds=" + std::to_string(cfg.d_s) +
      ";heads=" + std::to_string(cfg.heads) +
      ";enc=" + (cfg.encoder == EncoderKind::Pooling ? "pool" : "rnn") +
      ";seed=" + std::to_string(cfg.init_seed);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::size_t> swap_permutation(std::size_t n, Rng& rng, bool enabled) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  if (enabled && n > 1) perm = rng.permutation(n);
  return perm;
}

std::size_t GearModel::add_param(const std::string& name, Tensor value,
                                 bool robust) {
  params_.push_back(Param{name, std::move(value), robust});
  return params_.size() - 1;
}

GearModel::GearModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng root(cfg_.init_seed);
  std::size_t stream = 0;

  auto xavier = [&](std::size_t in, std::size_t out) {
    Rng r = root.fork(stream++);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor t = Tensor::zeros({in, out});
    for (auto& v : t.data_mut()) v = r.uniform(-limit, limit);
    return t;
  };
  auto embedding = [&](std::size_t rows, std::size_t cols) {
    Rng r = root.fork(stream++);
    Tensor t = Tensor::zeros({rows, cols});
    for (auto& v : t.data_mut()) v = r.uniform(-0.1, 0.1);
    return t;
  };
  auto zeros_vec = [&](std::size_t n) {
    ++stream;  // keep stream assignment independent of init kind
    return Tensor::zeros({n});
  };

  for (int p = 0; p < 2; ++p) {
    const std::string tp = std::string("text.") + kPathName[p];
    slots_.text_emb[p] = add_param(tp + ".emb", embedding(cfg_.vocab_size, cfg_.d_t), p == 0);
    slots_.text_w[p] = add_param(tp + ".w", xavier(cfg_.d_t, cfg_.d_s), p == 0);
    slots_.text_b[p] = add_param(tp + ".b", zeros_vec(cfg_.d_s), p == 0);
  }
  for (int p = 0; p < 2; ++p) {
    const std::string ap = std::string("audio.") + kPathName[p];
    slots_.a_w1[p] = add_param(ap + ".w1", xavier(cfg_.d_a, cfg_.d_a_hidden), p == 0);
    slots_.a_b1[p] = add_param(ap + ".b1", zeros_vec(cfg_.d_a_hidden), p == 0);
    if (cfg_.encoder == EncoderKind::Recurrent)
      slots_.a_wh[p] = add_param(ap + ".wh", xavier(cfg_.d_a_hidden, cfg_.d_a_hidden), p == 0);
    slots_.a_w2[p] = add_param(ap + ".w2", xavier(cfg_.d_a_hidden, cfg_.d_s), p == 0);
    slots_.a_b2[p] = add_param(ap + ".b2", zeros_vec(cfg_.d_s), p == 0);
  }
  for (int p = 0; p < 2; ++p) {
    const std::string vp = std::string("video.") + kPathName[p];
    slots_.v_w1[p] = add_param(vp + ".w1", xavier(cfg_.d_v, cfg_.d_v_hidden), p == 0);
    slots_.v_b1[p] = add_param(vp + ".b1", zeros_vec(cfg_.d_v_hidden), p == 0);
    if (cfg_.encoder == EncoderKind::Recurrent)
      slots_.v_wh[p] = add_param(vp + ".wh", xavier(cfg_.d_v_hidden, cfg_.d_v_hidden), p == 0);
    slots_.v_w2[p] = add_param(vp + ".w2", xavier(cfg_.d_v_hidden, cfg_.d_s), p == 0);
    slots_.v_b2[p] = add_param(vp + ".b2", zeros_vec(cfg_.d_s), p == 0);
  }
  for (int m = 0; m < 3; ++m)
    for (int p = 0; p < 2; ++p) {
      const std::string lp =
          std::string("lin.") + kModalityName[m] + "." + kPathName[p];
      slots_.lin_w[m][p] = add_param(lp + ".w", xavier(2 * cfg_.d_s, cfg_.d_s), p == 0);
      slots_.lin_b[m][p] = add_param(lp + ".b", zeros_vec(cfg_.d_s), p == 0);
    }
  const std::size_t hd = cfg_.d_s / cfg_.heads;
  for (std::size_t u = 0; u < cfg_.heads; ++u) {
    const std::string hp = "fusion.h" + std::to_string(u);
    slots_.head_q.push_back(add_param(hp + ".wq", xavier(cfg_.d_s, hd), true));
    slots_.head_k.push_back(add_param(hp + ".wk", xavier(cfg_.d_s, hd), true));
    slots_.head_v.push_back(add_param(hp + ".wv", xavier(cfg_.d_s, hd), true));
  }
  slots_.wo = add_param("fusion.wo", xavier(cfg_.d_s, cfg_.d_s), true);
  slots_.cls_w = add_param("cls.w", xavier(3 * cfg_.d_s, 1), true);
  slots_.cls_b = add_param("cls.b", zeros_vec(1), true);
  for (int m = 0; m < 3; ++m) {
    const std::string bp = std::string("bias.") + kModalityName[m];
    slots_.bias_w[m] = add_param(bp + ".w", xavier(cfg_.d_s, 1), false);
    slots_.bias_b[m] = add_param(bp + ".b", zeros_vec(1), false);
  }
}

namespace {

// Mean over sequence rows; zero vector for an empty sequence.
std::vector<double> pool_rows(const std::vector<std::vector<double>>& rows,
                              std::size_t width) {
  std::vector<double> out(width, 0.0);
  if (rows.empty()) return out;
  for (const auto& row : rows)
    for (std::size_t j = 0; j < width; ++j) out[j] += row[j];
  for (auto& v : out) v /= static_cast<double>(rows.size());
  return out;
}

}  // namespace

Forward GearModel::forward(
    Tape* tape, const std::vector<const data::MultimodalRecord*>& batch,
    const std::array<std::vector<std::size_t>, 3>& perms) const {
  if (batch.empty()) throw ContractError("forward: empty batch");
  const std::size_t n = batch.size();
  for (int m = 0; m < 3; ++m)
    if (perms[m].size() != n)
      throw ContractError("forward: swap permutation size " +
                          std::to_string(perms[m].size()) + " vs batch " +
                          std::to_string(n));
  for (const auto* r : batch) {
    for (const auto& row : r->audio)
      if (row.size() != cfg_.d_a)
        throw IngestionError("record " + r->id + ": audio width " +
                             std::to_string(row.size()) + " vs model d_a " +
                             std::to_string(cfg_.d_a));
    for (const auto& row : r->video)
      if (row.size() != cfg_.d_v)
        throw IngestionError("record " + r->id + ": video width " +
                             std::to_string(row.size()) + " vs model d_v " +
                             std::to_string(cfg_.d_v));
    for (int t : r->text)
      if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size)
        throw IngestionError("record " + r->id + ": token id " +
                             std::to_string(t) + " outside vocab");
  }

  Forward fw;
  fw.batch = n;
  fw.labels.reserve(n);
  for (const auto* r : batch) fw.labels.push_back(r->label);
  fw.swap_perm = perms;
  for (int m = 0; m < 3; ++m) {
    fw.labels_hat[m].resize(n);
    for (std::size_t i = 0; i < n; ++i)
      fw.labels_hat[m][i] = fw.labels[perms[m][i]];
  }

  if (tape) {
    fw.param_leaves.reserve(params_.size());
    for (const auto& p : params_) fw.param_leaves.push_back(tape->leaf(p.value));
  }
  auto P = [&](std::size_t i) -> const Tensor& {
    return tape ? fw.param_leaves[i] : params_[i].value;
  };

  // --- inputs as constants ---------------------------------------------------
  std::vector<std::vector<int>> text_ids;
  text_ids.reserve(n);
  for (const auto* r : batch) text_ids.push_back(r->text);

  auto pooled_input = [&](bool video) {
    const std::size_t width = video ? cfg_.d_v : cfg_.d_a;
    Tensor t = Tensor::zeros({n, width});
    auto dst = t.data_mut();
    for (std::size_t i = 0; i < n; ++i) {
      auto pooled = pool_rows(video ? batch[i]->video : batch[i]->audio, width);
      std::copy(pooled.begin(), pooled.end(), dst.begin() + static_cast<long>(i * width));
    }
    return t;
  };

  auto step_inputs = [&](bool video) {
    const std::size_t width = video ? cfg_.d_v : cfg_.d_a;
    std::size_t len = video ? batch[0]->video.size() : batch[0]->audio.size();
    for (const auto* r : batch) {
      const auto& rows = video ? r->video : r->audio;
      if (rows.size() != len)
        throw ContractError(
            "forward: recurrent encoder needs a uniform sequence length "
            "within the batch; record " + r->id + " differs");
    }
    std::vector<Tensor> steps;
    steps.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      Tensor x = Tensor::zeros({n, width});
      auto dst = x.data_mut();
      for (std::size_t i = 0; i < n; ++i) {
        const auto& rows = video ? batch[i]->video : batch[i]->audio;
        std::copy(rows[t].begin(), rows[t].end(),
                  dst.begin() + static_cast<long>(i * width));
      }
      steps.push_back(std::move(x));
    }
    return steps;
  };

  // --- extractors -------------------------------------------------------------
  auto encode_seq = [&](bool video, int p) {
    const std::size_t w1 = video ? slots_.v_w1[p] : slots_.a_w1[p];
    const std::size_t b1 = video ? slots_.v_b1[p] : slots_.a_b1[p];
    const std::size_t w2 = video ? slots_.v_w2[p] : slots_.a_w2[p];
    const std::size_t b2 = video ? slots_.v_b2[p] : slots_.a_b2[p];
    if (cfg_.encoder == EncoderKind::Pooling) {
      // per-timestep linear then mean-pool == pool first, then the linear
      Tensor h = add_row(matmul(pooled_input(video), P(w1)), P(b1));
      return add_row(matmul(h, P(w2)), P(b2));
    }
    const std::size_t wh = video ? slots_.v_wh[p] : slots_.a_wh[p];
    const std::size_t hidden = video ? cfg_.d_v_hidden : cfg_.d_a_hidden;
    Tensor h = Tensor::zeros({n, hidden});
    for (const Tensor& x : step_inputs(video))
      h = gear::tanh(add_row(add(matmul(x, P(w1)), matmul(h, P(wh))), P(b1)));
    return add_row(matmul(h, P(w2)), P(b2));
  };

  for (int p = 0; p < 2; ++p) {
    Tensor vt = add_row(matmul(embedding_mean(P(slots_.text_emb[p]), text_ids),
                               P(slots_.text_w[p])),
                        P(slots_.text_b[p]));
    Tensor va = encode_seq(false, p);
    Tensor vv = encode_seq(true, p);
    if (p == 0) {
      fw.v_r = {vt, va, vv};
    } else {
      fw.v_b = {vt, va, vv};
    }
  }

  // --- swap -------------------------------------------------------------------
  for (int m = 0; m < 3; ++m) fw.v_b_hat[m] = permute_rows(fw.v_b[m], perms[m]);

  // --- disentangling linears with cross-path stops ------------------------------
  auto linear_relu = [&](const Tensor& in, std::size_t w, std::size_t b) {
    return relu(add_row(matmul(in, P(w)), P(b)));
  };
  for (int m = 0; m < 3; ++m) {
    Tensor vb_stop = stop_gradient(fw.v_b[m]);
    Tensor vbh_stop = stop_gradient(fw.v_b_hat[m]);
    Tensor vr_stop = stop_gradient(fw.v_r[m]);
    fw.f_r[m] = linear_relu(concat_last({fw.v_r[m], vb_stop}),
                            slots_.lin_w[m][0], slots_.lin_b[m][0]);
    fw.f_r_hat[m] = linear_relu(concat_last({fw.v_r[m], vbh_stop}),
                                slots_.lin_w[m][0], slots_.lin_b[m][0]);
    fw.f_b[m] = linear_relu(concat_last({vr_stop, fw.v_b[m]}),
                            slots_.lin_w[m][1], slots_.lin_b[m][1]);
    fw.f_b_hat[m] = linear_relu(concat_last({vr_stop, fw.v_b_hat[m]}),
                                slots_.lin_w[m][1], slots_.lin_b[m][1]);
  }

  // --- fusion and heads ---------------------------------------------------------
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_s));
  auto fuse = [&](const std::array<Tensor, 3>& f) {
    Tensor stacked = reshape(concat_last({f[0], f[1], f[2]}), {3 * n, cfg_.d_s});
    std::vector<Tensor> outs;
    outs.reserve(cfg_.heads);
    for (std::size_t u = 0; u < cfg_.heads; ++u) {
      Tensor q = matmul(stacked, P(slots_.head_q[u]));
      Tensor k = matmul(stacked, P(slots_.head_k[u]));
      Tensor v = matmul(stacked, P(slots_.head_v[u]));
      Tensor a = row_softmax(scale(attention_scores(q, k, 3), att_scale));
      outs.push_back(attention_apply(a, v, 3));
    }
    Tensor mhat = matmul(concat_last(outs), P(slots_.wo));
    return reshape(mhat, {n, 3 * cfg_.d_s});
  };
  fw.f_o = fuse(fw.f_r);
  fw.f_o_hat = fuse(fw.f_r_hat);
  fw.y = add_row(matmul(fw.f_o, P(slots_.cls_w)), P(slots_.cls_b));
  fw.y_hat = add_row(matmul(fw.f_o_hat, P(slots_.cls_w)), P(slots_.cls_b));
  for (int m = 0; m < 3; ++m) {
    fw.y_b[m] = add_row(matmul(fw.f_b[m], P(slots_.bias_w[m])), P(slots_.bias_b[m]));
    fw.y_b_hat[m] =
        add_row(matmul(fw.f_b_hat[m], P(slots_.bias_w[m])), P(slots_.bias_b[m]));
  }
  return fw;
}

Forward GearModel::forward(
    Tape* tape, const std::vector<const data::MultimodalRecord*>& batch,
    const std::vector<std::size_t>& perm) const {
  return forward(tape, batch, {perm, perm, perm});
}

std::vector<double> GearModel::predict(
    const std::vector<const data::MultimodalRecord*>& batch) const {
  std::vector<std::size_t> identity(batch.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  Forward fw = forward(nullptr, batch, identity);
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fw.y.at(i, 0);
  return out;
}

// --- checkpoints ----------------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint " + path + ": truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const GearModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("save_checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, 8);
  write_pod(out, config_hash(model.config()));
  write_pod(out, static_cast<std::uint64_t>(model.params().size()));
  for (const auto& p : model.params()) {
    write_pod(out, static_cast<std::uint64_t>(p.name.size()));
    out.write(p.name.data(), static_cast<long>(p.name.size()));
    write_pod(out, static_cast<std::uint64_t>(p.value.ndim()));
    for (auto d : p.value.shape()) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<long>(p.value.size() * sizeof(double)));
  }
  if (!out) throw IngestionError("save_checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, GearModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ParseError("checkpoint " + path + ": bad magic");
  const auto hash = read_pod<std::uint64_t>(in, path);
  if (hash != config_hash(model.config()))
    throw ConfigError("checkpoint " + path +
                      ": config hash mismatch; was it written by a model with "
                      "a different configuration?");
  const auto count = read_pod<std::uint64_t>(in, path);
  if (count != model.params().size())
    throw ContractError("checkpoint " + path + ": holds " +
                        std::to_string(count) + " params, model has " +
                        std::to_string(model.params().size()));
  for (auto& p : model.params_mut()) {
    const auto name_len = read_pod<std::uint64_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<long>(name_len));
    if (!in || name != p.name)
      throw ContractError("checkpoint " + path + ": expected param '" + p.name +
                          "', found '" + name + "'");
    const auto ndim = read_pod<std::uint64_t>(in, path);
    Shape shape(ndim);
    for (auto& d : shape) d = read_pod<std::uint64_t>(in, path);
    if (shape != p.value.shape())
      throw ContractError("checkpoint " + path + ": shape mismatch for '" +
                          p.name + "'");
    in.read(reinterpret_cast<char*>(p.value.data_mut().data()),
            static_cast<long>(p.value.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint " + path + ": truncated");
  }
}

}  // namespace gear::model
