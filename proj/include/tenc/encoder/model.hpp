#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tenc/autodiff/grad_check.hpp"
#include "tenc/autodiff/ops.hpp"
#include "tenc/encoder/tokenizer.hpp"
#include "tenc/rng.hpp"

namespace tenc::encoder {

using ad::NamedTensor;
using ad::Shape;
using ad::Tensor;

struct EncoderHyper {
  std::size_t vocab_size = 0;
  std::size_t max_len = 64;  // rows of the position table
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t ff_mult = 4;
  double dropout = 0.1;
  double init_std = 0.02;
  // Position table init; negative means init_std. Zero starts the model
  // order-blind and lets positions be learned from scratch.
  double position_std = -1.0;
  double ln_eps = 1e-12;

  void validate() const {
    if (vocab_size < 4) throw Error("encoder", "vocabulary must hold at least the reserved tokens");
    if (max_len < 3) throw Error("encoder", "max_len must be at least 3");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw Error("encoder", "d_model must be a positive multiple of n_heads");
    }
    if (n_layers == 0 || ff_mult == 0) throw Error("encoder", "n_layers and ff_mult must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("encoder", "dropout must lie in [0, 1)");
  }

  bool operator==(const EncoderHyper&) const = default;
};

// Named weights of one encoder plus its cross-encoder head. Copies are deep:
// a copied EncoderParams never aliases the original's buffers.
class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(EncoderHyper hyper, std::vector<NamedTensor> tensors) : hyper_(hyper), tensors_(std::move(tensors)) {
    reindex();
  }

  EncoderParams(const EncoderParams& o) : hyper_(o.hyper_), tensors_(deep_copy(o.tensors_)), index_(o.index_) {}
  EncoderParams& operator=(const EncoderParams& o) {
    if (this != &o) {
      hyper_ = o.hyper_;
      tensors_ = deep_copy(o.tensors_);
      index_ = o.index_;
    }
    return *this;
  }
  EncoderParams(EncoderParams&&) noexcept = default;
  EncoderParams& operator=(EncoderParams&&) noexcept = default;

  const EncoderHyper& hyper() const noexcept { return hyper_; }
  std::vector<NamedTensor>& tensors() noexcept { return tensors_; }
  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }
  bool empty() const noexcept { return tensors_.empty(); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("encoder", "no parameter named '" + name + "'");
    return tensors_[it->second].tensor;
  }
  Tensor& at(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const EncoderParams&>(*this).at(name));
  }

  void zero_grad() {
    for (auto& t : tensors_) t.tensor.zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.tensor.numel();
    return n;
  }

  // Bitwise equality of names, shapes and values.
  bool same_values(const EncoderParams& o, bool include_head = true) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const auto& a = tensors_[i];
      const auto& b = o.tensors_[i];
      if (a.name != b.name || a.tensor.shape() != b.tensor.shape()) return false;
      if (!include_head && is_head(a.name)) continue;
      if (!std::equal(a.tensor.values().begin(), a.tensor.values().end(), b.tensor.values().begin())) return false;
    }
    return true;
  }

  static bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }

 private:
  static std::vector<NamedTensor> deep_copy(const std::vector<NamedTensor>& src) {
    std::vector<NamedTensor> out;
    out.reserve(src.size());
    for (const auto& t : src) out.push_back({t.name, t.tensor.clone()});
    return out;
  }

  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (!index_.emplace(tensors_[i].name, i).second) {
        throw Error("encoder", "duplicate parameter name '" + tensors_[i].name + "'");
      }
    }
  }

  EncoderHyper hyper_;
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i) + "."; }

namespace detail {

inline Tensor normal_tensor(Shape shape, double std, Rng& rng) {
  std::vector<double> v(ad::numel_of(shape), 0.0);
  if (std > 0.0) {
    std::normal_distribution<double> dist(0.0, std);
    for (double& x : v) x = dist(rng);
  }
  return Tensor::parameter(std::move(shape), std::move(v));
}

inline Tensor filled(Shape shape, double value) {
  std::vector<double> v(ad::numel_of(shape), value);
  return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace detail

// Re-draws the cross head (w ~ N(0, init_std^2), b = 0).
inline void reinit_head(EncoderParams& p, Rng& rng) {
  const std::size_t d = p.hyper().d_model;
  Tensor w = detail::normal_tensor({d}, p.hyper().init_std, rng);
  std::copy(w.values().begin(), w.values().end(), p.at("head.weight").mutable_values().begin());
  p.at("head.bias").mutable_values()[0] = 0.0;
}

// Deterministic in `seed`. Matrices and embeddings ~ N(0, init_std^2) (the
// position table may use its own std), linear biases 0, layernorm gain 1 /
// bias 0, cross head weight ~ N(0, init_std^2).
inline EncoderParams init_params(const EncoderHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  Rng rng = SeedTree(seed).stream("init");
  const std::size_t d = hyper.d_model, f = hyper.d_model * hyper.ff_mult;
  const double s = hyper.init_std;
  std::vector<NamedTensor> t;
  t.push_back({"embed.token", detail::normal_tensor({hyper.vocab_size, d}, s, rng)});
  t.push_back({"embed.position", detail::normal_tensor({hyper.max_len, d}, hyper.position_std < 0.0 ? s : hyper.position_std, rng)});
  t.push_back({"embed.ln.gain", detail::filled({d}, 1.0)});
  t.push_back({"embed.ln.bias", detail::filled({d}, 0.0)});
  for (std::size_t l = 0; l < hyper.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* m : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      t.push_back({p + m + ".weight", detail::normal_tensor({d, d}, s, rng)});
      t.push_back({p + m + ".bias", detail::filled({d}, 0.0)});
    }
    t.push_back({p + "attn.ln.gain", detail::filled({d}, 1.0)});
    t.push_back({p + "attn.ln.bias", detail::filled({d}, 0.0)});
    t.push_back({p + "ffn.in.weight", detail::normal_tensor({d, f}, s, rng)});
    t.push_back({p + "ffn.in.bias", detail::filled({f}, 0.0)});
    t.push_back({p + "ffn.out.weight", detail::normal_tensor({f, d}, s, rng)});
    t.push_back({p + "ffn.out.bias", detail::filled({d}, 0.0)});
    t.push_back({p + "ffn.ln.gain", detail::filled({d}, 1.0)});
    t.push_back({p + "ffn.ln.bias", detail::filled({d}, 0.0)});
  }
  t.push_back({"head.weight", detail::normal_tensor({d}, s, rng)});
  t.push_back({"head.bias", detail::filled({1}, 0.0)});
  return EncoderParams(hyper, std::move(t));
}

// Sequences right-padded to a common length.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> ids;     // [batch * length]
  std::vector<std::uint8_t> mask;   // [batch * length]
};

inline PaddedBatch pad_batch(std::span<const TokenSequence> seqs) {
  if (seqs.empty()) throw Error("encoder", "empty batch");
  PaddedBatch b;
  b.batch = seqs.size();
  for (const auto& s : seqs) b.length = std::max(b.length, s.size());
  b.ids.assign(b.batch * b.length, Vocabulary::kPad);
  b.mask.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    if (s.ids.empty() || s.ids[0] != Vocabulary::kCls) throw Error("encoder", "sequence must start with [CLS]");
    if (s.mask.size() != s.ids.size()) throw Error("encoder", "sequence mask length differs from ids");
    std::copy(s.ids.begin(), s.ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
    std::copy(s.mask.begin(), s.mask.end(), b.mask.begin() + static_cast<std::ptrdiff_t>(i * b.length));
  }
  return b;
}

namespace detail {

inline Tensor linear(const Tensor& x, const EncoderParams& p, const std::string& name) {
  return ad::add(ad::matmul(x, p.at(name + ".weight")), p.at(name + ".bias"));
}

// [B*L, d] -> [B*H, L, dh]
inline Tensor split_heads(const Tensor& x, std::size_t B, std::size_t L, std::size_t H) {
  const std::size_t dh = x.dim(1) / H;
  return ad::reshape(ad::swap_middle_axes(ad::reshape(x, {B, L, H, dh})), {B * H, L, dh});
}

// [B*H, L, dh] -> [B*L, d]
inline Tensor merge_heads(const Tensor& x, std::size_t B, std::size_t L, std::size_t H) {
  const std::size_t dh = x.dim(2);
  return ad::reshape(ad::swap_middle_axes(ad::reshape(x, {B, H, L, dh})), {B * L, H * dh});
}

}  // namespace detail

// Final-layer hidden states [B*L, d] for a padded batch. Padded keys are
// excluded from every attention softmax, so real positions never see them.
inline Tensor encode_hidden(const EncoderParams& p, const PaddedBatch& batch, bool training, Rng* rng) {
  const EncoderHyper& h = p.hyper();
  if (training && h.dropout > 0.0 && rng == nullptr) throw Error("encoder", "training mode requires an rng");
  if (batch.length > h.max_len) {
    throw Error("encoder", "sequence of length " + std::to_string(batch.length) + " exceeds position table (" +
                               std::to_string(h.max_len) + ")");
  }
  const std::size_t B = batch.batch, L = batch.length, H = h.n_heads, d = h.d_model;
  const double pdrop = h.dropout;

  std::vector<std::size_t> positions(B * L);
  for (std::size_t i = 0; i < B * L; ++i) positions[i] = i % L;
  Tensor x = ad::add(ad::embedding_lookup(p.at("embed.token"), batch.ids),
                     ad::embedding_lookup(p.at("embed.position"), positions));
  x = ad::layernorm(x, p.at("embed.ln.gain"), p.at("embed.ln.bias"), h.ln_eps);
  x = ad::dropout(x, pdrop, rng, training);

  // Key mask broadcast over heads and query positions.
  std::vector<std::uint8_t> key_mask(B * H * L * L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t hh = 0; hh < H; ++hh)
      for (std::size_t q = 0; q < L; ++q)
        std::copy_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(b * L), L,
                    key_mask.begin() + static_cast<std::ptrdiff_t>(((b * H + hh) * L + q) * L));
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(d / H));

  for (std::size_t l = 0; l < h.n_layers; ++l) {
    const std::string pre = layer_prefix(l);
    Tensor q = detail::split_heads(detail::linear(x, p, pre + "attn.q"), B, L, H);
    Tensor k = detail::split_heads(detail::linear(x, p, pre + "attn.k"), B, L, H);
    Tensor v = detail::split_heads(detail::linear(x, p, pre + "attn.v"), B, L, H);
    Tensor scores = ad::scale(ad::matmul(q, k, /*transpose_b=*/true), attn_scale);
    Tensor probs = ad::dropout(ad::softmax(scores, 2, key_mask), pdrop, rng, training);
    Tensor ctx = detail::merge_heads(ad::matmul(probs, v), B, L, H);
    Tensor attn = ad::dropout(detail::linear(ctx, p, pre + "attn.o"), pdrop, rng, training);
    x = ad::layernorm(ad::add(x, attn), p.at(pre + "attn.ln.gain"), p.at(pre + "attn.ln.bias"), h.ln_eps);

    Tensor ff = ad::gelu(detail::linear(x, p, pre + "ffn.in"));
    ff = ad::dropout(detail::linear(ff, p, pre + "ffn.out"), pdrop, rng, training);
    x = ad::layernorm(ad::add(x, ff), p.at(pre + "ffn.ln.gain"), p.at(pre + "ffn.ln.bias"), h.ln_eps);
  }
  return x;
}

// [CLS] (position 0) rows of the final layer: [B, d].
inline Tensor cls_states(const EncoderParams& p, const PaddedBatch& batch, bool training, Rng* rng) {
  Tensor hidden = encode_hidden(p, batch, training, rng);
  std::vector<std::size_t> rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) rows[b] = b * batch.length;
  return ad::embedding_lookup(hidden, rows);
}

// Bi-encoder: one [CLS] embedding per sentence, [B, d].
inline Tensor encode_bi_batch(const EncoderParams& p, std::span<const TokenSequence> seqs, bool training,
                              Rng* rng) {
  return cls_states(p, pad_batch(seqs), training, rng);
}

inline Tensor encode_bi(const EncoderParams& p, const TokenSequence& seq, bool training, Rng* rng) {
  return ad::reshape(encode_bi_batch(p, std::span<const TokenSequence>(&seq, 1), training, rng),
                     {p.hyper().d_model});
}

// Cross-encoder logits w . h_cls + b for already-joined pair sequences: [B].
inline Tensor encode_cross_batch(const EncoderParams& p, std::span<const TokenSequence> joined, bool training,
                                 Rng* rng) {
  Tensor cls = cls_states(p, pad_batch(joined), training, rng);
  const std::size_t d = p.hyper().d_model;
  Tensor logits = ad::add(ad::matmul(cls, ad::reshape(p.at("head.weight"), {d, 1})), p.at("head.bias"));
  return ad::reshape(logits, {joined.size()});
}

// Single pair -> scalar logit [1].
inline Tensor encode_cross(const EncoderParams& p, const TokenSequence& first, const TokenSequence& second,
                           std::size_t max_len, bool training, Rng* rng) {
  TokenSequence joined = make_cross_sequence(first, second, max_len);
  return encode_cross_batch(p, std::span<const TokenSequence>(&joined, 1), training, rng);
}

}  // namespace tenc::encoder
