#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>

#include "tenc/encoder/model.hpp"
#include "tenc/evaldata/dataset.hpp"

namespace tenc::distill {

enum class WeightStrategy { kRefreshing, kSequential };
enum class LossKind { kBce, kMse };
// How bi-encoder cosines become [0,1] targets: clamp negatives to 0, or map
// [-1,1] affinely onto [0,1].
enum class ClampMode { kClamp, kAffine };
// Which pairs distillation trains on: the train split only (dev/test stay
// held out), or every pair of every split without labels.
enum class PairPool { kTrain, kAll };

struct PhaseConfig {
  double lr = 0.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::size_t max_len = 64;

  bool operator==(const PhaseConfig&) const = default;
};

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t ff_mult = 4;
  double init_std = 0.02;
  double position_std = -1.0;  // negative: same as init_std

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  evaldata::TaskKind task = evaldata::TaskKind::kSimilarity;
  // Contrastive bootstrap. No published values exist for it; these follow
  // common dropout-contrastive settings.
  PhaseConfig bootstrap{3e-5, 64, 1, 32};
  PhaseConfig bi_to_cross{2e-5, 32, 1, 64};
  PhaseConfig cross_to_bi{5e-5, 128, 10, 32};
  std::size_t cycles = 3;
  double temperature = 0.05;
  double dropout = 0.1;
  double warmup = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 0.0;
  WeightStrategy strategy = WeightStrategy::kRefreshing;
  ClampMode clamp = ClampMode::kClamp;
  LossKind bi_to_cross_loss = LossKind::kBce;
  LossKind cross_to_bi_loss = LossKind::kMse;
  PairPool pool = PairPool::kTrain;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 200;
  // Also measure each distillation student's eval-mode loss on its labels
  // before and after training (one extra pass over the pool per phase).
  bool fit_diagnostics = false;
  ModelConfig model;

  // Published base-model settings for the given task kind.
  static TrainConfig defaults(evaldata::TaskKind kind) {
    TrainConfig c;
    c.task = kind;
    if (kind == evaldata::TaskKind::kBinary) {
      c.bi_to_cross.epochs = 3;
      c.cross_to_bi.epochs = 15;
      c.cycles = 5;
    }
    return c;
  }

  // Settings for the small randomly initialised encoders used on a desk.
  // The base learning rates assume a pretrained model and barely move a
  // random one; at init_std 0.02 the random encoder also maps every sentence
  // to nearly the same [CLS] vector, so its cosine labels are constant.
  // Zero position init keeps the untrained model a bag of words.
  static TrainConfig desk(evaldata::TaskKind kind) {
    TrainConfig c = defaults(kind);
    c.model.init_std = 0.1;
    c.model.position_std = 0.0;
    c.bootstrap = {1e-3, 64, 1, 32};
    c.bi_to_cross = {2e-3, 32, 3, 64};
    c.cross_to_bi = {2e-3, 64, 3, 32};
    return c;
  }

  encoder::EncoderHyper hyper(std::size_t vocab_size) const {
    encoder::EncoderHyper h;
    h.vocab_size = vocab_size;
    h.max_len = std::max({bootstrap.max_len, bi_to_cross.max_len, cross_to_bi.max_len});
    h.d_model = model.d_model;
    h.n_layers = model.n_layers;
    h.n_heads = model.n_heads;
    h.ff_mult = model.ff_mult;
    h.dropout = dropout;
    h.init_std = model.init_std;
    h.position_std = model.position_std;
    return h;
  }

  bool operator==(const TrainConfig&) const = default;
};

inline const char* to_string(WeightStrategy s) { return s == WeightStrategy::kRefreshing ? "refreshing" : "sequential"; }
inline const char* to_string(LossKind k) { return k == LossKind::kBce ? "bce" : "mse"; }
inline const char* to_string(ClampMode m) { return m == ClampMode::kClamp ? "clamp" : "affine"; }
inline const char* to_string(PairPool p) { return p == PairPool::kTrain ? "train" : "all"; }

inline WeightStrategy parse_strategy(std::string_view s) {
  if (s == "refreshing") return WeightStrategy::kRefreshing;
  if (s == "sequential") return WeightStrategy::kSequential;
  throw Error("distill", "unknown weight strategy '" + std::string(s) + "' (refreshing, sequential)");
}
inline LossKind parse_loss(std::string_view s) {
  if (s == "bce") return LossKind::kBce;
  if (s == "mse") return LossKind::kMse;
  throw Error("distill", "unknown loss '" + std::string(s) + "' (bce, mse)");
}
inline ClampMode parse_clamp(std::string_view s) {
  if (s == "clamp") return ClampMode::kClamp;
  if (s == "affine") return ClampMode::kAffine;
  throw Error("distill", "unknown clamp mode '" + std::string(s) + "' (clamp, affine)");
}
inline PairPool parse_pool(std::string_view s) {
  if (s == "train") return PairPool::kTrain;
  if (s == "all") return PairPool::kAll;
  throw Error("distill", "unknown pair pool '" + std::string(s) + "' (train, all)");
}

}  // namespace tenc::distill
