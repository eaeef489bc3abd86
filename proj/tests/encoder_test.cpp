#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tenc/encoder/checkpoint.hpp"
#include "tenc/encoder/model.hpp"

using namespace tenc;
using namespace tenc::encoder;

namespace {

Vocabulary small_vocab() {
  Vocabulary v;
  for (const char* w : {"hello", "world", "a", "b", "c", "d", "cat", "dog", "sat", "mat"}) v.add(w);
  return v;
}

EncoderHyper tiny_hyper(std::size_t vocab, std::size_t d = 8) {
  EncoderHyper h;
  h.vocab_size = vocab;
  h.max_len = 16;
  h.d_model = d;
  h.n_layers = 2;
  h.n_heads = 2;
  h.dropout = 0.1;
  return h;
}

TokenSequence random_sequence(Rng& rng, std::size_t vocab, std::size_t max_words) {
  std::uniform_int_distribution<std::size_t> len(0, max_words), tok(4, vocab - 1);
  TokenSequence s;
  s.ids.push_back(Vocabulary::kCls);
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(tok(rng));
  s.ids.push_back(Vocabulary::kSep);
  s.mask.assign(s.ids.size(), 1);
  s.max_len = 16;
  return s;
}

}  // namespace

TEST(Tokenize, MapsWordsAndSpecials) {
  Vocabulary v;
  v.add("hello");
  v.add("world");
  ASSERT_EQ(v.id("hello"), 4u);
  auto s = tokenize("Hello world", v, 8);
  EXPECT_EQ(s.ids, (std::vector<std::size_t>{2, 4, 5, 3}));
  EXPECT_EQ(s.mask, (std::vector<std::uint8_t>{1, 1, 1, 1}));
}

TEST(Tokenize, EmptyTextIsClsSep) {
  auto s = tokenize("   ", small_vocab(), 8);
  EXPECT_EQ(s.ids, (std::vector<std::size_t>{2, 3}));
}

TEST(Tokenize, TruncatesToFirstWords) {
  Vocabulary v = small_vocab();
  auto s = tokenize("a b c d", v, 4);
  EXPECT_EQ(s.ids, (std::vector<std::size_t>{2, v.id("a"), v.id("b"), 3}));
}

TEST(Tokenize, UnknownWordsMapToUnk) {
  auto s = tokenize("zebra hello", small_vocab(), 8);
  EXPECT_EQ(s.ids[1], Vocabulary::kUnk);
  EXPECT_THROW(tokenize("x", small_vocab(), 2), Error);
}

TEST(Vocab, ReservedIdsAndDenseIds) {
  Vocabulary v = build_vocabulary(std::vector<std::string>{"The cat", "the DOG"});
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(3), "[SEP]");
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.id("the"), 4u);
  EXPECT_EQ(v.id("dog"), 6u);
}

TEST(CrossSequence, JoinsWithSeparators) {
  Vocabulary v = small_vocab();
  auto a = tokenize("cat sat", v, 16);
  auto b = tokenize("dog", v, 16);
  auto j = make_cross_sequence(a, b, 16);
  EXPECT_EQ(j.ids, (std::vector<std::size_t>{2, v.id("cat"), v.id("sat"), 3, v.id("dog"), 3}));
}

TEST(CrossSequence, SplitsBudgetWhenTooLong) {
  Vocabulary v = small_vocab();
  auto a = tokenize("a b c d cat dog", v, 16);
  auto b = tokenize("hello world sat mat", v, 16);
  auto j = make_cross_sequence(a, b, 8);  // budget 5: first keeps 3, second 2
  EXPECT_EQ(j.ids, (std::vector<std::size_t>{2, v.id("a"), v.id("b"), v.id("c"), 3, v.id("hello"), v.id("world"), 3}));
  auto short_first = make_cross_sequence(tokenize("cat", v, 16), b, 8);  // 1 + 4
  EXPECT_EQ(short_first.size(), 8u);
  EXPECT_EQ(short_first.ids[3], v.id("hello"));
}

TEST(InitParams, DeterministicInSeed) {
  auto h = tiny_hyper(14);
  EXPECT_TRUE(init_params(h, 5).same_values(init_params(h, 5)));
  EXPECT_FALSE(init_params(h, 5).same_values(init_params(h, 6)));
}

TEST(InitParams, DistributionAndLayernormDefaults) {
  auto h = tiny_hyper(200, 32);
  auto p = init_params(h, 1);
  const auto w = p.at("embed.token").values();
  double m = 0, v = 0;
  for (double x : w) m += x;
  m /= static_cast<double>(w.size());
  for (double x : w) v += (x - m) * (x - m);
  v /= static_cast<double>(w.size());
  EXPECT_NEAR(std::sqrt(v), 0.02, 0.001);
  for (double g : p.at("layer1.ffn.ln.gain").values()) EXPECT_EQ(g, 1.0);
  for (double b : p.at("layer0.attn.ln.bias").values()) EXPECT_EQ(b, 0.0);
  EXPECT_NE(p.at("head.weight")[0], 0.0);
}

TEST(InitParams, RejectsIndivisibleHeads) {
  auto h = tiny_hyper(14);
  h.n_heads = 3;
  EXPECT_THROW(init_params(h, 1), Error);
}

TEST(Params, CopiesAreDeep) {
  auto p = init_params(tiny_hyper(14), 1);
  EncoderParams q = p;
  q.at("embed.token").mutable_values()[0] += 1.0;
  EXPECT_FALSE(p.same_values(q));
}

TEST(EncodeBi, FiniteForRandomInputsAtInit) {
  auto h = tiny_hyper(14);
  auto p = init_params(h, 2);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    auto s = random_sequence(rng, 14, 10);
    Tensor e = encode_bi(p, s, false, nullptr);
    ASSERT_EQ(e.numel(), h.d_model);
    for (double x : e.values()) ASSERT_TRUE(std::isfinite(x));
  }
}

TEST(EncodeBi, PaddingInvariance) {
  auto p = init_params(tiny_hyper(14), 2);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    auto s = random_sequence(rng, 14, 8);
    Tensor base = encode_bi(p, s, false, nullptr);
    for (std::size_t k = 1; k <= 4; ++k) {
      Tensor padded = encode_bi(p, pad_to(s, s.size() + k), false, nullptr);
      for (std::size_t j = 0; j < base.numel(); ++j) ASSERT_NEAR(base[j], padded[j], 1e-10);
    }
  }
}

TEST(EncodeBi, BatchIndependence) {
  auto p = init_params(tiny_hyper(14), 2);
  Rng rng(5);
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(random_sequence(rng, 14, 10));
  Tensor all = encode_bi_batch(p, batch, false, nullptr);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor one = encode_bi(p, batch[i], false, nullptr);
    for (std::size_t j = 0; j < one.numel(); ++j) ASSERT_NEAR(one[j], all[i * one.numel() + j], 1e-10);
  }
}

TEST(EncodeBi, EvalIsDeterministicTrainingIsNot) {
  auto p = init_params(tiny_hyper(14), 2);
  auto s = tokenize("cat sat mat", small_vocab(), 16);
  Tensor a = encode_bi(p, s, false, nullptr);
  Tensor b = encode_bi(p, s, false, nullptr);
  for (std::size_t j = 0; j < a.numel(); ++j) EXPECT_EQ(a[j], b[j]);
  Rng rng(1);
  Tensor c = encode_bi(p, s, true, &rng);
  Tensor d = encode_bi(p, s, true, &rng);
  double diff = 0;
  for (std::size_t j = 0; j < c.numel(); ++j) diff += std::abs(c[j] - d[j]);
  EXPECT_GT(diff, 1e-6);
}

TEST(EncodeBi, TooLongForPositionTable) {
  auto p = init_params(tiny_hyper(14), 2);
  Rng rng(1);
  TokenSequence s = random_sequence(rng, 14, 0);
  s = pad_to(s, 17);
  EXPECT_THROW(encode_bi(p, s, false, nullptr), Error);
}

TEST(EncodeCross, ScalarLogitAndZeroHead) {
  auto p = init_params(tiny_hyper(14), 2);
  Vocabulary v = small_vocab();
  auto a = tokenize("cat sat on the mat", v, 16);
  auto b = tokenize("dog", v, 16);
  Tensor l1 = encode_cross(p, a, b, 16, false, nullptr);
  Tensor l2 = encode_cross(p, b, a, 16, false, nullptr);
  EXPECT_EQ(l1.numel(), 1u);
  EXPECT_EQ(l2.numel(), 1u);
  for (double& w : p.at("head.weight").mutable_values()) w = 0.0;
  p.at("head.bias").mutable_values()[0] = 0.0;
  EXPECT_EQ(encode_cross(p, a, b, 16, false, nullptr).item(), 0.0);
  EXPECT_EQ(ad::sigmoid(encode_cross(p, a, b, 16, false, nullptr)).item(), 0.5);
}

TEST(GradCheck, EncodeBiAndCross) {
  for (std::size_t d : {8u, 16u}) {
    auto h = tiny_hyper(14, d);
    h.init_std = 0.5;
    auto p = init_params(h, 7);
    Rng rng(8);
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back(random_sequence(rng, 14, 4));
    auto joined = make_cross_sequence(seqs[0], seqs[1], 16);
    std::vector<TokenSequence> pair_batch = {joined, make_cross_sequence(seqs[2], seqs[0], 16)};
    auto f_bi = [&] {
      Rng drop(99);
      Tensor e = encode_bi_batch(p, seqs, true, &drop);
      Rng w(5);
      std::normal_distribution<double> n(0, 1);
      std::vector<double> wv(e.numel());
      for (double& x : wv) x = n(w);
      return ad::sum(ad::mul(e, Tensor::constant(e.shape(), wv)));
    };
    auto f_cross = [&] {
      Rng drop(98);
      return ad::sum(ad::sigmoid(encode_cross_batch(p, pair_batch, true, &drop)));
    };
    auto r1 = ad::grad_check(f_bi, p.tensors(), 1e-5, 1e-4);
    EXPECT_TRUE(r1.passed) << "bi d=" << d << " err " << r1.max_rel_error;
    auto r2 = ad::grad_check(f_cross, p.tensors(), 1e-5, 1e-4);
    EXPECT_TRUE(r2.passed) << "cross d=" << d << " err " << r2.max_rel_error;
  }
}

TEST(Checkpoint, RoundTripIsLosslessAtF32) {
  auto p = init_params(tiny_hyper(14), 3);
  std::stringstream buf;
  write_checkpoint(buf, p);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.substr(0, 5), "TENC1");
  EncoderParams q = read_checkpoint(buf);
  EXPECT_EQ(q.hyper().n_heads, p.hyper().n_heads);
  EXPECT_EQ(q.hyper().n_layers, p.hyper().n_layers);
  EXPECT_EQ(q.hyper().d_model, p.hyper().d_model);
  ASSERT_EQ(q.tensors().size(), p.tensors().size());
  for (std::size_t i = 0; i < p.tensors().size(); ++i) {
    const auto a = p.tensors()[i].tensor.values();
    const auto b = q.tensors()[i].tensor.values();
    for (std::size_t j = 0; j < a.size(); ++j) ASSERT_EQ(static_cast<float>(a[j]), static_cast<float>(b[j]));
  }
  std::stringstream again;
  write_checkpoint(again, q);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  std::stringstream bad("TENC2....");
  EXPECT_THROW(read_checkpoint(bad), Error);
  auto p = init_params(tiny_hyper(14), 3);
  std::stringstream buf;
  write_checkpoint(buf, p);
  std::stringstream cut(buf.str().substr(0, 100));
  EXPECT_THROW(read_checkpoint(cut), Error);
}
