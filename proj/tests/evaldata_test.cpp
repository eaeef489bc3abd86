#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "tenc/evaldata/dataset.hpp"
#include "tenc/evaldata/metrics.hpp"
#include "tenc/evaldata/report.hpp"
#include "tenc/evaldata/synthetic.hpp"
#include "tenc/encoder/tokenizer.hpp"
#include "oracles.hpp"

using namespace tenc;
using namespace tenc::evaldata;

TEST(Spearman, HandExamples) {
  EXPECT_DOUBLE_EQ(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{30, 20, 10}), -1.0);
  // ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4): 4.5 / sqrt(4.5 * 5)
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 2, 4}, std::vector<double>{1, 2, 3, 4}), 0.9486832980505138, 1e-15);
}

TEST(Spearman, ConstantInputIsAnError) {
  EXPECT_THROW(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5}), Error);
  EXPECT_THROW(spearman(std::vector<double>{1, 1}, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
}

TEST(Auc, HandExamples) {
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.1, 0.9}, std::vector<double>{1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<double>{1, 1, 0, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), 0.5);
}

TEST(Auc, SingleClassIsAnError) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 0.5}), Error);
}

TEST(Metrics, MatchBruteForceOnRandomCasesWithTies) {
  Rng rng(2024);
  int checked = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 40);
    // Coarse grids force ties in most cases.
    const double grid = c % 3 == 0 ? 0.0 : 3.0 + std::floor(uniform01(rng) * 8);
    auto draw = [&] {
      const double u = uniform01(rng);
      return grid == 0.0 ? u : std::floor(u * grid);
    };
    std::vector<double> a(n), b(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = draw();
      b[i] = draw();
      labels[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    }
    labels[0] = 1.0;
    labels[1] = 0.0;
    const bool degenerate = std::set<double>(a.begin(), a.end()).size() < 2 ||
                            std::set<double>(b.begin(), b.end()).size() < 2;
    if (!degenerate) {
      EXPECT_NEAR(spearman(a, b), oracle::spearman(a, b), 1e-12) << "case " << c;
      ++checked;
    }
    EXPECT_NEAR(auc(a, labels), oracle::auc(a, labels), 1e-12) << "case " << c;
  }
  EXPECT_GT(checked, 900);
}

TEST(Metrics, InvariantUnderIncreasingTransforms) {
  Rng rng(8);
  std::vector<double> a(50), b(50), labels(50);
  for (std::size_t i = 0; i < 50; ++i) {
    a[i] = uniform01(rng);
    b[i] = uniform01(rng) + a[i];
    labels[i] = i % 2;
  }
  std::vector<double> ta(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) ta[i] = std::exp(3.0 * a[i]) - 7.0;
  EXPECT_NEAR(spearman(a, b), spearman(ta, b), 1e-15);
  EXPECT_NEAR(auc(a, labels), auc(ta, labels), 1e-15);
}

TEST(Normalize, Examples) {
  EXPECT_DOUBLE_EQ(normalize_score(2.5, {0, 5}), 0.5);
  EXPECT_DOUBLE_EQ(normalize_score(0, {0, 5}), 0.0);
  EXPECT_DOUBLE_EQ(normalize_score(5, {0, 5}), 1.0);
  EXPECT_DOUBLE_EQ(normalize_score(5, {1, 5}), 1.0);
  bool clamped = false;
  EXPECT_DOUBLE_EQ(normalize_score(0, {1, 5}, &clamped), 0.0);
  EXPECT_TRUE(clamped);
  EXPECT_THROW(normalize_score(1, {2, 2}), Error);
}

TEST(Tsv, ValidFileWithHeader) {
  std::istringstream in("sentence1\tsentence2\tscore\na b\tc d\t5\ne f\tg h\t0\ni\tj\t2.5\n");
  auto r = read_tsv(in, TaskKind::kSimilarity, {0, 5});
  EXPECT_TRUE(r.header);
  EXPECT_TRUE(r.warnings.empty());
  ASSERT_EQ(r.pairs.size(), 3u);
  EXPECT_EQ(r.pairs[0].sent1, "a b");
  EXPECT_DOUBLE_EQ(r.pairs[0].score, 1.0);
  EXPECT_DOUBLE_EQ(r.pairs[2].score, 0.5);
}

TEST(Tsv, NoHeader) {
  std::istringstream in("a\tb\t1\nc\td\t0\ne\tf\t1\n");
  auto r = read_tsv(in, TaskKind::kBinary, {0, 1});
  EXPECT_FALSE(r.header);
  EXPECT_EQ(r.pairs.size(), 3u);
}

TEST(Tsv, MalformedLinesAreSkippedWithLineNumbers) {
  std::ostringstream os;
  os << "s1\ts2\tlabel\n";
  for (int i = 0; i < 20; ++i) os << "x" << i << "\ty" << i << "\t" << (i % 2) << "\n";
  os << "only two\tcolumns\n";             // line 22
  os << "p\tq\tnot-a-number\n";            // line 23
  std::istringstream in(os.str());
  auto r = read_tsv(in, TaskKind::kBinary, {0, 1}, "crafted.tsv");
  EXPECT_EQ(r.pairs.size(), 20u);
  EXPECT_EQ(r.malformed, 2u);
  ASSERT_EQ(r.warnings.size(), 2u);
  EXPECT_NE(r.warnings[0].find("crafted.tsv:22"), std::string::npos);
  EXPECT_NE(r.warnings[1].find("crafted.tsv:23"), std::string::npos);
}

TEST(Tsv, TooManyMalformedLinesAbort) {
  std::istringstream in("a\tb\t1\nbad line\nc\td\t0\nalso bad\n");
  EXPECT_THROW(read_tsv(in, TaskKind::kBinary, {0, 1}), Error);
  std::istringstream labels("a\tb\t1\nc\td\t0.5\n");
  EXPECT_THROW(read_tsv(labels, TaskKind::kBinary, {0, 1}), Error);
  EXPECT_THROW(load_tsv("/nonexistent/file.tsv", TaskKind::kBinary, {0, 1}), Error);
}

TEST(Tsv, WriteReadRoundTrip) {
  std::vector<LabelledPair> pairs{{"a b", "c", 0.125}, {"d", "e f", 1.0 / 3.0}};
  std::stringstream ss;
  write_tsv(ss, pairs);
  auto r = read_tsv(ss, TaskKind::kSimilarity, {0, 1});
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[1].score, 1.0 / 3.0);
  EXPECT_EQ(r.pairs[1].sent2, "e f");
}

TEST(Synthetic, DeterministicAndSplit) {
  SynthSpec s;
  s.seed = 3;
  auto a = gen_synthetic(s);
  auto b = gen_synthetic(s);
  ASSERT_EQ(a.train.size() + a.dev.size() + a.test.size(), 2000u);
  EXPECT_EQ(a.dev.size(), 300u);
  EXPECT_EQ(a.test.size(), 300u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].sent1, b.train[i].sent1);
    EXPECT_EQ(a.train[i].score, b.train[i].score);
  }
  s.seed = 4;
  EXPECT_NE(gen_synthetic(s).train[0].sent1, a.train[0].sent1);
}

TEST(Synthetic, GoldIsMixtureCosine) {
  SynthSpec s;
  s.pairs = 400;
  bool saw_one = false, saw_zero = false;
  for (const auto& p : gen_synthetic_pairs(s)) {
    EXPECT_GE(p.pair.score, 0.0);
    EXPECT_LE(p.pair.score, 1.0);
    if (p.mix1 == p.mix2) {
      EXPECT_NEAR(p.pair.score, 1.0, 1e-12);
      saw_one = true;
    }
    bool disjoint = true;
    for (std::size_t t = 0; t < p.mix1.size(); ++t) disjoint = disjoint && (p.mix1[t] == 0.0 || p.mix2[t] == 0.0);
    if (disjoint) {
      EXPECT_EQ(p.pair.score, 0.0);
      saw_zero = true;
    }
    const auto w = encoder::normalize_words(p.pair.sent1);
    EXPECT_GE(w.size(), s.min_words);
    EXPECT_LE(w.size(), s.max_words);
  }
  EXPECT_TRUE(saw_one);
  EXPECT_TRUE(saw_zero);
  EXPECT_THROW(gen_synthetic(SynthSpec{.topics = 1}), Error);
}

TEST(Synthetic, GoldTracksTokenOverlap) {
  SynthSpec s;
  const auto d = gen_synthetic(s);
  std::vector<double> gold, jac;
  for (const auto* split : {&d.train, &d.dev, &d.test}) {
    for (const auto& p : *split) {
      const auto a = encoder::normalize_words(p.sent1);
      const auto b = encoder::normalize_words(p.sent2);
      std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end()), su = sa;
      su.insert(sb.begin(), sb.end());
      std::size_t inter = 0;
      for (const auto& w : sa) inter += sb.count(w);
      gold.push_back(p.score);
      jac.push_back(static_cast<double>(inter) / static_cast<double>(su.size()));
    }
  }
  EXPECT_GT(spearman(jac, gold), 0.5);
}

TEST(Report, CsvAndTable) {
  MetricReport r;
  r.add("synthetic", "bi", MetricKind::kSpearman, 0.5, "cycle 1");
  r.add("synthetic", "cross", MetricKind::kAuc, 0.75);
  std::ostringstream csv, table;
  r.write_csv(csv);
  EXPECT_EQ(csv.str(),
            "dataset,model,metric,value,provenance\nsynthetic,bi,spearman,0.500000,cycle 1\n"
            "synthetic,cross,auc,0.750000,\n");
  r.print_table(table);
  EXPECT_NE(table.str().find("0.7500"), std::string::npos);
}
