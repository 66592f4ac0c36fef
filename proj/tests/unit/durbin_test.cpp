#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ppm/durbin.hpp"
#include "ppm/error.hpp"
#include "ppm/rng.hpp"
#include "ppm_test/support.hpp"

using namespace ppm;
using ppm_test::log_from_csv;

namespace {

BinningParams params(std::int64_t t_cut, int n_quant, int max_iterations = 10) {
  BinningParams p;
  p.t_cut = t_cut;
  p.n_quant = n_quant;
  p.max_iterations = max_iterations;
  return p;
}

std::vector<std::int64_t> random_durations(Rng& rng) {
  std::vector<std::int64_t> d;
  const auto n = rng.uniform_int(1, 120);
  const bool skewed = rng.bernoulli(0.3);
  for (std::int64_t i = 0; i < n; ++i) {
    if (skewed && rng.bernoulli(0.7)) {
      d.push_back(rng.uniform_int(8, 10));
    } else {
      d.push_back(static_cast<std::int64_t>(std::floor(-40.0 * std::log(1.0 - rng.uniform()))));
    }
  }
  return d;
}

}  // namespace

TEST(AssignBin, UniqueBinBelowCut) {
  const std::vector<std::int64_t> d{0, 1, 3, 3, 10, 20};
  const auto b = fit_duration_bins(d, params(5, 1));
  EXPECT_EQ(assign_bin(3, b), b.unique_bins.at(3));
  EXPECT_EQ(b.unique_bin_count(), 3u);
}

TEST(AssignBin, ZeroNonZeroPreset) {
  const std::vector<std::int64_t> d{0, 0, 0, 4, 17, 90};
  const auto b = fit_duration_bins(d, BinningParams::preset("bpi12"));
  EXPECT_EQ(b.bin_count, 2u);
  EXPECT_EQ(assign_bin(0, b), 0u);
  EXPECT_EQ(assign_bin(17, b), 1u);
  EXPECT_EQ(assign_bin(1000, b), 1u);
}

TEST(AssignBin, MedianSplit) {
  const std::vector<std::int64_t> d{10, 20, 30, 40};
  const auto b = fit_duration_bins(d, params(0, 2));
  EXPECT_EQ(b.quantile_edges, (std::vector<double>{10, 25, 40}));
  EXPECT_EQ(assign_bin(20, b), 0u);
  EXPECT_EQ(assign_bin(30, b), 1u);
  EXPECT_EQ(assign_bin(25, b), 1u);  // half-open
  EXPECT_EQ(assign_bin(400, b), 1u);
}

TEST(AssignBin, NegativeIsValidityError) {
  const std::vector<std::int64_t> d{1, 2};
  const auto b = fit_duration_bins(d, params(5, 2));
  EXPECT_THROW(assign_bin(-1, b), ValidityError);
}

TEST(FitDurationBins, AllBelowCut) {
  const std::vector<std::int64_t> d{0, 1, 2, 2, 4};
  const auto b = fit_duration_bins(d, params(5, 24));
  EXPECT_EQ(b.quantile_bin_count(), 0u);
  EXPECT_EQ(b.iterations, 1);
  EXPECT_TRUE(b.balanced);
  EXPECT_EQ(b.bin_count, 4u);
}

TEST(FitDurationBins, UniquePlusBalancedQuantiles) {
  const std::vector<std::int64_t> d{0, 1, 2, 10, 20, 30, 40};
  const auto b = fit_duration_bins(d, params(3, 2));
  EXPECT_EQ(b.unique_bin_count(), 3u);
  EXPECT_EQ(b.quantile_bin_count(), 2u);
  EXPECT_EQ(b.frequencies, (std::vector<std::size_t>{1, 1, 1, 2, 2}));
  EXPECT_TRUE(b.balanced);
  EXPECT_EQ(b.iterations, 1);
}

TEST(FitDurationBins, DuplicateCutsAreDropped) {
  std::vector<std::int64_t> d(9, 10);
  d.push_back(100);
  // Every interior cut but one lands on 10 = lo and is dropped.
  EXPECT_EQ(quantile_edges(d, 24), (std::vector<double>{10, 55, 100}));
  const auto b = fit_duration_bins(d, params(0, 24, 1));
  EXPECT_EQ(b.bin_count, 2u);
  EXPECT_EQ(b.frequencies, (std::vector<std::size_t>{9, 1}));
  EXPECT_FALSE(b.balanced);
}

TEST(FitDurationBins, EmptyIsValidityError) {
  EXPECT_THROW(fit_duration_bins(std::vector<std::int64_t>{}, params(5, 2)), ValidityError);
}

TEST(FitDurationBins, ImbalanceHalvesThenRaisesCut) {
  std::vector<std::int64_t> d(30, 5);
  for (int i = 0; i < 30; ++i) d.push_back(6 + i);
  const auto b = fit_duration_bins(d, params(5, 8, 3));
  int iterations = 0;
  const auto o = ppm_test::oracle_fit_bins(d, params(5, 8, 3), iterations);
  EXPECT_EQ(b.iterations, iterations);
  EXPECT_EQ(b.quantile_edges, o.edges);
  EXPECT_EQ(b.bin_count, o.bins);
}

TEST(CoefficientOfVariation, Basics) {
  EXPECT_EQ(coefficient_of_variation(std::vector<std::size_t>{5}), 0.0);
  EXPECT_EQ(coefficient_of_variation(std::vector<std::size_t>{3, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(coefficient_of_variation(std::vector<std::size_t>{1, 3}), 0.5);
}

TEST(DurationBinning, JsonRoundTrip) {
  const std::vector<std::int64_t> d{0, 1, 2, 10, 20, 30, 40, 41, 300};
  const auto b = fit_duration_bins(d, params(3, 3));
  const auto back = DurationBinning::from_json(b.to_json());
  EXPECT_EQ(back.to_json(), b.to_json());
}

TEST(BinningProperty, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_durations(rng);
    const auto t_cut = rng.uniform_int(0, 6);
    const int n_quant = static_cast<int>(rng.uniform_int(1, 30));
    const auto b = fit_duration_bins(d, params(t_cut, n_quant, 1));
    const auto o = ppm_test::oracle_bins(d, t_cut, n_quant);
    ASSERT_EQ(b.bin_count, o.bins) << "trial " << trial;
    ASSERT_EQ(b.quantile_edges, o.edges) << "trial " << trial;
    std::size_t total = 0;
    for (auto f : b.frequencies) total += f;
    EXPECT_EQ(total, d.size());
    for (auto x : d) ASSERT_EQ(assign_bin(x, b), o.assign(x)) << "duration " << x;
    for (std::size_t i = 1; i < b.quantile_edges.size(); ++i) EXPECT_LT(b.quantile_edges[i - 1], b.quantile_edges[i]);
  }
}

TEST(BinningProperty, LoopMatchesOracleLoop) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_durations(rng);
    const auto p = params(rng.uniform_int(0, 6), static_cast<int>(rng.uniform_int(1, 30)));
    int iterations = 0;
    const auto o = ppm_test::oracle_fit_bins(d, p, iterations);
    const auto b = fit_duration_bins(d, p);
    EXPECT_EQ(b.iterations, iterations);
    EXPECT_EQ(b.quantile_edges, o.edges);
    EXPECT_EQ(b.bin_count, o.bins);
  }
}

// ---------------------------------------------------------------------------

namespace {

const char* kTwoCases =
    "case_id,activity,start_ts,end_ts,outcome\n"
    "c1,A,2020-01-01T10:00:00,2020-01-01T10:00:00,y\n"
    "c1,B,2020-01-01T10:01:00,2020-01-01T10:01:00,y\n"
    "c2,A,2020-01-01T11:00:00,2020-01-01T11:00:00,n\n"
    "c2,C,2020-01-01T11:01:00,2020-01-01T11:01:00,n\n";

}  // namespace

TEST(PseudoEmbedding, SingleEventCorpus) {
  const auto log = log_from_csv(
      "case_id,activity,start_ts,end_ts,outcome\n"
      "c1,A,2020-01-01T10:00:00,2020-01-01T10:00:00,y\n");
  const auto b = fit_duration_bins(std::vector<std::int64_t>{0}, BinningParams::preset("bpi12"));
  const auto emb = build_pseudo_embedding(log, b, {"c1"});
  ASSERT_EQ(emb.vocabulary().size(), 1u);
  const double expected = std::log(0.5) + 1.0;
  EXPECT_NEAR(expected, 0.3069, 1e-4);
  EXPECT_DOUBLE_EQ(emb.case_matrix("c1")(0, 0), expected);
  const Vector v = event_pseudo_vector(log.cases()[0].events[0], "c1", emb);
  ASSERT_EQ(v.size(), static_cast<Eigen::Index>(b.bin_count));
  EXPECT_DOUBLE_EQ(v(0), expected);
}

TEST(PseudoEmbedding, SharedTermAcrossTwoCases) {
  const auto log = log_from_csv(kTwoCases);
  const auto b = fit_duration_bins(std::vector<std::int64_t>{0, 0, 0, 0}, BinningParams::preset("bpi12"));
  const auto emb = build_pseudo_embedding(log, b, {"c1", "c2"});
  const double idf = std::log(2.0 / 3.0) + 1.0;
  EXPECT_NEAR(idf, 0.5945, 1e-4);
  const auto row_a = emb.activity_row("A");
  EXPECT_DOUBLE_EQ(emb.case_matrix("c1")(row_a, 0), 0.5 * idf);
  EXPECT_DOUBLE_EQ(emb.case_matrix("c2")(row_a, 0), 0.5 * idf);
  EXPECT_NEAR(0.5 * idf, 0.2973, 1e-4);
  // C never occurs in c1
  EXPECT_EQ(emb.case_matrix("c1")(emb.activity_row("C"), 0), 0.0);
}

TEST(PseudoEmbedding, UnseenActivityAndOutOfVocabulary) {
  const auto log = log_from_csv(kTwoCases);
  const auto b = fit_duration_bins(std::vector<std::int64_t>{0, 0}, BinningParams::preset("bpi12"));
  const auto emb = build_pseudo_embedding(log, b, {"c1"});
  EXPECT_EQ(emb.activity_row("C"), -1);
  const Vector v = event_pseudo_vector(log.find_case("c2")->events[1], "c2", emb);
  EXPECT_TRUE(v.isZero());
  EXPECT_EQ(v.size(), static_cast<Eigen::Index>(b.bin_count));
}

TEST(PseudoEmbedding, JsonAndCsv) {
  const auto log = log_from_csv(kTwoCases);
  const auto b = fit_duration_bins(std::vector<std::int64_t>{0, 0, 3}, BinningParams::preset("bpi12"));
  const auto emb = build_pseudo_embedding(log, b, {"c1", "c2"});
  const auto back = PseudoEmbedding::from_json(emb.to_json());
  EXPECT_EQ(back.to_json(), emb.to_json());
  std::ostringstream csv;
  emb.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, 26), "case_id,activity,bin,tfidf");
}

TEST(TfidfProperty, MatchesNaiveOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto log = ppm_test::random_duration_log(rng, 12, 5, 8);
    const auto train = ppm_test::random_train_ids(log, rng);
    const auto b = fit_duration_bins(ppm_test::durations_of(log, train), params(3, 4));
    EXPECT_EQ(ppm_test::tfidf_mismatches(log, b, train), "") << "trial " << trial;
  }
}
