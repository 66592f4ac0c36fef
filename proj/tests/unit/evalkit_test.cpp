#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "ppm/error.hpp"
#include "ppm/evalkit.hpp"
#include "ppm/rng.hpp"
#include "ppm_test/support.hpp"

using namespace ppm;

namespace {

// Expands a confusion matrix back into label pairs.
void from_counts(const std::vector<std::vector<std::size_t>>& counts, std::vector<std::size_t>& t,
                 std::vector<std::size_t>& p) {
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      for (std::size_t n = 0; n < counts[i][j]; ++n) {
        t.push_back(i);
        p.push_back(j);
      }
    }
  }
}

std::vector<std::string> labels(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < k; ++c) out.push_back(std::to_string(c));
  return out;
}

}  // namespace

TEST(Report, TwoClassHandExample) {
  std::vector<std::size_t> t, p;
  from_counts({{8, 2}, {1, 9}}, t, p);
  const auto r = classification_report(t, p, labels(2));
  EXPECT_NEAR(r.classes[0].precision, 8.0 / 9.0, 1e-12);
  EXPECT_NEAR(r.classes[0].recall, 0.8, 1e-12);
  EXPECT_NEAR(r.classes[0].f1, 16.0 / 19.0, 1e-12);
  EXPECT_NEAR(r.classes[1].precision, 9.0 / 11.0, 1e-12);
  EXPECT_NEAR(r.classes[1].recall, 0.9, 1e-12);
  EXPECT_NEAR(r.classes[1].f1, 0.8571428571428571, 1e-12);
  EXPECT_NEAR(r.accuracy, 0.85, 1e-12);
  const double mf1 = (16.0 / 19.0 + 6.0 / 7.0) / 2.0;
  EXPECT_NEAR(r.macro_f1, mf1, 1e-12);
  EXPECT_NEAR(r.weighted_f1, mf1, 1e-12);
  EXPECT_NEAR(r.weighted_f1, 0.8496, 5e-5);
  EXPECT_EQ(r.classes[0].support, 10u);
  EXPECT_EQ(r.total, 20u);
}

TEST(Report, PerfectPredictions) {
  for (std::size_t k = 1; k <= 5; ++k) {
    std::vector<std::size_t> t;
    for (std::size_t i = 0; i < 3 * k; ++i) t.push_back(i % k);
    const auto r = classification_report(t, t, labels(k));
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.macro_f1, 1.0);
    EXPECT_DOUBLE_EQ(r.weighted_f1, 1.0);
    for (const auto& c : r.classes) {
      EXPECT_EQ(c.precision, 1.0);
      EXPECT_EQ(c.recall, 1.0);
    }
  }
}

TEST(Report, EqualSupportsGiveEqualAverages) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = static_cast<std::size_t>(rng.uniform_int(2, 6));
    std::vector<std::size_t> t, p;
    for (std::size_t c = 0; c < k; ++c) {
      for (int i = 0; i < 8; ++i) {
        t.push_back(c);
        p.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1)));
      }
    }
    const auto r = classification_report(t, p, labels(k));
    EXPECT_NEAR(r.weighted_f1, r.macro_f1, 1e-15);
  }
}

TEST(Report, ZeroDenominatorsAreFlagged) {
  const std::vector<std::size_t> t{0, 0, 1};
  const std::vector<std::size_t> p{0, 0, 0};
  const auto r = classification_report(t, p, labels(3));
  EXPECT_TRUE(r.classes[1].precision_undefined);
  EXPECT_FALSE(r.classes[1].recall_undefined);
  EXPECT_TRUE(r.classes[1].f1_undefined);
  EXPECT_EQ(r.classes[1].precision, 0.0);
  EXPECT_TRUE(r.classes[2].precision_undefined);
  EXPECT_TRUE(r.classes[2].recall_undefined);
  EXPECT_EQ(r.classes[2].support, 0u);
  EXPECT_NE(r.render_text().find("* zero denominator"), std::string::npos);
}

TEST(Report, InputErrors) {
  const std::vector<std::size_t> none;
  EXPECT_THROW(classification_report(none, none, labels(2)), ValidityError);
  const std::vector<std::size_t> a{0, 1};
  const std::vector<std::size_t> b{0};
  EXPECT_THROW(classification_report(a, b, labels(2)), ContractError);
  const std::vector<std::size_t> out_of_range{0, 3};
  EXPECT_THROW(classification_report(a, out_of_range, labels(2)), ContractError);
}

TEST(Report, SingleClass) {
  const std::vector<std::size_t> t{0, 0, 0};
  const auto r = classification_report(t, t, {"only"});
  ASSERT_EQ(r.classes.size(), 1u);
  const std::string text = r.render_text();
  std::istringstream in(text);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  ASSERT_EQ(rows.size(), 5u);  // header, one class, Acc, MF1, WF1
  EXPECT_EQ(rows[1].rfind("only", 0), 0u);
  EXPECT_EQ(rows[2].rfind("Acc", 0), 0u);
  EXPECT_EQ(rows[3].rfind("MF1", 0), 0u);
  EXPECT_EQ(rows[4].rfind("WF1", 0), 0u);
}

TEST(Report, RendersPublishedColumnLayout) {
  ClassificationReport r;
  ClassMetrics m;
  m.label = "1";
  m.precision = 0.8095;
  m.recall = 0.9770;
  m.f1 = 0.8854;
  m.support = 174;
  r.classes.push_back(m);
  r.total = 174;
  const std::string text = r.render_text("B-LSTM");
  EXPECT_EQ(text.rfind("B-LSTM\n", 0), 0u);
  const auto row_start = text.find("\n1 ");
  ASSERT_NE(row_start, std::string::npos);
  const std::string row = text.substr(row_start + 1, text.find('\n', row_start + 1) - row_start - 1);
  const auto pp = row.find("0.8095");
  const auto rp = row.find("0.9770");
  const auto fp = row.find("0.8854");
  const auto sp = row.find("174");
  ASSERT_NE(pp, std::string::npos);
  EXPECT_LT(pp, rp);
  EXPECT_LT(rp, fp);
  EXPECT_LT(fp, sp);
}

TEST(Report, JsonRoundTrip) {
  std::vector<std::size_t> t, p;
  from_counts({{5, 1, 0}, {2, 3, 1}, {0, 0, 0}}, t, p);
  const auto r = classification_report(t, p, {"a", "b", "c"});
  const auto back = ClassificationReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.weighted_f1, r.weighted_f1);
  EXPECT_TRUE(back.classes[2].recall_undefined);
}

TEST(Confusion, CountsAndCsv) {
  const std::vector<std::size_t> t{0, 0, 1, 1, 1};
  const std::vector<std::size_t> p{0, 1, 1, 1, 0};
  const auto cm = confusion_matrix(t, p, {"x", "y"});
  EXPECT_EQ(cm.counts, (std::vector<std::vector<std::size_t>>{{1, 1}, {1, 2}}));
  EXPECT_EQ(cm.total(), 5u);
  EXPECT_EQ(cm.support(1), 3u);
  const std::string csv = cm.to_csv();
  EXPECT_NE(csv.find("x,1,1"), std::string::npos) << csv;
  EXPECT_NE(csv.find("y,1,2"), std::string::npos) << csv;
  EXPECT_DOUBLE_EQ(accuracy(t, p), 0.6);
}

TEST(ReportProperty, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 200));
    std::vector<std::size_t> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
      p[i] = rng.bernoulli(0.6) ? t[i] : static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
    }
    const auto r = classification_report(t, p, labels(k));
    EXPECT_EQ(ppm_test::compare_with_oracle(r, ppm_test::oracle_metrics(t, p, k)), "") << "trial " << trial;

    double lo = 1.0, hi = 0.0, weighted_recall = 0.0;
    for (const auto& c : r.classes) {
      lo = std::min(lo, c.f1);
      hi = std::max(hi, c.f1);
      weighted_recall += static_cast<double>(c.support) * c.recall;
    }
    EXPECT_GE(r.weighted_f1, lo - 1e-12);
    EXPECT_LE(r.weighted_f1, hi + 1e-12);
    EXPECT_GE(r.macro_f1, lo - 1e-12);
    EXPECT_LE(r.macro_f1, hi + 1e-12);
    EXPECT_NEAR(r.accuracy, weighted_recall / static_cast<double>(n), 1e-12);
  }
}
