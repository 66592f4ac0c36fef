#include <gtest/gtest.h>

#include <set>

#include "ppm/encode.hpp"
#include "ppm/error.hpp"
#include "ppm/synth.hpp"
#include "ppm_test/support.hpp"

using namespace ppm;
using ppm_test::log_from_csv;

namespace {

SchemaSpec schema() {
  return SchemaSpec::from_json(nlohmann::json::parse(R"({"attributes": [
    {"name": "cost", "kind": "numeric", "level": "event_universal"},
    {"name": "kind", "kind": "categorical", "level": "event_universal"},
    {"name": "dose", "kind": "numeric", "level": "event_specific"},
    {"name": "org", "kind": "categorical", "level": "event_specific"},
    {"name": "age", "kind": "numeric", "level": "case"},
    {"name": "tier", "kind": "categorical", "level": "case"}
  ]})"));
}

// c1..c3 are training cases; c4 carries unseen or missing values.
const char* kCsv =
    "case_id,activity,start_ts,end_ts,outcome,cost,kind,dose,org,age,tier\n"
    "c1,A,2020-01-01T10:00:00,2020-01-01T10:10:00,y,0,b,1,b,0,gold\n"
    "c1,B,2020-01-01T10:20:00,2020-01-01T10:20:00,y,10,a,,,0,gold\n"
    "c2,C,2020-01-01T11:00:00,2020-01-01T11:01:00,n,4,c,3,a,4,silver\n"
    "c3,A,2020-01-01T12:00:00,2020-01-01T12:02:00,n,5,b,7,c,2,\n"
    "c4,Z,2020-01-01T13:00:00,2020-01-01T13:00:00,n,20,q,,zz,2,\n";

const LayoutSlice& slice(const std::vector<LayoutSlice>& layout, const std::string& name) {
  for (const auto& s : layout) {
    if (s.attribute == name) return s;
  }
  throw std::runtime_error("no slice " + name);
}

const AttributeEncoding& enc(const std::vector<AttributeEncoding>& list, const std::string& name) {
  for (const auto& e : list) {
    if (e.name == name) return e;
  }
  throw std::runtime_error("no encoding " + name);
}

struct Fitted {
  EventLog log = log_from_csv(kCsv, schema());
  EncoderSpec spec = fit_encoders(log, {"c1", "c2", "c3"});
  const Case& get(const char* id) const { return *log.find_case(id); }
};

}  // namespace

TEST(FitEncoders, NumericOrderStatistics) {
  Fitted f;
  const auto& dose = enc(f.spec.specific, "dose");
  EXPECT_EQ(dose.stats.min, 1.0);
  EXPECT_EQ(dose.stats.max, 7.0);
  EXPECT_EQ(dose.stats.median, 3.0);
}

TEST(FitEncoders, CategoriesAreLexicographic) {
  Fitted f;
  EXPECT_EQ(enc(f.spec.specific, "org").categories, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(f.spec.activity.categories, (std::vector<std::string>{"A", "B", "C"}));
}

TEST(FitEncoders, LayoutIsActivitySpecificUniversalAndCoversWidth) {
  Fitted f;
  ASSERT_FALSE(f.spec.event_layout.empty());
  EXPECT_EQ(f.spec.event_layout.front().attribute, "activity");
  std::size_t next = 0;
  for (const auto& s : f.spec.event_layout) {
    EXPECT_EQ(s.offset, next);
    next += s.width;
  }
  EXPECT_EQ(next, f.spec.event_width);
  EXPECT_LT(slice(f.spec.event_layout, "dose").offset, slice(f.spec.event_layout, "cost").offset);
  EXPECT_EQ(f.spec.event_layout.back().attribute, kDurationAttribute);
}

TEST(FitEncoders, SingleCaseTrainingEngagesConstantHandling) {
  Fitted f;
  const EncoderSpec one = fit_encoders(f.log, {"c2"});
  const auto& cost = enc(one.universal, "cost");
  EXPECT_TRUE(cost.stats.constant());
  EXPECT_FALSE(one.warnings.empty());
  const Vector v = encode_event(f.get("c1").events[0], one);
  EXPECT_EQ(v(static_cast<Eigen::Index>(slice(one.event_layout, "cost").offset)), 0.0);
}

TEST(FitEncoders, EmptyTrainingSetIsValidityError) {
  Fitted f;
  EXPECT_THROW(fit_encoders(f.log, {}), ValidityError);
  EXPECT_THROW(fit_encoders(f.log, {"nope"}), ValidityError);
}

TEST(EncodeEvent, OneHotBlock) {
  Fitted f;
  const Vector v = encode_event(f.get("c1").events[0], f.spec);  // org = b
  const auto& s = slice(f.spec.event_layout, "org");
  ASSERT_EQ(s.width, 3u);
  const Vector expected = (Vector(3) << 0, 1, 0).finished();
  EXPECT_EQ(Vector(v.segment(static_cast<Eigen::Index>(s.offset), 3)), expected);
}

TEST(EncodeEvent, MinMaxMidpoint) {
  Fitted f;  // cost fitted on {0, 10, 4, 5}
  const Vector v = encode_event(f.get("c3").events[0], f.spec);
  EXPECT_DOUBLE_EQ(v(static_cast<Eigen::Index>(slice(f.spec.event_layout, "cost").offset)), 0.5);
}

TEST(EncodeEvent, MissingNumericTakesScaledMedian) {
  Fitted f;  // dose (1, 7, median 3); c1's B event has no dose
  const Vector v = encode_event(f.get("c1").events[1], f.spec);
  EXPECT_NEAR(v(static_cast<Eigen::Index>(slice(f.spec.event_layout, "dose").offset)), (3.0 - 1.0) / 6.0, 1e-15);
}

TEST(EncodeEvent, MissingAndUnseenCategoricalsArePadding) {
  Fitted f;
  UnseenTally tally;
  const Case& c4 = f.get("c4");
  const Vector v = encode_event(c4.events[0], f.spec, &tally);
  for (const char* name : {"activity", "kind", "org"}) {
    const auto& s = slice(f.spec.event_layout, name);
    for (std::size_t k = 0; k < s.width; ++k) EXPECT_EQ(v(static_cast<Eigen::Index>(s.offset + k)), kPaddingToken);
  }
  EXPECT_EQ(tally["activity"], 1u);
  EXPECT_EQ(tally["kind"], 1u);
  EXPECT_EQ(tally["org"], 1u);
  // out-of-range numerics clamp
  EXPECT_EQ(v(static_cast<Eigen::Index>(slice(f.spec.event_layout, "cost").offset)), 1.0);
}

TEST(EncodeEvent, DurationIsUniversalNumeric) {
  Fitted f;  // durations 10, 0, 1, 2
  const Vector v = encode_event(f.get("c2").events[0], f.spec);
  EXPECT_DOUBLE_EQ(v(static_cast<Eigen::Index>(slice(f.spec.event_layout, kDurationAttribute).offset)), 0.1);
}

TEST(EncodeCaseAttrs, SpecExamples) {
  Fitted f;  // age fitted on {0, 4, 2}; tier on {gold, silver}
  const Vector c2 = encode_case_attrs(f.get("c3"), f.spec);
  EXPECT_DOUBLE_EQ(c2(static_cast<Eigen::Index>(slice(f.spec.case_layout, "age").offset)), 0.5);
  const auto& tier = slice(f.spec.case_layout, "tier");
  ASSERT_EQ(tier.width, 2u);
  const Vector silver = encode_case_attrs(f.get("c2"), f.spec);
  EXPECT_EQ(silver(static_cast<Eigen::Index>(tier.offset)), 0.0);
  EXPECT_EQ(silver(static_cast<Eigen::Index>(tier.offset + 1)), 1.0);
  EXPECT_EQ(c2(static_cast<Eigen::Index>(tier.offset)), -1.0);
  EXPECT_EQ(c2(static_cast<Eigen::Index>(tier.offset + 1)), -1.0);
}

TEST(EncoderSpec, JsonRoundTrip) {
  Fitted f;
  const EncoderSpec back = EncoderSpec::from_json(f.spec.to_json());
  EXPECT_EQ(back.to_json(), f.spec.to_json());
  for (const auto& c : f.log.cases()) {
    for (const auto& e : c.events) EXPECT_EQ(encode_event(e, back), encode_event(e, f.spec));
  }
}

TEST(EncodeProperty, TrainingEventsStayInRangeAndBlocksAreWellFormed) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec spec = SynthSpec::preset("patients");
    spec.n_cases = 60;
    spec.seed = seed;
    const EventLog log = generate_synthetic(spec);
    std::set<std::string> train;
    for (std::size_t i = 0; i < log.cases().size(); i += 2) train.insert(log.cases()[i].case_id);
    const EncoderSpec es = fit_encoders(log, train);
    auto kind_of = [&](const std::string& name) {
      if (name == "activity") return AttrKind::kCategorical;
      if (name == kDurationAttribute) return AttrKind::kNumeric;
      return log.schema().find(name)->kind;
    };
    for (const auto& c : log.cases()) {
      if (!train.count(c.case_id)) continue;
      for (const auto& e : c.events) {
        const Vector v = encode_event(e, es);
        EXPECT_EQ(v, encode_event(e, es));
        for (const auto& s : es.event_layout) {
          const auto seg = v.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.width));
          if (kind_of(s.attribute) == AttrKind::kNumeric) {
            EXPECT_GE(seg(0), 0.0);
            EXPECT_LE(seg(0), 1.0);
          } else if (seg(0) == kPaddingToken) {
            EXPECT_TRUE((seg.array() == kPaddingToken).all());
          } else {
            EXPECT_EQ(seg.sum(), 1.0);
            EXPECT_TRUE(((seg.array() == 0.0) || (seg.array() == 1.0)).all());
          }
        }
      }
    }
  }
}
