#include <gtest/gtest.h>

#include <sstream>

#include "ppm/csv.hpp"
#include "ppm/error.hpp"
#include "ppm/eventlog.hpp"
#include "ppm/rng.hpp"
#include "ppm/timestamp.hpp"
#include "ppm_test/support.hpp"

using namespace ppm;
using ppm_test::log_from_csv;

namespace {

Timestamp ts(const char* text) { return *Timestamp::parse(text); }

SchemaSpec schema_with_attrs() {
  return SchemaSpec::from_json(nlohmann::json::parse(R"({"attributes": [
    {"name": "cost", "kind": "numeric", "level": "event_universal"},
    {"name": "org", "kind": "categorical", "level": "event_specific"},
    {"name": "age", "kind": "numeric", "level": "case"}
  ]})"));
}

}  // namespace

TEST(Timestamp, ParsesIsoVariants) {
  EXPECT_EQ(ts("1970-01-01T00:00:00").epoch_ms(), 0);
  EXPECT_EQ(ts("1970-01-01 00:01:00Z").epoch_ms(), 60000);
  EXPECT_EQ(ts("2012-01-01T00:00:00.250").epoch_ms(), 1325376000250LL);
  EXPECT_FALSE(Timestamp::parse("2012-13-01T00:00:00"));
  EXPECT_FALSE(Timestamp::parse("yesterday"));
}

TEST(Timestamp, FormatRoundTrips) {
  for (const char* s : {"2012-01-01T00:00:00", "1999-12-31T23:59:59.5", "2024-02-29T12:00:00"}) {
    const Timestamp t = ts(s);
    EXPECT_EQ(Timestamp::parse(t.to_iso8601())->epoch_ms(), t.epoch_ms()) << s;
  }
}

TEST(ComputeDuration, SpecExamples) {
  EXPECT_EQ(compute_duration(ts("2020-01-01T10:00:00"), ts("2020-01-01T10:04:31")), 5);
  EXPECT_EQ(compute_duration(ts("2020-01-01T10:00:00"), ts("2020-01-01T10:00:20")), 0);
  EXPECT_EQ(compute_duration(ts("2020-01-01T10:00:00"), ts("2020-01-01T10:00:00")), 0);
}

TEST(ComputeDuration, HalfMinuteRoundsAwayFromZero) {
  EXPECT_EQ(compute_duration(ts("2020-01-01T10:00:00"), ts("2020-01-01T10:00:30")), 1);
  EXPECT_EQ(compute_duration(ts("2020-01-01T10:00:00"), ts("2020-01-01T10:00:29.999")), 0);
  EXPECT_EQ(compute_duration(ts("2020-01-01T10:00:00"), ts("2020-01-01T10:02:30")), 3);
}

TEST(ComputeDuration, EndBeforeStartIsValidityError) {
  EXPECT_THROW(compute_duration(ts("2020-01-01T10:00:01"), ts("2020-01-01T10:00:00")), ValidityError);
}

TEST(Csv, QuotedFieldsAndEscapes) {
  std::istringstream in("a,b\n\"x,1\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",z\n");
  const auto rows = csv::read(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "x,1");
  EXPECT_EQ(rows[1][1], "say \"hi\"");
  EXPECT_EQ(rows[2][0], "multi\nline");
  EXPECT_EQ(csv::escape("plain"), "plain");
  EXPECT_EQ(csv::escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv::escape("q\""), "\"q\"\"\"");
}

TEST(ParseEventLog, TwoRowsOneCase) {
  const auto log = log_from_csv(
      "case_id,activity,start_ts,end_ts,outcome\n"
      "c1,A,2020-01-01T10:00:00,2020-01-01T10:01:00,yes\n"
      "c1,B,2020-01-01T10:02:00,2020-01-01T10:05:00,yes\n");
  ASSERT_EQ(log.cases().size(), 1u);
  const Case& c = log.cases()[0];
  ASSERT_EQ(c.events.size(), 2u);
  EXPECT_EQ(c.events[0].activity, "A");
  EXPECT_EQ(c.events[1].activity, "B");
  EXPECT_EQ(c.events[1].duration_min, 3);
  EXPECT_EQ(c.outcome, "yes");
  EXPECT_EQ(log.label_set(), std::vector<std::string>{"yes"});
}

TEST(ParseEventLog, OutOfOrderRowsAreSortedByStart) {
  const auto log = log_from_csv(
      "case_id,activity,start_ts,end_ts,outcome\n"
      "c1,C,2020-01-01T12:00:00,2020-01-01T12:00:00,n\n"
      "c1,A,2020-01-01T10:00:00,2020-01-01T10:00:00,n\n"
      "c1,B,2020-01-01T11:00:00,2020-01-01T11:00:00,n\n");
  const auto& ev = log.cases()[0].events;
  EXPECT_EQ(ev[0].activity, "A");
  EXPECT_EQ(ev[1].activity, "B");
  EXPECT_EQ(ev[2].activity, "C");
}

TEST(ParseEventLog, ConflictingOutcomesIsIntegrityError) {
  EXPECT_THROW(log_from_csv("case_id,activity,start_ts,end_ts,outcome\n"
                            "c1,A,2020-01-01T10:00:00,2020-01-01T10:01:00,yes\n"
                            "c1,B,2020-01-01T10:02:00,2020-01-01T10:05:00,no\n"),
               IntegrityError);
}

TEST(ParseEventLog, MalformedTimestampNamesTheRow) {
  try {
    log_from_csv("case_id,activity,start_ts,end_ts,outcome\n"
                 "c1,A,2020-01-01T10:00:00,2020-01-01T10:01:00,yes\n"
                 "c1,B,not-a-time,2020-01-01T10:05:00,yes\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
}

TEST(ParseEventLog, UnknownColumnIsSchemaError) {
  EXPECT_THROW(log_from_csv("case_id,activity,start_ts,end_ts,outcome,mystery\n"
                            "c1,A,2020-01-01T10:00:00,2020-01-01T10:01:00,yes,1\n"),
               SchemaError);
}

TEST(ParseEventLog, MissingDeclaredColumnIsSchemaError) {
  EXPECT_THROW(log_from_csv("case_id,activity,start_ts,end_ts,outcome\n"
                            "c1,A,2020-01-01T10:00:00,2020-01-01T10:01:00,yes\n",
                            schema_with_attrs()),
               SchemaError);
}

TEST(ParseEventLog, EndBeforeStartIsValidityError) {
  EXPECT_THROW(log_from_csv("case_id,activity,start_ts,end_ts,outcome\n"
                            "c1,A,2020-01-01T10:00:00,2020-01-01T09:00:00,yes\n"),
               ValidityError);
}

TEST(ParseEventLog, AttributesByLevel) {
  const auto log = log_from_csv(
      "case_id,activity,start_ts,end_ts,outcome,cost,org,age\n"
      "c1,A,2020-01-01T10:00:00,2020-01-01T10:01:00,y,3.5,,40\n"
      "c1,B,2020-01-01T10:02:00,2020-01-01T10:05:00,y,1,north,40\n",
      schema_with_attrs());
  const Case& c = log.cases()[0];
  EXPECT_EQ(std::get<double>(c.events[0].universal_attrs.at("cost")), 3.5);
  EXPECT_FALSE(c.events[0].specific_attrs.at("org").has_value());
  EXPECT_EQ(std::get<std::string>(*c.events[1].specific_attrs.at("org")), "north");
  EXPECT_EQ(std::get<double>(*c.case_attrs.at("age")), 40.0);
}

TEST(OrderEvents, SpecExamples) {
  auto make = [](std::vector<std::pair<int, int>> start_end) {
    std::vector<Event> evs;
    std::size_t i = 0;
    for (auto [s, e] : start_end) {
      Event ev;
      ev.start_ts = Timestamp(s * 60000LL);
      ev.end_ts = Timestamp(e * 60000LL);
      ev.file_order = i++;
      evs.push_back(ev);
    }
    return evs;
  };
  EXPECT_EQ(canonical_order(make({{5, 5}, {1, 1}, {3, 3}})), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(canonical_order(make({{0, 9}, {0, 4}})), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(canonical_order(make({{1, 2}, {2, 3}, {3, 4}})), (std::vector<std::size_t>{0, 1, 2}));
  // full ties fall back to file order
  EXPECT_EQ(canonical_order(make({{1, 2}, {1, 2}})), (std::vector<std::size_t>{0, 1}));
}

TEST(OrderEvents, IdempotentPermutationProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Case c;
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    for (int i = 0; i < n; ++i) {
      Event e;
      const auto s = rng.uniform_int(0, 5);
      e.start_ts = Timestamp(s * 60000);
      e.end_ts = Timestamp((s + rng.uniform_int(0, 5)) * 60000);
      e.activity = "A" + std::to_string(i);
      e.file_order = static_cast<std::size_t>(i);
      c.events.push_back(e);
    }
    const Case once = order_events(c);
    const Case twice = order_events(once);
    ASSERT_EQ(once.events.size(), c.events.size());
    std::multiset<std::string> before, after;
    for (const auto& e : c.events) before.insert(e.activity);
    for (std::size_t i = 0; i < once.events.size(); ++i) {
      after.insert(once.events[i].activity);
      EXPECT_EQ(once.events[i].activity, twice.events[i].activity);
      if (i > 0) {
        const auto& p = once.events[i - 1];
        const auto& q = once.events[i];
        EXPECT_TRUE(p.start_ts < q.start_ts || (p.start_ts == q.start_ts && p.end_ts <= q.end_ts));
      }
    }
    EXPECT_EQ(before, after);
  }
}

TEST(EventLogProperty, RoundTripAndDurations) {
  Rng rng(5);
  const auto schema = schema_with_attrs();
  for (int trial = 0; trial < 30; ++trial) {
    std::ostringstream csv;
    csv << "case_id,activity,start_ts,end_ts,outcome,cost,org,age\n";
    const int cases = static_cast<int>(rng.uniform_int(1, 6));
    for (int c = 0; c < cases; ++c) {
      const int n = static_cast<int>(rng.uniform_int(1, 5));
      const std::string outcome = rng.bernoulli(0.5) ? "pos" : "neg";
      const auto age = rng.uniform_int(20, 80);
      for (int i = 0; i < n; ++i) {
        const std::int64_t start = 1600000000000LL + rng.uniform_int(0, 100000) * 1000;
        const std::int64_t end = start + rng.uniform_int(0, 20000) * 1000 + rng.uniform_int(0, 999);
        csv << "case" << c << ",A" << rng.uniform_int(0, 3) << ',' << Timestamp(start).to_iso8601() << ','
            << Timestamp(end).to_iso8601() << ',' << outcome << ',' << rng.uniform_int(0, 100) << ','
            << (rng.bernoulli(0.5) ? "x" : "") << ',' << age << '\n';
      }
    }
    const EventLog first = log_from_csv(csv.str(), schema);
    for (const auto& c : first.cases()) {
      for (const auto& e : c.events) {
        const double minutes = static_cast<double>(e.end_ts.epoch_ms() - e.start_ts.epoch_ms()) / 60000.0;
        EXPECT_EQ(e.duration_min, static_cast<std::int64_t>(std::floor(minutes + 0.5)));
      }
    }
    std::ostringstream out;
    write_event_log(first, out);
    const EventLog second = log_from_csv(out.str(), schema);
    EXPECT_TRUE(first == second);
    std::ostringstream again;
    write_event_log(second, again);
    EXPECT_EQ(out.str(), again.str());
  }
}
