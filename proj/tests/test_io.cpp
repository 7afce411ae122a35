#include <gtest/gtest.h>

#include <random>

#include "diffattack/io.hpp"
#include "test_support.hpp"

namespace diffattack {
namespace {

using testing::TempDir;
using testing::write_text;

std::string pgm_bytes(int w, int h, std::initializer_list<unsigned char> px, int maxval = 255) {
  std::string s = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                  std::to_string(maxval) + "\n";
  for (unsigned char c : px) s.push_back(static_cast<char>(c));
  return s;
}

void write_manifest(const TempDir& dir, const std::string& shape, const std::string& seeds) {
  write_text(dir / "seeds.json", R"({"shape": )" + shape + R"(, "seeds": )" + seeds + "}");
}

TEST(LoadSeeds, PgmBytesMapDirectly) {
  TempDir dir;
  write_text(dir / "a.pgm", pgm_bytes(2, 2, {0x00, 0x7F, 0xFF, 0x00}));
  write_manifest(dir, "[2,2]", R"([{"id":"a","file":"a.pgm"}])");
  const auto set = load_seeds(dir / "seeds.json");
  ASSERT_EQ(set.entries.size(), 1u);
  EXPECT_EQ(set.entries[0].input, InputTensor(Shape{2, 2}, {0, 127, 255, 0}));
}

TEST(LoadSeeds, PgmHeaderCommentsAreSkipped) {
  TempDir dir;
  std::string data = "P5\n# made by hand\n2 1\n# another\n255\n";
  data += std::string("\x05\x06", 2);
  write_text(dir / "c.pgm", data);
  write_manifest(dir, "[1,2]", R"([{"id":"c","file":"c.pgm"}])");
  EXPECT_EQ(load_seeds(dir / "seeds.json").entries[0].input, InputTensor(Shape{1, 2}, {5, 6}));
}

TEST(LoadSeeds, RawBytesAndMultiChannel) {
  TempDir dir;
  write_text(dir / "rgb.raw", std::string("\x01\x02\x03\x04\x05\x06", 6));
  write_manifest(dir, "[1,2,3]", R"([{"id":"rgb","file":"rgb.raw"}])");
  EXPECT_EQ(load_seeds(dir / "seeds.json").entries[0].input,
            InputTensor(Shape{1, 2, 3}, {1, 2, 3, 4, 5, 6}));
}

void expect_error_naming(const TempDir& dir, const std::string& needle) {
  try {
    load_seeds(dir / "seeds.json");
    FAIL() << "expected an error mentioning " << needle;
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(LoadSeeds, Errors) {
  {
    TempDir dir;
    write_text(dir / "short.raw", "abc");
    write_manifest(dir, "[2,2]", R"([{"id":"short-one","file":"short.raw"}])");
    expect_error_naming(dir, "short-one");
    expect_error_naming(dir, "size mismatch");
  }
  {
    TempDir dir;
    write_text(dir / "a.pgm", pgm_bytes(2, 1, {1, 2}, 65535));
    write_manifest(dir, "[1,2]", R"([{"id":"deep","file":"a.pgm"}])");
    expect_error_naming(dir, "deep");
    expect_error_naming(dir, "maxval");
  }
  {
    TempDir dir;
    write_manifest(dir, "[1,2]", R"([{"id":"ghost","file":"nope.pgm"}])");
    expect_error_naming(dir, "ghost");
  }
  {
    TempDir dir;
    write_text(dir / "a.raw", "ab");
    write_manifest(dir, "[1,2]", R"([{"id":"x","file":"a.raw"},{"id":"x","file":"a.raw"}])");
    EXPECT_THROW(load_seeds(dir / "seeds.json"), ProtocolError);
  }
  {
    TempDir dir;
    write_text(dir / "seeds.json", "{ not json");
    EXPECT_THROW(load_seeds(dir / "seeds.json"), ProtocolError);
  }
  EXPECT_THROW(load_seeds("/nonexistent/seeds.json"), IoError);
}

TEST(SaveAdversarial, WritesP5Bytes) {
  TempDir dir;
  save_adversarial(InputTensor(Shape{2, 2}, {0, 127, 255, 0}), dir / "x.pgm");
  EXPECT_EQ(testing::read_text(dir / "x.pgm"), pgm_bytes(2, 2, {0x00, 0x7F, 0xFF, 0x00}));
}

TEST(SaveAdversarial, RoundsToNearest) {
  TempDir dir;
  save_adversarial(InputTensor(Shape{1, 3, 1}, {254.6, 0.4, 127.5}), dir / "r.pgm");
  EXPECT_EQ(testing::read_text(dir / "r.pgm"), pgm_bytes(3, 1, {255, 0, 128}));
}

TEST(SaveAdversarial, RejectsNonGrayShapes) {
  TempDir dir;
  EXPECT_THROW(save_adversarial(InputTensor::zeros(Shape{4}), dir / "a.pgm"), ShapeError);
  EXPECT_THROW(save_adversarial(InputTensor::zeros(Shape{2, 2, 3}), dir / "b.pgm"), ShapeError);
}

TEST(SaveAdversarial, RoundTripsThroughLoadSeeds) {
  TempDir dir;
  std::mt19937_64 eng(31);
  std::uniform_int_distribution<std::size_t> ext(1, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape shape{ext(eng), ext(eng)};
    const auto x = testing::random_tensor(shape, eng);
    save_adversarial(x, dir / "t.pgm");
    write_manifest(dir, "[" + std::to_string(shape.dims()[0]) + "," +
                            std::to_string(shape.dims()[1]) + "]",
                   R"([{"id":"t","file":"t.pgm"}])");
    EXPECT_EQ(load_seeds(dir / "seeds.json").entries[0].input, x);
  }
}

CampaignRecord sample_record(bool success) {
  CampaignRecord r;
  r.seed_id = "s0";
  r.model_a = "m1";
  r.model_b = "m2";
  auto& a = r.result;
  a.status = success ? AttackStatus::kSuccess : AttackStatus::kBudgetExhausted;
  a.adversarial = InputTensor(Shape{1, 2}, {3, 200});
  a.divergence = 0.123456789;
  a.fitness = -0.5;
  a.l2 = 6.691;
  a.queries_per_oracle = 42;
  a.iterations = 41;
  a.elapsed = std::chrono::nanoseconds(1234567);
  a.seed_prediction_1 = truncate(Prediction::from_distribution({0.3, 0.7}), AccessLevel::kTop1);
  a.seed_prediction_2 = Prediction::from_distribution({0.25, 0.75});
  a.final_prediction_1 = truncate(Prediction::from_distribution({0.6, 0.4}), AccessLevel::kLabelOnly);
  a.final_prediction_2 = Prediction::from_distribution({0.1, 0.9});
  return r;
}

TEST(WriteReport, RejectsEmptyRecordList) {
  TempDir dir;
  ReportDocument doc;
  EXPECT_THROW(write_report(doc, dir / "r.csv", ReportFormat::kCsv), ValueError);
  EXPECT_FALSE(fs::exists(dir / "r.csv"));
  EXPECT_THROW(make_report({}, {}, {}), ValueError);
}

TEST(WriteReport, SingleSuccessCsv) {
  TempDir dir;
  const auto doc = make_report({{"budget", 10}}, {"m1", "m2"}, {sample_record(true)});
  write_report(doc, dir / "r.csv", ReportFormat::kCsv);
  const std::string text = testing::read_text(dir / "r.csv");
  EXPECT_EQ(text.rfind(std::string(kCsvHeader) + "\n", 0), 0u);
  EXPECT_NE(text.find("s0,m1,m2,SUCCESS,0.123457,6.691000,42,41,1.234567\n"), std::string::npos);
  EXPECT_NE(text.find("# overall_dsr,1.000000\n"), std::string::npos);
  EXPECT_NE(text.find("# matrix,m1,NA,1.000000\n"), std::string::npos);
  const auto rows = read_report_csv(dir / "r.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].status, AttackStatus::kSuccess);
}

TEST(WriteReport, JsonRoundTripIsStructurallyEqual) {
  TempDir dir;
  auto doc = make_report({{"budget", 10}, {"mode", "ref-gap"}}, {"m1", "m2"},
                         {sample_record(true), sample_record(false)});
  write_report(doc, dir / "r.json", ReportFormat::kJson);
  EXPECT_EQ(read_report_json(dir / "r.json"), doc);
}

TEST(WriteReport, RandomizedRoundTrips) {
  TempDir dir;
  std::mt19937_64 eng(64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::uint64_t> q(1, 10000);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CampaignRecord> recs;
    for (int i = 0; i < 1 + trial % 6; ++i) {
      CampaignRecord r = sample_record(u(eng) < 0.5);
      r.seed_id = "s" + std::to_string(i);
      r.result.adversarial = testing::random_tensor(Shape{2, 3}, eng);
      r.result.divergence = u(eng);
      r.result.fitness = u(eng) - 0.5;
      r.result.l2 = u(eng) * 300;
      r.result.queries_per_oracle = q(eng);
      r.result.elapsed = std::chrono::nanoseconds(q(eng) * 1000 + 7);
      recs.push_back(std::move(r));
    }
    const auto doc = make_report({{"trial", trial}}, {"m1", "m2"}, recs);
    write_report(doc, dir / "r.json", ReportFormat::kJson);
    ASSERT_EQ(read_report_json(dir / "r.json"), doc);

    write_report(doc, dir / "r.csv", ReportFormat::kCsv);
    const auto rows = read_report_csv(dir / "r.csv");
    ASSERT_EQ(rows.size(), recs.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& a = recs[i].result;
      EXPECT_EQ(rows[i].seed_id, recs[i].seed_id);
      EXPECT_NEAR(rows[i].divergence, a.divergence, 1e-6);
      EXPECT_NEAR(rows[i].l2, a.l2, 1e-6);
      EXPECT_EQ(rows[i].queries, a.queries_per_oracle);
      const double ms = std::chrono::duration<double, std::milli>(a.elapsed).count();
      EXPECT_NEAR(rows[i].elapsed_ms, ms, 1e-6);
    }
  }
}

TEST(WriteReport, UnwritablePath) {
  const auto doc = make_report({}, {}, {sample_record(true)});
  EXPECT_THROW(write_report(doc, "/nonexistent-dir/r.csv", ReportFormat::kCsv), IoError);
}

TEST(WriteReport, RejectsCsvHostileIds) {
  TempDir dir;
  auto r = sample_record(true);
  r.seed_id = "a,b";
  const auto doc = make_report({}, {}, {r});
  EXPECT_THROW(write_report(doc, dir / "r.csv", ReportFormat::kCsv), ValueError);
}

TEST(NonDifferentialManifest, LoadsThresholdFixture) {
  const auto entries = load_nondifferential_entries(testing::fixture("threshold/adversarials.json"));
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].adversarial, InputTensor(Shape{1, 2}, {150, 0}));
  EXPECT_EQ(entries[1].model_a, "thr_128");
  EXPECT_TRUE(entries[1].success_on_a);
  EXPECT_EQ(entries[1].model_a_output.top_label, 1);
}

}  // namespace
}  // namespace diffattack
