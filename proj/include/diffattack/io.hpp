#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diffattack/attack.hpp"
#include "diffattack/error.hpp"
#include "diffattack/metrics.hpp"
#include "diffattack/oracle.hpp"
#include "diffattack/tensor.hpp"
#include "json.hpp"

namespace diffattack {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255)

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Next header token, skipping whitespace and '#' comments.
inline std::string pgm_token(const std::vector<std::uint8_t>& data, std::size_t& pos) {
  for (;;) {
    while (pos < data.size() && std::isspace(data[pos])) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < data.size() && !std::isspace(data[pos]) && data[pos] != '#') {
    tok.push_back(static_cast<char>(data[pos++]));
  }
  return tok;
}

inline std::size_t pgm_number(const std::vector<std::uint8_t>& data, std::size_t& pos,
                              const char* what) {
  const std::string tok = pgm_token(data, pos);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
    throw ProtocolError(std::string("PGM header: bad ") + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

}  // namespace detail

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& data) {
  std::size_t pos = 0;
  if (detail::pgm_token(data, pos) != "P5") throw ProtocolError("not a binary PGM (P5) file");
  GrayImage img;
  img.width = detail::pgm_number(data, pos, "width");
  img.height = detail::pgm_number(data, pos, "height");
  const std::size_t maxval = detail::pgm_number(data, pos, "maxval");
  if (img.width == 0 || img.height == 0) throw ProtocolError("PGM has a zero dimension");
  if (maxval != 255) throw ProtocolError("PGM maxval " + std::to_string(maxval) + " != 255");
  if (pos >= data.size() || !std::isspace(data[pos])) throw ProtocolError("PGM header not terminated");
  ++pos;
  const std::size_t n = img.width * img.height;
  if (data.size() - pos != n) {
    throw ProtocolError("PGM raster has " + std::to_string(data.size() - pos) + " bytes, expected " +
                        std::to_string(n));
  }
  img.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end());
  return img;
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

// Writes a [H,W] or [H,W,1] tensor as P5, rounding to the nearest integer.
inline void save_adversarial(const InputTensor& x, const fs::path& path) {
  const auto& d = x.shape().dims();
  const bool two_d = d.size() == 2 || (d.size() == 3 && d[2] == 1);
  if (!two_d) {
    throw ShapeError("cannot save shape " + x.shape().to_string() + " as PGM; need [H,W] or [H,W,1]");
  }
  GrayImage img;
  img.height = d[0];
  img.width = d[1];
  img.pixels.reserve(x.size());
  for (double v : x.values()) img.pixels.push_back(to_byte(v));
  write_bytes(path, encode_pgm(img));
}

// ---------------------------------------------------------------------------
// Seed sets

struct SeedEntry {
  std::string id;
  InputTensor input;
};

struct SeedSet {
  Shape shape;
  std::vector<SeedEntry> entries;
  fs::path manifest;
};

namespace detail {

inline bool has_pgm_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".pgm";
}

// .pgm files are decoded as P5; anything else is raw bytes, one per element.
inline InputTensor load_image_file(const fs::path& file, const Shape& shape, const std::string& id) {
  try {
    const auto bytes = read_bytes(file);
    std::vector<std::uint8_t> pixels;
    if (has_pgm_extension(file)) {
      GrayImage img = decode_pgm(bytes);
      pixels = std::move(img.pixels);
    } else {
      pixels = bytes;
    }
    if (pixels.size() != shape.element_count()) {
      throw ShapeError("size mismatch: " + std::to_string(pixels.size()) + " pixels for shape " +
                       shape.to_string());
    }
    return InputTensor(shape, std::vector<double>(pixels.begin(), pixels.end()));
  } catch (const Error& e) {
    throw IoError("seed '" + id + "' (" + file.string() + "): " + e.what());
  }
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

// Manifest: {"shape": [..], "seeds": [{"id": .., "file": ..}, ..]}; file paths
// are relative to the manifest's directory.
inline SeedSet load_seeds(const fs::path& manifest_path) {
  const auto j = detail::read_json_file(manifest_path);
  SeedSet set;
  set.manifest = manifest_path;
  try {
    set.shape = Shape(j.at("shape").get<std::vector<std::size_t>>());
    std::set<std::string> seen;
    for (const auto& js : j.at("seeds")) {
      const auto id = js.at("id").get<std::string>();
      if (!seen.insert(id).second) throw ProtocolError("duplicate seed id '" + id + "'");
      const fs::path file = manifest_path.parent_path() / js.at("file").get<std::string>();
      set.entries.push_back({id, detail::load_image_file(file, set.shape, id)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(manifest_path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ProtocolError(manifest_path.string() + ": " + e.what());
  }
  return set;
}

// Manifest for the non-differential adaptation:
// {"shape": [..], "model_a": id?, "entries": [{"id", "file", "success": bool,
//   "label": int | "value": number, "model_a"?}]}
inline std::vector<NonDifferentialEntry> load_nondifferential_entries(const fs::path& manifest_path) {
  const auto j = detail::read_json_file(manifest_path);
  std::vector<NonDifferentialEntry> out;
  try {
    const Shape shape(j.at("shape").get<std::vector<std::size_t>>());
    const std::string default_model = j.value("model_a", std::string{});
    for (const auto& je : j.at("entries")) {
      NonDifferentialEntry e;
      e.seed_id = je.at("id").get<std::string>();
      e.model_a = je.value("model_a", default_model);
      e.success_on_a = je.at("success").get<bool>();
      if (je.contains("value")) {
        e.model_a_output = Prediction::regression(je["value"].get<double>());
      } else {
        e.model_a_output.task = TaskKind::kClassification;
        e.model_a_output.top_label = je.at("label").get<int>();
      }
      const fs::path file = manifest_path.parent_path() / je.at("file").get<std::string>();
      e.adversarial = detail::load_image_file(file, shape, e.seed_id);
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(manifest_path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ProtocolError(manifest_path.string() + ": " + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr int kReportSchemaVersion = 1;

struct ReportDocument {
  int schema_version = kReportSchemaVersion;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> model_ids;  // matrix axis order
  std::vector<CampaignRecord> records;
  DsrReport summary;

  friend bool operator==(const ReportDocument&, const ReportDocument&) = default;
};

inline ReportDocument make_report(nlohmann::json config, std::vector<std::string> model_ids,
                                  std::vector<CampaignRecord> records) {
  ReportDocument doc;
  doc.config = std::move(config);
  doc.model_ids = std::move(model_ids);
  doc.summary = dsr_differential(records);
  doc.records = std::move(records);
  return doc;
}

enum class ReportFormat { kCsv, kJson };

namespace detail {

inline nlohmann::json tensor_to_json(const InputTensor& x) {
  return {{"shape", x.shape().dims()},
          {"values", std::vector<double>(x.values().begin(), x.values().end())}};
}

inline InputTensor tensor_from_json(const nlohmann::json& j) {
  return InputTensor(Shape(j.at("shape").get<std::vector<std::size_t>>()),
                     j.at("values").get<std::vector<double>>());
}

inline nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> number_or_null(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

inline nlohmann::json histogram_to_json(const std::optional<Histogram>& h) {
  if (!h) return nullptr;
  return {{"edges", h->edges}, {"counts", h->counts}};
}

inline std::optional<Histogram> histogram_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  Histogram h;
  h.edges = j[key].at("edges").get<std::vector<double>>();
  h.counts = j[key].at("counts").get<std::vector<std::size_t>>();
  return h;
}

inline nlohmann::json record_to_json(const CampaignRecord& r) {
  const auto& a = r.result;
  return {{"seed_id", r.seed_id},
          {"model_a", r.model_a},
          {"model_b", r.model_b},
          {"status", to_string(a.status)},
          {"adversarial", tensor_to_json(a.adversarial)},
          {"divergence", a.divergence},
          {"fitness", a.fitness},
          {"l2", a.l2},
          {"queries_per_oracle", a.queries_per_oracle},
          {"iterations", a.iterations},
          {"elapsed_ns", a.elapsed.count()},
          {"seed_predictions",
           {prediction_to_json(a.seed_prediction_1), prediction_to_json(a.seed_prediction_2)}},
          {"final_predictions",
           {prediction_to_json(a.final_prediction_1), prediction_to_json(a.final_prediction_2)}}};
}

inline CampaignRecord record_from_json(const nlohmann::json& j) {
  CampaignRecord r;
  r.seed_id = j.at("seed_id").get<std::string>();
  r.model_a = j.at("model_a").get<std::string>();
  r.model_b = j.at("model_b").get<std::string>();
  auto& a = r.result;
  a.status = attack_status_from_string(j.at("status").get<std::string>());
  a.adversarial = tensor_from_json(j.at("adversarial"));
  a.divergence = j.at("divergence").get<double>();
  a.fitness = j.at("fitness").get<double>();
  a.l2 = j.at("l2").get<double>();
  a.queries_per_oracle = j.at("queries_per_oracle").get<std::uint64_t>();
  a.iterations = j.at("iterations").get<std::uint64_t>();
  a.elapsed = std::chrono::nanoseconds{j.at("elapsed_ns").get<std::int64_t>()};
  a.seed_prediction_1 = prediction_from_json(j.at("seed_predictions").at(0));
  a.seed_prediction_2 = prediction_from_json(j.at("seed_predictions").at(1));
  a.final_prediction_1 = prediction_from_json(j.at("final_predictions").at(0));
  a.final_prediction_2 = prediction_from_json(j.at("final_predictions").at(1));
  return r;
}

inline nlohmann::json summary_to_json(const DsrReport& s, const std::vector<std::string>& model_ids) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [pair, rate] : s.pair_dsr) {
    pairs.push_back({{"model_a", pair.first}, {"model_b", pair.second}, {"dsr", rate}});
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& row : pair_matrix(s, model_ids)) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& cell : row) jr.push_back(optional_number(cell));
    cells.push_back(jr);
  }
  return {{"overall_dsr", s.overall_dsr},
          {"records", s.records},
          {"successes", s.successes},
          {"averages_over", "successful attacks only"},
          {"avg_l2", optional_number(s.avg_l2)},
          {"avg_queries", optional_number(s.avg_queries)},
          {"avg_time_ms", optional_number(s.avg_time_ms)},
          {"l2_histogram", histogram_to_json(s.l2_histogram)},
          {"queries_histogram", histogram_to_json(s.queries_histogram)},
          {"time_histogram", histogram_to_json(s.time_histogram)},
          {"pair_dsr", pairs},
          {"pair_matrix", {{"models", model_ids}, {"cells", cells}}}};
}

inline DsrReport summary_from_json(const nlohmann::json& j) {
  DsrReport s;
  s.overall_dsr = j.at("overall_dsr").get<double>();
  s.records = j.at("records").get<std::size_t>();
  s.successes = j.at("successes").get<std::size_t>();
  s.avg_l2 = number_or_null(j, "avg_l2");
  s.avg_queries = number_or_null(j, "avg_queries");
  s.avg_time_ms = number_or_null(j, "avg_time_ms");
  s.l2_histogram = histogram_from_json(j, "l2_histogram");
  s.queries_histogram = histogram_from_json(j, "queries_histogram");
  s.time_histogram = histogram_from_json(j, "time_histogram");
  for (const auto& p : j.at("pair_dsr")) {
    s.pair_dsr[{p.at("model_a").get<std::string>(), p.at("model_b").get<std::string>()}] =
        p.at("dsr").get<double>();
  }
  return s;
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const std::string& csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) {
    throw ValueError("identifier '" + s + "' cannot be written to CSV");
  }
  return s;
}

}  // namespace detail

inline nlohmann::json report_to_json(const ReportDocument& doc) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : doc.records) records.push_back(detail::record_to_json(r));
  return {{"schema_version", doc.schema_version},
          {"config", doc.config},
          {"models", doc.model_ids},
          {"records", records},
          {"summary", detail::summary_to_json(doc.summary, doc.model_ids)}};
}

inline ReportDocument report_from_json(const nlohmann::json& j) {
  try {
    ReportDocument doc;
    doc.schema_version = j.at("schema_version").get<int>();
    if (doc.schema_version != kReportSchemaVersion) {
      throw ProtocolError("unsupported report schema_version " + std::to_string(doc.schema_version));
    }
    doc.config = j.at("config");
    doc.model_ids = j.at("models").get<std::vector<std::string>>();
    for (const auto& jr : j.at("records")) doc.records.push_back(detail::record_from_json(jr));
    doc.summary = detail::summary_from_json(j.at("summary"));
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed report: ") + e.what());
  }
}

inline constexpr const char* kCsvHeader =
    "seed_id,model_a,model_b,status,divergence,l2,queries,iterations,elapsed_ms";

// One row per record, then '#'-prefixed summary lines (overall figures, pair
// rates and the mirrored pair matrix).
inline std::string report_to_csv(const ReportDocument& doc) {
  using detail::csv_field;
  using detail::fixed6;
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : doc.records) {
    const auto& a = r.result;
    out << csv_field(r.seed_id) << ',' << csv_field(r.model_a) << ',' << csv_field(r.model_b)
        << ',' << to_string(a.status) << ',' << fixed6(a.divergence) << ',' << fixed6(a.l2) << ','
        << a.queries_per_oracle << ',' << a.iterations << ','
        << fixed6(std::chrono::duration<double, std::milli>(a.elapsed).count()) << '\n';
  }
  const auto& s = doc.summary;
  auto opt = [](const std::optional<double>& v) { return v ? fixed6(*v) : std::string("NA"); };
  out << "# schema_version," << doc.schema_version << '\n';
  out << "# overall_dsr," << fixed6(s.overall_dsr) << '\n';
  out << "# records," << s.records << '\n';
  out << "# successes," << s.successes << '\n';
  out << "# avg_l2," << opt(s.avg_l2) << '\n';
  out << "# avg_queries," << opt(s.avg_queries) << '\n';
  out << "# avg_time_ms," << opt(s.avg_time_ms) << '\n';
  for (const auto& [pair, rate] : s.pair_dsr) {
    out << "# pair_dsr," << csv_field(pair.first) << ',' << csv_field(pair.second) << ','
        << fixed6(rate) << '\n';
  }
  if (!doc.model_ids.empty()) {
    out << "# matrix,";
    for (const auto& id : doc.model_ids) out << ',' << csv_field(id);
    out << '\n';
    const auto m = pair_matrix(s, doc.model_ids);
    for (std::size_t i = 0; i < m.size(); ++i) {
      out << "# matrix," << doc.model_ids[i];
      for (const auto& cell : m[i]) out << ',' << opt(cell);
      out << '\n';
    }
  }
  return out.str();
}

inline void write_report(const ReportDocument& doc, const fs::path& path, ReportFormat format) {
  if (doc.records.empty()) throw ValueError("refusing to write a report without records");
  if (doc.summary.records != doc.records.size()) {
    throw ValueError("report summary covers " + std::to_string(doc.summary.records) +
                     " records but the document holds " + std::to_string(doc.records.size()));
  }
  const std::string text =
      format == ReportFormat::kCsv ? report_to_csv(doc) : report_to_json(doc).dump(1) + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

inline ReportDocument read_report_json(const fs::path& path) {
  return report_from_json(detail::read_json_file(path));
}

struct CsvRow {
  std::string seed_id;
  std::string model_a;
  std::string model_b;
  AttackStatus status = AttackStatus::kBudgetExhausted;
  double divergence = 0.0;
  double l2 = 0.0;
  std::uint64_t queries = 0;
  std::uint64_t iterations = 0;
  double elapsed_ms = 0.0;
};

// Data rows of a CSV report; summary lines are skipped.
inline std::vector<CsvRow> read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ProtocolError("unexpected CSV header");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw ProtocolError("CSV row with " + std::to_string(f.size()) + " fields");
    try {
      rows.push_back({f[0], f[1], f[2], attack_status_from_string(f[3]), std::stod(f[4]),
                      std::stod(f[5]), std::stoull(f[6]), std::stoull(f[7]), std::stod(f[8])});
    } catch (const std::logic_error& e) {
      throw ProtocolError("bad CSV number: " + std::string(e.what()));
    }
  }
  return rows;
}

}  // namespace diffattack
