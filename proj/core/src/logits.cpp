#include "tscp/logits.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tscp/rng.hpp"

namespace tscp {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& raw, long line) {
  const std::string s = trim(raw);
  double value = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError("cannot parse numeric field '" + s + "'", line);
  }
  return value;
}

long parse_label(const std::string& raw, long line) {
  const std::string s = trim(raw);
  long value = 0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError("cannot parse label field '" + s + "'", line);
  }
  return value;
}

LogitsTable load_csv(std::ifstream& in) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw FormatError("empty file", 1);
  ++line_no;
  const auto header = split_fields(line);
  if (header.size() < 3 || trim(header.back()) != "label") {
    throw FormatError("expected header z0,...,z{C-1},label", line_no);
  }
  const std::size_t num_classes = header.size() - 1;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (trim(header[c]) != "z" + std::to_string(c)) {
      throw FormatError("unexpected header column '" + trim(header[c]) + "'", line_no);
    }
  }

  std::vector<double> logits;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != num_classes + 1) {
      throw FormatError("expected " + std::to_string(num_classes + 1) +
                            " fields, got " + std::to_string(fields.size()),
                        line_no);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      const double z = parse_double(fields[c], line_no);
      if (!std::isfinite(z)) {
        throw ValidationError("non-finite logit at line " + std::to_string(line_no));
      }
      logits.push_back(z);
    }
    const long label = parse_label(fields.back(), line_no);
    if (label < 0 || label >= static_cast<long>(num_classes)) {
      throw ValidationError("label " + std::to_string(label) + " out of range [0, " +
                            std::to_string(num_classes - 1) + "] at line " +
                            std::to_string(line_no));
    }
    labels.push_back(static_cast<int>(label));
  }
  return LogitsTable(num_classes, std::move(logits), std::move(labels));
}

LogitsTable load_jsonl(std::ifstream& in) {
  std::string line;
  long line_no = 0;
  std::vector<double> logits;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object() || !row.contains("logits") ||
        !row.contains("label") || !row["logits"].is_array()) {
      throw FormatError("expected object with 'logits' array and 'label'", line_no);
    }
    const auto& zs = row["logits"];
    if (num_classes == 0) {
      num_classes = zs.size();
      if (num_classes < 2) throw FormatError("need at least 2 classes", line_no);
    } else if (zs.size() != num_classes) {
      throw FormatError("row has " + std::to_string(zs.size()) + " logits, expected " +
                            std::to_string(num_classes),
                        line_no);
    }
    for (const auto& z : zs) {
      if (!z.is_number()) throw FormatError("non-numeric logit", line_no);
      const double v = z.get<double>();
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite logit at line " + std::to_string(line_no));
      }
      logits.push_back(v);
    }
    if (!row["label"].is_number_integer()) throw FormatError("non-integer label", line_no);
    const long label = row["label"].get<long>();
    if (label < 0 || label >= static_cast<long>(num_classes)) {
      throw ValidationError("label " + std::to_string(label) + " out of range at line " +
                            std::to_string(line_no));
    }
    labels.push_back(static_cast<int>(label));
  }
  if (labels.empty()) throw FormatError("empty file", 1);
  return LogitsTable(num_classes, std::move(logits), std::move(labels));
}

}  // namespace

FileFormat parse_file_format(const std::string& name) {
  if (name == "csv") return FileFormat::kCsv;
  if (name == "jsonl") return FileFormat::kJsonl;
  throw ArgumentError("unknown format '" + name + "' (expected csv or jsonl)");
}

LogitsTable::LogitsTable(std::size_t num_classes, std::vector<double> logits,
                         std::vector<int> labels)
    : num_classes_(num_classes), logits_(std::move(logits)), labels_(std::move(labels)) {
  if (num_classes_ < 2) throw ValidationError("need at least 2 classes");
  if (labels_.empty()) throw ValidationError("need at least 1 sample");
  if (logits_.size() != labels_.size() * num_classes_) {
    throw ValidationError("logits size does not match N x C");
  }
  for (double z : logits_) {
    if (!std::isfinite(z)) throw ValidationError("non-finite logit");
  }
  for (int y : labels_) {
    if (y < 0 || y >= static_cast<int>(num_classes_)) {
      throw ValidationError("label " + std::to_string(y) + " out of range");
    }
  }
}

LogitsTable load_logits(const std::string& path, FileFormat format) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return format == FileFormat::kCsv ? load_csv(in) : load_jsonl(in);
}

void save_logits_csv(const LogitsTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < table.num_classes(); ++c) out << 'z' << c << ',';
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < table.num_samples(); ++i) {
    const auto row = table.row(i);
    for (double z : row) out << z << ',';
    out << table.label(i) << '\n';
  }
}

SplitPlan make_split(const LogitsTable& table, double calib_fraction,
                     double cp_fraction, std::uint64_t seed) {
  const std::size_t n = table.num_samples();
  if (!(calib_fraction > 0.0 && calib_fraction < 1.0) ||
      !(cp_fraction > 0.0 && cp_fraction < 1.0) ||
      calib_fraction + cp_fraction >= 1.0) {
    throw ArgumentError("split fractions must lie in (0,1) and sum below 1");
  }
  const auto n_calib = static_cast<std::size_t>(n * calib_fraction);
  const auto n_cp = static_cast<std::size_t>(n * cp_fraction);
  if (n_calib < 1 || n_cp < 1) {
    throw ArgumentError("split too small: floor(N*fraction) must be >= 1");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Xoshiro256 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {  // Fisher-Yates
    const std::size_t j = rng.next_below(i + 1);
    std::swap(order[i], order[j]);
  }

  SplitPlan plan;
  plan.calib_fraction = calib_fraction;
  plan.cp_fraction = cp_fraction;
  plan.seed = seed;
  plan.calib_indices.assign(order.begin(), order.begin() + n_calib);
  plan.cp_indices.assign(order.begin() + n_calib, order.begin() + n_calib + n_cp);
  plan.eval_indices.assign(order.begin() + n_calib + n_cp, order.end());
  std::sort(plan.calib_indices.begin(), plan.calib_indices.end());
  std::sort(plan.cp_indices.begin(), plan.cp_indices.end());
  std::sort(plan.eval_indices.begin(), plan.eval_indices.end());
  return plan;
}

}  // namespace tscp
