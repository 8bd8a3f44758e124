#include "biascorr/io.hpp"

#include <charconv>
#include <fstream>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "biascorr/error.hpp"

namespace biascorr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::size_t parse_size(std::string_view s) {
  s = trim(s);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError("not a nonnegative integer: '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> data_lines(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string header_line(const std::string& invocation) { return "# invocation: " + invocation + "\n"; }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  s = trim(s);
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError("not a number: '" + std::string(s) + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_dataset_csv(const fs::path& path, const Dataset& data, const std::string& invocation) {
  std::string s = header_line(invocation);
  for (std::size_t j = 0; j < data.features.cols; ++j) s += "f" + std::to_string(j) + ",";
  s += "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) s += format_double(v) + ",";
    s += std::to_string(data.labels[i]) + "\n";
  }
  write_text(path, s);
}

Dataset read_dataset_csv(const fs::path& path, std::size_t num_classes) {
  const auto lines = data_lines(path);
  if (lines.empty()) throw IoError(path.string() + ": missing header");
  const auto header = split(lines[0], ',');
  if (header.size() < 2 || trim(header.back()) != "label") throw IoError(path.string() + ": last column must be 'label'");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (trim(header[j]) != "f" + std::to_string(j)) throw IoError(path.string() + ": expected column f" + std::to_string(j));
  }
  Dataset out;
  out.features = Matrix(lines.size() - 1, d);
  out.labels.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != d + 1) throw IoError(path.string() + ": line " + std::to_string(i + 1) + " has wrong field count");
    try {
      for (std::size_t j = 0; j < d; ++j) out.features(i - 1, j) = parse_double(cells[j]);
      out.labels.push_back(parse_size(cells[d]));
    } catch (const IoError& e) {
      throw IoError(path.string() + ": row " + std::to_string(i) + ": " + e.what());
    }
  }
  if (out.labels.empty()) throw IoError(path.string() + ": no rows");
  std::size_t k = 0;
  for (Label y : out.labels) k = std::max(k, y + 1);
  if (num_classes == 0) num_classes = k;
  if (k > num_classes) throw IoError(path.string() + ": label out of range");
  out.num_classes = num_classes;
  out.apparent_marginal.assign(num_classes, 0.0);
  for (Label y : out.labels) out.apparent_marginal[y] += 1.0 / static_cast<double>(out.labels.size());
  out.provenance.generator = {{"csv", path.string()}};
  return out;
}

nlohmann::json provenance_json(const Dataset& data, const std::string& invocation) {
  return {{"invocation", invocation},
          {"seed", data.provenance.seed},
          {"generator", data.provenance.generator},
          {"n", data.size()},
          {"apparent_marginal", data.apparent_marginal}};
}

void write_params_csv(const fs::path& path, const ParamVector& params, const std::string& invocation) {
  std::string s = header_line(invocation) + "segment,index,value\n";
  for (const auto& seg : params.layout()) {
    const auto vals = params.segment_values(seg.name);
    for (std::size_t i = 0; i < vals.size(); ++i) s += seg.name + "," + std::to_string(i) + "," + format_double(vals[i]) + "\n";
  }
  write_text(path, s);
}

ParamVector read_params_csv(const fs::path& path, const ScorerSpec& spec) {
  ParamVector params = make_layout(spec);
  std::vector<char> seen(params.size(), 0);
  const auto lines = data_lines(path);
  if (lines.empty() || lines[0] != "segment,index,value") throw IoError(path.string() + ": bad params header");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != 3) throw IoError(path.string() + ": line " + std::to_string(i + 1) + " has wrong field count");
    const std::string name(trim(cells[0]));
    const Segment* seg = nullptr;
    for (const auto& s : params.layout()) {
      if (s.name == name) seg = &s;
    }
    if (!seg) throw IoError(path.string() + ": unknown segment '" + name + "' for this scorer");
    const std::size_t idx = parse_size(cells[1]);
    if (idx >= seg->size()) throw IoError(path.string() + ": index out of range in segment " + name);
    const std::size_t flat = seg->offset + idx;
    if (seen[flat]) throw IoError(path.string() + ": duplicate entry " + name + "[" + std::to_string(idx) + "]");
    seen[flat] = 1;
    params.values()[flat] = parse_double(cells[2]);
  }
  for (char c : seen) {
    if (!c) throw IoError(path.string() + ": parameter file incomplete for this scorer");
  }
  return params;
}

void write_roc_csv(const fs::path& path, const RocResult& roc, const std::string& invocation) {
  std::string s = header_line(invocation) + "threshold,tpr,fpr\n";
  for (const auto& p : roc.curve) s += format_double(p.threshold) + "," + format_double(p.tpr) + "," + format_double(p.fpr) + "\n";
  write_text(path, s);
}

void write_histogram_csv(const fs::path& path, const Histogram& hist, const std::string& invocation) {
  std::string s = header_line(invocation) + "bin_lo,bin_hi";
  const std::size_t k = hist.counts.empty() ? 0 : hist.counts[0].size();
  for (std::size_t c = 0; c < k; ++c) s += ",count_class" + std::to_string(c);
  s += "\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    s += format_double(hist.edges[b]) + "," + format_double(hist.edges[b + 1]);
    for (auto c : hist.counts[b]) s += "," + std::to_string(c);
    s += "\n";
  }
  write_text(path, s);
}

nlohmann::json to_json(const TraceRecord& r) {
  nlohmann::json j = {{"step", r.step}, {"train_loss", r.train_loss}, {"eval", to_json(r.eval)}};
  if (!r.tracked_marginal.empty()) j["tracked_marginal"] = r.tracked_marginal;
  return j;
}

void write_trace_jsonl(const fs::path& path, const TrainTrace& trace, const std::string& invocation) {
  std::string s = nlohmann::json{{"invocation", invocation}}.dump() + "\n";
  for (const auto& r : trace.records) s += to_json(r).dump() + "\n";
  write_text(path, s);
}

}  // namespace biascorr
