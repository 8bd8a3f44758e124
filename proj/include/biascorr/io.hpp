#pragma once

// File formats. CSV files start with a "# invocation: ..." comment line and
// use '.' as decimal separator independent of the locale. Doubles are
// written in shortest round-trip form.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biascorr/diffcore.hpp"
#include "biascorr/metrics.hpp"
#include "biascorr/sampling.hpp"
#include "biascorr/trainer.hpp"

namespace biascorr {

std::string format_double(double v);
double parse_double(std::string_view s);

// Header f0..f{d-1},label.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data, const std::string& invocation);
// num_classes = 0 infers it from the largest label. The apparent marginal is
// the realized label frequency.
Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

// Provenance sidecar: {"invocation", "seed", "generator", "apparent_marginal", "n"}.
nlohmann::json provenance_json(const Dataset& data, const std::string& invocation);

// Rows segment,index,value.
void write_params_csv(const std::filesystem::path& path, const ParamVector& params, const std::string& invocation);
// Fills a layout made from the spec; every entry must be present exactly once.
ParamVector read_params_csv(const std::filesystem::path& path, const ScorerSpec& spec);

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc, const std::string& invocation);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& hist, const std::string& invocation);

nlohmann::json to_json(const TraceRecord& record);
// First line {"invocation": ...}, then one record per line.
void write_trace_jsonl(const std::filesystem::path& path, const TrainTrace& trace, const std::string& invocation);

// Pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// Writes the whole string, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace biascorr
