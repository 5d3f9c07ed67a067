#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "selfcens/dataset.hpp"
#include "selfcens/eesolve.hpp"
#include "selfcens/estimators.hpp"
#include "selfcens/functional.hpp"
#include "selfcens/models.hpp"
#include "selfcens/patterns.hpp"
#include "selfcens/simharness.hpp"

namespace selfcens {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form ("%.17g" family); NaN prints as "nan".
std::string format_double(double v);
// Whole-string decimal parse; throws InputError naming `where`.
double parse_double(const std::string& text, const std::string& where);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC-4180 style: quoted fields, doubled quotes, CRLF or LF line ends.
CsvTable parse_csv(std::string_view text, const std::string& where = "csv");
CsvTable read_csv_table(const std::string& path);
std::string to_csv(const CsvTable& table);
void write_csv_table(const CsvTable& table, const std::string& path);

struct CsvSchema {
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;
  std::vector<std::string> missing_tokens{"", "NA"};
};

// Columns named in the schema are required; others are ignored. With an empty schema,
// columns starting with 'x' are covariates and columns starting with 'y' are outcomes.
Dataset read_csv(const std::string& path, const CsvSchema& schema = {});
Dataset parse_dataset(std::string_view text, const CsvSchema& schema = {}, const std::string& where = "csv");
std::string dataset_to_csv(const Dataset& data, const std::string& missing_token = "NA");
void write_csv(const Dataset& data, const std::string& path, const std::string& missing_token = "NA");

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
Json read_json_file(const std::string& path);

// Configuration tree <-> structures. Missing model fields default to zero; p and d fall
// back to the hints when absent.
Json spec_to_json(const WorkingModelSpec& spec);
WorkingModelSpec spec_from_json(const Json& j, std::optional<std::size_t> p_hint = std::nullopt,
                                std::optional<std::size_t> d_hint = std::nullopt);
CsvSchema schema_from_json(const Json& j);
EstimationOptions options_from_json(const Json& j);
// {"name": "mean", "outcome": 1} or {"name": "risk-diff", "treat": t, "outcome": o, "stratum": s};
// outcome indices are 1-based in the configuration.
Functional functional_from_json(const Json& j);
Functional functional_by_name(const std::string& name, const Json& j);
// Scenario configs, one per listed scenario.
std::vector<ScenarioConfig> scenarios_from_json(const Json& j);

Json to_json(const ValidationReport& rep, const PatternSet& ps);
Json to_json(const EstimationResult& res);
Json to_json(const BootstrapResult& boot, const std::vector<std::string>& names);
Json to_json(const MonteCarloReport& rep);

std::string validation_text(const ValidationReport& rep, const PatternSet& ps);
std::string estimation_text(const EstimationResult& res);

}  // namespace selfcens
