#pragma once

// Scenario files and the command pipeline behind the esagg tool.
//
// Scenarios are JSON documents with "schema_version": 1. Matrices are
// row-major nested arrays (bus x period for costs and demand, line x bus for
// shift factors). docs/scenario_schema.md lists every field.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "esagg/welfare.hpp"

namespace esagg {

/// Malformed JSON. Line and column are 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what);
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_, column_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

inline constexpr int kSchemaVersion = 1;

struct Scenario {
    std::string name;
    std::string description;
    Network network;
    DemandProfile demand;
    std::vector<StorageUnit> units;
    AggregatorConfig aggregator;
    double discount = 0.98;
    std::optional<MpmpConfig> mpmp;

    void validate() const;

    /// Units named in aggregator.managed_units, in file order. Units outside
    /// the list stay idle in every command.
    std::vector<StorageUnit> managed_units() const;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string dump_scenario(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// SHA-256 of the canonical serialization, lowercase hex.
std::string scenario_hash(const Scenario& scenario);

struct PipelineSettings {
    SearchSettings search;
    std::optional<double> discount;  // overrides the scenario's
    std::filesystem::path out_dir = ".";
    bool zero_storage = false;
    int curve_points = 101;
    int region_points = 41;
    int frontier_points = 41;
};

/// A module error tagged with the pipeline stage it came from. The original
/// exception is kept so callers can map it to an exit status.
class StageError : public Error {
public:
    StageError(std::string stage, std::exception_ptr cause, const std::string& what);
    const std::string& stage() const noexcept { return stage_; }
    std::exception_ptr cause() const noexcept { return cause_; }

private:
    std::string stage_;
    std::exception_ptr cause_;
};

struct RunRecord {
    std::string scenario_hash;
    std::string command;
    std::string settings_json;
    std::string outputs_json;
    double wall_time = 0.0;  // seconds
    bool budget_exceeded = false;
    std::vector<std::filesystem::path> files;

    /// Everything but the wall time, which varies between runs.
    std::string to_json(bool with_wall_time = true) const;
};

const std::vector<std::string>& pipeline_commands();

/// Runs one of clear, stackelberg, cooperate, bargain, social, mpmp,
/// compare or sweep. Writes <command>.json and any CSV files into
/// settings.out_dir and prints a short summary to `console`.
RunRecord run_pipeline(const Scenario& scenario, const std::string& command, const PipelineSettings& settings,
                       std::ostream& console);

/// Rows of the social-optimum versus market-clearing comparison.
struct ComparisonRow {
    std::string label;
    double profit = 0.0;
    double system_cost = 0.0;
    double load_payment = 0.0;
};

std::vector<ComparisonRow> compare_outcomes(const Scenario& scenario, const solver::SolverSettings& settings = {});

}  // namespace esagg
