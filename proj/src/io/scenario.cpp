#include "esagg/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace esagg {
namespace {

using Json = nlohmann::ordered_json;

const Json& field(const Json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ValidationError(path, "must be an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(path + "." + key, "is required");
    return *it;
}

double number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ValidationError(path, "must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ValidationError(path, "must be finite");
    return v;
}

double number(const Json& obj, const std::string& key, const std::string& path) {
    return number(field(obj, key, path), path + "." + key);
}

std::string text(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ValidationError(path, "must be a string");
    return j.get<std::string>();
}

Vector vector_of(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ValidationError(path, "must be an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = number(j[k], path + "[" + std::to_string(k) + "]");
    return v;
}

// Row-major nested arrays; `cols` fixes the width for empty matrices.
Matrix matrix_of(const Json& j, const std::string& path, Index cols = -1) {
    if (!j.is_array()) throw ValidationError(path, "must be an array of rows");
    const Index rows = static_cast<Index>(j.size());
    if (rows == 0) return Matrix(0, std::max<Index>(cols, 0));
    Matrix m;
    for (Index r = 0; r < rows; ++r) {
        const std::string row_path = path + "[" + std::to_string(r) + "]";
        const Vector row = vector_of(j[static_cast<std::size_t>(r)], row_path);
        if (r == 0) m.resize(rows, row.size());
        if (row.size() != m.cols()) throw ValidationError(row_path, "rows must have equal length");
        m.row(r) = row.transpose();
    }
    if (cols >= 0 && m.cols() != cols) throw ValidationError(path, "needs " + std::to_string(cols) + " columns");
    return m;
}

Json to_json(const Vector& v) {
    Json a = Json::array();
    for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

Json to_json(const Matrix& m) {
    Json a = Json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
    return a;
}

Index index_of(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ValidationError(path, "must be an integer");
    return j.get<Index>();
}

std::pair<std::size_t, std::size_t> line_column(const std::string& s, std::size_t byte) {
    std::size_t line = 1, column = 1;
    for (std::size_t k = 0; k < std::min(byte, s.size()); ++k) {
        if (s[k] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

StorageUnit unit_from(const Json& j, const std::string& path, Index horizon) {
    StorageUnit u;
    u.id = text(field(j, "id", path), path + ".id");
    u.bus = index_of(field(j, "bus", path), path + ".bus");
    u.eta_plus = number(j, "eta_plus", path);
    u.eta_minus = number(j, "eta_minus", path);
    u.d_plus_max = number(j, "d_plus_max", path);
    u.d_minus_max = number(j, "d_minus_max", path);
    u.soc_min = number(j, "soc_min", path);
    u.soc_max = number(j, "soc_max", path);
    u.soc_init = number(j, "soc_init", path);
    const Json& cost = field(j, "cost", path);
    u.cost.w_plus = number(cost, "w_plus", path + ".cost");
    u.cost.w_minus = number(cost, "w_minus", path + ".cost");
    u.cost.w_cross = cost.contains("w_cross") ? number(cost, "w_cross", path + ".cost") : 0.0;
    u.extra_matrix.resize(0, 2 * horizon);
    u.extra_rhs.resize(0);
    if (j.contains("extra_constraints")) {
        const std::string p = path + ".extra_constraints";
        const Json& extra = j["extra_constraints"];
        u.extra_matrix = matrix_of(field(extra, "matrix", p), p + ".matrix", 2 * horizon);
        u.extra_rhs = vector_of(field(extra, "rhs", p), p + ".rhs");
    }
    return u;
}

Json unit_to(const StorageUnit& u) {
    Json j;
    j["id"] = u.id;
    j["bus"] = u.bus;
    j["eta_plus"] = u.eta_plus;
    j["eta_minus"] = u.eta_minus;
    j["d_plus_max"] = u.d_plus_max;
    j["d_minus_max"] = u.d_minus_max;
    j["soc_min"] = u.soc_min;
    j["soc_max"] = u.soc_max;
    j["soc_init"] = u.soc_init;
    j["cost"] = {{"w_plus", u.cost.w_plus}, {"w_minus", u.cost.w_minus}, {"w_cross", u.cost.w_cross}};
    if (u.extra_matrix.rows() > 0) {
        j["extra_constraints"] = {{"matrix", to_json(u.extra_matrix)}, {"rhs", to_json(u.extra_rhs)}};
    }
    return j;
}

Json scenario_to(const Scenario& s) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["metadata"] = {{"name", s.name}, {"description", s.description}};
    Json net;
    net["n_buses"] = s.network.n_buses;
    net["gen_cost"] = {{"intercept", to_json(s.network.gen_intercept)}, {"slope", to_json(s.network.gen_slope)}};
    net["shift_factors"] = to_json(s.network.shift_factors);
    net["line_limits"] = to_json(s.network.line_limits);
    j["network"] = net;
    j["demand"] = to_json(s.demand);
    j["units"] = Json::array();
    for (const auto& u : s.units) j["units"].push_back(unit_to(u));
    j["aggregator"] = {{"price_bound", s.aggregator.price_bound}, {"managed_units", s.aggregator.managed_units}};
    j["repeated"] = {{"discount", s.discount}};
    if (s.mpmp) j["mpmp"] = {{"constants", to_json(s.mpmp->constants)}};
    return j;
}

}  // namespace

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& what)
    : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

void Scenario::validate() const {
    network.validate("network");
    validate_demand(network, demand, "demand");
    if (units.empty()) throw ValidationError("units", "must list at least one unit");
    std::set<std::string> ids;
    for (std::size_t k = 0; k < units.size(); ++k) {
        const std::string path = "units[" + std::to_string(k) + "]";
        if (units[k].id.empty()) throw ValidationError(path + ".id", "must not be empty");
        if (!ids.insert(units[k].id).second) throw ValidationError(path + ".id", "duplicate unit id");
        units[k].validate(network.n_buses, network.horizon(), path);
    }
    aggregator.validate(units, "aggregator");
    if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("repeated.discount", "must lie in (0, 1)");
    if (mpmp) mpmp->validate(network, "mpmp");
}

std::vector<StorageUnit> Scenario::managed_units() const {
    std::vector<StorageUnit> out;
    for (const auto& u : units) {
        const auto& m = aggregator.managed_units;
        if (std::find(m.begin(), m.end(), u.id) != m.end()) out.push_back(u);
    }
    return out;
}

Scenario parse_scenario(const std::string& input) {
    Json j;
    try {
        j = Json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, column] = line_column(input, e.byte == 0 ? 0 : e.byte - 1);
        throw ParseError(line, column, "malformed JSON");
    }
    if (!j.is_object()) throw ValidationError("$", "scenario must be a JSON object");
    const Json& version = field(j, "schema_version", "$");
    if (!version.is_number_integer()) throw ValidationError("schema_version", "must be an integer");
    if (version.get<int>() != kSchemaVersion) {
        throw VersionError("unsupported schema_version " + version.dump() + " (supported: 1)");
    }

    Scenario s;
    if (j.contains("metadata")) {
        const Json& meta = j["metadata"];
        if (meta.contains("name")) s.name = text(meta["name"], "metadata.name");
        if (meta.contains("description")) s.description = text(meta["description"], "metadata.description");
    }
    const Json& net = field(j, "network", "$");
    s.network.n_buses = index_of(field(net, "n_buses", "network"), "network.n_buses");
    const Json& gen = field(net, "gen_cost", "network");
    s.network.gen_intercept = matrix_of(field(gen, "intercept", "network.gen_cost"), "network.gen_cost.intercept");
    s.network.gen_slope = matrix_of(field(gen, "slope", "network.gen_cost"), "network.gen_cost.slope");
    s.network.shift_factors = net.contains("shift_factors")
                                  ? matrix_of(net["shift_factors"], "network.shift_factors", s.network.n_buses)
                                  : Matrix(0, s.network.n_buses);
    s.network.line_limits = net.contains("line_limits") ? vector_of(net["line_limits"], "network.line_limits") : Vector();
    s.demand = matrix_of(field(j, "demand", "$"), "demand");

    const Json& units = field(j, "units", "$");
    if (!units.is_array()) throw ValidationError("units", "must be an array");
    for (std::size_t k = 0; k < units.size(); ++k) {
        s.units.push_back(unit_from(units[k], "units[" + std::to_string(k) + "]", s.network.horizon()));
    }
    const Json& agg = field(j, "aggregator", "$");
    s.aggregator.price_bound = number(agg, "price_bound", "aggregator");
    const Json& managed = field(agg, "managed_units", "aggregator");
    if (!managed.is_array()) throw ValidationError("aggregator.managed_units", "must be an array");
    for (std::size_t k = 0; k < managed.size(); ++k) {
        s.aggregator.managed_units.push_back(text(managed[k], "aggregator.managed_units[" + std::to_string(k) + "]"));
    }
    if (j.contains("repeated")) s.discount = number(j["repeated"], "discount", "repeated");
    if (j.contains("mpmp")) {
        s.mpmp = MpmpConfig{matrix_of(field(j["mpmp"], "constants", "mpmp"), "mpmp.constants")};
    }
    s.validate();
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open scenario file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str());
}

std::string dump_scenario(const Scenario& scenario) { return scenario_to(scenario).dump(2) + "\n"; }

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write scenario file " + path.string());
    out << dump_scenario(scenario);
}

std::string scenario_hash(const Scenario& scenario) {
    const std::string canonical = scenario_to(scenario).dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < length; ++k) {
        out += hex[digest[k] >> 4];
        out += hex[digest[k] & 0xf];
    }
    return out;
}

}  // namespace esagg
