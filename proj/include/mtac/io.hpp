#ifndef MTAC_IO_HPP
#define MTAC_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "driver.hpp"
#include "mdp.hpp"

namespace mtac {

using nlohmann::json;

/// File-system failures (unreadable input, unwritable output).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary file and renames it over the target, so
/// readers never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": invalid JSON: " + e.what());
    }
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// ---- MDP fixtures ("mtac-mdp/1") ----

inline json mdp_to_json(const MultiTaskMdp& mdp) {
    json tasks = json::array();
    for (int k = 0; k < mdp.num_tasks; ++k) {
        json P = json::array();
        for (int s = 0; s < mdp.num_states; ++s) {
            json per_action = json::array();
            for (int a = 0; a < mdp.num_actions; ++a) per_action.push_back(to_std(mdp.transitions[k].row(mdp.pair(s, a)).transpose()));
            P.push_back(per_action);
        }
        json r = json::array();
        for (int s = 0; s < mdp.num_states; ++s) {
            json row = json::array();
            for (int a = 0; a < mdp.num_actions; ++a) row.push_back(mdp.rewards[k][mdp.pair(s, a)]);
            r.push_back(row);
        }
        tasks.push_back({{"transitions", P}, {"rewards", r}, {"initial_dist", to_std(mdp.initial_dist[k])}});
    }
    return {{"format", "mtac-mdp/1"},
            {"num_states", mdp.num_states},
            {"num_actions", mdp.num_actions},
            {"num_tasks", mdp.num_tasks},
            {"gamma", mdp.gamma},
            {"tasks", tasks}};
}

namespace detail {
inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
T get_required(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + std::string(key) + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": key '" + std::string(key) + "' has the wrong type");
    }
}
}  // namespace detail

inline MultiTaskMdp mdp_from_json(const json& j) {
    const std::string where = "mdp fixture";
    detail::only_keys(j, {"format", "num_states", "num_actions", "num_tasks", "gamma", "tasks"}, where);
    if (detail::get_required<std::string>(j, "format", where) != "mtac-mdp/1")
        throw ConfigError(where + ": unsupported format (expected mtac-mdp/1)");
    MultiTaskMdp mdp;
    mdp.num_states = detail::get_required<int>(j, "num_states", where);
    mdp.num_actions = detail::get_required<int>(j, "num_actions", where);
    mdp.num_tasks = detail::get_required<int>(j, "num_tasks", where);
    mdp.gamma = detail::get_required<double>(j, "gamma", where);
    detail::check_sizes(mdp.num_states, mdp.num_actions, mdp.num_tasks, mdp.gamma);
    const auto tasks = detail::get_required<std::vector<json>>(j, "tasks", where);
    if (static_cast<int>(tasks.size()) != mdp.num_tasks) throw ConfigError(where + ": 'tasks' must have num_tasks entries");
    const int S = mdp.num_states, A = mdp.num_actions;
    for (int k = 0; k < mdp.num_tasks; ++k) {
        const std::string tw = where + ".tasks[" + std::to_string(k) + "]";
        detail::only_keys(tasks[k], {"transitions", "rewards", "initial_dist"}, tw);
        const auto P = detail::get_required<std::vector<std::vector<std::vector<double>>>>(tasks[k], "transitions", tw);
        const auto r = detail::get_required<std::vector<std::vector<double>>>(tasks[k], "rewards", tw);
        const auto xi = detail::get_required<std::vector<double>>(tasks[k], "initial_dist", tw);
        if (static_cast<int>(P.size()) != S || static_cast<int>(r.size()) != S || static_cast<int>(xi.size()) != S)
            throw ConfigError(tw + ": per-state arrays must have num_states entries");
        MatrixXd Pk(S * A, S);
        VectorXd rk(S * A);
        for (int s = 0; s < S; ++s) {
            if (static_cast<int>(P[s].size()) != A || static_cast<int>(r[s].size()) != A)
                throw ConfigError(tw + ": per-action arrays must have num_actions entries");
            for (int a = 0; a < A; ++a) {
                if (static_cast<int>(P[s][a].size()) != S)
                    throw ConfigError(tw + ": transition rows must have num_states entries");
                for (int n = 0; n < S; ++n) Pk(s * A + a, n) = P[s][a][n];
                rk[s * A + a] = r[s][a];
            }
        }
        mdp.transitions.push_back(std::move(Pk));
        mdp.rewards.push_back(std::move(rk));
        mdp.initial_dist.push_back(Eigen::Map<const VectorXd>(xi.data(), S));
    }
    mdp.validate(1e-9);
    return mdp;
}

/// FNV-1a of the canonical fixture serialization; equal for equal MDPs.
inline std::string mdp_fingerprint(const MultiTaskMdp& mdp) {
    const std::string text = mdp_to_json(mdp).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- CSV traces ----

inline constexpr const char* kTraceVersion = "mtac-trace v1";

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trace_columns(int num_tasks) {
    std::string cols = "t";
    for (int k = 1; k <= num_tasks; ++k) cols += ",lambda_" + std::to_string(k);
    for (int k = 1; k <= num_tasks; ++k) cols += ",J_" + std::to_string(k);
    cols += ",pareto_gap,ca_distance,critic_err_max,elapsed_ms";
    return cols;
}

inline std::string trace_to_csv(const TrainingTrace& trace, int num_tasks) {
    std::string out = std::string("# ") + kTraceVersion + " columns=" + trace_columns(num_tasks) + "\n";
    out += trace_columns(num_tasks) + "\n";
    for (const auto& row : trace.rows) {
        out += std::to_string(row.t);
        for (int k = 0; k < num_tasks; ++k) out += "," + fmt_double(row.lambda[k]);
        for (int k = 0; k < num_tasks; ++k) out += "," + fmt_double(row.objective.size() ? row.objective[k] : NAN);
        out += "," + fmt_double(row.pareto_gap) + "," + fmt_double(row.ca_distance) + "," +
               fmt_double(row.critic_err_max) + "," + fmt_double(row.elapsed_ms) + "\n";
    }
    return out;
}

/// Parsed CSV trace: column names and numeric rows (header comment dropped).
struct CsvTable {
    std::string version_line;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        throw ConfigError("csv: no column named '" + name + "'");
    }
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (table.version_line.empty()) table.version_line = line;
            continue;
        }
        if (table.columns.empty()) {
            table.columns = split(line);
            continue;
        }
        std::vector<double> row;
        for (const auto& cell : split(line)) row.push_back(cell == "nan" ? NAN : std::stod(cell));
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace mtac

#endif  // MTAC_IO_HPP
