// Command-line front end: run, sweep, oracle-check, report.
//
// Exit codes: 0 ok, 1 usage, 2 config/schema error, 3 I/O error,
// 4 a run aborted on a numeric failure, 5 an oracle check failed.

#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include <mtac/experiment.hpp>

namespace {

enum Exit { kOk = 0, kUsage = 1, kSchema = 2, kIo = 3, kNumeric = 4, kOracle = 5 };

int cmd_run(const std::string& config_path) {
    const auto spec = mtac::load_spec(config_path);
    const auto out = mtac::resolve_output_dir(spec);
    const auto summary = mtac::run_experiment(spec, out);
    const auto& agg = summary.at("aggregate");
    std::printf("%s: %zu seed(s), median final gap %.4g, median gap ratio %.4g, median mean CA distance %.4g\n",
                spec.name.c_str(), spec.seeds.size(), mtac::detail::nan_if_null(agg.at("median_final_pareto_gap")),
                mtac::detail::nan_if_null(agg.at("median_gap_ratio")),
                mtac::detail::nan_if_null(agg.at("median_mean_ca_distance")));
    std::printf("wrote %s\n", (out / "summary.json").string().c_str());
    if (mtac::any_aborted(summary)) {
        for (const auto& r : summary.at("runs"))
            if (r.at("aborted").get<bool>())
                std::fprintf(stderr, "seed %llu aborted: %s\n", r.at("seed").get<unsigned long long>(),
                             r.at("abort_reason").get<std::string>().c_str());
        return kNumeric;
    }
    return kOk;
}

int cmd_sweep(const std::string& config_path) {
    const auto spec = mtac::load_spec(config_path);
    const auto out = mtac::resolve_output_dir(spec);
    const auto sweep = mtac::run_sweep(spec, out);
    std::printf("%-12s %14s %14s %14s\n", spec.sweep->parameter.c_str(), "ca_distance", "gap_ratio", "ms/step");
    bool aborted = false;
    for (const auto& p : sweep.at("points")) {
        const auto& agg = p.at("aggregate");
        std::printf("%-12g %14.6g %14.6g %14.4f\n", p.at("value").get<double>(),
                    mtac::detail::nan_if_null(agg.at("median_mean_ca_distance")),
                    mtac::detail::nan_if_null(agg.at("median_gap_ratio")),
                    mtac::detail::nan_if_null(agg.at("median_mean_elapsed_ms")));
        aborted = aborted || agg.at("aborted_runs").get<int>() > 0;
    }
    std::printf("wrote %s\n", (out / "sweep.json").string().c_str());
    return aborted ? kNumeric : kOk;
}

int cmd_oracle_check(const std::string& config_path, const std::string& dump_path) {
    const auto spec = mtac::load_spec(config_path);
    if (!dump_path.empty()) mtac::write_file_atomic(dump_path, mtac::oracle_dump(spec).dump(2) + "\n");
    const auto start = std::chrono::steady_clock::now();
    const auto results = mtac::oracle_check(spec);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& r : results)
        std::printf("%-4s %-30s %12.4g  %s\n", r.status.c_str(), r.property.c_str(), r.value, r.detail.c_str());
    std::printf("oracle-check finished in %.2f s\n", secs);
    if (!mtac::checks_passed(results)) {
        for (const auto& r : results)
            if (r.status == "fail") std::fprintf(stderr, "failed property: %s\n", r.property.c_str());
        return kOracle;
    }
    return kOk;
}

int cmd_report(const std::vector<std::string>& summaries, const std::string& baseline, const std::string& table) {
    if (!table.empty()) {
        const auto doc = mtac::parse_json_text(mtac::read_file(table), table);
        std::printf("%-16s %10s\n", "row", "dm%");
        for (const auto& [name, dm] : mtac::table_delta_m(doc)) std::printf("%-16s %10.2f\n", name.c_str(), dm);
    }
    if (!summaries.empty()) {
        std::vector<mtac::json> docs;
        for (const auto& path : summaries) docs.push_back(mtac::parse_json_text(mtac::read_file(path), path));
        std::fputs(mtac::format_report(mtac::compare_summaries(docs, baseline), baseline).c_str(), stdout);
    }
    if (table.empty() && summaries.empty()) {
        std::fprintf(stderr, "report: give summary files and/or --table\n");
        return kUsage;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task actor-critic laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run every seed of an experiment config");
    run->add_option("config", config_path, "Experiment config (JSON)")->required();
    auto* sweep = app.add_subcommand("sweep", "Run an experiment once per sweep value");
    sweep->add_option("config", config_path, "Experiment config with a sweep section")->required();
    auto* check = app.add_subcommand("oracle-check", "Verify oracle invariants on the config's MDP");
    check->add_option("config", config_path, "Experiment config (JSON)")->required();
    std::string dump_path;
    check->add_option("--dump", dump_path, "Also write exact quantities at theta_0 to this JSON file");

    std::vector<std::string> summaries;
    std::string baseline, table;
    auto* report = app.add_subcommand("report", "Compare summary files");
    report->add_option("summaries", summaries, "summary.json files");
    report->add_option("--baseline", baseline, "Name of the baseline summary for dm%");
    report->add_option("--table", table, "Static metric table (mtac-table/1) to tabulate dm% for");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*run) return cmd_run(config_path);
        if (*sweep) return cmd_sweep(config_path);
        if (*check) return cmd_oracle_check(config_path, dump_path);
        if (*report) return cmd_report(summaries, baseline, table);
    } catch (const mtac::IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const mtac::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kSchema;
    } catch (const mtac::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumeric;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumeric;
    }
    return kUsage;
}
