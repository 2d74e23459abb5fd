#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include <unistd.h>

#include <mtac/experiment.hpp>

using namespace mtac;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mtac_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json small_config() {
    return json{{"name", "small"},
                {"mdp", {{"builder", "conflict_chain"}}},
                {"algorithm", "ca"},
                {"T", 5},
                {"n_critic", 200},
                {"n_actor", 20},
                {"n_ca", 20},
                {"beta", 5.0},
                {"c", 1.0},
                {"record_timing", false},
                {"seeds", {1, 2}}};
}

std::string body_of(const std::string& csv) {
    // everything after the version comment line
    return csv.substr(csv.find('\n') + 1);
}

}  // namespace

TEST(DeltaM, IdenticalMetricsGiveZero) {
    const std::vector<double> m{0.3, 0.7, 1.2};
    EXPECT_DOUBLE_EQ(delta_m_percent(m, m, {true, false, true}), 0.0);
}

TEST(DeltaM, SignFollowsDirection) {
    // larger is better: an improvement counts as a negative drop
    EXPECT_NEAR(delta_m_percent({1.1}, {1.0}, {true}), -10.0, 1e-12);
    EXPECT_NEAR(delta_m_percent({1.1}, {1.0}, {false}), 10.0, 1e-12);
    EXPECT_NEAR(delta_m_percent({2.0, 0.5}, {1.0, 1.0}, {true, true}), -25.0, 1e-12);
}

TEST(DeltaM, ZeroBaselineIsAnExplicitError) {
    EXPECT_THROW(delta_m_percent({1.0, 1.0}, {1.0, 0.0}, {true, true}), std::domain_error);
    EXPECT_THROW(delta_m_percent({1.0}, {1.0, 2.0}, {true, true}), ConfigError);
}

TEST(DeltaM, ShippedTableFixture) {
    const auto doc = parse_json_text(read_file(fs::path(MTAC_SOURCE_DIR) / "configs" / "mt10_table2.json"), "table");
    const auto rows = table_delta_m(doc);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].first, "5 steps");
    EXPECT_NEAR(rows[0].second, -9.33, 0.01);
    EXPECT_EQ(rows[1].first, "10 steps");
    EXPECT_NEAR(rows[1].second, -15.67, 0.01);
}

TEST(Metrics, SlopeMedianMean) {
    EXPECT_NEAR(least_squares_slope({3.0, 2.0, 1.0, 0.0}), -1.0, 1e-12);
    EXPECT_NEAR(least_squares_slope({1.0, NAN, 3.0}), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(median({5.0, 1.0, 3.0}), 3.0);
    EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_DOUBLE_EQ(mean({1.0, NAN, 3.0}), 2.0);
}

TEST(Schema, UnknownTopLevelKeyIsNamed) {
    json j = small_config();
    j["n_criitc"] = 10;
    try {
        parse_spec(j);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("n_criitc"), std::string::npos) << e.what();
    }
}

TEST(Schema, UnknownNestedKeyIsNamed) {
    json j = small_config();
    j["mdp"]["gama"] = 0.9;
    try {
        parse_spec(j);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("gama"), std::string::npos) << e.what();
    }
}

TEST(Schema, TypeAndRangeErrors) {
    json j = small_config();
    j["T"] = "ten";
    EXPECT_THROW(parse_spec(j), ConfigError);
    j = small_config();
    j["beta"] = -1.0;
    EXPECT_THROW(parse_spec(j), ConfigError);
    j = small_config();
    j["algorithm"] = "pcgrad";
    EXPECT_THROW(parse_spec(j), ConfigError);
    j = small_config();
    j["seeds"] = json::array();
    EXPECT_THROW(parse_spec(j), ConfigError);
    j = small_config();
    j["sweep"] = {{"parameter", "n_ca"}, {"values", {10.5}}};
    EXPECT_THROW(parse_spec(j), ConfigError);
    EXPECT_THROW(parse_json_text("{ not json", "inline"), ConfigError);
}

TEST(Schema, ShippedConfigsParse) {
    for (const auto& entry : fs::directory_iterator(fs::path(MTAC_SOURCE_DIR) / "configs")) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != ".json" || name == "mt10_table2.json" || name.find(".mdp.") != std::string::npos)
            continue;
        EXPECT_NO_THROW(load_spec(entry.path())) << name;
    }
}

TEST(Fixture, RoundTripPreservesMdpAndFingerprint) {
    const auto m = build_random_mdp(3, 4, 3, 2, 0.8, 0.2);
    const auto text = mdp_to_json(m).dump();
    const auto back = mdp_from_json(json::parse(text));
    ASSERT_EQ(back.num_states, m.num_states);
    ASSERT_EQ(back.num_tasks, m.num_tasks);
    for (int k = 0; k < m.num_tasks; ++k) {
        EXPECT_EQ(back.transitions[k], m.transitions[k]);
        EXPECT_EQ(back.rewards[k], m.rewards[k]);
    }
    EXPECT_EQ(back.initial_dist, m.initial_dist);
    EXPECT_EQ(mdp_fingerprint(back), mdp_fingerprint(m));
    EXPECT_NE(mdp_fingerprint(m), mdp_fingerprint(build_conflict_chain()));
}

TEST(Fixture, InvalidFixtureRejected) {
    json j = mdp_to_json(build_conflict_chain());
    j["tasks"][0]["transitions"][0][0][0] = 5.0;
    EXPECT_THROW(mdp_from_json(j), ConfigError);
    j = mdp_to_json(build_conflict_chain());
    j["extra"] = 1;
    EXPECT_THROW(mdp_from_json(j), ConfigError);
}

TEST(Fixture, ShippedChainFixtureMatchesBuilder) {
    const auto spec = load_spec(fs::path(MTAC_SOURCE_DIR) / "configs" / "fixture_chain.json");
    EXPECT_EQ(mdp_fingerprint(build_mdp(spec.mdp)), mdp_fingerprint(build_conflict_chain()));
}

TEST(Csv, HeaderIsVersionedAndParses) {
    TrainingTrace trace;
    TraceRow row;
    row.t = 0;
    row.lambda = VectorXd::Constant(2, 0.5);
    row.objective = VectorXd::Constant(2, 1.25);
    row.pareto_gap = 0.125;
    trace.rows.push_back(row);
    const auto csv = trace_to_csv(trace, 2);
    EXPECT_EQ(csv.rfind(std::string("# ") + kTraceVersion, 0), 0u);
    const auto table = parse_csv(csv);
    EXPECT_EQ(table.version_line.substr(0, 15), "# mtac-trace v1");
    ASSERT_EQ(table.columns.size(), 9u);
    EXPECT_EQ(table.columns[0], "t");
    EXPECT_EQ(table.columns[1], "lambda_1");
    EXPECT_EQ(table.columns[3], "J_1");
    ASSERT_EQ(table.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(table.rows[0][table.column("pareto_gap")], 0.125);
    EXPECT_TRUE(std::isnan(table.rows[0][table.column("ca_distance")]));
    EXPECT_THROW(table.column("nope"), ConfigError);
}

TEST(RunExperiment, ZeroStepsGivesEmptyTracesAndInitialMetrics) {
    json j = small_config();
    j["T"] = 0;
    const auto dir = scratch_dir("t0");
    const auto summary = run_experiment(parse_spec(j), dir);
    for (std::uint64_t seed : {1, 2}) {
        const auto table = parse_csv(read_file(dir / ("trace_seed" + std::to_string(seed) + ".csv")));
        EXPECT_FALSE(table.columns.empty());
        EXPECT_TRUE(table.rows.empty());
    }
    const auto& run = summary.at("runs")[0];
    EXPECT_EQ(run.at("steps").get<int>(), 0);
    const double gap0 = pareto_gap(build_conflict_chain(), SoftmaxPolicy::one_hot(build_conflict_chain()));
    EXPECT_NEAR(run.at("final_pareto_gap").get<double>(), gap0, 1e-15);
    EXPECT_EQ(summary.at("format"), "mtac-summary/1");
    EXPECT_FALSE(any_aborted(summary));
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    fs::remove_all(dir);
}

TEST(RunExperiment, RerunIsByteIdentical) {
    json j = small_config();
    j["trace_critic"] = true;
    j["trace_weights"] = true;
    j["workers"] = 2;
    const auto spec = parse_spec(j);
    const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
    run_experiment(spec, a);
    run_experiment(spec, b);
    for (const char* f : {"trace_seed1.csv", "trace_seed2.csv", "critic_seed1.csv", "weights_seed2.csv"})
        EXPECT_EQ(body_of(read_file(a / f)), body_of(read_file(b / f))) << f;
    EXPECT_EQ(read_file(a / "summary.json"), read_file(b / "summary.json"));
    EXPECT_NE(read_file(a / "trace_seed1.csv"), read_file(a / "trace_seed2.csv"));
    for (const auto& entry : fs::directory_iterator(a)) EXPECT_NE(entry.path().extension(), ".tmp");
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(RunExperiment, SummaryFields) {
    const auto dir = scratch_dir("fields");
    const auto summary = run_experiment(parse_spec(small_config()), dir);
    const auto& run = summary.at("runs")[0];
    for (const char* key : {"final_pareto_gap", "gap_slope", "gap_ratio", "mean_ca_distance", "final_objective",
                            "delta_m_vs_optimal", "visitation_samples", "critic_transitions", "theta_hash"})
        EXPECT_TRUE(run.contains(key)) << key;
    EXPECT_EQ(run.at("critic_transitions").get<long>(), 5L * 2 * 200);
    EXPECT_EQ(run.at("final_objective").size(), 2u);
    EXPECT_EQ(summary.at("aggregate").at("aborted_runs").get<int>(), 0);
    const auto weights = parse_csv(read_file(dir / "trace_seed1.csv"));
    EXPECT_EQ(weights.rows.size(), 5u);
    fs::remove_all(dir);
}

TEST(RunExperiment, AbortIsRecorded) {
    json j = small_config();
    j["lambda_a"] = 1e-320;
    j["seeds"] = {0};
    const auto dir = scratch_dir("abort");
    const auto summary = run_experiment(parse_spec(j), dir);
    EXPECT_TRUE(any_aborted(summary));
    EXPECT_FALSE(summary.at("runs")[0].at("abort_reason").get<std::string>().empty());
    fs::remove_all(dir);
}

TEST(RunExperiment, OutputDirectoryOverride) {
    json j = small_config();
    j["output_dir"] = "configured";
    const auto spec = parse_spec(j);
    ::unsetenv("MTAC_OUTPUT_DIR");
    EXPECT_EQ(resolve_output_dir(spec), fs::path("configured"));
    ::setenv("MTAC_OUTPUT_DIR", "/tmp/elsewhere", 1);
    EXPECT_EQ(resolve_output_dir(spec), fs::path("/tmp/elsewhere"));
    ::unsetenv("MTAC_OUTPUT_DIR");
}

TEST(Sweep, WritesOnePointPerValue) {
    json j = small_config();
    j["T"] = 2;
    j["seeds"] = {0};
    j["sweep"] = {{"parameter", "n_ca"}, {"values", {5, 50}}};
    const auto dir = scratch_dir("sweep");
    const auto sweep = run_sweep(parse_spec(j), dir);
    ASSERT_EQ(sweep.at("points").size(), 2u);
    EXPECT_TRUE(fs::exists(dir / "n_ca_5" / "summary.json"));
    EXPECT_TRUE(fs::exists(dir / "n_ca_50" / "trace_seed0.csv"));
    EXPECT_TRUE(fs::exists(dir / "sweep.json"));
    EXPECT_THROW(run_sweep(parse_spec(small_config()), dir), ConfigError);
    fs::remove_all(dir);
}

TEST(OracleCheck, OneHotPassesWithZeroApproximationError) {
    const auto results = oracle_check(parse_spec(small_config()));
    EXPECT_TRUE(checks_passed(results));
    bool seen = false;
    for (const auto& r : results) {
        if (r.property == "epsilon_app") {
            seen = true;
            EXPECT_EQ(r.status, "pass");
            EXPECT_LE(r.value, 1e-8);
        }
    }
    EXPECT_TRUE(seen);
}

TEST(OracleCheck, DuplicateColumnNamesTheFailure) {
    json j = small_config();
    j["features"] = {{"kind", "one_hot"}, {"duplicate_column", 3}};
    const auto results = oracle_check(parse_spec(j));
    EXPECT_FALSE(checks_passed(results));
    bool named = false;
    for (const auto& r : results)
        if (r.property == "td_fixed_point" && r.status == "fail")
            named = r.detail.find("rank deficient") != std::string::npos;
    EXPECT_TRUE(named);
}

TEST(OracleCheck, DumpHasExactQuantities) {
    const auto dump = oracle_dump(parse_spec(small_config()));
    EXPECT_EQ(dump.at("format"), "mtac-oracle/1");
    EXPECT_EQ(dump.at("tasks").size(), 2u);
    EXPECT_EQ(dump.at("tasks")[0].at("q").size(), 10u);
    EXPECT_NEAR(dump.at("lambda_star")[0].get<double>() + dump.at("lambda_star")[1].get<double>(), 1.0, 1e-12);
}

TEST(Report, DeltaMOnlyForMatchingRuns) {
    const auto dir = scratch_dir("report");
    json base = small_config();
    base["name"] = "fixed";
    base["algorithm"] = "fixed";
    json ca = small_config();
    ca["name"] = "ca";
    json other_seeds = small_config();
    other_seeds["name"] = "other_seeds";
    other_seeds["seeds"] = {7, 8};
    json other_mdp = small_config();
    other_mdp["name"] = "other_mdp";
    other_mdp["mdp"] = {{"builder", "conflict_chain"}, {"gamma", 0.6}};
    std::vector<json> docs;
    for (const auto& j : {base, ca, other_seeds, other_mdp})
        docs.push_back(run_experiment(parse_spec(j), dir / j.at("name").get<std::string>()));
    const auto rows = compare_summaries(docs, "fixed");
    ASSERT_EQ(rows.size(), 4u);
    ASSERT_TRUE(rows[0].delta_m.has_value());
    EXPECT_NEAR(*rows[0].delta_m, 0.0, 1e-12);
    EXPECT_TRUE(rows[1].delta_m.has_value());
    EXPECT_FALSE(rows[2].delta_m.has_value());
    EXPECT_EQ(rows[2].note, "different seed set");
    EXPECT_FALSE(rows[3].delta_m.has_value());
    EXPECT_EQ(rows[3].note, "different MDP");
    EXPECT_NE(format_report(rows, "fixed").find("different MDP"), std::string::npos);
    EXPECT_THROW(compare_summaries(docs, "missing"), ConfigError);
    fs::remove_all(dir);
}
