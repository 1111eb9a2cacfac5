#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mfe/cli.hpp"

using namespace mfe;
using namespace mfe::cli;
using nlohmann::json;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        REQUIRE(!line.empty());
        REQUIRE(line.back() == '\r');
        line.pop_back();
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        rows.push_back(fields);
    }
    return rows;
}

std::string run_to_string(const RunSpec& spec, int expected_code = 0) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run(spec, out, err);
    INFO(err.str());
    CHECK(code == expected_code);
    return out.str();
}

RunSpec small_solve(const json& extra = json::object()) {
    json doc = {{"mu", 10.0},
                {"search", {{"n_hi", 8}, {"resolution", 2}, {"levels", 2}, {"top_q", 2}, {"c_resolution", 1.0},
                            {"keep", 4}}}};
    doc.update(extra);
    return parse_run_spec(doc, Command::Solve);
}

}  // namespace

TEST_CASE("run spec defaults") {
    const RunSpec spec = parse_run_spec(nullptr, Command::Solve);
    CHECK(spec.params.lambda == 1.0);
    CHECK(spec.params.gamma == 0.95);
    CHECK(spec.params.beta == 20.0);
    CHECK(spec.search.trunc.nmax == 200);
    CHECK(spec.search.n_hi == 50.0);
    CHECK(spec.search.resolution == 1.0);
    CHECK(spec.search.levels == 3);
    CHECK(spec.format == Format::Csv);
    CHECK_FALSE(spec.policy.has_value());
}

TEST_CASE("run spec parsing") {
    const json doc = {{"lambda", 2.0},
                      {"mu", 0.5},
                      {"reward", {{"name", "1/sqrt(n)"}, {"scale", 3.0}}},
                      {"policy", {1.5, 4}},
                      {"nmax", 150},
                      {"format", "json"},
                      {"search", {{"levels", 2}, {"solver", "value_iteration"}, {"c_max", 5.0}}},
                      {"sim", {{"k", 30}, {"seed", 9}, {"exclude_self", false}, {"reference_pi", "pi.csv"}}}};
    const RunSpec spec = parse_run_spec(doc, Command::Simulate);
    CHECK(spec.params.lambda == 2.0);
    CHECK(spec.params.mu01 == 0.5);
    CHECK(spec.params.mu10 == 0.5);
    CHECK(spec.params.reward(4) == doctest::Approx(1.5));
    REQUIRE(spec.policy.has_value());
    CHECK(spec.policy->n0 == 1.5);
    CHECK(spec.search.trunc.nmax == 150);
    CHECK(spec.format == Format::Json);
    CHECK(spec.search.solver == StoppingSolver::ValueIteration);
    CHECK(spec.search.c_max.value() == 5.0);
    CHECK(spec.sim.k == 30);
    CHECK(spec.sim.seed == 9);
    CHECK_FALSE(spec.sim.exclude_self);
    CHECK(spec.reference_pi.value() == "pi.csv");

    CHECK(parse_run_spec({{"reward", {{"table", {1.0, 0.5}}}}}, Command::Solve).params.reward(2) == 0.5);
    CHECK_FALSE(parse_run_spec({{"policy", "equilibrium"}}, Command::Solve).policy.has_value());
}

TEST_CASE("run spec errors") {
    CHECK_THROWS_AS(parse_run_spec({{"lamda", 1.0}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"search", {{"levles", 2}}}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"gamma", 1.5}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"gamma", "high"}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"mu", 1.0}, {"mu01", 2.0}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"policy", {1.0}}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"reward", "log"}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_spec({{"format", "xml"}}, Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(load_run_spec("/nonexistent/config.json", Command::Solve), std::invalid_argument);
    CHECK_THROWS_AS(parse_command("plot"), std::invalid_argument);
}

TEST_CASE("csv writer quotes per RFC 4180") {
    std::ostringstream out;
    write_csv(out, Table{{"a", "b"}, {{"plain", "has,comma"}, {"say \"hi\"", ""}}});
    CHECK(out.str() == "a,b\r\nplain,\"has,comma\"\r\n\"say \"\"hi\"\"\",\r\n");
}

TEST_CASE("numbers round-trip") {
    for (double x : {0.1, 1.0 / 3.0, 20.0, 1e-300, 123456789.125}) CHECK(std::stod(format_number(x)) == x);
    CHECK(format_number(20.0) == "20");
}

TEST_CASE("stationary command") {
    RunSpec spec = parse_run_spec({{"policy", {0, 0}}}, Command::Stationary);
    const auto rows = parse_csv(run_to_string(spec));
    REQUIRE(rows.size() == 401);
    CHECK(rows[0] == std::vector<std::string>{"z", "n", "prob", "kappa", "mean_occupancy"});
    double sum = 0.0;
    double rich = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double p = std::stod(rows[i][2]);
        sum += p;
        if (rows[i][0] == "1") rich += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(std::abs(rich - 0.5) <= 1e-8);
    CHECK(std::abs(std::stod(rows[1][3]) - 20.0) <= 1e-4);
    CHECK(std::abs(std::stod(rows[1][4]) - 20.0) <= 1e-6);

    spec.format = Format::Json;
    const json j = json::parse(run_to_string(spec));
    CHECK(j["pi"].size() == 400);
    CHECK(std::abs(j["kappa"].get<double>() - 20.0) <= 1e-4);
}

TEST_CASE("stationary output reads back as a reference distribution") {
    const RunSpec spec = parse_run_spec({{"policy", {1, 4}}, {"mu", 0.1}}, Command::Stationary);
    std::istringstream in(run_to_string(spec));
    const Distribution pi = read_distribution_csv(in);
    CHECK(pi.nmax() == 200);
    CHECK(mean_occupancy(pi) == doctest::Approx(20.0).epsilon(1e-6));

    std::istringstream missing("z,n\r\n0,1\r\n");
    CHECK_THROWS_AS(read_distribution_csv(missing), std::invalid_argument);
    std::istringstream bad("z,n,prob\n3,1,0.5\n");
    CHECK_THROWS_AS(read_distribution_csv(bad), std::invalid_argument);
}

TEST_CASE("solve command: rows, JSON dump and thread independence") {
    RunSpec spec = small_solve();
    const std::string one = run_to_string(spec);
    spec.threads = 4;
    CHECK(run_to_string(spec) == one);
    const auto rows = parse_csv(one);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0][0] == "rank");
    CHECK(rows[0][7] == "d");
    CHECK(rows[1][12] == "false");
    for (std::size_t i = 2; i < rows.size(); ++i) CHECK(std::stod(rows[i][7]) >= std::stod(rows[i - 1][7]));

    spec.format = Format::Json;
    const json j = json::parse(run_to_string(spec));
    CHECK(j["candidates"].size() == 4);
    CHECK(j["payoff_bounds"]["c_bar"].get<double>() == doctest::Approx(20.0));
    CHECK(j["compactness_radius"].is_null());
    CHECK(j["best_d_per_level"].size() == 2);
}

TEST_CASE("solve command flags a zero reward as degenerate") {
    const auto rows = parse_csv(run_to_string(small_solve({{"reward", "zero"}})));
    REQUIRE(rows.size() > 1);
    CHECK(rows[1][12] == "true");
    CHECK(std::stod(rows[1][1]) <= 1.0);
    CHECK(std::stod(rows[1][2]) <= 1.0);
}

TEST_CASE("simulate command is deterministic and compares with a reference") {
    const std::string pi_path = "test_cli_reference_pi.csv";
    {
        std::ofstream f(pi_path);
        f << run_to_string(parse_run_spec({{"policy", {1, 4}}}, Command::Stationary));
    }
    RunSpec spec = parse_run_spec(
        {{"policy", {1, 4}}, {"sim", {{"k", 40}, {"horizon", 400}, {"burn_in", 100}, {"reference_pi", pi_path}}}},
        Command::Simulate);
    const std::string a = run_to_string(spec);
    CHECK(run_to_string(spec) == a);
    spec.sim.seed = 2;
    CHECK(run_to_string(spec) != a);

    const auto rows = parse_csv(a);
    CHECK(rows[0] == std::vector<std::string>{"metric", "z", "n", "value"});
    CHECK(rows[1][0] == "welfare");
    CHECK(rows[3][0] == "tv");
    const double tv = std::stod(rows[3][3]);
    CHECK(tv > 0.0);
    CHECK(tv < 0.2);
    double rich = 0.0;
    for (const auto& r : rows) {
        if (r[0] == "prob" && r[1] == "1") rich += std::stod(r[3]);
    }
    CHECK(std::abs(rich - 0.5) < 0.05);

    spec.format = Format::Json;
    const json j = json::parse(run_to_string(spec));
    CHECK(j["tv"].is_number());
    CHECK(j["agents"] == 800);
    std::remove(pi_path.c_str());
}

TEST_CASE("errors surface as a nonzero exit code") {
    RunSpec spec = parse_run_spec({{"policy", {300, 4}}}, Command::Stationary);
    std::ostringstream out;
    std::ostringstream err;
    CHECK(run(spec, out, err) != 0);
    CHECK(err.str().find("error") != std::string::npos);
    CHECK(out.str().empty());

    RunSpec sim = parse_run_spec({{"policy", {1, 4}}, {"sim", {{"k", 10}, {"reference_pi", "/nonexistent.csv"}}}},
                                 Command::Simulate);
    CHECK(run(sim, out, err) != 0);
}

TEST_CASE("published reference grid") {
    const auto& ref = table1_reference();
    CHECK(ref.size() == 15);
    bool found = false;
    for (const auto& r : ref) {
        if (std::string(r.reward) == "1/sqrt(n)" && r.mu == 100.0) {
            found = true;
            CHECK(r.c == 2.46);
            CHECK(r.n0 == 11.0);
            CHECK(r.n1 == 12.0);
        }
        CHECK_NOTHROW(RewardFn::from_name(r.reward));
    }
    CHECK(found);
}
