#include "mfe/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mfe::cli {

using nlohmann::json;
using nlohmann::ordered_json;

Command parse_command(const std::string& name) {
    if (name == "stationary") return Command::Stationary;
    if (name == "solve") return Command::Solve;
    if (name == "table1") return Command::Table1;
    if (name == "simulate") return Command::Simulate;
    throw std::invalid_argument("unknown command '" + name + "'");
}

Format parse_format(const std::string& name) {
    if (name == "csv") return Format::Csv;
    if (name == "json") return Format::Json;
    throw std::invalid_argument("unknown format '" + name + "' (expected csv or json)");
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const json& obj, const char* key, T& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("bad value for '") + key + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, std::optional<T>& target) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    T value{};
    read(obj, key, value);
    target = value;
}

RewardFn parse_reward(const json& node) {
    if (node.is_string()) return RewardFn::from_name(node.get<std::string>());
    reject_unknown(node, {"name", "table", "scale"}, "reward");
    RewardFn f = RewardFn::inverse_n();
    if (node.contains("table")) {
        if (node.contains("name")) throw std::invalid_argument("reward takes either a name or a table");
        std::vector<double> values;
        read(node, "table", values);
        f = RewardFn::table(std::move(values));
    } else if (node.contains("name")) {
        std::string name;
        read(node, "name", name);
        f = RewardFn::from_name(name);
    } else {
        throw std::invalid_argument("reward object needs a 'name' or a 'table'");
    }
    double scale = 1.0;
    read(node, "scale", scale);
    return f.scaled(scale);
}

std::optional<ThresholdPolicy> parse_policy(const json& node) {
    if (node.is_string()) {
        if (node.get<std::string>() == "equilibrium") return std::nullopt;
        throw std::invalid_argument("policy must be [n0, n1] or \"equilibrium\"");
    }
    if (!node.is_array() || node.size() != 2 || !node[0].is_number() || !node[1].is_number())
        throw std::invalid_argument("policy must be [n0, n1] or \"equilibrium\"");
    ThresholdPolicy p{node[0].get<double>(), node[1].get<double>()};
    p.validate();
    return p;
}

StoppingSolver parse_solver(const std::string& name) {
    if (name == "policy_iteration") return StoppingSolver::PolicyIteration;
    if (name == "value_iteration") return StoppingSolver::ValueIteration;
    throw std::invalid_argument("unknown solver '" + name + "'");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char ch : s) {
        if (ch == '"') quoted += '"';
        quoted += ch;
    }
    return quoted + "\"";
}

std::string format_count(std::uint64_t x) { return std::to_string(x); }

std::string reward_label(const RewardFn& f) { return f.name(); }

bool degenerate(const ModelParams& params) { return params.reward.identically_zero(); }

ThresholdPolicy resolve_policy(const RunSpec& spec, std::ostream& err) {
    if (spec.policy) return *spec.policy;
    err << "no policy given, solving for the equilibrium head candidate\n";
    SearchConfig cfg = spec.search;
    cfg.threads = spec.threads;
    cfg.keep = 1;
    const SearchResult result = search(spec.params, cfg);
    if (result.ranked.empty()) throw NumericalError("equilibrium search produced no candidate");
    const ThresholdPolicy p = result.ranked.front().policy;
    err << "using policy (" << format_number(p.n0) << ", " << format_number(p.n1) << ")\n";
    return p;
}

ordered_json params_json(const ModelParams& p) {
    ordered_json j;
    j["lambda"] = p.lambda;
    j["gamma"] = p.gamma;
    j["beta"] = p.beta;
    j["mu01"] = p.mu01;
    j["mu10"] = p.mu10;
    j["reward"] = reward_label(p.reward);
    return j;
}

ordered_json box_json(const ThresholdBox& box) {
    return ordered_json{{"n0", {box[0].lo, box[0].hi}}, {"n1", {box[1].lo, box[1].hi}}};
}

void emit_json(std::ostream& out, const ordered_json& j) { out << j.dump(2) << "\n"; }

int cmd_stationary(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    const ThresholdPolicy policy = resolve_policy(spec, err);
    const KappaCalibration cal = calibrate_kappa(spec.params, policy, spec.search.trunc, spec.search.epsilon);
    const double occupancy = mean_occupancy(cal.pi);
    if (cal.pi.boundary_mass() > 1e-8)
        err << "warning: mass " << format_number(cal.pi.boundary_mass()) << " on the truncation boundary\n";
    const std::size_t nmax = cal.pi.nmax();
    if (spec.format == Format::Json) {
        ordered_json j;
        j["params"] = params_json(spec.params);
        j["policy"] = {policy.n0, policy.n1};
        j["kappa"] = cal.kappa;
        j["mean_occupancy"] = occupancy;
        j["nmax"] = nmax;
        j["bisections"] = cal.bisections;
        ordered_json rows = ordered_json::array();
        for (std::size_t n = 0; n < nmax; ++n) {
            for (int z = 0; z < 2; ++z) rows.push_back({{"z", z}, {"n", n}, {"prob", cal.pi(z, n)}});
        }
        j["pi"] = std::move(rows);
        emit_json(out, j);
        return 0;
    }
    Table t{{"z", "n", "prob", "kappa", "mean_occupancy"}, {}};
    const std::string kappa = format_number(cal.kappa);
    const std::string occ = format_number(occupancy);
    for (std::size_t n = 0; n < nmax; ++n) {
        for (int z = 0; z < 2; ++z)
            t.rows.push_back({std::to_string(z), std::to_string(n), format_number(cal.pi(z, n)), kappa, occ});
    }
    write_csv(out, t);
    return 0;
}

int cmd_solve(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    SearchConfig cfg = spec.search;
    cfg.threads = spec.threads;
    const SearchResult result = search(spec.params, cfg);
    for (const SkippedCell& s : result.skipped) {
        err << "skipped policy (" << format_number(s.policy.n0) << ", " << format_number(s.policy.n1)
            << "): " << s.reason << "\n";
    }
    const bool flat = degenerate(spec.params);
    if (flat) err << "reward is identically zero: every policy is an equilibrium, result is degenerate\n";

    if (spec.format == Format::Json) {
        ordered_json j;
        j["params"] = params_json(spec.params);
        j["payoff_bounds"] = {{"c_bar", result.payoff_bounds.c_bar}, {"c_under", result.payoff_bounds.c_under}};
        j["compactness_radius"] = result.m_radius ? ordered_json(*result.m_radius) : ordered_json(nullptr);
        j["payoff_grid"] = {{"lo", result.payoff_range.lo}, {"hi", result.payoff_range.hi},
                            {"step", result.payoff_range.step}};
        j["best_d_per_level"] = result.best_d_per_level;
        j["evaluated_cells"] = result.scores.size();
        j["skipped_policies"] = result.skipped.size();
        j["degenerate"] = flat;
        ordered_json cands = ordered_json::array();
        for (std::size_t i = 0; i < result.ranked.size(); ++i) {
            const EquilibriumCandidate& c = result.ranked[i];
            cands.push_back({{"rank", i + 1},
                             {"n0", c.policy.n0},
                             {"n1", c.policy.n1},
                             {"c", c.c},
                             {"kappa", c.kappa},
                             {"c_tilde", c.c_tilde},
                             {"dist", c.dist},
                             {"d", c.d},
                             {"box", box_json(c.box)}});
        }
        j["candidates"] = std::move(cands);
        emit_json(out, j);
        return 0;
    }
    Table t{{"rank", "n0", "n1", "c", "kappa", "c_tilde", "dist", "d", "box_n0_lo", "box_n0_hi", "box_n1_lo",
             "box_n1_hi", "degenerate"},
            {}};
    for (std::size_t i = 0; i < result.ranked.size(); ++i) {
        const EquilibriumCandidate& c = result.ranked[i];
        t.rows.push_back({std::to_string(i + 1), format_number(c.policy.n0), format_number(c.policy.n1),
                          format_number(c.c), format_number(c.kappa), format_number(c.c_tilde),
                          format_number(c.dist), format_number(c.d), format_number(c.box[0].lo),
                          format_number(c.box[0].hi), format_number(c.box[1].lo), format_number(c.box[1].hi),
                          flat ? "true" : "false"});
    }
    write_csv(out, t);
    return 0;
}

int cmd_table1(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    const auto rows = solve_table1(spec, [&](const Table1Row& row) {
        err << "cell f=" << row.reference.reward << " mu=" << format_number(row.reference.mu) << ": "
            << (row.head ? "d=" + format_number(row.head->d) : "failed: " + row.error) << "\n";
    });
    int code = 0;
    for (const auto& row : rows) {
        if (!row.head) code = 1;
    }
    if (spec.format == Format::Json) {
        ordered_json cells = ordered_json::array();
        for (const auto& row : rows) {
            ordered_json j;
            j["reward"] = row.reference.reward;
            j["mu"] = row.reference.mu;
            j["reported"] = {{"c", row.reference.c}, {"n0", row.reference.n0}, {"n1", row.reference.n1}};
            if (row.head) {
                const EquilibriumCandidate& h = *row.head;
                j["computed"] = {{"c", h.c},         {"n0", h.policy.n0}, {"n1", h.policy.n1},
                                 {"kappa", h.kappa}, {"c_tilde", h.c_tilde}, {"dist", h.dist},
                                 {"d", h.d},         {"box", box_json(h.box)}};
                j["deviation"] = {{"c", std::abs(h.c - row.reference.c)},
                                  {"n0", std::abs(h.policy.n0 - row.reference.n0)},
                                  {"n1", std::abs(h.policy.n1 - row.reference.n1)}};
            } else {
                j["error"] = row.error;
            }
            cells.push_back(std::move(j));
        }
        emit_json(out, ordered_json{{"cells", std::move(cells)}});
        return code;
    }
    Table t{{"reward", "mu", "reported_c", "reported_n0", "reported_n1", "c", "n0", "n1", "c_tilde", "d",
             "dev_c", "dev_n0", "dev_n1", "status"},
            {}};
    for (const auto& row : rows) {
        const Table1Reference& r = row.reference;
        std::vector<std::string> cells{r.reward, format_number(r.mu), format_number(r.c), format_number(r.n0),
                                       format_number(r.n1)};
        if (row.head) {
            const EquilibriumCandidate& h = *row.head;
            for (double v : {h.c, h.policy.n0, h.policy.n1, h.c_tilde, h.d, std::abs(h.c - r.c),
                             std::abs(h.policy.n0 - r.n0), std::abs(h.policy.n1 - r.n1)})
                cells.push_back(format_number(v));
            cells.emplace_back("ok");
        } else {
            for (int i = 0; i < 8; ++i) cells.emplace_back();
            cells.push_back("error: " + row.error);
        }
        t.rows.push_back(std::move(cells));
    }
    write_csv(out, t);
    return code;
}

int cmd_simulate(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    SimConfig cfg = spec.sim;
    cfg.params = spec.params;
    cfg.policy = resolve_policy(spec, err);
    std::optional<Distribution> reference;
    if (spec.reference_pi) {
        std::ifstream in(*spec.reference_pi);
        if (!in) throw std::invalid_argument("cannot open reference distribution '" + *spec.reference_pi + "'");
        reference = read_distribution_csv(in);
    }
    const SimResult r = simulate(cfg);
    const double tv = reference ? r.tv_to(*reference) : 0.0;
    const Distribution& emp = r.empirical_dist;

    if (spec.format == Format::Json) {
        ordered_json j;
        j["params"] = params_json(spec.params);
        j["policy"] = {cfg.policy.n0, cfg.policy.n1};
        j["k"] = cfg.k;
        j["agents"] = cfg.agents();
        j["horizon"] = cfg.horizon;
        j["burn_in"] = cfg.burn_in;
        j["seed"] = cfg.seed;
        j["welfare"] = welfare(r);
        j["mean_reward_per_epoch"] = r.mean_reward_per_epoch;
        j["tv"] = reference ? ordered_json(tv) : ordered_json(nullptr);
        j["event_counts"] = {{"epochs", r.event_counts.epochs},
                             {"departures", r.event_counts.departures},
                             {"switches", r.event_counts.switches},
                             {"flips", r.event_counts.flips}};
        ordered_json snaps = ordered_json::array();
        for (const Snapshot& s : r.snapshots) {
            snaps.push_back({{"time", s.time},
                             {"rich_fraction", s.rich_fraction},
                             {"empty_fraction", s.empty_fraction},
                             {"max_occupancy", s.max_occupancy}});
        }
        j["snapshots"] = std::move(snaps);
        ordered_json dist = ordered_json::array();
        for (std::size_t n = 0; n < emp.nmax(); ++n) {
            for (int z = 0; z < 2; ++z) dist.push_back({{"z", z}, {"n", n}, {"prob", emp(z, n)}});
        }
        j["empirical_dist"] = std::move(dist);
        emit_json(out, j);
        return 0;
    }
    // Long format: scalar metrics first, then the empirical distribution.
    Table t{{"metric", "z", "n", "value"}, {}};
    auto scalar = [&](const std::string& name, const std::string& value) { t.rows.push_back({name, "", "", value}); };
    scalar("welfare", format_number(welfare(r)));
    scalar("mean_reward_per_epoch", format_number(r.mean_reward_per_epoch));
    scalar("tv", reference ? format_number(tv) : "");
    scalar("epochs", format_count(r.event_counts.epochs));
    scalar("departures", format_count(r.event_counts.departures));
    scalar("switches", format_count(r.event_counts.switches));
    scalar("flips", format_count(r.event_counts.flips));
    for (std::size_t n = 0; n < emp.nmax(); ++n) {
        for (int z = 0; z < 2; ++z)
            t.rows.push_back({"prob", std::to_string(z), std::to_string(n), format_number(emp(z, n))});
    }
    write_csv(out, t);
    return 0;
}

}  // namespace

RunSpec parse_run_spec(const json& doc, Command command) {
    RunSpec spec;
    spec.command = command;
    if (doc.is_null()) return spec;
    reject_unknown(doc,
                   {"lambda", "gamma", "beta", "mu", "mu01", "mu10", "reward", "policy", "nmax", "threads",
                    "format", "search", "sim"},
                   "configuration");
    ModelParams& p = spec.params;
    read(doc, "lambda", p.lambda);
    read(doc, "gamma", p.gamma);
    read(doc, "beta", p.beta);
    if (doc.contains("mu")) {
        if (doc.contains("mu01") || doc.contains("mu10"))
            throw std::invalid_argument("give either 'mu' or 'mu01'/'mu10', not both");
        read(doc, "mu", p.mu01);
        p.mu10 = p.mu01;
    }
    read(doc, "mu01", p.mu01);
    read(doc, "mu10", p.mu10);
    if (doc.contains("reward")) p.reward = parse_reward(doc.at("reward"));
    if (doc.contains("policy")) spec.policy = parse_policy(doc.at("policy"));
    read(doc, "nmax", spec.search.trunc.nmax);
    read(doc, "threads", spec.threads);
    if (doc.contains("format")) {
        std::string f;
        read(doc, "format", f);
        spec.format = parse_format(f);
    }
    if (doc.contains("search")) {
        const json& s = doc.at("search");
        reject_unknown(s,
                       {"n_hi", "resolution", "c_min", "c_max", "c_resolution", "levels", "refinement_factor",
                        "top_q", "epsilon", "tol_eq", "solver", "keep"},
                       "search");
        SearchConfig& c = spec.search;
        read(s, "n_hi", c.n_hi);
        read(s, "resolution", c.resolution);
        read(s, "c_min", c.c_min);
        read(s, "c_max", c.c_max);
        read(s, "c_resolution", c.c_resolution);
        read(s, "levels", c.levels);
        read(s, "refinement_factor", c.refinement_factor);
        read(s, "top_q", c.top_q);
        read(s, "epsilon", c.epsilon);
        read(s, "tol_eq", c.tol_eq);
        read(s, "keep", c.keep);
        if (s.contains("solver")) {
            std::string name;
            read(s, "solver", name);
            c.solver = parse_solver(name);
        }
    }
    if (doc.contains("sim")) {
        const json& s = doc.at("sim");
        reject_unknown(s, {"k", "horizon", "burn_in", "seed", "snapshot_interval", "exclude_self", "reference_pi"},
                       "sim");
        SimConfig& c = spec.sim;
        read(s, "k", c.k);
        read(s, "horizon", c.horizon);
        read(s, "burn_in", c.burn_in);
        read(s, "seed", c.seed);
        read(s, "snapshot_interval", c.snapshot_interval);
        read(s, "exclude_self", c.exclude_self);
        read(s, "reference_pi", spec.reference_pi);
    }
    p.validate();
    spec.search.validate();
    return spec;
}

RunSpec load_run_spec(const std::string& path, Command command) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open configuration '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("configuration '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_run_spec(doc, command);
}

void write_csv(std::ostream& out, const Table& table) {
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) out << ',';
            out << csv_field(fields[i]);
        }
        out << "\r\n";
    };
    line(table.header);
    for (const auto& row : table.rows) line(row);
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

Distribution read_distribution_csv(std::istream& in) {
    std::string line;
    auto split = [](std::string s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
        std::vector<std::string> fields;
        std::stringstream ss(s);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        return fields;
    };
    if (!std::getline(in, line)) throw std::invalid_argument("reference distribution is empty");
    const auto header = split(line);
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
    for (const char* name : {"z", "n", "prob"}) {
        if (!column.count(name))
            throw std::invalid_argument(std::string("reference distribution lacks column '") + name + "'");
    }
    std::map<std::pair<std::size_t, int>, double> mass;
    std::size_t top = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        try {
            const int z = std::stoi(f.at(column["z"]));
            const auto n = static_cast<std::size_t>(std::stoul(f.at(column["n"])));
            const double prob = std::stod(f.at(column["prob"]));
            if ((z != 0 && z != 1) || !(prob >= 0.0)) throw std::invalid_argument("out of range");
            mass[{n, z}] += prob;
            top = std::max(top, n);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad reference distribution row at line " + std::to_string(lineno));
        }
    }
    if (mass.empty()) throw std::invalid_argument("reference distribution has no rows");
    std::vector<double> probs(2 * (top + 1), 0.0);
    for (const auto& [key, value] : mass) probs[2 * key.first + static_cast<std::size_t>(key.second)] = value;
    return Distribution(top + 1, std::move(probs));
}

const std::array<Table1Reference, 15>& table1_reference() {
    static const std::array<Table1Reference, 15> cells{{
        {"1/sqrt(n)", 0.1, 2.80, 1.0, 43.9},  {"1/sqrt(n)", 0.5, 2.39, 4.3, 43.8},
        {"1/sqrt(n)", 1.0, 2.63, 1.0, 27.2},  {"1/sqrt(n)", 10.0, 2.37, 11.0, 18.2},
        {"1/sqrt(n)", 100.0, 2.46, 11.0, 12.0}, {"1/n", 0.1, 1.98, 1.0, 4.0},
        {"1/n", 0.5, 1.72, 1.0, 4.0},         {"1/n", 1.0, 0.96, 1.0, 10.4},
        {"1/n", 10.0, 0.93, 4.0, 7.1},        {"1/n", 100.0, 0.97, 4.0, 4.0},
        {"1/n^2", 0.1, 0.14, 1.0, 7.7},       {"1/n^2", 0.5, 0.25, 1.0, 4.7},
        {"1/n^2", 1.0, 0.18, 1.0, 5.0},       {"1/n^2", 10.0, 0.16, 3.0, 5.0},
        {"1/n^2", 100.0, 0.80, 1.0, 8.0},
    }};
    return cells;
}

std::vector<Table1Row> solve_table1(const RunSpec& spec, const std::function<void(const Table1Row&)>& progress) {
    std::vector<Table1Row> rows;
    for (const Table1Reference& ref : table1_reference()) {
        Table1Row row{ref, std::nullopt, {}};
        try {
            ModelParams params = spec.params;
            params.mu01 = params.mu10 = ref.mu;
            params.reward = RewardFn::from_name(ref.reward);
            SearchConfig cfg = spec.search;
            cfg.threads = spec.threads;
            cfg.keep = 1;
            SearchResult result = search(params, cfg);
            if (result.ranked.empty()) throw NumericalError("search produced no candidate");
            row.head = std::move(result.ranked.front());
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        if (progress) progress(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

int run(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    try {
        switch (spec.command) {
        case Command::Stationary: return cmd_stationary(spec, out, err);
        case Command::Solve: return cmd_solve(spec, out, err);
        case Command::Table1: return cmd_table1(spec, out, err);
        case Command::Simulate: return cmd_simulate(spec, out, err);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace mfe::cli
