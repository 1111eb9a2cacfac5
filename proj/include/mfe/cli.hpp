#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfe/equilibrium.hpp"
#include "mfe/sim.hpp"

namespace mfe::cli {

enum class Command { Stationary, Solve, Table1, Simulate };
enum class Format { Csv, Json };

Command parse_command(const std::string& name);
Format parse_format(const std::string& name);

/// Everything a run needs. Defaults: lambda = 1, gamma = 0.95, beta = 20,
/// nmax = 200, policy window [0, 50]^2.
struct RunSpec {
    Command command = Command::Solve;
    ModelParams params;
    /// Policy for stationary and simulate; empty means "solve for the
    /// equilibrium and use its head candidate".
    std::optional<ThresholdPolicy> policy;
    SearchConfig search;
    SimConfig sim;
    std::optional<std::string> reference_pi;
    Format format = Format::Csv;
    std::optional<std::string> out;
    unsigned threads = 1;
};

/// Reads a configuration document. Unknown keys are rejected.
///
///   { "lambda", "gamma", "beta", "mu" (sets both flip rates), "mu01", "mu10",
///     "reward": "1/n" | "1/n^2" | "1/sqrt(n)" | "zero"
///               | {"name": ..., "scale": x} | {"table": [...], "scale": x},
///     "policy": [n0, n1] | "equilibrium",
///     "nmax", "threads", "format",
///     "search": {"n_hi", "resolution", "c_min", "c_max", "c_resolution",
///                "levels", "refinement_factor", "top_q", "epsilon", "tol_eq",
///                "solver": "policy_iteration" | "value_iteration", "keep"},
///     "sim": {"k", "horizon", "burn_in", "seed", "snapshot_interval",
///             "exclude_self", "reference_pi"} }
///
/// Throws std::invalid_argument on malformed input.
RunSpec parse_run_spec(const nlohmann::json& doc, Command command);
RunSpec load_run_spec(const std::string& path, Command command);

/// A result table with one header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// RFC 4180: comma separated, CRLF line ends, fields quoted when they hold a
/// comma, quote or line break.
void write_csv(std::ostream& out, const Table& table);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

/// Reads a reference distribution from CSV with columns z, n, prob (extra
/// columns are ignored).
Distribution read_distribution_csv(std::istream& in);

struct Table1Reference {
    const char* reward;
    double mu;
    double c;
    double n0;
    double n1;
};

/// The published grid: three rewards by five resource rates.
const std::array<Table1Reference, 15>& table1_reference();

struct Table1Row {
    Table1Reference reference;
    std::optional<EquilibriumCandidate> head;
    std::string error;
};

/// Solves every cell of the published grid with the model and search
/// settings of spec (the flip rates and reward are replaced per cell).
/// Failures are recorded in the row and the run continues.
std::vector<Table1Row> solve_table1(const RunSpec& spec,
                                    const std::function<void(const Table1Row&)>& progress = {});

/// Runs spec.command and writes its data to out; diagnostics go to err.
/// Returns the process exit code: 0 iff no error occurred.
int run(const RunSpec& spec, std::ostream& out, std::ostream& err);

}  // namespace mfe::cli
