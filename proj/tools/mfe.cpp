#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mfe/cli.hpp"

namespace {

std::optional<unsigned> threads_from_env() {
    const char* value = std::getenv("MFE_THREADS");
    if (value == nullptr || *value == '\0') return std::nullopt;
    try {
        const unsigned long n = std::stoul(value);
        if (n == 0) throw std::invalid_argument("zero");
        return static_cast<unsigned>(n);
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("MFE_THREADS must be a positive integer, got '") + value + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean field equilibrium solver for nomadic agents competing for resources"};
    std::string command;
    std::string config;
    std::optional<std::string> format;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> reference;

    app.add_option("command", command, "stationary | solve | table1 | simulate")
        ->required()
        ->check(CLI::IsMember({"stationary", "solve", "table1", "simulate"}));
    app.add_option("--config", config, "JSON configuration file");
    app.add_option("--format", format, "csv (default) or json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--out", out, "write data here instead of standard output");
    app.add_option("--seed", seed, "simulation seed");
    app.add_option("--threads", threads, "worker threads (fallback: MFE_THREADS)")->check(CLI::PositiveNumber);
    app.add_option("--reference-pi", reference, "CSV with columns z,n,prob to compare a simulation against");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    mfe::cli::RunSpec spec;
    try {
        const mfe::cli::Command cmd = mfe::cli::parse_command(command);
        spec = config.empty() ? mfe::cli::parse_run_spec(nullptr, cmd) : mfe::cli::load_run_spec(config, cmd);
        if (format) spec.format = mfe::cli::parse_format(*format);
        if (seed) spec.sim.seed = *seed;
        if (reference) spec.reference_pi = reference;
        if (threads) {
            spec.threads = *threads;
        } else if (auto env = threads_from_env()) {
            spec.threads = *env;
        }
        if (out) spec.out = out;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    if (spec.out) {
        std::ofstream file(*spec.out, std::ios::binary);
        if (!file) {
            std::cerr << "error: cannot write '" << *spec.out << "'\n";
            return 2;
        }
        const int code = mfe::cli::run(spec, file, std::cerr);
        file.flush();
        if (!file) {
            std::cerr << "error: writing '" << *spec.out << "' failed\n";
            return 1;
        }
        return code;
    }
    return mfe::cli::run(spec, std::cout, std::cerr);
}
