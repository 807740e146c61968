// qflow run <config> [--out DIR] [--seed N]
// qflow check <config>
//
// Exit status: 1 for invalid input, 2 for numerical failure, 0 otherwise.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qflow/experiments.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    qflow::require(static_cast<bool>(is), "cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Q-tensor gradient flow experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "config file")->required();
    auto* out_opt = run->add_option("--out", out_dir, "output directory (overrides 'out')");
    auto* seed_opt = run->add_option("--seed", seed, "random seed (overrides 'seed')");

    std::string check_path;
    auto* check = app.add_subcommand("check", "validate a config file without running it");
    check->add_option("config", check_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*check) {
            const qflow::ExperimentConfig cfg = qflow::parse_config(read_file(check_path));
            std::cout << "ok: " << cfg.experiment << '\n';
            return 0;
        }
        std::map<std::string, std::string> overrides;
        if (*out_opt) overrides["out"] = out_dir;
        if (*seed_opt) overrides["seed"] = std::to_string(seed);
        const qflow::ExperimentConfig cfg = qflow::parse_config(read_file(config_path), overrides);
        const qflow::ExperimentReport rep = qflow::run_experiment(cfg);
        std::cout << cfg.experiment << ": " << (rep.summary["passed"].get<bool>() ? "all invariants hold" : "invariant violated")
                  << " (" << rep.directory.string() << ")\n";
        for (const auto& inv : rep.summary["invariants"])
            std::cout << "  " << (inv["pass"].get<bool>() ? "ok  " : "FAIL") << ' ' << inv["name"].get<std::string>()
                      << " = " << inv["measured"].dump() << ' ' << inv["relation"].get<std::string>() << ' '
                      << inv["tolerance"].dump() << '\n';
        return 0;
    } catch (const qflow::PreconditionError& e) {
        std::cerr << "qflow: " << e.what() << '\n';
        return 1;
    } catch (const qflow::NumericalError& e) {
        std::cerr << "qflow: numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "qflow: " << e.what() << '\n';
        return 1;
    }
}
