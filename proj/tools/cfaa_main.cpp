#include "cfaa/config.hpp"
#include "cfaa/runner.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <string>

namespace {

struct Pending {
    std::string config_path;
    std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* sub, Pending& pending) {
    sub->add_option("--config", pending.config_path,
                    "configuration file with key = value lines");
    for (const cfaa::config::KeySpec& spec : cfaa::config::schema()) {
        const std::string name = spec.name;
        sub->add_option_function<std::string>(
            "--" + name,
            [&pending, name](const std::string& value) { pending.overrides[name] = value; },
            std::string("override config key ") + name + " (default: " +
                (spec.default_value[0] ? spec.default_value : "empty") + ")");
    }
}

cfaa::config::RunConfig resolve(const Pending& pending) {
    cfaa::config::RunConfig cfg = cfaa::config::RunConfig::defaults();
    if (!pending.config_path.empty()) {
        cfg.load_file(pending.config_path);
    }
    for (const auto& [key, value] : pending.overrides) {
        cfg.set(key, value);  // command-line overrides win
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-domain recommender with embedding attribution alignment"};
    app.require_subcommand(1);

    struct Command {
        const char* name;
        const char* help;
        std::function<void(const cfaa::config::RunConfig&)> run;
        Pending pending;
    };
    Command commands[] = {
        {"synth-data", "generate a two-domain synthetic benchmark dataset",
         cfaa::runner::run_synth_data, {}},
        {"featurize", "hash review texts from a ratings file into embedding containers",
         cfaa::runner::run_featurize, {}},
        {"train", "train a model and write a checkpoint plus per-step loss log",
         cfaa::runner::run_train, {}},
        {"evaluate", "rank held-out target positives for a checkpoint",
         cfaa::runner::run_evaluate, {}},
        {"align-diagnostics",
         "alignment losses, domain probes, and embedding dumps for a checkpoint",
         cfaa::runner::run_align_diagnostics, {}},
    };
    for (Command& cmd : commands) {
        add_config_flags(app.add_subcommand(cmd.name, cmd.help), cmd.pending);
    }

    CLI11_PARSE(app, argc, argv);

    for (Command& cmd : commands) {
        if (app.got_subcommand(cmd.name)) {
            try {
                cmd.run(resolve(cmd.pending));
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 1;
            }
            return 0;
        }
    }
    return 1;
}
