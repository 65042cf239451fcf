#include "normkit/errors.hpp"
#include "normkit/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
    CLI::App app{"normkit: multimodal normative modelling"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    std::optional<std::size_t> latent_dim;
    std::optional<std::string> out;

    for (const char* name : {"generate", "train", "evaluate", "compare", "interpret"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "key=value config file")->required();
        sub->add_option("--seed", seed);
        sub->add_option("--strategy", strategy, "poe, moe, gpoe or mopoe");
        sub->add_option("--latent-dim", latent_dim);
        sub->add_option("--out", out, "output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        auto cfg = normkit::load_run_config(config_path);
        if (seed) {
            normkit::apply_config_value(cfg, "seed", std::to_string(*seed));
        }
        if (strategy) {
            normkit::apply_config_value(cfg, "strategy", *strategy);
        }
        if (latent_dim) {
            normkit::apply_config_value(cfg, "latent_dim", std::to_string(*latent_dim));
        }
        if (out) {
            normkit::apply_config_value(cfg, "out", *out);
        }
        const auto result = normkit::run_command(command, cfg);
        for (const auto& p : result.outputs) {
            std::cout << p.generic_string() << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "normkit " << command << ": " << e.what() << '\n';
        return normkit::exit_code_for(e);
    }
}
