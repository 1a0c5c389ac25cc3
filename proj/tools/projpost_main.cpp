// Command-line front end; talks to the library exclusively through the C API.
#include <projpost/projpost.h>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <string>

namespace {

struct CommonArgs {
    std::string config;
    std::string checkpoint;
    std::string samples;
    std::string out = "out";
    int threads = 1;
    std::int64_t seed = 0;
    bool has_seed = false;
};

pp_run_options make_options(const CommonArgs& args) {
    pp_run_options options{};
    options.threads = args.threads;
    options.has_seed = args.has_seed ? 1 : 0;
    options.seed_override = static_cast<uint64_t>(args.seed);
    return options;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_checkpoint, bool needs_samples) {
    cmd->add_option("--config", args.config, "Run config JSON")->required();
    auto* ckpt = cmd->add_option("--checkpoint", args.checkpoint, "Checkpoint file");
    if (needs_checkpoint) ckpt->required();
    auto* samples = cmd->add_option("--samples", args.samples, "Samples file");
    if (needs_samples) samples->required();
    cmd->add_option("--out", args.out, "Output directory");
    cmd->add_option("--threads", args.threads, "Worker threads for projection");
    cmd->add_option("--seed", args.seed, "Seed override")->each([&](const std::string&) {
        args.has_seed = true;
    });
}

int report(pp_status status) {
    if (status != PP_OK) std::fprintf(stderr, "error: %s\n", pp_last_error());
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Projected posteriors for small neural networks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pp_version());

    CommonArgs args;
    CLI::App* train = app.add_subcommand("train", "Train a MAP estimate");
    add_common(train, args, false, false);
    CLI::App* sample = app.add_subcommand("sample", "Draw posterior samples");
    add_common(sample, args, true, false);
    CLI::App* eval = app.add_subcommand("eval", "Evaluate predictive metrics");
    std::string role = "train";
    add_common(eval, args, true, true);
    eval->add_option("--role", role, "Dataset split: train or test");
    CLI::App* ood = app.add_subcommand("ood", "Out-of-distribution scoring");
    add_common(ood, args, true, true);
    CLI::App* diagnose = app.add_subcommand("diagnose", "Projector convergence diagnostics");
    add_common(diagnose, args, false, false);
    CLI::App* plot = app.add_subcommand("plot", "Regression band plot (SVG)");
    add_common(plot, args, true, true);

    CLI11_PARSE(app, argc, argv);

    const pp_run_options options = make_options(args);
    if (train->parsed())
        return report(pp_run_train(args.config.c_str(), args.out.c_str(), &options));
    if (sample->parsed())
        return report(pp_run_sample(args.config.c_str(), args.checkpoint.c_str(),
                                    args.out.c_str(), &options));
    if (eval->parsed())
        return report(pp_run_eval(args.config.c_str(), args.checkpoint.c_str(),
                                  args.samples.c_str(), role.c_str(), args.out.c_str(), &options));
    if (ood->parsed())
        return report(pp_run_ood(args.config.c_str(), args.checkpoint.c_str(),
                                 args.samples.c_str(), args.out.c_str(), &options));
    if (diagnose->parsed())
        return report(pp_run_diagnose(args.config.c_str(),
                                      args.checkpoint.empty() ? nullptr : args.checkpoint.c_str(),
                                      args.out.c_str(), &options));
    if (plot->parsed())
        return report(pp_run_plot(args.config.c_str(), args.checkpoint.c_str(),
                                  args.samples.c_str(), args.out.c_str(), &options));
    return 2;
}
