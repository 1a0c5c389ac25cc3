#include "pipeline.hpp"

#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace projpost;
using namespace projpost::testing;

namespace {

Json toy_config() {
    return Json{
        {"name", "toy"},
        {"dataset",
         {{"generator", "toy_regression"}, {"n_per_cluster", 8}, {"noise_sd", 0.05}, {"seed", 1}}},
        {"arch",
         {{"input_dim", 1}, {"hidden", {10, 10}}, {"output_dim", 1}, {"activation", "tanh"},
          {"bias", true}}},
        {"train",
         {{"optimizer", "adam"}, {"learning_rate", 1e-2}, {"epochs", 400}, {"batch_size", 8},
          {"weight_decay", 1e-4}, {"seed", 2}, {"init_seed", 3}}},
        {"projector", {{"mode", "output-jacobian"}, {"batch_size", 4}, {"t_max", 300}}},
        {"posterior", {{"kind", "projected"}, {"alpha", "auto"}, {"k", 16}, {"seed", 4},
                       {"probes", 32}}},
    };
}

Json moons_config() {
    return Json{
        {"name", "moons"},
        {"dataset", {{"generator", "two_moons"}, {"n", 48}, {"noise_sd", 0.08}, {"seed", 5}}},
        {"test_dataset", {{"generator", "two_moons"}, {"n", 64}, {"noise_sd", 0.08}, {"seed", 6}}},
        {"ood_dataset",
         {{"generator", "blob"}, {"n", 48}, {"center", {10.0, 10.0}}, {"sd", 0.5}, {"seed", 7}}},
        {"arch",
         {{"input_dim", 2}, {"hidden", {16, 16}}, {"output_dim", 2}, {"activation", "tanh"},
          {"bias", true}}},
        {"train",
         {{"optimizer", "adam"}, {"learning_rate", 1e-3}, {"epochs", 300}, {"batch_size", 16},
          {"seed", 8}, {"init_seed", 9}}},
        {"projector", {{"mode", "output-jacobian"}, {"batch_size", 16}, {"t_max", 400}}},
        {"posterior",
         {{"kind", "projected"}, {"alpha", "auto"}, {"k", 12}, {"seed", 10}, {"probes", 32}}},
    };
}

std::string write_config(const TempDir& tmp, const Json& cfg, const char* name = "config.json") {
    const std::string path = tmp.path(name);
    write_json_file(path, cfg);
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace

TEST_CASE("config parsing applies defaults and validates") {
    const RunConfig cfg = parse_run_config(toy_config());
    CHECK(cfg.loss == LossKind::Mse);
    CHECK(cfg.projector.t_max == 300);
    CHECK(cfg.posterior.alpha_auto);
    CHECK(cfg.metric_bins == 15);
    CHECK(cfg.plot.grid_points == 201);
    CHECK(cfg.plot.grid_min == -1.5);

    Json bad = toy_config();
    bad.erase("arch");
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    Json bad2 = toy_config();
    bad2["posterior"]["alpha"] = "sometimes";
    CHECK_THROWS_AS(parse_run_config(bad2), ConfigError);
    Json bad3 = toy_config();
    bad3["posterior"]["alpha"] = -1.0;
    CHECK_THROWS_AS(parse_run_config(bad3), ConfigError);

    const RunConfig moons = parse_run_config(moons_config());
    CHECK(moons.loss == LossKind::CrossEntropySoftmax);
    CHECK(!moons.test_dataset_spec.is_null());
}

TEST_CASE("dataset specs build generators and reject junk") {
    CHECK(build_dataset(toy_config()["dataset"]).size() == 16);
    CHECK(build_dataset(moons_config()["ood_dataset"]).input_dim() == 2);
    CHECK_THROWS_AS(build_dataset(Json{{"generator", "nope"}}), ConfigError);
    CHECK_THROWS_AS(build_dataset(Json::object()), ConfigError);
    CHECK_THROWS_AS(build_dataset(Json{{"csv", "/does/not/exist.csv"},
                                       {"input_dim", 2},
                                       {"output_dim", 1}}),
                    IoError);
}

TEST_CASE("toy regression end to end: train, sample, eval, plot") {
    TempDir tmp("e2e_toy");
    const std::string config = write_config(tmp, toy_config());
    const RunOptions opt;

    REQUIRE(run_train(config, tmp.root(), opt) == 0);
    REQUIRE(exists(tmp.path("checkpoint.bin")));
    REQUIRE(exists(tmp.path("train_log.json")));
    const Json log = read_json_file(tmp.path("train_log.json"));
    CHECK(log.at("schema_version").get<int>() == 1);
    CHECK(log.contains("config"));
    const auto losses = log.at("epoch_mean_loss").get<std::vector<double>>();
    CHECK(losses.back() < losses.front());

    REQUIRE(run_sample(config, tmp.path("checkpoint.bin"), tmp.root(), opt) == 0);
    REQUIRE(exists(tmp.path("samples.bin")));
    const Json alpha_report = read_json_file(tmp.path("alpha_report.json"));
    CHECK(alpha_report.at("alpha_used").get<double>() > 0.0);
    CHECK(alpha_report.contains("alpha_rank_over_norm"));
    CHECK(alpha_report.contains("alpha_paper_printed"));
    CHECK(alpha_report.contains("trace_estimate"));

    REQUIRE(run_eval(config, tmp.path("checkpoint.bin"), tmp.path("samples.bin"), "train",
                     tmp.root(), opt) == 0);
    const Json metrics = read_json_file(tmp.path("metrics.json"));
    CHECK(metrics.at("metrics").contains("rmse"));
    CHECK(metrics.at("variance_summary").contains("max_trace_variance"));

    REQUIRE(run_plot(config, tmp.path("checkpoint.bin"), tmp.path("samples.bin"), tmp.root(),
                     opt) == 0);
    const std::string svg = slurp(tmp.path("plot.svg"));
    CHECK(xml_well_formed(svg));
    CHECK(svg.find("id=\"band\"") != std::string::npos);
    CHECK(svg.find("id=\"mean\"") != std::string::npos);
}

TEST_CASE("alpha override is recorded verbatim") {
    TempDir tmp("alpha_override");
    Json cfg = toy_config();
    cfg["train"]["epochs"] = 30;
    cfg["posterior"]["alpha"] = 1.0;
    cfg["posterior"]["k"] = 4;
    const std::string config = write_config(tmp, cfg);
    const RunOptions opt;
    REQUIRE(run_train(config, tmp.root(), opt) == 0);
    REQUIRE(run_sample(config, tmp.path("checkpoint.bin"), tmp.root(), opt) == 0);
    const Json report = read_json_file(tmp.path("alpha_report.json"));
    CHECK(report.at("alpha_used").get<double>() == 1.0);
    CHECK(report.contains("trace_estimate"));  // both conventions still reported
}

TEST_CASE("map-delta samples reproduce plain MAP metrics exactly") {
    TempDir tmp("mapdelta");
    Json cfg = moons_config();
    cfg["train"]["epochs"] = 150;
    cfg["posterior"]["kind"] = "map-delta";
    cfg["posterior"]["k"] = 5;
    const std::string config = write_config(tmp, cfg);
    const RunOptions opt;
    REQUIRE(run_train(config, tmp.root(), opt) == 0);
    REQUIRE(run_sample(config, tmp.path("checkpoint.bin"), tmp.root(), opt) == 0);
    REQUIRE(run_eval(config, tmp.path("checkpoint.bin"), tmp.path("samples.bin"), "test",
                     tmp.root(), opt) == 0);
    const Json metrics = read_json_file(tmp.path("metrics.json"));

    // independent MAP metrics straight from the checkpoint
    const auto [arch, theta] = load_checkpoint(tmp.path("checkpoint.bin"));
    Network net(arch);
    const Dataset test = build_dataset(moons_config()["test_dataset"]);
    std::vector<PredictionRecord> records;
    for (std::ptrdiff_t i = 0; i < test.size(); ++i) {
        PredictionRecord r;
        r.probabilities = softmax(net.forward(theta, test.inputs.row(i)));
        r.label = test.labels[size_t(i)];
        records.push_back(r);
    }
    const MetricsReport expected = classification_metrics(records, 15);
    CHECK(metrics.at("metrics").at("accuracy").get<double>() == expected.accuracy);
    CHECK(metrics.at("metrics").at("nll").get<double>() == expected.nll);
    CHECK(metrics.at("metrics").at("brier").get<double>() == expected.brier);
    CHECK(metrics.at("metrics").at("confidence").get<double>() == expected.confidence);
}

TEST_CASE("exit codes: missing inputs give 2, divergence gives 3") {
    TempDir tmp("codes");
    const RunOptions opt;

    SUBCASE("missing dataset file, no partial outputs") {
        Json cfg = toy_config();
        cfg["dataset"] = Json{{"csv", tmp.path("missing.csv")}, {"input_dim", 1},
                              {"output_dim", 1}, {"kind", "regression"}};
        const std::string config = write_config(tmp, cfg);
        CHECK(run_train(config, tmp.path("out"), opt) == 2);
        CHECK(!exists(tmp.path("out/checkpoint.bin")));
        CHECK(!exists(tmp.path("out/train_log.json")));
    }
    SUBCASE("missing config file") {
        CHECK(run_train(tmp.path("nope.json"), tmp.root(), opt) == 2);
    }
    SUBCASE("malformed samples file") {
        const std::string config = write_config(tmp, toy_config());
        Json quick = toy_config();
        quick["train"]["epochs"] = 5;
        const std::string qconfig = write_config(tmp, quick, "quick.json");
        REQUIRE(run_train(qconfig, tmp.root(), opt) == 0);
        std::ofstream(tmp.path("garbage.bin"), std::ios::binary) << "not a container";
        CHECK(run_eval(config, tmp.path("checkpoint.bin"), tmp.path("garbage.bin"), "train",
                       tmp.root(), opt) == 2);
    }
    SUBCASE("divergent training") {
        Json cfg = toy_config();
        cfg["train"]["optimizer"] = "sgd";
        cfg["train"]["learning_rate"] = 1e12;
        cfg["train"]["epochs"] = 300;
        const std::string config = write_config(tmp, cfg);
        CHECK(run_train(config, tmp.root(), opt) == 3);
    }
    SUBCASE("plot rejects non-1-D inputs") {
        TempDir tmp2("plot2d");
        Json cfg = moons_config();
        cfg["train"]["epochs"] = 5;
        cfg["posterior"]["kind"] = "map-delta";
        const std::string config = write_config(tmp2, cfg);
        REQUIRE(run_train(config, tmp2.root(), opt) == 0);
        REQUIRE(run_sample(config, tmp2.path("checkpoint.bin"), tmp2.root(), opt) == 0);
        CHECK(run_plot(config, tmp2.path("checkpoint.bin"), tmp2.path("samples.bin"),
                       tmp2.root(), opt) == 2);
    }
}

TEST_CASE("diagnose on the synthetic fixtures") {
    TempDir tmp("diag");
    const RunOptions opt;

    SUBCASE("orthogonal blocks") {
        Json cfg = toy_config();
        cfg["diagnose"] = Json{{"synthetic", "orthogonal"}};
        cfg["projector"]["t_max"] = 10;
        const std::string config = write_config(tmp, cfg);
        REQUIRE(run_diagnose(config, "", tmp.root(), opt) == 0);
        const Json d = read_json_file(tmp.path("diagnose.json"));
        CHECK(d.at("c_hat").get<double>() <= 0.01);
        const auto residuals = d.at("residuals").get<std::vector<double>>();
        CHECK(residuals.size() >= 2);
        CHECK(residuals[1] == 0.0);  // converged at sweep 1
    }
    SUBCASE("45 degree blocks") {
        Json cfg = toy_config();
        cfg["diagnose"] = Json{{"synthetic", "45deg"}, {"probe_seed", 12}};
        cfg["projector"]["t_max"] = 25;
        const std::string config = write_config(tmp, cfg);
        REQUIRE(run_diagnose(config, "", tmp.root(), opt) == 0);
        const Json d = read_json_file(tmp.path("diagnose.json"));
        CHECK(d.at("c_hat").get<double>() == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("network mode reports the oracle discrepancy") {
        Json cfg = toy_config();
        cfg["train"]["epochs"] = 50;
        cfg["projector"]["t_max"] = 200;
        const std::string config = write_config(tmp, cfg);
        REQUIRE(run_train(config, tmp.root(), opt) == 0);
        REQUIRE(run_diagnose(config, tmp.path("checkpoint.bin"), tmp.root(), opt) == 0);
        const Json d = read_json_file(tmp.path("diagnose.json"));
        CHECK(!d.at("oracle_discrepancy").is_null());
        CHECK(d.at("oracle_discrepancy").get<double>() <= 1e-4);
        const auto residuals = d.at("residuals").get<std::vector<double>>();
        for (size_t t = 1; t < residuals.size(); ++t)
            CHECK(residuals[t] <= residuals[t - 1] * (1.0 + 1e-9));
    }
}

TEST_CASE("identical in- and out-datasets give AUROC one half") {
    TempDir tmp("ood_id");
    Json cfg = moons_config();
    cfg["train"]["epochs"] = 150;
    cfg["posterior"]["k"] = 8;
    cfg["ood_dataset"] = cfg["test_dataset"];  // literally the same spec
    const std::string config = write_config(tmp, cfg);
    const RunOptions opt;
    REQUIRE(run_train(config, tmp.root(), opt) == 0);
    REQUIRE(run_sample(config, tmp.path("checkpoint.bin"), tmp.root(), opt) == 0);
    REQUIRE(run_ood(config, tmp.path("checkpoint.bin"), tmp.path("samples.bin"), tmp.root(),
                    opt) == 0);
    const Json ood = read_json_file(tmp.path("ood.json"));
    CHECK(ood.at("auroc").get<double>() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ood.at("score_kind").get<std::string>() == "max-logit-variance");
}

TEST_CASE("full pipeline artifacts are byte-identical across runs") {
    TempDir tmp_a("det_a");
    TempDir tmp_b("det_b");
    Json cfg = toy_config();
    cfg["train"]["epochs"] = 60;
    cfg["posterior"]["k"] = 6;
    cfg["projector"]["t_max"] = 100;
    const RunOptions opt;

    for (const TempDir* tmp : {&tmp_a, &tmp_b}) {
        const std::string config = write_config(*tmp, cfg);
        REQUIRE(run_train(config, tmp->root(), opt) == 0);
        REQUIRE(run_sample(config, tmp->path("checkpoint.bin"), tmp->root(), opt) == 0);
        REQUIRE(run_eval(config, tmp->path("checkpoint.bin"), tmp->path("samples.bin"), "train",
                         tmp->root(), opt) == 0);
        REQUIRE(run_plot(config, tmp->path("checkpoint.bin"), tmp->path("samples.bin"),
                         tmp->root(), opt) == 0);
    }
    for (const char* name :
         {"checkpoint.bin", "train_log.json", "samples.bin", "alpha_report.json", "metrics.json",
          "plot.svg"})
        CHECK(slurp(tmp_a.path(name)) == slurp(tmp_b.path(name)));
}

TEST_CASE("map-delta plot degenerates to the mean curve") {
    TempDir tmp("flat");
    Json cfg = toy_config();
    cfg["train"]["epochs"] = 40;
    cfg["posterior"]["kind"] = "map-delta";
    cfg["posterior"]["k"] = 3;
    const std::string config = write_config(tmp, cfg);
    const RunOptions opt;
    REQUIRE(run_train(config, tmp.root(), opt) == 0);
    REQUIRE(run_sample(config, tmp.path("checkpoint.bin"), tmp.root(), opt) == 0);

    const auto [arch, theta] = load_checkpoint(tmp.path("checkpoint.bin"));
    Network net(arch);
    const auto [sarch, samples] = load_samples(tmp.path("samples.bin"));
    const Dataset train = build_dataset(cfg["dataset"]);
    const PlotData data = compute_plot_data(net, theta, samples, train, PlotConfig{});
    for (double sd : data.sd) CHECK(sd == 0.0);

    REQUIRE(run_plot(config, tmp.path("checkpoint.bin"), tmp.path("samples.bin"), tmp.root(),
                     opt) == 0);
    CHECK(xml_well_formed(slurp(tmp.path("plot.svg"))));
}
