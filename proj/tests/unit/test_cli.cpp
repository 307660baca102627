#include "digzsl/cli/pipeline.hpp"
#include "digzsl/cli/worker_pool.hpp"
#include "digzsl/core/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace digzsl;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig c;
    c.seed = 5;
    c.n_gen = 12;
    c.workers = 2;
    c.fid_baseline = false;
    c.toy.train_per_class = 20;
    c.toy.test_seen_per_class = 6;
    c.toy.test_unseen_per_class = 6;
    c.generator.image_size = 8;
    c.generator.hidden = 32;
    c.generator.time_dim = 8;
    c.generator.train_steps = 40;
    c.generator.batch_size = 16;
    c.generator.sampling_steps = 4;
    c.generator.train_timesteps = 100;
    c.backbone.feature_dim = 16;
    c.encoder.proto_dim = 16;
    c.encoder.embed_dim = 16;
    c.cdm.epochs = 3;
    c.dct.max_steps = 2;
    c.dct.early_stop = 2;
    c.gamma = 1.0;
    c.classifier.epochs = 5;
    c.lambda_grid = {0.0, 0.5, 1.0};
    return c;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> bin_files(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ".bin") out[fs::relative(e.path(), root).string()] = read_file(e.path());
    }
    return out;
}

}  // namespace

TEST_CASE("exit codes and artifact root precedence") {
    CHECK(exit_code_for(ConfigError("x")) == 1);
    CHECK(exit_code_for(DependencyError("x", "train-cdm")) == 2);
    CHECK(exit_code_for(NumericalFailure("x", 3)) == 3);

    ::setenv(kArtifactRootEnv, "/tmp/from-env", 1);
    CHECK(resolve_artifact_root(fs::path("/tmp/flag")) == fs::path("/tmp/flag"));
    CHECK(resolve_artifact_root(std::nullopt) == fs::path("/tmp/from-env"));
    ::unsetenv(kArtifactRootEnv);
    CHECK(resolve_artifact_root(std::nullopt) == fs::path("artifacts"));
}

TEST_CASE("stage plans") {
    auto all = StagePlan::all();
    CHECK(all.stages == all_stages());
    auto from = StagePlan::from(Stage::Generate);
    REQUIRE(from.stages.size() == 4);
    CHECK(from.stages.front() == Stage::Generate);
    CHECK(from.stages.back() == Stage::Export);
    for (Stage s : all_stages()) {
        for (Stage d : stage_dependencies(s)) CHECK(static_cast<int>(d) < static_cast<int>(s));
    }
    Pipeline p(tiny_config(), testing::fresh_dir("cli-order"));
    CHECK_THROWS_AS(p.run({{Stage::TrainCdm, Stage::Prototypes}, {}}), ConfigError);
}

TEST_CASE("missing upstream artifact names the stage") {
    const auto root = testing::fresh_dir("cli-deps");
    Pipeline p(tiny_config(), root);
    try {
        p.run_stage(Stage::TrainCdm);
        FAIL("expected a dependency error");
    } catch (const DependencyError& e) {
        CHECK(e.missing_stage() == "prototypes");
    }
    p.run_stage(Stage::Prototypes);
    try {
        p.run_stage(Stage::LearnDct);
        FAIL("expected a dependency error");
    } catch (const DependencyError& e) {
        CHECK(e.missing_stage() == "train-cdm");
        CHECK(std::string(e.what()).find("train-cdm") != std::string::npos);
    }
}

TEST_CASE("config errors surface before any stage runs") {
    auto c = tiny_config();
    c.gamma = 1.5;
    CHECK_THROWS_AS(Pipeline(c, testing::fresh_dir("cli-bad")), ConfigError);
    auto d = tiny_config();
    d.dataset = "cub";
    Pipeline p(d, testing::fresh_dir("cli-cub"));
    CHECK_THROWS_AS(p.run_stage(Stage::Prototypes), ConfigError);
}

TEST_CASE("tiny pipeline: reports, lambda override, idempotence, staleness") {
    const auto root = testing::fresh_dir("cli-run");
    {
        Pipeline p(tiny_config(), root);
        const auto handles = p.run(StagePlan::all());
        CHECK(handles.size() >= 7);
        const auto reports = p.reports();
        REQUIRE(reports.size() == 2);
        CHECK(reports[0].mode == ZslMode::Czsl);
        CHECK(reports[1].mode == ZslMode::Gzsl);
        CHECK(*reports[1].lambda == 0.5);
        CHECK(reports[1].sweep.size() == 3);
        CHECK(reports[0].extras.contains("fid"));
        CHECK(fs::exists(root / "export" / "embeddings.tsv"));
        CHECK(fs::exists(root / "generate" / "images" / "red_square" / "index.json"));

        // Machine file round trip: every value equals the in-memory report.
        for (const auto& r : reports) CHECK(MetricsReport::from_json(r.to_json()).to_json() == r.to_json());

        std::ostringstream out;
        emit_report(reports, out);
        std::istringstream lines(out.str());
        std::string czsl, gzsl;
        std::getline(lines, czsl);
        std::getline(lines, gzsl);
        CHECK(czsl == "CZSL acc=" + percent(reports[0].acc));
        CHECK(gzsl.find("U=") != std::string::npos);
        CHECK(gzsl.find(" S=") != std::string::npos);
        CHECK(gzsl.find(" H=") != std::string::npos);
        CHECK(gzsl.find(" lambda=0.5") != std::string::npos);
    }
    const auto before = bin_files(root);

    // Re-running every stage with the same config rewrites identical bytes.
    {
        Pipeline p(tiny_config(), root);
        p.run(StagePlan::all());
    }
    const auto after = bin_files(root);
    CHECK(before.size() == after.size());
    for (const auto& [name, bytes] : before) {
        INFO(name);
        CHECK(after.at(name) == bytes);
    }

    // A lambda override only invalidates evaluate.
    {
        auto c = tiny_config();
        c.lambda = 0.8;
        Pipeline p(c, root);
        p.run_stage(Stage::Evaluate);
        CHECK(*p.reports()[1].lambda == 0.8);
    }

    // Changing an upstream key makes downstream loads fail as stale.
    {
        auto c = tiny_config();
        c.cdm.epochs = 4;
        Pipeline p(c, root);
        try {
            p.run_stage(Stage::LearnDct);
            FAIL("expected a dependency error");
        } catch (const DependencyError& e) {
            CHECK(e.missing_stage() == "train-cdm");
            CHECK(std::string(e.what()).find("stale") != std::string::npos);
        }
    }
}

TEST_CASE("parallel_for") {
    std::atomic<int> sum{0};
    parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
    CHECK(sum == 4950);
    try {
        parallel_for(10, 3, [](std::size_t i) {
            if (i == 7 || i == 4) throw std::runtime_error(std::to_string(i));
        });
        FAIL("expected a rethrow");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "4");
    }
}
