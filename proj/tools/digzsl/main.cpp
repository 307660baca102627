#include "digzsl/cli/pipeline.hpp"
#include "digzsl/core/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace digzsl;

namespace {

int run_command(const std::string& config_path, const std::vector<std::string>& stage_names, bool all,
                const std::optional<std::string>& resume, const std::optional<std::uint64_t>& seed,
                const std::optional<double>& lambda, const std::optional<double>& gamma,
                const std::optional<std::string>& backend, const std::optional<std::string>& out,
                const std::vector<std::string>& overrides) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (lambda) cfg.lambda = *lambda;
    if (gamma) cfg.gamma = *gamma;
    if (backend) cfg.backend = *backend;

    StagePlan plan;
    plan.config_path = config_path;
    if (all) {
        plan = StagePlan::all(config_path);
    } else if (resume) {
        auto s = parse_stage(*resume);
        if (!s) throw ConfigError("unknown stage '" + *resume + "'", 0, "from");
        plan = StagePlan::from(*s, config_path);
    } else {
        if (stage_names.empty()) throw ConfigError("nothing to run: pass --stage, --from or --all", 0, "stage");
        for (const auto& n : stage_names) {
            auto s = parse_stage(n);
            if (!s) throw ConfigError("unknown stage '" + n + "'", 0, "stage");
            plan.stages.push_back(*s);
        }
    }

    Pipeline pipeline(cfg, resolve_artifact_root(out ? std::optional<std::filesystem::path>(*out) : std::nullopt));
    pipeline.set_log(&std::cerr);
    pipeline.run(plan);
    for (Stage s : plan.stages) {
        if (s == Stage::Evaluate) {
            emit_report(pipeline.reports(), std::cout);
            std::cout << "metrics: " << pipeline.metrics_file().string() << "\n";
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot learning with diffusion-generated unseen-class samples"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> stages, overrides;
    bool all = false;
    std::optional<std::string> resume, backend, out;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda, gamma;

    auto* run = app.add_subcommand("run", "Run pipeline stages");
    run->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
    run->add_option("--stage", stages, "Stage(s) to run, in order");
    run->add_flag("--all", all, "Run every stage");
    run->add_option("--from", resume, "Run from this stage through export");
    run->add_option("--seed", seed, "Override seed");
    run->add_option("--lambda", lambda, "Override calibration lambda");
    run->add_option("--gamma", gamma, "Override accuracy threshold gamma");
    run->add_option("--backend", backend, "Generator backend")->check(CLI::IsMember({"toy", "external"}));
    run->add_option("--out", out, std::string("Artifact root (default: $") + kArtifactRootEnv + " or ./artifacts)");
    run->add_option("--set", overrides, "Extra key=value config override");

    auto* report = app.add_subcommand("report", "Print the summary of a metrics file");
    std::string metrics_path;
    report->add_option("metrics", metrics_path, "metrics.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return run_command(config_path, stages, all, resume, seed, lambda, gamma, backend, out, overrides);
        emit_report(read_metrics_file(metrics_path), std::cout);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what();
        if (!e.key().empty()) std::cerr << " [key " << e.key() << "]";
        if (e.line() != 0) std::cerr << " [line " << e.line() << "]";
        std::cerr << "\n";
        return kExitConfig;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return kExitDependency;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what();
        if (e.step() >= 0) std::cerr << " (step " << e.step() << ")";
        std::cerr << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}
