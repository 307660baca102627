#include "digzsl/core/config.hpp"

#include "digzsl/core/errors.hpp"
#include "digzsl/core/text.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace digzsl {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Prototypes: return "prototypes";
        case Stage::TrainCdm: return "train-cdm";
        case Stage::LearnDct: return "learn-dct";
        case Stage::Generate: return "generate";
        case Stage::TrainClassifier: return "train-classifier";
        case Stage::Evaluate: return "evaluate";
        case Stage::Export: return "export";
    }
    return "?";
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::Prototypes,      Stage::TrainCdm, Stage::LearnDct, Stage::Generate,
                                           Stage::TrainClassifier, Stage::Evaluate, Stage::Export};
    return stages;
}

std::optional<Stage> parse_stage(const std::string& name) {
    for (Stage s : all_stages()) {
        if (name == stage_name(s)) return s;
    }
    return std::nullopt;
}

namespace {

using Setter = std::function<void(RunConfig&, const std::string&, std::size_t)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
    std::string name;
    std::optional<Stage> stage;  // nullopt: never hashed (runtime-only settings)
    Setter set;
    Getter get;
};

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

std::vector<std::string> split_list(const std::string& value, char sep) {
    std::vector<std::string> out;
    for (auto& part : split(value, sep)) {
        auto t = trim(part);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

Key dbl(std::string name, std::optional<Stage> st, double RunConfig::*member) {
    return {name, st, [member, name](RunConfig& c, const std::string& v, std::size_t l) {
                c.*member = parse_double(v, name, l);
            },
            [member](const RunConfig& c) { return format_double(c.*member); }};
}

template <class Section>
Key dbl(std::string name, std::optional<Stage> st, Section RunConfig::*sec, double Section::*member) {
    return {name, st, [sec, member, name](RunConfig& c, const std::string& v, std::size_t l) {
                (c.*sec).*member = parse_double(v, name, l);
            },
            [sec, member](const RunConfig& c) { return format_double((c.*sec).*member); }};
}

template <class Section>
Key cnt(std::string name, std::optional<Stage> st, Section RunConfig::*sec, std::size_t Section::*member) {
    return {name, st, [sec, member, name](RunConfig& c, const std::string& v, std::size_t l) {
                (c.*sec).*member = static_cast<std::size_t>(parse_unsigned(v, name, l));
            },
            [sec, member](const RunConfig& c) { return std::to_string((c.*sec).*member); }};
}

template <class Section>
Key flag(std::string name, std::optional<Stage> st, Section RunConfig::*sec, bool Section::*member) {
    return {name, st, [sec, member, name](RunConfig& c, const std::string& v, std::size_t l) {
                (c.*sec).*member = parse_bool(v, name, l);
            },
            [sec, member](const RunConfig& c) { return std::string((c.*sec).*member ? "true" : "false"); }};
}

template <class Section>
void optimizer_keys(std::vector<Key>& keys, const std::string& prefix, Stage st, Section RunConfig::*sec) {
    auto opt_dbl = [&](const std::string& k, double OptimizerConfig::*m) {
        const std::string name = prefix + "." + k;
        keys.push_back({name, st,
                        [sec, m, name](RunConfig& c, const std::string& v, std::size_t l) {
                            ((c.*sec).opt).*m = parse_double(v, name, l);
                        },
                        [sec, m](const RunConfig& c) { return format_double(((c.*sec).opt).*m); }});
    };
    opt_dbl("lr", &OptimizerConfig::lr);
    opt_dbl("beta1", &OptimizerConfig::beta1);
    opt_dbl("beta2", &OptimizerConfig::beta2);
    opt_dbl("eps", &OptimizerConfig::eps);
    opt_dbl("weight_decay", &OptimizerConfig::weight_decay);
    const std::string bname = prefix + ".batch_size";
    keys.push_back({bname, st,
                    [sec, bname](RunConfig& c, const std::string& v, std::size_t l) {
                        (c.*sec).opt.batch_size = static_cast<std::size_t>(parse_unsigned(v, bname, l));
                    },
                    [sec](const RunConfig& c) { return std::to_string((c.*sec).opt.batch_size); }});
}

const std::vector<Key>& schema() {
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        const auto P = Stage::Prototypes, C = Stage::TrainCdm, D = Stage::LearnDct, G = Stage::Generate,
                   K = Stage::TrainClassifier, E = Stage::Evaluate;

        k.push_back({"dataset", P, [](RunConfig& c, const std::string& v, std::size_t) { c.dataset = v; },
                     [](const RunConfig& c) { return c.dataset; }});
        k.push_back({"split_file", P, [](RunConfig& c, const std::string& v, std::size_t) { c.split_file = v; },
                     [](const RunConfig& c) { return c.split_file; }});
        k.push_back({"class_file", P, [](RunConfig& c, const std::string& v, std::size_t) { c.class_file = v; },
                     [](const RunConfig& c) { return c.class_file; }});
        k.push_back({"seed", P,
                     [](RunConfig& c, const std::string& v, std::size_t l) { c.seed = parse_unsigned(v, "seed", l); },
                     [](const RunConfig& c) { return std::to_string(c.seed); }});
        k.push_back({"prototype_template", P,
                     [](RunConfig& c, const std::string& v, std::size_t) { c.prototype_template = v; },
                     [](const RunConfig& c) { return c.prototype_template; }});
        k.push_back({"backend", P, [](RunConfig& c, const std::string& v, std::size_t) { c.backend = v; },
                     [](const RunConfig& c) { return c.backend; }});
        k.push_back({"external_url", D, [](RunConfig& c, const std::string& v, std::size_t) { c.external_url = v; },
                     [](const RunConfig& c) { return c.external_url; }});
        k.push_back({"workers", std::nullopt,
                     [](RunConfig& c, const std::string& v, std::size_t l) {
                         c.workers = static_cast<std::size_t>(parse_unsigned(v, "workers", l));
                     },
                     [](const RunConfig& c) { return std::to_string(c.workers); }});

        k.push_back(dbl("gamma", D, &RunConfig::gamma));
        k.push_back({"n_gen", G,
                     [](RunConfig& c, const std::string& v, std::size_t l) {
                         c.n_gen = static_cast<std::size_t>(parse_unsigned(v, "n_gen", l));
                     },
                     [](const RunConfig& c) { return std::to_string(c.n_gen); }});
        k.push_back({"mode", K,
                     [](RunConfig& c, const std::string& v, std::size_t l) {
                         if (v == "czsl") c.mode = EvalMode::Czsl;
                         else if (v == "gzsl") c.mode = EvalMode::Gzsl;
                         else if (v == "both") c.mode = EvalMode::Both;
                         else throw ConfigError("key 'mode': expected czsl, gzsl or both", l, "mode");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.mode == EvalMode::Czsl ? "czsl" : c.mode == EvalMode::Gzsl ? "gzsl" : "both");
                     }});
        k.push_back(dbl("lambda", E, &RunConfig::lambda));
        k.push_back({"lambda_grid", E,
                     [](RunConfig& c, const std::string& v, std::size_t l) {
                         c.lambda_grid.clear();
                         for (auto& s : split_list(v, ',')) c.lambda_grid.push_back(parse_double(s, "lambda_grid", l));
                     },
                     [](const RunConfig& c) {
                         std::vector<std::string> parts;
                         for (double x : c.lambda_grid) parts.push_back(format_double(x));
                         return join(parts, ", ");
                     }});
        k.push_back({"fid_baseline", E,
                     [](RunConfig& c, const std::string& v, std::size_t l) { c.fid_baseline = parse_bool(v, "fid_baseline", l); },
                     [](const RunConfig& c) { return std::string(c.fid_baseline ? "true" : "false"); }});

        k.push_back(cnt("toy.train_per_class", P, &RunConfig::toy, &ToyDatasetConfig::train_per_class));
        k.push_back(cnt("toy.test_seen_per_class", P, &RunConfig::toy, &ToyDatasetConfig::test_seen_per_class));
        k.push_back(cnt("toy.test_unseen_per_class", P, &RunConfig::toy, &ToyDatasetConfig::test_unseen_per_class));
        k.push_back(dbl("toy.pixel_noise", P, &RunConfig::toy, &ToyDatasetConfig::pixel_noise));
        k.push_back({"toy.seen", P, [](RunConfig& c, const std::string& v, std::size_t) { c.toy.seen = split_list(v, ','); },
                     [](const RunConfig& c) { return join(c.toy.seen, ", "); }});
        k.push_back({"toy.unseen", P,
                     [](RunConfig& c, const std::string& v, std::size_t) { c.toy.unseen = split_list(v, ','); },
                     [](const RunConfig& c) { return join(c.toy.unseen, ", "); }});

        k.push_back(cnt("encoder.embed_dim", P, &RunConfig::encoder, &EncoderConfig::embed_dim));
        k.push_back(cnt("encoder.proto_dim", P, &RunConfig::encoder, &EncoderConfig::proto_dim));
        k.push_back(dbl("encoder.embed_scale", P, &RunConfig::encoder, &EncoderConfig::embed_scale));
        k.push_back(cnt("backbone.feature_dim", C, &RunConfig::backbone, &BackboneConfig::feature_dim));

        optimizer_keys(k, "cdm", C, &RunConfig::cdm);
        k.push_back(cnt("cdm.epochs", C, &RunConfig::cdm, &CdmConfig::epochs));
        k.push_back(dbl("cdm.tau", C, &RunConfig::cdm, &CdmConfig::tau));
        k.push_back(cnt("cdm.input_size", C, &RunConfig::cdm, &CdmConfig::input_size));
        k.push_back(dbl("cdm.holdout_fraction", C, &RunConfig::cdm, &CdmConfig::holdout_fraction));
        k.push_back(flag("cdm.finetune", C, &RunConfig::cdm, &CdmConfig::finetune));
        k.push_back(dbl("cdm.finetune_lr", C, &RunConfig::cdm, &CdmConfig::finetune_lr));

        optimizer_keys(k, "dct", D, &RunConfig::dct);
        k.push_back(cnt("dct.early_stop", D, &RunConfig::dct, &DctConfig::early_stop));
        k.push_back(cnt("dct.max_steps", D, &RunConfig::dct, &DctConfig::max_steps));
        k.push_back(flag("dct.fixed_noise", D, &RunConfig::dct, &DctConfig::fixed_noise));
        k.push_back({"dct.templates", D,
                     [](RunConfig& c, const std::string& v, std::size_t) { c.dct.templates = split_list(v, '|'); },
                     [](const RunConfig& c) { return join(c.dct.templates, " | "); }});

        k.push_back(cnt("generator.image_size", D, &RunConfig::generator, &GeneratorConfig::image_size));
        k.push_back(cnt("generator.channels", D, &RunConfig::generator, &GeneratorConfig::channels));
        k.push_back(cnt("generator.train_timesteps", D, &RunConfig::generator, &GeneratorConfig::train_timesteps));
        k.push_back(cnt("generator.sampling_steps", D, &RunConfig::generator, &GeneratorConfig::sampling_steps));
        k.push_back(dbl("generator.guidance_scale", D, &RunConfig::generator, &GeneratorConfig::guidance_scale));
        k.push_back(cnt("generator.grad_depth", D, &RunConfig::generator, &GeneratorConfig::grad_depth));
        k.push_back(cnt("generator.hidden", D, &RunConfig::generator, &GeneratorConfig::hidden));
        k.push_back(cnt("generator.time_dim", D, &RunConfig::generator, &GeneratorConfig::time_dim));
        k.push_back(cnt("generator.train_steps", D, &RunConfig::generator, &GeneratorConfig::train_steps));
        k.push_back(cnt("generator.batch_size", D, &RunConfig::generator, &GeneratorConfig::batch_size));
        k.push_back(dbl("generator.lr", D, &RunConfig::generator, &GeneratorConfig::lr));
        k.push_back(dbl("generator.cond_dropout", D, &RunConfig::generator, &GeneratorConfig::cond_dropout));
        k.push_back({"generator.templates", D,
                     [](RunConfig& c, const std::string& v, std::size_t) { c.generator.templates = split_list(v, '|'); },
                     [](const RunConfig& c) { return join(c.generator.templates, " | "); }});

        optimizer_keys(k, "classifier", K, &RunConfig::classifier);
        k.push_back(cnt("classifier.epochs", K, &RunConfig::classifier, &ClassifierConfig::epochs));
        k.push_back(cnt("classifier.seen_cap", K, &RunConfig::classifier, &ClassifierConfig::seen_cap));
        return k;
    }();
    return keys;
}

const Key* find_key(const std::string& name) {
    for (const Key& k : schema()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

}  // namespace

std::map<std::string, DatasetBlock> benchmark_dataset_blocks() {
    return {{"cub", {"cub", 0.4, 0.95}}, {"sun", {"sun", 0.6, 0.6}}, {"flo", {"flo", 0.4, 0.9}}, {"awa2", {"awa2", 0.6, 0.8}}};
}

void RunConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("key '" + key + "': " + why, 0, key); };
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda", "must lie in [0, 1]");
    for (double l : lambda_grid) {
        if (!(l >= 0.0 && l <= 1.0)) fail("lambda_grid", "values must lie in [0, 1]");
    }
    if (lambda_grid.empty()) fail("lambda_grid", "must not be empty");
    if (n_gen < 1) fail("n_gen", "must be >= 1");
    if (!(cdm.tau > 0.0)) fail("cdm.tau", "must be > 0");
    if (cdm.epochs < 1) fail("cdm.epochs", "must be >= 1");
    if (classifier.epochs < 1) fail("classifier.epochs", "must be >= 1");
    if (dct.early_stop < 1) fail("dct.early_stop", "must be >= 1");
    if (dct.max_steps < 1) fail("dct.max_steps", "must be >= 1");
    if (dct.templates.empty()) fail("dct.templates", "at least one template required");
    if (generator.sampling_steps < 1) fail("generator.sampling_steps", "must be >= 1");
    if (generator.train_timesteps < generator.sampling_steps) {
        fail("generator.train_timesteps", "must be >= generator.sampling_steps");
    }
    if (generator.train_steps < 1) fail("generator.train_steps", "must be >= 1");
    if (cdm.opt.batch_size < 1) fail("cdm.batch_size", "must be >= 1");
    if (dct.opt.batch_size < 1) fail("dct.batch_size", "must be >= 1");
    if (classifier.opt.batch_size < 1) fail("classifier.batch_size", "must be >= 1");
    if (generator.batch_size < 1) fail("generator.batch_size", "must be >= 1");
    if (!(cdm.holdout_fraction >= 0.0 && cdm.holdout_fraction < 1.0)) fail("cdm.holdout_fraction", "must lie in [0, 1)");
    if (!(generator.cond_dropout >= 0.0 && generator.cond_dropout < 1.0)) {
        fail("generator.cond_dropout", "must lie in [0, 1)");
    }
    if (backend != "toy" && backend != "external") fail("backend", "expected toy or external");
    if (workers < 1) fail("workers", "must be >= 1");
}

std::string RunConfig::hash_for(Stage stage) const {
    std::vector<std::string> lines;
    for (const Key& k : schema()) {
        if (!k.stage || static_cast<int>(*k.stage) > static_cast<int>(stage)) continue;
        lines.push_back(k.name + "=" + k.get(*this));
    }
    std::sort(lines.begin(), lines.end());
    std::string blob;
    for (const auto& l : lines) blob += l + "\n";
    return hex64(fnv1a64(blob));
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const Key& k : schema()) out << k.name << " = " << k.get(*this) << "\n";
    for (const auto& [name, block] : datasets) {
        out << "\n[dataset " << name << "]\n";
        if (block.gamma) out << "gamma = " << format_double(*block.gamma) << "\n";
        if (block.lambda) out << "lambda = " << format_double(*block.lambda) << "\n";
    }
    return out.str();
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown key '" + key + "'", 0, key);
    k->set(config, value, 0);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    RunConfig config;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    std::string block;  // current dataset block name, empty at top level
    auto where = [&](std::size_t l) { return origin + ":" + std::to_string(l) + ": "; };

    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where(lineno) + "unterminated block header", lineno);
            auto parts = split_list(line.substr(1, line.size() - 2), ' ');
            if (parts.size() != 2 || parts[0] != "dataset") {
                throw ConfigError(where(lineno) + "expected [dataset NAME]", lineno);
            }
            block = parts[1];
            if (config.datasets.count(block)) throw ConfigError(where(lineno) + "duplicate dataset block '" + block + "'", lineno);
            config.datasets[block].name = block;
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where(lineno) + "expected key = value", lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!block.empty()) {
            DatasetBlock& b = config.datasets[block];
            if (key == "gamma") b.gamma = parse_double(value, key, lineno);
            else if (key == "lambda") b.lambda = parse_double(value, key, lineno);
            else if (key == "name") continue;
            else throw ConfigError(where(lineno) + "unknown key '" + key + "' in dataset block", lineno, key);
            continue;
        }
        const Key* k = find_key(key);
        if (!k) throw ConfigError(where(lineno) + "unknown key '" + key + "'", lineno, key);
        try {
            k->set(config, value, 0);
        } catch (const ConfigError& e) {
            throw ConfigError(where(lineno) + e.what(), lineno, key);
        }
    }

    auto it = config.datasets.find(config.dataset);
    if (it != config.datasets.end()) {
        if (it->second.gamma) config.gamma = *it->second.gamma;
        if (it->second.lambda) config.lambda = *it->second.lambda;
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

}  // namespace digzsl
