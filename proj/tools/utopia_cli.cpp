// Command-line front end: protect | eval | diagnose | theory.
//
// Exit codes: 0 success, 2 config/validation error, 3 numerical failure,
// 4 I/O failure. Every command writes config_resolved.json into the output
// directory before doing any work; rerunning with the same configuration
// reproduces identical output bytes.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "utopia/utopia.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    std::string command;
    std::string data;
    std::string schema;
    std::string out;
    double eps_num = 0.03;
    int eps_cat = 1;
    int iterations = 20;
    double step_size = -1.0; // < 0: resolve to eps_num / 10
    double amplification = 5.0;
    double momentum = 1.0;
    double tau = 0.5;
    int epochs = 30;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<std::string> defenses;
    std::vector<std::string> victims;

    // theory experiment knobs (the shipped experiment setup)
    std::vector<double> kappa_grid = {1.0, 10.0, 100.0, 1000.0};
    std::size_t theory_n = 5000;
    double gamma = 1e-2;
    double sigma = 1.0;
    std::size_t trials = 200;
};

void apply_config_file(RunConfig& cfg, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw utopia::IoError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw utopia::ConfigError("config file " + path.string() + ": " + e.what());
    }
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j[key].get<std::decay_t<decltype(slot)>>();
    };
    get("data", cfg.data);
    get("schema", cfg.schema);
    get("out", cfg.out);
    get("eps-num", cfg.eps_num);
    get("eps-cat", cfg.eps_cat);
    get("iterations", cfg.iterations);
    get("step-size", cfg.step_size);
    get("amplification", cfg.amplification);
    get("momentum", cfg.momentum);
    get("tau", cfg.tau);
    get("epochs", cfg.epochs);
    get("lr", cfg.lr);
    get("seed", cfg.seed);
    get("threads", cfg.threads);
    get("defense", cfg.defenses);
    get("victim", cfg.victims);
}

void validate_run_config(const RunConfig& cfg) {
    if (cfg.command != "theory") {
        if (cfg.data.empty()) throw utopia::ConfigError("--data is required");
        if (cfg.schema.empty()) throw utopia::ConfigError("--schema is required");
        if (!fs::exists(cfg.data)) throw utopia::ConfigError("data file not found: " + cfg.data);
        if (!fs::exists(cfg.schema))
            throw utopia::ConfigError("schema file not found: " + cfg.schema);
    }
    if (cfg.out.empty()) throw utopia::ConfigError("--out is required");
    if (!(cfg.eps_num >= 0.0)) throw utopia::ConfigError("--eps-num must be >= 0");
    if (cfg.eps_cat < 0) throw utopia::ConfigError("--eps-cat must be >= 0");
    if (cfg.iterations < 1) throw utopia::ConfigError("--iterations must be >= 1");
    if (!(cfg.amplification >= 0.0)) throw utopia::ConfigError("--amplification must be >= 0");
    if (!(cfg.momentum >= 0.0)) throw utopia::ConfigError("--momentum must be >= 0");
    if (cfg.tau < 0.0 || cfg.tau > 1.0) throw utopia::ConfigError("--tau must be in [0, 1]");
    if (cfg.epochs < 1) throw utopia::ConfigError("--epochs must be >= 1");
    if (!(cfg.lr > 0.0)) throw utopia::ConfigError("--lr must be > 0");
    if (cfg.threads < 1) throw utopia::ConfigError("--threads must be >= 1");
    for (const auto& d : cfg.defenses)
        if (!utopia::defense_from_name(d)) throw utopia::ConfigError("unknown defense: " + d);
    for (const auto& v : cfg.victims)
        if (v != "logistic" && v != "mlp16x16" && v != "mlp64x64")
            throw utopia::ConfigError("unknown victim: " + v +
                                      " (expected logistic|mlp16x16|mlp64x64)");
}

double resolved_step_size(const RunConfig& cfg) {
    return cfg.step_size > 0.0 ? cfg.step_size : cfg.eps_num / 10.0;
}

utopia::PoisonConfig poison_config(const RunConfig& cfg) {
    utopia::PoisonConfig pc;
    pc.eps_num = cfg.eps_num;
    pc.eps_cat = cfg.eps_cat;
    pc.iterations = cfg.iterations;
    pc.step_size = resolved_step_size(cfg);
    pc.amplification = cfg.amplification;
    pc.momentum = cfg.momentum;
    pc.seed = cfg.seed;
    return pc;
}

utopia::TrainConfig train_config(const RunConfig& cfg) {
    utopia::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.learning_rate = cfg.lr;
    tc.seed = cfg.seed;
    return tc;
}

std::vector<utopia::VictimConfig> victim_configs(const RunConfig& cfg) {
    if (cfg.victims.empty()) return utopia::default_victims();
    std::vector<utopia::VictimConfig> out;
    for (const auto& v : cfg.victims) {
        if (v == "logistic") out.push_back({"logistic", {}});
        if (v == "mlp16x16") out.push_back({"mlp16x16", {16, 16}});
        if (v == "mlp64x64") out.push_back({"mlp64x64", {64, 64}});
    }
    return out;
}

json config_echo(const RunConfig& cfg) {
    json j;
    j["command"] = cfg.command;
    j["data"] = cfg.data;
    j["schema"] = cfg.schema;
    j["out"] = cfg.out;
    j["eps-num"] = cfg.eps_num;
    j["eps-cat"] = cfg.eps_cat;
    j["iterations"] = cfg.iterations;
    j["step-size"] = resolved_step_size(cfg);
    j["amplification"] = cfg.amplification;
    j["momentum"] = cfg.momentum;
    j["tau"] = cfg.tau;
    j["epochs"] = cfg.epochs;
    j["lr"] = cfg.lr;
    j["batch-size"] = utopia::TrainConfig{}.batch_size;
    j["weight-decay"] = utopia::TrainConfig{}.weight_decay;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["defense"] = cfg.defenses;
    json jv = json::array();
    for (const auto& v : victim_configs(cfg)) jv.push_back(v.name);
    j["victim"] = jv;
    j["surrogate"] = "mlp16x16";
    if (cfg.command == "theory") {
        j["kappa-grid"] = cfg.kappa_grid;
        j["theory-n"] = cfg.theory_n;
        j["gamma"] = cfg.gamma;
        j["sigma"] = cfg.sigma;
        j["trials"] = cfg.trials;
    }
    return j;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw utopia::IoError("cannot write " + path.string());
    out << content;
    if (!out) throw utopia::IoError("failed writing " + path.string());
}

void echo_config(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) throw utopia::IoError("cannot create output directory: " + cfg.out);
    write_text(fs::path(cfg.out) / "config_resolved.json", config_echo(cfg).dump(2) + "\n");
}

void append_num(std::string& s, double v) {
    char buf[32];
    auto [p, e] = std::to_chars(buf, buf + sizeof buf, v);
    (void)e;
    s.append(buf, p);
}

struct Pipeline {
    utopia::Dataset train_data, val_data, test_data;
    utopia::SurrogateModel surrogate;
    utopia::CorrelationMatrix correlation;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    utopia::InfluenceScores influence;
    utopia::MaskPair masks;
};

Pipeline build_pipeline(const RunConfig& cfg, const utopia::Dataset& full, bool do_split) {
    Pipeline p;
    if (do_split) {
        auto parts = utopia::split(full, {0.8, 0.1, 0.1}, cfg.seed);
        p.train_data = std::move(parts[0]);
        p.val_data = std::move(parts[1]);
        p.test_data = std::move(parts[2]);
    } else {
        p.train_data = full;
    }
    p.surrogate = utopia::init_model(full.schema, {16, 16}, 4, cfg.seed);
    utopia::train(p.surrogate, p.train_data, train_config(cfg));
    p.correlation = utopia::correlation_matrix(p.train_data);
    p.pairs = utopia::redundant_pairs(p.correlation, cfg.tau);
    p.influence = utopia::influence_scores(p.surrogate, p.train_data);
    p.masks = utopia::build_masks(p.pairs, p.influence);
    return p;
}

int cmd_protect(const RunConfig& cfg) {
    echo_config(cfg);
    const utopia::Schema schema = utopia::load_schema(cfg.schema);
    const utopia::Dataset data = utopia::load_csv(cfg.data, schema);
    Pipeline p = build_pipeline(cfg, data, /*do_split=*/false);

    utopia::CraftOptions opts;
    opts.threads = cfg.threads;
    const utopia::CraftResult res =
        utopia::craft_unlearnable(p.train_data, p.surrogate, p.masks, poison_config(cfg), opts);

    utopia::write_csv(res.protected_data, fs::path(cfg.out) / "protected.csv");
    write_text(fs::path(cfg.out) / "feasibility_report.json",
               utopia::feasibility_report(res.perturbation, poison_config(cfg), data.schema)
                       .dump(2) +
                   "\n");
    write_text(fs::path(cfg.out) / "decoupling_audit.json",
               utopia::decoupling_audit(p.train_data, p.correlation, p.pairs, p.influence,
                                        p.masks, cfg.tau)
                       .dump(2) +
                   "\n");
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    echo_config(cfg);
    const utopia::Schema schema = utopia::load_schema(cfg.schema);
    const utopia::Dataset data = utopia::load_csv(cfg.data, schema);
    Pipeline p = build_pipeline(cfg, data, /*do_split=*/true);

    utopia::CraftOptions opts;
    opts.threads = cfg.threads;
    const utopia::PoisonConfig pc = poison_config(cfg);
    const utopia::CraftResult prot =
        utopia::craft_unlearnable(p.train_data, p.surrogate, p.masks, pc, opts);
    const utopia::CraftResult em =
        utopia::em_baseline(p.train_data, pc, train_config(cfg), cfg.threads);

    std::vector<utopia::TrainVariant> variants;
    variants.push_back({"clean", p.train_data, {}});
    variants.push_back({"protected", prot.protected_data, {}});
    variants.push_back({"em", em.protected_data, {}});
    for (const auto& name : cfg.defenses) {
        utopia::DefenseSpec spec;
        spec.kind = *utopia::defense_from_name(name);
        spec.seed = cfg.seed;
        const utopia::DefenseResult dr = utopia::apply_defense(prot.protected_data, spec);
        variants.push_back(
            {name + "+protected", dr.data ? *dr.data : prot.protected_data, dr.hooks});
    }

    const utopia::EvalReport rep =
        utopia::train_victims(variants, p.test_data, victim_configs(cfg), train_config(cfg));
    write_text(fs::path(cfg.out) / "eval_report.csv", utopia::eval_report_csv(rep));

    json summary = config_echo(cfg);
    summary["rows"] = json::array();
    for (const auto& r : rep.rows)
        summary["rows"].push_back(
            {{"victim", r.victim}, {"variant", r.variant}, {"accuracy", r.accuracy}});
    write_text(fs::path(cfg.out) / "eval_summary.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_diagnose(const RunConfig& cfg) {
    echo_config(cfg);
    const utopia::Schema schema = utopia::load_schema(cfg.schema);
    const utopia::Dataset data = utopia::load_csv(cfg.data, schema);
    Pipeline p = build_pipeline(cfg, data, /*do_split=*/true);

    utopia::CraftOptions opts;
    opts.threads = cfg.threads;
    const utopia::CraftResult prot =
        utopia::craft_unlearnable(p.train_data, p.surrogate, p.masks, poison_config(cfg), opts);

    const auto victims = victim_configs(cfg);
    utopia::SurrogateModel victim =
        utopia::init_model(data.schema, victims.front().hidden, 4, cfg.seed);
    utopia::train(victim, prot.protected_data, train_config(cfg));
    const double train_loss = utopia::dataset_mean_loss(victim, prot.protected_data);

    const utopia::SaliencyReport sal = utopia::saliency_report(victim, prot.protected_data);
    {
        std::string s = "feature,mean_abs_grad\n";
        const auto num_pos = data.schema.numeric_positions();
        for (std::size_t j = 0; j < sal.mean_abs_grad.size(); ++j) {
            s += data.schema.features[num_pos[j]].name;
            s += ',';
            append_num(s, sal.mean_abs_grad[j]);
            s += '\n';
        }
        write_text(fs::path(cfg.out) / "saliency.csv", s);
        std::string a = "k,topk_accuracy,bottomk_accuracy\n";
        for (std::size_t k = 0; k < sal.topk_accuracy.size(); ++k) {
            a += std::to_string(k);
            a += ',';
            append_num(a, sal.topk_accuracy[k]);
            a += ',';
            append_num(a, sal.bottomk_accuracy[k]);
            a += '\n';
        }
        write_text(fs::path(cfg.out) / "ablation.csv", a);
    }

    {
        const utopia::Matrix grid = utopia::loss_landscape(victim, prot.protected_data, 0.5, 11);
        std::string s;
        for (std::size_t i = 0; i < grid.rows(); ++i) {
            for (std::size_t j = 0; j < grid.cols(); ++j) {
                if (j) s += ',';
                append_num(s, grid(i, j));
            }
            s += '\n';
        }
        write_text(fs::path(cfg.out) / "landscape.csv", s);
    }

    {
        const std::vector<double> sigmas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
        const auto losses = utopia::noise_robustness(victim, prot.protected_data, sigmas, cfg.seed);
        std::string s = "sigma,loss\n";
        for (std::size_t i = 0; i < sigmas.size(); ++i) {
            append_num(s, sigmas[i]);
            s += ',';
            append_num(s, losses[i]);
            s += '\n';
        }
        write_text(fs::path(cfg.out) / "robustness.csv", s);
    }

    {
        std::string s = "kappa_hat,train_loss\n";
        append_num(s, utopia::kappa_hat(prot.perturbation, p.masks));
        s += ',';
        append_num(s, train_loss);
        s += '\n';
        write_text(fs::path(cfg.out) / "kappa.csv", s);
    }
    return 0;
}

int cmd_theory(const RunConfig& cfg) {
    echo_config(cfg);
    const utopia::SpectralSpec base = utopia::default_spectral_spec();
    const auto supp =
        utopia::suppression_experiment(cfg.kappa_grid, base, cfg.gamma, cfg.theory_n, cfg.seed);
    {
        std::string s = "kappa,w_c_norm,w_p_norm\n";
        for (const auto& pt : supp) {
            append_num(s, pt.kappa);
            s += ',';
            append_num(s, pt.w_c_norm);
            s += ',';
            append_num(s, pt.w_p_norm);
            s += '\n';
        }
        write_text(fs::path(cfg.out) / "suppression.csv", s);
    }
    const utopia::CertifiedSweep sweep = utopia::empirical_vs_certified(
        cfg.kappa_grid, base, cfg.gamma, cfg.sigma, cfg.theory_n, cfg.trials, cfg.seed);
    {
        std::string s = "kappa,w_c_norm,bound,empirical,mc_se,holds\n";
        for (const auto& pt : sweep.points) {
            append_num(s, pt.kappa);
            s += ',';
            append_num(s, pt.w_c_norm);
            s += ',';
            append_num(s, pt.bound);
            s += ',';
            append_num(s, pt.empirical);
            s += ',';
            append_num(s, pt.mc_se);
            s += ',';
            s += pt.holds ? "1" : "0";
            s += '\n';
        }
        write_text(fs::path(cfg.out) / "certified.csv", s);
    }
    return 0;
}

void add_common_options(CLI::App* sub, RunConfig& cfg, std::string& config_path) {
    sub->add_option("--data", cfg.data, "input data CSV");
    sub->add_option("--schema", cfg.schema, "schema JSON sidecar");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    sub->add_option("--eps-num", cfg.eps_num, "standardized l-inf budget");
    sub->add_option("--eps-cat", cfg.eps_cat, "per-row Hamming budget");
    sub->add_option("--iterations", cfg.iterations, "PGD iterations");
    sub->add_option("--step-size", cfg.step_size, "PGD step size (default eps-num/10)");
    sub->add_option("--amplification", cfg.amplification, "shortcut amplification factor");
    sub->add_option("--momentum", cfg.momentum, "momentum coefficient");
    sub->add_option("--tau", cfg.tau, "correlation threshold");
    sub->add_option("--epochs", cfg.epochs, "training epochs");
    sub->add_option("--lr", cfg.lr, "learning rate");
    sub->add_option("--seed", cfg.seed, "global seed (env UTOPIA_SEED overrides)");
    sub->add_option("--threads", cfg.threads, "worker cap; never changes results");
    sub->add_option("--defense", cfg.defenses, "defense to evaluate (repeatable)");
    sub->add_option("--victim", cfg.victims, "victim model (repeatable)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unlearnable tabular data toolkit"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    CLI::App* protect = app.add_subcommand("protect", "craft a protected copy of a dataset");
    CLI::App* eval = app.add_subcommand("eval", "train victims on clean/protected variants");
    CLI::App* diagnose = app.add_subcommand("diagnose", "saliency, landscape, robustness, kappa");
    CLI::App* theory = app.add_subcommand("theory", "suppression and certified-bound tables");
    for (CLI::App* sub : {protect, eval, diagnose, theory})
        add_common_options(sub, cfg, config_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error class=config: " << e.what() << "\n";
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        // precedence: shipped defaults < config file < explicit flags
        if (!config_path.empty()) {
            RunConfig file_cfg;
            apply_config_file(file_cfg, config_path);
            auto absent = [&](const char* flag) { return sub->count(flag) == 0; };
            if (absent("--data")) cfg.data = file_cfg.data;
            if (absent("--schema")) cfg.schema = file_cfg.schema;
            if (absent("--out")) cfg.out = file_cfg.out;
            if (absent("--eps-num")) cfg.eps_num = file_cfg.eps_num;
            if (absent("--eps-cat")) cfg.eps_cat = file_cfg.eps_cat;
            if (absent("--iterations")) cfg.iterations = file_cfg.iterations;
            if (absent("--step-size")) cfg.step_size = file_cfg.step_size;
            if (absent("--amplification")) cfg.amplification = file_cfg.amplification;
            if (absent("--momentum")) cfg.momentum = file_cfg.momentum;
            if (absent("--tau")) cfg.tau = file_cfg.tau;
            if (absent("--epochs")) cfg.epochs = file_cfg.epochs;
            if (absent("--lr")) cfg.lr = file_cfg.lr;
            if (absent("--seed")) cfg.seed = file_cfg.seed;
            if (absent("--threads")) cfg.threads = file_cfg.threads;
            if (absent("--defense")) cfg.defenses = file_cfg.defenses;
            if (absent("--victim")) cfg.victims = file_cfg.victims;
        }

        cfg.command = sub->get_name();
        if (const char* env_seed = std::getenv("UTOPIA_SEED")) {
            std::uint64_t s = 0;
            const std::string es(env_seed);
            auto [p, e] = std::from_chars(es.data(), es.data() + es.size(), s);
            if (e != std::errc{} || p != es.data() + es.size())
                throw utopia::ConfigError("UTOPIA_SEED is not an integer: " + es);
            cfg.seed = s;
        }
        validate_run_config(cfg);

        if (cfg.command == "protect") return cmd_protect(cfg);
        if (cfg.command == "eval") return cmd_eval(cfg);
        if (cfg.command == "diagnose") return cmd_diagnose(cfg);
        if (cfg.command == "theory") return cmd_theory(cfg);
        throw utopia::ConfigError("unknown command");
    } catch (const utopia::ConfigError& e) {
        std::cerr << "error class=config: " << e.what() << "\n";
        return 2;
    } catch (const utopia::ValidationError& e) {
        std::cerr << "error class=config: " << e.what() << "\n";
        return 2;
    } catch (const utopia::NumericError& e) {
        std::cerr << "error class=numeric: " << e.what() << "\n";
        return 3;
    } catch (const utopia::IoError& e) {
        std::cerr << "error class=io: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error class=numeric: " << e.what() << "\n";
        return 3;
    }
}
