// SPDX-License-Identifier: Apache-2.0
//
// wssl: train small classifiers with per-example-weighted semi-supervised
// learning. Subcommands: gen-data, run, oracle, sweep.
//
// Exit codes: 0 success, 2 usage/config error, 3 numerical failure,
// 4 I/O error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "wssl/config.hpp"
#include "wssl/data.hpp"
#include "wssl/influence.hpp"
#include "wssl/report.hpp"
#include "wssl/trainer.hpp"

namespace {

using namespace wssl;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

// Config keys double as CLI flags; every flag is a string and funnels
// through the same parser as config files, flags winning over the file.
struct CfgFlags {
    std::vector<std::pair<std::string, std::shared_ptr<std::string>>> bindings;
    std::map<std::string, CLI::Option*> options;

    void add(CLI::App* sub, const std::string& key, const std::string& desc,
             const std::string& extra_alias = "") {
        auto holder = std::make_shared<std::string>();
        std::string names = "--" + key;
        if (!extra_alias.empty()) names += ",--" + extra_alias;
        options[key] = sub->add_option(names, *holder, desc);
        bindings.emplace_back(key, holder);
    }

    void add_standard(CLI::App* sub) {
        add(sub, "mode", "per_example|single_lambda|fixed_lambda|supervised_only");
        add(sub, "seed", "run seed");
        add(sub, "outer_iters", "outer iterations");
        add(sub, "inner_steps", "inner model steps per outer iteration (N)", "N");
        add(sub, "warmup_iters", "model-only steps before the outer loop");
        add(sub, "theta_step", "model step size (alpha)", "alpha");
        add(sub, "lambda_step", "weight step size (eta); 0 disables the outer loop", "eta");
        add(sub, "batch_labeled", "labeled batch size");
        add(sub, "batch_unlabeled", "unlabeled batch size");
        add(sub, "batch_validation", "validation batch size (when V is large)");
        add(sub, "validation_full_limit", "use full V up to this size");
        add(sub, "lambda_init", "initial per-example weight");
        add(sub, "damping", "Hessian damping epsilon");
        add(sub, "pseudo_threshold", "pseudo-label confidence gate");
        add(sub, "ihvp", "exact|identity|neumann");
        add(sub, "neumann_terms", "Neumann series terms");
        add(sub, "neumann_scale", "Neumann scale; <=0 resolves to 1/lambda_max per step");
        add(sub, "theta_opt", "adam|sgd");
        add(sub, "sgd_momentum", "momentum for theta_opt=sgd");
        add(sub, "hidden_dim", "hidden units");
        add(sub, "binary_reparam", "collapse the two-logit last layer (0/1)");
        add(sub, "weights_log_stride", "weights.csv stride; 0 disables");
        add(sub, "snapshot_iters", "comma list of boundary snapshot iterations");
    }

    // Flags win over the config file; collect every error.
    void apply(RunSpec& spec) const {
        std::vector<std::string> errors;
        for (const auto& [key, holder] : bindings) {
            if (options.at(key)->count() == 0) continue;
            try {
                apply_config_key(spec, key, *holder);
            } catch (const ConfigError& e) {
                errors.push_back(e.what());
            }
        }
        if (!errors.empty()) {
            std::string msg = "invalid flags:";
            for (const std::string& e : errors) msg += "\n  - " + e;
            throw ConfigError(msg);
        }
    }
};

RunSpec resolve_spec(const std::string& config_path, const CfgFlags& flags,
                     const std::string& data_flag, const std::string& out_flag,
                     int data_count, int out_count) {
    RunSpec spec;
    if (!config_path.empty()) apply_config_text(spec, read_text(config_path));
    flags.apply(spec);
    if (data_count > 0) spec.data = data_flag;
    if (out_count > 0) spec.out = out_flag;
    if (spec.data.empty()) throw ConfigError("no dataset: pass --data or a config with data=");
    if (spec.out.empty()) throw ConfigError("no output directory: pass --out");
    return spec;
}

void validate_or_throw(const TrainConfig& cfg, const SplitDataset& ds) {
    const std::vector<std::string> errs = validate_config(cfg, ds);
    if (errs.empty()) return;
    std::string msg = "invalid config:";
    for (const std::string& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
}

int run_one(RunSpec spec) {
    const SplitDataset ds = read_dataset_csv(spec.data);
    spec.data = std::filesystem::absolute(spec.data).string();
    validate_or_throw(spec.cfg, ds);
    try {
        const TrainResult result = execute_run(spec, ds);
        std::cout << "run " << run_mode_name(spec.cfg.mode) << " seed " << spec.cfg.seed
                  << ": final test_err " << fmt_sig(result.log.back().test_err, 9) << " ("
                  << fmt_sig(result.wall_seconds, 3) << "s) -> " << spec.out << "\n";
    } catch (const NotPositiveDefinite& e) {
        const std::filesystem::path snap = std::filesystem::path(spec.out) /
                                           "failure_snapshot.txt";
        write_text_atomic(snap, std::string("numerical failure: ") + e.what() + "\n" +
                                    run_manifest(spec));
        std::cerr << "numerical failure: " << e.what() << "\nsnapshot: " << snap.string()
                  << "\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        const std::filesystem::path snap = std::filesystem::path(spec.out) /
                                           "failure_snapshot.txt";
        write_text_atomic(snap, std::string("numerical failure: ") + e.what() + "\n" +
                                    run_manifest(spec));
        std::cerr << "numerical failure: " << e.what() << "\nsnapshot: " << snap.string()
                  << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int run_many_seeds(const RunSpec& base, const std::vector<std::uint64_t>& seeds) {
    std::vector<std::future<int>> futures;
    futures.reserve(seeds.size());
    for (std::uint64_t s : seeds) {
        RunSpec spec = base;
        spec.cfg.seed = s;
        spec.out = (std::filesystem::path(base.out) / ("seed_" + std::to_string(s))).string();
        futures.push_back(std::async(std::launch::async, run_one, std::move(spec)));
    }
    int rc = kExitOk;
    for (auto& f : futures) rc = std::max(rc, f.get());
    return rc;
}

int cmd_gen_data(const std::string& kind, std::size_t n, double noise, double margin,
                 std::uint64_t seed, std::size_t n_labeled, std::size_t n_val,
                 std::size_t n_unlabeled, const std::string& out) {
    RawDataset raw;
    if (kind == "linear")
        raw = gen_linear(n, margin, seed);
    else if (kind == "circles")
        raw = gen_circles(n, noise, seed);
    else if (kind == "moons")
        raw = gen_moons(n, noise, seed);
    else
        throw ConfigError("unknown generator '" + kind + "'");
    const SplitDataset ds = split(raw, n_labeled, n_val, n_unlabeled, seed);

    const std::filesystem::path dir(out);
    write_dataset_csv((dir / "dataset.csv").string(), ds);
    std::ostringstream manifest;
    manifest << "command=gen-data\n"
             << "version=" << kVersion << "\n"
             << "kind=" << kind << "\n"
             << "n=" << n << "\n"
             << "noise=" << fmt_sig(noise, 17) << "\n"
             << "margin=" << fmt_sig(margin, 17) << "\n"
             << "seed=" << seed << "\n"
             << "labeled=" << n_labeled << "\n"
             << "val=" << n_val << "\n"
             << "unlabeled=" << n_unlabeled << "\n"
             << "out=" << out << "\n";
    write_text_atomic(dir / "manifest.cfg", manifest.str());
    std::cout << (dir / "dataset.csv").string() << "\n";
    return kExitOk;
}

int cmd_oracle(RunSpec spec, int probe_size, double epsilon) {
    const SplitDataset ds = read_dataset_csv(spec.data);
    spec.data = std::filesystem::absolute(spec.data).string();
    if (probe_size < 1) throw ConfigError("probe size must be >= 1");
    if (static_cast<std::size_t>(probe_size) > ds.unlabeled_size())
        throw ConfigError("probe size exceeds unlabeled set size " +
                          std::to_string(ds.unlabeled_size()));
    if (epsilon < 1e-4 || epsilon > 1e-1)
        throw ConfigError("epsilon must lie in [1e-4, 1e-1]");

    SeededRng master(spec.cfg.seed);
    SeededRng rng_init = master.fork();
    SeededRng rng_probe = master.fork();
    Mlp net = make_mlp({2, static_cast<std::size_t>(spec.cfg.hidden_dim), 2}, rng_init);
    if (spec.cfg.binary_reparam) net = reparam_binary(net);

    std::vector<std::size_t> ids(ds.unlabeled_size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    shuffle(rng_probe, ids);
    ids.resize(static_cast<std::size_t>(probe_size));
    DenseMatrix probe_x(ids.size(), 2);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        probe_x(i, 0) = ds.unlabeled_x(ids[i], 0);
        probe_x(i, 1) = ds.unlabeled_x(ids[i], 1);
    }

    IhvpMode mode = IhvpMode::exact();
    if (spec.cfg.ihvp == "identity") mode = IhvpMode::identity();
    if (spec.cfg.ihvp == "neumann")
        mode = IhvpMode{IhvpMode::Variant::neumann, spec.cfg.neumann_terms,
                        spec.cfg.neumann_scale};

    const std::filesystem::path dir(spec.out);
    std::ostringstream manifest;
    manifest << "command=oracle\n"
             << "version=" << kVersion << "\n"
             << "data=" << spec.data << "\n"
             << "out=" << spec.out << "\n"
             << "seed=" << spec.cfg.seed << "\n"
             << "probe=" << probe_size << "\n"
             << "epsilon=" << fmt_sig(epsilon, 17) << "\n"
             << "ihvp=" << spec.cfg.ihvp << "\n"
             << "neumann_terms=" << spec.cfg.neumann_terms << "\n"
             << "neumann_scale=" << fmt_sig(spec.cfg.neumann_scale, 17) << "\n"
             << "lambda_init=" << fmt_sig(spec.cfg.lambda_init, 17) << "\n"
             << "damping=" << fmt_sig(spec.cfg.damping, 17) << "\n"
             << "hidden_dim=" << spec.cfg.hidden_dim << "\n"
             << "binary_reparam=" << (spec.cfg.binary_reparam ? 1 : 0) << "\n";
    write_text_atomic(dir / "manifest.cfg", manifest.str());

    try {
        const ProbeResult pr =
            run_influence_probe(net, to_batch(ds.labeled), to_batch(ds.validation), probe_x,
                                spec.cfg.lambda_init, epsilon, mode, spec.cfg.damping);
        std::ostringstream csv;
        csv << "example_id,influence_score,oracle_score\n";
        for (std::size_t i = 0; i < ids.size(); ++i)
            csv << ids[i] << ',' << fmt_sig(pr.influence[i], 9) << ','
                << fmt_sig(pr.oracle[i], 9) << '\n';
        write_text_atomic(dir / "oracle.csv", csv.str());
        std::cout << "pearson=" << fmt_sig(pr.pearson, 6)
                  << " sign_agreement=" << fmt_sig(pr.sign_agreement, 6) << "\n";
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const NotPositiveDefinite& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

struct SweepRow {
    std::string mode;
    std::uint64_t seed = 0;
    double final_val_loss = 0.0;
    double final_val_err = 0.0;
    double final_test_err = 0.0;
    double lambda_mean = 0.0;
    LambdaAgreement agreement;
};

int cmd_sweep(const RunSpec& base, const std::vector<std::string>& modes,
              const std::vector<std::uint64_t>& seeds) {
    const SplitDataset ds = read_dataset_csv(base.data);
    for (const std::string& m : modes) parse_run_mode(m);  // fail fast on typos

    struct Member {
        std::string mode;
        std::uint64_t seed;
        std::future<SweepRow> future;
    };
    std::vector<Member> members;
    for (const std::string& mode : modes) {
        for (std::uint64_t seed : seeds) {
            RunSpec spec = base;
            spec.cfg.mode = parse_run_mode(mode);
            spec.cfg.seed = seed;
            spec.out = (std::filesystem::path(base.out) / mode /
                        ("seed_" + std::to_string(seed)))
                           .string();
            auto task = [spec, &ds]() {
                RunSpec local = spec;
                local.data = std::filesystem::absolute(local.data).string();
                validate_or_throw(local.cfg, ds);
                const TrainResult r = execute_run(local, ds);
                SweepRow row;
                row.mode = run_mode_name(local.cfg.mode);
                row.seed = local.cfg.seed;
                row.final_val_loss = r.log.back().val_loss;
                row.final_val_err = r.log.back().val_err;
                row.final_test_err = r.log.back().test_err;
                row.lambda_mean = r.log.back().lambda_mean;
                row.agreement = pseudo_label_agreement(r.params, ds, r.weights);
                return row;
            };
            members.push_back({mode, seed, std::async(std::launch::async, task)});
        }
    }

    std::ostringstream csv;
    csv << "mode,seed,final_val_loss,final_val_err,final_test_err,lambda_mean,"
           "lambda_mean_pl_correct,lambda_mean_pl_incorrect\n";
    for (Member& m : members) {
        const SweepRow row = m.future.get();
        csv << row.mode << ',' << row.seed << ',' << fmt_sig(row.final_val_loss, 9) << ','
            << fmt_sig(row.final_val_err, 9) << ',' << fmt_sig(row.final_test_err, 9) << ','
            << fmt_sig(row.lambda_mean, 9) << ',' << fmt_sig(row.agreement.mean_correct, 9)
            << ',' << fmt_sig(row.agreement.mean_incorrect, 9) << '\n';
    }
    write_text_atomic(std::filesystem::path(base.out) / "summary.csv", csv.str());
    std::cout << (std::filesystem::path(base.out) / "summary.csv").string() << "\n";
    return kExitOk;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(static_cast<std::uint64_t>(parse_int("seeds", t)));
    }
    if (out.empty()) throw ConfigError("empty seed list");
    return out;
}

std::vector<std::string> parse_mode_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    if (out.empty()) throw ConfigError("empty mode list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised training with learned per-example weights"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate and split a synthetic dataset");
    std::string g_kind = "moons";
    std::size_t g_n = 1240, g_labeled = 10, g_val = 30, g_unlabeled = 1000;
    double g_noise = 0.1, g_margin = 1.0;
    std::uint64_t g_seed = 1;
    std::string g_out;
    gen->add_option("--kind", g_kind, "linear|circles|moons");
    gen->add_option("--n", g_n, "total points to generate");
    gen->add_option("--noise", g_noise, "noise standard deviation (circles/moons)");
    gen->add_option("--margin", g_margin, "class margin (linear)");
    gen->add_option("--seed", g_seed, "generator seed");
    gen->add_option("--labeled", g_labeled, "labeled split size");
    gen->add_option("--val", g_val, "validation split size");
    gen->add_option("--unlabeled", g_unlabeled, "unlabeled split size");
    gen->add_option("--out", g_out, "output directory")->required();

    // run
    auto* run = app.add_subcommand("run", "train one model (or one per seed)");
    CfgFlags run_flags;
    run_flags.add_standard(run);
    std::string r_config, r_data, r_out, r_seeds;
    auto* r_config_opt = run->add_option("--config", r_config, "config file (key=value)");
    auto* r_data_opt = run->add_option("--data", r_data, "dataset CSV");
    auto* r_out_opt = run->add_option("--out", r_out, "output directory");
    auto* r_seeds_opt = run->add_option("--seeds", r_seeds, "comma list; one run per seed");
    r_seeds_opt->excludes(run_flags.options.at("seed"));

    // oracle
    auto* oracle = app.add_subcommand("oracle",
                                      "influence vs retraining oracle on a convex probe");
    CfgFlags oracle_flags;
    oracle_flags.add_standard(oracle);
    std::string o_config, o_data, o_out;
    int o_probe = 50;
    double o_epsilon = 1e-2;
    auto* o_config_opt = oracle->add_option("--config", o_config, "config file");
    auto* o_data_opt = oracle->add_option("--data", o_data, "dataset CSV");
    auto* o_out_opt = oracle->add_option("--out", o_out, "output directory");
    oracle->add_option("--probe", o_probe, "number of probed unlabeled examples");
    oracle->add_option("--epsilon", o_epsilon, "retraining perturbation in [1e-4, 1e-1]");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "mode x seed comparison harness");
    CfgFlags sweep_flags;
    sweep_flags.add_standard(sweep);
    std::string s_config, s_data, s_out;
    std::string s_seeds = "1,2,3,4,5";
    std::string s_modes = "per_example,fixed_lambda,supervised_only";
    auto* s_config_opt = sweep->add_option("--config", s_config, "config file");
    auto* s_data_opt = sweep->add_option("--data", s_data, "dataset CSV");
    auto* s_out_opt = sweep->add_option("--out", s_out, "output directory");
    sweep->add_option("--seeds", s_seeds, "comma list of seeds");
    sweep->add_option("--modes", s_modes, "comma list of run modes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(g_kind, g_n, g_noise, g_margin, g_seed, g_labeled, g_val,
                                g_unlabeled, g_out);
        if (run->parsed()) {
            const RunSpec spec =
                resolve_spec(r_config_opt->count() ? r_config : "", run_flags, r_data, r_out,
                             static_cast<int>(r_data_opt->count()),
                             static_cast<int>(r_out_opt->count()));
            if (r_seeds_opt->count() > 0) return run_many_seeds(spec, parse_seed_list(r_seeds));
            return run_one(spec);
        }
        if (oracle->parsed()) {
            RunSpec spec;
            spec.cfg.binary_reparam = true;  // the probe is a logistic problem
            if (o_config_opt->count()) apply_config_text(spec, read_text(o_config));
            oracle_flags.apply(spec);
            if (o_data_opt->count()) spec.data = o_data;
            if (o_out_opt->count()) spec.out = o_out;
            if (spec.data.empty()) throw ConfigError("no dataset: pass --data");
            if (spec.out.empty()) throw ConfigError("no output directory: pass --out");
            return cmd_oracle(spec, o_probe, o_epsilon);
        }
        if (sweep->parsed()) {
            const RunSpec base =
                resolve_spec(s_config_opt->count() ? s_config : "", sweep_flags, s_data, s_out,
                             static_cast<int>(s_data_opt->count()),
                             static_cast<int>(s_out_opt->count()));
            return cmd_sweep(base, parse_mode_list(s_modes), parse_seed_list(s_seeds));
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        // gen-data treats an unwritable destination as a usage error.
        return gen->parsed() ? kExitUsage : kExitIo;
    } catch (const NotPositiveDefinite& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
