#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "univip/checkpoint.hpp"
#include "univip/config.hpp"
#include "univip/eval.hpp"
#include "univip/gradcheck.hpp"
#include "univip/objective.hpp"
#include "univip/trainer.hpp"

// Workbench front end. Every subcommand prints exactly one JSON object on
// stdout; progress and diagnostics go to stderr. Any config key is reachable
// as a flag: --section.key value, applied on top of --config and the profile.

namespace {

using namespace univip;
using nlohmann::json;

using KvList = std::vector<std::pair<std::string, std::string>>;

// leftover args are section.key/value pairs
KvList overrides_from(const std::vector<std::string>& extras) {
    KvList out;
    for (std::size_t i = 0; i < extras.size(); i += 2) {
        const std::string& key = extras[i];
        if (key.rfind("--", 0) != 0 || key.size() <= 2) {
            throw UsageError("expected an override flag like --views.k, got '" + key + "'");
        }
        if (i + 1 >= extras.size()) {
            throw UsageError("override '" + key + "' is missing its value");
        }
        out.emplace_back(key.substr(2), extras[i + 1]);
    }
    return out;
}

json box_json(const Box& b) {
    return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

void emit(const json& j) { std::printf("%s\n", j.dump().c_str()); }

// shared --config/--profile plumbing; dedicated flags win over extras
struct ConfigArgs {
    std::string config_path;
    std::string profile;
    KvList pinned;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (key = value sections)");
        cmd->add_option("--profile", profile, "named defaults: desk or paper");
        cmd->allow_extras();
    }

    TrainConfig load(CLI::App* cmd) const {
        KvList ov = overrides_from(cmd->remaining());
        if (!profile.empty()) ov.emplace_back("profile", profile);
        for (const auto& kv : pinned) ov.push_back(kv);
        return load_config(config_path, ov);
    }
};

TrainingSample<float> sample_from_dataset(const TrainConfig& cfg, const std::string& dataset,
                                          std::size_t index, uint64_t seed) {
    DatasetManifest m = read_manifest(dataset);
    DatasetSample ds = load_sample(dataset, m, index);
    auto props = generate_proposals(ds.image, cfg.proposals).boxes;
    return build_training_sample<float>(ds.image, props, cfg.views, seed);
}

// architecture comes from the config embedded at save time
ModelF model_from_checkpoint(const std::string& path, TrainConfig& cfg_out) {
    CheckpointData meta = peek_checkpoint(path);
    cfg_out = parse_config_text(meta.config_ini);
    ModelF model(cfg_out.dims, 0);
    load_checkpoint(path, model);
    return model;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised multi-instance pretraining workbench"};
    app.require_subcommand(1);
    int rc = 0;

    // ---- gen-data ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "synthesize a labeled scene dataset");
    ConfigArgs gen_cfg;
    gen_cfg.attach(gen);
    std::string gen_out;
    long gen_count = -1;
    long long gen_seed = -1;
    gen->add_option("--out", gen_out, "dataset directory")->required();
    gen->add_option("--count", gen_count, "number of scenes");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->callback([&] {
        if (gen_count >= 0) gen_cfg.pinned.emplace_back("data.count", std::to_string(gen_count));
        if (gen_seed >= 0) gen_cfg.pinned.emplace_back("train.seed", std::to_string(gen_seed));
        TrainConfig cfg = gen_cfg.load(gen);
        DatasetManifest m = write_dataset(gen_out, cfg.scene, cfg.seed,
                                          static_cast<int>(cfg.scene_count));
        emit({{"dir", gen_out}, {"scenes", m.image_files.size()}, {"seed", cfg.seed}});
    });

    // ---- propose -----------------------------------------------------------
    auto* prop = app.add_subcommand("propose", "run proposal generation on one stored scene");
    ConfigArgs prop_cfg;
    prop_cfg.attach(prop);
    std::string prop_ds;
    std::size_t prop_index = 0;
    prop->add_option("--dataset", prop_ds, "dataset directory")->required();
    prop->add_option("--index", prop_index, "scene index");
    prop->callback([&] {
        TrainConfig cfg = prop_cfg.load(prop);
        DatasetManifest m = read_manifest(prop_ds);
        DatasetSample ds = load_sample(prop_ds, m, prop_index);
        auto res = generate_proposals(ds.image, cfg.proposals);
        json boxes = json::array();
        for (const Box& b : res.boxes) boxes.push_back(box_json(b));
        emit({{"index", prop_index},
              {"raw", res.raw_boxes.size()},
              {"kept", res.boxes.size()},
              {"boxes", boxes}});
    });

    // ---- make-views --------------------------------------------------------
    auto* mk = app.add_subcommand("make-views", "build one training sample and show its geometry");
    ConfigArgs mk_cfg;
    mk_cfg.attach(mk);
    std::string mk_ds;
    std::size_t mk_index = 0;
    long long mk_seed = 0;
    mk->add_option("--dataset", mk_ds, "dataset directory")->required();
    mk->add_option("--index", mk_index, "scene index");
    mk->add_option("--seed", mk_seed, "view construction seed");
    mk->callback([&] {
        TrainConfig cfg = mk_cfg.load(mk);
        auto s = sample_from_dataset(cfg, mk_ds, mk_index, static_cast<uint64_t>(mk_seed));
        json inst = json::array();
        for (const Box& b : s.geometry.instances) inst.push_back(box_json(b));
        emit({{"crop1", box_json(s.geometry.crop1)},
              {"crop2", box_json(s.geometry.crop2)},
              {"overlap", box_json(s.geometry.overlap)},
              {"instances", inst},
              {"fallback_used", s.geometry.fallback_used},
              {"iterations_used", s.geometry.iterations_used}});
    });

    // ---- train -------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "run the optimization loop");
    ConfigArgs tr_cfg;
    tr_cfg.attach(tr);
    bool tr_quiet = false;
    tr->add_flag("--quiet", tr_quiet, "suppress stderr progress lines");
    tr->callback([&] {
        TrainConfig cfg = tr_cfg.load(tr);
        TrainResult res = train(cfg, tr_quiet);
        emit({{"steps", res.steps_run},
              {"steps_per_epoch", res.steps_per_epoch},
              {"final_total_loss", res.final_total_loss},
              {"metrics", res.metrics_path},
              {"checkpoint", res.final_checkpoint}});
    });

    // ---- probe -------------------------------------------------------------
    auto* pb = app.add_subcommand("probe", "linear classification on frozen features");
    std::string pb_ckpt, pb_ds;
    ProbeConfig pb_pc;
    pb->add_option("--checkpoint", pb_ckpt, "trained checkpoint")->required();
    pb->add_option("--dataset", pb_ds, "labeled dataset directory")->required();
    pb->add_option("--iters", pb_pc.iters, "probe gradient steps");
    pb->add_option("--lr", pb_pc.lr, "probe learning rate");
    pb->add_option("--l2", pb_pc.l2, "probe weight shrinkage");
    pb->callback([&] {
        TrainConfig cfg;
        ModelF model = model_from_checkpoint(pb_ckpt, cfg);
        EvalSplit split = extract_features(model, pb_ds, cfg.views.instance_size);
        double acc = linear_probe(split.train, split.test, pb_pc);
        emit({{"accuracy", acc},
              {"train_instances", split.train.x.size()},
              {"test_instances", split.test.x.size()}});
    });

    // ---- knn ---------------------------------------------------------------
    auto* kn = app.add_subcommand("knn", "cosine k-NN on frozen features");
    std::string kn_ckpt, kn_ds;
    int kn_k = 5;
    kn->add_option("--checkpoint", kn_ckpt, "trained checkpoint")->required();
    kn->add_option("--dataset", kn_ds, "labeled dataset directory")->required();
    kn->add_option("-k,--k", kn_k, "neighbors consulted per query");
    kn->callback([&] {
        TrainConfig cfg;
        ModelF model = model_from_checkpoint(kn_ckpt, cfg);
        EvalSplit split = extract_features(model, kn_ds, cfg.views.instance_size);
        double acc = knn_accuracy(split.train, split.test, kn_k);
        emit({{"accuracy", acc}, {"k", kn_k}, {"reference", split.train.x.size()}});
    });

    // ---- check-grad --------------------------------------------------------
    auto* cg = app.add_subcommand("check-grad",
                                  "finite-difference audit of the full objective");
    long long cg_seed = 37;
    double cg_h = 1e-5, cg_tol = 1e-4;
    std::size_t cg_probes = 4;
    cg->add_option("--seed", cg_seed, "model/sample seed");
    cg->add_option("--fd-step", cg_h, "finite-difference step");
    cg->add_option("--tol", cg_tol, "relative error tolerance");
    cg->add_option("--probes", cg_probes, "sampled entries per parameter (0 = all)");
    cg->callback([&] {
        ModelDims dims;
        dims.k = 2;
        Model model(dims, static_cast<uint64_t>(cg_seed));
        Rng rng(static_cast<uint64_t>(cg_seed) + 1);
        auto mk_sample = [&] {
            TrainingSample<double> s;
            auto img = [&] {
                std::vector<double> v(3 * 16 * 16);
                for (double& x : v) x = rng.uniform(0.05, 0.95);
                return Tensor::from_data({3, 16, 16}, std::move(v));
            };
            s.scene1 = img();
            s.scene2 = img();
            for (int i = 0; i < dims.k; ++i) s.instances.push_back(img());
            return s;
        };
        auto s1 = mk_sample(), s2 = mk_sample();
        auto fw1 = forward_sample(model, s1);
        auto fw2 = forward_sample(model, s2);
        TransportPlan p1 = solve_transport(fw1, SinkhornParams{});
        TransportPlan p2 = solve_transport(fw2, SinkhornParams{});
        std::vector<Tensor> params;
        for (auto& p : model.online_parameters()) params.push_back(p.tensor);
        auto build = [&] {
            auto a = sample_objective_with_plan(model, forward_sample(model, s1), p1,
                                                LossSwitches{});
            auto b = sample_objective_with_plan(model, forward_sample(model, s2), p2,
                                                LossSwitches{});
            return batch_mean<double>({a.total, b.total});
        };
        auto report = check_gradients(params, build, cg_h, cg_tol, cg_probes,
                                      static_cast<uint64_t>(cg_seed) + 2);
        emit({{"ok", report.ok},
              {"max_rel_err", report.max_err},
              {"probes", report.probes},
              {"kink_hits", report.kink_hits}});
        if (!report.ok) rc = 3;
    });

    // ---- sinkhorn-demo -----------------------------------------------------
    auto* sd = app.add_subcommand("sinkhorn-demo", "solve one random transport problem");
    int sd_k = 4;
    long long sd_seed = 5;
    SinkhornParams sd_params;
    sd->add_option("-k,--k", sd_k, "problem size");
    sd->add_option("--seed", sd_seed, "cost/marginal seed");
    sd->add_option("--epsilon", sd_params.epsilon, "entropic regularizer");
    sd->add_option("--tol", sd_params.tol, "marginal violation target");
    sd->add_option("--max-iter", sd_params.max_iter, "sweep budget");
    sd->callback([&] {
        if (sd_k < 1) throw UsageError("sinkhorn-demo: k must be >= 1");
        Rng rng(static_cast<uint64_t>(sd_seed));
        CostMatrix cm;
        cm.k = sd_k;
        cm.c.resize(static_cast<std::size_t>(sd_k) * sd_k);
        for (double& c : cm.c) c = rng.uniform(0.0, 2.0);
        Marginals marg;
        auto draw = [&] {
            std::vector<double> v(static_cast<std::size_t>(sd_k));
            double sum = 0.0;
            for (double& x : v) {
                x = rng.uniform(0.05, 1.0);
                sum += x;
            }
            for (double& x : v) x /= sum;
            return v;
        };
        marg.b = draw();
        marg.a = draw();
        TransportPlan plan = sinkhorn(cm, marg, sd_params);
        double viol = 0.0;
        for (int m = 0; m < sd_k; ++m) {
            double row = 0.0;
            for (int n = 0; n < sd_k; ++n) row += plan.at(m, n);
            viol = std::max(viol, std::abs(row - marg.b[static_cast<std::size_t>(m)]));
        }
        for (int n = 0; n < sd_k; ++n) {
            double col = 0.0;
            for (int m = 0; m < sd_k; ++m) col += plan.at(m, n);
            viol = std::max(viol, std::abs(col - marg.a[static_cast<std::size_t>(n)]));
        }
        double cost = 0.0;
        for (std::size_t i = 0; i < cm.c.size(); ++i) cost += cm.c[i] * plan.y[i];
        json rows = json::array();
        for (int m = 0; m < sd_k; ++m) {
            json r = json::array();
            for (int n = 0; n < sd_k; ++n) r.push_back(plan.at(m, n));
            rows.push_back(r);
        }
        emit({{"converged", plan.converged},
              {"iterations", plan.iterations},
              {"max_violation", viol},
              {"plan_cost", cost},
              {"plan", rows}});
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "univip: %s\n", e.what());
        return exit_code_for(e);
    }
    return rc;
}
