#include "univip/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "univip/checkpoint.hpp"
#include "univip/objective.hpp"
#include "univip/schedule.hpp"
#include "univip/synth.hpp"

namespace univip {

namespace {

// Seed streams for one run; disjoint ranges keep sample augmentation, epoch
// shuffles and model init independent of each other.
constexpr uint64_t kModelStream = 0x10;
constexpr uint64_t kEpochStreamBase = 0x100;
constexpr uint64_t kSampleStreamBase = 0x10000;

std::string checkpoint_name(long epoch) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%03ld.uvip", epoch);
    return buf;
}

struct BatchOutcome {
    double scene = 0.0, scene_inst = 0.0, instance = 0.0, total = 0.0;
    double fallback_rate = 0.0;
    double sinkhorn_rate = 0.0;
};

} // namespace

TrainResult train(const TrainConfig& cfg, bool quiet) {
    validate_config(cfg);
    if (cfg.manifest.empty()) throw UsageError("train: no dataset directory configured");
    DatasetManifest manifest = read_manifest(cfg.manifest);
    long scene_count = static_cast<long>(manifest.image_files.size());
    if (scene_count == 0) throw DataError("train: dataset '" + cfg.manifest + "' is empty");

    std::filesystem::create_directories(cfg.out_dir);
    std::string config_dump = to_ini(cfg);
    {
        std::ofstream out(cfg.out_dir + "/config.ini");
        out << config_dump;
    }

    TrainResult res;
    res.metrics_path = cfg.out_dir + "/metrics.jsonl";
    res.steps_per_epoch = scene_count / cfg.batch_size;

    ModelF model(cfg.dims, derive_seed(cfg.seed, kModelStream));

    long total_steps = cfg.epochs * res.steps_per_epoch;
    if (cfg.epochs == 0) {
        // edge contract: emit the initial state and an empty metrics stream
        std::ofstream(res.metrics_path);
        res.final_checkpoint = cfg.out_dir + "/checkpoint_final.uvip";
        save_checkpoint(res.final_checkpoint, model,
                        CheckpointData{0, cfg.m0, config_dump});
        return res;
    }
    if (res.steps_per_epoch == 0) {
        throw UsageError("train: batch_size " + std::to_string(cfg.batch_size) +
                         " exceeds dataset size " + std::to_string(scene_count));
    }
    long warmup_steps = std::min(cfg.warmup_epochs * res.steps_per_epoch, total_steps);

    std::vector<TensorF> online;
    for (auto& p : model.online_parameters()) online.push_back(p.tensor);
    SgdF opt(online, cfg.sgd_momentum, cfg.weight_decay);

    // proposal boxes are pure functions of the stored image; compute lazily,
    // once, on the control thread
    std::vector<std::vector<Box>> proposal_cache(static_cast<std::size_t>(scene_count));
    std::vector<char> proposal_ready(static_cast<std::size_t>(scene_count), 0);

    std::ofstream metrics(res.metrics_path, std::ios::trunc);
    if (!metrics) throw DataError("train: cannot write metrics to " + res.metrics_path);

    const long B = cfg.batch_size;
    std::vector<long> order(static_cast<std::size_t>(scene_count));
    double last_m = cfg.m0;
    auto run_start = std::chrono::steady_clock::now();

    for (long step = 0; step < total_steps; ++step) {
        long epoch = step / res.steps_per_epoch;
        long step_in_epoch = step % res.steps_per_epoch;
        if (step_in_epoch == 0) {
            for (long i = 0; i < scene_count; ++i) order[static_cast<std::size_t>(i)] = i;
            Rng shuffle_rng(derive_seed(cfg.seed, kEpochStreamBase + static_cast<uint64_t>(epoch)));
            for (long i = scene_count - 1; i > 0; --i) {
                long j = static_cast<long>(shuffle_rng.uniform_int(0, i));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
        }

        std::vector<long> batch_idx(static_cast<std::size_t>(B));
        for (long j = 0; j < B; ++j) {
            batch_idx[static_cast<std::size_t>(j)] =
                order[static_cast<std::size_t>(step_in_epoch * B + j)];
        }
        for (long idx : batch_idx) {
            auto u = static_cast<std::size_t>(idx);
            if (!proposal_ready[u]) {
                DatasetSample ds = load_sample(cfg.manifest, manifest, u);
                proposal_cache[u] = generate_proposals(ds.image, cfg.proposals).boxes;
                proposal_ready[u] = 1;
            }
        }

        // sample construction: per-sample seeds + ordered slots keep the
        // result identical for any thread count
        std::vector<TrainingSample<float>> samples(static_cast<std::size_t>(B));
        std::vector<uint64_t> sample_seeds(static_cast<std::size_t>(B));
        auto build_one = [&](long j) {
            auto u = static_cast<std::size_t>(j);
            long global = step * B + j;
            uint64_t seed = derive_seed(cfg.seed, kSampleStreamBase + static_cast<uint64_t>(global));
            sample_seeds[u] = seed;
            auto scene_idx = static_cast<std::size_t>(batch_idx[u]);
            DatasetSample ds = load_sample(cfg.manifest, manifest, scene_idx);
            samples[u] =
                build_training_sample<float>(ds.image, proposal_cache[scene_idx], cfg.views, seed);
        };
        if (cfg.threads <= 1) {
            for (long j = 0; j < B; ++j) build_one(j);
        } else {
            std::atomic<long> next{0};
            auto worker = [&] {
                for (long j = next.fetch_add(1); j < B; j = next.fetch_add(1)) build_one(j);
            };
            std::vector<std::thread> pool;
            long n = std::min<long>(cfg.threads, B);
            pool.reserve(static_cast<std::size_t>(n));
            for (long t = 0; t < n; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        double lr = lr_schedule(step, total_steps, warmup_steps, cfg.base_lr);
        double m = momentum_schedule(step, total_steps, cfg.m0);
        last_m = m;

        BatchOutcome out;
        std::vector<TensorF> totals;
        totals.reserve(static_cast<std::size_t>(B));
        for (long j = 0; j < B; ++j) {
            auto u = static_cast<std::size_t>(j);
            TransportStats stats;
            LossBreakdown<float> lb;
            try {
                lb = sample_objective(model, samples[u], cfg.sinkhorn, cfg.switches, &stats);
            } catch (const NumericError& e) {
                char seedbuf[32];
                std::snprintf(seedbuf, sizeof(seedbuf), "0x%016llx",
                              static_cast<unsigned long long>(sample_seeds[u]));
                throw NumericError("train: step " + std::to_string(step) + " sample seed " +
                                   seedbuf + ": " + e.what());
            }
            double s = lb.scene.item(), si = lb.scene_instance.item();
            double ins = lb.instance.item(), tot = lb.total.item();
            if (!std::isfinite(s) || !std::isfinite(si) || !std::isfinite(ins) ||
                !std::isfinite(tot)) {
                char seedbuf[32];
                std::snprintf(seedbuf, sizeof(seedbuf), "0x%016llx",
                              static_cast<unsigned long long>(sample_seeds[u]));
                throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                                   ", sample seed " + seedbuf);
            }
            out.scene += s;
            out.scene_inst += si;
            out.instance += ins;
            out.total += tot;
            if (samples[u].geometry.fallback_used) out.fallback_rate += 1.0;
            if (!cfg.switches.instance || stats.converged) out.sinkhorn_rate += 1.0;
            totals.push_back(lb.total);
        }
        out.scene /= B;
        out.scene_inst /= B;
        out.instance /= B;
        out.total /= B;
        out.fallback_rate /= B;
        out.sinkhorn_rate /= B;

        TensorF batch_loss = batch_mean<float>(totals);
        for (auto& p : online) p.zero_grad();
        backward(batch_loss);
        opt.step(lr);
        model.ema_update(m);

        nlohmann::json row = {
            {"epoch", epoch},
            {"fallback_rate", out.fallback_rate},
            {"instance", out.instance},
            {"lr", lr},
            {"m", m},
            {"scene", out.scene},
            {"scene_instance", out.scene_inst},
            {"sinkhorn_convergence", out.sinkhorn_rate},
            {"step", step},
            {"total", out.total},
        };
        metrics << row.dump() << "\n";
        metrics.flush();
        res.steps_run = step + 1;
        res.final_total_loss = out.total;

        bool epoch_end = (step_in_epoch == res.steps_per_epoch - 1);
        if (epoch_end) {
            std::string path = cfg.out_dir + "/" + checkpoint_name(epoch + 1);
            save_checkpoint(path, model,
                            CheckpointData{static_cast<uint64_t>(step + 1), m, config_dump});
            res.epoch_checkpoints.push_back(path);
            if (!quiet) {
                double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                            run_start)
                                  .count();
                std::fprintf(stderr,
                             "epoch %ld/%ld step %ld/%ld loss %.4f lr %.4g m %.5f [%.1fs]\n",
                             epoch + 1, cfg.epochs, step + 1, total_steps, out.total, lr, m,
                             secs);
            }
        }
    }

    res.final_checkpoint = cfg.out_dir + "/checkpoint_final.uvip";
    save_checkpoint(res.final_checkpoint, model,
                    CheckpointData{static_cast<uint64_t>(total_steps), last_m, config_dump});
    return res;
}

} // namespace univip
