#include "fedmef/fl/simulator.hpp"

#include "fedmef/cost/cost_model.hpp"
#include "fedmef/errors.hpp"
#include "fedmef/fl/partition.hpp"
#include "fedmef/nn/loss.hpp"
#include "fedmef/sparse/codec.hpp"

#include <algorithm>
#include <exception>
#include <iostream>
#include <numeric>

namespace fedmef::fl {

namespace {

// Stream ids for Rng::derive.
enum : std::uint64_t {
    kStreamInit = 1,
    kStreamMask = 2,
    kStreamTrain = 3,
    kStreamTest = 4,
    kStreamPartition = 5,
    kStreamSample = 6,
    kStreamClient = 7,
};

struct Wire {
    std::uint64_t bits = 0;
    std::uint64_t bytes = 0;

    void add(const sparse::EncodedTensor &e) {
        bits += e.total_bits;
        bytes += sparse::serialize(e).size();
    }
};

Wire model_wire(const nn::SparseModel &m, unsigned b) {
    Wire w;
    for (const auto &t : m.weights)
        w.add(sparse::encode(t, b));
    for (const auto &bias : m.biases) {
        if (bias.empty())
            continue;
        w.add(sparse::encode(sparse::MaskedTensor(bias, sparse::Mask({bias.size()}, true)), b));
    }
    return w;
}

Wire topk_wire(const nn::SparseModel &m, const TopKGradients &t, unsigned b) {
    Wire w;
    for (std::size_t l = 0; l < t.indices.size(); ++l) {
        if (t.indices[l].empty())
            continue;
        const auto &shape = m.weights[l].shape();
        sparse::Mask mask(shape, false);
        std::vector<float> values(mask.size(), 0.0f);
        for (std::size_t j = 0; j < t.indices[l].size(); ++j) {
            mask.set(t.indices[l][j], true);
            values[t.indices[l][j]] = static_cast<float>(t.values[l][j]);
        }
        w.add(sparse::encode(sparse::MaskedTensor(std::move(values), std::move(mask)), b, sparse::Scheme::COO));
    }
    return w;
}

std::uint64_t bias_bits(const nn::SparseModel &m, unsigned b) {
    std::uint64_t n = 0;
    for (const auto &bias : m.biases)
        n += bias.size();
    return n * b;
}

/// O_d, O_s and the largest O_xi for the model's current masks.
struct CommSizes {
    double dense = 0.0, sparse = 0.0, topk = 0.0;
};

CommSizes comm_sizes(const nn::SparseModel &m, unsigned b, double zeta, const std::vector<std::size_t> &exclude) {
    CommSizes c;
    c.dense = c.sparse = static_cast<double>(bias_bits(m, b));
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        const auto &mask = m.weights[l].mask();
        const std::size_t n = mask.size(), nnz = mask.count_kept();
        const auto view = sparse::as_matrix(mask.shape());
        const auto scheme = sparse::select_scheme(mask.density(), view.rows, view.cols, nnz);
        c.dense += static_cast<double>(n) * b;
        c.sparse += static_cast<double>(sparse::storage_bits(n, nnz, b, scheme, view.rows, view.cols));
        if (std::find(exclude.begin(), exclude.end(), l) == exclude.end()) {
            const std::size_t xi = std::min(bae::marked_count(nnz, zeta), n - nnz);
            c.topk += static_cast<double>(sparse::storage_bits(n, xi, b, sparse::Scheme::COO));
        }
    }
    return c;
}

std::uint64_t wire_bound(Variant v, const CommSizes &c, bool adjusting) {
    double bits = 0.0;
    switch (v) {
    case Variant::FedAvgDense:
        bits = cost::comm_bits(cost::Framework::FedAvg, c.dense, c.sparse, 0.0);
        break;
    case Variant::StaticPrune:
        bits = cost::comm_bits(cost::Framework::StaticPrune, c.dense, c.sparse, 0.0);
        break;
    default:
        bits = cost::comm_bits(cost::Framework::FedMef, c.dense, c.sparse, adjusting ? c.topk : 0.0);
        break;
    }
    return static_cast<std::uint64_t>(bits);
}

std::vector<std::size_t> weighted_exclude(const config::ExperimentConfig &cfg) { return cfg.prune_exclude; }

} // namespace

LocalResult local_train(const nn::SparseModel &global, const data::LabeledDataset &train,
                        std::span<const std::size_t> shard, const LocalSettings &s, const bae::ExtrusionPlan *plan,
                        Rng rng) {
    if (s.extrude && !plan)
        throw InvalidArgument("local_train: extrusion requested without a plan");
    if (shard.empty())
        throw InvalidArgument("local_train: empty shard");
    LocalResult out;
    out.model = global;
    auto &model = out.model;

    nn::ForwardOptions fopt;
    fopt.sap = s.sap;
    fopt.backend = s.backend;
    fopt.value_bits = s.value_bits;
    nn::BackwardOptions bopt;
    bopt.input_grad = false;
    bopt.backend = s.backend;

    const std::size_t batch = std::max<std::size_t>(s.batch_size, 1);
    const std::size_t steps_per_epoch = (shard.size() + batch - 1) / batch;
    bae::ExtrusionPlan local_plan;
    if (plan) {
        local_plan = *plan;
        local_plan.budget_steps = s.epochs * steps_per_epoch;
    }

    std::vector<std::size_t> order(shard.begin(), shard.end());
    std::vector<std::size_t> last_batch;
    std::size_t step = 0;
    for (std::size_t e = 0; e < s.epochs; ++e) {
        rng.shuffle(order);
        const double eta = bae::base_lr(s.lr0, s.lr_decay, s.first_epoch + e);
        for (std::size_t start = 0; start < order.size(); start += batch, ++step) {
            const std::size_t end = std::min(order.size(), start + batch);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const auto x = train.batch<float>(idx);
            const auto y = train.batch_labels(idx);

            auto fwd = nn::forward(model, x, fopt);
            const auto lg = nn::loss_and_grad(fwd.output, y);
            auto grads = nn::backward(model, fwd.trace, lg.grad, bopt);
            out.loss_sum += static_cast<double>(lg.loss);
            out.max_cache_bits = std::max(out.max_cache_bits, fwd.trace.bits.cached);
            if (step == 0)
                out.first_cache_records = fwd.trace.cache_records;

            double lr = eta;
            if (s.extrude) {
                const double norm = bae::marked_norm(model, local_plan);
                const auto st = bae::schedule_at(local_plan, step, eta, norm);
                bae::add_penalty_gradient(model, local_plan, grads);
                lr = st.mu;
                if (s.record_schedule)
                    out.schedule.push_back(st);
            }
            nn::apply_masked_step(model, grads, static_cast<float>(lr));
            if (e + 1 == s.epochs && end == order.size())
                last_batch.assign(idx.begin(), idx.end());
        }
    }
    out.steps = step;

    if (s.collect_topk) {
        const auto x = train.batch<float>(last_batch);
        const auto y = train.batch_labels(last_batch);
        auto fwd = nn::forward(model, x, fopt);
        const auto lg = nn::loss_and_grad(fwd.output, y);
        nn::BackwardOptions dense = bopt;
        dense.dense_weight_grads = true;
        const auto grads = nn::backward(model, fwd.trace, lg.grad, dense);
        out.topk = extract_topk(model, grads, s.zeta, s.exclude);
    }
    return out;
}

double evaluate(const nn::SparseModel &model, const data::LabeledDataset &test, kernels::Backend backend) {
    if (test.size() == 0)
        return 0.0;
    constexpr std::size_t chunk = 256;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        const std::size_t end = std::min(test.size(), start + chunk);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto pred = nn::argmax(nn::predict(model, test.batch<float>(idx), backend));
        for (std::size_t j = 0; j < idx.size(); ++j)
            correct += pred[j] == test.labels[idx[j]] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

nn::SparseModel initial_model(const config::ExperimentConfig &cfg, std::uint64_t seed) {
    const auto tr = traits_of(cfg.variant);
    auto model = nn::init_model<float>(cfg.input, config::build_layers(cfg, tr.nsconv),
                                       Rng::derive(seed, kStreamInit).next_u64());
    const auto exclude = weighted_exclude(cfg);
    switch (tr.initial_mask) {
    case InitialMask::Random:
        nn::random_prune_model(model, cfg.mask_sparsity, Rng::derive(seed, kStreamMask).next_u64(), exclude);
        break;
    case InitialMask::Magnitude:
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
            if (std::find(exclude.begin(), exclude.end(), l) != exclude.end())
                continue;
            auto &w = model.weights[l];
            w.reset_mask(sparse::magnitude_prune(w.shape(), w.values(), cfg.mask_sparsity));
        }
        break;
    case InitialMask::Dense:
        break;
    }
    return model;
}

std::pair<data::LabeledDataset, data::LabeledDataset> load_datasets(const config::ExperimentConfig &cfg,
                                                                    std::uint64_t seed) {
    if (cfg.source == "csv") {
        const auto range = cfg.value_range == "unit"   ? data::ValueRange::Unit
                           : cfg.value_range == "byte" ? data::ValueRange::Byte
                                                       : data::ValueRange::Auto;
        return {data::load_csv(cfg.train_csv, cfg.input, cfg.classes, range),
                data::load_csv(cfg.test_csv, cfg.input, cfg.classes, range)};
    }
    return {data::synth_blobs(cfg.classes, cfg.train_per_class, cfg.input, cfg.noise,
                              Rng::derive(seed, kStreamTrain).next_u64()),
            data::synth_blobs(cfg.classes, cfg.test_per_class, cfg.input, cfg.noise,
                              Rng::derive(seed, kStreamTest).next_u64())};
}

RunResult run(const config::ExperimentConfig &cfg, std::uint64_t seed, const data::LabeledDataset &train,
              const data::LabeledDataset &test) {
    config::validate(cfg);
    train.validate();
    test.validate();
    if (train.shape != cfg.input || test.shape != cfg.input)
        throw ConfigError("dataset sample shape differs from model.input");
    if (cfg.clients > train.size())
        throw ConfigError("more clients than training samples");

    const auto tr = traits_of(cfg.variant);
    const auto exclude = weighted_exclude(cfg);
    RunResult result;
    result.variant = cfg.variant;
    result.seed = seed;

    nn::SparseModel global = initial_model(cfg, seed);
    Rng part_rng = Rng::derive(seed, kStreamPartition);
    const auto shards = partition_dirichlet(train.labels, train.classes, cfg.clients, cfg.alpha, 1, part_rng);
    for (const auto &s : shards)
        result.shard_sizes.push_back(s.size());

    const std::size_t per_round =
        cfg.clients_per_round == 0 ? cfg.clients : std::min(cfg.clients_per_round, cfg.clients);
    const std::size_t E = cfg.local_epochs;

    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        const bool adjusting = tr.adjusts_structure && r % cfg.adjust_period == 0 && r <= cfg.adjust_stop;
        const double zeta = adjusting ? bae::adjustment_rate(static_cast<double>(r * E),
                                                             static_cast<double>(cfg.adjust_stop),
                                                             static_cast<double>(E))
                                      : 0.0;

        std::vector<std::size_t> participants(cfg.clients);
        std::iota(participants.begin(), participants.end(), 0);
        if (per_round < cfg.clients) {
            Rng pick = Rng::derive(seed, kStreamSample, r);
            pick.shuffle(participants);
            participants.resize(per_round);
            std::sort(participants.begin(), participants.end());
        }
        std::vector<std::size_t> active;
        for (auto k : participants) {
            if (shards[k].empty())
                std::cerr << "warning: client " << k << " has no data; skipped in round " << r << "\n";
            else
                active.push_back(k);
        }
        if (active.empty())
            throw ProtocolError("round " + std::to_string(r) + " has no client with data");

        std::optional<bae::ExtrusionPlan> plan;
        if (adjusting) {
            plan = bae::mark_low_magnitude(global, zeta, exclude);
            plan->lambda = cfg.lambda;
            plan->penalty = cfg.penalty;
            plan->eta0 = cfg.lr0;
            plan->start_step = r * E;
        }

        LocalSettings ls;
        ls.epochs = E;
        ls.batch_size = cfg.batch_size;
        ls.first_epoch = r * E;
        ls.lr0 = cfg.lr0;
        ls.lr_decay = cfg.lr_decay;
        if (tr.activation_pruning)
            ls.sap.target_sparsity = cfg.activation_sparsity;
        ls.value_bits = cfg.value_bits;
        ls.extrude = adjusting && tr.extrusion;
        ls.collect_topk = adjusting;
        ls.zeta = zeta;
        ls.exclude = exclude;
        ls.record_schedule = true;
        ls.backend = (cfg.parallel_clients && active.size() > 1) ? kernels::Backend::Serial
                                                                 : kernels::Backend::OpenMP;

        std::vector<LocalResult> results(active.size());
        std::vector<std::exception_ptr> errors(active.size());
        const auto n_active = static_cast<std::ptrdiff_t>(active.size());
#pragma omp parallel for schedule(dynamic) if (cfg.parallel_clients)
        for (std::ptrdiff_t j = 0; j < n_active; ++j) {
            const std::size_t k = active[static_cast<std::size_t>(j)];
            try {
                results[static_cast<std::size_t>(j)] =
                    local_train(global, train, shards[k], ls, plan ? &*plan : nullptr,
                                Rng::derive(seed, kStreamClient, r, k));
            } catch (...) {
                errors[static_cast<std::size_t>(j)] = std::current_exception();
            }
        }
        for (auto &e : errors)
            if (e)
                std::rethrow_exception(e);

        RoundMetrics m;
        m.round = r;
        m.adjusted = adjusting;

        std::vector<double> weights;
        double loss = 0.0, total = 0.0;
        for (std::size_t j = 0; j < active.size(); ++j) {
            const double size = static_cast<double>(shards[active[j]].size());
            weights.push_back(size);
            loss += size * results[j].loss_sum / static_cast<double>(std::max<std::size_t>(results[j].steps, 1));
            total += size;
            m.cache_bits = std::max(m.cache_bits, results[j].max_cache_bits);
        }
        m.train_loss = loss / total;

        for (const auto &rec : results.front().first_cache_records)
            result.cache_rows.push_back({r, rec});
        for (std::size_t j = 0; j < active.size(); ++j)
            for (const auto &st : results[j].schedule)
                result.extrusion_rows.push_back({r, active[j], st});

        // Simulated wire, per client: the download matches the upload's layout and masks.
        const Wire down = model_wire(global, cfg.value_bits);
        for (const auto &res : results) {
            Wire w = down;
            const Wire up = model_wire(res.model, cfg.value_bits);
            w.bits += up.bits;
            w.bytes += up.bytes;
            if (res.topk) {
                const Wire g = topk_wire(res.model, *res.topk, cfg.value_bits);
                w.bits += g.bits;
                w.bytes += g.bytes;
            }
            m.wire_bits = std::max(m.wire_bits, w.bits);
            m.wire_bytes = std::max(m.wire_bytes, w.bytes);
        }
        m.wire_bound_bits = wire_bound(cfg.variant, comm_sizes(global, cfg.value_bits, zeta, exclude), adjusting);

        std::vector<nn::SparseModel> models;
        models.reserve(results.size());
        for (auto &res : results)
            models.push_back(std::move(res.model));
        global = aggregate<float>(models, weights);

        if (adjusting) {
            AdjustmentRecord rec;
            rec.round = r;
            rec.zeta = zeta;
            rec.theta_low_norm = bae::marked_norm(global, *plan);
            m.theta_low_norm = rec.theta_low_norm;

            std::vector<TopKGradients> sets;
            for (auto &res : results)
                sets.push_back(std::move(*res.topk));
            const auto agg = aggregate_topk(sets, weights);

            rec.acc_before = evaluate(global, test);
            rec.layers = adjust_structure(global, agg, zeta, exclude);
            rec.acc_after = evaluate(global, test);
            m.post_adjust_drop = rec.acc_before - rec.acc_after;

            std::size_t dropped = 0, overlap = 0;
            for (const auto &la : rec.layers) {
                const auto &v = global.weights[la.layer].values();
                for (auto i : la.grown)
                    rec.nonzero_grown += v[i] != 0.0f ? 1 : 0;
                const auto &marked = plan->marked[la.layer];
                for (auto i : la.dropped) {
                    ++dropped;
                    overlap += std::binary_search(marked.begin(), marked.end(), i) ? 1 : 0;
                }
            }
            rec.marked_overlap = dropped ? static_cast<double>(overlap) / static_cast<double>(dropped) : 0.0;
            rec.sparsity_after = global.mask_sparsity();
            result.adjustments.push_back(std::move(rec));
        }

        m.mask_sparsity = global.mask_sparsity();
        m.eval_acc = adjusting ? result.adjustments.back().acc_after : evaluate(global, test);
        result.rounds.push_back(m);
    }
    result.final_model = std::move(global);
    return result;
}

} // namespace fedmef::fl
