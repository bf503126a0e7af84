#include "fedmef/check/self_check.hpp"

#include "fedmef/bae/extrusion.hpp"
#include "fedmef/check/oracles.hpp"
#include "fedmef/nn/loss.hpp"
#include "fedmef/nn/network.hpp"
#include "fedmef/nn/nsconv.hpp"
#include "fedmef/nn/theorem1.hpp"
#include "fedmef/rng.hpp"
#include "fedmef/sap/activation_cache.hpp"
#include "fedmef/sparse/codec.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace fedmef::check {

namespace {

template <typename F> CheckResult timed(std::string name, F &&body) {
    CheckResult r;
    r.name = std::move(name);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception &e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

nn::Tensor4D<double> random_input(nn::Dims4 d, Rng &rng) {
    nn::Tensor4D<double> x(d);
    for (auto &v : x.data)
        v = rng.normal();
    return x;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng &rng) {
    std::vector<int> y(n);
    for (auto &v : y)
        v = static_cast<int>(rng.uniform_index(classes));
    return y;
}

} // namespace

nn::SparseModel64 gradient_check_model(std::uint64_t seed) {
    using nn::LayerSpec;
    std::vector<LayerSpec> layers = {LayerSpec::conv(2, 3, 3, 1, 1, true, 0.5), LayerSpec::relu(),
                                     LayerSpec::avg_pool(2),
                                     LayerSpec::conv(3, 4, 3, 1, 1, true, 0.5), LayerSpec::relu(),
                                     LayerSpec::flatten(),
                                     LayerSpec::linear(4 * 4 * 4, 3)};
    auto model = nn::init_model<double>({2, 8, 8}, layers, seed);
    nn::random_prune_model(model, 0.5, seed + 1);
    Rng rng(seed + 2);
    for (auto &b : model.biases)
        for (auto &v : b)
            v = 0.1 * rng.normal();
    return model;
}

CheckResult check_gradients(std::uint64_t seed) {
    return timed("gradient vs finite difference", [&](CheckResult &r) {
        const auto model = gradient_check_model(seed);
        Rng rng(seed + 3);
        const auto x = random_input({2, 2, 8, 8}, rng);
        const auto y = random_labels(2, 3, rng);

        nn::ForwardOptions fo;
        fo.backend = kernels::Backend::Serial;
        const auto fwd = nn::forward(model, x, fo);
        const auto lg = nn::loss_and_grad(fwd.output, y);
        nn::BackwardOptions bo;
        bo.backend = kernels::Backend::Serial;
        const auto analytic = nn::backward(model, fwd.trace, lg.grad, bo);
        const auto numeric = finite_difference_gradients(model, x, y, 1e-6);

        double worst = 0.0;
        std::size_t count = 0;
        auto compare = [&](double a, double n) {
            worst = std::max(worst, std::abs(a - n) / (std::abs(a) + 1e-8));
            ++count;
        };
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
            const auto &mask = model.weights[l].mask();
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i])
                    compare(analytic.weights[l][i], numeric.weights[l][i]);
            for (std::size_t i = 0; i < model.biases[l].size(); ++i)
                compare(analytic.biases[l][i], numeric.biases[l][i]);
        }
        r.pass = worst < 1e-4;
        std::ostringstream os;
        os << count << " parameters, max relative error " << worst;
        r.detail = os.str();
    });
}

CheckResult check_nsconv(std::size_t mc_trials, std::uint64_t seed) {
    return timed("NSConv statistics", [&](CheckResult &r) {
        Rng rng(seed);
        std::ostringstream os;
        bool ok = true;

        // (a) constant input, no padding: every output is gamma sqrt(c_in) c * sum(standardized) = 0.
        double worst_const = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t cin = 1 + rng.uniform_index(6), cout = 1 + rng.uniform_index(5);
            nn::SparseModel64 m;
            m.input = {cin, 6, 6};
            m.layers = {nn::LayerSpec::conv(cin, cout, 3, 1, 0, true, 0.5 + rng.uniform())};
            m.weighted = {0};
            m.biases = {{}};
            std::vector<double> w(cout * cin * 9);
            for (auto &v : w)
                v = rng.normal(0.3, 1.0);
            auto mask = sparse::random_prune({cout, cin, 3, 3}, 0.5, rng.next_u64());
            m.weights = {sparse::MaskedTensor64::masked(std::move(w), std::move(mask))};
            nn::Tensor4D<double> x({2, cin, 6, 6}, 0.25 + 3.0 * rng.uniform());
            const auto y = nn::predict(m, x, kernels::Backend::Serial);
            for (double v : y.data)
                worst_const = std::max(worst_const, std::abs(v));
        }
        ok = ok && worst_const <= 1e-10;
        os << "const-input max |out| " << worst_const;

        // (b) moments of the standardized unpruned weights.
        double worst_mean = 0.0, worst_var = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t cin = 1 + rng.uniform_index(16);
            const double gamma = 0.1 + 2.0 * rng.uniform();
            const std::size_t len = cin * 9;
            std::vector<double> w(len);
            for (auto &v : w)
                v = rng.normal(rng.normal(), 0.5 + rng.uniform());
            sparse::Mask mask;
            do {
                mask = sparse::random_prune({len}, rng.uniform() * 0.8, rng.next_u64());
            } while (mask.count_kept() < 2);
            const auto f = sparse::MaskedTensor64::masked(std::move(w), mask);
            const auto s = nn::nsconv_standardize(f, cin, gamma);
            double sum = 0.0, sq = 0.0;
            const auto kept = mask.kept_indices();
            for (auto i : kept)
                sum += s[i];
            const double mean = sum / static_cast<double>(kept.size());
            for (auto i : kept)
                sq += (s[i] - mean) * (s[i] - mean);
            const double var = sq / static_cast<double>(kept.size());
            worst_mean = std::max(worst_mean, std::abs(mean));
            worst_var = std::max(worst_var, std::abs(var - gamma * gamma * static_cast<double>(cin)));
        }
        ok = ok && worst_mean <= 1e-10 && worst_var <= 1e-6;
        os << "; standardized |mean| " << worst_mean << ", |var - g^2 c_in| " << worst_var;

        // (c) Monte-Carlo channel means.
        nn::Theorem1Config tc;
        tc.nsconv = true;
        Rng mc(seed + 11);
        const auto ns = nn::theorem1_check(tc, mc_trials, mc);
        const bool ns_ok = std::abs(ns.measured_mean) <= 3.0 * ns.mean_stderr;
        tc.nsconv = false;
        tc.filter_mean = 0.5;
        const auto plain = nn::theorem1_check(tc, mc_trials, mc);
        const bool plain_ok = plain.measured_mean > 3.0 * plain.mean_stderr;
        ok = ok && ns_ok && plain_ok;
        os << "; NSConv mean " << ns.measured_mean << " (se " << ns.mean_stderr << ")"
           << ", plain mean " << plain.measured_mean << " (se " << plain.mean_stderr << ", predicted "
           << plain.predicted_plain_mean << ")"
           << "; NSConv variance " << ns.measured_variance << " vs closed form " << ns.closed_form_variance
           << " (ratio " << ns.variance_ratio << ") and convention prediction " << ns.convention_variance;
        r.pass = ok;
        r.detail = os.str();
    });
}

CheckResult check_sap(std::size_t topk_tensors, std::uint64_t seed) {
    return timed("activation pruning oracles", [&](CheckResult &r) {
        std::ostringstream os;
        const auto model = gradient_check_model(seed);
        Rng rng(seed + 5);
        const auto x = random_input({3, 2, 8, 8}, rng);
        const auto y = random_labels(3, 3, rng);

        double worst = 0.0;
        for (double s : {0.5, 0.9}) {
            nn::ForwardOptions fo;
            fo.backend = kernels::Backend::Serial;
            fo.sap.target_sparsity = s;
            const auto fwd = nn::forward(model, x, fo);
            const auto lg = nn::loss_and_grad(fwd.output, y);
            nn::BackwardOptions bo;
            bo.backend = kernels::Backend::Serial;
            const auto got = nn::backward(model, fwd.trace, lg.grad, bo);
            const auto ref = zeroed_cache_reference(model, x, y, s);
            for (std::size_t l = 0; l < got.weights.size(); ++l) {
                for (std::size_t i = 0; i < got.weights[l].size(); ++i)
                    worst = std::max(worst, std::abs(got.weights[l][i] - ref.weights[l][i]));
                for (std::size_t i = 0; i < got.biases[l].size(); ++i)
                    worst = std::max(worst, std::abs(got.biases[l][i] - ref.biases[l][i]));
            }
        }
        bool ok = worst <= 1e-12;
        os << "max |SAP grad - reference| " << worst;

        std::size_t mismatches = 0;
        for (std::size_t t = 0; t < topk_tensors; ++t) {
            const nn::Dims4 d{1 + rng.uniform_index(3), 1 + rng.uniform_index(4), 1 + rng.uniform_index(6),
                              1 + rng.uniform_index(6)};
            nn::Tensor4D<double> a(d);
            const bool ties = t % 3 == 0;
            for (auto &v : a.data)
                v = ties ? static_cast<double>(static_cast<int>(rng.uniform_index(5)) - 2) : rng.normal();
            const double s = rng.uniform() * 0.99;
            const auto cache = sap::prune_activation(a, s);
            const auto ref = full_sort_topk(a.data, sap::kept_count(a.size(), s));
            if (cache.indices != ref)
                ++mismatches;
        }
        ok = ok && mismatches == 0;
        os << "; top-k mismatches " << mismatches << "/" << topk_tensors;
        r.pass = ok;
        r.detail = os.str();
    });
}

namespace {

std::uint64_t clog2(std::uint64_t x) {
    std::uint64_t b = 0;
    while ((std::uint64_t{1} << b) < x)
        ++b;
    return x <= 1 ? 0 : b;
}

/// Closed forms written out independently of the codec.
std::uint64_t closed_form(sparse::Scheme s, std::uint64_t n, std::uint64_t nnz, std::uint64_t b, std::uint64_t rows,
                          std::uint64_t cols) {
    switch (s) {
    case sparse::Scheme::Dense:
        return n * b;
    case sparse::Scheme::Bitmap:
        return n + nnz * b;
    case sparse::Scheme::COO:
        return nnz * clog2(n) + nnz * b;
    case sparse::Scheme::CSR:
        return nnz * clog2(cols) + rows * clog2(nnz) + nnz * b;
    case sparse::Scheme::CSC:
        return nnz * clog2(rows) + cols * clog2(nnz) + nnz * b;
    }
    return 0;
}

sparse::MaskedTensor random_tensor(const sparse::Shape &shape, std::size_t nnz, Rng &rng) {
    const std::size_t n = sparse::element_count(shape);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    rng.shuffle(idx);
    sparse::Mask mask(shape, false);
    std::vector<float> values(n, 0.0f);
    for (std::size_t j = 0; j < nnz; ++j) {
        mask.set(idx[j], true);
        // Kept entries may legitimately be zero; include some.
        values[idx[j]] = rng.uniform() < 0.05 ? 0.0f : static_cast<float>(rng.normal(0.0, 10.0));
    }
    return sparse::MaskedTensor(std::move(values), std::move(mask));
}

} // namespace

CheckResult check_codec(std::size_t trials, std::uint64_t seed) {
    return timed("codec round trips", [&](CheckResult &r) {
        Rng rng(seed);
        std::size_t bad_roundtrip = 0, bad_bits = 0, bad_scheme = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            const std::size_t rank = 1 + rng.uniform_index(4);
            sparse::Shape shape(rank);
            for (auto &d : shape)
                d = 1 + rng.uniform_index(rank == 1 ? 300 : 12);
            const std::size_t n = sparse::element_count(shape);
            const std::size_t nnz = t % 7 == 0 ? 0 : rng.uniform_index(n + 1);
            const auto tensor = random_tensor(shape, nnz, rng);
            const unsigned b = t % 5 == 0 ? 64 : 32;
            const auto enc = sparse::encode(tensor, b);
            std::size_t off = 0;
            const auto bytes = sparse::serialize(enc);
            const auto back = sparse::decode(sparse::deserialize(bytes, off));
            if (!(back == tensor) || off != bytes.size())
                ++bad_roundtrip;
            const auto view = sparse::as_matrix(shape);
            const double d = static_cast<double>(nnz) / static_cast<double>(n);
            const auto expect_scheme = d >= 0.9 ? sparse::Scheme::Dense
                                       : d >= 0.3 ? sparse::Scheme::Bitmap
                                       : d >= 0.1 ? sparse::Scheme::COO
                                       : (nnz * clog2(view.rows) + view.cols * clog2(nnz) <
                                          nnz * clog2(view.cols) + view.rows * clog2(nnz))
                                           ? sparse::Scheme::CSC
                                           : sparse::Scheme::CSR;
            if (enc.scheme != expect_scheme)
                ++bad_scheme;
            if (enc.total_bits != closed_form(enc.scheme, n, nnz, b, view.rows, view.cols))
                ++bad_bits;
        }

        // Band boundaries on n = 100 (10 x 10), plus each scheme forced on the same tensor.
        std::size_t bad_boundary = 0;
        const std::pair<std::size_t, sparse::Scheme> edges[] = {
            {90, sparse::Scheme::Dense}, {89, sparse::Scheme::Bitmap}, {30, sparse::Scheme::Bitmap},
            {29, sparse::Scheme::COO},   {10, sparse::Scheme::COO},    {9, sparse::Scheme::CSR}};
        for (const auto &[nnz, scheme] : edges) {
            const auto tensor = random_tensor({10, 10}, nnz, rng);
            const auto enc = sparse::encode(tensor, 32);
            if (enc.scheme != scheme || enc.total_bits != closed_form(scheme, 100, nnz, 32, 10, 10))
                ++bad_boundary;
            for (auto forced : {sparse::Scheme::Dense, sparse::Scheme::Bitmap, sparse::Scheme::COO,
                                sparse::Scheme::CSR, sparse::Scheme::CSC}) {
                const auto e = sparse::encode(tensor, 32, forced);
                if (e.total_bits != closed_form(forced, 100, nnz, 32, 10, 10) || !(sparse::decode(e) == tensor))
                    ++bad_boundary;
            }
        }
        r.pass = bad_roundtrip == 0 && bad_bits == 0 && bad_scheme == 0 && bad_boundary == 0;
        std::ostringstream os;
        os << trials << " trials: " << bad_roundtrip << " round-trip failures, " << bad_bits << " bit-count mismatches, "
           << bad_scheme << " scheme mismatches; boundary failures " << bad_boundary;
        r.detail = os.str();
    });
}

CheckResult check_schedule() {
    return timed("schedule endpoints", [&](CheckResult &r) {
        std::ostringstream os;
        bool ok = true;
        const double r_stop = 40, e = 2;
        ok = ok && bae::adjustment_rate(0, r_stop, e) == 0.4;
        ok = ok && bae::adjustment_rate(r_stop * e, r_stop, e) == 0.0;
        ok = ok && bae::adjustment_rate(r_stop * e + 1, r_stop, e) == 0.0;
        ok = ok && std::abs(bae::adjustment_rate(r_stop * e / 2, r_stop, e) - 0.2) < 1e-15;
        os << "zeta(0)=" << bae::adjustment_rate(0, r_stop, e)
           << " zeta(end)=" << bae::adjustment_rate(r_stop * e, r_stop, e);

        std::size_t grid_fail = 0;
        for (double budget : {1.0, 7.0, 64.0}) {
            ok = ok && bae::budget_lr(budget, budget, 2.0, 1.0) == 0.0;
            for (double t = 0; t <= budget; t += 1.0) {
                if (bae::budget_lr(t, budget, 0.0, 1.0) != 0.0)
                    ++grid_fail;
                for (double norm : {0.0, 0.5, 2.0, 10.0})
                    for (double eta : {0.0, 0.01, 0.3, 0.9}) {
                        const double beta = bae::budget_lr(t, budget, norm, 1.0);
                        if (bae::effective_lr(eta, beta) != std::max(eta, beta) ||
                            bae::effective_lr(eta, beta, false) != eta)
                            ++grid_fail;
                    }
            }
        }
        ok = ok && grid_fail == 0;
        const double beta0 = bae::budget_lr(0, 10, 2.0, 1.0);
        ok = ok && std::abs(beta0 - std::tanh(1.0)) < 1e-15;
        os << "; beta(0, |theta_low|=2)=" << beta0 << "; grid failures " << grid_fail;
        r.pass = ok;
        r.detail = os.str();
    });
}

std::vector<CheckResult> run_self_check(bool quick) {
    std::vector<CheckResult> out;
    out.push_back(check_gradients(17));
    out.push_back(check_nsconv(quick ? 2000 : 10000, 23));
    out.push_back(check_sap(quick ? 200 : 1000, 29));
    out.push_back(check_codec(quick ? 1000 : 10000, 31));
    out.push_back(check_schedule());
    return out;
}

} // namespace fedmef::check
