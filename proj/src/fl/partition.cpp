#include "fedmef/fl/partition.hpp"

#include "fedmef/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fedmef::fl {

namespace {

constexpr int kMaxRedraws = 100;

std::vector<std::vector<std::size_t>> draw(const std::vector<std::vector<std::size_t>> &by_class,
                                           std::size_t clients, double alpha, Rng &rng) {
    std::vector<std::vector<std::size_t>> shards(clients);
    for (const auto &members : by_class) {
        auto idx = members;
        rng.shuffle(idx);
        const auto p = rng.dirichlet(clients, alpha);
        double cum = 0.0;
        std::size_t begin = 0;
        for (std::size_t k = 0; k < clients; ++k) {
            cum += p[k];
            std::size_t end = k + 1 == clients
                                  ? idx.size()
                                  : std::min(idx.size(), static_cast<std::size_t>(
                                                             std::llround(cum * static_cast<double>(idx.size()))));
            end = std::max(end, begin);
            shards[k].insert(shards[k].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                             idx.begin() + static_cast<std::ptrdiff_t>(end));
            begin = end;
        }
    }
    return shards;
}

} // namespace

std::vector<std::vector<std::size_t>> partition_dirichlet(std::span<const int> labels, std::size_t classes,
                                                          std::size_t clients, double alpha, std::size_t min_size,
                                                          Rng &rng) {
    if (clients == 0)
        throw InvalidArgument("partition_dirichlet: need at least one client");
    if (!(alpha > 0.0))
        throw InvalidArgument("partition_dirichlet: alpha must be positive");
    min_size = std::max<std::size_t>(min_size, 1);
    if (clients * min_size > labels.size())
        throw InvalidArgument("partition_dirichlet: not enough samples for every client");

    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw InvalidArgument("partition_dirichlet: label out of range");
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }

    auto small = [&](const std::vector<std::vector<std::size_t>> &s) {
        return std::any_of(s.begin(), s.end(), [&](const auto &v) { return v.size() < min_size; });
    };

    std::vector<std::vector<std::size_t>> shards;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        shards = draw(by_class, clients, alpha, rng);
        if (!small(shards))
            break;
    }
    while (small(shards)) {
        for (std::size_t k = 0; k < clients; ++k) {
            if (shards[k].size() >= min_size)
                continue;
            auto donor = std::max_element(shards.begin(), shards.end(),
                                          [](const auto &a, const auto &b) { return a.size() < b.size(); });
            shards[k].push_back(donor->back());
            donor->pop_back();
        }
    }
    for (auto &s : shards)
        std::sort(s.begin(), s.end());
    return shards;
}

} // namespace fedmef::fl
