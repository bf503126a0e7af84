#pragma once

#include "fedmef/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace fedmef::fl {

/// Label-skewed split: for every class, client proportions ~ Dirichlet(alpha * 1_K). The whole
/// draw is repeated (up to 100 times) until every client holds at least `min_size` samples;
/// after that, samples move round-robin from the largest shards. Shards list sample indices
/// in ascending order. Throws InvalidArgument when K * min_size exceeds the sample count or
/// alpha <= 0.
std::vector<std::vector<std::size_t>> partition_dirichlet(std::span<const int> labels, std::size_t classes,
                                                          std::size_t clients, double alpha, std::size_t min_size,
                                                          Rng &rng);

} // namespace fedmef::fl
