#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedmef::fl {

enum class Variant { FedMef, FedMefNoBaE, FedMefNoSAP, StaticPrune, FedAvgDense };

enum class InitialMask { Random, Magnitude, Dense };

/// What each variant switches on.
struct VariantTraits {
    bool nsconv = false;
    bool activation_pruning = false;
    bool extrusion = false;
    bool adjusts_structure = false;
    InitialMask initial_mask = InitialMask::Dense;
};

VariantTraits traits_of(Variant v);

std::string_view variant_name(Variant v);

/// Case-insensitive; also accepts "noBaE", "noSAP", "static" and "dense".
std::optional<Variant> parse_variant(std::string_view name);

std::vector<Variant> all_variants();

} // namespace fedmef::fl
