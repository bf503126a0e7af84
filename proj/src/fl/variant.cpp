#include "fedmef/fl/variant.hpp"

#include <algorithm>
#include <cctype>

namespace fedmef::fl {

VariantTraits traits_of(Variant v) {
    switch (v) {
    case Variant::FedMef:
        return {true, true, true, true, InitialMask::Random};
    case Variant::FedMefNoBaE:
        return {true, true, false, true, InitialMask::Random};
    case Variant::FedMefNoSAP:
        return {false, false, true, true, InitialMask::Random};
    case Variant::StaticPrune:
        return {false, false, false, false, InitialMask::Magnitude};
    case Variant::FedAvgDense:
        return {false, false, false, false, InitialMask::Dense};
    }
    return {};
}

std::string_view variant_name(Variant v) {
    switch (v) {
    case Variant::FedMef:
        return "FedMef";
    case Variant::FedMefNoBaE:
        return "FedMefNoBaE";
    case Variant::FedMefNoSAP:
        return "FedMefNoSAP";
    case Variant::StaticPrune:
        return "StaticPrune";
    case Variant::FedAvgDense:
        return "FedAvgDense";
    }
    return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
    std::string key(name);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto v : all_variants()) {
        std::string canon(variant_name(v));
        std::transform(canon.begin(), canon.end(), canon.begin(), [](unsigned char c) { return std::tolower(c); });
        if (key == canon)
            return v;
    }
    if (key == "nobae" || key == "fedmef-nobae")
        return Variant::FedMefNoBaE;
    if (key == "nosap" || key == "fedmef-nosap")
        return Variant::FedMefNoSAP;
    if (key == "static")
        return Variant::StaticPrune;
    if (key == "dense" || key == "fedavg")
        return Variant::FedAvgDense;
    return std::nullopt;
}

std::vector<Variant> all_variants() {
    return {Variant::FedMef, Variant::FedMefNoBaE, Variant::FedMefNoSAP, Variant::StaticPrune, Variant::FedAvgDense};
}

} // namespace fedmef::fl
