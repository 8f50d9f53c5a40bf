#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace camtrap {

/// The fifteen groupings of the Hong Kong camera-trap dataset and their image counts.
inline constexpr std::array<std::string_view, 15> kHongKongGroupings{
    "Birds",
    "Canis Lupis familaris",
    "Lutra lutra",
    "Felis catus",
    "Herpestes javanicus",
    "Hystrix brachyura",
    "Macaca mulatta",
    "Melogale spp.",
    "Muntiacus spp.",
    "Other animal",
    "Paguma larvata",
    "Prionailurus bengaliensis",
    "Rodent",
    "Sus scrofa",
    "Viverricula indica",
};

inline constexpr std::array<std::size_t, 15> kHongKongCounts{
    185, 396, 1445, 80, 71, 3911, 1274, 74, 2733, 9, 165, 1614, 185, 2192, 2084,
};

}  // namespace camtrap
