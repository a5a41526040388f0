#include "acnet/analysis.hpp"

namespace acnet {

const std::vector<std::pair<int, int>>& location_cells(LocationSet set) {
    static const std::vector<std::pair<int, int>> corners{{0, 0}, {0, 2}, {2, 0}, {2, 2}};
    static const std::vector<std::pair<int, int>> skeleton{{0, 1}, {1, 0}, {1, 1}, {1, 2}, {2, 1}};
    static const std::vector<std::pair<int, int>> global_all{{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1},
                                                             {1, 2}, {2, 0}, {2, 1}, {2, 2}};
    static const std::vector<std::pair<int, int>> border{{2, 0}, {2, 1}, {2, 2}, {0, 2}, {1, 2}};
    static const std::vector<std::pair<int, int>> tl2x2{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    switch (set) {
        case LocationSet::corners: return corners;
        case LocationSet::skeleton: return skeleton;
        case LocationSet::global_all: return global_all;
        case LocationSet::border: return border;
        case LocationSet::top_left_2x2: return tl2x2;
    }
    return global_all;
}

const char* location_set_name(LocationSet set) {
    switch (set) {
        case LocationSet::corners: return "corner";
        case LocationSet::skeleton: return "skeleton";
        case LocationSet::global_all: return "global";
        case LocationSet::border: return "border";
        case LocationSet::top_left_2x2: return "tl2x2";
    }
    return "?";
}

LocationSet parse_location_set(const std::string& name) {
    if (name == "corner" || name == "corners") return LocationSet::corners;
    if (name == "skeleton") return LocationSet::skeleton;
    if (name == "global") return LocationSet::global_all;
    if (name == "border") return LocationSet::border;
    if (name == "tl2x2" || name == "top-left-2x2") return LocationSet::top_left_2x2;
    fail_invalid("unknown location set '" + name + "'");
}

}  // namespace acnet
