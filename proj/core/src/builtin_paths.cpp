#include "ftl/task_env.hpp"

#include "builtin_paths_data.hpp"  // generated from core/data/paths at configure time

namespace ftl {

const std::vector<WirePath>& builtin_paths() {
    static const std::vector<WirePath> paths = [] {
        std::vector<WirePath> out;
        for (const char* text : {detail::kWire1Text, detail::kWire2Text, detail::kWire3Text}) {
            out.push_back(parse_path(text));
        }
        return out;
    }();
    return paths;
}

const WirePath& builtin_path(int id) {
    const auto& paths = builtin_paths();
    if (id < 1 || id > static_cast<int>(paths.size())) {
        throw Error("no built-in path with id " + std::to_string(id));
    }
    return paths[static_cast<std::size_t>(id - 1)];
}

}  // namespace ftl
