// Prints every shipped layout as map text.
#include <cstdio>

#include "sflab/envs/layout.hpp"

int main() {
    for (const auto& name : sflab::envs::shipped_layout_names()) {
        const auto g = sflab::envs::make_layout(name, 5);
        std::printf("%s\n%s\n", name.c_str(), sflab::envs::to_map_text(g).c_str());
    }
}
