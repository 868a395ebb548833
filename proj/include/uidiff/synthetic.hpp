#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"
#include "uidiff/rng.hpp"

namespace uidiff {

/// Screen families produced by the procedural app generator.
enum class Archetype { Login, List, Gallery, Media, Map, Profile, Tutorial, Settings };
inline constexpr int kNumArchetypes = 8;
std::string_view archetype_name(Archetype a);

/// Random layout of the given family. Coordinates sit on a 1/64 grid and the
/// result always passes validate_layout.
Layout synthetic_layout(Archetype kind, Rng& rng);
Layout synthetic_layout(Rng& rng);

struct Theme {
    Rgb background, surface, primary, accent, ink;
};
Theme random_theme(Rng& rng);

/// Paints a plausible screenshot for `layout` at any portrait resolution.
Image render_screenshot(const Layout& layout, const Theme& theme, int width, int height);

/// Rico-style semantic hierarchy: an unlabeled root with `root_bounds`, the
/// layout's elements as labeled leaves grouped under unlabeled containers.
/// `extra_unknown` adds that many leaves with an unrecognized label.
nlohmann::json synthetic_hierarchy(const Layout& layout, int root_w, int root_h, int extra_unknown, Rng& rng);

struct SyntheticDatasetConfig {
    int portrait = 200;
    int landscape = 0;
    int width = 540;  // portrait screenshot size; landscape swaps the two
    int height = 960;
    std::uint64_t seed = 0;
};

/// Writes <root>/combined/<id>.jpg, <root>/semantic/<id>.png and
/// <root>/hierarchies/<id>.json. Returns the ids in write order.
std::vector<std::string> write_synthetic_rico(const std::filesystem::path& root, const SyntheticDatasetConfig& cfg);

}  // namespace uidiff
