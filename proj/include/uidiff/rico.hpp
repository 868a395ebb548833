#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"
#include "uidiff/rng.hpp"

namespace uidiff {

inline constexpr const char* kDefaultPrompt = "A nice screenshot of a mobile app";

/// One screen in the Rico directory convention.
struct RicoRecord {
    std::string id;
    std::filesystem::path screenshot;  // combined/<id>.jpg
    std::filesystem::path wireframe;   // semantic/<id>.png
    std::filesystem::path hierarchy;   // hierarchies/<id>.json

    /// Parsed hierarchy JSON. Throws MalformedHierarchy or IOFailure.
    nlohmann::json load_hierarchy() const;
};

/// Records under root whose screenshot, wireframe and hierarchy all exist, sorted by id.
std::vector<RicoRecord> scan_rico_dir(const std::filesystem::path& root);

struct HierarchyLayout {
    Layout layout;
    int skipped_unknown = 0;  // labeled nodes whose label is not one of the 25 categories
    int degenerate = 0;       // zero-area after clipping
    int trimmed = 0;          // dropped beyond e_max
};

/// Leaves carrying a recognized componentLabel become elements, in depth-first
/// order, normalized by the root bounds and clipped to [0,1]. Beyond e_max the
/// largest elements are kept. Accepts a bare node or {"activity": {"root": node}}.
HierarchyLayout parse_hierarchy(const nlohmann::json& hierarchy, int e_max = kDefaultMaxElements);
HierarchyLayout parse_hierarchy(const RicoRecord& rec, int e_max = kDefaultMaxElements);

enum class ScreenPosition { Top, Center, Bottom };

struct CaptionTemplateSet {
    /// Screen kind ("list screen") -> sentence templates containing "{kind}".
    std::map<std::string, std::vector<std::string>> screen;
    /// Per category and coarse position: templates containing "{name}" and "{area}".
    std::array<std::array<std::vector<std::string>, 3>, kNumCategories> component;

    static const CaptionTemplateSet& standard();
};

/// Screen kind by the heuristic: >= 3 list items -> list screen; input and
/// text button -> login screen; otherwise driven by the largest element.
std::string detect_screen_kind(const Layout& layout);

/// Screen sentence then up to three component sentences for the largest
/// distinct categories. Empty layout -> kDefaultPrompt.
std::string generate_caption(const Layout& layout, const CaptionTemplateSet& templates, std::uint64_t seed);

/// Consumes exactly one uniform draw; returns kDefaultPrompt when it falls below p.
std::string apply_prompt_dropout(const std::string& caption, double p, Rng& rng);

struct TrainingRecord {
    Image image;         // 288x512
    Image conditioning;  // 288x512 wireframe
    std::string caption;
    std::string source_id;
    Layout layout;
};

struct PreprocessResult {
    std::optional<TrainingRecord> record;
    std::string rejected;  // reason when record is empty
    int skipped_unknown = 0;
};

/// Rejects landscape pairs; resizes portrait pairs to 288x512 (bilinear for
/// the screenshot, nearest for the wireframe). Throws CorruptImage,
/// DimensionMismatch, MalformedHierarchy.
PreprocessResult preprocess_record(const RicoRecord& rec, int e_max = kDefaultMaxElements);

struct BuildConfig {
    std::filesystem::path out_dir;
    int e_max = kDefaultMaxElements;
    /// Replace the shipped wireframe with one rendered from the parsed hierarchy.
    bool rerender_wireframes = true;
    std::uint64_t caption_seed = 0;
};

struct DatasetStats {
    int kept = 0;
    int rejected = 0;
    std::map<std::string, int> rejected_by_reason;
    int skipped_unknown_labels = 0;
    int total_elements = 0;
    std::array<int, kNumCategories> category_histogram{};
    nlohmann::json to_json() const;
};

/// Writes out_dir/manifest.jsonl ({image, conditioning, caption, source_id,
/// layout} per line), out_dir/images/*.png and out_dir/stats.json.
DatasetStats build_training_set(const std::vector<RicoRecord>& records, const BuildConfig& cfg);

struct ManifestEntry {
    std::filesystem::path image;
    std::filesystem::path conditioning;
    std::string caption;
    std::string source_id;
    std::optional<Layout> layout;
};

/// Paths are resolved against the manifest's directory. Throws IOFailure.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

}  // namespace uidiff
