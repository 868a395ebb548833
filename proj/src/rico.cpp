#include "uidiff/rico.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"
#include "uidiff/wireframe.hpp"

namespace uidiff {

using nlohmann::json;
namespace fs = std::filesystem;

json RicoRecord::load_hierarchy() const {
    std::ifstream f(hierarchy);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot open " + hierarchy.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedHierarchy, fmt::format("{}: {}", hierarchy.string(), e.what()));
    }
}

std::vector<RicoRecord> scan_rico_dir(const fs::path& root) {
    std::vector<RicoRecord> out;
    const fs::path combined = root / "combined";
    if (!fs::is_directory(combined)) throw Error(ErrorCode::IOFailure, "no combined/ directory under " + root.string());
    for (const auto& entry : fs::directory_iterator(combined)) {
        if (entry.path().extension() != ".jpg") continue;
        RicoRecord r;
        r.id = entry.path().stem().string();
        r.screenshot = entry.path();
        r.wireframe = root / "semantic" / (r.id + ".png");
        r.hierarchy = root / "hierarchies" / (r.id + ".json");
        if (fs::exists(r.wireframe) && fs::exists(r.hierarchy)) out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const RicoRecord& a, const RicoRecord& b) { return a.id < b.id; });
    return out;
}

// ---- hierarchy ----

namespace {

constexpr int kMaxDepth = 512;

struct RawBox {
    double l, t, r, b;
};

RawBox read_bounds(const json& node) {
    const auto it = node.find("bounds");
    if (it == node.end() || !it->is_array() || it->size() != 4)
        throw Error(ErrorCode::MalformedHierarchy, "node without a 4-element bounds array");
    for (const auto& v : *it)
        if (!v.is_number()) throw Error(ErrorCode::MalformedHierarchy, "non-numeric bounds");
    return {(*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>(), (*it)[3].get<double>()};
}

struct Walker {
    RawBox root;
    struct Found {
        ComponentCategory category;
        RawBox box;
    };
    std::vector<Found> found;
    int skipped_unknown = 0;

    // Returns true when the subtree contains a recognized label.
    bool visit(const json& node, int depth) {
        if (depth > kMaxDepth) throw Error(ErrorCode::MalformedHierarchy, "hierarchy deeper than 512 levels");
        if (!node.is_object()) throw Error(ErrorCode::MalformedHierarchy, "hierarchy node is not an object");
        const RawBox box = read_bounds(node);
        std::optional<ComponentCategory> cat;
        if (auto lab = node.find("componentLabel"); lab != node.end() && lab->is_string()) {
            cat = ComponentCategory::from_name(lab->get<std::string>());
            if (!cat) ++skipped_unknown;
        }
        const size_t slot = found.size();
        if (cat) found.push_back({*cat, box});  // reserve DFS position; removed below if not a leaf
        bool labeled_below = false;
        if (auto ch = node.find("children"); ch != node.end() && !ch->is_null()) {
            if (!ch->is_array()) throw Error(ErrorCode::MalformedHierarchy, "children is not an array");
            for (const auto& c : *ch) {
                if (c.is_null()) continue;
                labeled_below = visit(c, depth + 1) || labeled_below;
            }
        }
        if (cat && labeled_below) found.erase(found.begin() + static_cast<std::ptrdiff_t>(slot));
        return labeled_below || cat.has_value();
    }
};

const json& hierarchy_root(const json& h) {
    if (h.is_object() && h.contains("activity") && h["activity"].is_object() && h["activity"].contains("root"))
        return h["activity"]["root"];
    return h;
}

}  // namespace

HierarchyLayout parse_hierarchy(const json& hierarchy, int e_max) {
    const json& root = hierarchy_root(hierarchy);
    if (!root.is_object()) throw Error(ErrorCode::MalformedHierarchy, "hierarchy root is not an object");
    Walker w;
    w.root = read_bounds(root);
    const double W = w.root.r - w.root.l, H = w.root.b - w.root.t;
    if (!(W > 0) || !(H > 0)) throw Error(ErrorCode::MalformedHierarchy, "root bounds have no area");
    w.visit(root, 0);

    HierarchyLayout out;
    out.skipped_unknown = w.skipped_unknown;
    std::vector<LayoutElement> els;
    for (const auto& f : w.found) {
        const double x0 = std::clamp((f.box.l - w.root.l) / W, 0.0, 1.0);
        const double y0 = std::clamp((f.box.t - w.root.t) / H, 0.0, 1.0);
        const double x1 = std::clamp((f.box.r - w.root.l) / W, 0.0, 1.0);
        const double y1 = std::clamp((f.box.b - w.root.t) / H, 0.0, 1.0);
        if (!(x1 > x0) || !(y1 > y0)) {
            ++out.degenerate;
            continue;
        }
        els.push_back({f.category, {x0, y0, std::min(x1 - x0, 1.0 - x0), std::min(y1 - y0, 1.0 - y0)}, 0});
    }
    if (static_cast<int>(els.size()) > e_max) {
        std::vector<size_t> idx(els.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return els[a].bbox.area() > els[b].bbox.area(); });
        idx.resize(static_cast<size_t>(e_max));
        std::sort(idx.begin(), idx.end());
        std::vector<LayoutElement> kept;
        for (size_t i : idx) kept.push_back(els[i]);
        out.trimmed = static_cast<int>(els.size()) - e_max;
        els = std::move(kept);
    }
    for (const auto& e : els) out.layout.add(e.category, e.bbox);
    return out;
}

HierarchyLayout parse_hierarchy(const RicoRecord& rec, int e_max) { return parse_hierarchy(rec.load_hierarchy(), e_max); }

// ---- captions ----

const CaptionTemplateSet& CaptionTemplateSet::standard() {
    static const CaptionTemplateSet set = [] {
        CaptionTemplateSet s;
        for (const char* kind : {"list screen", "login screen", "media player screen", "map screen", "gallery screen",
                                 "profile screen", "tutorial screen", "settings screen", "web page screen", "form screen",
                                 "menu screen", "dialog screen", "home screen"})
            s.screen[kind] = {"That screen maybe is a {kind}."};
        static const char* areas[] = {"top", "center", "bottom"};
        for (int c = 0; c < kNumCategories; ++c)
            for (int a = 0; a < 3; ++a)
                s.component[static_cast<size_t>(c)][static_cast<size_t>(a)] = {
                    fmt::format("There is a {{name}} at the {} area.", areas[a]),
                    fmt::format("It has a {{name}} in the {} area.", areas[a]),
                    fmt::format("A {{name}} is shown at the {}.", areas[a]),
                };
        return s;
    }();
    return set;
}

std::string detect_screen_kind(const Layout& layout) {
    std::array<int, kNumCategories> n{};
    for (const auto& e : layout.elements) ++n[static_cast<size_t>(e.category.id)];
    if (n[category::list_item.id] >= 3) return "list screen";
    if (n[category::input.id] > 0 && n[category::text_button.id] > 0) return "login screen";
    const LayoutElement* largest = nullptr;
    for (const auto& e : layout.elements)
        if (!largest || e.bbox.area() > largest->bbox.area()) largest = &e;
    if (!largest) return "home screen";
    switch (largest->category.id) {
        case category::video.id: return "media player screen";
        case category::map_view.id: return "map screen";
        case category::image.id: return n[category::image.id] >= 3 ? "gallery screen" : "profile screen";
        case category::background_image.id: return "tutorial screen";
        case category::web_view.id: return "web page screen";
        case category::input.id: return "form screen";
        case category::drawer.id: return "menu screen";
        case category::modal.id: return "dialog screen";
        case category::list_item.id: return "list screen";
        case category::on_off_switch.id:
        case category::checkbox.id: return "settings screen";
        default: break;
    }
    if (n[category::on_off_switch.id] + n[category::checkbox.id] >= 2) return "settings screen";
    return "home screen";
}

namespace {

std::string substitute(std::string tpl, const std::string& key, const std::string& value) {
    for (size_t pos; (pos = tpl.find(key)) != std::string::npos;) tpl.replace(pos, key.size(), value);
    return tpl;
}

}  // namespace

std::string generate_caption(const Layout& layout, const CaptionTemplateSet& templates, std::uint64_t seed) {
    if (layout.elements.empty()) return kDefaultPrompt;
    Rng rng(seed);
    const std::string kind = detect_screen_kind(layout);
    auto pick = [&](const std::vector<std::string>& opts) -> const std::string& { return opts[rng.uniform_int(opts.size())]; };

    std::string out;
    if (auto it = templates.screen.find(kind); it != templates.screen.end() && !it->second.empty())
        out = substitute(pick(it->second), "{kind}", kind);
    else
        out = "That screen maybe is a " + kind + ".";

    // Largest element of each distinct category, biggest first.
    std::vector<const LayoutElement*> reps;
    for (const auto& e : layout.elements) {
        auto it = std::find_if(reps.begin(), reps.end(), [&](const LayoutElement* r) { return r->category == e.category; });
        if (it == reps.end())
            reps.push_back(&e);
        else if (e.bbox.area() > (*it)->bbox.area())
            *it = &e;
    }
    std::stable_sort(reps.begin(), reps.end(), [](const LayoutElement* a, const LayoutElement* b) { return a->bbox.area() > b->bbox.area(); });
    for (size_t i = 0; i < reps.size() && i < 3; ++i) {
        const auto& e = *reps[i];
        const double cy = e.bbox.y + e.bbox.h / 2;
        const int area = cy < 1.0 / 3 ? 0 : (cy < 2.0 / 3 ? 1 : 2);
        const auto& opts = templates.component[static_cast<size_t>(e.category.id)][static_cast<size_t>(area)];
        if (opts.empty()) continue;
        out += " " + substitute(pick(opts), "{name}", std::string(e.category.name()));
    }
    return out;
}

std::string apply_prompt_dropout(const std::string& caption, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("dropout probability {} outside [0,1]", p));
    return rng.uniform() < p ? std::string(kDefaultPrompt) : caption;
}

// ---- preprocessing ----

PreprocessResult preprocess_record(const RicoRecord& rec, int e_max) {
    PreprocessResult out;
    const auto shot_size = read_image_size(rec.screenshot);
    const auto wire_size = read_image_size(rec.wireframe);
    const double a1 = static_cast<double>(shot_size[0]) / shot_size[1];
    const double a2 = static_cast<double>(wire_size[0]) / wire_size[1];
    if (std::abs(a1 - a2) > 0.01 * std::max(a1, a2))
        throw Error(ErrorCode::DimensionMismatch, fmt::format("{}: screenshot {}x{} vs wireframe {}x{}", rec.id, shot_size[0],
                                                              shot_size[1], wire_size[0], wire_size[1]));
    if (shot_size[0] > shot_size[1]) {
        out.rejected = "landscape";
        return out;
    }
    const auto parsed = parse_hierarchy(rec, e_max);
    out.skipped_unknown = parsed.skipped_unknown;

    TrainingRecord r;
    r.source_id = rec.id;
    r.image = resize_bilinear(read_image(rec.screenshot), kCanvasWidth, kCanvasHeight);
    r.conditioning = resize_nearest(read_image(rec.wireframe), kCanvasWidth, kCanvasHeight);
    r.layout = parsed.layout;
    r.caption = generate_caption(r.layout, CaptionTemplateSet::standard(), fnv1a(rec.id));
    out.record = std::move(r);
    return out;
}

json DatasetStats::to_json() const {
    json hist = json::object();
    for (int c = 0; c < kNumCategories; ++c) hist[std::string(ComponentCategory(c).name())] = category_histogram[static_cast<size_t>(c)];
    return {{"kept", kept},
            {"rejected", rejected},
            {"rejected_by_reason", rejected_by_reason},
            {"skipped_unknown_labels", skipped_unknown_labels},
            {"total_elements", total_elements},
            {"category_histogram", hist}};
}

DatasetStats build_training_set(const std::vector<RicoRecord>& records, const BuildConfig& cfg) {
    DatasetStats stats;
    fs::create_directories(cfg.out_dir / "images");
    const fs::path manifest_path = cfg.out_dir / "manifest.jsonl";
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest) throw Error(ErrorCode::IOFailure, "cannot write " + manifest_path.string());
    if (records.empty()) spdlog::warn("build_training_set: no input records, writing an empty manifest");

    for (const auto& rec : records) {
        PreprocessResult res;
        try {
            res = preprocess_record(rec, cfg.e_max);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::IOFailure) throw;
            spdlog::warn("rejecting {}: {}", rec.id, e.what());
            ++stats.rejected;
            ++stats.rejected_by_reason[std::string(to_string(e.code()))];
            continue;
        }
        if (!res.record) {
            ++stats.rejected;
            ++stats.rejected_by_reason[res.rejected];
            continue;
        }
        auto& r = *res.record;
        if (cfg.rerender_wireframes) r.conditioning = render_wireframe(r.layout);
        if (cfg.caption_seed != 0) r.caption = generate_caption(r.layout, CaptionTemplateSet::standard(), mix_seed(cfg.caption_seed, fnv1a(rec.id)));

        const std::string image_rel = "images/" + rec.id + ".png";
        const std::string cond_rel = "images/" + rec.id + "_wireframe.png";
        write_png(r.image, cfg.out_dir / image_rel);
        write_png(r.conditioning, cfg.out_dir / cond_rel);
        manifest << json{{"image", image_rel},
                         {"conditioning", cond_rel},
                         {"caption", r.caption},
                         {"source_id", r.source_id},
                         {"layout", layout_to_json(r.layout)}}
                        .dump()
                 << "\n";
        if (!manifest) throw Error(ErrorCode::IOFailure, "write to manifest failed");

        ++stats.kept;
        stats.skipped_unknown_labels += res.skipped_unknown;
        stats.total_elements += static_cast<int>(r.layout.elements.size());
        for (const auto& e : r.layout.elements) ++stats.category_histogram[static_cast<size_t>(e.category.id)];
    }
    manifest.close();
    std::ofstream(cfg.out_dir / "stats.json") << stats.to_json().dump(2) << "\n";
    return stats;
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
    std::ifstream f(manifest);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot open manifest " + manifest.string());
    const fs::path base = manifest.parent_path();
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            ManifestEntry e;
            e.image = base / j.at("image").get<std::string>();
            e.conditioning = base / j.at("conditioning").get<std::string>();
            e.caption = j.at("caption").get<std::string>();
            e.source_id = j.at("source_id").get<std::string>();
            if (j.contains("layout")) e.layout = layout_from_json(j["layout"]);
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::IOFailure, fmt::format("{}:{}: {}", manifest.string(), lineno, ex.what()));
        }
    }
    return out;
}

}  // namespace uidiff
