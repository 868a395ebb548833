#include "uidiff/eval.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "uidiff/error.hpp"
#include "uidiff/rng.hpp"
#include "uidiff/ui/text_encoder.hpp"

namespace uidiff {

using nlohmann::json;

MockBackend::MockBackend(std::uint64_t seed, int dim) : seed_(seed), dim_(dim), projection_(static_cast<size_t>(dim) * 64) {
    Rng rng(mix_seed(seed, 0x1ea9e));
    for (auto& v : projection_) v = rng.normal();
}

std::vector<double> MockBackend::embed_text(const std::string& text) const {
    std::vector<double> v(static_cast<size_t>(dim_), 0.0);
    for (const auto& w : ui::WordTokenizer::words(text)) {
        const std::uint64_t h = mix_seed(seed_, fnv1a(w));
        v[h % static_cast<std::uint64_t>(dim_)] += (h >> 63) ? 1.0 : -1.0;
    }
    return v;
}

std::vector<double> MockBackend::embed_image(const Image& img) const {
    std::array<double, 64> hist{};  // 4 levels per channel
    const double n = static_cast<double>(img.width()) * img.height();
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const Rgb p = img.at(x, y);
            hist[static_cast<size_t>((p.r >> 6) * 16 + (p.g >> 6) * 4 + (p.b >> 6))] += 1.0 / n;
        }
    std::vector<double> v(static_cast<size_t>(dim_), 0.0);
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < 64; ++j) v[static_cast<size_t>(i)] += projection_[static_cast<size_t>(i) * 64 + j] * hist[static_cast<size_t>(j)];
    return v;
}

FixedVectorBackend::FixedVectorBackend(std::vector<double> image_vec, std::vector<double> text_vec)
    : image_(std::move(image_vec)), text_(std::move(text_vec)) {}

std::shared_ptr<const EmbeddingBackend> make_backend(const std::string& name, std::uint64_t seed) {
    if (name == "mock") return std::make_shared<MockBackend>(seed);
    throw Error(ErrorCode::BackendUnavailable, "embedding backend '" + name + "' is not available");
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, fmt::format("embedding sizes {} and {}", a.size(), b.size()));
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double CompatibilityScorer::score(const Image& img, const std::string& text) const {
    if (!backend) throw Error(ErrorCode::BackendUnavailable, "no embedding backend loaded");
    return weight * std::max(cosine_similarity(backend->embed_image(img), backend->embed_text(text)), 0.0);
}

Coverage component_coverage(const ComponentCondition& requested, const Layout& produced) {
    const ComponentCondition got = ComponentCondition::of_layout(produced);
    Coverage c;
    int hit = 0;
    for (int k = 0; k < kNumCategories; ++k) {
        const int r = requested.counts[static_cast<size_t>(k)], p = got.counts[static_cast<size_t>(k)];
        hit += std::min(r, p);
        if (r > p) c.missing.add(ComponentCategory(k), r - p);
        if (p > r) c.extra.add(ComponentCategory(k), p - r);
    }
    c.recall = requested.total() == 0 ? 1.0 : static_cast<double>(hit) / requested.total();
    return c;
}

Stat Stat::of(const std::vector<double>& v) {
    Stat s;
    s.n = static_cast<int>(v.size());
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= s.n;
    for (double x : v) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= s.n;
    return s;
}

void EvalReport::aggregate() {
    std::vector<double> sc, rc, ov, al, cv;
    for (const auto& r : rows) {
        if (r.score) sc.push_back(*r.score);
        rc.push_back(r.coverage.recall);
        ov.push_back(r.metrics.overlap);
        al.push_back(r.metrics.alignment);
        cv.push_back(r.metrics.coverage);
    }
    score = Stat::of(sc);
    recall = Stat::of(rc);
    overlap = Stat::of(ov);
    alignment = Stat::of(al);
    coverage = Stat::of(cv);
}

namespace {

json stat_json(const Stat& s) { return {{"n", s.n}, {"mean", s.mean}, {"variance", s.variance}}; }
Stat stat_from(const json& j) { return {j.at("n").get<int>(), j.at("mean").get<double>(), j.at("variance").get<double>()}; }

}  // namespace

json EvalReport::to_json() const {
    json rs = json::array();
    for (const auto& r : rows) {
        json row = {{"id", r.id},
                    {"score", r.score ? json(*r.score) : json(nullptr)},
                    {"recall", r.coverage.recall},
                    {"missing", r.coverage.missing.to_json()},
                    {"extra", r.coverage.extra.to_json()},
                    {"overlap", r.metrics.overlap},
                    {"alignment", r.metrics.alignment},
                    {"coverage", r.metrics.coverage}};
        rs.push_back(std::move(row));
    }
    return {{"rows", rs},
            {"aggregate",
             {{"score", stat_json(score)},
              {"recall", stat_json(recall)},
              {"overlap", stat_json(overlap)},
              {"alignment", stat_json(alignment)},
              {"coverage", stat_json(coverage)}}}};
}

EvalReport EvalReport::from_json(const json& j) {
    EvalReport rep;
    for (const auto& row : j.at("rows")) {
        EvalRow r;
        r.id = row.at("id").get<std::string>();
        if (!row.at("score").is_null()) r.score = row["score"].get<double>();
        r.coverage.recall = row.at("recall").get<double>();
        r.coverage.missing = ComponentCondition::from_json(row.at("missing"));
        r.coverage.extra = ComponentCondition::from_json(row.at("extra"));
        r.metrics.overlap = row.at("overlap").get<double>();
        r.metrics.alignment = row.at("alignment").get<double>();
        r.metrics.coverage = row.at("coverage").get<double>();
        rep.rows.push_back(std::move(r));
    }
    const json& a = j.at("aggregate");
    rep.score = stat_from(a.at("score"));
    rep.recall = stat_from(a.at("recall"));
    rep.overlap = stat_from(a.at("overlap"));
    rep.alignment = stat_from(a.at("alignment"));
    rep.coverage = stat_from(a.at("coverage"));
    return rep;
}

std::string EvalReport::to_table() const {
    std::string out = fmt::format("{:<16} {:>7} {:>7} {:>8} {:>9} {:>8}  {}\n", "id", "score", "recall", "overlap", "alignment", "coverage", "missing");
    for (const auto& r : rows)
        out += fmt::format("{:<16} {:>7} {:>7.3f} {:>8.4f} {:>9.4f} {:>8.4f}  {}\n", r.id, r.score ? fmt::format("{:.3f}", *r.score) : "-",
                           r.coverage.recall, r.metrics.overlap, r.metrics.alignment, r.metrics.coverage, r.coverage.missing.to_string());
    auto line = [](const char* name, const Stat& s) { return fmt::format("{:<10} n={:<5} mean={:.4f} var={:.4f}\n", name, s.n, s.mean, s.variance); };
    out += line("score", score) + line("recall", recall) + line("overlap", overlap) + line("alignment", alignment) + line("coverage", coverage);
    return out;
}

bool operator==(const LayoutMetrics& a, const LayoutMetrics& b) {
    return a.overlap == b.overlap && a.alignment == b.alignment && a.coverage == b.coverage;
}
bool operator==(const EvalRow& a, const EvalRow& b) {
    return a.id == b.id && a.score == b.score && a.coverage == b.coverage && a.metrics == b.metrics;
}
bool operator==(const EvalReport& a, const EvalReport& b) {
    return a.rows == b.rows && a.score == b.score && a.recall == b.recall && a.overlap == b.overlap && a.alignment == b.alignment &&
           a.coverage == b.coverage;
}

EvalReport evaluate_batch(const std::vector<EvalRequest>& requests, const std::vector<EvalResult>& results, const CompatibilityScorer& scorer) {
    std::map<std::string, const EvalResult*> by_id;
    for (const auto& r : results)
        if (!by_id.emplace(r.id, &r).second) throw Error(ErrorCode::IdMismatch, "duplicate result id " + r.id);
    std::set<std::string> seen;
    EvalReport rep;
    for (const auto& q : requests) {
        if (!seen.insert(q.id).second) throw Error(ErrorCode::IdMismatch, "duplicate request id " + q.id);
        auto it = by_id.find(q.id);
        if (it == by_id.end()) throw Error(ErrorCode::IdMismatch, "no result for request " + q.id);
        const EvalResult& res = *it->second;
        EvalRow row;
        row.id = q.id;
        if (res.image) row.score = scorer.score(*res.image, q.prompt);
        row.coverage = component_coverage(q.components, res.layout);
        row.metrics = layout_metrics(res.layout);
        rep.rows.push_back(std::move(row));
    }
    if (seen.size() != by_id.size()) throw Error(ErrorCode::IdMismatch, "results contain ids without a request");
    rep.aggregate();
    return rep;
}

namespace {

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::IOFailure, fmt::format("{}:{}: {}", path.string(), n, e.what()));
        }
    }
    return out;
}

}  // namespace

std::vector<EvalRequest> read_eval_requests(const std::filesystem::path& path) {
    std::vector<EvalRequest> out;
    for (const auto& j : read_jsonl(path)) {
        EvalRequest r;
        r.id = j.at("id").get<std::string>();
        r.prompt = j.value("prompt", std::string());
        if (j.contains("components")) r.components = ComponentCondition::from_json(j["components"]);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<EvalResult> read_eval_results(const std::filesystem::path& path) {
    std::vector<EvalResult> out;
    for (const auto& j : read_jsonl(path)) {
        EvalResult r;
        r.id = j.at("id").get<std::string>();
        r.layout = layout_from_json(j.at("layout"));
        if (j.contains("image") && j["image"].is_string()) r.image = read_image(path.parent_path() / j["image"].get<std::string>());
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace uidiff
