#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uidiff/image.hpp"
#include "uidiff/layout.hpp"
#include "uidiff/layout_diffusion.hpp"
#include "uidiff/tokenizer.hpp"

namespace uidiff {

/// Maps images and texts into one embedding space.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> embed_image(const Image& img) const = 0;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
};

/// Seeded deterministic stand-in: hashed bag of words for text, a seeded
/// random projection of a coarse color histogram for images.
class MockBackend : public EmbeddingBackend {
public:
    explicit MockBackend(std::uint64_t seed = 0, int dim = 64);
    std::string name() const override { return "mock"; }
    std::vector<double> embed_image(const Image& img) const override;
    std::vector<double> embed_text(const std::string& text) const override;

private:
    std::uint64_t seed_;
    int dim_;
    std::vector<double> projection_;  // [dim, 64] histogram projection
};

/// Returns the same vectors for every input.
class FixedVectorBackend : public EmbeddingBackend {
public:
    FixedVectorBackend(std::vector<double> image_vec, std::vector<double> text_vec);
    std::string name() const override { return "fixed"; }
    std::vector<double> embed_image(const Image&) const override { return image_; }
    std::vector<double> embed_text(const std::string&) const override { return text_; }

private:
    std::vector<double> image_, text_;
};

/// "mock" is built in; any other name throws BackendUnavailable (no pretrained weights ship).
std::shared_ptr<const EmbeddingBackend> make_backend(const std::string& name, std::uint64_t seed = 0);

/// Zero when either vector has zero norm. Throws ShapeMismatch on length mismatch.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct CompatibilityScorer {
    std::shared_ptr<const EmbeddingBackend> backend;
    double weight = 2.5;
    /// weight * max(cos, 0). Throws BackendUnavailable without a backend.
    double score(const Image& img, const std::string& text) const;
};

struct Coverage {
    double recall = 1.0;  // 1 when nothing was requested
    ComponentCondition missing, extra;
    friend bool operator==(const Coverage&, const Coverage&) = default;
};

/// Multiset recall |requested ∩ produced| / |requested|.
Coverage component_coverage(const ComponentCondition& requested, const Layout& produced);

struct EvalRequest {
    std::string id;
    std::string prompt;
    ComponentCondition components;
};

struct EvalResult {
    std::string id;
    Layout layout;
    std::optional<Image> image;
};

struct EvalRow {
    std::string id;
    std::optional<double> score;  // absent when the result has no image
    Coverage coverage;
    LayoutMetrics metrics;
};

struct Stat {
    int n = 0;
    double mean = 0, variance = 0;  // population variance
    static Stat of(const std::vector<double>& v);
    friend bool operator==(const Stat&, const Stat&) = default;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    Stat score, recall, overlap, alignment, coverage;

    /// Recomputes the aggregates from rows.
    void aggregate();
    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    std::string to_table() const;
};

bool operator==(const LayoutMetrics& a, const LayoutMetrics& b);
bool operator==(const EvalRow& a, const EvalRow& b);
bool operator==(const EvalReport& a, const EvalReport& b);

/// Rows follow the request order. Throws IdMismatch unless both sides carry the same unique ids.
EvalReport evaluate_batch(const std::vector<EvalRequest>& requests, const std::vector<EvalResult>& results, const CompatibilityScorer& scorer);

/// JSONL readers for the CLI: {"id", "prompt", "components"} and {"id", "layout", "image"?}.
/// Image paths resolve against the results file's directory.
std::vector<EvalRequest> read_eval_requests(const std::filesystem::path& path);
std::vector<EvalResult> read_eval_results(const std::filesystem::path& path);

}  // namespace uidiff
