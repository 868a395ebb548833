#include "uidiff/service/server.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"
#include "uidiff/eval.hpp"
#include "uidiff/hash.hpp"
#include "uidiff/nn/checkpoint.hpp"
#include "uidiff/postprocess.hpp"
#include "uidiff/wireframe.hpp"

namespace uidiff::service {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path resolve_store_root(const fs::path& fallback) {
    if (const char* env = std::getenv("UIDIFF_STORE"); env && *env) return env;
    return fallback;
}

namespace {

/// An error that maps directly onto an HTTP status.
struct HttpError : std::runtime_error {
    HttpError(int status_, std::string code_, const std::string& msg) : std::runtime_error(msg), status(status_), code(std::move(code_)) {}
    int status;
    std::string code;
};

int status_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::NotFound: return 404;
        case ErrorCode::InvalidArgument:
        case ErrorCode::ConditionTooLarge:
        case ErrorCode::InvalidLayout:
        case ErrorCode::InvalidBBox:
        case ErrorCode::TooManyElements:
        case ErrorCode::CanvasMismatch:
        case ErrorCode::EmptyRegion: return 400;
        case ErrorCode::CheckpointMismatch: return 409;
        case ErrorCode::StorageFull: return 507;
        case ErrorCode::BackendUnavailable: return 503;
        default: return 500;
    }
}

json error_body(const std::string& code, const std::string& msg) { return {{"error", code}, {"message", msg}}; }

struct Reply {
    int status = 200;
    json body;
};

std::string artifact_url(const std::string& hash) { return "/api/artifacts/" + hash; }

std::string bytes_of(const std::vector<std::uint8_t>& v) { return std::string(v.begin(), v.end()); }

const char* sniff_content_type(const std::string& b) {
    if (b.size() >= 8 && b.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0) return "image/png";
    if (b.rfind("<!DOCTYPE html>", 0) == 0) return "text/html; charset=utf-8";
    if (b.rfind("<screen", 0) == 0) return "application/xml";
    if (!b.empty() && (b[0] == '{' || b[0] == '[')) return "application/json";
    return "application/octet-stream";
}

template <class T>
T field(const json& body, const char* name, T fallback) {
    if (!body.contains(name) || body[name].is_null()) return fallback;
    try {
        return body[name].get<T>();
    } catch (const json::exception&) {
        throw HttpError(400, "InvalidArgument", fmt::format("field '{}' has the wrong type", name));
    }
}

const json* find_entry(const json& list, const std::string& id) {
    for (const auto& e : list)
        if (e.value("id", "") == id) return &e;
    return nullptr;
}

/// Single-worker bounded job queue.
class JobQueue {
public:
    struct Job {
        std::string id;
        std::string status = "queued";  // queued | running | done | failed
        Reply reply;
    };

    explicit JobQueue(int capacity) : capacity_(capacity), worker_([this] { loop(); }) {}

    ~JobQueue() {
        {
            std::lock_guard lk(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        worker_.join();
    }

    /// nullopt when the queue is full.
    std::optional<std::string> submit(std::function<Reply()> fn) {
        std::lock_guard lk(mu_);
        if (static_cast<int>(pending_.size()) >= capacity_) return std::nullopt;
        const std::string id = fmt::format("j-{}", ++next_id_);
        auto job = std::make_shared<Job>();
        job->id = id;
        jobs_[id] = std::move(job);
        pending_.emplace_back(id, std::move(fn));
        cv_.notify_all();
        return id;
    }

    std::optional<Job> get(const std::string& id) const {
        std::lock_guard lk(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) return std::nullopt;
        return *it->second;
    }

    /// Waits for completion; nullopt on timeout.
    std::optional<Job> wait(const std::string& id, std::chrono::seconds timeout) {
        std::unique_lock lk(mu_);
        auto job = jobs_.at(id);
        if (!cv_.wait_for(lk, timeout, [&] { return job->status == "done" || job->status == "failed"; })) return std::nullopt;
        return *job;
    }

    void drain() {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return pending_.empty() && !busy_; });
    }

private:
    void loop() {
        for (;;) {
            std::pair<std::string, std::function<Reply()>> item;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stopping_ || !pending_.empty(); });
                if (stopping_ && pending_.empty()) return;
                item = std::move(pending_.front());
                pending_.pop_front();
                busy_ = true;
                jobs_[item.first]->status = "running";
            }
            Reply r;
            bool ok = true;
            try {
                r = item.second();
            } catch (const HttpError& e) {
                r = {e.status, error_body(e.code, e.what())};
                ok = false;
            } catch (const Error& e) {
                r = {status_for(e.code()), error_body(std::string(to_string(e.code())), e.what())};
                ok = false;
            } catch (const std::exception& e) {
                r = {500, error_body("Internal", e.what())};
                ok = false;
            }
            {
                std::lock_guard lk(mu_);
                auto& job = *jobs_[item.first];
                job.reply = std::move(r);
                job.status = ok ? "done" : "failed";
                busy_ = false;
            }
            cv_.notify_all();
        }
    }

    int capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::pair<std::string, std::function<Reply()>>> pending_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::uint64_t next_id_ = 0;
    bool busy_ = false;
    bool stopping_ = false;
    std::thread worker_;  // last member: started after the state above exists
};

}  // namespace

struct Service::Impl {
    explicit Impl(ServiceConfig c) : cfg(std::move(c)), store(cfg.store_root, cfg.max_store_bytes), jobs(cfg.queue_capacity) {}

    ServiceConfig cfg;
    Store store;
    httplib::Server http;

    mutable std::shared_mutex model_mu;
    std::shared_ptr<const LayoutDenoiser> layout_model;
    std::string layout_ckpt_id;
    std::shared_ptr<const ui::UiModel> ui_model;

    CompatibilityScorer scorer{std::make_shared<MockBackend>(0)};
    JobQueue jobs;  // last: its worker may touch everything above

    std::pair<std::shared_ptr<const LayoutDenoiser>, std::string> layout() const {
        std::shared_lock lk(model_mu);
        if (!layout_model) throw HttpError(503, "ModelUnavailable", "no layout checkpoint loaded");
        return {layout_model, layout_ckpt_id};
    }
    std::shared_ptr<const ui::UiModel> ui() const {
        std::shared_lock lk(model_mu);
        if (!ui_model) throw HttpError(503, "ModelUnavailable", "no UI checkpoint loaded");
        return ui_model;
    }

    // ---- generation bodies (run on the worker) ----

    struct LayoutArtifacts {
        Layout layout;
        std::string layout_hash, wireframe_hash;
    };

    LayoutArtifacts make_layout(const LayoutDenoiser& model, const ComponentCondition& cond, std::uint64_t seed, int steps) {
        LayoutArtifacts a;
        a.layout = sample_layout(model, cond, seed, {.steps = steps}).layout;
        a.layout_hash = store.put_artifact(layout_to_json(a.layout).dump());
        a.wireframe_hash = store.put_artifact(bytes_of(encode_png(render_wireframe(a.layout))));
        return a;
    }

    Reply generate_layouts(const std::string& pid, const ComponentCondition& cond, const std::string& prompt, std::uint64_t seed, int n, int steps) {
        const auto [model, ckpt] = layout();
        const auto t0 = std::chrono::steady_clock::now();
        json out = json::array();
        std::vector<json> entries;
        std::vector<std::string> hashes;
        for (int i = 0; i < n; ++i) {
            const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
            const LayoutArtifacts a = make_layout(*model, cond, s, steps);
            json e = {{"seed", s},
                      {"steps", steps},
                      {"components", cond.to_json()},
                      {"prompt", prompt},
                      {"checkpoint_id", ckpt},
                      {"layout", layout_to_json(a.layout)},
                      {"layout_hash", a.layout_hash},
                      {"wireframe_hash", a.wireframe_hash},
                      {"layout_url", artifact_url(a.layout_hash)},
                      {"wireframe_url", artifact_url(a.wireframe_hash)},
                      {"recall", component_coverage(cond, a.layout).recall}};
            entries.push_back(std::move(e));
            hashes.push_back(a.layout_hash);
            hashes.push_back(a.wireframe_hash);
        }
        store.update_project(pid, [&](Project& p) {
            for (auto& e : entries) {
                e["id"] = fmt::format("l{}", p.layouts.size() + 1);
                p.layouts.push_back(e);
            }
            p.artifacts.insert(p.artifacts.end(), hashes.begin(), hashes.end());
        });
        for (auto& e : entries) out.push_back(e);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        return {200, {{"project_id", pid}, {"layouts", out}, {"timings_ms", {{"total", ms}}}}};
    }

    Reply generate_uis(const std::string& pid, const json& layout_entry, const std::string& prompt, std::uint64_t seed, int n, int steps) {
        const auto model = ui();
        const auto t0 = std::chrono::steady_clock::now();
        const Layout lay = layout_from_json(layout_entry.at("layout"));
        const ComponentCondition cond = ComponentCondition::from_json(layout_entry.at("components"));
        std::vector<json> entries;
        std::vector<std::string> hashes;
        for (int i = 0; i < n; ++i) {
            const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
            const Image img = ui::generate_ui(*model, prompt, lay, s, steps);
            const std::string h = store.put_artifact(bytes_of(encode_png(img)));
            hashes.push_back(h);
            entries.push_back({{"layout_id", layout_entry.at("id")},
                               {"prompt", prompt},
                               {"seed", s},
                               {"steps", steps},
                               {"checkpoint_id", model->checkpoint_id},
                               {"layout_checkpoint_id", layout_entry.value("checkpoint_id", "")},
                               {"image_hash", h},
                               {"image_url", artifact_url(h)},
                               {"width", img.width()},
                               {"height", img.height()},
                               {"metrics", {{"compatibility", scorer.score(img, prompt)}, {"recall", component_coverage(cond, lay).recall}}}});
        }
        store.update_project(pid, [&](Project& p) {
            for (auto& e : entries) {
                e["id"] = fmt::format("u{}", p.uis.size() + 1);
                p.uis.push_back(e);
            }
            p.artifacts.insert(p.artifacts.end(), hashes.begin(), hashes.end());
        });
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        return {200, {{"project_id", pid}, {"uis", entries}, {"timings_ms", {{"total", ms}}}}};
    }

    Reply replay(const std::string& pid, const std::string& result_id) {
        const Project p = store.get_project(pid);
        if (const json* e = find_entry(p.layouts, result_id)) {
            const auto [model, ckpt] = layout();
            if (ckpt != e->value("checkpoint_id", ""))
                throw HttpError(409, "CheckpointMismatch", "layout was generated with checkpoint " + e->value("checkpoint_id", ""));
            const ComponentCondition cond = ComponentCondition::from_json(e->at("components"));
            const Layout lay = sample_layout(*model, cond, e->at("seed").get<std::uint64_t>(), {.steps = e->at("steps").get<int>()}).layout;
            const std::string h = sha256_hex(layout_to_json(lay).dump());
            const std::string stored = e->at("layout_hash").get<std::string>();
            return {200, {{"result_id", result_id}, {"kind", "layout"}, {"stored_hash", stored}, {"replayed_hash", h}, {"identical", h == stored}}};
        }
        if (const json* e = find_entry(p.uis, result_id)) {
            const auto model = ui();
            if (model->checkpoint_id != e->value("checkpoint_id", ""))
                throw HttpError(409, "CheckpointMismatch", "image was generated with checkpoint " + e->value("checkpoint_id", ""));
            const json* le = find_entry(p.layouts, e->at("layout_id").get<std::string>());
            if (!le) throw HttpError(404, "NotFound", "layout of " + result_id + " no longer exists");
            const Image img = ui::generate_ui(*model, e->at("prompt").get<std::string>(), layout_from_json(le->at("layout")),
                                              e->at("seed").get<std::uint64_t>(), e->at("steps").get<int>());
            const std::string h = sha256_hex(bytes_of(encode_png(img)));
            const std::string stored = e->at("image_hash").get<std::string>();
            return {200, {{"result_id", result_id}, {"kind", "ui"}, {"stored_hash", stored}, {"replayed_hash", h}, {"identical", h == stored}}};
        }
        throw HttpError(404, "NotFound", "no result " + result_id + " in project " + pid);
    }

    Reply run_job(const json& body, std::function<Reply()> fn) {
        const bool async = field<bool>(body, "async", false);
        const auto id = jobs.submit(std::move(fn));
        if (!id) throw HttpError(429, "QueueFull", "generation queue is full");
        if (async) return {202, {{"job_id", *id}, {"status", "queued"}, {"status_url", "/api/jobs/" + *id}}};
        const auto job = jobs.wait(*id, cfg.sync_timeout);
        if (!job) return {202, {{"job_id", *id}, {"status", "running"}, {"status_url", "/api/jobs/" + *id}}};
        return job->reply;
    }

    // ---- synchronous handlers ----

    Reply crops(const std::string& pid, const json& body) {
        const Project p = store.get_project(pid);
        const std::string ui_id = field<std::string>(body, "ui_id", "");
        const json* ue = find_entry(p.uis, ui_id);
        if (!ue) throw HttpError(404, "NotFound", "no UI " + ui_id);
        const json* le = find_entry(p.layouts, ue->at("layout_id").get<std::string>());
        if (!le) throw HttpError(404, "NotFound", "layout of " + ui_id + " no longer exists");
        const auto png = store.get_artifact(ue->at("image_hash").get<std::string>());
        if (!png) throw HttpError(404, "NotFound", "image artifact missing");
        const Image img = decode_png(std::vector<std::uint8_t>(png->begin(), png->end()));
        const auto comps = crop_components(img, layout_from_json(le->at("layout")));
        json items = json::array();
        std::vector<std::string> hashes;
        for (size_t i = 0; i < comps.size(); ++i) {
            const auto& c = comps[i];
            const std::string h = store.put_artifact(bytes_of(encode_png(c.image)));
            hashes.push_back(h);
            items.push_back({{"index", i},
                             {"category", std::string(c.category.name())},
                             {"rect", {c.rect.x0, c.rect.y0, c.rect.width(), c.rect.height()}},
                             {"url", artifact_url(h)},
                             {"fill_color", c.fill_color ? json(to_hex(*c.fill_color)) : json(nullptr)},
                             {"occluded_fraction", c.occluded_fraction},
                             {"fully_occluded", c.fully_occluded}});
        }
        json entry = {{"ui_id", ui_id}, {"crops", items}};
        store.update_project(pid, [&](Project& pr) {
            entry["id"] = fmt::format("c{}", pr.crops.size() + 1);
            pr.crops.push_back(entry);
            pr.artifacts.insert(pr.artifacts.end(), hashes.begin(), hashes.end());
        });
        return {200, entry};
    }

    Reply code(const std::string& pid, const json& body) {
        const Project p = store.get_project(pid);
        const std::string layout_id = field<std::string>(body, "layout_id", "");
        const json* le = find_entry(p.layouts, layout_id);
        if (!le) throw HttpError(404, "NotFound", "no layout " + layout_id);
        std::optional<Image> img;
        const std::string ui_id = field<std::string>(body, "ui_id", "");
        if (!ui_id.empty()) {
            const json* ue = find_entry(p.uis, ui_id);
            if (!ue) throw HttpError(404, "NotFound", "no UI " + ui_id);
            const auto png = store.get_artifact(ue->at("image_hash").get<std::string>());
            if (!png) throw HttpError(404, "NotFound", "image artifact missing");
            img = decode_png(std::vector<std::uint8_t>(png->begin(), png->end()));
        }
        const auto gen = generate_code(layout_from_json(le->at("layout")), img ? &*img : nullptr);
        const std::string xh = store.put_artifact(gen.xml), hh = store.put_artifact(gen.html);
        json entry = {{"layout_id", layout_id},
                      {"ui_id", ui_id.empty() ? json(nullptr) : json(ui_id)},
                      {"xml_url", artifact_url(xh)},
                      {"html_url", artifact_url(hh)},
                      {"xml_hash", xh},
                      {"html_hash", hh}};
        store.update_project(pid, [&](Project& pr) {
            entry["id"] = fmt::format("k{}", pr.code.size() + 1);
            pr.code.push_back(entry);
            pr.artifacts.push_back(xh);
            pr.artifacts.push_back(hh);
        });
        json resp = entry;
        resp["xml"] = gen.xml;
        resp["html"] = gen.html;
        return {200, resp};
    }

    static json categories() {
        const Palette& pal = Palette::standard();
        json cats = json::array();
        for (int i = 0; i < kNumCategories; ++i)
            cats.push_back({{"id", i}, {"name", std::string(ComponentCategory(i).name())}, {"color", to_hex(pal.colors[static_cast<size_t>(i)])}});
        return {{"palette_version", pal.version}, {"background", to_hex(pal.background)}, {"categories", cats}};
    }

    void routes();
};

namespace {

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        json j = json::parse(req.body);
        if (!j.is_object()) throw HttpError(400, "InvalidArgument", "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw HttpError(400, "InvalidArgument", std::string("malformed JSON: ") + e.what());
    }
}

void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    if (r.status != 204) res.set_content(r.body.dump(), "application/json");
}

/// Wraps a handler with the error -> status mapping.
httplib::Server::Handler wrap(std::function<Reply(const httplib::Request&)> fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            send(res, fn(req));
        } catch (const HttpError& e) {
            send(res, {e.status, error_body(e.code, e.what())});
        } catch (const Error& e) {
            send(res, {status_for(e.code()), error_body(std::string(to_string(e.code())), e.what())});
        } catch (const std::exception& e) {
            send(res, {500, error_body("Internal", e.what())});
        }
    };
}

}  // namespace

void Service::Impl::routes() {
    http.Get("/healthz", wrap([this](const httplib::Request&) -> Reply {
        std::shared_lock lk(model_mu);
        return {200, {{"status", "ok"}, {"layout_model", static_cast<bool>(layout_model)}, {"ui_model", static_cast<bool>(ui_model)}}};
    }));

    http.Get("/api/categories", wrap([](const httplib::Request&) -> Reply { return {200, categories()}; }));

    http.Post("/api/projects", wrap([this](const httplib::Request& req) -> Reply {
        const json body = parse_body(req);
        const std::string name = field<std::string>(body, "name", "untitled");
        if (name.empty() || name.size() > 200) throw HttpError(400, "InvalidArgument", "name must be 1..200 characters");
        return {201, store.create_project(name).to_json()};
    }));

    http.Get("/api/projects", wrap([this](const httplib::Request&) -> Reply {
        json list = json::array();
        for (const auto& p : store.list_projects()) list.push_back(p.to_json());
        return {200, {{"projects", list}}};
    }));

    http.Get(R"(/api/projects/([A-Za-z0-9-]+))", wrap([this](const httplib::Request& req) -> Reply {
        return {200, store.get_project(req.matches[1]).to_json()};
    }));

    http.Delete(R"(/api/projects/([A-Za-z0-9-]+))", wrap([this](const httplib::Request& req) -> Reply {
        store.delete_project(req.matches[1]);
        return {204, nullptr};
    }));

    http.Post(R"(/api/projects/([A-Za-z0-9-]+)/layouts)", wrap([this](const httplib::Request& req) -> Reply {
        const std::string pid = req.matches[1];
        const json body = parse_body(req);
        store.get_project(pid);
        ComponentCondition cond;
        try {
            if (body.contains("components") && !body["components"].is_null()) cond = ComponentCondition::from_json(body["components"]);
        } catch (const Error& e) {
            throw HttpError(400, "InvalidComponents", e.what());
        } catch (const json::exception& e) {
            throw HttpError(400, "InvalidComponents", e.what());
        }
        const int n = field<int>(body, "n_layouts", 1);
        if (n < 1 || n > 64) throw HttpError(400, "InvalidArgument", "n_layouts must be in [1, 64]");
        const auto [model, ckpt] = layout();
        if (cond.total() > model->config().tokenizer.e_max)
            throw HttpError(400, "InvalidComponents", fmt::format("{} components exceed the limit of {}", cond.total(), model->config().tokenizer.e_max));
        const int steps = field<int>(body, "steps", std::min(cfg.layout_steps, model->config().schedule.T));
        if (steps < 1 || steps > model->config().schedule.T) throw HttpError(400, "InvalidArgument", "steps out of range");
        const auto seed = field<std::uint64_t>(body, "seed", 0);
        const std::string prompt = field<std::string>(body, "prompt", "");
        return run_job(body, [=, this] { return generate_layouts(pid, cond, prompt, seed, n, steps); });
    }));

    http.Post(R"(/api/projects/([A-Za-z0-9-]+)/uis)", wrap([this](const httplib::Request& req) -> Reply {
        const std::string pid = req.matches[1];
        const json body = parse_body(req);
        const Project p = store.get_project(pid);
        const std::string layout_id = field<std::string>(body, "layout_id", "");
        const json* le = find_entry(p.layouts, layout_id);
        if (!le) throw HttpError(404, "NotFound", "no layout " + layout_id + " in project " + pid);
        ui();
        const int n = field<int>(body, "n_uis", 6);
        if (n < 1 || n > 64) throw HttpError(400, "InvalidArgument", "n_uis must be in [1, 64]");
        const int steps = field<int>(body, "steps", cfg.ui_steps);
        if (steps < 1 || steps > 1000) throw HttpError(400, "InvalidArgument", "steps out of range");
        const auto seed = field<std::uint64_t>(body, "seed", 0);
        std::string prompt = field<std::string>(body, "prompt", "");
        if (prompt.empty()) prompt = kDefaultPrompt;
        const json entry = *le;
        return run_job(body, [=, this] { return generate_uis(pid, entry, prompt, seed, n, steps); });
    }));

    http.Post(R"(/api/projects/([A-Za-z0-9-]+)/replay)", wrap([this](const httplib::Request& req) -> Reply {
        const std::string pid = req.matches[1];
        const json body = parse_body(req);
        const std::string rid = field<std::string>(body, "result_id", "");
        store.get_project(pid);
        return run_job(body, [=, this] { return replay(pid, rid); });
    }));

    http.Post(R"(/api/projects/([A-Za-z0-9-]+)/crops)", wrap([this](const httplib::Request& req) -> Reply {
        return crops(req.matches[1], parse_body(req));
    }));

    http.Post(R"(/api/projects/([A-Za-z0-9-]+)/code)", wrap([this](const httplib::Request& req) -> Reply {
        return code(req.matches[1], parse_body(req));
    }));

    http.Get(R"(/api/jobs/([A-Za-z0-9-]+))", wrap([this](const httplib::Request& req) -> Reply {
        const auto job = jobs.get(req.matches[1]);
        if (!job) throw HttpError(404, "NotFound", "no job " + std::string(req.matches[1]));
        json j = {{"job_id", job->id}, {"status", job->status}};
        if (job->status == "done" || job->status == "failed") {
            j["http_status"] = job->reply.status;
            j["result"] = job->reply.body;
        }
        return {200, j};
    }));

    http.Get(R"(/api/artifacts/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto data = store.get_artifact(req.matches[1]);
        if (!data) {
            send(res, {404, error_body("NotFound", "no artifact " + std::string(req.matches[1]))});
            return;
        }
        res.set_content(*data, sniff_content_type(*data));
    });
}

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {
    if (impl_->cfg.layout_ckpt) {
        std::shared_ptr<const LayoutDenoiser> m = load_layout_model(*impl_->cfg.layout_ckpt);
        const std::string id = nn::Checkpoint::load(*impl_->cfg.layout_ckpt).id();
        set_layout_model(std::move(m), id);
    }
    if (impl_->cfg.ui_ckpt) set_ui_model(ui::UiModel::load(*impl_->cfg.ui_ckpt));
    impl_->routes();
}

Service::~Service() { stop(); }

void Service::set_layout_model(std::shared_ptr<const LayoutDenoiser> model, std::string checkpoint_id) {
    std::unique_lock lk(impl_->model_mu);
    impl_->layout_model = std::move(model);
    impl_->layout_ckpt_id = std::move(checkpoint_id);
}

void Service::set_ui_model(std::shared_ptr<const ui::UiModel> model) {
    std::unique_lock lk(impl_->model_mu);
    impl_->ui_model = std::move(model);
}

int Service::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IOFailure, fmt::format("cannot bind {}:{}", host, port));
    return bound;
}

void Service::run() { impl_->http.listen_after_bind(); }

void Service::stop() {
    if (impl_) impl_->http.stop();
}

void Service::drain() { impl_->jobs.drain(); }

Store& Service::store() { return impl_->store; }

}  // namespace uidiff::service
